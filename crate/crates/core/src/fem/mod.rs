//! P1 finite elements: assembly, nodal functions and discrete norms.

mod locate;
mod tail;

use crate::error::{Error, Result};
use crate::geometry::{EdgeMarker, Point2};
use crate::linalg::SparseSym;
use crate::mesh::Mesh;

pub use locate::Locator;
pub use tail::{sup_norm_tail, tail_mass, tail_norm};

const DIRICHLET: u32 = u32::MAX;

/// Numbering of the free (non-Dirichlet) vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    /// Free index of each vertex, `u32::MAX` for Dirichlet vertices.
    pub free_of: Vec<u32>,
    /// Vertex of each free index.
    pub vertex_of: Vec<u32>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut free_of = vec![DIRICHLET; mesh.vertices.len()];
        let mut vertex_of = Vec::new();
        for (v, &d) in mesh.dirichlet.iter().enumerate() {
            if !d {
                free_of[v] = vertex_of.len() as u32;
                vertex_of.push(v as u32);
            }
        }
        DofMap { free_of, vertex_of }
    }

    pub fn len(&self) -> usize {
        self.vertex_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_of.is_empty()
    }

    pub fn free(&self, v: u32) -> Option<usize> {
        let f = self.free_of[v as usize];
        (f != DIRICHLET).then_some(f as usize)
    }

    /// Nodal vector with zeros at Dirichlet vertices.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.free_of.len()];
        for (k, &v) in self.vertex_of.iter().enumerate() {
            out[v as usize] = x[k];
        }
        out
    }

    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.vertex_of.iter().map(|&v| values[v as usize]).collect()
    }
}

/// Stiffness and mass on the free vertices.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub k: SparseSym,
    pub m: SparseSym,
    pub dofs: DofMap,
}

impl AssembledSystem {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let dofs = DofMap::new(mesh);
        if dofs.is_empty() {
            return Err(Error::Assembly("mesh has no free vertices".into()));
        }
        Ok(AssembledSystem { k: assemble_stiffness(mesh)?, m: assemble_mass(mesh)?, dofs })
    }
}

fn element(mesh: &Mesh, t: &[u32; 3]) -> Result<([f64; 3], [f64; 3], f64)> {
    let [a, b, c] = t.map(|v| mesh.vertices[v as usize]);
    let area = 0.5 * (b - a).cross(c - a);
    if !(area > 0.0) {
        return Err(Error::Assembly(format!("degenerate triangle {t:?} with area {area:e}")));
    }
    // gradient of the hat function at vertex i is (by[i], bx[i]) / (2 area)
    let by = [b.y - c.y, c.y - a.y, a.y - b.y];
    let bx = [c.x - b.x, a.x - c.x, b.x - a.x];
    Ok((by, bx, area))
}

/// Element stiffness matrix of a triangle.
pub fn element_stiffness(p: [Point2; 3]) -> [[f64; 3]; 3] {
    let [a, b, c] = p;
    let area = 0.5 * (b - a).cross(c - a);
    let by = [b.y - c.y, c.y - a.y, a.y - b.y];
    let bx = [c.x - b.x, a.x - c.x, b.x - a.x];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (by[i] * by[j] + bx[i] * bx[j]) / (4.0 * area);
        }
    }
    k
}

/// Element mass matrix of a triangle.
pub fn element_mass(p: [Point2; 3]) -> [[f64; 3]; 3] {
    let [a, b, c] = p;
    let area = 0.5 * (b - a).cross(c - a);
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

fn assemble(mesh: &Mesh, free_only: bool, stiffness: bool) -> Result<SparseSym> {
    let dofs = DofMap::new(mesh);
    let index = |v: u32| if free_only { dofs.free(v) } else { Some(v as usize) };
    let n = if free_only { dofs.len() } else { mesh.vertices.len() };
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for t in &mesh.triangles {
        let (by, bx, area) = element(mesh, t)?;
        for i in 0..3 {
            let Some(gi) = index(t[i]) else { continue };
            for j in 0..3 {
                let Some(gj) = index(t[j]) else { continue };
                let v = if stiffness {
                    (by[i] * by[j] + bx[i] * bx[j]) / (4.0 * area)
                } else if i == j {
                    area / 6.0
                } else {
                    area / 12.0
                };
                trip.push((gi as u32, gj as u32, v));
            }
        }
    }
    Ok(SparseSym::from_triplets(n, trip))
}

/// Stiffness matrix on the free vertices.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseSym> {
    assemble(mesh, true, true)
}

/// Consistent mass matrix on the free vertices.
pub fn assemble_mass(mesh: &Mesh) -> Result<SparseSym> {
    assemble(mesh, true, false)
}

/// Stiffness matrix on all vertices (no Dirichlet elimination).
pub fn assemble_stiffness_full(mesh: &Mesh) -> Result<SparseSym> {
    assemble(mesh, false, true)
}

/// Mass matrix on all vertices.
pub fn assemble_mass_full(mesh: &Mesh) -> Result<SparseSym> {
    assemble(mesh, false, false)
}

/// Trapezoid-rule load ∫_Σ φ_v f over the facets marked SIGMA(`sigma_id`), on all vertices.
pub fn line_load_full(mesh: &Mesh, sigma_id: usize, f: impl Fn(Point2) -> f64) -> Result<Vec<f64>> {
    let mut b = vec![0.0; mesh.vertices.len()];
    let mut found = false;
    for e in mesh.edges.iter().filter(|e| e.marker == EdgeMarker::Sigma(sigma_id)) {
        found = true;
        let (pa, pb) = (mesh.vertices[e.a as usize], mesh.vertices[e.b as usize]);
        let half = 0.5 * pa.dist(pb);
        b[e.a as usize] += half * f(pa);
        b[e.b as usize] += half * f(pb);
    }
    if !found {
        return Err(Error::Parameter(format!("mesh has no SIGMA({sigma_id}) facets")));
    }
    Ok(b)
}

/// [`line_load_full`] restricted to the free vertices.
pub fn assemble_line_load(mesh: &Mesh, dofs: &DofMap, sigma_id: usize, f: impl Fn(Point2) -> f64) -> Result<Vec<f64>> {
    Ok(dofs.restrict(&line_load_full(mesh, sigma_id, f)?))
}

/// Nodal P1 function on a mesh.
#[derive(Clone, Debug)]
pub struct FeFunction<'a> {
    pub mesh: &'a Mesh,
    pub values: Vec<f64>,
}

impl<'a> FeFunction<'a> {
    pub fn zero(mesh: &'a Mesh) -> Self {
        FeFunction { mesh, values: vec![0.0; mesh.vertices.len()] }
    }

    pub fn from_free(mesh: &'a Mesh, dofs: &DofMap, x: &[f64]) -> Self {
        FeFunction { mesh, values: dofs.expand(x) }
    }

    /// Nodal interpolant of `f`, set to zero at Dirichlet vertices.
    pub fn interpolate(mesh: &'a Mesh, f: impl Fn(Point2) -> f64) -> Self {
        let values = mesh
            .vertices
            .iter()
            .zip(&mesh.dirichlet)
            .map(|(&p, &d)| if d { 0.0 } else { f(p) })
            .collect();
        FeFunction { mesh, values }
    }

    /// Nodal interpolant of `f` at every vertex, boundary included.
    pub fn interpolate_all(mesh: &'a Mesh, f: impl Fn(Point2) -> f64) -> Self {
        FeFunction { mesh, values: mesh.vertices.iter().map(|&p| f(p)).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        FeFunction { mesh: self.mesh, values: self.values.iter().map(|v| v * s).collect() }
    }

    /// Constant gradient on triangle `t`.
    pub fn gradient(&self, t: usize) -> Point2 {
        let tri = self.mesh.triangles[t];
        let [a, b, c] = tri.map(|v| self.mesh.vertices[v as usize]);
        let u = tri.map(|v| self.values[v as usize]);
        let area2 = (b - a).cross(c - a);
        let by = [b.y - c.y, c.y - a.y, a.y - b.y];
        let bx = [c.x - b.x, a.x - c.x, b.x - a.x];
        let gx = (0..3).map(|i| u[i] * by[i]).sum::<f64>() / area2;
        let gy = (0..3).map(|i| u[i] * bx[i]).sum::<f64>() / area2;
        Point2::new(gx, gy)
    }
}

/// √(∫ u²), exact for P1.
pub fn l2_norm(u: &FeFunction) -> f64 {
    u.mesh
        .triangles
        .iter()
        .map(|t| {
            let area = u.mesh.triangle_area(t);
            let v = t.map(|i| u.values[i as usize]);
            tail::p1_square_integral(area, v)
        })
        .sum::<f64>()
        .sqrt()
}

/// √(∫ |∇u|²).
pub fn h1_seminorm(u: &FeFunction) -> f64 {
    (0..u.mesh.triangles.len())
        .map(|t| {
            let g = u.gradient(t);
            g.dot(g) * u.mesh.triangle_area(&u.mesh.triangles[t])
        })
        .sum::<f64>()
        .sqrt()
}

/// Outward normal derivative of `u` at sample points of the boundary segment ab, from the
/// constant gradient of the adjacent triangle; averaged over both neighbors at mesh vertices.
pub fn normal_derivative_trace(u: &FeFunction, a: Point2, b: Point2, samples: &[Point2]) -> Result<Vec<f64>> {
    let mesh = u.mesh;
    let dir = b - a;
    let len = dir.norm();
    if !(len > 0.0) {
        return Err(Error::Parameter("degenerate segment".into()));
    }
    let tol = 1e-9 * len.max(1.0);
    let on_line = |p: Point2| (p - a).cross(dir).abs() / len <= tol;
    // boundary triangle edges lying on the segment: (s0, s1, triangle, outward normal)
    let mut pieces: Vec<(f64, f64, usize, Point2)> = Vec::new();
    let mut counts = std::collections::HashMap::new();
    for t in &mesh.triangles {
        for i in 0..3 {
            let (x, y) = (t[i], t[(i + 1) % 3]);
            *counts.entry((x.min(y), x.max(y))).or_insert(0u32) += 1;
        }
    }
    for (k, t) in mesh.triangles.iter().enumerate() {
        for i in 0..3 {
            let (x, y) = (t[i], t[(i + 1) % 3]);
            if counts[&(x.min(y), x.max(y))] != 1 {
                continue;
            }
            let (px, py) = (mesh.vertices[x as usize], mesh.vertices[y as usize]);
            if on_line(px) && on_line(py) {
                let s0 = (px - a).dot(dir) / (len * len);
                let s1 = (py - a).dot(dir) / (len * len);
                // ccw triangle: the outward normal of edge x→y is its clockwise rotation
                let e = py - px;
                let n = Point2::new(e.y, -e.x).normalized();
                pieces.push((s0.min(s1), s0.max(s1), k, n));
            }
        }
    }
    samples
        .iter()
        .map(|&p| {
            if !on_line(p) {
                return Err(Error::Parameter(format!("sample {p:?} is off the segment")));
            }
            let s = (p - a).dot(dir) / (len * len);
            let stol = tol / len;
            let hits: Vec<f64> = pieces
                .iter()
                .filter(|(s0, s1, _, _)| s >= s0 - stol && s <= s1 + stol)
                .map(|&(_, _, t, n)| u.gradient(t).dot(n))
                .collect();
            if hits.is_empty() {
                return Err(Error::Parameter(format!("sample {p:?} is not on a boundary edge")));
            }
            Ok(hits.iter().sum::<f64>() / hits.len() as f64)
        })
        .collect()
}

/// Richardson combination 2 f_fine − f_coarse for an O(h) quantity.
pub fn richardson_first_order(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(c, f)| 2.0 * f - c).collect()
}
