//! Triangulation of truncated domains.
//!
//! [`triangulate`] builds a constrained Delaunay mesh refined to a minimum angle and a
//! maximum edge length, then cuts it open along slit edges so that the P1 space can jump
//! across them. Marked edges (Dirichlet, slit, Σ, interface) survive uniform refinement
//! and extraction of submeshes.

mod cdt;
mod sizing;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{pslg_contains, EdgeMarker, Point2, TruncatedDomain};
use cdt::Cdt;
pub use sizing::{SizeZone, SizingField, ZoneShape};

/// Marked mesh edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshEdge {
    pub a: u32,
    pub b: u32,
    pub marker: EdgeMarker,
}

/// Conforming triangle mesh with boundary and facet markers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point2>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[u32; 3]>,
    pub dirichlet: Vec<bool>,
    /// Every mesh edge lying on a marked PSLG edge. Slit edges appear once per side.
    pub edges: Vec<MeshEdge>,
    /// Maximum edge length requested.
    pub h_target: f64,
}

/// Meshing parameters beyond the global edge length.
#[derive(Clone, Debug)]
pub struct MeshOptions {
    pub h: f64,
    /// Minimum angle in degrees.
    pub min_angle: f64,
    pub zones: Vec<SizeZone>,
    /// Add a zone of edge length width/6 over every tube narrower than 3h.
    pub thin_tube_zones: bool,
    /// Edge length at crack tips as a fraction of h, graded at 0.25; 1 disables the zones.
    pub crack_tip_ratio: f64,
    pub max_vertices: usize,
}

impl MeshOptions {
    pub fn new(h: f64) -> Self {
        MeshOptions { h, min_angle: 25.0, zones: vec![], thin_tube_zones: true, crack_tip_ratio: 0.04, max_vertices: 4_000_000 }
    }

    pub fn with_zone(mut self, z: SizeZone) -> Self {
        self.zones.push(z);
        self
    }
}

/// Quality summary of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    /// Smallest interior angle, degrees.
    pub min_angle: f64,
    /// Largest ratio circumradius / (2 inradius); 1 for equilateral triangles.
    pub max_aspect: f64,
    pub vertices: usize,
    pub triangles: usize,
    pub dirichlet_vertices: usize,
    pub max_edge: f64,
    pub min_edge: f64,
    /// Centroid and smallest angle of every triangle below 20 degrees.
    pub low_angle: Vec<([f64; 2], f64)>,
}

/// Vertices with exactly one incident boundary edge: ends of slits inside the region, where
/// eigenfunctions behave like r^{1/2}.
pub fn crack_tips(pslg: &crate::geometry::Pslg) -> Vec<Point2> {
    let mut count = vec![0usize; pslg.vertices.len()];
    for e in pslg.edges.iter().filter(|e| e.2.is_dirichlet()) {
        count[e.0] += 1;
        count[e.1] += 1;
    }
    (0..count.len()).filter(|&v| count[v] == 1).map(|v| pslg.vertices[v]).collect()
}

/// Mesh of `domain` with maximum edge length `h` and the default options.
pub fn triangulate(domain: &TruncatedDomain, h: f64) -> Result<Mesh> {
    triangulate_with(domain, &MeshOptions::new(h))
}

/// Mesh of `domain` with explicit options.
pub fn triangulate_with(domain: &TruncatedDomain, opts: &MeshOptions) -> Result<Mesh> {
    let h = opts.h;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("h = {h} must be positive")));
    }
    if !(opts.min_angle > 0.0 && opts.min_angle <= 33.0) {
        return Err(Error::Parameter(format!("min_angle = {} must lie in (0, 33]", opts.min_angle)));
    }
    for t in domain.tubes.iter().filter(|t| t.is_infinite()) {
        if h > t.width / 3.0 {
            return Err(Error::Parameter(format!("h = {h} exceeds tube width / 3 = {}", t.width / 3.0)));
        }
    }
    let pslg = &domain.pslg;
    pslg.validate()?;
    if pslg.vertices.is_empty() {
        return Err(Error::Geometry("empty domain".into()));
    }

    let mut zones = opts.zones.clone();
    if opts.thin_tube_zones {
        for (t, &len) in domain.tubes.iter().zip(&domain.tube_lengths) {
            if t.width < 3.0 * h {
                let [a, b] = t.mouth;
                let mut poly = vec![a, b, b + t.dir * len, a + t.dir * len];
                if crate::geometry::orient(poly[0], poly[1], poly[2]) < 0.0 {
                    poly.reverse();
                }
                zones.push(SizeZone { shape: ZoneShape::Polygon(poly), h: t.width / 6.0, grade: 0.3 });
            }
        }
    }
    if opts.crack_tip_ratio < 1.0 {
        for p in crack_tips(pslg) {
            zones.push(SizeZone::point(p, opts.crack_tip_ratio * h, 0.25));
        }
    }
    let size = SizingField { h_max: h, zones };

    let markers: Vec<EdgeMarker> = {
        let mut m: Vec<EdgeMarker> = pslg.edges.iter().map(|e| e.2).collect();
        m.sort();
        m.dedup();
        m
    };
    let id_of = |m: EdgeMarker| (markers.binary_search(&m).unwrap() + 1) as u16;

    let (lo, hi) = pslg.bounding_box();
    let mut cdt = Cdt::new(lo, hi);
    let vid: Vec<u32> = pslg
        .vertices
        .iter()
        .map(|&p| cdt.insert(p, true))
        .collect::<Result<_>>()?;
    for e in &pslg.edges {
        cdt.insert_segment(vid[e.0], vid[e.1], id_of(e.2))?;
    }
    cdt.classify(|p| pslg_contains(pslg, p));
    cdt.refine(opts.min_angle, &size, opts.max_vertices)?;

    let mut mesh = extract(&cdt, &markers);
    mesh.h_target = h;
    mesh.split_slits();
    mesh.mark_dirichlet();
    Ok(mesh)
}

fn extract(cdt: &Cdt, markers: &[EdgeMarker]) -> Mesh {
    let mut new_id = vec![u32::MAX; cdt.pts.len()];
    let mut used: Vec<u32> = cdt
        .tris
        .iter()
        .filter(|t| t.alive && t.inside)
        .flat_map(|t| t.v)
        .collect();
    used.sort_unstable();
    used.dedup();
    let vertices = used
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            new_id[v as usize] = k as u32;
            cdt.pts[v as usize]
        })
        .collect::<Vec<_>>();
    let mut triangles = Vec::new();
    let mut edges = Vec::new();
    let mut seen = BTreeMap::new();
    for t in cdt.tris.iter().filter(|t| t.alive && t.inside) {
        let v = t.v.map(|x| new_id[x as usize]);
        triangles.push(v);
        for i in 0..3 {
            if t.c[i] != 0 {
                let (a, b) = (v[(i + 1) % 3], v[(i + 2) % 3]);
                let marker = markers[t.c[i] as usize - 1];
                if seen.insert((a.min(b), a.max(b)), ()).is_none() {
                    edges.push(MeshEdge { a, b, marker });
                }
            }
        }
    }
    let n = vertices.len();
    Mesh { vertices, triangles, dirichlet: vec![false; n], edges, h_target: 0.0 }
}

fn key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_free(&self) -> usize {
        self.dirichlet.iter().filter(|d| !**d).count()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let [a, b, c] = t.map(|v| self.vertices[v as usize]);
        0.5 * (b - a).cross(c - a)
    }

    pub fn centroid(&self, t: &[u32; 3]) -> Point2 {
        let [a, b, c] = t.map(|v| self.vertices[v as usize]);
        (a + b + c) * (1.0 / 3.0)
    }

    /// Σ facets as (a, b, id).
    pub fn sigma_facets(&self) -> impl Iterator<Item = (u32, u32, usize)> + '_ {
        self.edges.iter().filter_map(|e| match e.marker {
            EdgeMarker::Sigma(i) => Some((e.a, e.b, i)),
            _ => None,
        })
    }

    /// Total length of edges carrying `marker`.
    pub fn marked_length(&self, marker: EdgeMarker) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.marker == marker)
            .map(|e| self.vertices[e.a as usize].dist(self.vertices[e.b as usize]))
            .sum()
    }

    fn edge_markers(&self) -> HashMap<(u32, u32), EdgeMarker> {
        self.edges.iter().map(|e| (key(e.a, e.b), e.marker)).collect()
    }

    /// Number of triangles on each edge.
    fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut m = HashMap::with_capacity(3 * self.triangles.len() / 2);
        for t in &self.triangles {
            for i in 0..3 {
                *m.entry(key(t[i], t[(i + 1) % 3])).or_insert(0) += 1;
            }
        }
        m
    }

    /// Duplicates every slit vertex once per group of its triangles connected across
    /// non-slit edges. A dangling slit tip has a single group and stays shared.
    fn split_slits(&mut self) {
        let slit: std::collections::HashSet<(u32, u32)> = self
            .edges
            .iter()
            .filter(|e| e.marker == EdgeMarker::Slit)
            .map(|e| key(e.a, e.b))
            .collect();
        if slit.is_empty() {
            return;
        }
        let mut slit_vertices: Vec<u32> = slit.iter().flat_map(|&(a, b)| [a, b]).collect();
        slit_vertices.sort_unstable();
        slit_vertices.dedup();
        let mut incident: HashMap<u32, Vec<usize>> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            for &v in t {
                if slit_vertices.binary_search(&v).is_ok() {
                    incident.entry(v).or_default().push(k);
                }
            }
        }
        // original id of every vertex, so slit edges stay recognizable after copies are made
        let mut origin: Vec<u32> = (0..self.vertices.len() as u32).collect();
        for &v in &slit_vertices {
            let tris = &incident[&v];
            let mut group: Vec<usize> = (0..tris.len()).collect();
            fn find(g: &mut [usize], i: usize) -> usize {
                let mut r = i;
                while g[r] != r {
                    r = g[r];
                }
                g[i] = r;
                r
            }
            for x in 0..tris.len() {
                for y in x + 1..tris.len() {
                    let (tx, ty) = (self.triangles[tris[x]], self.triangles[tris[y]]);
                    let shared = tx.iter().find(|&&w| w != v && ty.contains(&w));
                    if let Some(&w) = shared {
                        if !slit.contains(&key(origin[v as usize], origin[w as usize])) {
                            let (rx, ry) = (find(&mut group, x), find(&mut group, y));
                            group[rx.max(ry)] = rx.min(ry);
                        }
                    }
                }
            }
            let mut copy_of_root: BTreeMap<usize, u32> = BTreeMap::new();
            let first_root = find(&mut group, 0);
            for x in 0..tris.len() {
                let r = find(&mut group, x);
                if r == first_root {
                    continue;
                }
                let nv = *copy_of_root.entry(r).or_insert_with(|| {
                    self.vertices.push(self.vertices[v as usize]);
                    origin.push(v);
                    (self.vertices.len() - 1) as u32
                });
                for w in self.triangles[tris[x]].iter_mut() {
                    if *w == v {
                        *w = nv;
                    }
                }
            }
        }
        self.dirichlet.resize(self.vertices.len(), false);
        // rebuild marked edges from the triangles so that each side refers to its own copies
        let markers = self.edge_markers();
        let mut edges = Vec::with_capacity(self.edges.len() + slit.len());
        let mut seen = std::collections::HashSet::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                if let Some(&marker) = markers.get(&key(origin[a as usize], origin[b as usize])) {
                    if seen.insert(key(a, b)) {
                        edges.push(MeshEdge { a, b, marker });
                    }
                }
            }
        }
        self.edges = edges;
    }

    /// Marks every vertex on a Dirichlet edge or on an edge with a single triangle.
    fn mark_dirichlet(&mut self) {
        self.dirichlet = vec![false; self.vertices.len()];
        for e in self.edges.iter().filter(|e| e.marker.is_dirichlet()) {
            self.dirichlet[e.a as usize] = true;
            self.dirichlet[e.b as usize] = true;
        }
        for ((a, b), n) in self.edge_counts() {
            if n == 1 {
                self.dirichlet[a as usize] = true;
                self.dirichlet[b as usize] = true;
            }
        }
    }

    /// Red refinement: every triangle into four, markers carried to the halves.
    pub fn refine_uniform(&self) -> Mesh {
        let markers = self.edge_markers();
        let mut vertices = self.vertices.clone();
        let mut dirichlet = self.dirichlet.clone();
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut edges = Vec::with_capacity(2 * self.edges.len());
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Point2>, dirichlet: &mut Vec<bool>| {
            *mid.entry(key(a, b)).or_insert_with(|| {
                vertices.push(vertices[a as usize].lerp(vertices[b as usize], 0.5));
                let on_dirichlet = markers.get(&key(a, b)).is_some_and(|m| m.is_dirichlet());
                dirichlet.push(on_dirichlet);
                (vertices.len() - 1) as u32
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for t in &self.triangles {
            let [a, b, c] = *t;
            let ab = midpoint(a, b, &mut vertices, &mut dirichlet);
            let bc = midpoint(b, c, &mut vertices, &mut dirichlet);
            let ca = midpoint(c, a, &mut vertices, &mut dirichlet);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        for e in &self.edges {
            let m = midpoint(e.a, e.b, &mut vertices, &mut dirichlet);
            edges.push(MeshEdge { a: e.a, b: m, marker: e.marker });
            edges.push(MeshEdge { a: m, b: e.b, marker: e.marker });
        }
        let mut out = Mesh { vertices, triangles, dirichlet, edges, h_target: 0.5 * self.h_target };
        // midpoints of unmarked boundary edges (submesh cuts are marked, so this is a safeguard)
        let counts = out.edge_counts();
        for ((a, b), n) in counts {
            if n == 1 {
                out.dirichlet[a as usize] = true;
                out.dirichlet[b as usize] = true;
            }
        }
        out
    }

    /// Mesh made of the triangles whose centroid satisfies `keep`. Edges exposed by the cut
    /// become Dirichlet boundary, whatever their previous marker.
    pub fn submesh(&self, keep: impl Fn(Point2) -> bool) -> Result<Mesh> {
        self.submesh_with_map(keep).map(|(m, _)| m)
    }

    /// [`Mesh::submesh`] together with the parent index of every submesh vertex.
    pub fn submesh_with_map(&self, keep: impl Fn(Point2) -> bool) -> Result<(Mesh, Vec<u32>)> {
        let kept: Vec<[u32; 3]> = self.triangles.iter().copied().filter(|t| keep(self.centroid(t))).collect();
        if kept.is_empty() {
            return Err(Error::Geometry("submesh is empty".into()));
        }
        let counts = self.edge_counts();
        let mut kept_counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &kept {
            for i in 0..3 {
                *kept_counts.entry(key(t[i], t[(i + 1) % 3])).or_insert(0) += 1;
            }
        }
        let markers = self.edge_markers();
        let mut new_id = vec![u32::MAX; self.vertices.len()];
        let mut used: Vec<u32> = kept.iter().flatten().copied().collect();
        used.sort_unstable();
        used.dedup();
        let vertices: Vec<Point2> = used
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                new_id[v as usize] = k as u32;
                self.vertices[v as usize]
            })
            .collect();
        let mut dirichlet: Vec<bool> = used.iter().map(|&v| self.dirichlet[v as usize]).collect();
        let mut edges = Vec::new();
        let mut keys: Vec<(u32, u32)> = kept_counts.keys().copied().collect();
        keys.sort_unstable();
        for k in keys {
            let exposed = counts[&k] == 2 && kept_counts[&k] == 1;
            let marker = if exposed { Some(EdgeMarker::OuterDirichlet) } else { markers.get(&k).copied() };
            if let Some(marker) = marker {
                let (a, b) = (new_id[k.0 as usize], new_id[k.1 as usize]);
                if marker.is_dirichlet() {
                    dirichlet[a as usize] = true;
                    dirichlet[b as usize] = true;
                }
                edges.push(MeshEdge { a, b, marker });
            }
        }
        let triangles = kept.iter().map(|t| t.map(|v| new_id[v as usize])).collect();
        Ok((Mesh { vertices, triangles, dirichlet, edges, h_target: self.h_target }, used))
    }

    /// Checks orientation, marker consistency and Dirichlet marking of boundary vertices.
    pub fn validate(&self) -> Result<()> {
        for t in &self.triangles {
            if !(self.triangle_area(t) > 0.0) {
                return Err(Error::Geometry(format!("triangle {t:?} is not positively oriented")));
            }
        }
        for ((a, b), n) in self.edge_counts() {
            if n > 2 {
                return Err(Error::Geometry(format!("edge ({a},{b}) has {n} triangles")));
            }
            if n == 1 && !(self.dirichlet[a as usize] && self.dirichlet[b as usize]) {
                return Err(Error::Geometry(format!("boundary edge ({a},{b}) not Dirichlet")));
            }
        }
        Ok(())
    }

    /// JSON dump: vertices, triangles, Dirichlet flags and Σ facets.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            vertices: &'a [Point2],
            triangles: &'a [[u32; 3]],
            dirichlet: &'a [bool],
            sigma_facets: Vec<(u32, u32, usize)>,
        }
        serde_json::to_string(&Dump {
            vertices: &self.vertices,
            triangles: &self.triangles,
            dirichlet: &self.dirichlet,
            sigma_facets: self.sigma_facets().collect(),
        })
        .expect("mesh serializes")
    }
}

/// Per-triangle angle and shape statistics.
pub fn mesh_quality(mesh: &Mesh) -> QualityReport {
    let mut r = QualityReport {
        min_angle: 180.0,
        max_aspect: 0.0,
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        dirichlet_vertices: mesh.dirichlet.iter().filter(|d| **d).count(),
        max_edge: 0.0,
        min_edge: f64::INFINITY,
        low_angle: vec![],
    };
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|v| mesh.vertices[v as usize]);
        let l = [b.dist(c), c.dist(a), a.dist(b)];
        let area = mesh.triangle_area(t);
        let mut angle = 180.0f64;
        for i in 0..3 {
            let (x, y, z) = (l[i], l[(i + 1) % 3], l[(i + 2) % 3]);
            let cos = ((y * y + z * z - x * x) / (2.0 * y * z)).clamp(-1.0, 1.0);
            angle = angle.min(cos.acos().to_degrees());
            r.max_edge = r.max_edge.max(x);
            r.min_edge = r.min_edge.min(x);
        }
        let s = 0.5 * (l[0] + l[1] + l[2]);
        let inradius = area / s;
        let circumradius = l[0] * l[1] * l[2] / (4.0 * area);
        r.max_aspect = r.max_aspect.max(circumradius / (2.0 * inradius));
        r.min_angle = r.min_angle.min(angle);
        if angle < 20.0 {
            let g = mesh.centroid(t);
            r.low_angle.push(([g.x, g.y], angle));
        }
    }
    r
}

#[cfg(test)]
mod tests;
