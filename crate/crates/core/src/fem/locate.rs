use super::FeFunction;
use crate::geometry::Point2;
use crate::mesh::Mesh;

/// Bucket grid over triangle bounding boxes for point location.
pub struct Locator<'a> {
    mesh: &'a Mesh,
    lo: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in &mesh.vertices {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let area = ((hi.x - lo.x) * (hi.y - lo.y)).max(1e-300);
        let cell = (area / mesh.triangles.len().max(1) as f64).sqrt() * 2.0;
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, t) in mesh.triangles.iter().enumerate() {
            let pts = t.map(|v| mesh.vertices[v as usize]);
            let (x0, x1) = (pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min), pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min), pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max));
            let ix = |x: f64| (((x - lo.x) / cell) as usize).min(nx - 1);
            let iy = |y: f64| (((y - lo.y) / cell) as usize).min(ny - 1);
            for i in ix(x0)..=ix(x1) {
                for j in iy(y0)..=iy(y1) {
                    buckets[j * nx + i].push(k as u32);
                }
            }
        }
        Locator { mesh, lo, cell, nx, ny, buckets }
    }

    /// Triangle containing `p` (closed), with its barycentric coordinates.
    pub fn find(&self, p: Point2) -> Option<(usize, [f64; 3])> {
        let fx = (p.x - self.lo.x) / self.cell;
        let fy = (p.y - self.lo.y) / self.cell;
        if fx < -1e-9 || fy < -1e-9 {
            return None;
        }
        let (i, j) = ((fx as usize).min(self.nx - 1), (fy as usize).min(self.ny - 1));
        let tol = -1e-12;
        for &k in &self.buckets[j * self.nx + i] {
            let t = self.mesh.triangles[k as usize];
            let [a, b, c] = t.map(|v| self.mesh.vertices[v as usize]);
            let area2 = (b - a).cross(c - a);
            let l1 = (p - a).cross(c - a) / area2;
            let l2 = (b - a).cross(p - a) / area2;
            let l0 = 1.0 - l1 - l2;
            if l0 >= tol && l1 >= tol && l2 >= tol {
                return Some((k as usize, [l0, l1, l2]));
            }
        }
        None
    }

    /// Value of `u` at `p`, or `None` outside the mesh.
    pub fn eval(&self, u: &FeFunction, p: Point2) -> Option<f64> {
        let (k, l) = self.find(p)?;
        let t = self.mesh.triangles[k];
        Some((0..3).map(|i| l[i] * u.values[t[i] as usize]).sum())
    }
}
