//! L² and sup norms of a P1 function over the parts of the infinite tubes beyond a cut.

use super::FeFunction;
use crate::geometry::{DomainSpec, Point2, TubeSpec};

/// ∫_T u² for u linear on a triangle of area `area` with vertex values `v`.
pub(crate) fn p1_square_integral(area: f64, v: [f64; 3]) -> f64 {
    area / 6.0 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[0] * v[1] + v[1] * v[2] + v[2] * v[0])
}

/// Keeps the part of `poly` where `f >= 0` (f affine).
fn clip(poly: &[Point2], f: impl Fn(Point2) -> f64) -> Vec<Point2> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fp, fq) = (f(p), f(q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            out.push(p.lerp(q, fp / (fp - fq)));
        }
    }
    out
}

/// Part of triangle `tri` in the half-strip of `tube` at axial distance ≥ r.
fn clip_to_tail(tri: [Point2; 3], tube: &TubeSpec, r: f64) -> Vec<Point2> {
    let half = 0.5 * tube.width;
    let mut poly = tri.to_vec();
    poly = clip(&poly, |p| tube.frame_coords(p).0 - r);
    if poly.is_empty() {
        return poly;
    }
    poly = clip(&poly, |p| half - tube.frame_coords(p).1);
    if poly.is_empty() {
        return poly;
    }
    clip(&poly, |p| half + tube.frame_coords(p).1)
}

/// ∫ u² over the tube tails {s ≥ r} of every infinite tube, by exact clipping.
pub fn tail_mass(u: &FeFunction, spec: &DomainSpec, r: f64) -> f64 {
    let mesh = u.mesh;
    let tubes: Vec<&TubeSpec> = spec.infinite_tubes().map(|(_, t)| t).collect();
    let mut total = 0.0;
    for t in &mesh.triangles {
        let pts = t.map(|v| mesh.vertices[v as usize]);
        let vals = t.map(|v| u.values[v as usize]);
        let area = mesh.triangle_area(t);
        // barycentric evaluation of the linear interpolant
        let eval = |p: Point2| {
            let [a, b, c] = pts;
            let l1 = 0.5 * (p - a).cross(c - a) / area;
            let l2 = 0.5 * (b - a).cross(p - a) / area;
            let l0 = 1.0 - l1 - l2;
            l0 * vals[0] + l1 * vals[1] + l2 * vals[2]
        };
        for tube in &tubes {
            let s_max = pts.iter().map(|&p| tube.frame_coords(p).0).fold(f64::NEG_INFINITY, f64::max);
            if s_max <= r {
                continue;
            }
            let poly = clip_to_tail(pts, tube, r);
            if poly.len() < 3 {
                continue;
            }
            let p0 = poly[0];
            for w in poly[1..].windows(2) {
                let sub = 0.5 * (w[0] - p0).cross(w[1] - p0);
                if sub > 0.0 {
                    total += p1_square_integral(sub, [eval(p0), eval(w[0]), eval(w[1])]);
                }
            }
        }
    }
    total
}

/// √(∫ u²) over the tube tails beyond axial distance r.
pub fn tail_norm(u: &FeFunction, spec: &DomainSpec, r: f64) -> f64 {
    tail_mass(u, spec, r).max(0.0).sqrt()
}

/// Largest |u| at vertices in the tube tails beyond axial distance r; every vertex when r ≤ 0.
pub fn sup_norm_tail(u: &FeFunction, spec: &DomainSpec, r: f64) -> f64 {
    let tubes: Vec<&TubeSpec> = spec.infinite_tubes().map(|(_, t)| t).collect();
    u.mesh
        .vertices
        .iter()
        .zip(&u.values)
        .filter(|(&p, _)| {
            r <= 0.0
                || tubes.iter().any(|t| {
                    let (s, tr) = t.frame_coords(p);
                    s >= r && tr.abs() <= 0.5 * t.width
                })
        })
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}
