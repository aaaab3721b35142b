//! Truncation of core-plus-tube domains by segment arrangement.
//!
//! Every core edge, tube mouth, tube wall and cap is split at all mutual
//! intersections. Each resulting piece is classified by probing the region on
//! both of its sides: pieces with the region on one side become Dirichlet
//! boundary, pieces with the region on both sides are dropped unless they carry
//! a slit, Σ or interface marker, or separate two tubes that only touch.

use std::collections::HashMap;

use super::{DomainSpec, EdgeMarker, Point2, Pslg, PslgEdge, TruncatedDomain, TubeLength, TubeSpec};
use crate::error::{Error, Result};

const SNAP: f64 = 1e-9;
const PROBE: f64 = 1e-7;
const FAR: f64 = 1e6;

/// Extra constrained lines to embed in a truncation.
#[derive(Clone, Debug, Default)]
pub struct TruncateOptions {
    /// Interface cuts across every infinite tube at these axial distances.
    pub tube_cuts: Vec<f64>,
    /// Interface polylines; only their parts inside the region are kept.
    pub interfaces: Vec<Vec<Point2>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Source {
    Core(EdgeMarker),
    Mouth,
    Wall,
    Cap,
    Interface,
}

/// Truncates every infinite tube at axial distance `r` from its mouth.
pub fn truncate(spec: &DomainSpec, r: f64) -> Result<TruncatedDomain> {
    truncate_with(spec, r, &TruncateOptions::default())
}

/// [`truncate`] with additional interface lines embedded as constraints.
pub fn truncate_with(spec: &DomainSpec, r: f64, opts: &TruncateOptions) -> Result<TruncatedDomain> {
    spec.validate()?;
    let r0 = compute_r0(spec)?;
    if spec.infinite_tubes().next().is_some() && r < r0 {
        return Err(Error::TruncationTooShort { r, r0 });
    }
    let lengths: Vec<f64> = spec
        .tubes
        .iter()
        .map(|t| match t.length {
            TubeLength::Finite(l) => l,
            TubeLength::Infinite => r,
        })
        .collect();

    let mut segs: Vec<(Point2, Point2, Source)> = Vec::new();
    for e in &spec.core.edges {
        let (a, b) = spec.core.segment(e);
        segs.push((a, b, Source::Core(e.2)));
    }
    for (t, &len) in spec.tubes.iter().zip(&lengths) {
        let [a, b] = t.mouth;
        let (a2, b2) = (a + t.dir * len, b + t.dir * len);
        segs.push((a, b, Source::Mouth));
        segs.push((a, a2, Source::Wall));
        segs.push((b, b2, Source::Wall));
        segs.push((a2, b2, Source::Cap));
        if t.is_infinite() {
            for &c in &opts.tube_cuts {
                if c > 0.0 && c < len {
                    segs.push((a + t.dir * c, b + t.dir * c, Source::Interface));
                }
            }
        }
    }
    for line in &opts.interfaces {
        for w in line.windows(2) {
            segs.push((w[0], w[1], Source::Interface));
        }
    }

    let region = Region { spec, lengths: &lengths };
    let pslg = build_arrangement(&segs, |p| region.contains(p))?;
    pslg.validate()?;
    Ok(TruncatedDomain { pslg, r, r0, tubes: spec.tubes.clone(), tube_lengths: lengths })
}

struct Region<'a> {
    spec: &'a DomainSpec,
    lengths: &'a [f64],
}

impl Region<'_> {
    fn contains(&self, p: Point2) -> bool {
        core_contains(&self.spec.core, p)
            || self
                .spec
                .tubes
                .iter()
                .zip(self.lengths)
                .any(|(t, &l)| tube_contains_open(t, l, p))
    }
}

fn tube_contains_open(t: &TubeSpec, len: f64, p: Point2) -> bool {
    let (s, tr) = t.frame_coords(p);
    s > SNAP && s < len - SNAP && tr.abs() < 0.5 * t.width - SNAP
}

fn is_region_boundary(m: EdgeMarker) -> bool {
    matches!(m, EdgeMarker::OuterDirichlet | EdgeMarker::TubeMouth(_))
}

/// Even-odd test against the core's boundary edges.
fn core_contains(core: &Pslg, p: Point2) -> bool {
    even_odd(core, p, is_region_boundary)
}

/// Whether `p` lies inside the region bounded by the Dirichlet/mouth edges of `pslg`.
pub(crate) fn pslg_contains(pslg: &Pslg, p: Point2) -> bool {
    even_odd(pslg, p, is_region_boundary)
}

fn even_odd(pslg: &Pslg, p: Point2, use_edge: impl Fn(EdgeMarker) -> bool) -> bool {
    let mut inside = false;
    for e in pslg.edges.iter().filter(|e| use_edge(e.2)) {
        let (a, b) = pslg.segment(e);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Area enclosed by the boundary edges of `pslg`.
pub fn region_area(pslg: &Pslg) -> f64 {
    let mut area = 0.0;
    for e in pslg.edges.iter().filter(|e| is_region_boundary(e.2)) {
        let (a, b) = pslg.segment(e);
        let m = a.lerp(b, 0.5);
        let left = (b - a).perp().normalized() * PROBE;
        let sign = if pslg_contains(pslg, m + left) { 1.0 } else { -1.0 };
        area += sign * 0.5 * a.cross(b);
    }
    area
}

struct VertexPool {
    points: Vec<Point2>,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl VertexPool {
    fn new() -> Self {
        VertexPool { points: vec![], grid: HashMap::new() }
    }

    fn cell(p: Point2) -> (i64, i64) {
        ((p.x / 1e-6).floor() as i64, (p.y / 1e-6).floor() as i64)
    }

    fn insert(&mut self, p: Point2) -> usize {
        let (cx, cy) = Self::cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.grid.get(&(cx + dx, cy + dy)) {
                    for &i in list {
                        if self.points[i].dist(p) < SNAP {
                            return i;
                        }
                    }
                }
            }
        }
        let i = self.points.len();
        self.points.push(p);
        self.grid.entry((cx, cy)).or_default().push(i);
        i
    }
}

fn build_arrangement(
    segs: &[(Point2, Point2, Source)],
    inside: impl Fn(Point2) -> bool,
) -> Result<Pslg> {
    let n = segs.len();
    let mut params: Vec<Vec<f64>> = vec![vec![0.0, 1.0]; n];
    for i in 0..n {
        let (p, q, _) = segs[i];
        let d1 = q - p;
        let l1 = d1.norm();
        if l1 < SNAP {
            return Err(Error::Geometry("degenerate segment in domain description".into()));
        }
        for j in i + 1..n {
            let (r, s, _) = segs[j];
            let d2 = s - r;
            let l2 = d2.norm();
            let denom = d1.cross(d2);
            if denom.abs() <= 1e-12 * l1 * l2 {
                if ((r - p).cross(d1) / l1).abs() > SNAP {
                    continue;
                }
                for e in [r, s] {
                    let t = (e - p).dot(d1) / (l1 * l1);
                    if t * l1 > SNAP && (1.0 - t) * l1 > SNAP {
                        params[i].push(t);
                    }
                }
                for e in [p, q] {
                    let u = (e - r).dot(d2) / (l2 * l2);
                    if u * l2 > SNAP && (1.0 - u) * l2 > SNAP {
                        params[j].push(u);
                    }
                }
            } else {
                let t = (r - p).cross(d2) / denom;
                let u = (r - p).cross(d1) / denom;
                let (tt, tu) = (SNAP / l1, SNAP / l2);
                if t >= -tt && t <= 1.0 + tt && u >= -tu && u <= 1.0 + tu {
                    if t > tt && t < 1.0 - tt {
                        params[i].push(t);
                    }
                    if u > tu && u < 1.0 - tu {
                        params[j].push(u);
                    }
                }
            }
        }
    }

    let mut pool = VertexPool::new();
    for (p, q, _) in segs {
        pool.insert(*p);
        pool.insert(*q);
    }
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    let mut sources: HashMap<(usize, usize), Vec<Source>> = HashMap::new();
    for (i, (p, q, src)) in segs.iter().enumerate() {
        let ts = &mut params[i];
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ids: Vec<usize> = ts
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    pool.insert(*p)
                } else if t == 1.0 {
                    pool.insert(*q)
                } else {
                    pool.insert(p.lerp(*q, t))
                }
            })
            .collect();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            let entry = sources.entry(key).or_insert_with(|| {
                pieces.push(key);
                Vec::new()
            });
            entry.push(*src);
        }
    }

    let mut out_edges: Vec<(usize, usize, EdgeMarker)> = Vec::new();
    for key in &pieces {
        let (a, b) = (pool.points[key.0], pool.points[key.1]);
        let srcs = &sources[key];
        let m = a.lerp(b, 0.5);
        let nrm = (b - a).perp().normalized() * PROBE;
        let (ip, im) = (inside(m + nrm), inside(m - nrm));
        let marker = match (ip, im) {
            (false, false) => None,
            (true, false) | (false, true) => Some(EdgeMarker::OuterDirichlet),
            (true, true) => classify_interior(srcs, inside(m)),
        };
        if let Some(mk) = marker {
            out_edges.push((key.0, key.1, mk));
        }
    }

    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    for (a, b, mk) in out_edges {
        let mut id = |v: usize| {
            *remap.entry(v).or_insert_with(|| {
                vertices.push(pool.points[v]);
                vertices.len() - 1
            })
        };
        let (ia, ib) = (id(a), id(b));
        edges.push(PslgEdge(ia, ib, mk));
    }
    Ok(Pslg { vertices, edges })
}

fn classify_interior(srcs: &[Source], mid_inside: bool) -> Option<EdgeMarker> {
    if srcs.contains(&Source::Core(EdgeMarker::Slit)) {
        return Some(EdgeMarker::Slit);
    }
    for s in srcs {
        if let Source::Core(EdgeMarker::Sigma(i)) = s {
            return Some(EdgeMarker::Sigma(*i));
        }
    }
    if srcs.contains(&Source::Interface) {
        return Some(EdgeMarker::Interface);
    }
    if mid_inside {
        return None;
    }
    let glued = srcs
        .iter()
        .any(|s| matches!(s, Source::Mouth | Source::Core(EdgeMarker::TubeMouth(_))));
    if glued {
        None
    } else {
        // two pieces touching along a wall, e.g. the shared wall of the two Hersch tubes
        Some(EdgeMarker::Slit)
    }
}

/// Clips a convex polygon to the half-plane {p : n·p ≤ c}.
fn clip_halfplane(poly: &[Point2], n: Point2, c: f64) -> Vec<Point2> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fa, fb) = (n.dot(a) - c, n.dot(b) - c);
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            out.push(a.lerp(b, fa / (fa - fb)));
        }
    }
    out
}

fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Clips a convex polygon to the closed carrier of tube `t` truncated at `len`.
fn clip_to_carrier(poly: &[Point2], t: &TubeSpec, len: f64) -> Vec<Point2> {
    let o = t.origin();
    let e = t.transverse();
    let hw = 0.5 * t.width;
    let mut p = clip_halfplane(poly, -t.dir, -t.dir.dot(o));
    p = clip_halfplane(&p, t.dir, t.dir.dot(o) + len);
    p = clip_halfplane(&p, e, e.dot(o) + hw);
    clip_halfplane(&p, -e, -e.dot(o) + hw)
}

fn carrier_polygon(t: &TubeSpec, len: f64) -> Vec<Point2> {
    let [a, b] = t.mouth;
    let mut poly = vec![a, b, b + t.dir * len, a + t.dir * len];
    if polygon_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Largest axial extent of pairwise intersections of infinite tube carriers.
pub(crate) fn check_tube_pairs(spec: &DomainSpec) -> Result<f64> {
    let tubes: Vec<&TubeSpec> = spec.infinite_tubes().map(|(_, t)| t).collect();
    let mut reach: f64 = 0.0;
    for i in 0..tubes.len() {
        for j in i + 1..tubes.len() {
            let poly = clip_to_carrier(&carrier_polygon(tubes[i], FAR), tubes[j], FAR);
            if poly.len() < 3 || polygon_area(&poly).abs() < 1e-12 {
                continue;
            }
            for p in &poly {
                let si = tubes[i].frame_coords(*p).0;
                let sj = tubes[j].frame_coords(*p).0;
                if si > 0.5 * FAR || sj > 0.5 * FAR {
                    return Err(Error::Overlap(format!(
                        "tubes {i} and {j} have an unbounded intersection"
                    )));
                }
                reach = reach.max(si).max(sj);
            }
        }
    }
    Ok(reach)
}

/// Smallest integer r ≥ 1 for which the complement of Ω_r is a union of disjoint straight tails.
///
/// Certified conditions: r covers the tube half-widths, every core or finite-tube edge
/// inside a closed tube band stays axially below r, and pairwise carrier intersections
/// stay axially below r. Returns 0 for domains without infinite tubes.
pub fn compute_r0(spec: &DomainSpec) -> Result<f64> {
    if spec.infinite_tubes().next().is_none() {
        return Ok(0.0);
    }
    let mut need: f64 = check_tube_pairs(spec)?;
    let mut obstacles: Vec<(Point2, Point2)> =
        spec.core.edges.iter().map(|e| spec.core.segment(e)).collect();
    for t in &spec.tubes {
        if let TubeLength::Finite(l) = t.length {
            let poly = carrier_polygon(t, l);
            for k in 0..4 {
                obstacles.push((poly[k], poly[(k + 1) % 4]));
            }
        }
    }
    let mut half_width: f64 = 0.0;
    for (_, t) in spec.infinite_tubes() {
        half_width = half_width.max(0.5 * t.width);
        let hw = 0.5 * t.width + SNAP;
        for &(a, b) in &obstacles {
            let (sa, ta) = t.frame_coords(a);
            let (sb, tb) = t.frame_coords(b);
            // clip the segment to |t| <= hw
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for (t0, t1, bound) in [(ta, tb, hw), (-ta, -tb, hw)] {
                if (t1 - t0).abs() < 1e-300 {
                    if t0 > bound {
                        lo = 1.0;
                        hi = 0.0;
                    }
                } else {
                    let x = (bound - t0) / (t1 - t0);
                    if t1 > t0 {
                        hi = hi.min(x);
                    } else {
                        lo = lo.max(x);
                    }
                }
            }
            if lo <= hi {
                let s_lo = sa + lo * (sb - sa);
                let s_hi = sa + hi * (sb - sa);
                need = need.max(s_lo).max(s_hi);
            }
        }
    }
    let r = (need.floor() + 1.0).max(half_width.ceil()).max(1.0);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        attach_perturbation_tubes, build_broken_strip, build_diamond, build_hersch_pipe,
        build_infinite_cross, build_slit_disk,
    };
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn r0_values() {
        assert_eq!(compute_r0(&build_hersch_pipe(64).unwrap()).unwrap(), 2.0);
        assert_eq!(compute_r0(&build_infinite_cross()).unwrap(), 2.0);
        let bs = build_broken_strip(PI / 6.0).unwrap();
        let r0 = compute_r0(&bs).unwrap();
        // the triangle reaches axial distance tan(theta) past the mouths
        assert!(r0 >= (PI / 6.0).tan() && r0 == 1.0);
        assert_eq!(compute_r0(&build_diamond()).unwrap(), 0.0);
        let p = attach_perturbation_tubes(&build_hersch_pipe(64).unwrap(), 2, 0.05).unwrap();
        assert_eq!(compute_r0(&p).unwrap(), 4.0);
    }

    #[test]
    fn hersch_truncation_area_and_slit() {
        let h = build_hersch_pipe(64).unwrap();
        let t = truncate(&h, 6.0).unwrap();
        let half_disk = 0.5 * 32.0 * (PI / 32.0).sin();
        assert!((t.area() - (half_disk + 12.0)).abs() < 1e-12);
        assert!((t.pslg.marked_length(EdgeMarker::Slit) - 6.0).abs() < 1e-12);
        assert!(matches!(truncate(&h, 0.5), Err(Error::TruncationTooShort { .. })));
    }

    #[test]
    fn cross_truncation() {
        let t = truncate(&build_infinite_cross(), 5.0).unwrap();
        // centre square plus four 2x5 arms
        assert!((t.area() - (4.0 + 4.0 * 10.0)).abs() < 1e-12);
        assert!(t.pslg.edges.iter().all(|e| e.2 == EdgeMarker::OuterDirichlet));
        let caps = t
            .pslg
            .edges
            .iter()
            .filter(|e| {
                let (a, b) = t.pslg.segment(e);
                (a.x.abs() - 6.0).abs() < 1e-12 && (b.x.abs() - 6.0).abs() < 1e-12
                    || (a.y.abs() - 6.0).abs() < 1e-12 && (b.y.abs() - 6.0).abs() < 1e-12
            })
            .count();
        assert_eq!(caps, 4);
    }

    #[test]
    fn broken_strip_area() {
        let theta = PI / 6.0;
        let bs = build_broken_strip(theta).unwrap();
        let t = truncate(&bs, 3.0).unwrap();
        assert!(t.area() > 2.0 * 3.0);
        assert!(t.contains(Point2::new(-0.5, 0.0)));
        assert!(!t.contains(Point2::new(0.1, 0.0)));
    }

    #[test]
    fn slit_disk_truncation_keeps_slit() {
        let sd = build_slit_disk(64).unwrap();
        let t = truncate(&sd, 0.0).unwrap();
        assert!((t.pslg.marked_length(EdgeMarker::Slit) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interface_cuts() {
        let h = build_hersch_pipe(64).unwrap();
        let opts = TruncateOptions { tube_cuts: vec![4.0, 6.0], interfaces: vec![] };
        let t = truncate_with(&h, 8.0, &opts).unwrap();
        assert!((t.pslg.marked_length(EdgeMarker::Interface) - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn truncation_nesting(r1 in 2.0f64..8.0, dr in 0.0f64..6.0) {
            let h = build_hersch_pipe(32).unwrap();
            let small = truncate(&h, r1).unwrap();
            let big = truncate(&h, r1 + dr).unwrap();
            for p in &small.pslg.vertices {
                // closed region: every vertex is inside or within snapping distance of the boundary
                let near_boundary = big.pslg.edges.iter().any(|e| {
                    let (a, b) = big.pslg.segment(e);
                    crate::geometry::dist_point_segment(*p, a, b) < 1e-9
                });
                prop_assert!(big.contains(*p) || near_boundary);
            }
        }
    }
}
