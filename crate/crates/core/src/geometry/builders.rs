//! Constructors for the standard domains.

use std::f64::consts::PI;

use super::{DomainSpec, EdgeMarker, Point2, Pslg, PslgEdge, TubeLength, TubeSpec};
use crate::error::{Error, Result};

fn closed_polygon(vertices: Vec<Point2>, marker: EdgeMarker) -> Pslg {
    let n = vertices.len();
    let edges = (0..n).map(|i| PslgEdge(i, (i + 1) % n, marker)).collect();
    Pslg { vertices, edges }
}

/// Polygonal domain without tubes.
pub fn build_polygon(name: &str, vertices: Vec<Point2>) -> Result<DomainSpec> {
    if vertices.len() < 3 {
        return Err(Error::Parameter("polygon needs at least 3 vertices".into()));
    }
    let spec = DomainSpec {
        name: name.to_string(),
        core: closed_polygon(vertices, EdgeMarker::OuterDirichlet),
        tubes: vec![],
        circle_segments: 0,
    };
    spec.validate()?;
    Ok(spec)
}

/// Square with vertices (0,±2), (±2,0).
pub fn build_diamond() -> DomainSpec {
    build_polygon("diamond", diamond_vertices()).expect("diamond is valid")
}

fn diamond_vertices() -> Vec<Point2> {
    vec![
        Point2::new(2.0, 0.0),
        Point2::new(0.0, 2.0),
        Point2::new(-2.0, 0.0),
        Point2::new(0.0, -2.0),
    ]
}

/// Unit disk with the slit [0,1]×{0} removed.
pub fn build_slit_disk(circle_segments: usize) -> Result<DomainSpec> {
    if circle_segments < 8 {
        return Err(Error::Parameter("circle_segments must be at least 8".into()));
    }
    let n = circle_segments;
    let mut vertices: Vec<Point2> = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            Point2::new(t.cos(), t.sin())
        })
        .collect();
    let mut edges: Vec<PslgEdge> =
        (0..n).map(|i| PslgEdge(i, (i + 1) % n, EdgeMarker::OuterDirichlet)).collect();
    vertices.push(Point2::new(0.0, 0.0));
    edges.push(PslgEdge(n, 0, EdgeMarker::Slit));
    Ok(DomainSpec {
        name: "slit_disk".into(),
        core: Pslg { vertices, edges },
        tubes: vec![],
        circle_segments,
    })
}

/// Left half-disk, slit [0,1]×{0}, and the two half-strips (0,∞)×(0,1), (0,∞)×(−1,0).
pub fn build_hersch_pipe(circle_segments: usize) -> Result<DomainSpec> {
    if circle_segments < 32 {
        return Err(Error::Parameter(format!(
            "circle_segments = {circle_segments} must be at least 32"
        )));
    }
    let m = circle_segments / 2;
    let mut vertices: Vec<Point2> = (0..=m)
        .map(|k| {
            let t = PI / 2.0 + PI * k as f64 / m as f64;
            snap_unit(Point2::new(t.cos(), t.sin()))
        })
        .collect();
    let mut edges: Vec<PslgEdge> =
        (0..m).map(|i| PslgEdge(i, i + 1, EdgeMarker::OuterDirichlet)).collect();
    let origin = vertices.len();
    vertices.push(Point2::new(0.0, 0.0));
    vertices.push(Point2::new(1.0, 0.0));
    // vertex 0 is (0,1), vertex m is (0,-1)
    edges.push(PslgEdge(m, origin, EdgeMarker::TubeMouth(1)));
    edges.push(PslgEdge(origin, 0, EdgeMarker::TubeMouth(0)));
    edges.push(PslgEdge(origin, origin + 1, EdgeMarker::Slit));
    let east = Point2::new(1.0, 0.0);
    let tubes = vec![
        TubeSpec::new([Point2::new(0.0, 0.0), Point2::new(0.0, 1.0)], east, TubeLength::Infinite),
        TubeSpec::new([Point2::new(0.0, -1.0), Point2::new(0.0, 0.0)], east, TubeLength::Infinite),
    ];
    let spec = DomainSpec {
        name: "hersch".into(),
        core: Pslg { vertices, edges },
        tubes,
        circle_segments,
    };
    spec.validate()?;
    Ok(spec)
}

// cos/sin at multiples of pi/2 are not exactly 0 or 1 in floating point.
fn snap_unit(p: Point2) -> Point2 {
    let s = |v: f64| {
        if v.abs() < 1e-15 {
            0.0
        } else if (v.abs() - 1.0).abs() < 1e-15 {
            v.signum()
        } else {
            v
        }
    };
    Point2::new(s(p.x), s(p.y))
}

/// Plus-shaped union (ℝ×(−1,1)) ∪ ((−1,1)×ℝ): diamond core with four width-2 tubes.
pub fn build_infinite_cross() -> DomainSpec {
    let p = Point2::new;
    let tubes = vec![
        TubeSpec::new([p(1.0, -1.0), p(1.0, 1.0)], p(1.0, 0.0), TubeLength::Infinite),
        TubeSpec::new([p(1.0, 1.0), p(-1.0, 1.0)], p(0.0, 1.0), TubeLength::Infinite),
        TubeSpec::new([p(-1.0, 1.0), p(-1.0, -1.0)], p(-1.0, 0.0), TubeLength::Infinite),
        TubeSpec::new([p(-1.0, -1.0), p(1.0, -1.0)], p(0.0, -1.0), TubeLength::Infinite),
    ];
    DomainSpec {
        name: "cross".into(),
        core: closed_polygon(diamond_vertices(), EdgeMarker::OuterDirichlet),
        tubes,
        circle_segments: 0,
    }
}

/// Perimeter and area of the triangular core of the broken strip.
pub fn broken_strip_triangle(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (2.0 / (s * c) + 2.0 / c, 1.0 / (s * c))
}

/// V-shaped strip of width 1 whose arms make angle `theta` with the x-axis.
pub fn build_broken_strip(theta: f64) -> Result<DomainSpec> {
    if !(theta > 0.0 && theta < PI / 2.0) {
        return Err(Error::Parameter(format!("theta = {theta} must lie in (0, pi/2)")));
    }
    let (s, c) = theta.sin_cos();
    let vertices = vec![
        Point2::new(-1.0 / s, 0.0),
        Point2::new(0.0, -1.0 / c),
        Point2::new(0.0, 1.0 / c),
    ];
    let tubes = vec![
        TubeSpec::new(
            [Point2::new(0.0, 0.0), Point2::new(-s, c)],
            Point2::new(c, s),
            TubeLength::Infinite,
        ),
        TubeSpec::new(
            [Point2::new(-s, -c), Point2::new(0.0, 0.0)],
            Point2::new(c, -s),
            TubeLength::Infinite,
        ),
    ];
    let spec = DomainSpec {
        name: format!("broken_strip_{theta}"),
        core: closed_polygon(vertices, EdgeMarker::OuterDirichlet),
        tubes,
        circle_segments: 0,
    };
    spec.validate()?;
    Ok(spec)
}

/// Abscissae 2 + i/n, i = 0..=n, of the perturbation tube mouths (a single tube at 2 when n = 0).
pub fn perturbation_centers(n: usize) -> Vec<f64> {
    if n == 0 {
        return vec![2.0];
    }
    (0..=n).map(|i| 2.0 + i as f64 / n as f64).collect()
}

/// Attaches n+1 vertical tubes Σ_i × [1, 2) with Σ_i = (c_i − ε, c_i + ε) on the line y = 1.
pub fn attach_perturbation_tubes(base: &DomainSpec, n: usize, eps: f64) -> Result<DomainSpec> {
    let limit = if n == 0 { 0.5 } else { 0.5 / n as f64 };
    if eps >= limit {
        return Err(Error::Overlap(format!(
            "eps = {eps} must be below 1/(2n) = {limit} for n = {n}"
        )));
    }
    let mut spec = attach_tubes_at(base, &perturbation_centers(n), eps)?;
    spec.name = format!("{}_n{}_eps{}", base.name, n, eps);
    Ok(spec)
}

/// Attaches unit-length vertical tubes of width 2ε centered at the abscissae `centers` on y = 1.
pub fn attach_tubes_at(base: &DomainSpec, centers: &[f64], eps: f64) -> Result<DomainSpec> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps = {eps} must be positive")));
    }
    if centers.is_empty() || centers.windows(2).any(|w| !(w[1] - w[0] > 2.0 * eps)) {
        return Err(Error::Overlap(format!("centers {centers:?} must increase by more than 2 eps = {}", 2.0 * eps)));
    }
    let (lo, hi) = (centers[0] - eps, centers[centers.len() - 1] + eps);
    let carrier = base.tubes.iter().any(|t| {
        t.is_infinite()
            && (t.dir - Point2::new(1.0, 0.0)).norm() < 1e-12
            && t.mouth.iter().any(|p| (p.y - 1.0).abs() < 1e-12)
            && t.mouth.iter().all(|p| p.y <= 1.0 + 1e-12 && p.x <= lo)
    });
    if !carrier || !hi.is_finite() {
        return Err(Error::Parameter(
            "base domain has no tube whose upper wall carries the requested openings".into(),
        ));
    }
    let mut spec = base.clone();
    spec.name = format!("{}_tubes{}_eps{}", base.name, centers.len(), eps);
    for (i, &c) in centers.iter().enumerate() {
        let a = Point2::new(c - eps, 1.0);
        let b = Point2::new(c + eps, 1.0);
        let k = spec.core.vertices.len();
        spec.core.vertices.push(a);
        spec.core.vertices.push(b);
        spec.core.edges.push(PslgEdge(k, k + 1, EdgeMarker::Sigma(i)));
        spec.tubes.push(TubeSpec::new([b, a], Point2::new(0.0, 1.0), TubeLength::Finite(1.0)));
    }
    spec.validate()?;
    Ok(spec)
}

/// Truncated blow-up domain: upper half-disk of radius `r_inf` glued along Σ = (−1,1)×{0}
/// to the tube (−1,1)×(−`tube_len`, 0].
pub fn build_blowup_domain(r_inf: f64, tube_len: f64, arc_segments: usize) -> Result<DomainSpec> {
    if !(r_inf > 1.0) || !(tube_len > 0.0) || arc_segments < 8 {
        return Err(Error::Parameter(format!(
            "blow-up domain needs r_inf > 1, tube_len > 0, arc_segments >= 8 (got {r_inf}, {tube_len}, {arc_segments})"
        )));
    }
    let m = arc_segments;
    let mut vertices: Vec<Point2> = (0..=m)
        .map(|k| {
            let t = PI * k as f64 / m as f64;
            snap_unit(Point2::new(t.cos(), t.sin())) * r_inf
        })
        .collect();
    let mut edges: Vec<PslgEdge> =
        (0..m).map(|i| PslgEdge(i, i + 1, EdgeMarker::OuterDirichlet)).collect();
    // vertex 0 is (r,0), vertex m is (-r,0)
    let k = vertices.len();
    vertices.push(Point2::new(-1.0, 0.0));
    vertices.push(Point2::new(1.0, 0.0));
    edges.push(PslgEdge(m, k, EdgeMarker::OuterDirichlet));
    edges.push(PslgEdge(k, k + 1, EdgeMarker::Sigma(0)));
    edges.push(PslgEdge(k + 1, 0, EdgeMarker::OuterDirichlet));
    let tube = TubeSpec::new(
        [Point2::new(1.0, 0.0), Point2::new(-1.0, 0.0)],
        Point2::new(0.0, -1.0),
        TubeLength::Finite(tube_len),
    );
    let spec = DomainSpec {
        name: format!("blowup_R{r_inf}_L{tube_len}"),
        core: Pslg { vertices, edges },
        tubes: vec![tube],
        circle_segments: 2 * arc_segments,
    };
    spec.validate()?;
    Ok(spec)
}

/// Triangle eigenvalue upper bound (π/3)²(L/A)².
pub fn polya_triangle_bound(perimeter: f64, area: f64) -> Result<f64> {
    if !(perimeter > 0.0 && area > 0.0) {
        return Err(Error::Parameter(format!(
            "perimeter {perimeter} and area {area} must be positive"
        )));
    }
    Ok((PI / 3.0).powi(2) * (perimeter / area).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{inradius_of_spec, region_area, truncate};

    #[test]
    fn hersch_structure() {
        let h = build_hersch_pipe(64).unwrap();
        assert_eq!(h.tubes.len(), 2);
        assert!(h.tubes.iter().all(|t| (t.width - 1.0).abs() < 1e-15));
        assert!(build_hersch_pipe(16).is_err());
    }

    #[test]
    fn hersch_core_area_polygonization() {
        let area = |n| {
            let h = build_hersch_pipe(n).unwrap();
            let mut core = h.core.clone();
            core.edges.retain(|e| e.2 != EdgeMarker::Slit);
            region_area(&core)
        };
        let (a32, a128) = (area(32), area(128));
        assert!((a32 - a128).abs() < 0.01 * PI / 2.0);
        // polygon area of m segments over a half circle
        let exact = |m: f64| 0.5 * m * (PI / m).sin();
        assert!((a32 - exact(16.0)).abs() < 1e-12);
    }

    #[test]
    fn cross_is_rotation_symmetric() {
        let c = build_infinite_cross();
        let rot = |p: Point2| Point2::new(-p.y, p.x);
        let mut pts: Vec<Point2> = c.core.vertices.clone();
        for t in &c.tubes {
            pts.extend(t.mouth);
        }
        for p in &pts {
            let q = rot(*p);
            assert!(pts.iter().any(|r| r.dist(q) < 1e-14));
        }
    }

    #[test]
    fn broken_strip_polya() {
        let theta = PI / 6.0;
        let (l, a) = broken_strip_triangle(theta);
        let (s, c) = theta.sin_cos();
        assert!((l - (2.0 / (s * c) + 2.0 / c)).abs() < 1e-12);
        assert!((polya_triangle_bound(l, a).unwrap() - PI * PI).abs() < 1e-12);
        let spec = build_broken_strip(PI / 4.0).unwrap();
        for t in &spec.tubes {
            assert!(t.dir.dot(t.mouth[1] - t.mouth[0]).abs() < 1e-15);
        }
        assert!(build_broken_strip(PI / 2.0).is_err());
        assert!(build_broken_strip(0.0).is_err());
    }

    #[test]
    fn polya_values() {
        let eq = polya_triangle_bound(3.0, 3f64.sqrt() / 4.0).unwrap();
        assert!((eq - (PI / 3.0).powi(2) * 48.0).abs() < 1e-10);
        assert!((polya_triangle_bound(2.0, 2.0).unwrap() - (PI / 3.0).powi(2)).abs() < 1e-15);
        assert!(polya_triangle_bound(0.0, 1.0).is_err());
        assert!(polya_triangle_bound(1.0, 2.0).unwrap() < polya_triangle_bound(1.5, 2.0).unwrap());
    }

    #[test]
    fn perturbation_tubes() {
        let h = build_hersch_pipe(64).unwrap();
        let p = attach_perturbation_tubes(&h, 3, 0.05).unwrap();
        assert_eq!(p.tubes.len(), 6);
        let centers: Vec<f64> = p.tubes[2..].iter().map(|t| t.origin().x).collect();
        for (c, e) in centers.iter().zip([2.0, 7.0 / 3.0, 8.0 / 3.0, 3.0]) {
            assert!((c - e).abs() < 1e-12);
        }
        assert!(matches!(attach_perturbation_tubes(&h, 1, 0.6), Err(Error::Overlap(_))));
        assert!(matches!(attach_perturbation_tubes(&h, 3, 0.3), Err(Error::Overlap(_))));
        assert_eq!(attach_perturbation_tubes(&h, 0, 0.1).unwrap().tubes.len(), 3);
        assert!(attach_perturbation_tubes(&build_diamond(), 1, 0.1).is_err());
    }

    #[test]
    fn sigma_lengths_after_truncation() {
        let h = build_hersch_pipe(64).unwrap();
        let p = attach_perturbation_tubes(&h, 1, 0.05).unwrap();
        let t = truncate(&p, 6.0).unwrap();
        for i in 0..2 {
            assert!((t.pslg.marked_length(EdgeMarker::Sigma(i)) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbed_inradius() {
        let h = build_hersch_pipe(64).unwrap();
        let p = attach_perturbation_tubes(&h, 1, 0.01).unwrap();
        let r = inradius_of_spec(&p, 0.02, 40).unwrap();
        assert!((r.radius - 0.50005).abs() < 1e-6, "{}", r.radius);
    }
}
