use super::*;
use crate::geometry::{
    attach_perturbation_tubes, build_hersch_pipe, build_polygon, build_slit_disk, truncate,
};
use proptest::prelude::*;

fn unit_square() -> TruncatedDomain {
    let p = Point2::new;
    let d = build_polygon("square", vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]).unwrap();
    truncate(&d, 0.0).unwrap()
}

fn euler(m: &Mesh) -> i64 {
    let e = m.edge_counts().len() as i64;
    m.vertices.len() as i64 - e + m.triangles.len() as i64
}

fn slit_pairs(m: &Mesh) -> (usize, usize) {
    // (coordinates on the open slit seen twice, coordinates seen once)
    let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for p in &m.vertices {
        if p.y == 0.0 && p.x > 0.0 && p.x <= 1.0 {
            *seen.entry((p.x.to_bits(), p.y.to_bits())).or_default() += 1;
        }
    }
    (seen.values().filter(|&&c| c == 2).count(), seen.values().filter(|&&c| c != 2).count())
}

#[test]
fn unit_square_mesh() {
    let m = triangulate(&unit_square(), 0.25).unwrap();
    assert!(m.triangles.len() >= 32);
    m.validate().unwrap();
    for (p, d) in m.vertices.iter().zip(&m.dirichlet) {
        let on_boundary = p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0;
        assert_eq!(on_boundary, *d);
    }
    assert!((m.area() - 1.0).abs() < 1e-12);
    let q = mesh_quality(&m);
    assert!(q.min_angle >= 25.0 - 1e-9, "{}", q.min_angle);
    assert!(q.max_edge <= 0.25 + 1e-12);
    assert_eq!(euler(&m), 1);
}

#[test]
fn hersch_slit_duplication() {
    let h = build_hersch_pipe(64).unwrap();
    let t = truncate(&h, 6.0).unwrap();
    let m = triangulate(&t, 0.05).unwrap();
    m.validate().unwrap();
    let (pairs, singles) = slit_pairs(&m);
    // every slit vertex with x in (0, 1] is doubled; at least 1/h of them
    assert_eq!(singles, 0);
    assert!(pairs >= 20, "{pairs}");
    let tip = m.vertices.iter().filter(|p| p.x == 0.0 && p.y == 0.0).count();
    assert_eq!(tip, 1);
    // no triangle uses both copies' sides: each triangle lies on one side of y = 0 near the slit
    for tri in &m.triangles {
        let ys: Vec<f64> = tri.iter().map(|&v| m.vertices[v as usize].y).collect();
        assert!(!(ys.iter().any(|&y| y > 0.0) && ys.iter().any(|&y| y < 0.0)) || m.centroid(tri).x < 0.0);
    }
    assert_eq!(euler(&m), 1);
    let q = mesh_quality(&m);
    assert!(q.min_angle >= 20.0, "{}", q.min_angle);
    assert!((m.area() - t.area()).abs() < 1e-9);
}

#[test]
fn slit_copies_touch_only_their_side() {
    let sd = build_slit_disk(64).unwrap();
    let t = truncate(&sd, 0.0).unwrap();
    let m = triangulate(&t, 0.1).unwrap();
    m.validate().unwrap();
    let mut by_coord: HashMap<(u64, u64), Vec<u32>> = HashMap::new();
    for (k, p) in m.vertices.iter().enumerate() {
        by_coord.entry((p.x.to_bits(), p.y.to_bits())).or_default().push(k as u32);
    }
    for ids in by_coord.values().filter(|ids| ids.len() == 2) {
        let sides: Vec<f64> = ids
            .iter()
            .map(|&v| {
                let ys: f64 = m
                    .triangles
                    .iter()
                    .filter(|t| t.contains(&v))
                    .map(|t| m.centroid(t).y.signum())
                    .sum();
                ys.signum()
            })
            .collect();
        assert_eq!(sides[0], -sides[1]);
    }
    assert_eq!(euler(&m), 1);
}

#[test]
fn sigma_facets_present() {
    let h = build_hersch_pipe(64).unwrap();
    let p = attach_perturbation_tubes(&h, 1, 0.05).unwrap();
    let t = truncate(&p, 6.0).unwrap();
    let m = triangulate(&t, 0.1).unwrap();
    m.validate().unwrap();
    for i in 0..2 {
        assert!((m.marked_length(EdgeMarker::Sigma(i)) - 0.1).abs() < 1e-12);
    }
    // local edge length at most eps/3 inside the small tubes
    for tri in &m.triangles {
        let c = m.centroid(tri);
        if c.y > 1.0 + 0.05 {
            for i in 0..3 {
                let (a, b) = (m.vertices[tri[i] as usize], m.vertices[tri[(i + 1) % 3] as usize]);
                assert!(a.dist(b) <= 0.05 / 3.0 + 1e-12);
            }
        }
    }
    let sigma_vertices: Vec<u32> = m.sigma_facets().flat_map(|(a, b, _)| [a, b]).collect();
    assert!(sigma_vertices.iter().any(|&v| !m.dirichlet[v as usize]));
}

#[test]
fn uniform_refinement() {
    let h = build_hersch_pipe(64).unwrap();
    let t = truncate(&h, 4.0).unwrap();
    let m = triangulate(&t, 0.2).unwrap();
    let r = m.refine_uniform();
    r.validate().unwrap();
    assert_eq!(r.triangles.len(), 4 * m.triangles.len());
    let (pairs0, _) = slit_pairs(&m);
    let (pairs1, singles1) = slit_pairs(&r);
    assert_eq!(singles1, 0);
    assert!(pairs1 >= 2 * pairs0 - 1, "{pairs0} {pairs1}");
    assert!((r.area() - m.area()).abs() < 1e-12);
    for mk in [EdgeMarker::Slit, EdgeMarker::OuterDirichlet] {
        assert!((r.marked_length(mk) - m.marked_length(mk)).abs() < 1e-9);
    }
    assert_eq!(euler(&r), 1);
    let rr = r.refine_uniform();
    let ratio = rr.vertices.len() as f64 / r.vertices.len() as f64;
    assert!(ratio > 3.5 && ratio < 4.1, "{ratio}");
}

#[test]
fn structured_grid_quality() {
    let n = 4u32;
    let mut vertices = vec![];
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(i as f64, j as f64));
        }
    }
    let id = |i: u32, j: u32| j * (n + 1) + i;
    let mut triangles = vec![];
    for j in 0..n {
        for i in 0..n {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let nv = vertices.len();
    let m = Mesh { vertices, triangles, dirichlet: vec![false; nv], edges: vec![], h_target: 1.0 };
    let q = mesh_quality(&m);
    assert!((q.min_angle - 45.0).abs() < 1e-9);
    assert!(q.low_angle.is_empty());
}

#[test]
fn submesh_cut_is_dirichlet() {
    let m = triangulate(&unit_square(), 0.1).unwrap();
    let s = m.submesh(|p| p.x < 0.5).unwrap();
    s.validate().unwrap();
    assert!(s.area() > 0.3 && s.area() < 0.7);
    assert!(s.num_free() < m.num_free());
    assert!(m.submesh(|_| false).is_err());
}

#[test]
fn json_dump_fields() {
    let m = triangulate(&unit_square(), 0.5).unwrap();
    let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
    for k in ["vertices", "triangles", "dirichlet", "sigma_facets"] {
        assert!(v.get(k).is_some());
    }
}

#[test]
fn rejects_bad_h() {
    assert!(triangulate(&unit_square(), 0.0).is_err());
    let h = build_hersch_pipe(64).unwrap();
    assert!(triangulate(&truncate(&h, 4.0).unwrap(), 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn convex_polygon_meshes(radii in proptest::collection::vec(0.5f64..2.0, 5..9), h in 0.15f64..0.5) {
        let n = radii.len();
        let pts: Vec<Point2> = radii
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Point2::new(r * t.cos(), r * t.sin())
            })
            .collect();
        let d = build_polygon("p", pts).unwrap();
        let t = truncate(&d, 0.0).unwrap();
        let m = triangulate(&t, h).unwrap();
        m.validate().unwrap();
        prop_assert!((m.area() - t.area()).abs() < 1e-9 * t.area());
        prop_assert_eq!(euler(&m), 1);
        let q = mesh_quality(&m);
        prop_assert!(q.max_edge <= h * (1.0 + 1e-12));
    }
}

#[test]
fn crack_tip_detection() {
    let tip = Point2::new(0.0, 0.0);
    let sd = truncate(&build_slit_disk(32).unwrap(), 0.0).unwrap();
    assert_eq!(crack_tips(&sd.pslg), vec![tip]);
    let h = truncate(&build_hersch_pipe(64).unwrap(), 4.0).unwrap();
    assert_eq!(crack_tips(&h.pslg), vec![tip]);
    let graded = triangulate(&h, 0.1).unwrap();
    let plain = triangulate_with(&h, &MeshOptions { crack_tip_ratio: 1.0, ..MeshOptions::new(0.1) }).unwrap();
    assert!(graded.num_vertices() > plain.num_vertices());
    let sq = build_polygon("sq", vec![tip, Point2::new(1.0, 0.0), Point2::new(1.0, 1.0)]).unwrap();
    assert!(crack_tips(&truncate(&sq, 0.0).unwrap().pslg).is_empty());
}
