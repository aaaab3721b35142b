use super::*;
use crate::geometry::{build_hersch_pipe, build_infinite_cross, build_polygon};
use std::f64::consts::PI;

fn unit_square() -> DomainSpec {
    let p = Point2::new;
    build_polygon("square", vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]).unwrap()
}

#[test]
fn unit_square_spectrum() {
    let sol = solve_eigs(&unit_square(), 0.0, 1.0 / 16.0, 4, 1e-9).unwrap();
    let exact = [2.0, 5.0, 5.0, 8.0].map(|c| c * PI * PI);
    for (l, e) in sol.eigenvalues.iter().zip(exact) {
        assert!(*l >= e && (l - e) / e < 0.03, "{l} vs {e}");
    }
    assert!(sol.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    let u = sol.function(0);
    assert!((crate::fem::l2_norm(&u) - 1.0).abs() < 1e-8);
    assert!(u.values.iter().all(|&v| v >= -1e-12));
    assert_eq!(sol.provenance.vertices, sol.mesh.num_vertices());
}

#[test]
fn square_mesh_convergence() {
    let c = mesh_convergence(&unit_square(), 0.0, &MeshOptions::new(1.0 / 8.0), 3, 1).unwrap();
    let exact = 2.0 * PI * PI;
    assert!(c.lambdas.windows(2).all(|w| w[1][0] < w[0][0]));
    assert!(c.order[0] > 1.7 && c.order[0] < 2.3, "order {}", c.order[0]);
    assert!((c.extrapolated[0] - exact).abs() / exact < 1e-3);
    assert!(mesh_convergence(&unit_square(), 0.0, &MeshOptions::new(0.25), 2, 1).is_err());
}

#[test]
fn hersch_exhaustion_is_monotone() {
    let spec = build_hersch_pipe(64).unwrap();
    let s = exhaustion_study(&spec, &ExhaustionOptions::new(vec![3.0, 4.0, 5.0], 0.1, 1)).unwrap();
    assert!(s.lambdas.windows(2).all(|w| w[1][0] <= w[0][0]));
    assert!(s.warnings.is_empty(), "{:?}", s.warnings);
    let lim = s.limit(0);
    assert!(lim > 0.6197 * 4.0 && lim < PI * PI);
    assert!(s.below_threshold[0] && s.margins[0] > 0.0);
    let csv = s.to_csv();
    assert!(csv.starts_with("R,h,j,lambda,residual,below_threshold,margin\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(exhaustion_study(&spec, &ExhaustionOptions::new(vec![4.0, 3.0], 0.1, 1)).is_err());
}

#[test]
fn cross_higher_eigenvalues() {
    let spec = build_infinite_cross();
    let opts = ExhaustionOptions::new(vec![3.0, 4.0, 5.0], 0.2, 2);
    let st = higher_eig_study(&spec, &opts).unwrap();
    assert!(st.orthonormality_error < 1e-10);
    for row in &st.study.lambdas {
        assert!(row[0] <= row[1]);
    }
    for j in 0..2 {
        assert!(st.study.lambdas.windows(2).all(|w| w[1][j] <= w[0][j]));
    }
    assert!(st.study.limit(0) < PI * PI / 4.0);
    assert_eq!(st.discrepancies.len(), 2);
    assert!(st.discrepancies[1][0].value() < st.discrepancies[0][0].value());
}

#[test]
fn par_map_keeps_order() {
    let v: Vec<u64> = (0..37).collect();
    assert_eq!(par_map(&v, |x| x * x), v.iter().map(|x| x * x).collect::<Vec<_>>());
}
