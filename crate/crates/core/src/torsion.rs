//! Thin torsional rigidity: Poisson problems with a line source on interior facets Σ.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, line_load_full, DofMap};
use crate::geometry::{
    attach_tubes_at, build_blowup_domain, truncate, DomainSpec, EdgeMarker, Point2, TubeSpec,
};
use crate::linalg::{cg_solve, dot, Ic0, SparseSym};
use crate::mesh::{triangulate_with, Mesh, MeshOptions, SizeZone};

const CG_TOL: f64 = 1e-13;

/// Maximizer U and value T = ∫_Σ f U of a thin torsion problem.
#[derive(Clone, Debug, PartialEq)]
pub struct TorsionResult {
    /// Nodal values at every vertex.
    pub values: Vec<f64>,
    /// bᵀU.
    pub t: f64,
    /// UᵀKU; equals `t` up to the solver tolerance.
    pub energy: f64,
    pub iterations: usize,
}

/// Stiffness matrix and preconditioner of a mesh, reused across loads.
pub struct TorsionSolver<'a> {
    pub mesh: &'a Mesh,
    pub dofs: DofMap,
    pub k: SparseSym,
    pc: Ic0,
}

impl<'a> TorsionSolver<'a> {
    pub fn new(mesh: &'a Mesh) -> Result<Self> {
        let dofs = DofMap::new(mesh);
        if dofs.is_empty() {
            return Err(Error::Assembly("mesh has no free vertices".into()));
        }
        let k = assemble_stiffness(mesh)?;
        let pc = Ic0::new(&k)?;
        Ok(TorsionSolver { mesh, dofs, k, pc })
    }

    /// Free-node load ∫_Σ f φ_i summed over the facets of `sigma_ids`.
    pub fn load(&self, sigma_ids: &[usize], f: &dyn Fn(Point2) -> f64) -> Result<Vec<f64>> {
        let mut full = vec![0.0; self.mesh.num_vertices()];
        for &id in sigma_ids {
            for (a, b) in full.iter_mut().zip(line_load_full(self.mesh, id, f)?) {
                *a += b;
            }
        }
        Ok(self.dofs.restrict(&full))
    }

    /// Solves K U = b for the Σ load of `f`.
    pub fn solve(&self, sigma_ids: &[usize], f: &dyn Fn(Point2) -> f64) -> Result<TorsionResult> {
        let b = self.load(sigma_ids, f)?;
        self.solve_load(&b)
    }

    pub fn solve_load(&self, b: &[f64]) -> Result<TorsionResult> {
        if b.iter().all(|&v| v == 0.0) {
            return Ok(TorsionResult { values: vec![0.0; self.mesh.num_vertices()], t: 0.0, energy: 0.0, iterations: 0 });
        }
        let sol = cg_solve(&self.k, b, CG_TOL, 20 * self.k.n + 1000, &self.pc)?;
        let t = dot(b, &sol.x);
        let energy = self.k.quad(&sol.x);
        Ok(TorsionResult { values: self.dofs.expand(&sol.x), t, energy, iterations: sol.iterations })
    }
}

/// One-shot thin torsion solve with load `f` on the facets of `sigma_ids`.
pub fn solve_thin_torsion(mesh: &Mesh, sigma_ids: &[usize], f: &dyn Fn(Point2) -> f64) -> Result<TorsionResult> {
    TorsionSolver::new(mesh)?.solve(sigma_ids, f)
}

/// Sharp discrete trace constant sup ∫_Σ φ² / ∫|∇φ|².
///
/// With G the Σ-block of K⁻¹ (the inverse Schur complement onto the Σ nodes) and B = L Lᵀ the
/// Σ trace mass matrix, γ is the largest eigenvalue of Lᵀ G L.
pub fn gamma_constant(mesh: &Mesh, sigma_ids: &[usize]) -> Result<f64> {
    let solver = TorsionSolver::new(mesh)?;
    let facets: Vec<(u32, u32)> =
        mesh.sigma_facets().filter(|(_, _, id)| sigma_ids.contains(id)).map(|(a, b, _)| (a, b)).collect();
    let length: f64 = facets.iter().map(|&(a, b)| mesh.vertices[a as usize].dist(mesh.vertices[b as usize])).sum();
    if !(length > 0.0) {
        return Err(Error::Parameter(format!("Σ facets {sigma_ids:?} have zero total length")));
    }
    let mut nodes: Vec<usize> = facets.iter().flat_map(|&(a, b)| [a, b]).filter_map(|v| solver.dofs.free(v)).collect();
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let pos = |i: usize| nodes.binary_search(&i).ok();
    let m = nodes.len();
    let mut b = nalgebra::DMatrix::<f64>::zeros(m, m);
    for &(a, c) in &facets {
        let len = mesh.vertices[a as usize].dist(mesh.vertices[c as usize]);
        let ids = [solver.dofs.free(a).and_then(pos), solver.dofs.free(c).and_then(pos)];
        for (x, ix) in ids.iter().enumerate() {
            for (y, iy) in ids.iter().enumerate() {
                if let (Some(i), Some(j)) = (ix, iy) {
                    b[(*i, *j)] += len / 6.0 * if x == y { 2.0 } else { 1.0 };
                }
            }
        }
    }
    let cols: Vec<Vec<f64>> = crate::spectra::par_map(&nodes, |&i| {
        let mut e = vec![0.0; solver.k.n];
        e[i] = 1.0;
        cg_solve(&solver.k, &e, CG_TOL, 20 * solver.k.n + 1000, &solver.pc).map(|s| s.x)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let g = nalgebra::DMatrix::from_fn(m, m, |i, j| 0.5 * (cols[j][nodes[i]] + cols[i][nodes[j]]));
    let l = nalgebra::Cholesky::new(b)
        .ok_or_else(|| Error::RankDeficient("Σ trace mass matrix is not positive definite".into()))?
        .l();
    let a = l.transpose() * g * &l;
    let a = 0.5 * (&a + a.transpose());
    Ok(a.symmetric_eigenvalues().max())
}

/// Comparison of T(Σ; |f|) with the sum of the single-facet values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuperadditivityReport {
    pub total: f64,
    /// T on Ω ∪ T_i (other Σ-tubes removed) with load on Σ_i only.
    pub singles: Vec<f64>,
    /// total − Σ singles.
    pub margin: f64,
    pub relative_margin: f64,
}

/// The finite tube of `spec` whose mouth is the Σ_i segment.
pub fn sigma_tube(spec: &DomainSpec, sigma: usize) -> Result<&TubeSpec> {
    let e = spec
        .core
        .edges
        .iter()
        .find(|e| e.2 == EdgeMarker::Sigma(sigma))
        .ok_or_else(|| Error::Parameter(format!("domain has no Σ_{sigma}")))?;
    let (a, b) = spec.core.segment(e);
    let mid = a.lerp(b, 0.5);
    spec.tubes
        .iter()
        .find(|t| !t.is_infinite() && t.origin().dist(mid) < 1e-12)
        .ok_or_else(|| Error::Parameter(format!("no tube is attached at Σ_{sigma}")))
}

/// Submesh without the Σ-tubes whose ids are not in `keep`; the dropped mouths become Dirichlet.
pub fn drop_sigma_tubes(spec: &DomainSpec, mesh: &Mesh, all: &[usize], keep: &[usize]) -> Result<Mesh> {
    let gone: Vec<&TubeSpec> =
        all.iter().filter(|i| !keep.contains(i)).map(|&i| sigma_tube(spec, i)).collect::<Result<_>>()?;
    mesh.submesh(|p| {
        gone.iter().all(|t| {
            let (s, tr) = t.frame_coords(p);
            !(s > 0.0 && tr.abs() < 0.5 * t.width)
        })
    })
}

/// Superadditivity of the thin torsional rigidity on the matched submeshes of `mesh`.
pub fn superadditivity_check(spec: &DomainSpec, mesh: &Mesh, sigma_ids: &[usize], f: &dyn Fn(Point2) -> f64) -> Result<SuperadditivityReport> {
    if sigma_ids.is_empty() {
        return Err(Error::Parameter("need at least one Σ".into()));
    }
    let g = |p: Point2| f(p).abs();
    let total = solve_thin_torsion(mesh, sigma_ids, &g)?.t;
    let singles = sigma_ids
        .iter()
        .map(|&i| {
            let sub = drop_sigma_tubes(spec, mesh, sigma_ids, &[i])?;
            Ok(solve_thin_torsion(&sub, &[i], &g)?.t)
        })
        .collect::<Result<Vec<f64>>>()?;
    let margin = total - singles.iter().sum::<f64>();
    Ok(SuperadditivityReport { total, singles, margin, relative_margin: margin / total.abs().max(f64::MIN_POSITIVE) })
}

/// Mesh options for a base domain with thin tubes of half-width ε at `centers` on y = 1:
/// edge length `factor`·ε over each tube and half of that along each Σ.
pub fn tube_mesh_options(h: f64, centers: &[f64], eps: f64, factor: f64) -> MeshOptions {
    let mut opts = MeshOptions::new(h);
    for &c in centers {
        opts = opts
            .with_zone(SizeZone::rect(c - eps, 1.0, c + eps, 2.0, factor * eps, 0.3))
            .with_zone(SizeZone::segment(Point2::new(c - eps, 1.0), Point2::new(c + eps, 1.0), 0.5 * factor * eps, 0.3));
    }
    opts
}

/// Blow-up study parameters.
#[derive(Clone, Debug)]
pub struct BlowupOptions {
    /// Increasing radii of the truncating half-disk.
    pub r_inf: Vec<f64>,
    /// Increasing tube lengths.
    pub tube_len: Vec<f64>,
    /// Largest edge length.
    pub h: f64,
    /// Edge length along Σ, graded away from it.
    pub h_sigma: f64,
    pub arc_segments: usize,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        BlowupOptions { r_inf: vec![8.0, 16.0, 32.0], tube_len: vec![4.0, 8.0], h: 2.0, h_sigma: 0.02, arc_segments: 128 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupRow {
    pub r_inf: f64,
    pub tube_len: f64,
    pub t: f64,
    pub vertices: usize,
}

/// Values on truncated half-plane-plus-tube domains and the extrapolated constant α.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupStudy {
    pub rows: Vec<BlowupRow>,
    /// α from the last two radii at the longest tube, assuming an R⁻² truncation error.
    pub alpha: f64,
    /// The same extrapolation from the first two radii.
    pub alpha_coarse: f64,
}

/// Mesh of the truncated blow-up domain.
pub fn blowup_mesh(r_inf: f64, tube_len: f64, opts: &BlowupOptions) -> Result<Mesh> {
    let spec = build_blowup_domain(r_inf, tube_len, opts.arc_segments)?;
    let (a, b) = (Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0));
    let mopts = MeshOptions::new(opts.h)
        .with_zone(SizeZone::segment(a, b, opts.h_sigma, 0.2))
        .with_zone(SizeZone::point(a, 0.25 * opts.h_sigma, 0.2))
        .with_zone(SizeZone::point(b, 0.25 * opts.h_sigma, 0.2));
    triangulate_with(&truncate(&spec, 0.0)?, &mopts)
}

/// T(Σ; 1) on the truncated blow-up domains, extrapolated in the truncation radius.
pub fn blow_up_constant(opts: &BlowupOptions) -> Result<BlowupStudy> {
    for (name, s) in [("r_inf", &opts.r_inf), ("tube_len", &opts.tube_len)] {
        if s.is_empty() || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter(format!("{name} schedule {s:?} must be strictly increasing")));
        }
    }
    if opts.r_inf.len() < 2 {
        return Err(Error::Parameter("need at least two radii to extrapolate".into()));
    }
    let cases: Vec<(f64, f64)> =
        opts.tube_len.iter().flat_map(|&l| opts.r_inf.iter().map(move |&r| (r, l))).collect();
    let rows = crate::spectra::par_map(&cases, |&(r, l)| -> Result<BlowupRow> {
        let mesh = blowup_mesh(r, l, opts)?;
        let t = solve_thin_torsion(&mesh, &[0], &|_| 1.0)?.t;
        Ok(BlowupRow { r_inf: r, tube_len: l, t, vertices: mesh.num_vertices() })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let l_max = *opts.tube_len.last().unwrap();
    let last: Vec<&BlowupRow> = rows.iter().filter(|r| r.tube_len == l_max).collect();
    if last.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Extrapolation(format!("T is not increasing in the radius: {rows:?}")));
    }
    let extrap = |a: &BlowupRow, b: &BlowupRow| {
        let (ra, rb) = (a.r_inf * a.r_inf, b.r_inf * b.r_inf);
        (rb * b.t - ra * a.t) / (rb - ra)
    };
    let n = last.len();
    Ok(BlowupStudy { alpha: extrap(last[n - 2], last[n - 1]), alpha_coarse: extrap(last[0], last[1]), rows })
}

/// One ε of the single-tube scaling study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub t: f64,
    pub t_over_eps2: f64,
    pub gamma: f64,
    /// T ≤ γ ‖f‖²_∞ |Σ|.
    pub bound_ok: bool,
    pub vertices: usize,
}

/// Single tube of half-width ε at abscissa `p_x` on the upper wall of `base`, load `f` on Σ.
pub fn epsilon_scaling_study(
    base: &DomainSpec,
    p_x: f64,
    f: &(dyn Fn(Point2) -> f64 + Sync),
    eps: &[f64],
    h: f64,
    r: f64,
    factor: f64,
) -> Result<Vec<EpsRow>> {
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Parameter(format!("eps schedule {eps:?} must decrease")));
    }
    crate::spectra::par_map(eps, |&e| -> Result<EpsRow> {
        let spec = attach_tubes_at(base, &[p_x], e)?;
        let mesh = triangulate_with(&truncate(&spec, r)?, &tube_mesh_options(h, &[p_x], e, factor))?;
        let res = solve_thin_torsion(&mesh, &[0], f)?;
        let gamma = gamma_constant(&mesh, &[0])?;
        let fmax = mesh
            .sigma_facets()
            .flat_map(|(a, b, _)| [a, b])
            .map(|v| f(mesh.vertices[v as usize]).abs())
            .fold(0.0, f64::max);
        Ok(EpsRow {
            eps: e,
            t: res.t,
            t_over_eps2: res.t / (e * e),
            gamma,
            bound_ok: res.t <= gamma * fmax * fmax * 2.0 * e * (1.0 + 1e-9),
            vertices: mesh.num_vertices(),
        })
    })
    .into_iter()
    .collect()
}

/// Columns eps,R_inf,L,T,T_over_eps2,gamma,bound_ok.
pub fn torsion_csv(rows: &[EpsRow], r: f64) -> String {
    let mut s = String::from("eps,R_inf,L,T,T_over_eps2,gamma,bound_ok\n");
    for row in rows {
        s += &format!(
            "{},{},1,{:.12e},{:.12e},{:.12e},{}\n",
            row.eps, r, row.t, row.t_over_eps2, row.gamma, row.bound_ok
        );
    }
    s
}

/// Columns eps,R_inf,L,T,T_over_eps2,gamma,bound_ok for the blow-up rows (ε = 1).
pub fn blowup_csv(study: &BlowupStudy) -> String {
    let mut s = String::from("eps,R_inf,L,T,T_over_eps2,gamma,bound_ok\n");
    for r in &study.rows {
        s += &format!("1,{},{},{:.12e},{:.12e},,\n", r.r_inf, r.tube_len, r.t, r.t);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{attach_perturbation_tubes, build_hersch_pipe};

    fn h1(eps: f64) -> (DomainSpec, Mesh) {
        let spec = attach_perturbation_tubes(&build_hersch_pipe(64).unwrap(), 1, eps).unwrap();
        let mesh = triangulate_with(&truncate(&spec, 5.0).unwrap(), &tube_mesh_options(0.1, &[2.0, 3.0], eps, 0.25)).unwrap();
        (spec, mesh)
    }

    #[test]
    fn value_identity_symmetry_homogeneity() {
        let (_, mesh) = h1(0.05);
        let s = TorsionSolver::new(&mesh).unwrap();
        let f = |p: Point2| 1.0 + 0.3 * p.x;
        let r = s.solve(&[0, 1], &f).unwrap();
        assert!(r.t > 0.0);
        assert!((r.t - r.energy).abs() <= 1e-8 * r.t);
        let neg = s.solve(&[0, 1], &|p| -f(p)).unwrap();
        assert!((neg.t - r.t).abs() <= 1e-12 * r.t);
        let dbl = s.solve(&[0, 1], &|p| 2.0 * f(p)).unwrap();
        assert!((dbl.t - 4.0 * r.t).abs() <= 1e-10 * r.t);
        let zero = s.solve(&[0, 1], &|_| 0.0).unwrap();
        assert_eq!(zero.t, 0.0);
        assert!(zero.values.iter().all(|&v| v == 0.0));
        // enlarging Σ with f ≥ 0 cannot decrease T
        assert!(s.solve(&[0], &f).unwrap().t < r.t);
    }

    #[test]
    fn gamma_bounds() {
        let eps = 0.05;
        let (_, mesh) = h1(eps);
        let g = gamma_constant(&mesh, &[0, 1]).unwrap();
        assert!(g > 0.0 && g <= 1.05 * eps, "gamma {g}");
        let r = solve_thin_torsion(&mesh, &[0, 1], &|_| 1.0).unwrap();
        assert!(r.t <= g * 4.0 * eps * (1.0 + 1e-9));
        assert!(gamma_constant(&mesh, &[5]).is_err());
    }

    #[test]
    fn superadditivity_two_tubes() {
        let (spec, mesh) = h1(0.05);
        let rep = superadditivity_check(&spec, &mesh, &[0, 1], &|_| 1.0).unwrap();
        assert!(rep.margin >= 0.0, "{rep:?}");
        let single = superadditivity_check(&spec, &mesh, &[0], &|_| 1.0).unwrap();
        assert!(single.margin.abs() <= 1e-12 * single.total);
    }

    #[test]
    fn blowup_small() {
        let opts = BlowupOptions { r_inf: vec![4.0, 8.0], tube_len: vec![4.0], h: 1.0, h_sigma: 0.1, arc_segments: 64 };
        let st = blow_up_constant(&opts).unwrap();
        assert!(st.rows[1].t > st.rows[0].t && st.alpha > st.rows[1].t);
        assert!(st.alpha > 0.5 && st.alpha < 0.8, "alpha {}", st.alpha);
        assert!(blow_up_constant(&BlowupOptions { r_inf: vec![8.0, 4.0], ..opts }).is_err());
    }
}
