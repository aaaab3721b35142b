//! Eigenvalue drop of the pipe under attachment of thin tubes, and the scale-invariant ratio
//! ρ = inradius² · λ₁ of the perturbed domains.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{normal_derivative_trace, richardson_first_order, FeFunction};
use crate::geometry::{attach_perturbation_tubes, inradius_of_spec, perturbation_centers, truncate, DomainSpec, Point2};
use crate::mesh::{triangulate_with, Mesh, MeshOptions};
use crate::spectra::{par_map, solve_eigs_with, solve_on_mesh, SolveOptions};
use crate::torsion::{drop_sigma_tubes, tube_mesh_options, TorsionSolver};

/// Sampled outward normal derivative of u₁ along the upper wall y = 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FProfile {
    pub x: Vec<f64>,
    /// One-sided trace on the coarse mesh.
    pub f: Vec<f64>,
    pub f_fine: Vec<f64>,
    /// 2 f_fine − f; used by [`FProfile::eval`].
    pub f_richardson: Vec<f64>,
    /// λ₁ on the coarse and fine meshes.
    pub lambda1: [f64; 2],
    pub r: f64,
    pub h: f64,
}

impl FProfile {
    /// Piecewise-linear interpolation of the extrapolated trace; constant beyond the ends.
    pub fn eval(&self, x: f64) -> f64 {
        let (xs, ys) = (&self.x, &self.f_richardson);
        let n = xs.len();
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[n - 1] {
            return ys[n - 1];
        }
        let i = xs.partition_point(|&v| v <= x).min(n - 1);
        let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        ys[i - 1] + t * (ys[i] - ys[i - 1])
    }

    /// 𝔪 = min f² over the sampled range.
    pub fn min_sq(&self) -> f64 {
        self.f_richardson.iter().map(|v| v * v).fold(f64::INFINITY, f64::min)
    }

    /// Σ f(p_i)² over the junction points of n tubes.
    pub fn junction_sum(&self, n: usize) -> f64 {
        perturbation_centers(n).iter().map(|&c| self.eval(c).powi(2)).sum()
    }

    /// Richardson extrapolation of λ₁ in h².
    pub fn lambda1_extrapolated(&self) -> f64 {
        (4.0 * self.lambda1[1] - self.lambda1[0]) / 3.0
    }
}

/// Uniform sample abscissae on [a, b].
pub fn profile_samples(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1).max(1) as f64).collect()
}

/// Trace of ∂u/∂x₂ on the wall segment (0,1)–(r,1) from a coarse and a refined solution.
pub fn normal_derivative_profile(coarse: &FeFunction, fine: &FeFunction, r: f64, xs: &[f64]) -> Result<FProfile> {
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) || xs[0] <= 0.0 || *xs.last().unwrap() >= r {
        return Err(Error::Parameter(format!("samples must increase inside (0, {r})")));
    }
    let (a, b) = (Point2::new(0.0, 1.0), Point2::new(r, 1.0));
    let pts: Vec<Point2> = xs.iter().map(|&x| Point2::new(x, 1.0)).collect();
    let f = normal_derivative_trace(coarse, a, b, &pts)?;
    let f_fine = normal_derivative_trace(fine, a, b, &pts)?;
    Ok(FProfile {
        x: xs.to_vec(),
        f_richardson: richardson_first_order(&f, &f_fine),
        f,
        f_fine,
        lambda1: [0.0; 2],
        r,
        h: coarse.mesh.h_target,
    })
}

/// Parameters shared by the perturbation computations.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbOptions {
    /// Truncation of the infinite tubes.
    pub r: f64,
    /// Bulk edge length.
    pub h: f64,
    /// Local edge length over each thin tube, in units of ε.
    pub tube_factor: f64,
    pub tol: f64,
    pub seed: u64,
    /// Grid spacing of the inradius search.
    pub inradius_grid: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions { r: 6.0, h: 0.05, tube_factor: 0.25, tol: 1e-9, seed: 0, inradius_grid: 0.01 }
    }
}

/// u₁ of the unperturbed domain on a mesh of edge `h` and its uniform refinement, and the
/// trace profile at `xs`.
pub fn compute_f_profile(base: &DomainSpec, r: f64, h: f64, xs: &[f64], opts: &PerturbOptions) -> Result<FProfile> {
    let sopts = SolveOptions { seed: opts.seed, ..SolveOptions::new(1, opts.tol) };
    let coarse = solve_eigs_with(base, r, &MeshOptions::new(h), &sopts)?;
    let fine = solve_on_mesh(coarse.mesh.refine_uniform(), &base.name, r, &sopts)?;
    let mut p = normal_derivative_profile(&coarse.function(0), &fine.function(0), r, xs)?;
    p.lambda1 = [coarse.eigenvalues[0], fine.eigenvalues[0]];
    Ok(p)
}

/// Truncated mesh of `base` with n+1 tubes of half-width ε, graded to ε-scale at the tubes.
pub fn perturbed_mesh(base: &DomainSpec, n: usize, eps: f64, opts: &PerturbOptions) -> Result<(DomainSpec, Mesh)> {
    let spec = attach_perturbation_tubes(base, n, eps)?;
    let mopts = tube_mesh_options(opts.h, &perturbation_centers(n), eps, opts.tube_factor);
    let mesh = triangulate_with(&truncate(&spec, opts.r)?, &mopts)?;
    Ok((spec, mesh))
}

/// 𝐓_n^ε: thin torsional rigidity of the n+1 mouths with load f = ∂u₁/∂x₂.
pub fn thin_rigidity_t(base: &DomainSpec, n: usize, eps: f64, profile: &FProfile, opts: &PerturbOptions) -> Result<f64> {
    let (_, mesh) = perturbed_mesh(base, n, eps, opts)?;
    rigidity_on(&mesh, n, profile)
}

fn rigidity_on(mesh: &Mesh, n: usize, profile: &FProfile) -> Result<f64> {
    let ids: Vec<usize> = (0..=n).collect();
    Ok(TorsionSolver::new(mesh)?.solve(&ids, &|p| profile.eval(p.x))?.t)
}

/// One (n, ε) configuration on matched meshes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DropRow {
    pub n: usize,
    pub eps: f64,
    pub lambda1_pert: f64,
    /// λ₁ of the unperturbed domain on the same mesh with the tubes removed.
    pub lambda1_h: f64,
    pub drop: f64,
    pub drop_over_eps2: f64,
    pub t: f64,
    pub t_over_eps2: f64,
    /// drop ≥ (1 − slack)·T.
    pub bound_ok: bool,
    pub inradius2: f64,
    pub rho: f64,
    /// inradius(base)² · lambda1_h.
    pub rho_h: f64,
    pub vertices: usize,
}

/// Slack on the eigenvalue estimate λ(pert) ≤ λ(H) − T + o(T).
pub const BOUND_SLACK: f64 = 0.5;

/// Matched-mesh drop λ₁(H) − λ₁(H_n^ε) for every (n, ε).
pub fn eigen_drop_study(base: &DomainSpec, ns: &[usize], eps: &[f64], profile: &FProfile, opts: &PerturbOptions) -> Result<Vec<DropRow>> {
    if eps.is_empty() || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Parameter(format!("eps schedule {eps:?} must be strictly decreasing")));
    }
    let r_base = inradius_of_spec(base, opts.inradius_grid, 40)?.radius;
    let cases: Vec<(usize, f64)> = ns.iter().flat_map(|&n| eps.iter().map(move |&e| (n, e))).collect();
    let sopts = SolveOptions { seed: opts.seed, ..SolveOptions::new(1, opts.tol) };
    par_map(&cases, |&(n, e)| -> Result<DropRow> {
        let (spec, mesh) = perturbed_mesh(base, n, e, opts)?;
        let ids: Vec<usize> = (0..=n).collect();
        let sub = drop_sigma_tubes(&spec, &mesh, &ids, &[])?;
        let t = rigidity_on(&mesh, n, profile)?;
        let vertices = mesh.num_vertices();
        let lp = solve_on_mesh(mesh, &spec.name, opts.r, &sopts)?.eigenvalues[0];
        let lh = solve_on_mesh(sub, &base.name, opts.r, &sopts)?.eigenvalues[0];
        let ir = inradius_of_spec(&spec, opts.inradius_grid, 40)?.radius;
        let drop = lh - lp;
        Ok(DropRow {
            n,
            eps: e,
            lambda1_pert: lp,
            lambda1_h: lh,
            drop,
            drop_over_eps2: drop / (e * e),
            t,
            t_over_eps2: t / (e * e),
            bound_ok: drop >= (1.0 - BOUND_SLACK) * t,
            inradius2: ir * ir,
            rho: ir * ir * lp,
            rho_h: r_base * r_base * lh,
            vertices,
        })
    })
    .into_iter()
    .collect()
}

/// Least-squares fits over the ε rows of one n.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DropFit {
    pub n: usize,
    /// Slope of drop against ε² through the origin.
    pub slope: f64,
    /// α Σ f(p_i)².
    pub predicted: f64,
    pub ratio: f64,
    /// slope ≥ 0.9 · predicted.
    pub pass: bool,
    /// (ρ − ρ_H)/ε² per row.
    pub rho_slopes: Vec<f64>,
    /// Slope of ρ − ρ_H against ε² through the origin.
    pub rho_slope: f64,
}

fn slope_through_origin(x: &[f64], y: &[f64]) -> f64 {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    sxy / sxx
}

/// Groups rows by n (in first-seen order) and fits each group.
pub fn fit_drops(rows: &[DropRow], profile: &FProfile, alpha: f64) -> Vec<DropFit> {
    let mut ns: Vec<usize> = Vec::new();
    for r in rows {
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    ns.into_iter()
        .map(|n| {
            let g: Vec<&DropRow> = rows.iter().filter(|r| r.n == n).collect();
            let e2: Vec<f64> = g.iter().map(|r| r.eps * r.eps).collect();
            let slope = slope_through_origin(&e2, &g.iter().map(|r| r.drop).collect::<Vec<_>>());
            let predicted = alpha * profile.junction_sum(n);
            let drho: Vec<f64> = g.iter().map(|r| r.rho - r.rho_h).collect();
            DropFit {
                n,
                slope,
                predicted,
                ratio: slope / predicted,
                pass: slope >= 0.9 * predicted,
                rho_slopes: drho.iter().zip(&e2).map(|(d, e)| d / e).collect(),
                rho_slope: slope_through_origin(&e2, &drho),
            }
        })
        .collect()
}

/// n₀ = ⌈λ(1 + 2r²) / (2α𝔪r²)⌉.
pub fn choose_n0(lambda: f64, r: f64, alpha: f64, m: f64) -> Result<usize> {
    for (name, v) in [("lambda", lambda), ("r", r), ("alpha", alpha), ("m", m)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("{name} = {v} must be positive")));
        }
    }
    let q = lambda * (1.0 + 2.0 * r * r) / (2.0 * alpha * m * r * r);
    // guard against q = 6.000000000000001 from rounding
    let c = (q * (1.0 - 1e-12)).ceil();
    Ok(c.max(1.0) as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// ρ decreases with ε² at n₀ for every ε.
    Reproduced,
    /// ρ increases with ε² at n₀ for every ε.
    NotReproduced,
    /// n₀ was not studied or the ε rows disagree in sign.
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Reproduced => "reproduced",
            Verdict::NotReproduced => "not_reproduced",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Summary of the perturbation study.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    pub lambda1_h: f64,
    pub inradius_h: f64,
    pub rho_h: f64,
    pub alpha: f64,
    pub m_min: f64,
    pub n0: usize,
    /// Largest ε admissible with n₀ tubes.
    pub n0_eps_limit: f64,
    pub profile: FProfile,
    pub rows: Vec<DropRow>,
    pub fits: Vec<DropFit>,
    /// Largest |inradius² − (1+ε²)²/4| over the rows.
    pub inradius_error: f64,
    /// Largest spread of inradius² across n at fixed ε.
    pub inradius_spread: f64,
    /// Smallest n at which the measured drop coefficient, scaled by the fit ratio of the
    /// largest studied n, exceeds 2λ₁(H) (the point where ρ starts to decrease).
    pub n_star: Option<usize>,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

impl PerturbationReport {
    /// Columns n,eps,lambda1_pert,drop,drop_over_eps2,T,T_over_eps2,inradius2,rho,verdict.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,eps,lambda1_pert,drop,drop_over_eps2,T,T_over_eps2,inradius2,rho,verdict\n");
        for r in &self.rows {
            s += &format!(
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                r.n,
                r.eps,
                r.lambda1_pert,
                r.drop,
                r.drop_over_eps2,
                r.t,
                r.t_over_eps2,
                r.inradius2,
                r.rho,
                self.verdict.as_str()
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

const N_STAR_MAX: usize = 100_000;

/// Decides whether ρ decreases at n₀; rows are the output of [`eigen_drop_study`].
pub fn rho_verdict(profile: &FProfile, alpha: f64, inradius_h: f64, rows: Vec<DropRow>) -> Result<PerturbationReport> {
    if rows.is_empty() {
        return Err(Error::Parameter("no study rows".into()));
    }
    let lambda = profile.lambda1_extrapolated();
    let m_min = profile.min_sq();
    let n0 = choose_n0(lambda, inradius_h, alpha, m_min)?;
    let fits = fit_drops(&rows, profile, alpha);
    let mut diagnostics = Vec::new();

    let inradius_error = rows.iter().map(|r| (r.inradius2 - (1.0 + r.eps * r.eps).powi(2) / 4.0).abs()).fold(0.0, f64::max);
    let mut inradius_spread = 0.0f64;
    for a in &rows {
        for b in rows.iter().filter(|b| b.eps == a.eps) {
            inradius_spread = inradius_spread.max((a.inradius2 - b.inradius2).abs());
        }
    }

    let widest = fits.iter().max_by_key(|f| f.n).unwrap();
    let q = widest.ratio;
    let n_star = (q > 0.0)
        .then(|| (1..=N_STAR_MAX).find(|&n| q * alpha * profile.junction_sum(n) > 2.0 * lambda))
        .flatten();

    let verdict = match fits.iter().find(|f| f.n == n0) {
        Some(f) if f.rho_slopes.iter().all(|&s| s < 0.0) => Verdict::Reproduced,
        Some(f) if f.rho_slopes.iter().all(|&s| s > 0.0) => Verdict::NotReproduced,
        Some(f) => {
            diagnostics.push(format!("rho slopes at n0 = {n0} disagree in sign: {:?}", f.rho_slopes));
            Verdict::Inconclusive
        }
        None => {
            let max_eps = rows.iter().map(|r| r.eps).fold(0.0, f64::max);
            diagnostics.push(format!(
                "n0 = {n0} needs eps < {:.3e}, below the studied schedule (largest eps {max_eps})",
                0.5 / n0 as f64
            ));
            diagnostics.push(format!(
                "largest studied n = {}: drop/eps^2 = {:.4}, rho slope = {:.4} (sign {})",
                widest.n,
                widest.slope,
                widest.rho_slope,
                if widest.rho_slope < 0.0 { "negative" } else { "positive" }
            ));
            diagnostics.push(format!(
                "rho decreases once drop/eps^2 > 2 lambda1 = {:.4}; extrapolated n* = {}",
                2.0 * lambda,
                n_star.map_or("none".to_string(), |n| n.to_string())
            ));
            Verdict::Inconclusive
        }
    };

    Ok(PerturbationReport {
        lambda1_h: lambda,
        inradius_h,
        rho_h: inradius_h * inradius_h * lambda,
        alpha,
        m_min,
        n0,
        n0_eps_limit: 0.5 / n0 as f64,
        profile: profile.clone(),
        rows,
        fits,
        inradius_error,
        inradius_spread,
        n_star,
        verdict,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_hersch_pipe;
    use proptest::prelude::*;

    fn profile(h: f64) -> FProfile {
        let base = build_hersch_pipe(64).unwrap();
        compute_f_profile(&base, 6.0, h, &profile_samples(1.0, 4.0, 31), &PerturbOptions::default()).unwrap()
    }

    #[test]
    fn n0_formula() {
        assert_eq!(choose_n0(8.0, 0.5, 1.0, 4.0).unwrap(), 6);
        assert_eq!(choose_n0(8.0, 0.5, 1.0, 8.0).unwrap(), 3);
        assert!(choose_n0(8.0, 0.5, 0.0, 4.0).is_err());
        assert!(choose_n0(8.0, 0.5, 1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn n0_halves_with_m(l in 1.0f64..20.0, r in 0.1f64..2.0, a in 0.1f64..2.0, m in 0.01f64..5.0) {
            let q = |m: f64| l * (1.0 + 2.0 * r * r) / (2.0 * a * m * r * r);
            prop_assert!((q(2.0 * m) - 0.5 * q(m)).abs() <= 1e-12 * q(m));
            prop_assert!(choose_n0(l, r, a, 2.0 * m).unwrap() <= choose_n0(l, r, a, m).unwrap());
        }
    }

    #[test]
    fn profile_sign_decay_linearity() {
        let p = profile(0.1);
        assert!(p.f_richardson.iter().all(|&v| v < 0.0), "{:?}", p.f_richardson);
        assert!(p.f.iter().all(|&v| v < 0.0));
        assert!(p.eval(4.0).abs() < p.eval(2.0).abs());
        // Richardson moves the coarse trace toward the fine one
        let i = p.x.iter().position(|&x| x == 2.0).unwrap();
        assert!((p.f_richardson[i] - p.f_fine[i]).abs() < (p.f[i] - p.f_fine[i]).abs() + 1e-3);
        assert!(p.lambda1[1] < p.lambda1[0]);
        assert!(p.min_sq() > 0.0);

        let base = build_hersch_pipe(64).unwrap();
        let sol = solve_eigs_with(&base, 6.0, &MeshOptions::new(0.2), &SolveOptions::new(1, 1e-10)).unwrap();
        let fine = solve_on_mesh(sol.mesh.refine_uniform(), "hersch", 6.0, &SolveOptions::new(1, 1e-10)).unwrap();
        let (u, v) = (sol.function(0), fine.function(0));
        let xs = [1.5, 2.5];
        let a = normal_derivative_profile(&u, &v, 6.0, &xs).unwrap();
        let b = normal_derivative_profile(&u.scaled(2.0), &v.scaled(2.0), 6.0, &xs).unwrap();
        for (x, y) in a.f_richardson.iter().zip(&b.f_richardson) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        assert!(normal_derivative_profile(&u, &v, 6.0, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn drop_rows_small() {
        let base = build_hersch_pipe(64).unwrap();
        let p = profile(0.1);
        let opts = PerturbOptions { h: 0.1, ..PerturbOptions::default() };
        let rows = eigen_drop_study(&base, &[0, 3], &[0.1, 0.05], &p, &opts).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.drop > 0.0, "{r:?}");
            assert!(r.t > 0.0 && r.t <= 2.0 * (r.n + 1) as f64 * r.eps * r.eps * p.eval(1.0).powi(2));
            assert!((r.inradius2 - (1.0 + r.eps * r.eps).powi(2) / 4.0).abs() < 1e-6, "{r:?}");
        }
        // more tubes at the same ε lower λ₁ further
        assert!(rows[2].drop > rows[0].drop && rows[3].drop > rows[1].drop);
        let t_ratio = rows[1].t / rows[0].t;
        assert!(t_ratio > 0.2 && t_ratio < 0.3, "T ratio {t_ratio}");

        let rep = rho_verdict(&p, 0.6365, 0.5, rows).unwrap();
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!(rep.n0 > 3 && !rep.diagnostics.is_empty());
        assert!(rep.n_star.is_some());
        let csv = rep.to_csv();
        assert!(csv.starts_with("n,eps,lambda1_pert,drop,"));
        assert_eq!(csv.lines().count(), 5);
        assert!(rep.to_json().contains("\"verdict\": \"inconclusive\""));
        assert!(eigen_drop_study(&base, &[1], &[0.05, 0.1], &p, &opts).is_err());
    }
}
