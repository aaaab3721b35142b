//! Eigenvalue drivers: single solves, exhaustion in the truncation radius, mesh convergence.

mod extrapolate;

use serde::Serialize;

pub use extrapolate::{exponential_tail, ExponentialFit};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass_full, AssembledSystem, DofMap, FeFunction};
use crate::geometry::{threshold_energy, truncate_with, DomainSpec, Point2, TruncateOptions};
use crate::linalg::{dot, lobpcg, threads, LobpcgOptions, LobpcgPrecond};
use crate::mesh::{triangulate_with, Mesh, MeshOptions, SizeZone};

/// Where an eigen solve came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub domain: String,
    pub r: f64,
    pub h: f64,
    pub vertices: usize,
    pub free: usize,
    pub triangles: usize,
    pub iterations: usize,
    pub seed: u64,
}

/// Eigenpairs on a mesh. Eigenvectors are nodal values at every vertex (zero on the boundary),
/// L²-orthonormal, with the largest-magnitude entry positive.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub provenance: Provenance,
}

impl EigenSolution {
    pub fn function(&self, j: usize) -> FeFunction<'_> {
        FeFunction { mesh: &self.mesh, values: self.eigenvectors[j].clone() }
    }
}

/// Knobs of a single eigen solve.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub precond: LobpcgPrecond,
    pub max_iter: usize,
}

impl SolveOptions {
    pub fn new(k: usize, tol: f64) -> Self {
        SolveOptions { k, tol, seed: 0, precond: LobpcgPrecond::Ic0, max_iter: 1000 }
    }
}

/// Lowest `opts.k` Dirichlet eigenpairs of the P1 discretization on `mesh`.
pub fn solve_on_mesh(mesh: Mesh, domain: &str, r: f64, opts: &SolveOptions) -> Result<EigenSolution> {
    let sys = AssembledSystem::new(&mesh)?;
    let lo = LobpcgOptions {
        k: opts.k,
        tol: opts.tol,
        max_iter: opts.max_iter,
        seed: opts.seed,
        precond: opts.precond,
        ..LobpcgOptions::new(opts.k)
    };
    let res = lobpcg(&sys.k, &sys.m, &lo)?;
    let provenance = Provenance {
        domain: domain.to_string(),
        r,
        h: mesh.h_target,
        vertices: mesh.num_vertices(),
        free: sys.dofs.len(),
        triangles: mesh.triangles.len(),
        iterations: res.iterations,
        seed: opts.seed,
    };
    let eigenvectors = res.eigenvectors.iter().map(|x| sys.dofs.expand(x)).collect();
    Ok(EigenSolution {
        mesh,
        dofs: sys.dofs,
        eigenvalues: res.eigenvalues,
        eigenvectors,
        residuals: res.residuals,
        provenance,
    })
}

/// Truncate at `r`, mesh with edge length `h`, assemble, and solve for `k` eigenpairs.
pub fn solve_eigs(spec: &DomainSpec, r: f64, h: f64, k: usize, tol: f64) -> Result<EigenSolution> {
    solve_eigs_with(spec, r, &MeshOptions::new(h), &SolveOptions::new(k, tol))
}

/// [`solve_eigs`] with explicit mesh and solver options.
pub fn solve_eigs_with(spec: &DomainSpec, r: f64, mesh: &MeshOptions, opts: &SolveOptions) -> Result<EigenSolution> {
    let dom = truncate_with(spec, r, &TruncateOptions::default())?;
    let mesh = triangulate_with(&dom, mesh)?;
    solve_on_mesh(mesh, &spec.name, r, opts)
}

/// Runs `f` on every item with up to [`threads`] workers; results keep the input order.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let workers = threads().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<U>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let u = f(&items[i]);
                results.lock().unwrap()[i] = Some(u);
            });
        }
    });
    slots.into_iter().map(|u| u.expect("every item processed")).collect()
}

/// Exhaustion study parameters.
#[derive(Clone, Debug)]
pub struct ExhaustionOptions {
    /// Increasing truncation radii.
    pub r: Vec<f64>,
    pub h: f64,
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    /// Mesh the largest truncation once and cut it for the smaller radii.
    pub submesh: bool,
    pub zones: Vec<SizeZone>,
}

impl ExhaustionOptions {
    pub fn new(r: Vec<f64>, h: f64, k: usize) -> Self {
        ExhaustionOptions { r, h, k, tol: 1e-9, seed: 0, submesh: true, zones: vec![] }
    }
}

/// λ_j(Ω_R) over a schedule of truncation radii.
#[derive(Clone, Debug, Serialize)]
pub struct ExhaustionStudy {
    pub domain: String,
    pub r: Vec<f64>,
    pub h: f64,
    /// `lambdas[i][j]` = λ_{j+1}(Ω_{r[i]}).
    pub lambdas: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub vertices: Vec<usize>,
    /// Extrapolated λ_j(Ω); `None` when the last three values are not geometric.
    pub extrapolated: Vec<Option<f64>>,
    /// Fitted exponential rate of the truncation error.
    pub rate: Vec<Option<f64>>,
    pub threshold: f64,
    pub below_threshold: Vec<bool>,
    /// E(Ω) − λ_j, from the extrapolated value when available.
    pub margins: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ExhaustionStudy {
    /// Best available estimate of λ_j(Ω).
    pub fn limit(&self, j: usize) -> f64 {
        self.extrapolated[j].unwrap_or_else(|| self.lambdas.last().unwrap()[j])
    }

    /// Columns R,h,j,lambda,residual,below_threshold,margin.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("R,h,j,lambda,residual,below_threshold,margin\n");
        for (i, r) in self.r.iter().enumerate() {
            for (j, l) in self.lambdas[i].iter().enumerate() {
                s += &format!(
                    "{},{},{},{:.12e},{:.3e},{},{:.12e}\n",
                    r,
                    self.h,
                    j + 1,
                    l,
                    self.residuals[i][j],
                    *l < self.threshold,
                    self.threshold - l
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("study serializes")
    }
}

/// Solutions of an exhaustion run, each with the parent index of its vertices in `full`.
pub(crate) struct ExhaustionRun {
    pub study: ExhaustionStudy,
    pub full: Option<Mesh>,
    pub solutions: Vec<(EigenSolution, Vec<u32>)>,
}

fn check_schedule(r: &[f64], what: &str) -> Result<()> {
    if r.is_empty() || r.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter(format!("{what} schedule {r:?} must be strictly increasing")));
    }
    Ok(())
}

/// Keeps points that are not beyond axial distance `r` in an infinite tube.
pub(crate) fn within_truncation(spec: &DomainSpec, r: f64) -> impl Fn(Point2) -> bool + '_ {
    move |p| {
        spec.infinite_tubes().all(|(_, t)| {
            let (s, tr) = t.frame_coords(p);
            !(s > r && tr.abs() < 0.5 * t.width)
        })
    }
}

pub(crate) fn run_exhaustion(spec: &DomainSpec, opts: &ExhaustionOptions) -> Result<ExhaustionRun> {
    check_schedule(&opts.r, "R")?;
    let e = threshold_energy(spec)?;
    let mopts = MeshOptions { zones: opts.zones.clone(), ..MeshOptions::new(opts.h) };
    let sopts = SolveOptions { seed: opts.seed, ..SolveOptions::new(opts.k, opts.tol) };
    let r_max = *opts.r.last().unwrap();
    let (full, solutions) = if opts.submesh {
        let cuts = TruncateOptions { tube_cuts: opts.r[..opts.r.len() - 1].to_vec(), interfaces: vec![] };
        let full = triangulate_with(&truncate_with(spec, r_max, &cuts)?, &mopts)?;
        let sols = par_map(&opts.r, |&r| -> Result<(EigenSolution, Vec<u32>)> {
            let (sub, map) = full.submesh_with_map(within_truncation(spec, r))?;
            Ok((solve_on_mesh(sub, &spec.name, r, &sopts)?, map))
        });
        (Some(full), sols.into_iter().collect::<Result<Vec<_>>>()?)
    } else {
        let sols = par_map(&opts.r, |&r| -> Result<(EigenSolution, Vec<u32>)> {
            let sol = solve_eigs_with(spec, r, &mopts, &sopts)?;
            let map = (0..sol.mesh.num_vertices() as u32).collect();
            Ok((sol, map))
        });
        (None, sols.into_iter().collect::<Result<Vec<_>>>()?)
    };

    let lambdas: Vec<Vec<f64>> = solutions.iter().map(|(s, _)| s.eigenvalues.clone()).collect();
    let mut warnings = Vec::new();
    for j in 0..opts.k {
        for i in 1..lambdas.len() {
            let (a, b) = (lambdas[i - 1][j], lambdas[i][j]);
            if b > a + 1e-6 * a.abs() {
                warnings.push(format!(
                    "lambda_{} increases from {a} at R = {} to {b} at R = {}",
                    j + 1,
                    opts.r[i - 1],
                    opts.r[i]
                ));
            }
        }
    }
    let mut extrapolated = Vec::with_capacity(opts.k);
    let mut rate = Vec::with_capacity(opts.k);
    for j in 0..opts.k {
        let n = opts.r.len();
        if n < 3 {
            extrapolated.push(None);
            rate.push(None);
            continue;
        }
        let rs = [opts.r[n - 3], opts.r[n - 2], opts.r[n - 1]];
        let ls = [lambdas[n - 3][j], lambdas[n - 2][j], lambdas[n - 1][j]];
        match exponential_tail(rs, ls) {
            Ok(fit) => {
                extrapolated.push(Some(fit.limit));
                rate.push(fit.rate);
            }
            Err(err) => {
                warnings.push(format!("lambda_{}: {err}", j + 1));
                extrapolated.push(None);
                rate.push(None);
            }
        }
    }
    let last = lambdas.last().unwrap();
    let best: Vec<f64> = (0..opts.k).map(|j| extrapolated[j].unwrap_or(last[j])).collect();
    let study = ExhaustionStudy {
        domain: spec.name.clone(),
        r: opts.r.clone(),
        h: opts.h,
        residuals: solutions.iter().map(|(s, _)| s.residuals.clone()).collect(),
        vertices: solutions.iter().map(|(s, _)| s.mesh.num_vertices()).collect(),
        lambdas,
        extrapolated,
        rate,
        threshold: e,
        below_threshold: best.iter().map(|&l| l < e).collect(),
        margins: best.iter().map(|&l| e - l).collect(),
        warnings,
    };
    Ok(ExhaustionRun { study, full, solutions })
}

/// λ_j(Ω_R) for every R of the schedule, with exponential extrapolation R → ∞.
pub fn exhaustion_study(spec: &DomainSpec, opts: &ExhaustionOptions) -> Result<ExhaustionStudy> {
    run_exhaustion(spec, opts).map(|r| r.study)
}

/// Eigenvalues on nested uniform refinements, with fitted order and extrapolation h → 0.
#[derive(Clone, Debug, Serialize)]
pub struct MeshConvergence {
    pub h: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
    /// Observed order from the last three levels, per j.
    pub order: Vec<f64>,
    pub extrapolated: Vec<f64>,
}

/// Solves on `levels` nested meshes (the initial mesh at `h0`, then uniform refinements).
pub fn mesh_convergence(spec: &DomainSpec, r: f64, mesh: &MeshOptions, levels: usize, k: usize) -> Result<MeshConvergence> {
    if levels < 3 {
        return Err(Error::Parameter(format!("mesh convergence needs at least 3 levels, got {levels}")));
    }
    let dom = truncate_with(spec, r, &TruncateOptions::default())?;
    let mut meshes = vec![triangulate_with(&dom, mesh)?];
    for _ in 1..levels {
        let next = meshes.last().unwrap().refine_uniform();
        meshes.push(next);
    }
    let sopts = SolveOptions::new(k, 1e-10);
    let sols = par_map(&meshes, |m| solve_on_mesh(m.clone(), &spec.name, r, &sopts).map(|s| s.eigenvalues));
    let lambdas = sols.into_iter().collect::<Result<Vec<_>>>()?;
    let n = levels;
    let mut order = Vec::with_capacity(k);
    let mut extrapolated = Vec::with_capacity(k);
    for j in 0..k {
        let (l1, l2, l3) = (lambdas[n - 3][j], lambdas[n - 2][j], lambdas[n - 1][j]);
        let p = ((l1 - l2) / (l2 - l3)).log2();
        order.push(p);
        extrapolated.push(if p.is_finite() && p > 0.0 { l3 - (l2 - l3) / (2f64.powf(p) - 1.0) } else { l3 });
    }
    let h = (0..levels).map(|i| mesh.h / 2f64.powi(i as i32)).collect();
    Ok(MeshConvergence { h, lambdas, order, extrapolated })
}

/// L² discrepancy between eigenvectors at consecutive truncation radii.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Discrepancy {
    /// ‖u_j(R_{i+1}) − u_j(R_i)‖ after sign alignment.
    Vector(f64),
    /// Sine of the largest principal angle between the eigenspaces of a cluster.
    SubspaceAngle(f64),
}

impl Discrepancy {
    pub fn value(self) -> f64 {
        match self {
            Discrepancy::Vector(v) | Discrepancy::SubspaceAngle(v) => v,
        }
    }
}

/// Exhaustion tables for several eigenvalues with an eigenvector convergence audit.
#[derive(Clone, Debug, Serialize)]
pub struct HigherEigStudy {
    pub study: ExhaustionStudy,
    /// `discrepancies[i][j]` compares R = r[i] with R = r[i+1].
    pub discrepancies: Vec<Vec<Discrepancy>>,
    /// Largest |⟨u_i, u_j⟩ − δ_ij| over all radii.
    pub orthonormality_error: f64,
}

/// Relative gap below which neighbouring eigenvalues are treated as one cluster.
const CLUSTER_GAP: f64 = 1e-4;

/// [`exhaustion_study`] for k ≥ 2 in submesh mode, comparing eigenvectors on the common mesh.
pub fn higher_eig_study(spec: &DomainSpec, opts: &ExhaustionOptions) -> Result<HigherEigStudy> {
    if opts.k < 2 {
        return Err(Error::Parameter("higher eigenvalue study needs k >= 2".into()));
    }
    let opts = ExhaustionOptions { submesh: true, ..opts.clone() };
    let run = run_exhaustion(spec, &opts)?;
    let full = run.full.as_ref().expect("submesh mode keeps the full mesh");
    let m = assemble_mass_full(full)?;
    let lift = |sol: &EigenSolution, map: &[u32], j: usize| {
        let mut v = vec![0.0; full.num_vertices()];
        for (i, &p) in map.iter().enumerate() {
            v[p as usize] = sol.eigenvectors[j][i];
        }
        v
    };
    let lifted: Vec<Vec<Vec<f64>>> =
        run.solutions.iter().map(|(s, map)| (0..opts.k).map(|j| lift(s, map, j)).collect()).collect();
    let mut orth: f64 = 0.0;
    for vs in &lifted {
        let mv: Vec<Vec<f64>> = vs.iter().map(|v| m.mul(v)).collect();
        for a in 0..vs.len() {
            for b in 0..vs.len() {
                let target = if a == b { 1.0 } else { 0.0 };
                orth = orth.max((dot(&vs[a], &mv[b]) - target).abs());
            }
        }
    }
    let mut discrepancies = Vec::new();
    for i in 0..lifted.len().saturating_sub(1) {
        let lam = &run.study.lambdas[i + 1];
        let (u, v) = (&lifted[i], &lifted[i + 1]);
        let mut row = Vec::with_capacity(opts.k);
        for j in 0..opts.k {
            let clustered = |a: usize, b: usize| (lam[a] - lam[b]).abs() < CLUSTER_GAP * lam[a].abs();
            let mut lo = j;
            while lo > 0 && clustered(lo - 1, lo) {
                lo -= 1;
            }
            let mut hi = j;
            while hi + 1 < opts.k && clustered(hi, hi + 1) {
                hi += 1;
            }
            if lo == hi {
                let mv = m.mul(&v[j]);
                let s = if dot(&u[j], &mv) < 0.0 { -1.0 } else { 1.0 };
                let d: Vec<f64> = u[j].iter().zip(&v[j]).map(|(a, b)| a - s * b).collect();
                row.push(Discrepancy::Vector(m.quad(&d).max(0.0).sqrt()));
            } else {
                let q = nalgebra::DMatrix::from_fn(hi - lo + 1, hi - lo + 1, |a, b| m.bilinear(&u[lo + a], &v[lo + b]));
                let smin = q.singular_values().min().clamp(0.0, 1.0);
                row.push(Discrepancy::SubspaceAngle((1.0 - smin * smin).sqrt()));
            }
        }
        discrepancies.push(row);
    }
    Ok(HigherEigStudy { study: run.study, discrepancies, orthonormality_error: orth })
}

#[cfg(test)]
mod tests;
