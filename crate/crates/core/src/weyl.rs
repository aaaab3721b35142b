//! Singular Weyl sequences on a tube: normalized functions with energy λ + 1/n whose residuals
//! vanish in the dual norm.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{assemble_mass_full, AssembledSystem, FeFunction};
use crate::geometry::{threshold_energy, truncate_with, DomainSpec, Point2, TruncateOptions, TubeSpec};
use crate::linalg::{dual_norm_with, Ic0};
use crate::mesh::{triangulate_with, Mesh, MeshOptions, SizeZone, ZoneShape};

/// One member of the sequence: level λ, index n, carried by tube `tube_id` from axial distance r0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeylSpec {
    pub lambda: f64,
    pub n: usize,
    pub tube_id: usize,
    pub r0: f64,
}

impl WeylSpec {
    /// λ_n = λ + 1/n.
    pub fn lambda_n(&self) -> f64 {
        self.lambda + 1.0 / self.n as f64
    }

    /// Support length R_n = 2nπ / √(λ_n − E_tube).
    pub fn support_length(&self, e_tube: f64) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        let gap = self.lambda_n() - e_tube;
        if !(gap > 0.0) {
            return Err(Error::Inapplicable(format!(
                "lambda_n = {} does not exceed the tube threshold {e_tube}",
                self.lambda_n()
            )));
        }
        Ok(2.0 * self.n as f64 * std::f64::consts::PI / gap.sqrt())
    }

    fn tube<'a>(&self, spec: &'a DomainSpec) -> Result<&'a TubeSpec> {
        match spec.tubes.get(self.tube_id) {
            Some(t) if t.is_infinite() => Ok(t),
            _ => Err(Error::Parameter(format!("tube {} is not an infinite tube", self.tube_id))),
        }
    }

    /// Checks λ ≥ E(Ω) and returns (tube, R_n).
    fn setup<'a>(&self, spec: &'a DomainSpec) -> Result<(&'a TubeSpec, f64)> {
        let e = threshold_energy(spec)?;
        if self.lambda < e {
            return Err(Error::Inapplicable(format!("lambda = {} is below the threshold {e}", self.lambda)));
        }
        let t = self.tube(spec)?;
        Ok((t, self.support_length(t.cross_section_eigenvalue())?))
    }

    /// Smallest admissible truncation radius r0 + R_n + 1.
    pub fn min_truncation(&self, spec: &DomainSpec) -> Result<f64> {
        Ok(self.r0 + self.setup(spec)?.1 + 1.0)
    }
}

/// Closed-form U_n = √(2/R_n) ψ₁(t) sin(k (s − r0)) on the slab r0 ≤ s ≤ r0 + R_n of the tube.
fn weyl_value(t: &TubeSpec, r0: f64, rn: f64, k: f64, p: Point2) -> f64 {
    let (s, tr) = t.frame_coords(p);
    let w = t.width;
    if s < r0 || s > r0 + rn || tr.abs() >= 0.5 * w {
        return 0.0;
    }
    let psi = (2.0 / w).sqrt() * (std::f64::consts::PI * tr / w).cos();
    (2.0 / rn).sqrt() * psi * (k * (s - r0)).sin()
}

/// Nodal interpolant of U_n on a mesh of the domain truncated at `r_trunc`.
pub fn build_weyl_function<'a>(mesh: &'a Mesh, spec: &DomainSpec, r_trunc: f64, w: &WeylSpec) -> Result<FeFunction<'a>> {
    let (t, rn) = w.setup(spec)?;
    let need = w.r0 + rn + 1.0;
    if r_trunc < need {
        return Err(Error::TruncationTooShort { r: r_trunc, r0: need });
    }
    let k = (w.lambda_n() - t.cross_section_eigenvalue()).sqrt();
    Ok(FeFunction::interpolate(mesh, |p| weyl_value(t, w.r0, rn, k, p)))
}

/// Mesh for U_n: truncation r0 + R_n + 1, cuts at both slab ends, edge length `h_tube` on the
/// slab and `h_far` elsewhere. Returns the mesh and the truncation radius.
pub fn weyl_mesh(spec: &DomainSpec, w: &WeylSpec, h_tube: f64, h_far: f64) -> Result<(Mesh, f64)> {
    let (t, rn) = w.setup(spec)?;
    let r = w.r0 + rn + 1.0;
    let cuts = TruncateOptions { tube_cuts: vec![w.r0, w.r0 + rn], interfaces: vec![] };
    let dom = truncate_with(spec, r, &cuts)?;
    let half = 0.5 * t.width;
    let (s0, s1) = ((w.r0 - 0.25).max(0.0), (w.r0 + rn + 0.25).min(r));
    let mut poly = vec![t.from_frame(s0, -half), t.from_frame(s1, -half), t.from_frame(s1, half), t.from_frame(s0, half)];
    if (poly[1] - poly[0]).cross(poly[2] - poly[0]) < 0.0 {
        poly.reverse();
    }
    let opts = MeshOptions::new(h_far).with_zone(SizeZone { shape: ZoneShape::Polygon(poly), h: h_tube, grade: 0.5 });
    Ok((triangulate_with(&dom, &opts)?, r))
}

/// Bump (1 − |p − c|²/ρ²)²₊ used as a fixed test function for weak convergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub center: Point2,
    pub radius: f64,
}

impl Probe {
    pub fn eval(&self, p: Point2) -> f64 {
        let q = 1.0 - (p - self.center).dot(p - self.center) / (self.radius * self.radius);
        if q > 0.0 {
            q * q
        } else {
            0.0
        }
    }
}

/// Bumps in the core, at the mouth of the carrier tube, and inside the tube at r0 + 2.
pub fn default_probes(spec: &DomainSpec, w: &WeylSpec) -> Result<[Probe; 3]> {
    let t = w.tube(spec)?;
    let vs = &spec.core.vertices;
    let c = vs.iter().fold(Point2::new(0.0, 0.0), |a, &b| a + b) * (1.0 / vs.len() as f64);
    let rad = 0.4 * t.width;
    Ok([
        Probe { center: c, radius: rad },
        Probe { center: t.origin(), radius: rad },
        Probe { center: t.from_frame(w.r0 + 2.0, 0.0), radius: rad },
    ])
}

/// Discrete constrained Palais–Smale quantities of a function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsReport {
    /// UᵀKU.
    pub energy: f64,
    /// √(UᵀMU).
    pub l2: f64,
    /// √(rᵀ(K+M)⁻¹r) with r = KU − λMU.
    pub dual_residual: f64,
}

/// Energy, L² norm and dual residual of `u` at level `lambda`.
pub fn ps_diagnostics(u: &FeFunction, lambda: f64, sys: &AssembledSystem) -> Result<PsReport> {
    let x = sys.dofs.restrict(&u.values);
    let kx = sys.k.mul(&x);
    let mx = sys.m.mul(&x);
    let energy = crate::linalg::dot(&x, &kx);
    let l2 = crate::linalg::dot(&x, &mx).max(0.0).sqrt();
    let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - lambda * b).collect();
    let kpm = sys.k.add_scaled(1.0, &sys.m, 1.0);
    let pc = Ic0::new(&kpm)?;
    let dual_residual = dual_norm_with(&r, &kpm, &pc, 1e-10)?;
    Ok(PsReport { energy, l2, dual_residual })
}

/// One row of the threshold report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeylRow {
    pub lambda: f64,
    pub n: usize,
    pub applicable: bool,
    pub report: Option<PsReport>,
    /// ⟨U_n, g_k⟩ for the three probes.
    pub probes: Vec<f64>,
    pub vertices: usize,
}

impl WeylRow {
    pub fn sqrtn_scaled_residual(&self) -> Option<f64> {
        self.report.map(|r| r.dual_residual * (self.n as f64).sqrt())
    }
}

/// Diagnostics of U_n for one (λ, n), with the mesh at `h_tube` refined `refinements` times.
pub fn weyl_row(spec: &DomainSpec, w: &WeylSpec, h_tube: f64, h_far: f64, refinements: usize) -> Result<WeylRow> {
    let (mut mesh, r) = match weyl_mesh(spec, w, h_tube, h_far) {
        Ok(m) => m,
        Err(Error::Inapplicable(_)) => {
            return Ok(WeylRow { lambda: w.lambda, n: w.n, applicable: false, report: None, probes: vec![], vertices: 0 })
        }
        Err(e) => return Err(e),
    };
    for _ in 0..refinements {
        mesh = mesh.refine_uniform();
    }
    let u = build_weyl_function(&mesh, spec, r, w)?;
    let sys = AssembledSystem::new(&mesh)?;
    let report = ps_diagnostics(&u, w.lambda, &sys)?;
    let m = assemble_mass_full(&mesh)?;
    let probes = default_probes(spec, w)?
        .iter()
        .map(|g| {
            let gv: Vec<f64> = mesh.vertices.iter().map(|&p| g.eval(p)).collect();
            m.bilinear(&u.values, &gv)
        })
        .collect();
    Ok(WeylRow { lambda: w.lambda, n: w.n, applicable: true, report: Some(report), probes, vertices: mesh.num_vertices() })
}

/// Runs the construction over a grid of levels and indices.
pub fn essential_threshold_report(
    spec: &DomainSpec,
    tube_id: usize,
    r0: f64,
    lambdas: &[f64],
    ns: &[usize],
    h_tube: f64,
    h_far: f64,
) -> Result<Vec<WeylRow>> {
    let cases: Vec<WeylSpec> = lambdas
        .iter()
        .flat_map(|&lambda| ns.iter().map(move |&n| WeylSpec { lambda, n, tube_id, r0 }))
        .collect();
    crate::spectra::par_map(&cases, |w| weyl_row(spec, w, h_tube, h_far, 0)).into_iter().collect()
}

/// Columns lambda,n,energy,l2,dual_residual,sqrtn_scaled_residual,probe1,probe2,probe3.
pub fn weyl_csv(rows: &[WeylRow]) -> String {
    let mut s = String::from("lambda,n,energy,l2,dual_residual,sqrtn_scaled_residual,probe1,probe2,probe3\n");
    for r in rows {
        match r.report {
            Some(rep) => {
                s += &format!(
                    "{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                    r.lambda,
                    r.n,
                    rep.energy,
                    rep.l2,
                    rep.dual_residual,
                    r.sqrtn_scaled_residual().unwrap()
                );
                for p in &r.probes {
                    s += &format!(",{p:.12e}");
                }
                s += "\n";
            }
            None => s += &format!("{:.12e},{},inapplicable,,,,,,\n", r.lambda, r.n),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_hersch_pipe;
    use std::f64::consts::PI;

    fn hersch() -> DomainSpec {
        build_hersch_pipe(64).unwrap()
    }

    #[test]
    fn support_length_formula() {
        let w = WeylSpec { lambda: PI * PI, n: 1, tube_id: 0, r0: 2.0 };
        assert!((w.support_length(PI * PI).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!(matches!(
            WeylSpec { lambda: 0.5 * PI * PI, ..w }.support_length(PI * PI),
            Err(Error::Inapplicable(_))
        ));
        assert!((w.min_truncation(&hersch()).unwrap() - (3.0 + 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_identities() {
        let spec = hersch();
        let w = WeylSpec { lambda: PI * PI, n: 1, tube_id: 0, r0: 2.0 };
        let (mesh, r) = weyl_mesh(&spec, &w, 1.0 / 16.0, 0.25).unwrap();
        let u = build_weyl_function(&mesh, &spec, r, &w).unwrap();
        let sys = AssembledSystem::new(&mesh).unwrap();
        let rep = ps_diagnostics(&u, w.lambda, &sys).unwrap();
        assert!((rep.l2 - 1.0).abs() < 0.01);
        assert!((rep.energy - w.lambda_n()).abs() < 0.1);
        // support inside the slab of tube 0
        let t = &spec.tubes[0];
        for (p, v) in mesh.vertices.iter().zip(&u.values) {
            let (s, tr) = t.frame_coords(*p);
            if s < 2.0 || s > 2.0 + 2.0 * PI || tr.abs() >= 0.5 {
                assert_eq!(*v, 0.0);
            }
        }
        // disjoint from anything supported in the half-disk
        let m = assemble_mass_full(&mesh).unwrap();
        let g: Vec<f64> = mesh.vertices.iter().map(|p| if p.x < -0.05 { 1.0 } else { 0.0 }).collect();
        assert_eq!(m.bilinear(&u.values, &g), 0.0);
        assert!(build_weyl_function(&mesh, &spec, r, &WeylSpec { n: 2, ..w }).is_err());
    }

    #[test]
    fn threshold_report_rows() {
        let rows = essential_threshold_report(&hersch(), 0, 2.0, &[0.5 * PI * PI, 2.0 * PI * PI], &[1, 2], 0.1, 0.25).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(!rows[0].applicable && !rows[1].applicable);
        let (a, b) = (rows[2].report.unwrap(), rows[3].report.unwrap());
        assert!(a.energy > b.energy);
        assert!(b.dual_residual < a.dual_residual);
        assert_eq!(rows[2].probes[0], 0.0);
        let csv = weyl_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().contains("inapplicable"));
    }
}
