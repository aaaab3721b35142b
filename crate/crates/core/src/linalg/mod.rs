//! Sparse symmetric matrices, preconditioned CG and the LOBPCG eigensolver.

mod cg;
mod lobpcg;
mod sparse;

use std::sync::OnceLock;

pub use cg::{cg_solve, cg_solve_from, CgOutcome, Ic0, Identity, InnerCg, Jacobi, Preconditioner};
pub use lobpcg::{lobpcg, m_orthonormalize, EigenResult, LobpcgOptions, LobpcgPrecond};
pub use sparse::{axpy, dot, norm2, SparseSym};

use crate::error::Result;

/// Worker threads for matrix-vector products, from `TUBE_SPECTRA_THREADS` (default 1).
/// Results do not depend on this value.
pub fn threads() -> usize {
    static T: OnceLock<usize> = OnceLock::new();
    *T.get_or_init(|| {
        std::env::var("TUBE_SPECTRA_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&t| t > 0)
            .unwrap_or(1)
    })
}

/// √(rᵀ (K + M)⁻¹ r), the discrete H⁻¹ norm of a residual vector.
pub fn dual_norm(r: &[f64], k: &SparseSym, m: &SparseSym, tol: f64) -> Result<f64> {
    let a = k.add_scaled(1.0, m, 1.0);
    dual_norm_with(r, &a, &Ic0::new(&a)?, tol)
}

/// [`dual_norm`] with a prebuilt K + M and preconditioner.
pub fn dual_norm_with(r: &[f64], kpm: &SparseSym, pc: &dyn Preconditioner, tol: f64) -> Result<f64> {
    if r.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let z = cg_solve(kpm, r, tol, 20 * kpm.n + 100, pc)?;
    Ok(dot(r, &z.x).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_norm_identity_case() {
        let k = SparseSym::identity(6).add_scaled(0.5, &SparseSym::identity(6), 0.0);
        let m = SparseSym::identity(6).add_scaled(0.5, &SparseSym::identity(6), 0.0);
        let r = [1.0, 2.0, -2.0, 0.0, 4.0, 0.5];
        assert!((dual_norm(&r, &k, &m, 1e-14).unwrap() - norm2(&r)).abs() < 1e-12);
        assert_eq!(dual_norm(&[0.0; 6], &k, &m, 1e-10).unwrap(), 0.0);
    }
}
