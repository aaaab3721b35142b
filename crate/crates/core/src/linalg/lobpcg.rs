//! Block LOBPCG for the smallest eigenpairs of K x = λ M x.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cg::{Ic0, InnerCg, Jacobi, Preconditioner};
use super::sparse::SparseSym;
use crate::error::{Error, Result};

type Block = Vec<Vec<f64>>;

/// Preconditioner applied to the block residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LobpcgPrecond {
    Jacobi,
    Ic0,
    /// A few IC(0)-preconditioned CG steps on K.
    InnerCg(usize),
}

#[derive(Clone, Debug)]
pub struct LobpcgOptions {
    /// Number of wanted eigenpairs.
    pub k: usize,
    /// Bound on the relative residual ‖Kx − λMx‖_{D⁻¹} / (λ ‖x‖_M), D = diag(M).
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub precond: LobpcgPrecond,
    /// Extra block columns that are iterated but not required to converge.
    pub guard: usize,
}

impl LobpcgOptions {
    pub fn new(k: usize) -> Self {
        LobpcgOptions { k, tol: 1e-8, max_iter: 500, seed: 0, precond: LobpcgPrecond::Ic0, guard: 2 }
    }
}

/// Eigenpairs in ascending order with M-orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

pub(crate) fn gram(a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| super::dot(&a[i], &b[j]))
}

/// Columns of S·C.
pub(crate) fn combine(s: &[&Vec<f64>], c: &DMatrix<f64>) -> Block {
    let n = s.first().map_or(0, |v| v.len());
    (0..c.ncols())
        .map(|j| {
            let mut out = vec![0.0; n];
            for (i, col) in s.iter().enumerate() {
                let w = c[(i, j)];
                if w != 0.0 {
                    super::axpy(w, col, &mut out);
                }
            }
            out
        })
        .collect()
}

fn apply(a: &SparseSym, x: &[Vec<f64>]) -> Block {
    x.iter().map(|v| a.mul(v)).collect()
}

fn symmetrize(g: &mut DMatrix<f64>) {
    let h = 0.5 * (g.clone() + g.transpose());
    *g = h;
}

/// Ascending eigen-decomposition of a symmetric matrix.
fn sym_eig(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(a);
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].partial_cmp(&e.eigenvalues[j]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(e.eigenvectors.nrows(), idx.len(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Basis transform T with Tᵀ B T = I on the numerically nonsingular part of B.
fn svqb(b: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let n = b.nrows();
    let d: Vec<f64> = (0..n).map(|i| if b[(i, i)] > 0.0 { b[(i, i)].sqrt().recip() } else { 0.0 }).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| d[i] * b[(i, j)] * d[j]);
    let (theta, u) = sym_eig(scaled);
    let tmax = theta.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| theta[i] > drop_tol * tmax).collect();
    DMatrix::from_fn(n, keep.len(), |i, c| d[i] * u[(i, keep[c])] / theta[keep[c]].sqrt())
}

/// Rayleigh-Ritz for the pencil (A, B): ascending values and B-orthonormal coefficient vectors.
fn rayleigh_ritz(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let t = svqb(b, 1e-14);
    let mut at = t.transpose() * a * &t;
    symmetrize(&mut at);
    let (vals, y) = sym_eig(at);
    (vals, t * y)
}

/// M-orthonormalizes `x` in place (and `mx` alongside) by SVQB, dropping dependent directions.
fn orthonormalize_svqb(x: &mut Block, mx: &mut Block, drop_tol: f64) {
    if x.is_empty() {
        return;
    }
    let mut g = gram(x, mx);
    symmetrize(&mut g);
    let t = svqb(&g, drop_tol);
    let xr: Vec<&Vec<f64>> = x.iter().collect();
    let mr: Vec<&Vec<f64>> = mx.iter().collect();
    let nx = combine(&xr, &t);
    let nm = combine(&mr, &t);
    *x = nx;
    *mx = nm;
}

/// v ← v − X (MXᵀ v), applied twice.
fn project_out(v: &mut Block, x: &[Vec<f64>], mx: &[Vec<f64>]) {
    for _ in 0..2 {
        for vi in v.iter_mut() {
            for (xj, mxj) in x.iter().zip(mx) {
                let c = super::dot(mxj, vi);
                super::axpy(-c, xj, vi);
            }
        }
    }
}

fn sign_fix(v: &mut [f64]) {
    let (mut best, mut idx) = (0.0f64, 0);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn residual_norms(k: &SparseSym, m: &SparseSym, minv_diag: &[f64], x: &[Vec<f64>], lam: &[f64]) -> (Block, Vec<f64>) {
    let mut rs = Vec::with_capacity(x.len());
    let mut norms = Vec::with_capacity(x.len());
    for (xi, &l) in x.iter().zip(lam) {
        let mut r = k.mul(xi);
        let mxi = m.mul(xi);
        super::axpy(-l, &mxi, &mut r);
        let xn = super::dot(xi, &mxi).sqrt();
        let rn = r.iter().zip(minv_diag).map(|(a, d)| a * a * d).sum::<f64>().sqrt();
        norms.push(rn / (l.abs().max(1e-300) * xn));
        rs.push(r);
    }
    (rs, norms)
}

fn dense_solve(k: &SparseSym, m: &SparseSym, nwant: usize) -> Result<EigenResult> {
    let n = k.n;
    let kd = DMatrix::from_fn(n, n, |i, j| k.get(i, j));
    let md = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
    let (vals, c) = rayleigh_ritz(&kd, &md);
    if c.ncols() < nwant {
        return Err(Error::RankDeficient("mass matrix is singular".into()));
    }
    let mut vecs: Block = (0..nwant).map(|j| c.column(j).iter().copied().collect()).collect();
    vecs.iter_mut().for_each(|v| sign_fix(v));
    let minv: Vec<f64> = m.diag().iter().map(|d| 1.0 / d).collect();
    let lam = vals[..nwant].to_vec();
    let (_, res) = residual_norms(k, m, &minv, &vecs, &lam);
    Ok(EigenResult { eigenvalues: lam, eigenvectors: vecs, residuals: res, iterations: 0 })
}

/// Smallest `opts.k` eigenpairs of K x = λ M x; deterministic for a fixed seed.
pub fn lobpcg(k: &SparseSym, m: &SparseSym, opts: &LobpcgOptions) -> Result<EigenResult> {
    let n = k.n;
    if m.n != n {
        return Err(Error::Parameter("K and M dimensions differ".into()));
    }
    if opts.k == 0 || opts.k > n {
        return Err(Error::Parameter(format!("k = {} must lie in 1..={n}", opts.k)));
    }
    let nb = (opts.k + opts.guard).min(n);
    if 3 * nb >= n || n <= 64 {
        return dense_solve(k, m, opts.k);
    }
    let minv_diag: Vec<f64> = m.diag().iter().map(|d| 1.0 / d).collect();
    let ic;
    let jac;
    let inner;
    let pc: &dyn Preconditioner = match opts.precond {
        LobpcgPrecond::Jacobi => {
            jac = Jacobi::new(k)?;
            &jac
        }
        LobpcgPrecond::Ic0 => {
            ic = Ic0::new(k)?;
            &ic
        }
        LobpcgPrecond::InnerCg(it) => {
            inner = InnerCg { a: k, ic: Ic0::new(k)?, iterations: it.max(1) };
            &inner
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Block = (0..nb).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut mx = apply(m, &x);
    orthonormalize_svqb(&mut x, &mut mx, 1e-14);
    if x.len() < nb {
        return Err(Error::RankDeficient("initial block".into()));
    }
    let mut kx = apply(k, &x);
    let (mut lam, c) = {
        let mut ga = gram(&x, &kx);
        symmetrize(&mut ga);
        let mut gb = gram(&x, &mx);
        symmetrize(&mut gb);
        rayleigh_ritz(&ga, &gb)
    };
    {
        let c = c.columns(0, nb).into_owned();
        x = combine(&x.iter().collect::<Vec<_>>(), &c);
        kx = combine(&kx.iter().collect::<Vec<_>>(), &c);
        mx = combine(&mx.iter().collect::<Vec<_>>(), &c);
        lam.truncate(nb);
    }
    let mut p: Block = vec![];
    let mut kp: Block = vec![];
    let mut mp: Block = vec![];
    let mut res = vec![f64::INFINITY; nb];

    for iter in 0..opts.max_iter {
        res.clear();
        let mut w: Block = Vec::new();
        for i in 0..nb {
            let mut r = kx[i].clone();
            super::axpy(-lam[i], &mx[i], &mut r);
            let rn = r.iter().zip(&minv_diag).map(|(a, d)| a * a * d).sum::<f64>().sqrt();
            let xn = super::dot(&x[i], &mx[i]).sqrt();
            let rel = rn / (lam[i].abs().max(1e-300) * xn);
            res.push(rel);
            if rel > opts.tol {
                let mut z = vec![0.0; n];
                pc.apply(&r, &mut z);
                w.push(z);
            }
        }
        if res[..opts.k].iter().all(|&r| r <= opts.tol) {
            return finish(k, m, &minv_diag, x, opts.k, iter);
        }

        project_out(&mut w, &x, &mx);
        let mut mw = apply(m, &w);
        orthonormalize_svqb(&mut w, &mut mw, 1e-12);
        let kw = apply(k, &w);

        if !p.is_empty() {
            let mut basis = x.clone();
            basis.extend(w.iter().cloned());
            let mut mbasis = mx.clone();
            mbasis.extend(mw.iter().cloned());
            project_out(&mut p, &basis, &mbasis);
            mp = apply(m, &p);
            orthonormalize_svqb(&mut p, &mut mp, 1e-12);
            kp = apply(k, &p);
        }

        let s: Vec<&Vec<f64>> = x.iter().chain(&w).chain(&p).collect();
        let ks: Vec<&Vec<f64>> = kx.iter().chain(&kw).chain(&kp).collect();
        let ms: Vec<&Vec<f64>> = mx.iter().chain(&mw).chain(&mp).collect();
        let dim = s.len();
        let mut ga = DMatrix::from_fn(dim, dim, |i, j| super::dot(s[i], ks[j]));
        symmetrize(&mut ga);
        let mut gb = DMatrix::from_fn(dim, dim, |i, j| super::dot(s[i], ms[j]));
        symmetrize(&mut gb);
        let (vals, c) = rayleigh_ritz(&ga, &gb);
        if c.ncols() < nb {
            return Err(Error::Stagnation(format!("search space collapsed at iteration {iter}")));
        }
        let cx = c.columns(0, nb).into_owned();
        let nx = combine(&s, &cx);
        let nkx = combine(&ks, &cx);
        let nmx = combine(&ms, &cx);
        // new search directions: the W and P components of the Ritz vectors
        let mut cp = cx.clone();
        for i in 0..nb {
            for j in 0..nb {
                cp[(i, j)] = 0.0;
            }
        }
        p = combine(&s, &cp);
        kp = combine(&ks, &cp);
        mp = combine(&ms, &cp);
        x = nx;
        kx = nkx;
        mx = nmx;
        lam = vals[..nb].to_vec();
    }
    Err(Error::Stagnation(format!(
        "no convergence in {} iterations; residuals {:?}, eigenvalue estimates {:?}",
        opts.max_iter,
        &res[..opts.k.min(res.len())],
        &lam[..opts.k]
    )))
}

fn finish(k: &SparseSym, m: &SparseSym, minv_diag: &[f64], mut x: Block, nwant: usize, iterations: usize) -> Result<EigenResult> {
    x.truncate(nwant);
    let mut x = m_orthonormalize(&x, m)?;
    let kx = apply(k, &x);
    let mx = apply(m, &x);
    let mut ga = gram(&x, &kx);
    symmetrize(&mut ga);
    let mut gb = gram(&x, &mx);
    symmetrize(&mut gb);
    let (_, c) = rayleigh_ritz(&ga, &gb);
    x = combine(&x.iter().collect::<Vec<_>>(), &c);
    x = m_orthonormalize(&x, m)?;
    for v in x.iter_mut() {
        sign_fix(v);
    }
    let lam: Vec<f64> = x.iter().map(|v| k.quad(v) / m.quad(v)).collect();
    let mut order: Vec<usize> = (0..lam.len()).collect();
    order.sort_by(|&a, &b| lam[a].partial_cmp(&lam[b]).unwrap().then(a.cmp(&b)));
    let x: Block = order.iter().map(|&i| x[i].clone()).collect();
    let lam: Vec<f64> = order.iter().map(|&i| lam[i]).collect();
    let (_, res) = residual_norms(k, m, minv_diag, &x, &lam);
    Ok(EigenResult { eigenvalues: lam, eigenvectors: x, residuals: res, iterations })
}

/// Returns `block` with M-Gram matrix equal to the identity (two Cholesky passes).
pub fn m_orthonormalize(block: &[Vec<f64>], m: &SparseSym) -> Result<Block> {
    let mut x = block.to_vec();
    for _ in 0..2 {
        let mx = apply(m, &x);
        let mut g = gram(&x, &mx);
        symmetrize(&mut g);
        let scale = (0..g.nrows()).map(|i| g[(i, i)]).fold(0.0, f64::max);
        let chol = nalgebra::Cholesky::new(g)
            .ok_or_else(|| Error::RankDeficient("Gram matrix is not positive definite".into()))?;
        let l = chol.l();
        let pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(pivot > 1e-12 * scale) {
            return Err(Error::RankDeficient(format!("Gram pivot {pivot:e} vs scale {scale:e}")));
        }
        let linv_t = l
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("singular Cholesky factor".into()))?
            .transpose();
        x = combine(&x.iter().collect::<Vec<_>>(), &linv_t);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn diagonal_pencil() {
        let k = SparseSym::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)]);
        let m = SparseSym::identity(3);
        let r = lobpcg(&k, &m, &LobpcgOptions::new(2)).unwrap();
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((r.eigenvalues[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_laplacian_closed_form() {
        let n = 400;
        let h = 1.0 / (n + 1) as f64;
        let k = SparseSym::tridiagonal(n, 2.0 / (h * h), -1.0 / (h * h));
        let m = SparseSym::identity(n);
        for pc in [LobpcgPrecond::Jacobi, LobpcgPrecond::Ic0, LobpcgPrecond::InnerCg(5)] {
            let mut o = LobpcgOptions::new(3);
            o.precond = pc;
            o.max_iter = 3000;
            let r = lobpcg(&k, &m, &o).unwrap();
            for j in 0..3 {
                let exact = 4.0 / (h * h) * (PI * (j + 1) as f64 * h / 2.0).sin().powi(2);
                assert!((r.eigenvalues[j] - exact).abs() < 1e-9 * exact, "{pc:?} {j}");
                assert!(r.residuals[j] <= o.tol);
            }
            for i in 0..3 {
                for j in 0..3 {
                    let g = m.bilinear(&r.eigenvectors[i], &r.eigenvectors[j]);
                    assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let k = SparseSym::tridiagonal(300, 2.0, -1.0);
        let m = SparseSym::identity(300);
        let a = lobpcg(&k, &m, &LobpcgOptions::new(2)).unwrap();
        let b = lobpcg(&k, &m, &LobpcgOptions::new(2)).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn orthonormalize_checks() {
        let m = SparseSym::tridiagonal(10, 4.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Block = (0..3).map(|_| (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let q = m_orthonormalize(&x, &m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let g = m.bilinear(&q[i], &q[j]);
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let again = m_orthonormalize(&q, &m).unwrap();
        for (a, b) in again.iter().flatten().zip(q.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(m_orthonormalize(&[x[0].clone(), x[0].clone()], &m), Err(Error::RankDeficient(_))));
    }
}
