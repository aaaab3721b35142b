use super::sparse::{axpy, dot, norm2, SparseSym};
use crate::error::{Error, Result};

/// z ≈ A⁻¹ r.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseSym) -> Result<Self> {
        let d = a.diag();
        if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Assembly(format!("non-positive diagonal entry at row {i}")));
        }
        Ok(Jacobi { inv_diag: d.iter().map(|x| 1.0 / x).collect() })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Zero-fill incomplete Cholesky A ≈ L Lᵀ on the lower pattern of A.
pub struct Ic0 {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    /// Row i holds L[i, j] for j ≤ i, diagonal last.
    data: Vec<f64>,
    /// Relative diagonal shift that was needed (0 when the plain factorization succeeded).
    pub shift: f64,
}

impl Ic0 {
    pub fn new(a: &SparseSym) -> Result<Self> {
        let mut shift = 0.0;
        for _ in 0..12 {
            if let Some(f) = Self::factor(a, shift) {
                return Ok(f);
            }
            shift = if shift == 0.0 { 1e-3 } else { 2.0 * shift };
        }
        Err(Error::Assembly("incomplete Cholesky failed even with diagonal shifts".into()))
    }

    fn factor(a: &SparseSym, shift: f64) -> Option<Self> {
        let n = a.n;
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if j as usize <= i {
                    indices.push(j);
                    data.push(if j as usize == i { x * (1.0 + shift) } else { x });
                }
            }
            indptr[i + 1] = indices.len();
            if indices.last() != Some(&(i as u32)) {
                return None;
            }
        }
        for i in 0..n {
            let (s, e) = (indptr[i], indptr[i + 1]);
            for p in s..e - 1 {
                let k = indices[p] as usize;
                // sum over j < k of L[i,j] L[k,j]: merge of the two sorted rows
                let (ks, ke) = (indptr[k], indptr[k + 1] - 1);
                let (mut a1, mut b1) = (s, ks);
                let mut acc = 0.0;
                while a1 < p && b1 < ke {
                    let (ja, jb) = (indices[a1], indices[b1]);
                    if ja == jb {
                        acc += data[a1] * data[b1];
                        a1 += 1;
                        b1 += 1;
                    } else if ja < jb {
                        a1 += 1;
                    } else {
                        b1 += 1;
                    }
                }
                data[p] = (data[p] - acc) / data[ke];
            }
            let d = data[e - 1] - data[s..e - 1].iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) {
                return None;
            }
            data[e - 1] = d.sqrt();
        }
        Some(Ic0 { n, indptr, indices, data, shift })
    }
}

impl Preconditioner for Ic0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for i in 0..self.n {
            let (s, e) = (self.indptr[i], self.indptr[i + 1]);
            let mut acc = r[i];
            for p in s..e - 1 {
                acc -= self.data[p] * z[self.indices[p] as usize];
            }
            z[i] = acc / self.data[e - 1];
        }
        for i in (0..self.n).rev() {
            let (s, e) = (self.indptr[i], self.indptr[i + 1]);
            z[i] /= self.data[e - 1];
            let zi = z[i];
            for p in s..e - 1 {
                z[self.indices[p] as usize] -= self.data[p] * zi;
            }
        }
    }
}

/// Preconditioner that runs a fixed number of inner PCG steps with IC(0).
pub struct InnerCg<'a> {
    pub a: &'a SparseSym,
    pub ic: Ic0,
    pub iterations: usize,
}

impl Preconditioner for InnerCg<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|x| *x = 0.0);
        let _ = pcg_core(self.a, r, z, &self.ic, 0.0, self.iterations);
    }
}

/// Result of a CG solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// ‖b − A x‖ / ‖b‖.
    pub relative_residual: f64,
}

/// Runs PCG in place on `x`; returns (iterations, relative residual, converged).
fn pcg_core(a: &SparseSym, b: &[f64], x: &mut [f64], pc: &dyn Preconditioner, tol: f64, max_iter: usize) -> (usize, f64, bool) {
    let n = a.n;
    let bn = norm2(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return (0, 0.0, true);
    }
    let mut r = b.to_vec();
    let ax = a.mul(x);
    axpy(-1.0, &ax, &mut r);
    let mut z = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = norm2(&r) / bn;
    for it in 0..max_iter {
        if res <= tol {
            return (it, res, true);
        }
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return (it, res, false);
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        res = norm2(&r) / bn;
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    // recompute the true residual for the report
    let mut r = b.to_vec();
    axpy(-1.0, &a.mul(x), &mut r);
    let res = norm2(&r) / bn;
    (max_iter, res, res <= tol)
}

/// Preconditioned CG from a zero initial guess until ‖Ax − b‖ ≤ tol‖b‖.
pub fn cg_solve(a: &SparseSym, b: &[f64], tol: f64, max_iter: usize, pc: &dyn Preconditioner) -> Result<CgOutcome> {
    cg_solve_from(a, b, vec![0.0; a.n], tol, max_iter, pc)
}

/// [`cg_solve`] starting from `x0`.
pub fn cg_solve_from(a: &SparseSym, b: &[f64], x0: Vec<f64>, tol: f64, max_iter: usize, pc: &dyn Preconditioner) -> Result<CgOutcome> {
    if b.len() != a.n || x0.len() != a.n {
        return Err(Error::Parameter("dimension mismatch in cg_solve".into()));
    }
    let mut x = x0;
    let (iterations, res, ok) = pcg_core(a, b, &mut x, pc, tol, max_iter);
    if ok {
        Ok(CgOutcome { x, iterations, relative_residual: res })
    } else {
        Err(Error::NonConvergence { iterations, residual: res, best: x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thomas(n: usize, d: f64, o: f64, b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut g = vec![0.0; n];
        c[0] = o / d;
        g[0] = b[0] / d;
        for i in 1..n {
            let m = d - o * c[i - 1];
            c[i] = o / m;
            g[i] = (b[i] - o * g[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = g[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = g[i] - c[i] * x[i + 1];
        }
        x
    }

    #[test]
    fn identity_one_step() {
        let a = SparseSym::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let out = cg_solve(&a, &b, 1e-14, 10, &Identity).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, b);
    }

    #[test]
    fn laplacian_matches_thomas() {
        let n = 50;
        let a = SparseSym::tridiagonal(n, 2.0, -1.0);
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let exact = thomas(n, 2.0, -1.0, &b);
        for pc in [&Identity as &dyn Preconditioner, &Jacobi::new(&a).unwrap(), &Ic0::new(&a).unwrap()] {
            let out = cg_solve(&a, &b, 1e-13, 500, pc).unwrap();
            for (x, e) in out.x.iter().zip(&exact) {
                assert!((x - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ic0_exact_on_tridiagonal() {
        // no fill-in for a tridiagonal matrix, so IC(0) is the exact Cholesky factor
        let a = SparseSym::tridiagonal(30, 2.0, -1.0);
        let ic = Ic0::new(&a).unwrap();
        let out = cg_solve(&a, &vec![1.0; 30], 1e-12, 5, &ic).unwrap();
        assert!(out.iterations <= 2);
        assert_eq!(ic.shift, 0.0);
    }

    #[test]
    fn zero_rhs_and_failure() {
        let a = SparseSym::tridiagonal(100, 2.0, -1.0);
        let out = cg_solve(&a, &vec![0.0; 100], 1e-10, 10, &Identity).unwrap();
        assert!(out.x.iter().all(|&v| v == 0.0));
        match cg_solve(&a, &vec![1.0; 100], 1e-14, 3, &Identity) {
            Err(Error::NonConvergence { iterations, best, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.len(), 100);
            }
            other => panic!("{other:?}"),
        }
    }
}
