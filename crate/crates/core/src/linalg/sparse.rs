use std::fmt::Write as _;

use super::threads;

/// Symmetric matrix in CSR form with both triangles stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

const PAR_MIN_ROWS: usize = 20_000;

impl SparseSym {
    /// Builds the matrix from (row, col, value) entries; duplicates are summed.
    /// Callers supply both (i, j) and (j, i) for off-diagonal entries.
    pub fn from_triplets(n: usize, mut trip: Vec<(u32, u32, f64)>) -> Self {
        trip.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut data: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        SparseSym { n, indptr, indices, data }
    }

    pub fn identity(n: usize) -> Self {
        SparseSym {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            data: vec![1.0; n],
        }
    }

    /// Tridiagonal matrix with constant diagonal `d` and off-diagonal `o`.
    pub fn tridiagonal(n: usize, d: f64, o: f64) -> Self {
        let mut t = Vec::with_capacity(3 * n);
        for i in 0..n as u32 {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, o));
                t.push((i - 1, i, o));
            }
        }
        SparseSym::from_triplets(n, t)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&(j as u32)).map_or(0.0, |k| v[k])
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn rows_into(&self, x: &[f64], y: &mut [f64], first: usize) {
        for (k, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(first + k);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum();
        }
    }

    /// y = A x. Rows are split across threads; each row is summed in storage order.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let nt = threads();
        if nt <= 1 || self.n < PAR_MIN_ROWS {
            self.rows_into(x, y, 0);
            return;
        }
        let chunk = self.n.div_ceil(nt);
        std::thread::scope(|s| {
            for (k, ys) in y.chunks_mut(chunk).enumerate() {
                s.spawn(move || self.rows_into(x, ys, k * chunk));
            }
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// xᵀ A x.
    pub fn quad(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul(x))
    }

    /// xᵀ A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul(y))
    }

    /// a·self + b·other.
    pub fn add_scaled(&self, a: f64, other: &SparseSym, b: f64) -> SparseSym {
        assert_eq!(self.n, other.n);
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for (m, s) in [(self, a), (other, b)] {
            for i in 0..m.n {
                let (c, v) = m.row(i);
                t.extend(c.iter().zip(v).map(|(&j, &x)| (i as u32, j, s * x)));
            }
        }
        SparseSym::from_triplets(self.n, t)
    }

    /// Largest |A_ij − A_ji| relative to the largest |A_ij|.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j as usize, i)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// MatrixMarket coordinate dump (lower triangle, symmetric).
    pub fn to_matrix_market(&self) -> String {
        let lower: Vec<(usize, u32, f64)> = (0..self.n)
            .flat_map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).filter(|(&j, _)| j as usize <= i).map(move |(&j, &a)| (i, j, a)).collect::<Vec<_>>()
            })
            .collect();
        let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        writeln!(s, "{} {} {}", self.n, self.n, lower.len()).unwrap();
        for (i, j, a) in lower {
            writeln!(s, "{} {} {:e}", i + 1, j + 1, a).unwrap();
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += a x.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseSym::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (0, 0, 3.0), (1, 1, 5.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.mul(&[1.0, 1.0]), vec![6.0, 7.0]);
        assert_eq!(a.asymmetry(), 0.0);
        assert!(a.to_matrix_market().contains("2 2 3"));
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = SparseSym::tridiagonal(4, 2.0, -1.0);
        let b = SparseSym::identity(4);
        let c = a.add_scaled(1.0, &b, 3.0);
        assert_eq!(c.get(2, 2), 5.0);
        assert_eq!(c.get(2, 1), -1.0);
        assert_eq!(c.nnz(), a.nnz());
    }
}
