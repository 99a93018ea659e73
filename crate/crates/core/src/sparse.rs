//! Compressed-row matrices and a banded LU with partial pivoting.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("matrix is singular to working precision at column {0}")]
    Singular(usize),
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has {len}")]
    Dimension { rows: usize, cols: usize, len: usize },
    #[error("linear solve did not reach the requested accuracy (backward error {0:e})")]
    Inaccurate(f64),
}

/// Square CSR matrix with sorted, duplicate-free column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row (column, value) lists; duplicates are summed in
    /// column order, so the result does not depend on insertion order.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Csr { n, row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// (lower, upper) bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }
}

/// Row-major band storage: entry (i, j) with −kl ≤ j−i ≤ ku+kl sits at
/// `i·ld + (j − i + kl)`. The extra kl upper diagonals hold pivoting fill.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ld + (j + self.kl - i)
    }

    pub fn factor(a: &Csr) -> Result<Self, SparseError> {
        let n = a.n;
        let (kl, ku) = a.bandwidths();
        let ld = 2 * kl + ku + 1;
        let mut lu = BandLu { n, kl, ku, ld, ab: vec![0.0; n * ld], piv: vec![0; n] };
        for i in 0..n {
            for (j, v) in a.row(i) {
                let k = lu.idx(i, j);
                lu.ab[k] = v;
            }
        }
        let wide = ku + kl;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + wide).min(n - 1);
            let mut p = k;
            let mut best = lu.ab[lu.idx(k, k)].abs();
            for i in (k + 1)..=last_row {
                let v = lu.ab[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(SparseError::Singular(k));
            }
            lu.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (x, y) = (lu.idx(k, j), lu.idx(p, j));
                    lu.ab.swap(x, y);
                }
            }
            let pivot = lu.ab[lu.idx(k, k)];
            let row_k = lu.idx(k, k + 1);
            let len = last_col - k;
            for i in (k + 1)..=last_row {
                let ik = lu.idx(i, k);
                let l = lu.ab[ik] / pivot;
                lu.ab[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let row_i = lu.idx(i, k + 1);
                let (src, dst) = if row_k < row_i {
                    let (lo, hi) = lu.ab.split_at_mut(row_i);
                    (&lo[row_k..row_k + len], &mut hi[..len])
                } else {
                    unreachable!("rows are stored in order")
                };
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let wide = self.ku + self.kl;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in (k + 1)..=(k + self.kl).min(n.saturating_sub(1)) {
                    x[i] -= self.ab[self.idx(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in (k + 1)..=(k + wide).min(n - 1) {
                s -= self.ab[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.ab[self.idx(k, k)];
        }
        x
    }
}

/// Normwise backward error ‖b − Ax‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞).
pub fn backward_error(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r = ax.iter().zip(b).map(|(p, q)| (q - p).abs()).fold(0.0, f64::max);
    let xn = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let bn = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let denom = a.norm_inf() * xn + bn;
    if denom == 0.0 {
        0.0
    } else {
        r / denom
    }
}

/// Solves `a x = b` with up to two steps of iterative refinement; fails if the
/// backward error stays above `tol`.
pub fn solve(a: &Csr, b: &[f64], tol: f64) -> Result<Vec<f64>, SparseError> {
    if b.len() != a.n {
        return Err(SparseError::Dimension { rows: a.n, cols: a.n, len: b.len() });
    }
    let lu = BandLu::factor(a)?;
    let mut x = lu.solve(b);
    let mut err = backward_error(a, &x, b);
    for _ in 0..2 {
        if err <= tol * 1e-2 {
            break;
        }
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let d = lu.solve(&r);
        let cand: Vec<f64> = x.iter().zip(&d).map(|(p, q)| p + q).collect();
        let e = backward_error(a, &cand, b);
        if e < err {
            x = cand;
            err = e;
        } else {
            break;
        }
    }
    if !(err <= tol) || x.iter().any(|v| !v.is_finite()) {
        return Err(SparseError::Inaccurate(err));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(a: &Csr) -> Vec<Vec<f64>> {
        (0..a.n).map(|i| (0..a.n).map(|j| a.get(i, j)).collect()).collect()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_rows(2, vec![vec![(1, 1.0), (0, 2.0), (1, 3.0)], vec![(1, 5.0)]]);
        assert_eq!(a.col_idx, vec![0, 1, 1]);
        assert_eq!(a.vals, vec![2.0, 4.0, 5.0]);
        assert_eq!(a.bandwidths(), (0, 1));
    }

    #[test]
    fn random_banded_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (40, 3, 7), (60, 9, 2)] {
            let rows: Vec<Vec<(usize, f64)>> = (0..n)
                .map(|i: usize| {
                    let lo = i.saturating_sub(kl);
                    let hi = (i + ku).min(n - 1);
                    // weak diagonal forces pivoting
                    (lo..=hi)
                        .map(|j| (j, if i == j { 0.1 } else { rng.random::<f64>() - 0.5 }))
                        .collect()
                })
                .collect();
            let a = Csr::from_rows(n, rows);
            let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
            let b = a.matvec(&x_true);
            let x = solve(&a, &b, 1e-13).unwrap();
            let d = dense(&a);
            for i in 0..n {
                let s: f64 = (0..n).map(|j| d[i][j] * x[j]).sum();
                assert!((s - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = Csr::from_rows(2, vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        assert!(solve(&a, &[1.0, 2.0], 1e-12).is_err());
        let z = Csr::from_rows(2, vec![vec![], vec![(1, 1.0)]]);
        assert!(matches!(BandLu::factor(&z), Err(SparseError::Singular(0))));
    }
}
