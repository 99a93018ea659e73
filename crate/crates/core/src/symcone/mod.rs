//! Elementary symmetric functions, Gårding cones and the curvature function
//! `f(κ) = λ_1 ⋯ λ_n` with `λ_i = σ_1(κ) − κ_i`.
//!
//! Everything here is a pure function of a curvature vector. Functions take
//! `&[f64]` so they apply equally to [`Kappa`] values (which deref to a slice),
//! matrix eigenvalues and scratch buffers.

pub mod constants;

use std::ops::Deref;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("order k = {k} out of range [{lo}, {hi}]")]
    OrderOutOfRange { k: usize, lo: usize, hi: usize },
    #[error("curvature vector must have dimension >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("non-finite curvature entry at index {0}")]
    NonFinite(usize),
    #[error("curvature vector not admissible: min lambda = {margin:e}")]
    NotAdmissible { margin: f64 },
}

/// A principal-curvature vector κ ∈ Rⁿ, n ≥ 2, with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Kappa {
    values: Vec<f64>,
}

impl Kappa {
    pub fn new(values: Vec<f64>) -> Result<Self, ConeError> {
        if values.len() < 2 {
            return Err(ConeError::DimensionTooSmall(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ConeError::NonFinite(i));
        }
        Ok(Kappa { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Entries sorted ascending (multiset comparison helper).
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }
}

impl Deref for Kappa {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// All elementary symmetric functions σ_0..σ_n by the expanding-product
/// recurrence `Π (1 + κ_i t)`.
pub fn sigma_all(kappa: &[f64]) -> Vec<f64> {
    let n = kappa.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (m, &x) in kappa.iter().enumerate() {
        for j in (1..=m + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// σ_k(κ); σ_0 = 1.
pub fn sigma(kappa: &[f64], k: usize) -> Result<f64, ConeError> {
    let n = kappa.len();
    if k > n {
        return Err(ConeError::OrderOutOfRange { k, lo: 0, hi: n });
    }
    if k == 0 {
        return Ok(1.0);
    }
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (m, &x) in kappa.iter().enumerate() {
        let top = (m + 1).min(k);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    Ok(e[k])
}

/// σ_k of κ with entry `i` deleted (σ_{k;i}).
pub fn sigma_reduced(kappa: &[f64], k: usize, i: usize) -> Result<f64, ConeError> {
    let n = kappa.len();
    if i >= n {
        return Err(ConeError::IndexOutOfRange { index: i, n });
    }
    if k + 1 > n {
        return Err(ConeError::OrderOutOfRange { k, lo: 0, hi: n - 1 });
    }
    let reduced: Vec<f64> = kappa
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .collect();
    sigma(&reduced, k)
}

/// Membership in the Gårding cone Γ_k: σ_1..σ_k all strictly positive.
pub fn in_gamma_k(kappa: &[f64], k: usize) -> Result<bool, ConeError> {
    let n = kappa.len();
    if k == 0 || k > n {
        return Err(ConeError::OrderOutOfRange { k, lo: 1, hi: n });
    }
    let e = sigma_all(kappa);
    Ok(e[1..=k].iter().all(|&s| s > 0.0))
}

/// λ_i = σ_1(κ) − κ_i = Σ_{j≠i} κ_j.
pub fn lambda_of(kappa: &[f64]) -> Vec<f64> {
    let s: f64 = kappa.iter().sum();
    kappa.iter().map(|&k| s - k).collect()
}

/// min_i λ_i(κ); positive exactly on the open cone Γ.
pub fn cone_margin(kappa: &[f64]) -> f64 {
    lambda_of(kappa)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

pub fn in_gamma(kappa: &[f64]) -> bool {
    cone_margin(kappa) > 0.0
}

/// Admissibility in the solver sense: margin at least `rel_tol · (1 + |σ_1|)`.
pub fn admissible_with_tol(kappa: &[f64], rel_tol: f64) -> bool {
    let s1: f64 = kappa.iter().sum();
    cone_margin(kappa) >= rel_tol * (1.0 + s1.abs())
}

/// f(κ) = Π λ_i(κ), evaluated without any admissibility check.
pub fn f_value(kappa: &[f64]) -> f64 {
    lambda_of(kappa).into_iter().product()
}

/// f(κ) with the closed-cone check: any λ_i < −tol is an error.
pub fn f_value_strict(kappa: &[f64], tol: f64) -> Result<f64, ConeError> {
    let margin = cone_margin(kappa);
    if margin < -tol {
        return Err(ConeError::NotAdmissible { margin });
    }
    Ok(f_value(kappa).max(0.0))
}

/// Products P_m = Π_{l≠m} λ_l, formed with prefix/suffix products (no division).
pub fn lambda_cofactors(lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut out = vec![1.0; n];
    let mut acc = 1.0;
    for m in 0..n {
        out[m] = acc;
        acc *= lambda[m];
    }
    acc = 1.0;
    for m in (0..n).rev() {
        out[m] *= acc;
        acc *= lambda[m];
    }
    out
}

/// ∂f/∂κ_i = Σ_{m≠i} P_m, without the admissibility check.
pub fn f_grad_unchecked(kappa: &[f64]) -> Vec<f64> {
    let p = lambda_cofactors(&lambda_of(kappa));
    let total: f64 = p.iter().sum();
    p.iter().map(|&pm| total - pm).collect()
}

/// ∂f/∂κ_i on Γ; all entries strictly positive there.
pub fn f_grad(kappa: &[f64]) -> Result<Vec<f64>, ConeError> {
    let margin = cone_margin(kappa);
    if margin <= 0.0 {
        return Err(ConeError::NotAdmissible { margin });
    }
    Ok(f_grad_unchecked(kappa))
}

/// f(κ)^{1/n}, defined as 0 on ∂Γ.
pub fn f_normalized(kappa: &[f64], tol: f64) -> Result<f64, ConeError> {
    let f = f_value_strict(kappa, tol)?;
    if f <= 0.0 {
        return Ok(0.0);
    }
    Ok(f.powf(1.0 / kappa.len() as f64))
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Classical Maclaurin constant: σ_1 ≥ c σ_k^{1/k} on Γ_k with
/// c = n · C(n,k)^{−1/k}.
pub fn maclaurin_c0(n: usize, k: usize) -> f64 {
    n as f64 * binomial(n, k).powf(-1.0 / k as f64)
}

/// Constant for σ_{k−1} ≥ c σ_k^{1−1/(k−1)} σ_1^{1/(k−1)} on Γ_k, k ≥ 2.
///
/// From log-concavity of the normalized sequence E_j = σ_j / C(n,j) on Γ_k
/// (Newton's inequalities), evaluated at the indices 1 < k−1 < k:
/// c = C(n,k−1) · C(n,k)^{−(k−2)/(k−1)} · n^{−1/(k−1)}.
pub fn newton_maclaurin_c0(n: usize, k: usize) -> f64 {
    assert!(k >= 2 && k <= n);
    let km1 = (k - 1) as f64;
    binomial(n, k - 1) * binomial(n, k).powf(-(k as f64 - 2.0) / km1) * (n as f64).powf(-1.0 / km1)
}

/// Lower bound δ_0 in f_j ≥ δ_0 Σ_i f_i whenever κ_j < 0 and κ ∈ Γ.
pub fn delta0(n: usize) -> f64 {
    1.0 / (n * (n - 1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn sigma_examples() {
        let k = [1.0, 2.0, 3.0];
        assert_eq!(sigma(&k, 2).unwrap(), 11.0);
        assert_eq!(sigma(&k, 0).unwrap(), 1.0);
        assert_eq!(sigma(&[-4.5, 0.1], 0).unwrap(), 1.0);
        assert_eq!(sigma(&k, 3).unwrap(), 6.0);
        assert_eq!(sigma(&k, 1).unwrap(), 6.0);
        assert!(matches!(
            sigma(&k, 4),
            Err(ConeError::OrderOutOfRange { k: 4, .. })
        ));
        assert_eq!(sigma_all(&k), vec![1.0, 6.0, 11.0, 6.0]);
    }

    #[test]
    fn sigma_reduced_examples() {
        let k = [1.0, 2.0, 3.0];
        assert_eq!(sigma_reduced(&k, 2, 0).unwrap(), 6.0);
        assert_eq!(sigma_reduced(&k, 1, 2).unwrap(), 3.0);
        let total: f64 = (0..3).map(|i| sigma_reduced(&k, 1, i).unwrap()).sum();
        assert_eq!(total, 12.0);
        assert!(sigma_reduced(&k, 1, 3).is_err());
        assert!(sigma_reduced(&k, 3, 0).is_err());
    }

    #[test]
    fn gamma_k_membership() {
        assert!(in_gamma_k(&[1.0, 1.0, 1.0], 3).unwrap());
        assert!(!in_gamma_k(&[-1.0, 2.0, 2.0], 2).unwrap());
        assert!(in_gamma_k(&[-1.0, 2.0, 2.0], 1).unwrap());
        assert!(in_gamma_k(&[1.0, 1.0], 0).is_err());
        assert!(in_gamma_k(&[1.0, 1.0], 3).is_err());
    }

    #[test]
    fn lambda_and_cone() {
        assert_eq!(lambda_of(&[1.0, 2.0, 3.0]), vec![5.0, 4.0, 3.0]);
        assert_eq!(lambda_of(&[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(lambda_of(&[-1.0, 2.0, 2.0]), vec![4.0, 1.0, 1.0]);
        assert!(in_gamma(&[-1.0, 2.0, 2.0]));
        assert!(!in_gamma(&[-1.0, 0.5, 0.5]));
        assert_eq!(cone_margin(&[-1.0, 0.5, 0.5]), -0.5);
        assert!(!in_gamma(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn f_examples() {
        assert_eq!(f_value(&[1.0, 1.0, 1.0]), 8.0);
        assert_eq!(f_value(&[-1.0, 2.0, 2.0]), 4.0);
        assert_eq!(f_value(&[1.0, 2.0, 3.0]), 60.0);
        // boundary of Γ: λ = (0, 2, 2)
        assert_eq!(f_value(&[2.0, 0.0, 0.0]), 0.0);
        assert!(f_value_strict(&[-1.0, 0.5, 0.5], 1e-12).is_err());
        assert_eq!(f_value_strict(&[2.0, 0.0, 0.0], 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn f_grad_examples() {
        assert_eq!(f_grad(&[1.0, 1.0, 1.0]).unwrap(), vec![8.0, 8.0, 8.0]);
        assert_eq!(f_grad(&[1.0, 2.0, 3.0]).unwrap(), vec![35.0, 32.0, 27.0]);
        assert_eq!(f_grad(&[-1.0, 2.0, 2.0]).unwrap(), vec![8.0, 5.0, 5.0]);
        assert!(f_grad(&[-1.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn f_grad_matches_central_differences() {
        for kappa in [[1.0, 1.0, 1.0], [1.0, 2.0, 3.0], [-1.0, 2.0, 2.0]] {
            let g = f_grad(&kappa).unwrap();
            for i in 0..3 {
                let t = 1e-6;
                let mut kp = kappa;
                let mut km = kappa;
                kp[i] += t;
                km[i] -= t;
                let fd = (f_value(&kp) - f_value(&km)) / (2.0 * t);
                assert!(close(g[i], fd, 1e-6), "{kappa:?} {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn f_normalized_examples() {
        assert!(close(f_normalized(&[1.0, 1.0, 1.0], 1e-12).unwrap(), 2.0, 1e-15));
        assert_eq!(f_normalized(&[2.0, 0.0, 0.0], 1e-12).unwrap(), 0.0);
        assert!(close(
            f_normalized(&[1.0, 2.0, 3.0], 1e-12).unwrap(),
            3.914867641168863,
            1e-14
        ));
    }

    #[test]
    fn kappa_validation() {
        assert!(Kappa::new(vec![1.0]).is_err());
        assert!(Kappa::new(vec![1.0, f64::NAN]).is_err());
        let k = Kappa::new(vec![3.0, 1.0]).unwrap();
        assert_eq!(k.sorted(), vec![1.0, 3.0]);
        assert_eq!(sigma(&k, 2).unwrap(), 3.0);
    }

    #[test]
    fn constants_closed_forms() {
        // k = n: AM-GM gives σ_1 ≥ n σ_n^{1/n}
        assert!(close(maclaurin_c0(3, 3), 3.0, 1e-15));
        // k = 1 is the identity σ_1 ≥ σ_1
        assert!(close(maclaurin_c0(4, 1), 1.0, 1e-15));
        // for k = 2 the Newton–Maclaurin bound reads σ_1 ≥ c σ_1, c = 1
        assert!(close(newton_maclaurin_c0(5, 2), 1.0, 1e-15));
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(delta0(3), 1.0 / 6.0);
    }
}
