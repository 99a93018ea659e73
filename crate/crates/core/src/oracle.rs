//! Reference computations that avoid the production code paths: determinants
//! instead of eigenvalues, principal-minor sums instead of σ-recurrences, and
//! Richardson-extrapolated finite differences.

use nalgebra::DMatrix;

/// g⁻¹ = I − p pᵀ / (1 + |p|²).
pub fn inverse_metric(p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    let q = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - p[i] * p[j] / q)
}

/// K_η = det(g⁻¹η) with η = H g − r/w and H = tr(g⁻¹ r)/w, i.e.
/// det(H I − g⁻¹ r / w). No eigen-solve, no γ-tensors.
pub fn k_eta_det(r: &DMatrix<f64>, p: &[f64]) -> f64 {
    let n = p.len();
    let w = (1.0 + p.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let gr = inverse_metric(p) * r / w;
    let h = gr.trace();
    (DMatrix::identity(n, n) * h - gr).determinant()
}

/// All k-subsets of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// (Σ of k×k principal minors, Σ of their absolute values) of `m`; the first
/// is σ_k of the eigenvalues of `m`.
pub fn principal_minor_sum(m: &DMatrix<f64>, k: usize) -> (f64, f64) {
    if k == 0 {
        return (1.0, 1.0);
    }
    let n = m.nrows();
    let (mut s, mut a) = (0.0, 0.0);
    for idx in subsets(n, k) {
        let d = DMatrix::from_fn(k, k, |i, j| m[(idx[i], idx[j])]).determinant();
        s += d;
        a += d.abs();
    }
    (s, a)
}

/// S_k(r, p) = σ_k(λ(g⁻¹ r)) by principal minors, with an absolute scale.
pub fn s_k_minors(r: &DMatrix<f64>, p: &[f64], k: usize) -> (f64, f64) {
    principal_minor_sum(&(inverse_metric(p) * r), k)
}

/// σ_k(κ) by brute-force subset products, with Σ|products| as scale.
pub fn sigma_subsets(kappa: &[f64], k: usize) -> (f64, f64) {
    let (mut s, mut a) = (0.0, 0.0);
    for idx in subsets(kappa.len(), k) {
        let prod: f64 = idx.iter().map(|&i| kappa[i]).product();
        s += prod;
        a += prod.abs();
    }
    (s, a)
}

/// Central difference with one Richardson step:
/// (4 D(t/2) − D(t)) / 3, D(t) = (f(t) − f(−t)) / 2t. Error O(t⁴).
pub fn richardson_derivative(f: impl Fn(f64) -> f64, t: f64) -> f64 {
    let d = |s: f64| (f(s) - f(-s)) / (2.0 * s);
    (4.0 * d(0.5 * t) - d(t)) / 3.0
}

/// Two Richardson levels on central differences at t, t/2, t/4. Error O(t⁶);
/// exact up to rounding for polynomials of degree ≤ 6.
pub fn richardson_derivative2(f: impl Fn(f64) -> f64, t: f64) -> f64 {
    let d = |s: f64| (f(s) - f(-s)) / (2.0 * s);
    let (d1, d2, d4) = (d(t), d(0.5 * t), d(0.25 * t));
    let e1 = (4.0 * d2 - d1) / 3.0;
    let e2 = (4.0 * d4 - d2) / 3.0;
    (16.0 * e2 - e1) / 15.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_counts() {
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(5, 0), vec![Vec::<usize>::new()]);
        assert_eq!(sigma_subsets(&[1.0, 2.0, 3.0], 2).0, 11.0);
    }

    #[test]
    fn k_eta_examples() {
        // p = 0, r = I: λ = (1, 1) for n = 2, K = 1; sphere-cap tilt example K = 0.25
        let id = DMatrix::identity(2, 2);
        assert!((k_eta_det(&id, &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((k_eta_det(&id, &[1.0, 0.0]) - 0.25).abs() < 1e-15);
        assert!((k_eta_det(&DMatrix::identity(3, 3), &[0.0; 3]) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn richardson_is_fourth_order() {
        let d = richardson_derivative(|t| (1.0 + t).exp(), 1e-2);
        assert!((d - 1f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn second_richardson_level_is_exact_on_sextics() {
        let f = |x: f64| 3.0 * x.powi(6) - x.powi(5) + 2.0 * x.powi(3) + x + 0.5;
        let d = richardson_derivative2(|s| f(0.3 + s), 0.2);
        let exact = 18.0 * 0.3f64.powi(5) - 5.0 * 0.3f64.powi(4) + 6.0 * 0.09 + 1.0;
        assert!((d - exact).abs() < 1e-12);
    }
}
