//! Deterministic random samplers for cone vectors, rotations and admissible
//! graph states.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graphgeom::{hessian_from_curvature, PointState};
use crate::symcone;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn log_uniform<R: Rng>(rng: &mut R, lo_exp: f64, hi_exp: f64) -> f64 {
    10f64.powf(lo_exp + (hi_exp - lo_exp) * rng.random::<f64>())
}

/// κ ∈ Γ by drawing λ_i log-uniform in [1e−2, 10] and inverting
/// κ_i = σ_1(λ)/(n−1) − λ_i.
pub fn sample_gamma<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let lam: Vec<f64> = (0..n).map(|_| log_uniform(rng, -2.0, 1.0)).collect();
    kappa_from_lambda(&lam)
}

/// Inverse of the λ-map.
pub fn kappa_from_lambda(lam: &[f64]) -> Vec<f64> {
    let n = lam.len() as f64;
    let s: f64 = lam.iter().sum::<f64>() / (n - 1.0);
    lam.iter().map(|l| s - l).collect()
}

/// κ ∈ Γ_k by rejection from the box [−1, 2]ⁿ.
pub fn sample_gamma_k<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    loop {
        let kappa: Vec<f64> = (0..n).map(|_| 3.0 * rng.random::<f64>() - 1.0).collect();
        if symcone::in_gamma_k(&kappa, k).unwrap_or(false) {
            return kappa;
        }
    }
}

/// Uniform entries in [−a, a].
pub fn sample_box<R: Rng>(rng: &mut R, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| a * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, signs fixed).
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Gradient with Gaussian direction and log-uniform scale in [0.1, 3].
pub fn random_gradient<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let g = DVector::from_vec(gaussian_vec(rng, n));
    let norm = g.norm().max(1e-300);
    let scale = log_uniform(rng, -1.0, 0.5);
    g.iter().map(|v| v / norm * scale).collect()
}

/// Symmetric matrix Q diag(eigs) Qᵀ with a random rotation Q.
pub fn rotate_diag<R: Rng>(rng: &mut R, eigs: &[f64]) -> DMatrix<f64> {
    let q = random_orthogonal(rng, eigs.len());
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    crate::linalg::symmetrize(&(&q * d * q.transpose()))
}

/// (r, p) whose principal curvatures are a random κ ∈ Γ.
pub fn random_admissible_state<R: Rng>(rng: &mut R, n: usize) -> PointState {
    let kappa = sample_gamma(rng, n);
    let a = rotate_diag(rng, &kappa);
    let p = random_gradient(rng, n);
    let r = hessian_from_curvature(&a, &p);
    PointState { p, r }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samplers_land_in_their_cones() {
        let mut rng = rng_for(1, 0);
        for n in 2..7 {
            for _ in 0..200 {
                assert!(symcone::in_gamma(&sample_gamma(&mut rng, n)));
                for k in 1..=n {
                    assert!(symcone::in_gamma_k(&sample_gamma_k(&mut rng, n, k), k).unwrap());
                }
            }
            let q = random_orthogonal(&mut rng, n);
            let e = (&q * q.transpose() - DMatrix::identity(n, n)).abs().max();
            assert!(e < 1e-13);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<f64> = sample_gamma(&mut rng_for(42, 3), 4);
        let b: Vec<f64> = sample_gamma(&mut rng_for(42, 3), 4);
        let c: Vec<f64> = sample_gamma(&mut rng_for(42, 4), 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
