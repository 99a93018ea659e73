//! Pointwise geometry of the graph `M_u = {(x, u(x))}` from the pair
//! `(r, p) = (D²u, Du)`.
//!
//! With `w = √(1+|p|²)`, `γ^{ik} = δ_ik − p_i p_k / (w(1+w))` and its inverse
//! `γ_{ij} = δ_ij + p_i p_j / (1+w)` (the square root of `g = I + p⊗p`), the
//! principal curvatures are the eigenvalues of the symmetric matrix
//! `A = (1/w) γ^{-} r γ^{-}`. The equation operator is `G(r, p) = f(κ(A))`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{symmetric_eigen, EigenError, SymmetricEigen};
use crate::symcone::{self, ConeError, Kappa};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("dimension mismatch: gradient has {p} entries, Hessian is {r}x{r}")]
    DimensionMismatch { p: usize, r: usize },
    #[error("Hessian is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("state is not admissible (cone margin {margin:e})")]
    NotAdmissible { margin: f64 },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

/// The pair (D²u, Du) at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointState {
    pub p: Vec<f64>,
    pub r: DMatrix<f64>,
}

impl PointState {
    pub fn new(p: Vec<f64>, r: DMatrix<f64>) -> Result<Self, GeomError> {
        let n = p.len();
        if r.nrows() != n || r.ncols() != n || n < 2 {
            return Err(GeomError::DimensionMismatch { p: n, r: r.nrows() });
        }
        let asym = (&r - r.transpose()).amax();
        if asym > 1e-14 * r.amax().max(1.0) {
            return Err(GeomError::NotSymmetric(asym));
        }
        Ok(PointState { p, r })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

/// First derivatives of `G` at an admissible state.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// f_i(κ)
    pub f_grad: Vec<f64>,
    /// F^{ij} = ∂f(λ(A))/∂a_ij
    pub f_mat: DMatrix<f64>,
    /// G^{ij} = ∂G/∂r_ij
    pub g2: DMatrix<f64>,
    /// G^s = ∂G/∂p_s
    pub gs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub w: f64,
    /// Upward unit normal (−p, 1)/w.
    pub nu: Vec<f64>,
    pub gamma_up: DMatrix<f64>,
    pub gamma_down: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Principal curvatures, ascending.
    pub kappa: Kappa,
    /// Columns are eigenvectors of `a` matching `kappa`.
    pub eigvecs: DMatrix<f64>,
    /// K_η = Π λ_i(κ).
    pub k_eta: f64,
    /// min_i λ_i(κ).
    pub margin: f64,
    /// Present iff κ ∈ Γ.
    pub linearization: Option<Linearization>,
}

impl PointGeometry {
    pub fn admissible(&self) -> bool {
        self.linearization.is_some()
    }

    pub fn sigma1(&self) -> f64 {
        self.kappa.iter().sum()
    }
}

pub fn metric_factor(p: &[f64]) -> f64 {
    (1.0 + p.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// γ^{ik} = δ_ik − p_i p_k / (w(1+w)).
pub fn gamma_up(p: &[f64]) -> DMatrix<f64> {
    let w = metric_factor(p);
    let c = 1.0 / (w * (1.0 + w));
    let n = p.len();
    DMatrix::from_fn(n, n, |i, k| if i == k { 1.0 } else { 0.0 } - c * p[i] * p[k])
}

/// γ_{ij} = δ_ij + p_i p_j / (1+w).
pub fn gamma_down(p: &[f64]) -> DMatrix<f64> {
    let w = metric_factor(p);
    let c = 1.0 / (1.0 + w);
    let n = p.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + c * p[i] * p[j])
}

/// Curvature matrix a_ij = (1/w) γ^{ik} r_kl γ^{lj}.
pub fn curvature_matrix(state: &PointState) -> DMatrix<f64> {
    let w = metric_factor(&state.p);
    let g = gamma_up(&state.p);
    let a = &g * &state.r * &g / w;
    crate::linalg::symmetrize(&a)
}

/// Inverse of the curvature map: the Hessian whose curvature matrix at
/// gradient `p` is `a`, i.e. r = w γ_{·} a γ_{·}.
pub fn hessian_from_curvature(a: &DMatrix<f64>, p: &[f64]) -> DMatrix<f64> {
    let w = metric_factor(p);
    let gd = gamma_down(p);
    crate::linalg::symmetrize(&(&gd * a * &gd * w))
}

/// F = Σ_s b_{·s} f_s b_{·s}ᵀ.
pub fn spectral_grad(fgrad: &[f64], eigvecs: &DMatrix<f64>) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(fgrad));
    crate::linalg::symmetrize(&(eigvecs * d * eigvecs.transpose()))
}

fn eigen_of(a: &DMatrix<f64>) -> Result<SymmetricEigen, GeomError> {
    Ok(symmetric_eigen(a)?)
}

/// Every pointwise quantity the equation needs. Non-admissible states are
/// reported through `linearization == None`, never as an error.
pub fn geometry_at(state: &PointState) -> Result<PointGeometry, GeomError> {
    let n = state.dim();
    let p = &state.p;
    let w = metric_factor(p);
    let mut nu: Vec<f64> = p.iter().map(|v| -v / w).collect();
    nu.push(1.0 / w);
    let gu = gamma_up(p);
    let gd = gamma_down(p);
    let a = curvature_matrix(state);
    let eig = eigen_of(&a)?;
    let kappa = Kappa::new(eig.values.clone())?;
    let k_eta = symcone::f_value(&kappa);
    let margin = symcone::cone_margin(&kappa);

    let linearization = if margin > 0.0 {
        let f_grad = symcone::f_grad_unchecked(&kappa);
        let f_mat = spectral_grad(&f_grad, &eig.vectors);
        let g2 = crate::linalg::symmetrize(&(&gu * &f_mat * &gu / w));
        let gs = gradient_coeffs_from(p, w, &gu, &a, &kappa, &f_grad, &f_mat);
        Some(Linearization { f_grad, f_mat, g2, gs })
    } else {
        None
    };
    debug_assert_eq!(a.nrows(), n);

    Ok(PointGeometry {
        w,
        nu,
        gamma_up: gu,
        gamma_down: gd,
        a,
        kappa,
        eigvecs: eig.vectors,
        k_eta,
        margin,
        linearization,
    })
}

/// G^s = −(u_s/w²) Σ_i f_i κ_i − (2/(w(1+w))) Σ_{i,t,j} F^{ij} a_{it} (w u_t γ^{sj} + u_j γ^{ts}).
///
/// The first term carries 1/w² (the derivative of the 1/w prefactor of `A`).
fn gradient_coeffs_from(
    p: &[f64],
    w: f64,
    gu: &DMatrix<f64>,
    a: &DMatrix<f64>,
    kappa: &[f64],
    f_grad: &[f64],
    f_mat: &DMatrix<f64>,
) -> Vec<f64> {
    let n = p.len();
    let trace_fk: f64 = f_grad.iter().zip(kappa).map(|(f, k)| f * k).sum();
    let c = 2.0 / (w * (1.0 + w));
    (0..n)
        .map(|s| {
            let mut acc = 0.0;
            for i in 0..n {
                for t in 0..n {
                    let fa_it = a[(i, t)];
                    if fa_it == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        acc += f_mat[(i, j)] * fa_it * (w * p[t] * gu[(s, j)] + p[j] * gu[(t, s)]);
                    }
                }
            }
            -(p[s] / (w * w)) * trace_fk - c * acc
        })
        .collect()
}

/// G(r, p) = f(κ(A)).
pub fn g_value(state: &PointState) -> Result<f64, GeomError> {
    let a = curvature_matrix(state);
    let eig = eigen_of(&a)?;
    Ok(symcone::f_value(&eig.values))
}

fn require_linearization(state: &PointState) -> Result<Linearization, GeomError> {
    let geom = geometry_at(state)?;
    let margin = geom.margin;
    geom.linearization
        .ok_or(GeomError::NotAdmissible { margin })
}

/// G^{ij} = (1/w) Σ_{s,t} F^{st} γ^{is} γ^{tj}; positive definite on Γ.
pub fn g_hessian_coeffs(state: &PointState) -> Result<DMatrix<f64>, GeomError> {
    Ok(require_linearization(state)?.g2)
}

/// G^s = ∂G/∂p_s at fixed r.
pub fn g_gradient_coeffs(state: &PointState) -> Result<Vec<f64>, GeomError> {
    Ok(require_linearization(state)?.gs)
}

/// λ(r, p): eigenvalues of (I − p⊗p/(1+|p|²)) r, computed through the
/// symmetric similarity M^{1/2} r M^{1/2}; M^{1/2} is exactly γ^{-}.
pub fn lambda_rp(r: &DMatrix<f64>, p: &[f64]) -> Result<Vec<f64>, GeomError> {
    let g = gamma_up(p);
    let b = crate::linalg::symmetrize(&(&g * r * &g));
    Ok(eigen_of(&b)?.values)
}

/// S_k(r, p) = σ_k(λ(r, p)).
pub fn s_k(r: &DMatrix<f64>, p: &[f64], k: usize) -> Result<f64, GeomError> {
    Ok(symcone::sigma(&lambda_rp(r, p)?, k)?)
}

/// ∂S_k(r,p)/∂r_ii = ((1+|p(i)|²)/(1+|p|²)) · S_{k−1}(r(i), p(i)),
/// with r(i), p(i) having row/column/entry i removed.
pub fn ilt_coefficient(r: &DMatrix<f64>, p: &[f64], k: usize, i: usize) -> Result<f64, GeomError> {
    let n = p.len();
    if r.nrows() != n || r.ncols() != n {
        return Err(GeomError::DimensionMismatch { p: n, r: r.nrows() });
    }
    if k == 0 || k > n {
        return Err(ConeError::OrderOutOfRange { k, lo: 1, hi: n }.into());
    }
    if i >= n {
        return Err(ConeError::IndexOutOfRange { index: i, n }.into());
    }
    let p_norm2: f64 = p.iter().map(|v| v * v).sum();
    let pi_norm2 = p_norm2 - p[i] * p[i];
    let factor = (1.0 + pi_norm2) / (1.0 + p_norm2);
    if k == 1 {
        return Ok(factor);
    }
    let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let r_red = DMatrix::from_fn(n - 1, n - 1, |a, b| r[(keep[a], keep[b])]);
    let p_red: Vec<f64> = keep.iter().map(|&j| p[j]).collect();
    let lam = lambda_rp(&r_red, &p_red)?;
    Ok(factor * symcone::sigma(&lam, k - 1)?)
}

/// Eigenvalues of g⁻¹η with η = H g − h, h = r/w, H = tr(g⁻¹h), formed
/// through the symmetric form γ^{-} η γ^{-}. Ascending.
pub fn eta_eigen(state: &PointState) -> Result<Vec<f64>, GeomError> {
    let n = state.dim();
    let p = &state.p;
    let w = metric_factor(p);
    let pv = DVector::from_column_slice(p);
    let g = DMatrix::identity(n, n) + &pv * pv.transpose();
    let g_inv = DMatrix::identity(n, n) - &pv * pv.transpose() / (w * w);
    let h = &state.r / w;
    let mean = (&g_inv * &h).trace();
    let eta = &g * mean - &h;
    let gu = gamma_up(p);
    let s = crate::linalg::symmetrize(&(&gu * eta * &gu));
    Ok(eigen_of(&s)?.values)
}

/// F̂^{ij} = ∂σ_n(λ(η))/∂η_ij in the orthonormal frame of `A`'s eigenvectors,
/// rotated back to coordinates: B diag(Π_{l≠s} λ_l) Bᵀ.
pub fn eta_cofactor(geom: &PointGeometry) -> DMatrix<f64> {
    let lam = symcone::lambda_of(&geom.kappa);
    let cof = symcone::lambda_cofactors(&lam);
    spectral_grad(&cof, &geom.eigvecs)
}
