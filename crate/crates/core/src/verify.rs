//! Certificates on solutions, the subsolution checker, and the randomized
//! property battery over the cone algebra and graph geometry.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::domaingrid::Grid;
use crate::graphgeom::{self, geometry_at, PointState};
use crate::oracle;
use crate::psilang::{eval, eval_gradient_x, EvalEnv, Expr};
use crate::sampling;
use crate::solver::{self, GridFunction, ProblemSpec, SolveReport, SolverError};
use crate::symcone;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("grid mismatch: {0} vs {1} nodes")]
    GridMismatch(usize, usize),
    #[error("evidence needs at least 2 eps-stages, report has {0}")]
    InsufficientStages(usize),
}

/// Outcome of one check. `pass` iff `margin ≥ −tol` (or `> −tol` for strict
/// properties); margin and tolerance are always recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub pass: bool,
    pub worst_node: Option<usize>,
    pub margin: f64,
    pub tol: f64,
    pub detail: String,
}

impl Certificate {
    fn judge(name: &str, margin: f64, tol: f64, worst_node: Option<usize>, detail: String) -> Self {
        Certificate { name: name.into(), pass: margin >= -tol, worst_node, margin, tol, detail }
    }

    /// Machine-readable "name=pass|fail margin=… tol=…".
    pub fn line(&self) -> String {
        format!(
            "{}={} margin={:e} tol={:e}",
            self.name,
            if self.pass { "pass" } else { "fail" },
            self.margin,
            self.tol
        )
    }
}

/// Plain-text table followed by one machine line per certificate.
pub fn format_certificates(certs: &[Certificate]) -> String {
    let width = certs.iter().map(|c| c.name.len()).max().unwrap_or(4).max(11);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<6}  {:>12}  {:>10}  {:>6}  detail", "certificate", "result", "margin", "tol", "node");
    for c in certs {
        let node = c.worst_node.map_or("-".to_string(), |k| k.to_string());
        let _ = writeln!(
            out,
            "{:<width$}  {:<6}  {:>12.4e}  {:>10.1e}  {:>6}  {}",
            c.name,
            if c.pass { "pass" } else { "FAIL" },
            c.margin,
            c.tol,
            node,
            c.detail
        );
    }
    for c in certs {
        let _ = writeln!(out, "{}", c.line());
    }
    out
}

/// max u ≤ tol.
pub fn check_maximum_principle(u: &GridFunction, tol: f64) -> Certificate {
    let (node, max) = u
        .values
        .iter()
        .enumerate()
        .fold((None, f64::NEG_INFINITY), |(k, m), (i, &v)| if v > m || v.is_nan() { (Some(i), v) } else { (k, m) });
    let margin = if u.is_empty() { 0.0 } else { -max };
    Certificate::judge("maximum_principle", margin, tol, node, format!("max u = {max:.6e}"))
}

/// min (u − u̲) ≥ −tol.
pub fn check_comparison(u: &GridFunction, usub: &GridFunction, tol: f64) -> Result<Certificate, VerifyError> {
    if u.len() != usub.len() {
        return Err(VerifyError::GridMismatch(u.len(), usub.len()));
    }
    let (mut node, mut min) = (None, f64::INFINITY);
    for (k, (a, b)) in u.values.iter().zip(&usub.values).enumerate() {
        let d = a - b;
        if d < min || d.is_nan() {
            node = Some(k);
            min = d;
        }
    }
    let margin = if u.is_empty() { 0.0 } else { min };
    Ok(Certificate::judge("comparison", margin, tol, node, format!("min(u - u_sub) = {margin:.6e}")))
}

pub const ADMISSIBILITY_TOL: f64 = 1e-10;

/// min over nodes of λ_min / (1 + |σ_1|) ≥ −1e−10.
pub fn check_admissibility(u: &GridFunction, grid: &Grid) -> Certificate {
    let per: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let st = crate::domaingrid::fd_derivatives(grid, &u.values, k);
            match geometry_at(&st) {
                Ok(g) => (g.margin / (1.0 + g.sigma1().abs()), g.margin),
                Err(_) => (f64::NAN, f64::NAN),
            }
        })
        .collect();
    let (mut node, mut worst, mut raw) = (None, f64::INFINITY, f64::INFINITY);
    for (k, &(m, r)) in per.iter().enumerate() {
        if m < worst || m.is_nan() {
            node = Some(k);
            worst = m;
            raw = r;
        }
    }
    if per.is_empty() {
        worst = 0.0;
    }
    Certificate::judge("admissibility", worst, ADMISSIBILITY_TOL, node, format!("min Gamma-margin = {raw:.6e}"))
}

/// ‖G^{1/n} − ψ_ε^{1/n}‖∞ ≤ tol on the stored solution.
pub fn check_residual(spec: &ProblemSpec, grid: &Grid, u: &GridFunction, eps: f64, tol: f64) -> Certificate {
    match solver::solution_rows(spec, grid, u, eps) {
        Ok(rows) => {
            let (mut node, mut worst) = (None, 0.0f64);
            for (k, r) in rows.iter().enumerate() {
                if r.residual.abs() > worst || r.residual.is_nan() {
                    node = Some(k);
                    worst = r.residual.abs();
                }
            }
            Certificate::judge("residual", -worst, tol, node, format!("eps = {eps:e}"))
        }
        Err(e) => Certificate::judge("residual", f64::NEG_INFINITY, tol, None, e.to_string()),
    }
}

pub const SUBSOLUTION_TOL: f64 = 1e-10;
/// Allowance for the finite-difference Hessian of the subsolution.
pub const SUBSOLUTION_FD_ALLOWANCE: f64 = 1e-8;
pub const SUBSOLUTION_INTERIOR_SAMPLES: usize = 2000;
pub const SUBSOLUTION_BOUNDARY_SAMPLES: usize = 1000;

/// Value, gradient and Hessian of an x-only expression; the Hessian is the
/// central difference (step 1e−5) of the dual-number gradient.
pub fn expr_second_order(e: &Expr, x: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>), SolverError> {
    let n = x.len();
    let (v, g) = eval_gradient_x(e, x)?;
    let t = 1e-5;
    let mut hess = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += t;
        xm[j] -= t;
        let (_, gp) = eval_gradient_x(e, &xp)?;
        let (_, gm) = eval_gradient_x(e, &xm)?;
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * t);
        }
    }
    Ok((v, g, crate::linalg::symmetrize(&hess)))
}

/// Samples the interior and boundary; per interior point the slack is the
/// smaller of λ_min/(1+|σ_1|) and (K_η − ψ)/max(1, ψ) + 1e−8, per boundary
/// point −|u̲|. Pass iff the worst slack ≥ −1e−10.
pub fn check_subsolution(usub: &Expr, spec: &ProblemSpec) -> Result<Certificate, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = f64::INFINITY;
    let mut what = String::new();
    for _ in 0..SUBSOLUTION_INTERIOR_SAMPLES {
        let x = spec.shape.sample_interior(&mut rng);
        let (v, p, r) = expr_second_order(usub, &x)?;
        let geom = geometry_at(&PointState { p: p.clone(), r })?;
        let cone = geom.margin / (1.0 + geom.sigma1().abs());
        let psi = eval(&spec.psi, &EvalEnv::at(&x, v, &p))?;
        let dominance = (geom.k_eta - psi) / psi.abs().max(1.0) + SUBSOLUTION_FD_ALLOWANCE;
        let slack = cone.min(dominance);
        if slack < worst || slack.is_nan() {
            worst = slack;
            what = format!("at x = {x:?}: K_eta = {:.6e}, psi = {psi:.6e}, margin = {:.6e}", geom.k_eta, geom.margin);
        }
    }
    for x in spec.shape.sample_boundary(SUBSOLUTION_BOUNDARY_SAMPLES) {
        let zeros = vec![0.0; x.len()];
        let v = eval(usub, &EvalEnv::at(&x, 0.0, &zeros))?;
        let slack = -v.abs();
        if slack < worst || slack.is_nan() {
            worst = slack;
            what = format!("boundary value {v:.6e} at {x:?}");
        }
    }
    Ok(Certificate::judge("subsolution", worst, SUBSOLUTION_TOL, None, what))
}

/// Relative changes of sup|Du| and sup|D²u| between the last two stages.
pub fn evidence_changes(report: &SolveReport) -> Result<(f64, f64), VerifyError> {
    let k = report.stages.len();
    if k < 2 {
        return Err(VerifyError::InsufficientStages(k));
    }
    let (a, b) = (&report.stages[k - 2].bounds, &report.stages[k - 1].bounds);
    let rel = |x: f64, y: f64| (y - x).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
    Ok((rel(a.sup_du, b.sup_du), rel(a.sup_d2u, b.sup_d2u)))
}

pub const EVIDENCE_THRESHOLD: f64 = 0.10;

/// Both changes below 10%: margin = 0.1 − max change, strict.
pub fn estimate_evidence(report: &SolveReport) -> Result<Certificate, VerifyError> {
    let (du, d2u) = evidence_changes(report)?;
    let margin = EVIDENCE_THRESHOLD - du.max(d2u);
    let mut c = Certificate::judge(
        "c11_evidence",
        margin,
        0.0,
        None,
        format!("change sup|Du| = {du:.3e}, sup|D2u| = {d2u:.3e}"),
    );
    c.pass = margin > 0.0;
    Ok(c)
}

pub const MAX_PRINCIPLE_TOL: f64 = 1e-10;
pub const COMPARISON_TOL: f64 = 1e-10;
/// The residual certificate allows this multiple of the Newton tolerance.
pub const RESIDUAL_TOL_FACTOR: f64 = 10.0;

/// Certificates attached to a continuation solve.
pub fn solution_certificates(
    spec: &ProblemSpec,
    grid: &Grid,
    u: &GridFunction,
    u_init: &GridFunction,
    report: &SolveReport,
) -> Result<Vec<Certificate>, SolverError> {
    let eps = report.final_stage().map_or(0.0, |s| s.eps);
    let mut certs = vec![
        check_maximum_principle(u, MAX_PRINCIPLE_TOL),
        check_comparison(u, u_init, COMPARISON_TOL).map_err(|e| SolverError::InvalidSpec(e.to_string()))?,
        check_admissibility(u, grid),
        check_residual(spec, grid, u, eps, RESIDUAL_TOL_FACTOR * spec.newton.tol_residual),
    ];
    if let Ok(c) = estimate_evidence(report) {
        certs.push(c);
    }
    Ok(certs)
}

// ---------------------------------------------------------------------------
// property battery

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryOptions {
    pub seed: u64,
    pub samples: usize,
    pub dims: Vec<usize>,
    /// Replace f_grad by a wrong chain rule (mutation test).
    pub mutate_fgrad: bool,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions { seed: 42, samples: 10_000, dims: vec![2, 3, 4, 5, 6], mutate_fgrad: false }
    }
}

type SampleFn = fn(&mut ChaCha8Rng, usize, &BatteryOptions) -> Vec<f64>;

struct Property {
    name: &'static str,
    tol: f64,
    /// Violation iff margin ≤ −tol instead of < −tol.
    strict: bool,
    sample: SampleFn,
}

fn fgrad_for(kappa: &[f64], opts: &BatteryOptions) -> Vec<f64> {
    if opts.mutate_fgrad {
        // P_i − Σ_{m≠i} P_m: the chain rule with the wrong sign
        let cof = symcone::lambda_cofactors(&symcone::lambda_of(kappa));
        let total: f64 = cof.iter().sum();
        cof.iter().map(|p| 2.0 * p - total).collect()
    } else {
        symcone::f_grad_unchecked(kappa)
    }
}

fn abs_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.abs()).collect()
}

/// Π_i Σ_{j≠i} |κ_j|: cancellation-free magnitude of f(κ).
fn f_scale(kappa: &[f64]) -> f64 {
    let s: f64 = kappa.iter().map(|v| v.abs()).sum();
    kappa.iter().map(|v| s - v.abs()).product()
}

fn rel_margin(a: f64, b: f64, scale: f64) -> f64 {
    -(a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

fn prop_sigma_identities(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let kappa = sampling::sample_box(rng, n, 2.0);
    let abs = abs_vec(&kappa);
    let mut out = Vec::with_capacity(2 * n);
    for k in 1..=n {
        let red: f64 = (0..n).map(|i| symcone::sigma_reduced(&kappa, k - 1, i).unwrap()).sum();
        let whole = symcone::sigma(&kappa, k - 1).unwrap();
        let scale = (n - k + 1) as f64 * symcone::sigma(&abs, k - 1).unwrap();
        out.push(rel_margin(red, (n - k + 1) as f64 * whole, scale));
        let weighted: f64 = (0..n).map(|i| symcone::sigma_reduced(&kappa, k - 1, i).unwrap() * kappa[i]).sum();
        let sk = symcone::sigma(&kappa, k).unwrap();
        out.push(rel_margin(weighted, k as f64 * sk, k as f64 * symcone::sigma(&abs, k).unwrap()));
    }
    out
}

fn prop_sigma_oracle(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let kappa = sampling::sample_box(rng, n, 2.0);
    (0..=n)
        .map(|k| {
            let (s, scale) = oracle::sigma_subsets(&kappa, k);
            rel_margin(symcone::sigma(&kappa, k).unwrap(), s, scale)
        })
        .collect()
}

fn prop_maclaurin(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let k = rng.random_range(1..=n);
    let kappa = sampling::sample_gamma_k(rng, n, k);
    let s1 = symcone::sigma(&kappa, 1).unwrap();
    let sk = symcone::sigma(&kappa, k).unwrap();
    let c0 = symcone::maclaurin_c0(n, k);
    let scale: f64 = kappa.iter().map(|v| v.abs()).sum();
    vec![(s1 - c0 * sk.powf(1.0 / k as f64)) / scale]
}

fn prop_newton_maclaurin(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let k = rng.random_range(2..=n);
    let kappa = sampling::sample_gamma_k(rng, n, k);
    let kf = k as f64;
    let s1 = symcone::sigma(&kappa, 1).unwrap();
    let sk = symcone::sigma(&kappa, k).unwrap();
    let skm1 = symcone::sigma(&kappa, k - 1).unwrap();
    let c0 = symcone::newton_maclaurin_c0(n, k);
    let rhs = c0 * sk.powf(1.0 - 1.0 / (kf - 1.0)) * s1.powf(1.0 / (kf - 1.0));
    let scale = symcone::sigma(&abs_vec(&kappa), k - 1).unwrap();
    vec![(skm1 - rhs) / scale]
}

fn prop_concavity(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let a = sampling::sample_gamma(rng, n);
    let b = sampling::sample_gamma(rng, n);
    let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
    let inv = 1.0 / n as f64;
    let g = |k: &[f64]| symcone::f_value(k).powf(inv);
    let avg = 0.5 * (g(&a) + g(&b));
    let scale = f_scale(&a).powf(inv).max(f_scale(&b).powf(inv));
    vec![(g(&mid) - avg) / scale]
}

fn prop_positivity(rng: &mut ChaCha8Rng, n: usize, opts: &BatteryOptions) -> Vec<f64> {
    let kappa = sampling::sample_gamma(rng, n);
    let fg = fgrad_for(&kappa, opts);
    let total: f64 = fg.iter().map(|v| v.abs()).sum();
    vec![fg.iter().copied().fold(f64::INFINITY, f64::min) / total]
}

fn prop_delta0(rng: &mut ChaCha8Rng, n: usize, opts: &BatteryOptions) -> Vec<f64> {
    let kappa = sampling::sample_gamma(rng, n);
    let fg = fgrad_for(&kappa, opts);
    let total: f64 = fg.iter().sum();
    let d0 = symcone::delta0(n);
    (0..n).filter(|&j| kappa[j] < 0.0).map(|j| fg[j] / total - d0).collect()
}

fn prop_unbounded(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let kappa = sampling::sample_gamma(rng, n);
    let mut prev = symcone::f_value(&kappa);
    let mut worst = f64::INFINITY;
    for big in [1.0, 10.0, 100.0] {
        let mut k2 = kappa.clone();
        k2[n - 1] += big;
        let f = symcone::f_value(&k2);
        worst = worst.min((f - prev) / f);
        prev = f;
    }
    vec![worst]
}

fn prop_f_product(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    // Π (σ_1 − κ_i) is the characteristic polynomial of diag(κ) at t = σ_1
    let kappa = sampling::sample_box(rng, n, 2.0);
    let s1: f64 = kappa.iter().sum();
    let (mut poly, mut scale) = (0.0, 0.0);
    for j in 0..=n {
        let (sj, aj) = oracle::sigma_subsets(&kappa, j);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        poly += sign * s1.powi((n - j) as i32) * sj;
        scale += s1.abs().powi((n - j) as i32) * aj;
    }
    vec![rel_margin(symcone::f_value(&kappa), poly, scale)]
}

fn prop_boundary_zero(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let mut lam: Vec<f64> = (0..n).map(|_| 10f64.powf(-2.0 + 3.0 * rng.random::<f64>())).collect();
    let j = rng.random_range(0..n);
    lam[j] = 0.0;
    let kappa = sampling::kappa_from_lambda(&lam);
    let scale: f64 = lam.iter().filter(|v| **v > 0.0).product::<f64>() * lam.iter().sum::<f64>();
    vec![-symcone::f_value(&kappa).abs() / scale]
}

fn prop_cone_inclusion(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let k = rng.random_range(1..n);
    let eig = sampling::sample_gamma_k(rng, n, k + 1);
    let r = sampling::rotate_diag(rng, &eig);
    let p = sampling::random_gradient(rng, n);
    let lam = graphgeom::lambda_rp(&r, &p).unwrap();
    let q = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
    let mut out = Vec::with_capacity(2 * k);
    for j in 1..=k {
        let sp = symcone::sigma(&lam, j).unwrap();
        let s0 = symcone::sigma(&eig, j).unwrap();
        let scale = symcone::sigma(&abs_vec(&lam), j).unwrap() + symcone::sigma(&abs_vec(&eig), j).unwrap();
        // membership in Γ_k and the lower bound
        out.push(sp / scale);
        out.push((sp - s0 / q) / scale);
    }
    out
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let eig = sampling::sample_box(rng, n, 2.0);
    sampling::rotate_diag(rng, &eig)
}

fn prop_ilt(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let r = random_symmetric(rng, n);
    let p = sampling::random_gradient(rng, n);
    let k = rng.random_range(1..=n);
    let i = rng.random_range(0..n);
    let coef = graphgeom::ilt_coefficient(&r, &p, k, i).unwrap();
    let t = 0.1 * (1.0 + r[(i, i)].abs());
    let fd = oracle::richardson_derivative(
        |s| {
            let mut rr = r.clone();
            rr[(i, i)] += s;
            oracle::s_k_minors(&rr, &p, k).0
        },
        t,
    );
    // cancellation-free size of the coefficient
    let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let r_red = DMatrix::from_fn(n - 1, n - 1, |a, b| r[(keep[a], keep[b])]);
    let p_red: Vec<f64> = keep.iter().map(|&j| p[j]).collect();
    let q = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
    let q_red = 1.0 + p_red.iter().map(|v| v * v).sum::<f64>();
    let scale = q_red / q * oracle::s_k_minors(&r_red, &p_red, k - 1).1 + oracle::s_k_minors(&r, &p, k - 1).1;
    vec![rel_margin(coef, fd, scale)]
}

fn fd_step(state: &PointState) -> f64 {
    1e-3 * (1.0 + state.r.abs().max())
}

fn prop_gs(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let geom = geometry_at(&st).unwrap();
    let Some(lin) = geom.linearization.as_ref() else { return vec![f64::NEG_INFINITY] };
    let w = geom.w;
    let p = &st.p;
    let t = 1e-3 * (1.0 + p.iter().map(|v| v.abs()).fold(0.0, f64::max));
    let fk: f64 = lin.f_grad.iter().zip(geom.kappa.iter()).map(|(f, k)| (f * k).abs()).sum();
    let a = &geom.a;
    let gu = &geom.gamma_up;
    let c = 2.0 / (w * (1.0 + w));
    (0..n)
        .map(|s| {
            let fd = oracle::richardson_derivative2(
                |h| {
                    let mut pp = p.clone();
                    pp[s] += h;
                    oracle::k_eta_det(&st.r, &pp)
                },
                t,
            );
            let mut abs_terms = p[s].abs() / (w * w) * fk;
            for i in 0..n {
                for tt in 0..n {
                    for j in 0..n {
                        abs_terms += c
                            * (lin.f_mat[(i, j)] * a[(i, tt)]).abs()
                            * (w * (p[tt] * gu[(s, j)]).abs() + (p[j] * gu[(tt, s)]).abs());
                    }
                }
            }
            rel_margin(lin.gs[s], fd, abs_terms.max(1e-3 * geom.k_eta))
        })
        .collect()
}

fn prop_g2(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let geom = geometry_at(&st).unwrap();
    let Some(lin) = geom.linearization.as_ref() else { return vec![f64::NEG_INFINITY] };
    let t = fd_step(&st);
    let scale = lin.g2.trace();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let fd = oracle::richardson_derivative2(
                |h| {
                    let mut r = st.r.clone();
                    r[(i, j)] += h;
                    if i != j {
                        r[(j, i)] += h;
                    }
                    oracle::k_eta_det(&r, &st.p)
                },
                t,
            );
            let mult = if i == j { 1.0 } else { 2.0 };
            out.push(rel_margin(mult * lin.g2[(i, j)], fd, mult * scale));
        }
    }
    out
}

fn prop_ellipticity(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let geom = geometry_at(&st).unwrap();
    let Some(lin) = geom.linearization.as_ref() else { return vec![f64::NEG_INFINITY] };
    let e = crate::linalg::symmetric_eigen(&lin.g2).unwrap();
    vec![e.values[0] / lin.g2.trace()]
}

fn prop_trace_sum(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let geom = geometry_at(&st).unwrap();
    let Some(lin) = geom.linearization.as_ref() else { return vec![f64::NEG_INFINITY] };
    let eta = graphgeom::eta_eigen(&st).unwrap();
    let nf = (n - 1) as f64;
    let rhs = nf * symcone::sigma(&eta, n - 1).unwrap();
    let scale = nf * symcone::sigma(&abs_vec(&eta), n - 1).unwrap();
    vec![rel_margin(lin.f_mat.trace(), rhs, scale)]
}

/// Cofactor matrix of `m` by (n−1)-minors.
fn adjugate(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        // adj_ij = (−1)^{i+j} M_ji
        let rows: Vec<usize> = (0..n).filter(|&a| a != j).collect();
        let cols: Vec<usize> = (0..n).filter(|&b| b != i).collect();
        let minor = DMatrix::from_fn(n - 1, n - 1, |a, b| m[(rows[a], cols[b])]).determinant();
        if (i + j) % 2 == 0 {
            minor
        } else {
            -minor
        }
    })
}

fn prop_trace_cofactor(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let geom = geometry_at(&st).unwrap();
    let Some(lin) = geom.linearization.as_ref() else { return vec![f64::NEG_INFINITY] };
    let s = DMatrix::identity(n, n) * geom.a.trace() - &geom.a;
    let fhat = adjugate(&s);
    let expect = DMatrix::identity(n, n) * fhat.trace() - &fhat;
    let scale = lin.f_mat.trace();
    let mut out = Vec::with_capacity(n * n + 1);
    for i in 0..n {
        for j in 0..n {
            out.push(rel_margin(lin.f_mat[(i, j)], expect[(i, j)], scale));
        }
    }
    // the eigenbasis form of F̂ agrees with the adjugate
    let fhat_eig = graphgeom::eta_cofactor(&geom);
    out.push(rel_margin((fhat_eig - &fhat).abs().max(), 0.0, fhat.trace().abs()));
    out
}

fn prop_eta_eigen(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let geom = geometry_at(&st).unwrap();
    let eta = graphgeom::eta_eigen(&st).unwrap();
    let mut lam = symcone::lambda_of(&geom.kappa);
    lam.sort_by(f64::total_cmp);
    let scale: f64 = geom.kappa.iter().map(|v| v.abs()).sum();
    eta.iter().zip(&lam).map(|(a, b)| rel_margin(*a, *b, scale)).collect()
}

fn prop_k_eta_det(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let geom = geometry_at(&st).unwrap();
    vec![rel_margin(geom.k_eta, oracle::k_eta_det(&st.r, &st.p), f_scale(&geom.kappa))]
}

fn prop_rotation(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let q = sampling::random_orthogonal(rng, n);
    let r2 = crate::linalg::symmetrize(&(q.transpose() * &st.r * &q));
    let p2: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[(j, i)] * st.p[j]).sum()).collect();
    let a = geometry_at(&st).unwrap();
    let b = geometry_at(&PointState { p: p2, r: r2 }).unwrap();
    let scale = a.kappa.iter().map(|v| v.abs()).fold(0.0, f64::max);
    a.kappa.iter().zip(b.kappa.iter()).map(|(x, y)| rel_margin(*x, *y, scale)).collect()
}

fn prop_homogeneity(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let st = sampling::random_admissible_state(rng, n);
    let t = 10f64.powf(2.0 * rng.random::<f64>() - 1.0);
    let g = graphgeom::g_value(&st).unwrap();
    let gt = graphgeom::g_value(&PointState { p: st.p.clone(), r: &st.r * t }).unwrap();
    let kappa = geometry_at(&st).unwrap().kappa;
    let tn = t.powi(n as i32);
    vec![rel_margin(gt, tn * g, tn * f_scale(&kappa))]
}

fn prop_sphere(rng: &mut ChaCha8Rng, n: usize, _: &BatteryOptions) -> Vec<f64> {
    let radius = 10f64.powf(rng.random::<f64>() - 0.3);
    let dir = sampling::gaussian_vec(rng, n);
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rho = 0.9 * radius * rng.random::<f64>();
    let x: Vec<f64> = dir.iter().map(|v| v / norm * rho).collect();
    let s = (radius * radius - rho * rho).sqrt();
    let p: Vec<f64> = x.iter().map(|v| v / s).collect();
    let r = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / s } else { 0.0 } + x[i] * x[j] / (s * s * s));
    let geom = geometry_at(&PointState { p, r }).unwrap();
    geom.kappa.iter().map(|k| rel_margin(k * radius, 1.0, 1.0)).collect()
}

const PROPERTIES: &[Property] = &[
    Property { name: "sigma_identities", tol: 1e-12, strict: false, sample: prop_sigma_identities },
    Property { name: "sigma_vs_subsets", tol: 1e-13, strict: false, sample: prop_sigma_oracle },
    Property { name: "maclaurin", tol: 1e-12, strict: false, sample: prop_maclaurin },
    Property { name: "newton_maclaurin", tol: 1e-12, strict: false, sample: prop_newton_maclaurin },
    Property { name: "concavity", tol: 1e-12, strict: false, sample: prop_concavity },
    Property { name: "monotonicity", tol: 0.0, strict: true, sample: prop_positivity },
    Property { name: "delta0_bound", tol: 1e-12, strict: false, sample: prop_delta0 },
    Property { name: "unboundedness", tol: 0.0, strict: true, sample: prop_unbounded },
    Property { name: "f_product", tol: 1e-14, strict: false, sample: prop_f_product },
    Property { name: "boundary_zero", tol: 1e-12, strict: false, sample: prop_boundary_zero },
    Property { name: "cone_inclusion_under_gradient", tol: 1e-12, strict: false, sample: prop_cone_inclusion },
    Property { name: "ilt_vs_fd", tol: 1e-7, strict: false, sample: prop_ilt },
    Property { name: "gs_vs_fd", tol: 1e-6, strict: false, sample: prop_gs },
    Property { name: "g2_vs_fd", tol: 1e-6, strict: false, sample: prop_g2 },
    Property { name: "ellipticity", tol: 0.0, strict: true, sample: prop_ellipticity },
    Property { name: "trace_sum", tol: 1e-10, strict: false, sample: prop_trace_sum },
    Property { name: "trace_cofactor", tol: 1e-10, strict: false, sample: prop_trace_cofactor },
    Property { name: "eta_eigen", tol: 1e-10, strict: false, sample: prop_eta_eigen },
    Property { name: "k_eta_det", tol: 1e-10, strict: false, sample: prop_k_eta_det },
    Property { name: "rotation", tol: 1e-10, strict: false, sample: prop_rotation },
    Property { name: "homogeneity", tol: 1e-10, strict: false, sample: prop_homogeneity },
    Property { name: "sphere", tol: 1e-12, strict: false, sample: prop_sphere },
];

pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.name).collect()
}

struct TaskResult {
    worst: f64,
    checks: usize,
    violations: usize,
}

fn violated(p: &Property, m: f64) -> bool {
    if p.strict {
        !(m > -p.tol)
    } else {
        !(m >= -p.tol)
    }
}

fn run_task(p: &Property, idx: usize, n: usize, opts: &BatteryOptions) -> TaskResult {
    let mut rng = sampling::rng_for(opts.seed, (idx as u64) << 8 | n as u64);
    let mut res = TaskResult { worst: f64::INFINITY, checks: 0, violations: 0 };
    for _ in 0..opts.samples {
        for m in (p.sample)(&mut rng, n, opts) {
            res.checks += 1;
            if violated(p, m) {
                res.violations += 1;
            }
            if m < res.worst || m.is_nan() {
                res.worst = m;
            }
        }
    }
    res
}

/// One certificate per property, aggregated over `dims`. Deterministic in
/// (seed, samples, dims): every (property, dimension) pair draws from its own
/// generator stream.
pub fn property_battery_with(opts: &BatteryOptions) -> Vec<Certificate> {
    let tasks: Vec<(usize, usize)> = (0..PROPERTIES.len())
        .flat_map(|i| opts.dims.iter().filter(|&&n| n >= 2).map(move |&n| (i, n)))
        .collect();
    let results: Vec<TaskResult> = tasks
        .par_iter()
        .map(|&(i, n)| run_task(&PROPERTIES[i], i, n, opts))
        .collect();
    PROPERTIES
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut worst = f64::INFINITY;
            let mut worst_dim = None;
            let (mut checks, mut violations) = (0, 0);
            for (t, r) in tasks.iter().zip(&results) {
                if t.0 != i {
                    continue;
                }
                checks += r.checks;
                violations += r.violations;
                if r.worst < worst || r.worst.is_nan() {
                    worst = r.worst;
                    worst_dim = Some(t.1);
                }
            }
            if checks == 0 {
                worst = 0.0;
            }
            Certificate {
                name: p.name.into(),
                pass: violations == 0,
                worst_node: None,
                margin: worst,
                tol: p.tol,
                detail: format!(
                    "checks={checks} violations={violations} worst_dim={}",
                    worst_dim.map_or("-".into(), |d| d.to_string())
                ),
            }
        })
        .collect()
}

pub fn property_battery(seed: u64, samples: usize, dims: &[usize]) -> Vec<Certificate> {
    property_battery_with(&BatteryOptions { seed, samples, dims: dims.to_vec(), mutate_fgrad: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximum_principle_examples() {
        assert!(check_maximum_principle(&GridFunction::zeros(5), 0.0).pass);
        let mut u = GridFunction::new(vec![-1.0, -0.5, 1e-3, -2.0]);
        let c = check_maximum_principle(&u, 1e-10);
        assert!(!c.pass);
        assert_eq!(c.worst_node, Some(2));
        u.values[2] = -0.1;
        assert!(check_maximum_principle(&u, 1e-10).pass);
    }

    #[test]
    fn comparison_examples() {
        let u = GridFunction::new(vec![-0.2, -0.1, -0.3]);
        assert!(check_comparison(&u, &u, 0.0).unwrap().pass);
        let up = GridFunction::new(u.values.iter().map(|v| v + 1.0).collect());
        assert!(!check_comparison(&u, &up, 1e-10).unwrap().pass);
        assert!(check_comparison(&u, &GridFunction::zeros(2), 0.0).is_err());
    }

    #[test]
    fn line_format() {
        let c = Certificate::judge("x", 0.5, 1e-10, None, String::new());
        assert_eq!(c.line(), "x=pass margin=5e-1 tol=1e-10");
    }

    #[test]
    fn small_battery_passes_and_is_deterministic() {
        let a = property_battery(7, 50, &[2, 3, 4]);
        let b = property_battery(7, 50, &[2, 3, 4]);
        assert_eq!(a, b);
        for c in &a {
            assert!(c.pass, "{}", c.line());
        }
    }

    #[test]
    fn mutation_is_caught() {
        let opts = BatteryOptions { seed: 1, samples: 50, dims: vec![3], mutate_fgrad: true };
        let certs = property_battery_with(&opts);
        let mono = certs.iter().find(|c| c.name == "monotonicity").unwrap();
        assert!(!mono.pass);
    }
}
