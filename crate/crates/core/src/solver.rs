//! Discrete residual and Jacobian of `G(D²u, Du)^{1/n} = ψ_ε(x, u, Du)^{1/n}`,
//! damped Newton with an admissibility safeguard, and ε-continuation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::domaingrid::{build_grid, check_two_convex, fd_derivatives, DomainShape, Grid, GridError};
use crate::graphgeom::{geometry_at, GeomError, PointGeometry, PointState};
use crate::linalg::symmetric_eigen;
use crate::psilang::{eval, eval_with_derivs, EvalEnv, Expr, ExprError, PsiDerivs};
use crate::sparse::{self, Csr, SparseError};
use crate::verify::{self, Certificate};

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    pub tol_residual: f64,
    pub max_iter: usize,
    pub min_step: f64,
    /// Include the ∂G/∂p terms in the Jacobian.
    pub include_gs: bool,
    /// Accepted iterates need Γ-margin ≥ this · (1 + |σ_1|) at every node.
    pub admissibility_tol: f64,
    /// Backward-error target of the linear solves.
    pub linear_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol_residual: 1e-10,
            max_iter: 50,
            min_step: 1.0 / 1024.0,
            include_gs: true,
            admissibility_tol: 1e-12,
            linear_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub n: usize,
    pub shape: DomainShape,
    pub psi: Expr,
    pub psi_lower: Option<Expr>,
    pub subsolution: Option<Expr>,
    pub h: f64,
    /// `None` selects [`default_eps_schedule`] from the sign of ψ on the grid.
    pub eps_schedule: Option<Vec<f64>>,
    pub newton: NewtonOptions,
}

impl ProblemSpec {
    pub fn new(shape: DomainShape, psi: Expr, h: f64) -> Self {
        ProblemSpec {
            n: shape.dim(),
            shape,
            psi,
            psi_lower: None,
            subsolution: None,
            h,
            eps_schedule: None,
            newton: NewtonOptions::default(),
        }
    }

    pub fn with_schedule(mut self, eps: Vec<f64>) -> Self {
        self.eps_schedule = Some(eps);
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidSpec(m));
        if !(2..=3).contains(&self.n) {
            return bad(format!("dimension must be 2 or 3, got {}", self.n));
        }
        if self.shape.dim() != self.n {
            return bad(format!("domain is {}-dimensional but n = {}", self.shape.dim(), self.n));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("grid spacing must be positive, got {}", self.h));
        }
        self.psi.check_dim(self.n)?;
        for e in [&self.psi_lower, &self.subsolution].into_iter().flatten() {
            e.check_dim(self.n)?;
        }
        if let Some(s) = &self.subsolution {
            if s.uses(|v| matches!(v, crate::psilang::Var::Z | crate::psilang::Var::Nu(_) | crate::psilang::Var::W)) {
                return bad("subsolution may only depend on x1..xn and r".into());
            }
        }
        if let Some(sched) = &self.eps_schedule {
            if sched.is_empty() {
                return bad("eps schedule is empty".into());
            }
            if sched.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return bad("eps values must be finite and >= 0".into());
            }
            if sched.windows(2).any(|w| w[1] >= w[0]) {
                return bad("eps schedule must be strictly decreasing".into());
            }
        }
        let nw = &self.newton;
        if !(nw.tol_residual.is_finite() && nw.tol_residual > 0.0) {
            return bad(format!("tol_residual must be positive, got {}", nw.tol_residual));
        }
        if nw.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        if !(nw.min_step > 0.0 && nw.min_step <= 1.0) {
            return bad(format!("min_step must lie in (0, 1], got {}", nw.min_step));
        }
        Ok(())
    }
}

/// {1e−1, 1e−2, 1e−3, 1e−4} followed by 0 when ψ > 0, else 1e−5.
pub fn default_eps_schedule(psi_positive: bool) -> Vec<f64> {
    let last = if psi_positive { 0.0 } else { 1e-5 };
    vec![1e-1, 1e-2, 1e-3, 1e-4, last]
}

/// Node values of a function on the interior nodes; boundary value 0 implied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        GridFunction { values }
    }

    pub fn zeros(len: usize) -> Self {
        GridFunction { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for GridFunction {
    fn from(values: Vec<f64>) -> Self {
        GridFunction { values }
    }
}

/// Per-iterate record of one Newton run. `steps[k]` took iterate k to k+1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonHistory {
    pub residual_inf: Vec<f64>,
    pub residual_l2: Vec<f64>,
    pub min_margin: Vec<f64>,
    pub steps: Vec<f64>,
}

impl NewtonHistory {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    fn push(&mut self, ev: &Evaluation) {
        self.residual_inf.push(ev.residual_inf());
        self.residual_l2.push(ev.residual_l2());
        self.min_margin.push(ev.min_margin);
    }
}

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("psi = {value:e} < 0{}", node.map(|k| format!(" at node {k}")).unwrap_or_default())]
    NegativePsi { node: Option<usize>, value: f64 },
    #[error("not admissible at node {node} (Gamma-margin {margin:e})")]
    NotAdmissible { node: usize, margin: f64 },
    #[error("Newton stagnated after {iterations} iteration(s): step below {min_step} (residual {residual:e})")]
    Stagnation { iterations: usize, min_step: f64, residual: f64, history: Box<NewtonHistory> },
    #[error("linear solve failed after {iterations} iteration(s): {source}")]
    LinearSolveFailure { iterations: usize, source: SparseError, history: Box<NewtonHistory> },
    #[error("no convergence in {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64, history: Box<NewtonHistory> },
    #[error("domain is not uniformly 2-convex (min boundary curvature {min_curvature:e})")]
    NotTwoConvex { min_curvature: f64 },
    #[error("no initial guess: {0}")]
    NoInitialGuess(String),
    #[error("subsolution rejected: {0}")]
    SubsolutionRejected(String),
    #[error("at eps = {eps:e}: {source}")]
    Stage { eps: f64, source: Box<SolverError> },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// ψ_ε = (ψ^{1/(n−1)} + ε)^{n−1}.
pub fn regularize_psi(psi: f64, eps: f64, n: usize) -> Result<f64, SolverError> {
    if psi < 0.0 || psi.is_nan() {
        return Err(SolverError::NegativePsi { node: None, value: psi });
    }
    if eps == 0.0 {
        return Ok(psi);
    }
    if n == 2 {
        return Ok(psi + eps);
    }
    let m = (n - 1) as f64;
    Ok((psi.powf(1.0 / m) + eps).powf(m))
}

/// dψ_ε/dψ = ((ψ^{1/(n−1)} + ε) / ψ^{1/(n−1)})^{n−2}; taken as 0 at ψ = 0, ε > 0.
pub fn regularize_psi_deriv(psi: f64, eps: f64, n: usize) -> f64 {
    if n == 2 || eps == 0.0 {
        return 1.0;
    }
    if psi <= 0.0 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    let t = psi.powf(1.0 / m);
    ((t + eps) / t).powf(m - 1.0)
}

/// Everything computed at one node for a given u.
#[derive(Debug, Clone)]
pub struct NodeEval {
    pub state: PointState,
    pub geom: PointGeometry,
    pub psi: f64,
    pub psi_eps: f64,
    pub residual: f64,
}

/// Node evaluations for a whole grid function.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub nodes: Vec<NodeEval>,
    pub min_margin: f64,
}

impl Evaluation {
    pub fn residuals(&self) -> Vec<f64> {
        self.nodes.iter().map(|e| e.residual).collect()
    }

    pub fn residual_inf(&self) -> f64 {
        self.nodes.iter().fold(0.0, |m, e| m.max(e.residual.abs()))
    }

    pub fn residual_l2(&self) -> f64 {
        self.nodes.iter().map(|e| e.residual * e.residual).sum::<f64>().sqrt()
    }
}

fn psi_env(grid: &Grid, u: &[f64], k: usize, p: &[f64]) -> EvalEnv {
    EvalEnv::at(&grid.nodes[k].pos, u[k], p)
}

fn eval_node(psi: &Expr, grid: &Grid, u: &[f64], k: usize, eps: f64) -> Result<NodeEval, SolverError> {
    let n = grid.n;
    let state = fd_derivatives(grid, u, k);
    let geom = match geometry_at(&state) {
        Ok(g) => g,
        Err(_) => return Err(SolverError::NotAdmissible { node: k, margin: f64::NAN }),
    };
    let value = eval(psi, &psi_env(grid, u, k, &state.p))?;
    if value < 0.0 || value.is_nan() {
        return Err(SolverError::NegativePsi { node: Some(k), value });
    }
    let psi_eps = regularize_psi(value, eps, n)?;
    let inv = 1.0 / n as f64;
    let residual = geom.k_eta.max(0.0).powf(inv) - psi_eps.powf(inv);
    Ok(NodeEval { state, geom, psi: value, psi_eps, residual })
}

/// Evaluates every node; fails with the worst node unless every Γ-margin is
/// at least `rel_tol · (1 + |σ_1|)` (and strictly positive).
pub fn evaluate(spec: &ProblemSpec, grid: &Grid, u: &GridFunction, eps: f64, rel_tol: f64) -> Result<Evaluation, SolverError> {
    let nodes: Vec<NodeEval> = (0..grid.len())
        .into_par_iter()
        .map(|k| eval_node(&spec.psi, grid, &u.values, k, eps))
        .collect::<Result<_, _>>()?;
    let mut worst: Option<(usize, f64)> = None;
    let mut min_margin = f64::INFINITY;
    for (k, e) in nodes.iter().enumerate() {
        let m = e.geom.margin;
        min_margin = min_margin.min(m);
        let need = rel_tol * (1.0 + e.geom.sigma1().abs());
        let ok = m > 0.0 && m >= need && e.residual.is_finite();
        if !ok && worst.is_none_or(|(_, wm)| m < wm) {
            worst = Some((k, m));
        }
    }
    if let Some((node, margin)) = worst {
        return Err(SolverError::NotAdmissible { node, margin });
    }
    Ok(Evaluation { nodes, min_margin })
}

/// Normalized residual G^{1/n} − ψ_ε^{1/n} per node.
pub fn residual(spec: &ProblemSpec, grid: &Grid, u: &GridFunction, eps: f64) -> Result<Vec<f64>, SolverError> {
    Ok(evaluate(spec, grid, u, eps, 0.0)?.residuals())
}

/// Un-normalized residual G − ψ_ε per node (diagnostics).
pub fn residual_raw(spec: &ProblemSpec, grid: &Grid, u: &GridFunction, eps: f64) -> Result<Vec<f64>, SolverError> {
    let ev = evaluate(spec, grid, u, eps, 0.0)?;
    Ok(ev.nodes.iter().map(|e| e.geom.k_eta - e.psi_eps).collect())
}

fn jacobian_row(spec: &ProblemSpec, grid: &Grid, u: &[f64], k: usize, ne: &NodeEval, eps: f64) -> Result<Vec<(usize, f64)>, SolverError> {
    let n = grid.n;
    let nf = n as f64;
    let node = &grid.nodes[k];
    let lin = ne
        .geom
        .linearization
        .as_ref()
        .ok_or(SolverError::NotAdmissible { node: k, margin: ne.geom.margin })?;
    let c_g = ne.geom.k_eta.powf(1.0 / nf - 1.0) / nf;

    let (d_z, d_p) = if spec.psi.uses(|v| !matches!(v, crate::psilang::Var::X(_) | crate::psilang::Var::R)) {
        let PsiDerivs { d_z, d_p, .. } = eval_with_derivs(&spec.psi, &psi_env(grid, u, k, &ne.state.p))?;
        (d_z, d_p)
    } else {
        (0.0, vec![0.0; n])
    };
    let c_psi = if ne.psi_eps > 0.0 {
        ne.psi_eps.powf(1.0 / nf - 1.0) / nf * regularize_psi_deriv(ne.psi, eps, n)
    } else {
        0.0
    };

    let mut row: Vec<(usize, f64)> = Vec::with_capacity(8 * n * n);
    let mut diag = 0.0;
    let mut push = |st: &crate::domaingrid::Stencil, c: f64, diag: &mut f64| {
        if c == 0.0 {
            return;
        }
        *diag += c * st.center;
        for &(j, w) in &st.nodes {
            row.push((j, c * w));
        }
    };
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let mult = if i == j { 1.0 } else { 2.0 };
            push(&node.hess[idx], c_g * mult * lin.g2[(i, j)], &mut diag);
            idx += 1;
        }
    }
    for s in 0..n {
        let gs = if spec.newton.include_gs { lin.gs[s] } else { 0.0 };
        push(&node.grad[s], c_g * gs - c_psi * d_p[s], &mut diag);
    }
    diag -= c_psi * d_z;
    row.push((k, diag));
    Ok(row)
}

/// Jacobian of the normalized residual in CSR form.
pub fn jacobian(spec: &ProblemSpec, grid: &Grid, u: &GridFunction, eps: f64) -> Result<Csr, SolverError> {
    let ev = evaluate(spec, grid, u, eps, 0.0)?;
    jacobian_from(spec, grid, u, &ev, eps)
}

fn jacobian_from(spec: &ProblemSpec, grid: &Grid, u: &GridFunction, ev: &Evaluation, eps: f64) -> Result<Csr, SolverError> {
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|k| jacobian_row(spec, grid, &u.values, k, &ev.nodes[k], eps))
        .collect::<Result<_, _>>()?;
    Ok(Csr::from_rows(grid.len(), rows))
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub u: GridFunction,
    pub history: NewtonHistory,
    pub evaluation: Evaluation,
}

/// Damped Newton from `u0`; the returned history starts with the residual of
/// `u0`. Zero iterations are taken if `u0` already meets the tolerance.
pub fn newton_solve(spec: &ProblemSpec, grid: &Grid, u0: &GridFunction, eps: f64) -> Result<NewtonOutcome, SolverError> {
    let opts = &spec.newton;
    let mut u = u0.clone();
    let mut ev = evaluate(spec, grid, &u, eps, 0.0)?;
    let mut history = NewtonHistory::default();
    history.push(&ev);
    loop {
        let res_inf = ev.residual_inf();
        if res_inf <= opts.tol_residual {
            return Ok(NewtonOutcome { u, history, evaluation: ev });
        }
        if history.iterations() >= opts.max_iter {
            return Err(SolverError::MaxIterations { iterations: history.iterations(), residual: res_inf, history: Box::new(history) });
        }
        let jac = jacobian_from(spec, grid, &u, &ev, eps)?;
        let rhs: Vec<f64> = ev.nodes.iter().map(|e| -e.residual).collect();
        let delta = match sparse::solve(&jac, &rhs, opts.linear_tol) {
            Ok(d) => d,
            Err(source) => {
                return Err(SolverError::LinearSolveFailure { iterations: history.iterations(), source, history: Box::new(history) })
            }
        };
        let merit = ev.residual_l2();
        let mut s = 1.0;
        let accepted = loop {
            let trial = GridFunction::new(u.values.iter().zip(&delta).map(|(a, d)| a + s * d).collect());
            if let Ok(tev) = evaluate(spec, grid, &trial, eps, opts.admissibility_tol) {
                if tev.residual_l2() <= (1.0 - s / 4.0) * merit {
                    break Some((trial, tev));
                }
            }
            s *= 0.5;
            if s < opts.min_step {
                break None;
            }
        };
        match accepted {
            Some((trial, tev)) => {
                u = trial;
                ev = tev;
                history.steps.push(s);
                history.push(&ev);
            }
            None => {
                return Err(SolverError::Stagnation {
                    iterations: history.iterations(),
                    min_step: opts.min_step,
                    residual: res_inf,
                    history: Box::new(history),
                })
            }
        }
    }
}

/// Discrete derivative magnitudes of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBounds {
    pub sup_u: f64,
    /// max over nodes of |Du|
    pub sup_du: f64,
    /// max over nodes of the spectral norm of D²u
    pub sup_d2u: f64,
}

pub fn derivative_bounds(grid: &Grid, u: &GridFunction) -> DerivativeBounds {
    let per: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let st = fd_derivatives(grid, &u.values, k);
            let du = st.p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d2 = symmetric_eigen(&st.r)
                .map(|e| e.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .unwrap_or(f64::NAN);
            (du, d2)
        })
        .collect();
    let (mut sup_du, mut sup_d2u) = (0.0f64, 0.0f64);
    for (a, b) in per {
        sup_du = sup_du.max(a);
        sup_d2u = if b.is_nan() { f64::NAN } else { sup_d2u.max(b) };
    }
    DerivativeBounds { sup_u: u.sup_abs(), sup_du, sup_d2u }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub eps: f64,
    pub history: NewtonHistory,
    pub min_margin: f64,
    pub bounds: DerivativeBounds,
}

impl StageReport {
    pub fn iterations(&self) -> usize {
        self.history.iterations()
    }

    pub fn final_residual(&self) -> f64 {
        self.history.residual_inf.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub nodes: usize,
    pub h: f64,
    pub stages: Vec<StageReport>,
    /// Radius of the automatic cap guess, when used.
    pub initial_radius: Option<f64>,
    pub warnings: Vec<String>,
    pub certificates: Vec<Certificate>,
}

impl SolveReport {
    pub fn final_stage(&self) -> Option<&StageReport> {
        self.stages.last()
    }

    /// μ_0 = ‖u‖_{C⁰} of the final iterate.
    pub fn mu0(&self) -> f64 {
        self.final_stage().map_or(f64::NAN, |s| s.bounds.sup_u)
    }

    pub fn summary(&self) -> String {
        let last = self.final_stage();
        format!(
            "nodes={} h={} stages={} final_eps={:e} iterations={} residual={:.3e} sup|u|={:.6e} sup|Du|={:.6e} sup|D2u|={:.6e} certificates={}",
            self.nodes,
            self.h,
            self.stages.len(),
            last.map_or(f64::NAN, |s| s.eps),
            self.stages.iter().map(|s| s.iterations()).sum::<usize>(),
            last.map_or(f64::NAN, |s| s.final_residual()),
            last.map_or(f64::NAN, |s| s.bounds.sup_u),
            last.map_or(f64::NAN, |s| s.bounds.sup_du),
            last.map_or(f64::NAN, |s| s.bounds.sup_d2u),
            if self.certificates.iter().all(|c| c.pass) { "pass" } else { "FAIL" },
        )
    }
}

#[derive(Debug, Clone)]
pub struct InitialGuess {
    pub u: GridFunction,
    pub radius: Option<f64>,
    pub dominates: bool,
    pub warning: Option<String>,
}

pub const CAP_FACTORS: [f64; 6] = [1.05, 1.1, 1.2, 1.5, 2.0, 4.0];

/// Sphere cap −√(R²−|x|²) + √(R²−r0²) and its gradient.
pub fn sphere_cap(x: &[f64], radius: f64, r0: f64) -> (f64, Vec<f64>) {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let s = (radius * radius - r2).sqrt();
    (-s + (radius * radius - r0 * r0).sqrt(), x.iter().map(|v| v / s).collect())
}

fn sample_expr(e: &Expr, grid: &Grid) -> Result<GridFunction, SolverError> {
    let zeros = vec![0.0; grid.n];
    let vals = grid
        .nodes
        .iter()
        .map(|nd| eval(e, &EvalEnv::at(&nd.pos, 0.0, &zeros)))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(GridFunction::new(vals))
}

/// Provided subsolution (after its certificate passes), else the first cap
/// radius in `CAP_FACTORS · r0` that is discretely admissible and whose
/// K_η = ((n−1)/R)ⁿ dominates the sampled ψ_ε at `eps`.
pub fn initial_guess(spec: &ProblemSpec, grid: &Grid, eps: f64) -> Result<InitialGuess, SolverError> {
    if let Some(sub) = &spec.subsolution {
        let cert = verify::check_subsolution(sub, spec)?;
        if !cert.pass {
            return Err(SolverError::SubsolutionRejected(cert.line()));
        }
        return Ok(InitialGuess { u: sample_expr(sub, grid)?, radius: None, dominates: true, warning: None });
    }
    let DomainShape::Ball { r0, .. } = spec.shape else {
        return Err(SolverError::NoInitialGuess(format!(
            "{} domains need an explicit subsolution",
            spec.shape.kind()
        )));
    };
    let n = grid.n;
    let mut fallback: Option<InitialGuess> = None;
    for f in CAP_FACTORS {
        let radius = f * r0;
        let mut vals = Vec::with_capacity(grid.len());
        let mut max_psi = 0.0f64;
        for nd in &grid.nodes {
            let (z, p) = sphere_cap(&nd.pos, radius, r0);
            let v = eval(&spec.psi, &EvalEnv::at(&nd.pos, z, &p))?;
            max_psi = max_psi.max(regularize_psi(v, eps, n)?);
            vals.push(z);
        }
        let u = GridFunction::new(vals);
        if evaluate(spec, grid, &u, eps, spec.newton.admissibility_tol).is_err() {
            continue;
        }
        let k_eta = ((n as f64 - 1.0) / radius).powi(n as i32);
        if k_eta >= max_psi {
            return Ok(InitialGuess { u, radius: Some(radius), dominates: true, warning: None });
        }
        if fallback.is_none() {
            fallback = Some(InitialGuess {
                u,
                radius: Some(radius),
                dominates: false,
                warning: Some(format!(
                    "no cap dominates psi: using R = {radius} with K_eta = {k_eta:.6e} < max psi_eps = {max_psi:.6e}"
                )),
            });
        }
    }
    fallback.ok_or_else(|| SolverError::NoInitialGuess("no discretely admissible sphere cap".into()))
}

/// Schedule used for `spec`: explicit, or the default by the sign of ψ
/// sampled at the nodes (z = 0, flat normal).
pub fn effective_schedule(spec: &ProblemSpec, grid: &Grid) -> Result<Vec<f64>, SolverError> {
    if let Some(s) = &spec.eps_schedule {
        return Ok(s.clone());
    }
    let sampled = sample_expr(&spec.psi, grid)?;
    Ok(default_eps_schedule(sampled.values.iter().all(|&v| v > 0.0)))
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: Grid,
    pub u: GridFunction,
    /// The starting subsolution candidate.
    pub u_init: GridFunction,
    pub report: SolveReport,
}

impl Solution {
    pub fn final_eps(&self) -> f64 {
        self.report.final_stage().map_or(0.0, |s| s.eps)
    }
}

/// Builds the grid, picks the initial guess and runs Newton for every ε,
/// warm-starting each stage from the previous one.
pub fn continuation_solve(spec: &ProblemSpec) -> Result<Solution, SolverError> {
    spec.validate()?;
    let conv = check_two_convex(&spec.shape);
    if !conv.ok {
        return Err(SolverError::NotTwoConvex { min_curvature: conv.min_boundary_curvature });
    }
    let grid = build_grid(&spec.shape, spec.h)?;
    let schedule = effective_schedule(spec, &grid)?;
    let guess = initial_guess(spec, &grid, schedule[0])?;
    let mut warnings: Vec<String> = guess.warning.iter().cloned().collect();
    let mut u = guess.u.clone();
    let mut stages = Vec::with_capacity(schedule.len());
    for &eps in &schedule {
        let out = newton_solve(spec, &grid, &u, eps)
            .map_err(|e| SolverError::Stage { eps, source: Box::new(e) })?;
        u = out.u;
        stages.push(StageReport {
            eps,
            min_margin: out.evaluation.min_margin,
            bounds: derivative_bounds(&grid, &u),
            history: out.history,
        });
    }
    if !guess.dominates {
        warnings.push("comparison certificate uses a non-dominating starting cap".into());
    }
    let mut report = SolveReport {
        nodes: grid.len(),
        h: spec.h,
        stages,
        initial_radius: guess.radius,
        warnings,
        certificates: Vec::new(),
    };
    report.certificates = verify::solution_certificates(spec, &grid, &u, &guess.u, &report)?;
    Ok(Solution { grid, u, u_init: guess.u, report })
}

/// One row of the solution table.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub x: Vec<f64>,
    pub u: f64,
    pub du: Vec<f64>,
    /// Upper triangle of D²u, row-major.
    pub d2u: Vec<f64>,
    pub kappa: Vec<f64>,
    pub k_eta: f64,
    pub residual: f64,
}

/// Per-node derivatives, curvatures and residuals. Non-admissible nodes get
/// their raw K_η and residual rather than an error.
pub fn solution_rows(spec: &ProblemSpec, grid: &Grid, u: &GridFunction, eps: f64) -> Result<Vec<NodeRow>, SolverError> {
    let n = grid.n;
    (0..grid.len())
        .map(|k| {
            let st = fd_derivatives(grid, &u.values, k);
            let geom = geometry_at(&st)?;
            let v = eval(&spec.psi, &psi_env(grid, &u.values, k, &st.p))?;
            let psi_eps = regularize_psi(v.max(0.0), eps, n)?;
            let inv = 1.0 / n as f64;
            let residual = geom.k_eta.max(0.0).powf(inv) - psi_eps.powf(inv);
            let d2u = upper_triangle(&st.r);
            Ok(NodeRow {
                x: grid.nodes[k].pos.clone(),
                u: u.values[k],
                du: st.p.clone(),
                d2u,
                kappa: geom.kappa.values().to_vec(),
                k_eta: geom.k_eta,
                residual,
            })
        })
        .collect()
}

pub fn upper_triangle(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psilang::parse;

    #[test]
    fn regularization_examples() {
        assert!((regularize_psi(0.0, 0.1, 3).unwrap() - 0.01).abs() < 1e-15);
        for n in 2..6 {
            assert_eq!(regularize_psi(1.0, 0.0, n).unwrap(), 1.0);
        }
        assert!((regularize_psi(1.0, 0.1, 2).unwrap() - 1.1).abs() < 1e-15);
        assert!(matches!(regularize_psi(-1.0, 0.1, 2), Err(SolverError::NegativePsi { .. })));
        // derivative against central differences
        for &(psi, eps, n) in &[(0.7, 0.1, 3), (2.0, 0.3, 4), (0.5, 0.0, 3), (1.5, 0.2, 2)] {
            let h = 1e-6;
            let fd = (regularize_psi(psi + h, eps, n).unwrap() - regularize_psi(psi - h, eps, n).unwrap()) / (2.0 * h);
            assert!((fd - regularize_psi_deriv(psi, eps, n)).abs() < 1e-7);
        }
    }

    #[test]
    fn spec_validation() {
        let disk = DomainShape::ball(2, 0.5).unwrap();
        let ok = ProblemSpec::new(disk.clone(), parse("1").unwrap(), 0.1);
        assert!(ok.validate().is_ok());
        assert!(ok.clone().with_schedule(vec![0.1, 0.1]).validate().is_err());
        assert!(ok.clone().with_schedule(vec![]).validate().is_err());
        assert!(ok.clone().with_schedule(vec![0.1, -0.01]).validate().is_err());
        let bad = ProblemSpec::new(disk.clone(), parse("x3").unwrap(), 0.1);
        assert!(bad.validate().is_err());
        let mut sub = ok.clone();
        sub.subsolution = Some(parse("z").unwrap());
        assert!(sub.validate().is_err());
    }

    #[test]
    fn initial_cap_examples() {
        let disk = DomainShape::ball(2, 0.5).unwrap();
        let spec = ProblemSpec::new(disk, parse("1").unwrap(), 1.0 / 16.0);
        let grid = build_grid(&spec.shape, spec.h).unwrap();
        let g = initial_guess(&spec, &grid, 0.1).unwrap();
        assert_eq!(g.radius, Some(0.525));
        assert!(g.dominates);
        let ell = DomainShape::ellipse(1.0, 0.5).unwrap();
        let spec = ProblemSpec::new(ell, parse("1").unwrap(), 0.25);
        let grid = build_grid(&spec.shape, spec.h).unwrap();
        assert!(matches!(initial_guess(&spec, &grid, 0.1), Err(SolverError::NoInitialGuess(_))));
    }

    #[test]
    fn identity_state_row() {
        // a quadratic with D²u = I and Du = 0 at the origin: Hessian block of
        // the row is (1/n) G^{1/n−1} · 8 · (discrete Laplacian row) for n = 3
        let ball = DomainShape::ball(3, 0.5).unwrap();
        let spec = ProblemSpec::new(ball, parse("8").unwrap(), 0.125);
        let grid = build_grid(&spec.shape, spec.h).unwrap();
        let u = GridFunction::new(grid.nodes.iter().map(|nd| 0.5 * nd.pos.iter().map(|v| v * v).sum::<f64>() - 0.125).collect());
        let jac = jacobian(&spec, &grid, &u, 0.0).unwrap();
        let c = grid.nodes.iter().position(|nd| nd.index == vec![0, 0, 0]).unwrap();
        let g: f64 = 8.0;
        let scale = g.powf(1.0 / 3.0 - 1.0) / 3.0 * 8.0;
        let h2 = spec.h * spec.h;
        assert!((jac.get(c, c) - scale * (-6.0 / h2)).abs() < 1e-9 * scale / h2);
        for nd in &grid.nodes[c].lines[..3] {
            for nb in [nd.plus, nd.minus] {
                let crate::domaingrid::Neighbor::Node(j) = nb else { panic!() };
                assert!((jac.get(c, j) - scale / h2).abs() < 1e-9 * scale / h2);
            }
        }
        assert_eq!(jac.row(c).count(), 7);
    }
}
