//! Expression language for the right-hand side ψ(x, z, ν), subsolutions
//! u̲(x) and lower bounds ψ̲(x, z).
//!
//! Variables: `x1..x3`, `z`, `nu1..nu4`, `r` (= |x|) and `w` (= √(1+|Du|²)).
//! The normal is always tied to the gradient, ν = (−p, 1)/w, so derivatives
//! are reported with respect to `z` and `p = Du`.

mod ast;
mod dual;
mod parser;

pub use ast::{BinOp, Expr, Func, Var};
pub use dual::{Dual, Scalar, SLOTS};
pub use parser::parse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::domaingrid::DomainShape;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable '{name}' not available in dimension {n}")]
    VariableOutOfRange { name: String, n: usize },
    #[error("domain error: {message} in '{subexpr}'")]
    Domain { message: String, subexpr: String },
    #[error("too many derivative slots: dimension {0} exceeds 3")]
    TooManySlots(usize),
}

/// Evaluation point: position, height, unit normal and w.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalEnv {
    pub x: Vec<f64>,
    pub z: f64,
    pub nu: Vec<f64>,
    pub w: f64,
}

impl EvalEnv {
    /// Environment at (x, z) with the graph normal induced by gradient `p`.
    pub fn at(x: &[f64], z: f64, p: &[f64]) -> Self {
        let w = crate::graphgeom::metric_factor(p);
        let mut nu: Vec<f64> = p.iter().map(|v| -v / w).collect();
        nu.push(1.0 / w);
        EvalEnv { x: x.to_vec(), z, nu, w }
    }

    /// Gradient recovered from the normal, p_i = −ν_i w.
    pub fn gradient(&self) -> Vec<f64> {
        let n = self.x.len();
        self.nu[..n].iter().map(|v| -v * self.w).collect()
    }

    fn radius(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Value and first derivatives with respect to z and p = Du.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiDerivs {
    pub value: f64,
    pub d_z: f64,
    pub d_p: Vec<f64>,
}

struct Bindings<T> {
    x: Vec<T>,
    z: T,
    nu: Vec<T>,
    r: T,
    w: T,
}

fn domain_err(message: &str, e: &Expr) -> ExprError {
    ExprError::Domain { message: message.to_string(), subexpr: e.to_string() }
}

fn eval_generic<T: Scalar>(e: &Expr, b: &Bindings<T>) -> Result<T, ExprError> {
    Ok(match e {
        Expr::Num(v) => T::cst(*v),
        Expr::Var(v) => match v {
            Var::X(i) => *b.x.get(*i).ok_or_else(|| ExprError::VariableOutOfRange {
                name: v.to_string(),
                n: b.x.len(),
            })?,
            Var::Nu(i) => *b.nu.get(*i).ok_or_else(|| ExprError::VariableOutOfRange {
                name: v.to_string(),
                n: b.x.len(),
            })?,
            Var::Z => b.z,
            Var::R => b.r,
            Var::W => b.w,
        },
        Expr::Neg(a) => eval_generic(a, b)?.neg(),
        Expr::Bin(op, l, r) => {
            let a = eval_generic(l, b)?;
            let c = eval_generic(r, b)?;
            match op {
                BinOp::Add => a.add(c),
                BinOp::Sub => a.sub(c),
                BinOp::Mul => a.mul(c),
                BinOp::Div => {
                    if c.val() == 0.0 {
                        return Err(domain_err("division by zero", e));
                    }
                    a.div(c)
                }
                BinOp::Pow => {
                    let v = a.powf(c);
                    if v.val().is_nan() {
                        return Err(domain_err("power of negative base", e));
                    }
                    v
                }
            }
        }
        Expr::Call(f, args) => {
            let a = eval_generic(&args[0], b)?;
            match f {
                Func::Exp => a.exp(),
                Func::Log => {
                    if a.val() <= 0.0 {
                        return Err(domain_err("log of non-positive value", e));
                    }
                    a.ln()
                }
                Func::Sqrt => {
                    if a.val() < 0.0 {
                        return Err(domain_err("sqrt of negative value", e));
                    }
                    a.sqrt()
                }
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Abs => a.abs(),
                // ties go to the first argument
                Func::Max => {
                    let c = eval_generic(&args[1], b)?;
                    if c.val() > a.val() {
                        c
                    } else {
                        a
                    }
                }
                Func::Min => {
                    let c = eval_generic(&args[1], b)?;
                    if c.val() < a.val() {
                        c
                    } else {
                        a
                    }
                }
            }
        }
    })
}

/// Plain real evaluation.
pub fn eval(e: &Expr, env: &EvalEnv) -> Result<f64, ExprError> {
    let b = Bindings {
        x: env.x.clone(),
        z: env.z,
        nu: env.nu.clone(),
        r: env.radius(),
        w: env.w,
    };
    eval_generic(e, &b)
}

/// Value plus ∂/∂z and ∂/∂p_s, chaining through ν(p) and w(p).
pub fn eval_with_derivs(e: &Expr, env: &EvalEnv) -> Result<PsiDerivs, ExprError> {
    let n = env.x.len();
    if n + 1 > SLOTS {
        return Err(ExprError::TooManySlots(n));
    }
    let p = env.gradient();
    let w = env.w;
    let w3 = w * w * w;
    let mut w_dual = Dual::constant(w);
    for s in 0..n {
        w_dual.d[1 + s] = p[s] / w;
    }
    let mut nu = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut d = Dual::constant(env.nu[i]);
        for s in 0..n {
            let delta = if i == s { 1.0 / w } else { 0.0 };
            d.d[1 + s] = -delta + p[i] * p[s] / w3;
        }
        nu.push(d);
    }
    let mut last = Dual::constant(env.nu[n]);
    for s in 0..n {
        last.d[1 + s] = -p[s] / w3;
    }
    nu.push(last);
    let b = Bindings {
        x: env.x.iter().map(|&v| Dual::constant(v)).collect(),
        z: Dual::seeded(env.z, 0),
        nu,
        r: Dual::constant(env.radius()),
        w: w_dual,
    };
    let out = eval_generic(e, &b)?;
    if out.d[..=n].iter().any(|v| !v.is_finite()) {
        return Err(domain_err("derivative undefined", e));
    }
    Ok(PsiDerivs { value: out.v, d_z: out.d[0], d_p: out.d[1..=n].to_vec() })
}

/// Value and x-gradient of a function of position only (z = 0, flat normal).
/// At the origin `r` is given zero derivative.
pub fn eval_gradient_x(e: &Expr, x: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
    let n = x.len();
    if n > SLOTS {
        return Err(ExprError::TooManySlots(n));
    }
    let radius = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = Dual::constant(radius);
    if radius > 0.0 {
        for i in 0..n {
            r.d[i] = x[i] / radius;
        }
    }
    let mut nu = vec![Dual::constant(0.0); n];
    nu.push(Dual::constant(1.0));
    let b = Bindings {
        x: x.iter().enumerate().map(|(i, &v)| Dual::seeded(v, i)).collect(),
        z: Dual::constant(0.0),
        nu,
        r,
        w: Dual::constant(1.0),
    };
    let out = eval_generic(e, &b)?;
    Ok((out.v, out.d[..n].to_vec()))
}

/// Advisory sampling report for the sign conditions on ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiReport {
    pub samples: usize,
    pub min_psi: f64,
    pub min_psi_z: f64,
    /// min (ψ − ψ̲) when a lower bound was supplied.
    pub min_gap: Option<f64>,
    pub negative_psi: bool,
    pub negative_psi_z: bool,
    pub below_lower: bool,
    pub eval_error: Option<String>,
}

impl PsiReport {
    pub fn passed(&self) -> bool {
        !self.negative_psi && !self.negative_psi_z && !self.below_lower && self.eval_error.is_none()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub samples: usize,
    pub seed: u64,
    /// Heights are sampled in [−mu0, 0].
    pub mu0: f64,
}

/// Samples (x, z, ν) over Ω × [−μ_0, 0] × upper hemisphere and reports
/// min ψ, min ψ_z and min (ψ − ψ̲). Smoothness cannot be checked this way.
pub fn validate_psi(
    psi: &Expr,
    psi_lower: Option<&Expr>,
    shape: &DomainShape,
    opts: ValidateOptions,
) -> PsiReport {
    let n = shape.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rep = PsiReport {
        samples: 0,
        min_psi: f64::INFINITY,
        min_psi_z: f64::INFINITY,
        min_gap: psi_lower.map(|_| f64::INFINITY),
        negative_psi: false,
        negative_psi_z: false,
        below_lower: false,
        eval_error: None,
    };
    for k in 0..opts.samples {
        let x = shape.sample_interior(&mut rng);
        let z = -opts.mu0 * rng.random::<f64>();
        let nu = loop {
            let v: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let last = v[n].abs() / norm;
            if last >= 0.05 {
                let mut u: Vec<f64> = v.iter().map(|a| a / norm).collect();
                u[n] = last;
                break u;
            }
        };
        // the first sample also probes the flat normal
        let p: Vec<f64> = if k == 0 {
            vec![0.0; n]
        } else {
            nu[..n].iter().map(|a| -a / nu[n]).collect()
        };
        let env = EvalEnv::at(&x, z, &p);
        let d = match eval_with_derivs(psi, &env) {
            Ok(d) => d,
            Err(err) => {
                rep.eval_error.get_or_insert_with(|| err.to_string());
                continue;
            }
        };
        rep.samples += 1;
        rep.min_psi = rep.min_psi.min(d.value);
        rep.min_psi_z = rep.min_psi_z.min(d.d_z);
        if let Some(lower) = psi_lower {
            match eval(lower, &env) {
                Ok(lv) => {
                    let gap = d.value - lv;
                    rep.min_gap = rep.min_gap.map(|g| g.min(gap));
                }
                Err(err) => {
                    rep.eval_error.get_or_insert_with(|| err.to_string());
                }
            }
        }
    }
    rep.negative_psi = rep.min_psi < 0.0;
    rep.negative_psi_z = rep.min_psi_z < 0.0;
    rep.below_lower = rep.min_gap.is_some_and(|g| g < 0.0);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env2(x: [f64; 2], z: f64, p: [f64; 2]) -> EvalEnv {
        EvalEnv::at(&x, z, &p)
    }

    #[test]
    fn parse_and_evaluate_examples() {
        let e = parse("1").unwrap();
        assert_eq!(e, Expr::Num(1.0));
        let e = parse("x1^2 + x2^2").unwrap();
        let v = eval(&e, &env2([0.3, 0.4], 0.0, [0.0, 0.0])).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let e = parse("max(r^2 - 0.04, 0)^2").unwrap();
        assert_eq!(eval(&e, &env2([0.1, 0.15], 0.0, [0.0, 0.0])).unwrap(), 0.0);
        // 0.2² rounds just above 0.04
        assert!(eval(&e, &env2([0.2, 0.0], 0.0, [0.0, 0.0])).unwrap() < 1e-30);
        assert!(eval(&e, &env2([0.3, 0.0], 0.0, [0.0, 0.0])).unwrap() > 0.0);
    }

    #[test]
    fn eval_examples() {
        let env = EvalEnv { x: vec![0.1, 0.2], z: 0.0, nu: vec![0.0, 0.0, 1.0], w: 1.0 };
        assert_eq!(eval(&parse("8").unwrap(), &env).unwrap(), 8.0);
        assert_eq!(eval(&parse("nu3").unwrap(), &env).unwrap(), 1.0);
        assert_eq!(eval(&parse("exp(z)").unwrap(), &env).unwrap(), 1.0);
    }

    #[test]
    fn precedence_and_associativity() {
        let env = env2([2.0, 3.0], 0.0, [0.0, 0.0]);
        let v = |s: &str| eval(&parse(s).unwrap(), &env).unwrap();
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("-x1^2"), -4.0);
        assert_eq!(v("1 - 2 - 3"), -4.0);
        assert_eq!(v("8 / 4 / 2"), 1.0);
        assert_eq!(v("2 * 3 + 4 * x2"), 18.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v(" ( 1+x1 ) *\tx2 "), 9.0);
        assert_eq!(v("1.5e1 + 2E-1"), 15.2);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert_eq!(
            parse("1 + * 2").unwrap_err().to_string(),
            "syntax error at byte 4: expected number, variable, function or '(', found '*'"
        );
        assert_eq!(
            parse("sin(x1").unwrap_err().to_string(),
            "syntax error at byte 6: expected ',' or ')', found end of input"
        );
        assert_eq!(
            parse("foo + 1").unwrap_err().to_string(),
            "unknown identifier 'foo' at byte 0"
        );
        assert_eq!(
            parse("x4").unwrap_err().to_string(),
            "unknown identifier 'x4' at byte 0"
        );
        assert_eq!(
            parse("max(1)").unwrap_err().to_string(),
            "syntax error at byte 0: function 'max' takes 2 argument(s), got 1"
        );
        assert_eq!(
            parse("1 2").unwrap_err().to_string(),
            "syntax error at byte 2: expected operator or end of input, found number 2"
        );
        assert_eq!(
            parse("2 # 3").unwrap_err().to_string(),
            "syntax error at byte 2: unexpected character '#'"
        );
    }

    #[test]
    fn domain_errors_name_subexpression() {
        let env = env2([0.0, 0.0], -1.0, [0.0, 0.0]);
        let err = eval(&parse("1 + log(z)").unwrap(), &env).unwrap_err();
        assert_eq!(err.to_string(), "domain error: log of non-positive value in 'log(z)'");
        let err = eval(&parse("sqrt(z - 1)").unwrap(), &env).unwrap_err();
        assert_eq!(err.to_string(), "domain error: sqrt of negative value in 'sqrt((z - 1))'");
        assert!(eval(&parse("1 / r").unwrap(), &env).is_err());
        assert!(eval(&parse("z^0.5").unwrap(), &env).is_err());
    }

    #[test]
    fn dimension_checks() {
        let e = parse("x3 + nu4").unwrap();
        assert!(e.check_dim(3).is_ok());
        assert!(matches!(e.check_dim(2), Err(ExprError::VariableOutOfRange { .. })));
        let e = parse("nu4").unwrap();
        assert!(e.check_dim(2).is_err());
    }

    #[test]
    fn derivative_examples() {
        let env = env2([0.1, 0.2], 0.3, [0.4, -0.5]);
        let d = eval_with_derivs(&parse("z").unwrap(), &env).unwrap();
        assert_eq!((d.value, d.d_z, d.d_p.clone()), (0.3, 1.0, vec![0.0, 0.0]));
        let flat = env2([0.1, 0.2], 0.0, [0.0, 0.0]);
        let d = eval_with_derivs(&parse("nu3").unwrap(), &flat).unwrap();
        assert_eq!(d.value, 1.0);
        assert_eq!(d.d_p, vec![0.0, 0.0]);
        // ∂w/∂p = p/w
        let d = eval_with_derivs(&parse("w").unwrap(), &env).unwrap();
        assert!((d.d_p[0] - 0.4 / env.w).abs() < 1e-15);
    }

    #[test]
    fn max_tie_takes_first_branch() {
        let env = env2([0.0, 0.0], 0.0, [0.0, 0.0]);
        let d = eval_with_derivs(&parse("max(z, 0)").unwrap(), &env).unwrap();
        assert_eq!(d.d_z, 1.0);
        let d = eval_with_derivs(&parse("min(0, z)").unwrap(), &env).unwrap();
        assert_eq!(d.d_z, 0.0);
    }

    #[test]
    fn gradient_in_x() {
        let (v, g) = eval_gradient_x(&parse("x1^2 * x2 + r").unwrap(), &[3.0, 4.0]).unwrap();
        assert_eq!(v, 41.0);
        assert!((g[0] - (24.0 + 0.6)).abs() < 1e-14);
        assert!((g[1] - (9.0 + 0.8)).abs() < 1e-14);
        let (_, g) = eval_gradient_x(&parse("r").unwrap(), &[0.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn validate_examples() {
        let disk = DomainShape::ball(2, 0.5).unwrap();
        let opts = ValidateOptions { samples: 200, seed: 7, mu0: 0.5 };
        let rep = validate_psi(&parse("1").unwrap(), None, &disk, opts);
        assert!(rep.passed());
        assert_eq!(rep.min_psi, 1.0);
        assert_eq!(rep.min_psi_z, 0.0);
        let rep = validate_psi(&parse("-1").unwrap(), None, &disk, opts);
        assert!(rep.negative_psi && !rep.passed());
        let r2 = parse("r^2").unwrap();
        let rep = validate_psi(&r2, Some(&r2), &disk, opts);
        assert_eq!(rep.min_gap, Some(0.0));
        assert!(rep.passed());
        let rep = validate_psi(&parse("-z").unwrap(), None, &disk, opts);
        assert!(rep.negative_psi_z);
        let rep = validate_psi(&parse("log(z)").unwrap(), None, &disk, opts);
        assert!(rep.eval_error.is_some());
    }
}
