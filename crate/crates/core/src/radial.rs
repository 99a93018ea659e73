//! Radial reference solutions on balls: the equation reduces to a scalar ODE
//! for the profile u(r), which is integrated with RK4 and shot on the center
//! value until u(r0) = 0.

use std::fmt::Write as _;

use thiserror::Error;

use crate::psilang::{eval, EvalEnv, Expr, ExprError};
use crate::symcone::{ConeError, Kappa};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("tangential curvature {kappa_t:e} <= 0 at r = {r} where psi = {psi:e} > 0")]
    DegenerateTangential { r: f64, kappa_t: f64, psi: f64 },
    #[error("psi = {value:e} < 0 at r = {r}")]
    NegativePsi { r: f64, value: f64 },
    #[error("no sign change of u(r0) on [{lo}, {hi}]: u(r0) = {u_lo:e} and {u_hi:e}")]
    BracketFailure { lo: f64, hi: f64, u_lo: f64, u_hi: f64 },
    #[error("integration broke down at r = {r}: {message}")]
    StiffnessFailure { r: f64, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

/// Default number of RK4 steps over [0, r0].
pub const DEFAULT_STEPS: usize = 4096;

/// (κ_r, κ_t, …, κ_t) of the radial graph; at r = 0 every entry is `upp`.
pub fn radial_curvatures(r: f64, up: f64, upp: f64, n: usize) -> Result<Kappa, RadialError> {
    let (kr, kt) = radial_pair(r, up, upp);
    let mut v = vec![kt; n];
    v[0] = kr;
    Ok(Kappa::new(v)?)
}

fn radial_pair(r: f64, up: f64, upp: f64) -> (f64, f64) {
    if r == 0.0 {
        return (upp, upp);
    }
    let w2 = 1.0 + up * up;
    let w = w2.sqrt();
    (upp / (w2 * w), up / (r * w))
}

fn psi_at(psi: &Expr, r: f64, u: f64, up: f64, n: usize) -> Result<f64, RadialError> {
    let mut x = vec![0.0; n];
    x[0] = r;
    let mut p = vec![0.0; n];
    p[0] = up;
    let v = eval(psi, &EvalEnv::at(&x, u, &p))?;
    if v < 0.0 {
        return Err(RadialError::NegativePsi { r, value: v });
    }
    Ok(v)
}

/// κ_r from the reduced relation (n−1) κ_t (κ_r + (n−2) κ_t)^{n−1} = ψ.
fn solve_kappa_r(r: f64, kt: f64, psi: f64, n: usize) -> Result<f64, RadialError> {
    if kt > 0.0 {
        let m = (n - 1) as f64;
        let lt = if n == 2 { psi / kt } else { (psi / (m * kt)).powf(1.0 / m) };
        return Ok(lt - (n as f64 - 2.0) * kt);
    }
    if psi == 0.0 && kt == 0.0 {
        return Ok(0.0);
    }
    Err(RadialError::DegenerateTangential { r, kappa_t: kt, psi })
}

/// u″ at (r, u, u′).
pub fn radial_rhs(r: f64, u: f64, up: f64, psi: &Expr, n: usize) -> Result<f64, RadialError> {
    if n < 2 {
        return Err(RadialError::InvalidInput(format!("dimension must be >= 2, got {n}")));
    }
    let value = psi_at(psi, r, u, up, n)?;
    if r == 0.0 {
        // all curvatures equal c with ((n−1) c)^n = ψ
        return Ok(value.powf(1.0 / n as f64) / (n as f64 - 1.0));
    }
    let w2 = 1.0 + up * up;
    let w = w2.sqrt();
    let kt = up / (r * w);
    let kr = solve_kappa_r(r, kt, value, n)?;
    Ok(kr * w2 * w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub n: usize,
    pub r0: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub up: Vec<f64>,
    pub upp: Vec<f64>,
    pub kappa_r: Vec<f64>,
    pub kappa_t: Vec<f64>,
    /// u(0)
    pub center: f64,
    /// |u(r0)|
    pub boundary_residual: f64,
    /// |a_N − a_2N| / 15
    pub richardson_error: f64,
    /// Center-value bracket at termination.
    pub bracket: (f64, f64),
    pub steps: usize,
    /// min over r > 0 of min(λ_r, λ_t)
    pub min_margin: f64,
}

impl RadialProfile {
    /// Cubic Hermite interpolation of u at radius `r` ∈ [0, r0].
    pub fn value_at(&self, r: f64) -> f64 {
        let r = r.clamp(0.0, self.r0);
        let dr = self.r0 / self.steps as f64;
        let k = ((r / dr).floor() as usize).min(self.steps - 1);
        let (r_a, r_b) = (self.r[k], self.r[k + 1]);
        let hh = r_b - r_a;
        let t = (r - r_a) / hh;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.u[k] + h10 * hh * self.up[k] + h01 * self.u[k + 1] + h11 * hh * self.up[k + 1]
    }

    /// Columnar dump "r u up upp kappa_r kappa_t".
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# radial profile n={} r0={} steps={} center={:.17e} residual={:.3e} richardson={:.3e}",
            self.n, self.r0, self.steps, self.center, self.boundary_residual, self.richardson_error
        );
        let _ = writeln!(out, "# r u up upp kappa_r kappa_t");
        for k in 0..self.r.len() {
            let _ = writeln!(
                out,
                "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
                self.r[k], self.u[k], self.up[k], self.upp[k], self.kappa_r[k], self.kappa_t[k]
            );
        }
        out
    }
}

enum Outcome {
    /// Integrated to r0.
    Reached(Vec<[f64; 2]>),
    /// The gradient blew up before r0: u(r0) is read as +∞.
    Overshoot,
}

/// Local power-law start ψ ≈ A s^m on a flat state: u′ ≈ c s^q.
fn power_exponent(p_full: f64, p_half: f64) -> f64 {
    if p_half > 0.0 {
        (p_full / p_half).log2().clamp(0.0, 16.0)
    } else {
        16.0
    }
}

fn integrate(psi: &Expr, n: usize, r0: f64, a: f64, steps: usize) -> Result<Outcome, RadialError> {
    let dr = r0 / steps as f64;
    let nf = n as f64;
    let mut ys = Vec::with_capacity(steps + 1);
    ys.push([a, 0.0]);

    // first step from the axis: κ_t ≈ c h^β with β = m / n
    let p_h = psi_at(psi, dr, a, 0.0, n)?;
    let p_0 = psi_at(psi, 0.0, a, 0.0, n)?;
    let first = if p_h == 0.0 {
        [a, 0.0]
    } else {
        let m = if p_0 > 0.0 { 0.0 } else { power_exponent(p_h, psi_at(psi, 0.5 * dr, a, 0.0, n)?) };
        let beta = m / nf;
        let y = (p_h / ((nf - 1.0) * (nf - 1.0 + beta).powf(nf - 1.0))).powf(1.0 / nf);
        let phi = dr * y;
        if !(phi < 1.0) {
            return Ok(Outcome::Overshoot);
        }
        [a + dr * phi / (2.0 + beta), phi / (1.0 - phi * phi).sqrt()]
    };
    ys.push(first);

    let rhs = |r: f64, y: [f64; 2]| -> Result<[f64; 2], RadialError> {
        Ok([y[1], radial_rhs(r, y[0], y[1], psi, n)?])
    };
    for k in 1..steps {
        let r = k as f64 * dr;
        let y = ys[k];
        if y[1] == 0.0 {
            let p_next = psi_at(psi, r + dr, y[0], 0.0, n)?;
            if p_next > 0.0 {
                // leaving a flat region: u′ ≈ c s^q with q = (m+n−1)/n
                let m = power_exponent(p_next, psi_at(psi, r + 0.5 * dr, y[0], 0.0, n)?);
                let q = (m + nf - 1.0) / nf;
                let c = (p_next * r / ((nf - 1.0) * q.powf(nf - 1.0) * dr.powf(m))).powf(1.0 / nf);
                let up = c * dr.powf(q);
                ys.push([y[0] + c * dr.powf(q + 1.0) / (q + 1.0), up]);
                continue;
            }
        }
        let stage = |r: f64, y: [f64; 2]| -> Result<Option<[f64; 2]>, RadialError> {
            match rhs(r, y) {
                Ok(d) if d[1].is_finite() => Ok(Some(d)),
                Ok(_) => Ok(None),
                Err(RadialError::DegenerateTangential { .. }) if y[1] < 0.0 => Ok(None),
                Err(e) => Err(e),
            }
        };
        let add = |y: [f64; 2], d: [f64; 2], s: f64| [y[0] + s * d[0], y[1] + s * d[1]];
        let Some(k1) = stage(r, y)? else { return Ok(Outcome::Overshoot) };
        let Some(k2) = stage(r + 0.5 * dr, add(y, k1, 0.5 * dr))? else { return Ok(Outcome::Overshoot) };
        let Some(k3) = stage(r + 0.5 * dr, add(y, k2, 0.5 * dr))? else { return Ok(Outcome::Overshoot) };
        let Some(k4) = stage(r + dr, add(y, k3, dr))? else { return Ok(Outcome::Overshoot) };
        let next = [
            y[0] + dr / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dr / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        if !(next[0].is_finite() && next[1].is_finite()) || next[1].abs() > 1e8 {
            return Ok(Outcome::Overshoot);
        }
        ys.push(next);
    }
    Ok(Outcome::Reached(ys))
}

/// u(r0) as a function of the center value; +∞ on gradient blow-up.
fn endpoint(psi: &Expr, n: usize, r0: f64, a: f64, steps: usize) -> Result<(f64, Option<Vec<[f64; 2]>>), RadialError> {
    match integrate(psi, n, r0, a, steps)? {
        Outcome::Reached(ys) => Ok((ys[steps][0], Some(ys))),
        Outcome::Overshoot => Ok((f64::INFINITY, None)),
    }
}

struct ShotResult {
    a: f64,
    residual: f64,
    bracket: (f64, f64),
    ys: Vec<[f64; 2]>,
}

fn bisect(psi: &Expr, n: usize, r0: f64, tol: f64, steps: usize) -> Result<ShotResult, RadialError> {
    let (mut lo, mut hi) = (-10.0 * r0, 0.0);
    let (g_lo, _) = endpoint(psi, n, r0, lo, steps)?;
    let (g_hi, ys_hi) = endpoint(psi, n, r0, hi, steps)?;
    if g_hi.abs() <= tol {
        if let Some(ys) = ys_hi {
            return Ok(ShotResult { a: hi, residual: g_hi.abs(), bracket: (lo, hi), ys });
        }
    }
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(RadialError::BracketFailure { lo, hi, u_lo: g_lo, u_hi: g_hi });
    }
    let mut best: Option<ShotResult> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (g, ys) = endpoint(psi, n, r0, mid, steps)?;
        if let Some(ys) = ys {
            if best.as_ref().is_none_or(|b| g.abs() < b.residual) {
                best = Some(ShotResult { a: mid, residual: g.abs(), bracket: (lo, hi), ys });
            }
        }
        if g.abs() <= tol || mid <= lo || mid >= hi {
            break;
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    match best {
        Some(b) if b.residual <= tol => Ok(b),
        Some(b) => Err(RadialError::StiffnessFailure {
            r: r0,
            message: format!("bisection stalled with |u(r0)| = {:e} > tol = {tol:e}", b.residual),
        }),
        None => Err(RadialError::StiffnessFailure {
            r: r0,
            message: "no trial center value reached r0".into(),
        }),
    }
}

/// Shooting solve with `steps` RK4 steps, Richardson-checked against 2·steps.
pub fn shoot_with(psi: &Expr, r0: f64, n: usize, tol: f64, steps: usize) -> Result<RadialProfile, RadialError> {
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(RadialError::InvalidInput(format!("r0 must be positive, got {r0}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(RadialError::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    if n < 2 {
        return Err(RadialError::InvalidInput(format!("dimension must be >= 2, got {n}")));
    }
    if steps < 2 {
        return Err(RadialError::InvalidInput(format!("need at least 2 steps, got {steps}")));
    }
    psi.check_dim(n)?;
    let coarse = bisect(psi, n, r0, tol, steps)?;
    let fine = bisect(psi, n, r0, tol, 2 * steps)?;
    let richardson_error = (coarse.a - fine.a).abs() / 15.0;

    let dr = r0 / steps as f64;
    let nf = n as f64;
    let mut prof = RadialProfile {
        n,
        r0,
        r: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        up: Vec::with_capacity(steps + 1),
        upp: Vec::with_capacity(steps + 1),
        kappa_r: Vec::with_capacity(steps + 1),
        kappa_t: Vec::with_capacity(steps + 1),
        center: coarse.a,
        boundary_residual: coarse.residual,
        richardson_error,
        bracket: coarse.bracket,
        steps,
        min_margin: f64::INFINITY,
    };
    for (k, y) in coarse.ys.iter().enumerate() {
        let r = k as f64 * dr;
        let upp = match radial_rhs(r, y[0], y[1], psi, n) {
            Ok(v) => v,
            // the ODE is singular where a flat region ends; report the limit
            Err(RadialError::DegenerateTangential { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let (kr, kt) = radial_pair(r, y[1], upp);
        if r > 0.0 && upp.is_finite() {
            let margin = ((nf - 1.0) * kt).min(kr + (nf - 2.0) * kt);
            prof.min_margin = prof.min_margin.min(margin);
        }
        prof.r.push(r);
        prof.u.push(y[0]);
        prof.up.push(y[1]);
        prof.upp.push(upp);
        prof.kappa_r.push(kr);
        prof.kappa_t.push(kt);
    }
    Ok(prof)
}

/// Shooting solve with the default step r0 / 4096.
pub fn shoot(psi: &Expr, r0: f64, n: usize, tol: f64) -> Result<RadialProfile, RadialError> {
    shoot_with(psi, r0, n, tol, DEFAULT_STEPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psilang::parse;

    #[test]
    fn curvature_examples() {
        for &r in &[0.1f64, 0.3, 0.7] {
            let s = (1.0 - r * r).sqrt();
            let k = radial_curvatures(r, r / s, 1.0 / (s * s * s), 3).unwrap();
            for v in k.values() {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        let k = radial_curvatures(0.0, 0.0, 2.0, 4).unwrap();
        assert_eq!(k.values(), &[2.0; 4]);
    }

    #[test]
    fn rhs_examples() {
        let one = parse("1").unwrap();
        let eight = parse("8").unwrap();
        for &r in &[0.05f64, 0.25, 0.45] {
            let s = (1.0 - r * r).sqrt();
            let exact = 1.0 / (s * s * s);
            let got = radial_rhs(r, 0.0, r / s, &one, 2).unwrap();
            assert!((got - exact).abs() < 1e-12 * exact);
            let got = radial_rhs(r, 0.0, r / s, &eight, 3).unwrap();
            assert!((got - exact).abs() < 1e-12 * exact);
        }
        let r2 = parse("r^2").unwrap();
        assert_eq!(radial_rhs(0.0, -0.1, 0.0, &r2, 2).unwrap(), 0.0);
        assert!(matches!(
            radial_rhs(0.1, 0.0, 0.0, &one, 2),
            Err(RadialError::DegenerateTangential { .. })
        ));
        let neg = parse("-1").unwrap();
        assert!(matches!(radial_rhs(0.1, 0.0, 0.1, &neg, 2), Err(RadialError::NegativePsi { .. })));
    }

    #[test]
    fn sphere_caps() {
        let exact = (0.75f64).sqrt() - 1.0;
        let p = shoot(&parse("1").unwrap(), 0.5, 2, 1e-12).unwrap();
        assert!((p.center - exact).abs() < 1e-8, "{}", p.center);
        let p = shoot(&parse("8").unwrap(), 0.5, 3, 1e-12).unwrap();
        assert!((p.center - exact).abs() < 1e-8, "{}", p.center);
        assert!(p.min_margin > 0.0);
        assert!((p.value_at(0.3) - (-(1.0f64 - 0.09).sqrt() + 0.75f64.sqrt())).abs() < 1e-8);
    }
}

#[cfg(test)]
mod fixture_tests {
    use super::*;
    use crate::psilang::parse;

    // For n = 2 the relation integrates to φ² = 2∫ rψ with φ = u′/w; for ψ = r²,
    // φ = r²/√2 and u(0) = −∫₀^{1/2} φ/√(1−φ²) dr (30-digit quadrature).
    const R2_CENTER: f64 = -0.029_663_078_022_426_653;

    #[test]
    fn degenerate_center_fixture() {
        let p = shoot_with(&parse("r^2").unwrap(), 0.5, 2, 1e-13, 8192).unwrap();
        assert!((p.center - R2_CENTER).abs() < 1e-9, "{:e}", p.center - R2_CENTER);
        assert!(p.richardson_error <= 1e-9);
        assert!(p.min_margin >= 0.0);
    }

    #[test]
    fn flat_core_is_integrated() {
        // ψ vanishes on r ≤ 0.2; φ² = 2∫ r (r²−0.04)² = ((r²−0.04)³)/3 beyond it
        let p = shoot(&parse("max(r^2 - 0.04, 0)^2").unwrap(), 0.5, 2, 1e-13).unwrap();
        let phi = |r: f64| (((r * r - 0.04f64).max(0.0)).powi(3) / 3.0).sqrt();
        let mut sum = 0.0;
        let m = 200_000;
        for k in 0..m {
            let r = 0.2 + 0.3 * (k as f64 + 0.5) / m as f64;
            let f = phi(r);
            sum += f / (1.0 - f * f).sqrt();
        }
        let exact = -sum * 0.3 / m as f64;
        assert!((p.center - exact).abs() < 1e-9, "{} vs {}", p.center, exact);
    }
}
