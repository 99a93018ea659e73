//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::time::{Duration, Instant};

use rand::Rng;

use etacurv::cli::{cmd_solve, EXIT_OK};
use etacurv::config::Config;
use etacurv::domaingrid::{fd_derivatives, DomainShape};
use etacurv::psilang::parse;
use etacurv::radial::shoot;
use etacurv::sampling::rng_for;
use etacurv::solver::{
    continuation_solve, evaluate, jacobian, residual, sphere_cap, GridFunction, ProblemSpec, Solution,
};
use etacurv::verify::{evidence_changes, property_battery};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn exact_cap(x: &[f64], radius: f64, r0: f64) -> f64 {
    sphere_cap(x, radius, r0).0
}

fn cap_error(sol: &Solution, radius: f64, r0: f64) -> f64 {
    sol.grid
        .nodes
        .iter()
        .zip(&sol.u.values)
        .map(|(nd, u)| (u - exact_cap(&nd.pos, radius, r0)).abs())
        .fold(0.0, f64::max)
}

fn spec(n: usize, psi: &str, h: f64) -> ProblemSpec {
    ProblemSpec::new(DomainShape::ball(n, 0.5).unwrap(), parse(psi).unwrap(), h)
}

fn certificates_ok(sol: &Solution) -> Result<(), String> {
    match sol.report.certificates.iter().find(|c| !c.pass) {
        Some(c) => Err(c.line()),
        None => Ok(()),
    }
}

struct Fixtures {
    cap2: Vec<(f64, Solution, Duration)>,
    cap3: Option<(Solution, Duration)>,
    r2: Option<Solution>,
    c11: Option<Solution>,
    errors: Vec<String>,
}

fn solve_fixtures() -> Fixtures {
    let mut fx = Fixtures { cap2: Vec::new(), cap3: None, r2: None, c11: None, errors: Vec::new() };
    for h in [1.0 / 32.0, 1.0 / 64.0] {
        let t = Instant::now();
        match continuation_solve(&spec(2, "1", h)) {
            Ok(s) => fx.cap2.push((h, s, t.elapsed())),
            Err(e) => fx.errors.push(format!("cap n=2 h={h}: {e}")),
        }
    }
    let t = Instant::now();
    match continuation_solve(&spec(3, "8", 1.0 / 16.0)) {
        Ok(s) => fx.cap3 = Some((s, t.elapsed())),
        Err(e) => fx.errors.push(format!("cap n=3: {e}")),
    }
    match continuation_solve(&spec(2, "r^2", 1.0 / 64.0)) {
        Ok(s) => fx.r2 = Some(s),
        Err(e) => fx.errors.push(format!("r^2: {e}")),
    }
    let c11 = spec(2, "max(r^2 - 0.04, 0)^2", 1.0 / 32.0).with_schedule(vec![1e-1, 1e-2, 1e-3, 1e-4]);
    match continuation_solve(&c11) {
        Ok(s) => fx.c11 = Some(s),
        Err(e) => fx.errors.push(format!("c11: {e}")),
    }
    fx
}

fn criterion_cap2(fx: &Fixtures) -> Outcome {
    if fx.cap2.len() != 2 {
        return outcome(false, fx.errors.join("; "));
    }
    let radius = 1.0;
    let e: Vec<f64> = fx.cap2.iter().map(|(_, s, _)| cap_error(s, radius, 0.5)).collect();
    let slow = fx.cap2.iter().map(|c| c.2).max().unwrap();
    let ratio = e[0] / e[1];
    let pass = e[0] <= 8e-3 && e[1] <= 2e-3 && ratio >= 3.0 && slow <= Duration::from_secs(60);
    outcome(pass, format!("err(1/32)={:.3e} err(1/64)={:.3e} ratio={ratio:.2} slowest={slow:.2?}", e[0], e[1]))
}

fn criterion_cap3(fx: &Fixtures) -> Outcome {
    let Some((sol, t)) = &fx.cap3 else { return outcome(false, fx.errors.join("; ")) };
    let centre = sol.grid.nodes.iter().position(|nd| nd.pos.iter().all(|v| *v == 0.0)).unwrap();
    let err = (sol.u.values[centre] - (-0.1339746)).abs();
    let pass = err <= 5e-3 && *t <= Duration::from_secs(300);
    outcome(pass, format!("u(0)={:.7} err={err:.3e} time={t:.2?}", sol.u.values[centre]))
}

fn criterion_radial(fx: &Fixtures) -> Outcome {
    let Some(sol) = &fx.r2 else { return outcome(false, fx.errors.join("; ")) };
    let eps = sol.final_eps();
    let prof = match shoot(&parse("r^2").unwrap(), 0.5, 2, 1e-12) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("shooting: {e}")),
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    for (nd, u) in sol.grid.nodes.iter().zip(&sol.u.values) {
        if nd.pos[1] == 0.0 {
            worst = worst.max((u - prof.value_at(nd.pos[0].abs())).abs());
            count += 1;
        }
    }
    let h = sol.grid.h;
    let tol = (5.0 * h * h).max(5e-3);
    outcome(
        worst <= tol && eps <= 1e-4 && count > 0,
        format!("final eps={eps:e} axis nodes={count} Linf={worst:.3e} tol={tol:.1e}"),
    )
}

fn criterion_c11(fx: &Fixtures) -> Outcome {
    let Some(sol) = &fx.c11 else { return outcome(false, fx.errors.join("; ")) };
    match evidence_changes(&sol.report) {
        Ok((du, d2u)) => outcome(
            du < 0.05 && d2u < 0.10,
            format!("change sup|Du|={:.3}% sup|D2u|={:.3}%", 100.0 * du, 100.0 * d2u),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

/// Random admissible grid function near a sphere cap: cap of random radius
/// plus a smooth perturbation vanishing on the boundary.
fn random_state(spec: &ProblemSpec, sol: &Solution, eps: f64, rng: &mut impl Rng) -> Option<GridFunction> {
    let r0 = 0.5;
    let radius = r0 * (1.05 + rng.random::<f64>());
    let coef: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut delta = 0.2;
    for _ in 0..20 {
        let vals = sol
            .grid
            .nodes
            .iter()
            .map(|nd| {
                let x = &nd.pos;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let bump = (r0 * r0 - r2)
                    * (coef[0]
                        + coef[1] * (3.0 * x[0]).sin()
                        + coef[2] * (2.0 * x[1]).cos()
                        + coef[3] * x[0] * x[1]
                        + coef[4] * x.last().unwrap().powi(2)
                        + coef[5] * (x[0] + x[1]).sin());
                exact_cap(x, radius, r0) + delta * bump
            })
            .collect();
        let u = GridFunction::new(vals);
        if evaluate(spec, &sol.grid, &u, eps, 1e-3).is_ok() {
            return Some(u);
        }
        delta *= 0.5;
    }
    None
}

/// Node-wise random direction scaled to discrete C² size 1, i.e.
/// max over nodes of |v| + |Dv|∞ + |D²v|max = 1, so that a step t perturbs
/// every node state by at most t.
fn unit_c2_direction(sol: &Solution, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..sol.grid.len()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let size = (0..sol.grid.len())
        .map(|k| {
            let st = fd_derivatives(&sol.grid, &v, k);
            let dv = st.p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            v[k].abs() + dv + st.r.abs().max()
        })
        .fold(0.0, f64::max);
    v.iter().map(|x| x / size).collect()
}

fn jacobian_check(spec: &ProblemSpec, sol: &Solution, eps: f64, stream: u64) -> Result<f64, String> {
    let mut rng = rng_for(5, stream);
    let t = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u = random_state(spec, sol, eps, &mut rng).ok_or("no admissible random state")?;
        let v = unit_c2_direction(sol, &mut rng);
        let jac = jacobian(spec, &sol.grid, &u, eps).map_err(|e| e.to_string())?;
        let jv = jac.matvec(&v);
        let shift = |s: f64| GridFunction::new(u.values.iter().zip(&v).map(|(a, b)| a + s * b).collect());
        let fp = residual(spec, &sol.grid, &shift(t), eps).map_err(|e| e.to_string())?;
        let fm = residual(spec, &sol.grid, &shift(-t), eps).map_err(|e| e.to_string())?;
        let scale = jv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = jv
            .iter()
            .zip(fp.iter().zip(&fm))
            .map(|(j, (p, m))| (j - (p - m) / (2.0 * t)).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

fn criterion_jacobian(fx: &Fixtures) -> Outcome {
    let mut cases: Vec<(String, ProblemSpec, &Solution, f64)> = Vec::new();
    if let Some((_, s, _)) = fx.cap2.first() {
        cases.push(("psi=1".into(), spec(2, "1", s.grid.h), s, 0.0));
        // ψ depending on z and the normal exercises the ψ-derivative columns
        cases.push(("psi(z,nu)".into(), spec(2, "1 + 0.5*nu1^2 + 0.3*exp(z)", s.grid.h), s, 1e-2));
    }
    if let Some((s, _)) = &fx.cap3 {
        cases.push(("n=3 psi=8".into(), spec(3, "8", s.grid.h), s, 1e-2));
    }
    if let Some(s) = &fx.r2 {
        cases.push(("psi=r^2".into(), spec(2, "r^2", s.grid.h), s, 1e-3));
    }
    if let Some(s) = &fx.c11 {
        cases.push(("psi=c11".into(), spec(2, "max(r^2 - 0.04, 0)^2", s.grid.h), s, 1e-2));
    }
    if cases.len() != 5 {
        return outcome(false, format!("missing fixtures: {}", fx.errors.join("; ")));
    }
    let mut parts = Vec::new();
    let mut pass = true;
    for (k, (name, sp, sol, eps)) in cases.iter().enumerate() {
        match jacobian_check(sp, sol, *eps, k as u64) {
            Ok(w) => {
                pass &= w <= 1e-5;
                parts.push(format!("{name}:{w:.2e}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, format!("100 states/fixture, C2-unit directions, step 1e-6, worst relative error {}", parts.join(" ")))
}

fn criterion_battery() -> Outcome {
    let t = Instant::now();
    let certs = property_battery(42, 10_000, &[2, 3, 4, 5, 6]);
    let el = t.elapsed();
    let failed: Vec<String> = certs.iter().filter(|c| !c.pass).map(|c| c.line()).collect();
    let pass = failed.is_empty() && el <= Duration::from_secs(120);
    outcome(pass, format!("{} properties, failures=[{}] time={el:.2?}", certs.len(), failed.join(", ")))
}

fn criterion_certificates(fx: &Fixtures) -> Outcome {
    let mut all: Vec<(&str, &Solution)> = fx.cap2.iter().map(|(_, s, _)| ("cap2", s)).collect();
    all.extend(fx.cap3.as_ref().map(|(s, _)| ("cap3", s)));
    all.extend(fx.r2.as_ref().map(|s| ("r2", s)));
    all.extend(fx.c11.as_ref().map(|s| ("c11", s)));
    let mut fails: Vec<String> = fx.errors.clone();
    let mut count = 0;
    for (name, s) in &all {
        count += s.report.certificates.len();
        if let Err(line) = certificates_ok(s) {
            fails.push(format!("{name}: {line}"));
        }
    }
    outcome(fails.is_empty() && all.len() == 5, format!("{} fixtures, {count} certificates, failures=[{}]", all.len(), fails.join("; ")))
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let text = "n = 2\ndomain.kind = ball\ndomain.r0 = 0.5\npsi = 1 + 0.5*r^2\nh = 0.0625\n";
    let out = dir.path().join("out");
    let cfg = match Config::from_text(text).and_then(|c| c.with_overrides(&[("output.dir", out.display().to_string())])) {
        Ok(c) => c,
        Err(e) => return outcome(false, e.to_string()),
    };
    let run = |threads: usize| -> Result<Vec<u8>, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let code = pool.install(|| cmd_solve(&cfg)).map_err(|e| e.to_string())?;
        if code != EXIT_OK {
            return Err(format!("exit {code}"));
        }
        std::fs::read(cfg.output_path("solution.txt")).map_err(|e| e.to_string())
    };
    match (run(4), run(4), run(1)) {
        (Ok(a), Ok(b), Ok(c)) => outcome(
            a == b && a == c,
            format!("two runs identical={}, single-thread identical={}, {} bytes", a == b, a == c, a.len()),
        ),
        (a, b, c) => outcome(false, format!("{:?} {:?} {:?}", a.err(), b.err(), c.err())),
    }
}

fn main() {
    let fx = solve_fixtures();
    let results = [
        ("1 sphere cap n=2", criterion_cap2(&fx)),
        ("2 sphere cap n=3", criterion_cap3(&fx)),
        ("3 degenerate radial agreement", criterion_radial(&fx)),
        ("4 C11 evidence", criterion_c11(&fx)),
        ("5 Jacobian consistency", criterion_jacobian(&fx)),
        ("6 property battery", criterion_battery()),
        ("7 certificates", criterion_certificates(&fx)),
        ("8 determinism", criterion_determinism()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
