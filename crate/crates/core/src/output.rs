//! Solution and report files, SVG heatmaps, and reading stored solutions
//! back. All floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::config::Config;
use crate::domaingrid::{fd_derivatives, Grid};
use crate::graphgeom::geometry_at;
use crate::solver::{DerivativeBounds, GridFunction, NewtonHistory, NodeRow, SolveReport, Solution, StageReport};
use crate::verify::format_certificates;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_file(path: &Path, text: &str) -> Result<(), OutputError> {
    std::fs::write(path, text).map_err(|source| OutputError::Write { path: path.display().to_string(), source })
}

/// `# grid …` header line identifying the grid.
pub fn grid_line(grid: &Grid) -> String {
    format!("grid {} h={} nodes={}", grid.shape.describe(), num(grid.h), grid.len())
}

fn stage_line(s: &StageReport) -> String {
    format!(
        "stage eps={} iterations={} residual={} min_margin={} sup_u={} sup_du={} sup_d2u={}",
        num(s.eps),
        s.iterations(),
        num(s.final_residual()),
        num(s.min_margin),
        num(s.bounds.sup_u),
        num(s.bounds.sup_du),
        num(s.bounds.sup_d2u)
    )
}

fn column_names(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    cols.push("u".into());
    cols.extend((1..=n).map(|i| format!("u_{i}")));
    for i in 1..=n {
        for j in i..=n {
            cols.push(format!("u_{i}{j}"));
        }
    }
    cols.extend((1..=n).map(|i| format!("kappa{i}")));
    cols.push("k_eta".into());
    cols.push("residual".into());
    cols
}

/// Self-describing columnar solution: `#` header with the effective
/// configuration, grid, stages, certificates and summary; one row per node.
pub fn solution_text(cfg: &Config, sol: &Solution, rows: &[NodeRow]) -> String {
    let mut out = String::from("# etacurv solution\n");
    for line in cfg.echo().lines() {
        let _ = writeln!(out, "# config {line}");
    }
    let _ = writeln!(out, "# {}", grid_line(&sol.grid));
    for s in &sol.report.stages {
        let _ = writeln!(out, "# {}", stage_line(s));
    }
    for c in &sol.report.certificates {
        let _ = writeln!(out, "# certificate {}", c.line());
    }
    let _ = writeln!(out, "# summary {}", sol.report.summary());
    let _ = writeln!(out, "# columns {}", column_names(sol.grid.n).join(" "));
    for r in rows {
        let mut cols: Vec<String> = r.x.iter().map(|v| num(*v)).collect();
        cols.push(num(r.u));
        cols.extend(r.du.iter().chain(&r.d2u).chain(&r.kappa).map(|v| num(*v)));
        cols.push(num(r.k_eta));
        cols.push(num(r.residual));
        let _ = writeln!(out, "{}", cols.join(" "));
    }
    out
}

pub fn report_text(cfg: &Config, report: &SolveReport) -> String {
    let mut out = String::from("etacurv solve report\n\n");
    let _ = writeln!(out, "summary: {}", report.summary());
    let _ = writeln!(
        out,
        "initial guess: {}",
        report.initial_radius.map_or("subsolution from configuration".into(), |r| format!("sphere cap R = {r}"))
    );
    let _ = writeln!(out, "\nstages:");
    let _ = writeln!(out, "{:>10} {:>5} {:>12} {:>12} {:>12} {:>12} {:>12}", "eps", "iter", "residual", "min_margin", "sup|u|", "sup|Du|", "sup|D2u|");
    for s in &report.stages {
        let _ = writeln!(
            out,
            "{:>10.3e} {:>5} {:>12.4e} {:>12.4e} {:>12.6e} {:>12.6e} {:>12.6e}",
            s.eps,
            s.iterations(),
            s.final_residual(),
            s.min_margin,
            s.bounds.sup_u,
            s.bounds.sup_du,
            s.bounds.sup_d2u
        );
    }
    let _ = writeln!(out, "\nnewton histories (residual_inf, step):");
    for s in &report.stages {
        let _ = write!(out, "eps={:e}:", s.eps);
        for (k, r) in s.history.residual_inf.iter().enumerate() {
            match s.history.steps.get(k) {
                Some(step) => {
                    let _ = write!(out, " {r:.3e} [s={step}]");
                }
                None => {
                    let _ = write!(out, " {r:.3e}");
                }
            }
        }
        out.push('\n');
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out, "\nwarnings:");
        for w in &report.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    let _ = writeln!(out, "\ncertificates:");
    out.push_str(&format_certificates(&report.certificates));
    let _ = writeln!(out, "\nconfiguration:");
    out.push_str(&cfg.echo());
    out
}

/// A solution file read back.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSolution {
    pub config: String,
    pub grid_line: String,
    pub stages: Vec<StageReport>,
    pub x: Vec<Vec<f64>>,
    pub u: GridFunction,
}

fn field(path: &str, line: usize, text: &str, key: &str) -> Result<f64, OutputError> {
    let fmt = |message: String| OutputError::Format { path: path.into(), line, message };
    let tok = text
        .split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| fmt(format!("missing field '{key}'")))?;
    tok.parse().map_err(|_| fmt(format!("bad value for '{key}'")))
}

pub fn parse_solution(path: &str, text: &str) -> Result<StoredSolution, OutputError> {
    let mut sol = StoredSolution {
        config: String::new(),
        grid_line: String::new(),
        stages: Vec::new(),
        x: Vec::new(),
        u: GridFunction::default(),
    };
    let mut n = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fmt = |message: String| OutputError::Format { path: path.into(), line, message };
        if let Some(h) = raw.strip_prefix("# ") {
            if let Some(c) = h.strip_prefix("config ") {
                sol.config.push_str(c);
                sol.config.push('\n');
            } else if h.starts_with("grid ") {
                sol.grid_line = h.to_string();
            } else if h.starts_with("stage ") {
                let bounds = DerivativeBounds {
                    sup_u: field(path, line, h, "sup_u")?,
                    sup_du: field(path, line, h, "sup_du")?,
                    sup_d2u: field(path, line, h, "sup_d2u")?,
                };
                sol.stages.push(StageReport {
                    eps: field(path, line, h, "eps")?,
                    history: NewtonHistory::default(),
                    min_margin: field(path, line, h, "min_margin")?,
                    bounds,
                });
            } else if let Some(c) = h.strip_prefix("columns ") {
                let cols = c.split_whitespace().count();
                // n coordinates, u, n gradient, n(n+1)/2 Hessian, n curvatures, k_eta, residual
                n = (1..=3).find(|&d| 3 * d + d * (d + 1) / 2 + 3 == cols);
                if n.is_none() {
                    return Err(fmt(format!("unexpected column count {cols}")));
                }
            }
            continue;
        }
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let Some(n) = n else { return Err(fmt("data before the columns header".into())) };
        let vals: Vec<f64> = raw
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| fmt(format!("bad number '{t}'"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != 3 * n + n * (n + 1) / 2 + 3 {
            return Err(fmt(format!("expected {} columns, got {}", 3 * n + n * (n + 1) / 2 + 3, vals.len())));
        }
        sol.x.push(vals[..n].to_vec());
        sol.u.values.push(vals[n]);
    }
    if sol.grid_line.is_empty() {
        return Err(OutputError::Format { path: path.into(), line: 0, message: "no grid header".into() });
    }
    Ok(sol)
}

pub fn read_solution(path: &Path) -> Result<StoredSolution, OutputError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| OutputError::Read { path: p.clone(), source })?;
    parse_solution(&p, &text)
}

// ---------------------------------------------------------------------------
// SVG

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

fn color(t: f64) -> String {
    if !t.is_finite() {
        return "#999999".into();
    }
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let k = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    let mix = |x: f64, y: f64| (x + f * (y - x)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Cell heatmap of node values over the (x1, x2) plane (the x3 = 0 slice in
/// three dimensions) with a colorbar. NaN values are drawn grey.
pub fn heatmap_svg(title: &str, grid: &Grid, values: &[f64]) -> String {
    let ax = grid.shape.semiaxes();
    let size = 480.0;
    let scale = size / (2.0 * ax[0].max(ax[1]) + 2.0 * grid.h);
    let (ox, oy) = (20.0 + size / 2.0, 40.0 + size / 2.0);
    let picked: Vec<(usize, f64)> = grid
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, nd)| grid.n < 3 || nd.index[2] == 0)
        .map(|(k, _)| (k, values[k]))
        .collect();
    let finite = picked.iter().map(|p| p.1).filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        size + 120.0,
        size + 60.0
    );
    let _ = writeln!(out, r#"<text x="20" y="24">{title}</text>"#);
    let cell = grid.h * scale;
    for (k, v) in &picked {
        let p = &grid.nodes[*k].pos;
        let _ = writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
            ox + p[0] * scale - cell / 2.0,
            oy - p[1] * scale - cell / 2.0,
            cell,
            cell,
            color((v - lo) / span)
        );
    }
    let bx = size + 50.0;
    for i in 0..64 {
        let t = i as f64 / 63.0;
        let _ = writeln!(
            out,
            r#"<rect x="{bx}" y="{:.3}" width="16" height="{:.3}" fill="{}"/>"#,
            40.0 + (1.0 - t) * (size - size / 64.0),
            size / 64.0 + 0.5,
            color(t)
        );
    }
    let _ = writeln!(out, r#"<text x="{bx}" y="34">{hi:.4e}</text>"#);
    let _ = writeln!(out, r#"<text x="{bx}" y="{}">{lo:.4e}</text>"#, size + 56.0);
    out.push_str("</svg>\n");
    out
}

/// Γ-margin min_i λ_i at every node (NaN where the geometry fails).
pub fn margin_field(grid: &Grid, u: &GridFunction) -> Vec<f64> {
    (0..grid.len())
        .map(|k| geometry_at(&fd_derivatives(grid, &u.values, k)).map_or(f64::NAN, |g| g.margin))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn colors_span_the_map() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(f64::NAN), "#999999");
    }

    #[test]
    fn parse_rejects_garbage() {
        let text = "# grid ball n=2 r0=0.5 h=1 nodes=1\n# columns x1 x2 u\n";
        assert!(parse_solution("t", text).is_err());
        let good = "# grid g\n# stage eps=1e-1 iterations=2 residual=0 min_margin=1 sup_u=1 sup_du=2 sup_d2u=3\n\
                    # columns a b c d e f g h i j k l\n1 2 3 4 5 6 7 8 9 10 11 12\n";
        let s = parse_solution("t", good).unwrap();
        assert_eq!(s.u.values, vec![3.0]);
        assert_eq!(s.stages[0].bounds.sup_d2u, 3.0);
    }
}
