//! Domain shapes, boundary curvature analysis and the masked Cartesian grid
//! with boundary-fitted (Shortley–Weller) difference stencils.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::graphgeom::PointState;
use crate::linalg::symmetric_eigen;
use crate::symcone;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("no interior lattice node for spacing {h}")]
    EmptyGrid { h: f64 },
    #[error("point is not on the boundary (implicit residual {residual:e})")]
    OffBoundary { residual: f64 },
}

/// Quadric domains `Σ (x_i / a_i)² < 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Ball { n: usize, r0: f64 },
    Ellipse { a: f64, b: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
}

fn positive(v: f64, name: &str) -> Result<(), GridError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(GridError::InvalidShape(format!("{name} must be positive, got {v}")))
    }
}

impl DomainShape {
    pub fn ball(n: usize, r0: f64) -> Result<Self, GridError> {
        if !(2..=3).contains(&n) {
            return Err(GridError::InvalidShape(format!("ball dimension must be 2 or 3, got {n}")));
        }
        positive(r0, "r0")?;
        Ok(DomainShape::Ball { n, r0 })
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self, GridError> {
        positive(a, "a")?;
        positive(b, "b")?;
        Ok(DomainShape::Ellipse { a, b })
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self, GridError> {
        positive(a, "a")?;
        positive(b, "b")?;
        positive(c, "c")?;
        Ok(DomainShape::Ellipsoid { a, b, c })
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainShape::Ball { n, .. } => *n,
            DomainShape::Ellipse { .. } => 2,
            DomainShape::Ellipsoid { .. } => 3,
        }
    }

    pub fn semiaxes(&self) -> Vec<f64> {
        match *self {
            DomainShape::Ball { n, r0 } => vec![r0; n],
            DomainShape::Ellipse { a, b } => vec![a, b],
            DomainShape::Ellipsoid { a, b, c } => vec![a, b, c],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DomainShape::Ball { .. } => "ball",
            DomainShape::Ellipse { .. } => "ellipse",
            DomainShape::Ellipsoid { .. } => "ellipsoid",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DomainShape::Ball { n, r0 } => format!("ball n={n} r0={r0}"),
            DomainShape::Ellipse { a, b } => format!("ellipse a={a} b={b}"),
            DomainShape::Ellipsoid { a, b, c } => format!("ellipsoid a={a} b={b} c={c}"),
        }
    }

    /// Implicit function, negative inside.
    pub fn implicit(&self, x: &[f64]) -> f64 {
        self.semiaxes()
            .iter()
            .zip(x)
            .map(|(a, v)| (v / a) * (v / a))
            .sum::<f64>()
            - 1.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.implicit(x) < 0.0
    }

    /// Smallest t > 0 with `x + t d` on the boundary, for x inside.
    pub fn ray_exit(&self, x: &[f64], d: &[f64]) -> f64 {
        let ax = self.semiaxes();
        let (mut qa, mut qb, mut qc) = (0.0, 0.0, -1.0);
        for i in 0..ax.len() {
            let a2 = ax[i] * ax[i];
            qa += d[i] * d[i] / a2;
            qb += 2.0 * x[i] * d[i] / a2;
            qc += x[i] * x[i] / a2;
        }
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
        if qb >= 0.0 {
            2.0 * qc / (-qb - disc)
        } else {
            (-qb + disc) / (2.0 * qa)
        }
    }

    /// Principal curvatures of ∂Ω at `point`, positive for convex shapes,
    /// ascending: eigenvalues of the tangential Hessian of the implicit
    /// function divided by its gradient norm.
    pub fn boundary_curvatures(&self, point: &[f64]) -> Result<Vec<f64>, GridError> {
        let n = self.dim();
        let residual = self.implicit(point);
        if point.len() != n || residual.abs() > 1e-10 {
            return Err(GridError::OffBoundary { residual });
        }
        let ax = self.semiaxes();
        let grad = DVector::from_fn(n, |i, _| 2.0 * point[i] / (ax[i] * ax[i]));
        let gnorm = grad.norm();
        let normal = &grad / gnorm;
        let hess = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 / (ax[i] * ax[i]) } else { 0.0 });
        let tangent = tangent_basis(&normal);
        let shape_op = tangent.transpose() * hess * &tangent / gnorm;
        let eig = symmetric_eigen(&shape_op).map_err(|e| GridError::InvalidShape(e.to_string()))?;
        Ok(eig.values)
    }

    /// Deterministic boundary points: equal angles (n = 2) or a Fibonacci
    /// lattice mapped through the semiaxes (n = 3).
    pub fn sample_boundary(&self, count: usize) -> Vec<Vec<f64>> {
        let ax = self.semiaxes();
        if self.dim() == 2 {
            return (0..count)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    vec![ax[0] * t.cos(), ax[1] * t.sin()]
                })
                .collect();
        }
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                let u = [rho * phi.cos(), rho * phi.sin(), z];
                // renormalize against the implicit function to remove rounding
                let mut p: Vec<f64> = (0..3).map(|i| ax[i] * u[i]).collect();
                let s = (self.implicit(&p) + 1.0).sqrt();
                p.iter_mut().for_each(|v| *v /= s);
                p
            })
            .collect()
    }

    /// Uniform point in Ω by rejection from the bounding box.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let ax = self.semiaxes();
        loop {
            let x: Vec<f64> = ax.iter().map(|a| a * (2.0 * rng.random::<f64>() - 1.0)).collect();
            if self.contains(&x) {
                return x;
            }
        }
    }
}

fn tangent_basis(normal: &DVector<f64>) -> DMatrix<f64> {
    let n = normal.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for k in 0..n {
        if basis.len() == n - 1 {
            break;
        }
        let mut v = DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
        v -= normal * normal.dot(&v);
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    DMatrix::from_columns(&basis)
}

/// Outcome of the uniform 2-convexity search.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoConvexity {
    pub ok: bool,
    /// Smallest K in {1, 2, 4, …, 2²⁰} that works, when one does.
    pub k: Option<f64>,
    pub min_boundary_curvature: f64,
    pub samples: usize,
}

pub const CONVEXITY_SAMPLES: usize = 1024;

/// n = 2: strict convexity of ∂Ω. n ≥ 3: `(κ^b_1, …, κ^b_{n−1}, K) ∈ Γ_2` at every
/// sampled boundary point for some K on a geometric grid.
pub fn check_two_convex(shape: &DomainShape) -> TwoConvexity {
    let pts = shape.sample_boundary(CONVEXITY_SAMPLES);
    let curv: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| shape.boundary_curvatures(p).expect("sampled point lies on the boundary"))
        .collect();
    let min_curv = curv.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let samples = pts.len();
    if shape.dim() == 2 {
        let ok = min_curv > 0.0;
        return TwoConvexity { ok, k: ok.then_some(1.0), min_boundary_curvature: min_curv, samples };
    }
    for e in 0..=20 {
        let k = (1u64 << e) as f64;
        let all = curv.iter().all(|c| {
            let mut aug = c.clone();
            aug.push(k);
            symcone::in_gamma_k(&aug, 2).unwrap_or(false)
        });
        if all {
            return TwoConvexity { ok: true, k: Some(k), min_boundary_curvature: min_curv, samples };
        }
    }
    TwoConvexity { ok: false, k: None, min_boundary_curvature: min_curv, samples }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Regular,
    Irregular,
}

impl NodeClass {
    pub fn label(self) -> &'static str {
        match self {
            NodeClass::Regular => "regular",
            NodeClass::Irregular => "irregular",
        }
    }
}

/// Neighbor along a lattice line: another node, or the boundary crossing at
/// fraction θ ∈ (0, 1] of the lattice step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighbor {
    Node(usize),
    Boundary { theta: f64, id: usize },
}

impl Neighbor {
    pub fn theta(&self) -> f64 {
        match self {
            Neighbor::Node(_) => 1.0,
            Neighbor::Boundary { theta, .. } => *theta,
        }
    }
}

/// A lattice line through a node: axis e_i, or e_i ± e_j.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub dir: Vec<i64>,
    pub plus: Neighbor,
    pub minus: Neighbor,
}

/// Linear combination of node values and boundary values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stencil {
    pub center: f64,
    pub nodes: Vec<(usize, f64)>,
    pub boundary: Vec<(usize, f64)>,
}

impl Stencil {
    fn add_ref(&mut self, nb: Neighbor, weight: f64) {
        match nb {
            Neighbor::Node(k) => self.nodes.push((k, weight)),
            Neighbor::Boundary { id, .. } => self.boundary.push((id, weight)),
        }
    }

    fn scaled_add(&mut self, other: &Stencil, s: f64) {
        self.center += s * other.center;
        self.nodes.extend(other.nodes.iter().map(|&(k, w)| (k, s * w)));
        self.boundary.extend(other.boundary.iter().map(|&(k, w)| (k, s * w)));
    }

    pub fn apply(&self, own: f64, u: &[f64], boundary: &[f64]) -> f64 {
        let mut s = self.center * own;
        for &(k, w) in &self.nodes {
            s += w * u[k];
        }
        for &(k, w) in &self.boundary {
            s += w * boundary[k];
        }
        s
    }

    /// Value with zero boundary data.
    pub fn apply_zero(&self, own: f64, u: &[f64]) -> f64 {
        let mut s = self.center * own;
        for &(k, w) in &self.nodes {
            s += w * u[k];
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridNode {
    pub index: Vec<i64>,
    pub pos: Vec<f64>,
    pub class: NodeClass,
    /// Axis lines first (one per coordinate), then e_i + e_j and e_i − e_j
    /// for each pair i < j.
    pub lines: Vec<Line>,
    /// Stencils for Du.
    pub grad: Vec<Stencil>,
    /// Stencils for the upper triangle of D²u, row-major.
    pub hess: Vec<Stencil>,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub n: usize,
    pub h: f64,
    pub shape: DomainShape,
    pub nodes: Vec<GridNode>,
    pub boundary_points: Vec<Vec<f64>>,
}

/// Index of (i, j), i ≤ j, in the row-major upper triangle.
pub fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i.saturating_sub(1)) / 2 - if i > 0 { i } else { 0 } + j
}

fn line_first(a: f64, b: f64, h: f64, plus: Neighbor, minus: Neighbor) -> Stencil {
    let mut s = Stencil { center: (a - b) / (a * b * h), ..Default::default() };
    s.add_ref(plus, b / (a * (a + b) * h));
    s.add_ref(minus, -a / (b * (a + b) * h));
    s
}

fn line_second(a: f64, b: f64, h: f64, plus: Neighbor, minus: Neighbor) -> Stencil {
    let h2 = h * h;
    let mut s = Stencil { center: -2.0 / (a * b * h2), ..Default::default() };
    s.add_ref(plus, 2.0 / (a * (a + b) * h2));
    s.add_ref(minus, 2.0 / (b * (a + b) * h2));
    s
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Boundary data sampled from `g` at every recorded crossing.
    pub fn boundary_values(&self, g: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.boundary_points.iter().map(|p| g(p)).collect()
    }

    pub fn count(&self, class: NodeClass) -> usize {
        self.nodes.iter().filter(|nd| nd.class == class).count()
    }

    /// Debug dump: "i j [k] x1 x2 [x3] class θ+1 θ−1 …".
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# grid {} h={:.17e} nodes={}", self.shape.describe(), self.h, self.len());
        let idx: Vec<&str> = ["i", "j", "k"][..self.n].to_vec();
        let xs: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        let th: Vec<String> = (1..=self.n).flat_map(|i| [format!("theta+{i}"), format!("theta-{i}")]).collect();
        let _ = writeln!(out, "# {} {} class {}", idx.join(" "), xs.join(" "), th.join(" "));
        for nd in &self.nodes {
            let mut cols: Vec<String> = nd.index.iter().map(|v| v.to_string()).collect();
            cols.extend(nd.pos.iter().map(|v| format!("{v:.17e}")));
            cols.push(nd.class.label().to_string());
            for line in &nd.lines[..self.n] {
                cols.push(format!("{:.17e}", line.plus.theta()));
                cols.push(format!("{:.17e}", line.minus.theta()));
            }
            let _ = writeln!(out, "{}", cols.join(" "));
        }
        out
    }
}

/// Masks the lattice hℤⁿ by the open domain, records boundary crossings along
/// every axis and coordinate-plane diagonal, and builds the stencils.
pub fn build_grid(shape: &DomainShape, h: f64) -> Result<Grid, GridError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(GridError::InvalidSpacing(h));
    }
    let n = shape.dim();
    let ax = shape.semiaxes();
    let half: Vec<i64> = ax.iter().map(|a| (a / h).floor() as i64 + 1).collect();
    let extent: Vec<usize> = half.iter().map(|k| (2 * k + 1) as usize).collect();
    let total: usize = extent.iter().product();
    let flat = |idx: &[i64]| -> Option<usize> {
        let mut f = 0usize;
        for i in 0..n {
            let k = idx[i] + half[i];
            if k < 0 || k as usize >= extent[i] {
                return None;
            }
            f = f * extent[i] + k as usize;
        }
        Some(f)
    };
    let pos_of = |idx: &[i64]| -> Vec<f64> { idx.iter().map(|&k| k as f64 * h).collect() };

    // lexicographic enumeration, first coordinate slowest
    let mut lookup = vec![usize::MAX; total];
    let mut indices: Vec<Vec<i64>> = Vec::new();
    for f in 0..total {
        let mut rem = f;
        let mut idx = vec![0i64; n];
        for i in (0..n).rev() {
            idx[i] = (rem % extent[i]) as i64 - half[i];
            rem /= extent[i];
        }
        if shape.contains(&pos_of(&idx)) {
            lookup[f] = indices.len();
            indices.push(idx);
        }
    }
    if indices.is_empty() {
        return Err(GridError::EmptyGrid { h });
    }

    let mut dirs: Vec<Vec<i64>> = (0..n)
        .map(|i| (0..n).map(|k| i64::from(k == i)).collect())
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            dirs.push((0..n).map(|k| i64::from(k == i) + i64::from(k == j)).collect());
            dirs.push((0..n).map(|k| i64::from(k == i) - i64::from(k == j)).collect());
        }
    }

    let mut boundary_points: Vec<Vec<f64>> = Vec::new();
    let mut nodes = Vec::with_capacity(indices.len());
    for idx in &indices {
        let pos = pos_of(idx);
        let mut lines = Vec::with_capacity(dirs.len());
        let mut regular = true;
        for dir in &dirs {
            let mut probe = |sign: i64| -> Neighbor {
                let nb: Vec<i64> = idx.iter().zip(dir).map(|(a, d)| a + sign * d).collect();
                if let Some(k) = flat(&nb).map(|f| lookup[f]).filter(|&k| k != usize::MAX) {
                    return Neighbor::Node(k);
                }
                let step: Vec<f64> = dir.iter().map(|&d| (sign * d) as f64 * h).collect();
                let nb_pos = pos_of(&nb);
                let theta = if shape.implicit(&nb_pos) == 0.0 {
                    1.0
                } else {
                    shape.ray_exit(&pos, &step).min(1.0)
                };
                let point: Vec<f64> = pos.iter().zip(&step).map(|(x, s)| x + theta * s).collect();
                boundary_points.push(point);
                Neighbor::Boundary { theta, id: boundary_points.len() - 1 }
            };
            let plus = probe(1);
            let minus = probe(-1);
            regular &= matches!(plus, Neighbor::Node(_)) && matches!(minus, Neighbor::Node(_));
            lines.push(Line { dir: dir.clone(), plus, minus });
        }

        let grad: Vec<Stencil> = lines[..n]
            .iter()
            .map(|l| line_first(l.plus.theta() * h, l.minus.theta() * h, 1.0, l.plus, l.minus))
            .collect();
        let second: Vec<Stencil> = lines
            .iter()
            .map(|l| line_second(l.plus.theta() * h, l.minus.theta() * h, 1.0, l.plus, l.minus))
            .collect();
        let mut hess = Vec::with_capacity(n * (n + 1) / 2);
        let mut pair = 0;
        let mut pair_of = vec![vec![0usize; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                pair_of[i][j] = pair;
                pair += 1;
            }
        }
        for i in 0..n {
            for j in i..n {
                if i == j {
                    hess.push(second[i].clone());
                } else {
                    let base = n + 2 * pair_of[i][j];
                    let mut s = Stencil::default();
                    s.scaled_add(&second[base], 0.25);
                    s.scaled_add(&second[base + 1], -0.25);
                    hess.push(s);
                }
            }
        }
        nodes.push(GridNode {
            index: idx.clone(),
            pos,
            class: if regular { NodeClass::Regular } else { NodeClass::Irregular },
            lines,
            grad,
            hess,
        });
    }

    Ok(Grid { n, h, shape: shape.clone(), nodes, boundary_points })
}

/// (D²u, Du) at a node with boundary data `boundary` (indexed like
/// `grid.boundary_points`).
pub fn fd_derivatives_with(grid: &Grid, u: &[f64], node: usize, boundary: &[f64]) -> PointState {
    let n = grid.n;
    let nd = &grid.nodes[node];
    let own = u[node];
    let p: Vec<f64> = nd.grad.iter().map(|s| s.apply(own, u, boundary)).collect();
    let mut r = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let v = nd.hess[k].apply(own, u, boundary);
            r[(i, j)] = v;
            r[(j, i)] = v;
            k += 1;
        }
    }
    PointState { p, r }
}

/// (D²u, Du) at a node with the homogeneous boundary condition u = 0.
pub fn fd_derivatives(grid: &Grid, u: &[f64], node: usize) -> PointState {
    let n = grid.n;
    let nd = &grid.nodes[node];
    let own = u[node];
    let p: Vec<f64> = nd.grad.iter().map(|s| s.apply_zero(own, u)).collect();
    let mut r = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let v = nd.hess[k].apply_zero(own, u);
            r[(i, j)] = v;
            r[(j, i)] = v;
            k += 1;
        }
    }
    PointState { p, r }
}
