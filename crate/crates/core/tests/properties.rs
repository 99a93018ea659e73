use std::collections::HashSet;

use proptest::prelude::*;

use etacurv::domaingrid::{build_grid, fd_derivatives_with, DomainShape, Neighbor};
use etacurv::psilang::{eval, parse, EvalEnv};
use etacurv::sparse::{solve, Csr};
use etacurv::symcone::{f_value, in_gamma, lambda_of, sigma};

fn shapes() -> impl Strategy<Value = DomainShape> {
    prop_oneof![
        (0.2f64..1.0).prop_map(|r| DomainShape::ball(2, r).unwrap()),
        (0.2f64..1.0).prop_map(|r| DomainShape::ball(3, r).unwrap()),
        (0.2f64..1.0, 0.2f64..1.0).prop_map(|(a, b)| DomainShape::ellipse(a, b).unwrap()),
        (0.3f64..0.8, 0.3f64..0.8, 0.3f64..0.8).prop_map(|(a, b, c)| DomainShape::ellipsoid(a, b, c).unwrap()),
    ]
}

fn spacing(shape: &DomainShape) -> impl Strategy<Value = f64> {
    let lo = if shape.dim() == 3 { 0.08 } else { 0.03 };
    lo..0.25f64
}

fn shape_and_h() -> impl Strategy<Value = (DomainShape, f64)> {
    shapes().prop_flat_map(|s| {
        let h = spacing(&s);
        (Just(s), h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_is_symmetric_under_reflections((shape, h) in shape_and_h()) {
        let grid = build_grid(&shape, h).unwrap();
        let set: HashSet<Vec<i64>> = grid.nodes.iter().map(|nd| nd.index.clone()).collect();
        for nd in &grid.nodes {
            for axis in 0..grid.n {
                let mut m = nd.index.clone();
                m[axis] = -m[axis];
                prop_assert!(set.contains(&m), "missing mirror of {:?}", nd.index);
            }
        }
        if let DomainShape::Ball { .. } = shape {
            for nd in &grid.nodes {
                let mut s = nd.index.clone();
                s.swap(0, 1);
                prop_assert!(set.contains(&s));
            }
        }
    }

    #[test]
    fn boundary_crossings_lie_on_the_boundary((shape, h) in shape_and_h()) {
        let grid = build_grid(&shape, h).unwrap();
        for nd in &grid.nodes {
            prop_assert!(shape.implicit(&nd.pos) < 0.0);
            for line in &nd.lines {
                for (nb, sign) in [(&line.plus, 1.0), (&line.minus, -1.0)] {
                    if let Neighbor::Boundary { theta, id } = nb {
                        prop_assert!(*theta > 0.0 && *theta <= 1.0);
                        let x: Vec<f64> = nd.pos.iter().zip(&line.dir)
                            .map(|(p, d)| p + sign * theta * h * *d as f64)
                            .collect();
                        prop_assert!(shape.implicit(&x).abs() <= 1e-10, "F = {:e}", shape.implicit(&x));
                        let stored = &grid.boundary_points[*id];
                        for (a, b) in x.iter().zip(stored) {
                            prop_assert!((a - b).abs() <= 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stencils_are_exact_on_quadratics(
        (shape, h) in shape_and_h(),
        c in proptest::collection::vec(-2.0f64..2.0, 10),
    ) {
        let n = shape.dim();
        // q(x) = c0 + Σ b_i x_i + Σ_{i≤j} a_ij x_i x_j
        let q = |x: &[f64]| {
            let mut v = c[0];
            let mut k = 1;
            for i in 0..n {
                v += c[k] * x[i];
                k += 1;
            }
            for i in 0..n {
                for j in i..n {
                    v += c[k] * x[i] * x[j];
                    k += 1;
                }
            }
            v
        };
        let grid = build_grid(&shape, h).unwrap();
        let u: Vec<f64> = grid.nodes.iter().map(|nd| q(&nd.pos)).collect();
        let bv = grid.boundary_values(q);
        for k in 0..grid.len() {
            let st = fd_derivatives_with(&grid, &u, k, &bv);
            let x = &grid.nodes[k].pos;
            let mut idx = 1 + n;
            for i in 0..n {
                let mut gi = c[1 + i];
                let mut kk = 1 + n;
                for a in 0..n {
                    for b in a..n {
                        if a == i { gi += c[kk] * x[b]; }
                        if b == i { gi += c[kk] * x[a]; }
                        kk += 1;
                    }
                }
                prop_assert!((st.p[i] - gi).abs() <= 1e-8, "du_{i}: {} vs {gi}", st.p[i]);
                for j in i..n {
                    let expect = if i == j { 2.0 * c[idx] } else { c[idx] };
                    prop_assert!((st.r[(i, j)] - expect).abs() <= 1e-7 * (1.0 / (h * h)));
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn cone_chain(kappa in proptest::collection::vec(-1.0f64..2.0, 2..7)) {
        // Γ_n ⊂ Γ_2 ⊂ Γ ⊂ Γ_1
        let n = kappa.len();
        if kappa.iter().all(|v| *v > 0.0) {
            prop_assert!(sigma(&kappa, 2).unwrap() > 0.0);
        }
        if sigma(&kappa, 1).unwrap() > 0.0 && sigma(&kappa, 2).unwrap() > 0.0 {
            prop_assert!(in_gamma(&kappa));
        }
        if in_gamma(&kappa) {
            prop_assert!(sigma(&kappa, 1).unwrap() > 0.0);
            prop_assert!(f_value(&kappa) > 0.0);
        }
        let lam = lambda_of(&kappa);
        let s1: f64 = kappa.iter().sum();
        let sl: f64 = lam.iter().sum();
        prop_assert!((sl - (n as f64 - 1.0) * s1).abs() <= 1e-12 * (1.0 + s1.abs()) * n as f64);
    }

    #[test]
    fn radius_matches_coordinates(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let e = parse("r^2 - x1^2 - x2^2").unwrap();
        let v = eval(&e, &EvalEnv::at(&[x, y], 0.0, &[0.0, 0.0])).unwrap();
        prop_assert!(v.abs() <= 1e-15);
    }

    #[test]
    fn banded_solve_recovers_solution(
        n in 1usize..40,
        kl in 0usize..4,
        ku in 0usize..4,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(kl);
                let hi = (i + ku).min(n - 1);
                (lo..=hi)
                    .map(|j| (j, if i == j { 4.0 } else { rng.random::<f64>() - 0.5 }))
                    .collect()
            })
            .collect();
        let a = Csr::from_rows(n, rows);
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let b = a.matvec(&x);
        let y = solve(&a, &b, 1e-13).unwrap();
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }
}
