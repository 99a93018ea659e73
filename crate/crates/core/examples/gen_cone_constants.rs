//! Samples the Maclaurin-type ratios on Γ_k and the δ ratio on Γ and prints
//! `symcone/constants.rs`.

use etacurv::sampling;
use etacurv::symcone::{f_grad_unchecked, sigma};
use rayon::prelude::*;

const SAMPLES: usize = 1_000_000;
const SEED: u64 = 0;

fn cone_row(n: usize, k: usize) -> (f64, f64) {
    let mut rng = sampling::rng_for(SEED, (n * 16 + k) as u64);
    let (mut mac, mut newt) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..SAMPLES {
        let kappa = sampling::sample_gamma_k(&mut rng, n, k);
        let s1 = sigma(&kappa, 1).unwrap();
        let sk = sigma(&kappa, k).unwrap();
        mac = mac.min(s1 / sk.powf(1.0 / k as f64));
        if k >= 2 {
            let km1 = (k - 1) as f64;
            let skm1 = sigma(&kappa, k - 1).unwrap();
            newt = newt.min(skm1 / (sk.powf(1.0 - 1.0 / km1) * s1.powf(1.0 / km1)));
        }
    }
    (mac, if k >= 2 { newt } else { 1.0 })
}

fn delta_row(n: usize) -> f64 {
    let mut rng = sampling::rng_for(SEED, 1000 + n as u64);
    let mut best = f64::INFINITY;
    for _ in 0..SAMPLES {
        let kappa = sampling::sample_gamma(&mut rng, n);
        let fg = f_grad_unchecked(&kappa);
        let total: f64 = fg.iter().sum();
        for j in 0..n {
            if kappa[j] < 0.0 {
                best = best.min(fg[j] / total);
            }
        }
    }
    best
}

fn main() {
    let pairs: Vec<(usize, usize)> = (2..=6).flat_map(|n| (1..=n).map(move |k| (n, k))).collect();
    let rows: Vec<(f64, f64)> = pairs.par_iter().map(|&(n, k)| cone_row(n, k)).collect();
    let deltas: Vec<f64> = (2..=6).into_par_iter().map(delta_row).collect();

    let template = include_str!("../src/symcone/constants.rs");
    let head = template.split("pub const CONE_TABLE").next().unwrap();
    let tail = &template[template.find("pub fn lookup(").unwrap()..];
    print!("{head}");
    println!("pub const CONE_TABLE: &[ConeConstantRow] = &[");
    for (&(n, k), &(m, q)) in pairs.iter().zip(&rows) {
        println!(
            "    ConeConstantRow {{ n: {n}, k: {k}, samples: {SAMPLES}, ratio_maclaurin: {m:?}, ratio_newton: {q:?} }},"
        );
    }
    println!("];\n");
    println!("pub const DELTA_TABLE: &[DeltaRow] = &[");
    for (n, d) in (2..=6).zip(&deltas) {
        // n = 2 has no admissible κ with a negative entry
        let d = if d.is_finite() { format!("{d:?}") } else { "f64::INFINITY".into() };
        println!("    DeltaRow {{ n: {n}, samples: {SAMPLES}, ratio: {d} }},");
    }
    println!("];\n");
    print!("{tail}");
}
