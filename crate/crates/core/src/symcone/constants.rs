//! Sampled cone constants. Regenerate with
//! `cargo run --release --example gen_cone_constants > crates/core/src/symcone/constants.rs`.
//!
//! `ratio_*` columns are the smallest observed ratio lhs / rhs over the
//! samples; the asserted constants are the closed forms in the parent module,
//! which must not exceed these minima.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeConstantRow {
    pub n: usize,
    pub k: usize,
    pub samples: usize,
    /// min σ_1 / σ_k^{1/k} over Γ_k
    pub ratio_maclaurin: f64,
    /// min σ_{k−1} / (σ_k^{1−1/(k−1)} σ_1^{1/(k−1)}) over Γ_k
    pub ratio_newton: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRow {
    pub n: usize,
    pub samples: usize,
    /// min f_j / Σ f_i over Γ samples with κ_j < 0
    pub ratio: f64,
}

pub const SEED: u64 = 0;

pub const CONE_TABLE: &[ConeConstantRow] = &[
    ConeConstantRow { n: 2, k: 1, samples: 1000000, ratio_maclaurin: 1.0, ratio_newton: 1.0 },
    ConeConstantRow { n: 2, k: 2, samples: 1000000, ratio_maclaurin: 2.0000000000003397, ratio_newton: 1.0 },
    ConeConstantRow { n: 3, k: 1, samples: 1000000, ratio_maclaurin: 1.0, ratio_newton: 1.0 },
    ConeConstantRow { n: 3, k: 2, samples: 1000000, ratio_maclaurin: 1.7320509636106933, ratio_newton: 1.0 },
    ConeConstantRow { n: 3, k: 3, samples: 1000000, ratio_maclaurin: 3.0000000165508625, ratio_newton: 1.7320508123464025 },
    ConeConstantRow { n: 4, k: 1, samples: 1000000, ratio_maclaurin: 1.0, ratio_newton: 1.0 },
    ConeConstantRow { n: 4, k: 2, samples: 1000000, ratio_maclaurin: 1.6330088155725906, ratio_newton: 1.0 },
    ConeConstantRow { n: 4, k: 3, samples: 1000000, ratio_maclaurin: 2.5198426450148603, ratio_newton: 1.5000001623126422 },
    ConeConstantRow { n: 4, k: 4, samples: 1000000, ratio_maclaurin: 4.000023248316459, ratio_newton: 2.5198518505248138 },
    ConeConstantRow { n: 5, k: 1, samples: 1000000, ratio_maclaurin: 1.0, ratio_newton: 1.0 },
    ConeConstantRow { n: 5, k: 2, samples: 1000000, ratio_maclaurin: 1.5811708914612037, ratio_newton: 1.0 },
    ConeConstantRow { n: 5, k: 3, samples: 1000000, ratio_maclaurin: 2.3208414655861085, ratio_newton: 1.4142278810464166 },
    ConeConstantRow { n: 5, k: 4, samples: 1000000, ratio_maclaurin: 3.343932647058348, ratio_newton: 2.000092894119528 },
    ConeConstantRow { n: 5, k: 5, samples: 1000000, ratio_maclaurin: 5.000343224578108, ratio_newton: 3.3438760735248176 },
    ConeConstantRow { n: 6, k: 1, samples: 1000000, ratio_maclaurin: 1.0, ratio_newton: 1.0 },
    ConeConstantRow { n: 6, k: 2, samples: 1000000, ratio_maclaurin: 1.5494726592024417, ratio_newton: 1.0 },
    ConeConstantRow { n: 6, k: 3, samples: 1000000, ratio_maclaurin: 2.2105386181983495, ratio_newton: 1.369343462759839 },
    ConeConstantRow { n: 6, k: 4, samples: 1000000, ratio_maclaurin: 3.048932058365882, ratio_newton: 1.809665431734178 },
    ConeConstantRow { n: 6, k: 5, samples: 1000000, ratio_maclaurin: 4.193930319296242, ratio_newton: 2.5004308734887175 },
    ConeConstantRow { n: 6, k: 6, samples: 1000000, ratio_maclaurin: 6.000767818220262, ratio_newton: 4.193392355144102 },
];

pub const DELTA_TABLE: &[DeltaRow] = &[
    DeltaRow { n: 2, samples: 1000000, ratio: f64::INFINITY },
    DeltaRow { n: 3, samples: 1000000, ratio: 0.40001513823243146 },
    DeltaRow { n: 4, samples: 1000000, ratio: 0.27287369169479325 },
    DeltaRow { n: 5, samples: 1000000, ratio: 0.21092440434453336 },
    DeltaRow { n: 6, samples: 1000000, ratio: 0.1731670172581503 },
];

pub fn lookup(n: usize, k: usize) -> Option<&'static ConeConstantRow> {
    CONE_TABLE.iter().find(|r| r.n == n && r.k == k)
}

pub fn lookup_delta(n: usize) -> Option<&'static DeltaRow> {
    DELTA_TABLE.iter().find(|r| r.n == n)
}
