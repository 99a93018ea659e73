//! Forward-mode dual numbers with a fixed number of derivative slots.

/// Derivative slots: enough for (z, p1, p2, p3) or (x1, x2, x3).
pub const SLOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; SLOTS],
}

/// Arithmetic needed by the evaluator, implemented for `f64` and [`Dual`].
/// The value channel of `Dual` performs exactly the `f64` operations.
pub trait Scalar: Copy {
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn neg(self) -> Self;
    fn powf(self, o: Self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn neg(self) -> Self {
        -self
    }
    fn powf(self, o: Self) -> Self {
        f64::powf(self, o)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; SLOTS] }
    }

    pub fn seeded(v: f64, slot: usize) -> Self {
        let mut d = [0.0; SLOTS];
        d[slot] = 1.0;
        Dual { v, d }
    }

    fn is_const(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }

    /// Chain rule with scalar derivative `k`; zero slots stay zero even when
    /// `k` is infinite.
    fn chain(self, v: f64, k: f64) -> Self {
        let mut d = [0.0; SLOTS];
        for (o, &s) in d.iter_mut().zip(&self.d) {
            *o = if s == 0.0 { 0.0 } else { s * k };
        }
        Dual { v, d }
    }

    fn combine(v: f64, a: &Self, ka: f64, b: &Self, kb: f64) -> Self {
        let mut d = [0.0; SLOTS];
        for i in 0..SLOTS {
            let ta = if a.d[i] == 0.0 { 0.0 } else { a.d[i] * ka };
            let tb = if b.d[i] == 0.0 { 0.0 } else { b.d[i] * kb };
            d[i] = ta + tb;
        }
        Dual { v, d }
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual::constant(v)
    }
    fn val(&self) -> f64 {
        self.v
    }
    fn add(self, o: Self) -> Self {
        Dual::combine(self.v + o.v, &self, 1.0, &o, 1.0)
    }
    fn sub(self, o: Self) -> Self {
        Dual::combine(self.v - o.v, &self, 1.0, &o, -1.0)
    }
    fn mul(self, o: Self) -> Self {
        Dual::combine(self.v * o.v, &self, o.v, &o, self.v)
    }
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        Dual::combine(v, &self, 1.0 / o.v, &o, -v / o.v)
    }
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
    fn powf(self, o: Self) -> Self {
        let v = self.v.powf(o.v);
        if o.is_const() {
            // d(a^b) = b a^(b−1) da
            return self.chain(v, o.v * self.v.powf(o.v - 1.0));
        }
        Dual::combine(v, &self, o.v * self.v.powf(o.v - 1.0), &o, v * self.v.ln())
    }
    fn exp(self) -> Self {
        let v = self.v.exp();
        self.chain(v, v)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sqrt(self) -> Self {
        let v = self.v.sqrt();
        self.chain(v, 0.5 / v)
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn abs(self) -> Self {
        // at 0 the derivative of the first branch (+a) is taken
        let k = if self.v < 0.0 { -1.0 } else { 1.0 };
        self.chain(self.v.abs(), k)
    }
}
