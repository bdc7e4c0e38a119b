//! Bessel functions of the first kind (orders 0, 1, 2) and probabilists'
//! Hermite polynomials.
//!
//! `J_n` uses the power series below [`SERIES_CROSSOVER`] and the Hankel
//! asymptotic expansion (14 terms in each of `P` and `Q`) above it. The
//! series is summed in double-double arithmetic: near the crossover its
//! terms reach ~1e7 and plain `f64` would lose five digits to cancellation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Argument at which evaluation switches from the series to the asymptotic expansion.
pub const SERIES_CROSSOVER: f64 = 18.0;

const HANKEL_TERMS: usize = 14;

/// Default maximum Hermite degree.
pub const MAX_HERMITE_DEGREE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BesselOrder {
    Zero,
    One,
    Two,
}

impl BesselOrder {
    pub const ALL: [BesselOrder; 3] = [BesselOrder::Zero, BesselOrder::One, BesselOrder::Two];

    pub fn new(order: u32) -> Result<Self> {
        match order {
            0 => Ok(BesselOrder::Zero),
            1 => Ok(BesselOrder::One),
            2 => Ok(BesselOrder::Two),
            n => Err(Error::Domain(format!("Bessel order {n} not supported (0, 1, 2 only)"))),
        }
    }

    pub fn as_u32(self) -> u32 {
        self as u32
    }

    /// Phase `(2n + 1) pi / 4` of the large-argument cosine.
    pub fn phase(self) -> f64 {
        (2.0 * self.as_u32() as f64 + 1.0) * PI / 4.0
    }

    // (cos, sin) of the phase, exact up to rounding of 1/sqrt(2)
    fn phase_cos_sin(self) -> (f64, f64) {
        match self {
            BesselOrder::Zero => (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            BesselOrder::One => (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            BesselOrder::Two => (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
        }
    }
}

fn check_arg(x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("Bessel argument must be finite and >= 0, got {x}")));
    }
    Ok(())
}

/// `J_n(x)` for `x >= 0`.
pub fn bessel_j(order: BesselOrder, x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(bessel_j_unchecked(order, x))
}

/// `[J_0(x), J_1(x), J_2(x)]`, sharing work between the orders.
pub fn bessel_j012(x: f64) -> Result<[f64; 3]> {
    check_arg(x)?;
    Ok(bessel_j012_unchecked(x))
}

pub(crate) fn bessel_j_unchecked(order: BesselOrder, x: f64) -> f64 {
    if x < SERIES_CROSSOVER {
        series(order.as_u32(), x)
    } else {
        let (s, c) = x.sin_cos();
        hankel(order, x, c, s)
    }
}

pub(crate) fn bessel_j012_unchecked(x: f64) -> [f64; 3] {
    if x < SERIES_CROSSOVER {
        [series(0, x), series(1, x), series(2, x)]
    } else {
        let (s, c) = x.sin_cos();
        BesselOrder::ALL.map(|o| hankel(o, x, c, s))
    }
}

/// Leading large-argument term `sqrt(2 / (pi x)) cos(x - (2n + 1) pi / 4)`.
pub fn bessel_envelope(order: BesselOrder, x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("envelope needs x > 0, got {x}")));
    }
    let (s, c) = x.sin_cos();
    let (cw, sw) = order.phase_cos_sin();
    Ok((2.0 / (PI * x)).sqrt() * (c * cw + s * sw))
}

fn hankel(order: BesselOrder, x: f64, cos_x: f64, sin_x: f64) -> f64 {
    let mu = 4.0 * (order.as_u32() * order.as_u32()) as f64;
    // a_k = prod_{j<=k} (mu - (2j - 1)^2) / (k! 8^k), alternating into P and Q
    let mut coef = [0.0f64; 2 * HANKEL_TERMS];
    let mut a = 1.0;
    coef[0] = 1.0;
    for k in 1..2 * HANKEL_TERMS {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * 8.0);
        coef[k] = a;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut p = 0.0;
    let mut q = 0.0;
    for k in (0..HANKEL_TERMS).rev() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        p = p * inv2 + sign * coef[2 * k];
        q = q * inv2 + sign * coef[2 * k + 1];
    }
    q *= inv;
    let (cw, sw) = order.phase_cos_sin();
    let cos_chi = cos_x * cw + sin_x * sw;
    let sin_chi = sin_x * cw - cos_x * sw;
    (2.0 / (PI * x)).sqrt() * (p * cos_chi - q * sin_chi)
}

fn series(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = x * 0.5;
    // (x/2)^n / n!
    let mut term = Dd::from(1.0);
    for k in 1..=n {
        term = term.mul_f64(half).div_f64(k as f64);
    }
    let y = Dd::from(half).mul_f64(half);
    let mut sum = term;
    let mut m = 1u32;
    loop {
        term = term.mul(y).div_f64((m * (m + n)) as f64).neg();
        sum = sum.add(term);
        if term.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) || m > 200 {
            break;
        }
        m += 1;
    }
    sum.hi + sum.lo
}

/// Double-double value `hi + lo`.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self.add(Dd::from(q1 * b).neg().add(Dd::from(-two_prod(q1, b).1)));
        let q2 = r.hi / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }
}

/// Degree of a probabilists' Hermite polynomial, bounded by a maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HermiteDegree(usize);

impl HermiteDegree {
    pub fn new(degree: usize) -> Result<Self> {
        Self::with_max(degree, MAX_HERMITE_DEGREE)
    }

    pub fn with_max(degree: usize, max: usize) -> Result<Self> {
        if degree > max {
            return Err(Error::Domain(format!("Hermite degree {degree} exceeds maximum {max}")));
        }
        Ok(HermiteDegree(degree))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// `He_n(t)` by the recurrence `He_{n+1} = t He_n - n He_{n-1}`.
pub fn hermite(degree: HermiteDegree, t: f64) -> f64 {
    let n = degree.get();
    if n == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, t);
    for k in 1..n {
        let next = t * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `[He_0(t), ..., He_{N-1}(t)]`.
pub fn hermite_all<const N: usize>(t: f64) -> [f64; N] {
    let mut out = [0.0; N];
    if N == 0 {
        return out;
    }
    out[0] = 1.0;
    if N > 1 {
        out[1] = t;
    }
    for k in 2..N {
        out[k] = t * out[k - 1] - (k - 1) as f64 * out[k - 2];
    }
    out
}
