//! Exponent patterns, leading-order angular and radial factors, and their moments.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2, TAU};

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Exponents `q_{i,j}` of a product of normalised covariances `prod r~_{i,j}^{q_{i,j}}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QExponent([[u8; 3]; 3]);

impl QExponent {
    /// Total power 4 or 6.
    pub fn new(q: [[u8; 3]; 3]) -> Result<Self> {
        let e = QExponent(q);
        match e.total() {
            4 | 6 => Ok(e),
            t => Err(Error::Domain(format!("exponent total must be 4 or 6, got {t}"))),
        }
    }

    pub(crate) fn raw(q: [[u8; 3]; 3]) -> Self {
        QExponent(q)
    }

    /// From `(i, j, power)` triples; repeated pairs add up.
    pub fn from_pairs(pairs: &[(usize, usize, u8)]) -> Result<Self> {
        let mut q = [[0u8; 3]; 3];
        for &(i, j, p) in pairs {
            if i > 2 || j > 2 {
                return Err(Error::Domain(format!("index ({i}, {j}) out of range")));
            }
            q[i][j] += p;
        }
        Self::new(q)
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.0[i][j]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().flatten().map(|&p| p as u32).sum()
    }

    pub fn as_array(&self) -> [[u8; 3]; 3] {
        self.0
    }

    /// Nonzero `(i, j, power)` entries.
    pub fn factors(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        (0..3).flat_map(move |i| (0..3).map(move |j| (i, j, self.0[i][j]))).filter(|f| f.2 > 0)
    }

    /// Powers carried by sine-type radial factors and by cosine-type ones.
    pub fn trig_split(&self) -> (u32, u32) {
        let mut sines = 0;
        let mut cosines = 0;
        for (i, j, p) in self.factors() {
            if is_sine(i, j) {
                sines += p as u32;
            } else {
                cosines += p as u32;
            }
        }
        (sines, cosines)
    }
}

/// Mixed entries between the field and one derivative decay like `sin`, the rest like `cos`.
pub fn is_sine(i: usize, j: usize) -> bool {
    (i == 0) != (j == 0)
}

/// Angular part `h_{i,j}(theta)` of the leading-order form `r~_{i,j} ~ h_{i,j}(theta) g_{i,j}(sqrt(E) phi)`.
pub fn angular_factor(i: usize, j: usize, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let v = match (i.min(j), i.max(j)) {
        (0, 0) => 1.0,
        (0, 1) => SQRT_2 * c,
        (0, 2) => SQRT_2 * s,
        (1, 1) => 2.0 * c * c,
        (2, 2) => 2.0 * s * s,
        (1, 2) => 2.0 * c * s,
        _ => unreachable!("indices are at most 2"),
    };
    let sign = if j == 0 && i > 0 { -1.0 } else { 1.0 };
    sign * v / PI
}

/// Radial part `g_{i,j}(psi)`: `cos(2 pi psi - pi/4)/sqrt(psi)` or the same with `sin`.
pub fn radial_factor(i: usize, j: usize, psi: f64) -> f64 {
    let x = TAU * psi - FRAC_PI_4;
    let t = if is_sine(i, j) { x.sin() } else { x.cos() };
    t / psi.sqrt()
}

const ANGULAR_NODES: usize = 64;

/// `int_0^{2 pi} prod h_{i,j}(theta)^{q_{i,j}} d theta`, exact for these trigonometric polynomials.
pub fn angular_moment(q: &QExponent) -> f64 {
    let h = TAU / ANGULAR_NODES as f64;
    (0..ANGULAR_NODES)
        .map(|m| {
            let t = m as f64 * h;
            q.factors()
                .map(|(i, j, p)| angular_factor(i, j, t).powi(p as i32))
                .product::<f64>()
        })
        .sum::<f64>()
        * h
}

/// Mean over one period of `cos^{nc}(x) sin^{ns}(x)`.
pub fn trig_mean(ns: u32, nc: u32) -> f64 {
    let n = 64;
    (0..n)
        .map(|m| {
            let (s, c) = (TAU * m as f64 / n as f64).sin_cos();
            s.powi(ns as i32) * c.powi(nc as i32)
        })
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMoment {
    /// `int_1^upper psi prod g^q d psi`.
    pub value: f64,
    /// Coefficient of `log(upper)` in the growth of `value` (total power 4).
    pub log_slope: f64,
}

/// Panels per unit of `psi` (one period of the radial oscillation).
const RADIAL_PANELS_PER_PERIOD: f64 = 8.0;

pub fn radial_moment(q: &QExponent, upper: f64) -> Result<RadialMoment> {
    if !(upper > 1.0 && upper.is_finite()) {
        return Err(Error::Domain(format!("upper limit must exceed 1, got {upper}")));
    }
    if q.total() != 4 {
        return Err(Error::Domain("radial moments are defined for total power 4".into()));
    }
    let rule = GaussLegendre::new(8).map_err(|e| Error::Quadrature(e.to_string()))?;
    let panels = ((upper - 1.0) * RADIAL_PANELS_PER_PERIOD).ceil() as usize;
    let w = (upper - 1.0) / panels as f64;
    let mut value = 0.0;
    for p in 0..panels {
        let a = 1.0 + p as f64 * w;
        for &(x, wt) in rule.as_node_weight_pairs() {
            let psi = a + 0.5 * w * (x + 1.0);
            let f: f64 = q
                .factors()
                .map(|(i, j, pw)| radial_factor(i, j, psi).powi(pw as i32))
                .product();
            value += 0.5 * w * wt * psi * f;
        }
    }
    let (ns, nc) = q.trig_split();
    Ok(RadialMoment {
        value,
        log_slope: trig_mean(ns, nc),
    })
}

/// `c` with `int int_{D^2} prod r~^q ~ c area log E / E`.
pub fn leading_constant(q: &QExponent) -> f64 {
    let (ns, nc) = q.trig_split();
    angular_moment(q) * trig_mean(ns, nc) / 2.0
}
