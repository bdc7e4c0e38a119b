//! Double integrals over `D x D` of products of normalised covariances, reduced to the covariogram.

use std::f64::consts::{FRAC_PI_2, TAU};

use gauss_quad::GaussLegendre;
use rayon::prelude::*;

use crate::covariance::{EnergyLevel, NormalizedCov};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Shape};
use crate::special_fn::bessel_j012_unchecked;

use super::moments::QExponent;

/// Relative tolerance of the adaptive radial rule, measured against the integral of the absolute integrand.
pub const COVARIANCE_TOLERANCE: f64 = 1e-4;
/// Panels of width at most `1 / (RADIAL_PANELS_PER_UNIT sqrt(E))`.
pub const RADIAL_PANELS_PER_UNIT: f64 = 8.0;
const RADIAL_ORDER: usize = 8;
const ANGULAR_ORDER: usize = 24;
const PERIODIC_NODES: usize = 48;
const MAX_HALVINGS: u32 = 4;

/// Geometric weight multiplying the integrand at separation `(phi, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeparationWeight {
    /// Covariogram `|D cap (D + z)|` of the domain.
    Covariogram(Shape),
    /// `area(D)` for every separation up to the diameter.
    Constant { area: f64, diameter: f64 },
}

impl SeparationWeight {
    pub fn covariogram(d: &Domain) -> Self {
        SeparationWeight::Covariogram(d.shape())
    }

    /// The leading-order reduction that replaces the covariogram by the area.
    pub fn leading(d: &Domain) -> Self {
        let m = d.metrics();
        SeparationWeight::Constant {
            area: m.area,
            diameter: m.diameter,
        }
    }

    fn diameter(&self) -> f64 {
        match *self {
            SeparationWeight::Covariogram(Shape::Rect { width, height }) => width.hypot(height),
            SeparationWeight::Covariogram(Shape::Disk { radius }) => 2.0 * radius,
            SeparationWeight::Constant { diameter, .. } => diameter,
        }
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = vec![0.0, self.diameter()];
        if let SeparationWeight::Covariogram(Shape::Rect { width, height }) = *self {
            b.push(width);
            b.push(height);
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

/// Disk covariogram at distance `rho`.
pub fn disk_covariogram(radius: f64, rho: f64) -> f64 {
    if rho >= 2.0 * radius {
        return 0.0;
    }
    let q = rho / (2.0 * radius);
    2.0 * radius * radius * q.acos() - 0.5 * rho * (4.0 * radius * radius - rho * rho).sqrt()
}

/// `int_0^{2 pi} |D cap (D + phi e_theta)| d theta`.
pub fn angular_covariogram(shape: Shape, phi: f64) -> f64 {
    match shape {
        Shape::Disk { radius } => TAU * disk_covariogram(radius, phi),
        Shape::Rect { width, height } => match rect_quadrant(width, height, phi) {
            None => 0.0,
            Some((lo, hi)) => {
                let prim = |t: f64| {
                    let (s, c) = t.sin_cos();
                    width * height * t - height * phi * s + width * phi * c + 0.5 * phi * phi * s * s
                };
                4.0 * (prim(hi) - prim(lo))
            }
        },
    }
}

/// Angles in the first quadrant where the rectangle covariogram is positive.
fn rect_quadrant(w: f64, h: f64, phi: f64) -> Option<(f64, f64)> {
    let lo = if phi > w { (w / phi).acos() } else { 0.0 };
    let hi = if phi > h { (h / phi).asin() } else { FRAC_PI_2 };
    (hi > lo).then_some((lo, hi))
}

/// Integrates several monomials `prod r~^q` against a separation weight with shared nodes.
#[derive(Debug, Clone)]
pub struct CovarianceIntegrator {
    energy: EnergyLevel,
    weight: SeparationWeight,
    radial: Vec<(f64, f64)>,
    angular: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralEstimate {
    pub values: Vec<f64>,
    /// Largest change at the final halving, relative to the absolute integrand.
    pub relative_change: f64,
    pub panels: usize,
}

impl CovarianceIntegrator {
    pub fn new(energy: EnergyLevel, weight: SeparationWeight) -> Result<Self> {
        let quad = |n: usize| -> Result<Vec<(f64, f64)>> {
            Ok(GaussLegendre::new(n)
                .map_err(|e| Error::Quadrature(e.to_string()))?
                .as_node_weight_pairs()
                .to_vec())
        };
        Ok(CovarianceIntegrator {
            energy,
            weight,
            radial: quad(RADIAL_ORDER)?,
            angular: quad(ANGULAR_ORDER)?,
        })
    }

    /// Adaptive in the radial panel width until the change is within [`COVARIANCE_TOLERANCE`].
    pub fn integrate(&self, monomials: &[QExponent]) -> Result<IntegralEstimate> {
        let base = 1.0 / (RADIAL_PANELS_PER_UNIT * self.energy.e().sqrt());
        let (mut prev, _, _) = self.integrate_at(monomials, base);
        for level in 1..=MAX_HALVINGS {
            let width = base / f64::from(1u32 << level);
            let (cur, abs, panels) = self.integrate_at(monomials, width);
            let change = prev
                .iter()
                .zip(&cur)
                .zip(&abs)
                .map(|((p, c), a)| if *a > 0.0 { (p - c).abs() / a } else { 0.0 })
                .fold(0.0, f64::max);
            if change <= COVARIANCE_TOLERANCE {
                return Ok(IntegralEstimate {
                    values: cur,
                    relative_change: change,
                    panels,
                });
            }
            prev = cur;
        }
        Err(Error::Quadrature(format!(
            "covariance integral did not reach relative tolerance {COVARIANCE_TOLERANCE} after {MAX_HALVINGS} halvings"
        )))
    }

    fn radial_nodes(&self, max_width: f64) -> Vec<(f64, f64)> {
        let breaks = self.weight.breaks();
        let mut nodes = Vec::new();
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let n = ((b - a) / max_width).ceil().max(1.0) as usize;
            let w = (b - a) / n as f64;
            for p in 0..n {
                let lo = a + p as f64 * w;
                for &(x, wt) in &self.radial {
                    nodes.push((lo + 0.5 * w * (x + 1.0), 0.5 * w * wt));
                }
            }
        }
        nodes
    }

    fn integrate_at(&self, monomials: &[QExponent], max_width: f64) -> (Vec<f64>, Vec<f64>, usize) {
        let nodes = self.radial_nodes(max_width);
        let factors: Vec<Vec<(usize, usize, i32)>> = monomials
            .iter()
            .map(|q| q.factors().map(|(i, j, p)| (i, j, p as i32)).collect())
            .collect();
        let per_node: Vec<(Vec<f64>, Vec<f64>)> = nodes
            .par_iter()
            .map(|&(phi, w)| {
                let (v, a) = self.angular_sums(phi, &factors);
                (
                    v.into_iter().map(|x| x * w * phi).collect(),
                    a.into_iter().map(|x| x * w * phi).collect(),
                )
            })
            .collect();
        let mut values = vec![0.0; monomials.len()];
        let mut abs = vec![0.0; monomials.len()];
        for (v, a) in &per_node {
            for m in 0..monomials.len() {
                values[m] += v[m];
                abs[m] += a[m];
            }
        }
        (values, abs, nodes.len() / RADIAL_ORDER)
    }

    /// Weighted angular sums of each monomial and of its absolute value at radius `phi`.
    fn angular_sums(&self, phi: f64, factors: &[Vec<(usize, usize, i32)>]) -> (Vec<f64>, Vec<f64>) {
        let j = bessel_j012_unchecked(self.energy.k() * phi);
        let mut v = vec![0.0; factors.len()];
        let mut a = vec![0.0; factors.len()];
        let mut add = |c: f64, s: f64, weight: f64| {
            let r = NormalizedCov::from_bessel(j, c, s).0;
            for (m, f) in factors.iter().enumerate() {
                let p: f64 = f.iter().map(|&(i, k, pw)| r[i][k].powi(pw)).product();
                v[m] += weight * p;
                a[m] += weight * p.abs();
            }
        };
        match self.weight {
            SeparationWeight::Covariogram(Shape::Rect { width, height }) => {
                if let Some((lo, hi)) = rect_quadrant(width, height, phi) {
                    let half = 0.5 * (hi - lo);
                    for &(x, wt) in &self.angular {
                        let (s, c) = (lo + half * (x + 1.0)).sin_cos();
                        let cov = (width - phi * c) * (height - phi * s);
                        let weight = half * wt * cov;
                        for (sc, ss) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                            add(sc * c, ss * s, weight);
                        }
                    }
                }
            }
            SeparationWeight::Covariogram(Shape::Disk { radius }) => {
                self.periodic(disk_covariogram(radius, phi), &mut add)
            }
            SeparationWeight::Constant { area, .. } => self.periodic(area, &mut add),
        }
        (v, a)
    }

    fn periodic(&self, weight: f64, add: &mut impl FnMut(f64, f64, f64)) {
        if weight <= 0.0 {
            return;
        }
        let h = TAU / PERIODIC_NODES as f64;
        for m in 0..PERIODIC_NODES {
            let (s, c) = (m as f64 * h).sin_cos();
            add(c, s, h * weight);
        }
    }
}

/// `int int_{D^2} prod r~_{i,j}(x - y)^{q_{i,j}} dx dy` with the exact kernels.
pub fn covariance_integral(q: &QExponent, e: EnergyLevel, d: &Domain) -> Result<f64> {
    let it = CovarianceIntegrator::new(e, SeparationWeight::covariogram(d))?;
    Ok(it.integrate(std::slice::from_ref(q))?.values[0])
}

/// `area(D) int_0^{diam} phi int_0^{2 pi} prod r~^q d theta d phi`.
pub fn radial_reduction(q: &QExponent, e: EnergyLevel, d: &Domain) -> Result<f64> {
    let it = CovarianceIntegrator::new(e, SeparationWeight::leading(d))?;
    Ok(it.integrate(std::slice::from_ref(q))?.values[0])
}

/// Total covariogram mass `int phi int A d theta d phi`, which equals `area^2`.
pub fn covariogram_mass(shape: Shape, panels: usize) -> f64 {
    let diam = match shape {
        Shape::Rect { width, height } => width.hypot(height),
        Shape::Disk { radius } => 2.0 * radius,
    };
    let rule = GaussLegendre::new(RADIAL_ORDER).expect("fixed order");
    let mut breaks = vec![0.0, diam];
    if let Shape::Rect { width, height } = shape {
        breaks.extend([width, height]);
    }
    breaks.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for seg in breaks.windows(2) {
        let w = (seg[1] - seg[0]) / panels as f64;
        for p in 0..panels {
            let lo = seg[0] + p as f64 * w;
            for &(x, wt) in rule.as_node_weight_pairs() {
                let phi = lo + 0.5 * w * (x + 1.0);
                total += 0.5 * w * wt * phi * angular_covariogram(shape, phi);
            }
        }
    }
    total
}
