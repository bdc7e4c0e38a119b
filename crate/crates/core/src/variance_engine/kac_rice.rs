//! One- and two-point Kac-Rice formulas for the nodal length and the phase-singularity count.

use std::f64::consts::{PI, SQRT_2};

use gauss_quad::{GaussHermite, GaussLegendre};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{one_minus_j0, EnergyLevel, NEAR_SINGULAR};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::special_fn::bessel_j012_unchecked;

use super::integrate::angular_covariogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodalStatistic {
    Length,
    Count,
}

/// `E || G ||` for `G ~ N(0, sigma2 I_2)`.
pub fn gradient_norm_mean(sigma2: f64) -> f64 {
    (sigma2 * PI / 2.0).sqrt()
}

/// Expected nodal length or singularity count.
pub fn kac_rice_mean(e: EnergyLevel, d: &Domain, stat: NodalStatistic) -> f64 {
    let s = e.gradient_variance();
    match stat {
        // density p_B(0) E||grad B||
        NodalStatistic::Length => d.area() * gradient_norm_mean(s) / (2.0 * PI).sqrt(),
        // density p_(B, B^)(0, 0) E|det J| with E|det J| = s
        NodalStatistic::Count => d.area() * s / (2.0 * PI),
    }
}

/// Gradients at `x` and `y` conditioned on `B(x) = B(y) = 0`, in coordinates aligned with `y - x`.
///
/// The parallel components have variance `parallel_var` and covariance `parallel_cov`;
/// the normal components `normal_var` and `normal_cov`; the two pairs are independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalGradients {
    pub parallel_var: f64,
    pub parallel_cov: f64,
    pub normal_var: f64,
    pub normal_cov: f64,
    /// `1 - r^2`.
    pub one_minus_r2: f64,
}

pub fn conditional_gradients(e: EnergyLevel, rho: f64) -> Result<ConditionalGradients> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Domain(format!("separation must be positive, got {rho}")));
    }
    let psi = e.k() * rho;
    let j = bessel_j012_unchecked(psi);
    let one_minus_r2 = one_minus_j0(psi, j[0]) * (1.0 + j[0]);
    if one_minus_r2 < NEAR_SINGULAR {
        return Err(Error::NearSingular(one_minus_r2));
    }
    let s = e.gradient_variance();
    let c0 = e.k() * j[1];
    let q = c0 * c0 / one_minus_r2;
    Ok(ConditionalGradients {
        parallel_var: s - q,
        parallel_cov: s * (j[0] - j[2]) - j[0] * q,
        normal_var: s,
        normal_cov: s * (j[0] + j[2]),
        one_minus_r2,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMethod {
    /// `|x| = (4 pi)^{-1/2} int (1 - exp(-s x^2)) s^{-3/2} ds` and Gaussian Laplace transforms.
    #[default]
    Laplace,
    /// Tensor Gauss-Hermite rule in the decorrelated coordinates.
    GaussHermite { order: usize },
}

const LAPLACE_STEP: f64 = 0.4;

/// `E ||X|| ||Y||` for the conditional gradients.
pub fn expected_norm_product(g: &ConditionalGradients, method: ExpectationMethod) -> Result<f64> {
    match method {
        ExpectationMethod::Laplace => Ok(laplace_norm_product(g)),
        ExpectationMethod::GaussHermite { order } => gauss_hermite_norm_product(g, order),
    }
}

fn laplace_norm_product(g: &ConditionalGradients) -> f64 {
    let (a, c) = (g.parallel_var, g.parallel_cov.abs().min(g.parallel_var));
    let (b, e) = (g.normal_var, g.normal_cov.abs().min(g.normal_var));
    let lo = -a.max(b).ln() - 60.0;
    let hi_single = -a.min(b).ln() + 80.0;
    let hi_double = -a.min(b).ln() + 30.0;

    let n1 = ((hi_single - lo) / LAPLACE_STEP).ceil() as usize;
    let mut mean = 0.0;
    for m in 0..=n1 {
        let s = (lo + m as f64 * LAPLACE_STEP).exp();
        let one_minus_g = -(-0.5 * ((2.0 * s * a).ln_1p() + (2.0 * s * b).ln_1p())).exp_m1();
        mean += one_minus_g / s.sqrt();
    }
    mean *= LAPLACE_STEP / (2.0 * PI.sqrt());

    let n2 = ((hi_double - lo) / LAPLACE_STEP).ceil() as usize + 1;
    let mut w = Vec::with_capacity(n2);
    let mut xa = Vec::with_capacity(n2);
    let mut xb = Vec::with_capacity(n2);
    for m in 0..n2 {
        let s = (lo + m as f64 * LAPLACE_STEP).exp();
        let (pa, pb) = (1.0 + 2.0 * s * a, 1.0 + 2.0 * s * b);
        w.push(1.0 / (s.sqrt() * (pa * pb).sqrt()));
        xa.push(2.0 * s * c / pa);
        xb.push(2.0 * s * e / pb);
    }
    let term = |u: usize, v: usize| {
        let d = (-xa[u] * xa[v]).ln_1p() + (-xb[u] * xb[v]).ln_1p();
        w[u] * w[v] * (-0.5 * d).exp_m1()
    };
    let mut cov = 0.0;
    for u in 0..n2 {
        let mut row = 0.5 * term(u, u);
        for v in 0..u {
            row += term(u, v);
        }
        cov += 2.0 * row;
    }
    cov *= LAPLACE_STEP * LAPLACE_STEP / (4.0 * PI);
    mean * mean + cov
}

fn gauss_hermite_norm_product(g: &ConditionalGradients, order: usize) -> Result<f64> {
    let rule = GaussHermite::new(order).map_err(|e| Error::Quadrature(e.to_string()))?;
    let nodes: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (SQRT_2 * x, w / PI.sqrt()))
        .collect();
    let sd = |v: f64| v.max(0.0).sqrt();
    let (a, c, b, e) = (g.parallel_var, g.parallel_cov, g.normal_var, g.normal_cov);
    let (su1, sv1, su2, sv2) = (sd(a + c), sd(a - c), sd(b + e), sd(b - e));
    let mut total = 0.0;
    for &(z1, w1) in &nodes {
        for &(z2, w2) in &nodes {
            let x1 = (su1 * z1 + sv1 * z2) / SQRT_2;
            let y1 = (su1 * z1 - sv1 * z2) / SQRT_2;
            let mut inner = 0.0;
            for &(z3, w3) in &nodes {
                for &(z4, w4) in &nodes {
                    let x2 = (su2 * z3 + sv2 * z4) / SQRT_2;
                    let y2 = (su2 * z3 - sv2 * z4) / SQRT_2;
                    inner += w3 * w4 * x1.hypot(x2) * y1.hypot(y2);
                }
            }
            total += w1 * w2 * inner;
        }
    }
    Ok(total)
}

/// Two-point correlation density of the nodal length at separation `rho`.
pub fn two_point_density(e: EnergyLevel, rho: f64, method: ExpectationMethod) -> Result<f64> {
    let g = conditional_gradients(e, rho)?;
    let p00 = 1.0 / (2.0 * PI * g.one_minus_r2.sqrt());
    Ok(p00 * expected_norm_product(&g, method)?)
}

/// Near-diagonal cutoff `h0 = DIAGONAL_CUTOFF / sqrt(E)`.
pub const DIAGONAL_CUTOFF: f64 = 1e-3;
const OUTER_PANELS_PER_UNIT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KacRiceVariance {
    pub variance: f64,
    pub mean: f64,
    /// Contribution of separations below the cutoff.
    pub diagonal_patch: f64,
    /// `int int K2` over the domain, the second moment of the length.
    pub second_moment: f64,
    /// Change of the outer integral when the panels are halved.
    pub refinement_change: f64,
}

/// Variance of the nodal length from the two-point formula.
pub fn kac_rice_variance_length(e: EnergyLevel, d: &Domain) -> Result<KacRiceVariance> {
    kac_rice_variance_length_with(e, d, ExpectationMethod::Laplace)
}

pub fn kac_rice_variance_length_with(
    e: EnergyLevel,
    d: &Domain,
    method: ExpectationMethod,
) -> Result<KacRiceVariance> {
    let shape = d.shape();
    let m = d.metrics();
    let rho1 = kac_rice_mean(e, d, NodalStatistic::Length) / m.area;
    let h0 = DIAGONAL_CUTOFF / e.e().sqrt();
    let width = 1.0 / (OUTER_PANELS_PER_UNIT * e.e().sqrt());
    let rule = GaussLegendre::new(8).map_err(|er| Error::Quadrature(er.to_string()))?;
    let pairs = rule.as_node_weight_pairs();

    let mut breaks = vec![h0, m.diameter];
    if let crate::geometry::Shape::Rect { width: w, height: h } = shape {
        breaks.extend([w, h]);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let panels = |max_width: f64| {
        let mut p = Vec::new();
        // geometric grading away from the cutoff
        let mut lo = h0;
        let mut step = h0;
        while lo + step < (h0 + max_width).min(breaks[1]) {
            p.push((lo, lo + step));
            lo += step;
            step *= 2.0;
        }
        for (k, seg) in breaks.windows(2).enumerate() {
            let a = if k == 0 { lo } else { seg[0] };
            let n = ((seg[1] - a) / max_width).ceil().max(1.0) as usize;
            let w = (seg[1] - a) / n as f64;
            p.extend((0..n).map(|i| (a + i as f64 * w, a + (i + 1) as f64 * w)));
        }
        p
    };
    let integrate = |max_width: f64| -> Result<(f64, f64)> {
        let nodes: Vec<(f64, f64)> = panels(max_width)
            .into_iter()
            .flat_map(|(a, b)| pairs.iter().map(move |&(x, w)| (a + 0.5 * (b - a) * (x + 1.0), 0.5 * (b - a) * w)))
            .collect();
        let vals: Vec<(f64, f64)> = nodes
            .par_iter()
            .map(|&(phi, w)| {
                let k2 = two_point_density(e, phi, method)?;
                let cg = w * phi * angular_covariogram(shape, phi);
                Ok((cg * (k2 - rho1 * rho1), cg * k2))
            })
            .collect::<Result<_>>()?;
        Ok(vals.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1)))
    };
    let (coarse, _) = integrate(width)?;
    let (fine, second) = integrate(width / 2.0)?;

    let area = m.area;
    let patch_k2 = SQRT_2 * PI * e.e().sqrt() * h0 * area;
    let patch = patch_k2 - rho1 * rho1 * PI * h0 * h0 * area;
    Ok(KacRiceVariance {
        variance: fine + patch,
        mean: rho1 * area,
        diagonal_patch: patch,
        second_moment: second + patch_k2,
        refinement_change: (fine - coarse).abs(),
    })
}
