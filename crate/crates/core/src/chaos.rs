//! Second and fourth Wiener-chaos projections of nodal length and of the
//! phase-singularity count, evaluated on single realisations.

use std::f64::consts::{PI, SQRT_2};

use crate::covariance::EnergyLevel;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryNode, GridSpec};
use crate::special_fn::hermite_all;
use crate::synthesis::{FieldGrid, WaveSample};

/// Expansion coefficients of the indicator, the norm and the Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosCoeffs {
    /// `beta_0, beta_2, beta_4`.
    pub beta: [f64; 3],
    pub alpha: AlphaCoeffs,
    /// `((i2, i3, j2, j3), gamma)` for every listed index.
    pub gamma: Vec<([u8; 4], f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaCoeffs {
    pub a00: f64,
    pub a20: f64,
    pub a02: f64,
    pub a40: f64,
    pub a04: f64,
    pub a22: f64,
}

impl ChaosCoeffs {
    pub fn gamma(&self, idx: [u8; 4]) -> Option<f64> {
        self.gamma.iter().find(|(i, _)| *i == idx).map(|(_, v)| *v)
    }
}

pub fn coefficients() -> ChaosCoeffs {
    let s = (2.0 * PI).sqrt();
    let gamma = vec![
        ([0, 0, 0, 0], 1.0),
        ([2, 0, 0, 0], 0.25),
        ([0, 2, 0, 0], 0.25),
        ([0, 0, 2, 0], 0.25),
        ([0, 0, 0, 2], 0.25),
        ([1, 1, 1, 1], -3.0 / 8.0),
        ([2, 2, 0, 0], -1.0 / 32.0),
        ([0, 0, 2, 2], -1.0 / 32.0),
        ([2, 0, 2, 0], -1.0 / 32.0),
        ([0, 2, 0, 2], -1.0 / 32.0),
        ([2, 0, 0, 2], 5.0 / 32.0),
        ([0, 2, 2, 0], 5.0 / 32.0),
        ([4, 0, 0, 0], -3.0 / 192.0),
        ([0, 4, 0, 0], -3.0 / 192.0),
        ([0, 0, 4, 0], -3.0 / 192.0),
        ([0, 0, 0, 4], -3.0 / 192.0),
    ];
    ChaosCoeffs {
        beta: [1.0 / s, -1.0 / (2.0 * s), 1.0 / (8.0 * s)],
        alpha: AlphaCoeffs {
            a00: s / 2.0,
            a20: s / 8.0,
            a02: s / 8.0,
            a40: -s / 128.0,
            a04: -s / 128.0,
            a22: -s / 64.0,
        },
        gamma,
    }
}

/// End-correction weights of the 10th-order Gregory rule.
const GREGORY10: [f64; 9] = [
    25713.0 / 89600.0,
    1153247.0 / 725760.0,
    130583.0 / 3628800.0,
    903527.0 / 403200.0,
    -797.0 / 5670.0,
    6244961.0 / 3628800.0,
    56621.0 / 80640.0,
    3891877.0 / 3628800.0,
    1028617.0 / 1036800.0,
];
const GREGORY4: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];

/// 1-D composite weights (unit spacing) on `n` nodes.
pub fn gregory_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    let ends: &[f64] = if n >= 2 * GREGORY10.len() {
        &GREGORY10
    } else if n >= 2 * GREGORY4.len() {
        &GREGORY4
    } else if n >= 2 {
        &[0.5]
    } else {
        &[]
    };
    for (i, &c) in ends.iter().enumerate() {
        w[i] = c;
        w[n - 1 - i] = c;
    }
    w
}

/// Area weights for integrals over the domain from node values.
///
/// Aligned rectangles get the tensor Gregory rule; other domains `h^2` on every inside node.
pub fn grid_weights(g: &GridSpec) -> Vec<f64> {
    let h2 = g.h * g.h;
    if g.is_aligned_rect() {
        let wx = gregory_weights(g.nx);
        let wy = gregory_weights(g.ny);
        let mut out = Vec::with_capacity(g.node_count());
        for wj in &wy {
            for wi in &wx {
                out.push(wi * wj * h2);
            }
        }
        out
    } else {
        (0..g.ny)
            .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
            .map(|(i, j)| if g.node_inside(i, j) { h2 } else { 0.0 })
            .collect()
    }
}

/// Quadrature shared by every realisation on one grid.
#[derive(Debug, Clone)]
pub struct ChaosQuadrature {
    energy: EnergyLevel,
    weights: Vec<f64>,
    boundary: Vec<BoundaryNode>,
    nodes: usize,
}

/// Boundary panels per wavelength and nodes per panel.
pub const BOUNDARY_PANELS_PER_WAVELENGTH: f64 = 4.0;
pub const BOUNDARY_ORDER: usize = 8;

impl ChaosQuadrature {
    pub fn new(g: &GridSpec) -> Result<Self> {
        let panel = 1.0 / (g.energy.sqrt() * BOUNDARY_PANELS_PER_WAVELENGTH);
        let boundary = g.domain.boundary().gauss_nodes(panel, BOUNDARY_ORDER)?;
        Self::with_boundary(g, boundary)
    }

    pub fn with_boundary(g: &GridSpec, boundary: Vec<BoundaryNode>) -> Result<Self> {
        Ok(ChaosQuadrature {
            energy: EnergyLevel::new(g.energy)?,
            weights: grid_weights(g),
            boundary,
            nodes: g.node_count(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    fn check(&self, f: &FieldGrid) -> Result<()> {
        if f.value.len() != self.nodes {
            return Err(Error::Domain(format!(
                "field has {} nodes, quadrature expects {}",
                f.value.len(),
                self.nodes
            )));
        }
        Ok(())
    }

    fn grad_scale(&self) -> f64 {
        1.0 / self.energy.gradient_variance().sqrt()
    }

    /// Both forms of the second chaos of nodal length.
    pub fn second_chaos_length(&self, w: &WaveSample, f: &FieldGrid) -> Result<SecondChaos> {
        self.check(f)?;
        let s2 = self.grad_scale().powi(2);
        let mut interior = 0.0;
        for n in 0..self.nodes {
            let g2 = (f.d1[n] * f.d1[n] + f.d2[n] * f.d2[n]) * s2;
            interior += self.weights[n] * (g2 - 2.0 * f.value[n] * f.value[n]);
        }
        let mut boundary = 0.0;
        let mut boundary_abs = 0.0;
        for b in &self.boundary {
            let fe = w.eval(b.point);
            let v = fe.value * (fe.gradient[0] * b.normal[0] + fe.gradient[1] * b.normal[1]);
            boundary += b.weight * v;
            boundary_abs += b.weight * v.abs();
        }
        let e = self.energy.e();
        let pre = PI * (2.0 * e).sqrt() / 8.0;
        Ok(SecondChaos {
            interior: pre * interior,
            boundary: pre * s2 * boundary,
            scale: pre * s2 * boundary_abs,
        })
    }

    /// Fourth chaos of nodal length: the six Hermite integrals and their combination.
    pub fn fourth_chaos_length(&self, f: &FieldGrid) -> Result<FourthChaosL> {
        self.check(f)?;
        let sc = self.grad_scale();
        let mut a = [0.0; 6];
        for n in 0..self.nodes {
            let w = self.weights[n];
            if w == 0.0 {
                continue;
            }
            let h0 = hermite_all::<5>(f.value[n]);
            let h1 = hermite_all::<5>(f.d1[n] * sc);
            let h2 = hermite_all::<5>(f.d2[n] * sc);
            a[0] += w * h0[4];
            a[1] += w * h1[4];
            a[2] += w * h2[4];
            a[3] += w * h1[2] * h2[2];
            a[4] += w * h0[2] * h1[2];
            a[5] += w * h0[2] * h2[2];
        }
        let s = length_combination(&a);
        Ok(FourthChaosL {
            a,
            value: (2.0 * PI * PI * self.energy.e()).sqrt() / 128.0 * s,
        })
    }

    /// Fourth chaos of the singularity count from the real and imaginary parts.
    pub fn fourth_chaos_count(&self, re: &FieldGrid, im: &FieldGrid) -> Result<FourthChaosN> {
        self.check(re)?;
        self.check(im)?;
        let sc = self.grad_scale();
        let mut b = [0.0; 10];
        for n in 0..self.nodes {
            let w = self.weights[n];
            if w == 0.0 {
                continue;
            }
            let (u, u1, u2) = (re.value[n], re.d1[n] * sc, re.d2[n] * sc);
            let (v, v1, v2) = (im.value[n], im.d1[n] * sc, im.d2[n] * sc);
            let h = |t: f64| t * t - 1.0;
            let (hu, hu1, hu2, hv, hv1, hv2) = (h(u), h(u1), h(u2), h(v), h(v1), h(v2));
            b[0] += w * hu * hv;
            b[1] += w * hu * hv1;
            b[2] += w * hu * hv2;
            b[3] += w * hu1 * hv;
            b[4] += w * hu2 * hv;
            b[5] += w * hu1 * hv1;
            b[6] += w * hu2 * hv2;
            b[7] += w * hu1 * hv2;
            b[8] += w * hu2 * hv1;
            b[9] += w * u1 * u2 * v1 * v2;
        }
        let re4 = self.fourth_chaos_length(re)?;
        let im4 = self.fourth_chaos_length(im)?;
        let e = self.energy.e();
        let a_e = PI * e / 64.0 * length_combination(&re4.a);
        let a_e_hat = PI * e / 64.0 * length_combination(&im4.a);
        let b_e = PI * e / 8.0
            * (2.0 * b[0] - b[1] - b[2] - b[3] - b[4] - 0.25 * b[5] - 0.25 * b[6]
                + 1.25 * b[7]
                + 1.25 * b[8]
                - 3.0 * b[9]);
        Ok(FourthChaosN {
            a_e,
            a_e_hat,
            b,
            b_e,
            value: a_e + a_e_hat + b_e,
            length_re: re4,
            length_im: im4,
        })
    }
}

fn length_combination(a: &[f64; 6]) -> f64 {
    8.0 * a[0] - a[1] - a[2] - 2.0 * a[3] - 8.0 * a[4] - 8.0 * a[5]
}

/// Interior and boundary forms of the second chaos of nodal length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondChaos {
    pub interior: f64,
    pub boundary: f64,
    /// Same boundary integral with the integrand replaced by its absolute value.
    pub scale: f64,
}

/// Relative tolerance of the Green identity check.
pub const GREEN_TOLERANCE: f64 = 1e-4;

impl SecondChaos {
    pub fn green_discrepancy(&self) -> f64 {
        (self.interior - self.boundary).abs() / (self.interior.abs() + self.scale)
    }

    pub fn green_ok(&self) -> bool {
        self.green_discrepancy() <= GREEN_TOLERANCE
    }
}

/// `sqrt(2E) (L[2] + L^[2])` from the boundary forms.
pub fn second_chaos_count(e: EnergyLevel, re: &SecondChaos, im: &SecondChaos) -> f64 {
    (2.0 * e.e()).sqrt() * (re.boundary + im.boundary)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourthChaosL {
    /// `a_1 .. a_6`.
    pub a: [f64; 6],
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourthChaosN {
    pub a_e: f64,
    pub a_e_hat: f64,
    /// `b_1 .. b_10`.
    pub b: [f64; 10],
    pub b_e: f64,
    pub value: f64,
    pub length_re: FourthChaosL,
    pub length_im: FourthChaosL,
}

impl FourthChaosN {
    /// `a_E - sqrt(2E) L[4]` for the real part, relative to `|a_E|`.
    pub fn identity_residual(&self, e: EnergyLevel) -> f64 {
        let other = (2.0 * e.e()).sqrt() * self.length_re.value;
        (self.a_e - other).abs() / self.a_e.abs().max(f64::MIN_POSITIVE)
    }
}

pub const RESIDUAL_MIN_SAMPLES: usize = 100;

/// Sample variance of `total - mean - second - fourth`.
pub fn residual_variance(total: &[f64], mean: f64, second: &[f64], fourth: &[f64]) -> Result<f64> {
    let n = total.len();
    if second.len() != n || fourth.len() != n {
        return Err(Error::Domain("paired samples differ in length".into()));
    }
    if n < RESIDUAL_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: RESIDUAL_MIN_SAMPLES,
            got: n,
        });
    }
    let r: Vec<f64> = (0..n).map(|i| total[i] - mean - second[i] - fourth[i]).collect();
    let m = r.iter().sum::<f64>() / n as f64;
    Ok(r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64)
}

/// Expected nodal length `area pi sqrt(E) / sqrt(2)`.
pub fn mean_length(area: f64, e: EnergyLevel) -> f64 {
    area * PI * e.e().sqrt() / SQRT_2
}

/// Expected singularity count `area pi E`.
pub fn mean_count(area: f64, e: EnergyLevel) -> f64 {
    area * PI * e.e()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn coefficient_values() {
        let c = coefficients();
        assert!((c.beta[0] - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(c.gamma([1, 1, 1, 1]), Some(-0.375));
        assert_eq!(c.gamma([0, 0, 0, 0]), Some(1.0));
        assert_eq!(c.gamma([3, 0, 0, 0]), None);
        assert!((c.alpha.a22 + (2.0 * PI).sqrt() / 64.0).abs() < 1e-16);
    }

    #[test]
    fn gregory_integrates_degree_nine_exactly() {
        let n = 40;
        let w = gregory_weights(n);
        let h = 1.0 / (n - 1) as f64;
        for p in 0..10 {
            let s: f64 = (0..n).map(|i| w[i] * h * (i as f64 * h).powi(p)).sum();
            assert!((s - 1.0 / (p + 1) as f64).abs() < 1e-13, "degree {p}: {s}");
        }
        assert_eq!(gregory_weights(8), vec![0.375, 7.0 / 6.0, 23.0 / 24.0, 1.0, 1.0, 23.0 / 24.0, 7.0 / 6.0, 0.375]);
    }

    #[test]
    fn constant_input_closed_forms() {
        let g = GridSpec::new(Domain::unit_square(), 1.0, 20.0).unwrap();
        let q = ChaosQuadrature::new(&g).unwrap();
        let c = 0.7;
        let n = g.node_count();
        let f = FieldGrid {
            nx: g.nx,
            ny: g.ny,
            value: vec![c; n],
            d1: vec![0.0; n],
            d2: vec![0.0; n],
        };
        let r = q.fourth_chaos_length(&f).unwrap();
        let h2c = c * c - 1.0;
        let h4c = c.powi(4) - 6.0 * c * c + 3.0;
        let want = [h4c, 3.0, 3.0, 1.0, -h2c, -h2c];
        for k in 0..6 {
            assert!((r.a[k] - want[k]).abs() < 1e-12, "a{}: {}", k + 1, r.a[k]);
        }
    }

    #[test]
    fn residual_needs_samples() {
        let x = vec![1.0; 50];
        assert!(residual_variance(&x, 0.0, &x, &x).is_err());
        let t: Vec<f64> = (0..120).map(|i| 3.0 + i as f64 * 0.5).collect();
        let s: Vec<f64> = (0..120).map(|i| i as f64 * 0.2).collect();
        let f: Vec<f64> = (0..120).map(|i| i as f64 * 0.3).collect();
        assert!(residual_variance(&t, 3.0, &s, &f).unwrap() < 1e-20);
    }
}
