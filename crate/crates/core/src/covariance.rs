//! Covariance structure of the field and its gradient at two points.
//!
//! Everything is expressed through the scaled distance `psi = k |x - y|`
//! with `k = 2 pi sqrt(E)`. For `d = x - y`:
//!
//! * `r(d) = J0(psi)`
//! * `r_{0,i}(d) = E[B(x) d_i B(y)] = k (d_i / |d|) J1(psi)`, `r_{i,0} = -r_{0,i}`
//! * `r_{i,i}(d) = 2 pi^2 E (J0 + (1 - 2 d_i^2 / |d|^2) J2)`
//! * `r_{1,2}(d) = -4 pi^2 E (d_1 d_2 / |d|^2) J2`
//!
//! Normalised entries divide every derivative index by `sqrt(2 pi^2 E)`.

use std::f64::consts::PI;

use nalgebra::{Matrix6, SymmetricEigen};

use crate::error::{Error, Result};
use crate::special_fn::bessel_j012_unchecked;

/// Threshold on `1 - r^2` below which two points count as coincident.
pub const NEAR_SINGULAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevel {
    e: f64,
    k: f64,
}

impl EnergyLevel {
    pub fn new(e: f64) -> Result<Self> {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::Domain(format!("energy must be positive, got {e}")));
        }
        Ok(EnergyLevel {
            e,
            k: 2.0 * PI * e.sqrt(),
        })
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    /// Wavenumber `2 pi sqrt(E)`.
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn wavelength(&self) -> f64 {
        1.0 / self.e.sqrt()
    }

    /// Variance of each gradient component, `2 pi^2 E`.
    pub fn gradient_variance(&self) -> f64 {
        2.0 * PI * PI * self.e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    fn idx(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CovKernel {
    energy: EnergyLevel,
}

fn norm(dx: [f64; 2]) -> f64 {
    dx[0].hypot(dx[1])
}

fn nonzero(dx: [f64; 2]) -> Result<f64> {
    let rho = norm(dx);
    if rho == 0.0 || !rho.is_finite() {
        return Err(Error::Degenerate(format!(
            "derivative covariance undefined at separation {dx:?}; use the zero-point accessors"
        )));
    }
    Ok(rho)
}

impl CovKernel {
    pub fn new(energy: EnergyLevel) -> Self {
        CovKernel { energy }
    }

    pub fn energy(&self) -> EnergyLevel {
        self.energy
    }

    pub fn kernel(&self, dx: [f64; 2]) -> f64 {
        bessel_j012_unchecked(self.energy.k * norm(dx))[0]
    }

    pub fn kernel_d1(&self, i: Axis, dx: [f64; 2]) -> Result<f64> {
        let rho = nonzero(dx)?;
        let j = bessel_j012_unchecked(self.energy.k * rho);
        Ok(self.energy.k * dx[i.idx()] / rho * j[1])
    }

    /// Limit of `kernel_d1` at zero separation.
    pub fn kernel_d1_at_zero(&self, _i: Axis) -> f64 {
        0.0
    }

    pub fn kernel_d2(&self, i: Axis, j: Axis, dx: [f64; 2]) -> Result<f64> {
        let rho = nonzero(dx)?;
        let b = bessel_j012_unchecked(self.energy.k * rho);
        let s = self.energy.gradient_variance();
        Ok(if i == j {
            let u = dx[i.idx()] / rho;
            s * (b[0] + (1.0 - 2.0 * u * u) * b[2])
        } else {
            -2.0 * s * (dx[0] / rho) * (dx[1] / rho) * b[2]
        })
    }

    /// Limit of `kernel_d2` at zero separation: `2 pi^2 E` on the diagonal, 0 off it.
    pub fn kernel_d2_at_zero(&self, i: Axis, j: Axis) -> f64 {
        if i == j {
            self.energy.gradient_variance()
        } else {
            0.0
        }
    }

    /// `E[d~_k B(x) d~_l B(y)]` with index 0 the field and 1, 2 the normalised
    /// partial derivatives.
    pub fn normalized_cov(&self, k: usize, l: usize, dx: [f64; 2]) -> Result<f64> {
        if k > 2 || l > 2 {
            return Err(Error::Domain(format!("covariance index ({k}, {l}) out of range")));
        }
        if (k, l) == (0, 0) {
            return Ok(self.kernel(dx));
        }
        let rho = nonzero(dx)?;
        let table = NormalizedCov::from_polar(self.energy.k * rho, dx[0] / rho, dx[1] / rho);
        Ok(table.0[k][l])
    }

    /// Limit of `normalized_cov` at zero separation (the identity).
    pub fn normalized_cov_at_zero(&self, k: usize, l: usize) -> f64 {
        if k == l {
            1.0
        } else {
            0.0
        }
    }

    /// Joint covariance of `(B(x), B(y), d1 B(x), d2 B(x), d1 B(y), d2 B(y))` for `d = x - y != 0`.
    pub fn sigma_matrix(&self, dx: [f64; 2]) -> Result<SigmaMatrix> {
        nonzero(dx)?;
        let r = self.kernel(dx);
        let r01 = self.kernel_d1(Axis::X1, dx)?;
        let r02 = self.kernel_d1(Axis::X2, dx)?;
        let r11 = self.kernel_d2(Axis::X1, Axis::X1, dx)?;
        let r22 = self.kernel_d2(Axis::X2, Axis::X2, dx)?;
        let r12 = self.kernel_d2(Axis::X1, Axis::X2, dx)?;
        let s = self.energy.gradient_variance();
        let m = [
            [1.0, r, 0.0, 0.0, r01, r02],
            [r, 1.0, -r01, -r02, 0.0, 0.0],
            [0.0, -r01, s, 0.0, r11, r12],
            [0.0, -r02, 0.0, s, r12, r22],
            [r01, 0.0, r11, r12, s, 0.0],
            [r02, 0.0, r12, r22, 0.0, s],
        ];
        Ok(SigmaMatrix(m))
    }

    /// Block-diagonal `diag(1, 1, 2 pi^2 E, 2 pi^2 E, 2 pi^2 E, 2 pi^2 E)`: the
    /// one-point laws of the two points with the cross blocks dropped.
    pub fn sigma_at_zero(&self) -> SigmaMatrix {
        let s = self.energy.gradient_variance();
        let mut m = [[0.0; 6]; 6];
        for (i, v) in [1.0, 1.0, s, s, s, s].into_iter().enumerate() {
            m[i][i] = v;
        }
        SigmaMatrix(m)
    }

    /// Covariance of the gradient at `x` conditional on `B(x) = B(y) = 0`.
    pub fn omega_matrix(&self, dx: [f64; 2]) -> Result<OmegaMatrix> {
        let rho = nonzero(dx)?;
        let psi = self.energy.k * rho;
        let j = bessel_j012_unchecked(psi);
        let one_minus_r2 = one_minus_j0(psi, j[0]) * (1.0 + j[0]);
        if one_minus_r2 < NEAR_SINGULAR {
            return Err(Error::NearSingular(one_minus_r2));
        }
        let g = [
            self.energy.k * dx[0] / rho * j[1],
            self.energy.k * dx[1] / rho * j[1],
        ];
        let s = self.energy.gradient_variance();
        let mut omega = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                omega[a][b] = if a == b { s } else { 0.0 } - g[a] * g[b] / one_minus_r2;
            }
        }
        let det = omega[0][0] * omega[1][1] - omega[0][1] * omega[1][0];
        Ok(OmegaMatrix {
            omega,
            psi: det.abs() / one_minus_r2,
        })
    }
}

/// `1 - J0(x)` without cancellation for small `x`.
pub(crate) fn one_minus_j0(x: f64, j0: f64) -> f64 {
    if x > 0.5 {
        return 1.0 - j0;
    }
    let y = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 0.0;
    for m in 1..20 {
        term *= -y / (m * m) as f64;
        sum -= term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// The 3x3 table `r~_{k,l}` at one separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedCov(pub [[f64; 3]; 3]);

impl NormalizedCov {
    /// From the scaled distance `psi` and the direction `(cos theta, sin theta)` of `x - y`.
    pub fn from_polar(psi: f64, c: f64, s: f64) -> Self {
        Self::from_bessel(bessel_j012_unchecked(psi), c, s)
    }

    pub fn from_bessel(j: [f64; 3], c: f64, s: f64) -> Self {
        let r01 = std::f64::consts::SQRT_2 * c * j[1];
        let r02 = std::f64::consts::SQRT_2 * s * j[1];
        let r11 = j[0] + (1.0 - 2.0 * c * c) * j[2];
        let r22 = j[0] + (1.0 - 2.0 * s * s) * j[2];
        let r12 = -2.0 * c * s * j[2];
        NormalizedCov([[j[0], r01, r02], [-r01, r11, r12], [-r02, r12, r22]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMatrix(pub [[f64; 6]; 6]);

impl SigmaMatrix {
    pub fn is_symmetric(&self) -> bool {
        (0..6).all(|i| (0..6).all(|j| self.0[i][j] == self.0[j][i]))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = Matrix6::from_fn(|i, j| self.0[i][j]);
        SymmetricEigen::new(m).eigenvalues.min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaMatrix {
    pub omega: [[f64; 2]; 2],
    /// `|det omega| / (1 - r^2)`.
    pub psi: f64,
}
