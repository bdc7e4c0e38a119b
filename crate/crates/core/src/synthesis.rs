//! Plane-wave superpositions approximating the random wave, with analytic gradients.
//!
//! `u(x) = sqrt(2/J) sum_j cos(k <x, (cos t_j, sin t_j)> + phi_j)`.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::EnergyLevel;
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point};

pub const DEFAULT_J: usize = 256;
pub const DEFAULT_NODE_BUDGET: usize = 100_000_000;

/// How the `J` directions are drawn. Phases are always i.i.d. uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSampling {
    /// i.i.d. uniform on `[0, 2 pi)`.
    Iid,
    /// One uniform direction in each arc `[2 pi j/J, 2 pi (j+1)/J)`.
    #[default]
    Stratified,
}

/// Deterministic generator for stream `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveSample {
    energy: EnergyLevel,
    directions: Vec<f64>,
    phases: Vec<f64>,
    wavevectors: Vec<[f64; 2]>,
    amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEval {
    pub value: f64,
    pub gradient: [f64; 2],
}

impl WaveSample {
    pub fn from_parts(energy: EnergyLevel, directions: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if directions.is_empty() || directions.len() != phases.len() {
            return Err(Error::Domain(format!(
                "need J >= 1 directions and as many phases (got {} and {})",
                directions.len(),
                phases.len()
            )));
        }
        if directions.iter().chain(&phases).any(|a| !a.is_finite()) {
            return Err(Error::Domain("non-finite angle".into()));
        }
        let k = energy.k();
        let wavevectors = directions.iter().map(|t| [k * t.cos(), k * t.sin()]).collect();
        let amplitude = (2.0 / directions.len() as f64).sqrt();
        Ok(WaveSample {
            energy,
            directions,
            phases,
            wavevectors,
            amplitude,
        })
    }

    pub fn energy(&self) -> EnergyLevel {
        self.energy
    }

    pub fn j(&self) -> usize {
        self.directions.len()
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Same waves at another energy (directions and phases kept).
    pub fn with_energy(&self, energy: EnergyLevel) -> Self {
        Self::from_parts(energy, self.directions.clone(), self.phases.clone())
            .expect("angles already validated")
    }

    pub fn eval(&self, x: Point) -> FieldEval {
        let (mut acc, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for (w, phi) in self.wavevectors.iter().zip(&self.phases) {
            let (su, cu) = (w[0] * x[0] + phi).sin_cos();
            let (sv, cv) = (w[1] * x[1]).sin_cos();
            let c = cu * cv - su * sv;
            let s = su * cv + cu * sv;
            acc += c;
            g1 += w[0] * s;
            g2 += w[1] * s;
        }
        FieldEval {
            value: self.amplitude * acc,
            gradient: [-self.amplitude * g1, -self.amplitude * g2],
        }
    }

    pub fn eval_grid(&self, g: &GridSpec) -> Result<FieldGrid> {
        self.eval_grid_with_budget(g, DEFAULT_NODE_BUDGET)
    }

    pub fn eval_grid_with_budget(&self, g: &GridSpec, budget: usize) -> Result<FieldGrid> {
        let nodes = g.node_count();
        if nodes > budget {
            return Err(Error::NodeBudget { nodes, budget });
        }
        let (nx, ny, nj) = (g.nx, g.ny, self.j());
        let mut cu = vec![0.0; nj * nx];
        let mut su = vec![0.0; nj * nx];
        for (j, (w, phi)) in self.wavevectors.iter().zip(&self.phases).enumerate() {
            for i in 0..nx {
                let (s, c) = (w[0] * g.x(i) + phi).sin_cos();
                cu[j * nx + i] = c;
                su[j * nx + i] = s;
            }
        }
        let mut value = vec![0.0; nodes];
        let mut d1 = vec![0.0; nodes];
        let mut d2 = vec![0.0; nodes];
        let amp = self.amplitude;
        value
            .par_chunks_mut(nx)
            .zip(d1.par_chunks_mut(nx))
            .zip(d2.par_chunks_mut(nx))
            .enumerate()
            .for_each(|(row, ((val, g1), g2))| {
                let y = g.y(row);
                for (j, w) in self.wavevectors.iter().enumerate() {
                    let (sv, cv) = (w[1] * y).sin_cos();
                    let (a, b) = (w[0], w[1]);
                    let cur = &cu[j * nx..(j + 1) * nx];
                    let sur = &su[j * nx..(j + 1) * nx];
                    for i in 0..nx {
                        let c = cur[i] * cv - sur[i] * sv;
                        let s = sur[i] * cv + cur[i] * sv;
                        val[i] += c;
                        g1[i] += a * s;
                        g2[i] += b * s;
                    }
                }
                for i in 0..nx {
                    val[i] *= amp;
                    g1[i] *= -amp;
                    g2[i] *= -amp;
                }
            });
        debug_assert_eq!(ny * nx, nodes);
        Ok(FieldGrid {
            nx,
            ny,
            value,
            d1,
            d2,
        })
    }
}

/// Draws `(t_j, phi_j)` for stream `stream` of master seed `seed`.
pub fn sample_wave_stream(
    e: EnergyLevel,
    j: usize,
    seed: u64,
    stream: u64,
    sampling: DirectionSampling,
) -> Result<WaveSample> {
    if j == 0 {
        return Err(Error::Domain("J must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, stream);
    let mut directions = Vec::with_capacity(j);
    let mut phases = Vec::with_capacity(j);
    for idx in 0..j {
        let u: f64 = rng.gen();
        directions.push(match sampling {
            DirectionSampling::Iid => TAU * u,
            DirectionSampling::Stratified => TAU * (idx as f64 + u) / j as f64,
        });
        phases.push(TAU * rng.gen::<f64>());
    }
    WaveSample::from_parts(e, directions, phases)
}

/// Stream 0 of `seed`, default direction sampling.
pub fn sample_wave(e: EnergyLevel, j: usize, seed: u64) -> Result<WaveSample> {
    sample_wave_stream(e, j, seed, 0, DirectionSampling::default())
}

/// Real and imaginary parts, independent.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveSample {
    pub re: WaveSample,
    pub im: WaveSample,
}

impl ComplexWaveSample {
    /// Replication `r` uses streams `2r` (real part) and `2r + 1` (imaginary part).
    pub fn sample(
        e: EnergyLevel,
        j: usize,
        seed: u64,
        replication: u64,
        sampling: DirectionSampling,
    ) -> Result<Self> {
        Ok(ComplexWaveSample {
            re: sample_wave_stream(e, j, seed, 2 * replication, sampling)?,
            im: sample_wave_stream(e, j, seed, 2 * replication + 1, sampling)?,
        })
    }
}

/// Values and gradients on all grid nodes, row-major (`j * nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub value: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl FieldGrid {
    pub fn at(&self, i: usize, j: usize) -> FieldEval {
        let n = j * self.nx + i;
        FieldEval {
            value: self.value[n],
            gradient: [self.d1[n], self.d2[n]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagEstimate {
    pub lag: [f64; 2],
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `E[u(0) u(dx)]` per lag, sample `s` drawn from stream `s`.
pub fn empirical_covariance(
    e: EnergyLevel,
    j: usize,
    n_samples: usize,
    lags: &[[f64; 2]],
    seed: u64,
) -> Result<Vec<LagEstimate>> {
    if n_samples < 30 {
        return Err(Error::InsufficientSamples {
            needed: 30,
            got: n_samples,
        });
    }
    let products: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let w = sample_wave_stream(e, j, seed, s, DirectionSampling::default())?;
            let u0 = w.eval([0.0, 0.0]).value;
            Ok(lags.iter().map(|&d| u0 * w.eval(d).value).collect())
        })
        .collect::<Result<_>>()?;
    Ok(lags
        .iter()
        .enumerate()
        .map(|(l, &lag)| {
            let xs: Vec<f64> = products.iter().map(|p| p[l]).collect();
            let (mean, std_error) = crate::stats::jackknife_mean(&xs);
            LagEstimate {
                lag,
                mean,
                std_error,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    fn single(theta: f64, phi: f64, e: f64) -> WaveSample {
        WaveSample::from_parts(EnergyLevel::new(e).unwrap(), vec![theta], vec![phi]).unwrap()
    }

    #[test]
    fn single_wave_values() {
        let e = 9.0;
        let w = single(0.0, 0.0, e);
        let f = w.eval([0.0, 0.0]);
        assert_eq!(f.value, 2f64.sqrt());
        assert_eq!(f.gradient, [0.0, 0.0]);
        let k = EnergyLevel::new(e).unwrap().k();
        let f = w.eval([1.0 / (4.0 * e.sqrt()), 0.0]);
        assert!(f.value.abs() < 1e-15);
        assert!((f.gradient[0] + 2f64.sqrt() * k).abs() < 1e-12 * k);
        let a = w.eval([0.123, 0.4]).value;
        let b = w.eval([0.123 + 1.0 / e.sqrt(), 0.4]).value;
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn rejects_empty() {
        let e = EnergyLevel::new(1.0).unwrap();
        assert!(sample_wave(e, 0, 1).is_err());
        assert!(WaveSample::from_parts(e, vec![0.0], vec![]).is_err());
    }

    #[test]
    fn stratified_directions_stay_in_their_arcs() {
        let e = EnergyLevel::new(1.0).unwrap();
        let w = sample_wave_stream(e, 16, 5, 3, DirectionSampling::Stratified).unwrap();
        for (idx, t) in w.directions().iter().enumerate() {
            let lo = TAU * idx as f64 / 16.0;
            assert!(*t >= lo && *t < lo + TAU / 16.0);
        }
    }

    #[test]
    fn small_grid_matches_pointwise() {
        let e = EnergyLevel::new(4.0).unwrap();
        let w = sample_wave(e, 32, 7).unwrap();
        let g = GridSpec::new(Domain::rect(0.3, 0.2).unwrap(), 4.0, 8.0).unwrap();
        let f = w.eval_grid(&g).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                assert_eq!(f.at(i, j), w.eval([g.x(i), g.y(j)]));
            }
        }
        assert!(matches!(
            w.eval_grid_with_budget(&g, 3),
            Err(Error::NodeBudget { .. })
        ));
    }
}
