//! Sample summaries: jackknife standard errors, shape statistics and the
//! Kolmogorov-Smirnov distance to a fitted normal.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and its leave-one-out jackknife standard error.
pub fn jackknife_mean(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / ((n - 1) * n) as f64).sqrt())
}

/// Unbiased variance and its leave-one-out jackknife standard error.
pub fn jackknife_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 3 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let var = ss / (nf - 1.0);
    let loo: Vec<f64> = xs
        .iter()
        .map(|x| (ss - (x - m) * (x - m) * nf / (nf - 1.0)) / (nf - 2.0))
        .collect();
    let lm = mean(&loo);
    let s2: f64 = loo.iter().map(|v| (v - lm) * (v - lm)).sum();
    (var, ((nf - 1.0) / nf * s2).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// KS distance of the standardised sample to the normal with the sample's own mean and SD.
    pub ks_distance: f64,
}

impl SummaryStats {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let (m, mean_se) = jackknife_mean(xs);
        let nf = n as f64;
        let (variance, variance_se) = match jackknife_variance(xs) {
            (v, se) if n >= 3 => (v, se),
            _ => (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0), f64::NAN),
        };
        let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf;
        let (skewness, excess_kurtosis, ks_distance) = if m2 > 0.0 {
            let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / nf;
            let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / nf;
            (
                m3 / m2.powf(1.5),
                m4 / (m2 * m2) - 3.0,
                ks_fitted_normal(xs, m, variance.sqrt()),
            )
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        Ok(SummaryStats {
            n,
            mean: m,
            mean_se,
            variance,
            variance_se,
            skewness,
            excess_kurtosis,
            ks_distance,
        })
    }
}

fn ks_fitted_normal(xs: &[f64], m: f64, sd: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z: Vec<f64> = xs.iter().map(|x| (x - m) / sd).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltBands {
    pub max_abs_skewness: f64,
    pub max_abs_excess_kurtosis: f64,
    pub max_ks: f64,
}

impl Default for CltBands {
    fn default() -> Self {
        CltBands {
            max_abs_skewness: 0.25,
            max_abs_excess_kurtosis: 0.5,
            max_ks: 0.06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub stats: SummaryStats,
    pub bands: CltBands,
    pub skewness_ok: bool,
    pub kurtosis_ok: bool,
    pub ks_ok: bool,
}

impl CltReport {
    pub fn passed(&self) -> bool {
        self.skewness_ok && self.kurtosis_ok && self.ks_ok
    }
}

pub const CLT_MIN_SAMPLES: usize = 200;

pub fn clt_diagnostics(samples: &[f64], bands: CltBands) -> Result<CltReport> {
    if samples.len() < CLT_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: CLT_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let stats = SummaryStats::from_samples(samples)?;
    if !(stats.variance > 0.0) {
        return Err(Error::Degenerate("sample standard deviation is zero".into()));
    }
    Ok(CltReport {
        stats,
        bands,
        skewness_ok: stats.skewness.abs() <= bands.max_abs_skewness,
        kurtosis_ok: stats.excess_kurtosis.abs() <= bands.max_abs_excess_kurtosis,
        ks_ok: stats.ks_distance <= bands.max_ks,
    })
}
