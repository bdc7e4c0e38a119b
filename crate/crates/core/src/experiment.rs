//! Monte Carlo campaigns: configuration, resumable seeded execution, summaries
//! and the files they are reported in.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{self, ChaosQuadrature, GREEN_TOLERANCE};
use crate::covariance::{CovKernel, EnergyLevel};
use crate::error::{Error, Result};
use crate::geometry::{Domain, GridSpec, Point};
use crate::nodal_stats::{count_singularities, nodal_length};
use crate::stats::{clt_diagnostics, CltBands, CltReport, SummaryStats, CLT_MIN_SAMPLES};
use crate::synthesis::{
    empirical_covariance, sample_wave_stream, DirectionSampling, FieldGrid, WaveSample, DEFAULT_J,
    DEFAULT_NODE_BUDGET,
};
use crate::variance_engine::{
    appendix_b_table, kac_rice_mean, kac_rice_variance_length, CovarianceTable, FourthVariances,
    NodalStatistic,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Fewest replications accepted when a variance is asserted.
pub const MIN_VARIANCE_SAMPLES: usize = 30;

/// Half-width of the mean and variance agreement bands, in combined standard errors.
pub const SE_BAND: f64 = 3.0;

/// Half-width of the covariance agreement band, in standard errors.
pub const COVARIANCE_SE_BAND: f64 = 5.0;

/// Largest accepted `|a_E - sqrt(2E) L[4]| / |a_E|`.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

pub const SAMPLES_HEADER: [&str; 9] = [
    "experiment_id",
    "E",
    "statistic",
    "replication",
    "seed_stream",
    "value",
    "grid_h",
    "J",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Length,
    Count,
    Chaos2,
    Chaos4,
    Kacrice,
    Table,
}

impl Statistic {
    fn per_replication(self) -> bool {
        matches!(
            self,
            Statistic::Length | Statistic::Count | Statistic::Chaos2 | Statistic::Chaos4
        )
    }
}

fn default_j() -> usize {
    DEFAULT_J
}

fn default_ppw() -> f64 {
    16.0
}

fn default_budget() -> usize {
    DEFAULT_NODE_BUDGET
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths { dir: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment_id: String,
    pub energies: Vec<f64>,
    #[serde(default = "Domain::unit_square")]
    pub domain: Domain,
    #[serde(default = "default_j")]
    pub j: usize,
    #[serde(default)]
    pub direction_sampling: DirectionSampling,
    #[serde(default = "default_ppw")]
    pub points_per_wavelength: f64,
    pub replications: usize,
    pub seed: u64,
    pub statistics: Vec<Statistic>,
    #[serde(default)]
    pub clt_bands: CltBands,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the listed fields.
    pub fn new(
        experiment_id: &str,
        energies: Vec<f64>,
        replications: usize,
        seed: u64,
        statistics: Vec<Statistic>,
    ) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment_id: experiment_id.to_string(),
            energies,
            domain: Domain::unit_square(),
            j: DEFAULT_J,
            direction_sampling: DirectionSampling::default(),
            points_per_wavelength: default_ppw(),
            replications,
            seed,
            statistics,
            clt_bands: CltBands::default(),
            node_budget: DEFAULT_NODE_BUDGET,
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return bad(format!(
                "experiment_id {:?} must be non-empty and use only [A-Za-z0-9._-]",
                self.experiment_id
            ));
        }
        if self.energies.is_empty() {
            return bad("energies must not be empty".into());
        }
        for (i, &e) in self.energies.iter().enumerate() {
            if !(e.is_finite() && e > 0.0) {
                return bad(format!("energy {e} must be positive and finite"));
            }
            if self.energies[..i].contains(&e) {
                return bad(format!("energy {e} is listed twice"));
            }
        }
        if self.statistics.is_empty() {
            return bad("statistics must not be empty".into());
        }
        if self.j == 0 {
            return bad("J must be at least 1".into());
        }
        if !(self.points_per_wavelength >= crate::geometry::MIN_POINTS_PER_WAVELENGTH) {
            return Err(Error::Resolution(self.points_per_wavelength));
        }
        if self.statistics.iter().any(|s| s.per_replication()) && self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.statistics.contains(&Statistic::Kacrice)
            && self.statistics.contains(&Statistic::Length)
            && self.replications < MIN_VARIANCE_SAMPLES
        {
            return bad(format!(
                "the Kac-Rice variance comparison needs at least {MIN_VARIANCE_SAMPLES} replications, got {}",
                self.replications
            ));
        }
        Ok(())
    }

    fn has(&self, s: Statistic) -> bool {
        self.statistics.contains(&s)
    }

    fn file(&self, suffix: &str) -> PathBuf {
        self.output.dir.join(format!("{}_{suffix}", self.experiment_id))
    }

    pub fn samples_path(&self) -> PathBuf {
        self.file("samples.csv")
    }

    pub fn config_path(&self) -> PathBuf {
        self.file("config.json")
    }

    pub fn report_path(&self, format: ReportFormat) -> PathBuf {
        match format {
            ReportFormat::Json => self.file("summary.json"),
            ReportFormat::Csv => self.file("summary.csv"),
        }
    }

    pub fn checks_path(&self) -> PathBuf {
        self.file("checks.csv")
    }

    pub fn plot_path(&self) -> PathBuf {
        self.file("plot.csv")
    }

    pub fn appendix_path(&self, e: f64) -> PathBuf {
        self.file(&format!("appendix_E{e}.csv"))
    }

    /// Row statistics emitted per replication, in file order.
    pub fn row_statistics(&self) -> Vec<String> {
        row_statistics(&self.statistics)
    }

    // fields that determine every sampled value
    fn same_samples(&self, other: &ExperimentConfig) -> bool {
        self.experiment_id == other.experiment_id
            && self.domain == other.domain
            && self.j == other.j
            && self.direction_sampling == other.direction_sampling
            && self.points_per_wavelength == other.points_per_wavelength
            && self.seed == other.seed
    }
}

fn needs_imaginary(stats: &[Statistic]) -> bool {
    stats.contains(&Statistic::Count) || stats.contains(&Statistic::Chaos4)
}

pub fn row_statistics(stats: &[Statistic]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let has = |s| stats.contains(&s);
    if has(Statistic::Length) {
        out.push("length".into());
    }
    if has(Statistic::Count) {
        out.push("count".into());
    }
    if has(Statistic::Chaos2) {
        out.extend(["chaos2_interior", "chaos2_boundary", "green_discrepancy"].map(String::from));
        if needs_imaginary(stats) {
            out.push("chaos2_count".into());
        }
    }
    if has(Statistic::Chaos4) {
        out.push("chaos4_length".into());
        out.extend((1..=6).map(|i| format!("a{i}")));
        out.extend(["a_e", "a_e_hat", "b_e"].map(String::from));
        out.extend((1..=10).map(|i| format!("b{i}")));
        out.extend(["chaos4_count", "identity_residual"].map(String::from));
    }
    out
}

/// One row of the samples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment_id: String,
    #[serde(rename = "E")]
    pub energy: f64,
    pub statistic: String,
    pub replication: u64,
    /// First RNG stream of the replication; the imaginary part uses the next one.
    pub seed_stream: u64,
    pub value: f64,
    pub grid_h: f64,
    #[serde(rename = "J")]
    pub j: usize,
    pub wall_ms: u64,
}

pub fn write_records<W: Write>(w: W, records: &[RunRecord], path: &Path) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(SAMPLES_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in records {
        wr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records_file(path: &Path, records: &[RunRecord]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write_records(BufWriter::new(f), records, &tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rd.headers().map_err(|e| Error::csv(path, e))?;
    if header.iter().ne(SAMPLES_HEADER) {
        return Err(Error::Config(format!(
            "{} does not have the samples header",
            path.display()
        )));
    }
    rd.deserialize().map(|r| r.map_err(|e| Error::csv(path, e))).collect()
}

// rows of a partly written file up to the first unreadable one
fn read_records_lenient(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rd.headers().map_err(|e| Error::csv(path, e))?;
    if header.iter().ne(SAMPLES_HEADER) {
        return Err(Error::Config(format!(
            "{} does not have the samples header",
            path.display()
        )));
    }
    Ok(rd.deserialize().map_while(|r| r.ok()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplication {
    #[serde(rename = "E")]
    pub energy: f64,
    pub replication: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Reuse complete replications already in the samples file.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            resume: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutcome {
    /// Sorted by `(E, replication, statistic)` in config order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<FailedReplication>,
    pub computed: usize,
    pub reused: usize,
    /// Rows in the existing file that the config no longer asks for.
    pub discarded_rows: usize,
}

struct EnergyContext {
    e: EnergyLevel,
    grid: GridSpec,
    quad: Option<ChaosQuadrature>,
}

impl EnergyContext {
    fn new(cfg: &ExperimentConfig, energy: f64) -> Result<Self> {
        let e = EnergyLevel::new(energy)?;
        let grid = GridSpec::new(cfg.domain, energy, cfg.points_per_wavelength)?;
        if grid.node_count() > cfg.node_budget {
            return Err(Error::NodeBudget {
                nodes: grid.node_count(),
                budget: cfg.node_budget,
            });
        }
        let quad = if cfg.has(Statistic::Chaos2) || cfg.has(Statistic::Chaos4) {
            Some(ChaosQuadrature::new(&grid)?)
        } else {
            None
        };
        Ok(EnergyContext { e, grid, quad })
    }
}

fn grid_of(w: &WaveSample, cfg: &ExperimentConfig, g: &GridSpec) -> Result<FieldGrid> {
    w.eval_grid_with_budget(g, cfg.node_budget)
}

/// All row statistics of replication `r`, in `row_statistics` order.
fn replicate(cfg: &ExperimentConfig, ctx: &EnergyContext, r: u64) -> Result<Vec<f64>> {
    let stats = &cfg.statistics;
    let g = &ctx.grid;
    let re = sample_wave_stream(ctx.e, cfg.j, cfg.seed, 2 * r, cfg.direction_sampling)?;
    let re_grid = grid_of(&re, cfg, g)?;
    let im = if needs_imaginary(stats) {
        let w = sample_wave_stream(ctx.e, cfg.j, cfg.seed, 2 * r + 1, cfg.direction_sampling)?;
        let grid = grid_of(&w, cfg, g)?;
        Some((w, grid))
    } else {
        None
    };
    let mut out = Vec::new();
    if cfg.has(Statistic::Length) {
        let center = |p: Point| re.eval(p).value;
        out.push(nodal_length(&re_grid.value, g, Some(&center))?.length);
    }
    if cfg.has(Statistic::Count) {
        let (_, im_grid) = im.as_ref().expect("imaginary part sampled");
        out.push(count_singularities(&re_grid.value, &im_grid.value, g)?.count as f64);
    }
    let quad = || ctx.quad.as_ref().expect("chaos quadrature built");
    if cfg.has(Statistic::Chaos2) {
        let s = quad().second_chaos_length(&re, &re_grid)?;
        out.extend([s.interior, s.boundary, s.green_discrepancy()]);
        if let Some((w, grid)) = &im {
            let s_im = quad().second_chaos_length(w, grid)?;
            out.push(chaos::second_chaos_count(ctx.e, &s, &s_im));
        }
    }
    if cfg.has(Statistic::Chaos4) {
        let (_, im_grid) = im.as_ref().expect("imaginary part sampled");
        let n4 = quad().fourth_chaos_count(&re_grid, im_grid)?;
        out.push(n4.length_re.value);
        out.extend(n4.length_re.a);
        out.extend([n4.a_e, n4.a_e_hat, n4.b_e]);
        out.extend(n4.b);
        out.extend([n4.value, n4.identity_residual(ctx.e)]);
    }
    Ok(out)
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn sort_records(cfg: &ExperimentConfig, names: &[String], records: &mut [RunRecord]) {
    let key = |r: &RunRecord| {
        (
            cfg.energies.iter().position(|&e| e == r.energy),
            r.replication,
            names.iter().position(|n| *n == r.statistic),
        )
    };
    records.sort_by_key(key);
}

/// Runs every missing replication of `cfg` and returns all rows, sorted.
///
/// Rows are appended to the samples file as they complete; a later run with the
/// same config picks up from there. Replications that fail (grid budget,
/// resolution) are reported and skipped.
pub fn run_campaign(cfg: &ExperimentConfig, opts: RunOptions) -> Result<CampaignOutcome> {
    cfg.validate()?;
    let pool = build_pool(opts.workers)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = cfg.row_statistics();
    let samples = cfg.samples_path();
    let config_path = cfg.config_path();

    let mut kept: Vec<RunRecord> = Vec::new();
    let mut discarded_rows = 0;
    if opts.resume && samples.exists() {
        if config_path.exists() {
            let old = ExperimentConfig::from_path(&config_path)?;
            if !cfg.same_samples(&old) {
                return Err(Error::Config(format!(
                    "{} was written by a config with a different domain, grid, J or seed; \
                     remove it or change experiment_id",
                    samples.display()
                )));
            }
        }
        let rows = read_records_lenient(&samples)?;
        let mut by_rep: BTreeMap<(u64, u64), Vec<RunRecord>> = BTreeMap::new();
        for r in rows {
            let wanted = cfg.energies.contains(&r.energy)
                && (r.replication as usize) < cfg.replications
                && names.contains(&r.statistic);
            if !wanted {
                discarded_rows += 1;
                continue;
            }
            by_rep.entry((r.energy.to_bits(), r.replication)).or_default().push(r);
        }
        for (_, rows) in by_rep {
            let seen: HashSet<&str> = rows.iter().map(|r| r.statistic.as_str()).collect();
            if seen.len() == names.len() && rows.len() == names.len() {
                kept.extend(rows);
            } else {
                discarded_rows += rows.len();
            }
        }
    }
    sort_records(cfg, &names, &mut kept);
    write_records_file(&samples, &kept)?;
    let text = serde_json::to_string_pretty(cfg)?;
    fs::write(&config_path, text).map_err(|e| Error::io(&config_path, e))?;

    let done: HashSet<(u64, u64)> = kept
        .iter()
        .map(|r| (r.energy.to_bits(), r.replication))
        .collect();
    let reused = done.len();
    let mut failures = Vec::new();
    let mut computed = 0;
    let chunk = (4 * opts.workers).max(1);

    if !names.is_empty() {
        let file = OpenOptions::new()
            .append(true)
            .open(&samples)
            .map_err(|e| Error::io(&samples, e))?;
        let mut wr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(file));
        for &energy in &cfg.energies {
            let missing: Vec<u64> = (0..cfg.replications as u64)
                .filter(|r| !done.contains(&(energy.to_bits(), *r)))
                .collect();
            if missing.is_empty() {
                continue;
            }
            let ctx = match EnergyContext::new(cfg, energy) {
                Ok(c) => c,
                Err(err) => {
                    failures.extend(missing.iter().map(|&r| FailedReplication {
                        energy,
                        replication: r,
                        error: err.to_string(),
                    }));
                    continue;
                }
            };
            for reps in missing.chunks(chunk) {
                let results: Vec<(u64, Result<Vec<f64>>, u64)> = pool.install(|| {
                    reps.par_iter()
                        .map(|&r| {
                            let t0 = Instant::now();
                            let v = replicate(cfg, &ctx, r);
                            (r, v, t0.elapsed().as_millis() as u64)
                        })
                        .collect()
                });
                for (r, res, wall_ms) in results {
                    match res {
                        Ok(values) => {
                            for (name, value) in names.iter().zip(values) {
                                let rec = RunRecord {
                                    experiment_id: cfg.experiment_id.clone(),
                                    energy,
                                    statistic: name.clone(),
                                    replication: r,
                                    seed_stream: 2 * r,
                                    value,
                                    grid_h: ctx.grid.h,
                                    j: cfg.j,
                                    wall_ms,
                                };
                                wr.serialize(&rec).map_err(|e| Error::csv(&samples, e))?;
                            }
                            computed += 1;
                        }
                        Err(err) => failures.push(FailedReplication {
                            energy,
                            replication: r,
                            error: err.to_string(),
                        }),
                    }
                }
                wr.flush().map_err(|e| Error::io(&samples, e))?;
            }
        }
    }

    let mut records = read_records(&samples)?;
    sort_records(cfg, &names, &mut records);
    write_records_file(&samples, &records)?;
    Ok(CampaignOutcome {
        records,
        failures,
        computed,
        reused,
        discarded_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSummary {
    #[serde(rename = "E")]
    pub energy: f64,
    pub statistic: String,
    pub stats: SummaryStats,
    /// Exact mean where one is known (Kac-Rice, or zero for chaos projections).
    pub predicted_mean: Option<f64>,
    /// Leading-order variance growth where one is known.
    pub predicted_variance: Option<f64>,
    pub variance_ratio: Option<f64>,
    pub clt: Option<CltReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KacRiceSummary {
    #[serde(rename = "E")]
    pub energy: f64,
    pub mean_length: f64,
    pub variance_length: f64,
    pub refinement_change: f64,
    pub mean_count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionSummary {
    #[serde(rename = "E")]
    pub energy: f64,
    pub predicted: FourthVariances,
    pub asymptotic: FourthVariances,
    pub a_min_relative_eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosResidual {
    #[serde(rename = "E")]
    pub energy: f64,
    pub length_variance: f64,
    /// Sample variance of `L - E[L] - L[2] - L[4]`.
    pub length_residual_variance: f64,
    pub count_variance: Option<f64>,
    pub count_residual_variance: Option<f64>,
}

/// A pass/fail band stated alongside the value it was applied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub name: String,
    #[serde(rename = "E")]
    pub energy: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
}

impl BandCheck {
    pub fn new(name: &str, energy: f64, value: f64, lower: f64, upper: f64) -> Self {
        BandCheck {
            name: name.to_string(),
            energy,
            value,
            lower,
            upper,
            passed: value >= lower && value <= upper,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub experiment_id: String,
    pub config: ExperimentConfig,
    pub summaries: Vec<StatisticSummary>,
    pub kac_rice: Vec<KacRiceSummary>,
    pub predictions: Vec<PredictionSummary>,
    pub chaos_residuals: Vec<ChaosResidual>,
    pub checks: Vec<BandCheck>,
    pub failures: Vec<FailedReplication>,
    #[serde(skip)]
    pub tables: Vec<CovarianceTable>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self, energy: f64, statistic: &str) -> Option<&StatisticSummary> {
        self.summaries
            .iter()
            .find(|s| s.energy == energy && s.statistic == statistic)
    }
}

fn predicted_mean(cfg: &ExperimentConfig, e: EnergyLevel, stat: &str) -> Option<f64> {
    match stat {
        "length" => Some(kac_rice_mean(e, &cfg.domain, NodalStatistic::Length)),
        "count" => Some(kac_rice_mean(e, &cfg.domain, NodalStatistic::Count)),
        "green_discrepancy" | "identity_residual" => None,
        _ => Some(0.0),
    }
}

fn predicted_variance(asym: &FourthVariances, stat: &str) -> Option<f64> {
    match stat {
        "length" | "chaos4_length" => Some(asym.length),
        "count" | "chaos4_count" => Some(asym.count),
        "a_e" | "a_e_hat" => Some(asym.a_e),
        "b_e" => Some(asym.b_e),
        _ => None,
    }
}

/// Values of one row statistic at one energy, by replication.
pub fn values_of(records: &[RunRecord], energy: f64, statistic: &str) -> Vec<f64> {
    let mut rows: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.energy == energy && r.statistic == statistic)
        .collect();
    rows.sort_by_key(|r| r.replication);
    rows.iter().map(|r| r.value).collect()
}

// values of `a` and `b` on the replications where both exist
fn paired(records: &[RunRecord], energy: f64, names: &[&str]) -> Vec<Vec<f64>> {
    let mut by_rep: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.energy == energy) {
        if let Some(k) = names.iter().position(|n| *n == r.statistic) {
            by_rep.entry(r.replication).or_insert_with(|| vec![None; names.len()])[k] = Some(r.value);
        }
    }
    let full: Vec<Vec<f64>> = by_rep
        .into_values()
        .filter_map(|v| v.into_iter().collect::<Option<Vec<f64>>>())
        .collect();
    (0..names.len()).map(|k| full.iter().map(|v| v[k]).collect()).collect()
}

/// Summaries, band checks and (if requested) Kac-Rice and table predictions.
pub fn summarize(
    cfg: &ExperimentConfig,
    records: &[RunRecord],
    failures: &[FailedReplication],
) -> Result<CampaignReport> {
    cfg.validate()?;
    let names = cfg.row_statistics();
    let area = cfg.domain.area();
    let mut summaries = Vec::new();
    let mut checks = Vec::new();
    let mut kac_rice = Vec::new();
    let mut predictions = Vec::new();
    let mut chaos_residuals = Vec::new();
    let mut tables = Vec::new();

    for &energy in &cfg.energies {
        let e = EnergyLevel::new(energy)?;
        let asym = FourthVariances::asymptotic(energy, area);
        for name in &names {
            let xs = values_of(records, energy, name);
            if xs.len() < 2 {
                continue;
            }
            let stats = SummaryStats::from_samples(&xs)?;
            let pm = predicted_mean(cfg, e, name);
            let pv = predicted_variance(&asym, name);
            let clt = if (name == "length" || name == "count") && xs.len() >= CLT_MIN_SAMPLES {
                Some(clt_diagnostics(&xs, cfg.clt_bands)?)
            } else {
                None
            };
            if let (Some(m), true) = (pm, name == "length" || name == "count") {
                if xs.len() >= MIN_VARIANCE_SAMPLES {
                    let w = SE_BAND * stats.mean_se;
                    checks.push(BandCheck::new(&format!("mean_{name}"), energy, stats.mean - m, -w, w));
                }
            }
            if let Some(c) = &clt {
                let b = c.bands;
                let s = c.stats;
                checks.push(BandCheck::new(
                    &format!("clt_skewness_{name}"),
                    energy,
                    s.skewness,
                    -b.max_abs_skewness,
                    b.max_abs_skewness,
                ));
                checks.push(BandCheck::new(
                    &format!("clt_excess_kurtosis_{name}"),
                    energy,
                    s.excess_kurtosis,
                    -b.max_abs_excess_kurtosis,
                    b.max_abs_excess_kurtosis,
                ));
                checks.push(BandCheck::new(&format!("clt_ks_{name}"), energy, s.ks_distance, 0.0, b.max_ks));
            }
            if name == "green_discrepancy" {
                let worst = xs.iter().copied().fold(0.0, f64::max);
                checks.push(BandCheck::new("green_identity", energy, worst, 0.0, GREEN_TOLERANCE));
            }
            if name == "identity_residual" {
                let worst = xs.iter().copied().fold(0.0, f64::max);
                checks.push(BandCheck::new("chaos4_identity", energy, worst, 0.0, IDENTITY_TOLERANCE));
            }
            summaries.push(StatisticSummary {
                energy,
                statistic: name.clone(),
                stats,
                predicted_mean: pm,
                predicted_variance: pv,
                variance_ratio: pv.map(|p| stats.variance / p),
                clt,
            });
        }

        if cfg.has(Statistic::Chaos2) && cfg.has(Statistic::Chaos4) && cfg.has(Statistic::Length) {
            let v = paired(records, energy, &["length", "chaos2_boundary", "chaos4_length"]);
            if v[0].len() >= chaos::RESIDUAL_MIN_SAMPLES {
                let m = chaos::mean_length(area, e);
                let length_residual_variance = chaos::residual_variance(&v[0], m, &v[1], &v[2])?;
                let (count_variance, count_residual_variance) = if cfg.has(Statistic::Count) {
                    let c = paired(records, energy, &["count", "chaos2_count", "chaos4_count"]);
                    let m = chaos::mean_count(area, e);
                    let rv = chaos::residual_variance(&c[0], m, &c[1], &c[2])?;
                    (Some(SummaryStats::from_samples(&c[0])?.variance), Some(rv))
                } else {
                    (None, None)
                };
                chaos_residuals.push(ChaosResidual {
                    energy,
                    length_variance: SummaryStats::from_samples(&v[0])?.variance,
                    length_residual_variance,
                    count_variance,
                    count_residual_variance,
                });
            }
        }

        if cfg.has(Statistic::Kacrice) {
            let kr = kac_rice_variance_length(e, &cfg.domain)?;
            let summary = KacRiceSummary {
                energy,
                mean_length: kr.mean,
                variance_length: kr.variance,
                refinement_change: kr.refinement_change,
                mean_count: kac_rice_mean(e, &cfg.domain, NodalStatistic::Count),
            };
            let xs = values_of(records, energy, "length");
            if cfg.has(Statistic::Length) && xs.len() >= MIN_VARIANCE_SAMPLES {
                let s = SummaryStats::from_samples(&xs)?;
                let w = SE_BAND * (s.variance_se.powi(2) + kr.refinement_change.powi(2)).sqrt();
                checks.push(BandCheck::new(
                    "kacrice_variance_length",
                    energy,
                    s.variance - kr.variance,
                    -w,
                    w,
                ));
            }
            kac_rice.push(summary);
        }

        if cfg.has(Statistic::Table) {
            let table = appendix_b_table(e, &cfg.domain)?;
            predictions.push(PredictionSummary {
                energy,
                predicted: table.fourth_variances(),
                asymptotic: asym,
                a_min_relative_eigenvalue: table.a_min_relative_eigenvalue(),
            });
            tables.push(table);
        }
    }

    Ok(CampaignReport {
        schema_version: SCHEMA_VERSION,
        experiment_id: cfg.experiment_id.clone(),
        config: cfg.clone(),
        summaries,
        kac_rice,
        predictions,
        chaos_residuals,
        checks,
        failures: failures.to_vec(),
        tables,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    experiment_id: &'a str,
    #[serde(rename = "E")]
    energy: f64,
    statistic: &'a str,
    n: usize,
    mean: f64,
    mean_se: f64,
    variance: f64,
    variance_se: f64,
    skewness: f64,
    excess_kurtosis: f64,
    ks_distance: f64,
    predicted_mean: Option<f64>,
    predicted_variance: Option<f64>,
    variance_ratio: Option<f64>,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    experiment_id: &'a str,
    statistic: &'a str,
    #[serde(rename = "E")]
    energy: f64,
    log_e: f64,
    variance: f64,
    variance_se: f64,
    predicted_variance: Option<f64>,
    ratio: Option<f64>,
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        wr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

fn plot_rows(report: &CampaignReport) -> Vec<PlotRow<'_>> {
    let id = report.experiment_id.as_str();
    let mut rows: Vec<PlotRow> = report
        .summaries
        .iter()
        .filter(|s| s.predicted_variance.is_some())
        .map(|s| PlotRow {
            experiment_id: id,
            statistic: &s.statistic,
            energy: s.energy,
            log_e: s.energy.ln(),
            variance: s.stats.variance,
            variance_se: s.stats.variance_se,
            predicted_variance: s.predicted_variance,
            ratio: s.variance_ratio,
        })
        .collect();
    let area = report.config.domain.area();
    for k in &report.kac_rice {
        let p = FourthVariances::asymptotic(k.energy, area).length;
        rows.push(PlotRow {
            experiment_id: id,
            statistic: "kacrice_length",
            energy: k.energy,
            log_e: k.energy.ln(),
            variance: k.variance_length,
            variance_se: k.refinement_change,
            predicted_variance: Some(p),
            ratio: Some(k.variance_length / p),
        });
    }
    for p in &report.predictions {
        for (name, v, a) in [
            ("predicted_chaos4_length", p.predicted.length, p.asymptotic.length),
            ("predicted_a_e", p.predicted.a_e, p.asymptotic.a_e),
            ("predicted_b_e", p.predicted.b_e, p.asymptotic.b_e),
            ("predicted_chaos4_count", p.predicted.count, p.asymptotic.count),
        ] {
            rows.push(PlotRow {
                experiment_id: id,
                statistic: name,
                energy: p.energy,
                log_e: p.energy.ln(),
                variance: v,
                variance_se: 0.0,
                predicted_variance: Some(a),
                ratio: Some(v / a),
            });
        }
    }
    rows
}

/// Writes the summary (JSON or CSV), band checks, plot data and appendix tables.
pub fn emit_results(cfg: &ExperimentConfig, report: &CampaignReport, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let summary = cfg.report_path(format);
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(report)?;
            fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;
        }
        ReportFormat::Csv => {
            let rows: Vec<SummaryRow> = report
                .summaries
                .iter()
                .map(|s| SummaryRow {
                    experiment_id: &report.experiment_id,
                    energy: s.energy,
                    statistic: &s.statistic,
                    n: s.stats.n,
                    mean: s.stats.mean,
                    mean_se: s.stats.mean_se,
                    variance: s.stats.variance,
                    variance_se: s.stats.variance_se,
                    skewness: s.stats.skewness,
                    excess_kurtosis: s.stats.excess_kurtosis,
                    ks_distance: s.stats.ks_distance,
                    predicted_mean: s.predicted_mean,
                    predicted_variance: s.predicted_variance,
                    variance_ratio: s.variance_ratio,
                })
                .collect();
            write_csv_rows(&summary, &rows)?;
            let checks = cfg.checks_path();
            write_csv_rows(&checks, &report.checks)?;
            written.push(checks);
        }
    }
    written.insert(0, summary);
    let plot = cfg.plot_path();
    write_csv_rows(&plot, &plot_rows(report))?;
    written.push(plot);
    for t in &report.tables {
        let path = cfg.appendix_path(t.energy);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        t.write_csv(BufWriter::new(f))?;
        written.push(path);
    }
    Ok(written)
}

/// Setup for comparing `L_E(D)` with the rescaled unit-wavenumber length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub energy: f64,
    pub domain: Domain,
    pub j: usize,
    pub direction_sampling: DirectionSampling,
    pub points_per_wavelength: f64,
    pub replications: usize,
    pub seed: u64,
    /// Master seed of the rescaled sample; equal to `seed` gives a paired comparison.
    pub seed_scaled: u64,
}

impl ScalingConfig {
    pub fn new(energy: f64, replications: usize, seed: u64) -> Self {
        ScalingConfig {
            energy,
            domain: Domain::unit_square(),
            j: DEFAULT_J,
            direction_sampling: DirectionSampling::default(),
            points_per_wavelength: default_ppw(),
            replications,
            seed,
            seed_scaled: seed.wrapping_add(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    #[serde(rename = "E")]
    pub energy: f64,
    /// `2 pi sqrt(E)`.
    pub scale: f64,
    pub direct: SummaryStats,
    pub scaled: SummaryStats,
    pub mean_check: BandCheck,
    pub variance_check: BandCheck,
}

impl ScalingReport {
    pub fn passed(&self) -> bool {
        self.mean_check.passed && self.variance_check.passed
    }
}

fn lengths(
    e: EnergyLevel,
    domain: Domain,
    cfg: &ScalingConfig,
    seed: u64,
    factor: f64,
) -> Result<Vec<f64>> {
    let g = GridSpec::new(domain, e.e(), cfg.points_per_wavelength)?;
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| {
            let w = sample_wave_stream(e, cfg.j, seed, 2 * r, cfg.direction_sampling)?;
            let f = w.eval_grid(&g)?;
            let center = |p: Point| w.eval(p).value;
            Ok(nodal_length(&f.value, &g, Some(&center))?.length / factor)
        })
        .collect()
}

/// Two-sample comparison of `L_E(D)` with `length(b^{-1}(0) in 2 pi sqrt(E) D) / (2 pi sqrt(E))`,
/// `b` the unit-wavenumber field.
pub fn scaling_check(cfg: &ScalingConfig, workers: usize) -> Result<ScalingReport> {
    if cfg.replications < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: cfg.replications,
        });
    }
    let pool = build_pool(workers)?;
    let e = EnergyLevel::new(cfg.energy)?;
    let scale = 2.0 * PI * cfg.energy.sqrt();
    let unit = EnergyLevel::new(1.0 / (4.0 * PI * PI))?;
    let big = cfg.domain.scaled(scale)?;
    let (a, b) = pool.install(|| -> Result<_> {
        Ok((
            lengths(e, cfg.domain, cfg, cfg.seed, 1.0)?,
            lengths(unit, big, cfg, cfg.seed_scaled, scale)?,
        ))
    })?;
    let direct = SummaryStats::from_samples(&a)?;
    let scaled = SummaryStats::from_samples(&b)?;
    let wm = SE_BAND * (direct.mean_se.powi(2) + scaled.mean_se.powi(2)).sqrt();
    let wv = SE_BAND * (direct.variance_se.powi(2) + scaled.variance_se.powi(2)).sqrt();
    Ok(ScalingReport {
        energy: cfg.energy,
        scale,
        direct,
        scaled,
        mean_check: BandCheck::new("scaling_mean", cfg.energy, direct.mean - scaled.mean, -wm, wm),
        variance_check: BandCheck::new(
            "scaling_variance",
            cfg.energy,
            direct.variance - scaled.variance,
            -wv,
            wv,
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub lag: [f64; 2],
    pub empirical: f64,
    pub std_error: f64,
    pub analytic: f64,
    /// `(empirical - analytic) / std_error`.
    pub z: f64,
    pub passed: bool,
}

/// Monte Carlo covariance at each lag against `J0(k |lag|)`, band `COVARIANCE_SE_BAND` SE.
pub fn covariance_test(
    e: EnergyLevel,
    j: usize,
    n_samples: usize,
    lags: &[[f64; 2]],
    seed: u64,
    workers: usize,
) -> Result<Vec<CovarianceCheck>> {
    let pool = build_pool(workers)?;
    let est = pool.install(|| empirical_covariance(e, j, n_samples, lags, seed))?;
    let kernel = CovKernel::new(e);
    Ok(est
        .into_iter()
        .map(|l| {
            let analytic = kernel.kernel(l.lag);
            let z = (l.mean - analytic) / l.std_error;
            CovarianceCheck {
                lag: l.lag,
                empirical: l.mean,
                std_error: l.std_error,
                analytic,
                z,
                passed: z.abs() <= COVARIANCE_SE_BAND,
            }
        })
        .collect())
}
