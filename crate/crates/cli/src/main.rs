use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use berrywave::covariance::EnergyLevel;
use berrywave::experiment::{
    covariance_test, emit_results, run_campaign, summarize, BandCheck, ExperimentConfig,
    ReportFormat, RunOptions, ScalingConfig,
};
use berrywave::geometry::Domain;
use berrywave::synthesis::{DirectionSampling, DEFAULT_J};
use berrywave::variance_engine::{
    appendix_b_table, kac_rice_mean, kac_rice_variance_length, FourthVariances, NodalStatistic,
};

/// Band on predicted/asymptotic fourth-chaos variances.
const PREDICT_BAND: (f64, f64) = (0.7, 1.3);

#[derive(Parser)]
#[command(name = "berrywave", version, about = "Random plane-wave nodal statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign from a JSON config.
    Simulate(SimulateArgs),
    /// Covariance table and fourth-chaos variance predictions.
    Predict(ModelArgs),
    /// Kac-Rice mean and variance of the nodal length.
    Kacrice(ModelArgs),
    /// Monte Carlo covariance against J0.
    Covtest(CovtestArgs),
    /// Scaling identity between energy E and the unit-wavenumber field.
    Scalingcheck(ScalingArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "BERRYWAVE_WORKERS")]
    workers: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

impl Common {
    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Recompute every replication instead of reusing the samples file.
    #[arg(long)]
    fresh: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DomainArgs {
    /// Rectangle width (default 1).
    #[arg(long, conflicts_with = "radius")]
    width: Option<f64>,
    /// Rectangle height (default: the width).
    #[arg(long, conflicts_with = "radius")]
    height: Option<f64>,
    /// Disk radius.
    #[arg(long)]
    radius: Option<f64>,
}

impl DomainArgs {
    fn domain(&self) -> Result<Domain> {
        Ok(match self.radius {
            Some(r) => Domain::disk(r)?,
            None => {
                let w = self.width.unwrap_or(1.0);
                Domain::rect(w, self.height.unwrap_or(w))?
            }
        })
    }

    fn given(&self) -> bool {
        self.width.is_some() || self.height.is_some() || self.radius.is_some()
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Energy levels; taken from the config when omitted.
    #[arg(long = "energy", num_args = 1..)]
    energies: Vec<f64>,
    /// Config supplying the energies and domain.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    domain: DomainArgs,
    #[command(flatten)]
    common: Common,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(Vec<f64>, Domain)> {
        let cfg = self
            .config
            .as_deref()
            .map(ExperimentConfig::from_path)
            .transpose()?;
        let energies = match (&cfg, self.energies.is_empty()) {
            (_, false) => self.energies.clone(),
            (Some(c), true) => c.energies.clone(),
            (None, true) => bail!("give --energy or --config"),
        };
        let domain = match &cfg {
            Some(c) if !self.domain.given() => c.domain,
            _ => self.domain.domain()?,
        };
        Ok((energies, domain))
    }
}

#[derive(Args)]
struct CovtestArgs {
    #[arg(long, default_value_t = 1.0)]
    energy: f64,
    #[arg(long, default_value_t = DEFAULT_J)]
    j: usize,
    /// Monte Carlo samples.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Lags as `x,y`; defaults to a spread of fractions of a wavelength.
    #[arg(long = "lag", value_parser = parse_lag)]
    lags: Vec<[f64; 2]>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, default_value_t = 4.0)]
    energy: f64,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_J)]
    j: usize,
    #[arg(long, default_value_t = 16.0)]
    points_per_wavelength: f64,
    /// Use the same seed for both samples (paired comparison).
    #[arg(long)]
    paired: bool,
    #[command(flatten)]
    domain: DomainArgs,
    #[command(flatten)]
    common: Common,
}

fn parse_lag(s: &str) -> std::result::Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok([p(x)?, p(y)?])
}

fn emit<T: Serialize>(rows: &[T], format: Format, file: Option<&Path>) -> Result<()> {
    let text = match format {
        Format::Json => serde_json::to_string_pretty(rows)? + "\n",
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(Vec::new());
            for r in rows {
                wr.serialize(r)?;
            }
            String::from_utf8(wr.into_inner()?)?
        }
    };
    print!("{text}");
    if let Some(path) = file {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn out_file(common: &Common, stem: &str) -> Result<Option<PathBuf>> {
    let Some(dir) = &common.out else {
        return Ok(None);
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let ext = match common.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    Ok(Some(dir.join(format!("{stem}.{ext}"))))
}

fn report_checks(checks: &[BandCheck]) -> bool {
    let mut ok = true;
    for c in checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        eprintln!(
            "{tag} {} E={} value={:.6e} band=[{:.6e}, {:.6e}]",
            c.name, c.energy, c.value, c.lower, c.upper
        );
        ok &= c.passed;
    }
    ok
}

fn simulate(args: &SimulateArgs) -> Result<bool> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(dir) = &args.common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    let opts = RunOptions {
        workers: args.common.workers(),
        resume: !args.fresh,
    };
    let outcome = run_campaign(&cfg, opts)?;
    eprintln!(
        "{} replications computed, {} reused, {} failed",
        outcome.computed,
        outcome.reused,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("failed: E={} replication={}: {}", f.energy, f.replication, f.error);
    }
    let report = summarize(&cfg, &outcome.records, &outcome.failures)?;
    for path in emit_results(&cfg, &report, args.common.format.into())? {
        eprintln!("wrote {}", path.display());
    }
    Ok(report_checks(&report.checks))
}

#[derive(Serialize)]
struct Prediction {
    #[serde(rename = "E")]
    energy: f64,
    quantity: &'static str,
    predicted: f64,
    asymptotic: f64,
    ratio: f64,
}

fn predict(args: &ModelArgs) -> Result<bool> {
    let (energies, domain) = args.resolve()?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for e in energies {
        let table = appendix_b_table(EnergyLevel::new(e)?, &domain)?;
        if let Some(dir) = &args.common.out {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("appendix_E{e}.csv"));
            table.write_csv(fs::File::create(&path)?)?;
            eprintln!("wrote {}", path.display());
        }
        let p = table.fourth_variances();
        let a = FourthVariances::asymptotic(e, domain.area());
        for (quantity, predicted, asymptotic) in [
            ("chaos4_length", p.length, a.length),
            ("a_e", p.a_e, a.a_e),
            ("b_e", p.b_e, a.b_e),
            ("chaos4_count", p.count, a.count),
        ] {
            let ratio = predicted / asymptotic;
            rows.push(Prediction {
                energy: e,
                quantity,
                predicted,
                asymptotic,
                ratio,
            });
            checks.push(BandCheck::new(quantity, e, ratio, PREDICT_BAND.0, PREDICT_BAND.1));
        }
        checks.push(BandCheck::new(
            "a_block_min_relative_eigenvalue",
            e,
            table.a_min_relative_eigenvalue(),
            0.0,
            1.0,
        ));
    }
    emit(&rows, args.common.format, out_file(&args.common, "predict")?.as_deref())?;
    Ok(report_checks(&checks))
}

#[derive(Serialize)]
struct KacRiceRow {
    #[serde(rename = "E")]
    energy: f64,
    mean_length: f64,
    variance_length: f64,
    diagonal_patch: f64,
    refinement_change: f64,
    mean_count: f64,
    asymptotic_variance_length: f64,
}

fn kacrice(args: &ModelArgs) -> Result<bool> {
    let (energies, domain) = args.resolve()?;
    let mut rows = Vec::new();
    for e in energies {
        let level = EnergyLevel::new(e)?;
        let kr = kac_rice_variance_length(level, &domain)?;
        rows.push(KacRiceRow {
            energy: e,
            mean_length: kr.mean,
            variance_length: kr.variance,
            diagonal_patch: kr.diagonal_patch,
            refinement_change: kr.refinement_change,
            mean_count: kac_rice_mean(level, &domain, NodalStatistic::Count),
            asymptotic_variance_length: FourthVariances::asymptotic(e, domain.area()).length,
        });
    }
    emit(&rows, args.common.format, out_file(&args.common, "kacrice")?.as_deref())?;
    Ok(true)
}

#[derive(Serialize)]
struct CovRow {
    lag_x: f64,
    lag_y: f64,
    empirical: f64,
    std_error: f64,
    analytic: f64,
    z: f64,
    passed: bool,
}

fn covtest(args: &CovtestArgs) -> Result<bool> {
    let e = EnergyLevel::new(args.energy)?;
    let lags = if args.lags.is_empty() {
        let w = e.wavelength();
        [0.0, 0.125, 0.25, 0.383, 0.5, 0.75, 1.0, 1.5]
            .iter()
            .map(|f| [f * w, 0.0])
            .chain([[0.3 * w, 0.4 * w]])
            .collect()
    } else {
        args.lags.clone()
    };
    let checks = covariance_test(
        e,
        args.j,
        args.n,
        &lags,
        args.common.seed.unwrap_or(1),
        args.common.workers(),
    )?;
    let rows: Vec<CovRow> = checks
        .iter()
        .map(|c| CovRow {
            lag_x: c.lag[0],
            lag_y: c.lag[1],
            empirical: c.empirical,
            std_error: c.std_error,
            analytic: c.analytic,
            z: c.z,
            passed: c.passed,
        })
        .collect();
    emit(&rows, args.common.format, out_file(&args.common, "covtest")?.as_deref())?;
    Ok(checks.iter().all(|c| c.passed))
}

fn scalingcheck(args: &ScalingArgs) -> Result<bool> {
    let seed = args.common.seed.unwrap_or(1);
    let cfg = ScalingConfig {
        energy: args.energy,
        domain: args.domain.domain()?,
        j: args.j,
        direction_sampling: DirectionSampling::default(),
        points_per_wavelength: args.points_per_wavelength,
        replications: args.n,
        seed,
        seed_scaled: if args.paired { seed } else { seed.wrapping_add(1) },
    };
    let report = berrywave::experiment::scaling_check(&cfg, args.common.workers())?;
    let out = out_file(&args.common, "scalingcheck")?;
    match args.common.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&report)? + "\n";
            print!("{text}");
            if let Some(p) = out {
                fs::write(&p, text)?;
            }
        }
        Format::Csv => emit(
            &[report.mean_check.clone(), report.variance_check.clone()],
            Format::Csv,
            out.as_deref(),
        )?,
    }
    Ok(report_checks(&[report.mean_check, report.variance_check]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Predict(a) => predict(a),
        Command::Kacrice(a) => kacrice(a),
        Command::Covtest(a) => covtest(a),
        Command::Scalingcheck(a) => scalingcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
