//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Monte Carlo campaigns are cached under `BERRYWAVE_ACCEPTANCE_DIR` (default
//! `target/acceptance`) and resumed on later runs. The first run of the variance
//! sweep takes a few CPU-hours.

use std::f64::consts::{PI, SQRT_2};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use berrywave::covariance::{Axis, CovKernel, EnergyLevel};
use berrywave::experiment::{
    run_campaign, scaling_check, values_of, ExperimentConfig, RunOptions, RunRecord, ScalingConfig,
    Statistic,
};
use berrywave::geometry::Domain;
use berrywave::special_fn::{bessel_j, BesselOrder};
use berrywave::stats::{clt_diagnostics, CltBands, SummaryStats};
use berrywave::synthesis::stream_rng;
use berrywave::variance_engine::{
    appendix_b_table, kac_rice_mean, kac_rice_variance_length, FourthVariances, NodalStatistic,
};
use num_bigint::{BigInt, Sign};
use rand::Rng;

/// Criteria whose bands are not reached at the energies of this suite.
const KNOWN_RED: &[u8] = &[3, 4, 5, 8];

const SE_BAND: f64 = 3.0;
const MEAN_REL_BAND: f64 = 0.02;
const RATIO_BAND: (f64, f64) = (0.7, 1.3);
const GREEN_TOL: f64 = 1e-4;
const IDENTITY_TOL: f64 = 1e-12;
const BESSEL_TOL: f64 = 1e-12;
const FD_TOL: f64 = 1e-5;
const CLT_N: u64 = 1000;
const SWEEP: [f64; 3] = [1e2, 1e3, 1e4];
const SWEEP_N: usize = 2000;

struct Outcome {
    id: u8,
    title: &'static str,
    passed: bool,
    lines: Vec<String>,
}

fn dir() -> PathBuf {
    std::env::var_os("BERRYWAVE_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../target/acceptance")))
}

fn workers() -> usize {
    std::env::var("BERRYWAVE_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn campaign(id: &str, energies: Vec<f64>, n: usize, seed: u64, stats: Vec<Statistic>) -> Vec<RunRecord> {
    let mut cfg = ExperimentConfig::new(id, energies, n, seed, stats);
    cfg.output.dir = dir();
    let out = run_campaign(
        &cfg,
        RunOptions {
            workers: workers(),
            resume: true,
        },
    )
    .unwrap_or_else(|e| panic!("campaign {id}: {e}"));
    assert!(out.failures.is_empty(), "campaign {id}: {:?}", out.failures);
    out.records
}

fn sweep() -> Vec<RunRecord> {
    campaign(
        "variance_sweep",
        SWEEP.to_vec(),
        SWEEP_N,
        1018,
        vec![Statistic::Length, Statistic::Count],
    )
}

fn stats(xs: &[f64]) -> SummaryStats {
    SummaryStats::from_samples(xs).unwrap()
}

fn mean_criteria() -> Vec<Outcome> {
    let recs = campaign("mean_e25", vec![25.0], 500, 25, vec![Statistic::Length, Statistic::Count]);
    let area = 1.0;
    let mut out = Vec::new();

    let s = stats(&values_of(&recs, 25.0, "length"));
    let target = area * PI * 5.0 / SQRT_2;
    let diff = s.mean - target;
    let rel = diff.abs() / target;
    out.push(Outcome {
        id: 1,
        title: "mean nodal length at E = 25",
        passed: diff.abs() <= SE_BAND * s.mean_se && rel <= MEAN_REL_BAND,
        lines: vec![format!(
            "mean {:.5} +- {:.5} (n = {}), target {target:.5}; |diff| {:.5} <= {SE_BAND} SE = {:.5}; relative {:.4} <= {MEAN_REL_BAND}",
            s.mean,
            s.mean_se,
            s.n,
            diff.abs(),
            SE_BAND * s.mean_se,
            rel
        )],
    });

    let s = stats(&values_of(&recs, 25.0, "count"));
    let target = area * PI * 25.0;
    let diff = s.mean - target;
    out.push(Outcome {
        id: 2,
        title: "mean singularity count at E = 25",
        passed: diff.abs() <= SE_BAND * s.mean_se,
        lines: vec![format!(
            "mean {:.4} +- {:.4} (n = {}), target {target:.4}; |diff| {:.4} <= {SE_BAND} SE = {:.4}",
            s.mean,
            s.mean_se,
            s.n,
            diff.abs(),
            SE_BAND * s.mean_se
        )],
    });
    out
}

fn variance_law(recs: &[RunRecord], id: u8, stat: &str, asym: impl Fn(f64) -> f64) -> Outcome {
    let mut lines = Vec::new();
    let mut ratios = Vec::new();
    for e in SWEEP {
        let s = stats(&values_of(recs, e, stat));
        let a = asym(e);
        let r = s.variance / a;
        lines.push(format!(
            "E = {e:>7}: Var {:.6e} +- {:.2e} (n = {}), leading term {a:.6e}, ratio {r:.4} +- {:.4}",
            s.variance,
            s.variance_se,
            s.n,
            s.variance_se / a
        ));
        ratios.push(r);
    }
    let last = ratios[ratios.len() - 1];
    let in_band = (RATIO_BAND.0..=RATIO_BAND.1).contains(&last);
    let closer = (last - 1.0).abs() < (ratios[0] - 1.0).abs();
    lines.push(format!(
        "ratio at 1e4 in [{}, {}]: {in_band}; closer to 1 than at 1e2: {closer}",
        RATIO_BAND.0, RATIO_BAND.1
    ));
    Outcome {
        id,
        title: if stat == "length" {
            "variance law for the nodal length"
        } else {
            "variance law for the singularity count"
        },
        passed: in_band && closer,
        lines,
    }
}

fn table_criteria() -> Vec<Outcome> {
    let d = Domain::unit_square();
    let tables: Vec<_> = SWEEP
        .iter()
        .map(|&e| appendix_b_table(EnergyLevel::new(e).unwrap(), &d).unwrap())
        .collect();
    let area = d.area();
    let last = &tables[2];
    let mut lines = Vec::new();
    let mut all_in = true;
    let mut all_monotone = true;
    let mut worst: (f64, String) = (1.0, String::new());
    for (k, entry) in last.entries.iter().enumerate() {
        let r: Vec<f64> = tables.iter().map(|t| t.entries[k].ratio_to_derived(area)).collect();
        let inside = (RATIO_BAND.0..=RATIO_BAND.1).contains(&r[2]);
        let monotone = (r[1] - 1.0).abs() < (r[0] - 1.0).abs() && (r[2] - 1.0).abs() < (r[1] - 1.0).abs();
        all_in &= inside;
        all_monotone &= monotone;
        if (r[2] - 1.0).abs() > (worst.0 - 1.0).abs() {
            worst = (r[2], entry.label());
        }
        if !inside || !monotone {
            lines.push(format!(
                "{:<14} ratios {:.3} {:.3} {:.3}{}",
                entry.label(),
                r[0],
                r[1],
                r[2],
                if inside { "" } else { "  outside band at 1e4" }
            ));
        }
    }
    let outside = lines.iter().filter(|l| l.ends_with("1e4")).count();
    lines.push(format!(
        "{} entries; {outside} outside [{}, {}] at 1e4 (worst {} at {:.3}); monotone improvement: {all_monotone}",
        last.entries.len(),
        RATIO_BAND.0,
        RATIO_BAND.1,
        worst.1,
        worst.0
    ));
    let c5 = Outcome {
        id: 5,
        title: "covariance table against leading constants",
        passed: all_in && all_monotone,
        lines,
    };

    let p = last.fourth_variances();
    let a = FourthVariances::asymptotic(last.energy, area);
    let checks = [
        ("Var L[4]", p.length, a.length),
        ("Var b_E", p.b_e, a.b_e),
        ("2 Var a_E", 2.0 * p.a_e, 2.0 * a.a_e),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, v, lead) in checks {
        let r = v / lead;
        let inside = (RATIO_BAND.0..=RATIO_BAND.1).contains(&r);
        ok &= inside;
        lines.push(format!("{name:<10} at E = 1e4: {v:.6e} vs {lead:.6e}, ratio {r:.4}"));
    }
    let c6 = Outcome {
        id: 6,
        title: "combined fourth-chaos constants",
        passed: ok,
        lines,
    };
    vec![c5, c6]
}

fn identity_criterion() -> Outcome {
    let recs = campaign(
        "chaos_identities",
        vec![100.0],
        100,
        7,
        vec![Statistic::Chaos2, Statistic::Chaos4],
    );
    let green = values_of(&recs, 100.0, "green_discrepancy");
    let ident = values_of(&recs, 100.0, "identity_residual");
    let gmax = green.iter().copied().fold(0.0, f64::max);
    let imax = ident.iter().copied().fold(0.0, f64::max);
    let gfail = green.iter().filter(|g| **g > GREEN_TOL).count();
    let ifail = ident.iter().filter(|g| **g > IDENTITY_TOL).count();
    Outcome {
        id: 7,
        title: "Green identity and a_E identity per realisation",
        passed: green.len() == 100 && ident.len() == 100 && gfail == 0 && ifail == 0,
        lines: vec![
            format!(
                "{} realisations at E = 100: max relative Green discrepancy {gmax:.3e} <= {GREEN_TOL:e} ({gfail} over)",
                green.len()
            ),
            format!("max relative |a_E - sqrt(2E) L[4]| {imax:.3e} <= {IDENTITY_TOL:e} ({ifail} over)"),
        ],
    }
}

fn clt_criterion(recs: &[RunRecord]) -> Outcome {
    let bands = CltBands::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for stat in ["length", "count"] {
        let first = |e: f64| -> Vec<f64> {
            let mut rows: Vec<&RunRecord> = recs
                .iter()
                .filter(|r| r.energy == e && r.statistic == stat && r.replication < CLT_N)
                .collect();
            rows.sort_by_key(|r| r.replication);
            rows.iter().map(|r| r.value).collect()
        };
        let lo = clt_diagnostics(&first(1e2), bands).unwrap();
        let hi = clt_diagnostics(&first(1e4), bands).unwrap();
        let shrink = [
            hi.stats.skewness.abs() <= lo.stats.skewness.abs(),
            hi.stats.excess_kurtosis.abs() <= lo.stats.excess_kurtosis.abs(),
            hi.stats.ks_distance <= lo.stats.ks_distance,
        ];
        ok &= hi.passed() && shrink.iter().all(|s| *s);
        for (e, r) in [(1e2, &lo), (1e4, &hi)] {
            lines.push(format!(
                "{stat:<6} E = {e:>7} (n = {}): skewness {:+.4}, excess kurtosis {:+.4}, KS {:.4}",
                r.stats.n, r.stats.skewness, r.stats.excess_kurtosis, r.stats.ks_distance
            ));
        }
        lines.push(format!(
            "{stat:<6} bands at 1e4 (|skew| <= {}, |kurt| <= {}, KS <= {}): {}; shrinking from 1e2 (skew, kurt, KS): {shrink:?}",
            bands.max_abs_skewness,
            bands.max_abs_excess_kurtosis,
            bands.max_ks,
            hi.passed()
        ));
    }
    Outcome {
        id: 8,
        title: "CLT diagnostics",
        passed: ok,
        lines,
    }
}

fn kac_rice_criterion(recs: &[RunRecord]) -> Outcome {
    let d = Domain::unit_square();
    let e = EnergyLevel::new(1e3).unwrap();
    let kr = kac_rice_variance_length(e, &d).unwrap();
    let s = stats(&values_of(recs, 1e3, "length"));
    let se = (s.variance_se.powi(2) + kr.refinement_change.powi(2)).sqrt();
    let diff = s.variance - kr.variance;
    let var_ok = diff.abs() <= SE_BAND * se;
    let mut mean_err: f64 = 0.0;
    for energy in [1.0, 25.0, 1e3, 1e4, 1e6] {
        let e = EnergyLevel::new(energy).unwrap();
        for dom in [d, Domain::rect(2.0, 0.5).unwrap(), Domain::disk(0.7).unwrap()] {
            let exact = dom.area() * PI / SQRT_2 * energy.sqrt();
            let m = kac_rice_mean(e, &dom, NodalStatistic::Length);
            mean_err = mean_err.max((m - exact).abs() / exact);
        }
    }
    Outcome {
        id: 9,
        title: "Kac-Rice cross-validation",
        passed: var_ok && mean_err <= 1e-12,
        lines: vec![
            format!(
                "E = 1e3: Kac-Rice Var {:.6} (refinement change {:.1e}), MC Var {:.6} +- {:.6} (n = {}); |diff| {:.6} <= {SE_BAND} SE = {:.6}",
                kr.variance,
                kr.refinement_change,
                s.variance,
                s.variance_se,
                s.n,
                diff.abs(),
                SE_BAND * se
            ),
            format!("Kac-Rice mean vs closed form: max relative error {mean_err:.2e} <= 1e-12"),
        ],
    }
}

// J_n power series in 256-bit fixed point
fn series_j(n: u32, x: f64) -> f64 {
    const BITS: usize = 256;
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64 - 1075;
    let m = BigInt::from((bits & ((1u64 << 52) - 1)) | (1u64 << 52));
    let shift = |v: BigInt, by: i64| if by >= 0 { v << by as usize } else { v >> (-by) as usize };
    let mut term = BigInt::from(1) << BITS;
    for k in 1..=n {
        term = shift(term * &m, exp - 1) / BigInt::from(k);
    }
    let m2 = &m * &m;
    let mut sum = term.clone();
    let tiny = BigInt::from(1) << (BITS - 100);
    let mut prev = term.magnitude().clone();
    for j in 1u64.. {
        term = -(shift(&term * &m2, 2 * exp - 2) / BigInt::from(j * (j + n as u64)));
        let mag = term.magnitude().clone();
        if mag < prev && BigInt::from(mag.clone()) < tiny {
            break;
        }
        sum += &term;
        prev = mag;
    }
    let (sign, mag) = sum.to_bytes_be();
    let v = mag.iter().fold(0.0, |acc, b| acc * 256.0 + *b as f64) * 2f64.powi(-(BITS as i32));
    if sign == Sign::Minus {
        -v
    } else {
        v
    }
}

fn infrastructure_criterion() -> Outcome {
    let mut lines = Vec::new();

    // reruns and worker counts
    let stats = vec![Statistic::Length, Statistic::Count, Statistic::Chaos2];
    let run = |w: usize, resume: bool| {
        let mut cfg = ExperimentConfig::new("determinism", vec![16.0, 49.0], 6, 3, stats.clone());
        cfg.output.dir = dir().join(format!("determinism_w{w}"));
        run_campaign(&cfg, RunOptions { workers: w, resume }).unwrap().records
    };
    let strip = |r: Vec<RunRecord>| -> Vec<RunRecord> {
        r.into_iter().map(|x| RunRecord { wall_ms: 0, ..x }).collect()
    };
    let a = strip(run(1, false));
    let rerun = a == strip(run(1, false));
    let pools = a == strip(run(3, false));
    lines.push(format!("bit-identical rerun: {rerun}; 1 vs 3 workers identical: {pools}"));

    // Bessel functions on [0, 50]
    let mut rng = stream_rng(50, 0);
    let mut bessel_err: f64 = 0.0;
    for i in 0..300 {
        let x = if i < 100 { i as f64 * 0.5 } else { 50.0 * rng.gen::<f64>() };
        for n in 0..=2 {
            let got = bessel_j(BesselOrder::new(n).unwrap(), x).unwrap();
            bessel_err = bessel_err.max((got - series_j(n, x)).abs());
        }
    }
    let bessel = bessel_err <= BESSEL_TOL;
    lines.push(format!("Bessel J0..J2 on [0, 50] vs series oracle: max abs error {bessel_err:.2e} <= {BESSEL_TOL:e}"));

    // covariance derivatives against finite differences of the kernel
    let e = EnergyLevel::new(3.0).unwrap();
    let c = CovKernel::new(e);
    let k = e.k();
    let mut fd_err: f64 = 0.0;
    for _ in 0..100 {
        let rho = rng.gen_range(0.05..2.0);
        let th = rng.gen_range(0.0..2.0 * PI);
        let dx = [rho * th.cos(), rho * th.sin()];
        let h = 1e-5 / k;
        let at = |p: [f64; 2]| c.kernel(p);
        for (ia, a) in [Axis::X1, Axis::X2].into_iter().enumerate() {
            let mut p = dx;
            let mut q = dx;
            p[ia] += h;
            q[ia] -= h;
            let fd = (at(p) - at(q)) / (2.0 * h);
            // derivatives act on the second point of K(x - y)
            fd_err = fd_err.max((c.kernel_d1(a, dx).unwrap() + fd).abs() / k);
            for (ib, b) in [Axis::X1, Axis::X2].into_iter().enumerate() {
                let d1 = |p: [f64; 2]| c.kernel_d1(a, p).unwrap();
                let mut p = dx;
                let mut q = dx;
                p[ib] += h;
                q[ib] -= h;
                let fd = (d1(p) - d1(q)) / (2.0 * h);
                fd_err = fd_err.max((c.kernel_d2(a, b, dx).unwrap() - fd).abs() / (k * k));
            }
        }
    }
    let fd = fd_err <= FD_TOL;
    lines.push(format!("covariance derivatives vs finite differences: max scaled error {fd_err:.2e} <= {FD_TOL:e}"));

    let s = scaling_check(&ScalingConfig::new(4.0, 500, 11), workers()).unwrap();
    lines.push(format!(
        "scaling identity at E = 4 (n = 500 each): mean {:.5} vs {:.5}, |diff| {:.5} <= {:.5}; variance {:.5} vs {:.5}, |diff| {:.5} <= {:.5}",
        s.direct.mean,
        s.scaled.mean,
        s.mean_check.value.abs(),
        s.mean_check.upper,
        s.direct.variance,
        s.scaled.variance,
        s.variance_check.value.abs(),
        s.variance_check.upper
    ));
    Outcome {
        id: 10,
        title: "infrastructure invariants",
        passed: rerun && pools && bessel && fd && s.passed(),
        lines,
    }
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut outcomes = mean_criteria();
    let recs = sweep();
    outcomes.push(variance_law(&recs, 3, "length", |e| FourthVariances::asymptotic(e, 1.0).length));
    outcomes.push(variance_law(&recs, 4, "count", |e| FourthVariances::asymptotic(e, 1.0).count));
    outcomes.extend(table_criteria());
    outcomes.push(identity_criterion());
    outcomes.push(clt_criterion(&recs));
    outcomes.push(kac_rice_criterion(&recs));
    outcomes.push(infrastructure_criterion());
    outcomes.sort_by_key(|o| o.id);

    println!();
    for o in &outcomes {
        println!("{} criterion {:>2}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.title);
        for l in &o.lines {
            println!("      {l}");
        }
    }
    let red: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!(
        "\n{} of {} criteria pass ({:.0} s); known red: {KNOWN_RED:?}",
        outcomes.len() - red.len(),
        outcomes.len(),
        t0.elapsed().as_secs_f64()
    );
    if red != KNOWN_RED {
        println!("unexpected outcome: failing {red:?}, expected {KNOWN_RED:?}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
