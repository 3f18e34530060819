//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Criteria 6, 7 and the dataset half of 8 need the archived dashboard
//! extract. Point `WPCA_DASHBOARD_DATA` at a directory holding `uk_dashboard.csv`,
//! `r_bounds.csv` and `new_tests.csv` (layout in the README) to run them.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use wpca_core::config::{AnalysisConfig, RunConfig};
use wpca_core::data::{ingest_csv, IngestConfig, TimeSeriesMatrix};
use wpca_core::diagnostics::{compare_with_reference, read_reference_csv, Bound, ReferenceSeries};
use wpca_core::pca::{weighted_pca, Mode, PcaResult, WeightConfig};
use wpca_core::pipeline::{analyze, estimate_rho, run, AnalysisOutput};
use wpca_core::smoother::{build_basis, fit_penalized, select_lambda, PenalizedSmoother};
use wpca_core::synth::{generate_synthetic, write_synthetic, SynthConfig, Trend};
use wpca_core::weighting::TemporalWeight;
use wpca_core::Exec;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn analysis(name: &str, mode: Mode, weighting: bool) -> AnalysisConfig {
    AnalysisConfig {
        name: name.into(),
        streams: Vec::new(),
        window: None,
        mode,
        weighting,
        standardize: false,
        basis_size: None,
    }
}

fn run_analysis(m: &TimeSeriesMatrix, cfg: &AnalysisConfig) -> AnalysisOutput {
    analyze(m, cfg, None, Exec::Parallel).unwrap_or_else(|e| panic!("analysis {}: {e}", cfg.name))
}

// 1
fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_211_004);
    let (mut frac_err, mut vec_err) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(2..=8);
        let p = rng.random_range(1..=5);
        let raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let res = weighted_pca(&centred(raw.clone()), &WeightConfig::identity(), Mode::S).unwrap();
        let o = oracle_pca(&centre(&raw), None, None);
        for (a, b) in res.variance_fraction.iter().zip(&o.fractions) {
            frac_err = frac_err.max((a - b).abs());
        }
        vec_err = vec_err.max(component_discrepancy(&o.sigma, &res.scores, &res.loadings, &o.scores, &o.loadings));
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        frac_err < 1e-8 && vec_err < 1e-8 && secs < 5.0,
        format!("200 matrices; max fraction error {frac_err:.1e}, max score/loading error {vec_err:.1e}; {secs:.2} s"),
    )
}

// 2
fn weight_matrix_correctness() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut exact_identity = true;
    for n in [1usize, 2, 10, 50, 330] {
        for rho in [-0.9, 0.0, 0.5, 0.9, 0.99] {
            let w = TemporalWeight::new(n, rho).unwrap();
            let t = oracle_toeplitz(n, rho);
            let sq = (&w.omega * &w.omega - &t).norm() / n as f64;
            let inv = (&w.omega * &w.omega_inv - DMatrix::identity(n, n)).norm() / n as f64;
            worst = worst.max(sq).max(inv);
            if rho == 0.0 {
                let eye = DMatrix::identity(n, n);
                exact_identity &= w.omega == eye && w.omega_inv == eye;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        worst < 1e-8 && exact_identity && secs < 10.0,
        format!("max residual / n {worst:.1e}; rho = 0 exact identity: {exact_identity}; {secs:.2} s"),
    )
}

/// Three streams whose per-stream residual correlations straddle zero; the
/// middle stream's noise mix is tuned until its correlation, which is the
/// median, vanishes.
fn zero_rho_matrix() -> (TimeSeriesMatrix, f64) {
    let n = 240;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let white: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let ar = |phi: f64, rng: &mut ChaCha8Rng| {
        let mut e = 0.0;
        (0..n)
            .map(|_| {
                e = phi * e + normal.sample(rng);
                e
            })
            .collect::<Vec<f64>>()
    };
    let neg = ar(-0.6, &mut rng);
    let pos = ar(0.6, &mut rng);
    let trend = |i: usize, a: f64| a * (i as f64 / 40.0).sin();
    let build = |alpha: f64| {
        DMatrix::from_fn(n, 3, |i, j| match j {
            0 => trend(i, 3.0) + 0.3 * neg[i],
            1 => trend(i, 2.0) + 0.3 * ((1.0 - alpha) * neg[i] + alpha * pos[i] + white[i]),
            _ => trend(i, 1.0) + 0.3 * pos[i],
        })
    };
    let rho_of = |alpha: f64| {
        let m = series(build(alpha));
        let c = wpca_core::data::center_columns(&m, false).unwrap();
        estimate_rho(&c.base, 10, Exec::Sequential).unwrap().2
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    assert!(rho_of(lo) < 0.0 && rho_of(hi) > 0.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if rho_of(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = if rho_of(lo).abs() < rho_of(hi).abs() { lo } else { hi };
    (series(build(alpha)), rho_of(alpha))
}

// 3
fn reduction_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut unweighted_err = 0.0f64;
    for trial in 0..20 {
        let n = rng.random_range(12..40);
        let p = rng.random_range(2..6);
        let raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let m = series(raw.clone());
        let mode = if trial % 2 == 0 { Mode::S } else { Mode::T };
        let out = run_analysis(&m, &analysis("off", mode, false));
        let oriented = match mode {
            Mode::S => centre(&raw),
            Mode::T => centre(&centre(&raw).transpose()),
        };
        let o = oracle_pca(&oriented, None, None);
        let r = &out.result;
        for (a, b) in r.variance_fraction.iter().zip(&o.fractions) {
            unweighted_err = unweighted_err.max((a - b).abs());
        }
        unweighted_err = unweighted_err.max(component_discrepancy(&o.sigma, &r.scores, &r.loadings, &o.scores, &o.loadings));
    }

    let (m, rho) = zero_rho_matrix();
    let on = run_analysis(&m, &analysis("on", Mode::S, true));
    let off = run_analysis(&m, &analysis("off", Mode::S, false));
    let shift = on
        .result
        .variance_fraction
        .iter()
        .zip(&off.result.variance_fraction)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        unweighted_err < 1e-8 && shift < 1e-6,
        format!("weighting off vs oracle {unweighted_err:.1e}; estimated rho {rho:.1e} shifts fractions by {shift:.1e}"),
    )
}

// 4
fn smoother_recovery() -> Outcome {
    let (n, sigma, k) = (200usize, 0.1, 20usize);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, sigma).unwrap();
    let truth: Vec<f64> = (1..=n).map(|i| (std::f64::consts::TAU * i as f64 / 50.0).sin()).collect();
    let y = DVector::from_iterator(n, truth.iter().map(|t| t + noise.sample(&mut rng)));
    let basis = build_basis(n, k).unwrap();
    let (_, fit) = select_lambda(&y, &basis).unwrap();
    let rmse = (fit.fitted.iter().zip(&truth).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / n as f64).sqrt();
    let bound = 3.0 * 2.0 * sigma / (n as f64 / fit.edf).sqrt();

    let affine = DVector::from_fn(n, |i, _| 0.25 * i as f64 - 3.0);
    let mut affine_worst = 0.0f64;
    for lambda in [0.0, 1e-6, 1e-2, 1.0, 1e2, 1e6, 1e12] {
        let f = fit_penalized(&affine, &basis, lambda).unwrap();
        affine_worst = affine_worst.max(f.residuals.amax());
    }

    let smoother = PenalizedSmoother::new(&basis).unwrap();
    let edfs: Vec<f64> = (0..20).map(|i| smoother.edf(10f64.powf(-6.0 + i as f64))).collect();
    let monotone = edfs.windows(2).all(|w| w[1] <= w[0]);
    check(
        rmse < bound && affine_worst < 1e-9 && monotone,
        format!(
            "sine RMSE {rmse:.4} < bound {bound:.4} (edf {:.2}); affine residual {affine_worst:.1e}; edf monotone over 20 lambdas: {monotone}",
            fit.edf
        ),
    )
}

// 5
fn synthetic_recovery() -> Outcome {
    let mut one = SynthConfig::new(5, 200, 4, vec![Trend::Sine { period: 80.0 }]);
    one.noise_sd = 0.0;
    let data = generate_synthetic(&one).unwrap();
    let rank_one = run_analysis(&data.matrix, &analysis("one", Mode::S, true));
    let f0 = rank_one.result.variance_fraction[0];

    let mut two = SynthConfig::new(6, 500, 4, vec![Trend::Sine { period: 250.0 }, Trend::Cosine { period: 250.0 }]);
    two.noise_sd = 0.01;
    two.mixing = Some(vec![vec![1.5, 0.5], vec![1.5, -0.5], vec![1.5, 0.5], vec![1.5, -0.5]]);
    let data = generate_synthetic(&two).unwrap();
    let mixed = run_analysis(&data.matrix, &analysis("two", Mode::S, true));
    let fr = &mixed.result.variance_fraction;
    let ratio = fr[0] / fr[1];
    check(
        f0 >= 1.0 - 1e-6 && (ratio / 9.0 - 1.0).abs() < 0.1,
        format!("rank-one fraction {f0:.9}; 3:1 mixing ratio {ratio:.3} (target 9)"),
    )
}

struct DashboardData {
    dashboard: TimeSeriesMatrix,
    r_upper: ReferenceSeries,
    new_tests: ReferenceSeries,
}

const NATIONS: [&str; 4] = ["england", "scotland", "wales", "northern_ireland"];
const MEASURES: [&str; 4] = ["cases", "deaths", "hospitalisations", "mv_beds"];

fn stream_names(nations: &[&str]) -> Vec<String> {
    nations.iter().flat_map(|n| MEASURES.iter().map(move |m| format!("{n}_{m}"))).collect()
}

fn dashboard_data() -> Option<Result<DashboardData, String>> {
    let dir = PathBuf::from(std::env::var_os("WPCA_DASHBOARD_DATA")?);
    let load = || -> Result<DashboardData, String> {
        let open = |name: &str| fs::File::open(dir.join(name)).map_err(|e| format!("{name}: {e}"));
        let mut schema = IngestConfig::new(stream_names(&NATIONS));
        schema.date_min = NaiveDate::from_ymd_opt(2020, 4, 2);
        schema.date_max = NaiveDate::from_ymd_opt(2021, 2, 22);
        let dashboard = ingest_csv(open("uk_dashboard.csv")?, &schema).map_err(|e| e.to_string())?;
        let r_upper = read_reference_csv(open("r_bounds.csv")?, Bound::Upper).map_err(|e| e.to_string())?;
        let tests = ingest_csv(open("new_tests.csv")?, &IngestConfig::new(["new_tests"])).map_err(|e| e.to_string())?;
        let points: Vec<(NaiveDate, f64)> = tests.dates().iter().copied().zip(tests.column("new_tests").unwrap()).collect();
        let new_tests = ReferenceSeries::unstratified(&points).map_err(|e| e.to_string())?;
        Ok(DashboardData { dashboard, r_upper, new_tests })
    };
    Some(load())
}

fn dashboard_run(d: &DashboardData, name: &str, mode: Mode, streams: Vec<String>, standardize: bool) -> PcaResult {
    let mut cfg = analysis(name, mode, true);
    cfg.streams = streams;
    cfg.standardize = standardize;
    run_analysis(&d.dashboard, &cfg).result
}

// 6
fn dashboard_fractions(data: &Option<Result<DashboardData, String>>) -> Outcome {
    let d = match data {
        None => return Outcome::Skip("WPCA_DASHBOARD_DATA not set; archived dataset unavailable".into()),
        Some(Err(e)) => return Outcome::Fail(format!("cannot load dashboard data: {e}")),
        Some(Ok(d)) => d,
    };
    let all = stream_names(&NATIONS);
    let mut notes = Vec::new();
    let mut pooled_ok = false;
    for standardize in [false, true] {
        let r = dashboard_run(d, "pooled", Mode::S, all.clone(), standardize);
        let (f1, f2) = (r.variance_fraction[0], r.variance_fraction[1]);
        let ok = (f1 - 0.42).abs() <= 0.05 && (f2 - 0.18).abs() <= 0.05;
        pooled_ok |= ok;
        notes.push(format!("pooled S standardize={standardize}: {f1:.3}/{f2:.3}{}", if ok { " (reproduces)" } else { "" }));
    }
    let t = dashboard_run(d, "pooled_t", Mode::T, all, false).variance_fraction[0];
    notes.push(format!("pooled T PC1 {t:.3}"));
    let mut nations_ok = true;
    for nation in NATIONS {
        let f = dashboard_run(d, nation, Mode::S, stream_names(&[nation]), false).variance_fraction[0];
        nations_ok &= (0.60..=0.75).contains(&f);
        notes.push(format!("{nation} PC1 {f:.3}"));
    }
    check(pooled_ok && t > 0.90 && nations_ok, notes.join("; "))
}

// 7
fn dashboard_spearman(data: &Option<Result<DashboardData, String>>) -> Outcome {
    let d = match data {
        None => return Outcome::Skip("WPCA_DASHBOARD_DATA not set; archived dataset unavailable".into()),
        Some(Err(e)) => return Outcome::Fail(format!("cannot load dashboard data: {e}")),
        Some(Ok(d)) => d,
    };
    let pooled = dashboard_run(d, "pooled", Mode::S, stream_names(&NATIONS), false);
    let england = dashboard_run(d, "england", Mode::S, stream_names(&["england"]), false);
    let uk = compare_with_reference(&pooled, 0, &d.r_upper).map(|c| c.spearman_rho);
    let eng = compare_with_reference(&england, 0, &d.r_upper).map(|c| c.spearman_rho);
    // the sign of a component is arbitrary, so PC2 is compared by magnitude
    let tests = compare_with_reference(&pooled, 1, &d.new_tests).map(|c| c.spearman_rho.abs());
    match (uk, eng, tests) {
        (Ok(uk), Ok(eng), Ok(tests)) => check(
            (uk - 0.84).abs() <= 0.08 && (eng - 0.72).abs() <= 0.08 && (tests - 0.36).abs() <= 0.10,
            format!("UK PC1 vs R {uk:.3}; England PC1 vs R {eng:.3}; |PC2 vs new tests| {tests:.3}"),
        ),
        (a, b, c) => Outcome::Fail(format!("comparison failed: {a:?} {b:?} {c:?}")),
    }
}

fn planted_deviant(seed: u64) -> (TimeSeriesMatrix, String) {
    let p = 12;
    let deviant = (seed as usize * 5) % p;
    let mixing: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            if j == deviant {
                vec![1.0, 4.0]
            } else {
                vec![0.8 + 0.4 * j as f64 / (p - 1) as f64, 0.0]
            }
        })
        .collect();
    let mut cfg = SynthConfig::new(seed, 200, p, vec![Trend::Linear, Trend::Bump { center: 0.7, width: 0.08 }]);
    cfg.mixing = Some(mixing);
    cfg.rho = 0.3;
    cfg.noise_sd = 0.05;
    let data = generate_synthetic(&cfg).unwrap();
    let label = data.matrix.labels()[deviant].clone();
    (data.matrix, label)
}

// 8
fn outlier_behaviour(data: &Option<Result<DashboardData, String>>) -> Outcome {
    let mut misses = Vec::new();
    for seed in 0..50 {
        let (m, deviant) = planted_deviant(seed);
        let out = run_analysis(&m, &analysis("t", Mode::T, true));
        let flagged: Vec<String> = out.outliers.unwrap().flagged().map(|f| f.stream.clone()).collect();
        if flagged != [deviant.clone()] {
            misses.push(format!("seed {seed}: planted {deviant}, flagged {flagged:?}"));
        }
    }
    let synthetic = format!("synthetic: planted stream alone flagged in {}/50 seeds", 50 - misses.len());
    let dataset = match data {
        None => Ok("dataset part skipped (WPCA_DASHBOARD_DATA not set)".to_string()),
        Some(Err(e)) => Err(format!("cannot load dashboard data: {e}")),
        Some(Ok(d)) => {
            let mut cfg = analysis("pooled_t", Mode::T, true);
            cfg.streams = stream_names(&NATIONS);
            let out = run_analysis(&d.dashboard, &cfg);
            let top = out.outliers.unwrap().max_deviation().map(|f| f.stream.clone()).unwrap_or_default();
            if top == "england_cases" {
                Ok("dataset: england_cases has the largest deviation".to_string())
            } else {
                Err(format!("dataset: largest deviation is {top}, expected england_cases"))
            }
        }
    };
    let mut detail = synthetic;
    if let Some(first) = misses.first() {
        detail.push_str(&format!(" (first miss: {first})"));
    }
    match dataset {
        Ok(p) => check(misses.is_empty(), format!("{detail}; {p}")),
        Err(p) => Outcome::Fail(format!("{detail}; {p}")),
    }
}

fn csv_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

// 9
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = SynthConfig::new(99, 150, 5, vec![Trend::Sine { period: 50.0 }, Trend::Linear]);
    cfg.rho = 0.5;
    cfg.noise_sd = 0.2;
    let mut runs = Vec::new();
    for attempt in 0..2 {
        let dir = tmp.path().join(format!("run{attempt}"));
        fs::create_dir_all(&dir).unwrap();
        write_synthetic(&generate_synthetic(&cfg).unwrap(), &dir.join("data.csv")).unwrap();
        let text = format!(
            "input = \"data.csv\"\noutput_dir = \"out\"\nseed = 99\ndump_smooth = true\n[schema]\nstream_columns = [{}]\n\
             [[analysis]]\nname = \"s\"\nmode = \"S\"\n[[analysis]]\nname = \"t\"\nmode = \"T\"\n\
             [[analysis]]\nname = \"w\"\nmode = \"S\"\nwindow = {{ name = \"w\", start = \"2020-02-01\", end = \"2020-04-30\" }}\n",
            (1..=5).map(|j| format!("\"stream_{j}\"")).collect::<Vec<_>>().join(", ")
        );
        fs::write(dir.join("run.toml"), text).unwrap();
        let run_cfg = RunConfig::load(&dir.join("run.toml")).unwrap();
        assert_eq!(run(&run_cfg).unwrap().exit_code(), 0);
        runs.push(csv_bytes(&dir));
    }
    let files = runs[0].len();
    check(files > 0 && runs[0] == runs[1], format!("{files} CSV files byte-identical across two runs"))
}

fn main() {
    let data = dashboard_data();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("weight-matrix correctness", Box::new(weight_matrix_correctness)),
        ("reduction property", Box::new(reduction_property)),
        ("smoother recovery", Box::new(smoother_recovery)),
        ("synthetic trend recovery", Box::new(synthetic_recovery)),
        ("dataset reproduction: variance fractions", Box::new(|| dashboard_fractions(&data))),
        ("dataset reproduction: Spearman", Box::new(|| dashboard_spearman(&data))),
        ("T-mode outlier behaviour", Box::new(|| outlier_behaviour(&data))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    println!("\nacceptance criteria");
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {}. {name}: {detail}", i + 1);
    }
    println!();
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
