//! Acceptance checks. Runs as a plain binary (no test harness) and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use panelsel::nesting::default_probes;
use panelsel::oracle::{mspe_monte_carlo, pseudo_true_nested};
use panelsel::rng::stream_rng;
use panelsel::selection::{CriterionSpec, MccvConfig, Penalty, SplitRule};
use panelsel::sim::{
    standard_candidate_sets, run_phacking_experiment, run_pseudo_true_experiment, run_selection_experiment,
};
use panelsel::{
    detect_nesting, fe_estimate, misspec_delta, mspe_decompose, pseudo_predictions_equal, pseudo_true_params,
    synth_weather, Calendar, DesignOptions, DgpSpec, DgpTruth, ErrorRule, FeatureKind, ModelSpec, PanelDataset,
    WeatherConfig, WeatherPanel,
};

/// Box-Muller, kept local so the LSDV oracle shares no sampling code with
/// the library.
fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String), String>) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    let detail = format!("{detail} [{:.1}s]", start.elapsed().as_secs_f64());
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

fn weather(n: usize) -> WeatherPanel {
    synth_weather(&WeatherConfig::default().with_n(n)).expect("default weather")
}

// Dummy-variable OLS solved by SVD, independent of the within transform.
fn lsdv(y: &DMatrix<f64>, x: &DMatrix<f64>, n: usize, t: usize) -> DVector<f64> {
    let k = x.ncols();
    let mut full = DMatrix::zeros(n * t, k + n);
    full.columns_mut(0, k).copy_from(x);
    for i in 0..n {
        for p in 0..t {
            full[(i * t + p, k + i)] = 1.0;
        }
    }
    let stacked = DVector::from_iterator(n * t, (0..n).flat_map(|i| (0..t).map(move |p| (i, p))).map(|(i, p)| y[(i, p)]));
    let svd = full.svd(true, true);
    let coef = svd.solve(&stacked, 1e-12).expect("svd solve");
    coef.rows(0, k).into_owned()
}

fn lsdv_equivalence() -> Result<(bool, String), String> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = stream_rng(7, 900, case);
        let n = rng.random_range(2..=20);
        let t = rng.random_range(2..=5);
        let k = rng.random_range(1..=4).min(n * (t - 1));
        let h = 12;
        let values: Vec<f64> = (0..n * t * h).map(|_| normal(&mut rng)).collect();
        let w = WeatherPanel::new(n, t, h, values).map_err(|e| e.to_string())?;
        let cal = Calendar::for_length(h).map_err(|e| e.to_string())?;
        let map = DMatrix::from_fn(k, h, |_, _| normal(&mut rng));
        let spec = ModelSpec::new("X", FeatureKind::Matrix(map), cal.clone()).map_err(|e| e.to_string())?;
        let y = DMatrix::from_fn(n, t, |_, _| normal(&mut rng) * 2.0 + 1.0);
        let data = PanelDataset::from_arrays(y.clone(), w, cal).map_err(|e| e.to_string())?;
        let fit = match fe_estimate(&data, &spec, DesignOptions::default()) {
            Ok(f) => f,
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e.to_string()),
        };
        let x = panelsel::build_design(data.weather(), &spec).map_err(|e| e.to_string())?;
        let b = lsdv(&y, &x, n, t);
        let rel = (&fit.beta_hat - &b).amax() / b.amax().max(1e-300);
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst <= 1e-8 && secs < 5.0, format!("max relative gap {worst:.2e} in {secs:.2}s")))
}

fn table1_analogue() -> Result<(bool, String), String> {
    let w = weather(500);
    let cal = Calendar::non_leap();
    let dgps = [DgpSpec::annual(), DgpSpec::quarterly()];
    let r = run_phacking_experiment(&w, &cal, &dgps, 500, 11).map_err(|e| e.to_string())?;
    let a = r.coefficient("A", "A", "A").ok_or("missing A/A")?;
    let zeros = [("A", "QinA", "A2"), ("Q", "Q", "Q2"), ("Q", "Q", "Q4")];
    let mut sizes = Vec::new();
    let mut size_ok = true;
    for (d, m, c) in zeros {
        let s = r.coefficient(d, m, c).ok_or("missing zero coefficient")?.reject_rate;
        size_ok &= (s - 0.05).abs() <= 0.025;
        sizes.push(format!("{d}/{m}/{c} {s:.3}"));
    }
    let pass = (a.mean - 1.0).abs() <= 0.01 && (0.015..=0.04).contains(&a.sd) && size_ok;
    Ok((
        pass,
        format!("mean {:.4}, sd {:.4}, p05 {}", a.mean, a.sd, sizes.join(", ")),
    ))
}

fn nested_pseudo_true() -> Result<(bool, String), String> {
    let cal = Calendar::non_leap();
    let truth = DgpTruth::from_dgp(&DgpSpec::annual(), &cal, 5).map_err(|e| e.to_string())?;
    let q = ModelSpec::quarterly(&cal);
    let rel = detect_nesting(&ModelSpec::annual(&cal), &q, &default_probes(365, 0)).map_err(|e| e.to_string())?;
    let panelsel::NestingVerdict::Nested { r } = rel.verdict else {
        return Err("annual not nested in quarterly".into());
    };
    let target = pseudo_true_nested(&r, &truth.beta_star);
    let exact = DVector::from_vec(vec![90.0 / 365.0, 91.0 / 365.0, 92.0 / 365.0, 92.0 / 365.0]);
    // Spread over independent weather panels.
    let draws: Vec<DVector<f64>> = (0..10)
        .map(|s| {
            let w = synth_weather(&WeatherConfig::default().with_n(3000).with_seed(100 + s)).map_err(|e| e.to_string())?;
            pseudo_true_params(&w, &q, &truth).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let m = draws.len() as f64;
    let mean = draws.iter().fold(DVector::zeros(4), |acc, d| acc + d) / m;
    let mut ok = (&target - &exact).amax() < 1e-12;
    let mut worst_z: f64 = 0.0;
    for j in 0..4 {
        let sd = (draws.iter().map(|d| (d[j] - mean[j]).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let se = sd / m.sqrt();
        let gap = (mean[j] - target[j]).abs();
        ok &= gap <= (3.0 * se).max(1e-9);
        if se > 0.0 {
            worst_z = worst_z.max(gap / se);
        }
    }
    Ok((
        ok,
        format!(
            "mean ({:.6}, {:.6}, {:.6}, {:.6}) vs R'b ({:.6}, {:.6}, {:.6}, {:.6}); max |gap|/SE {worst_z:.2}",
            mean[0], mean[1], mean[2], mean[3], target[0], target[1], target[2], target[3]
        ),
    ))
}

fn qina_recovery() -> Result<(bool, String), String> {
    let w = weather(3000);
    let cal = Calendar::non_leap();
    let r = run_pseudo_true_experiment(&w, &cal, &[DgpSpec::qina()], 200, 13).map_err(|e| e.to_string())?;
    let b1 = r.coefficient("QinA", "QinA", "A").ok_or("missing")?.mean;
    let b2 = r.coefficient("QinA", "QinA", "A2").ok_or("missing")?.mean;
    let pass = (b1 - 0.2).abs() <= 0.01 && (b2 + 0.05).abs() <= 0.002;
    Ok((pass, format!("beta_bar ({b1:.5}, {b2:.6})")))
}

fn mspe_decomposition() -> Result<(bool, String), String> {
    let w = weather(500);
    let cal = Calendar::non_leap();
    let dgp = DgpSpec::annual().with_errors(ErrorRule::Iid { sd: 1.0 });
    let truth = DgpTruth::from_dgp(&dgp, &cal, 5).map_err(|e| e.to_string())?;
    let mut pass = true;
    let mut notes = Vec::new();
    for spec in [ModelSpec::quarterly(&cal), ModelSpec::annual(&cal)] {
        let parts = mspe_decompose(&truth, &spec, &w).map_err(|e| e.to_string())?;
        let mc = mspe_monte_carlo(&w, &cal, &spec, &dgp, 200, 17).map_err(|e| e.to_string())?;
        let z = (mc.mean - parts.total()).abs() / mc.se;
        pass &= z <= 3.0 && parts.misspec.abs() <= 1e-10;
        notes.push(format!(
            "{}: analytic {:.6} (delta {:.1e}) vs MC {:.6} +- {:.6}, z {z:.2}",
            spec.name(),
            parts.total(),
            parts.misspec,
            mc.mean,
            mc.se
        ));
    }
    // A Category I model as well.
    let dgp = DgpSpec::qina().with_errors(ErrorRule::Iid { sd: 1.0 });
    let truth = DgpTruth::from_dgp(&dgp, &cal, 5).map_err(|e| e.to_string())?;
    let spec = ModelSpec::annual(&cal);
    let parts = mspe_decompose(&truth, &spec, &w).map_err(|e| e.to_string())?;
    let mc = mspe_monte_carlo(&w, &cal, &spec, &dgp, 400, 19).map_err(|e| e.to_string())?;
    let z = (mc.mean - parts.total()).abs() / mc.se;
    pass &= z <= 3.0;
    notes.push(format!("A under QinA: analytic {:.6} vs MC {:.6}, z {z:.2}", parts.total(), mc.mean));
    Ok((pass, notes.join("; ")))
}

fn all_criteria(seed: u64) -> Vec<CriterionSpec> {
    vec![
        CriterionSpec::Gic(Penalty::Aic),
        CriterionSpec::Gic(Penalty::Bic),
        CriterionSpec::Gic(Penalty::Sw1),
        CriterionSpec::Gic(Penalty::Sw2),
        CriterionSpec::Mccv(MccvConfig {
            rule: SplitRule::FixedP(0.75),
            splits: None,
            seed,
        }),
        CriterionSpec::Mccv(MccvConfig {
            rule: SplitRule::Shao,
            splits: None,
            seed,
        }),
    ]
}

fn consistency() -> Result<(bool, String), String> {
    let w = weather(500);
    let cal = Calendar::non_leap();
    let sets = vec![standard_candidate_sets()[2].clone()];
    let r = run_selection_experiment(&w, &cal, &[DgpSpec::annual()], &sets, &all_criteria(23), 200, 23)
        .map_err(|e| e.to_string())?;
    let f = |c: &str| r.frequency("A", "A+Q+QinA", c, "A").unwrap_or(f64::NAN);
    let pass = f("bic") >= 0.95
        && f("sw1") >= 0.95
        && f("sw2") >= 0.95
        && f("mccv-shao") >= 0.90
        && 1.0 - f("aic") >= 0.10
        && 1.0 - f("mccv-p:0.75") >= 0.10;
    Ok((
        pass,
        format!(
            "P(A): bic {:.3}, sw1 {:.3}, sw2 {:.3}, mccv-shao {:.3}; overfit: aic {:.3}, mccv-p {:.3}",
            f("bic"),
            f("sw1"),
            f("sw2"),
            f("mccv-shao"),
            1.0 - f("aic"),
            1.0 - f("mccv-p:0.75")
        ),
    ))
}

fn pseudo_inconsistency() -> Result<(bool, String), String> {
    let cal = Calendar::non_leap();
    let crit = vec![CriterionSpec::Gic(Penalty::Bic), CriterionSpec::Gic(Penalty::Sw2)];
    let sets = &standard_candidate_sets()[..2];
    let dgps = [DgpSpec::qina(), DgpSpec::quarterly()];
    let small = run_selection_experiment(&weather(500), &cal, &dgps, sets, &crit, 200, 29).map_err(|e| e.to_string())?;
    let large = run_selection_experiment(&weather(3000), &cal, &dgps, sets, &crit, 200, 31).map_err(|e| e.to_string())?;
    let f = |r: &panelsel::SimulationReport, d: &str, s: &str, c: &str, m: &str| r.frequency(d, s, c, m).unwrap_or(f64::NAN);
    let (q500, q3000) = (f(&small, "QinA", "A+Q", "bic", "Q"), f(&large, "QinA", "A+Q", "bic", "Q"));
    let sw2_a = f(&large, "QinA", "A+Q", "sw2", "A");
    let (s500, s3000) = (f(&small, "Q", "A+QinA", "bic", "QinA"), f(&large, "Q", "A+QinA", "bic", "QinA"));
    let sym_sw2 = f(&large, "Q", "A+QinA", "sw2", "A");
    let pass = q3000 > q500 && q3000 >= 0.8 && sw2_a >= 0.8 && s3000 > s500 && s3000 >= 0.8 && sym_sw2 >= 0.8;
    Ok((
        pass,
        format!(
            "QinA {{A,Q}}: bic Q {q500:.3} -> {q3000:.3}, sw2 A {sw2_a:.3}; Q {{A,QinA}}: bic QinA {s500:.3} -> {s3000:.3}, sw2 A {sym_sw2:.3}"
        ),
    ))
}

fn prediction_equality() -> Result<(bool, String), String> {
    let w = weather(3000);
    let cal = Calendar::non_leap();
    let annual = DgpTruth::from_dgp(&DgpSpec::annual(), &cal, 5).map_err(|e| e.to_string())?;
    let nesting: Vec<ModelSpec> = [
        ("A", FeatureKind::AnnualMean),
        ("H", FeatureKind::BiannualMeans),
        ("Q", FeatureKind::QuarterlyMeans),
        ("M", FeatureKind::MonthlyMeans),
        ("QinA", FeatureKind::QuadraticAnnual),
    ]
    .into_iter()
    .map(|(n, k)| ModelSpec::new(n, k, cal.clone()).expect("built-in"))
    .collect();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (i, a) in nesting.iter().enumerate() {
        for g in &nesting[i + 1..] {
            let gap = pseudo_predictions_equal(&w, a, g, &annual, 1e-8).map_err(|e| e.to_string())?;
            pass &= gap.equal;
            worst = worst.max(gap.max_gap / gap.scale);
        }
    }
    let qina = DgpTruth::from_dgp(&DgpSpec::qina(), &cal, 5).map_err(|e| e.to_string())?;
    let gap = pseudo_predictions_equal(&w, &ModelSpec::annual(&cal), &ModelSpec::quarterly(&cal), &qina, 1e-8)
        .map_err(|e| e.to_string())?;
    let rel = gap.max_gap / gap.scale;
    pass &= rel > 1e-3;
    let delta_a = misspec_delta(&w, &ModelSpec::annual(&cal), &qina).map_err(|e| e.to_string())?;
    let delta_q = misspec_delta(&w, &ModelSpec::quarterly(&cal), &qina).map_err(|e| e.to_string())?;
    Ok((
        pass,
        format!(
            "nesting pairs max gap/scale {worst:.2e}; A vs Q under QinA gap/scale {rel:.3e} (delta A {delta_a:.4}, Q {delta_q:.4})"
        ),
    ))
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_panelsel"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)));
    }
    Ok(())
}

fn determinism() -> Result<(bool, String), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    run_cli(&["--seed", "5", "synth", "--n", "60"], &root.join("data"))?;
    let reg = root.join("models.txt");
    std::fs::write(&reg, "name = A\nkind = annual_mean\n\nname = Q\nkind = quarterly_means\n\nname = QinA\nkind = quadratic_annual\n")
        .map_err(|e| e.to_string())?;
    let panel = root.join("data/panel.csv");
    let weather = root.join("data/weather.csv");
    let (panel, weather, reg) = (panel.to_str().unwrap(), weather.to_str().unwrap(), reg.to_str().unwrap());
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--design", "fig3", "--n", "100", "--reps", "12", "--seed", "9"]),
        ("oracle", vec!["oracle", "--dgp", "QinA", "--n", "200", "--seed", "9"]),
        (
            "select",
            vec!["select", "--panel", panel, "--weather", weather, "--models", reg, "--seed", "9", "--splits", "40"],
        ),
    ];
    let mut compared = 0;
    for (label, args) in &runs {
        let mut outputs = Vec::new();
        for (r, threads) in ["1", "2", "1"].iter().enumerate() {
            let out = root.join(format!("{label}{r}"));
            let mut a = args.clone();
            a.extend(["--threads", threads]);
            run_cli(&a, &out)?;
            let mut files: Vec<_> = std::fs::read_dir(&out)
                .map_err(|e| e.to_string())?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            files.sort();
            let bytes: Vec<(String, Vec<u8>)> = files
                .iter()
                .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(f).unwrap()))
                .collect();
            outputs.push(bytes);
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            return Ok((false, format!("{label} output differs between runs")));
        }
        compared += outputs[0].len();
    }
    Ok((true, format!("{compared} CSVs byte-identical across 3 runs each (1 and 2 threads)")))
}

fn main() {
    let outcomes = [
        check("LSDV oracle equivalence", lsdv_equivalence),
        check("Correct-specification recovery", table1_analogue),
        check("Nested pseudo-true law", nested_pseudo_true),
        check("QinA self-recovery", qina_recovery),
        check("MSPE decomposition", mspe_decomposition),
        check("Consistency", consistency),
        check("Pseudo-inconsistency", pseudo_inconsistency),
        check("Prediction equality at pseudo-true parameters", prediction_equality),
        check("Determinism", determinism),
    ];
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        for f in failed {
            eprintln!("failed: {} ({})", f.name, f.detail);
        }
        std::process::exit(1);
    }
}
