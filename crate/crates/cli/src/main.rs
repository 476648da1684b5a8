//! `panelsel`: estimation, selection, nesting, oracle and simulation from the
//! command line. Exit status 0 on success, 2 on invalid input, 3 on a
//! numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use panelsel::io::{self, CsvTable};
use panelsel::nesting::{default_probes, detect_nesting, NestingVerdict};
use panelsel::oracle::{pseudo_true_analysis, DgpTruth};
use panelsel::selection::{gic_select, mccv_select, CriterionSpec};
use panelsel::sim::{
    standard_candidate_sets, standard_dgps, run_phacking_experiment, run_pseudo_true_experiment, run_selection_experiment,
    synth_weather, DgpSpec, WeatherConfig,
};
use panelsel::{fe_estimate, Calendar, DesignOptions, Error, FeatureKind, ModelSpec, PanelDataset, WeatherPanel};

#[derive(Parser, Debug)]
#[command(name = "panelsel", version, about = "Model selection for fixed-effects panels with high-frequency regressors")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Panel CSV: unit,period,y[,controls...]
    #[arg(long, global = true)]
    panel: Option<PathBuf>,
    /// Weather CSV: unit,period,tau,w
    #[arg(long, global = true)]
    weather: Option<PathBuf>,
    /// Model registry file
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Copy)]
struct DesignFlags {
    /// Append the panel's control columns
    #[arg(long)]
    controls: bool,
    /// Append period dummies
    #[arg(long)]
    year_effects: bool,
}

impl From<DesignFlags> for DesignOptions {
    fn from(f: DesignFlags) -> Self {
        DesignOptions {
            controls: f.controls,
            year_effects: f.year_effects,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit every registry model; writes fit.csv
    Estimate {
        #[command(flatten)]
        design: DesignFlags,
    },
    /// Score the registry models under each criterion; writes report.csv
    Select {
        /// Comma-separated: aic,bic,sw1,sw2,mccv-p:<p>,mccv-shao
        #[arg(long, default_value = "aic,bic,sw1,sw2,mccv-p:0.75,mccv-shao")]
        criteria: String,
        /// MCCV splits (default: max(100, 20 ceil(n / n_c)))
        #[arg(long)]
        splits: Option<usize>,
        /// Output path (default: <out-dir>/report.csv)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        design: DesignFlags,
    },
    /// Decide whether model A is nested in model G
    Nest {
        a: String,
        g: String,
        /// Positions per period for built-in models
        #[arg(long, default_value_t = 365)]
        h: usize,
    },
    /// Pseudo-true parameters, misspecification error and MSPE parts; writes oracle.csv
    Oracle {
        /// Built-in DGP whose response is the truth
        #[arg(long, value_enum, default_value_t = DgpName::A)]
        dgp: DgpName,
        /// Registry model to use as the truth instead of --dgp
        #[arg(long, requires = "beta")]
        star: Option<String>,
        /// Comma-separated coefficients for --star
        #[arg(long, requires = "star")]
        beta: Option<String>,
        /// Error variance (default: the DGP's own)
        #[arg(long)]
        sigma2: Option<f64>,
        /// Synthetic units when no --weather is given
        #[arg(long, default_value_t = 3000)]
        n: usize,
    },
    /// Run a Monte Carlo design; writes coefficients.csv, selection.csv, mse.csv
    Simulate {
        #[arg(long, value_enum)]
        design: SimDesign,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Units (default: 3000 for table3, else 500)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "aic,bic,sw1,sw2,mccv-p:0.75,mccv-shao")]
        criteria: String,
        #[arg(long)]
        splits: Option<usize>,
    },
    /// Write a synthetic panel.csv and weather.csv
    Synth {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, value_enum, default_value_t = DgpName::A)]
        dgp: DgpName,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SimDesign {
    Phacking,
    Table3,
    Fig3,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum DgpName {
    #[value(name = "A")]
    A,
    #[value(name = "QinA")]
    QinA,
    #[value(name = "Q")]
    Q,
}

impl DgpName {
    fn spec(self) -> DgpSpec {
        match self {
            DgpName::A => DgpSpec::annual(),
            DgpName::QinA => DgpSpec::qina(),
            DgpName::Q => DgpSpec::quarterly(),
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Estimate { design } => estimate(g, *design),
        Command::Select {
            criteria,
            splits,
            out,
            design,
        } => select(g, criteria, *splits, out.as_deref(), *design),
        Command::Nest { a, g: gamma, h } => nest(g, a, gamma, *h),
        Command::Oracle {
            dgp,
            star,
            beta,
            sigma2,
            n,
        } => oracle(g, *dgp, star.as_deref(), beta.as_deref(), *sigma2, *n),
        Command::Simulate {
            design,
            reps,
            n,
            criteria,
            splits,
        } => simulate(g, *design, *reps, *n, criteria, *splits),
        Command::Synth { n, dgp } => synth(g, *n, *dgp),
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    let p = path.as_deref().ok_or_else(|| usage(format!("--{flag} is required")))?;
    if !p.is_file() {
        return Err(usage(format!("--{flag}: {} is not a readable file", p.display())));
    }
    Ok(p)
}

fn seed(g: &Global, why: &str) -> Result<u64, Failure> {
    g.seed.ok_or_else(|| usage(format!("--seed is required {why}")))
}

fn load(g: &Global) -> Result<(PanelDataset, Vec<ModelSpec>), Failure> {
    let panel = require(&g.panel, "panel")?;
    let weather = require(&g.weather, "weather")?;
    let models = require(&g.models, "models")?;
    let data = io::load_dataset(panel, weather, None)?;
    let specs = read_registry(models, data.calendar())?;
    Ok((data, specs))
}

fn read_registry(path: &Path, calendar: &Calendar) -> Result<Vec<ModelSpec>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    if text.lines().all(|l| l.split('#').next().unwrap_or("").trim().is_empty()) {
        return Err(usage(format!("{}: the model list is empty", path.display())));
    }
    io::parse_registry(&text, calendar).map_err(|e| match e {
        Error::Parse { line, message } => usage(format!("{}:{line}: {message}", path.display())),
        other => Failure::Lib(other),
    })
}

fn write(g: &Global, name: &str, table: &CsvTable) -> Outcome {
    write_to(&g.out_dir.join(name), table)
}

fn write_to(path: &Path, table: &CsvTable) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    table.write_atomic(path)?;
    Ok(())
}

fn estimate(g: &Global, design: DesignFlags) -> Outcome {
    let (data, models) = load(g)?;
    let fits = models
        .iter()
        .map(|m| fe_estimate(&data, m, design.into()))
        .collect::<Result<Vec<_>, _>>()?;
    write(g, "fit.csv", &io::fit_table(&fits))
}

fn parse_criteria(list: &str, splits: Option<usize>, seed: Option<u64>) -> Result<Vec<CriterionSpec>, Failure> {
    let tokens: Vec<&str> = list.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        return Err(usage("no criteria given"));
    }
    let needs_seed = tokens.iter().any(|t| t.to_ascii_lowercase().starts_with("mccv"));
    let seed = match (needs_seed, seed) {
        (true, None) => return Err(usage("--seed is required for MCCV criteria")),
        (_, s) => s.unwrap_or(0),
    };
    tokens
        .iter()
        .map(|t| CriterionSpec::parse(t, splits, seed).map_err(|e| usage(e.to_string())))
        .collect()
}

fn select(g: &Global, criteria: &str, splits: Option<usize>, out: Option<&Path>, design: DesignFlags) -> Outcome {
    let criteria = parse_criteria(criteria, splits, g.seed)?;
    let (data, models) = load(g)?;
    let reports = criteria
        .iter()
        .map(|c| match c {
            CriterionSpec::Gic(p) => gic_select(&data, &models, p, design.into()),
            CriterionSpec::Mccv(cfg) => mccv_select(&data, &models, cfg, design.into()),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = io::selection_table(&reports);
    match out {
        Some(path) => write_to(path, &table),
        None => write(g, "report.csv", &table),
    }
}

fn builtin(name: &str, calendar: &Calendar) -> Option<ModelSpec> {
    let kind = match name.to_ascii_lowercase().as_str() {
        "annual" | "a" | "annual_mean" => FeatureKind::AnnualMean,
        "biannual" | "h" | "biannual_means" => FeatureKind::BiannualMeans,
        "quarterly" | "q" | "quarterly_means" => FeatureKind::QuarterlyMeans,
        "monthly" | "m" | "monthly_means" => FeatureKind::MonthlyMeans,
        "quadratic" | "qina" | "quadratic_annual" => FeatureKind::QuadraticAnnual,
        _ => return None,
    };
    ModelSpec::new(name, kind, calendar.clone()).ok()
}

fn nest(g: &Global, a: &str, gamma: &str, h: usize) -> Outcome {
    let calendar = Calendar::for_length(h)?;
    let registry = match &g.models {
        Some(p) => read_registry(p, &calendar)?,
        None => Vec::new(),
    };
    let find = |name: &str| {
        registry
            .iter()
            .find(|m| m.name() == name)
            .cloned()
            .or_else(|| builtin(name, &calendar))
            .ok_or_else(|| usage(format!("unknown model '{name}'")))
    };
    let (spec_a, spec_g) = (find(a)?, find(gamma)?);
    let probes = default_probes(calendar.len(), g.seed.unwrap_or(0));
    let rel = detect_nesting(&spec_a, &spec_g, &probes)?;
    let mut table = CsvTable::new(&["verdict", "row", "col", "value"]);
    let label = rel.label();
    println!("{label}");
    match &rel.verdict {
        NestingVerdict::Nested { r } => {
            for i in 0..r.nrows() {
                let row: Vec<String> = r.row(i).iter().map(|v| io::fmt_f64(*v)).collect();
                println!("R[{}] = {}", i + 1, row.join(" "));
                for (j, v) in row.into_iter().enumerate() {
                    table.push(vec![label.into(), (i + 1).to_string(), (j + 1).to_string(), v]);
                }
            }
        }
        NestingVerdict::OverlappingNonNested { beta_a, beta_g } => {
            println!("witness a = {}", join(beta_a.iter()));
            println!("witness g = {}", join(beta_g.iter()));
        }
        NestingVerdict::StrictlyNonNested => {}
    }
    println!("residual = {}", io::fmt_f64(rel.residual));
    if g.out_dir != Path::new(".") {
        write(g, "nest.csv", &table)?;
    }
    Ok(())
}

fn join<'a>(v: impl Iterator<Item = &'a f64>) -> String {
    v.map(|x| io::fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

fn weather_input(g: &Global, n: usize) -> Result<(WeatherPanel, Calendar), Failure> {
    match &g.weather {
        Some(_) => {
            let path = require(&g.weather, "weather")?;
            let file = fs::File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
            let (w, _, _) = io::read_weather(file)?;
            let calendar = Calendar::for_length(w.h())?;
            Ok((w, calendar))
        }
        None => {
            let seed = seed(g, "to generate synthetic weather")?;
            let cfg = WeatherConfig::default().with_n(n).with_seed(seed);
            Ok((synth_weather(&cfg)?, cfg.calendar()?))
        }
    }
}

fn oracle(
    g: &Global,
    dgp: DgpName,
    star: Option<&str>,
    beta: Option<&str>,
    sigma2: Option<f64>,
    n: usize,
) -> Outcome {
    let (weather, calendar) = weather_input(g, n)?;
    let models = match &g.models {
        Some(p) => read_registry(p, &calendar)?,
        None => panelsel::sim::standard_models(&calendar),
    };
    let dgp = dgp.spec();
    let default_sigma2 = DgpTruth::from_dgp(&dgp, &calendar, weather.t())?.sigma2;
    let truth = match (star, beta) {
        (Some(name), Some(b)) => {
            let spec = models
                .iter()
                .find(|m| m.name() == name)
                .cloned()
                .or_else(|| builtin(name, &calendar))
                .ok_or_else(|| usage(format!("unknown model '{name}'")))?;
            let beta = b
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("bad coefficient '{x}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            DgpTruth::new(spec, beta, sigma2.unwrap_or(default_sigma2))?
        }
        _ => {
            let (spec, beta) = dgp.star(&calendar);
            DgpTruth::new(spec, beta, sigma2.unwrap_or(default_sigma2))?
        }
    };
    let results = models
        .iter()
        .map(|m| pseudo_true_analysis(&weather, m, &truth))
        .collect::<Result<Vec<_>, _>>()?;
    write(g, "oracle.csv", &io::oracle_table(&results))
}

fn simulate(
    g: &Global,
    design: SimDesign,
    reps: usize,
    n: Option<usize>,
    criteria: &str,
    splits: Option<usize>,
) -> Outcome {
    let seed = seed(g, "for simulate")?;
    let n = n.unwrap_or(if design == SimDesign::Table3 { 3000 } else { 500 });
    let (weather, calendar) = match &g.weather {
        Some(_) => weather_input(g, n)?,
        None => {
            let cfg = WeatherConfig::default().with_n(n).with_seed(seed);
            (synth_weather(&cfg)?, cfg.calendar()?)
        }
    };
    let dgps = standard_dgps();
    let report = match design {
        SimDesign::Phacking => run_phacking_experiment(&weather, &calendar, &dgps, reps, seed)?,
        SimDesign::Table3 => run_pseudo_true_experiment(&weather, &calendar, &dgps, reps, seed)?,
        SimDesign::Fig3 => {
            let criteria = parse_criteria(criteria, splits, Some(seed))?;
            run_selection_experiment(&weather, &calendar, &dgps, &standard_candidate_sets(), &criteria, reps, seed)?
        }
    };
    for (name, table) in io::simulation_tables(&report) {
        write(g, name, &table)?;
    }
    let failed: usize = report.failed.iter().map(|(_, f)| f).sum();
    if failed > 0 {
        eprintln!("warning: {failed} replications failed and were dropped");
    }
    Ok(())
}

fn synth(g: &Global, n: usize, dgp: DgpName) -> Outcome {
    let seed = seed(g, "for synth")?;
    let cfg = WeatherConfig::default().with_n(n).with_seed(seed);
    let weather = synth_weather(&cfg)?;
    let calendar = cfg.calendar()?;
    let y = panelsel::gen_outcome(&weather, &dgp.spec(), &calendar, seed)?;
    let data = PanelDataset::from_arrays(y, weather, calendar)?;
    write(g, "panel.csv", &io::panel_table(&data))?;
    write(
        g,
        "weather.csv",
        &io::weather_table(data.weather(), data.unit_ids(), data.period_ids()),
    )
}
