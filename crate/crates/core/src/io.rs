//! CSV ingestion, the model registry format, and atomic CSV output.
//!
//! Panel CSV: `unit,period,y[,control...]`, one row per unit and period. A
//! column named `cluster` is read as the unit's cluster label instead of a
//! control. Weather CSV: `unit,period,tau,w` with `tau` in `1..=H`. Units and
//! periods are ordered by first appearance in the panel file.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::calendar::Calendar;
use crate::error::{Error, Result};
use crate::fe::FeFit;
use crate::features::{FeatureKind, ModelSpec};
use crate::oracle::PseudoTrueResult;
use crate::panel::{Controls, PanelDataset, WeatherPanel};
use crate::selection::SelectionReport;
use crate::sim::SimulationReport;

/// `%.17g`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column '{column}': '{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column '{column}': missing or non-finite value '{field}'"),
        });
    }
    Ok(v)
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], file: &str) -> Result<()> {
    for (j, want) in expected.iter().enumerate() {
        if headers.get(j) != Some(*want) {
            return Err(Error::Parse {
                line: 1,
                message: format!("{file} header must start with {}", expected.join(",")),
            });
        }
    }
    Ok(())
}

/// Outcome, controls and clusters from a panel CSV, before weather is
/// attached.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub unit_ids: Vec<String>,
    pub period_ids: Vec<String>,
    pub outcome: DMatrix<f64>,
    pub controls: Option<Controls>,
    pub cluster_ids: Option<Vec<String>>,
}

pub fn parse_panel<R: Read>(input: R) -> Result<PanelTable> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    check_header(&headers, &["unit", "period", "y"], "panel")?;
    let cluster_col = headers.iter().position(|h| h == "cluster");
    let control_cols: Vec<usize> = (3..headers.len()).filter(|&j| Some(j) != cluster_col).collect();
    let control_names: Vec<String> = control_cols.iter().map(|&j| headers[j].to_string()).collect();

    let mut units: Vec<String> = Vec::new();
    let mut periods: Vec<String> = Vec::new();
    let mut unit_ix: HashMap<String, usize> = HashMap::new();
    let mut period_ix: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), (f64, Vec<f64>, usize)> = HashMap::new();
    let mut clusters: HashMap<usize, String> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let u = intern(&record[0], &mut units, &mut unit_ix);
        let p = intern(&record[1], &mut periods, &mut period_ix);
        let y = parse_f64(&record[2], line, "y")?;
        let controls = control_cols
            .iter()
            .map(|&j| parse_f64(&record[j], line, &headers[j]))
            .collect::<Result<Vec<_>>>()?;
        if let Some(j) = cluster_col {
            let label = record[j].to_string();
            match clusters.get(&u) {
                Some(prev) if *prev != label => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unit '{}' changes cluster from '{prev}' to '{label}'", &record[0]),
                    })
                }
                _ => {
                    clusters.insert(u, label);
                }
            }
        }
        if let Some((_, _, first)) = cells.insert((u, p), (y, controls, line)) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate row for unit '{}', period '{}' (first at line {first})", &record[0], &record[1]),
            });
        }
    }

    let (n, t) = (units.len(), periods.len());
    let c = control_names.len();
    let mut outcome = DMatrix::zeros(n, t);
    let mut control_values = vec![0.0; n * t * c];
    for i in 0..n {
        for p in 0..t {
            let Some((y, ctrl, _)) = cells.get(&(i, p)) else {
                return Err(Error::invalid(format!(
                    "unbalanced panel: unit '{}' has no row for period '{}'",
                    units[i], periods[p]
                )));
            };
            outcome[(i, p)] = *y;
            control_values[(i * t + p) * c..(i * t + p + 1) * c].copy_from_slice(ctrl);
        }
    }
    Ok(PanelTable {
        cluster_ids: cluster_col.map(|_| (0..n).map(|i| clusters[&i].clone()).collect()),
        unit_ids: units,
        period_ids: periods,
        outcome,
        controls: (c > 0).then_some(Controls {
            names: control_names,
            values: control_values,
        }),
    })
}

fn intern(label: &str, list: &mut Vec<String>, index: &mut HashMap<String, usize>) -> usize {
    if let Some(&i) = index.get(label) {
        return i;
    }
    list.push(label.to_string());
    index.insert(label.to_string(), list.len() - 1);
    list.len() - 1
}

/// Weather aligned to the given unit and period order.
pub fn parse_weather<R: Read>(input: R, unit_ids: &[String], period_ids: &[String]) -> Result<WeatherPanel> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    check_header(&headers, &["unit", "period", "tau", "w"], "weather")?;
    let unit_ix: HashMap<&str, usize> = unit_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let period_ix: HashMap<&str, usize> = period_ids.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut rows: Vec<(usize, usize, usize, f64, usize)> = Vec::new();
    let mut h = 0;
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let i = *unit_ix.get(&record[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unit '{}' is not in the panel", &record[0]),
        })?;
        let p = *period_ix.get(&record[1]).ok_or_else(|| Error::Parse {
            line,
            message: format!("period '{}' is not in the panel", &record[1]),
        })?;
        let tau: usize = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("tau '{}' is not a positive integer", &record[2]),
        })?;
        if tau == 0 {
            return Err(Error::Parse {
                line,
                message: "tau starts at 1".into(),
            });
        }
        let w = parse_f64(&record[3], line, "w")?;
        h = h.max(tau);
        rows.push((i, p, tau - 1, w, line));
    }
    let (n, t) = (unit_ids.len(), period_ids.len());
    if h == 0 {
        return Err(Error::invalid("weather file has no observations"));
    }
    let mut values = vec![f64::NAN; n * t * h];
    for (i, p, tau, w, line) in rows {
        let slot = &mut values[(i * t + p) * h + tau];
        if !slot.is_nan() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate weather observation for unit '{}', period '{}', tau {}", unit_ids[i], period_ids[p], tau + 1),
            });
        }
        *slot = w;
    }
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        let (cell, tau) = (pos / h, pos % h);
        return Err(Error::invalid(format!(
            "weather missing for unit '{}', period '{}', tau {} (H = {h})",
            unit_ids[cell / t],
            period_ids[cell % t],
            tau + 1
        )));
    }
    WeatherPanel::new(n, t, h, values)
}

/// Weather file on its own; units and periods in order of first
/// appearance.
pub fn read_weather<R: Read>(mut input: R) -> Result<(WeatherPanel, Vec<String>, Vec<String>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut rdr = reader(bytes.as_slice());
    let (mut units, mut periods) = (Vec::new(), Vec::new());
    let (mut unit_ix, mut period_ix) = (HashMap::new(), HashMap::new());
    for record in rdr.records() {
        let record = record?;
        if record.len() >= 2 {
            intern(&record[0], &mut units, &mut unit_ix);
            intern(&record[1], &mut periods, &mut period_ix);
        }
    }
    let w = parse_weather(bytes.as_slice(), &units, &periods)?;
    Ok((w, units, periods))
}

/// Load a dataset from panel and weather files. The calendar defaults to
/// [`Calendar::for_length`] of the observed `H`.
pub fn load_dataset(panel: &Path, weather: &Path, calendar: Option<Calendar>) -> Result<PanelDataset> {
    let table = parse_panel(open(panel)?).map_err(|e| in_file(e, panel))?;
    let w = parse_weather(open(weather)?, &table.unit_ids, &table.period_ids).map_err(|e| in_file(e, weather))?;
    let calendar = match calendar {
        Some(c) => c,
        None => Calendar::for_length(w.h())?,
    };
    PanelDataset::new(
        table.unit_ids,
        table.period_ids,
        table.outcome,
        w,
        table.controls,
        table.cluster_ids,
        calendar,
    )
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))
}

fn in_file(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// A header plus string rows, written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Write to a temporary file next to `path`, then rename over it.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn parse<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(input);
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| Ok(r?.iter().map(String::from).collect()))
            .collect::<Result<_>>()?;
        Ok(CsvTable { header, rows })
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Panel CSV in the ingestion format.
pub fn panel_table(data: &PanelDataset) -> CsvTable {
    let mut header = vec!["unit".to_string(), "period".to_string(), "y".to_string()];
    let controls = data.controls();
    if let Some(c) = controls {
        header.extend(c.names.iter().cloned());
    }
    let clustered = data.cluster_ids() != data.unit_ids();
    if clustered {
        header.push("cluster".into());
    }
    let t = data.t();
    let mut table = CsvTable { header, rows: Vec::new() };
    for (i, u) in data.unit_ids().iter().enumerate() {
        for (p, per) in data.period_ids().iter().enumerate() {
            let mut row = vec![u.clone(), per.clone(), fmt_f64(data.outcome()[(i, p)])];
            if let Some(c) = controls {
                let k = c.names.len();
                row.extend(c.values[(i * t + p) * k..(i * t + p + 1) * k].iter().map(|v| fmt_f64(*v)));
            }
            if clustered {
                row.push(data.cluster_ids()[i].clone());
            }
            table.rows.push(row);
        }
    }
    table
}

/// Weather CSV in the ingestion format.
pub fn weather_table(weather: &WeatherPanel, unit_ids: &[String], period_ids: &[String]) -> CsvTable {
    let mut table = CsvTable::new(&["unit", "period", "tau", "w"]);
    for (i, u) in unit_ids.iter().enumerate() {
        for (p, per) in period_ids.iter().enumerate() {
            for (tau, w) in weather.obs(i, p).iter().enumerate() {
                table.rows.push(vec![u.clone(), per.clone(), (tau + 1).to_string(), fmt_f64(*w)]);
            }
        }
    }
    table
}

/// Significance stars at 5%, 1% and 0.1% (two-sided normal).
pub fn stars(t_stat: f64) -> &'static str {
    let z = t_stat.abs();
    if z > 3.290_526_731_491_926 {
        "***"
    } else if z > 2.575_829_303_548_901 {
        "**"
    } else if z > 1.959_963_984_540_054 {
        "*"
    } else {
        ""
    }
}

/// `model,term,estimate,std_error,t_stat,stars` per coefficient.
pub fn fit_table(fits: &[FeFit]) -> CsvTable {
    let mut table = CsvTable::new(&["model", "term", "estimate", "std_error", "t_stat", "stars"]);
    for f in fits {
        let se = f.clustered_se();
        let t = f.t_stats();
        for j in 0..f.k() {
            table.push(vec![
                f.model_name.clone(),
                f.column_names[j].clone(),
                fmt_f64(f.beta_hat[j]),
                fmt_f64(se[j]),
                fmt_f64(t[j]),
                stars(t[j]).to_string(),
            ]);
        }
    }
    table
}

/// `criterion,model,score,selected`, one row per criterion and model.
pub fn selection_table(reports: &[SelectionReport]) -> CsvTable {
    let mut table = CsvTable::new(&["criterion", "model", "score", "selected"]);
    for r in reports {
        let label = r.criterion.label();
        for s in &r.scores {
            table.push(vec![
                label.clone(),
                s.model.clone(),
                fmt_f64(s.score),
                (s.model == r.selected).to_string(),
            ]);
        }
    }
    table
}

/// `model,coef_index,beta_pseudo,delta,category,mspe_noise,mspe_dim,mspe_misspec`;
/// `coef_index` counts from 1 and is empty for a model without features.
pub fn oracle_table(results: &[PseudoTrueResult]) -> CsvTable {
    let mut table = CsvTable::new(&[
        "model",
        "coef_index",
        "beta_pseudo",
        "delta",
        "category",
        "mspe_noise",
        "mspe_dim",
        "mspe_misspec",
    ]);
    for r in results {
        let tail = |index: String, beta: String| {
            vec![
                r.model_name.clone(),
                index,
                beta,
                fmt_f64(r.delta),
                r.category.to_string(),
                fmt_f64(r.mspe_parts.noise),
                fmt_f64(r.mspe_parts.dimension),
                fmt_f64(r.mspe_parts.misspec),
            ]
        };
        if r.beta_pseudo.is_empty() {
            table.push(tail(String::new(), String::new()));
        }
        for (j, b) in r.beta_pseudo.iter().enumerate() {
            table.push(tail((j + 1).to_string(), fmt_f64(*b)));
        }
    }
    table
}

/// `coefficients.csv`, `selection.csv` and `mse.csv` of a simulation.
/// Selection rows carry a 95% normal-approximation half-width.
pub fn simulation_tables(report: &SimulationReport) -> [(&'static str, CsvTable); 3] {
    let meta = |dgp: &str| {
        let failed = report.failed.iter().find(|(d, _)| d == dgp).map_or(0, |(_, f)| *f);
        (
            vec![
                report.design.clone(),
                report.n.to_string(),
                report.t.to_string(),
                (report.reps - failed).to_string(),
                report.seed.to_string(),
                dgp.to_string(),
            ],
            report.reps - failed,
        )
    };
    let head = ["design", "n", "t", "reps", "seed", "dgp"];
    let with = |extra: &[&str]| CsvTable::new(&[&head[..], extra].concat());

    let mut coef = with(&["model", "coefficient", "mean", "sd", "reject_rate"]);
    for c in &report.coefficients {
        let mut row = meta(&c.dgp).0;
        row.extend([
            c.model.clone(),
            c.coefficient.clone(),
            fmt_f64(c.mean),
            fmt_f64(c.sd),
            fmt_f64(c.reject_rate),
        ]);
        coef.push(row);
    }
    let mut sel = with(&["candidate_set", "criterion", "model", "frequency", "ci_half_width"]);
    for s in &report.selection {
        let (mut row, reps) = meta(&s.dgp);
        let half = 1.959_963_984_540_054 * (s.frequency * (1.0 - s.frequency) / reps as f64).sqrt();
        row.extend([
            s.candidate_set.clone(),
            s.criterion.clone(),
            s.model.clone(),
            fmt_f64(s.frequency),
            fmt_f64(half),
        ]);
        sel.push(row);
    }
    let mut mse = with(&["model", "mse"]);
    for m in &report.mse {
        let mut row = meta(&m.dgp).0;
        row.extend([m.model.clone(), fmt_f64(m.mse)]);
        mse.push(row);
    }
    [("coefficients.csv", coef), ("selection.csv", sel), ("mse.csv", mse)]
}

/// Parse a model registry: blocks of `key = value` lines separated by blank
/// lines, with keys `name`, `kind` and optional `params`; `#` starts a
/// comment. Kinds: `none`, `annual_mean`, `biannual_means`,
/// `quarterly_means`, `monthly_means`, `quadratic_annual`, `bins` (edges),
/// `degree_days` (bases), `matrix` (rows separated by `;`).
pub fn parse_registry(text: &str, calendar: &Calendar) -> Result<Vec<ModelSpec>> {
    let mut models = Vec::new();
    let mut block: Vec<(usize, String, String)> = Vec::new();
    let mut start = 0;
    for (ix, raw) in text.lines().chain(std::iter::once("")).enumerate() {
        let line = ix + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            if !block.is_empty() {
                models.push(registry_block(&block, start, calendar)?);
                block.clear();
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=').or_else(|| content.split_once(':')) else {
            return Err(Error::Parse {
                line,
                message: format!("expected 'key = value', found '{content}'"),
            });
        };
        if block.is_empty() {
            start = line;
        }
        block.push((line, key.trim().to_ascii_lowercase(), value.trim().to_string()));
    }
    if models.is_empty() {
        return Err(Error::invalid("model registry defines no models"));
    }
    crate::selection::check_unique_names(models.iter().map(|m| m.name()))?;
    Ok(models)
}

fn registry_block(block: &[(usize, String, String)], start: usize, calendar: &Calendar) -> Result<ModelSpec> {
    let mut name = None;
    let mut kind = None;
    let mut params = (start, String::new());
    for (line, key, value) in block {
        let slot = match key.as_str() {
            "name" => &mut name,
            "kind" => &mut kind,
            "params" => {
                params = (*line, value.clone());
                continue;
            }
            other => {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("unknown registry key '{other}'"),
                })
            }
        };
        if slot.replace((*line, value.clone())).is_some() {
            return Err(Error::Parse {
                line: *line,
                message: format!("repeated key '{key}'"),
            });
        }
    }
    let missing = |what: &str| Error::Parse {
        line: start,
        message: format!("model block is missing '{what}'"),
    };
    let (_, name) = name.ok_or_else(|| missing("name"))?;
    let (kind_line, kind) = kind.ok_or_else(|| missing("kind"))?;
    let (params_line, params) = params;
    let numbers = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::Parse {
                    line: params_line,
                    message: format!("'{p}' is not a number"),
                })
            })
            .collect()
    };
    let kind = match kind.to_ascii_lowercase().as_str() {
        "none" | "empty" | "baseline" => FeatureKind::Empty,
        "annual_mean" => FeatureKind::AnnualMean,
        "biannual_means" => FeatureKind::BiannualMeans,
        "quarterly_means" => FeatureKind::QuarterlyMeans,
        "monthly_means" => FeatureKind::MonthlyMeans,
        "quadratic_annual" => FeatureKind::QuadraticAnnual,
        "bins" => FeatureKind::Bins(numbers(&params)?),
        "degree_days" => FeatureKind::DegreeDays(numbers(&params)?),
        "matrix" => {
            let rows = params
                .split(';')
                .map(numbers)
                .collect::<Result<Vec<_>>>()?;
            let cols = rows.first().map_or(0, Vec::len);
            if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
                return Err(Error::Parse {
                    line: params_line,
                    message: "matrix rows must be non-empty and of equal length".into(),
                });
            }
            FeatureKind::Matrix(DMatrix::from_row_slice(rows.len(), cols, &rows.concat()))
        }
        other => {
            return Err(Error::Parse {
                line: kind_line,
                message: format!("unknown model kind '{other}'"),
            })
        }
    };
    ModelSpec::new(name, kind, calendar.clone()).map_err(|e| match e {
        Error::Invalid(message) => Error::Parse { line: start, message },
        other => other,
    })
}

/// Registry text for specs built from registry kinds (custom closures
/// cannot be written).
pub fn registry_text(models: &[ModelSpec]) -> Result<String> {
    let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
    let mut out = String::new();
    for m in models {
        let (kind, params) = match m.kind() {
            FeatureKind::Empty => ("none", String::new()),
            FeatureKind::AnnualMean => ("annual_mean", String::new()),
            FeatureKind::BiannualMeans => ("biannual_means", String::new()),
            FeatureKind::QuarterlyMeans => ("quarterly_means", String::new()),
            FeatureKind::MonthlyMeans => ("monthly_means", String::new()),
            FeatureKind::QuadraticAnnual => ("quadratic_annual", String::new()),
            FeatureKind::Bins(e) => ("bins", join(e)),
            FeatureKind::DegreeDays(b) => ("degree_days", join(b)),
            FeatureKind::Matrix(mat) => (
                "matrix",
                mat.row_iter()
                    .map(|r| join(&r.iter().copied().collect::<Vec<_>>()))
                    .collect::<Vec<_>>()
                    .join("; "),
            ),
            FeatureKind::Custom { .. } => {
                return Err(Error::invalid(format!("model '{}' uses a closure and has no registry form", m.name())))
            }
        };
        out.push_str(&format!("name = {}\nkind = {kind}\n", m.name()));
        if !params.is_empty() {
            out.push_str(&format!("params = {params}\n"));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(0.1), "0.10000000000000001");
        assert_eq!(fmt_f64(-2.5), "-2.5");
        assert_eq!(fmt_f64(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_f64(1e20), "1e+20");
        assert_eq!(fmt_f64(123456.0), "123456");
        for x in [std::f64::consts::PI, -1.0 / 3.0, 6.02214076e23, 5e-324, f64::MAX] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn panel_roundtrip_with_controls_and_clusters() {
        let csv = "unit,period,y,precip,cluster\nb,1990,1.5,3,s1\nb,1991,2,4,s1\na,1990,0.5,1,s2\na,1991,1,2,s2\n";
        let t = parse_panel(csv.as_bytes()).unwrap();
        assert_eq!(t.unit_ids, vec!["b", "a"]);
        assert_eq!(t.outcome[(1, 1)], 1.0);
        assert_eq!(t.controls.as_ref().unwrap().values, vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(t.cluster_ids.as_ref().unwrap(), &vec!["s1".to_string(), "s2".to_string()]);
    }

    #[test]
    fn panel_errors_carry_lines() {
        let err = parse_panel("unit,period,y\na,1,1\na,2,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_panel("unit,period,y\na,1,1\na,1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_panel("unit,period,y\na,1,1\na,2,2\nb,1,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unbalanced"), "{err}");
        assert!(parse_panel("id,period,y\n".as_bytes()).is_err());
    }

    #[test]
    fn weather_alignment() {
        let units = vec!["a".to_string(), "b".to_string()];
        let periods = vec!["1".to_string()];
        let csv = "unit,period,tau,w\nb,1,2,4\na,1,1,1\nb,1,1,3\na,1,2,2\n";
        let w = parse_weather(csv.as_bytes(), &units, &periods).unwrap();
        assert_eq!(w.values(), &[1.0, 2.0, 3.0, 4.0]);
        let missing = "unit,period,tau,w\na,1,1,1\nb,1,1,3\na,1,2,2\n";
        assert!(parse_weather(missing.as_bytes(), &units, &periods).is_err());
    }

    #[test]
    fn registry_roundtrip() {
        let cal = Calendar::non_leap();
        let text = "# candidates\nname = N\nkind = none\n\nname = A\nkind = annual_mean\n\nname = B\nkind = bins\nparams = 0, 10.5, 20\n";
        let models = parse_registry(text, &cal).unwrap();
        assert_eq!(models.iter().map(|m| m.k()).collect::<Vec<_>>(), vec![0, 1, 4]);
        let again = parse_registry(&registry_text(&models).unwrap(), &cal).unwrap();
        assert_eq!(again.len(), 3);
        assert_eq!(again[2].column_names(), models[2].column_names());
    }

    #[test]
    fn registry_errors() {
        let cal = Calendar::non_leap();
        let err = parse_registry("name = A\nkind = cubic\n", &cal).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_registry("name = A\n\nname = B\nkind = annual_mean\n", &cal).unwrap_err();
        assert!(err.to_string().contains("missing 'kind'"));
        assert!(parse_registry("name = B\nkind = bins\nparams = 3, 1\n", &cal).is_err());
        assert!(parse_registry("", &cal).is_err());
        assert!(parse_registry("name=A\nkind=annual_mean\n\nname=A\nkind=annual_mean\n", &cal).is_err());
    }
}
