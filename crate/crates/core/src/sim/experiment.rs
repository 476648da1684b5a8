//! Replication engine: draw outcomes on a fixed weather panel, fit every
//! model, record coefficients, tests and selections.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::dgp::{DgpSpec, OutcomeGenerator};
use crate::calendar::Calendar;
use crate::error::{Error, Result};
use crate::fe::{FeFit, WithinFitter};
use crate::features::{build_design, ModelSpec};
use crate::panel::{demean_rows, WeatherPanel};
use crate::rng::{domain, stream_id, stream_rng};
use crate::selection::{
    check_unique_names, gic_scores, mccv_scores, CriterionSpec, MccvConfig, MccvDesign, ModelScore, SelectionReport,
};

/// Two-sided 5% normal critical value.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Everything one simulation run needs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub design: String,
    pub weather: WeatherPanel,
    pub calendar: Calendar,
    pub dgps: Vec<DgpSpec>,
    pub models: Vec<ModelSpec>,
    /// Model names per selection problem.
    pub candidate_sets: Vec<Vec<String>>,
    pub criteria: Vec<CriterionSpec>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSummary {
    pub dgp: String,
    pub model: String,
    pub coefficient: String,
    pub mean: f64,
    pub sd: f64,
    /// Share of replications rejecting `beta_j = 0` at 5% with clustered SEs.
    pub reject_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFrequency {
    pub dgp: String,
    /// Model names joined by `+`.
    pub candidate_set: String,
    pub criterion: String,
    pub model: String,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseSummary {
    pub dgp: String,
    pub model: String,
    /// Mean over replications of `sum (y~ - x~' beta_bar)^2 / (nT)`.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub design: String,
    pub n: usize,
    pub t: usize,
    pub reps: usize,
    pub seed: u64,
    /// Replications dropped per DGP after a fit or selection failure.
    pub failed: Vec<(String, usize)>,
    pub coefficients: Vec<CoefficientSummary>,
    pub selection: Vec<SelectionFrequency>,
    pub mse: Vec<MseSummary>,
}

impl SimulationReport {
    pub fn coefficient(&self, dgp: &str, model: &str, coefficient: &str) -> Option<&CoefficientSummary> {
        self.coefficients
            .iter()
            .find(|c| c.dgp == dgp && c.model == model && c.coefficient == coefficient)
    }

    /// Frequency with which `model` was chosen; `candidate_set` uses the
    /// `+`-joined label.
    pub fn frequency(&self, dgp: &str, candidate_set: &str, criterion: &str, model: &str) -> Option<f64> {
        self.selection
            .iter()
            .find(|s| s.dgp == dgp && s.candidate_set == candidate_set && s.criterion == criterion && s.model == model)
            .map(|s| s.frequency)
    }

    pub fn mse(&self, dgp: &str, model: &str) -> Option<f64> {
        self.mse.iter().find(|m| m.dgp == dgp && m.model == model).map(|m| m.mse)
    }
}

// Per replication, per DGP.
struct RepResult {
    betas: Vec<DVector<f64>>,
    rejects: Vec<Vec<bool>>,
    yy: f64,
    xty: Vec<DVector<f64>>,
    /// `[set][criterion]` -> model index.
    choices: Vec<Vec<usize>>,
}

struct Prepared {
    fitters: Vec<WithinFitter>,
    mccv: Vec<MccvDesign>,
    grams: Vec<DMatrix<f64>>,
    generators: Vec<OutcomeGenerator>,
    sets: Vec<Vec<usize>>,
}

impl Experiment {
    fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::invalid(format!("need at least 2 replications, got {}", self.reps)));
        }
        if self.dgps.is_empty() || self.models.is_empty() {
            return Err(Error::invalid("experiment needs at least one DGP and one model"));
        }
        check_unique_names(self.models.iter().map(|m| m.name()))?;
        check_unique_names(self.dgps.iter().map(|d| d.name.as_str()))?;
        for c in &self.criteria {
            c.validate()?;
        }
        if !self.criteria.is_empty() && self.candidate_sets.is_empty() {
            return Err(Error::invalid("criteria given without candidate sets"));
        }
        Ok(())
    }

    fn prepare(&self) -> Result<Prepared> {
        let (n, t) = (self.weather.n(), self.weather.t());
        let units: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let fitters = self
            .models
            .iter()
            .map(|m| {
                let design = build_design(&self.weather, m).map_err(|e| e.in_model(m.name()))?;
                WithinFitter::new(m.name(), design, m.column_names(), m.k(), n, t, &units)
            })
            .collect::<Result<Vec<_>>>()?;
        let needs_mccv = self.criteria.iter().any(|c| matches!(c, CriterionSpec::Mccv(_)));
        let mccv = if needs_mccv {
            self.models
                .iter()
                .zip(&fitters)
                .map(|(m, f)| MccvDesign::from_demeaned(m.name(), f.demeaned_design().clone(), n, t))
                .collect()
        } else {
            Vec::new()
        };
        let grams = fitters
            .iter()
            .map(|f| f.demeaned_design().tr_mul(f.demeaned_design()))
            .collect();
        let generators = self
            .dgps
            .iter()
            .map(|d| OutcomeGenerator::new(&self.weather, d, &self.calendar))
            .collect::<Result<Vec<_>>>()?;
        let sets = self
            .candidate_sets
            .iter()
            .map(|set| {
                if set.is_empty() {
                    return Err(Error::invalid("empty candidate set"));
                }
                check_unique_names(set.iter().map(String::as_str))?;
                set.iter()
                    .map(|name| {
                        self.models
                            .iter()
                            .position(|m| m.name() == name)
                            .ok_or_else(|| Error::invalid(format!("candidate '{name}' is not among the fitted models")))
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<usize>>>>()?;
        Ok(Prepared {
            fitters,
            mccv,
            grams,
            generators,
            sets,
        })
    }

    fn one_rep(&self, prep: &Prepared, d: usize, rep: usize) -> Result<RepResult> {
        let (n, t) = (self.weather.n(), self.weather.t());
        let key = ((d as u64) << 32) | rep as u64;
        let y = prep.generators[d].draw(self.seed, key);
        let mut stacked = DMatrix::from_column_slice(n * t, 1, y.transpose().as_slice());
        demean_rows(&mut stacked, n, t);
        let y_tilde = stacked.column(0).into_owned();

        let fits = prep
            .fitters
            .iter()
            .map(|f| f.fit(&y_tilde))
            .collect::<Result<Vec<FeFit>>>()?;
        let betas: Vec<DVector<f64>> = fits.iter().map(|f| f.beta_hat.clone()).collect();
        let rejects = fits
            .iter()
            .map(|f| f.t_stats().iter().map(|z| z.abs() > Z_975).collect())
            .collect();
        let xty = prep.fitters.iter().map(|f| f.demeaned_design().tr_mul(&y_tilde)).collect();

        let mut choices = Vec::with_capacity(prep.sets.len());
        if !self.criteria.is_empty() {
            if fits.iter().any(|f| f.perfect_fit) {
                return Err(Error::Numerical("perfect fit leaves the log-likelihood undefined".into()));
            }
            let refs: Vec<&FeFit> = fits.iter().collect();
            // Full-model score vectors per criterion; MCCV shares its splits
            // across every model in the replication.
            let per_criterion = self
                .criteria
                .iter()
                .map(|c| match c {
                    CriterionSpec::Gic(p) => Ok(gic_scores(&refs, p)?.into_iter().map(|s| s.score).collect()),
                    CriterionSpec::Mccv(cfg) => {
                        let cfg = MccvConfig {
                            seed: rep_seed(cfg.seed ^ self.seed, d, rep),
                            ..cfg.clone()
                        };
                        let designs: Vec<&MccvDesign> = prep.mccv.iter().collect();
                        mccv_scores(&designs, &y_tilde, &cfg)
                    }
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            for set in &prep.sets {
                let mut row = Vec::with_capacity(self.criteria.len());
                for (c, scores) in self.criteria.iter().zip(&per_criterion) {
                    let subset = set
                        .iter()
                        .map(|&m| ModelScore {
                            model: self.models[m].name().to_string(),
                            k: prep.fitters[m].k(),
                            score: scores[m],
                        })
                        .collect();
                    let report = SelectionReport::from_scores(c.clone(), subset, n, t)?;
                    let chosen = set
                        .iter()
                        .copied()
                        .find(|&m| self.models[m].name() == report.selected)
                        .expect("selected model is in the set");
                    row.push(chosen);
                }
                choices.push(row);
            }
        }
        Ok(RepResult {
            betas,
            rejects,
            yy: y_tilde.norm_squared(),
            xty,
            choices,
        })
    }

    /// Run all replications (in parallel) and aggregate in replication
    /// order, so the report does not depend on the thread count.
    pub fn run(&self) -> Result<SimulationReport> {
        self.validate()?;
        let prep = self.prepare()?;
        let (n, t) = (self.weather.n(), self.weather.t());
        let nt = (n * t) as f64;
        let mut report = SimulationReport {
            design: self.design.clone(),
            n,
            t,
            reps: self.reps,
            seed: self.seed,
            failed: Vec::new(),
            coefficients: Vec::new(),
            selection: Vec::new(),
            mse: Vec::new(),
        };
        for (d, dgp) in self.dgps.iter().enumerate() {
            let results: Vec<Result<RepResult>> =
                (0..self.reps).into_par_iter().map(|r| self.one_rep(&prep, d, r)).collect();
            let mut first_err = None;
            let ok: Vec<RepResult> = results
                .into_iter()
                .filter_map(|r| r.map_err(|e| first_err.get_or_insert(e).to_string()).ok())
                .collect();
            let failed = self.reps - ok.len();
            report.failed.push((dgp.name.clone(), failed));
            if ok.len() < 2 {
                return Err(first_err.unwrap_or_else(|| Error::Numerical(format!("DGP '{}': fewer than 2 replications succeeded", dgp.name))));
            }
            let reps = ok.len() as f64;

            for (m, model) in self.models.iter().enumerate() {
                let k = prep.fitters[m].k();
                let names = model.column_names();
                let mut beta_bar = DVector::zeros(k);
                for r in &ok {
                    beta_bar += &r.betas[m];
                }
                beta_bar /= reps;
                for j in 0..k {
                    let var = ok.iter().map(|r| (r.betas[m][j] - beta_bar[j]).powi(2)).sum::<f64>() / (reps - 1.0);
                    let rejected = ok.iter().filter(|r| r.rejects[m][j]).count();
                    report.coefficients.push(CoefficientSummary {
                        dgp: dgp.name.clone(),
                        model: model.name().to_string(),
                        coefficient: names[j].clone(),
                        mean: beta_bar[j],
                        sd: var.sqrt(),
                        reject_rate: rejected as f64 / reps,
                    });
                }
                // sum_r ||y_r - X b||^2 = sum yy - 2 b' sum X'y_r + R b'X'X b
                let yy: f64 = ok.iter().map(|r| r.yy).sum();
                let mut xty = DVector::zeros(k);
                for r in &ok {
                    xty += &r.xty[m];
                }
                let quad = (&prep.grams[m] * &beta_bar).dot(&beta_bar);
                let sse = yy - 2.0 * beta_bar.dot(&xty) + reps * quad;
                report.mse.push(MseSummary {
                    dgp: dgp.name.clone(),
                    model: model.name().to_string(),
                    mse: sse / (reps * nt),
                });
            }

            for (s, set) in prep.sets.iter().enumerate() {
                let label = self.candidate_sets[s].join("+");
                for (c, crit) in self.criteria.iter().enumerate() {
                    for &m in set {
                        let hits = ok.iter().filter(|r| r.choices[s][c] == m).count();
                        report.selection.push(SelectionFrequency {
                            dgp: dgp.name.clone(),
                            candidate_set: label.clone(),
                            criterion: crit.label(),
                            model: self.models[m].name().to_string(),
                            frequency: hits as f64 / reps,
                        });
                    }
                }
            }
        }
        Ok(report)
    }
}

fn rep_seed(base: u64, dgp: usize, rep: usize) -> u64 {
    stream_rng(base, stream_id(domain::SPLITS, rep as u64), dgp as u64 + (1 << 40)).random()
}

/// `A`, `Q` and `QinA` on the weather's calendar.
pub fn standard_models(calendar: &Calendar) -> Vec<ModelSpec> {
    vec![
        ModelSpec::annual(calendar),
        ModelSpec::quarterly(calendar),
        ModelSpec::quadratic(calendar),
    ]
}

/// The three DGPs `A`, `QinA`, `Q`.
pub fn standard_dgps() -> Vec<DgpSpec> {
    vec![DgpSpec::annual(), DgpSpec::qina(), DgpSpec::quarterly()]
}

/// `{A, Q}`, `{A, QinA}` and `{A, Q, QinA}`.
pub fn standard_candidate_sets() -> Vec<Vec<String>> {
    [vec!["A", "Q"], vec!["A", "QinA"], vec!["A", "Q", "QinA"]]
        .into_iter()
        .map(|s| s.into_iter().map(String::from).collect())
        .collect()
}

/// Coefficient means, SDs and 5% rejection rates of `A`, `Q`, `QinA`.
pub fn run_phacking_experiment(
    weather: &WeatherPanel,
    calendar: &Calendar,
    dgps: &[DgpSpec],
    reps: usize,
    seed: u64,
) -> Result<SimulationReport> {
    Experiment {
        design: "phacking".into(),
        weather: weather.clone(),
        calendar: calendar.clone(),
        dgps: dgps.to_vec(),
        models: standard_models(calendar),
        candidate_sets: Vec::new(),
        criteria: Vec::new(),
        reps,
        seed,
    }
    .run()
}

/// Mean coefficients and `MSE(beta_bar)`; intended for a large panel.
pub fn run_pseudo_true_experiment(
    weather: &WeatherPanel,
    calendar: &Calendar,
    dgps: &[DgpSpec],
    reps: usize,
    seed: u64,
) -> Result<SimulationReport> {
    let mut report = run_phacking_experiment(weather, calendar, dgps, reps, seed)?;
    report.design = "table3".into();
    Ok(report)
}

/// Selection frequencies per DGP, candidate set and criterion.
pub fn run_selection_experiment(
    weather: &WeatherPanel,
    calendar: &Calendar,
    dgps: &[DgpSpec],
    candidate_sets: &[Vec<String>],
    criteria: &[CriterionSpec],
    reps: usize,
    seed: u64,
) -> Result<SimulationReport> {
    Experiment {
        design: "fig3".into(),
        weather: weather.clone(),
        calendar: calendar.clone(),
        dgps: dgps.to_vec(),
        models: standard_models(calendar),
        candidate_sets: candidate_sets.to_vec(),
        criteria: criteria.to_vec(),
        reps,
        seed,
    }
    .run()
}
