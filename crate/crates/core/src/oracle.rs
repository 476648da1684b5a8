//! Pseudo-true parameters, misspecification error and the MSPE
//! decomposition, all computed on a given weather panel.
//!
//! Every quantity is a least-squares sub-fit of the demeaned true signal
//! `s = X~_star beta_star` on a candidate's demeaned design; the `nT x nT`
//! projector is never formed.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::calendar::Calendar;
use crate::error::{Error, Result};
use crate::features::{build_design, ModelSpec};
use crate::linalg::QrSolver;
use crate::panel::{demean_rows, WeatherPanel};
use crate::sim::{DgpSpec, OutcomeGenerator};

/// The outcome equation of the truth and its error variance.
#[derive(Debug, Clone)]
pub struct DgpTruth {
    pub star_spec: ModelSpec,
    pub beta_star: DVector<f64>,
    /// Per-period error variance `sigma^2`, so a demeaned error has
    /// variance `sigma^2 (T - 1) / T`.
    pub sigma2: f64,
}

impl DgpTruth {
    pub fn new(star_spec: ModelSpec, beta_star: Vec<f64>, sigma2: f64) -> Result<Self> {
        if beta_star.len() != star_spec.k() {
            return Err(Error::Dimension {
                axis: "beta_star",
                expected: star_spec.k(),
                found: beta_star.len(),
            });
        }
        if beta_star.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("beta_star must be finite"));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(DgpTruth {
            star_spec,
            beta_star: DVector::from_vec(beta_star),
            sigma2,
        })
    }

    /// Truth of a simulated DGP; `sigma2` is the variance whose demeaned
    /// counterpart matches the DGP's within error variance.
    pub fn from_dgp(dgp: &DgpSpec, calendar: &Calendar, t: usize) -> Result<Self> {
        dgp.validate(t, calendar)?;
        let (spec, beta) = dgp.star(calendar);
        let sigma2 = dgp.errors.within_variance(t) * t as f64 / (t as f64 - 1.0);
        Self::new(spec, beta, sigma2)
    }
}

/// Whether a model nests the truth (II) or not (I).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    I,
    II,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::I => "I",
            Category::II => "II",
        })
    }
}

/// Three additive parts of the expected out-of-sample squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MspeParts {
    /// `sigma^2 (T - 1) / T`
    pub noise: f64,
    /// `sigma^2 k / (nT)`
    pub dimension: f64,
    pub misspec: f64,
}

impl MspeParts {
    pub fn total(&self) -> f64 {
        self.noise + self.dimension + self.misspec
    }
}

#[derive(Debug, Clone)]
pub struct PseudoTrueResult {
    pub model_name: String,
    pub beta_pseudo: DVector<f64>,
    pub delta: f64,
    pub category: Category,
    pub mspe_parts: MspeParts,
}

// Demeaned design of `spec` and the demeaned truth signal.
struct Projection {
    x: DMatrix<f64>,
    qr: QrSolver,
    signal: DVector<f64>,
}

fn demeaned(weather: &WeatherPanel, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let mut x = build_design(weather, spec).map_err(|e| e.in_model(spec.name()))?;
    demean_rows(&mut x, weather.n(), weather.t());
    Ok(x)
}

fn signal(weather: &WeatherPanel, truth: &DgpTruth) -> Result<DVector<f64>> {
    let x = demeaned(weather, &truth.star_spec)?;
    Ok(x * &truth.beta_star)
}

fn project(weather: &WeatherPanel, spec: &ModelSpec, truth: &DgpTruth) -> Result<Projection> {
    let x = demeaned(weather, spec)?;
    let qr = QrSolver::new(&x, &spec.column_names()).map_err(|e| e.in_model(spec.name()))?;
    Ok(Projection {
        x,
        qr,
        signal: signal(weather, truth)?,
    })
}

/// `(X~_a' X~_a)^{-1} X~_a' X~_star beta_star` on the given panel.
pub fn pseudo_true_params(weather: &WeatherPanel, spec: &ModelSpec, truth: &DgpTruth) -> Result<DVector<f64>> {
    let p = project(weather, spec, truth)?;
    Ok(p.qr.solve(&p.signal))
}

/// `R' beta_star` for a star model nested in the candidate through
/// `X_star = R X_a`.
pub fn pseudo_true_nested(r: &DMatrix<f64>, beta_star: &DVector<f64>) -> DVector<f64> {
    r.tr_mul(beta_star)
}

/// `||(I - P_a) s||^2 / (nT)`.
pub fn misspec_delta(weather: &WeatherPanel, spec: &ModelSpec, truth: &DgpTruth) -> Result<f64> {
    let p = project(weather, spec, truth)?;
    let beta = p.qr.solve(&p.signal);
    let resid = &p.signal - &p.x * beta;
    Ok(resid.norm_squared() / p.signal.len() as f64)
}

/// `1e-8 (1 + ||s||^2 / (nT))`.
pub fn category_tolerance(weather: &WeatherPanel, truth: &DgpTruth) -> Result<f64> {
    let s = signal(weather, truth)?;
    Ok(1e-8 * (1.0 + s.norm_squared() / s.len() as f64))
}

/// II iff `delta <= tol`; a delta below `-tol` is a numerical error.
pub fn classify_category(delta: f64, tol: f64) -> Result<Category> {
    if delta.is_nan() || delta < -tol {
        return Err(Error::Numerical(format!(
            "misspecification error {delta:.3e} is negative beyond tolerance {tol:.3e}"
        )));
    }
    Ok(if delta <= tol { Category::II } else { Category::I })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionGap {
    pub equal: bool,
    /// `max |X~_a b*_a - X~_g b*_g|`.
    pub max_gap: f64,
    /// `1 + max |s|`, the yardstick for `tol`.
    pub scale: f64,
}

/// Compare the two models' within predictions at their pseudo-true
/// parameters; equal when `max_gap <= tol * scale`.
pub fn pseudo_predictions_equal(
    weather: &WeatherPanel,
    spec_a: &ModelSpec,
    spec_g: &ModelSpec,
    truth: &DgpTruth,
    tol: f64,
) -> Result<PredictionGap> {
    let pa = project(weather, spec_a, truth)?;
    let pg = project(weather, spec_g, truth)?;
    let fa = &pa.x * pa.qr.solve(&pa.signal);
    let fg = &pg.x * pg.qr.solve(&pg.signal);
    let max_gap = (fa - fg).amax();
    let scale = 1.0 + pa.signal.amax();
    Ok(PredictionGap {
        equal: max_gap <= tol * scale,
        max_gap,
        scale,
    })
}

/// Analytic MSPE parts for `spec` on `weather`.
pub fn mspe_decompose(truth: &DgpTruth, spec: &ModelSpec, weather: &WeatherPanel) -> Result<MspeParts> {
    let (n, t) = (weather.n(), weather.t());
    let misspec = misspec_delta(weather, spec, truth)?;
    Ok(MspeParts {
        noise: truth.sigma2 * (t as f64 - 1.0) / t as f64,
        dimension: truth.sigma2 * spec.k() as f64 / (n * t) as f64,
        misspec,
    })
}

/// Pseudo-true coefficients, misspecification error, category and MSPE
/// parts in one pass.
pub fn pseudo_true_analysis(weather: &WeatherPanel, spec: &ModelSpec, truth: &DgpTruth) -> Result<PseudoTrueResult> {
    let (n, t) = (weather.n(), weather.t());
    let p = project(weather, spec, truth)?;
    let beta = p.qr.solve(&p.signal);
    let resid = &p.signal - &p.x * &beta;
    let nt = (n * t) as f64;
    let delta = resid.norm_squared() / nt;
    let tol = 1e-8 * (1.0 + p.signal.norm_squared() / nt);
    Ok(PseudoTrueResult {
        model_name: spec.name().to_string(),
        beta_pseudo: beta,
        delta,
        category: classify_category(delta, tol)?,
        mspe_parts: MspeParts {
            noise: truth.sigma2 * (t as f64 - 1.0) / t as f64,
            dimension: truth.sigma2 * spec.k() as f64 / nt,
            misspec: delta,
        },
    })
}

/// Mean of a Monte Carlo statistic and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloMean {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
}

impl MonteCarloMean {
    pub fn from_draws(draws: &[f64]) -> Self {
        let r = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / r;
        let var = if draws.len() > 1 {
            draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (r - 1.0)
        } else {
            f64::NAN
        };
        MonteCarloMean {
            mean,
            se: (var / r).sqrt(),
            reps: draws.len(),
        }
    }
}

/// Fresh-sample MSPE: fit `spec` on one outcome draw, score the fit on an
/// independent draw over the same weather, average over `reps`.
pub fn mspe_monte_carlo(
    weather: &WeatherPanel,
    calendar: &Calendar,
    spec: &ModelSpec,
    dgp: &DgpSpec,
    reps: usize,
    seed: u64,
) -> Result<MonteCarloMean> {
    if reps < 2 {
        return Err(Error::invalid("Monte Carlo MSPE needs at least 2 replications"));
    }
    let (n, t) = (weather.n(), weather.t());
    let x = demeaned(weather, spec)?;
    let qr = QrSolver::new(&x, &spec.column_names()).map_err(|e| e.in_model(spec.name()))?;
    let generator = OutcomeGenerator::new(weather, dgp, calendar)?;
    let stack = |y: DMatrix<f64>| {
        let mut s = DMatrix::from_column_slice(n * t, 1, y.transpose().as_slice());
        demean_rows(&mut s, n, t);
        s.column(0).into_owned()
    };
    let draws: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let y = stack(generator.draw(seed, 2 * r));
            let z = stack(generator.draw(seed, 2 * r + 1));
            let beta = qr.solve(&y);
            (z - &x * beta).norm_squared() / (n * t) as f64
        })
        .collect();
    Ok(MonteCarloMean::from_draws(&draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synth_weather, ErrorRule, WeatherConfig};

    fn setup() -> (WeatherPanel, Calendar) {
        let w = synth_weather(&WeatherConfig::default().with_n(200)).unwrap();
        (w, Calendar::non_leap())
    }

    #[test]
    fn own_span_returns_beta_star() {
        let (w, cal) = setup();
        let truth = DgpTruth::from_dgp(&DgpSpec::qina(), &cal, 5).unwrap();
        let b = pseudo_true_params(&w, &ModelSpec::quadratic(&cal), &truth).unwrap();
        assert!((b[0] - 0.2).abs() < 1e-9 && (b[1] + 0.05).abs() < 1e-10, "{b}");
        assert!(misspec_delta(&w, &ModelSpec::quadratic(&cal), &truth).unwrap() < 1e-10);
    }

    #[test]
    fn annual_in_quarterly_gives_quarter_shares() {
        let (w, cal) = setup();
        let truth = DgpTruth::from_dgp(&DgpSpec::annual(), &cal, 5).unwrap();
        let b = pseudo_true_params(&w, &ModelSpec::quarterly(&cal), &truth).unwrap();
        for (got, len) in b.iter().zip([90.0, 91.0, 92.0, 92.0]) {
            assert!((got - len / 365.0).abs() < 1e-9);
        }
        let r = DMatrix::from_row_slice(1, 4, &[90.0 / 365.0, 91.0 / 365.0, 92.0 / 365.0, 92.0 / 365.0]);
        let nested = pseudo_true_nested(&r, &DVector::from_element(1, 1.0));
        assert!((nested - b).amax() < 1e-9);
    }

    #[test]
    fn categories() {
        assert_eq!(classify_category(0.0, 1e-8).unwrap(), Category::II);
        assert_eq!(classify_category(0.5, 1e-8).unwrap(), Category::I);
        assert!(classify_category(-1.0, 1e-8).is_err());
        let (w, cal) = setup();
        let truth = DgpTruth::from_dgp(&DgpSpec::annual(), &cal, 5).unwrap();
        let r = pseudo_true_analysis(&w, &ModelSpec::quarterly(&cal), &truth).unwrap();
        assert_eq!(r.category, Category::II);
        let truth = DgpTruth::from_dgp(&DgpSpec::qina(), &cal, 5).unwrap();
        let r = pseudo_true_analysis(&w, &ModelSpec::annual(&cal), &truth).unwrap();
        assert_eq!(r.category, Category::I);
        assert!(r.delta > 0.0);
    }

    #[test]
    fn zero_beta_has_no_misspecification() {
        let (w, cal) = setup();
        let truth = DgpTruth::new(ModelSpec::quarterly(&cal), vec![0.0; 4], 1.0).unwrap();
        assert_eq!(misspec_delta(&w, &ModelSpec::annual(&cal), &truth).unwrap(), 0.0);
    }

    #[test]
    fn mspe_parts_formula() {
        let (w, cal) = setup();
        let dgp = DgpSpec::annual().with_errors(ErrorRule::Iid { sd: 1.0 });
        let truth = DgpTruth::from_dgp(&dgp, &cal, 5).unwrap();
        assert!((truth.sigma2 - 1.0).abs() < 1e-12);
        let parts = mspe_decompose(&truth, &ModelSpec::quarterly(&cal), &w).unwrap();
        assert!((parts.noise - 0.8).abs() < 1e-12);
        assert!((parts.dimension - 4.0 / 1000.0).abs() < 1e-12);
        assert!(parts.misspec < 1e-10);
    }
}
