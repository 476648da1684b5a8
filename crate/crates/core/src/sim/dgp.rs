//! Outcome-generating processes: `Y_it = mu(W_it)' beta + a_i + u_it`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::calendar::Calendar;
use crate::error::{Error, Result};
use crate::features::{build_design, ModelSpec};
use crate::panel::WeatherPanel;
use crate::rng::{domain, stream_id, stream_rng};

/// Lag-0/1/2 covariance shared by both error components; the second one
/// has lower variance in periods 2 and 4.
pub fn banded_sigma1() -> DMatrix<f64> {
    banded(&[1.0, 1.0, 1.0, 1.0, 1.0])
}

pub fn banded_sigma2() -> DMatrix<f64> {
    banded(&[1.0, 0.75, 1.0, 0.75, 1.0])
}

fn banded(diag: &[f64]) -> DMatrix<f64> {
    let t = diag.len();
    DMatrix::from_fn(t, t, |r, c| match r.abs_diff(c) {
        0 => diag[r],
        1 => 0.5,
        2 => 0.1,
        _ => 0.0,
    })
}

/// The weather response of a DGP.
#[derive(Debug, Clone)]
pub enum Response {
    /// `beta * annual mean`
    Annual(f64),
    /// `b1 * annual mean + b2 * annual mean^2`
    QinA(f64, f64),
    /// Quarterly means.
    Quarterly([f64; 4]),
    Custom { spec: ModelSpec, beta: Vec<f64> },
}

/// How `u_i` (length `T`) is drawn.
#[derive(Debug, Clone)]
pub enum ErrorRule {
    /// `u = e1 + e2`, `e1 ~ N(-0.5, S1)`, `e2 ~ N(0.5, S2)`; `Cov(u) = S1 + S2`.
    Sum { sigma1: DMatrix<f64>, sigma2: DMatrix<f64> },
    /// Equal-weight mixture of `N(-0.5, S1)` and `N(0.5, S2)`.
    Mixture { sigma1: DMatrix<f64>, sigma2: DMatrix<f64> },
    /// Independent `N(0, sd^2)`.
    Iid { sd: f64 },
}

impl ErrorRule {
    pub fn default_sum() -> Self {
        ErrorRule::Sum {
            sigma1: banded_sigma1(),
            sigma2: banded_sigma2(),
        }
    }

    /// Covariance of `u_i`.
    pub fn covariance(&self, t: usize) -> DMatrix<f64> {
        match self {
            ErrorRule::Sum { sigma1, sigma2 } => sigma1 + sigma2,
            ErrorRule::Mixture { sigma1, sigma2 } => {
                // Component means -0.5 and 0.5 add 0.25 to every entry.
                (sigma1 + sigma2) * 0.5 + DMatrix::from_element(t, t, 0.25)
            }
            ErrorRule::Iid { sd } => DMatrix::identity(t, t) * (sd * sd),
        }
    }

    /// Per-observation variance of the within-demeaned error,
    /// `tr(M S) / T` with `M = I - 11'/T`.
    pub fn within_variance(&self, t: usize) -> f64 {
        let s = self.covariance(t);
        let total: f64 = s.iter().sum();
        (s.trace() - total / t as f64) / t as f64
    }

    fn validate(&self, t: usize) -> Result<()> {
        match self {
            ErrorRule::Sum { sigma1, sigma2 } | ErrorRule::Mixture { sigma1, sigma2 } => {
                check_covariance(sigma1, t, "sigma1")?;
                check_covariance(sigma2, t, "sigma2")
            }
            ErrorRule::Iid { sd } => {
                if sd.is_finite() && *sd >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("error sd must be finite and non-negative, got {sd}")))
                }
            }
        }
    }
}

fn check_covariance(s: &DMatrix<f64>, t: usize, name: &str) -> Result<()> {
    if s.nrows() != t || s.ncols() != t {
        return Err(Error::invalid(format!(
            "{name} is {}x{} but the panel has T = {t}",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if s.iter().any(|v| !v.is_finite()) || (s - s.transpose()).iter().any(|v| v.abs() > 1e-12 * (1.0 + scale)) {
        return Err(Error::invalid(format!("{name} must be finite and symmetric")));
    }
    let min_eig = SymmetricEigen::new(s.clone()).eigenvalues.min();
    if min_eig < -1e-10 * (1.0 + scale) {
        return Err(Error::invalid(format!("{name} is not positive semidefinite (eigenvalue {min_eig:.3e})")));
    }
    Ok(())
}

// Square root `L` with `L L' = S`, valid for semidefinite `S`.
fn factor(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let mut l = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let r = lam.max(0.0).sqrt();
        l.column_mut(j).scale_mut(r);
    }
    l
}

/// A complete data-generating process.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub name: String,
    pub response: Response,
    pub errors: ErrorRule,
    /// `a_i ~ N(fe_loading * W_bar_i, fe_sd^2)`.
    pub fe_loading: f64,
    pub fe_sd: f64,
}

impl DgpSpec {
    pub fn new(name: impl Into<String>, response: Response) -> Self {
        DgpSpec {
            name: name.into(),
            response,
            errors: ErrorRule::default_sum(),
            fe_loading: 0.5,
            fe_sd: 1.0,
        }
    }

    /// `Y = W_bar`.
    pub fn annual() -> Self {
        Self::new("A", Response::Annual(1.0))
    }

    /// `Y = 0.2 W_bar - 0.05 W_bar^2`.
    pub fn qina() -> Self {
        Self::new("QinA", Response::QinA(0.2, -0.05))
    }

    /// `Y = -0.25 Q1 + 0.75 Q3`.
    pub fn quarterly() -> Self {
        Self::new("Q", Response::Quarterly([-0.25, 0.0, 0.75, 0.0]))
    }

    pub fn with_errors(mut self, errors: ErrorRule) -> Self {
        self.errors = errors;
        self
    }

    /// The most parsimonious model containing the response, and its
    /// coefficients.
    pub fn star(&self, calendar: &Calendar) -> (ModelSpec, Vec<f64>) {
        match &self.response {
            Response::Annual(b) => (ModelSpec::annual(calendar), vec![*b]),
            Response::QinA(b1, b2) => (ModelSpec::quadratic(calendar), vec![*b1, *b2]),
            Response::Quarterly(b) => (ModelSpec::quarterly(calendar), b.to_vec()),
            Response::Custom { spec, beta } => (spec.clone(), beta.clone()),
        }
    }

    pub fn validate(&self, t: usize, calendar: &Calendar) -> Result<()> {
        self.errors.validate(t)?;
        let (spec, beta) = self.star(calendar);
        if beta.len() != spec.k() {
            return Err(Error::invalid(format!(
                "DGP '{}': {} coefficients for a {}-column response",
                self.name,
                beta.len(),
                spec.k()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid(format!("DGP '{}': coefficients must be finite", self.name)));
        }
        if !(self.fe_sd >= 0.0 && self.fe_sd.is_finite() && self.fe_loading.is_finite()) {
            return Err(Error::invalid(format!("DGP '{}': bad fixed-effect rule", self.name)));
        }
        Ok(())
    }
}

/// A DGP bound to one weather panel: the deterministic signal is computed
/// once and each draw only adds effects and errors.
#[derive(Debug, Clone)]
pub struct OutcomeGenerator {
    n: usize,
    t: usize,
    signal: DVector<f64>,
    unit_means: Vec<f64>,
    fe_loading: f64,
    fe_sd: f64,
    kind: ErrorKind,
}

#[derive(Debug, Clone)]
enum ErrorKind {
    Sum(DMatrix<f64>, DMatrix<f64>),
    Mixture(DMatrix<f64>, DMatrix<f64>),
    Iid(f64),
}

impl OutcomeGenerator {
    pub fn new(weather: &WeatherPanel, dgp: &DgpSpec, calendar: &Calendar) -> Result<Self> {
        let (n, t) = (weather.n(), weather.t());
        dgp.validate(t, calendar)?;
        let (spec, beta) = dgp.star(calendar);
        let design = build_design(weather, &spec)?;
        let signal = design * DVector::from_vec(beta);
        let kind = match &dgp.errors {
            ErrorRule::Sum { sigma1, sigma2 } => ErrorKind::Sum(factor(sigma1), factor(sigma2)),
            ErrorRule::Mixture { sigma1, sigma2 } => ErrorKind::Mixture(factor(sigma1), factor(sigma2)),
            ErrorRule::Iid { sd } => ErrorKind::Iid(*sd),
        };
        Ok(OutcomeGenerator {
            n,
            t,
            signal,
            unit_means: (0..n).map(|i| weather.unit_mean(i)).collect(),
            fe_loading: dgp.fe_loading,
            fe_sd: dgp.fe_sd,
            kind,
        })
    }

    /// Stacked `mu(W)' beta`, unit-major.
    pub fn signal(&self) -> &DVector<f64> {
        &self.signal
    }

    /// One outcome panel (`n x T`). Unit `i` of draw `rep` uses its own
    /// stream, so results do not depend on thread scheduling.
    pub fn draw(&self, seed: u64, rep: u64) -> DMatrix<f64> {
        let (n, t) = (self.n, self.t);
        let mut y = DMatrix::zeros(n, t);
        let mut z = DVector::zeros(t);
        let mut u = DVector::zeros(t);
        for i in 0..n {
            let mut rng = stream_rng(seed, stream_id(domain::OUTCOME, rep), i as u64);
            let a = self.fe_loading * self.unit_means[i] + self.fe_sd * std_normal(&mut rng);
            match &self.kind {
                ErrorKind::Sum(l1, l2) => {
                    fill(&mut z, &mut rng);
                    u.gemv(1.0, l1, &z, 0.0);
                    fill(&mut z, &mut rng);
                    u.gemv(1.0, l2, &z, 1.0);
                }
                ErrorKind::Mixture(l1, l2) => {
                    let first = rng.random_bool(0.5);
                    fill(&mut z, &mut rng);
                    let (l, mean) = if first { (l1, -0.5) } else { (l2, 0.5) };
                    u.gemv(1.0, l, &z, 0.0);
                    u.add_scalar_mut(mean);
                }
                ErrorKind::Iid(sd) => {
                    fill(&mut z, &mut rng);
                    u.copy_from(&(&z * *sd));
                }
            }
            for p in 0..t {
                y[(i, p)] = self.signal[i * t + p] + a + u[p];
            }
        }
        y
    }
}

fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn fill<R: Rng>(z: &mut DVector<f64>, rng: &mut R) {
    for v in z.iter_mut() {
        *v = std_normal(rng);
    }
}

/// Draw one outcome panel for `dgp` on `weather`.
pub fn gen_outcome(weather: &WeatherPanel, dgp: &DgpSpec, calendar: &Calendar, seed: u64) -> Result<DMatrix<f64>> {
    Ok(OutcomeGenerator::new(weather, dgp, calendar)?.draw(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::weather::{synth_weather, WeatherConfig};

    #[test]
    fn banded_matrices_are_positive_definite() {
        check_covariance(&banded_sigma1(), 5, "s1").unwrap();
        check_covariance(&banded_sigma2(), 5, "s2").unwrap();
        let rule = ErrorRule::default_sum();
        let cov = rule.covariance(5);
        assert_eq!(cov[(0, 0)], 2.0);
        assert_eq!(cov[(1, 1)], 1.75);
        assert!((rule.within_variance(5) - 1.152).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_covariance() {
        let mut s = banded_sigma1();
        s[(0, 0)] = -1.0;
        let dgp = DgpSpec::annual().with_errors(ErrorRule::Sum {
            sigma1: s,
            sigma2: banded_sigma2(),
        });
        assert!(dgp.validate(5, &Calendar::non_leap()).is_err());
        assert!(DgpSpec::annual().validate(4, &Calendar::non_leap()).is_err());
    }

    #[test]
    fn error_moments_match_sum_of_covariances() {
        // Zero weather and no fixed effect: Y is the error itself.
        let weather = WeatherPanel::new(4000, 5, 4, vec![0.0; 4000 * 5 * 4]).unwrap();
        let cal = Calendar::for_length(4).unwrap();
        let mut dgp = DgpSpec::annual();
        dgp.fe_loading = 0.0;
        dgp.fe_sd = 0.0;
        let y = gen_outcome(&weather, &dgp, &cal, 5).unwrap();
        let n = y.nrows() as f64;
        let target = dgp.errors.covariance(5);
        for r in 0..5 {
            let mean = y.column(r).sum() / n;
            assert!(mean.abs() < 4.0 * (target[(r, r)] / n).sqrt(), "mean {mean}");
            for c in 0..5 {
                let cov = y.column(r).dot(&y.column(c)) / n;
                let se = ((target[(r, r)] * target[(c, c)] + target[(r, c)].powi(2)) / n).sqrt();
                assert!((cov - target[(r, c)]).abs() < 4.0 * se, "({r},{c}) {cov}");
            }
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let weather = synth_weather(&WeatherConfig::default().with_n(30)).unwrap();
        let cal = Calendar::non_leap();
        let a = gen_outcome(&weather, &DgpSpec::qina(), &cal, 3).unwrap();
        let b = gen_outcome(&weather, &DgpSpec::qina(), &cal, 3).unwrap();
        let c = gen_outcome(&weather, &DgpSpec::qina(), &cal, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
