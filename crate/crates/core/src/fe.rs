//! Fixed-effects (within) least squares, cluster-robust covariance and the
//! conditional profile log-likelihood.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{build_design, ModelSpec};
use crate::linalg::QrSolver;
use crate::panel::{demean_rows, within_transform, PanelDataset, WithinView};

/// Floor applied to a zero variance before taking logs.
pub const SIGMA2_FLOOR: f64 = 1e-300;

/// Which shared regressors to append to a model's weather features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DesignOptions {
    pub controls: bool,
    /// Period dummies for every period but the first.
    pub year_effects: bool,
}

/// Within-estimator output for one model.
#[derive(Debug, Clone)]
pub struct FeFit {
    pub model_name: String,
    pub column_names: Vec<String>,
    /// Number of leading coefficients that belong to the weather features.
    pub feature_k: usize,
    pub beta_hat: DVector<f64>,
    /// `RSS / (n (T - 1))`; exactly zero when `perfect_fit`.
    pub sigma2_hat: f64,
    /// `-n (T - 1) log(sigma2_hat)`, with the variance floored at
    /// [`SIGMA2_FLOOR`].
    pub loglik: f64,
    pub perfect_fit: bool,
    pub rss: f64,
    /// `n x T` within residuals.
    pub residuals: DMatrix<f64>,
    pub clustered_cov: DMatrix<f64>,
    pub n: usize,
    pub t: usize,
}

impl FeFit {
    pub fn k(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn n_obs(&self) -> usize {
        self.n * self.t
    }

    pub fn clustered_se(&self) -> DVector<f64> {
        self.clustered_cov.diagonal().map(|v| v.max(0.0).sqrt())
    }

    pub fn t_stats(&self) -> DVector<f64> {
        self.beta_hat.zip_map(&self.clustered_se(), |b, s| b / s)
    }
}

/// A fixed within-demeaned design, factored once and reused for any number
/// of outcome vectors.
#[derive(Debug, Clone)]
pub struct WithinFitter {
    model_name: String,
    names: Vec<String>,
    feature_k: usize,
    n: usize,
    t: usize,
    x: DMatrix<f64>,
    qr: QrSolver,
    bread: DMatrix<f64>,
    clusters: Vec<usize>,
    n_clusters: usize,
}

/// Map labels to dense indices in order of first appearance.
pub fn cluster_index(labels: &[String]) -> (Vec<usize>, usize) {
    let mut map: HashMap<&str, usize> = HashMap::new();
    let idx = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l.as_str()).or_insert(next)
        })
        .collect();
    (idx, map.len())
}

/// Weather features, then controls, then period dummies; with names.
pub fn model_design(data: &PanelDataset, spec: &ModelSpec, opts: DesignOptions) -> Result<(DMatrix<f64>, Vec<String>)> {
    let (n, t) = (data.n(), data.t());
    let features = build_design(data.weather(), spec)?;
    let mut names = spec.column_names();
    let mut blocks = vec![features];
    if opts.controls {
        if let Some(c) = data.controls() {
            let nc = c.names.len();
            blocks.push(DMatrix::from_row_slice(n * t, nc, &c.values));
            names.extend(c.names.iter().cloned());
        }
    }
    if opts.year_effects {
        let mut dummies = DMatrix::zeros(n * t, t - 1);
        for i in 0..n {
            for p in 1..t {
                dummies[(i * t + p, p - 1)] = 1.0;
            }
        }
        blocks.push(dummies);
        names.extend(data.period_ids()[1..].iter().map(|p| format!("year_{p}")));
    }
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut design = DMatrix::zeros(n * t, k);
    let mut col = 0;
    for b in &blocks {
        design.columns_mut(col, b.ncols()).copy_from(b);
        col += b.ncols();
    }
    Ok((design, names))
}

impl WithinFitter {
    /// Demean `design` (`nT x k`, undemeaned) and factor it.
    pub fn new(
        model_name: &str,
        mut design: DMatrix<f64>,
        names: Vec<String>,
        feature_k: usize,
        n: usize,
        t: usize,
        cluster_labels: &[String],
    ) -> Result<Self> {
        if design.nrows() != n * t {
            return Err(Error::Dimension {
                axis: "design rows (n*T)",
                expected: n * t,
                found: design.nrows(),
            });
        }
        if cluster_labels.len() != n {
            return Err(Error::Dimension {
                axis: "cluster labels",
                expected: n,
                found: cluster_labels.len(),
            });
        }
        demean_rows(&mut design, n, t);
        let qr = QrSolver::new(&design, &names).map_err(|e| e.in_model(model_name))?;
        let bread = qr.xtx_inverse();
        let (clusters, n_clusters) = cluster_index(cluster_labels);
        Ok(WithinFitter {
            model_name: model_name.to_string(),
            names,
            feature_k,
            n,
            t,
            x: design,
            qr,
            bread,
            clusters,
            n_clusters,
        })
    }

    pub fn for_dataset(data: &PanelDataset, spec: &ModelSpec, opts: DesignOptions) -> Result<Self> {
        let (design, names) = model_design(data, spec, opts).map_err(|e| e.in_model(spec.name()))?;
        Self::new(spec.name(), design, names, spec.k(), data.n(), data.t(), data.cluster_ids())
    }

    pub fn demeaned_design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn condition_number(&self) -> f64 {
        self.qr.condition_number()
    }

    /// Coefficients only.
    pub fn coefficients(&self, y_tilde: &DVector<f64>) -> DVector<f64> {
        self.qr.solve(y_tilde)
    }

    /// Fit a demeaned outcome stacked unit-major.
    pub fn fit(&self, y_tilde: &DVector<f64>) -> Result<FeFit> {
        let (n, t) = (self.n, self.t);
        if y_tilde.len() != n * t {
            return Err(Error::Dimension {
                axis: "outcome length (n*T)",
                expected: n * t,
                found: y_tilde.len(),
            });
        }
        let beta = self.qr.solve(y_tilde);
        let fitted = &self.x * &beta;
        let resid = y_tilde - fitted;
        let rss = resid.norm_squared();
        let dof = (n * (t - 1)) as f64;
        let perfect_fit = rss <= 1e-24 * y_tilde.norm_squared() || rss == 0.0;
        let sigma2_hat = if perfect_fit { 0.0 } else { rss / dof };
        let loglik = -dof * sigma2_hat.max(SIGMA2_FLOOR).ln();
        let clustered_cov = cluster_sandwich(&self.x, &resid, &self.clusters, self.n_clusters, t, &self.bread);
        Ok(FeFit {
            model_name: self.model_name.clone(),
            column_names: self.names.clone(),
            feature_k: self.feature_k,
            beta_hat: beta,
            sigma2_hat,
            loglik,
            perfect_fit,
            rss,
            residuals: DMatrix::from_row_slice(n, t, resid.as_slice()),
            clustered_cov,
            n,
            t,
        })
    }
}

/// `bread * (sum_g s_g s_g') * bread` with `s_g = sum_{rows in g} x_r e_r`.
/// `cluster_of_unit` assigns each block of `rows_per_unit` rows to a cluster.
pub fn cluster_sandwich(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    cluster_of_unit: &[usize],
    n_clusters: usize,
    rows_per_unit: usize,
    bread: &DMatrix<f64>,
) -> DMatrix<f64> {
    let k = x.ncols();
    let mut scores = DMatrix::zeros(n_clusters, k);
    for (r, e) in resid.iter().enumerate() {
        let g = cluster_of_unit[r / rows_per_unit];
        for j in 0..k {
            scores[(g, j)] += x[(r, j)] * e;
        }
    }
    let meat = scores.transpose() * &scores;
    let v = bread * meat * bread;
    (&v + v.transpose()) * 0.5
}

/// Fit one model by within least squares.
pub fn fe_estimate(data: &PanelDataset, spec: &ModelSpec, opts: DesignOptions) -> Result<FeFit> {
    let fitter = WithinFitter::for_dataset(data, spec, opts)?;
    let view = within_transform(data, &DMatrix::zeros(data.n() * data.t(), 0))?;
    fitter.fit(&view.stacked_outcome())
}

/// `-n (T - 1) log(sigma2_hat)`; an error when the fit is perfect.
pub fn profile_loglik(fit: &FeFit) -> Result<f64> {
    if fit.perfect_fit || fit.sigma2_hat <= 0.0 {
        return Err(Error::Numerical(format!(
            "model '{}' fits perfectly; profile likelihood is unbounded",
            fit.model_name
        )));
    }
    Ok(-((fit.n * (fit.t - 1)) as f64) * fit.sigma2_hat.ln())
}

/// `X~ beta_hat` as an `n x T` matrix.
pub fn predict_within(fit: &FeFit, view: &WithinView) -> Result<DMatrix<f64>> {
    if view.k() != fit.k() {
        return Err(Error::Dimension {
            axis: "design columns (k)",
            expected: fit.k(),
            found: view.k(),
        });
    }
    let fitted = &view.demeaned_design * &fit.beta_hat;
    Ok(DMatrix::from_row_slice(view.n, view.t, fitted.as_slice()))
}

/// Predicted change in the outcome when one period's observations move from
/// `weather_a` to `weather_b`. Fixed effects and controls cancel.
pub fn delta_prediction(fit: &FeFit, spec: &ModelSpec, weather_a: &[f64], weather_b: &[f64]) -> Result<f64> {
    if spec.k() != fit.feature_k {
        return Err(Error::Dimension {
            axis: "feature coefficients (k)",
            expected: fit.feature_k,
            found: spec.k(),
        });
    }
    let xa = spec.apply(weather_a)?;
    let xb = spec.apply(weather_b)?;
    Ok(xb
        .iter()
        .zip(&xa)
        .zip(fit.beta_hat.iter())
        .map(|((b, a), beta)| (b - a) * beta)
        .sum())
}
