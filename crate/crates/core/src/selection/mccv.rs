//! Monte Carlo cross-validation over units.
//!
//! Each split holds out `n_v` units, fits the within estimator on the other
//! `n_c`, and scores the held-out units' demeaned outcomes against their
//! demeaned design. Every candidate sees the same splits.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;

use super::{check_unique_names, CriterionSpec, MccvConfig, ModelScore, SelectionReport, SplitRule};
use crate::error::{Error, Result};
use crate::fe::{model_design, DesignOptions};
use crate::features::ModelSpec;
use crate::linalg::spd_solve;
use crate::panel::{demean_rows, within_transform, PanelDataset};
use crate::rng::{domain, stream_id, stream_rng};

/// `(n_c, n_v)` for a split rule.
pub fn split_sizes(rule: SplitRule, n: usize) -> Result<(usize, usize)> {
    let n_c = match rule {
        SplitRule::FixedP(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("MCCV ratio p must lie in (0, 1), got {p}")));
            }
            (p * n as f64).round() as usize
        }
        SplitRule::Shao => (n as f64).powf(0.75).ceil() as usize,
    };
    if n_c == 0 || n_c >= n {
        return Err(Error::invalid(format!(
            "MCCV split leaves {n_c} training units out of {n}; need 0 < n_c < n"
        )));
    }
    Ok((n_c, n - n_c))
}

/// `max(100, 20 ceil(n / n_c))`.
pub fn default_split_count(n: usize, n_c: usize) -> usize {
    100.max(20 * n.div_ceil(n_c))
}

/// Test-set membership for split `split`, attempt `attempt`.
pub fn draw_split(n: usize, n_v: usize, seed: u64, split: u64, attempt: u64) -> Vec<bool> {
    let mut rng = stream_rng(seed, stream_id(domain::SPLITS, split), attempt);
    let mut in_test = vec![false; n];
    for i in index::sample(&mut rng, n, n_v) {
        in_test[i] = true;
    }
    in_test
}

/// A candidate's within-demeaned design with per-unit cross-products, fixed
/// across outcome draws.
#[derive(Debug, Clone)]
pub struct MccvDesign {
    pub name: String,
    n: usize,
    t: usize,
    k: usize,
    x: DMatrix<f64>,
    /// `n` blocks of `k x k`, column-major.
    grams: Vec<f64>,
}

impl MccvDesign {
    /// `design` is the raw (undemeaned) `nT x k` matrix.
    pub fn new(name: &str, mut design: DMatrix<f64>, n: usize, t: usize) -> Result<Self> {
        if design.nrows() != n * t {
            return Err(Error::Dimension {
                axis: "design rows (n*T)",
                expected: n * t,
                found: design.nrows(),
            });
        }
        demean_rows(&mut design, n, t);
        Ok(Self::from_demeaned(name, design, n, t))
    }

    pub fn from_demeaned(name: &str, x: DMatrix<f64>, n: usize, t: usize) -> Self {
        let k = x.ncols();
        let mut grams = vec![0.0; n * k * k];
        for i in 0..n {
            let g = &mut grams[i * k * k..(i + 1) * k * k];
            for a in 0..k {
                for b in 0..=a {
                    let mut s = 0.0;
                    for r in i * t..(i + 1) * t {
                        s += x[(r, a)] * x[(r, b)];
                    }
                    g[a * k + b] = s;
                    g[b * k + a] = s;
                }
            }
        }
        MccvDesign {
            name: name.to_string(),
            n,
            t,
            k,
            x,
            grams,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    // X_i' y_i per unit, n blocks of k.
    fn cross(&self, y: &DVector<f64>) -> Vec<f64> {
        let (k, t) = (self.k, self.t);
        let mut c = vec![0.0; self.n * k];
        for i in 0..self.n {
            for j in 0..k {
                let mut s = 0.0;
                for r in i * t..(i + 1) * t {
                    s += self.x[(r, j)] * y[r];
                }
                c[i * k + j] = s;
            }
        }
        c
    }

    // Train on units outside the test set, return held-out SSE, or None when
    // the training Gram matrix is singular.
    fn split_sse(&self, y: &DVector<f64>, cross: &[f64], in_test: &[bool]) -> Option<f64> {
        let (k, t) = (self.k, self.t);
        let mut gram = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for i in (0..self.n).filter(|&i| !in_test[i]) {
            let g = &self.grams[i * k * k..(i + 1) * k * k];
            for a in 0..k {
                rhs[a] += cross[i * k + a];
                for b in 0..k {
                    gram[(a, b)] += g[a * k + b];
                }
            }
        }
        let beta = spd_solve(&gram, &rhs)?;
        let mut sse = 0.0;
        for i in (0..self.n).filter(|&i| in_test[i]) {
            for r in i * t..(i + 1) * t {
                let mut pred = 0.0;
                for j in 0..k {
                    pred += self.x[(r, j)] * beta[j];
                }
                let e = y[r] - pred;
                sse += e * e;
            }
        }
        Some(sse)
    }
}

/// MCCV criterion for each design on one demeaned outcome (stacked
/// unit-major), using common splits.
pub fn mccv_scores(designs: &[&MccvDesign], y_tilde: &DVector<f64>, config: &MccvConfig) -> Result<Vec<f64>> {
    let Some(first) = designs.first() else {
        return Err(Error::invalid("no candidate models"));
    };
    let (n, t) = (first.n, first.t);
    if y_tilde.len() != n * t {
        return Err(Error::Dimension {
            axis: "outcome length (n*T)",
            expected: n * t,
            found: y_tilde.len(),
        });
    }
    if designs.iter().any(|d| d.n != n || d.t != t) {
        return Err(Error::invalid("candidate designs disagree on panel shape"));
    }
    let (n_c, n_v) = split_sizes(config.rule, n)?;
    if let Some(d) = designs.iter().find(|d| n_c < d.k + 1) {
        return Err(Error::invalid(format!(
            "model '{}': MCCV training size n_c = {n_c} must be at least k + 1 = {}",
            d.name,
            d.k + 1
        )));
    }
    let b = config.splits.unwrap_or_else(|| default_split_count(n, n_c));
    if b == 0 {
        return Err(Error::invalid("MCCV needs at least one split"));
    }
    let crosses: Vec<Vec<f64>> = designs.iter().map(|d| d.cross(y_tilde)).collect();
    let max_redraws = 10 * b as u64;

    // Each split keeps redrawing (attempt 1, 2, ...) until every candidate's
    // training design has full rank.
    let per_split: Vec<(Vec<f64>, u64)> = (0..b as u64)
        .into_par_iter()
        .map(|s| {
            let mut attempt = 0;
            loop {
                let in_test = draw_split(n, n_v, config.seed, s, attempt);
                let sses: Option<Vec<f64>> = designs
                    .iter()
                    .zip(&crosses)
                    .map(|(d, c)| d.split_sse(y_tilde, c, &in_test))
                    .collect();
                if let Some(v) = sses {
                    return (v, attempt);
                }
                attempt += 1;
                if attempt > max_redraws {
                    return (Vec::new(), attempt);
                }
            }
        })
        .collect();

    let redraws: u64 = per_split.iter().map(|(_, a)| *a).sum();
    if redraws > max_redraws || per_split.iter().any(|(v, _)| v.is_empty()) {
        return Err(Error::Numerical(format!(
            "MCCV training designs stayed rank-deficient after {max_redraws} redraws"
        )));
    }
    let denom = (n_v * t * b) as f64;
    let mut totals = vec![0.0; designs.len()];
    for (sses, _) in &per_split {
        for (tot, s) in totals.iter_mut().zip(sses) {
            *tot += s;
        }
    }
    Ok(totals.into_iter().map(|s| s / denom).collect())
}

fn prepare(data: &PanelDataset, models: &[ModelSpec], opts: DesignOptions) -> Result<(Vec<MccvDesign>, DVector<f64>)> {
    let (n, t) = (data.n(), data.t());
    let designs = models
        .par_iter()
        .map(|m| {
            let (design, _) = model_design(data, m, opts).map_err(|e| e.in_model(m.name()))?;
            MccvDesign::new(m.name(), design, n, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let view = within_transform(data, &DMatrix::zeros(n * t, 0))?;
    Ok((designs, view.stacked_outcome()))
}

/// MCCV criterion of a single model.
pub fn mccv_score(data: &PanelDataset, spec: &ModelSpec, config: &MccvConfig, opts: DesignOptions) -> Result<f64> {
    let (designs, y) = prepare(data, std::slice::from_ref(spec), opts)?;
    Ok(mccv_scores(&[&designs[0]], &y, config)?[0])
}

/// Select the candidate minimizing the MCCV criterion.
pub fn mccv_select(
    data: &PanelDataset,
    models: &[ModelSpec],
    config: &MccvConfig,
    opts: DesignOptions,
) -> Result<SelectionReport> {
    check_unique_names(models.iter().map(|m| m.name()))?;
    let (designs, y) = prepare(data, models, opts)?;
    let refs: Vec<&MccvDesign> = designs.iter().collect();
    let scores = mccv_scores(&refs, &y, config)?;
    let scores = designs
        .iter()
        .zip(scores)
        .map(|(d, score)| ModelScore {
            model: d.name.clone(),
            k: d.k,
            score,
        })
        .collect();
    SelectionReport::from_scores(CriterionSpec::Mccv(config.clone()), scores, data.n(), data.t())
}
