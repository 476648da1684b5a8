use rayon::prelude::*;

use super::{check_unique_names, CriterionSpec, ModelScore, Penalty, SelectionReport};
use crate::error::{Error, Result};
use crate::fe::{fe_estimate, DesignOptions, FeFit};
use crate::features::ModelSpec;
use crate::panel::PanelDataset;

/// `lambda_nT` for a penalty kind.
pub fn penalty_value(penalty: &Penalty, n: usize, t: usize) -> Result<f64> {
    let nt = n * t;
    if nt < 2 {
        return Err(Error::invalid(format!("penalty needs nT >= 2, got {nt}")));
    }
    let x = nt as f64;
    let lambda = match penalty {
        Penalty::Aic => 2.0,
        Penalty::Bic => x.ln(),
        Penalty::Sw1 => {
            let ll = x.ln().ln();
            if ll <= 0.0 {
                return Err(Error::invalid(format!("SW1 needs log log nT > 0 (nT >= 3), got nT = {nt}")));
            }
            (x * ll).sqrt()
        }
        Penalty::Sw2 => (x * x.ln()).sqrt(),
        Penalty::Custom { name, lambda } => {
            let v = lambda(nt);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("penalty '{name}' must be positive at nT = {nt}, got {v}")));
            }
            v
        }
    };
    Ok(lambda)
}

/// GIC scores `loglik - lambda k` for already-fitted models.
pub fn gic_scores(fits: &[&FeFit], penalty: &Penalty) -> Result<Vec<ModelScore>> {
    let Some(first) = fits.first() else {
        return Err(Error::invalid("no candidate models"));
    };
    let lambda = penalty_value(penalty, first.n, first.t)?;
    Ok(fits
        .iter()
        .map(|f| ModelScore {
            model: f.model_name.clone(),
            k: f.k(),
            score: f.loglik - lambda * f.k() as f64,
        })
        .collect())
}

/// Fit every candidate and select by `GIC = loglik - lambda_nT k` (maximized).
pub fn gic_select(
    data: &PanelDataset,
    models: &[ModelSpec],
    penalty: &Penalty,
    opts: DesignOptions,
) -> Result<SelectionReport> {
    check_unique_names(models.iter().map(|m| m.name()))?;
    let fits: Vec<FeFit> = models
        .par_iter()
        .map(|m| fe_estimate(data, m, opts).map_err(|e| e.in_model_if_needed(m.name())))
        .collect::<Result<_>>()?;
    let refs: Vec<&FeFit> = fits.iter().collect();
    let scores = gic_scores(&refs, penalty)?;
    SelectionReport::from_scores(CriterionSpec::Gic(penalty.clone()), scores, data.n(), data.t())
}
