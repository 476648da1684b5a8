//! Nesting relations between candidate models: nested (an exact linear map
//! `R` carries one model's regressors into the other's), overlapping but
//! non-nested (some coefficient pair yields identical regression functions),
//! or strictly non-nested.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::ModelSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum NestingVerdict {
    /// `x_a = R x_g` on every probe; `R` is `k_a x k_g`.
    Nested { r: DMatrix<f64> },
    /// `x_a' beta_a = x_g' beta_g` on every probe with both sides nonzero.
    OverlappingNonNested {
        beta_a: DVector<f64>,
        beta_g: DVector<f64>,
    },
    StrictlyNonNested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestingRelation {
    pub verdict: NestingVerdict,
    /// Max abs reconstruction error of `x_a` from `x_g` over the probes.
    pub residual: f64,
    pub tolerance: f64,
}

impl NestingRelation {
    pub fn is_nested(&self) -> bool {
        matches!(self.verdict, NestingVerdict::Nested { .. })
    }

    pub fn label(&self) -> &'static str {
        match self.verdict {
            NestingVerdict::Nested { .. } => "Nested",
            NestingVerdict::OverlappingNonNested { .. } => "OverlappingNonNested",
            NestingVerdict::StrictlyNonNested => "StrictlyNonNested",
        }
    }
}

/// 200 standard-normal vectors followed by the `h` unit spikes.
pub fn default_probes(h: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..h).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    for tau in 0..h {
        let mut e = vec![0.0; h];
        e[tau] = 1.0;
        probes.push(e);
    }
    probes
}

fn evaluate(spec: &ModelSpec, probes: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = spec.k();
    let mut m = DMatrix::zeros(probes.len(), k);
    let mut buf = vec![0.0; k];
    for (p, w) in probes.iter().enumerate() {
        spec.apply_into(w, &mut buf)?;
        for j in 0..k {
            m[(p, j)] = buf[j];
        }
    }
    Ok(m)
}

// Minimum-norm least squares `a ~ b * coef`, tolerant of rank deficiency.
fn lstsq(b: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    if b.ncols() == 0 {
        return DMatrix::zeros(0, a.ncols());
    }
    let svd = b.clone().svd(true, true);
    let eps = f64::EPSILON * b.nrows().max(b.ncols()) as f64 * svd.singular_values.max();
    svd.solve(a, eps).expect("both factors computed")
}

/// Classify how `spec_a` relates to `spec_g` by evaluating both maps on
/// `probes`. Order matters: `Nested` means `spec_a` is nested in `spec_g`.
pub fn detect_nesting(spec_a: &ModelSpec, spec_g: &ModelSpec, probes: &[Vec<f64>]) -> Result<NestingRelation> {
    let (ka, kg) = (spec_a.k(), spec_g.k());
    let needed = 10 * (ka + kg);
    if probes.len() < needed {
        return Err(Error::invalid(format!(
            "nesting check needs at least {needed} probes, got {}",
            probes.len()
        )));
    }
    let xa = evaluate(spec_a, probes)?;
    let xg = evaluate(spec_g, probes)?;
    let tolerance = 1e-8 * (1.0 + xg.amax());

    // x_a' = R x_g'  <=>  X_a = X_g R'
    let rt = lstsq(&xg, &xa);
    let residual = if ka == 0 { 0.0 } else { (&xa - &xg * &rt).amax() };
    if residual <= tolerance {
        return Ok(NestingRelation {
            verdict: NestingVerdict::Nested { r: rt.transpose() },
            residual,
            tolerance,
        });
    }

    let verdict = match overlap_witness(&xa, &xg) {
        Some((beta_a, beta_g)) => NestingVerdict::OverlappingNonNested { beta_a, beta_g },
        None => NestingVerdict::StrictlyNonNested,
    };
    Ok(NestingRelation {
        verdict,
        residual,
        tolerance,
    })
}

// Null space of [X_a, -X_g] restricted to vectors with both blocks nonzero.
fn overlap_witness(xa: &DMatrix<f64>, xg: &DMatrix<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let (p, ka, kg) = (xa.nrows(), xa.ncols(), xg.ncols());
    if ka == 0 || kg == 0 {
        return None;
    }
    let mut c = DMatrix::zeros(p, ka + kg);
    c.columns_mut(0, ka).copy_from(xa);
    c.columns_mut(ka, kg).copy_from(&(-xg));
    let svd = c.svd(false, true);
    let vt = svd.v_t.as_ref()?;
    let s_max = svd.singular_values.max();
    let null_tol = 1e-8 * (1.0 + s_max);
    let null: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= null_tol)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    // nalgebra's thin SVD returns min(p, ka+kg) rows; p >= ka+kg here.
    if null.is_empty() {
        return None;
    }
    let basis = DMatrix::from_columns(&null);
    // Direction in the null space with the largest a-block.
    let block_a = basis.rows(0, ka).into_owned();
    let inner = block_a.svd(false, true);
    let top = inner.v_t.as_ref()?.row(0).transpose();
    if inner.singular_values[0] < 1e-6 {
        return None;
    }
    let v = &basis * top;
    let mut beta_a = v.rows(0, ka).into_owned();
    let mut beta_g = v.rows(ka, kg).into_owned();
    let scale = beta_a.amax();
    if beta_g.amax() < 1e-6 * scale {
        return None;
    }
    // Sign and scale: largest a-coefficient equals +1.
    let pivot = beta_a.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
    beta_a /= pivot;
    beta_g /= pivot;
    Some((beta_a, beta_g))
}

/// `R` with `M_a = R M_g` for two linear specs, derived from their exact
/// coefficient matrices, with the max reconstruction error.
pub fn analytic_nesting(spec_a: &ModelSpec, spec_g: &ModelSpec) -> Option<(DMatrix<f64>, f64)> {
    let ma = spec_a.linear_map()?;
    let mg = spec_g.linear_map()?;
    if ma.ncols() != mg.ncols() {
        return None;
    }
    let rt = lstsq(&mg.transpose(), &ma.transpose());
    let r = rt.transpose();
    let residual = if ma.nrows() == 0 { 0.0 } else { (&ma - &r * &mg).amax() };
    Some((r, residual))
}
