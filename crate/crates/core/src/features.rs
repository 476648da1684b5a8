//! Feature maps that compress the `H` high-frequency observations of one
//! panel period into the regressors of a candidate model.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::calendar::Calendar;
use crate::error::{Error, Result};
use crate::panel::WeatherPanel;

/// User-supplied nonlinear feature map.
pub type FeatureFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// The summary statistic a model applies to each period's observations.
#[derive(Clone)]
pub enum FeatureKind {
    /// No weather regressors (the baseline model with `k = 0`).
    Empty,
    AnnualMean,
    BiannualMeans,
    QuarterlyMeans,
    MonthlyMeans,
    /// Annual mean and its square.
    QuadraticAnnual,
    /// Counts per interval. Edges `e_0 < .. < e_m` give `m + 2` bins:
    /// `(-inf, e_0)`, `[e_j, e_{j+1})`, `[e_m, inf)`.
    Bins(Vec<f64>),
    /// `sum_tau max(w_tau - base, 0)` per base.
    DegreeDays(Vec<f64>),
    /// Linear map given by a `k x H` coefficient matrix.
    Matrix(DMatrix<f64>),
    /// Arbitrary map returning `k` values.
    Custom { k: usize, map: FeatureFn },
}

impl fmt::Debug for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Empty => write!(f, "Empty"),
            FeatureKind::AnnualMean => write!(f, "AnnualMean"),
            FeatureKind::BiannualMeans => write!(f, "BiannualMeans"),
            FeatureKind::QuarterlyMeans => write!(f, "QuarterlyMeans"),
            FeatureKind::MonthlyMeans => write!(f, "MonthlyMeans"),
            FeatureKind::QuadraticAnnual => write!(f, "QuadraticAnnual"),
            FeatureKind::Bins(e) => f.debug_tuple("Bins").field(e).finish(),
            FeatureKind::DegreeDays(b) => f.debug_tuple("DegreeDays").field(b).finish(),
            FeatureKind::Matrix(m) => write!(f, "Matrix({}x{})", m.nrows(), m.ncols()),
            FeatureKind::Custom { k, .. } => write!(f, "Custom {{ k: {k} }}"),
        }
    }
}

/// A named candidate model: a feature map plus the calendar it reads.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    name: String,
    kind: FeatureKind,
    calendar: Calendar,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind, calendar: Calendar) -> Result<Self> {
        let name = name.into();
        match &kind {
            FeatureKind::Bins(edges) => {
                if edges.is_empty() {
                    return Err(Error::invalid(format!("model '{name}': bins need at least one edge")));
                }
                if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid(format!(
                        "model '{name}': bin edges must be finite and strictly increasing"
                    )));
                }
            }
            FeatureKind::DegreeDays(bases) => {
                if bases.is_empty() || bases.iter().any(|b| !b.is_finite()) {
                    return Err(Error::invalid(format!(
                        "model '{name}': degree days need at least one finite base"
                    )));
                }
            }
            FeatureKind::MonthlyMeans => {
                calendar.months()?;
            }
            FeatureKind::Matrix(m) if m.ncols() != calendar.len() => {
                return Err(Error::Dimension {
                    axis: "feature matrix columns (H)",
                    expected: calendar.len(),
                    found: m.ncols(),
                });
            }
            _ => {}
        }
        Ok(ModelSpec { name, kind, calendar })
    }

    pub fn annual(calendar: &Calendar) -> Self {
        Self::new("A", FeatureKind::AnnualMean, calendar.clone()).expect("valid")
    }

    pub fn quarterly(calendar: &Calendar) -> Self {
        Self::new("Q", FeatureKind::QuarterlyMeans, calendar.clone()).expect("valid")
    }

    pub fn quadratic(calendar: &Calendar) -> Self {
        Self::new("QinA", FeatureKind::QuadraticAnnual, calendar.clone()).expect("valid")
    }

    pub fn baseline(calendar: &Calendar) -> Self {
        Self::new("N", FeatureKind::Empty, calendar.clone()).expect("valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    pub fn calendar(&self) -> &Calendar {
        &self.calendar
    }

    pub fn h(&self) -> usize {
        self.calendar.len()
    }

    /// Output dimension `k`.
    pub fn k(&self) -> usize {
        match &self.kind {
            FeatureKind::Empty => 0,
            FeatureKind::AnnualMean => 1,
            FeatureKind::BiannualMeans => 2,
            FeatureKind::QuarterlyMeans => 4,
            FeatureKind::MonthlyMeans => 12,
            FeatureKind::QuadraticAnnual => 2,
            FeatureKind::Bins(e) => e.len() + 1,
            FeatureKind::DegreeDays(b) => b.len(),
            FeatureKind::Matrix(m) => m.nrows(),
            FeatureKind::Custom { k, .. } => *k,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(
            self.kind,
            FeatureKind::Empty
                | FeatureKind::AnnualMean
                | FeatureKind::BiannualMeans
                | FeatureKind::QuarterlyMeans
                | FeatureKind::MonthlyMeans
                | FeatureKind::Matrix(_)
        )
    }

    pub fn column_names(&self) -> Vec<String> {
        match &self.kind {
            FeatureKind::Empty => vec![],
            FeatureKind::AnnualMean => vec!["A".into()],
            FeatureKind::BiannualMeans => vec!["H1".into(), "H2".into()],
            FeatureKind::QuarterlyMeans => (1..=4).map(|j| format!("Q{j}")).collect(),
            FeatureKind::MonthlyMeans => (1..=12).map(|j| format!("M{j}")).collect(),
            FeatureKind::QuadraticAnnual => vec!["A".into(), "A2".into()],
            FeatureKind::Bins(edges) => {
                let mut names = vec![format!("bin_lt_{}", edges[0])];
                names.extend(edges.windows(2).map(|w| format!("bin_{}_{}", w[0], w[1])));
                names.push(format!("bin_ge_{}", edges[edges.len() - 1]));
                names
            }
            FeatureKind::DegreeDays(bases) => bases.iter().map(|b| format!("dd_{b}")).collect(),
            FeatureKind::Matrix(m) => (1..=m.nrows()).map(|j| format!("{}_{j}", self.name)).collect(),
            FeatureKind::Custom { k, .. } => (1..=*k).map(|j| format!("{}_{j}", self.name)).collect(),
        }
    }

    /// Exact `k x H` matrix for linear kinds.
    pub fn linear_map(&self) -> Option<DMatrix<f64>> {
        let h = self.h();
        let block_means = |blocks: &[std::ops::Range<usize>]| {
            let mut m = DMatrix::zeros(blocks.len(), h);
            for (j, b) in blocks.iter().enumerate() {
                let w = 1.0 / b.len() as f64;
                for tau in b.clone() {
                    m[(j, tau)] = w;
                }
            }
            m
        };
        match &self.kind {
            FeatureKind::Empty => Some(DMatrix::zeros(0, h)),
            FeatureKind::AnnualMean => Some(DMatrix::from_element(1, h, 1.0 / h as f64)),
            FeatureKind::BiannualMeans => Some(block_means(self.calendar.halves())),
            FeatureKind::QuarterlyMeans => Some(block_means(self.calendar.quarters())),
            FeatureKind::MonthlyMeans => Some(block_means(self.calendar.months().ok()?)),
            FeatureKind::Matrix(m) => Some(m.clone()),
            _ => None,
        }
    }

    /// Write `mu(w)` into `out` (length `k`). `w` must have length `H`.
    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        if w.len() != self.h() {
            return Err(Error::Dimension {
                axis: "weather observations (H)",
                expected: self.h(),
                found: w.len(),
            });
        }
        if out.len() != self.k() {
            return Err(Error::Dimension {
                axis: "feature output (k)",
                expected: self.k(),
                found: out.len(),
            });
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        match &self.kind {
            FeatureKind::Empty => {}
            FeatureKind::AnnualMean => out[0] = mean(w),
            FeatureKind::BiannualMeans => {
                for (o, b) in out.iter_mut().zip(self.calendar.halves()) {
                    *o = mean(&w[b.clone()]);
                }
            }
            FeatureKind::QuarterlyMeans => {
                for (o, b) in out.iter_mut().zip(self.calendar.quarters()) {
                    *o = mean(&w[b.clone()]);
                }
            }
            FeatureKind::MonthlyMeans => {
                for (o, b) in out.iter_mut().zip(self.calendar.months()?) {
                    *o = mean(&w[b.clone()]);
                }
            }
            FeatureKind::QuadraticAnnual => {
                let m = mean(w);
                out[0] = m;
                out[1] = m * m;
            }
            FeatureKind::Bins(edges) => {
                out.fill(0.0);
                for &x in w {
                    out[edges.partition_point(|&e| e <= x)] += 1.0;
                }
            }
            FeatureKind::DegreeDays(bases) => {
                for (o, &b) in out.iter_mut().zip(bases) {
                    *o = w.iter().map(|&x| (x - b).max(0.0)).sum();
                }
            }
            FeatureKind::Matrix(m) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = m.row(j).iter().zip(w).map(|(a, b)| a * b).sum();
                }
            }
            FeatureKind::Custom { k, map } => {
                let v = map(w);
                if v.len() != *k {
                    return Err(Error::Dimension {
                        axis: "custom feature output (k)",
                        expected: *k,
                        found: v.len(),
                    });
                }
                out.copy_from_slice(&v);
            }
        }
        Ok(())
    }

    /// `mu(w)` as a fresh vector.
    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.k()];
        self.apply_into(w, &mut out)?;
        Ok(out)
    }
}

/// `nT x k` matrix whose row `(i, t)` is `mu(W[i, t, .])`, unit-major.
pub fn build_design(weather: &WeatherPanel, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let k = spec.k();
    let rows = weather.n() * weather.t();
    if weather.h() != spec.h() {
        return Err(Error::Dimension {
            axis: "weather observations (H)",
            expected: spec.h(),
            found: weather.h(),
        });
    }
    let mut flat = vec![0.0; rows * k];
    if k > 0 {
        flat.par_chunks_mut(k)
            .zip(weather.rows().collect::<Vec<_>>().into_par_iter())
            .try_for_each(|(out, w)| spec.apply_into(w, out))?;
    }
    Ok(DMatrix::from_row_slice(rows, k, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal4() -> Calendar {
        Calendar::for_length(4).unwrap()
    }

    #[test]
    fn annual_and_quadratic() {
        let w = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ModelSpec::annual(&cal4()).apply(&w).unwrap(), vec![2.5]);
        assert_eq!(ModelSpec::quadratic(&cal4()).apply(&w).unwrap(), vec![2.5, 6.25]);
    }

    #[test]
    fn singleton_quarters() {
        let w = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ModelSpec::quarterly(&cal4()).apply(&w).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn bins_are_half_open_with_unbounded_ends() {
        let s = ModelSpec::new("B", FeatureKind::Bins(vec![2.0, 3.0]), cal4()).unwrap();
        assert_eq!(s.k(), 3);
        assert_eq!(s.apply(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn degree_days() {
        let s = ModelSpec::new("DD", FeatureKind::DegreeDays(vec![2.0, 10.0]), cal4()).unwrap();
        assert_eq!(s.apply(&[1.0, 2.0, 3.0, 4.5]).unwrap(), vec![3.5, 0.0]);
    }

    #[test]
    fn invalid_edges_rejected() {
        assert!(ModelSpec::new("B", FeatureKind::Bins(vec![2.0, 2.0]), cal4()).is_err());
        assert!(ModelSpec::new("B", FeatureKind::Bins(vec![3.0, 2.0]), cal4()).is_err());
        assert!(ModelSpec::new("M", FeatureKind::MonthlyMeans, cal4()).is_err());
    }

    #[test]
    fn wrong_length_input() {
        let err = ModelSpec::annual(&cal4()).apply(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn linear_map_agrees_with_apply() {
        let cal = Calendar::non_leap();
        let w: Vec<f64> = (0..365).map(|d| ((d * 37) % 101) as f64 * 0.1).collect();
        for kind in [
            FeatureKind::AnnualMean,
            FeatureKind::BiannualMeans,
            FeatureKind::QuarterlyMeans,
            FeatureKind::MonthlyMeans,
        ] {
            let s = ModelSpec::new("x", kind, cal.clone()).unwrap();
            let m = s.linear_map().unwrap();
            let direct = s.apply(&w).unwrap();
            let via = &m * nalgebra::DVector::from_column_slice(&w);
            for (a, b) in direct.iter().zip(via.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn design_single_cell_matches_apply() {
        let wp = WeatherPanel::new(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = build_design(&wp, &ModelSpec::quadratic(&cal4())).unwrap();
        assert_eq!(d.row(0).iter().copied().collect::<Vec<_>>(), vec![2.5, 6.25]);
    }
}
