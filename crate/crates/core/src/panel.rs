//! Balanced panel containers and the within (unit-demeaning) transformation.

use nalgebra::{DMatrix, DVector};

use crate::calendar::Calendar;
use crate::error::{Error, Result};

/// High-frequency regressor array `W[i, t, tau]`, stored unit-major, then
/// period, then position within the period.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherPanel {
    n: usize,
    t: usize,
    h: usize,
    values: Vec<f64>,
}

impl WeatherPanel {
    pub fn new(n: usize, t: usize, h: usize, values: Vec<f64>) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid("weather needs at least one observation per period"));
        }
        let expected = n * t * h;
        if values.len() != expected {
            return Err(Error::Dimension {
                axis: "weather values (n*T*H)",
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weather contains missing or non-finite values"));
        }
        Ok(WeatherPanel { n, t, h, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn h(&self) -> usize {
        self.h
    }

    /// The `H` observations of unit `i` in period `t`.
    pub fn obs(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.t + t) * self.h;
        &self.values[start..start + self.h]
    }

    /// Rows `(i, t)` in unit-major order.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.h)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean over all periods and positions for unit `i`.
    pub fn unit_mean(&self, i: usize) -> f64 {
        let block = &self.values[i * self.t * self.h..(i + 1) * self.t * self.h];
        block.iter().sum::<f64>() / block.len() as f64
    }

    /// Keep only the listed units, in the given order.
    pub fn select_units(&self, units: &[usize]) -> WeatherPanel {
        let stride = self.t * self.h;
        let mut values = Vec::with_capacity(units.len() * stride);
        for &i in units {
            values.extend_from_slice(&self.values[i * stride..(i + 1) * stride]);
        }
        WeatherPanel {
            n: units.len(),
            t: self.t,
            h: self.h,
            values,
        }
    }
}

/// Extra per-(unit, period) regressors shared by every candidate model.
#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub names: Vec<String>,
    /// `n*T*c` values, unit-major, then period, then control.
    pub values: Vec<f64>,
}

/// Balanced panel: outcomes `Y[i, t]`, weather `W[i, t, tau]`, optional
/// controls and cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    period_ids: Vec<String>,
    outcome: DMatrix<f64>,
    weather: WeatherPanel,
    controls: Option<Controls>,
    cluster_ids: Vec<String>,
    calendar: Calendar,
}

impl PanelDataset {
    /// Assemble a dataset, validating every dimension. `cluster_ids` defaults
    /// to `unit_ids`.
    pub fn new(
        unit_ids: Vec<String>,
        period_ids: Vec<String>,
        outcome: DMatrix<f64>,
        weather: WeatherPanel,
        controls: Option<Controls>,
        cluster_ids: Option<Vec<String>>,
        calendar: Calendar,
    ) -> Result<Self> {
        let n = unit_ids.len();
        let t = period_ids.len();
        if n < 2 {
            return Err(Error::invalid(format!("panel needs n >= 2 units, got {n}")));
        }
        if t < 2 {
            return Err(Error::invalid(format!("panel needs T >= 2 periods, got {t}")));
        }
        if outcome.nrows() != n {
            return Err(Error::Dimension {
                axis: "outcome rows (units)",
                expected: n,
                found: outcome.nrows(),
            });
        }
        if outcome.ncols() != t {
            return Err(Error::Dimension {
                axis: "outcome columns (periods)",
                expected: t,
                found: outcome.ncols(),
            });
        }
        if outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("outcome contains missing or non-finite values"));
        }
        if weather.n() != n {
            return Err(Error::Dimension {
                axis: "weather units",
                expected: n,
                found: weather.n(),
            });
        }
        if weather.t() != t {
            return Err(Error::Dimension {
                axis: "weather periods",
                expected: t,
                found: weather.t(),
            });
        }
        if calendar.len() != weather.h() {
            return Err(Error::Dimension {
                axis: "calendar length (H)",
                expected: weather.h(),
                found: calendar.len(),
            });
        }
        if let Some(c) = &controls {
            let expected = n * t * c.names.len();
            if c.values.len() != expected {
                return Err(Error::Dimension {
                    axis: "control values (n*T*c)",
                    expected,
                    found: c.values.len(),
                });
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("controls contain missing or non-finite values"));
            }
        }
        let cluster_ids = cluster_ids.unwrap_or_else(|| unit_ids.clone());
        if cluster_ids.len() != n {
            return Err(Error::Dimension {
                axis: "cluster labels",
                expected: n,
                found: cluster_ids.len(),
            });
        }
        Ok(PanelDataset {
            unit_ids,
            period_ids,
            outcome,
            weather,
            controls,
            cluster_ids,
            calendar,
        })
    }

    /// Dataset with generated labels `u0..`, `p0..` and no controls.
    pub fn from_arrays(outcome: DMatrix<f64>, weather: WeatherPanel, calendar: Calendar) -> Result<Self> {
        let unit_ids = (0..outcome.nrows()).map(|i| format!("u{i}")).collect();
        let period_ids = (0..outcome.ncols()).map(|t| format!("p{t}")).collect();
        Self::new(unit_ids, period_ids, outcome, weather, None, None, calendar)
    }

    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn t(&self) -> usize {
        self.period_ids.len()
    }

    pub fn h(&self) -> usize {
        self.weather.h()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_ids(&self) -> &[String] {
        &self.period_ids
    }

    pub fn outcome(&self) -> &DMatrix<f64> {
        &self.outcome
    }

    pub fn weather(&self) -> &WeatherPanel {
        &self.weather
    }

    pub fn controls(&self) -> Option<&Controls> {
        self.controls.as_ref()
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    pub fn calendar(&self) -> &Calendar {
        &self.calendar
    }

    /// Replace the outcome matrix, keeping everything else.
    pub fn with_outcome(&self, outcome: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.unit_ids.clone(),
            self.period_ids.clone(),
            outcome,
            self.weather.clone(),
            self.controls.clone(),
            Some(self.cluster_ids.clone()),
            self.calendar.clone(),
        )
    }

    /// Outcome stacked unit-major, then period.
    pub fn stacked_outcome(&self) -> DVector<f64> {
        let (n, t) = (self.n(), self.t());
        DVector::from_fn(n * t, |r, _| self.outcome[(r / t, r % t)])
    }
}

/// Within-demeaned outcome and design, with the unit means that were removed.
#[derive(Debug, Clone)]
pub struct WithinView {
    pub n: usize,
    pub t: usize,
    /// `n x T`, `Y[i,t] - mean_t Y[i,.]`.
    pub demeaned_outcome: DMatrix<f64>,
    /// `nT x k`, rows unit-major then period.
    pub demeaned_design: DMatrix<f64>,
    pub outcome_means: DVector<f64>,
    /// `n x k` per-unit column means of the design.
    pub design_means: DMatrix<f64>,
}

impl WithinView {
    pub fn k(&self) -> usize {
        self.demeaned_design.ncols()
    }

    /// Demeaned outcome stacked in design row order.
    pub fn stacked_outcome(&self) -> DVector<f64> {
        let t = self.t;
        DVector::from_fn(self.n * t, |r, _| self.demeaned_outcome[(r / t, r % t)])
    }
}

/// Subtract each unit's time mean from a stacked `nT x k` matrix in place,
/// returning the `n x k` means.
pub fn demean_rows(m: &mut DMatrix<f64>, n: usize, t: usize) -> DMatrix<f64> {
    let k = m.ncols();
    let mut means = DMatrix::zeros(n, k);
    for j in 0..k {
        let mut col = m.column_mut(j);
        for i in 0..n {
            let mut block = col.rows_mut(i * t, t);
            let mean = block.sum() / t as f64;
            means[(i, j)] = mean;
            for v in block.iter_mut() {
                *v -= mean;
            }
        }
    }
    means
}

/// Demean outcome and design by unit.
pub fn within_transform(data: &PanelDataset, design: &DMatrix<f64>) -> Result<WithinView> {
    let (n, t) = (data.n(), data.t());
    if design.nrows() != n * t {
        return Err(Error::Dimension {
            axis: "design rows (n*T)",
            expected: n * t,
            found: design.nrows(),
        });
    }
    let mut y = data.outcome().clone();
    let mut outcome_means = DVector::zeros(n);
    for i in 0..n {
        let mean = y.row(i).sum() / t as f64;
        outcome_means[i] = mean;
        for v in y.row_mut(i).iter_mut() {
            *v -= mean;
        }
    }
    let mut x = design.clone();
    let design_means = demean_rows(&mut x, n, t);
    Ok(WithinView {
        n,
        t,
        demeaned_outcome: y,
        demeaned_design: x,
        outcome_means,
        design_means,
    })
}
