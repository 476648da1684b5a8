//! Synthetic daily-temperature panels.
//!
//! `W[i,t,tau] = m_i + g_it (1 + phi_i cos(2 pi tau / H)) + A_it sin(2 pi tau / H) + e_it,tau`
//!
//! * `m_i` uniform over `unit_mean_range`;
//! * `g_it ~ N(0, year_shock_sd^2)`, the year's anomaly, whose seasonal
//!   weight `phi_i` moves linearly with the unit's position in the range
//!   (`-shock_seasonality` at the cold end, `+shock_seasonality` at the warm
//!   end);
//! * `A_it = seasonal_amplitude (1 + j_it)`, `j_it ~ N(0, amplitude_jitter_sd^2)`;
//! * `e` is a stationary AR(1) over the days of each year.
//!
//! Every unit draws from its own RNG stream, so unit `i` is identical in
//! panels of any size built from the same seed.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::calendar::Calendar;
use crate::error::{Error, Result};
use crate::features::{build_design, ModelSpec};
use crate::linalg::QrSolver;
use crate::panel::{demean_rows, WeatherPanel};
use crate::rng::{domain, stream_id, stream_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherConfig {
    pub n: usize,
    pub t: usize,
    pub h: usize,
    pub unit_mean_range: (f64, f64),
    pub year_shock_sd: f64,
    pub shock_seasonality: f64,
    pub seasonal_amplitude: f64,
    pub amplitude_jitter_sd: f64,
    pub ar1_rho: f64,
    pub innovation_sd: f64,
    pub seed: u64,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig {
            n: 500,
            t: 5,
            h: 365,
            unit_mean_range: (40.0, 70.0),
            year_shock_sd: 1.0,
            shock_seasonality: 0.25,
            seasonal_amplitude: 20.0,
            amplitude_jitter_sd: 0.05,
            ar1_rho: 0.7,
            innovation_sd: 3.0,
            seed: 20_240_101,
        }
    }
}

impl WeatherConfig {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.h < 4 {
            return Err(Error::invalid(format!("weather needs H >= 4 for quarters, got {}", self.h)));
        }
        if self.n < 2 || self.t < 2 {
            return Err(Error::invalid("weather needs n >= 2 and T >= 2"));
        }
        if !(self.ar1_rho > -1.0 && self.ar1_rho < 1.0) {
            return Err(Error::invalid(format!("ar1_rho must lie in (-1, 1), got {}", self.ar1_rho)));
        }
        let (lo, hi) = self.unit_mean_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid("unit_mean_range must be a finite interval"));
        }
        for (name, v) in [
            ("year_shock_sd", self.year_shock_sd),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("amplitude_jitter_sd", self.amplitude_jitter_sd),
            ("innovation_sd", self.innovation_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !self.shock_seasonality.is_finite() {
            return Err(Error::invalid("shock_seasonality must be finite"));
        }
        Ok(())
    }

    pub fn calendar(&self) -> Result<Calendar> {
        Calendar::for_length(self.h)
    }
}

fn unit_block(cfg: &WeatherConfig, i: usize) -> Vec<f64> {
    let (t, h) = (cfg.t, cfg.h);
    let mut rng = stream_rng(cfg.seed, stream_id(domain::WEATHER, i as u64), 0);
    let (lo, hi) = cfg.unit_mean_range;
    let m = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let position = if hi > lo { 2.0 * (m - lo) / (hi - lo) - 1.0 } else { 0.0 };
    let phi = cfg.shock_seasonality * position;
    let stationary_sd = if cfg.ar1_rho.abs() < 1.0 {
        cfg.innovation_sd / (1.0 - cfg.ar1_rho * cfg.ar1_rho).sqrt()
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(t * h);
    for _ in 0..t {
        let z: f64 = StandardNormal.sample(&mut rng);
        let g = cfg.year_shock_sd * z;
        let z: f64 = StandardNormal.sample(&mut rng);
        let amp = cfg.seasonal_amplitude * (1.0 + cfg.amplitude_jitter_sd * z);
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut e = stationary_sd * z;
        for tau in 0..h {
            if tau > 0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                e = cfg.ar1_rho * e + cfg.innovation_sd * z;
            }
            let angle = 2.0 * PI * (tau as f64 + 0.5) / h as f64;
            out.push(m + g * (1.0 + phi * angle.cos()) + amp * angle.sin() + e);
        }
    }
    out
}

/// Generate a weather panel and check that annual and quarterly means both
/// vary within units (so every built-in model has a full-rank design).
pub fn synth_weather(cfg: &WeatherConfig) -> Result<WeatherPanel> {
    cfg.validate()?;
    let blocks: Vec<Vec<f64>> = (0..cfg.n).into_par_iter().map(|i| unit_block(cfg, i)).collect();
    let values = blocks.concat();
    let panel = WeatherPanel::new(cfg.n, cfg.t, cfg.h, values)?;
    let calendar = cfg.calendar()?;
    for spec in [ModelSpec::annual(&calendar), ModelSpec::quarterly(&calendar), ModelSpec::quadratic(&calendar)] {
        let mut design = build_design(&panel, &spec)?;
        demean_rows(&mut design, cfg.n, cfg.t);
        QrSolver::new(&design, &spec.column_names()).map_err(|e| {
            Error::invalid(format!(
                "weather configuration yields a degenerate '{}' design: {e}",
                spec.name()
            ))
        })?;
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WeatherConfig {
        WeatherConfig {
            n: 20,
            ..WeatherConfig::default()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = synth_weather(&small()).unwrap();
        let b = synth_weather(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_weather(&small().with_seed(99)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn units_do_not_depend_on_panel_size() {
        let a = synth_weather(&small()).unwrap();
        let b = synth_weather(&small().with_n(30)).unwrap();
        assert_eq!(a.values(), &b.values()[..a.values().len()]);
    }

    #[test]
    fn constant_weather_is_rejected() {
        let cfg = WeatherConfig {
            year_shock_sd: 0.0,
            seasonal_amplitude: 0.0,
            amplitude_jitter_sd: 0.0,
            ar1_rho: 0.0,
            innovation_sd: 0.0,
            ..small()
        };
        let err = synth_weather(&cfg).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_weather(&WeatherConfig { h: 3, ..small() }).is_err());
        assert!(synth_weather(&WeatherConfig { ar1_rho: 1.0, ..small() }).is_err());
        assert!(synth_weather(&WeatherConfig {
            unit_mean_range: (5.0, 1.0),
            ..small()
        })
        .is_err());
    }
}
