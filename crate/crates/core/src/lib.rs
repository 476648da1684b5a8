//! Model selection for linear fixed-effects panel models whose regressors
//! summarize a shared high-frequency series.

pub mod calendar;
pub mod error;
pub mod fe;
pub mod features;
pub mod io;
pub mod linalg;
pub mod nesting;
pub mod oracle;
pub mod panel;
pub mod rng;
pub mod selection;
pub mod sim;

pub use calendar::Calendar;
pub use error::{Error, Result};
pub use fe::{delta_prediction, fe_estimate, predict_within, profile_loglik, DesignOptions, FeFit, WithinFitter};
pub use features::{build_design, FeatureKind, ModelSpec};
pub use nesting::{detect_nesting, NestingRelation, NestingVerdict};
pub use selection::{CriterionSpec, MccvConfig, Penalty, SelectionReport, SplitRule};
pub use panel::{within_transform, Controls, PanelDataset, WeatherPanel, WithinView};
pub use oracle::{
    classify_category, misspec_delta, mspe_decompose, pseudo_predictions_equal, pseudo_true_analysis,
    pseudo_true_nested, pseudo_true_params, Category, DgpTruth, MspeParts, PseudoTrueResult,
};
pub use sim::{gen_outcome, synth_weather, DgpSpec, ErrorRule, SimulationReport, WeatherConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/panels.md")]
    mod panels {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/nesting.md")]
    mod nesting {}
    #[doc = include_str!("../../../book/src/pseudo_true.md")]
    mod pseudo_true {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
