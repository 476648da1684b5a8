//! Synthetic weather, the standard outcome processes, and Monte Carlo
//! experiment drivers.

pub mod dgp;
pub mod experiment;
pub mod weather;

pub use dgp::{gen_outcome, banded_sigma1, banded_sigma2, DgpSpec, ErrorRule, OutcomeGenerator, Response};
pub use experiment::{
    standard_candidate_sets, standard_dgps, standard_models, run_phacking_experiment, run_pseudo_true_experiment,
    run_selection_experiment, CoefficientSummary, Experiment, MseSummary, SelectionFrequency, SimulationReport,
};
pub use weather::{synth_weather, WeatherConfig};
