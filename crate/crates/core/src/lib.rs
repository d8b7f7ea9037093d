//! Welfare-maximizing prediction markets.
//!
//! Two mechanisms that pay agents for the marginal value of their
//! information: a single-batch leave-one-out market ([`fpm`]) and a
//! sequential market with time-discounted counterfactual rewards ([`mvp`]).
//! Alongside them live the traditional prediction-market baselines
//! ([`pm_baseline`]), symmetric effort-equilibrium solvers
//! ([`equilibrium`]), a Monte Carlo simulator of the full games
//! ([`montecarlo`]) and the figure experiments ([`experiment`]).

pub mod belief;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod fpm;
pub mod info_model;
pub mod montecarlo;
pub mod mvp;
pub mod numeric;
pub mod pm_baseline;
pub mod quadrature;
pub mod scoring;

pub use belief::{Belief, Report, ReportVector, UpdateForm};
pub use equilibrium::{EquilibriumResult, LatencyFamily};
pub use error::{Error, Result};
pub use info_model::{InformationModel, ModelSpec, ScoreSequence};
pub use mvp::TimeValue;
pub use pm_baseline::AccessFunction;
pub use scoring::{ScoringKind, ScoringRule};
