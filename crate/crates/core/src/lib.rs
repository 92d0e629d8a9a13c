//! Funnel pre-compensator cascades for output-derivative estimation, the
//! funnel controller that consumes them, and the tooling to simulate and
//! check both.
//!
//! The usual flow is [`paramdesign::design`] to turn a handful of tuning
//! constants into validated [`DesignParams`], a [`Scenario`] to pair the
//! design with a drive, [`simloop::run`] to integrate it, and
//! [`diagnostics::diagnose`] to inspect the result.

pub mod batch;
pub mod builtin;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fcontrol;
pub mod funnels;
pub mod matrixlab;
pub mod paramdesign;
pub mod plants;
pub mod precomp;
pub mod signals;
pub mod simloop;
pub mod zderiv;

pub use config::{parse_scenario, LoadedScenario, ScenarioFile};
pub use error::{Error, Result};
pub use funnels::{FunnelFamily, FunnelParams, FunnelSpec};
pub use matrixlab::Mat;
pub use paramdesign::{design, DesignParams, DesignRequest, ValidationReport};
pub use simloop::{run, Mode, Scenario, SimResult, Tolerances};
