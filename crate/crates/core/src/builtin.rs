//! The two reference scenarios with their published constants.

use std::sync::Arc;

use crate::error::Result;
use crate::fcontrol::ControllerConfig;
use crate::funnels::{ControllerFunnelSpec, FunnelParams};
use crate::matrixlab::Mat;
use crate::paramdesign::{design, DesignRequest};
use crate::plants::{Example2Plant, PlantModel};
use crate::signals::{ScalarSignal, VectorSignal};
use crate::simloop::{Drive, Scenario, Tolerances};

pub const HORIZON: f64 = 10.0;
pub const SAMPLE_STEP: f64 = 0.01;

/// `φ(t) = 1/(e^{−2t} + 0.05)`.
pub fn precompensator_funnel() -> FunnelParams {
    FunnelParams::exp_boundary(1.0, 2.0, 0.05)
}

/// `φ(t) = 1/(e^{−3t} + 0.05)`.
pub fn tracking_funnel() -> FunnelParams {
    FunnelParams::exp_boundary(1.0, 3.0, 0.05)
}

/// `φ_fc(t) = 1/(2e^{−t} + 0.05)`.
pub fn tracking_controller_funnel() -> FunnelParams {
    FunnelParams::exp_boundary(2.0, 1.0, 0.05)
}

pub fn precompensator_request(s0: f64) -> DesignRequest {
    DesignRequest::new(3, 1, s0, 1.5, Mat::identity(1), precompensator_funnel())
}

pub fn tracking_request() -> DesignRequest {
    let plant = Example2Plant::new();
    DesignRequest::new(3, 2, 7.0, 1.1, Mat::scalar(2, 2.0), tracking_funnel())
        .with_gamma(plant.high_gain().clone())
}

/// Cascade alone, `y = e^{−(t−5)²}`, `u = sin t`, zero initial state.
pub fn precompensator_scenario(s0: f64) -> Result<Scenario> {
    let (params, report) = design(&precompensator_request(s0))?;
    Ok(Scenario {
        name: format!("precompensator-s0-{s0}"),
        params,
        report,
        drive: Drive::Signals {
            u: VectorSignal(vec![ScalarSignal::sine(1.0)]),
            y: VectorSignal(vec![ScalarSignal::gaussian(5.0)]),
        },
        tspan: (0.0, HORIZON),
        tol: Tolerances::new(1e-9, 1e-12),
        sample_step: SAMPLE_STEP,
        cascade0: None,
        sample_times: None,
    })
}

/// Two-output plant under funnel control with the pre-compensator in the
/// loop, reference `(e^{−(t−5)²}, sin t)`.
pub fn tracking_scenario() -> Result<Scenario> {
    let (params, report) = design(&tracking_request())?;
    let fc = ControllerFunnelSpec::new(tracking_controller_funnel(), HORIZON)?;
    let plant: Arc<dyn PlantModel> = Arc::new(Example2Plant::new());
    Ok(Scenario {
        name: "tracking".into(),
        params,
        report,
        drive: Drive::Plant {
            plant,
            controller: ControllerConfig::new(3, 2, fc),
            reference: VectorSignal(vec![ScalarSignal::gaussian(5.0), ScalarSignal::sine(1.0)]),
        },
        tspan: (0.0, HORIZON),
        tol: Tolerances::new(1e-8, 1e-10),
        sample_step: SAMPLE_STEP,
        cascade0: None,
        sample_times: None,
    })
}
