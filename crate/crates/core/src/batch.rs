//! Independent runs fanned out over a thread pool. Without the `parallel`
//! feature every entry point degrades to a plain sequential loop with the
//! same results in the same order.

use crate::builtin;
use crate::diagnostics::{kron_identities, KronReport};
use crate::error::{Error, Result};
use crate::matrixlab::Mat;
use crate::paramdesign::{design, DesignParams, DesignRequest, ValidationReport};
use crate::simloop::{run, Scenario, SimResult};

/// Order-preserving map, parallel when the feature is enabled.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn run_batch_seq(scenarios: &[Scenario]) -> Vec<Result<SimResult>> {
    scenarios.iter().map(run).collect()
}

pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<SimResult>> {
    par_map(scenarios, run)
}

/// Runs on a dedicated pool of `jobs` threads; `jobs = 1` is sequential.
pub fn run_batch_jobs(scenarios: &[Scenario], jobs: usize) -> Result<Vec<Result<SimResult>>> {
    if jobs == 0 {
        return Err(Error::InvalidParameter("jobs must be at least 1".into()));
    }
    if jobs == 1 {
        return Ok(run_batch_seq(scenarios));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(pool.install(|| run_batch(scenarios)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(run_batch_seq(scenarios))
    }
}

/// Open-loop signal-approximation runs, one per `s₀`.
pub fn s0_sweep(s0s: &[f64]) -> Vec<Result<SimResult>> {
    par_map(s0s, |&s0| builtin::precompensator_scenario(s0).and_then(|sc| run(&sc)))
}

/// Design outcome with its Kronecker identity residuals.
#[derive(Debug, Clone)]
pub struct DesignCheck {
    pub params: DesignParams,
    pub report: ValidationReport,
    pub kron: KronReport,
}

/// Designs and checks each request; `Γ` is taken from the request.
pub fn design_sweep(requests: &[DesignRequest]) -> Vec<Result<DesignCheck>> {
    par_map(requests, |req| {
        let (params, report) = design(req)?;
        let (_, kron) = kron_identities(&params, req.gamma.as_ref())?;
        Ok(DesignCheck { params, report, kron })
    })
}

/// `Γ̃/(1 − shrink)`: a plant gain whose ratio `ΓΓ̃⁻¹` is a positive
/// multiple of the identity, with mismatch `‖G‖ = |shrink|/(1 − shrink)`.
pub fn scaled_gain(gamma_tilde: &Mat, shrink: f64) -> Mat {
    gamma_tilde.scale(1.0 / (1.0 - shrink))
}
