//! Scenario drivers: the cascade driven by given signals (open loop) and
//! the cascade inside the funnel control loop around a plant (closed loop).

pub mod csv;
pub mod dopri;

use std::sync::Arc;

use serde::Serialize;

pub use dopri::{integrate, sample_grid, IntegrationStats, Tolerances, Trajectory};

use crate::error::{Error, Result};
use crate::fcontrol::{funnel_control, funnel_control_with_w, ControllerConfig};
use crate::matrixlab::norm;
use crate::paramdesign::{DesignParams, ValidationReport};
use crate::plants::PlantModel;
use crate::precomp::{cascade_errors, cascade_rhs, CascadeLayout};
use crate::signals::VectorSignal;
use crate::zderiv::output_derivatives;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
}

/// What drives the cascade.
#[derive(Debug, Clone)]
pub enum Drive {
    /// Prescribed input `u(t)` and output `y(t)`.
    Signals { u: VectorSignal, y: VectorSignal },
    /// Plant under funnel control with reference `y_ref`.
    Plant {
        plant: Arc<dyn PlantModel>,
        controller: ControllerConfig,
        reference: VectorSignal,
    },
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub params: DesignParams,
    pub report: ValidationReport,
    pub drive: Drive,
    pub tspan: (f64, f64),
    pub tol: Tolerances,
    pub sample_step: f64,
    /// Initial cascade state; zero when absent.
    pub cascade0: Option<Vec<f64>>,
    /// Sorted sample times replacing the uniform grid.
    pub sample_times: Option<Vec<f64>>,
}

impl Scenario {
    pub fn mode(&self) -> Mode {
        match self.drive {
            Drive::Signals { .. } => Mode::OpenLoop,
            Drive::Plant { .. } => Mode::ClosedLoop,
        }
    }

    pub fn layout(&self) -> CascadeLayout {
        CascadeLayout::of(&self.params)
    }

    fn cascade_initial(&self) -> Result<Vec<f64>> {
        let n = self.layout().len();
        match &self.cascade0 {
            Some(z0) if z0.len() != n => Err(Error::dim(format!("initial cascade state must have length {n}"))),
            Some(z0) => Ok(z0.clone()),
            None => Ok(vec![0.0; n]),
        }
    }

    pub fn samples(&self) -> Vec<f64> {
        match &self.sample_times {
            Some(ts) => ts.clone(),
            None => sample_grid(self.tspan.0, self.tspan.1, self.sample_step),
        }
    }
}

/// Uniformly sampled record of one run. Vectors are indexed by sample.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub name: String,
    pub mode: Mode,
    pub r: usize,
    pub m: usize,
    pub rho: f64,
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// `y^{(k)}` from the plant chain or the signal, `k < r`, when known.
    pub y_derivs: Vec<Option<Vec<Vec<f64>>>>,
    pub yref: Vec<Vec<f64>>,
    /// `z^{(k)}` for `k = 0 … r−1`.
    pub zd: Vec<Vec<Vec<f64>>>,
    pub cascade: Vec<Vec<f64>>,
    pub plant: Vec<Vec<f64>>,
    pub gains: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub bnd_phi1: Vec<f64>,
    pub bnd_phi: Vec<f64>,
    pub bnd_fc: Vec<f64>,
    /// `1/φ_i − ‖e_i‖` per cascade level.
    pub margins: Vec<Vec<f64>>,
    /// `1/φ_fc − ‖z − y_ref‖` (closed loop).
    pub margin_fc: Vec<f64>,
    /// Composite bound: `(ρ + r − 2)/φ` on `‖y − z‖`, plus `1/φ_fc` in
    /// closed loop where it bounds `‖y − y_ref‖`.
    pub bnd_track: Vec<f64>,
    pub margin_track: Vec<f64>,
    pub stats: IntegrationStats,
    #[serde(serialize_with = "ser_abort")]
    pub abort: Option<Error>,
}

fn ser_abort<S: serde::Serializer>(a: &Option<Error>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match a {
        Some(e) => s.serialize_some(&e.to_string()),
        None => s.serialize_none(),
    }
}

impl SimResult {
    fn empty(sc: &Scenario, n_samples: usize) -> Self {
        SimResult {
            name: sc.name.clone(),
            mode: sc.mode(),
            r: sc.params.r,
            m: sc.params.m,
            rho: sc.params.rho,
            t: Vec::with_capacity(n_samples),
            y: Vec::with_capacity(n_samples),
            y_derivs: Vec::with_capacity(n_samples),
            yref: Vec::with_capacity(n_samples),
            zd: Vec::with_capacity(n_samples),
            cascade: Vec::with_capacity(n_samples),
            plant: Vec::with_capacity(n_samples),
            gains: Vec::with_capacity(n_samples),
            u: Vec::with_capacity(n_samples),
            w: Vec::with_capacity(n_samples),
            bnd_phi1: Vec::with_capacity(n_samples),
            bnd_phi: Vec::with_capacity(n_samples),
            bnd_fc: Vec::with_capacity(n_samples),
            margins: Vec::with_capacity(n_samples),
            margin_fc: Vec::with_capacity(n_samples),
            bnd_track: Vec::with_capacity(n_samples),
            margin_track: Vec::with_capacity(n_samples),
            stats: IntegrationStats::default(),
            abort: None,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    /// Smallest funnel margin of every cascade level over the run.
    pub fn min_margins(&self) -> Vec<f64> {
        let levels = self.r - 1;
        (0..levels)
            .map(|i| self.margins.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    pub fn summary(&self) -> SimSummary {
        let sup = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::NEG_INFINITY, f64::max);
        let inf = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::INFINITY, f64::min);
        let levels = self.r - 1;
        let closed = self.mode == Mode::ClosedLoop;
        SimSummary {
            name: self.name.clone(),
            mode: self.mode,
            samples: self.len(),
            t_end: self.t.last().copied().unwrap_or(f64::NAN),
            completed: self.completed(),
            abort: self.abort.as_ref().map(ToString::to_string),
            sup_gain: (0..levels).map(|i| sup(&mut self.gains.iter().map(|g| g[i]))).collect(),
            min_margin: self.min_margins(),
            min_margin_fc: closed.then(|| inf(&mut self.margin_fc.iter().copied())),
            min_margin_track: inf(&mut self.margin_track.iter().copied()),
            sup_u: sup(&mut self.u.iter().map(|u| norm(u))),
            sup_w: closed.then(|| sup(&mut self.w.iter().map(|w| norm(w)))),
            sup_state: sup(&mut self.cascade.iter().chain(&self.plant).map(|x| norm(x))),
            sup_output_error: sup(&mut self.y.iter().zip(&self.zd).map(|(y, zd)| dist(y, &zd[0]))),
            sup_tracking_error: closed.then(|| sup(&mut self.y.iter().zip(&self.yref).map(|(y, r)| dist(y, r)))),
            stats: self.stats,
        }
    }

    /// `max ‖y − z‖` over samples with `t ∈ [from, to]`.
    pub fn max_output_error(&self, from: f64, to: f64) -> f64 {
        self.t
            .iter()
            .zip(self.y.iter().zip(&self.zd))
            .filter(|(t, _)| **t >= from && **t <= to)
            .map(|(_, (y, zd))| dist(y, &zd[0]))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Suprema and minima recorded for `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub name: String,
    pub mode: Mode,
    pub samples: usize,
    pub t_end: f64,
    pub completed: bool,
    pub abort: Option<String>,
    pub sup_gain: Vec<f64>,
    pub min_margin: Vec<f64>,
    pub min_margin_fc: Option<f64>,
    pub min_margin_track: f64,
    pub sup_u: f64,
    pub sup_w: Option<f64>,
    pub sup_state: f64,
    pub sup_output_error: f64,
    pub sup_tracking_error: Option<f64>,
    pub stats: IntegrationStats,
}

fn check_cascade_initial(sc: &Scenario, z0: &[f64], y0: &[f64]) -> Result<()> {
    let layout = sc.layout();
    let t0 = sc.tspan.0;
    for (i, e) in cascade_errors(z0, y0, layout).iter().enumerate() {
        let scaled = sc.params.level_funnel(i).value(t0) * norm(e);
        if !(scaled < 1.0) {
            return Err(Error::InitialCondition(format!(
                "cascade level {} has scaled error {scaled} ≥ 1 at t0",
                i + 1
            )));
        }
    }
    Ok(())
}

fn composite_bound(params: &DesignParams, t: f64) -> f64 {
    (params.rho + params.r as f64 - 2.0) * params.phi.boundary(t)
}

/// Integrates the cascade alone, driven by prescribed `u(t)` and `y(t)`.
pub fn run_open_loop(sc: &Scenario) -> Result<SimResult> {
    let Drive::Signals { u, y } = &sc.drive else {
        return Err(Error::InvalidParameter("open-loop run needs a signal drive".into()));
    };
    let params = &sc.params;
    let m = params.m;
    if u.dim() != m || y.dim() != m {
        return Err(Error::dim(format!("signals must have {m} components")));
    }
    let z0 = sc.cascade_initial()?;
    check_cascade_initial(sc, &z0, &y.value(sc.tspan.0))?;
    let mut yb = vec![0.0; m];
    let mut ub = vec![0.0; m];
    let rhs = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        y.value_into(t, &mut yb);
        u.value_into(t, &mut ub);
        cascade_rhs(x, &yb, &ub, params, t, dx).map(|_| ())
    };
    let samples = sc.samples();
    let traj = integrate(rhs, &z0, sc.tspan, &sc.tol, &samples)?;

    let r = params.r;
    let mut res = SimResult::empty(sc, traj.t.len());
    for (&t, x) in traj.t.iter().zip(&traj.x) {
        let yd = y.derivs(t, r - 1);
        let yt = yd[0].clone();
        let zd = match output_derivatives(x, &yt, params, t, r - 1) {
            Ok(zd) => zd,
            Err(e) => {
                res.abort = Some(e);
                break;
            }
        };
        let gains = crate::precomp::cascade_gains(x, &yt, params, t)?;
        let margins = crate::precomp::cascade_margins(x, &yt, params, t);
        let bnd = composite_bound(params, t);
        res.t.push(t);
        res.margin_track.push(bnd - dist(&yt, &zd[0]));
        res.bnd_track.push(bnd);
        res.y.push(yt);
        res.y_derivs.push(Some(yd));
        res.zd.push(zd);
        res.cascade.push(x.clone());
        res.gains.push(gains);
        res.u.push(u.value(t));
        res.bnd_phi1.push(params.phi1.boundary(t));
        res.bnd_phi.push(params.phi.boundary(t));
        res.margins.push(margins);
    }
    res.stats = traj.stats;
    if res.abort.is_none() {
        res.abort = traj.abort;
    }
    Ok(res)
}

/// Closed loop: plant ⊕ cascade, controller fed with `z, ż, …` only.
pub fn run_closed_loop(sc: &Scenario) -> Result<SimResult> {
    let Drive::Plant {
        plant,
        controller,
        reference,
    } = &sc.drive
    else {
        return Err(Error::InvalidParameter("closed-loop run needs a plant drive".into()));
    };
    let params = &sc.params;
    let (r, m) = (params.r, params.m);
    if plant.output_dim() != m || reference.dim() != m || controller.m != m {
        return Err(Error::dim(format!("plant, reference and controller must have {m} outputs")));
    }
    if plant.relative_degree() != r || controller.r != r {
        return Err(Error::dim(format!("plant and controller must have relative degree {r}")));
    }
    let np = plant.state_dim();
    let t0 = sc.tspan.0;
    let xp0 = plant.initial_state();
    let z0 = sc.cascade_initial()?;
    check_cascade_initial(sc, &z0, &plant.output(&xp0))?;
    let e0 = error_vector(&z0, &plant.output(&xp0), reference, params, t0)?;
    funnel_control(&e0, controller, t0).map_err(|e| Error::InitialCondition(e.to_string()))?;

    let mut x0 = xp0;
    x0.extend_from_slice(&z0);
    let rhs = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        let (xp, xc) = x.split_at(np);
        let y = plant.output(xp);
        let e = error_vector(xc, &y, reference, params, t)?;
        let u = funnel_control(&e, controller, t)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let (dp, dc) = dx.split_at_mut(np);
        plant.rhs(t, xp, &u, dp);
        cascade_rhs(xc, &y, &u, params, t, dc).map(|_| ())
    };
    let samples = sc.samples();
    let traj = integrate(rhs, &x0, sc.tspan, &sc.tol, &samples)?;

    let mut res = SimResult::empty(sc, traj.t.len());
    for (&t, x) in traj.t.iter().zip(&traj.x) {
        let (xp, xc) = x.split_at(np);
        let y = plant.output(xp);
        let sample = (|| -> Result<_> {
            let zd = output_derivatives(xc, &y, params, t, r - 1)?;
            let refs = reference.derivs(t, r - 1);
            let e: Vec<f64> = zd.iter().flatten().zip(refs.iter().flatten()).map(|(a, b)| a - b).collect();
            let (u, w) = funnel_control_with_w(&e, controller, t)?;
            let gains = crate::precomp::cascade_gains(xc, &y, params, t)?;
            Ok((zd, refs, u, w, gains))
        })();
        let (zd, refs, u, w, gains) = match sample {
            Ok(v) => v,
            Err(e) => {
                res.abort = Some(e);
                break;
            }
        };
        let bnd_fc = controller.phi_fc.boundary(t);
        let bnd = composite_bound(params, t) + bnd_fc;
        res.t.push(t);
        res.margin_fc.push(bnd_fc - dist(&zd[0], &refs[0]));
        res.margin_track.push(bnd - dist(&y, &refs[0]));
        res.bnd_track.push(bnd);
        res.bnd_fc.push(bnd_fc);
        res.margins.push(crate::precomp::cascade_margins(xc, &y, params, t));
        res.y_derivs.push(plant.chain_states(xp));
        res.y.push(y);
        res.yref.push(refs[0].clone());
        res.zd.push(zd);
        res.cascade.push(xc.to_vec());
        res.plant.push(xp.to_vec());
        res.gains.push(gains);
        res.u.push(u);
        res.w.push(w);
        res.bnd_phi1.push(params.phi1.boundary(t));
        res.bnd_phi.push(params.phi.boundary(t));
    }
    res.stats = traj.stats;
    if res.abort.is_none() {
        res.abort = traj.abort;
    }
    Ok(res)
}

/// `𝐞 = (z − y_ref, ż − ẏ_ref, …, z^{(r−1)} − y_ref^{(r−1)})`.
pub fn error_vector(
    cascade: &[f64],
    y: &[f64],
    reference: &VectorSignal,
    params: &DesignParams,
    t: f64,
) -> Result<Vec<f64>> {
    let r = params.r;
    let zd = output_derivatives(cascade, y, params, t, r - 1)?;
    let refs = reference.derivs(t, r - 1);
    Ok(zd.iter().flatten().zip(refs.iter().flatten()).map(|(a, b)| a - b).collect())
}

/// Runs either mode.
pub fn run(sc: &Scenario) -> Result<SimResult> {
    match sc.mode() {
        Mode::OpenLoop => run_open_loop(sc),
        Mode::ClosedLoop => run_closed_loop(sc),
    }
}
