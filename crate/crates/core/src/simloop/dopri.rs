//! Dormand–Prince 5(4) with funnel guards and dense output.
//!
//! A right-hand side may refuse a stage by returning a guard violation
//! (a state that left one of the funnels). Such a trial step is rejected and
//! halved; any other error aborts the integration.

use serde::Serialize;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const GROW_MAX: f64 = 5.0;
const SHRINK_MIN: f64 = 0.1;
/// Consecutive guard-triggered halvings before giving up.
pub const MAX_HALVINGS: usize = 40;
/// Step budget; a run that crawls towards a funnel boundary with ever
/// smaller accepted steps stops here instead of hanging.
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; infinite when unset.
    pub h_max: f64,
    /// Accepted plus rejected steps before the run is abandoned.
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
            h_max: f64::INFINITY,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerances {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub guard_rejections: usize,
    pub rhs_evals: usize,
    pub max_consecutive_halvings: usize,
}

/// States at the requested sample times, plus an abort reason when the
/// integration stopped early (samples then cover only the reached part).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub stats: IntegrationStats,
    pub abort: Option<Error>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&[f64]> {
        self.x.last().map(Vec::as_slice)
    }
}

struct Stepper<F> {
    f: F,
    n: usize,
    stats: IntegrationStats,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl<F> Stepper<F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, stage: usize) -> Result<()> {
        self.stats.rhs_evals += 1;
        let mut out = std::mem::take(&mut self.k[stage]);
        let res = (self.f)(t, &self.tmp, &mut out);
        self.k[stage] = out;
        res
    }

    fn combine(&mut self, x: &[f64], h: f64, coeffs: &[(usize, f64)]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for &(s, c) in coeffs {
                acc += c * self.k[s][i];
            }
            self.tmp[i] = x[i] + h * acc;
        }
    }

    /// Stages 2–7 of a trial step from `(t, x)` with `k[0] = f(t, x)`.
    /// Returns the fifth-order solution; `k[6]` is then `f(t + h, x_new)`.
    fn trial(&mut self, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
        self.combine(x, h, &[(0, A21)]);
        self.eval(t + C2 * h, 1)?;
        self.combine(x, h, &[(0, A31), (1, A32)]);
        self.eval(t + C3 * h, 2)?;
        self.combine(x, h, &[(0, A41), (1, A42), (2, A43)]);
        self.eval(t + C4 * h, 3)?;
        self.combine(x, h, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        self.eval(t + C5 * h, 4)?;
        self.combine(x, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        self.eval(t + h, 5)?;
        self.combine(x, h, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
        let x_new = self.tmp.clone();
        self.eval(t + h, 6)?;
        Ok(x_new)
    }

    fn error_norm(&self, x: &[f64], x_new: &[f64], h: f64, tol: &Tolerances) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let sc = tol.atol + tol.rtol * x[i].abs().max(x_new[i].abs());
            acc += (e / sc).powi(2);
        }
        (acc / self.n.max(1) as f64).sqrt()
    }

    fn dense(&self, x: &[f64], x_new: &[f64], h: f64) -> [Vec<f64>; 5] {
        let n = self.n;
        let mut c = [x.to_vec(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let diff = x_new[i] - x[i];
            let bspl = h * self.k[0][i] - diff;
            c[1][i] = diff;
            c[2][i] = bspl;
            c[3][i] = diff - h * self.k[6][i] - bspl;
            c[4][i] = h
                * (D1 * self.k[0][i]
                    + D3 * self.k[2][i]
                    + D4 * self.k[3][i]
                    + D5 * self.k[4][i]
                    + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }
        c
    }
}

fn interpolate(c: &[Vec<f64>; 5], theta: f64) -> Vec<f64> {
    let th1 = 1.0 - theta;
    (0..c[0].len())
        .map(|i| c[0][i] + theta * (c[1][i] + th1 * (c[2][i] + theta * (c[3][i] + th1 * c[4][i]))))
        .collect()
}

/// Scaled funnel quantity carried by a guard error, when there is one.
fn guard_margin(err: &Error) -> f64 {
    match err {
        Error::GainSingularity { scaled_error, .. } => 1.0 - scaled_error,
        Error::ControllerDomain { norm, .. } => 1.0 - norm,
        _ => f64::NAN,
    }
}

fn initial_step<F>(st: &mut Stepper<F>, t0: f64, x0: &[f64], span: f64, tol: &Tolerances) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = st.n.max(1) as f64;
    let sc: Vec<f64> = x0.iter().map(|x| tol.atol + tol.rtol * x.abs()).collect();
    let d0 = (x0.iter().zip(&sc).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (st.k[0].iter().zip(&sc).map(|(f, s)| (f / s).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span).min(tol.h_max);
    for i in 0..st.n {
        st.tmp[i] = x0[i] + h0 * st.k[0][i];
    }
    let d2 = match st.eval(t0 + h0, 1) {
        Ok(()) => {
            (st.k[1]
                .iter()
                .zip(&st.k[0])
                .zip(&sc)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum::<f64>()
                / n)
                .sqrt()
                / h0
        }
        Err(_) => return h0 * 0.5,
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(tol.h_max)
}

/// Integrates `ẋ = f(t, x)` over `tspan` and returns the states at
/// `samples` (sorted, inside `tspan`).
pub fn integrate<F>(f: F, x0: &[f64], tspan: (f64, f64), tol: &Tolerances, samples: &[f64]) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let (t0, t1) = tspan;
    if !(t1 > t0) || !(tol.rtol > 0.0) || !(tol.atol > 0.0) {
        return Err(Error::InvalidParameter("integration needs t1 > t0 and positive tolerances".into()));
    }
    if samples.windows(2).any(|w| w[1] < w[0]) || samples.iter().any(|&s| s < t0 || s > t1) {
        return Err(Error::InvalidParameter("sample times must be sorted and inside the time span".into()));
    }
    let n = x0.len();
    let mut st = Stepper {
        f,
        n,
        stats: IntegrationStats::default(),
        k: std::array::from_fn(|_| vec![0.0; n]),
        tmp: x0.to_vec(),
    };
    st.eval(t0, 0)?;

    let mut out = Trajectory {
        t: Vec::with_capacity(samples.len()),
        x: Vec::with_capacity(samples.len()),
        stats: IntegrationStats::default(),
        abort: None,
    };
    let mut next = 0;
    while next < samples.len() && samples[next] <= t0 {
        out.t.push(samples[next]);
        out.x.push(x0.to_vec());
        next += 1;
    }

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut h = initial_step(&mut st, t0, x0, t1 - t0, tol);
    let mut halvings = 0usize;
    let mut last_reject_grow = false;
    let mut last_margin = f64::NAN;

    while t < t1 {
        let remaining = t1 - t;
        let mut step = h.min(tol.h_max);
        let last = step >= remaining * (1.0 - 1e-12);
        if last {
            step = remaining;
        }
        if step < 1e-14 * t.abs().max(1.0) {
            out.abort = Some(Error::StepUnderflow { t, margin: last_margin });
            break;
        }
        if st.stats.accepted + st.stats.rejected >= tol.max_steps {
            out.abort = Some(Error::StepLimit {
                t,
                steps: tol.max_steps,
            });
            break;
        }
        match st.trial(t, &x, step) {
            Err(e) if e.is_guard_violation() => {
                st.stats.rejected += 1;
                st.stats.guard_rejections += 1;
                halvings += 1;
                st.stats.max_consecutive_halvings = st.stats.max_consecutive_halvings.max(halvings);
                last_margin = guard_margin(&e);
                if halvings > MAX_HALVINGS {
                    out.abort = Some(Error::StepUnderflow { t, margin: last_margin });
                    break;
                }
                h = step * 0.5;
                last_reject_grow = true;
                continue;
            }
            Err(e) => {
                out.abort = Some(e);
                break;
            }
            Ok(x_new) => {
                let err = st.error_norm(&x, &x_new, step, tol);
                if !err.is_finite() || err > 1.0 {
                    st.stats.rejected += 1;
                    let fac = if err.is_finite() {
                        (SAFETY * err.powf(-0.2)).clamp(SHRINK_MIN, 1.0)
                    } else {
                        SHRINK_MIN
                    };
                    h = step * fac;
                    last_reject_grow = true;
                    continue;
                }
                st.stats.accepted += 1;
                halvings = 0;
                let t_new = if last { t1 } else { t + step };
                if next < samples.len() && samples[next] <= t_new {
                    let c = st.dense(&x, &x_new, step);
                    while next < samples.len() && samples[next] <= t_new {
                        let s = samples[next];
                        let xs = if s == t_new {
                            x_new.clone()
                        } else {
                            interpolate(&c, (s - t) / step)
                        };
                        out.t.push(s);
                        out.x.push(xs);
                        next += 1;
                    }
                }
                let mut fac = if err == 0.0 { GROW_MAX } else { SAFETY * err.powf(-0.2) };
                fac = fac.clamp(SHRINK_MIN, GROW_MAX);
                if last_reject_grow {
                    fac = fac.min(1.0);
                }
                last_reject_grow = false;
                h = step * fac;
                t = t_new;
                x = x_new;
                st.k.swap(0, 6);
            }
        }
    }
    out.stats = st.stats;
    Ok(out)
}

/// Uniform grid `t0, t0 + dt, …, t1` computed without accumulation.
pub fn sample_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt).round() as usize;
    let mut v: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
    v.push(t1);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        dx[0] = -x[0];
        Ok(())
    }

    #[test]
    fn exponential_decay() {
        let tol = Tolerances::new(1e-9, 1e-12);
        let tr = integrate(decay, &[1.0], (0.0, 1.0), &tol, &[0.0, 0.5, 1.0]).unwrap();
        assert!(tr.abort.is_none());
        assert_eq!(tr.t, vec![0.0, 0.5, 1.0]);
        assert!((tr.x[2][0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!((tr.x[1][0] - (-0.5f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn oscillator_energy() {
        let tol = Tolerances::new(1e-9, 1e-12);
        let t1 = 20.0 * std::f64::consts::PI;
        let osc = |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0];
            Ok(())
        };
        let grid = sample_grid(0.0, t1, 0.1);
        let tr = integrate(osc, &[1.0, 0.0], (0.0, t1), &tol, &grid).unwrap();
        let drift = tr
            .x
            .iter()
            .map(|x| (x[0] * x[0] + x[1] * x[1] - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "{drift}");
    }

    #[test]
    fn dense_output_is_accurate() {
        let tol = Tolerances::new(1e-10, 1e-13);
        let grid = sample_grid(0.0, 3.0, 0.01);
        let tr = integrate(decay, &[1.0], (0.0, 3.0), &tol, &grid).unwrap();
        assert_eq!(tr.t.len(), 301);
        let worst = tr
            .t
            .iter()
            .zip(&tr.x)
            .map(|(t, x)| (x[0] - (-t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn guard_rejections_shrink_steps() {
        // the guard forbids x > 1.5 while the true solution stays at 1
        let tol = Tolerances::new(1e-6, 1e-9);
        let f = |_t: f64, x: &[f64], dx: &mut [f64]| {
            if x[0] > 1.5 {
                return Err(Error::GainSingularity { level: 1, scaled_error: 1.0 });
            }
            dx[0] = 0.0;
            Ok(())
        };
        let tr = integrate(f, &[1.0], (0.0, 1.0), &tol, &[1.0]).unwrap();
        assert!(tr.abort.is_none());
        assert_eq!(tr.x[0][0], 1.0);
    }

    #[test]
    fn persistent_violation_aborts() {
        let tol = Tolerances::new(1e-6, 1e-9);
        let f = |t: f64, _x: &[f64], dx: &mut [f64]| {
            if t > 0.5 {
                return Err(Error::GainSingularity { level: 2, scaled_error: 1.0 });
            }
            dx[0] = 1.0;
            Ok(())
        };
        let grid = sample_grid(0.0, 1.0, 0.1);
        let tr = integrate(f, &[0.0], (0.0, 1.0), &tol, &grid).unwrap();
        let err = tr.abort.expect("must abort");
        assert!(err.to_string().starts_with("step size underflow at t = "));
        assert!(tr.t.len() >= 5 && tr.t.iter().all(|&t| t <= 0.5));
        assert!(tr.stats.guard_rejections > 0);
    }

    #[test]
    fn step_budget_stops_a_crawl() {
        let tol = Tolerances::default().with_max_steps(200);
        let f = |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = -1e7 * x[0];
            Ok(())
        };
        let tr = integrate(f, &[1.0], (0.0, 1.0), &tol, &[1.0]).unwrap();
        assert!(matches!(tr.abort, Some(Error::StepLimit { steps: 200, .. })));
        assert_eq!(tr.stats.accepted + tr.stats.rejected, 200);
        assert!(tr.t.is_empty());
    }

    #[test]
    fn hard_errors_propagate() {
        let tol = Tolerances::default();
        let f = |t: f64, _x: &[f64], dx: &mut [f64]| {
            if t > 0.2 {
                return Err(Error::NonFinite);
            }
            dx[0] = 1.0;
            Ok(())
        };
        let tr = integrate(f, &[0.0], (0.0, 1.0), &tol, &[1.0]).unwrap();
        assert!(matches!(tr.abort, Some(Error::NonFinite)));
    }

    #[test]
    fn grid_endpoints() {
        let g = sample_grid(0.0, 10.0, 0.01);
        assert_eq!(g.len(), 1001);
        assert_eq!(g[1000], 10.0);
        assert_eq!(g[500], 5.0);
    }
}
