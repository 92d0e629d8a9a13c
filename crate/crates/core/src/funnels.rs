//! Funnel functions with exact derivatives.
//!
//! A funnel function `φ` bounds an error signal through `φ(t)‖e(t)‖ < 1`;
//! the boundary drawn in plots is `1/φ`. Two parametric families are
//! provided:
//!
//! * `exp-boundary`: `ψ(t) = c_amp·e^{−c_rate·t} + c_inf`, `φ = 1/ψ`;
//! * `rational-pole`: `φ(t) = t/(c_inf·t + c_amp)`, so `φ(0) = 0` and the
//!   boundary `c_inf + c_amp/t` has a pole at the origin.
//!
//! Every spec also carries a multiplicative `scale`, which is how the
//! tighter first-stage funnel `φ₁ = φ/ρ` is represented without touching the
//! family parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunnelFamily {
    ExpBoundary,
    RationalPole,
}

/// Family parameters as they appear in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelParams {
    pub family: FunnelFamily,
    pub c_inf: f64,
    #[serde(default)]
    pub c_amp: f64,
    #[serde(default = "default_rate")]
    pub c_rate: f64,
}

fn default_rate() -> f64 {
    1.0
}

impl FunnelParams {
    pub fn exp_boundary(c_amp: f64, c_rate: f64, c_inf: f64) -> Self {
        FunnelParams {
            family: FunnelFamily::ExpBoundary,
            c_inf,
            c_amp,
            c_rate,
        }
    }

    pub fn rational_pole(c_amp: f64, c_inf: f64) -> Self {
        FunnelParams {
            family: FunnelFamily::RationalPole,
            c_inf,
            c_amp,
            c_rate: 1.0,
        }
    }
}

/// A validated funnel function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunnelSpec {
    params: FunnelParams,
    scale: f64,
    max_order: usize,
}

/// Builds a funnel from family parameters, rejecting values outside the
/// family's admissible range.
pub fn make_funnel(params: FunnelParams, max_order: usize) -> Result<FunnelSpec> {
    let finite = [params.c_inf, params.c_amp, params.c_rate]
        .iter()
        .all(|x| x.is_finite());
    if !finite {
        return Err(Error::InvalidParameter("funnel parameters must be finite".into()));
    }
    if params.c_inf <= 0.0 {
        return Err(Error::InvalidParameter("boundary floor must be positive".into()));
    }
    match params.family {
        FunnelFamily::ExpBoundary => {
            if params.c_rate <= 0.0 {
                return Err(Error::InvalidParameter("decay rate must be positive".into()));
            }
            if params.c_amp < 0.0 {
                return Err(Error::InvalidParameter(
                    "boundary amplitude must be non-negative".into(),
                ));
            }
        }
        FunnelFamily::RationalPole => {
            if params.c_amp <= 0.0 {
                return Err(Error::InvalidParameter(
                    "pole funnel needs a positive amplitude".into(),
                ));
            }
        }
    }
    if max_order == 0 {
        return Err(Error::InvalidParameter("funnel needs at least one derivative".into()));
    }
    Ok(FunnelSpec {
        params,
        scale: 1.0,
        max_order,
    })
}

impl FunnelSpec {
    pub fn params(&self) -> FunnelParams {
        self.params
    }

    pub fn family(&self) -> FunnelFamily {
        self.params.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// The same funnel multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> FunnelSpec {
        assert!(factor > 0.0 && factor.is_finite());
        FunnelSpec {
            scale: self.scale * factor,
            ..*self
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.scale * self.unscaled_value(t)
    }

    /// Boundary `1/φ(t)`; infinite where `φ(t) = 0`.
    pub fn boundary(&self, t: f64) -> f64 {
        let v = self.value(t);
        if v == 0.0 {
            f64::INFINITY
        } else {
            1.0 / v
        }
    }

    fn unscaled_value(&self, t: f64) -> f64 {
        let p = &self.params;
        match p.family {
            FunnelFamily::ExpBoundary => 1.0 / (p.c_amp * (-p.c_rate * t).exp() + p.c_inf),
            FunnelFamily::RationalPole => t / (p.c_inf * t + p.c_amp),
        }
    }

    /// Derivatives of the boundary `ψ = 1/φ`, orders `0..=order`. For the
    /// pole family these are infinite at `t = 0`.
    pub fn reciprocal_derivs(&self, t: f64, order: usize) -> Vec<f64> {
        self.unscaled_reciprocal_derivs(t, order)
            .into_iter()
            .map(|x| x / self.scale)
            .collect()
    }

    fn unscaled_reciprocal_derivs(&self, t: f64, order: usize) -> Vec<f64> {
        let p = &self.params;
        match p.family {
            FunnelFamily::ExpBoundary => {
                let decay = p.c_amp * (-p.c_rate * t).exp();
                let mut out = Vec::with_capacity(order + 1);
                let mut factor = 1.0;
                for k in 0..=order {
                    out.push(if k == 0 { decay + p.c_inf } else { factor * decay });
                    factor *= -p.c_rate;
                }
                out
            }
            FunnelFamily::RationalPole => {
                // ψ = c_inf + c_amp/t
                let mut out = Vec::with_capacity(order + 1);
                let mut fact = 1.0;
                for k in 0..=order {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let term = p.c_amp * sign * fact / t.powi(k as i32 + 1);
                    out.push(if k == 0 { p.c_inf + term } else { term });
                }
                out
            }
        }
    }

    /// `(φ(t), φ̇(t), …, φ^{(order)}(t))`, exact.
    pub fn derivs(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        if order > self.max_order {
            return Err(Error::FunnelOrder {
                requested: order,
                budget: self.max_order,
            });
        }
        let p = &self.params;
        let mut out = Vec::with_capacity(order + 1);
        match p.family {
            FunnelFamily::ExpBoundary => {
                // Σ_{l=0}^{k} C(k,l) φ^{(l)} ψ^{(k−l)} = 0 for k ≥ 1
                let psi = self.unscaled_reciprocal_derivs(t, order);
                out.push(1.0 / psi[0]);
                for k in 1..=order {
                    let mut s = 0.0;
                    let mut binom = 1.0;
                    for (l, phi_l) in out.iter().enumerate().take(k) {
                        s += binom * phi_l * psi[k - l];
                        binom = binom * (k - l) as f64 / (l + 1) as f64;
                    }
                    out.push(-s / psi[0]);
                }
                for d in out.iter_mut() {
                    *d *= self.scale;
                }
            }
            FunnelFamily::RationalPole => {
                // φ = (1/c_inf)(1 − b/(t + b)), b = c_amp/c_inf
                let b = p.c_amp / p.c_inf;
                out.push(self.value(t));
                let mut fact = 1.0;
                for k in 1..=order {
                    fact *= k as f64;
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let d = -(b / p.c_inf) * sign * fact / (t + b).powi(k as i32 + 1);
                    out.push(self.scale * d);
                }
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper mirroring the free-function form.
pub fn funnel_derivs(f: &FunnelSpec, t: f64, order: usize) -> Result<Vec<f64>> {
    f.derivs(t, order)
}

/// Funnel for the output-feedback controller. Only the weaker growth bound
/// `|φ̇| ≤ c(1 + φ)` is required; `c` is measured on a sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerFunnelSpec {
    funnel: FunnelSpec,
    growth_constant: f64,
}

impl ControllerFunnelSpec {
    /// Checks positivity and measures the growth constant on 1000 points
    /// of `[0, horizon]`.
    pub fn new(params: FunnelParams, horizon: f64) -> Result<Self> {
        let funnel = make_funnel(params, 1)?;
        let horizon = if horizon > 0.0 { horizon } else { 10.0 };
        let n = 1000;
        let mut c: f64 = 0.0;
        for k in 0..=n {
            let t = horizon * k as f64 / n as f64;
            let d = funnel.derivs(t, 1)?;
            if t > 0.0 && d[0] <= 0.0 {
                return Err(Error::InvalidParameter(
                    "controller funnel must be positive for t > 0".into(),
                ));
            }
            c = c.max(d[1].abs() / (1.0 + d[0]));
        }
        Ok(ControllerFunnelSpec {
            funnel,
            growth_constant: c,
        })
    }

    pub fn funnel(&self) -> &FunnelSpec {
        &self.funnel
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    pub fn value(&self, t: f64) -> f64 {
        self.funnel.value(t)
    }

    pub fn boundary(&self, t: f64) -> f64 {
        self.funnel.boundary(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> FunnelSpec {
        make_funnel(FunnelParams::exp_boundary(1.0, 2.0, 0.05), 3).unwrap()
    }

    #[test]
    fn example_funnel_at_origin_and_infinity() {
        let f = example1();
        assert!((f.value(0.0) - 1.0 / 1.05).abs() < 1e-15);
        assert!((f.value(50.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn constant_funnel() {
        let f = make_funnel(FunnelParams::exp_boundary(0.0, 1.0, 1.0), 4).unwrap();
        let d = f.derivs(3.0, 4).unwrap();
        assert_eq!(d, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let err = make_funnel(FunnelParams::exp_boundary(1.0, 2.0, -1.0), 3).unwrap_err();
        assert!(err.to_string().contains("boundary floor must be positive"));
        let err = make_funnel(FunnelParams::exp_boundary(1.0, 0.0, 1.0), 3).unwrap_err();
        assert!(err.to_string().contains("decay rate must be positive"));
        assert!(make_funnel(FunnelParams::rational_pole(0.0, 1.0), 3).is_err());
    }

    #[test]
    fn order_budget_enforced() {
        let err = example1().derivs(1.0, 4).unwrap_err();
        assert!(matches!(err, Error::FunnelOrder { requested: 4, budget: 3 }));
    }

    #[test]
    fn pole_family_vanishes_at_origin() {
        let f = make_funnel(FunnelParams::rational_pole(2.0, 0.5), 3).unwrap();
        assert_eq!(f.value(0.0), 0.0);
        assert!(f.boundary(0.0).is_infinite());
        assert!((f.value(1e9) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn scaled_funnel_ratio_is_exact() {
        let f = example1();
        let f1 = f.scaled(1.0 / 1.5);
        for k in 0..20 {
            let t = 0.37 * k as f64;
            let d = f.derivs(t, 3).unwrap();
            let d1 = f1.derivs(t, 3).unwrap();
            assert!((d[0] / d1[0] - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn controller_funnel_growth_constant() {
        // φ = 1/(2e^{−t} + 0.05): |φ̇|/(1+φ) ≤ 1
        let fc = ControllerFunnelSpec::new(FunnelParams::exp_boundary(2.0, 1.0, 0.05), 10.0).unwrap();
        assert!(fc.growth_constant() > 0.0 && fc.growth_constant() < 1.0);
    }
}
