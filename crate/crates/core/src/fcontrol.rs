//! Funnel controller for relative degree `r`.
//!
//! With `γ(v) = v/(1 − ‖v‖²)` the maps `ρ₁(η₁) = η₁` and
//! `ρ_k(η₁, …, η_k) = η_k + γ(ρ_{k−1}(η₁, …, η_{k−1}))` are composed on the
//! scaled error vector `φ(t)·(e, ė, …, e^{(r−1)})`, and the control is
//! `u = N(α(‖w‖²))·w` with `w = ρ_r(·)`. The default choice
//! `N(s) = −s`, `α(s) = 1/(1 − s)` gives `u = −w/(1 − ‖w‖²)`.

use crate::error::{Error, Result};
use crate::funnels::ControllerFunnelSpec;
use crate::matrixlab::norm;
use crate::precomp::GUARD_THRESHOLD;

/// Outer nonlinearity pair `(N, α)`.
#[derive(Debug, Clone, Copy)]
pub struct ControlLaw {
    pub surjection: fn(f64) -> f64,
    pub bijection: fn(f64) -> f64,
}

fn neg_identity(s: f64) -> f64 {
    -s
}

fn pole_at_one(s: f64) -> f64 {
    1.0 / (1.0 - s)
}

impl Default for ControlLaw {
    fn default() -> Self {
        ControlLaw {
            surjection: neg_identity,
            bijection: pole_at_one,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub r: usize,
    pub m: usize,
    pub phi_fc: ControllerFunnelSpec,
    pub law: ControlLaw,
}

impl ControllerConfig {
    pub fn new(r: usize, m: usize, phi_fc: ControllerFunnelSpec) -> Self {
        ControllerConfig {
            r,
            m,
            phi_fc,
            law: ControlLaw::default(),
        }
    }

    pub fn with_law(mut self, law: ControlLaw) -> Self {
        self.law = law;
        self
    }
}

fn gamma_map(v: &[f64]) -> Vec<f64> {
    let s = 1.0 - v.iter().map(|x| x * x).sum::<f64>();
    v.iter().map(|x| x / s).collect()
}

fn guard(level: usize, v: &[f64]) -> Result<()> {
    let n = norm(v);
    if n < GUARD_THRESHOLD {
        Ok(())
    } else {
        Err(Error::ControllerDomain { level, norm: n })
    }
}

/// `w = ρ_r(η)` for `η = (η₁, …, η_r)` stacked in blocks of `m`.
pub fn rho_chain(eta: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 || eta.is_empty() || eta.len() % m != 0 {
        return Err(Error::dim("stacked vector length must be a positive multiple of m"));
    }
    let mut blocks = eta.chunks(m);
    let mut w = blocks.next().expect("non-empty").to_vec();
    guard(1, &w)?;
    for (k, block) in blocks.enumerate() {
        let g = gamma_map(&w);
        w = block.iter().zip(g).map(|(a, b)| a + b).collect();
        guard(k + 2, &w)?;
    }
    Ok(w)
}

/// Control value and the intermediate `w`.
pub fn funnel_control_with_w(errvec: &[f64], cfg: &ControllerConfig, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if errvec.len() != cfg.r * cfg.m {
        return Err(Error::dim(format!("error vector must have length {}", cfg.r * cfg.m)));
    }
    let phi = cfg.phi_fc.value(t);
    let scaled: Vec<f64> = errvec.iter().map(|e| phi * e).collect();
    let w = rho_chain(&scaled, cfg.m)?;
    let w_sq = w.iter().map(|x| x * x).sum::<f64>();
    let gain = (cfg.law.surjection)((cfg.law.bijection)(w_sq));
    Ok((w.iter().map(|x| gain * x).collect(), w))
}

/// `u = N(α(‖w‖²))·w` with `w = ρ_r(φ_fc(t)·𝐞)`.
pub fn funnel_control(errvec: &[f64], cfg: &ControllerConfig, t: f64) -> Result<Vec<f64>> {
    funnel_control_with_w(errvec, cfg, t).map(|(u, _)| u)
}

/// Whether `φ_fc(t)·𝐞` lies in the controller domain.
pub fn in_domain(errvec: &[f64], cfg: &ControllerConfig, t: f64) -> bool {
    funnel_control_with_w(errvec, cfg, t).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funnels::FunnelParams;

    fn cfg(r: usize, m: usize) -> ControllerConfig {
        // constant φ = 1 over the whole horizon
        let f = ControllerFunnelSpec::new(FunnelParams::exp_boundary(0.0, 1.0, 1.0), 10.0).unwrap();
        ControllerConfig::new(r, m, f)
    }

    #[test]
    fn zero_maps_to_zero() {
        assert_eq!(rho_chain(&[0.0; 6], 2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(funnel_control(&[0.0; 6], &cfg(3, 2), 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn relative_degree_one_is_identity() {
        assert_eq!(rho_chain(&[0.3, -0.2], 2).unwrap(), vec![0.3, -0.2]);
        let u = funnel_control(&[0.5], &cfg(1, 1), 0.0).unwrap();
        assert!((u[0] + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_recursion_r2() {
        let w = rho_chain(&[0.5, 0.1], 1).unwrap();
        assert!((w[0] - 23.0 / 30.0).abs() < 1e-15);
        let u = funnel_control(&[0.5, 0.1], &cfg(2, 1), 0.0).unwrap();
        let want = -(23.0 / 30.0) / (1.0 - (23.0f64 / 30.0).powi(2));
        assert!((u[0] - want).abs() < 1e-13);
        assert!((u[0] + 690.0 / 371.0).abs() < 1e-13);
    }

    #[test]
    fn domain_violations_name_level() {
        match rho_chain(&[1.2, 0.0], 1) {
            Err(Error::ControllerDomain { level: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        // ρ₁ = 0.9 → γ = 0.9/0.19 ≈ 4.7
        let err = rho_chain(&[0.9, 0.0], 1).unwrap_err();
        assert!(matches!(err, Error::ControllerDomain { level: 2, .. }));
        assert!(err.to_string().contains("outside controller domain"));
        assert!(err.is_guard_violation());
    }

    #[test]
    fn blows_up_near_sphere() {
        let u = funnel_control(&[1.0 - 1e-4], &cfg(1, 1), 0.0).unwrap();
        assert!(u[0].abs() > 1e3);
    }

    #[test]
    fn custom_law_hook() {
        fn double_neg(s: f64) -> f64 {
            -2.0 * s
        }
        let c = cfg(1, 1).with_law(ControlLaw {
            surjection: double_neg,
            bijection: pole_at_one,
        });
        let u = funnel_control(&[0.5], &c, 0.0).unwrap();
        assert!((u[0] + 4.0 / 3.0).abs() < 1e-15);
    }
}
