//! Smooth scalar time signals with analytic derivatives of every order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarSignal {
    Constant {
        value: f64,
    },
    /// `amp·sin(omega·t + phase)`
    Sine {
        #[serde(default = "one")]
        amp: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amp·cos(omega·t)`
    Cosine {
        #[serde(default = "one")]
        amp: f64,
        omega: f64,
    },
    /// `amp·e^{−(t−center)²}`
    GaussianBump {
        center: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    Sum {
        terms: Vec<ScalarSignal>,
    },
}

fn one() -> f64 {
    1.0
}

impl ScalarSignal {
    pub fn zero() -> Self {
        ScalarSignal::Constant { value: 0.0 }
    }

    pub fn sine(omega: f64) -> Self {
        ScalarSignal::Sine {
            amp: 1.0,
            omega,
            phase: 0.0,
        }
    }

    pub fn gaussian(center: f64) -> Self {
        ScalarSignal::GaussianBump { center, amp: 1.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivs(t, 0)[0]
    }

    /// `(s(t), ṡ(t), …, s^{(order)}(t))`.
    pub fn derivs(&self, t: f64, order: usize) -> Vec<f64> {
        let mut out = vec![0.0; order + 1];
        self.accumulate(t, &mut out);
        out
    }

    fn accumulate(&self, t: f64, out: &mut [f64]) {
        match self {
            ScalarSignal::Constant { value } => out[0] += value,
            ScalarSignal::Sine { amp, omega, phase } => {
                let (s, c) = (omega * t + phase).sin_cos();
                harmonic(*amp, *omega, s, c, out);
            }
            ScalarSignal::Cosine { amp, omega } => {
                let (s, c) = (omega * t).sin_cos();
                // cos x = sin(x + π/2)
                harmonic(*amp, *omega, c, -s, out);
            }
            ScalarSignal::GaussianBump { center, amp } => {
                // d^k/dx^k e^{−x²} = (−1)^k H_k(x) e^{−x²}
                let x = t - center;
                let g = amp * (-x * x).exp();
                let (mut h_prev, mut h) = (0.0, 1.0);
                for (k, o) in out.iter_mut().enumerate() {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    *o += sign * h * g;
                    let next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
                    h_prev = h;
                    h = next;
                }
            }
            ScalarSignal::Sum { terms } => {
                for term in terms {
                    term.accumulate(t, out);
                }
            }
        }
    }
}

/// Derivatives of `amp·sin(θ)` with `θ̇ = omega`, given `sin θ` and `cos θ`.
fn harmonic(amp: f64, omega: f64, s: f64, c: f64, out: &mut [f64]) {
    let mut scale = amp;
    for (k, o) in out.iter_mut().enumerate() {
        *o += scale
            * match k % 4 {
                0 => s,
                1 => c,
                2 => -s,
                _ => -c,
            };
        scale *= omega;
    }
}

/// Vector-valued signal, one scalar signal per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorSignal(pub Vec<ScalarSignal>);

impl VectorSignal {
    pub fn zeros(m: usize) -> Self {
        VectorSignal(vec![ScalarSignal::zero(); m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        self.0.iter().map(|s| s.value(t)).collect()
    }

    pub fn value_into(&self, t: f64, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.0) {
            *o = s.value(t);
        }
    }

    /// `out[k][c]` is the `k`-th derivative of component `c`.
    pub fn derivs(&self, t: f64, order: usize) -> Vec<Vec<f64>> {
        let per_comp: Vec<Vec<f64>> = self.0.iter().map(|s| s.derivs(t, order)).collect();
        (0..=order)
            .map(|k| per_comp.iter().map(|d| d[k]).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_peak() {
        let d = ScalarSignal::gaussian(5.0).derivs(5.0, 2);
        assert_eq!(d[0], 1.0);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], -2.0);
    }

    #[test]
    fn sine_cycle() {
        let t = 0.7;
        let d = ScalarSignal::sine(1.0).derivs(t, 4);
        assert_eq!(d[0], t.sin());
        assert_eq!(d[1], t.cos());
        assert_eq!(d[2], -t.sin());
        assert_eq!(d[3], -t.cos());
        assert_eq!(d[4], t.sin());
    }

    #[test]
    fn cosine_derivative() {
        let d = ScalarSignal::Cosine { amp: 0.2, omega: 7.0 }.derivs(0.3, 1);
        assert!((d[0] - 0.2 * (2.1f64).cos()).abs() < 1e-15);
        assert!((d[1] + 1.4 * (2.1f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let s: ScalarSignal = serde_json::from_str(r#"{"kind":"gaussian-bump","center":5}"#).unwrap();
        assert_eq!(s, ScalarSignal::gaussian(5.0));
        assert!(serde_json::from_str::<ScalarSignal>(r#"{"kind":"sine","omega":1,"bogus":2}"#).is_err());
    }
}
