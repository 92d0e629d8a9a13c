//! Funnel pre-compensator dynamics and the cascade of `r − 1` of them.
//!
//! One compensator with input `ξ` and chain `ζ₁, …, ζ_r` evolves as
//!
//! ```text
//! ζ̇_j = (a_j + p_j h)(ξ − ζ₁) + ζ_{j+1}     (j < r)
//! ζ̇_r = (a_r + p_r h)(ξ − ζ₁) + Γ̃u
//! h   = 1 / (1 − φ²‖ξ − ζ₁‖²)
//! ```
//!
//! In the cascade the first compensator is driven by `y` and uses `φ₁`;
//! compensator `i ≥ 2` is driven by the first chain state of compensator
//! `i − 1` and uses `φ`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrixlab::norm;
use crate::paramdesign::DesignParams;

/// Scaled errors at or above this value are treated as having left the funnel.
pub const GUARD_THRESHOLD: f64 = 1.0 - 1e-8;

/// Index map of the flattened cascade state `z[i][j][c]`, all indices
/// 0-based: level `i < r − 1`, chain position `j < r`, component `c < m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CascadeLayout {
    pub r: usize,
    pub m: usize,
}

impl CascadeLayout {
    pub fn new(r: usize, m: usize) -> Self {
        CascadeLayout { r, m }
    }

    pub fn of(params: &DesignParams) -> Self {
        CascadeLayout::new(params.r, params.m)
    }

    pub fn levels(&self) -> usize {
        self.r - 1
    }

    pub fn len(&self) -> usize {
        self.m * self.r * (self.r - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.r + j) * self.m + c
    }

    pub fn block(&self, i: usize, j: usize) -> Range<usize> {
        let start = self.index(i, j, 0);
        start..start + self.m
    }
}

/// Gain `h = 1/(1 − φ²‖e‖²)`; `level` is only used to label the error.
pub fn fp_gain_at(level: usize, phi_t: f64, err: &[f64]) -> Result<f64> {
    let scaled = phi_t * norm(err);
    if !(scaled < GUARD_THRESHOLD) {
        return Err(Error::GainSingularity {
            level,
            scaled_error: scaled,
        });
    }
    Ok(1.0 / (1.0 - scaled * scaled))
}

pub fn fp_gain(phi_t: f64, err: &[f64]) -> Result<f64> {
    fp_gain_at(1, phi_t, err)
}

/// Errors `e_i = v_i − z[i][1]` of all levels (0-based index, 1-based in messages).
pub fn cascade_errors(state: &[f64], y: &[f64], layout: CascadeLayout) -> Vec<Vec<f64>> {
    (0..layout.levels())
        .map(|i| {
            let input = if i == 0 { y } else { &state[layout.block(i - 1, 0)] };
            input
                .iter()
                .zip(&state[layout.block(i, 0)])
                .map(|(v, z)| v - z)
                .collect()
        })
        .collect()
}

/// Gains `h₁, …, h_{r−1}` at `(t, state)`.
pub fn cascade_gains(state: &[f64], y: &[f64], params: &DesignParams, t: f64) -> Result<Vec<f64>> {
    let layout = CascadeLayout::of(params);
    cascade_errors(state, y, layout)
        .iter()
        .enumerate()
        .map(|(i, e)| fp_gain_at(i + 1, params.level_funnel(i).value(t), e))
        .collect()
}

/// Distances `1/φ_i(t) − ‖e_i‖` to each funnel boundary.
pub fn cascade_margins(state: &[f64], y: &[f64], params: &DesignParams, t: f64) -> Vec<f64> {
    let layout = CascadeLayout::of(params);
    cascade_errors(state, y, layout)
        .iter()
        .enumerate()
        .map(|(i, e)| params.level_funnel(i).boundary(t) - norm(e))
        .collect()
}

/// Writes the cascade derivative into `dstate` and returns the gains.
pub fn cascade_rhs(
    state: &[f64],
    y: &[f64],
    u: &[f64],
    params: &DesignParams,
    t: f64,
    dstate: &mut [f64],
) -> Result<Vec<f64>> {
    let layout = CascadeLayout::of(params);
    let (r, m) = (layout.r, layout.m);
    if state.len() != layout.len() || dstate.len() != layout.len() || y.len() != m || u.len() != m {
        return Err(Error::dim("cascade state, input or output length"));
    }
    let gtu = params.gamma_tilde.matvec(u);
    let errors = cascade_errors(state, y, layout);
    let mut gains = Vec::with_capacity(layout.levels());
    for (i, e) in errors.iter().enumerate() {
        let h = fp_gain_at(i + 1, params.level_funnel(i).value(t), e)?;
        gains.push(h);
        for j in 0..r {
            let coeff = params.a[j] + params.p[j] * h;
            let out = &mut dstate[layout.block(i, j)];
            let tail: &[f64] = if j + 1 < r { &state[layout.block(i, j + 1)] } else { &gtu };
            for c in 0..m {
                out[c] = coeff * e[c] + tail[c];
            }
        }
    }
    Ok(gains)
}

/// Conditions on the initial values: every level strictly inside its funnel.
pub fn check_initial(state: &[f64], y: &[f64], params: &DesignParams, t0: f64) -> Result<()> {
    cascade_gains(state, y, params, t0).map(|_| ())
}
