//! Exact time derivatives of the cascade output `z = z[r−1][1]`.
//!
//! Differentiating the first chain row of the last compensator brings in
//! derivatives of its error and gain, which in turn need derivatives of the
//! previous compensator's output, and so on down the cascade. Every level
//! adds one order, so with `q` known derivatives of `y` level `i` can be
//! differentiated `min(r − 1, q + i)` times. The controller knows none
//! (`q = 0`), which is exactly enough for `z, ż, …, z^{(r−1)}`.
//!
//! All products are expanded with the Leibniz rule over tables built
//! bottom-up, so each entry is evaluated once per call.

use crate::error::{Error, Result};
use crate::matrixlab::dot;
use crate::paramdesign::DesignParams;
use crate::precomp::{fp_gain_at, CascadeLayout};

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for k in 1..n {
        row[k] = row[k - 1] * (n + 1 - k) as f64 / k as f64;
    }
    row
}

/// Leibniz product `D^k(f·g)` from derivative lists of two scalars.
fn leibniz(f: &[f64], g: &[f64], k: usize) -> f64 {
    let c = binomial_row(k);
    (0..=k).map(|l| c[l] * f[l] * g[k - l]).sum()
}

/// Per-level differentiation budgets for `jmax` output derivatives when `q`
/// derivatives of `y` are known.
pub fn level_budgets(r: usize, q: usize, jmax: usize) -> Vec<usize> {
    let mut reachable = q;
    (1..r)
        .map(|i| {
            reachable = (reachable + 1).min(r - 1);
            reachable.min(jmax.saturating_sub(r - 1 - i))
        })
        .collect()
}

/// Memoized derivatives of every cascade quantity at one time instant.
#[derive(Debug, Clone)]
pub struct DerivTable {
    r: usize,
    m: usize,
    budgets: Vec<usize>,
    input_order: usize,
    /// `z[i][j][k]`: `D^k z[i][j]`, present for `j + 1 + k ≤ r`, `k ≤ budget(i)`.
    z: Vec<Vec<Vec<Vec<f64>>>>,
    e: Vec<Vec<Vec<f64>>>,
    h: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
}

impl DerivTable {
    /// Builds the table. `y_derivs` holds `y, ẏ, …, y^{(q)}`; `budgets` is
    /// the requested order of `D^k z[i][1]` per level.
    pub fn build(
        state: &[f64],
        y_derivs: &[Vec<f64>],
        params: &DesignParams,
        t: f64,
        budgets: Vec<usize>,
    ) -> Result<Self> {
        let layout = CascadeLayout::of(params);
        let (r, m) = (layout.r, layout.m);
        if state.len() != layout.len() || y_derivs.is_empty() || y_derivs.iter().any(|d| d.len() != m) {
            return Err(Error::dim("cascade state or output derivatives"));
        }
        if budgets.len() != layout.levels() {
            return Err(Error::dim("one budget per cascade level"));
        }
        let input_order = y_derivs.len() - 1;
        let mut table = DerivTable {
            r,
            m,
            budgets,
            input_order,
            z: Vec::with_capacity(r - 1),
            e: Vec::with_capacity(r - 1),
            h: Vec::with_capacity(r - 1),
            g: Vec::with_capacity(r - 1),
        };
        for i in 0..layout.levels() {
            table.fill_level(i, state, y_derivs, params, t, layout)?;
        }
        Ok(table)
    }

    fn input_deriv<'a>(&'a self, i: usize, k: usize, y_derivs: &'a [Vec<f64>]) -> Result<&'a [f64]> {
        if i == 0 {
            y_derivs
                .get(k)
                .map(Vec::as_slice)
                .ok_or(Error::UnavailableDerivative { order: k })
        } else {
            self.z[i - 1][0]
                .get(k)
                .map(Vec::as_slice)
                .ok_or(Error::UnavailableDerivative { order: k })
        }
    }

    fn fill_level(
        &mut self,
        i: usize,
        state: &[f64],
        y_derivs: &[Vec<f64>],
        params: &DesignParams,
        t: f64,
        layout: CascadeLayout,
    ) -> Result<()> {
        let (r, m) = (self.r, self.m);
        let budget = self.budgets[i];
        if budget > r - 1 {
            return Err(Error::UnavailableDerivative { order: budget });
        }
        let funnel = params.level_funnel(i);
        let phi = funnel.derivs(t, budget.saturating_sub(1))?;
        let phi_sq: Vec<f64> = (0..phi.len()).map(|k| leibniz(&phi, &phi, k)).collect();

        let mut z: Vec<Vec<Vec<f64>>> = (0..r)
            .map(|j| vec![state[layout.block(i, j)].to_vec()])
            .collect();
        let mut e: Vec<Vec<f64>> = Vec::with_capacity(budget);
        let mut nrm: Vec<f64> = Vec::with_capacity(budget);
        let mut g: Vec<f64> = Vec::with_capacity(budget);
        let mut h: Vec<f64> = Vec::with_capacity(budget);

        for k in 1..=budget {
            // Order k − 1 of error, squared norm, g and h.
            let kk = k - 1;
            let v = self.input_deriv(i, kk, y_derivs)?;
            let ek: Vec<f64> = v.iter().zip(&z[0][kk]).map(|(a, b)| a - b).collect();
            e.push(ek);
            let c = binomial_row(kk);
            nrm.push((0..=kk).map(|l| c[l] * dot(&e[l], &e[kk - l])).sum());
            let gk = if kk == 0 {
                1.0 - phi_sq[0] * nrm[0]
            } else {
                -leibniz(&phi_sq, &nrm, kk)
            };
            g.push(gk);
            let hk = if kk == 0 {
                fp_gain_at(i + 1, phi[0], &e[0])?
            } else {
                -h[0] * (0..kk).map(|l| c[l] * h[l] * g[kk - l]).sum::<f64>()
            };
            h.push(hk);

            // D^k z[i][j] for every chain position that admits it.
            let weighted: Vec<f64> = {
                let mut acc = vec![0.0; m];
                for l in 0..=kk {
                    for (a, x) in acc.iter_mut().zip(&e[kk - l]) {
                        *a += c[l] * h[l] * x;
                    }
                }
                acc
            };
            for j in 0..r - k {
                let (aj, pj) = (params.a[j], params.p[j]);
                let next = &z[j + 1][kk];
                let val: Vec<f64> = (0..m)
                    .map(|cc| aj * e[kk][cc] + pj * weighted[cc] + next[cc])
                    .collect();
                z[j].push(val);
            }
        }
        if budget == 0 {
            // Gain still guarded even when no derivative is requested.
            let v = self.input_deriv(i, 0, y_derivs)?;
            let e0: Vec<f64> = v.iter().zip(&z[0][0]).map(|(a, b)| a - b).collect();
            fp_gain_at(i + 1, phi[0], &e0)?;
        }
        self.z.push(z);
        self.e.push(e);
        self.h.push(h);
        self.g.push(g);
        Ok(())
    }

    pub fn budget(&self, level: usize) -> usize {
        self.budgets[level]
    }

    pub fn input_order(&self) -> usize {
        self.input_order
    }

    /// `D^k z[i][j]` (0-based `i`, `j`).
    pub fn z(&self, i: usize, j: usize, k: usize) -> Option<&[f64]> {
        self.z.get(i)?.get(j)?.get(k).map(Vec::as_slice)
    }

    /// `D^k e_i`, available for `k < budget(i)`.
    pub fn e(&self, i: usize, k: usize) -> Option<&[f64]> {
        self.e.get(i)?.get(k).map(Vec::as_slice)
    }

    pub fn h(&self, i: usize, k: usize) -> Option<f64> {
        self.h.get(i)?.get(k).copied()
    }

    pub fn g(&self, i: usize, k: usize) -> Option<f64> {
        self.g.get(i)?.get(k).copied()
    }

    /// `D^k[(a + p·h_i)e_i]`.
    pub fn weighted_error(&self, i: usize, a: f64, p: f64, k: usize) -> Option<Vec<f64>> {
        let (e, h) = (self.e.get(i)?, self.h.get(i)?);
        if k >= e.len() {
            return None;
        }
        let c = binomial_row(k);
        let mut out: Vec<f64> = e[k].iter().map(|x| a * x).collect();
        for l in 0..=k {
            for (o, x) in out.iter_mut().zip(&e[k - l]) {
                *o += p * c[l] * h[l] * x;
            }
        }
        Some(out)
    }

    /// Largest relative residual of `D^k(h·g) = 0`, `k ≥ 1`, over all levels.
    pub fn reciprocal_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (h, g) in self.h.iter().zip(&self.g) {
            for k in 1..h.len() {
                let c = binomial_row(k);
                let terms = (0..=k).map(|l| c[l] * h[l] * g[k - l]);
                let (sum, mag) = terms.fold((0.0, 0.0), |(s, a), x: f64| (s + x, a + x.abs()));
                if mag > 0.0 {
                    worst = worst.max(sum.abs() / mag);
                }
            }
        }
        worst
    }

    /// `(z, ż, …)` of the last level, up to its budget.
    pub fn output(&self) -> Vec<Vec<f64>> {
        self.z[self.r - 2][0].clone()
    }
}

/// `(z, ż, …, z^{(jmax)})` from the cascade state and `y` alone.
pub fn output_derivatives(
    state: &[f64],
    y: &[f64],
    params: &DesignParams,
    t: f64,
    jmax: usize,
) -> Result<Vec<Vec<f64>>> {
    output_derivatives_with_input(state, &[y.to_vec()], params, t, jmax)
}

/// Same as [`output_derivatives`] when `y_derivs = (y, ẏ, …)` carries extra
/// known derivatives of the input; used for white-box diagnostics.
pub fn output_derivatives_with_input(
    state: &[f64],
    y_derivs: &[Vec<f64>],
    params: &DesignParams,
    t: f64,
    jmax: usize,
) -> Result<Vec<Vec<f64>>> {
    if jmax > params.r - 1 {
        return Err(Error::InvalidParameter(format!(
            "at most r − 1 = {} output derivatives are available",
            params.r - 1
        )));
    }
    let q = y_derivs.len().saturating_sub(1);
    let budgets = level_budgets(params.r, q, jmax);
    let table = DerivTable::build(state, y_derivs, params, t, budgets)?;
    Ok(table.output())
}

/// Index convention for the coefficients of the closed derivative formula
/// `z^{(j)} = z[r−1][j+1] + Σ_{k<j} D^k[(a_• + p_•·h_{r−1})e_{r−1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexConvention {
    /// `a_{j−k}`: what repeated use of the first chain row produces.
    Shifted,
    /// `a_{r−k}`: agrees with the shifted form only at `j = r`.
    Printed,
}

/// Evaluates the closed formula for `z^{(j)}` from a table whose last level
/// has budget at least `j`.
pub fn closed_form_derivative(
    table: &DerivTable,
    params: &DesignParams,
    j: usize,
    convention: IndexConvention,
) -> Option<Vec<f64>> {
    let r = params.r;
    let last = r - 2;
    if j == 0 || j > table.budget(last) {
        return None;
    }
    let mut out = table.z(last, j, 0)?.to_vec();
    for k in 0..j {
        // 1-based coefficient index
        let idx = match convention {
            IndexConvention::Shifted => j - k,
            IndexConvention::Printed => r - k,
        };
        let term = table.weighted_error(last, params.a[idx - 1], params.p[idx - 1], k)?;
        for (o, x) in out.iter_mut().zip(term) {
            *o += x;
        }
    }
    Some(out)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ClosedFormComparison {
    pub order: usize,
    pub shifted_error: f64,
    pub printed_error: f64,
}

impl ClosedFormComparison {
    pub fn matching(&self, tol: f64) -> Vec<IndexConvention> {
        let mut v = Vec::new();
        if self.shifted_error <= tol {
            v.push(IndexConvention::Shifted);
        }
        if self.printed_error <= tol {
            v.push(IndexConvention::Printed);
        }
        v
    }
}

/// Compares both conventions against the recursion for `j = 1 … r−1`;
/// errors are relative to `max(1, ‖z^{(j)}‖∞)`.
pub fn compare_closed_form(
    state: &[f64],
    y: &[f64],
    params: &DesignParams,
    t: f64,
) -> Result<Vec<ClosedFormComparison>> {
    let r = params.r;
    let table = DerivTable::build(state, &[y.to_vec()], params, t, level_budgets(r, 0, r - 1))?;
    let reference = table.output();
    let rel = |a: &[f64], b: &[f64]| {
        let scale = b.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        a.iter().zip(b).fold(0.0f64, |s, (x, y)| s.max((x - y).abs())) / scale
    };
    Ok((1..r)
        .map(|j| {
            let s = closed_form_derivative(&table, params, j, IndexConvention::Shifted).expect("budget");
            let p = closed_form_derivative(&table, params, j, IndexConvention::Printed).expect("budget");
            ClosedFormComparison {
                order: j,
                shifted_error: rel(&s, &reference[j]),
                printed_error: rel(&p, &reference[j]),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funnels::FunnelParams;
    use crate::matrixlab::Mat;
    use crate::paramdesign::{design, DesignRequest};
    use crate::precomp::cascade_rhs;

    fn params(r: usize, m: usize) -> DesignParams {
        let req = DesignRequest::new(
            r,
            m,
            2.0,
            1.5,
            Mat::identity(m),
            FunnelParams::exp_boundary(1.0, 2.0, 0.05),
        );
        design(&req).unwrap().0
    }

    fn sample_state(p: &DesignParams, scale: f64) -> Vec<f64> {
        let n = CascadeLayout::of(p).len();
        (0..n).map(|k| scale * ((k as f64 * 1.7).sin())).collect()
    }

    #[test]
    fn budgets_follow_depth() {
        assert_eq!(level_budgets(4, 0, 3), vec![1, 2, 3]);
        assert_eq!(level_budgets(4, 0, 1), vec![0, 0, 1]);
        assert_eq!(level_budgets(4, 3, 3), vec![1, 2, 3]);
        assert_eq!(level_budgets(4, 3, 99), vec![3, 3, 3]);
        assert_eq!(level_budgets(2, 0, 1), vec![1]);
    }

    #[test]
    fn zeroth_order_is_state() {
        let p = params(3, 2);
        let s = sample_state(&p, 0.01);
        let d = output_derivatives(&s, &[0.0, 0.01], &p, 0.5, 0).unwrap();
        let l = CascadeLayout::of(&p);
        assert_eq!(d, vec![s[l.block(1, 0)].to_vec()]);
    }

    #[test]
    fn first_order_matches_rhs_exactly() {
        for r in 2..=5 {
            let p = params(r, 2);
            let s = sample_state(&p, 0.02);
            let y = [0.03, -0.01];
            let mut ds = vec![0.0; s.len()];
            cascade_rhs(&s, &y, &[0.4, 0.2], &p, 0.3, &mut ds).unwrap();
            let d = output_derivatives(&s, &y, &p, 0.3, 1).unwrap();
            let l = CascadeLayout::of(&p);
            assert_eq!(d[1], ds[l.block(r - 2, 0)].to_vec(), "r = {r}");
        }
    }

    #[test]
    fn incremental_orders_are_bitwise_identical() {
        let p = params(5, 1);
        let s = sample_state(&p, 0.01);
        let full = output_derivatives(&s, &[0.005], &p, 0.7, 4).unwrap();
        for jmax in 0..4 {
            let part = output_derivatives(&s, &[0.005], &p, 0.7, jmax).unwrap();
            assert_eq!(part[..], full[..=jmax]);
        }
    }

    #[test]
    fn reciprocal_identity_holds() {
        let p = params(5, 3);
        let s = sample_state(&p, 0.01);
        let table = DerivTable::build(&s, &[vec![0.0, 0.01, -0.02]], &p, 1.2, level_budgets(5, 0, 4)).unwrap();
        assert!(table.reciprocal_residual() < 1e-9);
    }

    #[test]
    fn unavailable_input_derivative_is_reported() {
        let p = params(3, 1);
        let s = sample_state(&p, 0.01);
        let err = DerivTable::build(&s, &[vec![0.0]], &p, 0.0, vec![2, 2]).unwrap_err();
        assert!(matches!(err, Error::UnavailableDerivative { order: 1 }));
        assert!(err.to_string().contains("unavailable y derivative"));
    }

    #[test]
    fn too_many_derivatives_rejected() {
        let p = params(3, 1);
        let s = sample_state(&p, 0.01);
        assert!(output_derivatives(&s, &[0.0], &p, 0.0, 3).is_err());
    }

    #[test]
    fn shifted_closed_form_matches() {
        let p = params(4, 2);
        let s = sample_state(&p, 0.01);
        let cmp = compare_closed_form(&s, &[0.01, 0.0], &p, 0.4).unwrap();
        for c in &cmp {
            assert!(c.shifted_error < 1e-12, "{c:?}");
            assert!(c.printed_error > 1e-6, "{c:?}");
        }
    }

    #[test]
    fn extra_input_derivatives_extend_lower_levels() {
        let p = params(3, 1);
        let s = sample_state(&p, 0.01);
        let ys = vec![vec![0.01], vec![0.2], vec![-0.1]];
        let table = DerivTable::build(&s, &ys, &p, 0.4, level_budgets(3, 2, 99)).unwrap();
        assert_eq!(table.budget(0), 2);
        assert!(table.z(0, 0, 2).is_some());
        assert!(table.z(0, 1, 2).is_none());
        // the controller path cannot see ẏ
        let plain = output_derivatives(&s, &ys[0], &p, 0.4, 2).unwrap();
        let rich = output_derivatives_with_input(&s, &ys, &p, 0.4, 2).unwrap();
        assert_eq!(plain, rich);
    }
}
