//! Numerical checks of the quantities used in the stability argument:
//! Kronecker-lifted Lyapunov identities, the error coordinates `v`, `w`
//! built from a stored run, the quadratic form `V = w⊤𝒫w`, and empirical
//! funnel margins.
//!
//! The error coordinates need `y, ẏ, …, y^{(r−1)}`, which the controller
//! never sees; here they are read from the plant's integrator chain (or
//! from the prescribed output signal in open loop) and pushed through the
//! same derivative recursion the controller uses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrixlab::{dot, is_spd, kron, norm, sym_eig, sym_fn, Mat};
use crate::paramdesign::DesignParams;
use crate::simloop::{dist, Drive, Scenario, SimResult};
use crate::zderiv::DerivTable;

/// Kronecker lifts of the design matrices to `m` outputs.
#[derive(Debug, Clone)]
pub struct KroneckerKit {
    pub a_hat: Mat,
    pub p_hat: Mat,
    pub q_hat: Mat,
    /// `p ⊗ I_m`, an `rm × m` matrix.
    pub p_bar: Mat,
    pub p_tilde: f64,
    /// `(ΓΓ̃⁻¹)^{−1/2}`, when `Γ` was supplied.
    pub inv_sqrt: Option<Mat>,
    pub p_hat1: Option<Mat>,
    pub q_hat1: Option<Mat>,
}

impl KroneckerKit {
    pub fn new(params: &DesignParams, gamma: Option<&Mat>) -> Result<Self> {
        let (r, m) = (params.r, params.m);
        let im = Mat::identity(m);
        let a_hat = kron(&params.a_mat, &im);
        let p_hat = kron(&params.p_mat, &im);
        let q_hat = kron(&params.q_mat, &im);
        let p_bar = kron(&Mat::column(&params.p), &im);
        let (mut inv_sqrt, mut p_hat1, mut q_hat1) = (None, None, None);
        if let Some(g) = gamma {
            let ratio = g * &params.gamma_tilde.inverse()?;
            if !(ratio.is_symmetric(1e-12) && is_spd(&ratio.symmetrize())) {
                return Err(Error::InvalidParameter(
                    "ΓΓ̃⁻¹ must be symmetric positive definite to scale the first block".into(),
                ));
            }
            let s = sym_fn(&ratio.symmetrize(), |l| 1.0 / l.sqrt())?;
            let lift = kron(&Mat::identity(r), &s);
            p_hat1 = Some(&(&lift * &p_hat) * &lift);
            q_hat1 = Some(&(&lift * &q_hat) * &lift);
            inv_sqrt = Some(s);
        }
        Ok(KroneckerKit {
            a_hat,
            p_hat,
            q_hat,
            p_bar,
            p_tilde: params.p_tilde,
            inv_sqrt,
            p_hat1,
            q_hat1,
        })
    }

    /// `𝒫 = blockdiag(P̂₁, P̂, …, P̂)` with `r − 1` blocks; `P̂₁` falls back
    /// to `P̂` without `Γ`.
    pub fn block_form(&self, levels: usize) -> Vec<&Mat> {
        let first = self.p_hat1.as_ref().unwrap_or(&self.p_hat);
        std::iter::once(first)
            .chain(std::iter::repeat_n(&self.p_hat, levels.saturating_sub(1)))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KronReport {
    /// `‖Â⊤P̂ + P̂Â + Q̂‖_F`
    pub lyapunov_residual: f64,
    /// `‖P̂P̄ − (p̃I_m, 0, …, 0)⊤‖_F`
    pub structure_residual: f64,
    /// `‖Â⊤P̂₁ + P̂₁Â + Q̂₁‖_F`
    pub scaled_lyapunov_residual: Option<f64>,
    pub q_hat1_min_eigenvalue: Option<f64>,
    pub q_hat1_spd: Option<bool>,
}

impl KronReport {
    pub fn within(&self, tol: f64) -> bool {
        self.lyapunov_residual <= tol
            && self.structure_residual <= tol
            && self.scaled_lyapunov_residual.is_none_or(|r| r <= tol)
            && self.q_hat1_spd != Some(false)
    }
}

fn lyap_residual(a: &Mat, p: &Mat, q: &Mat) -> f64 {
    (&(&(&a.transpose() * p) + &(p * a)) + q).frobenius_norm()
}

/// Builds the kit and measures its identities.
pub fn kron_identities(params: &DesignParams, gamma: Option<&Mat>) -> Result<(KroneckerKit, KronReport)> {
    let kit = KroneckerKit::new(params, gamma)?;
    let m = params.m;
    let mut target = Mat::zeros(params.r * m, m);
    target.set_block(0, 0, &Mat::scalar(m, params.p_tilde));
    let structure = (&(&kit.p_hat * &kit.p_bar) - &target).frobenius_norm();
    let (mut scaled, mut min_eig, mut spd) = (None, None, None);
    if let (Some(p1), Some(q1)) = (&kit.p_hat1, &kit.q_hat1) {
        scaled = Some(lyap_residual(&kit.a_hat, p1, q1));
        let eig = sym_eig(&q1.symmetrize())?;
        let lo = eig.values[0];
        min_eig = Some(lo);
        spd = Some(lo > 0.0);
    }
    let report = KronReport {
        lyapunov_residual: lyap_residual(&kit.a_hat, &kit.p_hat, &kit.q_hat),
        structure_residual: structure,
        scaled_lyapunov_residual: scaled,
        q_hat1_min_eigenvalue: min_eig,
        q_hat1_spd: spd,
    };
    Ok((kit, report))
}

/// White-box plant data used by the coordinate change.
#[derive(Debug, Clone)]
pub struct PlantInternals {
    pub gamma: Mat,
    /// `R₁, …, R_r`; zero blocks in open loop.
    pub r_blocks: Vec<Mat>,
}

impl PlantInternals {
    pub fn from_scenario(sc: &Scenario) -> Result<Self> {
        let (r, m) = (sc.params.r, sc.params.m);
        match &sc.drive {
            Drive::Signals { .. } => Ok(PlantInternals {
                gamma: sc.params.gamma_tilde.clone(),
                r_blocks: vec![Mat::zeros(m, m); r],
            }),
            Drive::Plant { plant, .. } => Ok(PlantInternals {
                gamma: plant.high_gain().clone(),
                r_blocks: plant.chain_matrices().ok_or(Error::MissingInternals)?.to_vec(),
            }),
        }
    }
}

/// Error coordinates along a run; indices are `[sample][level][chain][component]`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorCoordinates {
    pub t: Vec<f64>,
    pub e1: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<Vec<Vec<f64>>>>,
    pub v_tilde: Vec<Vec<f64>>,
    pub w: Vec<Vec<Vec<Vec<f64>>>>,
    pub w_bar: Vec<Vec<f64>>,
    /// `x₁ = w̄`, `x_i = w_{i,1}`.
    pub x: Vec<Vec<Vec<f64>>>,
    pub lyap: Vec<f64>,
    /// `λ_min(𝒫)·‖w‖²`, the lower side of the quadratic-form sandwich.
    pub lyap_lower: Vec<f64>,
    pub lyap_upper: Vec<f64>,
    /// Funnel radii `1/φ₁`, `1/φ` per sample and level.
    pub radius: Vec<Vec<f64>>,
    pub gains: Vec<Vec<f64>>,
    pub residuals: IdentityResiduals,
}

/// Largest violation over the run of identities that hold by construction.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IdentityResiduals {
    /// `y − ṽ = z`
    pub output_split: f64,
    /// `w̄ = e_{1,1}`
    pub w_bar: f64,
    /// `y = z + w_{1,1} + ΓΓ̃⁻¹w̃`
    pub output_recovery: f64,
    /// `z_{1,r} = z_{1,1}^{(r−1)} − Σ_k D^k[(a_{r−k−1} + p_{r−k−1}h₁)v_{1,1}]`
    pub top_state: f64,
}

fn axpy(acc: &mut [f64], s: f64, x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += s * b;
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Applies the coordinate change to every stored sample.
pub fn error_coordinates(sim: &SimResult, internals: &PlantInternals, params: &DesignParams) -> Result<ErrorCoordinates> {
    let (r, m) = (params.r, params.m);
    if sim.r != r || sim.m != m {
        return Err(Error::dim("run and design disagree on (r, m)"));
    }
    if internals.r_blocks.len() != r || internals.gamma.rows() != m {
        return Err(Error::dim("plant internals do not match (r, m)"));
    }
    let levels = r - 1;
    let ratio = &internals.gamma * &params.gamma_tilde.inverse()?;
    let g_mat = &Mat::identity(m) - &ratio;
    let (kit, _) = kron_identities(params, Some(&internals.gamma)).or_else(|_| kron_identities(params, None))?;
    let blocks = kit.block_form(levels);
    let eig_lo = blocks
        .iter()
        .map(|b| sym_eig(&b.symmetrize()).map(|e| e.values[0]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let eig_hi = blocks
        .iter()
        .map(|b| sym_eig(&b.symmetrize()).map(|e| *e.values.last().unwrap()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);

    let n = sim.len();
    let mut out = ErrorCoordinates {
        t: Vec::with_capacity(n),
        e1: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        v_tilde: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        w_bar: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        lyap: Vec::with_capacity(n),
        lyap_lower: Vec::with_capacity(n),
        lyap_upper: Vec::with_capacity(n),
        radius: Vec::with_capacity(n),
        gains: Vec::with_capacity(n),
        residuals: IdentityResiduals::default(),
    };
    // y up to order r − 2 reaches D^{r−1} on every level.
    let budgets = vec![r - 1; levels];

    for s in 0..n {
        let t = sim.t[s];
        let yd = sim.y_derivs[s].as_ref().ok_or(Error::MissingInternals)?;
        if yd.len() < r {
            return Err(Error::MissingInternals);
        }
        let table = DerivTable::build(&sim.cascade[s], &yd[..r - 1], params, t, budgets.clone())?;
        let zs = |i: usize, j: usize| table.z(i, j, 0).expect("state entry");
        let zd = |i: usize, k: usize| table.z(i, 0, k).expect("within budget");

        // e_{1,j}
        let mut e1: Vec<Vec<f64>> = (0..r - 1).map(|j| sub(&yd[j], zs(0, j))).collect();
        e1.push(sub(&yd[r - 1], &ratio.matvec(zs(0, r - 1))));

        // ṽ^{(l)} = y^{(l)} − z^{(l)}
        let vt_d: Vec<Vec<f64>> = (0..r - 1).map(|l| sub(&yd[l], zd(levels - 1, l))).collect();

        // v_{i,j}
        let mut v: Vec<Vec<Vec<f64>>> = Vec::with_capacity(levels);
        let mut v1 = Vec::with_capacity(r);
        for j in 1..=r {
            let mut val = e1[j - 1].clone();
            for k in 1..j {
                let rb = &internals.r_blocks[r - j + k];
                let corr = rb.matvec(&vt_d[k - 1]);
                axpy(&mut val, -1.0, &corr);
            }
            v1.push(val);
        }
        v.push(v1);
        for i in 1..levels {
            v.push((0..r).map(|j| sub(zs(i - 1, j), zs(i, j))).collect());
        }
        let mut v_tilde = vec![0.0; m];
        for vi in &v {
            axpy(&mut v_tilde, 1.0, &vi[0]);
        }

        // w_{i,j}
        let mut w = v.clone();
        for j in 1..r {
            // w_{1,r−j}
            let mut corr = vec![0.0; m];
            let order = r - 1 - j;
            for k in 1..levels {
                let dv = sub(zd(k - 1, order), zd(k, order));
                axpy(&mut corr, 1.0, &dv);
            }
            for k in j..=r.saturating_sub(2) {
                let idx = r - k - 1;
                let term = table
                    .weighted_error(0, params.a[idx - 1], params.p[idx - 1], k - j)
                    .ok_or(Error::UnavailableDerivative { order: k - j })?;
                axpy(&mut corr, -1.0, &term);
            }
            axpy(&mut w[0][r - j - 1], 1.0, &g_mat.matvec(&corr));
        }
        let mut w_tilde = vec![0.0; m];
        for wi in &w[1..] {
            axpy(&mut w_tilde, 1.0, &wi[0]);
        }
        let w_bar = sub(&w[0][0], &g_mat.matvec(&w_tilde));

        // V = w⊤𝒫w with blocks of rm
        let mut lyap = 0.0;
        let mut w_sq = 0.0;
        for (b, wi) in blocks.iter().zip(&w) {
            let flat: Vec<f64> = wi.concat();
            lyap += dot(&flat, &b.matvec(&flat));
            w_sq += dot(&flat, &flat);
        }

        // identities
        let z = zd(levels - 1, 0);
        let res = &mut out.residuals;
        res.output_split = res.output_split.max(dist(&sub(&yd[0], &v_tilde), z));
        res.w_bar = res.w_bar.max(dist(&w_bar, &e1[0]));
        let mut recovered = z.to_vec();
        axpy(&mut recovered, 1.0, &w[0][0]);
        axpy(&mut recovered, 1.0, &ratio.matvec(&w_tilde));
        res.output_recovery = res.output_recovery.max(dist(&recovered, &yd[0]));
        let mut top = zd(0, r - 1).to_vec();
        for k in 0..=r - 2 {
            let idx = r - k - 1;
            let term = table
                .weighted_error(0, params.a[idx - 1], params.p[idx - 1], k)
                .ok_or(Error::UnavailableDerivative { order: k })?;
            axpy(&mut top, -1.0, &term);
        }
        let scale = norm(zs(0, r - 1)).max(1.0);
        res.top_state = res.top_state.max(dist(&top, zs(0, r - 1)) / scale);

        let mut x = vec![w_bar.clone()];
        x.extend(w[1..].iter().map(|wi| wi[0].clone()));
        out.radius.push((0..levels).map(|i| params.level_funnel(i).boundary(t)).collect());
        out.gains.push((0..levels).map(|i| table.h(i, 0).expect("gain")).collect());
        out.t.push(t);
        out.e1.push(e1);
        out.v.push(v);
        out.v_tilde.push(v_tilde);
        out.w.push(w);
        out.w_bar.push(w_bar);
        out.x.push(x);
        out.lyap.push(lyap);
        out.lyap_lower.push(eig_lo * w_sq);
        out.lyap_upper.push(eig_hi * w_sq);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    /// `κ̂_i = min_t (radius_i − ‖x_i‖)`
    pub kappa: Vec<f64>,
    pub nonpositive: Vec<usize>,
    /// Whether `κ̂_{r−1} < … < κ̂₁` holds for the empirical margins.
    pub ordered: bool,
    pub sup_gain: Vec<f64>,
    pub sup_w: Vec<f64>,
    pub sup_lyap: f64,
    /// `λ_min‖w‖² ≤ V ≤ λ_max‖w‖²` at every sample (relative slack 1e-9).
    pub sandwich_holds: bool,
    pub residuals: IdentityResiduals,
}

/// Tabulates margins and suprema from the coordinates.
pub fn margin_report(coords: &ErrorCoordinates, params: &DesignParams) -> MarginReport {
    let levels = params.r - 1;
    let kappa: Vec<f64> = (0..levels)
        .map(|i| {
            coords
                .x
                .iter()
                .zip(&coords.radius)
                .map(|(x, rad)| rad[i] - norm(&x[i]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let nonpositive = (0..levels).filter(|&i| !(kappa[i] > 0.0)).map(|i| i + 1).collect();
    let ordered = kappa.windows(2).all(|k| k[1] < k[0]);
    let sup = |f: &dyn Fn(usize) -> Vec<f64>| -> Vec<f64> {
        let mut best = vec![f64::NEG_INFINITY; levels];
        for s in 0..coords.t.len() {
            for (b, v) in best.iter_mut().zip(f(s)) {
                *b = b.max(v);
            }
        }
        best
    };
    let sup_gain = sup(&|s| coords.gains[s].clone());
    let sup_w = sup(&|s| coords.w[s].iter().map(|wi| norm(&wi.concat())).collect());
    let sandwich_holds = coords.lyap.iter().zip(&coords.lyap_lower).zip(&coords.lyap_upper).all(|((v, lo), hi)| {
        let slack = 1e-9 * hi.abs().max(1e-300);
        *v >= lo - slack && *v <= hi + slack
    });
    MarginReport {
        kappa,
        nonpositive,
        ordered,
        sup_gain,
        sup_w,
        sup_lyap: coords.lyap.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sandwich_holds,
        residuals: coords.residuals.clone(),
    }
}

/// Full diagnostics bundle written by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub kronecker: KronReport,
    pub margins: MarginReport,
    pub closed_form: Vec<crate::zderiv::ClosedFormComparison>,
}

/// Kronecker identities, error coordinates and margins for a finished run.
pub fn diagnose(sc: &Scenario, sim: &SimResult) -> Result<(DiagnosticsReport, ErrorCoordinates)> {
    let internals = PlantInternals::from_scenario(sc)?;
    let gamma = matches!(sc.drive, Drive::Plant { .. }).then_some(&internals.gamma);
    let (_, kron_rep) = kron_identities(&sc.params, gamma)?;
    let coords = error_coordinates(sim, &internals, &sc.params)?;
    let margins = margin_report(&coords, &sc.params);
    let mid = sim.len() / 2;
    let closed_form = if sim.is_empty() {
        Vec::new()
    } else {
        crate::zderiv::compare_closed_form(&sim.cascade[mid], &sim.y[mid], &sc.params, sim.t[mid])?
    };
    Ok((
        DiagnosticsReport {
            kronecker: kron_rep,
            margins,
            closed_form,
        },
        coords,
    ))
}

/// CSV of `t, V, V_lower, V_upper, x-norm and margin per level`.
pub fn coordinates_csv(coords: &ErrorCoordinates) -> String {
    use std::fmt::Write as _;
    let levels = coords.radius.first().map_or(0, Vec::len);
    let mut s = String::from("t,V,V_lower,V_upper");
    for i in 1..=levels {
        let _ = write!(s, ",xnorm_{i},margin_{i}");
    }
    s.push('\n');
    for k in 0..coords.t.len() {
        let _ = write!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            coords.t[k], coords.lyap[k], coords.lyap_lower[k], coords.lyap_upper[k]
        );
        for i in 0..levels {
            let xn = norm(&coords.x[k][i]);
            let _ = write!(s, ",{:.16e},{:.16e}", xn, coords.radius[k][i] - xn);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::paramdesign::design;
    use crate::signals::VectorSignal;
    use crate::simloop::{run, Tolerances};

    #[test]
    fn scalar_kit_reduces_to_design_matrices() {
        let (p, _) = design(&builtin::precompensator_request(1.0)).unwrap();
        let (kit, rep) = kron_identities(&p, None).unwrap();
        assert_eq!(kit.a_hat, p.a_mat);
        assert_eq!(kit.p_bar, Mat::column(&p.p));
        assert!(rep.within(1e-10), "{rep:?}");
        assert!(rep.q_hat1_spd.is_none());
    }

    #[test]
    fn tracking_kit_scaled_block_is_spd() {
        let (p, _) = design(&builtin::tracking_request()).unwrap();
        let gamma = Mat::from_rows(&[[2.0, 0.2], [0.2, 2.0]]).unwrap();
        let (kit, rep) = kron_identities(&p, Some(&gamma)).unwrap();
        assert_eq!(rep.q_hat1_spd, Some(true));
        assert!(rep.within(1e-10), "{rep:?}");
        assert!(kit.inv_sqrt.is_some());
    }

    #[test]
    fn asymmetric_gain_ratio_refused() {
        let (p, _) = design(&builtin::tracking_request()).unwrap();
        let gamma = Mat::from_rows(&[[2.0, 0.5], [0.0, 2.0]]).unwrap();
        assert!(kron_identities(&p, Some(&gamma)).is_err());
    }

    #[test]
    fn equilibrium_coordinates_vanish() {
        let mut sc = builtin::precompensator_scenario(3.0).unwrap();
        sc.drive = Drive::Signals {
            u: VectorSignal::zeros(1),
            y: VectorSignal::zeros(1),
        };
        sc.tspan = (0.0, 1.0);
        sc.sample_step = 0.1;
        sc.tol = Tolerances::default();
        let sim = run(&sc).unwrap();
        let (rep, coords) = diagnose(&sc, &sim).unwrap();
        assert!(coords.lyap.iter().all(|&v| v == 0.0));
        assert!(coords.w.iter().flatten().flatten().flatten().all(|&v| v == 0.0));
        // margins equal the smallest funnel radius over the run
        let r1 = (0..=10).map(|k| sc.params.phi1.boundary(0.1 * k as f64)).fold(f64::INFINITY, f64::min);
        assert_eq!(rep.margins.kappa[0], r1);
    }

    #[test]
    fn open_loop_identities() {
        let mut sc = builtin::precompensator_scenario(5.0).unwrap();
        sc.tspan = (0.0, 6.0);
        sc.sample_step = 0.05;
        let sim = run(&sc).unwrap();
        let (rep, _) = diagnose(&sc, &sim).unwrap();
        let res = &rep.margins.residuals;
        assert!(res.output_split < 1e-12, "{res:?}");
        assert!(res.w_bar < 1e-12, "{res:?}");
        assert!(res.output_recovery < 1e-12, "{res:?}");
        assert!(res.top_state < 1e-10, "{res:?}");
        assert!(rep.margins.nonpositive.is_empty());
        assert!(rep.margins.sandwich_holds);
    }
}

#[cfg(test)]
mod closed_loop_tests {
    use super::*;
    use crate::builtin;
    use crate::simloop::run;

    #[test]
    fn tracking_identities_and_margins() {
        let sc = builtin::tracking_scenario().unwrap();
        let sim = run(&sc).unwrap();
        let (rep, _) = diagnose(&sc, &sim).unwrap();
        let res = &rep.margins.residuals;
        assert!(res.output_split < 1e-8, "{res:?}");
        assert!(res.w_bar < 1e-8, "{res:?}");
        assert!(res.output_recovery < 1e-8, "{res:?}");
        assert!(res.top_state < 1e-8, "{res:?}");
        assert!(rep.margins.kappa.iter().all(|&k| k > 0.0));
        assert!(rep.margins.sandwich_holds);
        assert!(rep.kronecker.within(1e-10));
    }
}
