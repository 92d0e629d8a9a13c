//! Design parameters of the pre-compensator cascade.
//!
//! The whole tuple follows from a few scalar choices: a root `s₀ > 0` fixes
//! the Hurwitz coefficients `a` through `(s + s₀)^r`, the Lyapunov equation
//! with `Q` (identity by default) fixes `P`, and `p` is read off the block
//! split of `P`. The funnel `φ` and the first-stage funnel `φ₁ = φ/ρ` share
//! one spec and differ only by the scalar factor.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::funnels::{make_funnel, FunnelParams, FunnelSpec};
use crate::matrixlab::{
    self, is_spd, lyapunov_residual, solve_linear, solve_lyapunov, spectral_norm, Mat,
};

/// Boundary band around the gain-mismatch bound.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Validated design tuple.
#[derive(Debug, Clone, Serialize)]
pub struct DesignParams {
    pub r: usize,
    pub m: usize,
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub a_mat: Mat,
    pub p_mat: Mat,
    pub q_mat: Mat,
    pub p_tilde: f64,
    pub rho: f64,
    pub gamma_tilde: Mat,
    pub phi: FunnelSpec,
    pub phi1: FunnelSpec,
}

impl DesignParams {
    /// Funnel of cascade level `level` (0-based): `φ₁` for the first
    /// compensator, `φ` for all others.
    pub fn level_funnel(&self, level: usize) -> &FunnelSpec {
        if level == 0 {
            &self.phi1
        } else {
            &self.phi
        }
    }

    pub fn levels(&self) -> usize {
        self.r - 1
    }
}

/// `a_i = C(r, i)·s₀^i`, the coefficients of `(s + s₀)^r` below the leading
/// term.
pub fn hurwitz_coefficients(r: usize, s0: f64) -> Result<Vec<f64>> {
    if !(s0 > 0.0) || !s0.is_finite() {
        return Err(Error::InvalidParameter(
            "root must lie in the open left half-plane (s0 > 0)".into(),
        ));
    }
    if r == 0 {
        return Err(Error::InvalidParameter("relative degree must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(r);
    let mut binom = 1.0;
    for i in 1..=r {
        binom = binom * (r - i + 1) as f64 / i as f64;
        out.push(binom * s0.powi(i as i32));
    }
    Ok(out)
}

/// Companion matrix with first column `−a` and ones on the superdiagonal.
pub fn companion_matrix(a: &[f64]) -> Mat {
    let r = a.len();
    let mut m = Mat::zeros(r, r);
    for (i, ai) in a.iter().enumerate() {
        m[(i, 0)] = -ai;
        if i + 1 < r {
            m[(i, i + 1)] = 1.0;
        }
    }
    m
}

/// Splits `P = [P₁ P₂; P₂⊤ P₄]` and returns `p = (1, −P₄⁻¹P₂⊤)` with the
/// Schur complement `p̃ = P₁ − P₂P₄⁻¹P₂⊤`.
pub fn derive_p(p_mat: &Mat) -> Result<(Vec<f64>, f64)> {
    let r = p_mat.rows();
    if !p_mat.is_square() || r == 0 {
        return Err(Error::dim("P must be square and non-empty"));
    }
    if !is_spd(p_mat) {
        return Err(Error::NotPositiveDefinite);
    }
    if r == 1 {
        return Ok((vec![1.0], p_mat[(0, 0)]));
    }
    let p1 = p_mat[(0, 0)];
    let p2t = p_mat.submatrix(1, 0, r - 1, 1);
    let p4 = p_mat.submatrix(1, 1, r - 1, r - 1);
    let x = solve_linear(&p4, &p2t)?;
    let mut p = Vec::with_capacity(r);
    p.push(1.0);
    p.extend(x.as_slice().iter().map(|v| -v));
    let p_tilde = p1 - matrixlab::dot(p2t.as_slice(), x.as_slice());
    if !(p_tilde > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let residual = p_vector_residual(p_mat, &p, p_tilde);
    if residual > 1e-10 * p_mat.max_abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "P·p deviates from (p̃, 0, …, 0) by {residual:e}"
        )));
    }
    Ok((p, p_tilde))
}

/// `‖P·p − (p̃, 0, …, 0)‖_∞`.
pub fn p_vector_residual(p_mat: &Mat, p: &[f64], p_tilde: f64) -> f64 {
    p_mat
        .matvec(p)
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 { (v - p_tilde).abs() } else { v.abs() })
        .fold(0.0, f64::max)
}

/// Upper bound on `‖I − ΓΓ̃⁻¹‖`:
/// `min{(ρ−1)/(r−2), ρ/(4ρ²(ρ+1)^{r−2} − 1)}`, where the first term is
/// dropped for `r = 2`.
pub fn gain_mismatch_bound(rho: f64, r: usize) -> f64 {
    assert!(r >= 2, "gain mismatch bound needs r >= 2");
    let second = rho / (4.0 * rho * rho * (rho + 1.0).powi(r as i32 - 2) - 1.0);
    if r == 2 {
        second
    } else {
        ((rho - 1.0) / (r - 2) as f64).min(second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `A` Hurwitz, Lyapunov residual, `P > 0` and the `p` formula.
    HurwitzLyapunov,
    /// `φ = ρ·φ₁` with `ρ > 1`.
    FunnelRatio,
    /// `Γ̃` symmetric positive definite, `ΓΓ̃⁻¹` symmetric positive definite.
    GainSymmetry,
    /// `‖I − ΓΓ̃⁻¹‖` below the mismatch bound.
    GainMismatch,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::HurwitzLyapunov => "hurwitz-lyapunov",
            Condition::FunnelRatio => "funnel-ratio",
            Condition::GainSymmetry => "gain-symmetry",
            Condition::GainMismatch => "gain-mismatch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    /// Passes, but the measured value sits on the bound to within
    /// [`BOUNDARY_TOL`].
    Boundary,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub condition: Condition,
    pub status: Status,
    pub measured: f64,
    pub bound: f64,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn has_failure(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn status_of(&self, cond: Condition) -> Option<Status> {
        self.checks
            .iter()
            .filter(|c| c.condition == cond)
            .map(|c| c.status)
            .max_by_key(|s| match s {
                Status::Fail => 3,
                Status::Boundary => 2,
                Status::Pass => 1,
                Status::Skipped => 0,
            })
    }

    pub fn check(&self, cond: Condition) -> Option<&Check> {
        self.checks.iter().find(|c| c.condition == cond && c.status != Status::Pass)
            .or_else(|| self.checks.iter().find(|c| c.condition == cond))
    }

    fn push(&mut self, condition: Condition, ok: bool, measured: f64, bound: f64, msg: impl Into<String>) {
        self.checks.push(Check {
            condition,
            status: if ok { Status::Pass } else { Status::Fail },
            measured,
            bound,
            message: msg.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "  [{:>8}] {:<16} measured {:>12.6e}  bound {:>12.6e}  {}",
                format!("{:?}", c.status).to_lowercase(),
                c.condition.to_string(),
                c.measured,
                c.bound,
                c.message
            )?;
        }
        Ok(())
    }
}

/// Checks every design condition; `gamma` is the plant's high-gain matrix,
/// when known. Nothing here returns an error: findings go into the report.
pub fn validate_design(params: &DesignParams, gamma: Option<&Mat>) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let r = params.r;

    let a_pos = params.a.iter().all(|&x| x > 0.0);
    rep.push(
        Condition::HurwitzLyapunov,
        a_pos,
        params.a.iter().cloned().fold(f64::INFINITY, f64::min),
        0.0,
        "coefficients a_i positive",
    );
    let structured = params.a_mat == companion_matrix(&params.a);
    rep.push(
        Condition::HurwitzLyapunov,
        structured,
        0.0,
        0.0,
        "A has companion structure",
    );
    let verdict = matrixlab::hurwitz_verdict(&params.a_mat);
    rep.push(
        Condition::HurwitzLyapunov,
        verdict == matrixlab::HurwitzVerdict::Stable,
        0.0,
        0.0,
        format!("A Hurwitz (Routh: {verdict:?})"),
    );
    let q_ok = is_spd(&params.q_mat);
    rep.push(Condition::HurwitzLyapunov, q_ok, 0.0, 0.0, "Q symmetric positive definite");
    let res = lyapunov_residual(&params.a_mat, &params.p_mat, &params.q_mat);
    // relative to the data: P grows like s₀^{2r−2} for large poles
    let res_bound = 1e-10 * (1.0 + params.q_mat.frobenius_norm() + params.p_mat.frobenius_norm());
    rep.push(
        Condition::HurwitzLyapunov,
        res <= res_bound,
        res,
        res_bound,
        "Lyapunov residual ‖A⊤P + PA + Q‖",
    );
    let p_ok = is_spd(&params.p_mat);
    rep.push(Condition::HurwitzLyapunov, p_ok, 0.0, 0.0, "P symmetric positive definite");
    let p_res = p_vector_residual(&params.p_mat, &params.p, params.p_tilde);
    let p_bound = 1e-10 * params.p_mat.max_abs().max(1.0);
    rep.push(
        Condition::HurwitzLyapunov,
        p_res <= p_bound && params.p.first() == Some(&1.0),
        p_res,
        p_bound,
        "P·p = (p̃, 0, …, 0) with p₁ = 1",
    );
    rep.push(
        Condition::HurwitzLyapunov,
        params.p_tilde > 0.0,
        params.p_tilde,
        0.0,
        "p̃ positive",
    );

    rep.push(
        Condition::FunnelRatio,
        params.rho > 1.0,
        params.rho,
        1.0,
        "funnel scaling requires rho > 1",
    );
    let mut worst = 0.0f64;
    for k in 0..=100 {
        let t = 0.1 * k as f64;
        let ratio = params.phi.value(t) / params.phi1.value(t);
        if params.phi1.value(t) != 0.0 {
            worst = worst.max((ratio - params.rho).abs());
        }
    }
    rep.push(
        Condition::FunnelRatio,
        worst <= 1e-12 * params.rho,
        worst,
        1e-12 * params.rho,
        "φ/φ₁ equals rho on samples of [0, 10]",
    );

    let gt = &params.gamma_tilde;
    let gt_ok = gt.rows() == params.m && is_spd(gt);
    rep.push(
        Condition::GainSymmetry,
        gt_ok,
        0.0,
        0.0,
        "Γ̃ symmetric positive definite",
    );

    match gamma {
        None => {
            for cond in [Condition::GainSymmetry, Condition::GainMismatch] {
                rep.checks.push(Check {
                    condition: cond,
                    status: Status::Skipped,
                    measured: f64::NAN,
                    bound: f64::NAN,
                    message: "plant high-gain matrix Γ not supplied".into(),
                });
            }
        }
        Some(gamma) if gamma.rows() != params.m || !gamma.is_square() => {
            rep.push(Condition::GainSymmetry, false, 0.0, 0.0, "Γ has wrong dimensions");
        }
        Some(gamma) => match gt.inverse() {
            Err(_) => rep.push(Condition::GainSymmetry, false, 0.0, 0.0, "Γ̃ singular"),
            Ok(gt_inv) => {
                let prod = gamma * &gt_inv;
                let sym_ok = prod.is_symmetric(1e-12);
                rep.push(Condition::GainSymmetry, sym_ok, 0.0, 0.0, "ΓΓ̃⁻¹ symmetric");
                let pd_ok = sym_ok && is_spd(&prod.symmetrize());
                rep.push(Condition::GainSymmetry, pd_ok, 0.0, 0.0, "ΓΓ̃⁻¹ positive definite");
                if r >= 2 {
                    let g = &Mat::identity(params.m) - &prod;
                    let gnorm = spectral_norm(&g);
                    let bound = gain_mismatch_bound(params.rho, r);
                    let status = if (gnorm - bound).abs() <= BOUNDARY_TOL {
                        Status::Boundary
                    } else if gnorm < bound {
                        Status::Pass
                    } else {
                        Status::Fail
                    };
                    rep.checks.push(Check {
                        condition: Condition::GainMismatch,
                        status,
                        measured: gnorm,
                        bound,
                        message: if status == Status::Boundary {
                            "‖I − ΓΓ̃⁻¹‖ equals the bound (strict inequality not met numerically)".into()
                        } else {
                            "‖I − ΓΓ̃⁻¹‖ below the mismatch bound".into()
                        },
                    });
                }
            }
        },
    }
    rep
}

/// How the Hurwitz coefficients are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientChoice {
    /// `(s + s₀)^r`.
    Root(f64),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DesignRequest {
    pub r: usize,
    pub m: usize,
    pub coefficients: CoefficientChoice,
    pub rho: f64,
    pub gamma_tilde: Mat,
    pub funnel: FunnelParams,
    pub q: Option<Mat>,
    pub gamma: Option<Mat>,
}

impl DesignRequest {
    pub fn new(r: usize, m: usize, s0: f64, rho: f64, gamma_tilde: Mat, funnel: FunnelParams) -> Self {
        DesignRequest {
            r,
            m,
            coefficients: CoefficientChoice::Root(s0),
            rho,
            gamma_tilde,
            funnel,
            q: None,
            gamma: None,
        }
    }

    pub fn with_gamma(mut self, gamma: Mat) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_q(mut self, q: Mat) -> Self {
        self.q = Some(q);
        self
    }
}

/// Runs the whole pipeline: coefficients, companion matrix, Lyapunov solve,
/// `p`, funnels, validation. A report with a failed check is returned as
/// [`Error::DesignRejected`].
pub fn design(req: &DesignRequest) -> Result<(DesignParams, ValidationReport)> {
    let (r, m) = (req.r, req.m);
    if r < 2 {
        return Err(Error::InvalidParameter("relative degree must be at least 2".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("output dimension must be at least 1".into()));
    }
    if !(req.rho > 1.0) {
        return Err(Error::InvalidParameter("funnel scaling requires rho > 1".into()));
    }
    if req.gamma_tilde.rows() != m || !req.gamma_tilde.is_square() {
        return Err(Error::dim(format!("Γ̃ must be {m}x{m}")));
    }
    if !is_spd(&req.gamma_tilde) {
        return Err(Error::InvalidParameter("Γ̃ must be symmetric positive definite".into()));
    }
    let a = match &req.coefficients {
        CoefficientChoice::Root(s0) => hurwitz_coefficients(r, *s0)?,
        CoefficientChoice::Explicit(a) => {
            if a.len() != r {
                return Err(Error::dim(format!("expected {r} coefficients, got {}", a.len())));
            }
            a.clone()
        }
    };
    let a_mat = companion_matrix(&a);
    let q_mat = req.q.clone().unwrap_or_else(|| Mat::identity(r));
    if q_mat.rows() != r || !q_mat.is_square() {
        return Err(Error::dim(format!("Q must be {r}x{r}")));
    }
    if !is_spd(&q_mat) {
        return Err(Error::InvalidParameter("Q must be symmetric positive definite".into()));
    }
    let p_mat = solve_lyapunov(&a_mat, &q_mat)?;
    let (p, p_tilde) = derive_p(&p_mat)?;
    let phi = make_funnel(req.funnel, r)?;
    let phi1 = phi.scaled(1.0 / req.rho);
    let params = DesignParams {
        r,
        m,
        a,
        p,
        a_mat,
        p_mat,
        q_mat,
        p_tilde,
        rho: req.rho,
        gamma_tilde: req.gamma_tilde.clone(),
        phi,
        phi1,
    };
    let report = validate_design(&params, req.gamma.as_ref());
    if report.has_failure() {
        return Err(Error::DesignRejected(Box::new(report)));
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1_funnel() -> FunnelParams {
        FunnelParams::exp_boundary(1.0, 2.0, 0.05)
    }

    fn ex2_funnel() -> FunnelParams {
        FunnelParams::exp_boundary(1.0, 3.0, 0.05)
    }

    #[test]
    fn hurwitz_coefficient_values() {
        assert_eq!(hurwitz_coefficients(3, 1.0).unwrap(), vec![3.0, 3.0, 1.0]);
        assert_eq!(hurwitz_coefficients(3, 7.0).unwrap(), vec![21.0, 147.0, 343.0]);
        assert_eq!(hurwitz_coefficients(2, 2.5).unwrap(), vec![5.0, 6.25]);
        assert!(hurwitz_coefficients(3, 0.0).is_err());
        assert!(hurwitz_coefficients(3, -1.0).is_err());
    }

    #[test]
    fn companion_layouts() {
        let c = companion_matrix(&[15.0, 75.0, 125.0]);
        let want = Mat::from_rows(&[[-15.0, 1.0, 0.0], [-75.0, 0.0, 1.0], [-125.0, 0.0, 0.0]]).unwrap();
        assert_eq!(c, want);
        assert_eq!(companion_matrix(&[4.0]), Mat::from_rows(&[[-4.0]]).unwrap());
    }

    #[test]
    fn p_vector_from_unit_root_design() {
        let p_mat = Mat::from_rows(&[[1.0, -0.5, -1.0], [-0.5, 1.0, -0.5], [-1.0, -0.5, 4.0]]).unwrap();
        let (p, pt) = derive_p(&p_mat).unwrap();
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!(pt > 0.0);
    }

    #[test]
    fn p_vector_scalar_case() {
        let (p, pt) = derive_p(&Mat::from_rows(&[[2.5]]).unwrap()).unwrap();
        assert_eq!(p, vec![1.0]);
        assert_eq!(pt, 2.5);
    }

    #[test]
    fn derive_p_rejects_indefinite() {
        let p_mat = Mat::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(matches!(derive_p(&p_mat), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn mismatch_bound_branches() {
        assert!((gain_mismatch_bound(1.5, 3) - 1.5 / 21.5).abs() < 1e-15);
        assert!((gain_mismatch_bound(1.1, 3) - 0.1).abs() < 1e-15);
        assert!((gain_mismatch_bound(1.5, 2) - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn tracking_design_sits_on_the_bound() {
        let gamma = Mat::from_rows(&[[2.0, 0.2], [0.2, 2.0]]).unwrap();
        let req = DesignRequest::new(3, 2, 7.0, 1.1, Mat::scalar(2, 2.0), ex2_funnel()).with_gamma(gamma);
        let (params, rep) = design(&req).unwrap();
        assert_eq!(params.a, vec![21.0, 147.0, 343.0]);
        assert_eq!(rep.status_of(Condition::GainSymmetry), Some(Status::Pass));
        assert_eq!(rep.status_of(Condition::GainMismatch), Some(Status::Boundary));
        let chk = rep.check(Condition::GainMismatch).unwrap();
        assert!((chk.measured - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn asymmetric_gamma_tilde_rejected() {
        let gamma = Mat::identity(2);
        let req = DesignRequest::new(
            3,
            2,
            7.0,
            1.1,
            Mat::from_rows(&[[2.0, 0.5], [0.0, 2.0]]).unwrap(),
            ex2_funnel(),
        )
        .with_gamma(gamma);
        assert!(design(&req).is_err());
    }

    #[test]
    fn asymmetric_product_fails_gain_symmetry() {
        let (mut params, _) =
            design(&DesignRequest::new(3, 2, 7.0, 1.1, Mat::scalar(2, 2.0), ex2_funnel())).unwrap();
        params.gamma_tilde = Mat::from_rows(&[[2.0, 0.3], [0.0, 2.0]]).unwrap();
        let rep = validate_design(&params, Some(&Mat::scalar(2, 2.0)));
        assert_eq!(rep.status_of(Condition::GainSymmetry), Some(Status::Fail));
    }

    #[test]
    fn gross_mismatch_fails() {
        let req = DesignRequest::new(3, 1, 1.0, 1.1, Mat::identity(1), ex1_funnel())
            .with_gamma(Mat::scalar(1, 10.0));
        match design(&req) {
            Err(Error::DesignRejected(rep)) => {
                let chk = rep.check(Condition::GainMismatch).unwrap();
                assert_eq!(chk.status, Status::Fail);
                assert!((chk.measured - 9.0).abs() < 1e-12);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn rho_must_exceed_one() {
        let req = DesignRequest::new(3, 1, 1.0, 0.9, Mat::identity(1), ex1_funnel());
        let err = design(&req).unwrap_err();
        assert!(err.to_string().contains("rho > 1"));
    }

    #[test]
    fn unit_root_design_matches_hand_values() {
        let (params, rep) =
            design(&DesignRequest::new(3, 1, 1.0, 1.5, Mat::identity(1), ex1_funnel())).unwrap();
        assert!(!rep.has_failure());
        assert!((params.p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((params.phi.value(0.0) - 1.0 / 1.05).abs() < 1e-15);
        assert!((params.phi1.value(0.0) - 1.0 / 1.575).abs() < 1e-15);
    }

    #[test]
    fn relative_degree_two_design() {
        let (params, rep) =
            design(&DesignRequest::new(2, 1, 1.0, 1.5, Mat::identity(1), ex1_funnel())).unwrap();
        assert!(!rep.has_failure());
        assert_eq!(params.p.len(), 2);
        assert_eq!(params.p[0], 1.0);
        assert!(p_vector_residual(&params.p_mat, &params.p, params.p_tilde) < 1e-10);
    }

    #[test]
    fn design_is_deterministic() {
        let req = DesignRequest::new(4, 2, 3.0, 1.2, Mat::scalar(2, 1.5), ex2_funnel());
        let (a, _) = design(&req).unwrap();
        let (b, _) = design(&req).unwrap();
        assert_eq!(a.p_mat.as_slice(), b.p_mat.as_slice());
        assert_eq!(a.p, b.p);
        assert_eq!(a.p_tilde.to_bits(), b.p_tilde.to_bits());
    }
}
