//! Plant realizations with relative degree `r` and stable internal dynamics.
//!
//! State vectors are laid out as the integrator chain `ξ₁, …, ξ_r`
//! (each of length `m`, `ξ₁ = y`) followed by the internal state `η`.

use std::fmt::Debug;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrixlab::{is_hurwitz, is_spd, null_space, rank, solve_linear, Mat};
use crate::signals::{ScalarSignal, VectorSignal};

/// A plant the closed loop can drive. Implementations are immutable;
/// `rhs` is pure and reentrant.
pub trait PlantModel: Debug + Send + Sync {
    fn output_dim(&self) -> usize;
    fn relative_degree(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn output(&self, x: &[f64]) -> Vec<f64>;
    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);
    /// High-gain matrix `Γ`.
    fn high_gain(&self) -> &Mat;
    /// `(y, ẏ, …, y^{(r−1)})` read from the state, for plants that expose
    /// their integrator chain.
    fn chain_states(&self, _x: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
    /// `R₁, …, R_r` of the top chain row.
    fn chain_matrices(&self) -> Option<&[Mat]> {
        None
    }
    /// Internal state (after the chain), for monitoring.
    fn internal_state<'a>(&self, _x: &'a [f64]) -> &'a [f64] {
        &[]
    }
}

/// Linear plant in Byrnes–Isidori form:
///
/// ```text
/// ξ̇_i = ξ_{i+1}                          (i < r)
/// ξ̇_r = Σ R_j ξ_j + S η + Γ u + d_r(t)
/// η̇   = Q η + P ξ₁ + d_η(t)
/// y   = ξ₁
/// ```
#[derive(Debug, Clone, Serialize)]
pub struct BifPlant {
    r: usize,
    m: usize,
    r_blocks: Vec<Mat>,
    s: Mat,
    q_int: Mat,
    p_int: Mat,
    gamma: Mat,
    d_r: VectorSignal,
    d_eta: VectorSignal,
    x0: Vec<f64>,
}

impl BifPlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        r_blocks: Vec<Mat>,
        s: Mat,
        q_int: Mat,
        p_int: Mat,
        gamma: Mat,
        d_r: Option<VectorSignal>,
        d_eta: Option<VectorSignal>,
        x0: Option<Vec<f64>>,
    ) -> Result<Self> {
        let r = r_blocks.len();
        let m = gamma.rows();
        if r == 0 || m == 0 || !gamma.is_square() {
            return Err(Error::dim("need r ≥ 1 chain blocks and a square Γ"));
        }
        if r_blocks.iter().any(|b| b.rows() != m || b.cols() != m) {
            return Err(Error::dim(format!("every R_i must be {m}x{m}")));
        }
        let n_eta = q_int.rows();
        if !q_int.is_square()
            || s.rows() != m
            || s.cols() != n_eta
            || p_int.rows() != n_eta
            || p_int.cols() != m
        {
            return Err(Error::dim("internal dynamics blocks do not conform"));
        }
        if n_eta > 0 && !is_hurwitz(&q_int) {
            return Err(Error::NotMinimumPhase);
        }
        if !gamma_sign_definite(&gamma) {
            return Err(Error::InvalidParameter(
                "high-gain matrix must be symmetric and sign definite".into(),
            ));
        }
        let d_r = d_r.unwrap_or_else(|| VectorSignal::zeros(m));
        let d_eta = d_eta.unwrap_or_else(|| VectorSignal::zeros(n_eta));
        if d_r.dim() != m || d_eta.dim() != n_eta {
            return Err(Error::dim("disturbance dimensions do not conform"));
        }
        let n = r * m + n_eta;
        let x0 = x0.unwrap_or_else(|| vec![0.0; n]);
        if x0.len() != n {
            return Err(Error::dim(format!("initial state must have length {n}")));
        }
        Ok(BifPlant {
            r,
            m,
            r_blocks,
            s,
            q_int,
            p_int,
            gamma,
            d_r,
            d_eta,
            x0,
        })
    }

    /// Pure integrator chain `y^{(r)} = Γu`.
    pub fn integrator_chain(r: usize, gamma: Mat) -> Result<Self> {
        let m = gamma.rows();
        BifPlant::new(
            vec![Mat::zeros(m, m); r],
            Mat::zeros(m, 0),
            Mat::zeros(0, 0),
            Mat::zeros(0, m),
            gamma,
            None,
            None,
            None,
        )
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.x0.len() {
            return Err(Error::dim("initial state length"));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn internal_dim(&self) -> usize {
        self.q_int.rows()
    }

    pub fn internal_matrix(&self) -> &Mat {
        &self.q_int
    }

    pub fn coupling(&self) -> (&Mat, &Mat) {
        (&self.s, &self.p_int)
    }

    /// Chain and internal derivatives at `(ξ, η, u, t)`.
    pub fn bif_rhs(&self, xi: &[f64], eta: &[f64], u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (r, m) = (self.r, self.m);
        if xi.len() != r * m || eta.len() != self.internal_dim() || u.len() != m {
            return Err(Error::dim("bif_plant_rhs arguments do not conform"));
        }
        let mut dxi = vec![0.0; r * m];
        dxi[..(r - 1) * m].copy_from_slice(&xi[m..]);
        let top = &mut dxi[(r - 1) * m..];
        for (j, rj) in self.r_blocks.iter().enumerate() {
            rj.matvec_add(&xi[j * m..(j + 1) * m], top);
        }
        self.s.matvec_add(eta, top);
        self.gamma.matvec_add(u, top);
        for (o, d) in top.iter_mut().zip(self.d_r.value(t)) {
            *o += d;
        }
        let mut deta = self.d_eta.value(t);
        self.q_int.matvec_add(eta, &mut deta);
        self.p_int.matvec_add(&xi[..m], &mut deta);
        Ok((dxi, deta))
    }
}

fn gamma_sign_definite(gamma: &Mat) -> bool {
    gamma.is_symmetric(1e-12) && (is_spd(gamma) || is_spd(&gamma.scale(-1.0)))
}

/// Free function form of [`BifPlant::bif_rhs`].
pub fn bif_plant_rhs(
    plant: &BifPlant,
    xi: &[f64],
    eta: &[f64],
    u: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    plant.bif_rhs(xi, eta, u, t)
}

impl PlantModel for BifPlant {
    fn output_dim(&self) -> usize {
        self.m
    }
    fn relative_degree(&self) -> usize {
        self.r
    }
    fn state_dim(&self) -> usize {
        self.r * self.m + self.internal_dim()
    }
    fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        x[..self.m].to_vec()
    }
    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let split = self.r * self.m;
        let (dxi, deta) = self
            .bif_rhs(&x[..split], &x[split..], u, t)
            .expect("state layout checked at construction");
        dx[..split].copy_from_slice(&dxi);
        dx[split..].copy_from_slice(&deta);
    }
    fn high_gain(&self) -> &Mat {
        &self.gamma
    }
    fn chain_states(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        Some(x[..self.r * self.m].chunks(self.m).map(<[f64]>::to_vec).collect())
    }
    fn chain_matrices(&self) -> Option<&[Mat]> {
        Some(&self.r_blocks)
    }
    fn internal_state<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.r * self.m..]
    }
}

/// The nonlinear two-output plant of relative degree three used for the
/// tracking study:
///
/// ```text
/// y⁽³⁾ = R₁y + R₂ẏ + R₃ÿ + f(d(t), T(y, ẏ, ÿ)(t)) + Γu
/// T    = (y₁² + e^{y₁ − |ẏ₁|},  y₂³ − sin ẏ₂,  η)
/// f    = (d₁ + T₁ + η³,  d₂ + T₂ − η)
/// η̇    = −η + ‖y‖²·tanh(‖ÿ‖²),  η(0) = 0
/// ```
///
/// The memory term of `T` is the convolution `∫₀ᵗ e^{−(t−s)} ‖y(s)‖² tanh(‖ÿ(s)‖²) ds`,
/// realized by the scalar state `η`.
#[derive(Debug, Clone, Serialize)]
pub struct Example2Plant {
    r_blocks: Vec<Mat>,
    gamma: Mat,
    disturbance: VectorSignal,
}

impl Default for Example2Plant {
    fn default() -> Self {
        Example2Plant::new()
    }
}

impl Example2Plant {
    pub fn new() -> Self {
        let r_blocks = vec![
            Mat::from_rows(&[[-1.0, 0.0], [0.0, 0.0]]).unwrap(),
            Mat::from_rows(&[[1.0, -1.0], [0.0, 0.0]]).unwrap(),
            Mat::from_rows(&[[1.0, 1.0], [0.0, -1.0]]).unwrap(),
        ];
        let gamma = Mat::from_rows(&[[2.0, 0.2], [0.2, 2.0]]).unwrap();
        let disturbance = VectorSignal(vec![
            ScalarSignal::Sum {
                terms: vec![
                    ScalarSignal::Sine { amp: 0.2, omega: 5.0, phase: 0.0 },
                    ScalarSignal::Cosine { amp: 0.2, omega: 7.0 },
                ],
            },
            ScalarSignal::Sum {
                terms: vec![
                    ScalarSignal::Sine { amp: 0.25, omega: 9.0, phase: 0.0 },
                    ScalarSignal::Cosine { amp: 0.2, omega: 3.0 },
                ],
            },
        ]);
        Example2Plant {
            r_blocks,
            gamma,
            disturbance,
        }
    }

    pub fn with_disturbance(mut self, d: VectorSignal) -> Result<Self> {
        if d.dim() != 2 {
            return Err(Error::dim("disturbance must have two components"));
        }
        self.disturbance = d;
        Ok(self)
    }

    pub fn disturbance(&self, t: f64) -> Vec<f64> {
        self.disturbance.value(t)
    }

    /// Operator output `(T₁, T₂, T₃)` at a state.
    pub fn operator(&self, x: &[f64]) -> [f64; 3] {
        let (y, yd, eta) = (&x[0..2], &x[2..4], x[6]);
        [
            y[0] * y[0] + (y[0] - yd[0].abs()).exp(),
            y[1].powi(3) - yd[1].sin(),
            eta,
        ]
    }
}

/// Derivative of the tracking-study plant state `(ξ₁, ξ₂, ξ₃, η)`.
pub fn example2_plant_rhs(plant: &Example2Plant, x: &[f64], u: &[f64], t: f64) -> Vec<f64> {
    let mut dx = vec![0.0; 7];
    plant.rhs(t, x, u, &mut dx);
    dx
}

impl PlantModel for Example2Plant {
    fn output_dim(&self) -> usize {
        2
    }
    fn relative_degree(&self) -> usize {
        3
    }
    fn state_dim(&self) -> usize {
        7
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; 7]
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        x[..2].to_vec()
    }
    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[..4].copy_from_slice(&x[2..6]);
        let d = self.disturbance(t);
        let op = self.operator(x);
        let eta = x[6];
        let top = &mut dx[4..6];
        top[0] = d[0] + op[0] + eta.powi(3);
        top[1] = d[1] + op[1] - eta;
        for (j, rj) in self.r_blocks.iter().enumerate() {
            rj.matvec_add(&x[2 * j..2 * j + 2], top);
        }
        self.gamma.matvec_add(u, top);
        let y_sq = x[0] * x[0] + x[1] * x[1];
        let ydd_sq = x[4] * x[4] + x[5] * x[5];
        dx[6] = -eta + y_sq * ydd_sq.tanh();
    }
    fn high_gain(&self) -> &Mat {
        &self.gamma
    }
    fn chain_states(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        Some(x[..6].chunks(2).map(<[f64]>::to_vec).collect())
    }
    fn chain_matrices(&self) -> Option<&[Mat]> {
        Some(&self.r_blocks)
    }
    fn internal_state<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[6..]
    }
}

/// Linear state-space plant `ẋ = Ax + Bu`, `y = Cx`.
#[derive(Debug, Clone, Serialize)]
pub struct StateSpacePlant {
    a: Mat,
    b: Mat,
    c: Mat,
    x0: Vec<f64>,
    r: usize,
    gamma: Mat,
}

impl StateSpacePlant {
    pub fn new(a: Mat, b: Mat, c: Mat, x0: Vec<f64>) -> Result<Self> {
        let r = relative_degree(&a, &b, &c)?;
        let gamma = markov(&a, &b, &c, r - 1);
        if x0.len() != a.rows() {
            return Err(Error::dim("initial state length"));
        }
        Ok(StateSpacePlant { a, b, c, x0, r, gamma })
    }
}

impl PlantModel for StateSpacePlant {
    fn output_dim(&self) -> usize {
        self.c.rows()
    }
    fn relative_degree(&self) -> usize {
        self.r
    }
    fn state_dim(&self) -> usize {
        self.a.rows()
    }
    fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        self.c.matvec(x)
    }
    fn rhs(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx.fill(0.0);
        self.a.matvec_add(x, dx);
        self.b.matvec_add(u, dx);
    }
    fn high_gain(&self) -> &Mat {
        &self.gamma
    }
}

fn mat_pow(a: &Mat, k: usize) -> Mat {
    (0..k).fold(Mat::identity(a.rows()), |acc, _| &acc * a)
}

fn markov(a: &Mat, b: &Mat, c: &Mat, k: usize) -> Mat {
    &(c * &mat_pow(a, k)) * b
}

/// Least `r` with `CA^{r−1}B ≠ 0`; earlier Markov parameters must vanish to
/// `1e-10·‖C‖‖A‖^j‖B‖`.
pub fn relative_degree(a: &Mat, b: &Mat, c: &Mat) -> Result<usize> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n || c.cols() != n || b.cols() != c.rows() {
        return Err(Error::dim("(A, B, C) do not conform"));
    }
    let (na, nb, nc) = (a.frobenius_norm(), b.frobenius_norm(), c.frobenius_norm());
    for k in 0..n {
        let mk = markov(a, b, c, k);
        let tol = 1e-10 * nc * na.powi(k as i32) * nb;
        if mk.frobenius_norm() > tol {
            return Ok(k + 1);
        }
    }
    Err(Error::NoRelativeDegree)
}

/// Result of the coordinate change `(ξ, η) = U x`.
#[derive(Debug, Clone)]
pub struct BifTransform {
    pub plant: BifPlant,
    pub u: Mat,
    pub r: usize,
}

impl BifTransform {
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.u.matvec(x)
    }
}

/// Transforms a disturbance-free linear system with `rk B = rk C = m` into
/// Byrnes–Isidori form. `declared_r`, when given, must match the detected
/// relative degree.
pub fn linear_to_bif(a: &Mat, b: &Mat, c: &Mat, declared_r: Option<usize>) -> Result<BifTransform> {
    let n = a.rows();
    let m = b.cols();
    if c.rows() != m {
        return Err(Error::dim("input and output dimensions must agree"));
    }
    if rank(b) != m || rank(&c.transpose()) != m {
        return Err(Error::InvalidParameter("rk B = rk C = m required".into()));
    }
    let r = relative_degree(a, b, c)?;
    if let Some(dr) = declared_r {
        if dr != r {
            return Err(Error::NoRelativeDegree);
        }
    }
    let gamma = markov(a, b, c, r - 1);
    if rank(&gamma) != m {
        return Err(Error::HighGainSingular);
    }
    if r * m > n {
        return Err(Error::NoRelativeDegree);
    }
    let powers: Vec<Mat> = (0..=r).map(|k| mat_pow(a, k)).collect();
    let b_blocks: Vec<Mat> = powers[..r].iter().map(|p| p * b).collect();
    let c_blocks: Vec<Mat> = powers[..r].iter().map(|p| c * p).collect();
    let bb = Mat::hstack(&b_blocks.iter().collect::<Vec<_>>())?;
    let cc = Mat::vstack(&c_blocks.iter().collect::<Vec<_>>())?;
    let v = null_space(&cc);
    let n_eta = n - r * m;
    if v.cols() != n_eta {
        return Err(Error::TransformSingular);
    }
    let n_mat = if n_eta > 0 {
        let vt = v.transpose();
        let v_pinv = solve_linear(&(&vt * &v), &vt)?;
        let cb_inv_c = solve_linear(&(&cc * &bb), &cc)?;
        let proj = &Mat::identity(n) - &(&bb * &cb_inv_c);
        &v_pinv * &proj
    } else {
        Mat::zeros(0, n)
    };
    let u = Mat::vstack(&[&cc, &n_mat])?;
    let u_inv = u.inverse().map_err(|_| Error::TransformSingular)?;
    let top = &(c * &powers[r]) * &u_inv;
    let r_blocks: Vec<Mat> = (0..r).map(|j| top.submatrix(0, j * m, m, m)).collect();
    let s = top.submatrix(0, r * m, m, n_eta);
    let gamma_inv = gamma.inverse().map_err(|_| Error::HighGainSingular)?;
    let p_int = &(&(&n_mat * &powers[r]) * b) * &gamma_inv;
    let q_int = &(&n_mat * a) * &v;
    if n_eta > 0 && !is_hurwitz(&q_int) {
        return Err(Error::NotMinimumPhase);
    }
    let plant = BifPlant::new(r_blocks, s, q_int, p_int, gamma, None, None, None)?;
    Ok(BifTransform { plant, u, r })
}

/// `(y_ref, ẏ_ref, …, y_ref^{(order)})` at `t`; `out[k]` is an `m`-vector.
pub fn reference_derivs(reference: &VectorSignal, t: f64, order: usize) -> Vec<Vec<f64>> {
    reference.derivs(t, order)
}

/// Stacked form `(y_ref⊤, ẏ_ref⊤, …)⊤`.
pub fn stacked_reference(reference: &VectorSignal, t: f64, order: usize) -> Vec<f64> {
    reference.derivs(t, order).concat()
}

#[allow(dead_code)]
fn _assert_object_safe(_: &dyn PlantModel) {}
