//! Small dense real matrices.
//!
//! Everything here is sized for control design problems with a handful of
//! states: Kronecker products, Lyapunov solves by vectorization, a cyclic
//! Jacobi eigensolver for symmetric matrices and a Hurwitz test that goes
//! through the characteristic polynomial and the Routh array instead of a
//! general eigensolver.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn scalar(n: usize, value: f64) -> Self {
        Mat::identity(n).scale(value)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::dim("ragged matrix rows"));
            }
            data.extend_from_slice(row);
        }
        Mat::from_vec(rows.len(), cols, data)
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a plain vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Accumulates `self · v` into `out`.
    pub fn matvec_add(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.row(i).iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Symmetric iff `‖M − M⊤‖_max ≤ tol · max(1, ‖M‖_max)`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn symmetrize(&self) -> Mat {
        let t = self.transpose();
        (self + &t).scale(0.5)
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Mat) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn vstack(blocks: &[&Mat]) -> Result<Mat> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::dim("vstack column mismatch"));
        }
        let mut data = Vec::new();
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        Ok(Mat { rows, cols, data })
    }

    pub fn hstack(blocks: &[&Mat]) -> Result<Mat> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::dim("hstack row mismatch"));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut c0 = 0;
        for b in blocks {
            out.set_block(0, c0, b);
            c0 += b.cols;
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Mat> {
        if !self.is_square() {
            return Err(Error::dim("inverse of non-square matrix"));
        }
        solve_linear(self, &Mat::identity(self.rows))
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs).expect("matrix product dimension mismatch")
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl fmt::Display for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x:>12.6}")).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.to_rows()
    }
}

/// Kronecker product `K ⊗ L`: block `(i, j)` is `k_ij · L`.
pub fn kron(k: &Mat, l: &Mat) -> Mat {
    let mut out = Mat::zeros(k.rows * l.rows, k.cols * l.cols);
    for i in 0..k.rows {
        for j in 0..k.cols {
            let kij = k[(i, j)];
            for a in 0..l.rows {
                for b in 0..l.cols {
                    out[(i * l.rows + a, j * l.cols + b)] = kij * l[(a, b)];
                }
            }
        }
    }
    out
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.rows;
    if !a.is_square() || b.rows != n {
        return Err(Error::dim("solve_linear expects square A and matching B"));
    }
    let mut m = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if pval <= 1e-14 * scale {
            return Err(Error::Singular);
        }
        if piv != col {
            for j in 0..n {
                m.data.swap(col * n + j, piv * n + j);
            }
            for j in 0..x.cols {
                x.data.swap(col * x.cols + j, piv * x.cols + j);
            }
        }
        let d = m[(col, col)];
        for r in (col + 1)..n {
            let f = m[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(r, j)] -= f * m[(col, j)];
            }
            for j in 0..x.cols {
                x[(r, j)] -= f * x[(col, j)];
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..x.cols {
            let mut s = x[(col, j)];
            for k in (col + 1)..n {
                s -= m[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = s / m[(col, col)];
        }
    }
    Ok(x)
}

/// Solves `A⊤P + PA + Q = 0` by vectorization.
///
/// With row-major `vec`, `vec(A⊤P) = (A⊤ ⊗ I)·vec(P)` and
/// `vec(PA) = (I ⊗ A⊤)·vec(P)`, so the unknowns satisfy an `n²×n²` system.
/// The result is symmetrized.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.rows;
    if !a.is_square() || !q.is_square() || q.rows != n {
        return Err(Error::dim("Lyapunov solve expects square A and Q of equal size"));
    }
    let at = a.transpose();
    let eye = Mat::identity(n);
    let op = &kron(&at, &eye) + &kron(&eye, &at);
    let rhs = Mat::column(&q.data).scale(-1.0);
    let vec_p = solve_linear(&op, &rhs).map_err(|e| match e {
        Error::Singular => Error::LyapunovSingular,
        other => other,
    })?;
    let p = Mat {
        rows: n,
        cols: n,
        data: vec_p.data,
    };
    Ok(p.symmetrize())
}

/// Residual `‖A⊤P + PA + Q‖_F`.
pub fn lyapunov_residual(a: &Mat, p: &Mat, q: &Mat) -> f64 {
    let at = a.transpose();
    let r = &(&(&at * p) + &(p * a)) + q;
    r.frobenius_norm()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: Mat,
}

/// Cyclic Jacobi rotations; eigenvalues sorted ascending.
pub fn sym_eig(m: &Mat) -> Result<SymEigen> {
    if !m.is_square() {
        return Err(Error::dim("eigenvalues of a non-square matrix"));
    }
    if !m.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric);
    }
    let n = m.rows;
    let mut a = m.symmetrize();
    let mut v = Mat::identity(n);
    let norm = a.frobenius_norm();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * norm || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Largest singular value, via the eigenvalues of `M⊤M`.
pub fn spectral_norm(m: &Mat) -> f64 {
    let mtm = (&m.transpose() * m).symmetrize();
    let eig = sym_eig(&mtm).expect("M⊤M is symmetric");
    eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// `f(M) = V diag(f(λ)) V⊤` for symmetric `M`.
pub fn sym_fn(m: &Mat, f: impl Fn(f64) -> f64) -> Result<Mat> {
    let eig = sym_eig(m)?;
    let n = m.rows;
    let mut out = Mat::zeros(n, n);
    for (k, &lam) in eig.values.iter().enumerate() {
        let fl = f(lam);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += fl * eig.vectors[(i, k)] * eig.vectors[(j, k)];
            }
        }
    }
    Ok(out.symmetrize())
}

/// Symmetric positive definite test through the smallest eigenvalue.
pub fn is_spd(m: &Mat) -> bool {
    m.is_symmetric(1e-12)
        && sym_eig(m)
            .map(|e| e.values.first().is_some_and(|&l| l > 0.0))
            .unwrap_or(false)
}

/// Characteristic polynomial `det(sI − M) = s^n + c_1 s^{n−1} + … + c_n`
/// by the Faddeev–LeVerrier recursion. Returns `(c_1, …, c_n)`.
pub fn char_poly(m: &Mat) -> Vec<f64> {
    assert!(m.is_square());
    let n = m.rows;
    let eye = Mat::identity(n);
    let mut coeffs = Vec::with_capacity(n);
    let mut mk = Mat::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        mk = &(m * &mk) + &eye.scale(c_prev);
        let c = -(m * &mk).trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

/// Outcome of the Routh–Hurwitz test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HurwitzVerdict {
    Stable,
    Unstable,
    /// A Routh pivot vanished (to 1e-12); a root sits on or near the
    /// imaginary axis.
    Marginal,
}

/// Routh–Hurwitz test for the monic polynomial `s^n + c_1 s^{n−1} + … + c_n`.
pub fn routh_hurwitz(coeffs: &[f64]) -> HurwitzVerdict {
    let n = coeffs.len();
    if n == 0 {
        return HurwitzVerdict::Stable;
    }
    let mut poly = Vec::with_capacity(n + 1);
    poly.push(1.0);
    poly.extend_from_slice(coeffs);
    let width = n / 2 + 1;
    let mut prev: Vec<f64> = (0..width).map(|k| poly.get(2 * k).copied().unwrap_or(0.0)).collect();
    let mut cur: Vec<f64> = (0..width)
        .map(|k| poly.get(2 * k + 1).copied().unwrap_or(0.0))
        .collect();
    let tol = 1e-12;
    let mut unstable = false;
    for _ in 0..n {
        let scale = cur.iter().chain(prev.iter()).fold(1.0f64, |m, x| m.max(x.abs()));
        let pivot = cur[0];
        if pivot.abs() < tol * scale {
            return HurwitzVerdict::Marginal;
        }
        if pivot < 0.0 {
            unstable = true;
        }
        let next: Vec<f64> = (0..width)
            .map(|k| {
                let a = prev.get(k + 1).copied().unwrap_or(0.0);
                let b = cur.get(k + 1).copied().unwrap_or(0.0);
                (pivot * a - prev[0] * b) / pivot
            })
            .collect();
        prev = cur;
        cur = next;
    }
    if unstable {
        HurwitzVerdict::Unstable
    } else {
        HurwitzVerdict::Stable
    }
}

pub fn hurwitz_verdict(m: &Mat) -> HurwitzVerdict {
    routh_hurwitz(&char_poly(m))
}

/// True iff every eigenvalue of `m` has strictly negative real part.
pub fn is_hurwitz(m: &Mat) -> bool {
    hurwitz_verdict(m) == HurwitzVerdict::Stable
}

/// Basis of the null space of `m` by reduction to row echelon form.
/// Pivots below `1e-10 · ‖m‖_max` count as zero. Columns of the result span
/// `ker m`.
pub fn null_space(m: &Mat) -> Mat {
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.clone();
    let tol = 1e-10 * m.max_abs().max(f64::MIN_POSITIVE);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (piv, pval) = (r..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .fold((r, -1.0), |best, x| if x.1 > best.1 { x } else { best });
        if pval <= tol {
            continue;
        }
        for j in 0..cols {
            a.data.swap(r * cols + j, piv * cols + j);
        }
        let d = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= d;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        a[(i, j)] -= f * a[(r, j)];
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut basis = Mat::zeros(cols, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = 1.0;
        for (row, &p) in pivots.iter().enumerate() {
            basis[(p, k)] = -a[(row, f)];
        }
    }
    basis
}

/// Numerical rank (same pivot threshold as [`null_space`]).
pub fn rank(m: &Mat) -> usize {
    m.cols - null_space(m).cols
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn companion(a: &[f64]) -> Mat {
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

    #[test]
    fn kron_identity_case() {
        let m = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(kron(&Mat::identity(1), &m), m);
    }

    #[test]
    fn kron_with_identity_blocks() {
        let k = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let got = kron(&k, &Mat::identity(2));
        let want = Mat::from_rows(&[
            [1.0, 0.0, 2.0, 0.0],
            [0.0, 1.0, 0.0, 2.0],
            [3.0, 0.0, 4.0, 0.0],
            [0.0, 3.0, 0.0, 4.0],
        ])
        .unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn kron_of_row_vector_builds_stacked_blocks() {
        let p = Mat::column(&[1.0, 2.0, 3.0]);
        let pbar = kron(&p, &Mat::identity(2));
        assert_eq!((pbar.rows(), pbar.cols()), (6, 2));
        assert_eq!(pbar[(2, 0)], 2.0);
        assert_eq!(pbar[(5, 1)], 3.0);
        assert_eq!(pbar[(5, 0)], 0.0);
    }

    #[test]
    fn lyapunov_companion_of_unit_cube() {
        let a = companion(&[3.0, 3.0, 1.0]);
        let p = solve_lyapunov(&a, &Mat::identity(3)).unwrap();
        let want = Mat::from_rows(&[[1.0, -0.5, -1.0], [-0.5, 1.0, -0.5], [-1.0, -0.5, 4.0]]).unwrap();
        assert!((&p - &want).max_abs() < 1e-12, "{p}");
    }

    #[test]
    fn lyapunov_negative_identity() {
        let p = solve_lyapunov(&Mat::scalar(4, -1.0), &Mat::identity(4)).unwrap();
        assert!((&p - &Mat::scalar(4, 0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn lyapunov_rejects_shared_spectrum() {
        // eigenvalues ±i: A and −A share them
        let a = Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert!(matches!(
            solve_lyapunov(&a, &Mat::identity(2)),
            Err(Error::LyapunovSingular)
        ));
    }

    #[test]
    fn spectral_norms() {
        assert!((spectral_norm(&Mat::identity(3)) - 1.0).abs() < 1e-14);
        assert!((spectral_norm(&Mat::diag(&[2.0, -3.0])) - 3.0).abs() < 1e-14);
        let g = Mat::from_rows(&[[0.0, -0.1], [-0.1, 0.0]]).unwrap();
        assert!((spectral_norm(&g) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sym_eig_small_cases() {
        let e = sym_eig(&Mat::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        let e = sym_eig(&Mat::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let m = Mat::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(Error::NotSymmetric)));
    }

    #[test]
    fn sym_eig_residuals() {
        let m = Mat::from_rows(&[
            [4.0, 1.0, -2.0, 0.5],
            [1.0, 3.0, 0.0, 1.0],
            [-2.0, 0.0, 5.0, -1.0],
            [0.5, 1.0, -1.0, 2.0],
        ])
        .unwrap();
        let e = sym_eig(&m).unwrap();
        for k in 0..4 {
            let v: Vec<f64> = (0..4).map(|i| e.vectors[(i, k)]).collect();
            let mv = m.matvec(&v);
            let res: f64 = mv.iter().zip(&v).map(|(a, b)| (a - e.values[k] * b).powi(2)).sum();
            assert!(res.sqrt() <= 1e-9 * m.frobenius_norm());
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn hurwitz_cases() {
        assert!(is_hurwitz(&companion(&[9.0, 27.0, 27.0])));
        let rot = Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert!(!is_hurwitz(&rot));
        assert_eq!(hurwitz_verdict(&rot), HurwitzVerdict::Marginal);
        assert!(!is_hurwitz(&Mat::diag(&[-1.0, -2.0, 5.0])));
        assert_eq!(hurwitz_verdict(&Mat::diag(&[-1.0, -2.0, 5.0])), HurwitzVerdict::Unstable);
    }

    #[test]
    fn char_poly_matches_companion() {
        let a = [21.0, 147.0, 343.0];
        let c = char_poly(&companion(&a));
        for (x, y) in c.iter().zip(a) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn null_space_of_selector() {
        let c = Mat::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let v = null_space(&c);
        assert_eq!(v.cols(), 1);
        assert!((&c * &v).max_abs() < 1e-15);
        assert_eq!(rank(&c), 2);
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat::from_rows(&[[2.0, 0.2], [0.2, 2.0]]).unwrap();
        let prod = &m * &m.inverse().unwrap();
        assert!((&prod - &Mat::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn serde_as_nested_rows() {
        let m: Mat = serde_json::from_str("[[1,2],[3,4]]").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert!(serde_json::from_str::<Mat>("[[1,2],[3]]").is_err());
    }
}
