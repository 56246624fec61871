//! Flat-chart differential geometry: points, smooth maps with Jacobians,
//! one-forms, two-forms and the closedness predicates used by the
//! Hamilton-Jacobi checks.
//!
//! Two-forms are stored as evaluation matrices: `B(x, y) = xᵀ 𝔅 y`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{MagnoError, Result};
use crate::nonholonomic::ConstraintDistribution;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type PartialsFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// A point of the configuration space `Q = ℝⁿ`.
pub type ConfigPoint = DVector<f64>;

/// A point `(q, p)` of the cotangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() {
            return Err(MagnoError::dims(format!(
                "phase point needs equal nonzero q/p lengths, got {} and {}",
                q.len(),
                p.len()
            )));
        }
        if !q.iter().chain(p.iter()).all(|x| x.is_finite()) {
            return Err(MagnoError::domain("phase point coordinates"));
        }
        Ok(PhasePoint { q, p })
    }

    pub fn from_slices(q: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(p))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// The stacked `2n` vector `(q, p)`.
    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.q, &self.p)
    }

    pub fn from_stacked(z: &DVector<f64>) -> Self {
        let n = z.len() / 2;
        PhasePoint {
            q: z.rows(0, n).into_owned(),
            p: z.rows(n, n).into_owned(),
        }
    }
}

/// A tangent vector `(dq, dp)` to the cotangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPhaseVector {
    pub dq: DVector<f64>,
    pub dp: DVector<f64>,
}

impl TangentPhaseVector {
    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.dq, &self.dp)
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        TangentPhaseVector {
            dq: v.rows(0, n).into_owned(),
            dp: v.rows(n, n).into_owned(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.dq.norm_squared() + self.dp.norm_squared()).sqrt()
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

fn check_finite_vec(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MagnoError::domain(what))
    }
}

fn check_finite_mat(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MagnoError::domain(what))
    }
}

/// A smooth map `ℝᵃ → ℝᵇ` with an optional analytic Jacobian.
///
/// Without an analytic Jacobian, central differences with step `fd_step`
/// are used.
#[derive(Clone)]
pub struct SmoothMap {
    pub dim_in: usize,
    pub dim_out: usize,
    eval: VectorFn,
    jacobian: Option<MatrixFn>,
    pub fd_step: f64,
    pub label: String,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("label", &self.label)
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl SmoothMap {
    pub fn new(
        label: impl Into<String>,
        dim_in: usize,
        dim_out: usize,
        eval: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        SmoothMap {
            dim_in,
            dim_out,
            eval: Arc::new(eval),
            jacobian: None,
            fd_step: DEFAULT_FD_STEP,
            label: label.into(),
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// The identity map on `ℝᵈ`.
    pub fn identity(label: impl Into<String>, dim: usize) -> Self {
        SmoothMap::new(label, dim, dim, |x| x.clone())
            .with_jacobian(move |_| DMatrix::identity(dim, dim))
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim_in {
            return Err(MagnoError::dims(format!(
                "{} expects {} inputs, got {}",
                self.label,
                self.dim_in,
                x.len()
            )));
        }
        let y = (self.eval)(x);
        check_finite_vec(&y, &self.label)?;
        Ok(y)
    }

    /// `J_ij = ∂f_i/∂x_j`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => {
                let m = j(x);
                check_finite_mat(&m, &self.label)?;
                Ok(m)
            }
            None => self.fd_jacobian(x, self.fd_step),
        }
    }

    pub fn fd_jacobian(&self, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.dim_out, self.dim_in);
        let mut xp = x.clone();
        for j in 0..self.dim_in {
            let x0 = xp[j];
            xp[j] = x0 + h;
            let fp = self.eval(&xp)?;
            xp[j] = x0 - h;
            let fm = self.eval(&xp)?;
            xp[j] = x0;
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        Ok(jac)
    }
}

/// A one-form `γ: Q → T*Q`, i.e. a covector field, as a map `ℝⁿ → ℝⁿ`.
pub type OneFormSection = SmoothMap;

/// A scalar function with optional analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    pub dim: usize,
    eval: ScalarFn,
    gradient: Option<VectorFn>,
    pub fd_step: f64,
    pub label: String,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish()
    }
}

impl ScalarField {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        eval: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            dim,
            eval: Arc::new(eval),
            gradient: None,
            fd_step: DEFAULT_FD_STEP,
            label: label.into(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        ScalarField::new("zero", dim, |_| 0.0).with_gradient(move |_| DVector::zeros(dim))
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(grad));
        self
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let v = (self.eval)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(MagnoError::domain(&self.label))
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(g) = &self.gradient {
            let v = g(x);
            check_finite_vec(&v, &self.label)?;
            return Ok(v);
        }
        let h = self.fd_step;
        let mut out = DVector::zeros(self.dim);
        let mut xp = x.clone();
        for j in 0..self.dim {
            let x0 = xp[j];
            xp[j] = x0 + h;
            let fp = self.value(&xp)?;
            xp[j] = x0 - h;
            let fm = self.value(&xp)?;
            xp[j] = x0;
            out[j] = (fp - fm) / (2.0 * h);
        }
        Ok(out)
    }
}

/// A matrix-valued function of `q` with optional analytic partial
/// derivatives `∂M/∂q_j`.
#[derive(Clone)]
pub struct MatrixField {
    pub dim: usize,
    pub rows: usize,
    pub cols: usize,
    eval: MatrixFn,
    partials: Option<PartialsFn>,
    pub fd_step: f64,
    pub label: String,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixField")
            .field("label", &self.label)
            .field("shape", &(self.rows, self.cols))
            .finish()
    }
}

impl MatrixField {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        rows: usize,
        cols: usize,
        eval: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        MatrixField {
            dim,
            rows,
            cols,
            eval: Arc::new(eval),
            partials: None,
            fd_step: DEFAULT_FD_STEP,
            label: label.into(),
        }
    }

    pub fn constant(label: impl Into<String>, dim: usize, m: DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let zero = DMatrix::zeros(rows, cols);
        MatrixField::new(label, dim, rows, cols, move |_| m.clone())
            .with_partials(move |_| vec![zero.clone(); dim])
    }

    pub fn with_partials(
        mut self,
        partials: impl Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.partials = Some(Arc::new(partials));
        self
    }

    pub fn value(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = (self.eval)(q);
        check_finite_mat(&m, &self.label)?;
        Ok(m)
    }

    /// `[∂M/∂q_1, …, ∂M/∂q_n]`.
    pub fn partials(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        if let Some(p) = &self.partials {
            let out = p(q);
            for m in &out {
                check_finite_mat(m, &self.label)?;
            }
            return Ok(out);
        }
        self.fd_partials(q, self.fd_step)
    }

    pub fn fd_partials(&self, q: &DVector<f64>, h: f64) -> Result<Vec<DMatrix<f64>>> {
        let mut out = Vec::with_capacity(self.dim);
        let mut qp = q.clone();
        for j in 0..self.dim {
            let x0 = qp[j];
            qp[j] = x0 + h;
            let fp = self.value(&qp)?;
            qp[j] = x0 - h;
            let fm = self.value(&qp)?;
            qp[j] = x0;
            out.push((fp - fm) / (2.0 * h));
        }
        Ok(out)
    }
}

/// A two-form on `Q`, evaluated as the antisymmetric matrix `𝔅(q)`.
///
/// Only the strictly upper triangle of the wrapped field is read; the lower
/// triangle is filled in by negation, so antisymmetry holds exactly.
#[derive(Clone, Debug)]
pub struct TwoFormField {
    inner: MatrixField,
    constant: bool,
}

fn antisymmetrize_upper(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            out[(i, j)] = m[(i, j)];
            out[(j, i)] = -m[(i, j)];
        }
    }
    out
}

impl TwoFormField {
    pub fn from_field(field: MatrixField) -> Self {
        TwoFormField {
            inner: field,
            constant: false,
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        TwoFormField {
            inner: MatrixField::constant("B", n, antisymmetrize_upper(&m)),
            constant: true,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn eval(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(antisymmetrize_upper(&self.inner.value(q)?))
    }

    pub fn partials(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        Ok(self
            .inner
            .partials(q)?
            .iter()
            .map(antisymmetrize_upper)
            .collect())
    }

    /// Evaluate `B(x, y)` at `q`.
    pub fn pair(&self, q: &DVector<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        Ok(x.dot(&(self.eval(q)? * y)))
    }

    /// `self + other`, pointwise.
    pub fn sum(&self, other: &TwoFormField) -> TwoFormField {
        let a = self.clone();
        let b = other.clone();
        let (a2, b2) = (a.clone(), b.clone());
        let n = self.dim();
        let field = MatrixField::new("B", n, n, n, move |q| {
            a.eval(q).unwrap_or_else(|_| nan_matrix(n))
                + b.eval(q).unwrap_or_else(|_| nan_matrix(n))
        })
        .with_partials(move |q| match (a2.partials(q), b2.partials(q)) {
            (Ok(pa), Ok(pb)) => pa.iter().zip(pb.iter()).map(|(x, y)| x + y).collect(),
            _ => vec![nan_matrix(n); n],
        });
        TwoFormField {
            inner: field,
            constant: self.constant && other.constant,
        }
    }
}

pub(crate) fn nan_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, f64::NAN)
}

/// Evaluation matrix of `dγ` at `q`: `dγ(x, y) = xᵀ (Jᵀ − J) y` where
/// `J_ij = ∂γ_i/∂q_j`.
///
/// This orientation agrees with the pairing `dγ(x, y) = Dγ(x)·y − Dγ(y)·x`.
pub fn exterior_derivative_one_form(
    gamma: &OneFormSection,
    q: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let j = gamma.jacobian(q)?;
    Ok(j.transpose() - j)
}

/// Largest cyclic-sum defect `|∂_i B_jk + ∂_j B_ki + ∂_k B_ij|` from central
/// differences with step `h`.
pub fn check_closed_two_form(b: &TwoFormField, q: &DVector<f64>, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(MagnoError::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }
    let n = b.dim();
    let mut d = Vec::with_capacity(n);
    let mut qp = q.clone();
    for i in 0..n {
        let x0 = qp[i];
        qp[i] = x0 + h;
        let fp = b.eval(&qp)?;
        qp[i] = x0 - h;
        let fm = b.eval(&qp)?;
        qp[i] = x0;
        d.push((fp - fm) / (2.0 * h));
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let s = d[i][(j, k)] + d[j][(k, i)] + d[k][(i, j)];
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

/// Max `|(dγ + B)(x, y)|` over an orthonormal basis of `D_q`.
pub fn check_gamma_condition_on_d(
    gamma: &OneFormSection,
    b: &TwoFormField,
    d: &ConstraintDistribution,
    q: &DVector<f64>,
) -> Result<f64> {
    let basis = d.d_basis(q)?;
    let m = exterior_derivative_one_form(gamma, q)? + b.eval(q)?;
    let restricted = basis.transpose() * m * &basis;
    Ok(crate::linalg::max_abs(&restricted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_linear(n: usize, rows: &[f64]) -> OneFormSection {
        let j = DMatrix::from_row_slice(n, n, rows);
        let j2 = j.clone();
        SmoothMap::new("gamma", n, n, move |q| &j * q).with_jacobian(move |_| j2.clone())
    }

    /// Brute-force `Dγ(x)·y − Dγ(y)·x` with directional differences.
    fn pairing_oracle(
        gamma: &OneFormSection,
        q: &DVector<f64>,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> f64 {
        let h = 1e-6;
        let dir = |v: &DVector<f64>| {
            (gamma.eval(&(q + v * h)).unwrap() - gamma.eval(&(q - v * h)).unwrap()) / (2.0 * h)
        };
        dir(x).dot(y) - dir(y).dot(x)
    }

    #[test]
    fn orientation_is_pinned_by_pairing_oracle() {
        // γ = (0, q¹)
        let gamma = gamma_linear(2, &[0.0, 0.0, 1.0, 0.0]);
        let q = DVector::from_vec(vec![0.3, -0.4]);
        let m = exterior_derivative_one_form(&gamma, &q).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert!((pairing_oracle(&gamma, &q, &e1, &e2) - m[(0, 1)]).abs() < 1e-8);
    }

    #[test]
    fn rotation_one_form_has_entry_two() {
        // γ = (−q², q¹)
        let gamma = gamma_linear(2, &[0.0, -1.0, 1.0, 0.0]);
        let q = DVector::from_vec(vec![1.0, 2.0]);
        let m = exterior_derivative_one_form(&gamma, &q).unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], -2.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert!((pairing_oracle(&gamma, &q, &e1, &e2) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn exact_form_has_zero_derivative() {
        // γ = d(q¹q²) = (q², q¹), FD Jacobian
        let gamma = SmoothMap::new("dW", 2, 2, |q| DVector::from_vec(vec![q[1], q[0]]));
        let m = exterior_derivative_one_form(&gamma, &DVector::from_vec(vec![0.7, -1.2])).unwrap();
        assert!(m.abs().max() < 1e-9);
        assert_eq!(m.clone() + m.transpose(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn closedness_of_constant_and_non_closed_forms() {
        let q = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let c = TwoFormField::constant(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 2.0, -1.0, 0.0, 3.0, -2.0, -3.0, 0.0],
        ));
        assert_eq!(check_closed_two_form(&c, &q, 1e-4).unwrap(), 0.0);

        let field = MatrixField::new("B", 3, 3, 3, |q| {
            let mut m = DMatrix::zeros(3, 3);
            m[(0, 1)] = q[2];
            m
        });
        let b = TwoFormField::from_field(field);
        let r = check_closed_two_form(&b, &q, 1e-4).unwrap();
        assert!((r - 1.0).abs() < 1e-8, "{r}");
    }

    #[test]
    fn two_form_ignores_lower_triangle() {
        let b = TwoFormField::constant(DMatrix::from_row_slice(2, 2, &[5.0, 1.5, 7.0, 9.0]));
        let m = b.eval(&DVector::zeros(2)).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.5, -1.5, 0.0]));
    }

    #[test]
    fn fd_jacobian_matches_analytic() {
        let f = |q: &DVector<f64>| DVector::from_vec(vec![q[0] * q[1] * q[1], q[0].powi(3) - q[1]]);
        let analytic = SmoothMap::new("f", 2, 2, f).with_jacobian(|q| {
            DMatrix::from_row_slice(
                2,
                2,
                &[q[1] * q[1], 2.0 * q[0] * q[1], 3.0 * q[0] * q[0], -1.0],
            )
        });
        let q = DVector::from_vec(vec![1.3, -0.7]);
        let ja = analytic.jacobian(&q).unwrap();
        let jf = analytic.fd_jacobian(&q, 1e-5).unwrap();
        assert!((ja - &jf).norm() / jf.norm() < 1e-6);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let g = SmoothMap::new("bad", 1, 1, |q| DVector::from_vec(vec![q[0].ln()]));
        let e = g.eval(&DVector::from_vec(vec![-1.0])).unwrap_err();
        assert!(matches!(e, MagnoError::NumericalDomain { .. }));
    }
}
