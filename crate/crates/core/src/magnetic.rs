//! Magnetic symplectic structure `ω^B = ω − π*B` and the magnetic
//! Hamiltonian vector field.
//!
//! With `Ω^B(q) = [[−𝔅, I], [−I, 0]]` the form evaluates as
//! `ω^B(u, v) = uᵀ Ω^B v = u_q·v_p − u_p·v_q − u_qᵀ 𝔅 v_q`. The field `X`
//! solves `i_X ω^B = dH`, i.e. `Ω^Bᵀ X = ∇H`, which gives
//! `dq = ∂H/∂p` and `dp = −∂H/∂q + 𝔅 ∂H/∂p`.

use nalgebra::{DMatrix, DVector};

use crate::error::{MagnoError, Result};
use crate::geometry::{
    exterior_derivative_one_form, MatrixField, OneFormSection, PhasePoint, ScalarField, SmoothMap,
    TangentPhaseVector, TwoFormField,
};
use crate::linalg;

/// A map `T*Q → T*Q` acting on stacked `(q, p)` vectors.
pub type PhaseMap = SmoothMap;

/// Scaling between the stored evaluation matrix 𝔅 and the matrix 𝔅̃ used
/// by the printed coordinate formula `dp = −∂H/∂q − 𝔅̃ ∂H/∂p`.
///
/// Fixed by requiring agreement with the linear solve.
pub const FORMULA_B_SCALE: f64 = -1.0;

/// Relative residual accepted from the dense solves.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum HamiltonianSpec {
    /// `H = ½ pᵀ G(q)⁻¹ p + V(q)`.
    Quadratic {
        mass: MatrixField,
        potential: ScalarField,
    },
    /// An arbitrary function of the stacked `(q, p)` vector.
    General { n: usize, h: ScalarField },
}

impl HamiltonianSpec {
    pub fn free_particle(n: usize) -> Self {
        HamiltonianSpec::Quadratic {
            mass: MatrixField::constant("G", n, DMatrix::identity(n, n)),
            potential: ScalarField::zero(n),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HamiltonianSpec::Quadratic { mass, .. } => mass.dim,
            HamiltonianSpec::General { n, .. } => *n,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, HamiltonianSpec::Quadratic { .. })
    }

    /// Cholesky factor-based inverse of `G(q)`.
    pub fn mass_inverse(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            HamiltonianSpec::Quadratic { mass, .. } => {
                let g = mass.value(q)?;
                let chol = g
                    .cholesky()
                    .ok_or_else(|| MagnoError::NotPositiveDefinite {
                        q: q.iter().copied().collect(),
                    })?;
                Ok(chol.inverse())
            }
            HamiltonianSpec::General { .. } => Err(MagnoError::InvalidArgument(
                "mass matrix requested for a general Hamiltonian".into(),
            )),
        }
    }

    fn split(z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = z.len() / 2;
        (z.rows(0, n).into_owned(), z.rows(n, n).into_owned())
    }

    pub fn value(&self, z: &DVector<f64>) -> Result<f64> {
        match self {
            HamiltonianSpec::Quadratic { potential, .. } => {
                let (q, p) = Self::split(z);
                let ginv = self.mass_inverse(&q)?;
                Ok(0.5 * p.dot(&(ginv * &p)) + potential.value(&q)?)
            }
            HamiltonianSpec::General { h, .. } => h.value(z),
        }
    }

    /// `∇H = (∂H/∂q, ∂H/∂p)` as a stacked vector.
    pub fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            HamiltonianSpec::Quadratic { mass, potential } => {
                let n = mass.dim;
                let (q, p) = Self::split(z);
                let ginv = self.mass_inverse(&q)?;
                let v = &ginv * &p;
                let dg = mass.partials(&q)?;
                let dv = potential.gradient(&q)?;
                let mut out = DVector::zeros(2 * n);
                for j in 0..n {
                    out[j] = -0.5 * v.dot(&(&dg[j] * &v)) + dv[j];
                }
                out.rows_mut(n, n).copy_from(&v);
                Ok(out)
            }
            HamiltonianSpec::General { h, .. } => h.gradient(z),
        }
    }
}

/// The magnetic term of the symplectic form.
#[derive(Clone, Debug)]
pub struct MagneticStructure {
    pub b_field: TwoFormField,
}

impl MagneticStructure {
    pub fn new(b_field: TwoFormField) -> Self {
        MagneticStructure { b_field }
    }

    pub fn canonical(n: usize) -> Self {
        MagneticStructure::new(TwoFormField::zero(n))
    }

    pub fn dim(&self) -> usize {
        self.b_field.dim()
    }

    /// The `2n × 2n` matrix of `ω^B` at base point `q`.
    pub fn omega(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let b = self.b_field.eval(q)?;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(-b));
        for i in 0..n {
            m[(i, n + i)] = 1.0;
            m[(n + i, i)] = -1.0;
        }
        Ok(m)
    }

    pub fn pair(&self, q: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(u.dot(&(self.omega(q)? * v)))
    }

    /// Solve `i_X ω^B = df` for the given stacked gradient `df` at base `q`.
    pub fn hamiltonian_vector(
        &self,
        q: &DVector<f64>,
        grad: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let omega_t = self.omega(q)?.transpose();
        let x = linalg::solve_square(&omega_t, grad).ok_or_else(|| MagnoError::DegenerateForm {
            detail: format!("ω^B singular at q = {:?}", q.as_slice()),
        })?;
        let residual = (&omega_t * &x - grad).norm();
        if residual > SOLVE_TOL * (1.0 + grad.norm()) {
            return Err(MagnoError::DegenerateForm {
                detail: format!("solve residual {residual:.3e} too large"),
            });
        }
        Ok(x)
    }
}

pub(crate) fn base_of(z: &DVector<f64>) -> DVector<f64> {
    z.rows(0, z.len() / 2).into_owned()
}

/// `X^B_H(z)` as a stacked vector.
pub fn magnetic_field_at(
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let grad = h.gradient(z)?;
    w.hamiltonian_vector(&base_of(z), &grad)
}

/// The magnetic Hamiltonian vector field by dense linear solve.
pub fn magnetic_vector_field(
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &PhasePoint,
) -> Result<TangentPhaseVector> {
    Ok(TangentPhaseVector::from_stacked(&magnetic_field_at(
        h,
        w,
        &z.stacked(),
    )?))
}

/// The printed coordinate expression `(∂H/∂p, −∂H/∂q − 𝔅̃ ∂H/∂p)`.
pub fn coordinate_formula_field(
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &PhasePoint,
) -> Result<TangentPhaseVector> {
    let n = z.dim();
    let grad = h.gradient(&z.stacked())?;
    let dh_dq = grad.rows(0, n).into_owned();
    let dh_dp = grad.rows(n, n).into_owned();
    let b_tilde = w.b_field.eval(&z.q)? * FORMULA_B_SCALE;
    Ok(TangentPhaseVector {
        dp: -dh_dq - b_tilde * &dh_dp,
        dq: dh_dp,
    })
}

/// `‖Jᵀ Ω^B(ε(z)) J − Ω^B(z)‖_F`; zero iff `ε*ω^B = ω^B` at `z`.
pub fn check_symplectic_map(
    eps: &PhaseMap,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<f64> {
    let j = eps.jacobian(z)?;
    let ez = eps.eval(z)?;
    let lhs = j.transpose() * w.omega(&base_of(&ez))? * &j;
    Ok((lhs - w.omega(&base_of(z))?).norm())
}

/// `dH(X^B_H)` at `z`, which vanishes by antisymmetry of `ω^B`.
pub fn energy_derivative(
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &PhasePoint,
) -> Result<f64> {
    let zs = z.stacked();
    let grad = h.gradient(&zs)?;
    Ok(grad.dot(&w.hamiltonian_vector(&z.q, &grad)?))
}

/// `Tλ·v = (v_q, J v_q)` for `λ = γ∘π_Q`, with `J` the Jacobian of `γ` at `q`.
pub fn t_lambda(
    gamma: &OneFormSection,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = q.len();
    let vq = v.rows(0, n).into_owned();
    let jv = gamma.jacobian(q)? * &vq;
    Ok(crate::geometry::stack(&vq, &jv))
}

fn closedness_pairing(
    gamma: &OneFormSection,
    w: &MagneticStructure,
    q: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let n = q.len();
    let m = exterior_derivative_one_form(gamma, q)? + w.b_field.eval(q)?;
    Ok(v.rows(0, n).dot(&(m * u.rows(0, n))))
}

/// `ω^B(Tλ v, Tλ u) + (dγ + B)(Tπ v, Tπ u)`; vanishes identically.
pub fn lemma_identity_i(
    gamma: &OneFormSection,
    w: &MagneticStructure,
    q: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let tv = t_lambda(gamma, q, v)?;
    let tu = t_lambda(gamma, q, u)?;
    Ok(w.pair(q, &tv, &tu)? + closedness_pairing(gamma, w, q, v, u)?)
}

/// `ω^B(Tλ v, u) − ω^B(v, u − Tλ u) + (dγ + B)(Tπ v, Tπ u)`; vanishes
/// identically.
pub fn lemma_identity_ii(
    gamma: &OneFormSection,
    w: &MagneticStructure,
    q: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let tv = t_lambda(gamma, q, v)?;
    let tu = t_lambda(gamma, q, u)?;
    Ok(w.pair(q, &tv, u)? - w.pair(q, v, &(u - tu))? + closedness_pairing(gamma, w, q, v, u)?)
}
