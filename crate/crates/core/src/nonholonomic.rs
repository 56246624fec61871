//! Constraint geometry `D`, `M`, `F`, `K` and the distributional magnetic
//! Hamiltonian field `X^B_K`.
//!
//! `D_q = ker A(q)`. For quadratic Hamiltonians the constraint submanifold
//! is `M = {A(q) G(q)⁻¹ p = 0}`; general Hamiltonians supply the residual
//! `c(q, p)` explicitly. `F = {u : A u_q = 0}` and `K = F ∩ T_zM`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MagnoError, Result};
use crate::geometry::{MatrixField, OneFormSection, PhasePoint, SmoothMap, TangentPhaseVector};
use crate::linalg::{self, hstack, null_space, vstack};
use crate::magnetic::{base_of, magnetic_field_at, HamiltonianSpec, MagneticStructure};

const PROJECTION_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Clone, Debug)]
pub struct ConstraintDistribution {
    pub n: usize,
    pub k: usize,
    /// `k × n` matrix field whose rows are the constraint one-forms.
    pub forms: MatrixField,
    /// Explicit `c(q, p)` with `M = {c = 0}`, required for general `H`.
    pub momentum_residual: Option<SmoothMap>,
}

impl ConstraintDistribution {
    pub fn new(forms: MatrixField) -> Self {
        ConstraintDistribution {
            n: forms.cols,
            k: forms.rows,
            forms,
            momentum_residual: None,
        }
    }

    pub fn unconstrained(n: usize) -> Self {
        Self::new(MatrixField::constant("A", n, DMatrix::zeros(0, n)))
    }

    pub fn with_momentum_residual(mut self, c: SmoothMap) -> Self {
        self.momentum_residual = Some(c);
        self
    }

    pub fn is_unconstrained(&self) -> bool {
        self.k == 0
    }

    pub fn a(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.forms.value(q)
    }

    /// Orthonormal basis of `D_q`, or an error when `A(q)` is rank deficient.
    pub fn d_basis(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let a = self.a(q)?;
        let r = linalg::rank(&a);
        if r < self.k {
            return Err(MagnoError::DegenerateConstraint {
                rank: r,
                expected: self.k,
            });
        }
        Ok(null_space(&a))
    }

    /// `c(z)`, whose zero set is `M`.
    pub fn m_residual(&self, h: &HamiltonianSpec, z: &DVector<f64>) -> Result<DVector<f64>> {
        if self.k == 0 {
            return Ok(DVector::zeros(0));
        }
        if let Some(c) = &self.momentum_residual {
            return c.eval(z);
        }
        let q = base_of(z);
        let p = z.rows(self.n, self.n).into_owned();
        Ok(self.a(&q)? * h.mass_inverse(&q)? * p)
    }

    /// `Dc(z)`, the `k × 2n` Jacobian of the residual.
    pub fn m_jacobian(&self, h: &HamiltonianSpec, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n;
        if self.k == 0 {
            return Ok(DMatrix::zeros(0, 2 * n));
        }
        if let Some(c) = &self.momentum_residual {
            return c.jacobian(z);
        }
        let HamiltonianSpec::Quadratic { mass, .. } = h else {
            return Err(MagnoError::InvalidArgument(
                "constraints on a general Hamiltonian need explicit momentum_constraints".into(),
            ));
        };
        let q = base_of(z);
        let p = z.rows(n, n).into_owned();
        let a = self.a(&q)?;
        let ginv = h.mass_inverse(&q)?;
        let v = &ginv * &p;
        let da = self.forms.partials(&q)?;
        let dg = mass.partials(&q)?;
        let agi = &a * &ginv;
        let mut out = DMatrix::zeros(self.k, 2 * n);
        for j in 0..n {
            let col = &da[j] * &v - &agi * (&dg[j] * &v);
            out.set_column(j, &col);
        }
        out.view_mut((0, n), (self.k, n)).copy_from(&agi);
        Ok(out)
    }

    /// The `k × 2n` matrix `[A(q) | 0]` whose kernel is `F`.
    pub fn f_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let a = self.a(q)?;
        Ok(hstack(&a, &DMatrix::zeros(self.k, self.n)))
    }
}

/// Constraint data at a single phase point.
#[derive(Clone, Debug)]
pub struct ConstraintGeometry {
    pub a: DMatrix<f64>,
    pub d_basis: DMatrix<f64>,
    pub dc: DMatrix<f64>,
    pub k_basis: DMatrix<f64>,
}

pub fn constraint_geometry(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    z: &DVector<f64>,
) -> Result<ConstraintGeometry> {
    let q = base_of(z);
    let a = d.a(&q)?;
    let d_basis = d.d_basis(&q)?;
    let dc = d.m_jacobian(h, z)?;
    let k_basis = null_space(&vstack(&d.f_matrix(&q)?, &dc));
    Ok(ConstraintGeometry {
        a,
        d_basis,
        dc,
        k_basis,
    })
}

/// Move `p` the least distance (in the `G⁻¹` metric) onto `M`, keeping `q`.
pub fn project_to_m(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    z: &PhasePoint,
) -> Result<PhasePoint> {
    Ok(PhasePoint::from_stacked(&project_stacked(
        d,
        h,
        &z.stacked(),
    )?))
}

pub(crate) fn project_stacked(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = d.n;
    if d.k == 0 {
        return Ok(z.clone());
    }
    let q = base_of(z);
    let a = d.a(&q)?;
    let r = linalg::rank(&a);
    if r < d.k {
        return Err(MagnoError::DegenerateConstraint {
            rank: r,
            expected: d.k,
        });
    }
    let mut out = z.clone();
    if d.momentum_residual.is_none() {
        let p = z.rows(n, n).into_owned();
        let ginv = h.mass_inverse(&q)?;
        let agi = &a * &ginv;
        let s = &agi * a.transpose();
        let mu =
            linalg::solve_square(&s, &(-(&agi * &p))).ok_or(MagnoError::DegenerateConstraint {
                rank: linalg::rank(&s),
                expected: d.k,
            })?;
        out.rows_mut(n, n).copy_from(&(p + a.transpose() * mu));
        return Ok(out);
    }
    // Explicit residual: minimum-norm Newton steps in p.
    for _ in 0..NEWTON_MAX_ITER {
        let c = d.m_residual(h, &out)?;
        if c.amax() <= PROJECTION_TOL {
            return Ok(out);
        }
        let jp = d.m_jacobian(h, &out)?.columns(n, n).into_owned();
        let step = linalg::lstsq(&jp, &(-c));
        let mut p = out.rows(n, n).into_owned();
        p += step;
        out.rows_mut(n, n).copy_from(&p);
    }
    let c = d.m_residual(h, &out)?;
    if c.amax() <= 1e3 * PROJECTION_TOL {
        Ok(out)
    } else {
        Err(MagnoError::domain(format!(
            "projection onto M did not converge (residual {:.3e})",
            c.amax()
        )))
    }
}

/// Orthonormal basis of `K = F ∩ T_zM`; the identity when unconstrained.
pub fn k_basis_at(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    z: &PhasePoint,
) -> Result<DMatrix<f64>> {
    Ok(constraint_geometry(d, h, &z.stacked())?.k_basis)
}

/// Distance of `u` from the span of the orthonormal columns of `basis`,
/// relative to `max(1, ‖u‖)`.
pub fn membership_residual(basis: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    let proj = basis * (basis.transpose() * u);
    (u - proj).norm() / u.norm().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub k: usize,
    pub rank_a: usize,
    pub dim_f: usize,
    pub dim_tm: usize,
    pub dim_k: usize,
    pub dim_f_perp: usize,
    /// Dimension of `T_zM ∩ F^⊥`; the condition asks for zero.
    pub intersection_dim: usize,
    pub sigma_min: f64,
    pub pass: bool,
    pub detail: String,
}

/// Test `T_zM ∩ F^⊥ = {0}` and the non-degeneracy of `ω^B` on `K`.
pub fn check_compatibility(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &PhasePoint,
    sigma_tol: f64,
) -> Result<CompatibilityReport> {
    let zs = z.stacked();
    let q = &z.q;
    let a = d.a(q)?;
    let rank_a = linalg::rank(&a);
    let fm = d.f_matrix(q)?;
    let dc = d.m_jacobian(h, &zs)?;
    let omega = w.omega(q)?;

    let f_basis = null_space(&fm);
    let tm_basis = null_space(&dc);
    let k_basis = null_space(&vstack(&fm, &dc));
    // F^⊥ = {u : ω(u, f) = 0 for all f ∈ F} = ker (Ω F)ᵀ.
    let f_perp = null_space(&(&omega * &f_basis).transpose());
    let joint = hstack(&tm_basis, &f_perp);
    let intersection_dim = tm_basis.ncols() + f_perp.ncols() - linalg::rank(&joint);

    let restricted = k_basis.transpose() * &omega * &k_basis;
    let sigma_min = if k_basis.ncols() == 0 {
        f64::INFINITY
    } else {
        linalg::smallest_singular_value(&restricted)
    };

    let mut problems = Vec::new();
    if rank_a < d.k {
        problems.push(format!("constraint matrix has rank {rank_a} < {}", d.k));
    }
    if intersection_dim > 0 {
        problems.push(format!("TM ∩ F^⊥ has dimension {intersection_dim}"));
    }
    if !(sigma_min > sigma_tol) {
        problems.push(format!("σ_min(ω^B_K) = {sigma_min:.3e} ≤ {sigma_tol:.1e}"));
    }
    Ok(CompatibilityReport {
        k: d.k,
        rank_a,
        dim_f: f_basis.ncols(),
        dim_tm: tm_basis.ncols(),
        dim_k: k_basis.ncols(),
        dim_f_perp: f_perp.ncols(),
        intersection_dim,
        sigma_min,
        pass: problems.is_empty(),
        detail: problems.join("; "),
    })
}

/// `X^B_K` together with the constraint-force multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionalField {
    pub field: TangentPhaseVector,
    pub multipliers: DVector<f64>,
}

/// Constraint-force generators `Z_a = (0, μ^a)` as columns of a `2n × k`
/// matrix.
fn force_generators(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    vstack(&DMatrix::zeros(n, a.nrows()), &a.transpose())
}

/// Solve `i_X ω^B_K = dH_K` on a basis of `K`.
pub(crate) fn restricted_solve(
    omega: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    grad: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = basis.transpose() * omega * basis;
    let rhs = basis.transpose() * grad;
    let xi =
        linalg::solve_square(&s.transpose(), &rhs).ok_or_else(|| MagnoError::DegenerateForm {
            detail: format!(
                "restricted two-form singular (σ_min = {:.3e})",
                linalg::smallest_singular_value(&s)
            ),
        })?;
    Ok(basis * xi)
}

pub(crate) fn restricted_field_stacked(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let q = base_of(z);
    let omega = w.omega(&q)?;
    let grad = h.gradient(z)?;
    if d.k == 0 {
        return w.hamiltonian_vector(&q, &grad);
    }
    let geo = constraint_geometry(d, h, z)?;
    restricted_solve(&omega, &geo.k_basis, &grad)
}

/// `X^B_K` by restricting `ω^B` to a basis of `K`.
pub fn distributional_field_restricted(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &PhasePoint,
) -> Result<DistributionalField> {
    let zs = z.stacked();
    let x = restricted_field_stacked(d, h, w, &zs)?;
    // Recover the multipliers from Ω^Bᵀ X − ∇H = −(Aᵀλ, 0).
    let multipliers = if d.k == 0 {
        DVector::zeros(0)
    } else {
        let defect = w.omega(&z.q)?.transpose() * &x - h.gradient(&zs)?;
        let a = d.a(&z.q)?;
        let top = defect.rows(0, d.n).into_owned();
        linalg::lstsq(&a.transpose(), &(-top))
    };
    Ok(DistributionalField {
        field: TangentPhaseVector::from_stacked(&x),
        multipliers,
    })
}

pub(crate) fn multiplier_field_stacked(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let xh = magnetic_field_at(h, w, z)?;
    if d.k == 0 {
        return Ok((xh, DVector::zeros(0)));
    }
    let q = base_of(z);
    let a = d.a(&q)?;
    let zgen = force_generators(&a, d.n);
    let dc = d.m_jacobian(h, z)?;
    let s = &dc * &zgen;
    let lambda =
        linalg::solve_square(&s, &(-(&dc * &xh))).ok_or(MagnoError::DegenerateConstraint {
            rank: linalg::rank(&s),
            expected: d.k,
        })?;
    Ok((xh + zgen * &lambda, lambda))
}

/// `X^B_K = X^B_H + Σ λ_a Z_a` with `λ` fixed by tangency to `M`.
///
/// Also defined off `M`, which the integrator relies on.
pub fn distributional_field_multiplier(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &PhasePoint,
) -> Result<DistributionalField> {
    let (x, lambda) = multiplier_field_stacked(d, h, w, &z.stacked())?;
    Ok(DistributionalField {
        field: TangentPhaseVector::from_stacked(&x),
        multipliers: lambda,
    })
}

/// The `ω^B`-compatible projection onto `K` (along `F^⊥`): the unique
/// `k ∈ K` with `ω^B(k, w) = ω^B(u, w)` for every `w ∈ K`.
///
/// It sends `X^B_H` to `X^B_K` on `M`.
pub fn tau_k(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if d.k == 0 {
        return Ok(u.clone());
    }
    let q = base_of(z);
    let omega = w.omega(&q)?;
    let geo = constraint_geometry(d, h, z)?;
    restricted_solve(&omega, &geo.k_basis, &(omega.transpose() * u))
}

/// Max `|A(q)·Tπ_Q X^B_H(γ(q))|` over the samples.
///
/// Fails with `ImageNotInM` when some `γ(q)` is off `M` by more than
/// `membership_tol`.
pub fn check_field_in_f_along_gamma(
    gamma: &OneFormSection,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    d: &ConstraintDistribution,
    samples: &[DVector<f64>],
    membership_tol: f64,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for q in samples {
        let z = crate::geometry::stack(q, &gamma.eval(q)?);
        let c = d.m_residual(h, &z)?;
        let res = c.amax_or_zero();
        if res > membership_tol {
            return Err(MagnoError::ImageNotInM {
                q: q.iter().copied().collect(),
                residual: res,
            });
        }
        let x = magnetic_field_at(h, w, &z)?;
        let xq = x.rows(0, d.n).into_owned();
        worst = worst.max((d.a(q)? * xq).amax_or_zero());
    }
    Ok(worst)
}

pub(crate) trait AmaxOrZero {
    fn amax_or_zero(&self) -> f64;
}

impl AmaxOrZero for DVector<f64> {
    fn amax_or_zero(&self) -> f64 {
        self.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}
