//! Reduction of a constrained magnetic system by translations of cyclic
//! coordinates.
//!
//! The quotient drops the cyclic `q` coordinates and keeps every momentum.
//! Reduced tangent vectors are full tangent vectors with the cyclic `dq`
//! rows deleted (the matrix [`TranslationSymmetry::projector`]).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MagnoError, Result};
use crate::geometry::{stack, OneFormSection};
use crate::hj::{
    image_residuals, judge_pair, max_of, tighter, type_one_premises, type_one_report,
    type_two_points, type_two_report, HjReport, Hypothesis, TypeOneSample, TypeTwoSample,
};
use crate::linalg::{self, column_span, null_space, pinv, vstack};
use crate::magnetic::{
    base_of, check_symplectic_map, magnetic_field_at, t_lambda, HamiltonianSpec, MagneticStructure,
    PhaseMap,
};
use crate::nonholonomic::{constraint_geometry, restricted_field_stacked, ConstraintDistribution};
use crate::tolerance::Tolerances;

/// Translations along the listed (zero-based) coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationSymmetry {
    pub cyclic: Vec<usize>,
}

impl TranslationSymmetry {
    pub fn new(mut cyclic: Vec<usize>) -> Self {
        cyclic.sort_unstable();
        cyclic.dedup();
        TranslationSymmetry { cyclic }
    }

    pub fn group_dim(&self) -> usize {
        self.cyclic.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.cyclic.is_empty()
    }

    /// Infinitesimal generators `(e_i, 0)` as columns of a `2n × m` matrix.
    pub fn generators(&self, n: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(2 * n, self.cyclic.len());
        for (j, &i) in self.cyclic.iter().enumerate() {
            g[(i, j)] = 1.0;
        }
        g
    }

    /// `Tπ_/G`: the `(2n − m) × 2n` matrix deleting cyclic `dq` rows.
    pub fn projector(&self, n: usize) -> DMatrix<f64> {
        let keep: Vec<usize> = (0..2 * n).filter(|i| !self.cyclic.contains(i)).collect();
        let mut p = DMatrix::zeros(keep.len(), 2 * n);
        for (r, &c) in keep.iter().enumerate() {
            p[(r, c)] = 1.0;
        }
        p
    }

    /// `π_/G(z)`.
    pub fn reduce_point(&self, z: &DVector<f64>) -> DVector<f64> {
        self.projector(z.len() / 2) * z
    }

    /// The point of `T*Q` over `z̄` with cyclic coordinates set to `values`.
    pub fn lift(&self, zbar: &DVector<f64>, values: &[f64]) -> DVector<f64> {
        let n = (zbar.len() + self.cyclic.len()) / 2;
        let mut z = DVector::zeros(2 * n);
        let mut src = 0;
        for i in 0..2 * n {
            if let Some(pos) = self.cyclic.iter().position(|&c| c == i) {
                z[i] = values.get(pos).copied().unwrap_or(0.0);
            } else {
                z[i] = zbar[src];
                src += 1;
            }
        }
        z
    }

    /// `z` translated by `t` along the cyclic coordinates.
    pub fn act(&self, z: &DVector<f64>, t: &[f64]) -> DVector<f64> {
        let mut out = z.clone();
        for (&i, &s) in self.cyclic.iter().zip(t) {
            out[i] += s;
        }
        out
    }
}

/// Largest derivative of `H`, `A` and `𝔅` along the cyclic coordinates.
pub fn invariance_residual(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    points: &[DVector<f64>],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for z in points {
        let q = base_of(z);
        let grad = h.gradient(z)?;
        let da = d.forms.partials(&q)?;
        let db = w.b_field.partials(&q)?;
        for &c in &sym.cyclic {
            worst = worst.max(grad[c].abs());
            worst = worst.max(linalg::max_abs(&da[c]));
            worst = worst.max(linalg::max_abs(&db[c]));
        }
    }
    Ok(worst)
}

/// Largest `|∂γ/∂q_c|` over cyclic `c`.
pub fn gamma_invariance_residual(
    gamma: &OneFormSection,
    sym: &TranslationSymmetry,
    samples: &[DVector<f64>],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for q in samples {
        let j = gamma.jacobian(q)?;
        for &c in &sym.cyclic {
            worst = worst.max(j.column(c).amax());
        }
    }
    Ok(worst)
}

/// Largest deviation of `∂ε/∂q_c` from the generator `(e_c, 0)`.
pub fn epsilon_invariance_residual(
    eps: &PhaseMap,
    sym: &TranslationSymmetry,
    points: &[DVector<f64>],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for z in points {
        let n = z.len() / 2;
        let j = eps.jacobian(z)?;
        let gens = sym.generators(n);
        for (k, &c) in sym.cyclic.iter().enumerate() {
            worst = worst.max((j.column(c) - gens.column(k)).amax());
        }
    }
    Ok(worst)
}

/// Orthonormal basis of `V ∩ K` at `z`.
pub fn build_vertical_v(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    z: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = z.len() / 2;
    let gens = sym.generators(n);
    if gens.ncols() == 0 {
        return Ok(gens);
    }
    let q = base_of(z);
    let k_conditions = vstack(&d.f_matrix(&q)?, &d.m_jacobian(h, z)?);
    Ok(&gens * null_space(&(k_conditions * &gens)))
}

/// Orthonormal basis of `U = {u ∈ K : ω^B(u, v) = 0 for v ∈ V ∩ K}`.
pub fn build_u(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let k_basis = constraint_geometry(d, h, z)?.k_basis;
    let v = build_vertical_v(sym, d, h, z)?;
    if v.ncols() == 0 {
        return Ok(k_basis);
    }
    let omega = w.omega(&base_of(z))?;
    let conditions = v.transpose() * omega.transpose() * &k_basis;
    Ok(&k_basis * null_space(&conditions))
}

/// Reduced constraint data at a lift `z` of a reduced point.
#[derive(Debug, Clone)]
pub struct ReducedGeometry {
    pub v_basis: DMatrix<f64>,
    pub u_basis: DMatrix<f64>,
    /// Orthonormal basis of `K̄ = Tπ_/G(U)` in reduced coordinates.
    pub kbar_basis: DMatrix<f64>,
    /// Lifts of the `K̄` basis into `U`.
    pub lifts: DMatrix<f64>,
    /// `ω^B_K̄` in the `K̄` basis.
    pub omega_bar: DMatrix<f64>,
    pub sigma_min: f64,
    /// `X^B_K̄` in reduced coordinates.
    pub field: DVector<f64>,
    /// `h_M̄`, the Hamiltonian at the point.
    pub energy: f64,
    /// `dh(X^B_K̄)`.
    pub energy_rate: f64,
}

impl ReducedGeometry {
    /// `W̄ Ω̄ W̄ᵀ`, independent of the chosen `K̄` basis.
    pub fn omega_bar_ambient(&self) -> DMatrix<f64> {
        &self.kbar_basis * &self.omega_bar * self.kbar_basis.transpose()
    }

    /// `τ_K̄(u)`: the element `k̄ ∈ K̄` with `ω^B_K̄(k̄, ·) = ω^B(u, lift(·))`.
    pub fn project(&self, omega: &DMatrix<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = self.lifts.transpose() * omega.transpose() * u;
        let alpha = linalg::solve_square(&self.omega_bar.transpose(), &rhs)
            .ok_or_else(|| degenerate(self.sigma_min))?;
        Ok(&self.kbar_basis * alpha)
    }
}

fn degenerate(sigma: f64) -> MagnoError {
    MagnoError::DegenerateForm {
        detail: format!("reduced two-form singular (σ_min = {sigma:.3e})"),
    }
}

pub fn reduced_geometry(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<ReducedGeometry> {
    let n = z.len() / 2;
    let v_basis = build_vertical_v(sym, d, h, z)?;
    let u_basis = build_u(sym, d, h, w, z)?;
    let p = sym.projector(n);
    let pu = &p * &u_basis;
    let kbar_basis = column_span(&pu);
    let lifts = &u_basis * pinv(&pu) * &kbar_basis;
    let omega = w.omega(&base_of(z))?;
    let omega_bar = lifts.transpose() * &omega * &lifts;
    let sigma_min = if omega_bar.nrows() == 0 {
        f64::INFINITY
    } else {
        linalg::smallest_singular_value(&omega_bar)
    };
    let grad = h.gradient(z)?;
    let dh = lifts.transpose() * &grad;
    let xi =
        linalg::solve_square(&omega_bar.transpose(), &dh).ok_or_else(|| degenerate(sigma_min))?;
    let field = &kbar_basis * &xi;
    let energy_rate = dh.dot(&xi);
    Ok(ReducedGeometry {
        v_basis,
        u_basis,
        kbar_basis,
        lifts,
        omega_bar,
        sigma_min,
        field,
        energy: h.value(z)?,
        energy_rate,
    })
}

/// `X^B_K̄(z̄)` computed at the lift of `z̄` with cyclic values `lift_values`.
pub fn reduced_field(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    zbar: &DVector<f64>,
    lift_values: &[f64],
) -> Result<DVector<f64>> {
    Ok(reduced_geometry(sym, d, h, w, &sym.lift(zbar, lift_values))?.field)
}

/// Max `‖Tπ_/G X^B_K(z) − X^B_K̄(π_/G z)‖` over the points.
pub fn check_related(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    points: &[DVector<f64>],
) -> Result<f64> {
    let residuals = points
        .par_iter()
        .map(|z| {
            let full = restricted_field_stacked(d, h, w, z)?;
            let red = reduced_geometry(sym, d, h, w, z)?;
            Ok((sym.projector(z.len() / 2) * full - red.field).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(max_of(residuals.into_iter()))
}

/// Discrepancies between two lifts of the same reduced point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftDiscrepancy {
    pub field: f64,
    pub omega: f64,
    pub energy: f64,
}

impl LiftDiscrepancy {
    pub fn max(&self) -> f64 {
        self.field.max(self.omega).max(self.energy)
    }
}

/// Compare reduced quantities at `z` and at `z` translated by `shift`.
pub fn lift_discrepancy(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
    shift: &[f64],
) -> Result<LiftDiscrepancy> {
    let a = reduced_geometry(sym, d, h, w, z)?;
    let b = reduced_geometry(sym, d, h, w, &sym.act(z, shift))?;
    Ok(LiftDiscrepancy {
        field: (&a.field - &b.field).norm(),
        omega: (a.omega_bar_ambient() - b.omega_bar_ambient()).norm(),
        energy: (a.energy - b.energy).abs(),
    })
}

fn symmetry_hypotheses(
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    points: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<Hypothesis> {
    Ok(Hypothesis::new(
        "invariance",
        invariance_residual(sym, d, h, w, points)?,
        tol.invariance,
    ))
}

/// Type I for the reduced system: `Tγ̄·X^γ = X^B_K̄∘γ̄`.
pub fn hj_type1_reduced(
    gamma: &OneFormSection,
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    samples: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<HjReport> {
    let per_sample = samples
        .par_iter()
        .map(|q| {
            let (z, in_m, in_k) = image_residuals(gamma, h, d, q)?;
            let basis = d.d_basis(q)?;
            let (closedness, energy) = type_one_premises(gamma, h, w, q, &z, &basis)?;
            let red = reduced_geometry(sym, d, h, w, &z)?;
            let xh = magnetic_field_at(h, w, &z)?;
            let lifted = t_lambda(gamma, q, &xh)?;
            let equation = (sym.projector(q.len()) * lifted - &red.field).norm();
            Ok((
                z,
                TypeOneSample {
                    closedness,
                    energy,
                    equation,
                },
                in_m,
                in_k,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<DVector<f64>> = per_sample.iter().map(|s| s.0.clone()).collect();
    let extra = vec![
        symmetry_hypotheses(sym, d, h, w, &points, tol)?,
        Hypothesis::new(
            "gamma_invariant",
            gamma_invariance_residual(gamma, sym, samples)?,
            tol.invariance,
        ),
        Hypothesis::new(
            "image_in_M",
            max_of(per_sample.iter().map(|s| s.2)),
            tol.membership,
        ),
        Hypothesis::new(
            "image_in_K",
            max_of(per_sample.iter().map(|s| s.3)),
            tol.membership,
        ),
    ];
    let rows = per_sample.into_iter().map(|s| s.1).collect();
    Ok(type_one_report("hj1_reduced", samples, rows, extra, tol))
}

/// Reduced Type II residuals at `z`.
pub fn reduced_type_two_residuals(
    gamma: &OneFormSection,
    eps: &PhaseMap,
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<TypeTwoSample> {
    let n = z.len() / 2;
    let p = sym.projector(n);
    let ez = eps.eval(z)?;
    let je = eps.jacobian(z)?;
    let grad_comp = je.transpose() * h.gradient(&ez)?;
    let x_comp = w.hamiltonian_vector(&base_of(z), &grad_comp)?;
    let pushed = &je * x_comp;
    let red = reduced_geometry(sym, d, h, w, &ez)?;
    let omega = w.omega(&base_of(&ez))?;
    let projected = red.project(&omega, &pushed)?;
    let xh_e = magnetic_field_at(h, w, &ez)?;
    let lifted = &p * t_lambda(gamma, &base_of(&ez), &xh_e)?;
    Ok(TypeTwoSample {
        residual_a: (projected - &lifted).norm(),
        residual_b: (lifted - &red.field).norm(),
        symplectic: check_symplectic_map(eps, w, z)?,
    })
}

/// Type II for the reduced system: status agreement sample by sample.
#[allow(clippy::too_many_arguments)]
pub fn hj_type2_reduced(
    gamma: &OneFormSection,
    eps: &PhaseMap,
    sym: &TranslationSymmetry,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    samples: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<HjReport> {
    let points = type_two_points(gamma, eps, Some(d), h, samples)?;
    let judged = points
        .par_iter()
        .map(|z| {
            let first = reduced_type_two_residuals(gamma, eps, sym, d, h, w, z)?;
            judge_pair(
                first,
                || reduced_type_two_residuals(&tighter(gamma), &tighter(eps), sym, d, h, w, z),
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let images = samples
        .iter()
        .map(|q| image_residuals(gamma, h, d, q))
        .collect::<Result<Vec<_>>>()?;
    let hyps = vec![
        symmetry_hypotheses(sym, d, h, w, &points, tol)?,
        Hypothesis::new(
            "epsilon_invariant",
            epsilon_invariance_residual(eps, sym, &points)?,
            tol.invariance,
        ),
        Hypothesis::new(
            "image_in_M",
            max_of(images.iter().map(|s| s.1)),
            tol.membership,
        ),
        Hypothesis::new(
            "image_in_K",
            max_of(images.iter().map(|s| s.2)),
            tol.membership,
        ),
    ];
    Ok(type_two_report("hj2_reduced", &points, judged, hyps, tol))
}

/// Points of `M` above the configuration samples, with momenta from `momenta`.
pub fn points_on_m(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    qs: &[DVector<f64>],
    momenta: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    qs.iter()
        .zip(momenta)
        .map(|(q, p)| crate::nonholonomic::project_stacked(d, h, &stack(q, p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MatrixField, TwoFormField};

    fn nh_particle() -> (ConstraintDistribution, HamiltonianSpec) {
        let forms = MatrixField::new("A", 3, 1, 3, |q| {
            DMatrix::from_row_slice(1, 3, &[0.0, -q[0], 1.0])
        })
        .with_partials(|_| {
            vec![
                DMatrix::from_row_slice(1, 3, &[0.0, -1.0, 0.0]),
                DMatrix::zeros(1, 3),
                DMatrix::zeros(1, 3),
            ]
        });
        (
            ConstraintDistribution::new(forms),
            HamiltonianSpec::free_particle(3),
        )
    }

    #[test]
    fn projector_and_lift_round_trip() {
        let sym = TranslationSymmetry::new(vec![1]);
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let zbar = sym.reduce_point(&z);
        assert_eq!(zbar.as_slice(), &[1.0, 3.0, 4.0]);
        assert_eq!(sym.lift(&zbar, &[2.0]), z);
    }

    #[test]
    fn unconstrained_one_cyclic_coordinate() {
        let d = ConstraintDistribution::unconstrained(2);
        let h = HamiltonianSpec::free_particle(2);
        let w = MagneticStructure::canonical(2);
        let sym = TranslationSymmetry::new(vec![0]);
        let z = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.7]);
        assert_eq!(build_vertical_v(&sym, &d, &h, &z).unwrap().ncols(), 1);
        assert_eq!(build_u(&sym, &d, &h, &w, &z).unwrap().ncols(), 3);
        let red = reduced_geometry(&sym, &d, &h, &w, &z).unwrap();
        // Cyclic elimination: (q2, p1, p2) evolve as (p2, 0, 0).
        assert!((&red.field - DVector::from_vec(vec![0.7, 0.0, 0.0])).norm() < 1e-12);
        assert!(check_related(&sym, &d, &h, &w, &[z]).unwrap() < 1e-10);
    }

    #[test]
    fn no_cyclic_indices_gives_empty_vertical() {
        let (d, h) = nh_particle();
        let sym = TranslationSymmetry::new(vec![]);
        let z = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(build_vertical_v(&sym, &d, &h, &z).unwrap().ncols(), 0);
    }

    #[test]
    fn nonholonomic_particle_reduction_is_lift_independent() {
        let (d, h) = nh_particle();
        let w = MagneticStructure::new(TwoFormField::constant(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )));
        let sym = TranslationSymmetry::new(vec![1, 2]);
        let z = points_on_m(
            &d,
            &h,
            &[DVector::from_vec(vec![0.4, 0.1, -0.2])],
            &[DVector::from_vec(vec![0.5, 0.3, -0.4])],
        )
        .unwrap()
        .remove(0);
        let red = reduced_geometry(&sym, &d, &h, &w, &z).unwrap();
        assert!(red.sigma_min > 1e-8);
        assert!(red.energy_rate.abs() < 1e-10);
        let disc = lift_discrepancy(&sym, &d, &h, &w, &z, &[1.3, -0.7]).unwrap();
        assert!(disc.max() < 1e-10, "{disc:?}");
        assert!(check_related(&sym, &d, &h, &w, &[z]).unwrap() < 1e-8);
    }
}
