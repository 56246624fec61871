//! Hamilton-Jacobi checks of Type I and Type II, for the magnetic and the
//! distributional (constrained) systems.
//!
//! Every check returns an [`HjReport`]. A check whose premises fail
//! numerically reports `VACUOUS` and names the failing premise.
//!
//! The Type I premises include, besides `(dγ + B)|_D ≈ 0`, the condition
//! `d(H∘γ)|_D ≈ 0` (reported as `energy`). In coordinates the Type I defect
//! `Tγ·X^γ − X∘γ` equals `d(H∘γ)` once `dγ = −B` on `D`, so the closedness
//! premise alone does not make the equation hold.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MagnoError, Result};
use crate::geometry::{
    exterior_derivative_one_form, stack, MatrixField, OneFormSection, TwoFormField,
};
use crate::linalg::max_abs;
use crate::magnetic::{
    base_of, check_symplectic_map, magnetic_field_at, t_lambda, HamiltonianSpec, MagneticStructure,
    PhaseMap,
};
use crate::nonholonomic::{
    constraint_geometry, membership_residual, restricted_field_stacked, tau_k, AmaxOrZero,
    ConstraintDistribution,
};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

impl Verdict {
    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }

    /// Combine verdicts of sub-checks: any failure fails, then any pass
    /// passes.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Vacuous;
        for v in verdicts {
            match v {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Pass => out = Verdict::Pass,
                Verdict::Vacuous => {}
            }
        }
        out
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Vacuous => "VACUOUS",
        })
    }
}

/// One premise of a check, evaluated as a residual against a tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub holds: bool,
}

impl Hypothesis {
    pub fn new(name: &str, residual: f64, tol: f64) -> Self {
        Hypothesis {
            name: name.to_string(),
            residual,
            tol,
            holds: residual <= tol,
        }
    }
}

/// Zero/nonzero classification of a residual with a separation band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Zero,
    NonZero,
    Band,
}

pub fn classify(r: f64, tol: f64, band_factor: f64) -> Status {
    if r < tol {
        Status::Zero
    } else if r > band_factor * tol {
        Status::NonZero
    } else {
        Status::Band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub point: Vec<f64>,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjReport {
    pub check: String,
    pub verdict: Verdict,
    /// Max over samples of the closedness premise `(dγ + B)|_D`.
    pub hypothesis_residual: f64,
    pub hypotheses: Vec<Hypothesis>,
    pub equation_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternate_residual: Option<f64>,
    pub samples: Vec<SampleRecord>,
    pub defects: Vec<String>,
}

impl HjReport {
    pub fn failed_hypotheses(&self) -> Vec<&str> {
        self.hypotheses
            .iter()
            .filter(|h| !h.holds)
            .map(|h| h.name.as_str())
            .collect()
    }

    pub fn hypothesis(&self, name: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.name == name)
    }
}

pub(crate) fn defects_of(hyps: &[Hypothesis]) -> Vec<String> {
    hyps.iter()
        .filter(|h| !h.holds)
        .map(|h| {
            format!(
                "hypothesis `{}` fails: residual {:.3e} > {:.1e}",
                h.name, h.residual, h.tol
            )
        })
        .collect()
}

pub(crate) fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0_f64, f64::max)
}

/// Per-sample quantities of a Type I check.
pub(crate) struct TypeOneSample {
    pub closedness: f64,
    pub energy: f64,
    pub equation: f64,
}

/// `max |(dγ + B)(x, y)|` and `max |d(H∘γ)(x)|` over an orthonormal basis of
/// the given subspace of `T_qQ`.
pub(crate) fn type_one_premises(
    gamma: &OneFormSection,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    q: &DVector<f64>,
    z: &DVector<f64>,
    basis: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let n = q.len();
    let m = exterior_derivative_one_form(gamma, q)? + w.b_field.eval(q)?;
    let closedness = max_abs(&(basis.transpose() * m * basis));
    let grad = h.gradient(z)?;
    let j = gamma.jacobian(q)?;
    let d_h_gamma = grad.rows(0, n) + j.transpose() * grad.rows(n, n);
    let energy = (basis.transpose() * d_h_gamma).amax_or_zero();
    Ok((closedness, energy))
}

/// `‖Tγ·X^γ − X‖` where `X^γ = Tπ_Q X^B_H(γ(q))` and `X` is the field being
/// tested at `γ(q)`.
pub(crate) fn type_one_defect(
    gamma: &OneFormSection,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    q: &DVector<f64>,
    z: &DVector<f64>,
    field: &DVector<f64>,
) -> Result<f64> {
    let xh = magnetic_field_at(h, w, z)?;
    let lifted = t_lambda(gamma, q, &xh)?;
    Ok((lifted - field).norm())
}

pub(crate) fn type_one_report(
    check: &str,
    samples: &[DVector<f64>],
    per_sample: Vec<TypeOneSample>,
    extra: Vec<Hypothesis>,
    tol: &Tolerances,
) -> HjReport {
    let closedness = max_of(per_sample.iter().map(|s| s.closedness));
    let energy = max_of(per_sample.iter().map(|s| s.energy));
    let equation = max_of(per_sample.iter().map(|s| s.equation));
    let mut hypotheses = extra;
    hypotheses.push(Hypothesis::new("closedness", closedness, tol.hypothesis));
    hypotheses.push(Hypothesis::new("energy", energy, tol.hypothesis));
    let verdict = if hypotheses.iter().any(|h| !h.holds) {
        Verdict::Vacuous
    } else if equation < tol.equation {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let records = samples
        .iter()
        .zip(per_sample.iter())
        .map(|(q, s)| SampleRecord {
            point: q.iter().copied().collect(),
            values: BTreeMap::from([
                ("closedness".to_string(), s.closedness),
                ("energy".to_string(), s.energy),
                ("equation".to_string(), s.equation),
            ]),
            status: None,
        })
        .collect();
    let mut defects = defects_of(&hypotheses);
    if verdict == Verdict::Fail {
        defects.push(format!(
            "equation residual {equation:.3e} ≥ {:.1e}",
            tol.equation
        ));
    }
    HjReport {
        check: check.to_string(),
        verdict,
        hypothesis_residual: closedness,
        hypotheses,
        equation_residual: equation,
        alternate_residual: None,
        samples: records,
        defects,
    }
}

/// Type I for the magnetic system: `Tγ·X^γ = X^B_H∘γ`.
pub fn hj_type1_magnetic(
    gamma: &OneFormSection,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    samples: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<HjReport> {
    let per_sample = samples
        .par_iter()
        .map(|q| {
            let z = stack(q, &gamma.eval(q)?);
            let id = DMatrix::identity(q.len(), q.len());
            let (closedness, energy) = type_one_premises(gamma, h, w, q, &z, &id)?;
            let xh = magnetic_field_at(h, w, &z)?;
            let equation = type_one_defect(gamma, h, w, q, &z, &xh)?;
            Ok(TypeOneSample {
                closedness,
                energy,
                equation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(type_one_report(
        "hj1_magnetic",
        samples,
        per_sample,
        Vec::new(),
        tol,
    ))
}

/// Membership residuals of `γ(q)` in `M` and of `Tγ(D_q)` in `K`.
pub(crate) fn image_residuals(
    gamma: &OneFormSection,
    h: &HamiltonianSpec,
    d: &ConstraintDistribution,
    q: &DVector<f64>,
) -> Result<(DVector<f64>, f64, f64)> {
    let z = stack(q, &gamma.eval(q)?);
    let in_m = d.m_residual(h, &z)?.amax_or_zero();
    let geo = constraint_geometry(d, h, &z)?;
    let j = gamma.jacobian(q)?;
    let mut in_k = 0.0_f64;
    for c in geo.d_basis.column_iter() {
        let dcol = c.into_owned();
        let u = stack(&dcol, &(&j * &dcol));
        in_k = in_k.max(membership_residual(&geo.k_basis, &u));
    }
    Ok((z, in_m, in_k))
}

/// Guards shared by the constrained Type I and Type II checks: `γ(q) ∈ M` and
/// `Tγ(D_q) ⊂ K`, raised as errors.
pub(crate) fn image_guards(
    gamma: &OneFormSection,
    h: &HamiltonianSpec,
    d: &ConstraintDistribution,
    q: &DVector<f64>,
    tol: &Tolerances,
) -> Result<(DVector<f64>, f64, f64)> {
    let (z, in_m, in_k) = image_residuals(gamma, h, d, q)?;
    let point = || q.iter().copied().collect::<Vec<_>>();
    if in_m > tol.membership {
        return Err(MagnoError::ImageNotInM {
            q: point(),
            residual: in_m,
        });
    }
    if in_k > tol.membership {
        return Err(MagnoError::ImageNotInK {
            q: point(),
            residual: in_k,
        });
    }
    Ok((z, in_m, in_k))
}

/// Type I for the distributional system: `Tγ·X^γ = X^B_K∘γ`.
pub fn hj_type1_distributional(
    gamma: &OneFormSection,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    samples: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<HjReport> {
    let per_sample = samples
        .par_iter()
        .map(|q| {
            let (z, in_m, in_k) = image_guards(gamma, h, d, q, tol)?;
            let basis = d.d_basis(q)?;
            let (closedness, energy) = type_one_premises(gamma, h, w, q, &z, &basis)?;
            let xk = restricted_field_stacked(d, h, w, &z)?;
            let equation = type_one_defect(gamma, h, w, q, &z, &xk)?;
            Ok((
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
    let in_m = max_of(per_sample.iter().map(|s| s.1));
    let in_k = max_of(per_sample.iter().map(|s| s.2));
    let extra = vec![
        Hypothesis::new("image_in_M", in_m, tol.membership),
        Hypothesis::new("image_in_K", in_k, tol.membership),
    ];
    let per_sample = per_sample.into_iter().map(|s| s.0).collect();
    Ok(type_one_report(
        "hj1_distributional",
        samples,
        per_sample,
        extra,
        tol,
    ))
}

/// Residual pair of a Type II check at one phase point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeTwoSample {
    pub residual_a: f64,
    pub residual_b: f64,
    pub symplectic: f64,
}

/// Move `p` so that `ε(q, p) ∈ M`, starting from `z`.
pub(crate) fn correct_for_epsilon(
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    eps: &PhaseMap,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = d.n;
    let mut out = z.clone();
    if d.k == 0 {
        return Ok(out);
    }
    for _ in 0..50 {
        let ez = eps.eval(&out)?;
        let c = d.m_residual(h, &ez)?;
        if c.amax_or_zero() <= 1e-14 {
            break;
        }
        let jac = d.m_jacobian(h, &ez)? * eps.jacobian(&out)?;
        let jp = jac.columns(n, n).into_owned();
        let step = crate::linalg::lstsq(&jp, &(-c));
        let mut p = out.rows(n, n).into_owned();
        p += step;
        out.rows_mut(n, n).copy_from(&p);
    }
    Ok(out)
}

/// Residuals of both Type II equations at `z`.
///
/// `residual_a = ‖τ·Tε·X^B_{H∘ε} − Tλ·X^B_H∘ε‖` and
/// `residual_b = ‖Tγ·X^ε − X∘ε‖`, where `τ` and `X` are the identity and
/// `X^B_H` for the magnetic system and `τ_K`, `X^B_K` for the constrained one.
pub fn type_two_residuals(
    gamma: &OneFormSection,
    eps: &PhaseMap,
    d: Option<&ConstraintDistribution>,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z: &DVector<f64>,
) -> Result<TypeTwoSample> {
    let ez = eps.eval(z)?;
    let je = eps.jacobian(z)?;
    let q = base_of(z);
    let eq = base_of(&ez);
    // X^B_{H∘ε} with ∇(H∘ε) = Jεᵀ ∇H(ε(z)).
    let grad_comp = je.transpose() * h.gradient(&ez)?;
    let x_comp = w.hamiltonian_vector(&q, &grad_comp)?;
    let pushed = &je * x_comp;
    let xh_e = magnetic_field_at(h, w, &ez)?;
    let lifted = t_lambda(gamma, &eq, &xh_e)?;
    let (projected, target) = match d {
        Some(d) if d.k > 0 => (
            tau_k(d, h, w, &ez, &pushed)?,
            restricted_field_stacked(d, h, w, &ez)?,
        ),
        _ => (pushed, xh_e),
    };
    Ok(TypeTwoSample {
        residual_a: (projected - &lifted).norm(),
        residual_b: (lifted - target).norm(),
        symplectic: check_symplectic_map(eps, w, z)?,
    })
}

/// Decide zero/nonzero agreement of a residual pair, re-evaluating with a
/// tighter finite-difference step when either falls in the band.
pub(crate) fn judge_pair(
    first: TypeTwoSample,
    retest: impl FnOnce() -> Result<TypeTwoSample>,
    tol: &Tolerances,
) -> Result<(TypeTwoSample, bool, String)> {
    let sa = classify(first.residual_a, tol.equation, tol.band_factor);
    let sb = classify(first.residual_b, tol.equation, tol.band_factor);
    if sa != Status::Band && sb != Status::Band {
        let agree = sa == sb;
        return Ok((first, agree, status_word(sa, sb).to_string()));
    }
    let second = retest()?;
    let sa = classify(second.residual_a, tol.equation, tol.band_factor);
    let sb = classify(second.residual_b, tol.equation, tol.band_factor);
    if sa != Status::Band && sb != Status::Band {
        return Ok((
            second,
            sa == sb,
            format!("{} (retested)", status_word(sa, sb)),
        ));
    }
    let za = second.residual_a < tol.equation;
    let zb = second.residual_b < tol.equation;
    Ok((second, za == zb, "band (binary comparison)".to_string()))
}

fn status_word(a: Status, b: Status) -> &'static str {
    match (a, b) {
        (Status::Zero, Status::Zero) => "both zero",
        (Status::NonZero, Status::NonZero) => "both nonzero",
        _ => "disagree",
    }
}

/// Phase points used by the Type II checks: `z = γ(q)`, corrected in `p` so
/// that `ε(z) ∈ M` for constrained systems.
pub fn type_two_points(
    gamma: &OneFormSection,
    eps: &PhaseMap,
    d: Option<&ConstraintDistribution>,
    h: &HamiltonianSpec,
    samples: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    samples
        .iter()
        .map(|q| {
            let z = stack(q, &gamma.eval(q)?);
            match d {
                Some(d) => correct_for_epsilon(d, h, eps, &z),
                None => Ok(z),
            }
        })
        .collect()
}

pub(crate) fn tighter(map: &PhaseMap) -> PhaseMap {
    map.clone().with_fd_step(map.fd_step * 0.1)
}

pub(crate) fn type_two_report(
    check: &str,
    points: &[DVector<f64>],
    judged: Vec<(TypeTwoSample, bool, String)>,
    mut hypotheses: Vec<Hypothesis>,
    tol: &Tolerances,
) -> HjReport {
    let symplectic = max_of(judged.iter().map(|s| s.0.symplectic));
    hypotheses.push(Hypothesis::new("symplectic", symplectic, tol.symplectic));
    let all_agree = judged.iter().all(|s| s.1);
    let verdict = if hypotheses.iter().any(|h| !h.holds) {
        Verdict::Vacuous
    } else if all_agree {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut defects = defects_of(&hypotheses);
    let disagreements = judged.iter().filter(|s| !s.1).count();
    if disagreements > 0 {
        defects.push(format!(
            "{disagreements} samples with disagreeing zero/nonzero status"
        ));
    }
    HjReport {
        check: check.to_string(),
        verdict,
        hypothesis_residual: symplectic,
        hypotheses,
        equation_residual: max_of(judged.iter().map(|s| s.0.residual_b)),
        alternate_residual: Some(max_of(judged.iter().map(|s| s.0.residual_a))),
        samples: points
            .iter()
            .zip(judged.iter())
            .map(|(z, (s, _, status))| SampleRecord {
                point: z.iter().copied().collect(),
                values: BTreeMap::from([
                    ("residual_a".to_string(), s.residual_a),
                    ("residual_b".to_string(), s.residual_b),
                    ("symplectic".to_string(), s.symplectic),
                ]),
                status: Some(status.clone()),
            })
            .collect(),
        defects,
    }
}

/// Type II for the magnetic system: status agreement of the two equations.
pub fn hj_type2_magnetic(
    gamma: &OneFormSection,
    eps: &PhaseMap,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    samples: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<HjReport> {
    let points = type_two_points(gamma, eps, None, h, samples)?;
    let judged = points
        .par_iter()
        .map(|z| {
            let first = type_two_residuals(gamma, eps, None, h, w, z)?;
            judge_pair(
                first,
                || type_two_residuals(&tighter(gamma), &tighter(eps), None, h, w, z),
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(type_two_report(
        "hj2_magnetic",
        &points,
        judged,
        Vec::new(),
        tol,
    ))
}

/// Type II for the distributional system.
pub fn hj_type2_distributional(
    gamma: &OneFormSection,
    eps: &PhaseMap,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    samples: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<HjReport> {
    let guards = samples
        .par_iter()
        .map(|q| image_guards(gamma, h, d, q, tol).map(|g| (g.1, g.2)))
        .collect::<Result<Vec<_>>>()?;
    let points = type_two_points(gamma, eps, Some(d), h, samples)?;
    let judged = points
        .par_iter()
        .map(|z| {
            let first = type_two_residuals(gamma, eps, Some(d), h, w, z)?;
            judge_pair(
                first,
                || type_two_residuals(&tighter(gamma), &tighter(eps), Some(d), h, w, z),
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let hyps = vec![
        Hypothesis::new(
            "image_in_M",
            max_of(guards.iter().map(|g| g.0)),
            tol.membership,
        ),
        Hypothesis::new(
            "image_in_K",
            max_of(guards.iter().map(|g| g.1)),
            tol.membership,
        ),
    ];
    Ok(type_two_report(
        "hj2_distributional",
        &points,
        judged,
        hyps,
        tol,
    ))
}

/// `B := −dγ`, so that `γ` satisfies `dγ + B = 0` by construction.
pub fn build_magnetic_from_gamma(gamma: &OneFormSection) -> TwoFormField {
    let n = gamma.dim_in;
    let g = gamma.clone();
    let field = MatrixField::new(
        "-dgamma",
        n,
        n,
        n,
        move |q| match exterior_derivative_one_form(&g, q) {
            Ok(m) => -m,
            Err(_) => crate::geometry::nan_matrix(n),
        },
    );
    TwoFormField::from_field(field)
}
