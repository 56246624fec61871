//! Running checks on compiled scenarios, singly or over a directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{MagnoError, Result};
use crate::geometry::{check_closed_two_form, PhasePoint};
use crate::hj::{self, HjReport, Verdict};
use crate::magnetic::{coordinate_formula_field, energy_derivative, magnetic_vector_field};
use crate::nonholonomic::{
    check_compatibility, multiplier_field_stacked, restricted_field_stacked,
};
use crate::reduction;
use crate::scenario::{
    CheckReport, SampleRow, Scenario, ScenarioFailure, ScenarioLoadError, SuiteReport,
};
use crate::tolerance::Tolerances;

/// Finite-difference step for the closedness test of `B`.
pub const CLOSEDNESS_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckKind {
    Hj1,
    Hj2,
    Geometry,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Hj1 => "hj1",
            CheckKind::Hj2 => "hj2",
            CheckKind::Geometry => "geometry",
        }
    }
}

impl std::str::FromStr for CheckKind {
    type Err = MagnoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hj1" => Ok(CheckKind::Hj1),
            "hj2" => Ok(CheckKind::Hj2),
            "geometry" => Ok(CheckKind::Geometry),
            other => Err(MagnoError::InvalidArgument(format!(
                "unknown check `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    pub seed: u32,
    /// Overrides the scenario's sample count.
    pub samples: Option<usize>,
}

fn require<'a, T>(x: Option<&'a T>, what: &str, s: &Scenario) -> Result<&'a T> {
    x.ok_or_else(|| {
        MagnoError::InvalidArgument(format!("scenario `{}` declares no {what}", s.name()))
    })
}

/// Run one check. `reduced` selects the symmetry-reduced variant.
pub fn run_check(
    s: &Scenario,
    kind: CheckKind,
    reduced: bool,
    opts: &CheckOptions,
) -> Result<CheckReport> {
    let start = Instant::now();
    let tol = s.effective_tolerances();
    let count = opts.samples.unwrap_or_else(|| s.sample_count());
    let qs = s.config_samples(count, opts.seed);
    let (h, w, d) = (&s.hamiltonian, &s.magnetic, &s.constraints);
    let sym = if reduced {
        Some(require(s.symmetry.as_ref(), "symmetry", s)?)
    } else {
        None
    };
    let report: HjReport = match kind {
        CheckKind::Geometry => {
            let mut r = geometry_report(s, &tol, count, opts.seed)?;
            r.wall_time_s = start.elapsed().as_secs_f64();
            return Ok(r);
        }
        CheckKind::Hj1 => {
            let gamma = require(s.gamma.as_ref(), "gamma", s)?;
            match sym {
                Some(sym) => reduction::hj_type1_reduced(gamma, sym, d, h, w, &qs, &tol)?,
                None if d.is_unconstrained() => hj::hj_type1_magnetic(gamma, h, w, &qs, &tol)?,
                None => hj::hj_type1_distributional(gamma, d, h, w, &qs, &tol)?,
            }
        }
        CheckKind::Hj2 => {
            let gamma = require(s.gamma.as_ref(), "gamma", s)?;
            let eps = require(s.epsilon.as_ref(), "epsilon", s)?;
            match sym {
                Some(sym) => reduction::hj_type2_reduced(gamma, eps, sym, d, h, w, &qs, &tol)?,
                None if d.is_unconstrained() => hj::hj_type2_magnetic(gamma, eps, h, w, &qs, &tol)?,
                None => hj::hj_type2_distributional(gamma, eps, d, h, w, &qs, &tol)?,
            }
        }
    };
    Ok(CheckReport::from_hj(
        s.name(),
        report,
        start.elapsed().as_secs_f64(),
    ))
}

/// Geometric consistency of a scenario: closedness of `B`, agreement of the
/// coordinate formula with the dense solve, energy conservation, and, when
/// present, compatibility of the constraints and the reduction data.
fn geometry_report(s: &Scenario, tol: &Tolerances, count: usize, seed: u32) -> Result<CheckReport> {
    let (h, w, d) = (&s.hamiltonian, &s.magnetic, &s.constraints);
    let qs = s.config_samples(count, seed);
    let zs = s.phase_samples(count, seed)?;
    let closedness = qs
        .iter()
        .map(|q| check_closed_two_form(&w.b_field, q, CLOSEDNESS_STEP))
        .collect::<Result<Vec<_>>>()?;

    let rows = zs
        .par_iter()
        .map(|z| geometry_sample(s, z, tol))
        .collect::<Result<Vec<BTreeMap<String, f64>>>>()?;

    let max_key = |k: &str| {
        rows.iter()
            .filter_map(|r| r.get(k))
            .copied()
            .fold(0.0_f64, f64::max)
    };
    let min_key = |k: &str| {
        rows.iter()
            .filter_map(|r| r.get(k))
            .copied()
            .fold(f64::INFINITY, f64::min)
    };

    let mut residuals = BTreeMap::new();
    let mut limits: Vec<(&str, f64, f64)> = vec![
        (
            "closedness_b",
            closedness.iter().copied().fold(0.0, f64::max),
            tol.hypothesis,
        ),
        (
            "formula_vs_solve",
            max_key("formula_vs_solve"),
            tol.hypothesis,
        ),
        ("energy_rate", max_key("energy_rate"), tol.equation),
    ];
    if !d.is_unconstrained() {
        limits.push((
            "restricted_vs_multiplier",
            max_key("restricted_vs_multiplier"),
            tol.relatedness,
        ));
        limits.push((
            "constrained_energy_rate",
            max_key("constrained_energy_rate"),
            tol.equation,
        ));
        limits.push(("intersection_dim", max_key("intersection_dim"), 0.5));
        residuals.insert("sigma_min".to_string(), min_key("sigma_min"));
        residuals.insert("dim_k_min".to_string(), min_key("dim_k"));
        residuals.insert("dim_k_max".to_string(), max_key("dim_k"));
        residuals.insert("rank_a_min".to_string(), min_key("rank_a"));
    }
    let mut hypotheses = BTreeMap::new();
    let mut failed_hypotheses = Vec::new();
    if let Some(sym) = &s.symmetry {
        // Reduction data only means something for an invariant system, so
        // a broken symmetry is reported as a failed premise, not a defect.
        let invariance = reduction::invariance_residual(sym, d, h, w, &zs)?;
        hypotheses.insert("invariance".to_string(), invariance);
        let invariant = invariance <= tol.invariance;
        if !invariant {
            failed_hypotheses.push("invariance".to_string());
        }
        let related = reduction::check_related(sym, d, h, w, &zs)?;
        let lift = zs
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let shift: Vec<f64> = (0..sym.group_dim())
                    .map(|j| 0.37 + 0.11 * ((i + j) % 7) as f64)
                    .collect();
                reduction::lift_discrepancy(sym, d, h, w, z, &shift).map(|l| l.max())
            })
            .collect::<Result<Vec<f64>>>()?;
        let lift = lift.into_iter().fold(0.0, f64::max);
        if invariant {
            limits.push(("relatedness", related, tol.relatedness));
            limits.push(("lift_independence", lift, tol.invariance));
        } else {
            residuals.insert("relatedness".to_string(), related);
            residuals.insert("lift_independence".to_string(), lift);
        }
    }

    let mut defects = Vec::new();
    for (name, value, limit) in &limits {
        residuals.insert(name.to_string(), *value);
        if !(*value <= *limit) {
            defects.push(format!("`{name}` = {value:.3e} exceeds {limit:.1e}"));
        }
    }
    if !d.is_unconstrained() && !(min_key("sigma_min") > tol.sigma_min) {
        defects.push(format!(
            "ω^B restricted to K degenerates: σ_min = {:.3e}",
            min_key("sigma_min")
        ));
    }
    let verdict = if defects.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let samples = zs
        .iter()
        .zip(rows)
        .map(|(z, values)| SampleRow {
            point: z.iter().copied().collect(),
            values,
            status: None,
        })
        .collect();
    Ok(CheckReport {
        scenario: s.name().to_string(),
        check: "geometry".into(),
        verdict,
        hypothesis_residuals: hypotheses,
        equation_residuals: residuals,
        failed_hypotheses,
        defects,
        samples,
        wall_time_s: 0.0,
    })
}

fn geometry_sample(
    s: &Scenario,
    z: &DVector<f64>,
    tol: &Tolerances,
) -> Result<BTreeMap<String, f64>> {
    let (h, w, d) = (&s.hamiltonian, &s.magnetic, &s.constraints);
    let pz = PhasePoint::from_stacked(z);
    let mut row = BTreeMap::new();
    let formula = coordinate_formula_field(h, w, &pz)?.stacked();
    let solved = magnetic_vector_field(h, w, &pz)?.stacked();
    row.insert("formula_vs_solve".into(), (formula - solved).norm());
    row.insert("energy_rate".into(), energy_derivative(h, w, &pz)?.abs());
    if !d.is_unconstrained() {
        let c = check_compatibility(d, h, w, &pz, tol.sigma_min)?;
        row.insert("sigma_min".into(), c.sigma_min);
        row.insert("dim_k".into(), c.dim_k as f64);
        row.insert("rank_a".into(), c.rank_a as f64);
        row.insert("intersection_dim".into(), c.intersection_dim as f64);
        let restricted = restricted_field_stacked(d, h, w, z)?;
        let (multiplier, _) = multiplier_field_stacked(d, h, w, z)?;
        row.insert(
            "restricted_vs_multiplier".into(),
            (&restricted - multiplier).norm(),
        );
        row.insert(
            "constrained_energy_rate".into(),
            h.gradient(z)?.dot(&restricted).abs(),
        );
    }
    Ok(row)
}

/// The checks that apply to a scenario, given what it declares.
pub fn applicable_checks(s: &Scenario) -> Vec<(CheckKind, bool)> {
    let mut out = vec![(CheckKind::Geometry, false)];
    if s.gamma.is_some() {
        out.push((CheckKind::Hj1, false));
        if s.symmetry.is_some() {
            out.push((CheckKind::Hj1, true));
        }
        if s.epsilon.is_some() {
            out.push((CheckKind::Hj2, false));
            if s.symmetry.is_some() {
                out.push((CheckKind::Hj2, true));
            }
        }
    }
    out
}

/// Scenario files (`*.json`) in `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn failure(scenario: &str, code: &str, message: String) -> ScenarioFailure {
    ScenarioFailure {
        scenario: scenario.to_string(),
        code: code.to_string(),
        message,
    }
}

/// Every applicable check on every scenario in `dir`, scenarios in parallel.
///
/// Unreadable or invalid files and checks that error out are listed under
/// `errors` rather than aborting the run.
pub fn check_directory(dir: &Path, opts: &CheckOptions) -> std::io::Result<SuiteReport> {
    let start = Instant::now();
    let files = scenario_files(dir)?;
    let results: Vec<(Vec<CheckReport>, Vec<ScenarioFailure>)> = files
        .par_iter()
        .map(|path| {
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let scenario = match Scenario::from_path(path) {
                Ok(s) => s,
                Err(ScenarioLoadError::Io { message, .. }) => {
                    return (vec![], vec![failure(&label, "io_error", message)])
                }
                Err(ScenarioLoadError::Scenario(e)) => {
                    let code = e
                        .violations()
                        .first()
                        .and_then(|v| serde_json::to_value(v.code).ok())
                        .and_then(|c| c.as_str().map(String::from))
                        .unwrap_or_else(|| "invalid_scenario".into());
                    return (vec![], vec![failure(&label, &code, e.to_string())]);
                }
            };
            let mut reports = Vec::new();
            let mut errors = Vec::new();
            for (kind, reduced) in applicable_checks(&scenario) {
                match run_check(&scenario, kind, reduced, opts) {
                    Ok(r) => reports.push(r),
                    Err(e) => errors.push(failure(
                        scenario.name(),
                        "check_error",
                        format!("{}: {e}", kind.name()),
                    )),
                }
            }
            (reports, errors)
        })
        .collect();
    let (reports, errors): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(SuiteReport::new(
        reports.into_iter().flatten().collect(),
        errors.into_iter().flatten().collect(),
        start.elapsed().as_secs_f64(),
    ))
}
