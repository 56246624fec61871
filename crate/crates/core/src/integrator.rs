//! Fixed-step RK4 trajectories of `X^B_H` and `X^B_K`, with projection back
//! onto `M` after each constrained step.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MagnoError, Result};
use crate::magnetic::{magnetic_field_at, HamiltonianSpec, MagneticStructure};
use crate::nonholonomic::{
    multiplier_field_stacked, project_stacked, AmaxOrZero, ConstraintDistribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Magnetic,
    Distributional,
}

impl std::str::FromStr for FieldKind {
    type Err = MagnoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnetic" => Ok(FieldKind::Magnetic),
            "distributional" => Ok(FieldKind::Distributional),
            other => Err(MagnoError::InvalidArgument(format!(
                "unknown field kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Re-project onto `M` after every distributional step.
    pub project: bool,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub energy: f64,
    /// `|c(z)|_∞` after projection (if any).
    pub constraint_residual: f64,
    /// `|c(z)|_∞` before projection.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Set when the run stopped early on a non-finite state.
    pub aborted: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.diagnostics[0].energy;
        self.diagnostics
            .iter()
            .map(|d| (d.energy - e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.constraint_residual)
            .fold(0.0, f64::max)
    }

    pub fn max_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.drift).fold(0.0, f64::max)
    }

    /// CSV with columns `t, q1..qn, p1..pn, H, constraint_res, drift`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n).map(|i| format!("q{i}")));
        header.extend((1..=self.n).map(|i| format!("p{i}")));
        header.extend(["H", "constraint_res", "drift"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for ((t, z), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            let mut row = vec![format!("{t:.10}")];
            row.extend(z.iter().map(|x| format!("{x:.16e}")));
            row.push(format!("{:.16e}", d.energy));
            row.push(format!("{:.6e}", d.constraint_residual));
            row.push(format!("{:.6e}", d.drift));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

struct Problem<'a> {
    kind: FieldKind,
    d: &'a ConstraintDistribution,
    h: &'a HamiltonianSpec,
    w: &'a MagneticStructure,
}

impl Problem<'_> {
    fn field(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            FieldKind::Magnetic => magnetic_field_at(self.h, self.w, z),
            FieldKind::Distributional => Ok(multiplier_field_stacked(self.d, self.h, self.w, z)?.0),
        }
    }

    fn constraint(&self, z: &DVector<f64>) -> Result<f64> {
        match self.kind {
            FieldKind::Magnetic => Ok(0.0),
            FieldKind::Distributional => Ok(self.d.m_residual(self.h, z)?.amax_or_zero()),
        }
    }
}

fn rk4_step(problem: &Problem<'_>, z: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let k1 = problem.field(z)?;
    let k2 = problem.field(&(z + &k1 * (0.5 * dt)))?;
    let k3 = problem.field(&(z + &k2 * (0.5 * dt)))?;
    let k4 = problem.field(&(z + &k3 * dt))?;
    Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Integrate from `z0` with fixed step `dt` up to `t_end`.
///
/// The last step is shortened to land on `t_end` exactly. A non-finite state
/// stops the run and returns the partial trajectory with `aborted` set;
/// a degenerate form is propagated as an error.
pub fn integrate(
    kind: FieldKind,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z0: &DVector<f64>,
    opts: IntegratorOptions,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(MagnoError::InvalidArgument(format!(
            "dt must be positive, got {}",
            opts.dt
        )));
    }
    if !(opts.t_end >= 0.0) {
        return Err(MagnoError::InvalidArgument(format!(
            "t_end must be non-negative, got {}",
            opts.t_end
        )));
    }
    let problem = Problem { kind, d, h, w };
    let n = z0.len() / 2;
    let c0 = problem.constraint(z0)?;
    let mut traj = Trajectory {
        n,
        times: vec![0.0],
        states: vec![z0.clone()],
        diagnostics: vec![StepDiagnostics {
            energy: h.value(z0)?,
            constraint_residual: c0,
            drift: c0,
        }],
        aborted: None,
    };
    let steps = (opts.t_end / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let mut z = z0.clone();
    let mut t = 0.0;
    for i in 0..steps {
        let t_next = if i + 1 == steps {
            opts.t_end
        } else {
            (i + 1) as f64 * opts.dt
        };
        let step = t_next - t;
        let mut next = match rk4_step(&problem, &z, step) {
            Ok(v) => v,
            Err(MagnoError::NumericalDomain { what }) => {
                traj.aborted = Some(format!("non-finite value in {what} at t = {t}"));
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        if !next.iter().all(|x| x.is_finite()) {
            traj.aborted = Some(format!("non-finite state at t = {t_next}"));
            return Ok(traj);
        }
        let drift = problem.constraint(&next)?;
        if kind == FieldKind::Distributional && opts.project {
            next = project_stacked(d, h, &next)?;
        }
        let residual = problem.constraint(&next)?;
        traj.diagnostics.push(StepDiagnostics {
            energy: h.value(&next)?,
            constraint_residual: residual,
            drift,
        });
        traj.times.push(t_next);
        traj.states.push(next.clone());
        z = next;
        t = t_next;
    }
    Ok(traj)
}

/// Endpoint errors `(|z_dt − z_ref|, |z_{dt/2} − z_ref|)` against a run with
/// step `reference_dt`.
#[allow(clippy::too_many_arguments)]
pub fn step_halving_errors(
    kind: FieldKind,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    reference_dt: f64,
) -> Result<(f64, f64)> {
    let run = |step: f64| {
        integrate(
            kind,
            d,
            h,
            w,
            z0,
            IntegratorOptions {
                dt: step,
                t_end,
                project: true,
            },
        )
        .map(|t| t.last().clone())
    };
    let reference = run(reference_dt)?;
    let coarse = (run(dt)? - &reference).norm();
    let fine = (run(dt / 2.0)? - &reference).norm();
    Ok((coarse, fine))
}

/// Endpoint error ratio `|z_dt − z_ref| / |z_{dt/2} − z_ref|` for the
/// step-halving order check; about 16 for a fourth-order method.
#[allow(clippy::too_many_arguments)]
pub fn step_halving_ratio(
    kind: FieldKind,
    d: &ConstraintDistribution,
    h: &HamiltonianSpec,
    w: &MagneticStructure,
    z0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    reference_dt: f64,
) -> Result<f64> {
    let (coarse, fine) = step_halving_errors(kind, d, h, w, z0, t_end, dt, reference_dt)?;
    Ok(coarse / fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TwoFormField;
    use nalgebra::DMatrix;

    #[test]
    fn free_particle_moves_linearly() {
        let d = ConstraintDistribution::unconstrained(2);
        let h = HamiltonianSpec::free_particle(2);
        let w = MagneticStructure::canonical(2);
        let z0 = DVector::from_vec(vec![0.0, 1.0, 0.5, -0.25]);
        let traj = integrate(
            FieldKind::Magnetic,
            &d,
            &h,
            &w,
            &z0,
            IntegratorOptions {
                dt: 0.1,
                t_end: 2.0,
                project: true,
            },
        )
        .unwrap();
        let end = traj.last();
        assert!((end[0] - 1.0).abs() < 1e-13);
        assert!((end[1] - 0.5).abs() < 1e-13);
        assert_eq!(traj.times.len(), 21);
        assert_eq!(*traj.times.last().unwrap(), 2.0);
    }

    #[test]
    fn charged_particle_momentum_circles() {
        let d = ConstraintDistribution::unconstrained(2);
        let h = HamiltonianSpec::free_particle(2);
        let w = MagneticStructure::new(TwoFormField::constant(DMatrix::from_row_slice(
            2,
            2,
            &[0.0, 1.0, -1.0, 0.0],
        )));
        let z0 = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let t_end = 2.0 * std::f64::consts::PI;
        let traj = integrate(
            FieldKind::Magnetic,
            &d,
            &h,
            &w,
            &z0,
            IntegratorOptions {
                dt: 1e-3,
                t_end,
                project: true,
            },
        )
        .unwrap();
        for z in &traj.states {
            assert!(((z[2] * z[2] + z[3] * z[3]).sqrt() - 1.0).abs() < 1e-8);
        }
        // Period 2π: back to the start.
        assert!((traj.last() - &z0).norm() < 1e-9);
        // Closed form p(t) = (cos t, −sin t).
        let mid = &traj.states[traj.states.len() / 4];
        let t = traj.times[traj.states.len() / 4];
        assert!((mid[2] - t.cos()).abs() < 1e-9 && (mid[3] + t.sin()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_step() {
        let d = ConstraintDistribution::unconstrained(1);
        let h = HamiltonianSpec::free_particle(1);
        let w = MagneticStructure::canonical(1);
        let z0 = DVector::from_vec(vec![0.0, 1.0]);
        assert!(integrate(
            FieldKind::Magnetic,
            &d,
            &h,
            &w,
            &z0,
            IntegratorOptions {
                dt: 0.0,
                t_end: 1.0,
                project: true
            }
        )
        .is_err());
    }

    #[test]
    fn csv_has_expected_header() {
        let d = ConstraintDistribution::unconstrained(2);
        let h = HamiltonianSpec::free_particle(2);
        let w = MagneticStructure::canonical(2);
        let z0 = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let traj = integrate(
            FieldKind::Magnetic,
            &d,
            &h,
            &w,
            &z0,
            IntegratorOptions {
                dt: 0.5,
                t_end: 1.0,
                project: true,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,q1,q2,p1,p2,H,constraint_res,drift\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
