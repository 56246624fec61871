//! Compilation of a validated document into the numerical objects used by the
//! checks and the integrator.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::expr::{Expr, Var};
use super::spec::{ExprSource, ParsedExprs, ScenarioError, ScenarioSpec};
use crate::geometry::{MatrixField, OneFormSection, ScalarField, SmoothMap, TwoFormField};
use crate::magnetic::{HamiltonianSpec, MagneticStructure, PhaseMap};
use crate::nonholonomic::ConstraintDistribution;
use crate::reduction::TranslationSymmetry;
use crate::sampling::{self, DEFAULT_SAMPLES};
use crate::tolerance::Tolerances;

/// A scenario ready for numerical work.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub n: usize,
    pub hamiltonian: HamiltonianSpec,
    pub magnetic: MagneticStructure,
    pub constraints: ConstraintDistribution,
    pub gamma: Option<OneFormSection>,
    pub epsilon: Option<PhaseMap>,
    /// Zero-based cyclic coordinates.
    pub symmetry: Option<TranslationSymmetry>,
    /// Overrides from the document, without the environment scale.
    pub tolerances: Tolerances,
}

fn split(z: &DVector<f64>, n: usize) -> (&[f64], &[f64]) {
    let s = z.as_slice();
    if s.len() == 2 * n {
        (&s[..n], &s[n..])
    } else {
        (s, &[])
    }
}

fn q_vars(n: usize) -> Vec<Var> {
    (0..n).map(Var::Q).collect()
}

fn phase_vars(n: usize) -> Vec<Var> {
    (0..n).map(Var::Q).chain((0..n).map(Var::P)).collect()
}

/// Vector-valued map with a symbolic Jacobian with respect to `vars`.
fn compile_map(label: &str, n: usize, exprs: Vec<Expr>, vars: Vec<Var>) -> SmoothMap {
    let jac: Vec<Vec<Expr>> = exprs
        .iter()
        .map(|e| vars.iter().map(|&v| e.derivative(v)).collect())
        .collect();
    let exprs = Arc::new(exprs);
    let jac = Arc::new(jac);
    let (rows, cols) = (exprs.len(), vars.len());
    let f = {
        let exprs = exprs.clone();
        move |z: &DVector<f64>| {
            let (q, p) = split(z, n);
            DVector::from_iterator(exprs.len(), exprs.iter().map(|e| e.value(q, p)))
        }
    };
    SmoothMap::new(label, cols, rows, f).with_jacobian(move |z| {
        let (q, p) = split(z, n);
        DMatrix::from_fn(rows, cols, |i, j| jac[i][j].value(q, p))
    })
}

fn compile_scalar(label: &str, n: usize, e: Expr, vars: Vec<Var>) -> ScalarField {
    let grad: Vec<Expr> = vars.iter().map(|&v| e.derivative(v)).collect();
    let dim = vars.len();
    ScalarField::new(label, dim, move |z| {
        let (q, p) = split(z, n);
        e.value(q, p)
    })
    .with_gradient(move |z| {
        let (q, p) = split(z, n);
        DVector::from_iterator(grad.len(), grad.iter().map(|g| g.value(q, p)))
    })
}

/// Matrix function of `q` with symbolic partials; constant matrices are
/// folded once.
fn compile_matrix(
    label: &str,
    n: usize,
    rows: usize,
    cols: usize,
    m: Vec<Vec<Expr>>,
) -> MatrixField {
    let constant = m.iter().flatten().all(|e| matches!(e, Expr::Num(_)));
    if constant {
        let value = DMatrix::from_fn(rows, cols, |i, j| m[i][j].value(&[], &[]));
        return MatrixField::constant(label, n, value);
    }
    let partials: Vec<Vec<Vec<Expr>>> = (0..n)
        .map(|k| {
            m.iter()
                .map(|row| row.iter().map(|e| e.derivative(Var::Q(k))).collect())
                .collect()
        })
        .collect();
    let m = Arc::new(m);
    let eval = {
        let m = m.clone();
        move |q: &DVector<f64>| {
            DMatrix::from_fn(rows, cols, |i, j| m[i][j].value(q.as_slice(), &[]))
        }
    };
    MatrixField::new(label, n, rows, cols, eval).with_partials(move |q| {
        partials
            .iter()
            .map(|pk| DMatrix::from_fn(rows, cols, |i, j| pk[i][j].value(q.as_slice(), &[])))
            .collect()
    })
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let spec = ScenarioSpec::from_json(text)?;
        Self::compile(spec)
    }

    pub fn from_path(path: &std::path::Path) -> std::result::Result<Self, ScenarioLoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioLoadError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Scenario::from_json(&text).map_err(ScenarioLoadError::Scenario)
    }

    pub fn compile(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        let parsed = spec.validate()?;
        let n = spec.n;
        let ParsedExprs {
            mass,
            potential,
            hamiltonian,
            b_field,
            constraints,
            momentum_constraints,
            gamma,
            epsilon,
        } = parsed;

        let hamiltonian = match hamiltonian {
            Some(h) => HamiltonianSpec::General {
                n,
                h: compile_scalar("H", n, h, phase_vars(n)),
            },
            None => {
                let mass = match mass {
                    Some(m) => compile_matrix("G", n, n, n, m),
                    None => MatrixField::constant("G", n, DMatrix::identity(n, n)),
                };
                let potential = match potential {
                    Some(v) => compile_scalar("V", n, v, q_vars(n)),
                    None => ScalarField::zero(n),
                };
                HamiltonianSpec::Quadratic { mass, potential }
            }
        };
        let magnetic = match b_field {
            Some(b) => {
                MagneticStructure::new(TwoFormField::from_field(compile_matrix("B", n, n, n, b)))
            }
            None => MagneticStructure::canonical(n),
        };
        let k = constraints.len();
        let mut dist = if k == 0 {
            ConstraintDistribution::unconstrained(n)
        } else {
            ConstraintDistribution::new(compile_matrix("A", n, k, n, constraints))
        };
        if let Some(c) = momentum_constraints {
            dist = dist.with_momentum_residual(compile_map("c", n, c, phase_vars(n)));
        }
        let gamma = gamma.map(|g| compile_map("gamma", n, g, q_vars(n)));
        let epsilon = epsilon.map(|e| compile_map("epsilon", n, e, phase_vars(n)));
        let symmetry = spec
            .symmetry
            .as_ref()
            .map(|s| TranslationSymmetry::new(s.iter().map(|i| i - 1).collect()));
        Ok(Scenario {
            tolerances: spec.tolerances.unwrap_or_default(),
            spec,
            n,
            hamiltonian,
            magnetic,
            constraints: dist,
            gamma,
            epsilon,
            symmetry,
        })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn sample_count(&self) -> usize {
        self.spec.samples.unwrap_or(DEFAULT_SAMPLES)
    }

    /// Document tolerances with `MAGNOMECH_TOL_SCALE` applied.
    pub fn effective_tolerances(&self) -> Tolerances {
        self.tolerances.with_env_scale()
    }

    fn bounds(b: &[[f64; 2]]) -> Vec<(f64, f64)> {
        b.iter().map(|r| (r[0], r[1])).collect()
    }

    /// Configuration samples from the scenario box.
    pub fn config_samples(&self, count: usize, seed: u32) -> Vec<DVector<f64>> {
        sampling::sobol_box(&Self::bounds(&self.spec.sample_box), count, seed)
    }

    /// Raw momenta from the momentum box (default `[-1, 1]ⁿ`).
    pub fn momentum_samples(&self, count: usize, seed: u32) -> Vec<DVector<f64>> {
        let bounds = match &self.spec.momentum_box {
            Some(b) => Self::bounds(b),
            None => vec![(-1.0, 1.0); self.n],
        };
        sampling::sobol_box(&bounds, count, seed.wrapping_add(0x9e37_79b9))
    }

    /// Phase-space samples, projected onto `M` when constrained.
    pub fn phase_samples(&self, count: usize, seed: u32) -> crate::Result<Vec<DVector<f64>>> {
        let qs = self.config_samples(count, seed);
        let ps = self.momentum_samples(count, seed);
        crate::reduction::points_on_m(&self.constraints, &self.hamiltonian, &qs, &ps)
    }

    /// Initial state from the document, projected onto `M`.
    pub fn initial_state(&self) -> crate::Result<Option<DVector<f64>>> {
        let Some(init) = &self.spec.initial_state else {
            return Ok(None);
        };
        let q = DVector::from_column_slice(&init.q);
        let p = DVector::from_column_slice(&init.p);
        crate::reduction::points_on_m(&self.constraints, &self.hamiltonian, &[q], &[p])
            .map(|mut v| v.pop())
    }

    /// The same scenario with `B = 0`.
    pub fn without_magnetic_field(&self) -> Scenario {
        let mut out = self.clone();
        out.spec.b_field = None;
        out.magnetic = MagneticStructure::canonical(self.n);
        out
    }

    /// The same scenario with the constraints removed.
    pub fn without_constraints(&self) -> Scenario {
        let mut out = self.clone();
        out.spec.constraints.clear();
        out.spec.momentum_constraints = None;
        out.constraints = ConstraintDistribution::unconstrained(self.n);
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioLoadError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Scenario(ScenarioError),
}

/// Replace `b_field` by `B = −dγ`, computed symbolically:
/// `𝔅_ij = ∂_j γ_i − ∂_i γ_j`.
pub fn construct_b(spec: &ScenarioSpec) -> Result<ScenarioSpec, ScenarioError> {
    let parsed = spec.validate()?;
    let Some(gamma) = parsed.gamma else {
        return Err(ScenarioError::Invalid(vec![super::spec::Violation {
            code: super::spec::ViolationCode::InvalidValue,
            path: "gamma".into(),
            message: "construct-b needs a one-form `gamma`".into(),
        }]));
    };
    let n = spec.n;
    let b: Vec<Vec<ExprSource>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let e = Expr::sub(
                        gamma[i].derivative(Var::Q(j)),
                        gamma[j].derivative(Var::Q(i)),
                    );
                    ExprSource::from_expr(&e)
                })
                .collect()
        })
        .collect();
    let mut out = spec.clone();
    out.b_field = Some(b);
    out.validate()?;
    Ok(out)
}
