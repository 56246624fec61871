//! The declarative scenario document and its validation.

use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{Expr, Var};
use crate::tolerance::Tolerances;

/// A matrix or vector entry: either a literal number or an expression.
///
/// The raw form is kept so that documents round-trip unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum ExprSource {
    Num(f64),
    Text(String),
}

impl ExprSource {
    pub fn parse(&self) -> Result<Expr, super::expr::ExprError> {
        match self {
            ExprSource::Num(x) => Ok(Expr::Num(*x)),
            ExprSource::Text(s) => Expr::parse(s),
        }
    }

    /// Canonical source for an expression: a number when constant.
    pub fn from_expr(e: &Expr) -> Self {
        match e {
            Expr::Num(x) => ExprSource::Num(*x),
            other => ExprSource::Text(other.to_string()),
        }
    }
}

impl From<f64> for ExprSource {
    fn from(x: f64) -> Self {
        ExprSource::Num(x)
    }
}

impl From<&str> for ExprSource {
    fn from(s: &str) -> Self {
        ExprSource::Text(s.to_string())
    }
}

impl fmt::Display for ExprSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprSource::Num(x) => write!(f, "{x}"),
            ExprSource::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// One scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub n: usize,
    /// `G(q)`; the identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_matrix: Option<Vec<Vec<ExprSource>>>,
    /// `V(q)`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<ExprSource>,
    /// A general `H(q, p)` replacing the quadratic form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<ExprSource>,
    /// Evaluation matrix of `B`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_field: Option<Vec<Vec<ExprSource>>>,
    /// Rows of `A(q)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Vec<ExprSource>>,
    /// Explicit `c(q, p)` with `M = {c = 0}`; needed with `hamiltonian`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_constraints: Option<Vec<ExprSource>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<ExprSource>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<ExprSource>>,
    /// One-based cyclic coordinate indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<Vec<usize>>,
    pub sample_box: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

/// Machine-readable classification of a scenario problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    ParseError,
    DimensionMismatch,
    AntisymmetryViolation,
    ExpressionError,
    InvalidValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {message} (line {line}, column {column})")]
    Parse {
        message: String,
        line: usize,
        column: usize,
    },
    #[error("invalid scenario: {}", summarize(.0))]
    Invalid(Vec<Violation>),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{}: {}", x.path, x.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl ScenarioError {
    pub fn violations(&self) -> Vec<Violation> {
        match self {
            ScenarioError::Parse {
                message,
                line,
                column,
            } => vec![Violation {
                code: ViolationCode::ParseError,
                path: format!("line {line}, column {column}"),
                message: message.clone(),
            }],
            ScenarioError::Invalid(v) => v.clone(),
        }
    }
}

/// Which variables an expression may reference.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Scope {
    Config,
    Phase,
}

pub(crate) struct Validator {
    pub n: usize,
    pub violations: Vec<Violation>,
}

impl Validator {
    fn push(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
        });
    }

    /// Parse and scope-check one entry.
    pub fn expr(&mut self, src: &ExprSource, path: &str, scope: Scope) -> Option<Expr> {
        let e = match src.parse() {
            Ok(e) => e,
            Err(err) => {
                self.push(ViolationCode::ExpressionError, path, err.to_string());
                return None;
            }
        };
        for v in e.variables() {
            let (name, idx, allowed) = match v {
                Var::Q(i) => ("q", i, true),
                Var::P(i) => ("p", i, scope == Scope::Phase),
            };
            if !allowed {
                self.push(
                    ViolationCode::ExpressionError,
                    path,
                    format!("`{name}{}` not allowed in a function of q only", idx + 1),
                );
                return None;
            }
            if idx >= self.n {
                self.push(
                    ViolationCode::ExpressionError,
                    path,
                    format!("unknown identifier `{name}{}` for n = {}", idx + 1, self.n),
                );
                return None;
            }
        }
        Some(e)
    }

    pub fn vector(
        &mut self,
        v: &[ExprSource],
        len: usize,
        path: &str,
        scope: Scope,
    ) -> Option<Vec<Expr>> {
        if v.len() != len {
            self.push(
                ViolationCode::DimensionMismatch,
                path,
                format!("expected {len} entries, found {}", v.len()),
            );
            return None;
        }
        let out: Vec<Option<Expr>> = v
            .iter()
            .enumerate()
            .map(|(i, s)| self.expr(s, &format!("{path}[{i}]"), scope))
            .collect();
        out.into_iter().collect()
    }

    pub fn matrix(
        &mut self,
        m: &[Vec<ExprSource>],
        rows: usize,
        cols: usize,
        path: &str,
    ) -> Option<Vec<Vec<Expr>>> {
        if m.len() != rows {
            self.push(
                ViolationCode::DimensionMismatch,
                path,
                format!("expected {rows} rows, found {}", m.len()),
            );
            return None;
        }
        let out: Vec<Option<Vec<Expr>>> = m
            .iter()
            .enumerate()
            .map(|(i, row)| self.vector(row, cols, &format!("{path}[{i}]"), Scope::Config))
            .collect();
        out.into_iter().collect()
    }
}

/// Expressions of a validated scenario.
#[derive(Debug, Clone)]
pub struct ParsedExprs {
    pub mass: Option<Vec<Vec<Expr>>>,
    pub potential: Option<Expr>,
    pub hamiltonian: Option<Expr>,
    pub b_field: Option<Vec<Vec<Expr>>>,
    pub constraints: Vec<Vec<Expr>>,
    pub momentum_constraints: Option<Vec<Expr>>,
    pub gamma: Option<Vec<Expr>>,
    pub epsilon: Option<Vec<Expr>>,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            message: e.to_string(),
            line: e.line(),
            column: e.column(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// The published JSON Schema of scenario documents.
    ///
    /// Structural only: dimensions, expression syntax and antisymmetry are checked by
    /// [`ScenarioSpec::validate`].
    pub fn json_schema() -> String {
        let schema = schemars::schema_for!(ScenarioSpec);
        serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
    }

    /// Check dimensions, expressions and antisymmetry of `B`.
    pub fn validate(&self) -> Result<ParsedExprs, ScenarioError> {
        let n = self.n;
        let mut v = Validator {
            n,
            violations: Vec::new(),
        };
        if n == 0 {
            v.push(
                ViolationCode::InvalidValue,
                "n",
                "dimension must be at least 1",
            );
            return Err(ScenarioError::Invalid(v.violations));
        }
        let mass = self
            .mass_matrix
            .as_ref()
            .and_then(|m| v.matrix(m, n, n, "mass_matrix"));
        let potential = self
            .potential
            .as_ref()
            .and_then(|p| v.expr(p, "potential", Scope::Config));
        let hamiltonian = self
            .hamiltonian
            .as_ref()
            .and_then(|h| v.expr(h, "hamiltonian", Scope::Phase));
        if self.hamiltonian.is_some() && (self.mass_matrix.is_some() || self.potential.is_some()) {
            v.push(
                ViolationCode::InvalidValue,
                "hamiltonian",
                "give either `hamiltonian` or `mass_matrix`/`potential`, not both",
            );
        }
        let b_field = self
            .b_field
            .as_ref()
            .and_then(|b| v.matrix(b, n, n, "b_field"));
        if let Some(b) = &b_field {
            check_antisymmetry(b, n, &self.sample_box, &mut v);
        }
        let k = self.constraints.len();
        if k >= n && k > 0 {
            v.push(
                ViolationCode::DimensionMismatch,
                "constraints",
                format!("need fewer than n = {n} constraints, found {k}"),
            );
        }
        let constraints: Vec<Option<Vec<Expr>>> = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, row)| v.vector(row, n, &format!("constraints[{i}]"), Scope::Config))
            .collect();
        let constraints: Vec<Vec<Expr>> = constraints.into_iter().flatten().collect();
        let momentum_constraints = self
            .momentum_constraints
            .as_ref()
            .and_then(|c| v.vector(c, k, "momentum_constraints", Scope::Phase));
        if self.hamiltonian.is_some() && k > 0 && self.momentum_constraints.is_none() {
            v.push(
                ViolationCode::InvalidValue,
                "momentum_constraints",
                "a general hamiltonian with constraints needs explicit momentum_constraints",
            );
        }
        let gamma = self
            .gamma
            .as_ref()
            .and_then(|g| v.vector(g, n, "gamma", Scope::Config));
        let epsilon = self
            .epsilon
            .as_ref()
            .and_then(|e| v.vector(e, 2 * n, "epsilon", Scope::Phase));
        if let Some(sym) = &self.symmetry {
            for (i, &c) in sym.iter().enumerate() {
                if c == 0 || c > n {
                    v.push(
                        ViolationCode::DimensionMismatch,
                        format!("symmetry[{i}]"),
                        format!("cyclic index {c} outside 1..={n}"),
                    );
                }
            }
        }
        check_box(&self.sample_box, n, "sample_box", &mut v);
        if let Some(b) = &self.momentum_box {
            check_box(b, n, "momentum_box", &mut v);
        }
        if let Some(init) = &self.initial_state {
            if init.q.len() != n || init.p.len() != n {
                v.push(
                    ViolationCode::DimensionMismatch,
                    "initial_state",
                    format!(
                        "q and p need {n} entries, found {} and {}",
                        init.q.len(),
                        init.p.len()
                    ),
                );
            }
        }
        if self.samples == Some(0) {
            v.push(
                ViolationCode::InvalidValue,
                "samples",
                "sample count must be positive",
            );
        }
        if v.violations.is_empty() {
            Ok(ParsedExprs {
                mass,
                potential,
                hamiltonian,
                b_field,
                constraints,
                momentum_constraints,
                gamma,
                epsilon,
            })
        } else {
            Err(ScenarioError::Invalid(v.violations))
        }
    }
}

fn check_box(b: &[[f64; 2]], n: usize, path: &str, v: &mut Validator) {
    if b.len() != n {
        v.push(
            ViolationCode::DimensionMismatch,
            path,
            format!("expected {n} intervals, found {}", b.len()),
        );
        return;
    }
    for (i, [lo, hi]) in b.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            v.push(
                ViolationCode::InvalidValue,
                format!("{path}[{i}]"),
                format!("bad interval [{lo}, {hi}]"),
            );
        }
    }
}

/// `𝔅_ij + 𝔅_ji = 0` and `𝔅_ii = 0`, checked at a few points of the box.
#[allow(clippy::needless_range_loop)]
fn check_antisymmetry(b: &[Vec<Expr>], n: usize, sample_box: &[[f64; 2]], v: &mut Validator) {
    let probes: Vec<Vec<f64>> = if sample_box.len() == n {
        let lo: Vec<f64> = sample_box.iter().map(|r| r[0]).collect();
        let hi: Vec<f64> = sample_box.iter().map(|r| r[1]).collect();
        let mid: Vec<f64> = sample_box.iter().map(|r| 0.5 * (r[0] + r[1])).collect();
        let skew: Vec<f64> = sample_box.iter().map(|r| 0.3 * r[0] + 0.7 * r[1]).collect();
        vec![lo, hi, mid, skew]
    } else {
        vec![vec![0.0; n]]
    };
    for i in 0..n {
        for j in i..n {
            let bad = probes.iter().any(|q| {
                let a = b[i][j].value(q, &[]);
                let c = b[j][i].value(q, &[]);
                let scale = 1.0 + a.abs().max(c.abs());
                !((a + c).abs() <= 1e-12 * scale)
            });
            if bad {
                let message = if i == j {
                    format!("diagonal entry b_field[{i}][{i}] must vanish")
                } else {
                    format!(
                        "b_field[{i}][{j}] and b_field[{j}][{i}] are not negatives of each other"
                    )
                };
                v.push(
                    ViolationCode::AntisymmetryViolation,
                    format!("b_field[{i}][{j}]"),
                    message,
                );
            }
        }
    }
}
