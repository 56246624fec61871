//! Randomly generated one-forms and scenarios for property sweeps and
//! benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};

use crate::scenario::expr::Expr;
use crate::scenario::spec::{ExprSource, ScenarioSpec};

/// A random polynomial of total degree at most `degree` in `q1..qn`, with
/// coefficients uniform in `[-scale, scale]`.
pub fn random_polynomial<R: Rng>(rng: &mut R, n: usize, degree: u32, scale: f64) -> Expr {
    let mut out = Expr::num(0.0);
    for exps in monomials(n, degree) {
        let c = rng.random_range(-scale..=scale);
        let mut term = Expr::num(c);
        for (i, &e) in exps.iter().enumerate() {
            if e > 0 {
                term = Expr::mul(term, Expr::pow(Expr::q(i), Expr::num(e as f64)));
            }
        }
        out = Expr::add(out, term);
    }
    out
}

/// Exponent vectors of all monomials of total degree `≤ degree`.
fn monomials(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(n, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, degree, &mut Vec::new(), &mut out);
    out
}

/// A one-form whose components are random polynomials.
pub fn random_polynomial_one_form<R: Rng>(
    rng: &mut R,
    n: usize,
    degree: u32,
    scale: f64,
) -> Vec<Expr> {
    (0..n)
        .map(|_| random_polynomial(rng, n, degree, scale))
        .collect()
}

/// `γ(q) = (½𝔅 + S) q + c` with random symmetric `S` and constant `c`, so
/// that `dγ = −B` holds exactly for the constant field `𝔅`.
pub fn linear_one_form_for<R: Rng>(rng: &mut R, b: &DMatrix<f64>, scale: f64) -> Vec<Expr> {
    let n = b.nrows();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x = rng.random_range(-scale..=scale);
            s[(i, j)] = x;
            s[(j, i)] = x;
        }
    }
    let m = b * 0.5 + s;
    (0..n)
        .map(|i| {
            let mut e = Expr::num(rng.random_range(-scale..=scale));
            for j in 0..n {
                e = Expr::add(e, Expr::mul(Expr::num(m[(i, j)]), Expr::q(j)));
            }
            e
        })
        .collect()
}

/// A random constant antisymmetric matrix.
pub fn random_constant_field<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let x = rng.random_range(-scale..=scale);
            b[(i, j)] = x;
            b[(j, i)] = -x;
        }
    }
    b
}

/// `V = −½|γ|²`, which makes `H∘γ` vanish for `H = ½|p|² + V`.
pub fn compensating_potential(gamma: &[Expr]) -> Expr {
    let sq = gamma.iter().fold(Expr::num(0.0), |acc, g| {
        Expr::add(acc, Expr::mul(g.clone(), g.clone()))
    });
    Expr::mul(Expr::num(-0.5), sq)
}

fn sources(v: &[Expr]) -> Vec<ExprSource> {
    v.iter().map(ExprSource::from_expr).collect()
}

/// An unconstrained scenario document with identity mass matrix.
pub fn magnetic_scenario(
    name: &str,
    gamma: &[Expr],
    potential: Option<&Expr>,
    b: Option<&DMatrix<f64>>,
    half_width: f64,
) -> ScenarioSpec {
    let n = gamma.len();
    ScenarioSpec {
        name: name.to_string(),
        description: None,
        n,
        mass_matrix: None,
        potential: potential.map(ExprSource::from_expr),
        hamiltonian: None,
        b_field: b.map(|m| {
            (0..n)
                .map(|i| (0..n).map(|j| ExprSource::Num(m[(i, j)])).collect())
                .collect()
        }),
        constraints: vec![],
        momentum_constraints: None,
        gamma: Some(sources(gamma)),
        epsilon: None,
        symmetry: None,
        sample_box: vec![[-half_width, half_width]; n],
        momentum_box: None,
        samples: None,
        initial_state: None,
        tolerances: None,
    }
}
