//! Command-line front end: argument parsing, dispatch and exit codes.
//!
//! Exit codes: `0` when every verdict is PASS or VACUOUS, `1` on any FAIL,
//! `2` on input errors, which are also described as JSON on stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use magnomech_core::hj::Verdict;
use magnomech_core::integrator::{integrate, FieldKind, IntegratorOptions};
use magnomech_core::scenario::{
    construct_b, Scenario, ScenarioError, ScenarioLoadError, ScenarioSpec,
};
use magnomech_core::suite::{check_directory, run_check, CheckKind, CheckOptions};
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "magnomech",
    version,
    about = "Magnetic and nonholonomic Hamilton-Jacobi checks"
)]
pub struct Cli {
    /// Seed for sample generation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u32,
    /// Override the number of samples per check.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a trajectory from the scenario's initial state.
    Simulate(SimulateArgs),
    /// Run a check.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Replace the magnetic field by B = -dγ and write the new scenario.
    ConstructB {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the JSON Schema of scenario documents.
    Schema,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    #[arg(long, value_parser = parse_field)]
    pub field: FieldKind,
    #[arg(long = "t-end")]
    pub t_end: f64,
    #[arg(long)]
    pub dt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the projection onto M after each constrained step.
    #[arg(long)]
    pub no_project: bool,
}

fn parse_field(s: &str) -> Result<FieldKind, String> {
    s.parse()
        .map_err(|e: magnomech_core::MagnoError| e.to_string())
}

#[derive(Debug, Args)]
pub struct SingleCheck {
    pub scenario: PathBuf,
    /// Use the symmetry-reduced system.
    #[arg(long)]
    pub reduced: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CheckCommand {
    /// Type I Hamilton-Jacobi check.
    Hj1(SingleCheck),
    /// Type II Hamilton-Jacobi check.
    Hj2(SingleCheck),
    /// Compatibility, dimensions and closedness of B.
    Geometry {
        scenario: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Every applicable check on every scenario of a directory.
    All {
        dir: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// An input problem, reported on stderr as JSON with exit code 2.
#[derive(Debug)]
pub struct InputError {
    pub code: String,
    pub message: String,
    pub details: serde_json::Value,
}

impl InputError {
    fn new(code: &str, message: impl Into<String>) -> Self {
        InputError {
            code: code.into(),
            message: message.into(),
            details: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> String {
        let mut v = json!({"error": self.code, "message": self.message});
        if !self.details.is_null() {
            v["violations"] = self.details.clone();
        }
        v.to_string()
    }
}

impl From<ScenarioError> for InputError {
    fn from(e: ScenarioError) -> Self {
        let violations = e.violations();
        let code = serde_json::to_value(violations[0].code)
            .ok()
            .and_then(|c| c.as_str().map(String::from))
            .unwrap_or_else(|| "invalid_scenario".into());
        InputError {
            code,
            message: e.to_string(),
            details: serde_json::to_value(&violations).unwrap_or_default(),
        }
    }
}

impl From<ScenarioLoadError> for InputError {
    fn from(e: ScenarioLoadError) -> Self {
        match e {
            ScenarioLoadError::Io { .. } => InputError::new("io_error", e.to_string()),
            ScenarioLoadError::Scenario(s) => s.into(),
        }
    }
}

impl From<magnomech_core::MagnoError> for InputError {
    fn from(e: magnomech_core::MagnoError) -> Self {
        use magnomech_core::MagnoError as E;
        let code = match &e {
            E::NumericalDomain { .. } => "numerical_domain",
            E::DegenerateForm { .. } => "degenerate_form",
            E::DegenerateConstraint { .. } => "degenerate_constraint",
            E::Compatibility { .. } => "compatibility",
            E::ImageNotInM { .. } => "image_not_in_m",
            E::ImageNotInK { .. } => "image_not_in_k",
            E::NotPositiveDefinite { .. } => "not_positive_definite",
            E::DimensionMismatch { .. } => "dimension_mismatch",
            E::InvalidArgument(_) => "invalid_argument",
            E::Expr(_) => "expression_error",
        };
        InputError::new(code, e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> InputError {
    InputError::new("io_error", format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), InputError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn verdict_code(v: Verdict) -> i32 {
    if v.is_fail() {
        EXIT_FAIL
    } else {
        EXIT_OK
    }
}

/// Run a parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, InputError> {
    let opts = CheckOptions {
        seed: cli.seed,
        samples: cli.samples,
    };
    match &cli.command {
        Command::Simulate(args) => simulate(args, out),
        Command::ConstructB {
            scenario,
            out: target,
        } => {
            let text = fs::read_to_string(scenario).map_err(|e| io_error(scenario, e))?;
            let spec = ScenarioSpec::from_json(&text)?;
            let built = construct_b(&spec)?;
            write_file(target, &(built.to_json() + "\n"))?;
            let _ = writeln!(out, "wrote {}", target.display());
            Ok(EXIT_OK)
        }
        Command::Schema => {
            let _ = write!(out, "{}", ScenarioSpec::json_schema());
            Ok(EXIT_OK)
        }
        Command::Check(CheckCommand::All { dir, report }) => {
            let suite = check_directory(dir, &opts).map_err(|e| io_error(dir, e))?;
            let _ = write!(out, "{}", suite.table());
            if let Some(path) = report {
                write_file(path, &(suite.to_json() + "\n"))?;
            }
            if !suite.errors.is_empty() {
                let first = &suite.errors[0];
                return Err(InputError {
                    code: first.code.clone(),
                    message: format!(
                        "{} scenario problem(s); first: {}: {}",
                        suite.errors.len(),
                        first.scenario,
                        first.message
                    ),
                    details: serde_json::to_value(&suite.errors).unwrap_or_default(),
                });
            }
            Ok(verdict_code(suite.verdict))
        }
        Command::Check(cmd) => {
            let (kind, path, reduced, report) = match cmd {
                CheckCommand::Hj1(a) => (CheckKind::Hj1, &a.scenario, a.reduced, &a.report),
                CheckCommand::Hj2(a) => (CheckKind::Hj2, &a.scenario, a.reduced, &a.report),
                CheckCommand::Geometry { scenario, report } => {
                    (CheckKind::Geometry, scenario, false, report)
                }
                CheckCommand::All { .. } => unreachable!("handled above"),
            };
            let scenario = Scenario::from_path(path)?;
            let r = run_check(&scenario, kind, reduced, &opts)?;
            let _ = write!(out, "{}", r.table());
            if let Some(p) = report {
                write_file(p, &(r.to_json() + "\n"))?;
            }
            Ok(verdict_code(r.verdict))
        }
    }
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32, InputError> {
    let s = Scenario::from_path(&args.scenario)?;
    let z0 = s.initial_state()?.ok_or_else(|| {
        InputError::new(
            "invalid_value",
            format!("scenario `{}` has no initial_state", s.name()),
        )
    })?;
    let opts = IntegratorOptions {
        dt: args.dt,
        t_end: args.t_end,
        project: !args.no_project,
    };
    let traj = integrate(
        args.field,
        &s.constraints,
        &s.hamiltonian,
        &s.magnetic,
        &z0,
        opts,
    )?;
    if let Some(path) = &args.out {
        let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
        traj.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| io_error(path, e))?;
    }
    let n = s.n;
    let momentum = |z: &nalgebra::DVector<f64>| z.rows(n, n).norm();
    let _ = writeln!(out, "steps            {}", traj.times.len() - 1);
    let _ = writeln!(
        out,
        "t_end            {}",
        traj.times.last().copied().unwrap_or(0.0)
    );
    let _ = writeln!(out, "|p(0)|           {:.12}", momentum(&z0));
    let _ = writeln!(out, "|p(t_end)|       {:.12}", momentum(traj.last()));
    let _ = writeln!(out, "max |dH|         {:.3e}", traj.max_energy_drift());
    let _ = writeln!(
        out,
        "max constraint   {:.3e}",
        traj.max_constraint_residual()
    );
    let _ = writeln!(out, "max drift        {:.3e}", traj.max_drift());
    if let Some(reason) = &traj.aborted {
        let _ = writeln!(out, "aborted: {reason}");
        return Ok(EXIT_FAIL);
    }
    Ok(EXIT_OK)
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let _ = writeln!(
                err,
                "{}",
                InputError::new("usage", e.to_string().trim_end()).to_json()
            );
            return EXIT_INPUT;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            EXIT_INPUT
        }
    }
}
