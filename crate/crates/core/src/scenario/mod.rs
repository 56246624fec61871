pub mod build;
pub mod expr;
pub mod report;
pub mod spec;

pub use build::{construct_b, Scenario, ScenarioLoadError};
pub use report::{compare_reports, CheckReport, SampleRow, ScenarioFailure, SuiteReport};
pub use spec::{ExprSource, ScenarioError, ScenarioSpec, Violation, ViolationCode};
