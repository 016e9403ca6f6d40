//! Scenario files, verification suites, experiment pipelines and report emission.

pub mod experiments;
pub mod report;
pub mod scenario;
pub mod suites;

pub use report::{ReportWriter, VerificationReport};
pub use scenario::{Instance, Params, Scenario};
pub use suites::{run_suite, SuiteContext, SUITES};
