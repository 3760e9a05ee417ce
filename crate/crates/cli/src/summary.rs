use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// One checked inequality `lhs ≤ rhs + slack`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    pub name: &'static str,
    pub inequality: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub passed: bool,
}

impl Certification {
    pub fn check(name: &'static str, inequality: &'static str, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            name,
            inequality,
            lhs,
            rhs,
            slack,
            passed: lhs <= rhs + slack,
        }
    }
}

pub const TERMINAL_RESIDUAL_BOUND: &str = "terminal_residual_bound";
pub const PATH_HOMOTOPY_BOUND: &str = "path_homotopy_bound";
pub const EXPONENTIAL_RESIDUAL_DECAY: &str = "exponential_residual_decay";
pub const PARTITION_STEP_BOUND: &str = "partition_step_bound";
pub const CUMULATIVE_PARTITION_BOUND: &str = "cumulative_partition_bound";
pub const PARTITION_LIPSCHITZ: &str = "partition_lipschitz";
pub const PARTITION_CONTAINMENT: &str = "partition_containment";
pub const RESTART_GEOMETRIC_BOUND: &str = "restart_geometric_bound";
pub const INVERSE_RESIDUAL_BOUND: &str = "inverse_residual_bound";
pub const DERIVATIVE_CONSISTENCY: &str = "derivative_consistency";

/// JSON run summary. Contains no timing or path data, so identical inputs give
/// identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: Value,
    pub result: Value,
    pub certifications: Vec<Certification>,
    pub error: Option<String>,
    pub all_passed: bool,
}

impl RunSummary {
    pub fn new(command: &'static str, config: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            config: serde_json::to_value(config).expect("config serializes"),
            result: Value::Null,
            certifications: Vec::new(),
            error: None,
            all_passed: false,
        }
    }

    pub fn certify(&mut self, c: Certification) {
        self.certifications.push(c);
    }

    pub fn fail(&mut self, message: impl Into<String>) {
        self.error = Some(message.into());
    }

    /// Fixes `all_passed` and writes `summary.json` under `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<Self, CliError> {
        self.all_passed = self.error.is_none() && self.certifications.iter().all(|c| c.passed);
        let mut text = serde_json::to_string_pretty(&self).expect("summary serializes");
        text.push('\n');
        fs::write(dir.join("summary.json"), text).map_err(|e| CliError::io(dir, e))?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_is_inclusive() {
        assert!(Certification::check("a", "x <= y", 1.0, 1.0, 0.0).passed);
        assert!(Certification::check("a", "x <= y", 1.0 + 1e-9, 1.0, 1e-8).passed);
        assert!(!Certification::check("a", "x <= y", 1.1, 1.0, 1e-8).passed);
        assert!(!Certification::check("a", "x <= y", f64::NAN, 1.0, 1e-8).passed);
    }
}
