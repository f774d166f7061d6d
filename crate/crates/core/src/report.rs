//! Report structures shared by the validation-style operations.

use serde::{Deserialize, Serialize};

/// One named check with its worst observed residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Check { name: name.into(), residual, pass: residual <= tol }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Check { name: name.into(), residual: if pass { 0.0 } else { 1.0 }, pass }
    }
}

/// A list of checks; passes iff every check passes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn new() -> Self {
        Report { checks: Vec::new(), pass: true }
    }

    pub fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn residual(&mut self, name: impl Into<String>, residual: f64, tol: f64) {
        self.push(Check::new(name, residual, tol));
    }

    pub fn flag(&mut self, name: impl Into<String>, pass: bool) {
        self.push(Check::flag(name, pass));
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn merge(&mut self, prefix: &str, other: Report) {
        for check in other.checks {
            self.push(Check {
                name: format!("{prefix}.{}", check.name),
                residual: check.residual,
                pass: check.pass,
            });
        }
    }
}
