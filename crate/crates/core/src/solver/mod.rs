//! Local NLP solver for the transcribed problems.

mod ipm;
pub mod ldl;

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};

pub use ipm::solve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub feasibility_tolerance: f64,
    pub optimality_tolerance: f64,
    pub max_iterations: usize,
    /// Seconds; `None` is unlimited.
    pub max_wall_time: Option<f64>,
    #[serde(skip)]
    pub warm_start: Option<Vec<f64>>,
    /// Starting barrier parameter.
    pub initial_barrier: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feasibility_tolerance: 1e-5,
            optimality_tolerance: 1e-4,
            max_iterations: 300,
            max_wall_time: None,
            warm_start: None,
            initial_barrier: 0.1,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.feasibility_tolerance) || !positive(self.optimality_tolerance) {
            return Err(PlanError::Range("solver tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(PlanError::Range("max_iterations must be at least 1".into()));
        }
        if !positive(self.initial_barrier) {
            return Err(PlanError::Range("initial barrier must be positive".into()));
        }
        if self.max_wall_time.is_some_and(|t| t.is_nan() || t < 0.0) {
            return Err(PlanError::Range("max_wall_time must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub optimality: f64,
    pub barrier: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub solution: Vec<f64>,
    pub objective: f64,
    /// Scaled dual infeasibility / complementarity at the returned point.
    pub kkt_residual: f64,
    /// Largest unscaled constraint or bound violation.
    pub max_violation: f64,
    pub wall_time: f64,
    pub iterations: usize,
    /// Deterministic operation count (factorizations, solves, evaluations).
    pub work: u64,
    pub message: String,
    pub log: Vec<IterationRecord>,
}

impl SolveResult {
    fn failed(status: SolveStatus, x: Vec<f64>, start: Instant, message: &str) -> Self {
        SolveResult {
            status,
            solution: x,
            objective: f64::NAN,
            kkt_residual: f64::INFINITY,
            max_violation: f64::INFINITY,
            wall_time: start.elapsed().as_secs_f64(),
            iterations: 0,
            work: 0,
            message: message.to_string(),
            log: Vec::new(),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Iteration log as CSV (`iteration,objective,feasibility,optimality,barrier,regularization`).
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,objective,feasibility,optimality,barrier,regularization\n");
        for r in &self.log {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e}",
                r.iteration, r.objective, r.feasibility, r.optimality, r.barrier, r.regularization
            );
        }
        out
    }
}
