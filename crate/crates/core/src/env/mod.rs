//! Benchmark environments. Each one runs a single episode for a controller
//! under one row of environmental conditions and returns its score.

pub mod cartpole2;
pub mod racing;
pub mod swarm;

use thiserror::Error;

use crate::net::{Controller, NetworkTopology};
use crate::protocol::ConditionRanges;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("expected {expected} condition values, got {got}")]
    ConditionCount { expected: usize, got: usize },
    #[error("condition {index} = {value} outside [{min}, {max}]")]
    ConditionRange {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid environment setup: {0}")]
    Setup(String),
}

pub trait Environment: Sync {
    fn name(&self) -> &'static str;

    /// Controller shape expected by `run_episode`.
    fn topology(&self) -> NetworkTopology;

    /// Variation range of each environmental parameter, in condition-row order.
    fn condition_ranges(&self) -> ConditionRanges;

    /// Runs one episode. The controller is reset before the episode starts;
    /// multi-agent environments clone it once per agent.
    fn run_episode<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
    ) -> Result<f64, EnvError>;
}

pub(crate) fn check_conditions(ranges: &ConditionRanges, row: &[f64]) -> Result<(), EnvError> {
    if row.len() != ranges.len() {
        return Err(EnvError::ConditionCount {
            expected: ranges.len(),
            got: row.len(),
        });
    }
    for (index, (&value, &(min, max))) in row.iter().zip(ranges.bounds()).enumerate() {
        if !(value >= min && value <= max) {
            return Err(EnvError::ConditionRange {
                index,
                value,
                min,
                max,
            });
        }
    }
    Ok(())
}
