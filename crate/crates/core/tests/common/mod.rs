#![allow(dead_code)]

use std::sync::Mutex;

use robevo::env::{EnvError, Environment};
use robevo::net::{Controller, NetworkTopology};
use robevo::protocol::ConditionRanges;

/// Small synthetic environment. The episode score is the network's motor
/// output on the condition row, scaled by the first condition, so it depends
/// on both the genome and the row. Every row it sees is logged.
pub struct Probe {
    pub log: Mutex<Vec<Vec<u64>>>,
}

impl Probe {
    pub fn new() -> Self {
        Probe {
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn drain(&self) -> Vec<Vec<u64>> {
        std::mem::take(&mut *self.log.lock().unwrap())
    }
}

impl Environment for Probe {
    fn name(&self) -> &'static str {
        "probe"
    }

    fn topology(&self) -> NetworkTopology {
        NetworkTopology::new(2, 2, 1).unwrap()
    }

    fn condition_ranges(&self) -> ConditionRanges {
        ConditionRanges::new(vec![(0.0, 1.0), (-1.0, 1.0)]).unwrap()
    }

    fn run_episode<C: Controller + Clone>(&self, controller: &C, row: &[f64]) -> Result<f64, EnvError> {
        self.log
            .lock()
            .unwrap()
            .push(row.iter().map(|v| v.to_bits()).collect());
        let mut c = controller.clone();
        c.reset();
        let mut m = [0.0];
        c.act(row, &mut m);
        c.act(row, &mut m);
        Ok(m[0] * row[0])
    }
}

/// Episode score is the first condition itself, whatever the controller.
pub struct Uniform;

impl Environment for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn topology(&self) -> NetworkTopology {
        NetworkTopology::new(1, 1, 1).unwrap()
    }

    fn condition_ranges(&self) -> ConditionRanges {
        ConditionRanges::new(vec![(0.0, 1.0)]).unwrap()
    }

    fn run_episode<C: Controller + Clone>(&self, _: &C, row: &[f64]) -> Result<f64, EnvError> {
        Ok(row[0])
    }
}
