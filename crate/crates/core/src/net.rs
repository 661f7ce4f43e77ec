//! Fixed-topology recurrent controllers.
//!
//! Sensors and a constant bias unit feed a fully recurrent layer of `tanh`
//! internal neurons; the internal layer and the bias feed logistic motor
//! neurons, so every motor value lies in `(0, 1)`.
//!
//! Genome layout (fixed so genomes stay portable between runs):
//!
//! 1. sensor+bias -> internal, one row of `n_sensors + 1` weights per internal
//!    neuron, the bias weight last;
//! 2. internal -> internal, one row of `n_internal` weights per receiving neuron;
//! 3. internal -> motor, one row of `n_internal` weights per motor;
//! 4. bias -> motor, one weight per motor.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid topology {0}: every layer needs at least one neuron")]
    InvalidTopology(NetworkTopology),
    #[error("expected {expected} weights for topology {topology}, got {got}")]
    WeightCount {
        topology: NetworkTopology,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} sensor values, got {got}")]
    SensorCount { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("malformed genome file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkTopology {
    pub n_sensors: usize,
    pub n_internal: usize,
    pub n_motors: usize,
}

impl NetworkTopology {
    pub fn new(n_sensors: usize, n_internal: usize, n_motors: usize) -> Result<Self, NetError> {
        let t = NetworkTopology {
            n_sensors,
            n_internal,
            n_motors,
        };
        if n_sensors == 0 || n_internal == 0 || n_motors == 0 {
            return Err(NetError::InvalidTopology(t));
        }
        Ok(t)
    }

    /// Total genome length for this wiring.
    pub fn param_count(&self) -> usize {
        let (s, h, m) = (self.n_sensors, self.n_internal, self.n_motors);
        (s + 1) * h + h * h + (h + 1) * m
    }
}

impl fmt::Display for NetworkTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.n_sensors, self.n_internal, self.n_motors)
    }
}

pub fn param_count(topology: &NetworkTopology) -> usize {
    topology.param_count()
}

/// Something that maps a sensor vector to motor values and may carry state
/// across the steps of one episode.
pub trait Controller {
    fn reset(&mut self);
    fn act(&mut self, sensors: &[f64], motors: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    topology: NetworkTopology,
    weights: Vec<f64>,
    internal: Vec<f64>,
    scratch: Vec<f64>,
}

impl Network {
    pub fn new(topology: NetworkTopology, weights: Vec<f64>) -> Result<Self, NetError> {
        let expected = topology.param_count();
        if weights.len() != expected {
            return Err(NetError::WeightCount {
                topology,
                expected,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(NetError::NonFinite("weights"));
        }
        Ok(Network {
            topology,
            weights,
            internal: vec![0.0; topology.n_internal],
            scratch: vec![0.0; topology.n_internal],
        })
    }

    pub fn zeros(topology: NetworkTopology) -> Self {
        Network::new(topology, vec![0.0; topology.param_count()]).expect("zero weights are valid")
    }

    pub fn topology(&self) -> NetworkTopology {
        self.topology
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn internal_state(&self) -> &[f64] {
        &self.internal
    }

    pub fn reset(&mut self) {
        self.internal.iter_mut().for_each(|a| *a = 0.0);
    }

    /// One update step. Internal neurons see the previous step's internal
    /// activations; motors see the freshly updated ones.
    pub fn activate(&mut self, sensors: &[f64]) -> Result<Vec<f64>, NetError> {
        let mut motors = vec![0.0; self.topology.n_motors];
        self.activate_into(sensors, &mut motors)?;
        Ok(motors)
    }

    pub fn activate_into(&mut self, sensors: &[f64], motors: &mut [f64]) -> Result<(), NetError> {
        let NetworkTopology {
            n_sensors: s,
            n_motors: m,
            ..
        } = self.topology;
        if sensors.len() != s {
            return Err(NetError::SensorCount {
                expected: s,
                got: sensors.len(),
            });
        }
        if motors.len() != m {
            return Err(NetError::SensorCount {
                expected: m,
                got: motors.len(),
            });
        }
        if sensors.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("sensor values"));
        }
        self.step(sensors, motors);
        Ok(())
    }

    fn step(&mut self, sensors: &[f64], motors: &mut [f64]) {
        let NetworkTopology {
            n_sensors: s,
            n_internal: h,
            n_motors: m,
        } = self.topology;
        let (input_w, rest) = self.weights.split_at(h * (s + 1));
        let (rec_w, rest) = rest.split_at(h * h);
        let (out_w, bias_out) = rest.split_at(h * m);

        for (i, next) in self.scratch.iter_mut().enumerate() {
            let row = &input_w[i * (s + 1)..(i + 1) * (s + 1)];
            let mut acc = row[s];
            for (w, x) in row[..s].iter().zip(sensors) {
                acc += w * x;
            }
            let rec = &rec_w[i * h..(i + 1) * h];
            for (w, a) in rec.iter().zip(&self.internal) {
                acc += w * a;
            }
            *next = acc.tanh();
        }
        std::mem::swap(&mut self.internal, &mut self.scratch);

        for (k, out) in motors.iter_mut().enumerate() {
            let row = &out_w[k * h..(k + 1) * h];
            let mut acc = bias_out[k];
            for (w, a) in row.iter().zip(&self.internal) {
                acc += w * a;
            }
            *out = logistic(acc);
        }
    }

    /// Genome text: a `n_sensors n_internal n_motors` header line followed by
    /// one weight per line. Weights use the shortest round-trip decimal form.
    pub fn to_genome_text(&self) -> String {
        genome_to_text(&self.topology, &self.weights)
    }

    pub fn from_genome_text(text: &str) -> Result<Self, NetError> {
        let (topology, weights) = genome_from_text(text)?;
        Network::new(topology, weights)
    }
}

impl Controller for Network {
    fn reset(&mut self) {
        Network::reset(self);
    }

    fn act(&mut self, sensors: &[f64], motors: &mut [f64]) {
        debug_assert_eq!(sensors.len(), self.topology.n_sensors);
        debug_assert_eq!(motors.len(), self.topology.n_motors);
        self.step(sensors, motors);
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn genome_to_text(topology: &NetworkTopology, weights: &[f64]) -> String {
    let mut out = format!("{topology}\n");
    for w in weights {
        out.push_str(&format!("{w}\n"));
    }
    out
}

pub fn genome_from_text(text: &str) -> Result<(NetworkTopology, Vec<f64>), NetError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| NetError::Parse("empty file".into()))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(usize::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| NetError::Parse(format!("header `{header}`: {e}")))?;
    if counts.len() != 3 {
        return Err(NetError::Parse(format!(
            "header `{header}` must hold three counts"
        )));
    }
    let topology = NetworkTopology::new(counts[0], counts[1], counts[2])?;
    let weights: Vec<f64> = lines
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| NetError::Parse(format!("weight `{l}`: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if weights.len() != topology.param_count() {
        return Err(NetError::WeightCount {
            topology,
            expected: topology.param_count(),
            got: weights.len(),
        });
    }
    Ok((topology, weights))
}
