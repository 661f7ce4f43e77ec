//! Evolving neural controllers that hold up under environmental variation.
//!
//! The pieces: a small recurrent network ([`net`]), four black-box
//! optimizers behind one ask/tell interface ([`optimizers`]), the evaluation
//! protocol with shared variation matrices and post-evaluation model
//! selection ([`protocol`]), three benchmark environments ([`env`]) and an
//! experiment harness with rank statistics ([`harness`]).

pub mod env;
pub mod harness;
pub mod net;
pub mod optimizers;
pub mod protocol;
pub mod rng;

pub use env::cartpole2::DoublePole;
pub use env::racing::Racing;
pub use env::swarm::Swarm;
pub use env::{EnvError, Environment};
pub use harness::{run_experiment, EnvConfig, ExperimentConfig, HarnessError, SummaryTable};
pub use net::{Controller, Network, NetworkTopology};
pub use optimizers::{Algorithm, Optimizer, OptimizerConfig};
pub use protocol::{ConditionRanges, ProtocolConfig, RunResult, VariationMatrix};
