//! Black-box optimizers behind one ask/tell interface.
//!
//! * [`Sss`]: stochastic steady state, a (μ+μ) evolution strategy that
//!   re-evaluates its parents every generation.
//! * [`CmaEs`]: covariance matrix adaptation (Hansen & Ostermeier).
//! * [`Xnes`]: exponential natural evolution strategy.
//! * [`Snes`]: separable natural evolution strategy.
//!
//! Higher fitness is better everywhere. `ask` and `tell` must strictly
//! alternate, and `tell` expects the fitnesses in the order `ask` returned
//! the candidates.

mod checkpoint;
mod cmaes;
mod snes;
mod sss;
mod xnes;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::rng::SimRng;

pub use cmaes::CmaEs;
pub use snes::Snes;
pub use sss::{sss_mutate, Sss};
pub use xnes::Xnes;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("ask called twice without an intervening tell")]
    AskPending,
    #[error("tell called without a pending ask")]
    NoPendingAsk,
    #[error("expected {expected} fitness values, got {got}")]
    FitnessCount { expected: usize, got: usize },
    #[error("non-finite fitness at candidate {0}")]
    NonFiniteFitness(usize),
    #[error("search distribution degenerated: {0}")]
    Degenerate(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sss,
    #[serde(alias = "cma-es", alias = "cma")]
    Cmaes,
    Xnes,
    Snes,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sss => "sss",
            Algorithm::Cmaes => "cmaes",
            Algorithm::Xnes => "xnes",
            Algorithm::Snes => "snes",
        }
    }

    pub fn is_gaussian(self) -> bool {
        !matches!(self, Algorithm::Sss)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = OptimizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sss" => Ok(Algorithm::Sss),
            "cmaes" | "cma-es" | "cma" => Ok(Algorithm::Cmaes),
            "xnes" => Ok(Algorithm::Xnes),
            "snes" => Ok(Algorithm::Snes),
            other => Err(OptimizerError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Settings for any of the four optimizers. Zero means "use the default" for
/// the population size, step size and learning rates.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Filled in from the environment's network when loaded from a file.
    pub dimension: usize,
    pub lambda: usize,
    /// SSS: per-coordinate mutation probability.
    pub mutrate: f64,
    /// SSS: standard deviation of the Gaussian perturbation.
    pub mutation_std: f64,
    /// SSS: fraction of mutations that redraw the value uniformly instead.
    pub replace_fraction: f64,
    /// SSS: weights are initialized in and clipped to `[-weight_range, weight_range]`.
    pub weight_range: f64,
    /// SSS: selection adds uniform noise in `[-fitness_noise, fitness_noise]`.
    pub fitness_noise: f64,
    /// Gaussian methods: initial mean drawn uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
    pub sigma0: f64,
    pub lr_mean: f64,
    pub lr_sigma: f64,
    pub lr_shape: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Cmaes,
            dimension: 0,
            lambda: 0,
            mutrate: 0.02,
            mutation_std: 0.2,
            replace_fraction: 0.0,
            weight_range: 8.0,
            fitness_noise: 0.0,
            init_range: 1.0,
            sigma0: 0.0,
            lr_mean: 0.0,
            lr_sigma: 0.0,
            lr_shape: 0.0,
        }
    }
}

/// SSS population size when none is configured.
pub const SSS_DEFAULT_LAMBDA: usize = 20;

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, dimension: usize) -> Self {
        OptimizerConfig {
            algorithm,
            dimension,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let err = |m: String| Err(OptimizerError::Config(m));
        if self.dimension == 0 {
            return err("dimension must be at least 1".into());
        }
        if self.lambda == 1 {
            return err("population size must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.mutrate) {
            return err(format!("mutrate {} outside [0, 1]", self.mutrate));
        }
        if !(0.0..=1.0).contains(&self.replace_fraction) {
            return err(format!(
                "replace_fraction {} outside [0, 1]",
                self.replace_fraction
            ));
        }
        for (name, v) in [
            ("mutation_std", self.mutation_std),
            ("fitness_noise", self.fitness_noise),
            ("sigma0", self.sigma0),
            ("lr_mean", self.lr_mean),
            ("lr_sigma", self.lr_sigma),
            ("lr_shape", self.lr_shape),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return err(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        for (name, v) in [("weight_range", self.weight_range), ("init_range", self.init_range)] {
            if !(v.is_finite() && v > 0.0) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Population size after applying defaults.
    pub fn effective_lambda(&self) -> usize {
        match (self.lambda, self.algorithm) {
            (0, Algorithm::Sss) => SSS_DEFAULT_LAMBDA,
            (0, _) => default_lambda(self.dimension),
            (l, _) => l,
        }
    }

    /// Step size after applying defaults.
    pub fn effective_sigma0(&self) -> f64 {
        if self.sigma0 > 0.0 {
            return self.sigma0;
        }
        match self.algorithm {
            Algorithm::Xnes => 1.0,
            _ => 0.5 * self.init_range,
        }
    }
}

/// `4 + floor(3 ln n)`, never below 4.
pub fn default_lambda(n: usize) -> usize {
    let n = n.max(1) as f64;
    (4 + (3.0 * n.ln()).floor() as usize).max(4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub params: Vec<f64>,
    /// SSS only: this entry is an unchanged parent submitted for re-evaluation.
    pub reevaluated_parent: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub members: Vec<Candidate>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn params(&self) -> impl Iterator<Item = &[f64]> {
        self.members.iter().map(|c| c.params.as_slice())
    }
}

pub trait Optimizer: Send {
    fn algorithm(&self) -> Algorithm;
    fn dimension(&self) -> usize;
    fn generation(&self) -> usize;
    fn ask(&mut self) -> Result<Population, OptimizerError>;
    fn tell(&mut self, fitness: &[f64]) -> Result<(), OptimizerError>;
    /// The distribution mean, or the best parent for SSS.
    fn center(&self) -> Vec<f64>;
    /// Flat text dump; only valid between generations.
    fn checkpoint(&self) -> Result<String, OptimizerError>;
}

/// Builds an optimizer; the random initial point is drawn from `rng`, which
/// the optimizer then keeps for sampling.
pub fn build(config: &OptimizerConfig, rng: SimRng) -> Result<Box<dyn Optimizer>, OptimizerError> {
    config.validate()?;
    Ok(match config.algorithm {
        Algorithm::Sss => Box::new(Sss::new(config, rng)?),
        Algorithm::Cmaes => Box::new(CmaEs::new(config, None, rng)?),
        Algorithm::Xnes => Box::new(Xnes::new(config, None, rng)?),
        Algorithm::Snes => Box::new(Snes::new(config, None, rng)?),
    })
}

/// Rebuilds an optimizer from [`Optimizer::checkpoint`] output.
pub fn restore(config: &OptimizerConfig, text: &str) -> Result<Box<dyn Optimizer>, OptimizerError> {
    config.validate()?;
    let mut r = checkpoint::Reader::new(text);
    let algorithm: String = r.scalar("algorithm")?;
    let algorithm: Algorithm = algorithm.parse()?;
    if algorithm != config.algorithm {
        return Err(OptimizerError::Checkpoint(format!(
            "checkpoint holds {algorithm}, config asks for {}",
            config.algorithm
        )));
    }
    Ok(match algorithm {
        Algorithm::Sss => Box::new(Sss::restore(config, &mut r)?),
        Algorithm::Cmaes => Box::new(CmaEs::restore(config, &mut r)?),
        Algorithm::Xnes => Box::new(Xnes::restore(config, &mut r)?),
        Algorithm::Snes => Box::new(Snes::restore(config, &mut r)?),
    })
}

pub(crate) fn check_fitness(fitness: &[f64], expected: usize) -> Result<(), OptimizerError> {
    if fitness.len() != expected {
        return Err(OptimizerError::FitnessCount {
            expected,
            got: fitness.len(),
        });
    }
    if let Some(i) = fitness.iter().position(|f| !f.is_finite()) {
        return Err(OptimizerError::NonFiniteFitness(i));
    }
    Ok(())
}

/// Candidate indices from best to worst; equal fitness keeps sample order.
pub(crate) fn rank_descending(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    order
}

pub(crate) fn all_equal(fitness: &[f64]) -> bool {
    fitness.windows(2).all(|w| w[0] == w[1])
}

/// NES rank utilities for ranks 1..=λ: `max(0, ln(λ/2 + 1) - ln i)`
/// normalized to sum 1, minus the `1/λ` baseline. Non-increasing, sum 0.
pub fn nes_utilities(lambda: usize) -> Vec<f64> {
    let l = lambda as f64;
    let raw: Vec<f64> = (1..=lambda)
        .map(|i| ((l / 2.0 + 1.0).ln() - (i as f64).ln()).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total - 1.0 / l).collect()
}

pub(crate) fn standard_normal_vec(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

pub(crate) fn uniform_vec(rng: &mut SimRng, n: usize, half_range: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(-half_range..=half_range))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lambda_values() {
        assert_eq!(default_lambda(10), 10);
        assert_eq!(default_lambda(151), 19);
        assert_eq!(default_lambda(1), 4);
        assert_eq!(default_lambda(2), 6);
    }

    #[test]
    fn utilities_shape() {
        for lambda in [2usize, 4, 10, 19, 50] {
            let u = nes_utilities(lambda);
            assert_eq!(u.len(), lambda);
            assert!(u.windows(2).all(|w| w[0] >= w[1]));
            assert!(u.iter().sum::<f64>().abs() < 1e-12);
        }
        let u = nes_utilities(2);
        assert!((u[0] - 0.5).abs() < 1e-15 && (u[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        assert_eq!(rank_descending(&[0.1, 0.5, 0.5, 0.2]), vec![1, 2, 3, 0]);
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::new(Algorithm::Xnes, 3);
        assert!(c.validate().is_ok());
        c.lambda = 1;
        assert!(c.validate().is_err());
        c.lambda = 0;
        c.mutrate = 1.5;
        assert!(c.validate().is_err());
        c.mutrate = 0.1;
        c.dimension = 0;
        assert!(c.validate().is_err());
        assert_eq!("CMA-ES".parse::<Algorithm>().unwrap(), Algorithm::Cmaes);
        assert!("neat".parse::<Algorithm>().is_err());
    }
}
