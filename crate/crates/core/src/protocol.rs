//! Robust evaluation protocol.
//!
//! * Every candidate of a generation is scored on the same evaluation matrix
//!   (EVM): one row of environmental conditions per episode, fitness being the
//!   mean episode score.
//! * The EVM is redrawn every `round(1/F)` generations (never when `F = 0`).
//! * The fittest candidate of each generation is re-scored on a separate
//!   post-evaluation matrix (PEVM) that is drawn once from its own random
//!   stream and never changes. That score, the *performance*, decides which
//!   genome a run returns.
//! * A run stops once evaluation plus post-evaluation episodes reach the
//!   budget.

use std::collections::HashMap;

use log::debug;
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::net::{Network, NetworkTopology};
use crate::optimizers::{self, OptimizerConfig, OptimizerError};
use crate::rng::{stream_rng, SimRng, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error("invalid condition ranges: {0}")]
    Ranges(String),
    #[error("matrix role {0:?} cannot be used here")]
    WrongRole(MatrixRole),
    #[error("episode failed: {0}")]
    Episode(#[from] EnvError),
    #[error("episode returned non-finite score {0}")]
    NonFiniteScore(f64),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("genome length {got} does not match the environment's network ({expected})")]
    GenomeLength { expected: usize, got: usize },
}

/// Closed interval per environmental parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRanges {
    bounds: Vec<(f64, f64)>,
}

impl ConditionRanges {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, ProtocolError> {
        if bounds.is_empty() {
            return Err(ProtocolError::Ranges("need at least one parameter".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ProtocolError::Ranges(format!("parameter {i}: [{lo}, {hi}]")));
            }
        }
        Ok(ConditionRanges { bounds })
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRole {
    Evaluation,
    PostEvaluation,
}

/// Episodes × parameters matrix of environmental conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    role: MatrixRole,
    generation: usize,
}

impl VariationMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn role(&self) -> MatrixRole {
        self.role
    }

    /// Generation at which the matrix was last drawn.
    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols)
    }
}

/// Draws each entry independently and uniformly within its column's range.
pub fn generate_matrix(
    rng: &mut SimRng,
    ranges: &ConditionRanges,
    n_rows: usize,
    role: MatrixRole,
) -> VariationMatrix {
    assert!(n_rows >= 1, "a variation matrix needs at least one row");
    let cols = ranges.len();
    let mut data = Vec::with_capacity(n_rows * cols);
    for _ in 0..n_rows {
        for &(lo, hi) in ranges.bounds() {
            data.push(if lo == hi { lo } else { rng.random_range(lo..=hi) });
        }
    }
    VariationMatrix {
        rows: n_rows,
        cols,
        data,
        role,
        generation: 0,
    }
}

/// Generations between regenerations for frequency `f`; `None` when `f = 0`.
pub fn regeneration_period(f: f64) -> Option<usize> {
    if f <= 0.0 {
        None
    } else {
        Some(((1.0 / f).round() as usize).max(1))
    }
}

/// Redraws an evaluation matrix when `generation` falls on the schedule.
/// Post-evaluation matrices are never touched. Returns whether it redrew.
pub fn maybe_regenerate(
    matrix: &mut VariationMatrix,
    generation: usize,
    f: f64,
    ranges: &ConditionRanges,
    rng: &mut SimRng,
) -> bool {
    if matrix.role == MatrixRole::PostEvaluation {
        return false;
    }
    match regeneration_period(f) {
        Some(period) if generation.is_multiple_of(period) => {
            let mut fresh = generate_matrix(rng, ranges, matrix.rows, matrix.role);
            fresh.generation = generation;
            *matrix = fresh;
            true
        }
        _ => false,
    }
}

/// Mean episode score of one genome over every row of `matrix`; the network
/// is reset before each episode.
pub fn evaluate<E: Environment>(
    env: &E,
    network: &Network,
    matrix: &VariationMatrix,
) -> Result<f64, ProtocolError> {
    let mut total = 0.0;
    for row in matrix.iter_rows() {
        let mut net = network.clone();
        net.reset();
        let score = env.run_episode(&net, row)?;
        if !score.is_finite() {
            return Err(ProtocolError::NonFiniteScore(score));
        }
        total += score;
    }
    Ok(total / matrix.n_rows() as f64)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Episodes per fitness evaluation.
    pub nee: usize,
    /// Post-evaluation episodes.
    pub nve: usize,
    /// EVM regeneration frequency, `1/G` for a period of `G` generations.
    pub f: f64,
    /// Total episode budget, evaluation and post-evaluation together.
    pub budget: u64,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let err = |m: String| Err(ProtocolError::Config(m));
        if self.nee == 0 || self.nve == 0 {
            return err("nee and nve must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.f) {
            return err(format!("f = {} outside [0, 1]", self.f));
        }
        if self.f > 0.0 {
            let g = 1.0 / self.f;
            if (g - g.round()).abs() > 1e-6 * g {
                return err(format!("f = {} is not the reciprocal of an integer", self.f));
            }
        }
        if self.budget < self.nee as u64 {
            return err(format!("budget {} below nee {}", self.budget, self.nee));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Cumulative episodes after this generation's post-evaluation.
    pub episodes_used: u64,
    pub best_fitness: f64,
    pub best_performance: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub topology: NetworkTopology,
    pub best_genome: Vec<f64>,
    pub best_performance: f64,
    /// Episode counter at the end of the generation that produced the best genome.
    pub evaluation_at_best: u64,
    pub generations: Vec<GenerationRecord>,
    pub episodes_used: u64,
    pub budget: u64,
    /// Set when the budget could not pay for even one full generation.
    pub budget_underrun: bool,
}

impl RunResult {
    pub fn best_network(&self) -> Network {
        Network::new(self.topology, self.best_genome.clone()).expect("validated genome")
    }
}

/// What an observer sees after each generation.
pub struct GenerationView<'a> {
    pub record: &'a GenerationRecord,
    pub evaluation: &'a VariationMatrix,
    pub post_evaluation: &'a VariationMatrix,
    pub population: &'a optimizers::Population,
    pub fitness: &'a [f64],
}

pub fn run<E: Environment>(
    protocol: &ProtocolConfig,
    optimizer: &OptimizerConfig,
    env: &E,
) -> Result<RunResult, ProtocolError> {
    run_observed(protocol, optimizer, env, |_| {})
}

/// Genome bits; equal keys mean bit-identical genomes.
fn genome_key(params: &[f64]) -> Vec<u64> {
    params.iter().map(|p| p.to_bits()).collect()
}

pub fn run_observed<E: Environment>(
    protocol: &ProtocolConfig,
    optimizer: &OptimizerConfig,
    env: &E,
    mut observe: impl FnMut(&GenerationView),
) -> Result<RunResult, ProtocolError> {
    protocol.validate()?;
    let topology = env.topology();
    let dimension = topology.param_count();
    let opt_config = OptimizerConfig {
        dimension,
        ..optimizer.clone()
    };
    if optimizer.dimension != 0 && optimizer.dimension != dimension {
        return Err(ProtocolError::GenomeLength {
            expected: dimension,
            got: optimizer.dimension,
        });
    }
    let ranges = env.condition_ranges();
    let mut evm_rng = stream_rng(protocol.seed, Stream::Evaluation);
    let mut pevm_rng = stream_rng(protocol.seed, Stream::PostEvaluation);
    let mut opt = optimizers::build(&opt_config, stream_rng(protocol.seed, Stream::Optimizer))?;

    let mut evm = generate_matrix(&mut evm_rng, &ranges, protocol.nee, MatrixRole::Evaluation);
    let pevm = generate_matrix(&mut pevm_rng, &ranges, protocol.nve, MatrixRole::PostEvaluation);

    // Environments are deterministic, so a genome scored on an unchanged
    // matrix scores the same again; the episodes still count.
    let mut fitness_memo: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut performance_memo: HashMap<Vec<u64>, f64> = HashMap::new();

    let mut episodes: u64 = 0;
    let mut records = Vec::new();
    let mut best_genome = Vec::new();
    let mut best_performance = f64::NEG_INFINITY;
    let mut evaluation_at_best = 0;
    let mut underrun = false;

    for generation in 0.. {
        if generation > 0 && maybe_regenerate(&mut evm, generation, protocol.f, &ranges, &mut evm_rng) {
            fitness_memo.clear();
        }
        let population = opt.ask()?;
        let keys: Vec<Vec<u64>> = population.params().map(genome_key).collect();
        let fitness: Vec<f64> = population
            .members
            .par_iter()
            .zip(&keys)
            .map(|(c, key)| match fitness_memo.get(key) {
                Some(&f) => Ok(f),
                None => {
                    let net = Network::new(topology, c.params.clone()).map_err(|_| {
                        ProtocolError::GenomeLength {
                            expected: dimension,
                            got: c.params.len(),
                        }
                    })?;
                    evaluate(env, &net, &evm)
                }
            })
            .collect::<Result<_, _>>()?;
        for (key, &f) in keys.iter().zip(&fitness) {
            fitness_memo.entry(key.clone()).or_insert(f);
        }
        episodes += (population.len() * protocol.nee) as u64;
        opt.tell(&fitness)?;

        let best_idx = fitness
            .iter()
            .enumerate()
            .fold(0, |best, (i, &f)| if f > fitness[best] { i } else { best });
        let champion = &population.members[best_idx].params;
        let performance = match performance_memo.get(&keys[best_idx]) {
            Some(&p) => p,
            None => {
                let p = evaluate(env, &Network::new(topology, champion.clone()).expect("checked"), &pevm)?;
                if performance_memo.len() > 4096 {
                    performance_memo.clear();
                }
                performance_memo.insert(keys[best_idx].clone(), p);
                p
            }
        };
        episodes += protocol.nve as u64;

        if performance > best_performance {
            best_performance = performance;
            best_genome = champion.clone();
            evaluation_at_best = episodes;
        }
        let record = GenerationRecord {
            generation,
            episodes_used: episodes,
            best_fitness: fitness[best_idx],
            best_performance: performance,
            best_so_far: best_performance,
        };
        debug!(
            "gen {generation}: episodes {episodes} fitness {:.4} performance {:.4} best {:.4}",
            record.best_fitness, performance, best_performance
        );
        observe(&GenerationView {
            record: &record,
            evaluation: &evm,
            post_evaluation: &pevm,
            population: &population,
            fitness: &fitness,
        });
        records.push(record);

        if generation == 0 && episodes > protocol.budget {
            underrun = true;
        }
        if episodes >= protocol.budget {
            break;
        }
    }

    Ok(RunResult {
        topology,
        best_genome,
        best_performance,
        evaluation_at_best,
        generations: records,
        episodes_used: episodes,
        budget: protocol.budget,
        budget_underrun: underrun,
    })
}
