use rand::Rng;

use super::checkpoint::{expect_len, Reader, Writer};
use super::{
    check_fitness, uniform_vec, Algorithm, Candidate, Optimizer, OptimizerConfig,
    OptimizerError, Population,
};
use crate::rng::SimRng;

/// Mutates each coordinate with probability `mutrate`. A mutation redraws the
/// value uniformly in `[-range, range]` with probability `replace_fraction`,
/// and otherwise adds Gaussian noise of deviation `std`. The result is clipped
/// to `[-range, range]`.
pub fn sss_mutate(
    vector: &[f64],
    rng: &mut SimRng,
    mutrate: f64,
    std: f64,
    replace_fraction: f64,
    range: f64,
) -> Vec<f64> {
    vector
        .iter()
        .map(|&x| {
            if mutrate <= 0.0 || rng.random::<f64>() >= mutrate {
                return x;
            }
            let y = if replace_fraction > 0.0 && rng.random::<f64>() < replace_fraction {
                rng.random_range(-range..=range)
            } else {
                x + std * rng.sample::<f64, _>(rand_distr::StandardNormal)
            };
            y.clamp(-range, range)
        })
        .collect()
}

/// Stochastic steady state: μ parents each produce one offspring; parents and
/// offspring are (re-)evaluated together and the best μ survive.
pub struct Sss {
    mu: usize,
    mutrate: f64,
    mutation_std: f64,
    replace_fraction: f64,
    range: f64,
    noise: f64,
    parents: Vec<Vec<f64>>,
    pending: Option<Vec<Vec<f64>>>,
    generation: usize,
    rng: SimRng,
}

impl Sss {
    pub fn new(config: &OptimizerConfig, mut rng: SimRng) -> Result<Self, OptimizerError> {
        config.validate()?;
        let mu = config.effective_lambda() / 2;
        let parents = (0..mu)
            .map(|_| uniform_vec(&mut rng, config.dimension, config.weight_range))
            .collect();
        Ok(Self::with_parents(config, parents, rng))
    }

    fn with_parents(config: &OptimizerConfig, parents: Vec<Vec<f64>>, rng: SimRng) -> Self {
        Sss {
            mu: parents.len(),
            mutrate: config.mutrate,
            mutation_std: config.mutation_std,
            replace_fraction: config.replace_fraction,
            range: config.weight_range,
            noise: config.fitness_noise,
            parents,
            pending: None,
            generation: 0,
            rng,
        }
    }

    /// Starts from explicit parents instead of random ones.
    pub fn from_parents(
        config: &OptimizerConfig,
        parents: Vec<Vec<f64>>,
        rng: SimRng,
    ) -> Result<Self, OptimizerError> {
        config.validate()?;
        if parents.is_empty() || parents.iter().any(|p| p.len() != config.dimension) {
            return Err(OptimizerError::Config(
                "parents must be non-empty vectors of the configured dimension".into(),
            ));
        }
        Ok(Self::with_parents(config, parents, rng))
    }

    pub fn parents(&self) -> &[Vec<f64>] {
        &self.parents
    }

    pub(super) fn restore(config: &OptimizerConfig, r: &mut Reader) -> Result<Self, OptimizerError> {
        let n: usize = r.scalar("dimension")?;
        let mu: usize = r.scalar("mu")?;
        let generation: usize = r.scalar("generation")?;
        let rng = r.rng()?;
        let flat = r.values("parents")?;
        expect_len("parents", &flat, n * mu)?;
        if n != config.dimension || mu == 0 {
            return Err(OptimizerError::Checkpoint("dimension mismatch".into()));
        }
        let parents = flat.chunks(n).map(<[f64]>::to_vec).collect();
        let mut s = Self::with_parents(config, parents, rng);
        s.generation = generation;
        Ok(s)
    }
}

impl Optimizer for Sss {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Sss
    }

    fn dimension(&self) -> usize {
        self.parents[0].len()
    }

    fn generation(&self) -> usize {
        self.generation
    }

    fn ask(&mut self) -> Result<Population, OptimizerError> {
        if self.pending.is_some() {
            return Err(OptimizerError::AskPending);
        }
        let mut candidates = self.parents.clone();
        for i in 0..self.mu {
            let child = sss_mutate(
                &self.parents[i],
                &mut self.rng,
                self.mutrate,
                self.mutation_std,
                self.replace_fraction,
                self.range,
            );
            candidates.push(child);
        }
        let members = candidates
            .iter()
            .enumerate()
            .map(|(id, p)| Candidate {
                id,
                params: p.clone(),
                reevaluated_parent: id < self.mu,
            })
            .collect();
        self.pending = Some(candidates);
        Ok(Population { members })
    }

    fn tell(&mut self, fitness: &[f64]) -> Result<(), OptimizerError> {
        let candidates = self.pending.as_ref().ok_or(OptimizerError::NoPendingAsk)?;
        check_fitness(fitness, candidates.len())?;
        let scores: Vec<f64> = fitness
            .iter()
            .map(|&f| {
                if self.noise > 0.0 {
                    f + self.rng.random_range(-self.noise..=self.noise)
                } else {
                    f
                }
            })
            .collect();
        let candidates = self.pending.take().expect("checked above");
        let order = super::rank_descending(&scores);
        self.parents = order[..self.mu]
            .iter()
            .map(|&i| candidates[i].clone())
            .collect();
        self.generation += 1;
        Ok(())
    }

    fn center(&self) -> Vec<f64> {
        self.parents[0].clone()
    }

    fn checkpoint(&self) -> Result<String, OptimizerError> {
        if self.pending.is_some() {
            return Err(OptimizerError::Checkpoint("ask pending".into()));
        }
        let mut w = Writer::new("sss");
        w.scalar("dimension", self.dimension());
        w.scalar("mu", self.mu);
        w.scalar("generation", self.generation);
        w.rng(&self.rng);
        w.comment("parents, row-major, best first");
        w.values("parents", self.parents.iter().flatten().copied().collect::<Vec<_>>().into_iter());
        Ok(w.finish())
    }
}
