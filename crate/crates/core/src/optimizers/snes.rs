use super::checkpoint::{expect_len, Reader, Writer};
use super::{
    check_fitness, nes_utilities, rank_descending, standard_normal_vec, uniform_vec, Algorithm,
    Candidate, Optimizer, OptimizerConfig, OptimizerError, Population,
};
use crate::rng::SimRng;

/// Separable natural evolution strategy: a Gaussian with independent
/// per-coordinate deviations.
pub struct Snes {
    lambda: usize,
    utilities: Vec<f64>,
    eta_mean: f64,
    eta_sigma: f64,
    mean: Vec<f64>,
    sigmas: Vec<f64>,
    generation: usize,
    pending: Option<Vec<Vec<f64>>>,
    rng: SimRng,
}

/// Default learning rate for the deviations: `(3 + ln n) / (5 √n)`.
pub fn snes_default_eta(n: usize) -> f64 {
    let n = n as f64;
    (3.0 + n.ln()) / (5.0 * n.sqrt())
}

impl Snes {
    pub fn new(
        config: &OptimizerConfig,
        init_mean: Option<Vec<f64>>,
        mut rng: SimRng,
    ) -> Result<Self, OptimizerError> {
        config.validate()?;
        let mean = match init_mean {
            Some(m) => m,
            None => uniform_vec(&mut rng, config.dimension, config.init_range),
        };
        Self::with_distribution(config, mean, config.effective_sigma0(), rng)
    }

    pub fn with_distribution(
        config: &OptimizerConfig,
        mean: Vec<f64>,
        sigma: f64,
        rng: SimRng,
    ) -> Result<Self, OptimizerError> {
        config.validate()?;
        let n = config.dimension;
        if mean.len() != n || mean.iter().any(|m| !m.is_finite()) {
            return Err(OptimizerError::Config(format!(
                "initial mean must hold {n} finite values"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(OptimizerError::Config(format!("step size must be positive, got {sigma}")));
        }
        let lambda = config.effective_lambda();
        Ok(Snes {
            lambda,
            utilities: nes_utilities(lambda),
            eta_mean: if config.lr_mean > 0.0 { config.lr_mean } else { 1.0 },
            eta_sigma: if config.lr_sigma > 0.0 {
                config.lr_sigma
            } else {
                snes_default_eta(n)
            },
            mean,
            sigmas: vec![sigma; n],
            generation: 0,
            pending: None,
            rng,
        })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    fn update(&mut self, fitness: &[f64], samples: &[Vec<f64>]) -> Result<(), OptimizerError> {
        self.generation += 1;
        if super::all_equal(fitness) {
            return Ok(());
        }
        let n = self.mean.len();
        let order = rank_descending(fitness);
        let mut grad_mean = vec![0.0; n];
        let mut grad_sigma = vec![0.0; n];
        for (u, &i) in self.utilities.iter().zip(&order) {
            for (d, s) in samples[i].iter().enumerate() {
                grad_mean[d] += u * s;
                grad_sigma[d] += u * (s * s - 1.0);
            }
        }
        for d in 0..n {
            self.mean[d] += self.eta_mean * self.sigmas[d] * grad_mean[d];
            self.sigmas[d] *= (0.5 * self.eta_sigma * grad_sigma[d]).exp();
        }
        if let Some(bad) = self.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(OptimizerError::Degenerate(format!("deviation {bad}")));
        }
        Ok(())
    }

    pub(super) fn restore(config: &OptimizerConfig, r: &mut Reader) -> Result<Self, OptimizerError> {
        let n: usize = r.scalar("dimension")?;
        let lambda: usize = r.scalar("lambda")?;
        let generation: usize = r.scalar("generation")?;
        let eta_mean: f64 = r.scalar("eta_mean")?;
        let eta_sigma: f64 = r.scalar("eta_sigma")?;
        let rng = r.rng()?;
        let mean = r.values("mean")?;
        let sigmas = r.values("sigmas")?;
        if n != config.dimension {
            return Err(OptimizerError::Checkpoint("dimension mismatch".into()));
        }
        expect_len("mean", &mean, n)?;
        expect_len("sigmas", &sigmas, n)?;
        let cfg = OptimizerConfig {
            lambda,
            lr_mean: eta_mean,
            lr_sigma: eta_sigma,
            ..config.clone()
        };
        let mut s = Self::with_distribution(&cfg, mean, 1.0, rng)
            .map_err(|e| OptimizerError::Checkpoint(e.to_string()))?;
        s.generation = generation;
        s.sigmas = sigmas;
        Ok(s)
    }
}

impl Optimizer for Snes {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Snes
    }

    fn dimension(&self) -> usize {
        self.mean.len()
    }

    fn generation(&self) -> usize {
        self.generation
    }

    fn ask(&mut self) -> Result<Population, OptimizerError> {
        if self.pending.is_some() {
            return Err(OptimizerError::AskPending);
        }
        let n = self.mean.len();
        let mut samples = Vec::with_capacity(self.lambda);
        let mut members = Vec::with_capacity(self.lambda);
        for id in 0..self.lambda {
            let s = standard_normal_vec(&mut self.rng, n);
            let params = (0..n).map(|d| self.mean[d] + self.sigmas[d] * s[d]).collect();
            members.push(Candidate {
                id,
                params,
                reevaluated_parent: false,
            });
            samples.push(s);
        }
        self.pending = Some(samples);
        Ok(Population { members })
    }

    fn tell(&mut self, fitness: &[f64]) -> Result<(), OptimizerError> {
        let samples = self.pending.as_ref().ok_or(OptimizerError::NoPendingAsk)?;
        check_fitness(fitness, samples.len())?;
        let samples = self.pending.take().expect("checked above");
        self.update(fitness, &samples)
    }

    fn center(&self) -> Vec<f64> {
        self.mean.clone()
    }

    fn checkpoint(&self) -> Result<String, OptimizerError> {
        if self.pending.is_some() {
            return Err(OptimizerError::Checkpoint("ask pending".into()));
        }
        let mut w = Writer::new("snes");
        w.scalar("dimension", self.mean.len());
        w.scalar("lambda", self.lambda);
        w.scalar("generation", self.generation);
        w.scalar("eta_mean", self.eta_mean);
        w.scalar("eta_sigma", self.eta_sigma);
        w.rng(&self.rng);
        w.values("mean", self.mean.iter().copied());
        w.values("sigmas", self.sigmas.iter().copied());
        Ok(w.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn mean_follows_the_winner() {
        let cfg = OptimizerConfig {
            lambda: 2,
            ..OptimizerConfig::new(Algorithm::Snes, 1)
        };
        let mut es = Snes::with_distribution(&cfg, vec![0.0], 1.0, stream_rng(1, Stream::Optimizer)).unwrap();
        es.update(&[1.0, 0.0], &[vec![1.0], vec![-1.0]]).unwrap();
        assert!((es.center()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_fitness_is_a_no_op() {
        let cfg = OptimizerConfig::new(Algorithm::Snes, 6);
        let mut es = Snes::new(&cfg, None, stream_rng(4, Stream::Optimizer)).unwrap();
        let (m, s) = (es.center(), es.sigmas().to_vec());
        let pop = es.ask().unwrap();
        es.tell(&vec![-1.0; pop.len()]).unwrap();
        assert_eq!(es.center(), m);
        assert_eq!(es.sigmas(), &s[..]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = OptimizerConfig::new(Algorithm::Snes, 4);
        let mut es = Snes::new(&cfg, None, stream_rng(6, Stream::Optimizer)).unwrap();
        let pop = es.ask().unwrap();
        let f: Vec<f64> = pop.params().map(|p| p[0]).collect();
        es.tell(&f).unwrap();
        let text = es.checkpoint().unwrap();
        let mut back = crate::optimizers::restore(&cfg, &text).unwrap();
        assert_eq!(back.ask().unwrap(), es.ask().unwrap());
    }
}
