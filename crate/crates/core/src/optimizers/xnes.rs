use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::checkpoint::{expect_len, Reader, Writer};
use super::{
    check_fitness, nes_utilities, rank_descending, standard_normal_vec, uniform_vec, Algorithm,
    Candidate, Optimizer, OptimizerConfig, OptimizerError, Population,
};
use crate::rng::SimRng;

/// Exponential natural evolution strategy. The search distribution is
/// `N(m, σ² B Bᵀ)` with `det B = 1`; `σ` and `B` follow the natural gradient
/// in exponential parameterization.
pub struct Xnes {
    lambda: usize,
    utilities: Vec<f64>,
    eta_mean: f64,
    eta_sigma: f64,
    eta_shape: f64,
    mean: DVector<f64>,
    sigma: f64,
    shape: DMatrix<f64>,
    generation: usize,
    pending: Option<Vec<DVector<f64>>>,
    rng: SimRng,
}

/// Default learning rate for `σ` and `B`: `3 (3 + ln n) / (5 n √n)`.
pub fn xnes_default_eta(n: usize) -> f64 {
    let n = n as f64;
    3.0 * (3.0 + n.ln()) / (5.0 * n * n.sqrt())
}

impl Xnes {
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
        let or_default = |v: f64, d: f64| if v > 0.0 { v } else { d };
        Ok(Xnes {
            lambda,
            utilities: nes_utilities(lambda),
            eta_mean: or_default(config.lr_mean, 1.0),
            eta_sigma: or_default(config.lr_sigma, xnes_default_eta(n)),
            eta_shape: or_default(config.lr_shape, xnes_default_eta(n)),
            mean: DVector::from_vec(mean),
            sigma,
            shape: DMatrix::identity(n, n),
            generation: 0,
            pending: None,
            rng,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// True when `B Bᵀ` admits a Cholesky factorization.
    pub fn covariance_is_positive_definite(&self) -> bool {
        (&self.shape * self.shape.transpose()).cholesky().is_some()
    }

    fn update(&mut self, fitness: &[f64], samples: &[DVector<f64>]) -> Result<(), OptimizerError> {
        let n = self.mean.len();
        self.generation += 1;
        if super::all_equal(fitness) {
            return Ok(());
        }
        let order = rank_descending(fitness);
        let mut grad_delta = DVector::zeros(n);
        let mut grad_m = DMatrix::zeros(n, n);
        for (u, &i) in self.utilities.iter().zip(&order) {
            let s = &samples[i];
            grad_delta.axpy(*u, s, 1.0);
            grad_m.ger(*u, s, s, 1.0);
            for d in 0..n {
                grad_m[(d, d)] -= u;
            }
        }
        let grad_sigma = grad_m.trace() / n as f64;
        let mut grad_b = grad_m;
        for d in 0..n {
            grad_b[(d, d)] -= grad_sigma;
        }

        let step = &self.shape * grad_delta;
        self.mean.axpy(self.eta_mean * self.sigma, &step, 1.0);
        self.sigma *= (0.5 * self.eta_sigma * grad_sigma).exp();
        self.shape = &self.shape * expm_symmetric(grad_b * (0.5 * self.eta_shape))?;

        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(OptimizerError::Degenerate(format!("step size {}", self.sigma)));
        }
        if !self.covariance_is_positive_definite() {
            return Err(OptimizerError::Degenerate(
                "shape matrix lost positive definiteness".into(),
            ));
        }
        Ok(())
    }

    /// Applies one update from explicit standard-normal samples.
    #[cfg(test)]
    pub(crate) fn update_from_samples(
        &mut self,
        samples: &[Vec<f64>],
        fitness: &[f64],
    ) -> Result<(), OptimizerError> {
        let s: Vec<DVector<f64>> = samples.iter().map(|v| DVector::from_column_slice(v)).collect();
        self.utilities = nes_utilities(s.len());
        self.update(fitness, &s)
    }

    pub(super) fn restore(config: &OptimizerConfig, r: &mut Reader) -> Result<Self, OptimizerError> {
        let n: usize = r.scalar("dimension")?;
        let lambda: usize = r.scalar("lambda")?;
        let generation: usize = r.scalar("generation")?;
        let sigma: f64 = r.scalar("sigma")?;
        let eta_mean: f64 = r.scalar("eta_mean")?;
        let eta_sigma: f64 = r.scalar("eta_sigma")?;
        let eta_shape: f64 = r.scalar("eta_shape")?;
        let rng = r.rng()?;
        let mean = r.values("mean")?;
        let shape = r.values("shape")?;
        if n != config.dimension {
            return Err(OptimizerError::Checkpoint("dimension mismatch".into()));
        }
        expect_len("mean", &mean, n)?;
        expect_len("shape", &shape, n * n)?;
        let cfg = OptimizerConfig {
            lambda,
            lr_mean: eta_mean,
            lr_sigma: eta_sigma,
            lr_shape: eta_shape,
            ..config.clone()
        };
        let mut s = Self::with_distribution(&cfg, mean, sigma, rng)
            .map_err(|e| OptimizerError::Checkpoint(e.to_string()))?;
        s.generation = generation;
        s.shape = DMatrix::from_row_slice(n, n, &shape);
        Ok(s)
    }
}

/// Matrix exponential of a symmetric matrix through its eigendecomposition.
pub(crate) fn expm_symmetric(m: DMatrix<f64>) -> Result<DMatrix<f64>, OptimizerError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(OptimizerError::Degenerate("non-finite natural gradient".into()));
    }
    let eig = SymmetricEigen::new(m);
    let exp_vals = eig.eigenvalues.map(f64::exp);
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&exp_vals) * v.transpose())
}

impl Optimizer for Xnes {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Xnes
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
            let s = DVector::from_vec(standard_normal_vec(&mut self.rng, n));
            let x = &self.mean + (&self.shape * &s) * self.sigma;
            members.push(Candidate {
                id,
                params: x.as_slice().to_vec(),
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
        self.mean.as_slice().to_vec()
    }

    fn checkpoint(&self) -> Result<String, OptimizerError> {
        if self.pending.is_some() {
            return Err(OptimizerError::Checkpoint("ask pending".into()));
        }
        let mut w = Writer::new("xnes");
        w.scalar("dimension", self.mean.len());
        w.scalar("lambda", self.lambda);
        w.scalar("generation", self.generation);
        w.scalar("sigma", self.sigma);
        w.scalar("eta_mean", self.eta_mean);
        w.scalar("eta_sigma", self.eta_sigma);
        w.scalar("eta_shape", self.eta_shape);
        w.rng(&self.rng);
        w.values("mean", self.mean.iter().copied());
        w.values("shape", self.shape.transpose().iter().copied());
        Ok(w.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn one_dim() -> Xnes {
        let cfg = OptimizerConfig {
            lambda: 2,
            ..OptimizerConfig::new(Algorithm::Xnes, 1)
        };
        Xnes::with_distribution(&cfg, vec![0.0], 1.0, stream_rng(1, Stream::Optimizer)).unwrap()
    }

    #[test]
    fn zero_sigma_rejected() {
        let cfg = OptimizerConfig::new(Algorithm::Xnes, 3);
        let r = Xnes::with_distribution(&cfg, vec![0.0; 3], 0.0, stream_rng(1, Stream::Optimizer));
        assert!(matches!(r, Err(OptimizerError::Config(_))));
    }

    #[test]
    fn scalar_natural_gradient_step() {
        // utilities for λ=2 are (+1/2, -1/2); grad_delta = 0.5*1 + (-0.5)*(-1) = 1
        let mut es = one_dim();
        es.update_from_samples(&[vec![1.0], vec![-1.0]], &[1.0, 0.0]).unwrap();
        assert!(es.center()[0] > 0.0);
        assert!((es.center()[0] - 1.0).abs() < 1e-15);
        // grad_M = 0.5*(1-1) - 0.5*(1-1) = 0, so σ is unchanged
        assert!((es.sigma() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_fitness_leaves_distribution_unchanged() {
        let cfg = OptimizerConfig::new(Algorithm::Xnes, 5);
        let mut es = Xnes::new(&cfg, None, stream_rng(3, Stream::Optimizer)).unwrap();
        let (m, s) = (es.center(), es.sigma());
        let pop = es.ask().unwrap();
        es.tell(&vec![2.5; pop.len()]).unwrap();
        assert_eq!(es.center(), m);
        assert_eq!(es.sigma(), s);
    }

    #[test]
    fn shape_stays_unimodular() {
        let cfg = OptimizerConfig::new(Algorithm::Xnes, 4);
        let mut es = Xnes::new(&cfg, None, stream_rng(8, Stream::Optimizer)).unwrap();
        for _ in 0..40 {
            let pop = es.ask().unwrap();
            let f: Vec<f64> = pop
                .params()
                .map(|p| -(p[0] * p[0] + 100.0 * p[1] * p[1] + p[2].abs() + p[3]))
                .collect();
            es.tell(&f).unwrap();
            assert!((es.shape().determinant() - 1.0).abs() < 1e-8);
            assert!(es.covariance_is_positive_definite());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = OptimizerConfig::new(Algorithm::Xnes, 3);
        let mut es = Xnes::new(&cfg, None, stream_rng(5, Stream::Optimizer)).unwrap();
        for _ in 0..3 {
            let pop = es.ask().unwrap();
            let f: Vec<f64> = pop.params().map(|p| -p.iter().map(|x| x * x).sum::<f64>()).collect();
            es.tell(&f).unwrap();
        }
        let text = es.checkpoint().unwrap();
        let mut back = crate::optimizers::restore(&cfg, &text).unwrap();
        assert_eq!(back.ask().unwrap(), es.ask().unwrap());
    }
}
