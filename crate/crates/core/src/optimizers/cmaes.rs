use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::checkpoint::{expect_len, Reader, Writer};
use super::{
    check_fitness, rank_descending, standard_normal_vec, uniform_vec, Algorithm, Candidate,
    Optimizer, OptimizerConfig, OptimizerError, Population,
};
use crate::rng::SimRng;

/// Strategy constants, all derived from `n` and `λ` with the reference
/// defaults of Hansen & Ostermeier (see Hansen's CMA-ES tutorial).
#[derive(Debug, Clone)]
struct Constants {
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Constants {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Constants {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Covariance matrix adaptation evolution strategy with cumulative step-size
/// adaptation, rank-one and rank-μ covariance updates.
pub struct CmaEs {
    k: Constants,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    /// Eigenvectors of `cov` (columns).
    basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    scales: DVector<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    pending: Option<Vec<DVector<f64>>>,
    rng: SimRng,
}

impl CmaEs {
    /// Mean drawn uniformly from `[-init_range, init_range]` unless given.
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
        if lambda < 2 {
            return Err(OptimizerError::Config("population size must be at least 2".into()));
        }
        Ok(CmaEs {
            k: Constants::new(n, lambda),
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            pending: None,
            rng,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// True when a Cholesky factorization of the covariance succeeds.
    pub fn covariance_is_positive_definite(&self) -> bool {
        self.cov.clone().cholesky().is_some()
    }

    pub fn lambda(&self) -> usize {
        self.k.lambda
    }

    fn decompose(&mut self) -> Result<(), OptimizerError> {
        let n = self.cov.nrows();
        // keep exact symmetry against round-off
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = v;
                self.cov[(j, i)] = v;
            }
        }
        if self.cov.iter().any(|v| !v.is_finite()) {
            return Err(OptimizerError::Degenerate("non-finite covariance".into()));
        }
        let eig = SymmetricEigen::new(self.cov.clone());
        if let Some(&bad) = eig.eigenvalues.iter().find(|&&e| e.is_nan() || e <= 0.0) {
            return Err(OptimizerError::Degenerate(format!(
                "covariance eigenvalue {bad} is not positive"
            )));
        }
        self.scales = eig.eigenvalues.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        Ok(())
    }

    fn update(&mut self, fitness: &[f64], steps: &[DVector<f64>]) -> Result<(), OptimizerError> {
        let k = &self.k;
        let n = self.mean.len();
        self.generation += 1;

        if super::all_equal(fitness) {
            // flat fitness: no ranking information, widen the search
            self.sigma *= (0.2 + k.c_sigma / k.d_sigma).exp();
            return Ok(());
        }

        let order = rank_descending(fitness);
        let selected: Vec<&DVector<f64>> = order[..k.mu].iter().map(|&i| &steps[i]).collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in k.weights.iter().zip(&selected) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let mut t = self.basis.tr_mul(&y_w);
        t.component_div_assign(&self.scales);
        let c_inv_sqrt_y = &self.basis * t;

        let cs = k.c_sigma;
        self.p_sigma *= 1.0 - cs;
        self.p_sigma
            .axpy((cs * (2.0 - cs) * k.mu_eff).sqrt(), &c_inv_sqrt_y, 1.0);
        let ps_norm = self.p_sigma.norm();
        let denom = (1.0 - (1.0 - cs).powi(2 * self.generation as i32)).sqrt();
        let h_sigma = if ps_norm / denom / k.chi_n < 1.4 + 2.0 / (n as f64 + 1.0) {
            1.0
        } else {
            0.0
        };

        let cc = k.c_c;
        self.p_c *= 1.0 - cc;
        self.p_c
            .axpy(h_sigma * (cc * (2.0 - cc) * k.mu_eff).sqrt(), &y_w, 1.0);

        let decay = 1.0 - k.c_1 - k.c_mu + (1.0 - h_sigma) * k.c_1 * cc * (2.0 - cc);
        self.cov *= decay;
        self.cov.ger(k.c_1, &self.p_c, &self.p_c, 1.0);
        for (w, y) in k.weights.iter().zip(&selected) {
            self.cov.ger(k.c_mu * w, y, y, 1.0);
        }

        self.sigma *= ((cs / k.d_sigma) * (ps_norm / k.chi_n - 1.0)).exp();
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(OptimizerError::Degenerate(format!("step size {}", self.sigma)));
        }
        self.decompose()
    }

    /// Applies one update from explicit steps `y_i = (x_i - m) / σ`.
    #[cfg(test)]
    pub(crate) fn update_from_steps(
        &mut self,
        steps: &[Vec<f64>],
        fitness: &[f64],
    ) -> Result<(), OptimizerError> {
        let steps: Vec<DVector<f64>> = steps.iter().map(|s| DVector::from_column_slice(s)).collect();
        self.update(fitness, &steps)
    }

    pub(super) fn restore(config: &OptimizerConfig, r: &mut Reader) -> Result<Self, OptimizerError> {
        let n: usize = r.scalar("dimension")?;
        let lambda: usize = r.scalar("lambda")?;
        let generation: usize = r.scalar("generation")?;
        let sigma: f64 = r.scalar("sigma")?;
        let rng = r.rng()?;
        let mean = r.values("mean")?;
        let p_sigma = r.values("p_sigma")?;
        let p_c = r.values("p_c")?;
        let cov = r.values("covariance")?;
        if n != config.dimension {
            return Err(OptimizerError::Checkpoint("dimension mismatch".into()));
        }
        expect_len("mean", &mean, n)?;
        expect_len("p_sigma", &p_sigma, n)?;
        expect_len("p_c", &p_c, n)?;
        expect_len("covariance", &cov, n * n)?;
        let cfg = OptimizerConfig {
            lambda,
            ..config.clone()
        };
        let mut s = Self::with_distribution(&cfg, mean, sigma, rng)
            .map_err(|e| OptimizerError::Checkpoint(e.to_string()))?;
        s.generation = generation;
        s.p_sigma = DVector::from_vec(p_sigma);
        s.p_c = DVector::from_vec(p_c);
        s.cov = DMatrix::from_row_slice(n, n, &cov);
        s.decompose()?;
        Ok(s)
    }
}

impl Optimizer for CmaEs {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Cmaes
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
        let mut steps = Vec::with_capacity(self.k.lambda);
        let mut members = Vec::with_capacity(self.k.lambda);
        for id in 0..self.k.lambda {
            let mut z = DVector::from_vec(standard_normal_vec(&mut self.rng, n));
            z.component_mul_assign(&self.scales);
            let y = &self.basis * z;
            let x = &self.mean + &y * self.sigma;
            members.push(Candidate {
                id,
                params: x.as_slice().to_vec(),
                reevaluated_parent: false,
            });
            steps.push(y);
        }
        self.pending = Some(steps);
        Ok(Population { members })
    }

    fn tell(&mut self, fitness: &[f64]) -> Result<(), OptimizerError> {
        let steps = self.pending.as_ref().ok_or(OptimizerError::NoPendingAsk)?;
        check_fitness(fitness, steps.len())?;
        let steps = self.pending.take().expect("checked above");
        self.update(fitness, &steps)
    }

    fn center(&self) -> Vec<f64> {
        self.mean.as_slice().to_vec()
    }

    fn checkpoint(&self) -> Result<String, OptimizerError> {
        if self.pending.is_some() {
            return Err(OptimizerError::Checkpoint("ask pending".into()));
        }
        let k = &self.k;
        let mut w = Writer::new("cmaes");
        w.comment(&format!(
            "Hansen-Ostermeier defaults: mu={} mu_eff={} c_sigma={} d_sigma={} c_c={} c_1={} c_mu={}",
            k.mu, k.mu_eff, k.c_sigma, k.d_sigma, k.c_c, k.c_1, k.c_mu
        ));
        w.scalar("dimension", self.mean.len());
        w.scalar("lambda", k.lambda);
        w.scalar("generation", self.generation);
        w.scalar("sigma", self.sigma);
        w.rng(&self.rng);
        w.values("mean", self.mean.iter().copied());
        w.values("p_sigma", self.p_sigma.iter().copied());
        w.values("p_c", self.p_c.iter().copied());
        w.values("covariance", self.cov.transpose().iter().copied());
        Ok(w.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    #[test]
    fn constants_match_reference_values() {
        // n = 10, λ = 10: values from the reference formulas
        let k = Constants::new(10, 10);
        assert_eq!(k.mu, 5);
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(k.weights.windows(2).all(|w| w[0] > w[1]));
        assert!((k.mu_eff - 3.1672).abs() < 1e-3);
        assert!(k.c_1 + k.c_mu <= 1.0);
    }

    #[test]
    fn first_samples_are_first_normal_draws() {
        let cfg = OptimizerConfig {
            lambda: 2,
            ..OptimizerConfig::new(Algorithm::Cmaes, 1)
        };
        let mut es = CmaEs::with_distribution(&cfg, vec![0.0], 1.0, stream_rng(42, Stream::Optimizer))
            .unwrap();
        let pop = es.ask().unwrap();
        let mut reference = stream_rng(42, Stream::Optimizer);
        let z0: f64 = reference.sample(rand_distr::StandardNormal);
        let z1: f64 = reference.sample(rand_distr::StandardNormal);
        assert_eq!(pop.members[0].params, vec![z0]);
        assert_eq!(pop.members[1].params, vec![z1]);
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let cfg = OptimizerConfig::new(Algorithm::Cmaes, 2);
        assert!(CmaEs::with_distribution(&cfg, vec![0.0; 2], 0.0, stream_rng(1, Stream::Optimizer)).is_err());
    }

    #[test]
    fn flat_fitness_keeps_mean() {
        let cfg = OptimizerConfig::new(Algorithm::Cmaes, 4);
        let mut es = CmaEs::new(&cfg, None, stream_rng(2, Stream::Optimizer)).unwrap();
        let before = es.center();
        let pop = es.ask().unwrap();
        es.tell(&vec![0.3; pop.len()]).unwrap();
        assert_eq!(es.center(), before);
        assert!(es.covariance_is_positive_definite());
    }

    #[test]
    fn mean_moves_toward_better_steps() {
        let cfg = OptimizerConfig {
            lambda: 2,
            ..OptimizerConfig::new(Algorithm::Cmaes, 1)
        };
        let mut es = CmaEs::with_distribution(&cfg, vec![0.0], 1.0, stream_rng(1, Stream::Optimizer))
            .unwrap();
        es.update_from_steps(&[vec![1.0], vec![-1.0]], &[1.0, 0.0]).unwrap();
        // μ = 1: the mean jumps onto the winner
        assert_eq!(es.center(), vec![1.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = OptimizerConfig::new(Algorithm::Cmaes, 3);
        let mut es = CmaEs::new(&cfg, None, stream_rng(5, Stream::Optimizer)).unwrap();
        for _ in 0..3 {
            let pop = es.ask().unwrap();
            let f: Vec<f64> = pop.params().map(|p| -p.iter().map(|x| x * x).sum::<f64>()).collect();
            es.tell(&f).unwrap();
        }
        let text = es.checkpoint().unwrap();
        let mut back = crate::optimizers::restore(&cfg, &text).unwrap();
        assert_eq!(back.generation(), 3);
        assert_eq!(back.center(), es.center());
        assert_eq!(back.ask().unwrap(), es.ask().unwrap());
    }
}
