//! Dual solver for the KL projection onto the constraint set.
//!
//! With `c = 0` the dual is `D(λ) = -Σ_i log Z^i(λ)` over `λ >= 0`, where
//! `Z^i(λ) = Σ_k p_ik exp(-λ·φ^i_k)`. It is concave, its gradient is
//! `Σ_i E_{q_λ(·,i)}[φ^i]`, and the maximiser defines the calibrated
//! posterior `q*(·,i) ∝ p(·,i) exp(-λ*·φ^i)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::{ConstraintSet, FeatureTable, DEFAULT_GAMMA_SOLVE};
use crate::corpus::Corpus;
use crate::distribution::{log_sum_exp, reweighted_posterior, InstancePosterior};
use crate::error::{Error, Result};
use crate::metrics::SCHEMA_VERSION;

/// Instances per parallel work unit. Fixed so reductions happen in the same
/// order whatever the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    Stochastic,
    FullBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub gamma_solve: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    /// Multiplies the learning rate after every stochastic update. Full-batch
    /// runs keep the initial rate.
    pub lr_decay: f64,
    pub seed: u64,
    pub mode: SolveMode,
    /// Full-batch stop: max-abs projected gradient at or below this.
    pub convergence_tol: f64,
    /// Full-batch step cap.
    pub max_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma_solve: DEFAULT_GAMMA_SOLVE,
            batch_size: 39,
            epochs: 10,
            initial_lr: 0.1,
            lr_decay: 0.998,
            seed: 0,
            mode: SolveMode::Stochastic,
            convergence_tol: 1e-6,
            max_steps: 100_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn full_batch() -> Self {
        SolverConfig { mode: SolveMode::FullBatch, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_solve", self.gamma_solve),
            ("initial_lr", self.initial_lr),
            ("convergence_tol", self.convergence_tol),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 || self.max_steps == 0 {
            return Err(Error::Validation("batch_size, epochs and max_steps must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Validation(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Validation("moment decay rates must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning-rate factor applied after each update in this mode.
    pub fn step_decay(&self) -> f64 {
        match self.mode {
            SolveMode::Stochastic => self.lr_decay,
            SolveMode::FullBatch => 1.0,
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded. The run-length
    /// fields (`epochs`, `max_steps`, `convergence_tol`) are left out so a
    /// checkpoint can be resumed with a longer budget.
    pub fn hash(&self) -> String {
        let trajectory = SolverConfig { epochs: 0, max_steps: 0, convergence_tol: 0.0, ..self.clone() };
        let bytes = serde_json::to_vec(&trajectory).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Dual iterate plus adaptive-moment optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
}

impl DualState {
    pub fn zeros(dimension: usize, learning_rate: f64) -> Self {
        DualState {
            lambda: vec![0.0; dimension],
            first_moment: vec![0.0; dimension],
            second_moment: vec![0.0; dimension],
            step: 0,
            learning_rate,
        }
    }

    /// Applies one bias-corrected adaptive-moment ascent step along
    /// `gradient`, clips `λ` to the nonnegative orthant and decays the rate.
    pub fn ascend(&mut self, gradient: &[f64], config: &SolverConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for (j, &g) in gradient.iter().enumerate() {
            let m = &mut self.first_moment[j];
            let v = &mut self.second_moment[j];
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let update = self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + config.epsilon);
            self.lambda[j] = (self.lambda[j] + update).max(0.0);
        }
        self.learning_rate *= config.step_decay();
    }

    pub fn checkpoint(&self, config: &SolverConfig) -> SolverCheckpoint {
        SolverCheckpoint {
            schema_version: SCHEMA_VERSION,
            lambda: self.lambda.clone(),
            first_moment: self.first_moment.clone(),
            second_moment: self.second_moment.clone(),
            step: self.step,
            learning_rate: self.learning_rate,
            config_hash: config.hash(),
        }
    }

    /// Restores the full optimiser state from a checkpoint written under a
    /// config with the same hash.
    pub fn from_checkpoint(checkpoint: &SolverCheckpoint, config: &SolverConfig) -> Result<Self> {
        if checkpoint.config_hash != config.hash() {
            return Err(Error::Validation("checkpoint was written under a different solver config".into()));
        }
        let d = checkpoint.lambda.len();
        if checkpoint.first_moment.len() != d || checkpoint.second_moment.len() != d {
            return Err(Error::Validation("checkpoint moments do not match lambda".into()));
        }
        if checkpoint.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0))
            || checkpoint.second_moment.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || checkpoint.first_moment.iter().any(|m| !m.is_finite())
            || !(checkpoint.learning_rate.is_finite() && checkpoint.learning_rate > 0.0)
        {
            return Err(Error::Validation("checkpoint state must be finite, with nonnegative lambda".into()));
        }
        Ok(DualState {
            lambda: checkpoint.lambda.clone(),
            first_moment: checkpoint.first_moment.clone(),
            second_moment: checkpoint.second_moment.clone(),
            step: checkpoint.step,
            learning_rate: checkpoint.learning_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverCheckpoint {
    pub schema_version: u32,
    pub lambda: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub config_hash: String,
}

/// Log-probabilities and cached features: everything the dual needs.
#[derive(Debug, Clone)]
pub struct DualProblem {
    log_probs: Vec<Vec<f64>>,
    features: FeatureTable,
}

impl DualProblem {
    pub fn new(corpus: &Corpus, posteriors: &[InstancePosterior], cs: &ConstraintSet) -> Self {
        let log_probs = posteriors
            .iter()
            .map(|p| p.probs.iter().map(|&q| if q > 0.0 { q.ln() } else { f64::NEG_INFINITY }).collect())
            .collect();
        DualProblem { log_probs, features: FeatureTable::new(corpus, cs) }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.features.dimension()
    }

    fn penalised_logits(&self, i: usize, lambda: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.log_probs[i].iter().zip(self.features.row(i)).map(|(&lp, f)| lp - f.dot(lambda)));
    }

    /// `log Z^i(λ)`.
    pub fn instance_log_partition(&self, i: usize, lambda: &[f64]) -> f64 {
        let mut logits = Vec::new();
        self.penalised_logits(i, lambda, &mut logits);
        log_sum_exp(&logits)
    }

    /// `-Σ_i log Z^i(λ)`.
    pub fn objective(&self, lambda: &[f64]) -> f64 {
        let indices: Vec<usize> = (0..self.len()).collect();
        let partials: Vec<f64> = indices
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut logits = Vec::new();
                chunk
                    .iter()
                    .map(|&i| {
                        self.penalised_logits(i, lambda, &mut logits);
                        log_sum_exp(&logits)
                    })
                    .sum::<f64>()
            })
            .collect();
        -partials.iter().sum::<f64>()
    }

    /// `Σ_{i ∈ batch} E_{q_λ(·,i)}[φ^i]`, unscaled.
    pub fn gradient(&self, lambda: &[f64], batch: &[usize]) -> Vec<f64> {
        let dim = self.dimension();
        let partials: Vec<Vec<f64>> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; dim];
                let mut logits = Vec::new();
                for &i in chunk {
                    self.penalised_logits(i, lambda, &mut logits);
                    let lse = log_sum_exp(&logits);
                    for (f, &l) in self.features.row(i).iter().zip(&logits) {
                        if !f.is_empty() {
                            f.add_scaled_to((l - lse).exp(), &mut acc);
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; dim];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    pub fn full_gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.gradient(lambda, &all)
    }

    /// `λ·φ^i_k` for every candidate of instance `i`.
    pub fn penalties(&self, i: usize, lambda: &[f64]) -> Vec<f64> {
        self.features.row(i).iter().map(|f| f.dot(lambda)).collect()
    }
}

pub fn dual_objective(lambda: &[f64], corpus: &Corpus, posteriors: &[InstancePosterior], cs: &ConstraintSet) -> f64 {
    DualProblem::new(corpus, posteriors, cs).objective(lambda)
}

/// Ascent gradient of [`dual_objective`] restricted to `batch`, without any
/// mini-batch rescaling.
pub fn dual_gradient(
    lambda: &[f64],
    batch: &[usize],
    corpus: &Corpus,
    posteriors: &[InstancePosterior],
    cs: &ConstraintSet,
) -> Vec<f64> {
    DualProblem::new(corpus, posteriors, cs).gradient(lambda, batch)
}

/// Gradient with coordinates pinned at the `λ = 0` boundary dropped when
/// they point outward.
pub fn projected_gradient(lambda: &[f64], gradient: &[f64]) -> Vec<f64> {
    lambda.iter().zip(gradient).map(|(&l, &g)| if l > 0.0 { g } else { g.max(0.0) }).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_finite(gradient: &[f64], step: u64) -> Result<()> {
    match gradient.iter().position(|g| !g.is_finite()) {
        Some(coordinate) => Err(Error::Solver { step, coordinate, message: "non-finite gradient".into() }),
        None => Ok(()),
    }
}

/// Instance order for one epoch, drawn from its own stream so any epoch
/// can be replayed without the ones before it.
fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

pub fn solve(
    corpus: &Corpus,
    posteriors: &[InstancePosterior],
    cs: &ConstraintSet,
    config: &SolverConfig,
) -> Result<DualState> {
    let problem = DualProblem::new(corpus, posteriors, cs);
    solve_problem(&problem, config, DualState::zeros(problem.dimension(), config.initial_lr))
}

/// Runs the optimiser from `state`, which may come from a checkpoint.
pub fn solve_problem(problem: &DualProblem, config: &SolverConfig, mut state: DualState) -> Result<DualState> {
    config.validate()?;
    if state.lambda.len() != problem.dimension() {
        return Err(Error::Validation(format!(
            "lambda has dimension {}, constraints need {}",
            state.lambda.len(),
            problem.dimension()
        )));
    }
    if problem.dimension() == 0 || problem.is_empty() {
        return Ok(state);
    }
    match config.mode {
        SolveMode::FullBatch => {
            while state.step < config.max_steps {
                let g = problem.full_gradient(&state.lambda);
                check_finite(&g, state.step)?;
                if max_abs(&projected_gradient(&state.lambda, &g)) <= config.convergence_tol {
                    break;
                }
                state.ascend(&g, config);
            }
        }
        SolveMode::Stochastic => {
            let n = problem.len();
            let per_epoch = n.div_ceil(config.batch_size) as u64;
            let start = state.step / per_epoch;
            let mut skip = (state.step % per_epoch) as usize;
            for epoch in start..config.epochs as u64 {
                let order = epoch_order(n, config.seed, epoch);
                for batch in order.chunks(config.batch_size).skip(std::mem::take(&mut skip)) {
                    let mut g = problem.gradient(&state.lambda, batch);
                    let scale = n as f64 / batch.len() as f64;
                    g.iter_mut().for_each(|x| *x *= scale);
                    check_finite(&g, state.step)?;
                    state.ascend(&g, config);
                }
            }
        }
    }
    let objective = problem.objective(&state.lambda);
    if !objective.is_finite() {
        let coordinate =
            state.lambda.iter().enumerate().fold(0, |best, (j, l)| if *l > state.lambda[best] { j } else { best });
        return Err(Error::Solver { step: state.step, coordinate, message: "non-finite dual objective".into() });
    }
    Ok(state)
}

/// Calibrated posteriors `q*(·,i) ∝ p(·,i) exp(-λ·φ^i)`.
pub fn calibrate(
    corpus: &Corpus,
    posteriors: &[InstancePosterior],
    cs: &ConstraintSet,
    lambda: &[f64],
) -> Result<Vec<InstancePosterior>> {
    let features = FeatureTable::new(corpus, cs);
    corpus
        .instances()
        .iter()
        .zip(posteriors)
        .enumerate()
        .map(|(i, (instance, post))| {
            let row = features.row(i);
            if row.iter().all(|f| f.is_empty()) {
                return Ok(post.clone());
            }
            let penalty: Vec<f64> = row.iter().map(|f| f.dot(lambda)).collect();
            reweighted_posterior(instance, post, &penalty)
        })
        .collect()
}
