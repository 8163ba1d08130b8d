//! CMA-ES over a bounded box, maximizing.
//!
//! The search runs in the unit box: a point `u` maps to `lo + u * (hi - lo)`
//! per coordinate, and `sigma` is measured in those normalized units.
//! Update rules and constants follow Hansen's tutorial.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Draws per coordinate before an out-of-box sample is clipped.
const MAX_RESAMPLES: usize = 100;
/// Attempts per candidate before an objective failure aborts the run.
const OBJECTIVE_ATTEMPTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmaError {
    #[error("bound {index} is empty or not finite: [{lo}, {hi}]")]
    BadBounds { index: usize, lo: f64, hi: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("objective failed {attempts} times at {params:?}: {message}")]
    Objective {
        params: Vec<f64>,
        attempts: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    /// Per-dimension `[lo, hi]`; the dimension is `bounds.len()`.
    pub bounds: Vec<(f64, f64)>,
    /// Initial step size in normalized units.
    pub sigma0: f64,
    /// Population size; `None` means `4 + floor(3 ln n)`.
    #[serde(default)]
    pub population: Option<usize>,
    /// Parents; `None` means half the population.
    #[serde(default)]
    pub parents: Option<usize>,
    pub max_generations: usize,
    pub seed: u64,
    /// Initial mean in problem units; `None` draws it uniformly in the box.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
}

impl CmaConfig {
    pub const DEFAULT_SIGMA0: f64 = 0.025;
    pub const DEFAULT_GENERATIONS: usize = 200;

    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        CmaConfig {
            bounds,
            sigma0: Self::DEFAULT_SIGMA0,
            population: None,
            parents: None,
            max_generations: Self::DEFAULT_GENERATIONS,
            seed,
            start: None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn lambda(&self) -> usize {
        self.population
            .unwrap_or_else(|| default_population(self.dimension()))
    }

    pub fn mu(&self) -> usize {
        self.parents.unwrap_or(self.lambda() / 2)
    }

    pub fn check(&self) -> Result<(), CmaError> {
        if self.bounds.is_empty() {
            return Err(CmaError::BadConfig("no dimensions".into()));
        }
        for (index, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CmaError::BadBounds { index, lo, hi });
            }
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(CmaError::BadConfig(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        let (lambda, mu) = (self.lambda(), self.mu());
        if lambda < 2 {
            return Err(CmaError::BadConfig(format!("population must be >= 2, got {lambda}")));
        }
        if mu < 1 || mu > lambda {
            return Err(CmaError::BadConfig(format!("parents must be in 1..={lambda}, got {mu}")));
        }
        if let Some(start) = &self.start {
            if start.len() != self.dimension() {
                return Err(CmaError::LengthMismatch {
                    expected: self.dimension(),
                    got: start.len(),
                });
            }
        }
        Ok(())
    }
}

pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

/// Strategy constants derived from `n`, `lambda` and `mu`.
#[derive(Debug, Clone, PartialEq)]
struct Constants {
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
    fn new(n: usize, lambda: usize, mu: usize) -> Self {
        let nf = n as f64;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        // With mu = lambda the log weights can reach zero; keep them positive.
        let raw: Vec<f64> = if raw.iter().all(|&w| w > 0.0) {
            raw
        } else {
            (1..=mu).map(|i| mu as f64 + 1.0 - i as f64).collect()
        };
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Constants {
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

#[derive(Debug, Clone)]
pub struct CmaState {
    config: CmaConfig,
    constants: Constants,
    /// Mean in normalized units.
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: f64,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    rng: ChaCha8Rng,
    /// Eigenvectors and square-root eigenvalues of `cov`.
    basis: DMatrix<f64>,
    scales: DVector<f64>,
}

impl CmaState {
    pub fn new(config: CmaConfig) -> Result<Self, CmaError> {
        config.check()?;
        let n = config.dimension();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mean = match &config.start {
            Some(start) => DVector::from_iterator(
                n,
                start
                    .iter()
                    .zip(&config.bounds)
                    .map(|(&x, &(lo, hi))| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)),
            ),
            None => DVector::from_iterator(n, (0..n).map(|_| rng.random::<f64>())),
        };
        let constants = Constants::new(n, config.lambda(), config.mu());
        Ok(CmaState {
            sigma: config.sigma0,
            constants,
            mean,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            rng,
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            config,
        })
    }

    pub fn config(&self) -> &CmaConfig {
        &self.config
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Mean in problem units.
    pub fn mean(&self) -> Vec<f64> {
        self.to_problem(&self.mean)
    }

    pub fn to_problem(&self, u: &DVector<f64>) -> Vec<f64> {
        u.iter()
            .zip(&self.config.bounds)
            .map(|(&u, &(lo, hi))| lo + u * (hi - lo))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(&self.config.bounds)
                .map(|(&x, &(lo, hi))| (x - lo) / (hi - lo)),
        )
    }

    /// Sample a generation in problem units, every point inside the box.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        (0..self.config.lambda())
            .map(|_| {
                let u = self.sample_in_box();
                self.to_problem(&u)
            })
            .collect()
    }

    /// One draw from N(mean, sigma^2 C). Coordinates that leave the unit box
    /// are redrawn up to the limit, then clipped.
    fn sample_in_box(&mut self) -> DVector<f64> {
        let n = self.mean.len();
        let mut result = DVector::from_element(n, f64::NAN);
        let mut pending: Vec<usize> = (0..n).collect();
        for attempt in 0..MAX_RESAMPLES {
            let z = DVector::from_iterator(n, (0..n).map(|_| self.rng.sample::<f64, _>(StandardNormal)));
            let y = &self.basis * self.scales.component_mul(&z);
            let x = &self.mean + y * self.sigma;
            pending.retain(|&i| {
                if (0.0..=1.0).contains(&x[i]) || attempt + 1 == MAX_RESAMPLES {
                    result[i] = x[i].clamp(0.0, 1.0);
                    false
                } else {
                    true
                }
            });
            if pending.is_empty() {
                break;
            }
        }
        result
    }

    /// Update the distribution from a ranked generation. Candidates are in
    /// problem units; larger fitness is better.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<(), CmaError> {
        let lambda = self.config.lambda();
        let n = self.mean.len();
        if candidates.len() != lambda {
            return Err(CmaError::LengthMismatch {
                expected: lambda,
                got: candidates.len(),
            });
        }
        if fitness.len() != lambda {
            return Err(CmaError::LengthMismatch {
                expected: lambda,
                got: fitness.len(),
            });
        }
        if let Some(bad) = candidates.iter().find(|c| c.len() != n) {
            return Err(CmaError::LengthMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        let c = self.constants.clone();
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
        let steps: Vec<DVector<f64>> = order
            .iter()
            .take(c.weights.len())
            .map(|&i| (self.to_unit(&candidates[i]) - &self.mean) / self.sigma)
            .collect();
        let y_w = steps
            .iter()
            .zip(&c.weights)
            .fold(DVector::zeros(n), |acc, (y, &w)| acc + y * w);
        self.mean += &y_w * self.sigma;

        let inv_sqrt = &self.basis
            * DMatrix::from_diagonal(&self.scales.map(|s| 1.0 / s))
            * self.basis.transpose();
        self.p_sigma = &self.p_sigma * (1.0 - c.c_sigma)
            + inv_sqrt * &y_w * (c.c_sigma * (2.0 - c.c_sigma) * c.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        self.sigma *= ((c.c_sigma / c.d_sigma) * (ps_norm / c.chi_n - 1.0)).exp();

        let g = (self.generation + 1) as f64;
        let decay = (1.0 - (1.0 - c.c_sigma).powf(2.0 * g)).sqrt();
        let h_sigma = if ps_norm / decay < (1.4 + 2.0 / (n as f64 + 1.0)) * c.chi_n {
            1.0
        } else {
            0.0
        };
        self.p_c = &self.p_c * (1.0 - c.c_c) + &y_w * (h_sigma * (c.c_c * (2.0 - c.c_c) * c.mu_eff).sqrt());
        let delta = (1.0 - h_sigma) * c.c_c * (2.0 - c.c_c);
        let weight_sum: f64 = c.weights.iter().sum();
        let rank_mu = steps
            .iter()
            .zip(&c.weights)
            .fold(DMatrix::zeros(n, n), |acc, (y, &w)| acc + y * y.transpose() * w);
        self.cov = &self.cov * (1.0 + c.c_1 * delta - c.c_1 - c.c_mu * weight_sum)
            + &self.p_c * self.p_c.transpose() * c.c_1
            + rank_mu * c.c_mu;
        self.refresh_eigen();
        self.generation += 1;
        Ok(())
    }

    /// Symmetrize, floor the spectrum and cache the decomposition.
    fn refresh_eigen(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let floor = 1e-14 * sym.trace().abs().max(f64::MIN_POSITIVE);
        let eig = SymmetricEigen::new(sym);
        let values = eig.eigenvalues.map(|v| v.max(floor));
        self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose();
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        self.basis = eig.eigenvectors;
        self.scales = values.map(f64::sqrt);
    }
}

/// Summary of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_params: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness seen up to and including this generation.
    pub best_so_far: f64,
    /// Mean after the update, problem units.
    pub mean: Vec<f64>,
    /// Step size after the update, normalized units.
    pub sigma: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub config: CmaConfig,
    pub initial_params: Vec<f64>,
    pub initial_fitness: f64,
    pub best_params: Vec<f64>,
    pub best_fitness: f64,
    pub generations: Vec<GenerationRecord>,
}

impl OptResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    /// One row per generation: `generation,<names...>,fitness,sigma`, with
    /// the generation's best candidate.
    pub fn trajectory_csv(&self, names: &[&str], fitness_name: &str) -> String {
        let mut out = String::from("generation");
        for name in names {
            out.push(',');
            out.push_str(name);
        }
        let _ = writeln!(out, ",{fitness_name},sigma");
        for r in &self.generations {
            let _ = write!(out, "{}", r.generation);
            for x in &r.best_params {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{},{}", r.best_fitness, r.sigma);
        }
        out
    }
}

/// Result of one objective call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    /// The design itself failed (scored as `fitness`, usually the worst value).
    pub failed: bool,
}

impl Evaluation {
    pub fn ok(fitness: f64) -> Self {
        Evaluation { fitness, failed: false }
    }

    pub fn failed(fitness: f64) -> Self {
        Evaluation { fitness, failed: true }
    }
}

/// Run CMA-ES for `max_generations`. The objective returns `Err` only for
/// infrastructure failures, which are retried before aborting.
pub fn optimize<F>(objective: F, config: &CmaConfig) -> Result<OptResult, CmaError>
where
    F: Fn(&[f64]) -> Result<Evaluation, String> + Sync,
{
    optimize_with(objective, config, |_| {})
}

/// As [`optimize`], reporting each finished generation.
pub fn optimize_with<F, P>(objective: F, config: &CmaConfig, mut progress: P) -> Result<OptResult, CmaError>
where
    F: Fn(&[f64]) -> Result<Evaluation, String> + Sync,
    P: FnMut(&GenerationRecord),
{
    let mut state = CmaState::new(config.clone())?;
    let initial_params = state.mean();
    let initial = evaluate(&objective, &initial_params)?;
    let mut best_params = initial_params.clone();
    let mut best_fitness = initial.fitness;
    let mut generations = Vec::with_capacity(config.max_generations);
    for _ in 0..config.max_generations {
        let candidates = state.ask();
        let results: Vec<Result<Evaluation, CmaError>> =
            candidates.par_iter().map(|c| evaluate(&objective, c)).collect();
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let fitness: Vec<f64> = results.iter().map(|e| e.fitness).collect();
        let top = (0..fitness.len())
            .max_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)))
            .expect("population is non-empty");
        if fitness[top] > best_fitness {
            best_fitness = fitness[top];
            best_params = candidates[top].clone();
        }
        state.tell(&candidates, &fitness)?;
        let record = GenerationRecord {
            generation: state.generation(),
            best_params: candidates[top].clone(),
            best_fitness: fitness[top],
            best_so_far: best_fitness,
            mean: state.mean(),
            sigma: state.sigma(),
            failures: results.iter().filter(|e| e.failed).count(),
        };
        progress(&record);
        generations.push(record);
    }
    Ok(OptResult {
        config: config.clone(),
        initial_params,
        initial_fitness: initial.fitness,
        best_params,
        best_fitness,
        generations,
    })
}

fn evaluate<F>(objective: &F, params: &[f64]) -> Result<Evaluation, CmaError>
where
    F: Fn(&[f64]) -> Result<Evaluation, String>,
{
    let mut message = String::new();
    for _ in 0..OBJECTIVE_ATTEMPTS {
        match objective(params) {
            Ok(e) => return Ok(e),
            Err(m) => message = m,
        }
    }
    Err(CmaError::Objective {
        params: params.to_vec(),
        attempts: OBJECTIVE_ATTEMPTS,
        message,
    })
}
