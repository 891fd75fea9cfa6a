//! Per-agent sequential Monte Carlo.
//!
//! [`pf_step`] is the first-order bootstrap filter. [`hpf_step`] is the
//! higher-order filter: it propagates the posteriors of the last K steps
//! forward by `j` steps each, weights every block by the current observation,
//! mixes the blocks with observation-dependent weights `lambda_j`, and
//! resamples M particles out of the pooled K * M.
//!
//! All weighting happens in log space. Both filters share one weighting and
//! selection path, so a higher-order filter of order 1 reproduces the
//! first-order filter bit for bit.

mod hpf;
mod resample;

pub use hpf::{hpf_pool, hpf_predict_j, hpf_step, FilterHistory, HpfOutput, PooledPosterior};
pub use resample::{resample, select_top};

use alloc::vec::Vec;
use rand::Rng;
use thiserror::Error;

use crate::motion::{sample_transition, AgentState, CrowdContext, MotionError, MotionModel, NoiseSpec};
use crate::AgentId;

/// Likelihoods whose maximum falls below this (natural log) count as zero.
pub const LOG_UNDERFLOW: f64 = -700.0;

const NORMALIZED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("history holds {available} posteriors, {needed} needed")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("filter history is empty")]
    EmptyHistory,
    #[error("particle weights are not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: AgentState,
    pub weight: f64,
}

/// Weighted particles approximating one agent's posterior at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    pub timestamp: u64,
}

impl ParticleSet {
    /// Wraps particles as given. Use [`ParticleSet::normalize`] if the
    /// weights do not sum to one.
    pub fn new(particles: Vec<Particle>, timestamp: u64) -> Self {
        assert!(!particles.is_empty(), "a particle set needs at least one particle");
        ParticleSet { particles, timestamp }
    }

    /// Equal weights over the given states.
    pub fn uniform(states: impl IntoIterator<Item = AgentState>, timestamp: u64) -> Self {
        let mut particles: Vec<Particle> = states
            .into_iter()
            .map(|state| Particle { state, weight: 1.0 })
            .collect();
        let w = 1.0 / particles.len() as f64;
        for p in &mut particles {
            p.weight = w;
        }
        ParticleSet::new(particles, timestamp)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_weight() - 1.0).abs() <= NORMALIZED_TOL
    }

    pub fn normalize(&mut self) {
        let total = self.total_weight();
        for p in &mut self.particles {
            p.weight /= total;
        }
    }

    fn ensure_normalized(&self) -> Result<(), FilterError> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(FilterError::NotNormalized(self.total_weight()))
        }
    }
}

/// Weight-weighted mean of every state block.
pub fn posterior_mean(set: &ParticleSet) -> AgentState {
    let mut mean = AgentState::default();
    for p in set.particles() {
        mean.scaled_add(&p.state, p.weight);
    }
    mean
}

/// Log-likelihood of an observation given a state hypothesis.
pub trait ObservationModel {
    type Observation: ?Sized;

    fn log_likelihood(&self, obs: &Self::Observation, state: &AgentState) -> f64;
}

/// How M particles are drawn from the pooled weighted set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Systematic resampling.
    #[default]
    Resample,
    /// Keep the M heaviest particles with their renormalized weights.
    TopM,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpfConfig {
    /// Markov order K.
    pub order_k: usize,
    /// Mixture weights over `j = 1..=K`.
    pub pi: Vec<f64>,
    /// Particles kept per step, M.
    pub particles_m: usize,
    pub selection: Selection,
}

impl Default for HpfConfig {
    fn default() -> Self {
        HpfConfig {
            order_k: 2,
            pi: alloc::vec![0.91, 0.09],
            particles_m: 200,
            selection: Selection::Resample,
        }
    }
}

impl HpfConfig {
    /// First-order configuration: K = 1, pi = [1].
    pub fn first_order(particles_m: usize) -> Self {
        HpfConfig {
            order_k: 1,
            pi: alloc::vec![1.0],
            particles_m,
            selection: Selection::Resample,
        }
    }

    /// Checks the invariants; the error names the offending field.
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.order_k == 0 {
            return Err(FilterError::InvalidConfig("k"));
        }
        if self.particles_m == 0 {
            return Err(FilterError::InvalidConfig("m"));
        }
        if self.pi.len() != self.order_k || self.pi.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(FilterError::InvalidConfig("pi"));
        }
        let sum: f64 = self.pi.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(FilterError::InvalidConfig("pi"));
        }
        Ok(())
    }
}

/// Whether the observation carried information for this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Updated,
    /// Every likelihood underflowed; the step kept the prediction.
    AllZeroWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub set: ParticleSet,
    pub status: StepStatus,
}

/// One block of propagated particles with their prior weights and
/// observation log-likelihoods.
pub(crate) struct Block {
    pub particles: Vec<Particle>,
    pub log_lik: Vec<f64>,
}

pub(crate) struct Combined {
    pub pooled: Vec<Particle>,
    pub lambdas: Vec<f64>,
    pub log_scores: Vec<f64>,
    pub status: StepStatus,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Mixes weighted blocks: block j gets score `ln pi_j + ln sum_m w_m p(y|x_m)`.
/// `lambda` is the normalized score; each block's weights are normalized
/// and scaled by its lambda.
pub(crate) fn combine_blocks(blocks: &[Block], pi: &[f64]) -> Combined {
    let all_zero = blocks
        .iter()
        .all(|b| b.log_lik.iter().fold(f64::NEG_INFINITY, |a, &l| a.max(l)) < LOG_UNDERFLOW);
    let status = if all_zero {
        StepStatus::AllZeroWeights
    } else {
        StepStatus::Updated
    };

    let log_weights: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| {
            b.particles
                .iter()
                .zip(&b.log_lik)
                .map(|(p, &ll)| {
                    let ll = if all_zero { 0.0 } else { ll };
                    libm::log(p.weight) + ll
                })
                .collect()
        })
        .collect();

    let block_mass: Vec<f64> = log_weights.iter().map(|lw| log_sum_exp(lw.iter().copied())).collect();
    let log_scores: Vec<f64> = pi
        .iter()
        .zip(&block_mass)
        .map(|(&p, &mass)| libm::log(p) + mass)
        .collect();
    let total = log_sum_exp(log_scores.iter().copied());
    let lambdas: Vec<f64> = log_scores.iter().map(|&s| libm::exp(s - total)).collect();

    let mut pooled = Vec::with_capacity(blocks.iter().map(|b| b.particles.len()).sum());
    for ((block, lw), (&mass, &lambda)) in blocks.iter().zip(&log_weights).zip(block_mass.iter().zip(&lambdas)) {
        for (p, &l) in block.particles.iter().zip(lw) {
            let normalized = if mass == f64::NEG_INFINITY { 0.0 } else { libm::exp(l - mass) };
            pooled.push(Particle {
                state: p.state,
                weight: lambda * normalized,
            });
        }
    }

    Combined {
        pooled,
        lambdas,
        log_scores,
        status,
    }
}

pub(crate) fn select<R: Rng + ?Sized>(
    pooled: &[Particle],
    m: usize,
    selection: Selection,
    timestamp: u64,
    rng: &mut R,
) -> ParticleSet {
    match selection {
        Selection::Resample => resample(pooled, m, timestamp, rng),
        Selection::TopM => select_top(pooled, m, timestamp),
    }
}

/// Propagates every particle one step and keeps its weight.
pub(crate) fn propagate<R: Rng + ?Sized>(
    particles: &[Particle],
    agent: AgentId,
    contexts: &[&CrowdContext],
    model: MotionModel,
    noise: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<Particle>, FilterError> {
    particles
        .iter()
        .map(|p| {
            let mut state = p.state;
            for ctx in contexts {
                state = sample_transition(model, agent, &state, ctx, noise, dt, rng)?;
            }
            Ok(Particle {
                state,
                weight: p.weight,
            })
        })
        .collect()
}

/// One bootstrap particle-filter step: propagate, reweight by the
/// observation, normalize, resample back to the same particle count.
///
/// When every likelihood underflows the observation is ignored and the
/// propagated prior is resampled instead; the output is flagged.
#[allow(clippy::too_many_arguments)]
pub fn pf_step<O, R>(
    prior: &ParticleSet,
    agent: AgentId,
    ctx: &CrowdContext,
    obs: &O::Observation,
    obs_model: &O,
    model: MotionModel,
    noise: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<StepOutput, FilterError>
where
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    prior.ensure_normalized()?;
    let particles = propagate(prior.particles(), agent, &[ctx], model, noise, dt, rng)?;
    let log_lik = particles.iter().map(|p| obs_model.log_likelihood(obs, &p.state)).collect();
    let combined = combine_blocks(&[Block { particles, log_lik }], &[1.0]);
    let set = select(&combined.pooled, prior.len(), Selection::Resample, prior.timestamp + 1, rng);
    Ok(StepOutput {
        set,
        status: combined.status,
    })
}
