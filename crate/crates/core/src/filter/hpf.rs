use alloc::collections::VecDeque;
use alloc::sync::Arc;
use alloc::vec::Vec;
use rand::Rng;

use super::{combine_blocks, propagate, select, Block, FilterError, HpfConfig, ObservationModel, Particle, ParticleSet, StepStatus};
use crate::motion::{CrowdContext, MotionModel, NoiseSpec};
use crate::AgentId;

/// The last K posteriors of one agent, each paired with the crowd snapshot
/// taken at the same time (the context used to predict out of it).
#[derive(Debug, Clone)]
pub struct FilterHistory {
    entries: VecDeque<(ParticleSet, Arc<CrowdContext>)>,
    capacity: usize,
}

impl FilterHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        FilterHistory {
            entries: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends the newest posterior; the oldest one drops out past capacity.
    pub fn push(&mut self, posterior: ParticleSet, context: Arc<CrowdContext>) {
        self.entries.push_back((posterior, context));
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    /// Posterior from `j` steps back; `j = 1` is the newest.
    pub fn posterior(&self, j: usize) -> Option<&ParticleSet> {
        self.entry(j).map(|e| &e.0)
    }

    pub fn context(&self, j: usize) -> Option<&CrowdContext> {
        self.entry(j).map(|e| e.1.as_ref())
    }

    pub fn latest(&self) -> Option<&ParticleSet> {
        self.posterior(1)
    }

    fn entry(&self, j: usize) -> Option<&(ParticleSet, Arc<CrowdContext>)> {
        if j == 0 || j > self.entries.len() {
            return None;
        }
        self.entries.get(self.entries.len() - j)
    }
}

/// Particles of the posterior from `j` steps back, each pushed through `j`
/// sampled transitions. Step `s` uses the context stored for that time.
/// Weights are the ones of the source posterior.
pub fn hpf_predict_j<R: Rng + ?Sized>(
    history: &FilterHistory,
    j: usize,
    agent: AgentId,
    model: MotionModel,
    noise: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<Particle>, FilterError> {
    let source = history.posterior(j).ok_or(FilterError::InsufficientHistory {
        needed: j,
        available: history.len(),
    })?;
    let contexts: Vec<&CrowdContext> = (1..=j).rev().map(|s| history.context(s).expect("aligned")).collect();
    propagate(source.particles(), agent, &contexts, model, noise, dt, rng)
}

/// The weighted K * M pool before selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledPosterior {
    pub particles: Vec<Particle>,
    /// Lambda per order `j = 1..=K`; zero for orders beyond the history.
    pub lambdas: Vec<f64>,
    /// Unnormalized `ln(pi_j * sum_m w[j,m])` for the orders used.
    pub log_scores: Vec<f64>,
    pub effective_order: usize,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpfOutput {
    pub set: ParticleSet,
    pub lambdas: Vec<f64>,
    pub status: StepStatus,
}

/// Builds the pooled posterior: for every `j` up to the effective order the
/// j-step prediction is weighted by the observation, the blocks are mixed
/// with `lambda_j`, and all particles are kept.
///
/// With less than K posteriors in the history the order is truncated and
/// `pi` renormalized over the orders available.
#[allow(clippy::too_many_arguments)]
pub fn hpf_pool<O, R>(
    history: &FilterHistory,
    agent: AgentId,
    obs: &O::Observation,
    obs_model: &O,
    cfg: &HpfConfig,
    model: MotionModel,
    noise: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<PooledPosterior, FilterError>
where
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    if history.is_empty() {
        return Err(FilterError::EmptyHistory);
    }
    let order = cfg.order_k.min(history.len()).min(cfg.pi.len());
    let mut blocks = Vec::with_capacity(order);
    for j in 1..=order {
        history.posterior(j).expect("within history").ensure_normalized()?;
        let particles = hpf_predict_j(history, j, agent, model, noise, dt, rng)?;
        let log_lik = particles.iter().map(|p| obs_model.log_likelihood(obs, &p.state)).collect();
        blocks.push(Block { particles, log_lik });
    }

    let pi_sum: f64 = cfg.pi[..order].iter().sum();
    let pi: Vec<f64> = if pi_sum > 0.0 {
        cfg.pi[..order].iter().map(|p| p / pi_sum).collect()
    } else {
        alloc::vec![1.0 / order as f64; order]
    };

    let combined = combine_blocks(&blocks, &pi);
    let mut lambdas = combined.lambdas;
    lambdas.resize(cfg.order_k, 0.0);
    Ok(PooledPosterior {
        particles: combined.pooled,
        lambdas,
        log_scores: combined.log_scores,
        effective_order: order,
        status: combined.status,
    })
}

/// One higher-order filter step: [`hpf_pool`] followed by selection of M
/// particles (systematic resampling by default).
#[allow(clippy::too_many_arguments)]
pub fn hpf_step<O, R>(
    history: &FilterHistory,
    agent: AgentId,
    obs: &O::Observation,
    obs_model: &O,
    cfg: &HpfConfig,
    model: MotionModel,
    noise: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<HpfOutput, FilterError>
where
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    let pooled = hpf_pool(history, agent, obs, obs_model, cfg, model, noise, dt, rng)?;
    let timestamp = history.latest().map_or(0, |p| p.timestamp + 1);
    let set = select(&pooled.particles, cfg.particles_m, cfg.selection, timestamp, rng);
    Ok(HpfOutput {
        set,
        lambdas: pooled.lambdas,
        status: pooled.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{AgentState, ContextAgent};
    use crate::rvo::RvoParams;
    use crate::Vec2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> Arc<CrowdContext> {
        Arc::new(CrowdContext::solo(
            ContextAgent {
                id: AgentId(0),
                state: AgentState::default(),
                radius: 0.3,
                max_speed: 2.0,
            },
            RvoParams::default(),
        ))
    }

    #[test]
    fn history_is_a_ring_buffer() {
        let mut h = FilterHistory::new(2);
        for t in 0..5 {
            h.push(ParticleSet::uniform([AgentState::default()], t), ctx());
        }
        assert_eq!(h.len(), 2);
        assert_eq!(h.posterior(1).unwrap().timestamp, 4);
        assert_eq!(h.posterior(2).unwrap().timestamp, 3);
        assert!(h.posterior(3).is_none());
    }

    #[test]
    fn two_step_lin_prediction() {
        let mut h = FilterHistory::new(2);
        let s = AgentState::new(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0));
        h.push(ParticleSet::uniform([s], 0), ctx());
        h.push(ParticleSet::uniform([AgentState::default()], 1), ctx());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = hpf_predict_j(&h, 2, AgentId(0), MotionModel::Lin, &NoiseSpec::ZERO, 0.4, &mut rng).unwrap();
        assert!((p[0].state.position - Vec2::new(0.8, 0.0)).length() < 1e-15);
    }

    #[test]
    fn predicting_beyond_history_fails() {
        let mut h = FilterHistory::new(2);
        h.push(ParticleSet::uniform([AgentState::default()], 0), ctx());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            hpf_predict_j(&h, 2, AgentId(0), MotionModel::Lin, &NoiseSpec::ZERO, 0.4, &mut rng),
            Err(FilterError::InsufficientHistory { needed: 2, available: 1 })
        );
    }
}
