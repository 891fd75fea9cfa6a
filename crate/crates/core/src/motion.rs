//! One-step motion models and their Gaussian transition densities.
//!
//! A state carries position, velocity and desired velocity. The mean of a
//! transition is the model's deterministic prediction; sampling adds
//! independent zero-mean Gaussian noise per block. Adaptive models also let
//! the desired velocity diffuse, which is how it is estimated online.

use core::fmt;
use core::str::FromStr;

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rvo::{rvo_step_as, AgentBody, RvoParams};
use crate::{AgentId, Vec2};

/// Default hard cap on velocity and desired-velocity magnitude (m/s).
pub const DEFAULT_SPEED_CAP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub desired_velocity: Vec2,
}

impl AgentState {
    pub fn new(position: Vec2, velocity: Vec2, desired_velocity: Vec2) -> Self {
        AgentState {
            position,
            velocity,
            desired_velocity,
        }
    }

    /// Desired velocity starts at the observed velocity.
    pub fn from_observed(position: Vec2, velocity: Vec2) -> Self {
        AgentState::new(position, velocity, velocity)
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.desired_velocity.is_finite()
    }

    fn capped(mut self, cap: f64) -> Self {
        self.velocity = self.velocity.clamp_length(cap);
        self.desired_velocity = self.desired_velocity.clamp_length(cap);
        self
    }

    pub(crate) fn scaled_add(&mut self, other: &AgentState, w: f64) {
        self.position += other.position * w;
        self.velocity += other.velocity * w;
        self.desired_velocity += other.desired_velocity * w;
    }
}

/// Motion model identifiers. `+` variants adapt the desired velocity online;
/// the plain ones keep it at its initial value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionModel {
    /// Constant velocity.
    Lin,
    Rvo,
    RvoPlus,
    Lta,
    LtaPlus,
    Attr,
    AttrPlus,
    Attrg,
    AttrgPlus,
}

impl MotionModel {
    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            MotionModel::RvoPlus | MotionModel::LtaPlus | MotionModel::AttrPlus | MotionModel::AttrgPlus
        )
    }

    pub fn is_implemented(self) -> bool {
        matches!(self, MotionModel::Lin | MotionModel::Rvo | MotionModel::RvoPlus)
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionModel::Lin => "lin",
            MotionModel::Rvo => "rvo",
            MotionModel::RvoPlus => "rvo+",
            MotionModel::Lta => "lta",
            MotionModel::LtaPlus => "lta+",
            MotionModel::Attr => "attr",
            MotionModel::AttrPlus => "attr+",
            MotionModel::Attrg => "attrg",
            MotionModel::AttrgPlus => "attrg+",
        }
    }
}

impl fmt::Display for MotionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown motion model")]
pub struct UnknownModel;

impl FromStr for MotionModel {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = [
            MotionModel::Lin,
            MotionModel::Rvo,
            MotionModel::RvoPlus,
            MotionModel::Lta,
            MotionModel::LtaPlus,
            MotionModel::Attr,
            MotionModel::AttrPlus,
            MotionModel::Attrg,
            MotionModel::AttrgPlus,
        ];
        let lower = s.trim();
        all.into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(lower))
            .ok_or(UnknownModel)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionError {
    #[error("motion model `{0}` is not implemented")]
    NotImplemented(MotionModel),
    #[error("transition density needs strictly positive noise")]
    DegenerateNoise,
    #[error("agent {0} is not part of the crowd context")]
    UnknownAgent(AgentId),
    #[error("agent {0} appears twice in the crowd context")]
    DuplicateAgent(AgentId),
}

/// Per-block standard deviations of the diagonal transition covariance.
/// Each applies to both coordinates of its block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_position: f64,
    pub sigma_velocity: f64,
    pub sigma_desired: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma_position: 0.05,
            sigma_velocity: 0.1,
            sigma_desired: 0.05,
        }
    }
}

impl NoiseSpec {
    pub const ZERO: NoiseSpec = NoiseSpec {
        sigma_position: 0.0,
        sigma_velocity: 0.0,
        sigma_desired: 0.0,
    };

    pub fn is_valid(&self) -> bool {
        [self.sigma_position, self.sigma_velocity, self.sigma_desired]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// One agent as published into the crowd snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextAgent {
    pub id: AgentId,
    pub state: AgentState,
    pub radius: f64,
    pub max_speed: f64,
}

impl ContextAgent {
    fn body(&self) -> AgentBody {
        AgentBody {
            position: self.state.position,
            velocity: self.state.velocity,
            radius: self.radius,
            max_speed: self.max_speed,
        }
    }
}

/// Posterior means of every tracked agent at one time, frozen for a whole
/// filter step. Particles see the other agents only through this snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdContext {
    agents: Vec<ContextAgent>,
    bodies: Vec<AgentBody>,
    pub params: RvoParams,
    pub speed_cap: f64,
}

impl CrowdContext {
    pub fn new(agents: Vec<ContextAgent>, params: RvoParams) -> Result<Self, MotionError> {
        for (i, a) in agents.iter().enumerate() {
            if agents[..i].iter().any(|b| b.id == a.id) {
                return Err(MotionError::DuplicateAgent(a.id));
            }
        }
        let bodies = agents.iter().map(ContextAgent::body).collect();
        Ok(CrowdContext {
            agents,
            bodies,
            params,
            speed_cap: DEFAULT_SPEED_CAP,
        })
    }

    /// A context holding only one agent.
    pub fn solo(agent: ContextAgent, params: RvoParams) -> Self {
        CrowdContext::new(alloc::vec![agent], params).expect("single agent")
    }

    pub fn with_speed_cap(mut self, cap: f64) -> Self {
        self.speed_cap = cap;
        self
    }

    pub fn agents(&self) -> &[ContextAgent] {
        &self.agents
    }

    pub fn bodies(&self) -> &[AgentBody] {
        &self.bodies
    }

    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    pub fn get(&self, id: AgentId) -> Option<&ContextAgent> {
        self.agents.iter().find(|a| a.id == id)
    }
}

/// Deterministic one-step prediction for `agent` in state `state`.
///
/// RVO: the new velocity is the RVO solve against the context with this
/// state's desired velocity; position integrates it. LIN: velocity is kept.
/// The desired velocity is unchanged in both cases.
pub fn predict_mean(
    model: MotionModel,
    agent: AgentId,
    state: &AgentState,
    ctx: &CrowdContext,
    dt: f64,
) -> Result<AgentState, MotionError> {
    match model {
        MotionModel::Lin => Ok(AgentState {
            position: state.position + state.velocity * dt,
            ..*state
        }),
        MotionModel::Rvo | MotionModel::RvoPlus => {
            let idx = ctx.index_of(agent).ok_or(MotionError::UnknownAgent(agent))?;
            let own = &ctx.agents[idx];
            let me = AgentBody {
                position: state.position,
                velocity: state.velocity,
                radius: own.radius,
                max_speed: own.max_speed,
            };
            let params = RvoParams { dt, ..ctx.params };
            let velocity = rvo_step_as(idx, &me, &ctx.bodies, state.desired_velocity, &params).velocity();
            Ok(AgentState {
                position: state.position + velocity * dt,
                velocity,
                desired_velocity: state.desired_velocity,
            })
        }
        other => Err(MotionError::NotImplemented(other)),
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Vec2::new(x * sigma, y * sigma)
}

/// Draws the next state: the mean plus block-diagonal Gaussian noise.
/// Non-adaptive models keep the desired velocity fixed and draw no noise
/// for it. Speeds are capped at `ctx.speed_cap` afterwards.
pub fn sample_transition<R: Rng + ?Sized>(
    model: MotionModel,
    agent: AgentId,
    state: &AgentState,
    ctx: &CrowdContext,
    noise: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<AgentState, MotionError> {
    let mut next = predict_mean(model, agent, state, ctx, dt)?;
    next.position += gaussian(rng, noise.sigma_position);
    next.velocity += gaussian(rng, noise.sigma_velocity);
    if model.is_adaptive() {
        next.desired_velocity += gaussian(rng, noise.sigma_desired);
    }
    Ok(next.capped(ctx.speed_cap))
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn block_log_density(x: Vec2, mean: Vec2, sigma: f64) -> f64 {
    let d = x - mean;
    -d.length_squared() / (2.0 * sigma * sigma) - LN_2PI - 2.0 * libm::log(sigma)
}

/// Log-density of `next` under the diagonal Gaussian around
/// [`predict_mean`]. For non-adaptive models the desired-velocity block is
/// deterministic and left out.
pub fn transition_density(
    model: MotionModel,
    agent: AgentId,
    next: &AgentState,
    state: &AgentState,
    ctx: &CrowdContext,
    noise: &NoiseSpec,
    dt: f64,
) -> Result<f64, MotionError> {
    let adaptive = model.is_adaptive();
    if noise.sigma_position <= 0.0
        || noise.sigma_velocity <= 0.0
        || (adaptive && noise.sigma_desired <= 0.0)
    {
        return Err(MotionError::DegenerateNoise);
    }
    let mean = predict_mean(model, agent, state, ctx, dt)?;
    let mut log_p = block_log_density(next.position, mean.position, noise.sigma_position)
        + block_log_density(next.velocity, mean.velocity, noise.sigma_velocity);
    if adaptive {
        log_p += block_log_density(next.desired_velocity, mean.desired_velocity, noise.sigma_desired);
    }
    Ok(log_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn solo(state: AgentState) -> CrowdContext {
        CrowdContext::solo(
            ContextAgent {
                id: AgentId(0),
                state,
                radius: 0.3,
                max_speed: 2.0,
            },
            RvoParams::default(),
        )
    }

    #[test]
    fn lin_integrates_velocity() {
        let s = AgentState::new(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::ZERO);
        let next = predict_mean(MotionModel::Lin, AgentId(0), &s, &solo(s), 0.4).unwrap();
        assert_eq!(next.position, Vec2::new(0.4, 0.0));
        assert_eq!(next.velocity, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn lone_rvo_agent_takes_desired_velocity() {
        let s = AgentState::new(Vec2::new(1.0, 1.0), Vec2::ZERO, Vec2::new(0.8, -0.6));
        let next = predict_mean(MotionModel::RvoPlus, AgentId(0), &s, &solo(s), 0.4).unwrap();
        assert_eq!(next.velocity, Vec2::new(0.8, -0.6));
        assert_eq!(next.desired_velocity, s.desired_velocity);
    }

    #[test]
    fn unimplemented_models_are_reported() {
        let s = AgentState::default();
        for m in [MotionModel::Lta, MotionModel::AttrPlus, MotionModel::Attrg] {
            assert_eq!(
                predict_mean(m, AgentId(0), &s, &solo(s), 0.4),
                Err(MotionError::NotImplemented(m))
            );
        }
    }

    #[test]
    fn rvo_needs_own_body_in_context() {
        let s = AgentState::default();
        assert_eq!(
            predict_mean(MotionModel::Rvo, AgentId(9), &s, &solo(s), 0.4),
            Err(MotionError::UnknownAgent(AgentId(9)))
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = ContextAgent {
            id: AgentId(1),
            state: AgentState::default(),
            radius: 0.3,
            max_speed: 2.0,
        };
        assert_eq!(
            CrowdContext::new(alloc::vec![a, a], RvoParams::default()),
            Err(MotionError::DuplicateAgent(AgentId(1)))
        );
    }

    #[test]
    fn zero_noise_sampling_is_the_mean() {
        let s = AgentState::new(Vec2::ZERO, Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0));
        let ctx = solo(s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in [MotionModel::Lin, MotionModel::Rvo, MotionModel::RvoPlus] {
            let mean = predict_mean(model, AgentId(0), &s, &ctx, 0.4).unwrap();
            let draw = sample_transition(model, AgentId(0), &s, &ctx, &NoiseSpec::ZERO, 0.4, &mut rng).unwrap();
            assert_eq!(draw, mean);
        }
    }

    #[test]
    fn density_peaks_at_mean_and_is_symmetric() {
        let s = AgentState::new(Vec2::ZERO, Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0));
        let ctx = solo(s);
        let noise = NoiseSpec::default();
        let id = AgentId(0);
        let mean = predict_mean(MotionModel::RvoPlus, id, &s, &ctx, 0.4).unwrap();
        let at_mean = transition_density(MotionModel::RvoPlus, id, &mean, &s, &ctx, &noise, 0.4).unwrap();
        let norm = -3.0 * LN_2PI
            - 2.0 * (libm::log(noise.sigma_position) + libm::log(noise.sigma_velocity) + libm::log(noise.sigma_desired));
        assert!((at_mean - norm).abs() < 1e-12);

        let delta = AgentState::new(Vec2::new(0.01, -0.02), Vec2::new(0.03, 0.0), Vec2::new(-0.01, 0.01));
        let mut plus = mean;
        plus.scaled_add(&delta, 1.0);
        let mut minus = mean;
        minus.scaled_add(&delta, -1.0);
        let lp = transition_density(MotionModel::RvoPlus, id, &plus, &s, &ctx, &noise, 0.4).unwrap();
        let lm = transition_density(MotionModel::RvoPlus, id, &minus, &s, &ctx, &noise, 0.4).unwrap();
        assert!((lp - lm).abs() < 1e-12);
        assert!(lp < at_mean);
    }

    #[test]
    fn zero_sigma_density_is_degenerate() {
        let s = AgentState::default();
        let noise = NoiseSpec {
            sigma_desired: 0.0,
            ..NoiseSpec::default()
        };
        assert_eq!(
            transition_density(MotionModel::RvoPlus, AgentId(0), &s, &s, &solo(s), &noise, 0.4),
            Err(MotionError::DegenerateNoise)
        );
        // Fixed desired velocity ignores its sigma.
        assert!(transition_density(MotionModel::Rvo, AgentId(0), &s, &s, &solo(s), &noise, 0.4).is_ok());
    }

    #[test]
    fn model_names_round_trip() {
        for m in [MotionModel::Lin, MotionModel::RvoPlus, MotionModel::AttrgPlus] {
            assert_eq!(m.name().parse::<MotionModel>(), Ok(m));
        }
        assert!("rvo++".parse::<MotionModel>().is_err());
    }
}
