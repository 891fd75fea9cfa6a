//! Evaluation protocols: open-loop trajectory prediction after a short
//! learning phase, and tracking through noisy or occluded observations.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::filter::{
    hpf_step, pf_step, posterior_mean, FilterError, FilterHistory, HpfConfig, ObservationModel, ParticleSet,
};
use crate::motion::{predict_mean, AgentState, ContextAgent, CrowdContext, MotionError, MotionModel, NoiseSpec};
use crate::rvo::RvoParams;
use crate::scenario::{derive_velocities, ObservationTrace, Scenario, VelocityTrack};
use crate::{AgentId, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("no trajectory spans the learning window")]
    NoEligibleTrials,
    #[error("horizon {horizon} not available in sequences of length {len}")]
    HorizonUnavailable { horizon: usize, len: usize },
    #[error("observation trace does not match the scenario frames")]
    TraceMismatch,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

/// Isotropic Gaussian on position; an absent observation is flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticLikelihood {
    pub sigma_obs: f64,
}

impl Default for SyntheticLikelihood {
    fn default() -> Self {
        SyntheticLikelihood { sigma_obs: 0.1 }
    }
}

impl ObservationModel for SyntheticLikelihood {
    type Observation = Option<Vec2>;

    fn log_likelihood(&self, obs: &Option<Vec2>, state: &AgentState) -> f64 {
        match obs {
            Some(p) => -0.5 * (state.position - *p).length_squared() / (self.sigma_obs * self.sigma_obs),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Pf,
    Hpf,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Pf => "pf",
            FilterKind::Hpf => "hpf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unknown filter kind")]
pub struct UnknownFilter;

impl core::str::FromStr for FilterKind {
    type Err = UnknownFilter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pf" => Ok(FilterKind::Pf),
            "hpf" => Ok(FilterKind::Hpf),
            _ => Err(UnknownFilter),
        }
    }
}

/// Everything a protocol run depends on besides the data and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub hpf: HpfConfig,
    pub noise: NoiseSpec,
    pub rvo: RvoParams,
    pub likelihood: SyntheticLikelihood,
    pub radius: f64,
    pub max_speed: f64,
    /// Frames with observations before prediction starts, the first one initializes.
    pub learning_frames: usize,
    /// A new trial starts every `start_stride` frames.
    pub start_stride: usize,
    /// Prediction horizons L, in steps.
    pub horizons: Vec<usize>,
    /// Tracking horizons N, in frames after the start.
    pub track_horizons: Vec<usize>,
    pub success_threshold: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            hpf: HpfConfig::default(),
            noise: NoiseSpec::default(),
            rvo: RvoParams::default(),
            likelihood: SyntheticLikelihood::default(),
            radius: 0.3,
            max_speed: 2.0,
            learning_frames: 10,
            start_stride: 16,
            horizons: alloc::vec![5, 15, 30],
            track_horizons: alloc::vec![16, 24],
            success_threshold: 0.5,
        }
    }
}

impl ProtocolConfig {
    fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    fn max_track_horizon(&self) -> usize {
        self.track_horizons.iter().copied().max().unwrap_or(0)
    }

    fn filter_config(&self, kind: FilterKind) -> HpfConfig {
        match kind {
            FilterKind::Pf => HpfConfig {
                selection: self.hpf.selection,
                ..HpfConfig::first_order(self.hpf.particles_m)
            },
            FilterKind::Hpf => self.hpf.clone(),
        }
    }
}

/// Distance between `pred[l]` and `truth[l]`.
pub fn mean_error(pred: &[Vec2], truth: &[Vec2], l: usize) -> Result<f64, BenchError> {
    let len = pred.len().min(truth.len());
    if l >= len {
        return Err(BenchError::HorizonUnavailable { horizon: l, len });
    }
    Ok(pred[l].distance(truth[l]))
}

/// Independent stream per (seed, trial, agent).
fn stream(seed: u64, trial: usize, agent: AgentId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(agent.0);
    rng
}

fn initial_cloud(state: AgentState, model: MotionModel, noise: &NoiseSpec, m: usize, rng: &mut ChaCha8Rng) -> ParticleSet {
    let mut draw = |sigma: f64| -> Vec2 {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        Vec2::new(x, y) * sigma
    };
    let states: Vec<AgentState> = (0..m)
        .map(|_| {
            let position = state.position + draw(noise.sigma_position);
            let velocity = state.velocity + draw(noise.sigma_velocity);
            let desired_velocity = if model.is_adaptive() {
                state.desired_velocity + draw(noise.sigma_desired)
            } else {
                state.desired_velocity
            };
            AgentState::new(position, velocity, desired_velocity)
        })
        .collect();
    ParticleSet::uniform(states, 0)
}

/// One filter per tracked agent, all stepping together against a shared
/// snapshot of the others' posterior means.
struct CrowdFilter {
    model: MotionModel,
    kind: FilterKind,
    cfg: HpfConfig,
    noise: NoiseSpec,
    params: RvoParams,
    radius: f64,
    max_speed: f64,
    dt: f64,
    agents: Vec<AgentId>,
    histories: Vec<FilterHistory>,
    lambdas: Vec<Vec<f64>>,
    rngs: Vec<ChaCha8Rng>,
}

impl CrowdFilter {
    #[allow(clippy::too_many_arguments)]
    fn new(
        model: MotionModel,
        kind: FilterKind,
        pc: &ProtocolConfig,
        dt: f64,
        initial: &[(AgentId, AgentState)],
        extras: &[(AgentId, AgentState)],
        seed: u64,
        trial: usize,
    ) -> Result<Self, BenchError> {
        let cfg = pc.filter_config(kind);
        cfg.validate()?;
        let mut rngs: Vec<ChaCha8Rng> = initial.iter().map(|(id, _)| stream(seed, trial, *id)).collect();
        let sets: Vec<ParticleSet> = initial
            .iter()
            .zip(rngs.iter_mut())
            .map(|((_, s), rng)| initial_cloud(*s, model, &pc.noise, cfg.particles_m, rng))
            .collect();
        let mut f = CrowdFilter {
            model,
            kind,
            noise: pc.noise,
            params: pc.rvo,
            radius: pc.radius,
            max_speed: pc.max_speed,
            dt,
            agents: initial.iter().map(|(id, _)| *id).collect(),
            histories: initial.iter().map(|_| FilterHistory::new(cfg.order_k)).collect(),
            lambdas: initial.iter().map(|_| alloc::vec![1.0]).collect(),
            cfg,
            rngs,
        };
        f.publish(sets, extras)?;
        Ok(f)
    }

    fn context(&self, tracked: &[AgentState], extras: &[(AgentId, AgentState)]) -> Result<Arc<CrowdContext>, BenchError> {
        let body = |id: AgentId, state: AgentState| ContextAgent {
            id,
            state,
            radius: self.radius,
            max_speed: self.max_speed,
        };
        let all = self
            .agents
            .iter()
            .zip(tracked)
            .map(|(id, s)| body(*id, *s))
            .chain(extras.iter().map(|(id, s)| body(*id, *s)))
            .collect();
        Ok(Arc::new(CrowdContext::new(all, self.params)?))
    }

    /// Pushes the new posteriors with the snapshot of their means.
    fn publish(&mut self, sets: Vec<ParticleSet>, extras: &[(AgentId, AgentState)]) -> Result<(), BenchError> {
        let means: Vec<AgentState> = sets.iter().map(posterior_mean).collect();
        let ctx = self.context(&means, extras)?;
        for (h, set) in self.histories.iter_mut().zip(sets) {
            h.push(set, ctx.clone());
        }
        Ok(())
    }

    fn step(&mut self, obs: &[Option<Vec2>], likelihood: &SyntheticLikelihood, extras: &[(AgentId, AgentState)]) -> Result<(), BenchError> {
        let mut sets = Vec::with_capacity(self.agents.len());
        for i in 0..self.agents.len() {
            let (agent, history, rng) = (self.agents[i], &self.histories[i], &mut self.rngs[i]);
            let set = match self.kind {
                FilterKind::Pf => {
                    let prior = history.latest().expect("initialized");
                    let ctx = history.context(1).expect("initialized");
                    pf_step(prior, agent, ctx, &obs[i], likelihood, self.model, &self.noise, self.dt, rng)?.set
                }
                FilterKind::Hpf => {
                    let out = hpf_step(history, agent, &obs[i], likelihood, &self.cfg, self.model, &self.noise, self.dt, rng)?;
                    self.lambdas[i] = out.lambdas;
                    out.set
                }
            };
            sets.push(set);
        }
        self.publish(sets, extras)
    }

    fn means(&self) -> Vec<AgentState> {
        self.histories.iter().map(|h| posterior_mean(h.latest().expect("initialized"))).collect()
    }

    /// Open-loop mean prediction for `steps` steps. Row `n` holds every
    /// tracked agent's position `n` steps after the last posterior.
    ///
    /// With K > 1 the predicted state is the lambda-weighted mixture of the
    /// j-step mean predictions from the states j steps back; lambda stays
    /// at its last observed value. Extras move at constant velocity.
    fn predict(&self, steps: usize, extras: &[(AgentId, AgentState)]) -> Result<Vec<Vec<Vec2>>, BenchError> {
        let order = self.histories[0].len();
        // (means, context) per time, oldest first.
        let mut times: Vec<(Vec<AgentState>, Arc<CrowdContext>)> = Vec::new();
        for j in (1..=order).rev() {
            let means = self
                .histories
                .iter()
                .map(|h| posterior_mean(h.posterior(j).expect("aligned")))
                .collect();
            let ctx = self.histories[0].context(j).expect("aligned");
            times.push((means, Arc::new(ctx.clone())));
        }
        let weights: Vec<Vec<f64>> = self
            .lambdas
            .iter()
            .map(|l| {
                let mut w: Vec<f64> = l.iter().take(order).copied().collect();
                let s: f64 = w.iter().sum();
                if s > 0.0 {
                    w.iter_mut().for_each(|x| *x /= s);
                } else {
                    w = alloc::vec![1.0];
                }
                w
            })
            .collect();

        let mut rows = Vec::with_capacity(steps + 1);
        rows.push(times.last().expect("nonempty").0.iter().map(|s| s.position).collect());
        for n in 1..=steps {
            let mut next = Vec::with_capacity(self.agents.len());
            for (i, &agent) in self.agents.iter().enumerate() {
                let mut mixed = AgentState::default();
                let mut total = 0.0;
                for (j0, &w) in weights[i].iter().enumerate() {
                    let j = j0 + 1;
                    if w == 0.0 || j > times.len() {
                        continue;
                    }
                    let base = times.len() - j;
                    let mut s = times[base].0[i];
                    for (_, ctx) in &times[base..] {
                        s = predict_mean(self.model, agent, &s, ctx, self.dt)?;
                    }
                    mixed.scaled_add(&s, w);
                    total += w;
                }
                if total != 1.0 && total > 0.0 {
                    mixed = AgentState::new(mixed.position / total, mixed.velocity / total, mixed.desired_velocity / total);
                }
                next.push(mixed);
            }
            let moved: Vec<(AgentId, AgentState)> = extras
                .iter()
                .map(|(id, s)| {
                    let mut s = *s;
                    s.position += s.velocity * (n as f64 * self.dt);
                    (*id, s)
                })
                .collect();
            let ctx = self.context(&next, &moved)?;
            rows.push(next.iter().map(|s| s.position).collect());
            times.push((next, ctx));
            if times.len() > order {
                times.remove(0);
            }
        }
        Ok(rows)
    }
}

fn observed(trace: &ObservationTrace, f: usize, id: AgentId) -> Option<Vec2> {
    trace.frames.get(f)?.observation(id).flatten()
}

/// Observed position at `f` with the backward-difference velocity, zero
/// if the previous frame has no observation.
fn trailing_state(trace: &ObservationTrace, dt: f64, f: usize, id: AgentId) -> Option<AgentState> {
    let p = observed(trace, f, id)?;
    let v = match f.checked_sub(1).and_then(|g| observed(trace, g, id)) {
        Some(q) => (p - q) / dt,
        None => Vec2::ZERO,
    };
    Some(AgentState::from_observed(p, v))
}

/// Ground-truth state of `id` at frame `f`: position and forward-difference velocity.
fn ground_truth_state(s: &Scenario, velocities: &BTreeMap<AgentId, VelocityTrack>, f: usize, id: AgentId) -> Option<AgentState> {
    let p = s.position(f, id)?;
    let v = velocities.get(&id)?.at(f)?;
    Some(AgentState::from_observed(p, v))
}

/// Errors of one agent in one prediction trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrial {
    pub start: usize,
    pub agent: AgentId,
    /// One entry per configured horizon; `None` where the truth ran out.
    pub errors: Vec<Option<f64>>,
    /// Longest horizon with ground truth available.
    pub attained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCell {
    pub horizon: usize,
    pub mean_error: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub dataset: String,
    pub model: MotionModel,
    pub filter: FilterKind,
    pub horizons: Vec<usize>,
    /// Only horizons with at least one trial.
    pub cells: Vec<PredictionCell>,
    pub trials: Vec<PredictionTrial>,
}

impl PredictionReport {
    /// Averages `trials`, which may come from several scenarios.
    pub fn from_trials(
        dataset: String,
        model: MotionModel,
        filter: FilterKind,
        horizons: Vec<usize>,
        trials: Vec<PredictionTrial>,
    ) -> Self {
        let cells = horizons
            .iter()
            .enumerate()
            .filter_map(|(h, &horizon)| {
                let errs: Vec<f64> = trials.iter().filter_map(|t| t.errors.get(h).copied().flatten()).collect();
                if errs.is_empty() {
                    return None;
                }
                Some(PredictionCell {
                    horizon,
                    mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
                    trials: errs.len(),
                })
            })
            .collect();
        PredictionReport {
            dataset,
            model,
            filter,
            horizons,
            cells,
            trials,
        }
    }

    pub fn cell(&self, horizon: usize) -> Option<&PredictionCell> {
        self.cells.iter().find(|c| c.horizon == horizon)
    }

    /// Average over the reported horizons.
    pub fn overall(&self) -> Option<f64> {
        if self.cells.is_empty() {
            return None;
        }
        Some(self.cells.iter().map(|c| c.mean_error).sum::<f64>() / self.cells.len() as f64)
    }
}

/// Learning from `trace` for `learning_frames` frames, then open-loop
/// prediction up to the largest horizon, scored against `s`. Filters start
/// from the ground-truth state. Trials start every `start_stride` frames
/// for every agent present through the learning window.
pub fn run_prediction_protocol(
    s: &Scenario,
    trace: &ObservationTrace,
    model: MotionModel,
    filter: FilterKind,
    pc: &ProtocolConfig,
    seed: u64,
) -> Result<PredictionReport, BenchError> {
    if !model.is_implemented() {
        return Err(MotionError::NotImplemented(model).into());
    }
    check_aligned(s, trace)?;
    let velocities = derive_velocities(s);
    let ids = s.agent_ids();
    let learn = pc.learning_frames.max(1);
    let mut trials = Vec::new();
    let mut start = 0;
    while start + learn <= s.len() {
        let end = start + learn - 1;
        let tracked: Vec<AgentId> = ids
            .iter()
            .copied()
            .filter(|&id| s.present_throughout(id, start..end + 1))
            .collect();
        if !tracked.is_empty() {
            trials.extend(prediction_trial(s, trace, &velocities, &ids, &tracked, start, model, filter, pc, seed)?);
        }
        start += pc.start_stride.max(1);
    }
    if trials.is_empty() {
        return Err(BenchError::NoEligibleTrials);
    }

    Ok(PredictionReport::from_trials(String::from(s.name()), model, filter, pc.horizons.clone(), trials))
}

#[allow(clippy::too_many_arguments)]
fn prediction_trial(
    s: &Scenario,
    trace: &ObservationTrace,
    velocities: &BTreeMap<AgentId, VelocityTrack>,
    ids: &[AgentId],
    tracked: &[AgentId],
    start: usize,
    model: MotionModel,
    filter: FilterKind,
    pc: &ProtocolConfig,
    seed: u64,
) -> Result<Vec<PredictionTrial>, BenchError> {
    let extras_at = |f: usize| -> Vec<(AgentId, AgentState)> {
        ids.iter()
            .filter(|id| !tracked.contains(id))
            .filter_map(|&id| trailing_state(trace, s.dt(), f, id).map(|st| (id, st)))
            .collect()
    };
    let initial: Vec<(AgentId, AgentState)> = tracked
        .iter()
        .map(|&id| (id, ground_truth_state(s, velocities, start, id).expect("present")))
        .collect();
    let mut crowd = CrowdFilter::new(model, filter, pc, s.dt(), &initial, &extras_at(start), seed, start)?;
    let end = start + pc.learning_frames.max(1) - 1;
    for f in start + 1..=end {
        let obs: Vec<Option<Vec2>> = tracked.iter().map(|&id| observed(trace, f, id)).collect();
        crowd.step(&obs, &pc.likelihood, &extras_at(f))?;
    }

    let steps = pc.max_horizon().min(s.len() - 1 - end);
    let rows = crowd.predict(steps, &extras_at(end))?;
    let mut out = Vec::with_capacity(tracked.len());
    for (i, &id) in tracked.iter().enumerate() {
        let pred: Vec<Vec2> = rows.iter().map(|r| r[i]).collect();
        let truth: Vec<Option<Vec2>> = (0..=steps).map(|n| s.position(end + n, id)).collect();
        let attained = truth.iter().skip(1).take_while(|p| p.is_some()).count();
        let errors = pc
            .horizons
            .iter()
            .map(|&l| {
                if l == 0 || l > attained {
                    return None;
                }
                let t: Vec<Vec2> = truth[..=l].iter().map(|p| p.expect("within attained")).collect();
                mean_error(&pred[..=l], &t, l).ok()
            })
            .collect();
        out.push(PredictionTrial {
            start,
            agent: id,
            errors,
            attained,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Success,
    Lost,
    IdSwitch,
}

impl OutcomeKind {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::Success => "success",
            OutcomeKind::Lost => "lost",
            OutcomeKind::IdSwitch => "id_switch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutcome {
    pub kind: OutcomeKind,
    pub horizon: usize,
    /// Distance to the agent's own ground truth, meters.
    pub distance: f64,
}

/// Lost beyond `threshold` of the own ground truth; otherwise an id switch
/// if another agent's ground truth is strictly nearer, else a success.
pub fn classify_track(
    estimate: Vec2,
    own_truth: Vec2,
    others: impl IntoIterator<Item = Vec2>,
    threshold: f64,
    horizon: usize,
) -> TrackOutcome {
    let distance = estimate.distance(own_truth);
    let kind = if distance > threshold {
        OutcomeKind::Lost
    } else if others.into_iter().any(|q| estimate.distance(q) < distance) {
        OutcomeKind::IdSwitch
    } else {
        OutcomeKind::Success
    };
    TrackOutcome { kind, horizon, distance }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub start: usize,
    pub agent: AgentId,
    pub outcome: TrackOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingCell {
    pub horizon: usize,
    pub tracks: usize,
    pub successes: usize,
    pub id_switches: usize,
    pub lost: usize,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingReport {
    pub dataset: String,
    pub model: MotionModel,
    pub filter: FilterKind,
    pub records: Vec<TrackRecord>,
    pub cells: Vec<TrackingCell>,
}

impl TrackingReport {
    /// Aggregates `records`, which may come from several scenarios.
    pub fn from_records(
        dataset: String,
        model: MotionModel,
        filter: FilterKind,
        horizons: &[usize],
        records: Vec<TrackRecord>,
    ) -> Self {
        let cells = horizons
            .iter()
            .map(|&horizon| {
                let at: Vec<&TrackRecord> = records.iter().filter(|r| r.outcome.horizon == horizon).collect();
                let count = |k: OutcomeKind| at.iter().filter(|r| r.outcome.kind == k).count();
                TrackingCell {
                    horizon,
                    tracks: at.len(),
                    successes: count(OutcomeKind::Success),
                    id_switches: count(OutcomeKind::IdSwitch),
                    lost: count(OutcomeKind::Lost),
                    mean_distance: if at.is_empty() {
                        0.0
                    } else {
                        at.iter().map(|r| r.outcome.distance).sum::<f64>() / at.len() as f64
                    },
                }
            })
            .collect();
        TrackingReport {
            dataset,
            model,
            filter,
            records,
            cells,
        }
    }

    /// Successful tracks over all horizons.
    pub fn successes(&self) -> usize {
        self.cells.iter().map(|c| c.successes).sum()
    }

    pub fn id_switches(&self) -> usize {
        self.cells.iter().map(|c| c.id_switches).sum()
    }

    pub fn tracks(&self) -> usize {
        self.cells.iter().map(|c| c.tracks).sum()
    }

    pub fn mean_distance(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        Some(self.records.iter().map(|r| r.outcome.distance).sum::<f64>() / self.records.len() as f64)
    }
}

fn check_aligned(s: &Scenario, trace: &ObservationTrace) -> Result<(), BenchError> {
    if trace.frames.len() != s.len() || trace.frames.iter().zip(s.frames()).any(|(t, f)| t.time_index != f.time_index) {
        return Err(BenchError::TraceMismatch);
    }
    Ok(())
}

/// Tracks every agent present at each start frame through the trace for up
/// to the largest tracking horizon, initialized from ground truth, and
/// classifies the posterior mean at every horizon.
pub fn run_tracking_protocol(
    s: &Scenario,
    trace: &ObservationTrace,
    model: MotionModel,
    filter: FilterKind,
    pc: &ProtocolConfig,
    seed: u64,
) -> Result<TrackingReport, BenchError> {
    if !model.is_implemented() {
        return Err(MotionError::NotImplemented(model).into());
    }
    check_aligned(s, trace)?;
    let velocities = derive_velocities(s);
    let max_n = pc.max_track_horizon();
    let mut records = Vec::new();
    let mut start = 0;
    while start + 1 < s.len() {
        let tracked: Vec<AgentId> = s.frames()[start].entries.iter().map(|e| e.0).collect();
        let initial: Vec<(AgentId, AgentState)> = tracked
            .iter()
            .map(|&id| (id, ground_truth_state(s, &velocities, start, id).expect("present")))
            .collect();
        let mut crowd = CrowdFilter::new(model, filter, pc, s.dt(), &initial, &[], seed, start)?;
        let last = (start + max_n).min(s.len() - 1);
        for f in start + 1..=last {
            let frame = &trace.frames[f];
            let obs: Vec<Option<Vec2>> = tracked.iter().map(|&id| frame.observation(id).flatten()).collect();
            crowd.step(&obs, &pc.likelihood, &[])?;
            let n = f - start;
            if !pc.track_horizons.contains(&n) {
                continue;
            }
            let means = crowd.means();
            for (i, &id) in tracked.iter().enumerate() {
                if !s.present_throughout(id, start..f + 1) {
                    continue;
                }
                let own = s.position(f, id).expect("present");
                let others = s.frames()[f].entries.iter().filter(|e| e.0 != id).map(|e| e.1);
                records.push(TrackRecord {
                    start,
                    agent: id,
                    outcome: classify_track(means[i].position, own, others, pc.success_threshold, n),
                });
            }
        }
        start += pc.start_stride.max(1);
    }

    Ok(TrackingReport::from_records(
        String::from(s.name()),
        model,
        filter,
        &pc.track_horizons,
        records,
    ))
}

/// One configuration of the parameter search.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub rvo: RvoParams,
    pub noise: NoiseSpec,
    pub hpf: HpfConfig,
    pub sigma_obs: f64,
}

/// Values per axis; the grid is their cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub rvo: Vec<RvoParams>,
    pub noise: Vec<NoiseSpec>,
    pub hpf: Vec<HpfConfig>,
    pub sigma_obs: Vec<f64>,
}

impl SweepGrid {
    /// All points, the last axis varying fastest.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::with_capacity(self.len());
        for rvo in &self.rvo {
            for noise in &self.noise {
                for hpf in &self.hpf {
                    for &sigma_obs in &self.sigma_obs {
                        out.push(SweepPoint {
                            rvo: *rvo,
                            noise: *noise,
                            hpf: hpf.clone(),
                            sigma_obs,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rvo.len() * self.noise.len() * self.hpf.len() * self.sigma_obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Mean prediction error at this horizon, lower is better.
    MeanError { horizon: usize },
    /// Successful tracks over all horizons, higher is better.
    SuccessfulTracks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase {
    pub scenario: Scenario,
    pub trace: ObservationTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub model: MotionModel,
    pub filter: FilterKind,
    pub objective: Objective,
    /// Protocol settings the grid values are substituted into.
    pub base: ProtocolConfig,
    /// Evaluate this many seeded-random grid points instead of all of them.
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index into `rows`; ties go to the earlier row.
    pub best: usize,
}

impl SweepResult {
    pub fn best(&self) -> &SweepRow {
        &self.rows[self.best]
    }
}

fn evaluate(cases: &[SweepCase], settings: &SweepSettings, pc: &ProtocolConfig, seed: u64) -> Result<f64, BenchError> {
    match settings.objective {
        Objective::MeanError { horizon } => {
            let mut total = 0.0;
            let mut n = 0usize;
            for case in cases {
                let r = run_prediction_protocol(&case.scenario, &case.trace, settings.model, settings.filter, pc, seed)?;
                if let Some(c) = r.cell(horizon) {
                    total += c.mean_error;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(BenchError::NoEligibleTrials);
            }
            Ok(total / n as f64)
        }
        Objective::SuccessfulTracks => {
            let mut st = 0usize;
            for case in cases {
                st += run_tracking_protocol(&case.scenario, &case.trace, settings.model, settings.filter, pc, seed)?.successes();
            }
            Ok(st as f64)
        }
    }
}

/// Scores grid points on the cases and picks the best. Every point is run
/// with the same seed. Deterministic given the seed.
pub fn sweep(grid: &SweepGrid, cases: &[SweepCase], settings: &SweepSettings, seed: u64) -> Result<SweepResult, BenchError> {
    let mut points = grid.points();
    if points.is_empty() {
        return Err(BenchError::NoEligibleTrials);
    }
    if let Some(k) = settings.samples {
        if k < points.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, points.len(), k.max(1)).into_vec();
            picked.sort_unstable();
            points = picked.into_iter().map(|i| points[i].clone()).collect();
        }
    }
    let mut rows = Vec::with_capacity(points.len());
    for point in points {
        let pc = ProtocolConfig {
            rvo: point.rvo,
            noise: point.noise,
            hpf: point.hpf.clone(),
            likelihood: SyntheticLikelihood { sigma_obs: point.sigma_obs },
            ..settings.base.clone()
        };
        let value = evaluate(cases, settings, &pc, seed)?;
        rows.push(SweepRow { point, value });
    }
    let better = |a: f64, b: f64| match settings.objective {
        Objective::MeanError { .. } => a < b,
        Objective::SuccessfulTracks => a > b,
    };
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if better(r.value, rows[best].value) {
            best = i;
        }
    }
    Ok(SweepResult { rows, best })
}
