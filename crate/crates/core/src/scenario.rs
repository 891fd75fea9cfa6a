//! Trajectory sets on the ground plane.
//!
//! A [`Scenario`] is a list of frames at a fixed interval `dt`, each holding
//! the positions of the agents present. Agents may enter and leave, so
//! frames are sparse. Positions are meters and times seconds throughout.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rvo::{step_crowd, AgentBody, RvoParams};
use crate::{AgentId, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("frame interval must be positive, got {0}")]
    NonPositiveDt(f64),
    /// `index` is the position in the frame list.
    #[error("frame {index} does not increase the time index")]
    NonMonotoneFrames { index: usize },
    #[error("agent {id} appears twice in frame {time_index}")]
    DuplicateAgent { time_index: u64, id: AgentId },
    #[error("non-finite position for agent {id} in frame {time_index}")]
    NonFinite { time_index: u64, id: AgentId },
    #[error("occlusion of agent {id} starting at frame {start} runs past the scenario")]
    OcclusionOutOfRange { id: AgentId, start: usize },
}

/// Axis-aligned box containing every position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn empty() -> Self {
        Bounds {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn include(&mut self, p: Vec2) {
        self.min = Vec2::new(self.min.x.min(p.x), self.min.y.min(p.y));
        self.max = Vec2::new(self.max.x.max(p.x), self.max.y.max(p.y));
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time_index: u64,
    pub entries: Vec<(AgentId, Vec2)>,
}

impl Frame {
    pub fn position(&self, id: AgentId) -> Option<Vec2> {
        self.entries.iter().find(|(a, _)| *a == id).map(|(_, p)| *p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    name: String,
    dt: f64,
    frames: Vec<Frame>,
    bounds: Bounds,
}

impl Scenario {
    /// Validates the frames and computes the bounds.
    pub fn new(name: impl Into<String>, dt: f64, frames: Vec<Frame>) -> Result<Self, ScenarioError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ScenarioError::NonPositiveDt(dt));
        }
        let mut bounds = Bounds::empty();
        for (index, frame) in frames.iter().enumerate() {
            if index > 0 && frame.time_index <= frames[index - 1].time_index {
                return Err(ScenarioError::NonMonotoneFrames { index });
            }
            let mut seen = BTreeSet::new();
            for &(id, p) in &frame.entries {
                if !seen.insert(id) {
                    return Err(ScenarioError::DuplicateAgent {
                        time_index: frame.time_index,
                        id,
                    });
                }
                if !p.is_finite() {
                    return Err(ScenarioError::NonFinite {
                        time_index: frame.time_index,
                        id,
                    });
                }
                bounds.include(p);
            }
        }
        Ok(Scenario {
            name: name.into(),
            dt,
            frames,
            bounds,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Every agent id, ascending.
    pub fn agent_ids(&self) -> Vec<AgentId> {
        let ids: BTreeSet<AgentId> = self.frames.iter().flat_map(|f| f.entries.iter().map(|e| e.0)).collect();
        ids.into_iter().collect()
    }

    /// Position of `id` at frame `index` of the list, if present.
    pub fn position(&self, index: usize, id: AgentId) -> Option<Vec2> {
        self.frames.get(index).and_then(|f| f.position(id))
    }

    /// `(frame index, position)` of every appearance of `id`.
    pub fn track(&self, id: AgentId) -> Vec<(usize, Vec2)> {
        self.frames
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.position(id).map(|p| (i, p)))
            .collect()
    }

    /// True when `id` is present in every frame of `range`.
    pub fn present_throughout(&self, id: AgentId, range: core::ops::Range<usize>) -> bool {
        range.end <= self.frames.len() && range.clone().all(|i| self.frames[i].position(id).is_some())
    }
}

/// Velocity of one agent at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    /// Position in the scenario's frame list.
    pub frame: usize,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrack {
    pub id: AgentId,
    pub samples: Vec<VelocitySample>,
    /// Set when the agent appears in one frame only; its velocity is zero.
    pub single_frame: bool,
}

impl VelocityTrack {
    pub fn at(&self, frame: usize) -> Option<Vec2> {
        self.samples
            .binary_search_by_key(&frame, |s| s.frame)
            .ok()
            .map(|i| self.samples[i].velocity)
    }
}

/// Forward differences `(p_next - p) / (gap * dt)` between successive
/// appearances; an agent's last appearance repeats the previous velocity.
pub fn derive_velocities(s: &Scenario) -> BTreeMap<AgentId, VelocityTrack> {
    let mut out = BTreeMap::new();
    for id in s.agent_ids() {
        let track = s.track(id);
        let single_frame = track.len() < 2;
        let mut samples = Vec::with_capacity(track.len());
        for w in track.windows(2) {
            let ((i, p), (j, q)) = (w[0], w[1]);
            samples.push(VelocitySample {
                frame: i,
                velocity: (q - p) / ((j - i) as f64 * s.dt),
            });
        }
        let (last, _) = *track.last().expect("agent has at least one entry");
        let velocity = samples.last().map_or(Vec2::ZERO, |v| v.velocity);
        samples.push(VelocitySample { frame: last, velocity });
        out.insert(
            id,
            VelocityTrack {
                id,
                samples,
                single_frame,
            },
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    HeadOn,
    Crossing,
    Circle,
    Corridor,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::HeadOn => "head_on",
            ScenarioKind::Crossing => "crossing",
            ScenarioKind::Circle => "circle",
            ScenarioKind::Corridor => "corridor",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unknown scenario kind")]
pub struct UnknownKind;

impl core::str::FromStr for ScenarioKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "head_on" => Ok(ScenarioKind::HeadOn),
            "crossing" => Ok(ScenarioKind::Crossing),
            "circle" => Ok(ScenarioKind::Circle),
            "corridor" => Ok(ScenarioKind::Corridor),
            _ => Err(UnknownKind),
        }
    }
}

/// Ground truth of one simulated agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAgent {
    pub id: AgentId,
    pub radius: f64,
    pub max_speed: f64,
    pub goal: Vec2,
    /// Desired velocity at every frame.
    pub desired: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub scenario: Scenario,
    pub agents: Vec<SyntheticAgent>,
    /// Simulator settings the trajectories were produced with.
    pub params: RvoParams,
}

/// Substeps simulated per recorded frame.
pub const SUBSTEPS: usize = 4;
/// Recorded frame interval of synthetic scenarios, seconds.
pub const SYNTHETIC_DT: f64 = 0.4;
pub const SYNTHETIC_RADIUS: f64 = 0.3;
pub const SYNTHETIC_MAX_SPEED: f64 = 2.0;
/// Walk-through agents leave once this close to their goal.
pub const EXIT_DISTANCE: f64 = 0.2;

/// Input of [`simulate`]: one entry per agent in each of the first four fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub ids: Vec<AgentId>,
    pub starts: Vec<Vec2>,
    pub goals: Vec<Vec2>,
    /// Preferred walking speeds, m/s.
    pub speeds: Vec<f64>,
    /// Frames to record, at most.
    pub frames: usize,
    /// Amplitude of per-substep perturbation of the preferred velocity.
    pub perturbation: f64,
    /// Agents leave the scene on reaching their goal.
    pub exits: bool,
}

fn uniform(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..half)
    } else {
        0.0
    }
}

fn setup(kind: ScenarioKind, n: usize, rng: &mut ChaCha8Rng) -> SimulationPlan {
    let mut starts = Vec::with_capacity(n);
    let mut goals = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    let mut perturbation = 0.0;
    let mut exits = false;
    let span;
    match kind {
        ScenarioKind::HeadOn => {
            // Pairs facing each other on parallel lanes 2 m apart, offset
            // sideways by a few cm so the pair is not perfectly collinear.
            let speed = rng.random_range(1.0..1.4);
            let offset = rng.random_range(0.05..0.15);
            span = 10.0;
            for i in 0..n {
                let lane = (i / 2) as f64 * 2.0;
                let side = if i % 2 == 0 { -1.0 } else { 1.0 };
                starts.push(Vec2::new(side * 5.0, lane - side * offset));
                goals.push(Vec2::new(-side * 5.0, lane - side * offset));
                speeds.push(speed);
            }
        }
        ScenarioKind::Crossing => {
            // Even ids walk +x, odd ids walk +y, converging near the origin
            // and leaving well past it.
            exits = true;
            let mut far = 0.0f64;
            for i in 0..n {
                let rank = (i / 2) as f64;
                let along = -12.0 - 1.5 * rank + uniform(rng, 0.5);
                let across = uniform(rng, 0.6);
                far = far.max(16.0 - along);
                if i % 2 == 0 {
                    starts.push(Vec2::new(along, across));
                    goals.push(Vec2::new(16.0, across));
                } else {
                    starts.push(Vec2::new(across, along));
                    goals.push(Vec2::new(across, 16.0));
                }
                speeds.push(rng.random_range(1.0..1.4));
            }
            span = far;
        }
        ScenarioKind::Circle => {
            let radius = (n as f64 * 0.8 / core::f64::consts::PI).max(4.0);
            span = 2.0 * radius;
            perturbation = 0.05;
            for i in 0..n {
                let angle = core::f64::consts::TAU * i as f64 / n as f64;
                let p = Vec2::new(radius, 0.0).rotate(angle) + Vec2::new(uniform(rng, 0.05), uniform(rng, 0.05));
                starts.push(p);
                goals.push(-p);
                speeds.push(1.0);
            }
        }
        ScenarioKind::Corridor => {
            // Two opposing streams in a 3 m wide corridor.
            exits = true;
            let mut far = 0.0f64;
            for i in 0..n {
                let side = if i % 2 == 0 { -1.0 } else { 1.0 };
                let rank = (i / 2) as f64;
                let x = side * (10.0 + 1.2 * rank + uniform(rng, 0.3));
                let y = uniform(rng, 1.2);
                far = far.max(x.abs() + 12.0);
                starts.push(Vec2::new(x, y));
                goals.push(Vec2::new(-side * 12.0, y));
                speeds.push(rng.random_range(1.0..1.4));
            }
            span = far;
        }
    }
    let slowest = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let duration = span / slowest + 8.0 + 0.6 * n as f64;
    SimulationPlan {
        ids: (0..n as u64).map(AgentId).collect(),
        starts,
        goals,
        speeds,
        frames: libm::ceil(duration / SYNTHETIC_DT) as usize + 1,
        perturbation,
        exits,
    }
}

fn preferred(goal: Vec2, from: Vec2, speed: f64, dt: f64) -> Vec2 {
    let d = goal - from;
    let dist = d.length();
    if dist > speed * dt {
        d * (speed / dist)
    } else {
        d / dt
    }
}

/// Simulates `n_agents` RVO agents walking to assigned goals and records
/// every [`SUBSTEPS`]-th simulator step. Deterministic for a given seed.
pub fn make_scenario(kind: ScenarioKind, n_agents: usize, seed: u64) -> SyntheticScenario {
    assert!(n_agents >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = setup(kind, n_agents, &mut rng);
    run(alloc::format!("{kind}-{n_agents}-{seed}"), &plan, &mut rng)
}

/// Simulates the agents of `plan` from their starts toward their goals,
/// recording every [`SUBSTEPS`]-th simulator step.
pub fn simulate(name: impl Into<String>, plan: &SimulationPlan, seed: u64) -> SyntheticScenario {
    run(name.into(), plan, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn run(name: String, setup: &SimulationPlan, rng: &mut ChaCha8Rng) -> SyntheticScenario {
    let n_agents = setup.ids.len();
    assert!(n_agents >= 1 && setup.starts.len() == n_agents && setup.goals.len() == n_agents && setup.speeds.len() == n_agents);
    let sim_dt = SYNTHETIC_DT / SUBSTEPS as f64;
    let params = RvoParams {
        time_horizon: 2.0,
        dt: sim_dt,
        neighbor_radius: 10.0,
    };

    let mut bodies: Vec<AgentBody> = setup
        .starts
        .iter()
        .zip(&setup.goals)
        .zip(&setup.speeds)
        .map(|((&p, &g), &speed)| {
            AgentBody::new(p, preferred(g, p, speed, SYNTHETIC_DT), SYNTHETIC_RADIUS, SYNTHETIC_MAX_SPEED)
        })
        .collect();
    let mut agents: Vec<SyntheticAgent> = (0..n_agents)
        .map(|i| SyntheticAgent {
            id: setup.ids[i],
            radius: SYNTHETIC_RADIUS,
            max_speed: SYNTHETIC_MAX_SPEED,
            goal: setup.goals[i],
            desired: Vec::with_capacity(setup.frames),
        })
        .collect();

    let mut frames = Vec::with_capacity(setup.frames);
    let mut active: Vec<usize> = (0..n_agents).collect();
    for f in 0..setup.frames {
        if setup.exits {
            active.retain(|&i| bodies[i].position.distance(setup.goals[i]) > EXIT_DISTANCE);
            if active.is_empty() {
                break;
            }
        }
        frames.push(Frame {
            time_index: f as u64,
            entries: active.iter().map(|&i| (agents[i].id, bodies[i].position)).collect(),
        });
        for ((a, b), &speed) in agents.iter_mut().zip(&bodies).zip(&setup.speeds) {
            a.desired.push(preferred(a.goal, b.position, speed, SYNTHETIC_DT));
        }
        if f + 1 == setup.frames {
            break;
        }
        for _ in 0..SUBSTEPS {
            let desired: Vec<Vec2> = active
                .iter()
                .map(|&i| {
                    let jitter = Vec2::new(uniform(rng, setup.perturbation), uniform(rng, setup.perturbation));
                    preferred(setup.goals[i], bodies[i].position, setup.speeds[i], sim_dt) + jitter
                })
                .collect();
            let mut moving: Vec<AgentBody> = active.iter().map(|&i| bodies[i]).collect();
            step_crowd(&mut moving, &desired, &params);
            for (&i, b) in active.iter().zip(moving) {
                bodies[i] = b;
            }
        }
    }
    for a in &mut agents {
        a.desired.truncate(frames.len());
    }

    let scenario = Scenario::new(name, SYNTHETIC_DT, frames).expect("simulated frames are valid");
    SyntheticScenario {
        scenario,
        agents,
        params,
    }
}

/// Smallest `|p_i - p_j| - r_i - r_j` over all frames and pairs.
pub fn min_separation(s: &Scenario, radius: impl Fn(AgentId) -> f64) -> f64 {
    let mut gap = f64::INFINITY;
    for frame in s.frames() {
        for (i, &(a, p)) in frame.entries.iter().enumerate() {
            for &(b, q) in &frame.entries[i + 1..] {
                gap = gap.min(p.distance(q) - radius(a) - radius(b));
            }
        }
    }
    gap
}

/// How an observation trace was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Clean,
    Noisy,
    Occluded,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Clean => "clean",
            Provenance::Noisy => "noisy",
            Provenance::Occluded => "occluded",
        }
    }
}

/// Agent `id` is hidden in frames `start .. start + length` of the list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    pub id: AgentId,
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFrame {
    pub time_index: u64,
    /// `None` marks an occluded agent.
    pub entries: Vec<(AgentId, Option<Vec2>)>,
}

impl TraceFrame {
    /// `Some(None)` when the agent is in the frame but occluded.
    pub fn observation(&self, id: AgentId) -> Option<Option<Vec2>> {
        self.entries.iter().find(|(a, _)| *a == id).map(|(_, p)| *p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTrace {
    pub frames: Vec<TraceFrame>,
    pub provenance: Provenance,
}

impl ObservationTrace {
    /// Every agent visible, exactly at its position.
    pub fn clean(s: &Scenario) -> Self {
        corrupt(s, 0.0, &[], 0).expect("no occlusions to validate")
    }
}

/// Copies the scenario's entries as observations, adding isotropic Gaussian
/// noise to every visible position and dropping occluded ones.
pub fn corrupt(s: &Scenario, sigma: f64, occlusions: &[Occlusion], seed: u64) -> Result<ObservationTrace, ScenarioError> {
    for o in occlusions {
        if o.start + o.length > s.len() {
            return Err(ScenarioError::OcclusionOutOfRange { id: o.id, start: o.start });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = |id: AgentId, frame: usize| {
        occlusions
            .iter()
            .any(|o| o.id == id && frame >= o.start && frame < o.start + o.length)
    };
    let mut any_hidden = false;
    let frames = s
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| TraceFrame {
            time_index: f.time_index,
            entries: f
                .entries
                .iter()
                .map(|&(id, p)| {
                    if hidden(id, i) {
                        any_hidden = true;
                        return (id, None);
                    }
                    if sigma > 0.0 {
                        let nx: f64 = rng.sample(StandardNormal);
                        let ny: f64 = rng.sample(StandardNormal);
                        (id, Some(p + Vec2::new(nx, ny) * sigma))
                    } else {
                        (id, Some(p))
                    }
                })
                .collect(),
        })
        .collect();
    let provenance = if any_hidden {
        Provenance::Occluded
    } else if sigma > 0.0 {
        Provenance::Noisy
    } else {
        Provenance::Clean
    };
    Ok(ObservationTrace { frames, provenance })
}

/// Recurring `length`-frame windows per agent inside its own frame span,
/// the first within `every` frames of its appearance and the rest
/// `every..2 * every` frames apart. `every == 0` schedules nothing.
pub fn occlusion_schedule(s: &Scenario, length: usize, every: usize, seed: u64) -> Vec<Occlusion> {
    let mut out = Vec::new();
    if every == 0 || length == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in s.agent_ids() {
        let track = s.track(id);
        let (first, last) = (track[0].0, track[track.len() - 1].0);
        let mut start = first + rng.random_range(1..=every);
        while start + length <= last {
            out.push(Occlusion { id, start, length });
            start += length + every + rng.random_range(0..every);
        }
    }
    out
}
