//! Reciprocal velocity obstacles.
//!
//! Each agent is a disc. For a pair `A`, `B` the truncated velocity obstacle
//! `VO(A|B)` is the set of relative velocities `v` for which some
//! `t in [0, tau]` puts `t * v` inside the disc `D(p_B - p_A, r_A + r_B)`.
//! Its boundary is made of two tangent legs and the arc of the truncation
//! disc `D((p_B - p_A) / tau, (r_A + r_B) / tau)` facing the origin.
//!
//! Both agents take half of the smallest relative-velocity change `u` that
//! leaves the obstacle, which yields one permitted half-plane per neighbor.
//! The new velocity is the point of the intersection of those half-planes
//! and the speed disc closest to the desired velocity, see [`solve_velocity`].

mod lp;

pub use lp::{solve_velocity, VelocitySolution};

use crate::Vec2;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RvoError {
    /// The two discs already intersect, so no velocity obstacle exists.
    #[error("agents overlap: discs already intersect")]
    OverlappingAgents,
}

/// A disc-shaped agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentBody {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Disc radius in meters, > 0.
    pub radius: f64,
    /// Speed limit in m/s, > 0.
    pub max_speed: f64,
}

impl AgentBody {
    pub fn new(position: Vec2, velocity: Vec2, radius: f64, max_speed: f64) -> Self {
        debug_assert!(radius > 0.0 && max_speed > 0.0);
        AgentBody {
            position,
            velocity,
            radius,
            max_speed,
        }
    }
}

/// A linear constraint in velocity space. `v` is permitted iff
/// `(v - point) . normal >= 0`; `normal` has unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    /// Signed distance of `v` from the boundary line, positive on the permitted side.
    #[inline]
    pub fn signed_distance(&self, v: Vec2) -> f64 {
        (v - self.point).dot(self.normal)
    }

    #[inline]
    pub fn contains(&self, v: Vec2) -> bool {
        self.signed_distance(v) >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvoParams {
    /// Planning horizon `tau` in seconds.
    pub time_horizon: f64,
    /// Simulation step in seconds. Also the separation horizon used for
    /// agents that already overlap.
    pub dt: f64,
    /// Only agents closer than this (meters) contribute a constraint.
    pub neighbor_radius: f64,
}

impl Default for RvoParams {
    fn default() -> Self {
        RvoParams {
            time_horizon: 2.0,
            dt: 0.4,
            neighbor_radius: 10.0,
        }
    }
}

impl RvoParams {
    pub fn is_valid(&self) -> bool {
        self.time_horizon > 0.0 && self.dt > 0.0 && self.neighbor_radius > 0.0
    }
}

/// The boundary pieces of a truncated velocity obstacle, in the fixed
/// tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPiece {
    LeftLeg,
    RightLeg,
    Arc,
}

/// Closest boundary point of `VO(A|B)` to the current relative velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoProjection {
    /// From the relative velocity `v_A - v_B` to the closest boundary point.
    pub u: Vec2,
    /// Outward unit normal of the obstacle at that point.
    pub normal: Vec2,
    pub piece: BoundaryPiece,
}

fn check_separated(a: &AgentBody, b: &AgentBody) -> Result<(Vec2, f64), RvoError> {
    let rel_position = b.position - a.position;
    let combined_radius = a.radius + b.radius;
    if rel_position.length_squared() < combined_radius * combined_radius {
        return Err(RvoError::OverlappingAgents);
    }
    Ok((rel_position, combined_radius))
}

/// Whether the relative velocity `rel_velocity` of `a` with respect to `b`
/// leads to a collision within `tau` seconds.
pub fn vo_contains(
    a: &AgentBody,
    b: &AgentBody,
    tau: f64,
    rel_velocity: Vec2,
) -> Result<bool, RvoError> {
    let (rel_position, combined_radius) = check_separated(a, b)?;
    let speed_sq = rel_velocity.length_squared();
    let t = if speed_sq > 0.0 {
        (rel_velocity.dot(rel_position) / speed_sq).clamp(0.0, tau)
    } else {
        0.0
    };
    let closest = rel_velocity * t - rel_position;
    Ok(closest.length_squared() < combined_radius * combined_radius)
}

/// Smallest change `u` of the relative velocity `v_A - v_B` that moves it
/// onto the boundary of `VO(A|B)`, together with the obstacle's outward
/// normal there.
pub fn compute_u(a: &AgentBody, b: &AgentBody, tau: f64) -> Result<VoProjection, RvoError> {
    let (rel_position, combined_radius) = check_separated(a, b)?;
    let rel_velocity = a.velocity - b.velocity;

    let dist_sq = rel_position.length_squared();
    let dist = libm::sqrt(dist_sq);
    let axis = rel_position / dist;
    let sin_half = combined_radius / dist;
    let leg = libm::sqrt((dist_sq - combined_radius * combined_radius).max(0.0));
    let cos_half = leg / dist;

    let left_dir = Vec2::new(
        axis.x * cos_half - axis.y * sin_half,
        axis.x * sin_half + axis.y * cos_half,
    );
    let right_dir = Vec2::new(
        axis.x * cos_half + axis.y * sin_half,
        -axis.x * sin_half + axis.y * cos_half,
    );
    let tangent_dist = leg / tau;

    let project_leg = |dir: Vec2| {
        let start = dir * tangent_dist;
        let s = (rel_velocity - start).dot(dir).max(0.0);
        start + dir * s
    };

    let mut best = VoProjection {
        u: project_leg(left_dir) - rel_velocity,
        normal: left_dir.perp(),
        piece: BoundaryPiece::LeftLeg,
    };
    let mut best_sq = best.u.length_squared();

    let right_u = project_leg(right_dir) - rel_velocity;
    if right_u.length_squared() < best_sq {
        best_sq = right_u.length_squared();
        best = VoProjection {
            u: right_u,
            normal: -right_dir.perp(),
            piece: BoundaryPiece::RightLeg,
        };
    }

    let center = rel_position / tau;
    let cutoff_radius = combined_radius / tau;
    let radial = (rel_velocity - center).try_normalize().unwrap_or(-axis);
    // The arc runs between the two tangent points on the side facing the origin.
    if radial.dot(axis) <= -sin_half {
        let arc_u = center + radial * cutoff_radius - rel_velocity;
        if arc_u.length_squared() < best_sq {
            best = VoProjection {
                u: arc_u,
                normal: radial,
                piece: BoundaryPiece::Arc,
            };
        }
    }

    Ok(best)
}

/// The velocities `A` may take so that, if `B` does its half, the pair stays
/// outside `VO(A|B)`: boundary through `v_A + u / 2`, normal `n`.
pub fn permitted_halfplane(a: &AgentBody, b: &AgentBody, tau: f64) -> Result<HalfPlane, RvoError> {
    let proj = compute_u(a, b, tau)?;
    Ok(HalfPlane {
        point: a.velocity + proj.u * 0.5,
        normal: proj.normal,
    })
}

/// Constraint for a pair whose discs already intersect: the relative
/// velocity must leave `D((p_B - p_A) / dt, (r_A + r_B) / dt)`, which
/// separates the discs within one step.
///
/// `tie_sign` picks the push direction when the agents coincide exactly in
/// position and velocity; the two agents of a pair should pass opposite signs.
pub fn overlap_halfplane(a: &AgentBody, b: &AgentBody, dt: f64, tie_sign: f64) -> HalfPlane {
    let rel_position = b.position - a.position;
    let combined_radius = a.radius + b.radius;
    let w = (a.velocity - b.velocity) - rel_position / dt;
    let (normal, w_len) = match w.try_normalize() {
        Some(n) => (n, w.length()),
        None => match rel_position.try_normalize() {
            Some(axis) => (-axis, 0.0),
            None => (Vec2::new(tie_sign, 0.0), 0.0),
        },
    };
    let u = normal * (combined_radius / dt - w_len);
    HalfPlane {
        point: a.velocity + u * 0.5,
        normal,
    }
}

/// The half-plane for the pair, falling back to [`overlap_halfplane`] when
/// the discs intersect.
pub fn pair_halfplane(a: &AgentBody, b: &AgentBody, params: &RvoParams, tie_sign: f64) -> HalfPlane {
    match permitted_halfplane(a, b, params.time_horizon) {
        Ok(h) => h,
        Err(RvoError::OverlappingAgents) => overlap_halfplane(a, b, params.dt, tie_sign),
    }
}

/// One RVO velocity update for `agents[self_idx]`: one half-plane per
/// neighbor within `neighbor_radius`, in ascending index order, then the
/// constrained closest-velocity solve.
pub fn rvo_step(
    self_idx: usize,
    agents: &[AgentBody],
    v_desire: Vec2,
    params: &RvoParams,
) -> VelocitySolution {
    rvo_step_as(self_idx, &agents[self_idx], agents, v_desire, params)
}

/// [`rvo_step`] with `me` standing in for `agents[self_idx]`, so a
/// hypothesis can be evaluated against a shared crowd snapshot.
pub fn rvo_step_as(
    self_idx: usize,
    me: &AgentBody,
    agents: &[AgentBody],
    v_desire: Vec2,
    params: &RvoParams,
) -> VelocitySolution {
    let radius_sq = params.neighbor_radius * params.neighbor_radius;
    let mut halfplanes = alloc::vec::Vec::new();
    for (idx, other) in agents.iter().enumerate() {
        if idx == self_idx {
            continue;
        }
        if (other.position - me.position).length_squared() > radius_sq {
            continue;
        }
        let tie_sign = if self_idx < idx { -1.0 } else { 1.0 };
        halfplanes.push(pair_halfplane(me, other, params, tie_sign));
    }
    solve_velocity(&halfplanes, me.max_speed, v_desire)
}

/// Moves the agent with its new velocity for `dt` seconds.
pub fn advance(state: &AgentBody, new_velocity: Vec2, dt: f64) -> AgentBody {
    AgentBody {
        position: state.position + new_velocity * dt,
        velocity: new_velocity,
        ..*state
    }
}

/// Steps every agent simultaneously: all new velocities are computed from the
/// same snapshot, then all positions advance.
pub fn step_crowd(agents: &mut [AgentBody], desired: &[Vec2], params: &RvoParams) {
    let velocities: alloc::vec::Vec<Vec2> = (0..agents.len())
        .map(|i| rvo_step(i, agents, desired[i], params).velocity())
        .collect();
    for (agent, v) in agents.iter_mut().zip(velocities) {
        *agent = advance(agent, v, params.dt);
    }
}
