//! Crowd motion prediction and tracking with reciprocal velocity obstacles.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`rvo`]: velocity obstacles, reciprocal permitted half-planes and the
//!   constrained velocity solve used to step a crowd forward.
//! - [`motion`]: one-step motion models (constant velocity and RVO, with or
//!   without online desired-velocity adaptation) and their transition densities.
//! - [`filter`]: the first-order particle filter and the higher-order particle
//!   filter that mixes j-step-ahead predictions from the last K posteriors.
//! - [`scenario`]: canonical trajectory sets, synthetic scenario generation
//!   and observation corruption.
//! - [`bench`]: the prediction and tracking evaluation protocols and their
//!   metrics.
//!
//! File formats, configuration and the command line live in the companion
//! `crowdfilter` crate.
#![no_std]

extern crate alloc;

pub mod bench;
pub mod filter;
pub mod motion;
pub mod rvo;
pub mod scenario;
mod vec2;

pub use vec2::Vec2;

/// Identifier of one pedestrian across frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u64);

impl core::fmt::Display for AgentId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}
