//! Deterministic quasi-static peg-in-hole simulator.
//!
//! The tool center point (TCP) is a point carrying a peg. The workpiece is a
//! flat surface at `surface_z` with one cylindrical hole whose center is
//! re-sampled every episode (Gaussian noise plus optional drift). Contact is
//! modeled as a linear spring with `contact_stiffness`.

mod episode;
mod montecarlo;
mod skills;
mod world;

use serde::{Deserialize, Serialize};

use crate::dsl::SkillType;

pub use episode::{execute_program, read_steps_jsonl, write_steps_jsonl, EpisodeTrace};
pub use montecarlo::{
    episode_loss, monte_carlo_eval, penalized_duration, MonteCarloReport, NeumaierSum,
};
pub use skills::{execute_skill, execute_skill_with_values, SkillOutcome};
pub use world::{episode_rng, sample_world, DriftAxis, DriftKind, DriftSpec, RealizedWorld, WorldConfig, WorldError};

/// Integration step of spiral_search and insert, in seconds.
pub const DT: f64 = 1.0e-3;
/// Dwell after a guarded contact motion, in seconds.
pub const SETTLE_TIME: f64 = 0.1;
/// Gripper actuation time, in seconds.
pub const GRIPPER_TIME: f64 = 0.5;
/// Duration added to failed episodes by Monte-Carlo evaluation, in seconds.
pub const FAILURE_PENALTY: f64 = 5.0;
/// Travel over which the force ramps to `f_max` when an insertion jams, in m.
pub const JAM_TRAVEL: f64 = 0.002;
/// spiral_search requires the TCP within this distance of the surface, in m.
pub const CONTACT_TOLERANCE: f64 = 0.001;

/// Start state of every episode.
pub const INITIAL_STATE: TcpState = TcpState { x: 0.0, y: 0.0, z: 0.05, holding: true };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", from = "[f64; 4]")]
pub struct TcpState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub holding: bool,
}

impl From<TcpState> for [f64; 4] {
    fn from(s: TcpState) -> Self {
        [s.x, s.y, s.z, if s.holding { 1.0 } else { 0.0 }]
    }
}

impl From<[f64; 4]> for TcpState {
    fn from(a: [f64; 4]) -> Self {
        TcpState { x: a[0], y: a[1], z: a[2], holding: a[3] >= 0.5 }
    }
}

/// Why a skill failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// move_linear ran into the workpiece.
    ContactFault,
    /// move_contact traveled `max_d` without reaching the force threshold.
    NoContact,
    /// spiral_search started away from the surface.
    PreconditionFault,
    /// spiral_search reached its radius limit without finding the hole.
    SearchExhausted,
    /// insert jammed on the rim or hit the hole bottom.
    Jam,
    /// Non-positive speed, acceleration or direction.
    InvalidParameter,
}

/// Outcome of one skill execution; one training record for the surrogates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillStep {
    pub episode: u64,
    pub skill_index: usize,
    pub skill_label: String,
    pub skill_type: SkillType,
    pub s_in: TcpState,
    /// All parameter values in signature order.
    pub params: Vec<f64>,
    pub s_out: TcpState,
    pub duration: f64,
    pub success: bool,
    pub max_force: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}
