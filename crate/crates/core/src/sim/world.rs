use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    Linear,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftAxis {
    X,
    Y,
}

/// Systematic hole displacement over episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub axis: DriftAxis,
    /// m
    pub magnitude: f64,
    pub onset_episode: u64,
    /// Episodes until a linear drift reaches full magnitude.
    #[serde(default)]
    pub ramp_episodes: u64,
}

impl DriftSpec {
    /// Displacement along `axis` at `episode`.
    pub fn offset(&self, episode: u64) -> f64 {
        if episode < self.onset_episode {
            return 0.0;
        }
        match self.kind {
            DriftKind::Step => self.magnitude,
            DriftKind::Linear => {
                if self.ramp_episodes == 0 {
                    self.magnitude
                } else {
                    let t = (episode - self.onset_episode) as f64 / self.ramp_episodes as f64;
                    self.magnitude * t.min(1.0)
                }
            }
        }
    }
}

fn default_stiffness() -> f64 {
    1.0e4
}

/// Workcell geometry and process noise (`world.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Nominal hole center (x, y) in m.
    pub hole_nominal: [f64; 2],
    pub hole_width: f64,
    pub hole_depth: f64,
    pub peg_width: f64,
    #[serde(default)]
    pub surface_z: f64,
    /// Per-axis std of the per-episode hole offset, truncated at 3σ.
    pub noise_sigma: f64,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    /// N/m
    #[serde(default = "default_stiffness")]
    pub contact_stiffness: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("peg_width {peg} must be smaller than hole_width {hole}")]
    PegTooWide { peg: f64, hole: f64 },
    #[error("noise_sigma must be >= 0, got {0}")]
    NegativeNoise(f64),
    #[error("contact_stiffness must be > 0, got {0}")]
    Stiffness(f64),
    #[error("hole_depth must be > 0, got {0}")]
    Depth(f64),
    #[error("non-finite value in world config")]
    NonFinite,
}

impl WorldConfig {
    /// The reference workcell: 10 mm hole, 9 mm peg (0.5 mm clearance),
    /// 20 mm deep, centered at (0.4, 0.0).
    pub fn reference(noise_sigma: f64) -> Self {
        Self {
            hole_nominal: [0.4, 0.0],
            hole_width: 0.010,
            hole_depth: 0.020,
            peg_width: 0.009,
            surface_z: 0.0,
            noise_sigma,
            drift: None,
            contact_stiffness: default_stiffness(),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let vals = [
            self.hole_nominal[0],
            self.hole_nominal[1],
            self.hole_width,
            self.hole_depth,
            self.peg_width,
            self.surface_z,
            self.noise_sigma,
            self.contact_stiffness,
        ];
        if vals.iter().any(|v| !v.is_finite())
            || self.drift.as_ref().is_some_and(|d| !d.magnitude.is_finite())
        {
            return Err(WorldError::NonFinite);
        }
        if self.peg_width >= self.hole_width {
            return Err(WorldError::PegTooWide { peg: self.peg_width, hole: self.hole_width });
        }
        if self.noise_sigma < 0.0 {
            return Err(WorldError::NegativeNoise(self.noise_sigma));
        }
        if self.contact_stiffness <= 0.0 {
            return Err(WorldError::Stiffness(self.contact_stiffness));
        }
        if self.hole_depth <= 0.0 {
            return Err(WorldError::Depth(self.hole_depth));
        }
        Ok(())
    }

    /// Radial play of the peg in the hole.
    pub fn clearance(&self) -> f64 {
        (self.hole_width - self.peg_width) / 2.0
    }

    pub fn drift_offset(&self, episode: u64) -> [f64; 2] {
        match &self.drift {
            None => [0.0, 0.0],
            Some(d) => {
                let o = d.offset(episode);
                match d.axis {
                    DriftAxis::X => [o, 0.0],
                    DriftAxis::Y => [0.0, o],
                }
            }
        }
    }

    pub fn realize(&self, hole: [f64; 2]) -> RealizedWorld {
        RealizedWorld {
            hole,
            clearance: self.clearance(),
            surface_z: self.surface_z,
            hole_depth: self.hole_depth,
            contact_stiffness: self.contact_stiffness,
        }
    }
}

/// The workcell of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedWorld {
    pub hole: [f64; 2],
    pub clearance: f64,
    pub surface_z: f64,
    pub hole_depth: f64,
    pub contact_stiffness: f64,
}

impl RealizedWorld {
    pub fn bottom_z(&self) -> f64 {
        self.surface_z - self.hole_depth
    }

    pub fn planar_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.hole[0]).hypot(y - self.hole[1])
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for `(seed, episode, stream)`.
pub fn episode_rng(seed: u64, episode: u64, stream: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(seed ^ splitmix64(episode)) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93));
    ChaCha8Rng::seed_from_u64(key)
}

pub(crate) const WORLD_STREAM: u64 = 0;

fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 3.0 {
            return z * sigma;
        }
    }
}

/// Realized hole center: nominal + drift + per-axis Gaussian noise truncated
/// at ±3σ. Deterministic in `(seed, episode)`.
pub fn sample_world(cfg: &WorldConfig, seed: u64, episode: u64) -> [f64; 2] {
    let mut rng = episode_rng(seed, episode, WORLD_STREAM);
    let drift = cfg.drift_offset(episode);
    let nx = truncated_normal(&mut rng, cfg.noise_sigma);
    let ny = truncated_normal(&mut rng, cfg.noise_sigma);
    [cfg.hole_nominal[0] + drift[0] + nx, cfg.hole_nominal[1] + drift[1] + ny]
}
