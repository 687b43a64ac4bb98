use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dsl::SkillProgram;

use super::{execute_skill, sample_world, RealizedWorld, SkillStep, WorldConfig, INITIAL_STATE};

/// One simulated execution of a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode_index: u64,
    pub seed: u64,
    /// Realized hole center (m, m).
    pub world_sample: [f64; 2],
    pub steps: Vec<SkillStep>,
    pub total_duration: f64,
    pub success: bool,
}

/// Runs `p` from [`INITIAL_STATE`] in the world sampled for
/// `(seed, episode)`. A failed skill ends the episode.
pub fn execute_program(p: &SkillProgram, cfg: &WorldConfig, seed: u64, episode: u64) -> EpisodeTrace {
    let hole = sample_world(cfg, seed, episode);
    execute_in_world(p, &cfg.realize(hole), seed, episode)
}

pub(crate) fn execute_in_world(p: &SkillProgram, world: &RealizedWorld, seed: u64, episode: u64) -> EpisodeTrace {
    let mut state = INITIAL_STATE;
    let mut steps = Vec::with_capacity(p.len());
    let mut total_duration = 0.0;
    let mut success = true;
    for (i, node) in p.skills().iter().enumerate() {
        let mut step = execute_skill(node, state, world);
        step.episode = episode;
        step.skill_index = i;
        step.seed = seed;
        total_duration += step.duration;
        state = step.s_out;
        let ok = step.success;
        steps.push(step);
        if !ok {
            success = false;
            break;
        }
    }
    EpisodeTrace {
        episode_index: episode,
        seed,
        world_sample: world.hole,
        steps,
        total_duration,
        success,
    }
}

/// Writes one JSON object per step.
pub fn write_steps_jsonl<'a, W: Write>(
    mut w: W,
    steps: impl IntoIterator<Item = &'a SkillStep>,
) -> std::io::Result<()> {
    for s in steps {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_steps_jsonl<R: BufRead>(r: R) -> std::io::Result<Vec<SkillStep>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let step = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(step);
    }
    Ok(out)
}
