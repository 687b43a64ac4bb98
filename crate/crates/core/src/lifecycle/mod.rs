//! Commissioning and operation loops on the simulator.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{DslError, SkillProgram, SkillType};
use crate::optim::{
    optimize, optimize_objective, LossSpec, LossSpecError, OptimConfig, OptimError, OptimizationReport, Restricted,
    SurrogateObjective,
};
use crate::sim::{episode_rng, execute_program, EpisodeTrace, SkillStep, WorldConfig, WorldError};
use crate::surrogate::{
    build_surrogate_program, finetune, train_skill_surrogate, FinetuneConfig, Library, SurrogateError, TrainConfig,
    TrainReport,
};

/// Random stream for exploratory parameter draws.
const PARAM_STREAM: u64 = 1;
/// Random stream for per-cycle fine-tuning seeds.
const FINETUNE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum LifecycleError {
    #[error("invalid lifecycle config: {0}")]
    Config(String),
    #[error("drift window needs {needed} episodes, log has {found}")]
    ShortWindow { needed: usize, found: usize },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Loss(#[from] LossSpecError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error("training {skill_type}: {source}")]
    Train { skill_type: SkillType, source: SurrogateError },
    #[error("fine-tuning {skill_type} after episode {episode}: {source}")]
    Finetune { skill_type: SkillType, episode: u64, source: SurrogateError },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

fn fifty() -> u64 {
    50
}
fn twenty() -> usize {
    20
}
fn five_hundred() -> u64 {
    500
}
fn yes() -> bool {
    true
}
fn tenth() -> f64 {
    0.10
}
fn two_hundred() -> usize {
    200
}
fn twentieth() -> f64 {
    0.05
}

/// Operation-loop settings (`lifecycle.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifecycleConfig {
    pub episodes_total: u64,
    #[serde(default = "fifty")]
    pub finetune_every: u64,
    #[serde(default = "twenty")]
    pub finetune_epochs: usize,
    /// FIFO capacity in episodes.
    #[serde(default = "five_hundred")]
    pub buffer_capacity: u64,
    #[serde(default = "yes")]
    pub finetune_enabled: bool,
    #[serde(default = "yes")]
    pub reoptimize_after_finetune: bool,
    /// Adam iterations of each re-optimization (single start at the incumbent).
    #[serde(default = "two_hundred")]
    pub reoptimize_iterations: usize,
    /// Per-cycle step limit of each parameter as a fraction of its range.
    #[serde(default = "twentieth")]
    pub reoptimize_trust_region: f64,
    #[serde(default = "fifty")]
    pub drift_alarm_window: u64,
    /// Success-rate drop that raises the alarm.
    #[serde(default = "tenth")]
    pub drift_alarm_threshold: f64,
}

impl LifecycleConfig {
    pub fn new(episodes_total: u64) -> Self {
        Self {
            episodes_total,
            finetune_every: fifty(),
            finetune_epochs: twenty(),
            buffer_capacity: five_hundred(),
            finetune_enabled: true,
            reoptimize_after_finetune: true,
            reoptimize_iterations: two_hundred(),
            reoptimize_trust_region: twentieth(),
            drift_alarm_window: fifty(),
            drift_alarm_threshold: tenth(),
        }
    }

    pub fn validate(&self) -> Result<(), LifecycleError> {
        let bad = |m: &str| Err(LifecycleError::Config(m.to_string()));
        if self.finetune_every < 1 {
            return bad("finetune_every must be >= 1");
        }
        if self.buffer_capacity < self.finetune_every {
            return bad("buffer_capacity must be >= finetune_every");
        }
        if self.drift_alarm_window < 1 {
            return bad("drift_alarm_window must be >= 1");
        }
        if !(self.reoptimize_trust_region > 0.0 && self.reoptimize_trust_region <= 1.0) {
            return bad("reoptimize_trust_region must be in (0, 1]");
        }
        if !(self.drift_alarm_threshold.is_finite() && self.drift_alarm_threshold >= 0.0) {
            return bad("drift_alarm_threshold must be finite and >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Finetune,
    Reoptimize,
    Alarm,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::Finetune => "finetune",
            Event::Reoptimize => "reoptimize",
            Event::Alarm => "alarm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleRecord {
    pub episode: u64,
    /// Realized hole center.
    pub hole: [f64; 2],
    pub success: bool,
    pub duration: f64,
    /// Free parameters the episode ran with.
    pub theta: Vec<f64>,
    /// Events raised after the episode; a new θ applies from the next one.
    pub events: Vec<Event>,
}

/// Append-only per-episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleLog {
    pub parameter_names: Vec<String>,
    records: Vec<LifecycleRecord>,
}

impl LifecycleLog {
    pub fn new(parameter_names: Vec<String>) -> Self {
        Self { parameter_names, records: Vec::new() }
    }

    pub fn push(&mut self, r: LifecycleRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[LifecycleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn successes(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.success).collect()
    }

    pub fn count(&self, e: Event) -> usize {
        self.records.iter().filter(|r| r.events.contains(&e)).count()
    }

    /// Success rate of episodes `[start, start + len)`.
    pub fn success_rate(&self, start: usize, len: usize) -> f64 {
        let w = &self.records[start..start + len];
        w.iter().filter(|r| r.success).count() as f64 / len as f64
    }

    /// `episode,hole_x,hole_y,success,duration,<θ names>,event`; several
    /// events are joined with `;`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["episode", "hole_x", "hole_y", "success", "duration"];
        header.extend(self.parameter_names.iter().map(String::as_str));
        header.push("event");
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.episode.to_string(),
                r.hole[0].to_string(),
                r.hole[1].to_string(),
                u8::from(r.success).to_string(),
                r.duration.to_string(),
            ];
            row.extend(r.theta.iter().map(f64::to_string));
            row.push(r.events.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(";"));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStatus {
    /// Success rate of the first `window` episodes.
    pub baseline: f64,
    /// Success rate of the last `window` episodes.
    pub current: f64,
    pub drop: f64,
    pub alarm: bool,
}

/// Compares the latest window of outcomes with the first one.
pub fn detect_drift(successes: &[bool], window: usize, threshold: f64) -> Result<DriftStatus, LifecycleError> {
    if window == 0 || successes.len() < window {
        return Err(LifecycleError::ShortWindow { needed: window.max(1), found: successes.len() });
    }
    let rate = |w: &[bool]| w.iter().filter(|s| **s).count() as f64 / w.len() as f64;
    let baseline = rate(&successes[..window]);
    let current = rate(&successes[successes.len() - window..]);
    let drop = baseline - current;
    Ok(DriftStatus { baseline, current, drop, alarm: drop >= threshold })
}

/// Uniform draw of every free parameter within its bounds.
pub fn explore_parameters(p: &SkillProgram, seed: u64, episode: u64) -> Vec<f64> {
    let mut rng = episode_rng(seed, episode, PARAM_STREAM);
    p.free_bounds().into_iter().map(|(lo, hi)| if lo < hi { rng.random_range(lo..=hi) } else { lo }).collect()
}

/// Runs episodes `0..n`, optionally each with exploratory parameters.
pub fn collect_episodes(
    p: &SkillProgram,
    world: &WorldConfig,
    n: u64,
    seed: u64,
    randomize: bool,
) -> Result<Vec<EpisodeTrace>, DslError> {
    (0..n)
        .into_par_iter()
        .map(|e| {
            if randomize {
                let q = p.set_free_parameters(&explore_parameters(p, seed, e))?;
                Ok(execute_program(&q, world, seed, e))
            } else {
                Ok(execute_program(p, world, seed, e))
            }
        })
        .collect()
}

/// Trains one surrogate per skill type present in `steps`.
pub fn train_library(steps: &[SkillStep], cfg: &TrainConfig) -> Result<(Library, Vec<TrainReport>), LifecycleError> {
    let mut by_type: BTreeMap<SkillType, Vec<&SkillStep>> = BTreeMap::new();
    for s in steps {
        by_type.entry(s.skill_type).or_default().push(s);
    }
    let trained: Vec<_> = by_type
        .into_par_iter()
        .map(|(t, records)| {
            train_skill_surrogate(&records, cfg).map_err(|source| LifecycleError::Train { skill_type: t, source })
        })
        .collect::<Result<_, _>>()?;
    let mut lib = Library::new();
    let mut reports = Vec::new();
    for (m, r) in trained {
        lib.insert(m.skill_type, m);
        reports.push(r);
    }
    Ok((lib, reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommissioningConfig {
    pub episodes: u64,
    pub seed: u64,
    pub train: TrainConfig,
    pub optim: OptimConfig,
    pub loss: LossSpec,
}

impl CommissioningConfig {
    pub fn new(episodes: u64, epochs: usize, seed: u64) -> Self {
        Self {
            episodes,
            seed,
            train: TrainConfig::new(epochs, seed),
            optim: OptimConfig::new(seed),
            loss: LossSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommissioningReport {
    pub episodes: u64,
    pub exploration_success_rate: f64,
    pub records: BTreeMap<SkillType, usize>,
    pub training: Vec<TrainReport>,
    pub optimization: OptimizationReport,
    pub structure_hash: String,
}

#[derive(Debug, Clone)]
pub struct Commissioning {
    pub models: Library,
    pub program: SkillProgram,
    pub steps: Vec<SkillStep>,
    pub report: CommissioningReport,
}

/// Explores, trains a surrogate per skill type and optimizes `p`.
pub fn run_commissioning(
    p: &SkillProgram,
    world: &WorldConfig,
    cfg: &CommissioningConfig,
) -> Result<Commissioning, LifecycleError> {
    world.validate()?;
    cfg.loss.validate()?;
    let traces = collect_episodes(p, world, cfg.episodes, cfg.seed, true)?;
    let successes = traces.iter().filter(|t| t.success).count();
    let steps: Vec<SkillStep> = traces.into_iter().flat_map(|t| t.steps).collect();
    let mut records = BTreeMap::new();
    for s in &steps {
        *records.entry(s.skill_type).or_insert(0) += 1;
    }
    let (models, training) = train_library(&steps, &cfg.train)?;
    let sp = build_surrogate_program(p, &models)?;
    let (program, optimization) = optimize(&sp, p, &cfg.loss, &cfg.optim)?;
    let report = CommissioningReport {
        episodes: cfg.episodes,
        exploration_success_rate: successes as f64 / cfg.episodes.max(1) as f64,
        records,
        training,
        optimization,
        structure_hash: format!("{:016x}", program.structure_hash()),
    };
    Ok(Commissioning { models, program, steps, report })
}

/// One fine-tune (and possibly re-optimization) after `episode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub episode: u64,
    /// Buffer records each skill type was fine-tuned on.
    pub records: BTreeMap<SkillType, usize>,
    pub theta_before: Vec<f64>,
    pub theta_after: Vec<f64>,
    pub predicted_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Operation {
    pub log: LifecycleLog,
    pub cycles: Vec<CycleReport>,
    pub program: SkillProgram,
    pub models: Library,
    /// Buffer contents at the end, oldest episode first.
    pub buffer: Vec<Vec<SkillStep>>,
}

fn finetune_library(
    models: &Library,
    buffer: &VecDeque<Vec<SkillStep>>,
    epochs: usize,
    seed: u64,
    episode: u64,
) -> Result<(Library, BTreeMap<SkillType, usize>), LifecycleError> {
    let mut by_type: BTreeMap<SkillType, Vec<&SkillStep>> = BTreeMap::new();
    for s in buffer.iter().flatten() {
        by_type.entry(s.skill_type).or_default().push(s);
    }
    let counts = by_type.iter().map(|(t, r)| (*t, r.len())).collect();
    let cfg = FinetuneConfig::new(epochs, seed);
    let tuned: Vec<_> = models
        .par_iter()
        .map(|(t, m)| match by_type.get(t) {
            None => Ok((*t, m.clone())),
            Some(records) => finetune(m, records, &cfg)
                .map(|m| (*t, m))
                .map_err(|source| LifecycleError::Finetune { skill_type: *t, episode, source }),
        })
        .collect::<Result<_, _>>()?;
    Ok((tuned.into_iter().collect(), counts))
}

/// Runs `lc.episodes_total` production episodes with passive data
/// collection, periodic fine-tuning, re-optimization and drift alarms.
pub fn run_operation(
    p: &SkillProgram,
    models: &Library,
    world: &WorldConfig,
    loss: &LossSpec,
    lc: &LifecycleConfig,
    seed: u64,
) -> Result<Operation, LifecycleError> {
    lc.validate()?;
    world.validate()?;
    loss.validate()?;
    build_surrogate_program(p, models)?;

    let names = p.free_slots().iter().map(|s| p.slot_name(*s)).collect();
    let mut log = LifecycleLog::new(names);
    let mut cycles = Vec::new();
    let mut program = p.clone();
    let mut models = models.clone();
    let mut buffer: VecDeque<Vec<SkillStep>> = VecDeque::new();
    let mut successes = Vec::with_capacity(lc.episodes_total as usize);
    let mut alarm_on = false;
    let window = lc.drift_alarm_window as usize;

    for e in 0..lc.episodes_total {
        let theta = program.get_free_parameters().0;
        let trace = execute_program(&program, world, seed, e);
        successes.push(trace.success);
        let mut events = Vec::new();
        buffer.push_back(trace.steps);
        while buffer.len() as u64 > lc.buffer_capacity {
            buffer.pop_front();
        }

        if lc.finetune_enabled && (e + 1) % lc.finetune_every == 0 {
            let cycle = (e + 1) / lc.finetune_every;
            let ft_seed = episode_rng(seed, cycle, FINETUNE_STREAM).random();
            let (tuned, records) = finetune_library(&models, &buffer, lc.finetune_epochs, ft_seed, e)?;
            models = tuned;
            events.push(Event::Finetune);
            let mut predicted_loss = None;
            if lc.reoptimize_after_finetune {
                let sp = build_surrogate_program(&program, &models)?;
                let objective = SurrogateObjective::new(&sp, loss);
                let region = Restricted::trust_region(&objective, &theta, lc.reoptimize_trust_region);
                let cfg = OptimConfig { restarts: 1, iterations: lc.reoptimize_iterations, ..OptimConfig::new(ft_seed) };
                let report = optimize_objective(&region, &theta, &cfg)?;
                predicted_loss = Some(report.loss_after);
                program = program.set_free_parameters(&report.final_theta)?;
                events.push(Event::Reoptimize);
            }
            cycles.push(CycleReport {
                episode: e,
                records,
                theta_before: theta.clone(),
                theta_after: program.get_free_parameters().0,
                predicted_loss,
            });
        }

        if successes.len() >= window {
            let status = detect_drift(&successes, window, lc.drift_alarm_threshold)?;
            if status.alarm && !alarm_on {
                events.push(Event::Alarm);
            }
            alarm_on = status.alarm;
        }

        log.push(LifecycleRecord {
            episode: e,
            hole: trace.world_sample,
            success: trace.success,
            duration: trace.total_duration,
            theta,
            events,
        });
    }
    Ok(Operation { log, cycles, program, models, buffer: buffer.into() })
}

#[cfg(test)]
mod tests;
