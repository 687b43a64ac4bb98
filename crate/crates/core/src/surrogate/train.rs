use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::dsl::SkillType;
use crate::sim::SkillStep;

use super::mlp::Mlp;
use super::model::{
    encode_input, encode_target, logistic, Norm, SurrogateModel, DEFAULT_HIDDEN, DURATION, INPUT_DIM, LOGIT,
    OUTPUT_DIM,
};
use super::SurrogateError;

/// Minimum number of records for a fresh training run.
pub const MIN_RECORDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Fraction of records held out for metrics.
    pub holdout: f64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: 64,
            learning_rate: 1e-3,
            seed,
            hidden: DEFAULT_HIDDEN.to_vec(),
            holdout: 0.1,
        }
    }
}

/// Fit quality on a set of records, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub records: usize,
    /// Training objective (normalized MSE + cross-entropy).
    pub loss: f64,
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub rmse_z: f64,
    pub rmse_duration: f64,
    pub rmse_max_force: f64,
    pub duration_r2: f64,
    /// Mean squared error of the success probability.
    pub brier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub skill_type: SkillType,
    pub train_records: usize,
    pub holdout_records: usize,
    pub epochs: usize,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub holdout: Metrics,
}

struct Sample {
    x: [f64; INPUT_DIM],
    y: [f64; OUTPUT_DIM],
}

fn samples(records: &[&SkillStep]) -> Vec<Sample> {
    records
        .iter()
        .map(|r| Sample { x: encode_input(&r.s_in, &r.params), y: encode_target(r) })
        .collect()
}

fn check_records(records: &[&SkillStep], skill_type: SkillType) -> Result<(), SurrogateError> {
    if let Some(r) = records.iter().find(|r| r.skill_type != skill_type) {
        return Err(SurrogateError::MixedSkillTypes { expected: skill_type, found: r.skill_type });
    }
    Ok(())
}

fn count_episodes(records: &[&SkillStep]) -> u64 {
    records.iter().map(|r| (r.seed, r.episode)).collect::<BTreeSet<_>>().len() as u64
}

/// Per-sample objective and its gradient w.r.t. the raw network output.
fn sample_loss(model: &SurrogateModel, net_out: &[f64], y: &[f64; OUTPUT_DIM], grad: &mut [f64; OUTPUT_DIM]) -> f64 {
    let mut loss = 0.0;
    for i in 0..OUTPUT_DIM {
        if i == LOGIT {
            let l = net_out[i];
            let s = y[i];
            loss += l.max(0.0) - s * l + (-l.abs()).exp().ln_1p();
            grad[i] = logistic(l) - s;
        } else {
            let target = (y[i] - model.output_norm.mean[i]) / model.output_norm.std[i];
            let d = net_out[i] - target;
            loss += d * d / 5.0;
            grad[i] = 2.0 * d / 5.0;
        }
    }
    loss
}

/// Runs `epochs` of minibatch Adam over `data`; returns mean loss per epoch.
fn fit(
    model: &mut SurrogateModel,
    data: &[Sample],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SurrogateError> {
    let mut adam = Adam::new(model.net.params().len(), lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = vec![0.0; model.net.params().len()];
    let mut epoch_loss = Vec::with_capacity(epochs);
    let batch_size = batch_size.max(1);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(batch_size).enumerate() {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / idx.len() as f64;
            let mut batch_loss = 0.0;
            for &i in idx {
                let s = &data[i];
                let xn: Vec<f64> = s
                    .x
                    .iter()
                    .zip(&model.input_norm.mean)
                    .zip(&model.input_norm.std)
                    .map(|((x, m), sd)| (x - m) / sd)
                    .collect();
                let cache = model.net.forward_cached(&xn);
                let mut gy = [0.0; OUTPUT_DIM];
                batch_loss += sample_loss(model, cache.output(), &s.y, &mut gy);
                gy.iter_mut().for_each(|g| *g *= scale);
                model.net.backward(&cache, &gy, Some(&mut grads));
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(SurrogateError::NonFiniteLoss { epoch, batch });
            }
            total += batch_loss;
            adam.step(model.net.params_mut(), &grads);
        }
        epoch_loss.push(total / data.len().max(1) as f64);
    }
    Ok(epoch_loss)
}

/// Trains a fresh surrogate on records of one skill type.
///
/// Records are shuffled with `cfg.seed`; the last `cfg.holdout` fraction is
/// held out. Normalization statistics come from the training split only.
pub fn train_skill_surrogate(
    records: &[&SkillStep],
    cfg: &TrainConfig,
) -> Result<(SurrogateModel, TrainReport), SurrogateError> {
    if records.len() < MIN_RECORDS {
        return Err(SurrogateError::InsufficientData { found: records.len(), needed: MIN_RECORDS });
    }
    let skill_type = records[0].skill_type;
    check_records(records, skill_type)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffled: Vec<&SkillStep> = records.to_vec();
    shuffled.shuffle(&mut rng);
    let n_hold = ((records.len() as f64 * cfg.holdout).round() as usize).min(records.len() - 1);
    let (train_recs, hold_recs) = shuffled.split_at(records.len() - n_hold);

    let train = samples(train_recs);
    let input_norm = Norm::fit_inputs(train.iter().map(|s| &s.x[..]), INPUT_DIM);
    let mut output_norm = Norm::fit(train.iter().map(|s| &s.y[..]), OUTPUT_DIM);
    output_norm.mean[LOGIT] = 0.0;
    output_norm.std[LOGIT] = 1.0;

    let mut dims = vec![INPUT_DIM];
    dims.extend(&cfg.hidden);
    dims.push(OUTPUT_DIM);
    let net = Mlp::glorot(&dims, &mut rng);
    let mut model = SurrogateModel::new(skill_type, net, input_norm, output_norm)?;
    model.seed = cfg.seed;
    model.trained_episodes = count_episodes(train_recs);

    let epoch_loss = fit(&mut model, &train, cfg.epochs, cfg.batch_size, cfg.learning_rate, &mut rng)?;
    let holdout = evaluate(&model, hold_recs)?;
    let report = TrainReport {
        skill_type,
        train_records: train_recs.len(),
        holdout_records: hold_recs.len(),
        epochs: cfg.epochs,
        epoch_loss,
        holdout,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl FinetuneConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self { epochs, batch_size: 64, learning_rate: 1e-3, seed }
    }
}

/// Continues training from the current weights with frozen normalization.
pub fn finetune(
    model: &SurrogateModel,
    records: &[&SkillStep],
    cfg: &FinetuneConfig,
) -> Result<SurrogateModel, SurrogateError> {
    if records.is_empty() {
        return Err(SurrogateError::InsufficientData { found: 0, needed: 1 });
    }
    check_records(records, model.skill_type)?;
    let mut out = model.clone();
    if cfg.epochs == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = samples(records);
    fit(&mut out, &data, cfg.epochs, cfg.batch_size, cfg.learning_rate, &mut rng)?;
    out.trained_episodes += count_episodes(records);
    Ok(out)
}

/// Metrics of `model` on `records`.
pub fn evaluate(model: &SurrogateModel, records: &[&SkillStep]) -> Result<Metrics, SurrogateError> {
    let n = records.len();
    let mut sq = [0.0; OUTPUT_DIM];
    let mut loss = 0.0;
    let mut brier = 0.0;
    let mut durations = Vec::with_capacity(n);
    for r in records {
        let x = encode_input(&r.s_in, &r.params);
        let y = encode_target(r);
        let pred = model.forward(&x)?;
        let mut net_out = pred.clone();
        for (i, v) in net_out.iter_mut().enumerate() {
            if i != LOGIT {
                *v = (*v - model.output_norm.mean[i]) / model.output_norm.std[i];
            }
        }
        let mut g = [0.0; OUTPUT_DIM];
        loss += sample_loss(model, &net_out, &y, &mut g);
        for i in 0..OUTPUT_DIM {
            if i != LOGIT {
                sq[i] += (pred[i] - y[i]).powi(2);
            }
        }
        brier += (logistic(pred[LOGIT]) - y[LOGIT]).powi(2);
        durations.push(y[DURATION]);
    }
    let nf = n.max(1) as f64;
    let mean_d = durations.iter().sum::<f64>() / nf;
    let ss_tot: f64 = durations.iter().map(|d| (d - mean_d).powi(2)).sum();
    let ss_res = sq[DURATION];
    let duration_r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    let rmse = |i: usize| (sq[i] / nf).sqrt();
    Ok(Metrics {
        records: n,
        loss: loss / nf,
        rmse_x: rmse(0),
        rmse_y: rmse(1),
        rmse_z: rmse(2),
        rmse_duration: rmse(DURATION),
        rmse_max_force: rmse(5),
        duration_r2,
        brier: brier / nf,
    })
}
