//! JSON checkpoints. Weights are stored per layer as rows
//! `[w_j0, .., w_j(in-1), b_j]`; floats use shortest round-trip decimals.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::SkillType;

use super::mlp::Mlp;
use super::model::{Arch, Norm, SurrogateModel};
use super::program::Library;
use super::SurrogateError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub skill_type: SkillType,
    pub arch: Arch,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub input_norm: Norm,
    pub output_norm: Norm,
    pub trained_episodes: u64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(m: &SurrogateModel) -> Self {
        let weights = (0..m.net.layers())
            .map(|l| {
                let (w, b) = m.net.layer(l);
                let n_in = m.net.dims()[l];
                b.iter()
                    .enumerate()
                    .map(|(j, bj)| {
                        let mut row = w[j * n_in..(j + 1) * n_in].to_vec();
                        row.push(*bj);
                        row
                    })
                    .collect()
            })
            .collect();
        Self {
            skill_type: m.skill_type,
            arch: m.arch(),
            weights,
            input_norm: m.input_norm.clone(),
            output_norm: m.output_norm.clone(),
            trained_episodes: m.trained_episodes,
            seed: m.seed,
        }
    }

    pub fn into_model(self) -> Result<SurrogateModel, SurrogateError> {
        let inconsistent = |s: String| SurrogateError::Inconsistent(s);
        if self.arch.activation != "tanh" {
            return Err(inconsistent(format!("unsupported activation `{}`", self.arch.activation)));
        }
        let dims = self.arch.dims();
        if self.weights.len() != dims.len() - 1 {
            return Err(inconsistent(format!(
                "{} weight layers for {} layer widths",
                self.weights.len(),
                dims.len()
            )));
        }
        let mut params = Vec::with_capacity(Mlp::param_count(&dims));
        for (l, layer) in self.weights.iter().enumerate() {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            if layer.len() != n_out || layer.iter().any(|r| r.len() != n_in + 1) {
                return Err(inconsistent(format!("layer {l} is not {n_out}×({n_in}+1)")));
            }
            params.extend(layer.iter().flat_map(|r| r[..n_in].iter().copied()));
            params.extend(layer.iter().map(|r| r[n_in]));
        }
        let net = Mlp::from_params(&dims, params).ok_or_else(|| inconsistent("parameter count".into()))?;
        let mut m = SurrogateModel::new(self.skill_type, net, self.input_norm, self.output_norm)?;
        m.trained_episodes = self.trained_episodes;
        m.seed = self.seed;
        Ok(m)
    }
}

pub fn save_checkpoint(m: &SurrogateModel) -> String {
    serde_json::to_string_pretty(&Checkpoint::from_model(m)).expect("checkpoint serializes")
}

pub fn load_checkpoint(doc: &str) -> Result<SurrogateModel, SurrogateError> {
    let ck: Checkpoint = serde_json::from_str(doc).map_err(|e| SurrogateError::Malformed(e.to_string()))?;
    ck.into_model()
}

/// Writes `<skill_type>.json` per model into `dir`.
pub fn save_library(lib: &Library, dir: &Path) -> Result<(), SurrogateError> {
    let io = |path: &Path, source| SurrogateError::Io { path: path.display().to_string(), source };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for (t, m) in lib {
        let path = dir.join(format!("{t}.json"));
        fs::write(&path, save_checkpoint(m)).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Loads every `<skill_type>.json` present in `dir`.
pub fn load_library(dir: &Path) -> Result<Library, SurrogateError> {
    let mut lib = Library::new();
    for t in SkillType::ALL {
        let path = dir.join(format!("{t}.json"));
        if !path.exists() {
            continue;
        }
        let doc = fs::read_to_string(&path)
            .map_err(|source| SurrogateError::Io { path: path.display().to_string(), source })?;
        let m = load_checkpoint(&doc)?;
        if m.skill_type != t {
            return Err(SurrogateError::Inconsistent(format!(
                "{} holds a {} model",
                path.display(),
                m.skill_type
            )));
        }
        lib.insert(t, m);
    }
    Ok(lib)
}
