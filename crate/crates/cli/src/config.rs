use std::path::{Path, PathBuf};

use anyhow::Context;
use hmmclust::clusterers::{Method, MethodSettings};
use hmmclust::experiments::{example1, example2};
use hmmclust::io::ModelFile;
use hmmclust::model::GaussianSecondParam;
use hmmclust::oracle::Limits;
use hmmclust::spectral::SpectralConfig;
use hmmclust::HmmParams;
use serde::{Deserialize, Serialize};

/// A model given inline or as a path to a model JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(ModelFile),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitsConfig {
    pub max_n: usize,
    pub max_label_paths: u64,
    pub max_observation_paths: u64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let l = Limits::default();
        Self {
            max_n: l.max_n,
            max_label_paths: l.max_label_paths as u64,
            max_observation_paths: l.max_observation_paths as u64,
        }
    }
}

impl From<LimitsConfig> for Limits {
    fn from(c: LimitsConfig) -> Self {
        Self {
            max_n: c.max_n,
            max_label_paths: c.max_label_paths as u128,
            max_observation_paths: c.max_observation_paths as u128,
        }
    }
}

/// Every command reads this; fields a command does not use are ignored.
/// The resolved value is written next to the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelRef>,
    /// `example1` or `example2`, used when `model` is absent.
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub seed: u64,
    pub replicates: usize,
    pub methods: Vec<Method>,
    /// Observation CSV (`i,x,y` or `i,y`) for `estimate` and `cluster`.
    pub data: Option<PathBuf>,
    /// Number of hidden states when no model is given.
    pub states: Option<usize>,
    /// Reading of the Gaussian scales; `stddev` unless set, except for
    /// `reproduce`, which defaults to `variance`.
    pub gaussian_second_param: Option<GaussianSecondParam>,
    pub spectral: SpectralConfig,
    pub kmeans_restarts: usize,
    pub limits: LimitsConfig,
    /// Sampled sequences for the coincidence check of `exact`.
    pub trials: usize,
    /// Classification risk supplied to `bounds` for dependent models.
    pub class_risk: Option<f64>,
    pub exponent_constant: f64,
    /// Threshold of the smoothing-distance diagnostic.
    pub gamma: f64,
    /// Relative perturbation of the estimated model in the diagnostic.
    pub perturbation: f64,
    pub etas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: None,
            preset: None,
            n: None,
            seed: 0,
            replicates: 5,
            methods: Method::ALL.to_vec(),
            data: None,
            states: None,
            gaussian_second_param: None,
            spectral: SpectralConfig::default(),
            kmeans_restarts: 10,
            limits: LimitsConfig::default(),
            trials: 200,
            class_risk: None,
            exponent_constant: 15.0,
            gamma: 0.25,
            perturbation: 0.05,
            etas: vec![0.1, 0.03, 0.01],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<(Self, Option<PathBuf>)> {
        let Some(path) = path else {
            return Ok((Self::default(), None));
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok((cfg, path.parent().map(Path::to_path_buf)))
    }

    pub fn second_param(&self, fallback: GaussianSecondParam) -> GaussianSecondParam {
        self.gaussian_second_param.unwrap_or(fallback)
    }

    pub fn settings(&self) -> MethodSettings {
        MethodSettings {
            spectral: self.spectral.clone(),
            kmeans_restarts: self.kmeans_restarts,
        }
    }

    /// Collects every validation problem instead of stopping at the first.
    pub fn problems(&self, base: Option<&Path>) -> Vec<String> {
        let mut out = Vec::new();
        if self.n == Some(0) {
            out.push("n must be >= 1".to_string());
        }
        if self.replicates == 0 {
            out.push("replicates must be >= 1".to_string());
        }
        if self.kmeans_restarts == 0 {
            out.push("kmeans_restarts must be >= 1".to_string());
        }
        if let Some(ModelRef::Path(p)) = &self.model {
            if !resolve(base, p).exists() {
                out.push(format!("model file {} does not exist", p.display()));
            }
        }
        if let Some(p) = &self.data {
            if !resolve(base, p).exists() {
                out.push(format!("data file {} does not exist", p.display()));
            }
        }
        if let Some(p) = &self.preset {
            if p != "example1" && p != "example2" {
                out.push(format!("unknown preset {p:?} (example1|example2)"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            out.push(format!("gamma must lie in (0, 1/2), got {}", self.gamma));
        }
        if self.spectral.bins == Some(0) {
            out.push("spectral.bins must be >= 1".to_string());
        }
        if !(self.spectral.beta > 0.0) {
            out.push("spectral.beta must be > 0".to_string());
        }
        if self.spectral.rotations == Some(0) {
            out.push("spectral.rotations must be >= 1".to_string());
        }
        out
    }

    /// The model and its default sample size, if one is configured.
    pub fn model(&self, base: Option<&Path>) -> anyhow::Result<Option<(HmmParams, Option<usize>)>> {
        let second = self.second_param(GaussianSecondParam::Stddev);
        Ok(match (&self.model, self.preset.as_deref()) {
            (Some(ModelRef::Inline(m)), _) => Some((m.to_params(second)?, None)),
            (Some(ModelRef::Path(p)), _) => {
                let p = resolve(base, p);
                let text = std::fs::read_to_string(&p)
                    .with_context(|| format!("reading model {}", p.display()))?;
                Some((hmmclust::io::parse_model(&text, second)?, None))
            }
            (None, Some("example1")) => {
                let e = example1(second);
                Some((e.params, Some(e.n)))
            }
            (None, Some("example2")) => {
                let e = example2(second);
                Some((e.params, Some(e.n)))
            }
            _ => None,
        })
    }
}

pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}
