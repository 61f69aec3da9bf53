//! Experiment description loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{CodingPlan, DEFAULT_NOISE_SHIFT};
use crate::learners::{Activation, Aggregation, Task};
use crate::privacy::{NoiseModel, SearchStrategy};
use crate::protocols::{SchemeKind, StragglerModel};

fn default_shift() -> f64 {
    DEFAULT_NOISE_SHIFT
}

fn default_one() -> usize {
    1
}

fn default_s() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: SchemeKind,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_shift")]
    pub shift: f64,
    pub lr: f64,
    pub batch_size: usize,
    #[serde(default = "default_one")]
    pub epochs_per_round: usize,
    pub rounds: usize,
    #[serde(default)]
    pub aggregation: Aggregation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub stragglers: StragglerModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub task: Task,
    pub samples_per_node: usize,
    pub features: usize,
    /// Cluster separation, or reconstruction noise for the autoencoder.
    pub difficulty: f64,
    pub eval_samples: usize,
    /// Give every node the same local dataset.
    #[serde(default)]
    pub identical_nodes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    pub sigma_n: Vec<f64>,
    pub t: Vec<usize>,
    pub c: Vec<usize>,
    #[serde(default = "default_s")]
    pub s: f64,
    pub epsilon: f64,
    pub strategy: SearchStrategy,
    #[serde(default)]
    pub noise_model: NoiseModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    /// Relative paths resolve against the spec file's directory.
    pub output_dir: PathBuf,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub network: NetworkSection,
    pub model: ModelSection,
    pub data: DataSection,
    pub privacy: PrivacySection,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads and validates a spec; a relative `output_dir` is anchored at the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::from_toml(&text)?;
        if spec.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                spec.output_dir = dir.join(&spec.output_dir);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.privacy;
        if p.sigma_n.is_empty() || p.t.is_empty() || p.c.is_empty() {
            return bad("privacy sweep lists sigma_n, t and c must be nonempty");
        }
        if p.sigma_n.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("sigma_n values must be finite and nonnegative");
        }
        if !(p.s > 0.0 && p.s.is_finite()) || p.epsilon.is_nan() || p.epsilon <= 0.0 {
            return bad("s and epsilon must be positive");
        }
        let sc = &self.scheme;
        if p.c.iter().any(|&c| c == 0 || c > sc.n) {
            return bad(format!("colluder counts must lie in 1..={}", sc.n));
        }
        if sc.rounds == 0 || sc.batch_size == 0 || sc.epochs_per_round == 0 {
            return bad("rounds, batch_size and epochs_per_round must be positive");
        }
        if !(sc.lr > 0.0 && sc.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if sc.kind == SchemeKind::DlddSecureTraining && sc.k != 1 {
            return bad("dldd-secure-training requires k = 1");
        }
        for &t in &p.t {
            CodingPlan::new(sc.k, t, sc.n, sc.shift).map_err(|e| Error::Config(e.to_string()))?;
        }
        let d = &self.data;
        if d.samples_per_node == 0 || d.features == 0 || d.eval_samples == 0 {
            return bad("data sizes must be positive");
        }
        if self.model.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a nonempty plain identifier");
        }
        crate::protocols::NetworkConfig::new(sc.n, self.network.stragglers, 0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// One entry per point of the `sigma_n × t × c` sweep, in that nesting order.
    pub fn sweep(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &sigma_n in &self.privacy.sigma_n {
            for &t in &self.privacy.t {
                for &c in &self.privacy.c {
                    out.push(SweepPoint { sigma_n, t, c });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma_n: f64,
    pub t: usize,
    pub c: usize,
}
