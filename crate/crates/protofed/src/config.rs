//! Experiment configuration: a flat-sectioned TOML file with every
//! hyper-parameter exposed. Unknown keys are rejected; `seed` is mandatory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    None,
    Linear,
    Poly2,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtoSource {
    /// Prototypes from the freshly aggregated global model (default).
    Global,
    /// Prototypes from the pseudo-client model of the previous round.
    PseudoClient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmit {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdMode {
    /// MMD between the mini-batch features and a prototype subset.
    Minibatch,
    /// MMD over the client's entire dataset each iteration.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommBaseline {
    /// One backbone uploaded per client per round.
    Single,
    /// Cost model of a 4-backbone mutual-teaching client.
    Mmt4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_half")]
    pub beta1: f64,
    #[serde(default = "d_half")]
    pub beta2: f64,
    #[serde(default = "d_half")]
    pub gamma1: f64,
    #[serde(default = "d_half")]
    pub gamma2: f64,
    #[serde(default = "d_margin")]
    pub margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_ipb")]
    pub identities_per_batch: usize,
    #[serde(default = "d_ipi")]
    pub images_per_identity: usize,
    #[serde(default = "d_one")]
    pub ppe_count: usize,
    #[serde(default = "d_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "d_eps")]
    pub dbscan_eps: f64,
    #[serde(default = "d_minpts")]
    pub dbscan_min_pts: usize,
    #[serde(default = "d_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "d_fraction")]
    pub proto_fraction: f64,
    #[serde(default = "d_proto_source")]
    pub proto_source: ProtoSource,
    #[serde(default = "d_transmit")]
    pub transmit: Transmit,
    #[serde(default = "d_mmd_mode")]
    pub mmd_mode: MmdMode,
    #[serde(default = "d_comm")]
    pub comm_baseline: CommBaseline,
}

impl Default for TrainConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "d_hidden")]
    pub d_hidden: usize,
    #[serde(default = "d_feat")]
    pub d_feat: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_output")]
    pub output: String,
    #[serde(default = "d_one")]
    pub workers: usize,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub synth: SynthSpec,
}

fn d_alpha() -> f64 {
    0.5
}
fn d_tau() -> f64 {
    0.999
}
fn d_lambda() -> f64 {
    0.1
}
fn d_half() -> f64 {
    0.5
}
fn d_margin() -> f64 {
    0.3
}
fn d_lr() -> f64 {
    0.05
}
fn d_ipb() -> usize {
    4
}
fn d_ipi() -> usize {
    4
}
fn d_one() -> usize {
    1
}
fn d_warmup() -> usize {
    100
}
fn d_eps() -> f64 {
    0.6
}
fn d_minpts() -> usize {
    4
}
fn d_kernel() -> KernelKind {
    KernelKind::Gaussian
}
fn d_fraction() -> f64 {
    1.0
}
fn d_proto_source() -> ProtoSource {
    ProtoSource::Global
}
fn d_transmit() -> Transmit {
    Transmit::Teacher
}
fn d_mmd_mode() -> MmdMode {
    MmdMode::Minibatch
}
fn d_comm() -> CommBaseline {
    CommBaseline::Single
}
fn d_rounds() -> usize {
    60
}
fn d_hidden() -> usize {
    64
}
fn d_feat() -> usize {
    32
}
fn d_output() -> String {
    "report.jsonl".into()
}

impl ExperimentConfig {
    /// A fully defaulted config except for the mandatory seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg: Self = toml::from_str(&format!("seed = {seed}")).expect("defaults");
        cfg.seed = seed;
        cfg
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        let l = &self.loss;
        if !(0.0..=1.0).contains(&l.alpha) {
            return bad("loss.alpha", "must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&l.tau) {
            return bad("loss.tau", "must be in [0, 1)");
        }
        if l.lambda < 0.0 || !l.lambda.is_finite() {
            return bad("loss.lambda", "must be finite and >= 0");
        }
        if (l.beta1 + l.beta2 - 1.0).abs() > 1e-9 {
            return bad("loss.beta1/beta2", "must sum to 1");
        }
        if (l.gamma1 + l.gamma2 - 1.0).abs() > 1e-9 {
            return bad("loss.gamma1/gamma2", "must sum to 1");
        }
        if l.margin < 0.0 {
            return bad("loss.margin", "must be >= 0");
        }
        let t = &self.train;
        if t.lr < 0.0 || !t.lr.is_finite() {
            return bad("train.lr", "must be finite and >= 0");
        }
        if t.identities_per_batch == 0 {
            return bad("train.identities_per_batch", "must be >= 1");
        }
        if t.images_per_identity == 0 {
            return bad("train.images_per_identity", "must be >= 1");
        }
        if t.ppe_count == 0 {
            return bad("train.ppe_count", "must be >= 1");
        }
        if t.dbscan_eps <= 0.0 {
            return bad("train.dbscan_eps", "must be > 0");
        }
        if t.dbscan_min_pts == 0 {
            return bad("train.dbscan_min_pts", "must be >= 1");
        }
        if !(t.proto_fraction > 0.0 && t.proto_fraction <= 1.0) {
            return bad("train.proto_fraction", "must be in (0, 1]");
        }
        if self.model.d_hidden == 0 || self.model.d_feat == 0 {
            return bad("model.d_hidden/d_feat", "must be >= 1");
        }
        if self.workers == 0 {
            return bad("workers", "must be >= 1");
        }
        self.synth.validate().map_err(|e| Error::Config(format!("synth: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_only_need_seed() {
        let cfg = ExperimentConfig::from_toml_str("seed = 1").unwrap();
        assert_eq!(cfg.rounds, 60);
        assert_eq!(cfg.loss.alpha, 0.5);
        assert_eq!(cfg.loss.tau, 0.999);
        assert_eq!(cfg.loss.lambda, 0.1);
        assert_eq!(cfg.train.kernel, KernelKind::Gaussian);
        assert_eq!(cfg.train.identities_per_batch, 4);
        assert_eq!(cfg.synth.cameras, 6);
    }

    #[test]
    fn missing_seed_names_the_key() {
        let err = ExperimentConfig::from_toml_str("rounds = 5").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::from_toml_str("seed = 1\nbogus = 2").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn unknown_nested_key_rejected() {
        let err =
            ExperimentConfig::from_toml_str("seed = 1\n[train]\nlr = 0.1\ntypo_key = 3").unwrap_err();
        assert!(err.to_string().contains("typo_key"), "{err}");
    }

    #[test]
    fn weight_sum_validated() {
        let err =
            ExperimentConfig::from_toml_str("seed = 1\n[loss]\nbeta1 = 0.9\nbeta2 = 0.9").unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn tau_range_validated() {
        let err = ExperimentConfig::from_toml_str("seed = 1\n[loss]\ntau = 1.0").unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn proto_fraction_range_validated() {
        let err = ExperimentConfig::from_toml_str("seed = 1\n[train]\nproto_fraction = 0.0")
            .unwrap_err();
        assert!(err.to_string().contains("proto_fraction"), "{err}");
    }

    #[test]
    fn enums_parse_snake_case() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 1\n[train]\nkernel = \"poly2\"\nproto_source = \"pseudo_client\"\ntransmit = \"student\"\nmmd_mode = \"full\"\ncomm_baseline = \"mmt4\"",
        )
        .unwrap();
        assert_eq!(cfg.train.kernel, KernelKind::Poly2);
        assert_eq!(cfg.train.proto_source, ProtoSource::PseudoClient);
        assert_eq!(cfg.train.transmit, Transmit::Student);
        assert_eq!(cfg.train.mmd_mode, MmdMode::Full);
        assert_eq!(cfg.train.comm_baseline, CommBaseline::Mmt4);
    }
}
