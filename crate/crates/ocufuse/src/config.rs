//! Run configuration (JSON) with `--set key=value` overrides.
//!
//! Seeds: the root `seed` drives the subject split and EF1 initialization
//! directly; every other random stream uses [`derive_seed`] with a fixed
//! label.

use std::path::{Path, PathBuf};

use ocufuse_core::evalkit::FIDO_FAR;
use ocufuse_core::reliability::CorrelationMethod;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Seed of a named sub-stream: SplitMix64 of the root xor a FNV-1a hash of
/// the label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (root ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodName {
    #[serde(rename = "EMA")]
    Ema,
    #[serde(rename = "PIA")]
    Pia,
    #[serde(rename = "SF1")]
    Sf1,
    #[serde(rename = "SF2-rank-opt")]
    Sf2RankOpt,
    #[serde(rename = "SF2-rank1-opt")]
    Sf2Rank1Opt,
    #[serde(rename = "EF1")]
    Ef1,
    #[serde(rename = "EF2")]
    Ef2,
}

impl MethodName {
    pub const ALL: [MethodName; 7] = [
        Self::Ema,
        Self::Pia,
        Self::Sf1,
        Self::Sf2RankOpt,
        Self::Sf2Rank1Opt,
        Self::Ef1,
        Self::Ef2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Ema => "EMA",
            Self::Pia => "PIA",
            Self::Sf1 => "SF1",
            Self::Sf2RankOpt => "SF2-rank-opt",
            Self::Sf2Rank1Opt => "SF2-rank1-opt",
            Self::Ef1 => "EF1",
            Self::Ef2 => "EF2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FrrMode {
    #[default]
    Conservative,
    Interpolated,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sf2WeightMode {
    /// Recompute matcher weights for every (gaze length, image count) condition.
    #[default]
    PerCondition,
    /// Compute once on the first condition and reuse.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub gaze_embeddings: Option<PathBuf>,
    pub periocular_embeddings: Option<PathBuf>,
}

/// Generator settings for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthModality {
    pub dim: usize,
    pub chunks_per_round: usize,
    pub within_spread: f64,
    pub between_spread: f64,
    pub persistence: f64,
    pub nuisance_dims: usize,
    pub nuisance_spread: f64,
    /// Rank of the subject-mean subspace; 0 for isotropic means.
    pub identity_dims: usize,
}

impl Default for SynthModality {
    fn default() -> Self {
        Self {
            dim: 128,
            chunks_per_round: 4,
            within_spread: 1.0,
            between_spread: 1.0,
            persistence: 0.9,
            nuisance_dims: 0,
            nuisance_spread: 0.0,
            identity_dims: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_subjects: usize,
    pub rounds: usize,
    pub gaze: SynthModality,
    pub periocular: SynthModality,
    /// Subjects for which raw gaze recordings are also written by `synth`.
    pub gaze_recording_subjects: usize,
    pub gaze_recording_seconds: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            rounds: 6,
            gaze: SynthModality {
                dim: 32,
                chunks_per_round: 4,
                within_spread: 0.8,
                between_spread: 1.0,
                persistence: 0.7,
                nuisance_dims: 4,
                nuisance_spread: 1.0,
                identity_dims: 8,
            },
            periocular: SynthModality {
                dim: 64,
                chunks_per_round: 5,
                within_spread: 0.5,
                between_spread: 1.0,
                persistence: 0.9,
                nuisance_dims: 4,
                nuisance_spread: 0.6,
                identity_dims: 8,
            },
            gaze_recording_subjects: 4,
            gaze_recording_seconds: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Number of leading gaze windows per centroid (1..=4 is 5..20 s).
    pub gaze_chunks: Vec<usize>,
    /// Number of periocular images per centroid.
    pub image_counts: Vec<usize>,
    pub methods: Vec<MethodName>,
    pub window_seconds: f64,
    /// Sessions whose ordered pairs are pooled; all sessions when absent.
    pub sessions: Option<Vec<String>>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            gaze_chunks: vec![1, 4],
            image_counts: vec![1, 5],
            methods: MethodName::ALL.to_vec(),
            window_seconds: 5.0,
            sessions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub w_opt: f64,
    pub sweep_steps: usize,
    pub sf2_weights: Sf2WeightMode,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            w_opt: 0.5,
            sweep_steps: 10,
            sf2_weights: Sf2WeightMode::PerCondition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ef1Section {
    pub out_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: u32,
    pub validate_every: u32,
}

impl Default for Ef1Section {
    fn default() -> Self {
        Self {
            out_dim: 32,
            learning_rate: 3e-4,
            max_epochs: 1000,
            validate_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilitySection {
    pub enabled: bool,
    pub reference_draws: usize,
    pub band: (f64, f64),
    pub corr: CorrelationMethod,
}

impl Default for ReliabilitySection {
    fn default() -> Self {
        Self {
            enabled: true,
            reference_draws: 1000,
            band: (2.5, 97.5),
            corr: CorrelationMethod::Pearson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Embedding inputs; synthetic data from `synth` is generated when absent.
    pub paths: Paths,
    pub synth: SynthSection,
    pub protocol: ProtocolSection,
    pub fusion: FusionSection,
    pub ef1: Ef1Section,
    /// FAR targets in percent.
    pub far_targets_pct: Vec<f64>,
    pub frr_mode: FrrMode,
    pub reliability: ReliabilitySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("ocufuse-out"),
            paths: Paths::default(),
            synth: SynthSection::default(),
            protocol: ProtocolSection::default(),
            fusion: FusionSection::default(),
            ef1: Ef1Section::default(),
            far_targets_pct: vec![FIDO_FAR * 100.0],
            frr_mode: FrrMode::Conservative,
            reliability: ReliabilitySection::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the optional file, then `--set` overrides in order.
    /// Nested objects are merged key by key, so partial sections keep the
    /// remaining defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut value = serde_json::to_value(RunConfig::default()).map_err(|e| CliError::Internal(e.to_string()))?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let file = serde_json::from_str::<Value>(&text).map_err(|e| CliError::Parse {
                path: p.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
            merge(&mut value, file);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| CliError::validation(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn far_targets(&self) -> Vec<f64> {
        self.far_targets_pct.iter().map(|p| p / 100.0).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::validation(m.to_string()));
        if self.far_targets_pct.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
            return bad("far_targets_pct values must lie in (0, 100)");
        }
        if self.protocol.gaze_chunks.is_empty() || self.protocol.image_counts.is_empty() {
            return bad("protocol.gaze_chunks and protocol.image_counts must be non-empty");
        }
        if self.protocol.gaze_chunks.contains(&0) || self.protocol.image_counts.contains(&0) {
            return bad("aggregation counts must be at least 1");
        }
        if self.protocol.methods.is_empty() {
            return bad("protocol.methods must be non-empty");
        }
        if !(self.protocol.window_seconds > 0.0) {
            return bad("protocol.window_seconds must be positive");
        }
        if !(self.fusion.w_opt > 0.0 && self.fusion.w_opt <= 1.0) {
            return bad("fusion.w_opt must lie in (0, 1]");
        }
        if self.fusion.sweep_steps == 0 {
            return bad("fusion.sweep_steps must be positive");
        }
        if self.ef1.out_dim == 0 || self.ef1.max_epochs == 0 || self.ef1.validate_every == 0 {
            return bad("ef1.out_dim, ef1.max_epochs and ef1.validate_every must be positive");
        }
        if self.paths.gaze_embeddings.is_some() != self.paths.periocular_embeddings.is_some() {
            return bad("paths.gaze_embeddings and paths.periocular_embeddings must be given together");
        }
        Ok(())
    }
}

/// Parses a `--far-targets` list of percentages, e.g. `"0.002,0.01"`.
pub fn parse_far_targets(list: &str) -> CliResult<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::validation(format!("bad FAR target {s:?}")))
        })
        .collect()
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`: value parsed as JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::validation(format!("bad --set key {key:?}")));
        }
        let obj = match node {
            Value::Object(m) => m,
            other => {
                *other = Value::Object(Default::default());
                other.as_object_mut().expect("just set")
            }
        };
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
