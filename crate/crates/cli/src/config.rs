//! Run configuration: JSON file plus `--set key=value` overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use intentforge_core::metrics::SWEEP_THRESHOLDS;
use intentforge_core::pipeline::PrepareOptions;
use intentforge_core::synth::GeneratorConfig;
use intentforge_core::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold: f64,
    pub sweep_thresholds: Vec<f64>,
    pub compare_thresholds: Vec<f64>,
    pub logreg_learning_rate: f64,
    pub logreg_epochs: usize,
    pub logreg_l2: f64,
    /// Which split part evaluate/sweep/compare score: train, validation, test.
    pub part: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            sweep_thresholds: SWEEP_THRESHOLDS.to_vec(),
            compare_thresholds: intentforge_core::baselines::COMPARE_THRESHOLDS.to_vec(),
            logreg_learning_rate: 0.05,
            logreg_epochs: 300,
            logreg_l2: 1e-4,
            part: "test".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed; mandatory (here or via --seed) for any command that draws
    /// randomness. Overrides the per-section seeds.
    pub seed: Option<u64>,
    pub generator: GeneratorConfig,
    pub pipeline: PrepareOptions,
    pub train: TrainConfig,
    pub evaluate: EvalConfig,
}

impl RunConfig {
    /// Loads the config file (when given), applies `--set` overrides, then
    /// threads the effective seed through every section.
    pub fn load(path: Option<&Path>, overrides: &[String], seed_flag: Option<u64>) -> Result<Self> {
        let base: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("malformed config file {}", p.display()))?
            }
            None => RunConfig::default(),
        };

        let mut tree = serde_json::to_value(&base).expect("config serializes");
        for entry in overrides {
            let (key, raw) = entry
                .split_once('=')
                .with_context(|| format!("--set {entry:?} is not KEY=VALUE"))?;
            let value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            set_path(&mut tree, key, value)?;
        }
        let mut config: RunConfig =
            serde_json::from_value(tree).context("config after --set overrides is invalid")?;

        if let Some(seed) = seed_flag {
            config.seed = Some(seed);
        }
        if let Some(seed) = config.seed {
            config.generator.seed = seed;
            config.pipeline.seed = seed;
            config.train.seed = seed;
        }
        Ok(config)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .context("a seed is required: pass --seed or set \"seed\" in the config")
    }
}

/// Sets a dotted path inside the JSON tree; the path must already exist so
/// typos are reported by name.
fn set_path(tree: &mut serde_json::Value, key: &str, value: serde_json::Value) -> Result<()> {
    let mut cursor = &mut *tree;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let object = cursor
            .as_object_mut()
            .with_context(|| format!("config key {key:?}: {segment:?} is not an object"))?;
        if !object.contains_key(*segment) {
            bail!("unknown config key {key:?} (no field {segment:?})");
        }
        if i == segments.len() - 1 {
            object.insert(segment.to_string(), value);
            return Ok(());
        }
        cursor = object.get_mut(*segment).expect("checked above");
    }
    bail!("empty config key")
}
