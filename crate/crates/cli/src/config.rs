//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tableseq::imgproc::EnhanceConfig;
use tableseq::nn::{Decay, LrSchedule, ModelConfig, TrainConfig};
use tableseq::synth::DatasetConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSettings {
    pub max_tokens: usize,
    /// Tokens emitted per outer step.
    pub block_n: usize,
    /// Block sizes timed by `decode --bench`.
    pub bench_n: Vec<usize>,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings { max_tokens: 400, block_n: 1, bench_n: vec![1, 2, 4] }
    }
}

/// Share of synthetic samples in each batch, annealed linearly over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Curriculum {
    pub synth_start: f64,
    pub synth_end: f64,
}

impl Default for Curriculum {
    fn default() -> Self {
        Curriculum { synth_start: 1.0, synth_end: 0.0 }
    }
}

impl Curriculum {
    pub fn synth_fraction(&self, step: usize, total: usize) -> f64 {
        let t = if total <= 1 { 0.0 } else { step as f64 / (total - 1) as f64 };
        self.synth_start + (self.synth_end - self.synth_start) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub lambda0: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Evaluate every (lambda0, gamma) pair instead of the two one-factor blocks.
    pub full_grid: bool,
    pub units: Vec<u32>,
    /// Training steps per grid unit in `sweep-quant`.
    pub quant_steps: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            lambda0: vec![0.0, 0.5, 1.0, 2.0],
            gamma: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            full_grid: false,
            units: vec![2, 5, 8],
            quant_steps: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    pub data: DatasetConfig,
    pub enhance: EnhanceConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeSettings,
    pub curriculum: Curriculum,
    pub sweep: SweepSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let steps = 2000;
        RunConfig {
            seed: 0,
            jobs: 0,
            data: DatasetConfig::default(),
            enhance: EnhanceConfig::default(),
            model: ModelConfig { mtp_heads: 4, ..ModelConfig::default() },
            train: TrainConfig {
                steps,
                batch_size: 8,
                schedule: LrSchedule { start: 2e-3, end: 1e-4, decay: Decay::Exponential, warmup_steps: 20, total_steps: steps },
                noise_rate: 0.0,
                mtp_weights: vec![0.4, 0.3, 0.2, 0.1],
                ..TrainConfig::default()
            },
            decode: DecodeSettings::default(),
            curriculum: Curriculum::default(),
            sweep: SweepSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(CliError::PathMissing(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Keys present in `text` replace the run defaults; nested tables are
    /// merged key by key, so a partial section keeps the other defaults.
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let over: toml::Table = toml::from_str(text)?;
        let mut base = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        merge(&mut base, over);
        Ok(base.try_into()?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.enhance.validate()?;
        let bad = |m: String| Err(CliError::Config(m));
        if self.decode.max_tokens == 0 || self.decode.block_n == 0 {
            return bad("decode.max_tokens and decode.block_n must be at least 1".into());
        }
        if self.decode.block_n > self.model.mtp_heads {
            return bad(format!("decode.block_n = {} exceeds model.mtp_heads = {}", self.decode.block_n, self.model.mtp_heads));
        }
        if self.train.mtp_weights.len() != self.model.mtp_heads {
            return bad(format!(
                "train.mtp_weights has {} entries for {} heads",
                self.train.mtp_weights.len(),
                self.model.mtp_heads
            ));
        }
        for (name, v) in [("synth_start", self.curriculum.synth_start), ("synth_end", self.curriculum.synth_end)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("curriculum.{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.data.rows.0 == 0 || self.data.rows.0 > self.data.rows.1 || self.data.cols.0 == 0 || self.data.cols.0 > self.data.cols.1 {
            return bad("data.rows and data.cols must be non-empty ranges starting at 1 or more".into());
        }
        if self.sweep.units.contains(&0) {
            return bad("sweep.units must be positive".into());
        }
        Ok(())
    }

    /// Sets the total step count and keeps the schedule length in sync.
    pub fn set_steps(&mut self, steps: usize) {
        self.train.steps = steps;
        self.train.schedule.total_steps = steps;
    }

    /// Sets the number of MTP heads and spreads the loss weights as
    /// 4:3:2:1-style linearly decaying shares.
    pub fn set_mtp_heads(&mut self, heads: usize) {
        self.model.mtp_heads = heads;
        let total: usize = (1..=heads).sum();
        self.train.mtp_weights = (0..heads).map(|i| (heads - i) as f64 / total as f64).collect();
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `0,0.5,1` style lists.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse().map_err(|_| CliError::Config(format!("cannot parse `{x}` in list `{s}`"))))
        .collect()
}
