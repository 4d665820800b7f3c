//! Run configuration: one JSON file capturing every knob of a pipeline run,
//! overridable by CLI flags. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::LabelScheme;
use crate::error::{Error, Result};
use crate::synth::SynthConfig;

/// Which scalogram path the feature stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalogramMode {
    /// CWT of the raw segment.
    Conventional,
    /// CWT of the segment's maximally correlated IMF.
    Hybrid,
}

impl std::str::FromStr for ScalogramMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" => Ok(ScalogramMode::Conventional),
            "hybrid" => Ok(ScalogramMode::Hybrid),
            other => Err(format!("unknown scalogram mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterKnobs {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for FilterKnobs {
    fn default() -> Self {
        Self { low_hz: 50.0, high_hz: 2500.0, order: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmdKnobs {
    pub max_imfs: usize,
}

impl Default for EmdKnobs {
    fn default() -> Self {
        Self { max_imfs: crate::emd::DEFAULT_MAX_IMFS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CwtKnobs {
    pub gamma: f64,
    pub time_bandwidth: f64,
    pub voices_per_octave: u32,
}

impl Default for CwtKnobs {
    fn default() -> Self {
        Self {
            gamma: crate::scalogram::MORSE_GAMMA,
            time_bandwidth: crate::scalogram::MORSE_TIME_BANDWIDTH,
            voices_per_octave: crate::scalogram::VOICES_PER_OCTAVE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderKnobs {
    pub floor_db: f64,
}

impl Default for RenderKnobs {
    fn default() -> Self {
        Self { floor_db: crate::render::FLOOR_DB }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelKnobs {
    /// Square input side the network trains at; images are bilinearly
    /// reduced when below 224.
    pub input_size: usize,
    pub fc_widths: Vec<usize>,
    pub dropout: f64,
}

impl Default for ModelKnobs {
    fn default() -> Self {
        Self {
            input_size: crate::render::IMAGE_SIZE,
            fc_widths: crate::nn::DEFAULT_FC_WIDTHS.to_vec(),
            dropout: crate::nn::DEFAULT_DROPOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainKnobs {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub stop_at_val_accuracy: Option<f64>,
}

impl Default for TrainKnobs {
    fn default() -> Self {
        Self { lr: 1e-5, batch: 6, epochs: 10, stop_at_val_accuracy: None }
    }
}

/// Everything a run needs; serializes to the `--config` JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub scheme: LabelScheme,
    pub mode: ScalogramMode,
    pub threads: usize,
    pub split_ratio: f64,
    pub filter: FilterKnobs,
    pub emd: EmdKnobs,
    pub cwt: CwtKnobs,
    pub render: RenderKnobs,
    pub model: ModelKnobs,
    pub train: TrainKnobs,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_dir: PathBuf::from("corpus"),
            out_dir: PathBuf::from("out"),
            seed: 0,
            scheme: LabelScheme::Pathological6,
            mode: ScalogramMode::Hybrid,
            threads: 1,
            split_ratio: 0.8,
            filter: FilterKnobs::default(),
            emd: EmdKnobs::default(),
            cwt: CwtKnobs::default(),
            render: RenderKnobs::default(),
            model: ModelKnobs::default(),
            train: TrainKnobs::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::BadConfig(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Check every knob against its module's preconditions.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadConfig(msg));
        if self.threads == 0 {
            return bad("threads must be at least 1".to_string());
        }
        if !(0.0 < self.split_ratio && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} outside (0, 1)", self.split_ratio));
        }
        if !(self.filter.low_hz > 0.0 && self.filter.high_hz > self.filter.low_hz) {
            return bad(format!("filter band [{}, {}]", self.filter.low_hz, self.filter.high_hz));
        }
        if self.filter.high_hz >= crate::preprocess::SEGMENT_FS / 2.0 {
            return bad(format!("filter high edge {} at or above Nyquist", self.filter.high_hz));
        }
        if self.filter.order == 0 {
            return bad("filter order must be positive".to_string());
        }
        if self.emd.max_imfs == 0 {
            return bad("max_imfs must be positive".to_string());
        }
        if !(self.cwt.gamma > 0.0 && self.cwt.time_bandwidth > self.cwt.gamma) {
            return bad(format!(
                "Morse parameters gamma {} / time-bandwidth {}",
                self.cwt.gamma, self.cwt.time_bandwidth
            ));
        }
        if self.cwt.voices_per_octave == 0 {
            return bad("voices_per_octave must be positive".to_string());
        }
        if self.render.floor_db >= 0.0 {
            return bad(format!("floor_db {} must be negative", self.render.floor_db));
        }
        if self.model.input_size < 16 || self.model.input_size > crate::render::IMAGE_SIZE {
            return bad(format!("input_size {} outside [16, 224]", self.model.input_size));
        }
        if self.model.fc_widths.is_empty() || self.model.fc_widths.contains(&0) {
            return bad("fc_widths must be non-empty and positive".to_string());
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.model.dropout));
        }
        if self.train.lr <= 0.0 {
            return bad(format!("learning rate {}", self.train.lr));
        }
        if self.train.batch == 0 || self.train.batch % self.scheme.n_classes() != 0 {
            return bad(format!(
                "batch {} must be a positive multiple of {} classes",
                self.train.batch,
                self.scheme.n_classes()
            ));
        }
        Ok(())
    }
}
