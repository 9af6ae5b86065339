//! Versioned TOML pipeline configuration. Every key is optional; missing
//! keys take the defaults below, and command-line flags override the file.
//!
//! ```toml
//! version = 1
//!
//! [paths]
//! scores = "data/scores"
//! annotations = "data/annotations.csv"
//! corpus = "data/corpus.txt"
//! models = "models"
//! generations = "generations"
//! reports = "reports"
//!
//! [loops]            # repetition and loop-length limits
//! min_rep_notes = 4
//! min_rep_beats = 2
//! min_loop_bars = 4
//! max_loop_bars = 4
//! allow_overlap = true
//!
//! [spiral]           # spiral-array geometry
//! radius = 1.0
//! height = 0.3651483716701107
//! chord_weights = [0.536, 0.274, 0.19]
//! key_weights = [0.536, 0.274, 0.19]
//!
//! [generator]
//! order = 4
//! alpha = 0.01
//! temperature = 1.0
//! max_tokens = 4096
//! max_bars = 64
//! strategy = "mask"  # or "reject"
//! seed = 0
//!
//! [classifier]
//! epochs = 300
//! learning_rate = 0.5
//! l2 = 0.001
//! holdout_fraction = 0.2
//! seed = 0
//! truncate_tokens = 768
//! ```

use std::path::{Path, PathBuf};

use moodloop_core::evaluate::ClassifierConfig;
use moodloop_core::generate::{TempoStrategy, DEFAULT_ALPHA, DEFAULT_MAX_BARS, DEFAULT_MAX_TOKENS, DEFAULT_ORDER};
use moodloop_core::loops::LoopParams;
use moodloop_core::tension::SpiralParams;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{read_text, write_atomic};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub scores: PathBuf,
    pub annotations: PathBuf,
    pub corpus: PathBuf,
    pub models: PathBuf,
    pub generations: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            scores: "data/scores".into(),
            annotations: "data/annotations.csv".into(),
            corpus: "data/corpus.txt".into(),
            models: "models".into(),
            generations: "generations".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub order: usize,
    pub alpha: f64,
    pub temperature: f64,
    pub max_tokens: usize,
    pub max_bars: usize,
    pub strategy: TempoStrategy,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            temperature: 1.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            max_bars: DEFAULT_MAX_BARS,
            strategy: TempoStrategy::Mask,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub paths: Paths,
    pub loops: LoopParams,
    pub spiral: SpiralParams,
    pub generator: GeneratorConfig,
    pub classifier: ClassifierConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            paths: Paths::default(),
            loops: LoopParams::default(),
            spiral: SpiralParams::default(),
            generator: GeneratorConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: PipelineConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        PipelineConfig::from_toml(&read_text(path)?).map_err(|e| e.in_file(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml()?.as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::invalid(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.loops.validate()?;
        self.spiral.validate()?;
        if self.generator.order < 2 {
            return Err(Error::invalid("generator.order must be at least 2"));
        }
        if !(self.generator.alpha > 0.0) {
            return Err(Error::invalid("generator.alpha must be positive"));
        }
        self.classifier.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_losslessly() {
        let c = PipelineConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn awkward_floats_round_trip() {
        let mut c = PipelineConfig::default();
        c.generator.alpha = 1.0 / 3.0;
        c.classifier.l2 = 1e-17;
        c.spiral.chord_weights = [0.1, 0.2, 0.7];
        let back = PipelineConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start().to_owned() + "\n")
            .collect();
        assert_eq!(PipelineConfig::from_toml(&doc).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(PipelineConfig::from_toml("version = 2").is_err());
        assert!(PipelineConfig::from_toml("[loops]\nmin_loop_bars = 5\nmax_loop_bars = 4").is_err());
        assert!(PipelineConfig::from_toml("[generator]\ncolour = 1").is_err());
        let partial = PipelineConfig::from_toml("[generator]\norder = 3").unwrap();
        assert_eq!(partial.generator.order, 3);
        assert_eq!(partial.generator.alpha, DEFAULT_ALPHA);
    }
}
