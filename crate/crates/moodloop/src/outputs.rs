//! Tension tables, threshold sidecars and loop manifests.

use std::path::Path;

use moodloop_core::annotate::FeatureThresholds;
use moodloop_core::loops::LoopSpan;
use moodloop_core::tension::{TensionProfile, TensionThresholds};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{read_json, read_text, write_atomic, write_json};

pub const FEATURE_THRESHOLDS_FILE: &str = "feature_thresholds.json";
pub const TENSION_THRESHOLDS_FILE: &str = "tension_thresholds.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensionRow {
    pub song: String,
    pub bar: usize,
    pub cd: f64,
    pub cm: f64,
    pub ts: f64,
    pub cd_level: Option<String>,
    pub cm_level: Option<String>,
    pub ts_level: Option<String>,
}

pub fn tension_rows(song: &str, profile: &TensionProfile) -> Vec<TensionRow> {
    profile
        .bars
        .iter()
        .enumerate()
        .map(|(bar, b)| TensionRow {
            song: song.to_owned(),
            bar,
            cd: b.cloud_diameter,
            cm: b.cloud_momentum,
            ts: b.tensile_strain,
            cd_level: b.levels.map(|l| l.cloud_diameter.name().to_owned()),
            cm_level: b.levels.map(|l| l.cloud_momentum.name().to_owned()),
            ts_level: b.levels.map(|l| l.tensile_strain.name().to_owned()),
        })
        .collect()
}

/// CSV (`song,bar,cd,cm,ts,cd_level,cm_level,ts_level`) or, for a `.json`
/// path, a JSON array of the same rows.
pub fn write_tension(path: &Path, rows: &[TensionRow]) -> Result<()> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        return write_json(path, rows);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["song", "bar", "cd", "cm", "ts", "cd_level", "cm_level", "ts_level"])?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::invalid(e.to_string()))?)
}

const RULE: &str = "value >= median -> high";

pub fn write_feature_thresholds(path: &Path, t: &FeatureThresholds) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        valence_median: f64,
        arousal_median: f64,
        rule: &'a str,
    }
    write_json(path, &Out { valence_median: t.valence_median, arousal_median: t.arousal_median, rule: RULE })
}

pub fn read_feature_thresholds(path: &Path) -> Result<FeatureThresholds> {
    let t: FeatureThresholds = read_json(path)?;
    for v in [t.valence_median, t.arousal_median] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{}: threshold {v} outside [0, 1]", path.display())));
        }
    }
    Ok(t)
}

pub fn write_tension_thresholds(path: &Path, t: &TensionThresholds) -> Result<()> {
    write_json(path, t)
}

pub fn read_tension_thresholds(path: &Path) -> Result<TensionThresholds> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub song: String,
    pub start_bar: usize,
    pub end_bar: usize,
    pub rep_len: usize,
}

impl LoopRecord {
    pub fn new(song: &str, span: &LoopSpan) -> Self {
        LoopRecord {
            song: song.to_owned(),
            start_bar: span.start_bar,
            end_bar: span.end_bar,
            rep_len: span.repetition_length_events,
        }
    }
}

pub fn write_loop_manifest(path: &Path, records: &[LoopRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_loop_manifest(path: &Path) -> Result<Vec<LoopRecord>> {
    read_text(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::from(e).in_file(path)))
        .collect()
}
