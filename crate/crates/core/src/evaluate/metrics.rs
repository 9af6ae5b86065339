//! Emotion-separation and loopability metrics plus their text tables.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::classifier::ClassifierModel;
use super::EvalError;
use crate::loops::{extract_loops, LoopParams};
use crate::score::{regularize_meter, Score};
use crate::stats::mean;
use crate::token::TokenStream;

/// HVP/HAP: fraction scoring strictly above 0.5. MVS/MAS: mean score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub hvp: f64,
    pub mvs: f64,
    pub hap: f64,
    pub mas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDifference {
    pub hvp: f64,
    pub mvs: f64,
    pub hap: f64,
    pub mas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionMetrics {
    pub happy: GroupMetrics,
    pub sad: GroupMetrics,
    /// happy - sad
    pub difference: MetricDifference,
}

fn high_fraction(scores: &[f64]) -> f64 {
    scores.iter().filter(|&&s| s > 0.5).count() as f64 / scores.len() as f64
}

pub fn group_metrics(valence: &[f64], arousal: &[f64]) -> Result<GroupMetrics, EvalError> {
    if valence.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    if valence.len() != arousal.len() {
        return Err(EvalError::LengthMismatch(valence.len(), arousal.len()));
    }
    if let Some(bad) = valence.iter().chain(arousal).find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(EvalError::Model(alloc::format!("score {bad} outside [0, 1]")));
    }
    Ok(GroupMetrics {
        n: valence.len(),
        hvp: high_fraction(valence),
        mvs: mean(valence).unwrap_or(0.0),
        hap: high_fraction(arousal),
        mas: mean(arousal).unwrap_or(0.0),
    })
}

impl EmotionMetrics {
    pub fn new(happy: GroupMetrics, sad: GroupMetrics) -> Self {
        EmotionMetrics {
            happy,
            sad,
            difference: MetricDifference {
                hvp: happy.hvp - sad.hvp,
                mvs: happy.mvs - sad.mvs,
                hap: happy.hap - sad.hap,
                mas: happy.mas - sad.mas,
            },
        }
    }
}

fn scores<C: ClassifierModel + ?Sized>(model: &C, streams: &[TokenStream]) -> Result<Vec<f64>, EvalError> {
    streams.iter().map(|s| model.score(s)).collect()
}

pub fn emotion_metrics<V, A>(
    happy: &[TokenStream],
    sad: &[TokenStream],
    valence_model: &V,
    arousal_model: &A,
) -> Result<EmotionMetrics, EvalError>
where
    V: ClassifierModel + ?Sized,
    A: ClassifierModel + ?Sized,
{
    let h = group_metrics(&scores(valence_model, happy)?, &scores(arousal_model, happy)?)?;
    let s = group_metrics(&scores(valence_model, sad)?, &scores(arousal_model, sad)?)?;
    Ok(EmotionMetrics::new(h, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopMetric {
    pub generations: usize,
    pub loops_found: usize,
    pub average_per_generation: f64,
}

/// Loops per generation; scores are regularized to 4/4 first (idempotent).
pub fn loop_metric(scores: &[Score], params: &LoopParams) -> LoopMetric {
    let loops_found: usize = scores.iter().map(|s| extract_loops(&regularize_meter(s), params).len()).sum();
    let generations = scores.len();
    let average_per_generation = if generations == 0 { 0.0 } else { loops_found as f64 / generations as f64 };
    LoopMetric { generations, loops_found, average_per_generation }
}

/// Happy / sad / difference rows per model, columns HVP MVS HAP MAS.
pub fn render_emotion_table(rows: &[(String, EmotionMetrics)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:<8} {:>8} {:>8} {:>8} {:>8}", "model", "prompt", "HVP", "MVS", "HAP", "MAS");
    for (name, m) in rows {
        for (label, g) in [("happy", m.happy), ("sad", m.sad)] {
            let _ = writeln!(s, "{name:<16} {label:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", g.hvp, g.mvs, g.hap, g.mas);
        }
        let d = m.difference;
        let _ = writeln!(s, "{name:<16} {:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", "diff", d.hvp, d.mvs, d.hap, d.mas);
    }
    s
}

pub fn render_loop_table(rows: &[(String, LoopMetric)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>11} {:>6} {:>12}", "model", "generations", "loops", "avg/gen");
    for (name, m) in rows {
        let _ = writeln!(
            s,
            "{name:<16} {:>11} {:>6} {:>12.4}",
            m.generations, m.loops_found, m.average_per_generation
        );
    }
    s
}
