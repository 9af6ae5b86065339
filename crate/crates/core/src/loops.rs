//! Repeat detection with a correlative matrix and bar-aligned loop extraction.
//!
//! The score is flattened to one fingerprint per distinct onset. Cell
//! `M[i][j]` (`i < j`) of the correlative matrix counts how many consecutive
//! fingerprints ending at `i` and `j` are equal, so every maximal diagonal run
//! is a repeated segment. A run becomes a loop when both of its occurrences
//! start on a bar line; the loop body spans from the first occurrence's bar
//! up to the second occurrence's bar.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::score::{Measure, Score};
use crate::token::Track;
use crate::TICKS_PER_QUARTER;

/// Longest fingerprint sequence fed to the O(n^2) matrix.
pub const MAX_EVENTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoopError {
    #[error("span [{start}, {end}) is outside a score of {bars} bars")]
    SpanOutOfRange { start: usize, end: usize, bars: usize },
    #[error("invalid loop parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopParams {
    pub min_rep_notes: usize,
    /// Quarter-note beats.
    pub min_rep_beats: u32,
    pub min_loop_bars: usize,
    pub max_loop_bars: usize,
    /// Report spans that overlap each other; when false, later overlapping spans are dropped.
    pub allow_overlap: bool,
}

impl Default for LoopParams {
    fn default() -> Self {
        LoopParams { min_rep_notes: 4, min_rep_beats: 2, min_loop_bars: 4, max_loop_bars: 4, allow_overlap: true }
    }
}

impl LoopParams {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.min_rep_notes == 0 || self.min_rep_beats == 0 || self.min_loop_bars == 0 {
            return Err(LoopError::InvalidParams("parameters must be positive"));
        }
        if self.min_loop_bars > self.max_loop_bars {
            return Err(LoopError::InvalidParams("min_loop_bars exceeds max_loop_bars"));
        }
        Ok(())
    }
}

/// Identity of one onset: the sorted notes starting there and the gap to the next onset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fingerprint {
    pub notes: Vec<(Track, u8, u32)>,
    pub gap: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerprintEvent {
    pub fingerprint: Fingerprint,
    pub bar: usize,
    /// Ticks from the start of the bar.
    pub offset: u32,
}

impl FingerprintEvent {
    pub fn on_bar_line(&self) -> bool {
        self.offset == 0
    }

    /// Position in quarter-note beats within the bar.
    pub fn beat(&self) -> f64 {
        f64::from(self.offset) / f64::from(TICKS_PER_QUARTER)
    }
}

/// One fingerprint per distinct onset, all tracks merged, in time order.
/// The last onset's gap runs to the end of the final bar.
pub fn fingerprint_sequence(score: &Score) -> Vec<FingerprintEvent> {
    let starts = score.measure_starts();
    let mut out: Vec<(u64, FingerprintEvent)> = Vec::new();
    for (bar, m) in score.measures.iter().enumerate() {
        let mut groups: BTreeMap<u32, Vec<(Track, u8, u32)>> = BTreeMap::new();
        for e in &m.events {
            groups.entry(e.onset).or_default().push((e.track, e.midi_pitch, e.duration));
        }
        for (offset, mut notes) in groups {
            notes.sort_unstable();
            notes.dedup();
            out.push((
                starts[bar] + u64::from(offset),
                FingerprintEvent { fingerprint: Fingerprint { notes, gap: 0 }, bar, offset },
            ));
        }
    }
    let end = score.total_ticks();
    let onsets: Vec<u64> = out.iter().map(|(t, _)| *t).collect();
    out.into_iter()
        .enumerate()
        .map(|(i, (t, mut ev))| {
            let next = onsets.get(i + 1).copied().unwrap_or(end);
            ev.fingerprint.gap = next.saturating_sub(t);
            ev
        })
        .collect()
}

/// Map fingerprints to dense ids in order of first appearance.
pub fn intern(seq: &[FingerprintEvent]) -> Vec<u32> {
    let mut ids: BTreeMap<&Fingerprint, u32> = BTreeMap::new();
    seq.iter()
        .map(|e| {
            let next = ids.len() as u32;
            *ids.entry(&e.fingerprint).or_insert(next)
        })
        .collect()
}

/// Upper-triangular run-length matrix, stored packed row by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelativeMatrix {
    n: usize,
    cells: Vec<u32>,
}

impl CorrelativeMatrix {
    pub fn from_ids(ids: &[u32]) -> Self {
        let n = ids.len();
        let mut m = CorrelativeMatrix { n, cells: alloc::vec![0; n * n.saturating_sub(1) / 2] };
        for i in 0..n {
            for j in i + 1..n {
                if ids[i] == ids[j] {
                    let prev = if i == 0 { 0 } else { m.get(i - 1, j - 1) };
                    let idx = m.index(i, j);
                    m.cells[idx] = prev + 1;
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// `M[i][j]`; 0 on and below the diagonal.
    pub fn get(&self, i: usize, j: usize) -> u32 {
        if i >= j || j >= self.n {
            0
        } else {
            self.cells[self.index(i, j)]
        }
    }
}

pub fn build_correlative_matrix(seq: &[FingerprintEvent]) -> CorrelativeMatrix {
    CorrelativeMatrix::from_ids(&intern(seq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Repetition {
    pub first_start: usize,
    pub second_start: usize,
    pub length: usize,
}

/// Maximal diagonal runs of at least `min_rep_notes` events whose repeated
/// segment lasts at least `min_rep_beats` quarter notes. Overlapping
/// occurrences (period shorter than the run) are kept.
pub fn find_repetitions(matrix: &CorrelativeMatrix, seq: &[FingerprintEvent], params: &LoopParams) -> Vec<Repetition> {
    let n = matrix.len();
    let min_ticks = u64::from(params.min_rep_beats) * u64::from(TICKS_PER_QUARTER);
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let run = matrix.get(i, j) as usize;
            if run == 0 || (j + 1 < n && matrix.get(i + 1, j + 1) != 0) {
                continue;
            }
            if run < params.min_rep_notes {
                continue;
            }
            let first_start = i + 1 - run;
            let ticks: u64 = seq[first_start..=i].iter().map(|e| e.fingerprint.gap).sum();
            if ticks >= min_ticks {
                out.push(Repetition { first_start, second_start: j + 1 - run, length: run });
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LoopSpan {
    pub start_bar: usize,
    /// Exclusive.
    pub end_bar: usize,
    pub repetition_length_events: usize,
}

impl LoopSpan {
    pub fn bars(&self) -> usize {
        self.end_bar - self.start_bar
    }
}

/// Bar-aligned loops of a (4/4-regularized) score, sorted by start bar.
pub fn extract_loops(score: &Score, params: &LoopParams) -> Vec<LoopSpan> {
    let mut seq = fingerprint_sequence(score);
    if seq.len() > MAX_EVENTS {
        log::warn!("loop search truncated from {} to {} events", seq.len(), MAX_EVENTS);
        seq.truncate(MAX_EVENTS);
    }
    let matrix = build_correlative_matrix(&seq);
    let reps = find_repetitions(&matrix, &seq, params);
    loops_from_repetitions(&reps, &seq, params)
}

/// Keep repetitions whose two occurrences both start on a bar line and whose
/// body length is within the bar limits; merge identical spans.
pub fn loops_from_repetitions(reps: &[Repetition], seq: &[FingerprintEvent], params: &LoopParams) -> Vec<LoopSpan> {
    let mut spans: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in reps {
        let (a, b) = (&seq[r.first_start], &seq[r.second_start]);
        if !a.on_bar_line() || !b.on_bar_line() {
            continue;
        }
        let bars = b.bar - a.bar;
        if bars < params.min_loop_bars || bars > params.max_loop_bars {
            continue;
        }
        let len = spans.entry((a.bar, b.bar)).or_insert(0);
        *len = (*len).max(r.length);
    }
    let mut out: Vec<LoopSpan> = Vec::with_capacity(spans.len());
    for ((start_bar, end_bar), repetition_length_events) in spans {
        let span = LoopSpan { start_bar, end_bar, repetition_length_events };
        if !params.allow_overlap && out.iter().any(|s| s.start_bar < end_bar && start_bar < s.end_bar) {
            continue;
        }
        out.push(span);
    }
    out
}

/// Copy bars `[start_bar, end_bar)` into a new score with bar indices from 0.
pub fn splice_loop(score: &Score, span: &LoopSpan) -> Result<Score, LoopError> {
    splice_bars(score, span.start_bar, span.end_bar)
}

pub fn splice_bars(score: &Score, start: usize, end: usize) -> Result<Score, LoopError> {
    let bars = score.measures.len();
    if start >= end || end > bars {
        return Err(LoopError::SpanOutOfRange { start, end, bars });
    }
    let measures: Vec<Measure> = score.measures[start..end]
        .iter()
        .enumerate()
        .map(|(i, m)| Measure { index: i, ..m.clone() })
        .collect();
    Ok(Score {
        tempo_bpm: measures[0].tempo_bpm,
        time_signature: measures[0].time_signature,
        measures,
        ..score.clone()
    })
}
