//! Structured score model and its conversion to and from token streams.
//!
//! Durations are carried by `wait` tokens: the first `wait` after a group of
//! simultaneous notes is the duration of that group, any further `wait` before
//! the next note is a rest. The canonical rendering pads every measure with a
//! trailing rest up to its capacity, so token streams always describe full bars.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::token::{Token, TokenCategory, TokenStream, Track};
use crate::{FOUR_FOUR_CAPACITY, TICKS_PER_QUARTER};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("note at token {index} appears before the first new_measure")]
    NoteBeforeMeasure { index: usize },
    #[error("bar control at token {index} appears before the first new_measure")]
    BarControlBeforeMeasure { index: usize },
    #[error("song control at token {index} appears after the first new_measure")]
    SongControlInBody { index: usize },
    #[error("token {index}: track {track} has no string {string}")]
    NoSuchString { index: usize, track: Track, string: u8 },
    #[error("token {index}: fretted pitch exceeds 127")]
    PitchOutOfRange { index: usize },
    #[error("measure {measure}: {reason}")]
    InvalidMeasure { measure: usize, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeSignature {
    pub numerator: u8,
    pub denominator: u8,
}

impl TimeSignature {
    pub const FOUR_FOUR: TimeSignature = TimeSignature { numerator: 4, denominator: 4 };

    pub fn new(numerator: u8, denominator: u8) -> Self {
        TimeSignature { numerator, denominator }
    }

    /// Measure capacity in ticks: numerator x (3840 / denominator).
    pub fn capacity(self) -> u32 {
        u32::from(self.numerator) * (TICKS_PER_QUARTER * 4 / u32::from(self.denominator.max(1)))
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        TimeSignature::FOUR_FOUR
    }
}

/// Where a note sits on its instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteSource {
    Fretted { string: u8, fret: u8 },
    Drum,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub track: Track,
    /// Ticks from the start of the measure.
    pub onset: u32,
    pub duration: u32,
    pub midi_pitch: u8,
    pub source: NoteSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<String>,
}

impl NoteEvent {
    fn sort_key(&self) -> (u32, Track, u8, NoteSource) {
        (self.onset, self.track, self.midi_pitch, self.source)
    }

    fn token(&self) -> Token {
        match self.source {
            NoteSource::Fretted { string, fret } => Token::Note { track: self.track, string, fret },
            NoteSource::Drum => Token::Drum(self.midi_pitch),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub index: usize,
    pub time_signature: TimeSignature,
    pub tempo_bpm: u16,
    /// Bar-level control tokens, kept in cloud_diameter, cloud_momentum, tensile_strain order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<Token>,
    pub events: Vec<NoteEvent>,
}

impl Measure {
    pub fn new(index: usize, time_signature: TimeSignature, tempo_bpm: u16) -> Self {
        Measure { index, time_signature, tempo_bpm, controls: Vec::new(), events: Vec::new() }
    }

    pub fn capacity(&self) -> u32 {
        self.time_signature.capacity()
    }

    /// Latest note-off in the measure (0 when empty).
    pub fn content_end(&self) -> u32 {
        self.events.iter().map(|e| e.onset + e.duration).max().unwrap_or(0)
    }

    pub fn sort_events(&mut self) {
        self.events.sort_by_key(NoteEvent::sort_key);
    }
}

/// Open-string pitches per track, string 1 (highest) first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TuningTable(pub BTreeMap<Track, Vec<u8>>);

pub const STANDARD_GUITAR: [u8; 6] = [64, 59, 55, 50, 45, 40];
pub const STANDARD_BASS: [u8; 4] = [43, 38, 33, 28];

impl Default for TuningTable {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        for track in Track::ALL {
            match track {
                Track::Drums => {}
                Track::Bass => {
                    map.insert(track, STANDARD_BASS.to_vec());
                }
                _ => {
                    map.insert(track, STANDARD_GUITAR.to_vec());
                }
            }
        }
        TuningTable(map)
    }
}

impl TuningTable {
    pub fn open_pitch(&self, track: Track, string: u8) -> Option<u8> {
        let strings = self.0.get(&track)?;
        strings.get(usize::from(string).checked_sub(1)?).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    #[serde(default)]
    pub artist: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub song_controls: Vec<Token>,
    pub tempo_bpm: u16,
    pub time_signature: TimeSignature,
    #[serde(default)]
    pub tunings: TuningTable,
    pub measures: Vec<Measure>,
}

impl Default for Score {
    fn default() -> Self {
        Score {
            artist: None,
            title: None,
            song_controls: Vec::new(),
            tempo_bpm: 120,
            time_signature: TimeSignature::FOUR_FOUR,
            tunings: TuningTable::default(),
            measures: Vec::new(),
        }
    }
}

impl Score {
    pub fn note_count(&self) -> usize {
        self.measures.iter().map(|m| m.events.len()).sum()
    }

    pub fn sounding_ticks(&self) -> u64 {
        self.measures.iter().flat_map(|m| &m.events).map(|e| u64::from(e.duration)).sum()
    }

    /// Absolute tick at which each measure starts (cumulative capacities).
    pub fn measure_starts(&self) -> Vec<u64> {
        let mut acc = 0u64;
        self.measures
            .iter()
            .map(|m| {
                let s = acc;
                acc += u64::from(m.capacity());
                s
            })
            .collect()
    }

    pub fn total_ticks(&self) -> u64 {
        self.measures.iter().map(|m| u64::from(m.capacity())).sum()
    }

    /// Check structural invariants: gapless indices, positive durations,
    /// pitches consistent with the tuning table, events inside their measure.
    pub fn validate(&self) -> Result<(), ScoreError> {
        for (i, m) in self.measures.iter().enumerate() {
            let bad = |reason| ScoreError::InvalidMeasure { measure: i, reason };
            if m.index != i {
                return Err(bad("measure indices are not contiguous"));
            }
            if m.time_signature.numerator == 0 || m.time_signature.denominator == 0 {
                return Err(bad("time signature has a zero term"));
            }
            if m.controls.iter().any(|t| t.category() != TokenCategory::BarControl) {
                return Err(bad("non bar-control token attached to measure"));
            }
            for e in &m.events {
                if e.duration == 0 {
                    return Err(bad("note with zero duration"));
                }
                if e.onset + e.duration > m.capacity() {
                    return Err(bad("note extends past the measure capacity"));
                }
                if e.midi_pitch > 127 {
                    return Err(bad("midi pitch above 127"));
                }
                match e.source {
                    NoteSource::Drum if e.track != Track::Drums => {
                        return Err(bad("drum source on a pitched track"))
                    }
                    NoteSource::Fretted { string, fret } => {
                        let open = self
                            .tunings
                            .open_pitch(e.track, string)
                            .ok_or(bad("fret on a nonexistent string"))?;
                        if u16::from(open) + u16::from(fret) != u16::from(e.midi_pitch) {
                            return Err(bad("midi pitch inconsistent with string and fret"));
                        }
                    }
                    NoteSource::Drum => {}
                }
            }
        }
        if self.song_controls.iter().any(|t| t.category() != TokenCategory::SongControl) {
            return Err(ScoreError::InvalidMeasure { measure: 0, reason: "non song-control token in song controls" });
        }
        Ok(())
    }
}

/// Decode a token stream into a score using the default tunings.
pub fn tokens_to_score(stream: &TokenStream) -> Result<Score, ScoreError> {
    tokens_to_score_with(stream, TuningTable::default())
}

pub fn tokens_to_score_with(stream: &TokenStream, tunings: TuningTable) -> Result<Score, ScoreError> {
    let mut score = Score { tunings, ..Score::default() };
    let mut tempo = score.tempo_bpm;
    let mut ts = score.time_signature;
    let mut cursor = 0u32;
    // Index of the first event whose duration is still waiting for a `wait`.
    let mut open_group: Option<usize> = None;

    for (index, token) in stream.iter().enumerate() {
        let in_body = !score.measures.is_empty();
        match token {
            Token::Artist(a) => score.artist = Some(a.clone()),
            Token::Tempo(t) => {
                tempo = *t;
                match score.measures.last_mut() {
                    Some(m) => m.tempo_bpm = *t,
                    None => score.tempo_bpm = *t,
                }
            }
            Token::TimeSignature(n) => {
                ts = TimeSignature::new(*n, 4);
                match score.measures.last_mut() {
                    Some(m) => m.time_signature = ts,
                    None => score.time_signature = ts,
                }
            }
            Token::Start => {}
            Token::End => break,
            Token::Valence(_) | Token::Arousal(_) | Token::Mode(_) => {
                if in_body {
                    return Err(ScoreError::SongControlInBody { index });
                }
                score.song_controls.push(token.clone());
            }
            Token::NewMeasure => {
                if let Some(m) = score.measures.last_mut() {
                    close_trailing_group(m, open_group.take());
                }
                let idx = score.measures.len();
                score.measures.push(Measure::new(idx, ts, tempo));
                cursor = 0;
            }
            Token::BarControl(..) => match score.measures.last_mut() {
                Some(m) => m.controls.push(token.clone()),
                None => return Err(ScoreError::BarControlBeforeMeasure { index }),
            },
            Token::Note { track, string, fret } => {
                let open = score
                    .tunings
                    .open_pitch(*track, *string)
                    .ok_or(ScoreError::NoSuchString { index, track: *track, string: *string })?;
                let pitch = u16::from(open) + u16::from(*fret);
                if pitch > 127 {
                    return Err(ScoreError::PitchOutOfRange { index });
                }
                let m = score.measures.last_mut().ok_or(ScoreError::NoteBeforeMeasure { index })?;
                push_note(m, &mut open_group, *track, cursor, pitch as u8, NoteSource::Fretted {
                    string: *string,
                    fret: *fret,
                });
            }
            Token::Drum(midi) => {
                let m = score.measures.last_mut().ok_or(ScoreError::NoteBeforeMeasure { index })?;
                push_note(m, &mut open_group, Track::Drums, cursor, *midi, NoteSource::Drum);
            }
            Token::Wait(t) => {
                if let (Some(start), Some(m)) = (open_group.take(), score.measures.last_mut()) {
                    for e in &mut m.events[start..] {
                        e.duration = *t;
                    }
                }
                cursor = cursor.saturating_add(*t);
            }
            Token::Effect(name) => {
                // Effects attach to the most recent note of the measure; stray ones are dropped.
                if let Some(e) = score.measures.last_mut().and_then(|m| m.events.last_mut()) {
                    e.effects.push(name.clone());
                }
            }
        }
    }
    if let Some(m) = score.measures.last_mut() {
        close_trailing_group(m, open_group.take());
    }
    Ok(score)
}

fn push_note(
    m: &mut Measure,
    open_group: &mut Option<usize>,
    track: Track,
    onset: u32,
    midi_pitch: u8,
    source: NoteSource,
) {
    if open_group.is_none() {
        *open_group = Some(m.events.len());
    }
    m.events.push(NoteEvent { track, onset, duration: 0, midi_pitch, source, effects: Vec::new() });
}

/// A note group with no following `wait` lasts until the end of its measure,
/// or one beat when the measure is already full.
fn close_trailing_group(m: &mut Measure, open_group: Option<usize>) {
    if let Some(start) = open_group {
        let cap = m.capacity();
        for e in &mut m.events[start..] {
            e.duration = if e.onset < cap { cap - e.onset } else { TICKS_PER_QUARTER };
        }
    }
}

/// Encode a score in canonical order: song controls, header
/// (`time_signature`, `tempo`, `artist`, `start`), then per measure
/// `new_measure`, bar controls, tempo/meter changes, notes and waits, and
/// finally `end`.
pub fn score_to_tokens(score: &Score) -> TokenStream {
    let mut out = Vec::new();
    out.extend(score.song_controls.iter().cloned());
    out.push(Token::TimeSignature(score.time_signature.numerator));
    out.push(Token::Tempo(score.tempo_bpm));
    if let Some(a) = &score.artist {
        out.push(Token::Artist(a.clone()));
    }
    out.push(Token::Start);

    let mut tempo = score.tempo_bpm;
    let mut ts_num = score.time_signature.numerator;
    for m in &score.measures {
        out.push(Token::NewMeasure);
        let mut controls = m.controls.clone();
        controls.sort();
        out.extend(controls);
        if m.tempo_bpm != tempo {
            out.push(Token::Tempo(m.tempo_bpm));
            tempo = m.tempo_bpm;
        }
        if m.time_signature.numerator != ts_num {
            out.push(Token::TimeSignature(m.time_signature.numerator));
            ts_num = m.time_signature.numerator;
        }
        render_measure_body(m, &mut out);
    }
    out.push(Token::End);
    TokenStream(out)
}

fn render_measure_body(m: &Measure, out: &mut Vec<Token>) {
    let mut events: Vec<&NoteEvent> = m.events.iter().collect();
    events.sort_by_key(|e| e.sort_key());
    let end = m.capacity().max(m.content_end());
    let mut cursor = 0u32;
    let mut i = 0;
    while i < events.len() {
        let onset = events[i].onset;
        if onset > cursor {
            out.push(Token::Wait(onset - cursor));
        }
        let mut j = i;
        let mut group_duration = 0;
        while j < events.len() && events[j].onset == onset {
            out.push(events[j].token());
            out.extend(events[j].effects.iter().cloned().map(Token::Effect));
            group_duration = group_duration.max(events[j].duration);
            j += 1;
        }
        let next = events.get(j).map_or(end, |e| e.onset);
        let gap = next - onset;
        let d = group_duration.min(gap).max(1);
        out.push(Token::Wait(d));
        cursor = onset + d;
        i = j;
    }
    if end > cursor {
        out.push(Token::Wait(end - cursor));
    }
}

/// Rewrite every measure as 4/4. Measures longer than 3840 ticks (by meter
/// or by content) are split at 4-beat boundaries; shorter ones are padded
/// with rest. Notes crossing a split point are clipped to their new bar.
pub fn regularize_meter(score: &Score) -> Score {
    let mut out = Score {
        time_signature: TimeSignature::FOUR_FOUR,
        measures: Vec::with_capacity(score.measures.len()),
        ..score.clone()
    };
    for m in &score.measures {
        let span = m.capacity().max(m.content_end());
        let parts = span.div_ceil(FOUR_FOUR_CAPACITY).max(1) as usize;
        let base = out.measures.len();
        for p in 0..parts {
            let mut nm = Measure::new(base + p, TimeSignature::FOUR_FOUR, m.tempo_bpm);
            if p == 0 {
                nm.controls = m.controls.clone();
            }
            out.measures.push(nm);
        }
        for e in &m.events {
            let p = (e.onset / FOUR_FOUR_CAPACITY) as usize;
            let onset = e.onset - p as u32 * FOUR_FOUR_CAPACITY;
            let duration = e.duration.min(FOUR_FOUR_CAPACITY - onset);
            out.measures[base + p].events.push(NoteEvent { onset, duration, ..e.clone() });
        }
        for nm in &mut out.measures[base..] {
            nm.sort_events();
        }
    }
    out
}

/// Empty score with `n` empty 4/4 measures at the given tempo.
pub fn empty_score(n: usize, tempo_bpm: u16) -> Score {
    Score {
        tempo_bpm,
        measures: (0..n).map(|i| Measure::new(i, TimeSignature::FOUR_FOUR, tempo_bpm)).collect(),
        ..Score::default()
    }
}

/// Fretted note helper resolving the pitch through the default tuning.
pub fn fretted(track: Track, string: u8, fret: u8, onset: u32, duration: u32) -> NoteEvent {
    let open = TuningTable::default().open_pitch(track, string).unwrap_or(0);
    NoteEvent {
        track,
        onset,
        duration,
        midi_pitch: open + fret,
        source: NoteSource::Fretted { string, fret },
        effects: vec![],
    }
}
