//! Song-level labels, control tokens and training-corpus assembly.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::loops::{extract_loops, splice_loop, LoopParams, LoopSpan};
use crate::score::{regularize_meter, score_to_tokens, Score};
use crate::stats::median;
use crate::tension::{
    compute_tension_profile, discretize_profile, fit_tension_thresholds, BarLevels, SpiralParams, TensionError,
    TensionProfile, TensionThresholds,
};
use crate::token::{Level, Mode, Token, TokenCategory, TokenStream};

/// Medians of the fully matched reference corpus (valence, arousal).
pub const REFERENCE_THRESHOLDS: FeatureThresholds = FeatureThresholds { valence_median: 0.433, arousal_median: 0.846 };

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotateError {
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("unknown mode {0:?} (expected major, minor, 1 or 0)")]
    UnknownMode(String),
    #[error("no annotation records")]
    Empty,
    #[error("stream has {bars} bars but the profile has {profile}")]
    BarCountMismatch { bars: usize, profile: usize },
    #[error("stream already carries control tokens")]
    AlreadyControlled,
    #[error("corpus is empty: no annotated song produced a loop")]
    EmptyCorpus,
    #[error(transparent)]
    Tension(#[from] TensionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub artist: String,
    pub title: String,
    pub valence: f64,
    /// Audio energy, used as the arousal value.
    pub energy: f64,
    pub mode: Mode,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        for (field, value) in [("valence", self.valence), ("energy", self.energy)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AnnotateError::OutOfRange { field, value });
            }
        }
        Ok(())
    }

    pub fn key(&self) -> String {
        match_key(&self.artist, &self.title)
    }
}

/// `major`, `minor`, `1` (major) or `0` (minor), case-insensitive.
pub fn parse_mode(s: &str) -> Result<Mode, AnnotateError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "major" | "1" => Ok(Mode::Major),
        "minor" | "0" => Ok(Mode::Minor),
        _ => Err(AnnotateError::UnknownMode(s.to_owned())),
    }
}

/// Lookup key: case-folded, whitespace-collapsed `artist\ttitle`.
pub fn match_key(artist: &str, title: &str) -> String {
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut k = norm(artist);
    k.push('\t');
    k.push_str(&norm(title));
    k
}

/// Collapse records sharing a key; the last occurrence wins but keeps the
/// first occurrence's position. Returns the positions of overridden rows.
pub fn dedupe_records(records: Vec<AnnotationRecord>) -> (Vec<AnnotationRecord>, Vec<usize>) {
    let mut slot: BTreeMap<String, usize> = BTreeMap::new();
    let mut out: Vec<AnnotationRecord> = Vec::new();
    let mut overridden = Vec::new();
    for (i, r) in records.into_iter().enumerate() {
        match slot.get(&r.key()) {
            Some(&s) => {
                out[s] = r;
                overridden.push(i);
            }
            None => {
                slot.insert(r.key(), out.len());
                out.push(r);
            }
        }
    }
    (out, overridden)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureThresholds {
    pub valence_median: f64,
    pub arousal_median: f64,
}

/// Medians (interpolated for even counts) of valence and energy.
pub fn compute_thresholds(records: &[AnnotationRecord]) -> Result<FeatureThresholds, AnnotateError> {
    let v: Vec<f64> = records.iter().map(|r| r.valence).collect();
    let e: Vec<f64> = records.iter().map(|r| r.energy).collect();
    Ok(FeatureThresholds {
        valence_median: median(&v).ok_or(AnnotateError::Empty)?,
        arousal_median: median(&e).ok_or(AnnotateError::Empty)?,
    })
}

fn level(value: f64, threshold: f64) -> Level {
    if value >= threshold {
        Level::High
    } else {
        Level::Low
    }
}

/// `[valence:*, arousal:*, mode:*]`; a value equal to its threshold is high.
pub fn song_control_tokens(record: &AnnotationRecord, thresholds: &FeatureThresholds) -> Vec<Token> {
    alloc::vec![
        Token::Valence(level(record.valence, thresholds.valence_median)),
        Token::Arousal(level(record.energy, thresholds.arousal_median)),
        Token::Mode(record.mode),
    ]
}

/// Which control-token groups a corpus or prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlGroups {
    /// `valence:*` and `arousal:*`.
    pub emotion_labels: bool,
    /// `mode:*` and the tempo constraint at sampling time.
    pub psych_features: bool,
    /// Bar-level tension tokens.
    pub tonal_tension: bool,
}

impl Default for ControlGroups {
    fn default() -> Self {
        ControlGroups::ALL
    }
}

impl ControlGroups {
    pub const ALL: ControlGroups = ControlGroups { emotion_labels: true, psych_features: true, tonal_tension: true };

    pub fn keeps(&self, token: &Token) -> bool {
        match token {
            Token::Valence(_) | Token::Arousal(_) => self.emotion_labels,
            Token::Mode(_) => self.psych_features,
            Token::BarControl(..) => self.tonal_tension,
            _ => true,
        }
    }

    /// Named ablations: `el`, `mpf`, `tt` drop one group.
    pub fn without(name: &str) -> Option<ControlGroups> {
        let mut g = ControlGroups::ALL;
        match name {
            "el" => g.emotion_labels = false,
            "mpf" => g.psych_features = false,
            "tt" => g.tonal_tension = false,
            "none" | "" => {}
            _ => return None,
        }
        Some(g)
    }
}

/// Prepend song tokens and put each bar's three tension tokens right after
/// its `new_measure`, in cloud_diameter, cloud_momentum, tensile_strain order.
pub fn inject_controls(
    stream: &TokenStream,
    song_tokens: &[Token],
    levels: &[BarLevels],
) -> Result<TokenStream, AnnotateError> {
    if stream.iter().any(Token::is_control) {
        return Err(AnnotateError::AlreadyControlled);
    }
    let bars = stream.measure_count();
    if bars != levels.len() {
        return Err(AnnotateError::BarCountMismatch { bars, profile: levels.len() });
    }
    let mut out = Vec::with_capacity(stream.len() + song_tokens.len() + 3 * bars);
    out.extend_from_slice(song_tokens);
    let mut bar = 0;
    for t in stream.iter() {
        out.push(t.clone());
        if *t == Token::NewMeasure {
            out.extend(levels[bar].tokens());
            bar += 1;
        }
    }
    Ok(TokenStream(out))
}

pub fn prepend_song_controls(stream: &TokenStream, song_tokens: &[Token]) -> TokenStream {
    TokenStream(song_tokens.iter().chain(stream.iter()).cloned().collect())
}

/// Remove every song- and bar-level control token.
pub fn strip_controls(stream: &TokenStream) -> TokenStream {
    TokenStream(stream.iter().filter(|t| !t.is_control()).cloned().collect())
}

/// Drop the control tokens of disabled groups.
pub fn filter_controls(stream: &TokenStream, groups: &ControlGroups) -> TokenStream {
    TokenStream(stream.iter().filter(|t| groups.keeps(t)).cloned().collect())
}

/// Label carried by a stream's song controls.
pub fn stream_levels(stream: &TokenStream) -> (Option<Level>, Option<Level>, Option<Mode>) {
    let mut out = (None, None, None);
    for t in stream.iter().take_while(|t| t.category() != TokenCategory::Structure) {
        match t {
            Token::Valence(l) => out.0 = Some(*l),
            Token::Arousal(l) => out.1 = Some(*l),
            Token::Mode(m) => out.2 = Some(*m),
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongInput {
    pub id: String,
    pub score: Score,
    pub record: Option<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusConfig {
    pub loop_params: LoopParams,
    pub spiral: SpiralParams,
    pub groups: ControlGroups,
    /// Fixed label thresholds; fitted from the annotated songs when `None`.
    pub feature_thresholds: Option<FeatureThresholds>,
    /// Fixed tension thresholds; fitted from all spliced bars when `None`.
    pub tension_thresholds: Option<TensionThresholds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusLine {
    pub song: String,
    pub span: LoopSpan,
    pub stream: TokenStream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub lines: Vec<CorpusLine>,
    pub feature_thresholds: FeatureThresholds,
    pub tension_thresholds: TensionThresholds,
    pub skipped_unannotated: usize,
    pub skipped_no_loops: usize,
}

impl Corpus {
    /// One token line per example, newline-terminated.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(&l.stream.to_string());
            s.push('\n');
        }
        s
    }
}

fn without_controls(score: &Score) -> Score {
    let mut s = score.clone();
    s.song_controls.clear();
    for m in &mut s.measures {
        m.controls.clear();
    }
    s
}

/// Regularize, extract loops, measure tension on the whole song, fit global
/// quartiles over every spliced bar, then emit one controlled stream per loop.
pub fn build_corpus(songs: &[SongInput], config: &CorpusConfig) -> Result<Corpus, AnnotateError> {
    let mut skipped_unannotated = 0;
    let mut skipped_no_loops = 0;
    let mut records = Vec::new();
    let mut pending: Vec<(&SongInput, LoopSpan, Score, TensionProfile)> = Vec::new();

    for song in songs {
        let Some(record) = &song.record else {
            skipped_unannotated += 1;
            continue;
        };
        record.validate()?;
        records.push(record.clone());
        let score = regularize_meter(&without_controls(&song.score));
        let spans = extract_loops(&score, &config.loop_params);
        if spans.is_empty() {
            skipped_no_loops += 1;
            continue;
        }
        let profile = compute_tension_profile(&score, &config.spiral);
        for span in spans {
            let spliced = splice_loop(&score, &span).expect("extracted spans are in range");
            pending.push((song, span, spliced, profile.slice(span.start_bar, span.end_bar)));
        }
    }
    if pending.is_empty() {
        return Err(AnnotateError::EmptyCorpus);
    }

    let feature_thresholds = match config.feature_thresholds {
        Some(t) => t,
        None => compute_thresholds(&records)?,
    };
    let tension_thresholds = match config.tension_thresholds {
        Some(t) => t,
        None => fit_tension_thresholds(pending.iter().flat_map(|p| p.3.bars.iter()))?,
    };

    let lines = pending
        .into_iter()
        .map(|(song, span, spliced, profile)| {
            let record = song.record.as_ref().expect("annotated");
            let song_tokens: Vec<Token> = song_control_tokens(record, &feature_thresholds)
                .into_iter()
                .filter(|t| config.groups.keeps(t))
                .collect();
            let stream = score_to_tokens(&spliced);
            let stream = if config.groups.tonal_tension {
                let levels = discretize_profile(&profile, &tension_thresholds).levels().expect("discretized");
                inject_controls(&stream, &song_tokens, &levels)?
            } else {
                prepend_song_controls(&stream, &song_tokens)
            };
            Ok(CorpusLine { song: song.id.clone(), span, stream })
        })
        .collect::<Result<Vec<_>, AnnotateError>>()?;

    Ok(Corpus { lines, feature_thresholds, tension_thresholds, skipped_unannotated, skipped_no_loops })
}
