//! Synthetic scores, corpora and an independent loop oracle shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use moodloop::annotations::write_annotations;
use moodloop::scorefile::save_score_json;
use moodloop_core::annotate::AnnotationRecord;
use moodloop_core::generate::Emotion;
use moodloop_core::loops::{LoopParams, LoopSpan};
use moodloop_core::score::{empty_score, fretted, Measure, NoteEvent, NoteSource, Score, TimeSignature};
use moodloop_core::token::{Mode, Token, Track};
use rand::seq::SliceRandom;
use rand::Rng;

pub const BAR: u32 = 3840;
const EIGHTH: u32 = 480;

/// A fretted note sounding `pitch` on a guitar-tuned track (E2..) or bass.
pub fn note_at(track: Track, pitch: u8, onset: u32, duration: u32) -> NoteEvent {
    let (string, open) = match track {
        Track::Bass => (4, 28),
        _ if pitch >= 64 => (1, 64),
        _ if pitch >= 59 => (2, 59),
        _ if pitch >= 50 => (4, 50),
        _ => (6, 40),
    };
    fretted(track, string, pitch - open, onset, duration)
}

/// Any valid score: random meter (3/4 or 4/4 per bar), tempo changes, chords,
/// drums and effects.
pub fn random_score(rng: &mut impl Rng, max_bars: usize) -> Score {
    let bars = rng.gen_range(1..=max_bars);
    let tempo = rng.gen_range(30..=250);
    let mut s = empty_score(bars, tempo);
    if rng.gen_bool(0.5) {
        s.artist = Some(format!("artist_{}", rng.gen_range(0..100)));
    }
    let tracks = [Track::Distorted(0), Track::Clean(1), Track::Bass, Track::Leads];
    for m in &mut s.measures {
        if rng.gen_bool(0.2) {
            m.time_signature = TimeSignature::new(3, 4);
        }
        if rng.gen_bool(0.1) {
            m.tempo_bpm = rng.gen_range(30..=250);
        }
        let cap = m.capacity();
        let mut onset = 0;
        while onset < cap && rng.gen_bool(0.85) {
            let mut strings = BTreeSet::new();
            let dur = EIGHTH * rng.gen_range(1..=4);
            for _ in 0..rng.gen_range(1..=3) {
                let track = *tracks.choose(rng).unwrap();
                let string = if track == Track::Bass { rng.gen_range(1..=4) } else { rng.gen_range(1..=6) };
                if strings.insert((track, string)) {
                    let mut e = fretted(track, string, rng.gen_range(0..=20), onset, dur.min(cap - onset));
                    if rng.gen_bool(0.1) {
                        e.effects.push("palm_mute".into());
                    }
                    m.events.push(e);
                }
            }
            if rng.gen_bool(0.2) {
                m.events.push(NoteEvent {
                    track: Track::Drums,
                    onset,
                    duration: dur.min(cap - onset),
                    midi_pitch: *[36u8, 38, 42, 49].choose(rng).unwrap(),
                    source: NoteSource::Drum,
                    effects: vec![],
                });
            }
            onset += EIGHTH * rng.gen_range(1..=4);
        }
        m.sort_events();
    }
    s
}

fn random_bar(rng: &mut impl Rng, index: usize) -> Measure {
    let mut m = Measure::new(index, TimeSignature::FOUR_FOUR, 120);
    let mut onset = 0;
    while onset < BAR {
        let step = EIGHTH * rng.gen_range(1..=3);
        if rng.gen_bool(0.8) {
            let pitch = *[60u8, 62, 64, 65, 67].choose(rng).unwrap();
            m.events.push(note_at(Track::Leads, pitch, onset, step.min(BAR - onset)));
        }
        onset += step;
    }
    m
}

/// 4/4 score of at most 32 bars drawn from a small pool of bar patterns (so
/// accidental repeats happen), with one planted block copy.
pub fn planted_score(rng: &mut impl Rng) -> Score {
    let bars = rng.gen_range(4..=32);
    let pool: Vec<Measure> = (0..rng.gen_range(2..=6)).map(|_| random_bar(rng, 0)).collect();
    let mut s = empty_score(bars, 120);
    for (i, m) in s.measures.iter_mut().enumerate() {
        *m = Measure { index: i, ..pool.choose(rng).unwrap().clone() };
    }
    let len = rng.gen_range(1..=bars / 2);
    let from = rng.gen_range(0..=bars - 2 * len);
    let to = rng.gen_range(from + len..=bars - len);
    for k in 0..len {
        s.measures[to + k] = Measure { index: to + k, ..s.measures[from + k].clone() };
    }
    s
}

/// Brute-force loop search straight from the definition: every pair of
/// onset positions, common continuation measured by direct comparison.
pub fn oracle_loops(score: &Score, params: &LoopParams) -> BTreeSet<LoopSpan> {
    type Notes = Vec<(Track, u8, u32)>;
    type Fp = (Notes, u64);
    let mut onsets: BTreeMap<u64, (usize, u32, Notes)> = BTreeMap::new();
    let mut start = 0u64;
    for (bar, m) in score.measures.iter().enumerate() {
        for e in &m.events {
            let slot = onsets.entry(start + u64::from(e.onset)).or_insert((bar, e.onset, vec![]));
            slot.2.push((e.track, e.midi_pitch, e.duration));
        }
        start += u64::from(m.capacity());
    }
    let end = start;
    let times: Vec<u64> = onsets.keys().copied().collect();
    let events: Vec<(usize, u32, Fp)> = onsets
        .into_values()
        .enumerate()
        .map(|(i, (bar, off, mut notes))| {
            notes.sort();
            notes.dedup();
            let gap = times.get(i + 1).copied().unwrap_or(end) - times[i];
            (bar, off, (notes, gap))
        })
        .collect();
    let n = events.len();
    let mut spans: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            if i > 0 && events[i - 1].2 == events[j - 1].2 {
                continue;
            }
            let mut len = 0;
            while j + len < n && events[i + len].2 == events[j + len].2 {
                len += 1;
            }
            let ticks: u64 = (i..i + len).map(|k| events[k].2 .1).sum();
            if len < params.min_rep_notes || ticks < u64::from(params.min_rep_beats) * 960 {
                continue;
            }
            if events[i].1 != 0 || events[j].1 != 0 {
                continue;
            }
            let bars = events[j].0 - events[i].0;
            if bars < params.min_loop_bars || bars > params.max_loop_bars {
                continue;
            }
            let e = spans.entry((events[i].0, events[j].0)).or_insert(0);
            *e = (*e).max(len);
        }
    }
    let mut kept: Vec<LoopSpan> = Vec::new();
    for ((start_bar, end_bar), len) in spans {
        if !params.allow_overlap && kept.iter().any(|k| k.start_bar < end_bar && start_bar < k.end_bar) {
            continue;
        }
        kept.push(LoopSpan { start_bar, end_bar, repetition_length_events: len });
    }
    kept.into_iter().collect()
}

/// Triad pitch classes (root, third, fifth) over a tonic, as MIDI offsets.
fn triad(root: u8, mode: Mode) -> [u8; 3] {
    match mode {
        Mode::Major => [root, root + 4, root + 7],
        Mode::Minor => [root, root + 3, root + 7],
    }
}

/// Four-bar I-IV-V-I (or i-iv-v-i) phrase played twice; happy songs are
/// major and fast, sad songs minor and slow.
pub fn emotion_song(rng: &mut impl Rng, emotion: Emotion) -> Score {
    let (mode, tempo) = match emotion {
        Emotion::Happy => (Mode::Major, rng.gen_range(160..=180)),
        Emotion::Sad => (Mode::Minor, rng.gen_range(60..=90)),
    };
    let tonic = rng.gen_range(0..12u8);
    let rhythm: Vec<u32> = match emotion {
        Emotion::Happy => vec![EIGHTH; 8],
        Emotion::Sad => vec![2 * EIGHTH, 2 * EIGHTH, 4 * EIGHTH],
    };
    let mut s = empty_score(8, tempo);
    for (b, degree) in [0u8, 5, 7, 0].iter().enumerate() {
        let chord = triad(tonic + degree, mode);
        let mut phrase = Vec::new();
        let mut onset = 0;
        for (k, d) in rhythm.iter().enumerate() {
            let pc = chord[(k + b) % 3];
            phrase.push(note_at(Track::Leads, 60 + pc % 12 + if pc % 12 < 4 { 12 } else { 0 }, onset, *d));
            onset += d;
        }
        phrase.push(note_at(Track::Bass, 28 + 12 + chord[0] % 12, 0, BAR));
        for copy in [b, b + 4] {
            s.measures[copy].events = phrase.clone();
            s.measures[copy].sort_events();
        }
    }
    s
}

pub fn emotion_record(rng: &mut impl Rng, emotion: Emotion, artist: &str, title: &str) -> AnnotationRecord {
    let (lo, hi, mode) = match emotion {
        Emotion::Happy => (0.6, 1.0, Mode::Major),
        Emotion::Sad => (0.0, 0.4, Mode::Minor),
    };
    AnnotationRecord {
        artist: artist.into(),
        title: title.into(),
        valence: rng.gen_range(lo..hi),
        energy: rng.gen_range(lo..hi),
        mode,
    }
}

/// `per_class` happy and sad songs as `Artist - Title.json` files plus the
/// matching annotations CSV.
pub fn write_emotion_fixture(dir: &Path, per_class: usize, rng: &mut impl Rng) {
    let scores = dir.join("scores");
    std::fs::create_dir_all(&scores).unwrap();
    let mut records = Vec::new();
    for i in 0..per_class {
        for e in Emotion::ALL {
            let (artist, title) = (format!("band{}", i % 5), format!("{} song {i}", e.name()));
            save_score_json(&scores.join(format!("{artist} - {title}.json")), &emotion_song(rng, e)).unwrap();
            records.push(emotion_record(rng, e, &artist, &title));
        }
    }
    write_annotations(&dir.join("annotations.csv"), &records).unwrap();
}

/// First tempo token of a stream.
pub fn tempo_of(tokens: &[Token]) -> Option<u16> {
    tokens.iter().find_map(|t| match t {
        Token::Tempo(b) => Some(*b),
        _ => None,
    })
}
