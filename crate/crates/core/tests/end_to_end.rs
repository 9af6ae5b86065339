use moodloop_core::annotate::{build_corpus, AnnotationRecord, CorpusConfig, SongInput};
use moodloop_core::generate::{build_prompt, sample_sequence, train_generator, Emotion, SamplingConstraints};
use moodloop_core::loops::{extract_loops, LoopParams};
use moodloop_core::score::{empty_score, fretted, tokens_to_score};
use moodloop_core::tension::{tension_of_clouds, SpiralParams};
use moodloop_core::token::{parse_tokens, Level, Mode, Token, Track};
use moodloop_core::Score;
use proptest::prelude::*;

const BAR: u32 = 3840;

/// Eight bars: a four-bar phrase built from `frets` (one bar per entry,
/// four quarter notes on the top string) played twice.
fn phrase_song(frets: [[u8; 4]; 4], tempo: u16) -> Score {
    let mut s = empty_score(8, tempo);
    for (b, bar) in frets.iter().enumerate() {
        for copy in [b, b + 4] {
            s.measures[copy].events =
                bar.iter().enumerate().map(|(q, &f)| fretted(Track::Leads, 1, f, q as u32 * 960, 960)).collect();
            s.measures[copy].events.push(fretted(Track::Bass, 4, bar[0] % 5, 0, BAR));
        }
    }
    s
}

fn songs() -> Vec<SongInput> {
    let bank = [[0u8, 3, 5, 7], [2, 4, 5, 9], [7, 5, 3, 0], [1, 3, 6, 8], [0, 0, 5, 5], [8, 7, 3, 2]];
    (0..6)
        .map(|i| {
            let frets = [bank[i], bank[(i + 1) % 6], bank[(i + 2) % 6], bank[(i + 3) % 6]];
            let happy = i % 2 == 0;
            SongInput {
                id: format!("song{i}"),
                score: phrase_song(frets, if happy { 170 } else { 70 }),
                record: Some(AnnotationRecord {
                    artist: "a".into(),
                    title: format!("t{i}"),
                    valence: 0.1 * (i + 1) as f64,
                    energy: if happy { 0.9 } else { 0.2 },
                    mode: if happy { Mode::Major } else { Mode::Minor },
                }),
            }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn corpus_lines_carry_median_split_labels_and_reparse() {
    let songs = songs();
    let corpus = build_corpus(&songs, &CorpusConfig::default()).unwrap();
    // each song is one phrase played twice: exactly one 4-bar loop apiece
    assert_eq!(corpus.lines.len(), 6);
    let cut = median(songs.iter().map(|s| s.record.as_ref().unwrap().valence).collect());
    for (line, song) in corpus.lines.iter().zip(&songs) {
        assert_eq!(line.song, song.id);
        assert_eq!((line.span.start_bar, line.span.end_bar), (0, 4));
        let want = if song.record.as_ref().unwrap().valence >= cut { Level::High } else { Level::Low };
        assert_eq!(line.stream.0[0], Token::Valence(want));
        assert_eq!(line.stream.measure_count(), 4);
    }
    let text = corpus.render();
    let reparsed: Vec<_> = text.lines().map(|l| parse_tokens(l).unwrap()).collect();
    assert_eq!(reparsed, corpus.lines.iter().map(|l| l.stream.clone()).collect::<Vec<_>>());
}

#[test]
fn generated_streams_are_valid_scores_with_admissible_tempo() {
    let corpus = build_corpus(&songs(), &CorpusConfig::default()).unwrap();
    let lines: Vec<_> = corpus.lines.iter().map(|l| l.stream.clone()).collect();
    let model = train_generator(&lines, 4, 0.05).unwrap();
    for emotion in Emotion::ALL {
        for seed in 0..25 {
            let mut c = SamplingConstraints::new(emotion, seed);
            c.max_bars = 8;
            let out = sample_sequence(&model, &build_prompt(emotion), &c).unwrap();
            assert_eq!(out.0.last(), Some(&Token::End));
            assert_eq!(parse_tokens(&out.to_string()).unwrap(), out);
            let score = tokens_to_score(&out).unwrap();
            assert!(score.measures.len() <= 8);
            assert!(score.measures.iter().all(|m| emotion.tempo_admissible(m.tempo_bpm)));
            let again = sample_sequence(&model, &build_prompt(emotion), &c).unwrap();
            assert_eq!(again, out);
        }
    }
}

#[test]
fn loop_found_in_a_song_is_found_again_in_its_doubled_splice() {
    let song = &songs()[1].score;
    let params = LoopParams::default();
    let span = extract_loops(song, &params)[0];
    let mut doubled = empty_score(8, 70);
    for i in 0..8 {
        doubled.measures[i].events = song.measures[span.start_bar + i % 4].events.clone();
    }
    assert!(extract_loops(&doubled, &params).iter().any(|s| (s.start_bar, s.end_bar) == (0, 4)));
}

/// Helix point straight from its definition, independent of the crate.
fn helix(k: i32) -> [f64; 3] {
    let a = f64::from(k) * std::f64::consts::FRAC_PI_2;
    [a.sin(), a.cos(), f64::from(k) * (2.0f64 / 15.0).sqrt()]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

proptest! {
    #[test]
    fn diameter_matches_helix_and_is_transposition_invariant(
        ks in prop::collection::vec(-8i32..8, 1..6),
        shift in -6i32..6,
    ) {
        let params = SpiralParams::default();
        let cloud = |s: i32| ks.iter().map(|&k| (k + s, 1.0)).collect::<Vec<_>>();
        let p = tension_of_clouds(&[cloud(0), cloud(shift)], None, &params);
        let mut oracle = 0.0f64;
        for &a in &ks {
            for &b in &ks {
                oracle = oracle.max(dist(helix(a), helix(b)));
            }
        }
        prop_assert!((p.bars[0].cloud_diameter - oracle).abs() < 1e-9);
        prop_assert!((p.bars[1].cloud_diameter - oracle).abs() < 1e-9);
        // centre moves by the shift's own helix displacement magnitude only when shift is 0 mod 4
        if shift.rem_euclid(4) == 0 {
            prop_assert!((p.bars[1].cloud_momentum - f64::from(shift.abs()) * (2.0f64 / 15.0).sqrt()).abs() < 1e-9);
        }
    }
}
