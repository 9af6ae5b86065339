//! Score and token-stream files.
//!
//! A score file is either token text (`.txt`, `.tokens`) or the JSON form of
//! [`Score`] (`.json`). A corpus file holds one token stream per line.

use std::path::Path;

use moodloop_core::score::{tokens_to_score, Score};
use moodloop_core::token::{parse_tokens, Token, TokenStream};

use crate::error::{Error, Result};
use crate::fsio::{read_text, write_atomic};

pub const SCORE_EXTS: &[&str] = &["txt", "tokens", "json"];

pub fn song_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `Artist - Title` stems are split; otherwise the artist comes from the
/// score and the title is the whole stem.
pub fn artist_title(score: &Score, stem: &str) -> (String, String) {
    if let Some((a, t)) = stem.split_once(" - ") {
        return (a.trim().to_owned(), t.trim().to_owned());
    }
    let artist = score.artist.clone().unwrap_or_default();
    let title = score.title.clone().unwrap_or_else(|| stem.to_owned());
    (artist, title)
}

pub fn read_tokens(path: &Path) -> Result<TokenStream> {
    parse_tokens(&read_text(path)?).map_err(|e| Error::from(e).in_file(path))
}

pub fn write_tokens(path: &Path, stream: &TokenStream) -> Result<()> {
    write_atomic(path, format!("{stream}\n").as_bytes())
}

pub fn load_score(path: &Path) -> Result<Score> {
    let mut score = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let s: Score = serde_json::from_str(&read_text(path)?).map_err(|e| Error::from(e).in_file(path))?;
        s.validate().map_err(|e| Error::from(e).in_file(path))?;
        s
    } else {
        tokens_to_score(&read_tokens(path)?).map_err(|e| Error::from(e).in_file(path))?
    };
    let (artist, title) = artist_title(&score, &song_id(path));
    if score.title.is_none() {
        score.title = Some(title);
    }
    if score.artist.is_none() && !artist.is_empty() {
        score.artist = Some(artist);
    }
    Ok(score)
}

pub fn save_score_json(path: &Path, score: &Score) -> Result<()> {
    crate::fsio::write_json(path, score)
}

/// One stream per non-blank line; errors carry the 1-based line number.
pub fn read_corpus(path: &Path) -> Result<Vec<TokenStream>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_tokens(l).map_err(|e| Error::invalid(format!("{}: line {}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn write_corpus(path: &Path, lines: &[TokenStream]) -> Result<()> {
    let mut s = String::new();
    for l in lines {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// The first tempo token of a stream, if any.
pub fn stream_tempo(stream: &TokenStream) -> Option<u16> {
    stream.iter().find_map(|t| match t {
        Token::Tempo(b) => Some(*b),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use moodloop_core::score::{empty_score, fretted};
    use moodloop_core::token::Track;

    #[test]
    fn json_and_text_scores_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = empty_score(2, 140);
        s.measures[1].events.push(fretted(Track::Bass, 2, 3, 0, 960));
        let j = dir.path().join("Band - Song.json");
        save_score_json(&j, &s).unwrap();
        let t = dir.path().join("Band - Song.txt");
        write_tokens(&t, &moodloop_core::score::score_to_tokens(&s)).unwrap();
        let a = load_score(&j).unwrap();
        let b = load_score(&t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.artist.as_deref(), Some("Band"));
        assert_eq!(a.title.as_deref(), Some("Song"));
    }

    #[test]
    fn corpus_line_errors_are_numbered() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "start end\n\nnote:banana\n").unwrap();
        let e = read_corpus(&p).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        assert!(e.contains("c.txt"));
    }

    #[test]
    fn stem_without_separator() {
        let s = Score { artist: Some("X".into()), ..Score::default() };
        assert_eq!(artist_title(&s, "tune"), ("X".to_string(), "tune".to_string()));
    }
}
