//! Token grammar for tablature sequences.
//!
//! A stream is a list of ASCII tokens separated by whitespace. The accepted
//! vocabulary is a DadaGP-compatible subset:
//!
//! | category    | tokens |
//! |-------------|--------|
//! | header      | `artist:<str>` `tempo:<int>` `time_signature:<int>` `start` `end` |
//! | song control| `valence:high\|low` `arousal:high\|low` `mode:major\|minor` |
//! | structure   | `new_measure` |
//! | bar control | `cloud_diameter:q1..q4` `cloud_momentum:q1..q4` `tensile_strain:q1..q4` |
//! | note        | `<track>:note:s<string>:f<fret>`, `drums:note:<midi>` |
//! | wait        | `wait:<ticks>` |
//! | effect      | `nfx:<name>` |
//!
//! Integers must be written canonically (no sign, no leading zeros) so that
//! rendering a parsed token always reproduces its text.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MIN_TEMPO: u16 = 30;
pub const MAX_TEMPO: u16 = 300;
pub const MAX_FRET: u8 = 30;
pub const MAX_STRING: u8 = 12;
pub const MAX_TIME_SIGNATURE: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed token {token:?} at index {index}: {reason}")]
pub struct ParseError {
    pub index: usize,
    pub token: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenCategory {
    Header,
    SongControl,
    BarControl,
    Structure,
    Note,
    Wait,
    Effect,
}

/// Instrument track a note belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Track {
    Distorted(u8),
    Clean(u8),
    Bass,
    Leads,
    Drums,
}

impl Track {
    pub const ALL: [Track; 8] = [
        Track::Distorted(0),
        Track::Distorted(1),
        Track::Distorted(2),
        Track::Clean(0),
        Track::Clean(1),
        Track::Bass,
        Track::Leads,
        Track::Drums,
    ];

    pub fn is_pitched(self) -> bool {
        self != Track::Drums
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Track::Distorted(i) => write!(f, "distorted{i}"),
            Track::Clean(i) => write!(f, "clean{i}"),
            Track::Bass => f.write_str("bass"),
            Track::Leads => f.write_str("leads"),
            Track::Drums => f.write_str("drums"),
        }
    }
}

impl FromStr for Track {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "distorted0" => Track::Distorted(0),
            "distorted1" => Track::Distorted(1),
            "distorted2" => Track::Distorted(2),
            "clean0" => Track::Clean(0),
            "clean1" => Track::Clean(1),
            "bass" => Track::Bass,
            "leads" => Track::Leads,
            "drums" => Track::Drums,
            _ => return Err(()),
        })
    }
}

impl Serialize for Track {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Track {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(alloc::format!("unknown track {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
        })
    }
}

/// The three bar-level tonal tension features, in token order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensionFeature {
    CloudDiameter,
    CloudMomentum,
    TensileStrain,
}

impl TensionFeature {
    pub const ALL: [TensionFeature; 3] = [
        TensionFeature::CloudDiameter,
        TensionFeature::CloudMomentum,
        TensionFeature::TensileStrain,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TensionFeature::CloudDiameter => "cloud_diameter",
            TensionFeature::CloudMomentum => "cloud_momentum",
            TensionFeature::TensileStrain => "tensile_strain",
        }
    }
}

/// Quartile level `q1..q4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quartile {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quartile {
    pub const ALL: [Quartile; 4] = [Quartile::Q1, Quartile::Q2, Quartile::Q3, Quartile::Q4];

    /// 0-based level index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Quartile::Q1 => "q1",
            Quartile::Q2 => "q2",
            Quartile::Q3 => "q3",
            Quartile::Q4 => "q4",
        }
    }
}

/// One parsed token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Artist(String),
    Tempo(u16),
    TimeSignature(u8),
    Start,
    End,
    NewMeasure,
    Valence(Level),
    Arousal(Level),
    Mode(Mode),
    BarControl(TensionFeature, Quartile),
    Note { track: Track, string: u8, fret: u8 },
    Drum(u8),
    Wait(u32),
    Effect(String),
}

impl Token {
    pub fn category(&self) -> TokenCategory {
        match self {
            Token::Artist(_) | Token::Tempo(_) | Token::TimeSignature(_) | Token::Start | Token::End => {
                TokenCategory::Header
            }
            Token::NewMeasure => TokenCategory::Structure,
            Token::Valence(_) | Token::Arousal(_) | Token::Mode(_) => TokenCategory::SongControl,
            Token::BarControl(..) => TokenCategory::BarControl,
            Token::Note { .. } | Token::Drum(_) => TokenCategory::Note,
            Token::Wait(_) => TokenCategory::Wait,
            Token::Effect(_) => TokenCategory::Effect,
        }
    }

    pub fn is_control(&self) -> bool {
        matches!(self.category(), TokenCategory::SongControl | TokenCategory::BarControl)
    }

    /// Track of a note token, `None` otherwise.
    pub fn track(&self) -> Option<Track> {
        match self {
            Token::Note { track, .. } => Some(*track),
            Token::Drum(_) => Some(Track::Drums),
            _ => None,
        }
    }

    /// Parse a single token; `index` is only used for error reporting.
    pub fn parse_at(raw: &str, index: usize) -> Result<Token, ParseError> {
        let err = |reason| ParseError { index, token: raw.to_owned(), reason };
        match raw {
            "start" => return Ok(Token::Start),
            "end" => return Ok(Token::End),
            "new_measure" => return Ok(Token::NewMeasure),
            _ => {}
        }
        let (head, rest) = raw.split_once(':').ok_or_else(|| err("no matching grammar rule"))?;
        match head {
            "artist" => {
                if rest.is_empty() {
                    return Err(err("empty artist"));
                }
                Ok(Token::Artist(rest.to_owned()))
            }
            "tempo" => {
                let t = canonical_uint(rest).ok_or_else(|| err("tempo is not a canonical integer"))?;
                if !(u64::from(MIN_TEMPO)..=u64::from(MAX_TEMPO)).contains(&t) {
                    return Err(err("tempo outside [30, 300]"));
                }
                Ok(Token::Tempo(t as u16))
            }
            "time_signature" => {
                let n = canonical_uint(rest)
                    .ok_or_else(|| err("time signature is not a canonical integer"))?;
                if n == 0 || n > u64::from(MAX_TIME_SIGNATURE) {
                    return Err(err("time signature numerator outside [1, 64]"));
                }
                Ok(Token::TimeSignature(n as u8))
            }
            "valence" | "arousal" => {
                let level = match rest {
                    "high" => Level::High,
                    "low" => Level::Low,
                    _ => return Err(err("level must be high or low")),
                };
                Ok(if head == "valence" { Token::Valence(level) } else { Token::Arousal(level) })
            }
            "mode" => match rest {
                "major" => Ok(Token::Mode(Mode::Major)),
                "minor" => Ok(Token::Mode(Mode::Minor)),
                _ => Err(err("mode must be major or minor")),
            },
            "cloud_diameter" | "cloud_momentum" | "tensile_strain" => {
                let feature = match head {
                    "cloud_diameter" => TensionFeature::CloudDiameter,
                    "cloud_momentum" => TensionFeature::CloudMomentum,
                    _ => TensionFeature::TensileStrain,
                };
                let q = match rest {
                    "q1" => Quartile::Q1,
                    "q2" => Quartile::Q2,
                    "q3" => Quartile::Q3,
                    "q4" => Quartile::Q4,
                    _ => return Err(err("tension level must be q1..q4")),
                };
                Ok(Token::BarControl(feature, q))
            }
            "wait" => {
                let t = canonical_uint(rest).ok_or_else(|| err("wait is not a canonical integer"))?;
                if t == 0 || t > u64::from(u32::MAX) {
                    return Err(err("wait ticks must be positive"));
                }
                Ok(Token::Wait(t as u32))
            }
            "nfx" => {
                if rest.is_empty() {
                    return Err(err("empty effect name"));
                }
                Ok(Token::Effect(rest.to_owned()))
            }
            _ => {
                let track: Track = head.parse().map_err(|_| err("no matching grammar rule"))?;
                let body = rest.strip_prefix("note:").ok_or_else(|| err("no matching grammar rule"))?;
                if track == Track::Drums {
                    let midi = canonical_uint(body).ok_or_else(|| err("drum pitch is not a canonical integer"))?;
                    if midi > 127 {
                        return Err(err("drum pitch outside [0, 127]"));
                    }
                    return Ok(Token::Drum(midi as u8));
                }
                let (s, f) = body.split_once(':').ok_or_else(|| err("note needs s<string>:f<fret>"))?;
                let string = s
                    .strip_prefix('s')
                    .and_then(canonical_uint)
                    .ok_or_else(|| err("bad string number"))?;
                let fret = f
                    .strip_prefix('f')
                    .and_then(canonical_uint)
                    .ok_or_else(|| err("bad fret number"))?;
                if string == 0 || string > u64::from(MAX_STRING) {
                    return Err(err("string number outside [1, 12]"));
                }
                if fret > u64::from(MAX_FRET) {
                    return Err(err("fret outside [0, 30]"));
                }
                Ok(Token::Note { track, string: string as u8, fret: fret as u8 })
            }
        }
    }
}

fn canonical_uint(s: &str) -> Option<u64> {
    if s.is_empty() || s.len() > 18 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if s.len() > 1 && s.starts_with('0') {
        return None;
    }
    s.parse().ok()
}

impl FromStr for Token {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        Token::parse_at(s, 0)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Artist(a) => write!(f, "artist:{a}"),
            Token::Tempo(t) => write!(f, "tempo:{t}"),
            Token::TimeSignature(n) => write!(f, "time_signature:{n}"),
            Token::Start => f.write_str("start"),
            Token::End => f.write_str("end"),
            Token::NewMeasure => f.write_str("new_measure"),
            Token::Valence(l) => write!(f, "valence:{}", level_name(*l)),
            Token::Arousal(l) => write!(f, "arousal:{}", level_name(*l)),
            Token::Mode(m) => write!(f, "mode:{m}"),
            Token::BarControl(feat, q) => write!(f, "{}:{}", feat.name(), q.name()),
            Token::Note { track, string, fret } => write!(f, "{track}:note:s{string}:f{fret}"),
            Token::Drum(m) => write!(f, "drums:note:{m}"),
            Token::Wait(t) => write!(f, "wait:{t}"),
            Token::Effect(name) => write!(f, "nfx:{name}"),
        }
    }
}

fn level_name(l: Level) -> &'static str {
    match l {
        Level::High => "high",
        Level::Low => "low",
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered token sequence. Renders with single spaces between tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenStream(pub Vec<Token>);

impl TokenStream {
    pub fn new() -> Self {
        TokenStream(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Token> {
        self.0.iter()
    }

    pub fn measure_count(&self) -> usize {
        self.0.iter().filter(|t| **t == Token::NewMeasure).count()
    }
}

impl fmt::Display for TokenStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for TokenStream {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse_tokens(s)
    }
}

impl From<Vec<Token>> for TokenStream {
    fn from(v: Vec<Token>) -> Self {
        TokenStream(v)
    }
}

impl IntoIterator for TokenStream {
    type Item = Token;
    type IntoIter = alloc::vec::IntoIter<Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a TokenStream {
    type Item = &'a Token;
    type IntoIter = core::slice::Iter<'a, Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Parse whitespace-separated token text. Empty input yields an empty stream.
pub fn parse_tokens(text: &str) -> Result<TokenStream, ParseError> {
    text.split_ascii_whitespace()
        .enumerate()
        .map(|(i, raw)| Token::parse_at(raw, i))
        .collect::<Result<Vec<_>, _>>()
        .map(TokenStream)
}

/// Every song- and bar-level control token (18 in total).
pub fn all_control_tokens() -> Vec<Token> {
    let mut v = Vec::with_capacity(18);
    for l in [Level::High, Level::Low] {
        v.push(Token::Valence(l));
    }
    for l in [Level::High, Level::Low] {
        v.push(Token::Arousal(l));
    }
    v.push(Token::Mode(Mode::Major));
    v.push(Token::Mode(Mode::Minor));
    for feat in TensionFeature::ALL {
        for q in Quartile::ALL {
            v.push(Token::BarControl(feat, q));
        }
    }
    v
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.to_string()
    }
}
