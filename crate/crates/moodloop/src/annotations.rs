//! Annotation CSV files and song-level audio-feature providers.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use moodloop_core::annotate::{dedupe_records, match_key, parse_mode, AnnotationRecord};
use moodloop_core::token::Mode;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_atomic};

pub const HEADER: [&str; 5] = ["artist", "title", "valence", "energy", "mode"];
pub const DEFAULT_TOKEN_ENV: &str = "MOODLOOP_API_TOKEN";

fn parse_rows(bytes: &[u8], origin: &str) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = rdr.headers().map_err(|e| Error::invalid(format!("{origin}: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::invalid(format!(
            "{origin}: header must be `{}`, found `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // line 1 is the header
        let line = i + 2;
        let err = |m: String| Error::invalid(format!("{origin}: line {line}: {m}"));
        let row = row.map_err(|e| err(e.to_string()))?;
        let num = |k: usize| row[k].parse::<f64>().map_err(|_| err(format!("{} is not a number: {:?}", HEADER[k], &row[k])));
        let rec = AnnotationRecord {
            artist: row[0].to_owned(),
            title: row[1].to_owned(),
            valence: num(2)?,
            energy: num(3)?,
            mode: parse_mode(&row[4]).map_err(|e| err(e.to_string()))?,
        };
        rec.validate().map_err(|e| err(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Parse and validate an annotations CSV. Duplicate (artist, title) keys keep
/// the last row and are logged.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let rows = parse_rows(&read_bytes(path)?, &path.display().to_string())?;
    let (records, overridden) = dedupe_records(rows);
    for i in overridden {
        log::warn!("{}: line {}: duplicate artist/title, later row wins", path.display(), i + 2);
    }
    Ok(records)
}

pub fn annotations_csv(records: &[AnnotationRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in records {
        let mode = match r.mode {
            Mode::Major => "major",
            Mode::Minor => "minor",
        };
        w.write_record([r.artist.as_str(), r.title.as_str(), &r.valence.to_string(), &r.energy.to_string(), mode])?;
    }
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    write_atomic(path, &annotations_csv(records)?)
}

/// A transport-level failure; lookups that fail this way are retried.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Read-only song-feature lookup.
pub trait AudioFeaturesProvider: Sync {
    fn lookup(&self, artist: &str, title: &str) -> std::result::Result<Option<AnnotationRecord>, ProviderError>;
}

/// Provider backed by an annotations CSV, matched on the normalized key.
#[derive(Debug, Clone, Default)]
pub struct CsvProvider {
    records: BTreeMap<String, AnnotationRecord>,
}

impl CsvProvider {
    pub fn new(records: Vec<AnnotationRecord>) -> Self {
        CsvProvider { records: records.into_iter().map(|r| (r.key(), r)).collect() }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(CsvProvider::new(load_annotations(path)?))
    }
}

impl AudioFeaturesProvider for CsvProvider {
    fn lookup(&self, artist: &str, title: &str) -> std::result::Result<Option<AnnotationRecord>, ProviderError> {
        Ok(self.records.get(&match_key(artist, title)).map(|r| AnnotationRecord {
            artist: artist.to_owned(),
            title: title.to_owned(),
            ..r.clone()
        }))
    }
}

/// Generic HTTP provider: `GET <endpoint>?artist=..&title=..` with an
/// optional bearer token read from an environment variable. A 404 is a miss;
/// a 200 body is `{"valence": f, "energy": f, "mode": "major"|"minor"|1|0}`.
pub struct HttpProvider {
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct FeatureBody {
    valence: f64,
    energy: f64,
    mode: serde_json::Value,
}

impl HttpProvider {
    pub fn new(endpoint: &str, token_env: &str) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(30))).build().into();
        HttpProvider { endpoint: endpoint.to_owned(), token: std::env::var(token_env).ok(), agent }
    }
}

impl AudioFeaturesProvider for HttpProvider {
    fn lookup(&self, artist: &str, title: &str) -> std::result::Result<Option<AnnotationRecord>, ProviderError> {
        let mut req = self.agent.get(&self.endpoint).query("artist", artist).query("title", title);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.call() {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(404)) => return Ok(None),
            Err(e) => return Err(ProviderError(e.to_string())),
        };
        let body = resp.body_mut().read_to_string().map_err(|e| ProviderError(e.to_string()))?;
        let f: FeatureBody = serde_json::from_str(&body).map_err(|e| ProviderError(format!("bad response: {e}")))?;
        let mode_text = match &f.mode {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let mode = parse_mode(&mode_text).map_err(|e| ProviderError(e.to_string()))?;
        let rec = AnnotationRecord { artist: artist.into(), title: title.into(), valence: f.valence, energy: f.energy, mode };
        rec.validate().map_err(|e| ProviderError(e.to_string()))?;
        Ok(Some(rec))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, base_delay: Duration::from_millis(250) }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchOutcome {
    pub records: Vec<AnnotationRecord>,
    /// Songs the provider did not know or could not be reached for.
    pub misses: Vec<(String, String)>,
    /// Subset of misses caused by transport failures after all retries.
    pub failures: usize,
}

fn lookup_with_retry(
    provider: &dyn AudioFeaturesProvider,
    artist: &str,
    title: &str,
    policy: RetryPolicy,
) -> std::result::Result<Option<AnnotationRecord>, ProviderError> {
    let mut attempt = 0;
    loop {
        match provider.lookup(artist, title) {
            Err(e) if attempt < policy.retries => {
                let delay = policy.base_delay * 2u32.pow(attempt);
                log::debug!("lookup {artist} / {title} failed ({e}); retrying in {delay:?}");
                std::thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Look every song up (concurrently, on the current rayon pool), keeping
/// input order in the results.
pub fn fetch_annotations(
    provider: &dyn AudioFeaturesProvider,
    songs: &[(String, String)],
    policy: RetryPolicy,
) -> FetchOutcome {
    let results: Vec<_> = songs.par_iter().map(|(a, t)| lookup_with_retry(provider, a, t, policy)).collect();
    let mut out = FetchOutcome::default();
    for ((a, t), r) in songs.iter().zip(results) {
        match r {
            Ok(Some(rec)) => out.records.push(rec),
            Ok(None) => out.misses.push((a.clone(), t.clone())),
            Err(e) => {
                log::warn!("lookup {a} / {t} failed after {} retries: {e}", policy.retries);
                out.failures += 1;
                out.misses.push((a.clone(), t.clone()));
            }
        }
    }
    out
}
