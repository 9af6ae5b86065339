//! Classifier files, survey and statistics CSV inputs, evaluation reports.

use std::path::Path;

use moodloop_core::evaluate::survey::{parse_target, Answer, Question, SurveyResponse};
use moodloop_core::evaluate::{
    EmotionMetrics, LinearTokenClassifier, LoopMetric, PairwiseResult, StatTestResult, TrainReport,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{read_bytes, read_json, write_json};

pub const CLASSIFIER_FORMAT: &str = "moodloop-classifier";
pub const CLASSIFIER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    format: String,
    version: u32,
    report: TrainReport,
    model: LinearTokenClassifier,
}

pub fn save_classifier(path: &Path, model: &LinearTokenClassifier, report: &TrainReport) -> Result<()> {
    write_json(
        path,
        &ClassifierFile {
            format: CLASSIFIER_FORMAT.into(),
            version: CLASSIFIER_VERSION,
            report: report.clone(),
            model: model.clone(),
        },
    )
}

pub fn load_classifier(path: &Path) -> Result<LinearTokenClassifier> {
    let f: ClassifierFile = read_json(path)?;
    if f.format != CLASSIFIER_FORMAT || f.version != CLASSIFIER_VERSION {
        return Err(Error::invalid(format!(
            "{}: expected {CLASSIFIER_FORMAT} v{CLASSIFIER_VERSION}, found {} v{}",
            path.display(),
            f.format,
            f.version
        )));
    }
    let m = f.model;
    let dim = m.vocabulary.len() + 3 + moodloop_core::evaluate::classifier::TEMPO_BUCKETS;
    if m.weights.len() != dim || m.mean.len() != dim || m.scale.len() != dim {
        return Err(Error::invalid(format!("{}: weight dimensions do not match the vocabulary", path.display())));
    }
    Ok(m)
}

/// Survey CSV: `participant,excerpt_group,question_id,answer[,target]`.
pub fn load_survey(path: &Path) -> Result<Vec<SurveyResponse>> {
    let bytes = read_bytes(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(bytes.as_slice());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let base = ["participant", "excerpt_group", "question_id", "answer"];
    let has_target = header.len() == 5 && header[4] == "target";
    if header[..header.len().min(4)] != base || !(header.len() == 4 || has_target) {
        return Err(Error::invalid(format!(
            "{}: header must be `participant,excerpt_group,question_id,answer[,target]`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let err = |m: String| Error::invalid(format!("{}: line {line}: {m}", path.display()));
        let row = row.map_err(|e| err(e.to_string()))?;
        if row.len() != header.len() {
            return Err(err(format!("expected {} fields, found {}", header.len(), row.len())));
        }
        let question: Question = row[2].parse().map_err(|e: moodloop_core::evaluate::survey::SurveyError| err(e.to_string()))?;
        let answer = Answer::parse(question, &row[3]).map_err(|e| err(e.to_string()))?;
        let target = if has_target { parse_target(&row[4]).map_err(|e| err(e.to_string()))? } else { None };
        out.push(SurveyResponse { participant: row[0].into(), group: row[1].into(), question, answer, target });
    }
    Ok(out)
}

/// Numeric table with a header row; each column is one group/treatment and
/// each row one subject.
pub fn load_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bytes = read_bytes(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::invalid(format!("{}: line {}: {e}", path.display(), i + 2)))?;
        let vals = row
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::invalid(format!("{}: line {}: {v:?} is not a number", path.display(), i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
    }
    Ok((names, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionRow {
    pub name: String,
    pub metrics: EmotionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionReport {
    pub rows: Vec<EmotionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRow {
    pub name: String,
    pub metric: LoopMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub rows: Vec<LoopRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<StatTestResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pairwise: Vec<PairwiseResult>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use moodloop_core::generate::Emotion;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn survey_rows() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "s.csv",
            "participant,excerpt_group,question_id,answer,target\np1,machine,heard,N,\np1,machine,emotion,6,happy\n",
        );
        let r = load_survey(&p).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].target, Some(Emotion::Happy));
        let p = write(d.path(), "b.csv", "participant,excerpt_group,question_id,answer\np1,g,loop,9\n");
        let e = load_survey(&p).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let p = write(d.path(), "c.csv", "who,what\n");
        assert!(load_survey(&p).is_err());
    }

    #[test]
    fn numeric_columns() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "x.csv", "a,b,c\n1,2,3\n4,5,6\n");
        let (names, rows) = load_columns(&p).unwrap();
        assert_eq!(names, ["a", "b", "c"]);
        assert_eq!(rows, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let p = write(d.path(), "y.csv", "a\nnan\n");
        assert!(load_columns(&p).is_err());
    }
}
