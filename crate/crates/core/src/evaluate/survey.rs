//! Listening-test summaries: prior exposure, human/machine attribution and
//! Likert means mapped to [-3, 3].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::generate::Emotion;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SurveyError {
    #[error("unknown question {0:?} (expected heard, origin, preference, loop or emotion)")]
    UnknownQuestion(String),
    #[error("answer {answer:?} is not valid for {question}")]
    BadAnswer { question: &'static str, answer: String },
    #[error("unknown target {0:?} (expected happy, sad or empty)")]
    BadTarget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    /// Heard the excerpt before? Y/N
    Heard,
    /// Composed by a human or a machine?
    Origin,
    /// Liking, 1..7.
    Preference,
    /// Loop coherence, 1..7.
    Loop,
    /// Sad (1) to happy (7).
    Emotion,
}

impl Question {
    pub fn name(self) -> &'static str {
        match self {
            Question::Heard => "heard",
            Question::Origin => "origin",
            Question::Preference => "preference",
            Question::Loop => "loop",
            Question::Emotion => "emotion",
        }
    }
}

impl FromStr for Question {
    type Err = SurveyError;
    fn from_str(s: &str) -> Result<Self, SurveyError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heard" => Ok(Question::Heard),
            "origin" => Ok(Question::Origin),
            "preference" => Ok(Question::Preference),
            "loop" => Ok(Question::Loop),
            "emotion" => Ok(Question::Emotion),
            _ => Err(SurveyError::UnknownQuestion(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    Human,
    Machine,
    /// Raw 1..7 answer.
    Likert(u8),
}

impl Answer {
    pub fn parse(question: Question, raw: &str) -> Result<Answer, SurveyError> {
        let r = raw.trim().to_ascii_lowercase();
        let a = match question {
            Question::Heard => match r.as_str() {
                "y" | "yes" => Some(Answer::Yes),
                "n" | "no" => Some(Answer::No),
                _ => None,
            },
            Question::Origin => match r.as_str() {
                "human" => Some(Answer::Human),
                "machine" => Some(Answer::Machine),
                _ => None,
            },
            _ => r.parse::<u8>().ok().filter(|v| (1..=7).contains(v)).map(Answer::Likert),
        };
        a.ok_or_else(|| SurveyError::BadAnswer { question: question.name(), answer: raw.to_string() })
    }
}

pub fn parse_target(raw: &str) -> Result<Option<Emotion>, SurveyError> {
    match raw.trim() {
        "" => Ok(None),
        t => t.parse().map(Some).map_err(|_| SurveyError::BadTarget(raw.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant: String,
    pub group: String,
    pub question: Question,
    pub answer: Answer,
    /// Intended emotion of the excerpt; needed for the happy/sad emotion means.
    pub target: Option<Emotion>,
}

/// Percentages are in [0, 100]; Likert means are answer - 4, in [-3, 3].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub responses: usize,
    pub heard_pct: Option<f64>,
    pub not_heard_pct: Option<f64>,
    pub human_pct: Option<f64>,
    pub machine_pct: Option<f64>,
    pub preference: Option<f64>,
    pub loop_coherence: Option<f64>,
    pub emotion: Option<f64>,
    pub happy_emotion: Option<f64>,
    pub sad_emotion: Option<f64>,
}

fn pct(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

fn likert_mean<'a>(it: impl Iterator<Item = &'a SurveyResponse>) -> Option<f64> {
    let v: Vec<f64> = it
        .filter_map(|r| match r.answer {
            Answer::Likert(a) => Some(f64::from(a) - 4.0),
            _ => None,
        })
        .collect();
    crate::stats::mean(&v)
}

/// One summary per excerpt group, in group-name order.
pub fn survey_summary(responses: &[SurveyResponse]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<&str, Vec<&SurveyResponse>> = BTreeMap::new();
    for r in responses {
        groups.entry(r.group.as_str()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(group, rs)| {
            let of = |q: Question| rs.iter().copied().filter(move |r| r.question == q);
            let heard = of(Question::Heard).count();
            let yes = of(Question::Heard).filter(|r| r.answer == Answer::Yes).count();
            let origin = of(Question::Origin).count();
            let human = of(Question::Origin).filter(|r| r.answer == Answer::Human).count();
            GroupSummary {
                group: group.to_string(),
                responses: rs.len(),
                heard_pct: pct(yes, heard),
                not_heard_pct: pct(heard - yes, heard),
                human_pct: pct(human, origin),
                machine_pct: pct(origin - human, origin),
                preference: likert_mean(of(Question::Preference)),
                loop_coherence: likert_mean(of(Question::Loop)),
                emotion: likert_mean(of(Question::Emotion)),
                happy_emotion: likert_mean(of(Question::Emotion).filter(|r| r.target == Some(Emotion::Happy))),
                sad_emotion: likert_mean(of(Question::Emotion).filter(|r| r.target == Some(Emotion::Sad))),
            }
        })
        .collect()
}

fn cell(v: Option<f64>, pct: bool) -> String {
    match v {
        Some(x) if pct => alloc::format!("{x:.2}%"),
        Some(x) => alloc::format!("{x:.4}"),
        None => "-".into(),
    }
}

/// Three blocks: heard / not heard, human / machine, Likert means.
pub fn render_survey(summaries: &[GroupSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:>10} {:>10}", "group", "heard", "not heard");
    for g in summaries {
        let _ = writeln!(s, "{:<24} {:>10} {:>10}", g.group, cell(g.heard_pct, true), cell(g.not_heard_pct, true));
    }
    let _ = writeln!(s, "\n{:<24} {:>10} {:>10}", "group", "human", "machine");
    for g in summaries {
        let _ = writeln!(s, "{:<24} {:>10} {:>10}", g.group, cell(g.human_pct, true), cell(g.machine_pct, true));
    }
    let _ = writeln!(s, "\n{:<24} {:>10} {:>10} {:>10} {:>10}", "group", "preference", "LC", "HES", "SES");
    for g in summaries {
        let _ = writeln!(
            s,
            "{:<24} {:>10} {:>10} {:>10} {:>10}",
            g.group,
            cell(g.preference, false),
            cell(g.loop_coherence, false),
            cell(g.happy_emotion, false),
            cell(g.sad_emotion, false)
        );
    }
    s
}
