//! Linear emotion classifier over order-free token features.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::token::{Token, TokenCategory, TokenStream};

/// Streams are cut to this many tokens before featurization.
pub const TRUNCATE_TOKENS: usize = 768;
pub const TEMPO_BUCKETS: usize = 14;
const TEMPO_BUCKET_BPM: u16 = 20;
const TEMPO_FLOOR: u16 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Valence,
    Arousal,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Valence => "valence",
            Target::Arousal => "arousal",
        })
    }
}

/// Anything that maps a stream to the probability of the "high" class.
pub trait ClassifierModel {
    fn score(&self, stream: &TokenStream) -> Result<f64, EvalError>;

    fn label(&self, stream: &TokenStream) -> Result<bool, EvalError> {
        Ok(self.score(stream)? > 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub truncate_tokens: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 300,
            learning_rate: 0.5,
            l2: 1e-3,
            holdout_fraction: 0.2,
            seed: 0,
            truncate_tokens: TRUNCATE_TOKENS,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.l2 >= 0.0) {
            return Err(EvalError::InvalidConfig("learning rate must be positive and l2 non-negative"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(EvalError::InvalidConfig("holdout fraction must lie in [0, 1)"));
        }
        if self.truncate_tokens == 0 {
            return Err(EvalError::InvalidConfig("truncation length must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_heldout: usize,
    pub train_accuracy: f64,
    pub heldout_accuracy: Option<f64>,
}

/// Logistic regression on standardized features: relative unigram
/// frequencies (song-level controls excluded, since generated streams carry
/// the prompt), mean bar-control level per tension feature, and a one-hot
/// tempo bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTokenClassifier {
    pub target: Target,
    pub truncate_tokens: usize,
    /// Sorted unigram vocabulary.
    pub vocabulary: Vec<Token>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn considered(t: &Token) -> bool {
    t.category() != TokenCategory::SongControl
}

/// Raw (unstandardized) feature vector of a stream.
pub fn features(vocabulary: &[Token], stream: &TokenStream, truncate: usize) -> Vec<f64> {
    let v = vocabulary.len();
    let mut x = alloc::vec![0.0; v + 3 + TEMPO_BUCKETS];
    let head = &stream.0[..stream.len().min(truncate)];
    let mut n = 0usize;
    let mut level_sum = [0.0; 3];
    let mut level_n = [0usize; 3];
    let mut tempo = None;
    for t in head.iter().filter(|t| considered(t)) {
        n += 1;
        if let Ok(i) = vocabulary.binary_search(t) {
            x[i] += 1.0;
        }
        match t {
            Token::BarControl(f, q) => {
                level_sum[f.index()] += (q.index() + 1) as f64 / 4.0;
                level_n[f.index()] += 1;
            }
            Token::Tempo(bpm) if tempo.is_none() => tempo = Some(*bpm),
            _ => {}
        }
    }
    if n > 0 {
        x[..v].iter_mut().for_each(|c| *c /= n as f64);
    }
    for f in 0..3 {
        if level_n[f] > 0 {
            x[v + f] = level_sum[f] / level_n[f] as f64;
        }
    }
    if let Some(bpm) = tempo {
        let b = usize::from(bpm.saturating_sub(TEMPO_FLOOR) / TEMPO_BUCKET_BPM).min(TEMPO_BUCKETS - 1);
        x[v + 3 + b] = 1.0;
    }
    x
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl LinearTokenClassifier {
    fn standardized(&self, stream: &TokenStream) -> Vec<f64> {
        let mut x = features(&self.vocabulary, stream, self.truncate_tokens);
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
        x
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl ClassifierModel for LinearTokenClassifier {
    fn score(&self, stream: &TokenStream) -> Result<f64, EvalError> {
        let x = self.standardized(stream);
        if x.len() != self.weights.len() {
            return Err(EvalError::Model(alloc::format!(
                "classifier has {} weights for {} features",
                self.weights.len(),
                x.len()
            )));
        }
        Ok(sigmoid(self.logit(&x)))
    }
}

/// Stratified seeded split; each class keeps at least one training example.
fn split(labels: &[bool], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let h = ((idx.len() as f64 * fraction) as usize).min(idx.len().saturating_sub(1));
        held.extend_from_slice(&idx[..h]);
        train.extend_from_slice(&idx[h..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Full-batch gradient descent on L2-regularized cross-entropy.
pub fn train_classifier(
    examples: &[(TokenStream, bool)],
    target: Target,
    config: &ClassifierConfig,
) -> Result<(LinearTokenClassifier, TrainReport), EvalError> {
    config.validate()?;
    let positives = examples.iter().filter(|e| e.1).count();
    let negatives = examples.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    let labels: Vec<bool> = examples.iter().map(|e| e.1).collect();
    let (train, held) = split(&labels, config.holdout_fraction, config.seed);

    let mut vocabulary: Vec<Token> = train
        .iter()
        .flat_map(|&i| examples[i].0 .0.iter().take(config.truncate_tokens))
        .filter(|t| considered(t))
        .cloned()
        .collect();
    vocabulary.sort();
    vocabulary.dedup();

    let raw: Vec<Vec<f64>> = train.iter().map(|&i| features(&vocabulary, &examples[i].0, config.truncate_tokens)).collect();
    let dim = raw[0].len();
    let n = raw.len() as f64;
    let mut mean = alloc::vec![0.0; dim];
    for x in &raw {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = alloc::vec![0.0; dim];
    for x in &raw {
        scale.iter_mut().zip(x.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    scale.iter_mut().for_each(|s| *s = if *s > 1e-24 { libm::sqrt(*s) } else { 1.0 });
    let xs: Vec<Vec<f64>> = raw
        .into_iter()
        .map(|x| x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let ys: Vec<f64> = train.iter().map(|&i| if labels[i] { 1.0 } else { 0.0 }).collect();

    let mut model = LinearTokenClassifier {
        target,
        truncate_tokens: config.truncate_tokens,
        vocabulary,
        mean,
        scale,
        weights: alloc::vec![0.0; dim],
        bias: 0.0,
    };
    let mut grad = alloc::vec![0.0; dim];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let err = sigmoid(model.logit(x)) - y;
            grad_b += err;
            grad.iter_mut().zip(x).for_each(|(g, v)| *g += err * v);
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * (g / n + config.l2 * *w);
        }
        model.bias -= config.learning_rate * grad_b / n;
    }

    let accuracy = |idx: &[usize]| -> Result<f64, EvalError> {
        let mut hit = 0usize;
        for &i in idx {
            if model.label(&examples[i].0)? == labels[i] {
                hit += 1;
            }
        }
        Ok(hit as f64 / idx.len() as f64)
    };
    let report = TrainReport {
        n_train: train.len(),
        n_heldout: held.len(),
        train_accuracy: accuracy(&train)?,
        heldout_accuracy: if held.is_empty() { None } else { Some(accuracy(&held)?) },
    };
    Ok((model, report))
}
