//! Emotion prompts, a smoothed n-gram reference generator and a
//! grammar-aware constrained sampler.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::ControlGroups;
use crate::token::{all_control_tokens, Level, Mode, Token, TokenCategory, TokenStream};

pub const HAPPY_MIN_TEMPO: u16 = 150;
pub const SAD_MAX_TEMPO: u16 = 100;
pub const DEFAULT_MAX_TOKENS: usize = 4096;
pub const DEFAULT_MAX_BARS: usize = 64;
pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Training settings of the original neural generator; only meaningful to
/// external model plugins.
pub mod neural {
    pub const LEARNING_RATE: f64 = 0.0002;
    pub const BATCH_SIZE: usize = 8;
    pub const EPOCHS: usize = 100;
    pub const OPTIMIZER: &str = "AdamW";
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 2 (got {0})")]
    OrderTooSmall(usize),
    #[error("smoothing alpha must be positive and finite")]
    BadAlpha,
    #[error("no admissible tempo in vocabulary")]
    NoAdmissibleTempo,
    #[error("token {0} is not in the model vocabulary")]
    UnknownToken(String),
    #[error("model gives zero probability to every admissible token")]
    DeadEnd,
    #[error("distribution has {got} entries, vocabulary has {expected}")]
    DistributionSize { got: usize, expected: usize },
    #[error("invalid sampling constraints: {0}")]
    InvalidConstraints(&'static str),
    #[error("inconsistent model: {0}")]
    InvalidModel(&'static str),
    #[error("model failure: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Happy,
    Sad,
}

impl Emotion {
    pub const ALL: [Emotion; 2] = [Emotion::Happy, Emotion::Sad];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
        }
    }

    pub fn tempo_admissible(self, bpm: u16) -> bool {
        match self {
            Emotion::Happy => bpm >= HAPPY_MIN_TEMPO,
            Emotion::Sad => bpm <= SAD_MAX_TEMPO,
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "happy" => Ok(Emotion::Happy),
            "sad" => Ok(Emotion::Sad),
            _ => Err(alloc::format!("unknown emotion {s:?} (expected happy or sad)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub tokens: Vec<Token>,
}

pub fn build_prompt(emotion: Emotion) -> Prompt {
    build_prompt_with(emotion, &ControlGroups::ALL)
}

/// Prompt with the tokens of disabled control groups left out; the
/// time signature is always present.
pub fn build_prompt_with(emotion: Emotion, groups: &ControlGroups) -> Prompt {
    let (level, mode) = match emotion {
        Emotion::Happy => (Level::High, Mode::Major),
        Emotion::Sad => (Level::Low, Mode::Minor),
    };
    let tokens = [Token::Valence(level), Token::Arousal(level), Token::Mode(mode), Token::TimeSignature(4)]
        .into_iter()
        .filter(|t| groups.keeps(t))
        .collect();
    Prompt { tokens }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TempoStrategy {
    /// Zero inadmissible tempo tokens and renormalize.
    Mask,
    /// Redraw while the drawn tempo is inadmissible.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConstraints {
    pub emotion: Emotion,
    /// Apply the emotion's tempo rule (off when mode/tempo features are ablated).
    pub constrain_tempo: bool,
    pub strategy: TempoStrategy,
    pub max_tokens: usize,
    pub max_bars: usize,
    /// At or below 1e-6 sampling becomes argmax.
    pub temperature: f64,
    pub seed: u64,
}

impl SamplingConstraints {
    pub fn new(emotion: Emotion, seed: u64) -> Self {
        SamplingConstraints {
            emotion,
            constrain_tempo: true,
            strategy: TempoStrategy::Mask,
            max_tokens: DEFAULT_MAX_TOKENS,
            max_bars: DEFAULT_MAX_BARS,
            temperature: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GenerateError::InvalidConstraints("temperature must be finite and non-negative"));
        }
        if self.max_tokens < 16 {
            return Err(GenerateError::InvalidConstraints("max_tokens must be at least 16"));
        }
        if self.max_bars == 0 {
            return Err(GenerateError::InvalidConstraints("max_bars must be positive"));
        }
        Ok(())
    }

    fn admits(&self, t: &Token) -> bool {
        match t {
            Token::Tempo(bpm) if self.constrain_tempo => self.emotion.tempo_admissible(*bpm),
            _ => true,
        }
    }
}

/// Anything that can produce a next-token distribution over a fixed vocabulary.
pub trait GeneratorModel {
    fn vocabulary(&self) -> &[Token];
    /// Probabilities indexed like `vocabulary()`; `context` holds vocabulary ids.
    fn next_token_distribution(&self, context: &[u32]) -> Result<Vec<f64>, GenerateError>;
}

/// Add-α n-gram model that backs off to the longest context seen in training.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    vocab: Vec<Token>,
    index: BTreeMap<Token, u32>,
    /// context (length 0..order-1) -> next id -> count. Conditioned contexts
    /// are keyed `controls ++ [COND_SEP] ++ context`.
    counts: BTreeMap<Vec<u32>, BTreeMap<u32, u32>>,
    totals: BTreeMap<Vec<u32>, u64>,
    is_song_control: Vec<bool>,
    start: Option<u32>,
}

/// Separates the song-control condition from the token context in count keys.
pub const COND_SEP: u32 = u32::MAX;

/// Song-control ids of the header (everything before `start`), in order.
fn condition(ids: &[u32], is_song_control: &[bool], start: Option<u32>) -> Vec<u32> {
    ids.iter()
        .take_while(|&&i| Some(i) != start)
        .filter(|&&i| is_song_control[i as usize])
        .copied()
        .collect()
}

fn conditioned_key(cond: &[u32], ctx: &[u32]) -> Vec<u32> {
    let mut k = Vec::with_capacity(cond.len() + 1 + ctx.len());
    k.extend_from_slice(cond);
    k.push(COND_SEP);
    k.extend_from_slice(ctx);
    k
}

impl NGramModel {
    pub fn from_parts(
        order: usize,
        alpha: f64,
        vocab: Vec<Token>,
        counts: BTreeMap<Vec<u32>, BTreeMap<u32, u32>>,
    ) -> Result<Self, GenerateError> {
        if order < 2 {
            return Err(GenerateError::OrderTooSmall(order));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(GenerateError::BadAlpha);
        }
        let index: BTreeMap<Token, u32> = vocab.iter().cloned().zip(0u32..).collect();
        if index.len() != vocab.len() {
            return Err(GenerateError::InvalidModel("duplicate vocabulary entries"));
        }
        let n = vocab.len() as u32;
        let mut totals = BTreeMap::new();
        for (key, next) in &counts {
            let ctx = match key.iter().position(|&i| i == COND_SEP) {
                Some(p) => &key[p + 1..],
                None => &key[..],
            };
            let ids = key.iter().filter(|&&i| i != COND_SEP);
            if ctx.len() >= order || ids.chain(next.keys()).any(|&i| i >= n) {
                return Err(GenerateError::InvalidModel("count table out of range"));
            }
            totals.insert(key.clone(), next.values().map(|&c| u64::from(c)).sum());
        }
        if !counts.contains_key(&Vec::new()) {
            return Err(GenerateError::InvalidModel("missing unigram counts"));
        }
        let is_song_control = vocab.iter().map(|t| t.category() == TokenCategory::SongControl).collect();
        let start = index.get(&Token::Start).copied();
        Ok(NGramModel { order, alpha, vocab, index, counts, totals, is_song_control, start })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn counts(&self) -> &BTreeMap<Vec<u32>, BTreeMap<u32, u32>> {
        &self.counts
    }

    pub fn id(&self, token: &Token) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn encode(&self, tokens: &[Token]) -> Result<Vec<u32>, GenerateError> {
        tokens
            .iter()
            .map(|t| self.id(t).ok_or_else(|| GenerateError::UnknownToken(alloc::format!("{t}"))))
            .collect()
    }

    /// P(token | context) for one token.
    pub fn probability(&self, context: &[u32], token: u32) -> f64 {
        let (key, total) = self.backoff(context);
        let c = self.counts[&key].get(&token).copied().unwrap_or(0);
        (f64::from(c) + self.alpha) / (total as f64 + self.alpha * self.vocab.len() as f64)
    }

    /// Longest seen context conditioned on the song controls, then the
    /// longest seen unconditioned one (down to the unigram).
    fn backoff(&self, context: &[u32]) -> (Vec<u32>, u64) {
        let longest = context.len().min(self.order - 1);
        let cond = condition(context, &self.is_song_control, self.start);
        if !cond.is_empty() {
            for len in (1..=longest).rev() {
                let key = conditioned_key(&cond, &context[context.len() - len..]);
                if let Some(&t) = self.totals.get(&key) {
                    return (key, t);
                }
            }
        }
        for len in (0..=longest).rev() {
            let ctx = &context[context.len() - len..];
            if let Some(&t) = self.totals.get(ctx) {
                return (ctx.to_vec(), t);
            }
        }
        unreachable!("unigram counts always exist")
    }
}

impl GeneratorModel for NGramModel {
    fn vocabulary(&self) -> &[Token] {
        &self.vocab
    }

    fn next_token_distribution(&self, context: &[u32]) -> Result<Vec<f64>, GenerateError> {
        let (key, total) = self.backoff(context);
        let denom = total as f64 + self.alpha * self.vocab.len() as f64;
        let mut p = alloc::vec![self.alpha / denom; self.vocab.len()];
        for (&id, &c) in &self.counts[&key] {
            p[id as usize] = (f64::from(c) + self.alpha) / denom;
        }
        Ok(p)
    }
}

/// Count all n-grams of orders 1..=k over the corpus, each line followed by
/// an `end` token unless it already ends with one. Lines carrying song-level
/// controls also count their n-grams (orders 2..=k) under those controls, so
/// the prompt keeps conditioning the whole sequence, not just its first k-1
/// tokens.
pub fn train_generator(corpus: &[TokenStream], order: usize, alpha: f64) -> Result<NGramModel, GenerateError> {
    if order < 2 {
        return Err(GenerateError::OrderTooSmall(order));
    }
    if corpus.iter().all(TokenStream::is_empty) {
        return Err(GenerateError::EmptyCorpus);
    }
    let mut vocab: Vec<Token> = corpus.iter().flat_map(|s| s.iter().cloned()).collect();
    vocab.extend(all_control_tokens());
    vocab.push(Token::End);
    vocab.sort();
    vocab.dedup();
    let index: BTreeMap<&Token, u32> = vocab.iter().zip(0u32..).collect();
    let is_song_control: Vec<bool> = vocab.iter().map(|t| t.category() == TokenCategory::SongControl).collect();

    let mut counts: BTreeMap<Vec<u32>, BTreeMap<u32, u32>> = BTreeMap::new();
    for line in corpus.iter().filter(|s| !s.is_empty()) {
        let mut ids: Vec<u32> = line.iter().map(|t| index[t]).collect();
        if line.0.last() != Some(&Token::End) {
            ids.push(index[&Token::End]);
        }
        let start = index.get(&Token::Start).copied();
        for i in 0..ids.len() {
            let cond = condition(&ids[..i], &is_song_control, start);
            for len in 0..order.min(i + 1) {
                let ctx = &ids[i - len..i];
                *counts.entry(ctx.to_vec()).or_default().entry(ids[i]).or_insert(0) += 1;
                if len > 0 && !cond.is_empty() {
                    *counts.entry(conditioned_key(&cond, ctx)).or_default().entry(ids[i]).or_insert(0) += 1;
                }
            }
        }
    }
    NGramModel::from_parts(order, alpha, vocab, counts)
}

/// Zero out inadmissible tempo tokens and renormalize. A distribution that
/// loses no mass is returned unchanged.
pub fn mask_tempo(
    distribution: &[f64],
    vocabulary: &[Token],
    constraints: &SamplingConstraints,
) -> Result<Vec<f64>, GenerateError> {
    if distribution.len() != vocabulary.len() {
        return Err(GenerateError::DistributionSize { got: distribution.len(), expected: vocabulary.len() });
    }
    let mut out = distribution.to_vec();
    let mut removed = false;
    for (p, t) in out.iter_mut().zip(vocabulary) {
        if *p > 0.0 && !constraints.admits(t) {
            *p = 0.0;
            removed = true;
        }
    }
    if !removed {
        return Ok(out);
    }
    let mass: f64 = out.iter().sum();
    if mass <= 0.0 {
        return Err(GenerateError::NoAdmissibleTempo);
    }
    out.iter_mut().for_each(|p| *p /= mass);
    Ok(out)
}

/// Grammar position of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Before `start`; `tempo` is the next slot until one is emitted.
    Header { tempo: bool, artist: bool },
    /// `start` seen, the first `new_measure` is required.
    Opening,
    /// Inside a bar; `slot` is the next bar-control feature index that may
    /// still appear (3 once the control run is over).
    Body { slot: usize, after_note: bool },
}

struct Grammar {
    phase: Phase,
    bars: usize,
}

impl Grammar {
    fn new() -> Self {
        Grammar { phase: Phase::Header { tempo: false, artist: false }, bars: 0 }
    }

    fn allows(&self, t: &Token, max_bars: usize) -> bool {
        match self.phase {
            Phase::Header { tempo: false, .. } => matches!(t, Token::Tempo(_)),
            Phase::Header { tempo: true, artist } => matches!(t, Token::Start) || (!artist && matches!(t, Token::Artist(_))),
            Phase::Opening => *t == Token::NewMeasure,
            Phase::Body { slot, after_note } => match t {
                Token::Note { .. } | Token::Drum(_) | Token::Wait(_) | Token::End => true,
                Token::NewMeasure => self.bars < max_bars,
                Token::Effect(_) => after_note,
                Token::BarControl(f, _) => slot < 3 && f.index() == slot,
                _ => false,
            },
        }
    }

    fn advance(&mut self, t: &Token) {
        self.phase = match (self.phase, t) {
            (Phase::Header { artist, .. }, Token::Tempo(_)) => Phase::Header { tempo: true, artist },
            (Phase::Header { tempo, .. }, Token::Artist(_)) => Phase::Header { tempo, artist: true },
            (Phase::Header { .. }, Token::Start) => Phase::Opening,
            (_, Token::NewMeasure) => {
                self.bars += 1;
                Phase::Body { slot: 0, after_note: false }
            }
            (Phase::Body { .. }, Token::BarControl(f, _)) => Phase::Body { slot: f.index() + 1, after_note: false },
            (Phase::Body { .. }, Token::Note { .. } | Token::Drum(_) | Token::Effect(_)) => {
                Phase::Body { slot: 3, after_note: true }
            }
            (Phase::Body { .. }, _) => Phase::Body { slot: 3, after_note: false },
            (p, _) => p,
        };
    }

    /// Tokens that close the stream from the current position.
    fn closing(&self) -> Vec<Token> {
        match self.phase {
            Phase::Header { tempo: false, .. } => alloc::vec![],
            Phase::Header { .. } => alloc::vec![Token::Start, Token::NewMeasure, Token::End],
            Phase::Opening => alloc::vec![Token::NewMeasure, Token::End],
            Phase::Body { .. } => alloc::vec![Token::End],
        }
    }
}

fn draw(weights: &[f64], rng: &mut ChaCha8Rng, argmax: bool) -> Option<usize> {
    if argmax {
        let mut best: Option<usize> = None;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 && best.is_none_or(|b| w > weights[b]) {
                best = Some(i);
            }
        }
        return best;
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return Some(i);
            }
            u -= w;
            last = Some(i);
        }
    }
    last
}

/// Autoregressive sampling from `prompt`, restricted to continuations that
/// keep the stream grammatical: the tempo comes first (under the emotion's
/// tempo rule), bar controls only in cd→cm→ts order right after a
/// `new_measure`, no song controls or meter/tempo changes inside the body.
/// Stops at `end`, or appends it once the token or bar budget is spent.
pub fn sample_sequence<M: GeneratorModel + ?Sized>(
    model: &M,
    prompt: &Prompt,
    constraints: &SamplingConstraints,
) -> Result<TokenStream, GenerateError> {
    constraints.validate()?;
    let vocab = model.vocabulary();
    let index: BTreeMap<&Token, u32> = vocab.iter().zip(0u32..).collect();
    let mut context = Vec::with_capacity(constraints.max_tokens);
    let mut grammar = Grammar::new();
    for t in &prompt.tokens {
        let id = index.get(t).ok_or_else(|| GenerateError::UnknownToken(alloc::format!("{t}")))?;
        context.push(*id);
        grammar.advance(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(constraints.seed);
    let argmax = constraints.temperature <= 1e-6;
    let inv_t = if argmax { 1.0 } else { 1.0 / constraints.temperature };

    let mut out: Vec<Token> = prompt.tokens.clone();
    loop {
        let closing = grammar.closing();
        if !closing.is_empty() && out.len() + closing.len() >= constraints.max_tokens {
            out.extend(closing);
            break;
        }
        let dist = model.next_token_distribution(&context)?;
        if dist.len() != vocab.len() {
            return Err(GenerateError::DistributionSize { got: dist.len(), expected: vocab.len() });
        }
        let mut weights: Vec<f64> = dist
            .iter()
            .zip(vocab)
            .map(|(&p, t)| if p > 0.0 && grammar.allows(t, constraints.max_bars) { p } else { 0.0 })
            .collect();
        let tempo_slot = matches!(grammar.phase, Phase::Header { tempo: false, .. });
        if tempo_slot && !weights.iter().zip(vocab).any(|(&w, t)| w > 0.0 && constraints.admits(t)) {
            return Err(GenerateError::NoAdmissibleTempo);
        }
        if constraints.strategy == TempoStrategy::Mask {
            weights = mask_tempo(&weights, vocab, constraints)?;
        }
        if inv_t != 1.0 {
            weights.iter_mut().for_each(|w| *w = libm::pow(*w, inv_t));
        }
        let mut pick = draw(&weights, &mut rng, argmax).ok_or(GenerateError::DeadEnd)?;
        while !constraints.admits(&vocab[pick]) {
            pick = draw(&weights, &mut rng, argmax).ok_or(GenerateError::DeadEnd)?;
        }
        let token = vocab[pick].clone();
        context.push(pick as u32);
        grammar.advance(&token);
        let done = token == Token::End;
        out.push(token);
        if done {
            break;
        }
    }
    Ok(TokenStream(out))
}
