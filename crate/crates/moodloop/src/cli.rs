//! The `moodloop` command line. Every subcommand reads its defaults from the
//! pipeline config (`--config`), lets flags override them, logs to stderr and
//! writes its data to files only.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use moodloop_core::annotate::{
    build_corpus, match_key, stream_levels, ControlGroups, CorpusConfig, SongInput,
};
use moodloop_core::evaluate::survey::render_survey;
use moodloop_core::evaluate::{
    emotion_metrics, friedman, loop_metric, pairwise_bonferroni, render_emotion_table, render_loop_table,
    survey_summary, train_classifier, wilcoxon_signed_rank, Target,
};
use moodloop_core::generate::{
    build_prompt_with, sample_sequence, train_generator, Emotion, GeneratorModel, SamplingConstraints,
    TempoStrategy,
};
use moodloop_core::loops::extract_loops;
use moodloop_core::score::{regularize_meter, score_to_tokens, Score};
use moodloop_core::tension::{compute_tension_profile, discretize_profile, fit_tension_thresholds};
use moodloop_core::token::{Level, TokenStream};
use rayon::prelude::*;

use crate::annotations::{
    fetch_annotations, load_annotations, write_annotations, AudioFeaturesProvider, CsvProvider, HttpProvider,
    RetryPolicy, DEFAULT_TOKEN_ENV,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evalfiles::{
    load_classifier, load_columns, load_survey, save_classifier, EmotionReport, EmotionRow, LoopReport, LoopRow,
    StatsReport,
};
use crate::external::{serve, ExternalGenerator};
use crate::fsio::{list_inputs, write_atomic, write_json};
use crate::modelfile::{load_model, save_model};
use crate::outputs::{
    read_feature_thresholds, read_tension_thresholds, tension_rows, write_feature_thresholds, write_loop_manifest,
    write_tension, write_tension_thresholds, LoopRecord, FEATURE_THRESHOLDS_FILE, TENSION_THRESHOLDS_FILE,
};
use crate::scorefile::{artist_title, load_score, read_corpus, song_id, write_tokens, SCORE_EXTS};

#[derive(Debug, Parser)]
#[command(name = "moodloop", version, about = "Emotion-conditioned loop generation pipeline")]
pub struct Cli {
    /// Pipeline config (TOML); flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads for per-file work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Look up valence/energy/mode for every score and write the annotations CSV.
    Annotate(AnnotateArgs),
    /// Per-bar tonal tension (cloud diameter, cloud momentum, tensile strain).
    Tension(TensionArgs),
    /// Extract bar-aligned loops and write a JSON-lines manifest.
    Loops(LoopsArgs),
    /// Build the controlled training corpus from scores and annotations.
    Corpus(CorpusArgs),
    /// Train the n-gram generator on a corpus.
    TrainGen(TrainGenArgs),
    /// Sample token files from an emotion prompt.
    Generate(GenerateArgs),
    /// Train a valence or arousal classifier on a corpus.
    TrainClf(TrainClfArgs),
    /// Score happy/sad generations with the two classifiers (HVP, MVS, HAP, MAS).
    EvalEmotion(EvalEmotionArgs),
    /// Count loops per generation.
    EvalLoops(EvalLoopsArgs),
    /// Wilcoxon, Friedman or Bonferroni-corrected pairwise tests on a numeric CSV.
    EvalStats(EvalStatsArgs),
    /// Summarize listening-test responses.
    Survey(SurveyArgs),
    /// Answer the external-generator protocol on stdin/stdout with a trained model.
    ServeGen(ServeGenArgs),
}

#[derive(Debug, Args)]
pub struct LoopFlags {
    /// Minimum notes in a repeated segment.
    #[arg(long)]
    pub min_rep_notes: Option<usize>,
    /// Minimum beats spanned by a repeated segment.
    #[arg(long)]
    pub min_rep_beats: Option<u32>,
    /// Shortest loop, in bars.
    #[arg(long)]
    pub min_loop_bars: Option<usize>,
    /// Longest loop, in bars.
    #[arg(long)]
    pub max_loop_bars: Option<usize>,
    /// Keep only non-overlapping loops.
    #[arg(long)]
    pub no_overlap: bool,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("provider").required(true).args(["provider_csv", "endpoint"]))]
pub struct AnnotateArgs {
    /// Score file or directory.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Serve lookups from an existing annotations CSV.
    #[arg(long, value_name = "PATH")]
    pub provider_csv: Option<PathBuf>,
    /// HTTP endpoint answering `GET ?artist=..&title=..`.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Environment variable holding the endpoint's bearer token.
    #[arg(long, default_value = DEFAULT_TOKEN_ENV)]
    pub token_env: String,
    /// Retries per lookup after a transport failure.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Output annotations CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TensionArgs {
    /// Score file or directory.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output table (CSV, or JSON for a `.json` path).
    #[arg(long)]
    pub out: PathBuf,
    /// Discretize with these quartile thresholds instead of fitting them.
    #[arg(long, value_name = "PATH")]
    pub thresholds: Option<PathBuf>,
    /// Also write the fitted thresholds here.
    #[arg(long, value_name = "PATH")]
    pub write_thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LoopsArgs {
    /// Score file or directory.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output manifest (one JSON object per loop).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write each loop as a token file into this directory.
    #[arg(long, value_name = "DIR")]
    pub splice_dir: Option<PathBuf>,
    #[command(flatten)]
    pub loops: LoopFlags,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Score file or directory.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Annotations CSV.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Output corpus, one token line per loop.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for the threshold sidecars (default: next to the corpus).
    #[arg(long, value_name = "DIR")]
    pub sidecar_dir: Option<PathBuf>,
    /// Reuse label thresholds instead of fitting medians.
    #[arg(long, value_name = "PATH")]
    pub feature_thresholds: Option<PathBuf>,
    /// Reuse tension quartiles instead of fitting them.
    #[arg(long, value_name = "PATH")]
    pub tension_thresholds: Option<PathBuf>,
    /// Leave out one control group: el (emotion labels), mpf (mode/tempo), tt (tension) or none.
    #[arg(long, default_value = "none")]
    pub ablate: String,
    /// Also write the loop manifest of the corpus here.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub loops: LoopFlags,
}

#[derive(Debug, Args)]
pub struct TrainGenArgs {
    /// Corpus file (default: from config).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output model file (default: <models>/ngram.bin).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// n-gram order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Add-α smoothing constant.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Mask,
    Reject,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// happy or sad.
    #[arg(long)]
    pub emotion: Emotion,
    /// Number of files to write; file i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Base seed (default: from config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trained model (default: <models>/ngram.bin).
    #[arg(long, conflicts_with = "external")]
    pub model: Option<PathBuf>,
    /// Program speaking the line-delimited JSON generator protocol.
    #[arg(long, value_name = "PROGRAM")]
    pub external: Option<String>,
    /// Argument for the external program (repeatable).
    #[arg(long = "external-arg", value_name = "ARG", allow_hyphen_values = true)]
    pub external_args: Vec<String>,
    /// Sampling temperature; 0 means greedy.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Token budget per generation.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Bar budget per generation.
    #[arg(long)]
    pub max_bars: Option<usize>,
    /// How inadmissible tempos are avoided.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Leave one control group out of the prompt: el, mpf, tt or none.
    #[arg(long, default_value = "none")]
    pub ablate: String,
    /// Output directory (files are named <emotion>_<i>.txt).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Valence,
    Arousal,
}

#[derive(Debug, Args)]
pub struct TrainClfArgs {
    /// Corpus file (default: from config).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Label to learn.
    #[arg(long, value_enum)]
    pub target: TargetArg,
    /// Output classifier (default: <models>/<target>.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Gradient-descent epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Gradient-descent step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// L2 penalty.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Held-out fraction for the accuracy report.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Base seed (default: from config).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalEmotionArgs {
    /// Valence classifier (default: <models>/valence.json).
    #[arg(long)]
    pub valence_model: Option<PathBuf>,
    /// Arousal classifier (default: <models>/arousal.json).
    #[arg(long)]
    pub arousal_model: Option<PathBuf>,
    /// NAME=DIR with happy_*.txt and sad_*.txt generations (repeatable;
    /// default: one row over <generations>).
    #[arg(long = "row", value_name = "NAME=DIR")]
    pub rows: Vec<String>,
    /// JSON report; a text table is written next to it with a `.txt` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalLoopsArgs {
    /// NAME=DIR of generated token files (repeatable; default: <generations>).
    #[arg(long = "row", value_name = "NAME=DIR")]
    pub rows: Vec<String>,
    /// JSON report; a text table is written next to it with a `.txt` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub loops: LoopFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatTest {
    /// Paired signed-rank test on exactly two columns.
    Wilcoxon,
    /// Rank test over three or more columns (rows are blocks).
    Friedman,
    /// Wilcoxon on every column pair at α / pairs.
    Pairwise,
}

#[derive(Debug, Args)]
pub struct EvalStatsArgs {
    /// CSV with a header row and one numeric column per group.
    #[arg(long)]
    pub input: PathBuf,
    /// Which test to run.
    #[arg(long, value_enum)]
    pub test: StatTest,
    /// Family-wise significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// JSON report (default: <input stem>.stats.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurveyArgs {
    /// Responses CSV: participant,excerpt_group,question_id,answer[,target].
    #[arg(long)]
    pub responses: PathBuf,
    /// JSON summary; a text table is written next to it with a `.txt` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeGenArgs {
    /// Trained model (default: <models>/ngram.bin).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

/// Parse `argv`, run, and return the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::invalid("--jobs must be positive"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::invalid(e.to_string()))?;
    pool.install(|| dispatch(cli.command, config))
}

fn dispatch(command: Command, config: PipelineConfig) -> Result<()> {
    match command {
        Command::Annotate(a) => annotate(a, &config),
        Command::Tension(a) => tension(a, &config),
        Command::Loops(a) => loops(a, config),
        Command::Corpus(a) => corpus(a, config),
        Command::TrainGen(a) => train_gen(a, &config),
        Command::Generate(a) => generate(a, &config),
        Command::TrainClf(a) => train_clf(a, config),
        Command::EvalEmotion(a) => eval_emotion(a, &config),
        Command::EvalLoops(a) => eval_loops(a, config),
        Command::EvalStats(a) => eval_stats(a),
        Command::Survey(a) => survey(a),
        Command::ServeGen(a) => serve_gen(a, &config),
    }
}

fn apply_loop_flags(config: &mut PipelineConfig, f: &LoopFlags) -> Result<()> {
    let p = &mut config.loops;
    if let Some(v) = f.min_rep_notes {
        p.min_rep_notes = v;
    }
    if let Some(v) = f.min_rep_beats {
        p.min_rep_beats = v;
    }
    if let Some(v) = f.min_loop_bars {
        p.min_loop_bars = v;
    }
    if let Some(v) = f.max_loop_bars {
        p.max_loop_bars = v;
    }
    if f.no_overlap {
        p.allow_overlap = false;
    }
    Ok(p.validate()?)
}

fn groups(name: &str) -> Result<ControlGroups> {
    ControlGroups::without(name)
        .ok_or_else(|| Error::invalid(format!("unknown ablation {name:?} (expected el, mpf, tt or none)")))
}

/// Scores under `path` in path order, loaded in parallel.
fn load_scores(path: &Path) -> Result<Vec<(String, Score)>> {
    let files = list_inputs(path, SCORE_EXTS)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("{}: no score files", path.display())));
    }
    files.par_iter().map(|f| Ok((song_id(f), load_score(f)?))).collect()
}

fn sibling_txt(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

fn annotate(args: AnnotateArgs, config: &PipelineConfig) -> Result<()> {
    let scores = load_scores(args.scores.as_deref().unwrap_or(&config.paths.scores))?;
    let provider: Box<dyn AudioFeaturesProvider> = match (&args.provider_csv, &args.endpoint) {
        (Some(p), _) => Box::new(CsvProvider::from_path(p)?),
        (None, Some(url)) => Box::new(HttpProvider::new(url, &args.token_env)),
        (None, None) => unreachable!("clap requires a provider"),
    };
    let songs: Vec<(String, String)> = scores.iter().map(|(id, s)| artist_title(s, id)).collect();
    let policy = RetryPolicy { retries: args.retries, ..RetryPolicy::default() };
    let outcome = fetch_annotations(provider.as_ref(), &songs, policy);
    for (a, t) in &outcome.misses {
        log::warn!("no annotation for {a} / {t}");
    }
    let out = args.out.as_deref().unwrap_or(&config.paths.annotations);
    write_annotations(out, &outcome.records)?;
    log::info!("{} of {} songs annotated -> {}", outcome.records.len(), songs.len(), out.display());
    if outcome.failures > 0 {
        return Err(Error::Transport(format!(
            "{} of {} lookups failed; partial annotations written to {}",
            outcome.failures,
            songs.len(),
            out.display()
        )));
    }
    Ok(())
}

fn tension(args: TensionArgs, config: &PipelineConfig) -> Result<()> {
    let scores = load_scores(args.scores.as_deref().unwrap_or(&config.paths.scores))?;
    let spiral = config.spiral;
    spiral.validate()?;
    let profiles: Vec<_> =
        scores.par_iter().map(|(id, s)| (id, compute_tension_profile(&regularize_meter(s), &spiral))).collect();
    let thresholds = match &args.thresholds {
        Some(p) => read_tension_thresholds(p)?,
        None => fit_tension_thresholds(profiles.iter().flat_map(|(_, p)| p.bars.iter()))?,
    };
    if let Some(p) = &args.write_thresholds {
        write_tension_thresholds(p, &thresholds)?;
    }
    let rows: Vec<_> =
        profiles.iter().flat_map(|(id, p)| tension_rows(id, &discretize_profile(p, &thresholds))).collect();
    write_tension(&args.out, &rows)
}

fn loops(args: LoopsArgs, mut config: PipelineConfig) -> Result<()> {
    apply_loop_flags(&mut config, &args.loops)?;
    let scores = load_scores(args.scores.as_deref().unwrap_or(&config.paths.scores))?;
    let params = config.loops;
    let found: Vec<(String, Score, Vec<_>)> = scores
        .into_par_iter()
        .map(|(id, s)| {
            let s = regularize_meter(&s);
            let spans = extract_loops(&s, &params);
            (id, s, spans)
        })
        .collect();
    let mut records = Vec::new();
    for (id, score, spans) in &found {
        for span in spans {
            records.push(LoopRecord::new(id, span));
            if let Some(dir) = &args.splice_dir {
                let spliced = moodloop_core::loops::splice_loop(score, span)?;
                let name = format!("{id}_{:03}_{:03}.txt", span.start_bar, span.end_bar);
                write_tokens(&dir.join(name), &score_to_tokens(&spliced))?;
            }
        }
    }
    log::info!("{} loops in {} scores", records.len(), found.len());
    write_loop_manifest(&args.out, &records)
}

fn corpus(args: CorpusArgs, mut config: PipelineConfig) -> Result<()> {
    apply_loop_flags(&mut config, &args.loops)?;
    let annotations = load_annotations(args.annotations.as_deref().unwrap_or(&config.paths.annotations))?;
    let scores = load_scores(args.scores.as_deref().unwrap_or(&config.paths.scores))?;
    let by_key: BTreeMap<String, _> = annotations.into_iter().map(|r| (r.key(), r)).collect();
    let songs: Vec<SongInput> = scores
        .into_iter()
        .map(|(id, score)| {
            let (artist, title) = artist_title(&score, &id);
            let record = by_key.get(&match_key(&artist, &title)).cloned();
            if record.is_none() {
                log::warn!("{id}: no annotation for {artist} / {title}; skipped");
            }
            SongInput { id, score, record }
        })
        .collect();
    let cfg = CorpusConfig {
        loop_params: config.loops,
        spiral: config.spiral,
        groups: groups(&args.ablate)?,
        feature_thresholds: args.feature_thresholds.as_deref().map(read_feature_thresholds).transpose()?,
        tension_thresholds: args.tension_thresholds.as_deref().map(read_tension_thresholds).transpose()?,
    };
    let corpus = build_corpus(&songs, &cfg)?;
    let out = args.out.as_deref().unwrap_or(&config.paths.corpus);
    write_atomic(out, corpus.render().as_bytes())?;
    let sidecars = match &args.sidecar_dir {
        Some(d) => d.clone(),
        None => out.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    write_feature_thresholds(&sidecars.join(FEATURE_THRESHOLDS_FILE), &corpus.feature_thresholds)?;
    write_tension_thresholds(&sidecars.join(TENSION_THRESHOLDS_FILE), &corpus.tension_thresholds)?;
    if let Some(m) = &args.manifest {
        let recs: Vec<_> = corpus.lines.iter().map(|l| LoopRecord::new(&l.song, &l.span)).collect();
        write_loop_manifest(m, &recs)?;
    }
    log::info!(
        "{} lines from {} songs ({} unannotated, {} without loops) -> {}",
        corpus.lines.len(),
        songs.len(),
        corpus.skipped_unannotated,
        corpus.skipped_no_loops,
        out.display()
    );
    Ok(())
}

fn default_model(config: &PipelineConfig) -> PathBuf {
    config.paths.models.join("ngram.bin")
}

fn train_gen(args: TrainGenArgs, config: &PipelineConfig) -> Result<()> {
    let lines = read_corpus(args.corpus.as_deref().unwrap_or(&config.paths.corpus))?;
    let order = args.order.unwrap_or(config.generator.order);
    let alpha = args.alpha.unwrap_or(config.generator.alpha);
    let model = train_generator(&lines, order, alpha)?;
    let out = args.out.unwrap_or_else(|| default_model(config));
    save_model(&out, &model)?;
    log::info!("order-{order} model over {} tokens -> {}", model.vocabulary().len(), out.display());
    Ok(())
}

fn generate(args: GenerateArgs, config: &PipelineConfig) -> Result<()> {
    let g = &config.generator;
    let groups = groups(&args.ablate)?;
    let strategy = match args.strategy {
        Some(StrategyArg::Mask) => TempoStrategy::Mask,
        Some(StrategyArg::Reject) => TempoStrategy::Reject,
        None => g.strategy,
    };
    let base = SamplingConstraints {
        emotion: args.emotion,
        constrain_tempo: groups.psych_features,
        strategy,
        max_tokens: args.max_tokens.unwrap_or(g.max_tokens),
        max_bars: args.max_bars.unwrap_or(g.max_bars),
        temperature: args.temperature.unwrap_or(g.temperature),
        seed: args.seed.unwrap_or(g.seed),
    };
    base.validate()?;
    let prompt = build_prompt_with(args.emotion, &groups);
    let out_dir = args.out.unwrap_or_else(|| config.paths.generations.clone());
    let write_one = |model: &(dyn GeneratorModel + Sync), i: usize| -> Result<()> {
        let c = SamplingConstraints { seed: base.seed.wrapping_add(i as u64), ..base.clone() };
        let stream = sample_sequence(model, &prompt, &c)?;
        write_tokens(&out_dir.join(format!("{}_{i:04}.txt", args.emotion.name())), &stream)
    };
    match &args.external {
        Some(program) => {
            let model = ExternalGenerator::spawn(program, &args.external_args)?;
            (0..args.count).try_for_each(|i| write_one(&model, i))?;
        }
        None => {
            let model = load_model(args.model.as_deref().unwrap_or(&default_model(config)))?;
            (0..args.count).into_par_iter().try_for_each(|i| write_one(&model, i))?;
        }
    }
    log::info!("{} {} generations -> {}", args.count, args.emotion, out_dir.display());
    Ok(())
}

fn label_of(stream: &TokenStream, target: Target) -> Option<bool> {
    let (valence, arousal, _) = stream_levels(stream);
    let level = match target {
        Target::Valence => valence,
        Target::Arousal => arousal,
    };
    level.map(|l| l == Level::High)
}

fn train_clf(args: TrainClfArgs, mut config: PipelineConfig) -> Result<()> {
    let c = &mut config.classifier;
    if let Some(v) = args.epochs {
        c.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = args.l2 {
        c.l2 = v;
    }
    if let Some(v) = args.holdout {
        c.holdout_fraction = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    let target = match args.target {
        TargetArg::Valence => Target::Valence,
        TargetArg::Arousal => Target::Arousal,
    };
    let lines = read_corpus(args.corpus.as_deref().unwrap_or(&config.paths.corpus))?;
    let total = lines.len();
    let examples: Vec<(TokenStream, bool)> =
        lines.into_iter().filter_map(|s| label_of(&s, target).map(|l| (s, l))).collect();
    if examples.len() < total {
        log::warn!("{} corpus lines carry no {target} label; skipped", total - examples.len());
    }
    let (model, report) = train_classifier(&examples, target, &config.classifier)?;
    let out = args.out.unwrap_or_else(|| config.paths.models.join(format!("{target}.json")));
    save_classifier(&out, &model, &report)?;
    log::info!(
        "{target}: train accuracy {:.4}, held-out {} -> {}",
        report.train_accuracy,
        report.heldout_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
        out.display()
    );
    Ok(())
}

fn parse_rows(rows: &[String], config: &PipelineConfig) -> Result<Vec<(String, PathBuf)>> {
    if rows.is_empty() {
        return Ok(vec![("model".into(), config.paths.generations.clone())]);
    }
    rows.iter()
        .map(|r| {
            r.split_once('=')
                .filter(|(n, d)| !n.is_empty() && !d.is_empty())
                .map(|(n, d)| (n.to_owned(), PathBuf::from(d)))
                .ok_or_else(|| Error::invalid(format!("--row {r:?}: expected NAME=DIR")))
        })
        .collect()
}

fn load_streams(files: &[PathBuf]) -> Result<Vec<TokenStream>> {
    files.par_iter().map(|f| crate::scorefile::read_tokens(f)).collect()
}

fn emotion_files(dir: &Path, emotion: Emotion) -> Result<Vec<PathBuf>> {
    let prefix = format!("{}_", emotion.name());
    let files: Vec<_> = list_inputs(dir, &["txt", "tokens"])?
        .into_iter()
        .filter(|f| f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(&prefix)))
        .collect();
    if files.is_empty() {
        return Err(Error::invalid(format!("{}: no {prefix}* generations", dir.display())));
    }
    Ok(files)
}

fn eval_emotion(args: EvalEmotionArgs, config: &PipelineConfig) -> Result<()> {
    let models = &config.paths.models;
    let valence = load_classifier(&args.valence_model.unwrap_or_else(|| models.join("valence.json")))?;
    let arousal = load_classifier(&args.arousal_model.unwrap_or_else(|| models.join("arousal.json")))?;
    let mut rows = Vec::new();
    for (name, dir) in parse_rows(&args.rows, config)? {
        let happy = load_streams(&emotion_files(&dir, Emotion::Happy)?)?;
        let sad = load_streams(&emotion_files(&dir, Emotion::Sad)?)?;
        let metrics = emotion_metrics(&happy, &sad, &valence, &arousal)?;
        rows.push(EmotionRow { name, metrics });
    }
    let out = args.out.unwrap_or_else(|| config.paths.reports.join("emotion.json"));
    let table: Vec<_> = rows.iter().map(|r| (r.name.clone(), r.metrics)).collect();
    write_json(&out, &EmotionReport { rows })?;
    write_atomic(&sibling_txt(&out), render_emotion_table(&table).as_bytes())
}

fn eval_loops(args: EvalLoopsArgs, mut config: PipelineConfig) -> Result<()> {
    apply_loop_flags(&mut config, &args.loops)?;
    let mut rows = Vec::new();
    for (name, dir) in parse_rows(&args.rows, &config)? {
        let files = list_inputs(&dir, SCORE_EXTS)?;
        if files.is_empty() {
            return Err(Error::invalid(format!("{}: no generations", dir.display())));
        }
        let scores: Vec<Score> = files.par_iter().map(|f| load_score(f)).collect::<Result<_>>()?;
        rows.push(LoopRow { name, metric: loop_metric(&scores, &config.loops) });
    }
    let out = args.out.unwrap_or_else(|| config.paths.reports.join("loops.json"));
    let table: Vec<_> = rows.iter().map(|r| (r.name.clone(), r.metric)).collect();
    write_json(&out, &LoopReport { rows })?;
    write_atomic(&sibling_txt(&out), render_loop_table(&table).as_bytes())
}

fn eval_stats(args: EvalStatsArgs) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::invalid("--alpha must lie in (0, 1)"));
    }
    let (columns, rows) = load_columns(&args.input)?;
    let column = |j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
    let mut report = StatsReport { columns: columns.clone(), test: None, pairwise: Vec::new() };
    match args.test {
        StatTest::Wilcoxon => {
            if columns.len() != 2 {
                return Err(Error::invalid(format!("wilcoxon needs exactly 2 columns, found {}", columns.len())));
            }
            report.test = Some(wilcoxon_signed_rank(&column(0), &column(1))?);
        }
        StatTest::Friedman => report.test = Some(friedman(&rows)?),
        StatTest::Pairwise => {
            let groups: Vec<Vec<f64>> = (0..columns.len()).map(column).collect();
            report.pairwise = pairwise_bonferroni(&groups, args.alpha)?;
        }
    }
    let out = args.out.unwrap_or_else(|| sibling_report(&args.input, "stats"));
    write_json(&out, &report)
}

fn sibling_report(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    input.with_file_name(format!("{stem}.{suffix}.json"))
}

fn survey(args: SurveyArgs) -> Result<()> {
    let responses = load_survey(&args.responses)?;
    let summary = survey_summary(&responses);
    let out = args.out.unwrap_or_else(|| sibling_report(&args.responses, "summary"));
    write_json(&out, &summary)?;
    write_atomic(&sibling_txt(&out), render_survey(&summary).as_bytes())
}

fn serve_gen(args: ServeGenArgs, config: &PipelineConfig) -> Result<()> {
    let model = load_model(args.model.as_deref().unwrap_or(&default_model(config)))?;
    let stdin = std::io::stdin();
    serve(&model, stdin.lock(), std::io::stdout().lock())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            assert!(sub.get_about().is_some(), "{} lacks help", sub.get_name());
            for arg in sub.get_arguments() {
                let id = arg.get_id().as_str();
                if matches!(id, "help" | "version" | "provider") {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{}: --{id} undocumented", sub.get_name());
            }
        }
    }

    #[test]
    fn row_syntax() {
        let c = PipelineConfig::default();
        assert_eq!(parse_rows(&["a=x/y".into()], &c).unwrap(), vec![("a".into(), PathBuf::from("x/y"))]);
        assert!(parse_rows(&["nodir".into()], &c).is_err());
        assert_eq!(parse_rows(&[], &c).unwrap()[0].1, c.paths.generations);
    }
}
