//! Command-line front end: `synth`, `label`, `train`, `restore`, `evaluate`.
//!
//! Settings come from an optional TOML file; flags override individual keys.
//! Every command writes its artifacts, plus the effective configuration as
//! `config.toml`, under `--out-dir`. Exit codes: 0 ok, 1 usage, 2 runtime.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusFormat, Granularity, Language, LanguageConfig, Vocabulary};
use crate::error::{JetError, Result};
use crate::evaluation::{self, EvalConfig, PickupMode};
use crate::inference::{self, DecodeConfig, Restorer};
use crate::labeler::{self, EmbeddingTable, Fallback, LabelMode};
use crate::model::{checkpoint, ModelConfig};
use crate::pipeline;
use crate::serializer::SerializerConfig;
use crate::synth::{self, SynthConfig, Template};
use crate::training::{self, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanguageSettings {
    pub language: Language,
    pub granularity: Option<Granularity>,
    pub stopwords: Option<PathBuf>,
    pub lemmatize: Option<bool>,
    pub stem: Option<bool>,
    pub lowercase: Option<bool>,
}

impl Default for LanguageSettings {
    fn default() -> Self {
        LanguageSettings {
            language: Language::English,
            granularity: None,
            stopwords: None,
            lemmatize: None,
            stem: None,
            lowercase: None,
        }
    }
}

impl LanguageSettings {
    pub fn resolve(&self) -> Result<LanguageConfig> {
        let mut cfg = LanguageConfig::for_language(self.language);
        if let Some(g) = self.granularity {
            cfg = cfg.with_granularity(g);
        }
        if let Some(path) = &self.stopwords {
            cfg = cfg.with_stopword_file(path)?;
        }
        cfg.lemmatize = self.lemmatize.unwrap_or(cfg.lemmatize);
        cfg.stem = self.stem.unwrap_or(cfg.stem);
        cfg.lowercase = self.lowercase.unwrap_or(cfg.lowercase);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelSettings {
    pub mode: LabelMode,
    pub embeddings: Option<PathBuf>,
    /// Hash vectors for tokens missing from (or without) an embeddings file.
    pub hash_fallback: bool,
    pub hash_dim: usize,
}

impl Default for LabelSettings {
    fn default() -> Self {
        LabelSettings {
            mode: LabelMode::Hard,
            embeddings: None,
            hash_fallback: false,
            hash_dim: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceSettings {
    pub beam_size: usize,
    /// Derived from the input corpus when absent.
    pub max_len: Option<usize>,
    pub length_penalty: f64,
    pub nbest: Option<usize>,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        let d = DecodeConfig::default();
        InferenceSettings {
            beam_size: d.beam_size,
            max_len: None,
            length_penalty: d.length_penalty,
            nbest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub size: usize,
    pub templates: Vec<Template>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            size: 500,
            templates: Template::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Governs synthesis, parameter init, shuffling, dropout and subsampling.
    pub seed: u64,
    pub max_vocab: usize,
    pub max_input_len: usize,
    pub language: LanguageSettings,
    pub label: LabelSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceSettings,
    pub evaluation: EvalConfig,
    pub synth: SynthSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            max_vocab: 32_000,
            max_input_len: SerializerConfig::default().max_input_len,
            language: LanguageSettings::default(),
            label: LabelSettings::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceSettings::default(),
            evaluation: EvalConfig::default(),
            synth: SynthSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| JetError::io(path, e))?;
        toml::from_str(&text).map_err(|e| JetError::Config(format!("{}: {e}", path.display())))
    }

    /// Copies the global seed into every seeded section.
    fn settle(&mut self) {
        self.train.seed = self.seed;
        self.model.seed = self.seed;
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| JetError::Config(e.to_string()))
    }

    fn serializer(&self) -> SerializerConfig {
        SerializerConfig {
            max_input_len: self.max_input_len,
            ..SerializerConfig::default()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "jet", about = "Incomplete utterance restoration with a joint picker and generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving every artifact of the command.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a templated synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        size: Option<usize>,
        /// Comma-separated template names.
        #[arg(long, value_delimiter = ',')]
        templates: Option<Vec<Template>>,
    },
    /// Attach picker labels to a corpus.
    Label {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: Option<LabelMode>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        hash_fallback: bool,
    },
    /// Train a model on a (labeled) corpus.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        label_mode: Option<LabelMode>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Restore every utterance of a corpus with a trained checkpoint.
    Restore {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to `vocab.json` next to the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam_size: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        nbest: Option<usize>,
    },
    /// Score predictions against gold references.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Labeled corpus supplying important tokens.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        pickup_mode: Option<PickupMode>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Label { common, .. }
            | Command::Train { common, .. }
            | Command::Restore { common, .. }
            | Command::Evaluate { common, .. } => common,
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(JetError::Config(format!("{} does not exist", path.display())))
    }
}

fn prepare_out(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| JetError::io(dir, e))?;
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml()?).map_err(|e| JetError::io(&path, e))
}

/// Refuses to write over one of the command's inputs.
fn guard(output: &Path, inputs: &[&Path]) -> Result<()> {
    let out = fs::canonicalize(output).ok();
    for input in inputs {
        if out.is_some() && out == fs::canonicalize(input).ok() {
            return Err(JetError::Config(format!(
                "output {} would overwrite an input",
                output.display()
            )));
        }
    }
    Ok(())
}

fn effective_config(cmd: &Command) -> Result<ExperimentConfig> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(path) => {
            require(path)?;
            ExperimentConfig::load(path)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    match cmd {
        Command::Synth { size, templates, .. } => {
            cfg.synth.size = size.unwrap_or(cfg.synth.size);
            if let Some(t) = templates {
                cfg.synth.templates = t.clone();
            }
        }
        Command::Label {
            mode,
            embeddings,
            hash_fallback,
            ..
        } => {
            cfg.label.mode = mode.unwrap_or(cfg.label.mode);
            if embeddings.is_some() {
                cfg.label.embeddings = embeddings.clone();
            }
            cfg.label.hash_fallback |= hash_fallback;
        }
        Command::Train {
            label_mode,
            alpha,
            epochs,
            learning_rate,
            batch_size,
            fraction,
            ..
        } => {
            let t = &mut cfg.train;
            t.label_mode = label_mode.unwrap_or(t.label_mode);
            t.alpha = alpha.unwrap_or(t.alpha);
            t.epochs = epochs.unwrap_or(t.epochs);
            t.learning_rate = learning_rate.unwrap_or(t.learning_rate);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            t.subsample_fraction = fraction.unwrap_or(t.subsample_fraction);
        }
        Command::Restore {
            beam_size,
            max_len,
            nbest,
            ..
        } => {
            let i = &mut cfg.inference;
            i.beam_size = beam_size.unwrap_or(i.beam_size);
            i.max_len = max_len.or(i.max_len);
            i.nbest = nbest.or(i.nbest);
        }
        Command::Evaluate { pickup_mode, .. } => {
            cfg.evaluation.pickup_mode = pickup_mode.unwrap_or(cfg.evaluation.pickup_mode);
        }
    }
    cfg.settle();
    cfg.train.validate()?;
    Ok(cfg)
}

fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let samples = synth::generate(&SynthConfig {
        size: cfg.synth.size,
        seed: cfg.seed,
        templates: cfg.synth.templates.clone(),
    })?;
    let path = out.join("corpus.jsonl");
    corpus::write_jsonl(&path, &samples)?;
    println!("wrote {} samples to {}", samples.len(), path.display());
    Ok(())
}

fn embedding_table(s: &LabelSettings) -> Result<EmbeddingTable> {
    let fallback = if s.hash_fallback {
        Fallback::Hash { seed: 0 }
    } else {
        Fallback::Zero
    };
    match &s.embeddings {
        Some(path) => EmbeddingTable::load(path, fallback),
        None if s.mode == LabelMode::Soft && !s.hash_fallback => Err(JetError::Config(
            "soft labels need --embeddings or --hash-fallback".into(),
        )),
        None => EmbeddingTable::new(s.hash_dim, fallback),
    }
}

fn cmd_label(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<()> {
    let lang = cfg.language.resolve()?;
    let samples = corpus::load_corpus(input, CorpusFormat::Jsonl)?;
    let emb = embedding_table(&cfg.label)?;
    let labeled = pipeline::label_corpus(&samples, cfg.label.mode, &emb, &lang)?;
    let path = out.join(format!("labeled.{}.jsonl", cfg.label.mode));
    guard(&path, &[input])?;
    corpus::write_jsonl(&path, &labeled)?;
    let stats = pipeline::label_stats(&labeled);
    println!(
        "labeled {} samples ({} mode): {:.1}% of {} context words important",
        stats.samples,
        cfg.label.mode,
        100.0 * stats.density(),
        stats.context_words
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    samples: usize,
    epochs: usize,
    steps: u64,
    skipped_steps: u64,
    parameters: usize,
}

fn cmd_train(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<()> {
    let lang = cfg.language.resolve()?;
    let labeled = labeler::load_labeled(input)?;
    let every = cfg.train.checkpoint_every;
    let fitted = pipeline::fit(
        &labeled,
        &lang,
        &cfg.serializer(),
        &cfg.train,
        &cfg.model,
        cfg.max_vocab,
        |state, record, vocab| {
            eprintln!(
                "epoch {:>3}  picker {:.4}  generator {:.4}  joint {:.4}",
                record.epoch, record.picker_loss, record.generator_loss, record.joint_loss
            );
            if every > 0 && record.epoch % every == 0 {
                let path = out.join(format!("model-epoch{}.ckpt", record.epoch));
                checkpoint::save(&path, &state.params, Some(vocab.fingerprint()))?;
            }
            Ok(())
        },
    )?;
    fitted.vocab.save(&out.join("vocab.json"))?;
    checkpoint::save(
        &out.join("model.ckpt"),
        fitted.params(),
        Some(fitted.vocab.fingerprint()),
    )?;
    training::write_loss_log(&out.join("loss_log.csv"), fitted.log())?;
    let summary = TrainSummary {
        samples: fitted.outcome.samples,
        epochs: fitted.outcome.state.epoch,
        steps: fitted.outcome.state.step,
        skipped_steps: fitted.outcome.state.skipped_steps,
        parameters: fitted.params().num_scalars(),
    };
    let path = out.join("train_summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| JetError::io(&path, e))?;
    println!(
        "trained on {} samples for {} epochs ({} steps); checkpoint at {}",
        summary.samples,
        summary.epochs,
        summary.steps,
        out.join("model.ckpt").display()
    );
    Ok(())
}

fn cmd_restore(cfg: &ExperimentConfig, ckpt: &Path, vocab: Option<&Path>, input: &Path, out: &Path) -> Result<()> {
    let lang = cfg.language.resolve()?;
    let vocab_path = match vocab {
        Some(v) => v.to_path_buf(),
        None => ckpt.with_file_name("vocab.json"),
    };
    require(&vocab_path)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let (params, manifest) = checkpoint::load(ckpt)?;
    checkpoint::check_vocab(&manifest, vocab.fingerprint(), vocab.len())?;
    let samples = corpus::load_corpus(input, CorpusFormat::Jsonl)?;
    let decode = DecodeConfig {
        beam_size: cfg.inference.beam_size,
        max_len: cfg
            .inference
            .max_len
            .unwrap_or_else(|| pipeline::default_max_len(&samples, &lang)),
        length_penalty: cfg.inference.length_penalty,
    };
    let restorer = Restorer::new(&params, &vocab, &lang, cfg.serializer(), decode)?;
    let predictions = restorer.predict_all(&samples, cfg.inference.nbest)?;
    let path = out.join("predictions.jsonl");
    guard(&path, &[input])?;
    inference::write_predictions(&path, &predictions)?;
    println!("wrote {} predictions to {}", predictions.len(), path.display());
    Ok(())
}

fn cmd_evaluate(cfg: &ExperimentConfig, preds: &Path, gold: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let lang = cfg.language.resolve()?;
    let predictions = inference::load_predictions(preds)?;
    let gold = corpus::load_corpus(gold, CorpusFormat::Jsonl)?;
    let labeled = labels.map(labeler::load_labeled).transpose()?;
    let report = evaluation::evaluate(&predictions, &gold, labeled.as_deref(), &lang, &cfg.evaluation)?;
    evaluation::write_report(out, &report)?;
    print!("{report}");
    Ok(())
}

/// Runs one command. Errors are classified by [`exit_code`].
pub fn run(cli: &Cli) -> Result<()> {
    let cmd = &cli.command;
    let cfg = effective_config(cmd)?;
    let out = &cmd.common().out_dir;
    match cmd {
        Command::Synth { .. } => {
            prepare_out(out, &cfg)?;
            cmd_synth(&cfg, out)
        }
        Command::Label { input, .. } => {
            require(input)?;
            prepare_out(out, &cfg)?;
            cmd_label(&cfg, input, out)
        }
        Command::Train { input, .. } => {
            require(input)?;
            prepare_out(out, &cfg)?;
            cmd_train(&cfg, input, out)
        }
        Command::Restore {
            checkpoint,
            vocab,
            input,
            ..
        } => {
            require(checkpoint)?;
            require(input)?;
            prepare_out(out, &cfg)?;
            cmd_restore(&cfg, checkpoint, vocab.as_deref(), input, out)
        }
        Command::Evaluate {
            predictions,
            gold,
            labels,
            ..
        } => {
            require(predictions)?;
            require(gold)?;
            if let Some(l) = labels {
                require(l)?;
            }
            prepare_out(out, &cfg)?;
            cmd_evaluate(&cfg, predictions, gold, labels.as_deref(), out)
        }
    }
}

/// 1 for configuration and usage problems, 2 for everything else.
pub fn exit_code(err: &JetError) -> i32 {
    match err {
        JetError::Config(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
