//! Glue between the stages: labeling a corpus, fitting a model on it and
//! restoring with the result.

use serde::{Deserialize, Serialize};

use crate::corpus::{self, DialogueSample, LanguageConfig, Vocabulary};
use crate::error::{JetError, Result};
use crate::inference::{DecodeConfig, Prediction, Restorer};
use crate::labeler::{EmbeddingTable, LabelMode, LabeledSample, Labeler, PickerLabels};
use crate::model::{ModelConfig, ModelParameters};
use crate::serializer::SerializerConfig;
use crate::training::{self, EpochRecord, TrainConfig, TrainOutcome, TrainState};

/// Labels every sample. `Defined` keeps existing annotations and `None`
/// strips labels.
pub fn label_corpus(
    samples: &[DialogueSample],
    mode: LabelMode,
    emb: &EmbeddingTable,
    lang: &LanguageConfig,
) -> Result<Vec<LabeledSample>> {
    match mode {
        LabelMode::Soft | LabelMode::Hard => {
            if let Some(s) = samples.iter().find(|s| s.reference.is_none()) {
                return Err(JetError::InvalidInput(format!(
                    "sample `{}` has no reference; labels require gold",
                    s.id
                )));
            }
            let labeler = Labeler::new(lang, emb);
            samples.iter().map(|s| labeler.label(s, mode)).collect()
        }
        LabelMode::Defined => Err(JetError::Config(
            "defined labels come from annotations, not from the labeler".into(),
        )),
        LabelMode::None => Ok(samples.iter().cloned().map(LabeledSample::unlabeled).collect()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub samples: usize,
    pub context_words: usize,
    /// Hard/defined: words tagged B or I. Soft: summed scores.
    pub important: f64,
}

impl LabelStats {
    pub fn density(&self) -> f64 {
        if self.context_words == 0 {
            0.0
        } else {
            self.important / self.context_words as f64
        }
    }
}

pub fn label_stats(labeled: &[LabeledSample]) -> LabelStats {
    let mut stats = LabelStats {
        samples: labeled.len(),
        context_words: 0,
        important: 0.0,
    };
    for l in labeled {
        match &l.labels {
            Some(PickerLabels::Soft { scores }) => {
                stats.context_words += scores.iter().map(Vec::len).sum::<usize>();
                stats.important += scores.iter().flatten().sum::<f64>();
            }
            Some(PickerLabels::Hard { tags } | PickerLabels::Defined { tags }) => {
                stats.context_words += tags.iter().map(Vec::len).sum::<usize>();
                stats.important += tags
                    .iter()
                    .flatten()
                    .filter(|t| **t != crate::labeler::BioTag::O)
                    .count() as f64;
            }
            None => {}
        }
    }
    stats
}

/// A model template with the vocabulary size and picker arity filled in.
pub fn model_for(template: &ModelConfig, vocab: &Vocabulary, mode: LabelMode) -> ModelConfig {
    let arity = training::arity_for(mode);
    let mut cfg = template.clone();
    cfg.vocab_size = vocab.len();
    cfg.picker_arity = arity;
    if let Some(last) = cfg.picker_widths.last_mut() {
        *last = arity;
    }
    cfg
}

pub struct Fitted {
    pub vocab: Vocabulary,
    pub model: ModelConfig,
    pub outcome: TrainOutcome,
}

impl Fitted {
    pub fn params(&self) -> &ModelParameters {
        &self.outcome.state.params
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.outcome.log
    }
}

/// Subsamples, builds the vocabulary from the training split, and trains.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    corpus: &[LabeledSample],
    lang: &LanguageConfig,
    ser: &SerializerConfig,
    train_cfg: &TrainConfig,
    template: &ModelConfig,
    max_vocab: usize,
    mut on_epoch: impl FnMut(&TrainState, &EpochRecord, &Vocabulary) -> Result<()>,
) -> Result<Fitted> {
    train_cfg.validate()?;
    let corpus = training::subsample(corpus, train_cfg.subsample_fraction, train_cfg.seed);
    let samples: Vec<DialogueSample> = corpus.iter().map(|l| l.sample.clone()).collect();
    let vocab = corpus::build_vocab(&samples, max_vocab, lang)?;
    let model = model_for(template, &vocab, train_cfg.label_mode);
    let data = training::prepare(&corpus, train_cfg.label_mode, &vocab, lang, ser)?;
    let outcome = training::train(&data, train_cfg, &model, |s, r| on_epoch(s, r, &vocab))?;
    Ok(Fitted {
        vocab,
        model,
        outcome,
    })
}

/// Beam-decodes every sample with the fitted model.
pub fn restore_all(
    params: &ModelParameters,
    vocab: &Vocabulary,
    lang: &LanguageConfig,
    ser: SerializerConfig,
    decode: DecodeConfig,
    samples: &[DialogueSample],
) -> Result<Vec<Prediction>> {
    Restorer::new(params, vocab, lang, ser, decode)?.predict_all(samples, None)
}

/// Generated-token cap: longest reference in pieces plus 8, at most 64.
/// Without references, the utterance plus its longest context turn stands in
/// for the reference length.
pub fn default_max_len(samples: &[DialogueSample], lang: &LanguageConfig) -> usize {
    let pieces = |t: &str| corpus::tokenize(t, lang).len();
    let longest = samples
        .iter()
        .map(|s| match s.reference.as_deref() {
            Some(r) => pieces(r),
            None => pieces(&s.incomplete) + s.context.iter().map(|c| pieces(c)).max().unwrap_or(0),
        })
        .max()
        .unwrap_or(0);
    (longest + 8).min(64)
}
