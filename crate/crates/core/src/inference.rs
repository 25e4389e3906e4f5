//! Greedy and beam-search decoding, and end-to-end restoration.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, DialogueSample, LanguageConfig, TokenId, Vocabulary};
use crate::error::{JetError, Result};
use crate::labeler::{self, BioTag};
use crate::model::{self, EncoderOutput, ModelParameters};
use crate::serializer::{self, EncodedSample, Segment, SerializerConfig};

/// Next-token log-probabilities given an `<s>`-initiated prefix.
pub trait StepModel {
    fn vocab_size(&self) -> usize;
    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

/// Transformer decoder over a fixed encoder output. Tokens that never occur
/// in targets (padding, `<s>`) are banned.
pub struct TransformerStep<'a> {
    params: &'a ModelParameters,
    enc: EncoderOutput,
    banned: Vec<TokenId>,
}

impl<'a> TransformerStep<'a> {
    pub fn new(params: &'a ModelParameters, enc: EncoderOutput) -> Self {
        TransformerStep {
            params,
            enc,
            banned: vec![Vocabulary::PAD_ID, Vocabulary::SOS_ID],
        }
    }

    pub fn unrestricted(params: &'a ModelParameters, enc: EncoderOutput) -> Self {
        TransformerStep {
            params,
            enc,
            banned: Vec::new(),
        }
    }
}

impl StepModel for TransformerStep<'_> {
    fn vocab_size(&self) -> usize {
        self.params.config.vocab_size
    }

    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut lp = model::next_token_log_probs(&self.enc, prefix, self.params)?;
        for &b in &self.banned {
            if let Some(x) = lp.get_mut(b) {
                *x = f64::NEG_INFINITY;
            }
        }
        Ok(lp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// Starts with `<s>`; ends with `</s>` when finished.
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    fn root() -> Self {
        BeamHypothesis {
            tokens: vec![Vocabulary::SOS_ID],
            log_prob: 0.0,
            finished: false,
        }
    }

    /// Generated tokens, `</s>` included.
    pub fn generated(&self) -> usize {
        self.tokens.len() - 1
    }

    /// `log_prob / generated^penalty`.
    pub fn score(&self, length_penalty: f64) -> f64 {
        let len = self.generated().max(1) as f64;
        self.log_prob / len.powf(length_penalty)
    }

    /// Content tokens: `<s>` and `</s>` stripped.
    pub fn output(&self) -> &[TokenId] {
        let end = if self.finished {
            self.tokens.len() - 1
        } else {
            self.tokens.len()
        };
        &self.tokens[1..end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Cap on generated tokens, `</s>` included.
    pub max_len: usize,
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 8,
            max_len: 64,
            length_penalty: 1.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_len == 0 {
            return Err(JetError::Config("beam size and max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Lowest id among the maxima.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY || v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Appends the argmax token until `</s>` or `max_len` generated tokens.
/// Returns the content tokens.
pub fn greedy_decode(model: &dyn StepModel, max_len: usize) -> Result<Vec<TokenId>> {
    let mut tokens = vec![Vocabulary::SOS_ID];
    for _ in 0..max_len {
        let lp = model.log_probs(&tokens)?;
        let Some(next) = argmax(&lp) else { break };
        if next == Vocabulary::EOS_ID {
            break;
        }
        tokens.push(next);
    }
    tokens.remove(0);
    Ok(tokens)
}

fn rank(a: &BeamHypothesis, b: &BeamHypothesis, penalty: f64) -> Ordering {
    b.score(penalty)
        .total_cmp(&a.score(penalty))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    pub best: BeamHypothesis,
    /// Finished hypotheses by descending score, then live ones.
    pub ranked: Vec<BeamHypothesis>,
}

/// Beam search. Every step expands each live hypothesis over the vocabulary
/// and keeps the top `beam_size` candidates; those ending in `</s>` move to
/// the finished pool. Returns the best finished hypothesis, or the best live
/// one when nothing finished within `max_len`.
pub fn beam_search(model: &dyn StepModel, cfg: &DecodeConfig) -> Result<BeamResult> {
    cfg.validate()?;
    let penalty = cfg.length_penalty;
    let mut live = vec![BeamHypothesis::root()];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    for _ in 0..cfg.max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates = Vec::with_capacity(live.len() * model.vocab_size());
        for h in &live {
            let lp = model.log_probs(&h.tokens)?;
            for (tok, &l) in lp.iter().enumerate() {
                if l == f64::NEG_INFINITY || l.is_nan() {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(tok);
                candidates.push(BeamHypothesis {
                    tokens,
                    log_prob: h.log_prob + l,
                    finished: tok == Vocabulary::EOS_ID,
                });
            }
        }
        candidates.sort_by(|a, b| rank(a, b, penalty));
        candidates.truncate(cfg.beam_size);
        live.clear();
        for c in candidates {
            if c.finished {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
    }
    finished.sort_by(|a, b| rank(a, b, penalty));
    live.sort_by(|a, b| rank(a, b, penalty));
    let ranked: Vec<BeamHypothesis> = finished.into_iter().chain(live).collect();
    let best = ranked
        .first()
        .cloned()
        .unwrap_or_else(BeamHypothesis::root);
    Ok(BeamResult { best, ranked })
}

/// Everything restoration needs besides the parameters.
pub struct Restorer<'a> {
    pub params: &'a ModelParameters,
    pub vocab: &'a Vocabulary,
    pub lang: &'a LanguageConfig,
    pub ser: SerializerConfig,
    pub decode: DecodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRestoration {
    pub prediction: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbest: Option<Vec<RankedRestoration>>,
}

impl<'a> Restorer<'a> {
    /// Fails when the parameters were not built for this vocabulary.
    pub fn new(
        params: &'a ModelParameters,
        vocab: &'a Vocabulary,
        lang: &'a LanguageConfig,
        ser: SerializerConfig,
        decode: DecodeConfig,
    ) -> Result<Self> {
        if params.config.vocab_size != vocab.len() {
            return Err(JetError::Checkpoint(format!(
                "model vocabulary size {} does not match vocabulary of size {}",
                params.config.vocab_size,
                vocab.len()
            )));
        }
        decode.validate()?;
        Ok(Restorer {
            params,
            vocab,
            lang,
            ser,
            decode,
        })
    }

    fn text(&self, ids: &[TokenId]) -> String {
        let tokens: Vec<&str> = ids
            .iter()
            .filter(|&&id| !matches!(id, Vocabulary::PAD_ID | Vocabulary::SOS_ID | Vocabulary::EOS_ID))
            .map(|&id| self.vocab.token(id).unwrap_or(corpus::UNK))
            .collect();
        corpus::detokenize(&tokens, self.lang.granularity)
    }

    pub fn search(&self, sample: &DialogueSample) -> Result<BeamResult> {
        let encoded = serializer::build_input(sample, self.vocab, self.lang, &self.ser)?;
        let mask = vec![true; encoded.len()];
        let enc = model::encode_one(&encoded.input_ids, &mask, self.params)?;
        beam_search(&TransformerStep::new(self.params, enc), &self.decode)
    }

    pub fn restore(&self, sample: &DialogueSample) -> Result<String> {
        Ok(self.text(self.search(sample)?.best.output()))
    }

    /// Best restoration plus the top `nbest` ranked alternatives.
    pub fn predict(&self, sample: &DialogueSample, nbest: Option<usize>) -> Result<Prediction> {
        let result = self.search(sample)?;
        let nbest = nbest.map(|k| {
            result
                .ranked
                .iter()
                .take(k)
                .map(|h| RankedRestoration {
                    prediction: self.text(h.output()),
                    score: h.score(self.decode.length_penalty),
                })
                .collect()
        });
        Ok(Prediction {
            id: sample.id.clone(),
            prediction: self.text(result.best.output()),
            nbest,
        })
    }

    /// One prediction per sample, in input order. Duplicate ids are rejected.
    pub fn predict_all(&self, samples: &[DialogueSample], nbest: Option<usize>) -> Result<Vec<Prediction>> {
        let mut seen = HashSet::new();
        if let Some(dup) = samples.iter().find(|s| !seen.insert(s.id.as_str())) {
            return Err(JetError::DuplicateId(dup.id.clone()));
        }
        samples.iter().map(|s| self.predict(s, nbest)).collect()
    }
}

/// Word-level picker decisions per original context utterance, read at each
/// word's first piece. Soft heads are thresholded at 0.5. Utterances dropped
/// by truncation are all `O`.
pub fn predict_tags(params: &ModelParameters, encoded: &EncodedSample) -> Result<Vec<Vec<BioTag>>> {
    let mask = vec![true; encoded.len()];
    let enc = model::encode_one(&encoded.input_ids, &mask, params)?;
    let probs = model::picker_forward(&enc, params);
    let mut bits: Vec<Vec<bool>> = encoded
        .context_word_counts
        .iter()
        .map(|&n| vec![false; n])
        .collect();
    let mut tags: Vec<Vec<Option<BioTag>>> = bits.iter().map(|b| vec![None; b.len()]).collect();
    let mut last = None;
    for (pos, seg) in encoded.segments.iter().enumerate() {
        let Segment::Context { utterance, word } = *seg else { continue };
        if last == Some((utterance, word)) {
            continue;
        }
        last = Some((utterance, word));
        let row = probs.row(pos);
        if params.config.picker_arity == 1 {
            bits[utterance][word] = row[0] >= 0.5;
        } else {
            let best = argmax(row.as_slice().expect("contiguous row")).unwrap_or(BioTag::O.class_id());
            tags[utterance][word] = BioTag::from_class_id(best);
        }
    }
    Ok(if params.config.picker_arity == 1 {
        bits.iter().map(|b| labeler::to_bio(b)).collect()
    } else {
        tags.into_iter()
            .map(|u| u.into_iter().map(|t| t.unwrap_or(BioTag::O)).collect())
            .collect()
    })
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    corpus::write_jsonl(path, predictions)
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line).map_err(|e| JetError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| JetError::io(path, e))?;
    parse_predictions(&text)
}
