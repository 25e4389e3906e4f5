//! Automatic picker supervision.
//!
//! Clue tokens are the normalized reference tokens that the incomplete
//! utterance lacks. Every normalized context word is scored against every
//! clue by cosine similarity of word vectors; the soft label of a word is its
//! best score clamped to `[0, 1]`, and the hard label marks words whose best
//! score is exactly 1, which only an identical normalized string produces.
//! Runs of hard-labeled words become BIO spans.

mod embedding;
mod lemma;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, DialogueSample, LanguageConfig};
use crate::error::{JetError, Result};

pub use embedding::{similarity, EmbeddingTable, Fallback};
pub use lemma::lemmatize_noun;

/// Largest score a non-identical pair may receive. Keeps `score == 1` an
/// exact-match signal even when two distinct tokens share a vector.
const MAX_INEXACT: f64 = 1.0 - f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    pub fn class_id(self) -> usize {
        match self {
            BioTag::B => 0,
            BioTag::I => 1,
            BioTag::O => 2,
        }
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        match id {
            0 => Some(BioTag::B),
            1 => Some(BioTag::I),
            2 => Some(BioTag::O),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Soft,
    Hard,
    /// Externally annotated important tokens passed through unchanged.
    Defined,
    /// No picker supervision (generator-only training).
    None,
}

impl FromStr for LabelMode {
    type Err = JetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(LabelMode::Soft),
            "hard" => Ok(LabelMode::Hard),
            "defined" => Ok(LabelMode::Defined),
            "none" => Ok(LabelMode::None),
            other => Err(JetError::Config(format!("unknown label mode `{other}`"))),
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LabelMode::Soft => "soft",
            LabelMode::Hard => "hard",
            LabelMode::Defined => "defined",
            LabelMode::None => "none",
        };
        f.write_str(s)
    }
}

/// Word-level picker supervision, one inner vector per context utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PickerLabels {
    Soft { scores: Vec<Vec<f64>> },
    Hard { tags: Vec<Vec<BioTag>> },
    Defined { tags: Vec<Vec<BioTag>> },
}

impl PickerLabels {
    pub fn mode(&self) -> LabelMode {
        match self {
            PickerLabels::Soft { .. } => LabelMode::Soft,
            PickerLabels::Hard { .. } => LabelMode::Hard,
            PickerLabels::Defined { .. } => LabelMode::Defined,
        }
    }

    pub fn tags(&self) -> Option<&[Vec<BioTag>]> {
        match self {
            PickerLabels::Hard { tags } | PickerLabels::Defined { tags } => Some(tags),
            PickerLabels::Soft { .. } => None,
        }
    }

    pub fn utterance_lengths(&self) -> Vec<usize> {
        match self {
            PickerLabels::Soft { scores } => scores.iter().map(Vec::len).collect(),
            PickerLabels::Hard { tags } | PickerLabels::Defined { tags } => {
                tags.iter().map(Vec::len).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PickerLabels::Soft { scores } => {
                if scores.iter().flatten().any(|s| !(0.0..=1.0).contains(s)) {
                    return Err(JetError::InvalidInput("soft score outside [0, 1]".into()));
                }
            }
            PickerLabels::Hard { tags } | PickerLabels::Defined { tags } => {
                for (u, seq) in tags.iter().enumerate() {
                    if !is_well_formed_bio(seq) {
                        return Err(JetError::InvalidInput(format!(
                            "ill-formed BIO sequence in context utterance {u}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A sample plus its picker supervision (absent for generator-only runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    #[serde(flatten)]
    pub sample: DialogueSample,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PickerLabels>,
}

impl LabeledSample {
    pub fn unlabeled(sample: DialogueSample) -> Self {
        LabeledSample {
            sample,
            labels: None,
        }
    }
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| JetError::io(path, e))?;
    parse_labeled(&text)
}

pub fn parse_labeled(text: &str) -> Result<Vec<LabeledSample>> {
    let records = corpus::parse_jsonl_records(text)?;
    let mut line = 0;
    let mut out = Vec::with_capacity(records.len());
    for (sample, obj) in records {
        line += 1;
        let labels = match obj.get("labels") {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => {
                let labels: PickerLabels =
                    serde_json::from_value(v.clone()).map_err(|e| JetError::Parse {
                        line,
                        message: format!("bad `labels`: {e}"),
                    })?;
                labels.validate().map_err(|e| JetError::Parse {
                    line,
                    message: e.to_string(),
                })?;
                Some(labels)
            }
        };
        out.push(LabeledSample { sample, labels });
    }
    Ok(out)
}

/// Shared lemmatizer/stemmer state for one language configuration.
pub struct Normalizer<'a> {
    cfg: &'a LanguageConfig,
    stemmer: Option<Stemmer>,
}

impl<'a> Normalizer<'a> {
    pub fn new(cfg: &'a LanguageConfig) -> Self {
        let stemmer = cfg.stem.then(|| Stemmer::create(Algorithm::English));
        Normalizer { cfg, stemmer }
    }

    /// Normal form of a single token, or `None` for a stopword.
    pub fn normalize_token(&self, token: &str) -> Option<String> {
        let lower = token.to_lowercase();
        if lower.is_empty() || self.cfg.stopwords.contains(&lower) {
            return None;
        }
        let lemma = if self.cfg.lemmatize {
            lemmatize_noun(&lower)
        } else {
            lower
        };
        Some(match &self.stemmer {
            Some(s) => s.stem(&lemma).into_owned(),
            None => lemma,
        })
    }

    pub fn normalize<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(usize, String)> {
        tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| self.normalize_token(t.as_ref()).map(|n| (i, n)))
            .collect()
    }
}

/// Drops stopwords, then lowercases, lemmatizes and stems the survivors,
/// keeping each survivor's original index.
pub fn normalize<S: AsRef<str>>(tokens: &[S], cfg: &LanguageConfig) -> Vec<(usize, String)> {
    Normalizer::new(cfg).normalize(tokens)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClueTokenSet {
    tokens: BTreeSet<String>,
    surface: BTreeMap<String, BTreeSet<String>>,
}

impl ClueTokenSet {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = ClueTokenSet::default();
        for t in tokens {
            let t = t.into();
            set.surface.entry(t.clone()).or_default().insert(t.clone());
            set.tokens.insert(t);
        }
        set
    }

    /// Clue tokens in sorted order (the column order of a score matrix).
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Reference surface forms that normalized to `token`.
    pub fn surface_forms(&self, token: &str) -> Option<&BTreeSet<String>> {
        self.surface.get(token)
    }
}

pub fn extract_clue_tokens(reference: &str, incomplete: &str, cfg: &LanguageConfig) -> ClueTokenSet {
    let norm = Normalizer::new(cfg);
    extract_with(&norm, reference, incomplete, cfg)
}

fn extract_with(
    norm: &Normalizer<'_>,
    reference: &str,
    incomplete: &str,
    cfg: &LanguageConfig,
) -> ClueTokenSet {
    let inc_words = corpus::words(incomplete, cfg);
    let present: HashSet<String> = norm.normalize(&inc_words).into_iter().map(|(_, n)| n).collect();
    let ref_words = corpus::words(reference, cfg);
    let mut set = ClueTokenSet::default();
    for (i, n) in norm.normalize(&ref_words) {
        if present.contains(&n) {
            continue;
        }
        set.surface.entry(n.clone()).or_default().insert(ref_words[i].clone());
        set.tokens.insert(n);
    }
    set
}

/// Cosine scores between normalized context words (rows) and clue tokens
/// (columns). Identical strings score exactly 1 regardless of the table;
/// every other pair scores strictly below 1.
pub fn score_matrix<S: AsRef<str>>(
    context_words: &[S],
    clues: &ClueTokenSet,
    emb: &EmbeddingTable,
) -> Vec<Vec<f64>> {
    let clue_vecs: Vec<(&str, Option<Vec<f64>>)> =
        clues.tokens().map(|c| (c, emb.vector(c))).collect();
    context_words
        .iter()
        .map(|w| {
            let w = w.as_ref();
            let wv = if clue_vecs.is_empty() { None } else { emb.vector(w) };
            clue_vecs
                .iter()
                .map(|(c, cv)| {
                    if *c == w {
                        1.0
                    } else {
                        match (&wv, cv) {
                            (Some(a), Some(b)) => similarity(a, b).min(MAX_INEXACT),
                            _ => 0.0,
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Row maxima clamped to `[0, 1]`; empty rows score 0.
pub fn soft_labels(d: &[Vec<f64>]) -> Vec<f64> {
    d.iter()
        .map(|row| row.iter().copied().fold(0.0_f64, f64::max).clamp(0.0, 1.0))
        .collect()
}

/// 1 where the row maximum is exactly 1.
pub fn hard_labels(d: &[Vec<f64>]) -> Vec<bool> {
    d.iter().map(|row| row.iter().any(|&x| x == 1.0)).collect()
}

/// Each maximal run of marked words becomes `B I I ...`; the rest are `O`.
pub fn to_bio(bits: &[bool]) -> Vec<BioTag> {
    let mut prev = false;
    bits.iter()
        .map(|&b| {
            let tag = match (b, prev) {
                (false, _) => BioTag::O,
                (true, false) => BioTag::B,
                (true, true) => BioTag::I,
            };
            prev = b;
            tag
        })
        .collect()
}

pub fn is_well_formed_bio(tags: &[BioTag]) -> bool {
    let mut prev = BioTag::O;
    for &t in tags {
        if t == BioTag::I && prev == BioTag::O {
            return false;
        }
        prev = t;
    }
    true
}

/// Reusable labeling pipeline over one embedding table and language config.
pub struct Labeler<'a> {
    cfg: &'a LanguageConfig,
    emb: &'a EmbeddingTable,
    norm: Normalizer<'a>,
}

impl<'a> Labeler<'a> {
    pub fn new(cfg: &'a LanguageConfig, emb: &'a EmbeddingTable) -> Self {
        Labeler {
            cfg,
            emb,
            norm: Normalizer::new(cfg),
        }
    }

    pub fn label(&self, sample: &DialogueSample, mode: LabelMode) -> Result<LabeledSample> {
        let reference = sample.reference.as_deref().ok_or_else(|| {
            JetError::InvalidInput(format!(
                "sample `{}` has no reference; labels require gold",
                sample.id
            ))
        })?;
        let clues = extract_with(&self.norm, reference, &sample.incomplete, self.cfg);
        let mut scores = Vec::with_capacity(sample.context.len());
        let mut tags = Vec::with_capacity(sample.context.len());
        for utt in &sample.context {
            let surface = corpus::words(utt, self.cfg);
            let normalized = self.norm.normalize(&surface);
            let forms: Vec<&str> = normalized.iter().map(|(_, n)| n.as_str()).collect();
            let d = score_matrix(&forms, &clues, self.emb);
            match mode {
                LabelMode::Soft => {
                    let mut row = vec![0.0; surface.len()];
                    for ((i, _), s) in normalized.iter().zip(soft_labels(&d)) {
                        row[*i] = s;
                    }
                    scores.push(row);
                }
                LabelMode::Hard => {
                    let mut bits = vec![false; surface.len()];
                    for ((i, _), h) in normalized.iter().zip(hard_labels(&d)) {
                        bits[*i] = h;
                    }
                    tags.push(to_bio(&bits));
                }
                LabelMode::Defined | LabelMode::None => {
                    return Err(JetError::Config(format!(
                        "label mode `{mode}` is not produced by the labeler"
                    )))
                }
            }
        }
        let labels = match mode {
            LabelMode::Soft => PickerLabels::Soft { scores },
            _ => PickerLabels::Hard { tags },
        };
        Ok(LabeledSample {
            sample: sample.clone(),
            labels: Some(labels),
        })
    }
}

pub fn label_sample(
    sample: &DialogueSample,
    mode: LabelMode,
    emb: &EmbeddingTable,
    cfg: &LanguageConfig,
) -> Result<LabeledSample> {
    Labeler::new(cfg, emb).label(sample, mode)
}

/// Normalized important tokens of a sample: context words whose hard label
/// fires. Used by the pickup-ratio metric.
pub fn important_tokens(sample: &DialogueSample, cfg: &LanguageConfig) -> Result<BTreeSet<String>> {
    let reference = sample.reference.as_deref().ok_or_else(|| {
        JetError::InvalidInput(format!("sample `{}` has no reference", sample.id))
    })?;
    let norm = Normalizer::new(cfg);
    let clues = extract_with(&norm, reference, &sample.incomplete, cfg);
    Ok(sample
        .context
        .iter()
        .flat_map(|u| norm.normalize(&corpus::words(u, cfg)))
        .map(|(_, n)| n)
        .filter(|n| clues.contains(n))
        .collect())
}
