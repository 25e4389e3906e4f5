//! Dialogue samples, JSONL ingestion, tokenization and vocabulary.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"id": "17", "context": ["oldest turn", "...", "newest turn"], "utterance": "when did they tour", "reference": "when did paramore tour"}
//! ```
//!
//! `id` is optional (sequential ids are assigned when absent) and `reference`
//! is optional at inference time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{JetError, Result};

/// One restoration instance: dialogue history, the incomplete utterance and
/// (when known) its self-contained rewrite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSample {
    pub id: String,
    pub context: Vec<String>,
    #[serde(rename = "utterance")]
    pub incomplete: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl DialogueSample {
    pub fn new(
        id: impl Into<String>,
        context: Vec<String>,
        incomplete: impl Into<String>,
        reference: Option<String>,
    ) -> Result<Self> {
        let sample = DialogueSample {
            id: id.into(),
            context,
            incomplete: incomplete.into(),
            reference,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context.is_empty() {
            return Err(JetError::InvalidInput(format!(
                "sample `{}` has an empty context",
                self.id
            )));
        }
        if self.incomplete.trim().is_empty() {
            return Err(JetError::InvalidInput(format!(
                "sample `{}` has an empty utterance",
                self.id
            )));
        }
        if matches!(&self.reference, Some(r) if r.trim().is_empty()) {
            return Err(JetError::InvalidInput(format!(
                "sample `{}` has an empty reference",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    English,
    Chinese,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Whitespace-separated words, one token per word.
    Whitespace,
    /// One token per non-whitespace character.
    Character,
    /// Whitespace words cut into fixed-width pieces; continuation pieces
    /// carry a `##` prefix.
    Subword,
}

pub const SUBWORD_PREFIX: &str = "##";
const SUBWORD_WIDTH: usize = 4;

const EN_STOPWORDS: &str = include_str!("../resources/stopwords_en.txt");
const ZH_STOPWORDS: &str = include_str!("../resources/stopwords_zh.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageConfig {
    pub language: Language,
    pub stopwords: HashSet<String>,
    pub lemmatize: bool,
    pub stem: bool,
    pub lowercase: bool,
    pub granularity: Granularity,
}

impl LanguageConfig {
    pub fn english() -> Self {
        LanguageConfig {
            language: Language::English,
            stopwords: parse_stopwords(EN_STOPWORDS),
            lemmatize: true,
            stem: true,
            lowercase: true,
            granularity: Granularity::Whitespace,
        }
    }

    /// Character tokenization, no lemmatization or stemming.
    pub fn chinese() -> Self {
        LanguageConfig {
            language: Language::Chinese,
            stopwords: parse_stopwords(ZH_STOPWORDS),
            lemmatize: false,
            stem: false,
            lowercase: true,
            granularity: Granularity::Character,
        }
    }

    pub fn other() -> Self {
        LanguageConfig {
            language: Language::Other,
            stopwords: HashSet::new(),
            lemmatize: false,
            stem: false,
            lowercase: true,
            granularity: Granularity::Whitespace,
        }
    }

    pub fn for_language(language: Language) -> Self {
        match language {
            Language::English => Self::english(),
            Language::Chinese => Self::chinese(),
            Language::Other => Self::other(),
        }
    }

    pub fn with_granularity(mut self, granularity: Granularity) -> Self {
        self.granularity = granularity;
        self
    }

    pub fn with_stopwords(mut self, stopwords: HashSet<String>) -> Self {
        self.stopwords = stopwords;
        self
    }

    /// Replaces the stopword list with one read from a file (one token per line).
    pub fn with_stopword_file(self, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| JetError::io(path, e))?;
        Ok(self.with_stopwords(parse_stopwords(&text)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.language == Language::Chinese && (self.lemmatize || self.stem) {
            return Err(JetError::Config(
                "lemmatization and stemming must be disabled for chinese".into(),
            ));
        }
        Ok(())
    }
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
}

impl std::str::FromStr for CorpusFormat {
    type Err = JetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(JetError::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<DialogueSample>> {
    let text = fs::read_to_string(path).map_err(|e| JetError::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&text),
    }
}

/// Parses JSONL records into samples; each record's raw JSON object is also
/// returned so callers can read extension fields such as `labels`.
pub(crate) fn parse_jsonl_records(
    text: &str,
) -> Result<Vec<(DialogueSample, serde_json::Map<String, Value>)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| JetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(JetError::Parse {
                line: line_no,
                message: "record is not a JSON object".into(),
            });
        };
        let sample = sample_from_record(&obj, line_no, out.len())?;
        out.push((sample, obj));
    }
    if out.is_empty() {
        return Err(JetError::Empty("corpus".into()));
    }
    Ok(out)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<DialogueSample>> {
    Ok(parse_jsonl_records(text)?
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}

fn sample_from_record(
    obj: &serde_json::Map<String, Value>,
    line: usize,
    ordinal: usize,
) -> Result<DialogueSample> {
    let bad = |message: &str| JetError::Parse {
        line,
        message: message.to_string(),
    };
    let context = match obj.get("context") {
        None => return Err(JetError::MissingField { line, field: "context" }),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("`context` must be an array of strings"))?,
        Some(_) => return Err(bad("`context` must be an array of strings")),
    };
    let incomplete = match obj.get("utterance") {
        None => return Err(JetError::MissingField { line, field: "utterance" }),
        Some(v) => v
            .as_str()
            .ok_or_else(|| bad("`utterance` must be a string"))?
            .to_string(),
    };
    let reference = match obj.get("reference") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_str()
                .ok_or_else(|| bad("`reference` must be a string"))?
                .to_string(),
        ),
    };
    let id = match obj.get("id") {
        None | Some(Value::Null) => ordinal.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(bad("`id` must be a string or number")),
    };
    let sample = DialogueSample {
        id,
        context,
        incomplete,
        reference,
    };
    sample.validate().map_err(|e| bad(&e.to_string()))?;
    Ok(sample)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| JetError::io(path, e))
}

/// Tokenizes into word units, each expanded into its model pieces.
///
/// For whitespace and character modes every word is a single piece.
pub fn tokenize_words(text: &str, cfg: &LanguageConfig) -> Vec<Vec<String>> {
    let text = if cfg.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    match cfg.granularity {
        Granularity::Whitespace => text
            .split_whitespace()
            .map(|w| vec![w.to_string()])
            .collect(),
        Granularity::Character => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| vec![c.to_string()])
            .collect(),
        Granularity::Subword => text.split_whitespace().map(subword_pieces).collect(),
    }
}

fn subword_pieces(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .chunks(SUBWORD_WIDTH)
        .enumerate()
        .map(|(i, chunk)| {
            let piece: String = chunk.iter().collect();
            if i == 0 {
                piece
            } else {
                format!("{SUBWORD_PREFIX}{piece}")
            }
        })
        .collect()
}

pub fn tokenize(text: &str, cfg: &LanguageConfig) -> Vec<String> {
    tokenize_words(text, cfg).into_iter().flatten().collect()
}

/// Word units only (the surface positions the labeler works over).
pub fn words(text: &str, cfg: &LanguageConfig) -> Vec<String> {
    tokenize_words(text, cfg)
        .into_iter()
        .map(|pieces| {
            pieces
                .iter()
                .map(|p| p.strip_prefix(SUBWORD_PREFIX).unwrap_or(p))
                .collect::<String>()
        })
        .collect()
}

/// Inverse of [`tokenize`] under the granularity's joining rule.
pub fn detokenize<S: AsRef<str>>(tokens: &[S], granularity: Granularity) -> String {
    match granularity {
        Granularity::Whitespace => tokens
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(" "),
        Granularity::Character => tokens.iter().map(AsRef::as_ref).collect(),
        Granularity::Subword => {
            let mut out = String::new();
            for t in tokens {
                let t = t.as_ref();
                if let Some(rest) = t.strip_prefix(SUBWORD_PREFIX) {
                    out.push_str(rest);
                } else {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(t);
                }
            }
            out
        }
    }
}

pub type TokenId = usize;

pub const PAD: &str = "<pad>";
pub const SOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const X1: &str = "[X1]";
pub const X2: &str = "[X2]";

pub const RESERVED: [&str; 6] = [PAD, SOS, EOS, UNK, X1, X2];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub const PAD_ID: TokenId = 0;
    pub const SOS_ID: TokenId = 1;
    pub const EOS_ID: TokenId = 2;
    pub const UNK_ID: TokenId = 3;
    pub const X1_ID: TokenId = 4;
    pub const X2_ID: TokenId = 5;

    /// Builds a vocabulary from an id-ordered token list that starts with the
    /// reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len()
            || tokens.iter().zip(RESERVED).any(|(t, r)| t != r)
        {
            return Err(JetError::InvalidInput(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), id).is_some() {
                return Err(JetError::InvalidInput(format!(
                    "duplicate vocabulary entry `{t}`"
                )));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_reserved(id: TokenId) -> bool {
        id < RESERVED.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.tokens)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_tokens(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| JetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| JetError::io(path, e))?;
        Self::from_json(&text)
    }

    /// FNV-1a over the token list; stored in checkpoints to detect mismatches.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tokens {
            for b in t.bytes().chain(std::iter::once(0xff)) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Reserved ids first, then corpus tokens by descending frequency with
/// lexicographic tie-breaking.
pub fn build_vocab(
    samples: &[DialogueSample],
    max_size: usize,
    cfg: &LanguageConfig,
) -> Result<Vocabulary> {
    if max_size <= RESERVED.len() {
        return Err(JetError::Config(format!(
            "vocabulary size {max_size} leaves no room beyond {} reserved tokens",
            RESERVED.len()
        )));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut count_text = |text: &str| {
        for t in tokenize(text, cfg) {
            *counts.entry(t).or_default() += 1;
        }
    };
    for s in samples {
        s.context.iter().for_each(|c| count_text(c));
        count_text(&s.incomplete);
        if let Some(r) = &s.reference {
            count_text(r);
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !RESERVED.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(
        ranked
            .into_iter()
            .take(max_size - RESERVED.len())
            .map(|(t, _)| t),
    );
    Vocabulary::from_tokens(tokens)
}

pub fn ids_of<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<TokenId> {
    tokens.iter().map(|t| vocab.id(t.as_ref())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws() -> LanguageConfig {
        LanguageConfig::english()
    }

    #[test]
    fn minimal_record_parses() {
        let s = parse_jsonl(r#"{"context":["a"],"utterance":"b","reference":"c"}"#).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].context.len(), 1);
        assert_eq!(s[0].reference.as_deref(), Some("c"));
        assert_eq!(s[0].id, "0");
    }

    #[test]
    fn missing_utterance_names_line_and_field() {
        let err = parse_jsonl(r#"{"context":["a"],"reference":"c"}"#).unwrap_err();
        match err {
            JetError::MissingField { line, field } => {
                assert_eq!(line, 1);
                assert_eq!(field, "utterance");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn order_and_sequential_ids() {
        let text = (0..3)
            .map(|i| format!(r#"{{"context":["c{i}"],"utterance":"u{i}"}}"#))
            .collect::<Vec<_>>()
            .join("\n");
        let s = parse_jsonl(&text).unwrap();
        let ids: Vec<_> = s.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["0", "1", "2"]);
        assert_eq!(s[2].incomplete, "u2");
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_jsonl("\n\n"), Err(JetError::Empty(_))));
    }

    #[test]
    fn tokenize_modes() {
        assert_eq!(tokenize("how are you", &ws()), ["how", "are", "you"]);
        assert_eq!(
            tokenize("你好吗", &LanguageConfig::chinese()),
            ["你", "好", "吗"]
        );
        assert!(tokenize("", &ws()).is_empty());
        let sub = ws().with_granularity(Granularity::Subword);
        assert_eq!(tokenize("paramore", &sub), ["para", "##more"]);
        assert_eq!(detokenize(&tokenize("paramore rocks", &sub), Granularity::Subword), "paramore rocks");
    }

    #[test]
    fn chinese_config_rejects_stemming() {
        let mut cfg = LanguageConfig::chinese();
        assert!(cfg.validate().is_ok());
        cfg.stem = true;
        assert!(cfg.validate().is_err());
    }

    fn corpus(texts: &[&str]) -> Vec<DialogueSample> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| DialogueSample::new(i.to_string(), vec![t.to_string()], "x", None).unwrap())
            .collect()
    }

    #[test]
    fn vocab_frequency_then_lexicographic() {
        let v = build_vocab(&corpus(&["a a b"]), 10, &ws()).unwrap();
        assert!(v.id("a") < v.id("b"));
        let v = build_vocab(&corpus(&["zeta alpha"]), 10, &ws()).unwrap();
        assert!(v.id("alpha") < v.id("zeta"));
        assert_eq!(v.token(Vocabulary::EOS_ID), Some(EOS));
    }

    #[test]
    fn vocab_truncates_to_max_size() {
        let text: Vec<String> = (0..100).map(|i| format!("t{i:03}")).collect();
        let joined = text.join(" ");
        let v = build_vocab(&corpus(&[&joined]), RESERVED.len() + 50, &ws()).unwrap();
        assert_eq!(v.len(), RESERVED.len() + 50);
        // all counts tie at 1; "t..." sorts before the utterance token "x"
        let unk = text.iter().filter(|t| v.id(t) == Vocabulary::UNK_ID).count();
        assert_eq!(unk, 50);
        assert_eq!(v.id("x"), Vocabulary::UNK_ID);
    }

    #[test]
    fn vocab_too_small() {
        assert!(build_vocab(&corpus(&["a"]), RESERVED.len(), &ws()).is_err());
    }

    #[test]
    fn ids_and_oov() {
        let v = build_vocab(&corpus(&["a"]), 10, &ws()).unwrap();
        assert_eq!(ids_of(&["a"], &v), [v.id("a")]);
        assert_eq!(ids_of(&["zzz"], &v), [Vocabulary::UNK_ID]);
        assert!(ids_of::<&str>(&[], &v).is_empty());
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = build_vocab(&corpus(&["b a c a"]), 10, &ws()).unwrap();
        let back = Vocabulary::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }
}
