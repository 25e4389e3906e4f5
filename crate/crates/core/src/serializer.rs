//! Model-facing id sequences.
//!
//! Input layout: `h_1 [X1] h_2 [X1] ... h_m [X1] u_1 .. u_n [X2] </s>`.
//! Decoder streams are the reference shifted by one: `<s> r_1 .. r_k` in,
//! `r_1 .. r_k </s>` out.

use crate::corpus::{self, DialogueSample, LanguageConfig, TokenId, Vocabulary};
use crate::error::{JetError, Result};
use crate::labeler::{BioTag, PickerLabels};

pub const DEFAULT_MAX_INPUT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerializerConfig {
    pub max_input_len: usize,
    /// Supervise `[X1]`, `[X2]` and `</s>` as O / 0 instead of ignoring them.
    pub supervise_special: bool,
}

impl Default for SerializerConfig {
    fn default() -> Self {
        SerializerConfig {
            max_input_len: DEFAULT_MAX_INPUT,
            supervise_special: false,
        }
    }
}

/// What a serialized input position holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// Piece of word `word` of context utterance `utterance` (index into the
    /// original, untruncated context).
    Context { utterance: usize, word: usize },
    Incomplete { word: usize },
    X1,
    X2,
    Eos,
}

impl Segment {
    pub fn is_special(self) -> bool {
        matches!(self, Segment::X1 | Segment::X2 | Segment::Eos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PickerTarget {
    Ignore,
    Class(BioTag),
    Score(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub input_ids: Vec<TokenId>,
    pub segments: Vec<Segment>,
    pub picker_targets: Vec<PickerTarget>,
    pub decoder_input: Vec<TokenId>,
    pub decoder_target: Vec<TokenId>,
    /// Word count of every original context utterance, dropped ones included.
    pub context_word_counts: Vec<usize>,
    /// Number of oldest context utterances removed to fit the length limit.
    pub dropped_utterances: usize,
}

impl EncodedSample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// `(first, last)` position of each kept context utterance plus the
    /// incomplete utterance, recovered from the segment map.
    pub fn utterance_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = None;
        for (pos, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Context { .. } | Segment::Incomplete { .. } => {
                    start.get_or_insert(pos);
                }
                Segment::X1 | Segment::X2 => {
                    if let Some(s) = start.take() {
                        spans.push((s, pos - 1));
                    }
                }
                Segment::Eos => {}
            }
        }
        spans
    }
}

pub fn build_input(
    sample: &DialogueSample,
    vocab: &Vocabulary,
    cfg: &LanguageConfig,
    ser: &SerializerConfig,
) -> Result<EncodedSample> {
    let context: Vec<Vec<Vec<String>>> = sample
        .context
        .iter()
        .map(|u| corpus::tokenize_words(u, cfg))
        .collect();
    let incomplete = corpus::tokenize_words(&sample.incomplete, cfg);
    let pieces = |u: &Vec<Vec<String>>| u.iter().map(Vec::len).sum::<usize>();

    let fixed = pieces(&incomplete) + 2;
    let mut total = fixed + context.iter().map(|u| pieces(u) + 1).sum::<usize>();
    let mut first_kept = 0;
    while total > ser.max_input_len && first_kept + 1 < context.len() {
        total -= pieces(&context[first_kept]) + 1;
        first_kept += 1;
    }
    if total > ser.max_input_len {
        return Err(JetError::TooLong {
            len: total,
            max: ser.max_input_len,
        });
    }

    let mut input_ids = Vec::with_capacity(total);
    let mut segments = Vec::with_capacity(total);
    for (u, words) in context.iter().enumerate().skip(first_kept) {
        for (w, word) in words.iter().enumerate() {
            for piece in word {
                input_ids.push(vocab.id(piece));
                segments.push(Segment::Context { utterance: u, word: w });
            }
        }
        input_ids.push(Vocabulary::X1_ID);
        segments.push(Segment::X1);
    }
    for (w, word) in incomplete.iter().enumerate() {
        for piece in word {
            input_ids.push(vocab.id(piece));
            segments.push(Segment::Incomplete { word: w });
        }
    }
    input_ids.push(Vocabulary::X2_ID);
    segments.push(Segment::X2);
    input_ids.push(Vocabulary::EOS_ID);
    segments.push(Segment::Eos);

    let (decoder_input, decoder_target) = match &sample.reference {
        Some(r) => build_target(r, vocab, cfg)?,
        None => (Vec::new(), Vec::new()),
    };
    Ok(EncodedSample {
        picker_targets: vec![PickerTarget::Ignore; input_ids.len()],
        input_ids,
        segments,
        decoder_input,
        decoder_target,
        context_word_counts: context.iter().map(Vec::len).collect(),
        dropped_utterances: first_kept,
    })
}

pub fn build_target(
    reference: &str,
    vocab: &Vocabulary,
    cfg: &LanguageConfig,
) -> Result<(Vec<TokenId>, Vec<TokenId>)> {
    let ids = corpus::ids_of(&corpus::tokenize(reference, cfg), vocab);
    if ids.is_empty() {
        return Err(JetError::InvalidInput("empty reference".into()));
    }
    let mut input = Vec::with_capacity(ids.len() + 1);
    input.push(Vocabulary::SOS_ID);
    input.extend_from_slice(&ids);
    let mut target = ids;
    target.push(Vocabulary::EOS_ID);
    Ok((input, target))
}

/// Per-position picker targets for an encoded sample.
pub fn align_labels(
    labels: &PickerLabels,
    encoded: &EncodedSample,
    ser: &SerializerConfig,
) -> Result<Vec<PickerTarget>> {
    let lengths = labels.utterance_lengths();
    if lengths.len() != encoded.context_word_counts.len() {
        return Err(JetError::InvalidInput(format!(
            "labels cover {} context utterances, sample has {}",
            lengths.len(),
            encoded.context_word_counts.len()
        )));
    }
    for (u, (&found, &expected)) in lengths.iter().zip(&encoded.context_word_counts).enumerate() {
        if found != expected {
            return Err(JetError::LabelCount {
                utterance: u,
                expected,
                found,
            });
        }
    }
    let soft = matches!(labels, PickerLabels::Soft { .. });
    let outside = if soft {
        PickerTarget::Score(0.0)
    } else {
        PickerTarget::Class(BioTag::O)
    };
    let mut prev_word = None;
    Ok(encoded
        .segments
        .iter()
        .map(|seg| match *seg {
            Segment::Context { utterance, word } => {
                let first_piece = prev_word != Some((utterance, word));
                prev_word = Some((utterance, word));
                match labels {
                    PickerLabels::Soft { scores } => PickerTarget::Score(scores[utterance][word]),
                    PickerLabels::Hard { tags } | PickerLabels::Defined { tags } => {
                        match tags[utterance][word] {
                            BioTag::B if !first_piece => PickerTarget::Class(BioTag::I),
                            t => PickerTarget::Class(t),
                        }
                    }
                }
            }
            Segment::Incomplete { .. } => {
                prev_word = None;
                outside
            }
            _ => {
                prev_word = None;
                if ser.supervise_special {
                    outside
                } else {
                    PickerTarget::Ignore
                }
            }
        })
        .collect())
}

/// Encodes a sample and, when labels are given, attaches aligned targets.
pub fn encode_sample(
    sample: &DialogueSample,
    labels: Option<&PickerLabels>,
    vocab: &Vocabulary,
    cfg: &LanguageConfig,
    ser: &SerializerConfig,
) -> Result<EncodedSample> {
    let mut enc = build_input(sample, vocab, cfg, ser)?;
    if let Some(labels) = labels {
        enc.picker_targets = align_labels(labels, &enc, ser)?;
    }
    Ok(enc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub inputs: Vec<Vec<TokenId>>,
    pub input_mask: Vec<Vec<bool>>,
    pub picker_targets: Vec<Vec<PickerTarget>>,
    pub decoder_inputs: Vec<Vec<TokenId>>,
    pub decoder_targets: Vec<Vec<TokenId>>,
    pub decoder_mask: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
    pub target_lengths: Vec<usize>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn width(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

/// Right-pads every stream to the batch maximum.
pub fn collate(samples: &[EncodedSample], pad: TokenId) -> EncodedBatch {
    let width = samples.iter().map(EncodedSample::len).max().unwrap_or(0);
    let dec_width = samples.iter().map(|s| s.decoder_input.len()).max().unwrap_or(0);
    let pad_to = |v: &[TokenId], w: usize| {
        let mut out = v.to_vec();
        out.resize(w, pad);
        out
    };
    let mask = |n: usize, w: usize| (0..w).map(|i| i < n).collect::<Vec<_>>();
    EncodedBatch {
        inputs: samples.iter().map(|s| pad_to(&s.input_ids, width)).collect(),
        input_mask: samples.iter().map(|s| mask(s.len(), width)).collect(),
        picker_targets: samples
            .iter()
            .map(|s| {
                let mut t = s.picker_targets.clone();
                t.resize(width, PickerTarget::Ignore);
                t
            })
            .collect(),
        decoder_inputs: samples.iter().map(|s| pad_to(&s.decoder_input, dec_width)).collect(),
        decoder_targets: samples.iter().map(|s| pad_to(&s.decoder_target, dec_width)).collect(),
        decoder_mask: samples
            .iter()
            .map(|s| mask(s.decoder_target.len(), dec_width))
            .collect(),
        lengths: samples.iter().map(EncodedSample::len).collect(),
        target_lengths: samples.iter().map(|s| s.decoder_target.len()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Granularity};
    use BioTag::*;

    fn en() -> LanguageConfig {
        LanguageConfig::english()
    }

    fn sample(context: &[&str], inc: &str, reference: Option<&str>) -> DialogueSample {
        DialogueSample::new(
            "s",
            context.iter().map(|s| s.to_string()).collect(),
            inc,
            reference.map(str::to_string),
        )
        .unwrap()
    }

    fn vocab_for(s: &DialogueSample) -> Vocabulary {
        build_vocab(std::slice::from_ref(s), 100, &en()).unwrap()
    }

    fn render(enc: &EncodedSample, v: &Vocabulary) -> String {
        enc.input_ids
            .iter()
            .map(|&i| v.token(i).unwrap())
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn layout() {
        let s = sample(&["hello there", "hi"], "how are you", None);
        let v = vocab_for(&s);
        let enc = build_input(&s, &v, &en(), &SerializerConfig::default()).unwrap();
        assert_eq!(render(&enc, &v), "hello there [X1] hi [X1] how are you [X2] </s>");
        assert_eq!(enc.input_ids.iter().filter(|&&i| i == Vocabulary::X1_ID).count(), 2);
        assert_eq!(enc.utterance_spans(), [(0, 1), (3, 3), (5, 7)]);
    }

    #[test]
    fn minimal_length() {
        let s = sample(&["a"], "b", None);
        let enc = build_input(&s, &vocab_for(&s), &en(), &SerializerConfig::default()).unwrap();
        assert_eq!(enc.len(), 5);
    }

    #[test]
    fn overflow_drops_oldest_context() {
        let s = sample(&["one two three", "four five"], "six", None);
        let v = vocab_for(&s);
        let ser = SerializerConfig {
            max_input_len: 8,
            ..Default::default()
        };
        let enc = build_input(&s, &v, &en(), &ser).unwrap();
        assert_eq!(render(&enc, &v), "four five [X1] six [X2] </s>");
        assert_eq!(enc.dropped_utterances, 1);
        let tight = SerializerConfig {
            max_input_len: 4,
            ..Default::default()
        };
        assert!(matches!(
            build_input(&s, &v, &en(), &tight),
            Err(JetError::TooLong { .. })
        ));
    }

    #[test]
    fn target_shift() {
        let s = sample(&["a b"], "c", None);
        let v = vocab_for(&s);
        let (i, t) = build_target("a b", &v, &en()).unwrap();
        assert_eq!(i, [Vocabulary::SOS_ID, v.id("a"), v.id("b")]);
        assert_eq!(t, [v.id("a"), v.id("b"), Vocabulary::EOS_ID]);
        let (i, t) = build_target("a", &v, &en()).unwrap();
        assert_eq!((i.len(), t.len()), (2, 2));
        let (i, t) = build_target("zzz", &v, &en()).unwrap();
        assert_eq!(i[1], Vocabulary::UNK_ID);
        assert_eq!(t[0], Vocabulary::UNK_ID);
        assert!(build_target("  ", &v, &en()).is_err());
    }

    #[test]
    fn identity_alignment() {
        let s = sample(&["x y z"], "w", None);
        let v = vocab_for(&s);
        let ser = SerializerConfig::default();
        let enc = build_input(&s, &v, &en(), &ser).unwrap();
        let labels = PickerLabels::Hard { tags: vec![vec![O, B, O]] };
        let t = align_labels(&labels, &enc, &ser).unwrap();
        use PickerTarget::*;
        assert_eq!(
            t,
            [Class(O), Class(B), Class(O), Ignore, Class(O), Ignore, Ignore]
        );
    }

    #[test]
    fn subword_expansion() {
        let cfg = en().with_granularity(Granularity::Subword);
        let s = sample(&["paramore rocks"], "why", None);
        let v = build_vocab(std::slice::from_ref(&s), 100, &cfg).unwrap();
        let ser = SerializerConfig::default();
        let enc = build_input(&s, &v, &cfg, &ser).unwrap();
        let hard = PickerLabels::Hard { tags: vec![vec![B, O]] };
        let t = align_labels(&hard, &enc, &ser).unwrap();
        use PickerTarget::*;
        // "para ##more" "rock ##s"
        assert_eq!(&t[..4], [Class(B), Class(I), Class(O), Class(O)]);
        let soft = PickerLabels::Soft { scores: vec![vec![0.7, 0.0]] };
        let t = align_labels(&soft, &enc, &ser).unwrap();
        assert_eq!(&t[..2], [Score(0.7), Score(0.7)]);
        // three pieces
        let s3 = sample(&["abcdefghij"], "why", None);
        let v3 = build_vocab(std::slice::from_ref(&s3), 100, &cfg).unwrap();
        let enc3 = build_input(&s3, &v3, &cfg, &ser).unwrap();
        let soft3 = PickerLabels::Soft { scores: vec![vec![0.7]] };
        let t3 = align_labels(&soft3, &enc3, &ser).unwrap();
        assert_eq!(&t3[..3], [Score(0.7), Score(0.7), Score(0.7)]);
    }

    #[test]
    fn word_count_mismatch_names_utterance() {
        let s = sample(&["a b", "c d e"], "f", None);
        let v = vocab_for(&s);
        let ser = SerializerConfig::default();
        let enc = build_input(&s, &v, &en(), &ser).unwrap();
        let labels = PickerLabels::Hard {
            tags: vec![vec![O, O], vec![O, B]],
        };
        match align_labels(&labels, &enc, &ser).unwrap_err() {
            JetError::LabelCount { utterance, .. } => assert_eq!(utterance, 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn special_supervision_is_configurable() {
        let s = sample(&["a"], "b", None);
        let v = vocab_for(&s);
        let ser = SerializerConfig {
            supervise_special: true,
            ..Default::default()
        };
        let enc = build_input(&s, &v, &en(), &ser).unwrap();
        let t = align_labels(&PickerLabels::Soft { scores: vec![vec![0.5]] }, &enc, &ser).unwrap();
        assert!(t.iter().all(|x| *x != PickerTarget::Ignore));
    }

    #[test]
    fn collate_pads_right() {
        let s1 = sample(&["a"], "b", Some("a b"));
        let s2 = sample(&["a b c"], "b", Some("a"));
        let v = build_vocab(&[s1.clone(), s2.clone()], 100, &en()).unwrap();
        let ser = SerializerConfig::default();
        let e1 = build_input(&s1, &v, &en(), &ser).unwrap();
        let e2 = build_input(&s2, &v, &en(), &ser).unwrap();
        assert_eq!((e1.len(), e2.len()), (5, 7));
        let b = collate(&[e1.clone(), e2.clone()], Vocabulary::PAD_ID);
        assert_eq!(b.width(), 7);
        assert_eq!(b.input_mask[0], [true, true, true, true, true, false, false]);
        assert_eq!(b.inputs[0][6], Vocabulary::PAD_ID);
        assert_eq!(b.picker_targets[0][6], PickerTarget::Ignore);
        assert_eq!(b.decoder_mask[1], [true, true, false]);
        let single = collate(std::slice::from_ref(&e1), Vocabulary::PAD_ID);
        assert_eq!(single.width(), 5);
        let same = collate(&[e2.clone(), e2], Vocabulary::PAD_ID);
        assert_eq!(same.inputs[0], same.inputs[1]);
    }
}
