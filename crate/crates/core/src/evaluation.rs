//! Restoration metrics: ROUGE-n, corpus BLEU, restoration f-scores, exact
//! match, pickup ratio, length difference and length-bucketed BLEU.
//!
//! Token-level metrics run over the words of the corpus's language
//! configuration. Report values are percentages rounded to one decimal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, DialogueSample, LanguageConfig};
use crate::error::{JetError, Result};
use crate::inference::Prediction;
use crate::labeler::{self, BioTag, LabeledSample, Normalizer};

fn ngram_counts<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w.to_vec()).or_insert(0) += 1;
    }
    out
}

fn clipped_overlap<T: Eq + Hash>(a: &HashMap<Vec<T>, usize>, b: &HashMap<Vec<T>, usize>) -> usize {
    a.iter()
        .map(|(g, &c)| c.min(b.get(g).copied().unwrap_or(0)))
        .sum()
}

fn f_measure(overlap: usize, pred_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || pred_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-n F1 from clipped n-gram overlap; 0 when either side has no n-grams.
pub fn rouge_n<T: Eq + Hash + Clone>(pred: &[T], reference: &[T], n: usize) -> f64 {
    let p = ngram_counts(pred, n);
    let r = ngram_counts(reference, n);
    f_measure(
        clipped_overlap(&p, &r),
        p.values().sum(),
        r.values().sum(),
    )
}

/// Clipped matches and candidate totals per order, plus lengths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub pred_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new(n: usize) -> Self {
        BleuStats {
            matches: vec![0; n],
            totals: vec![0; n],
            pred_len: 0,
            ref_len: 0,
        }
    }

    pub fn add<T: Eq + Hash + Clone>(&mut self, pred: &[T], reference: &[T]) {
        for k in 1..=self.matches.len() {
            let p = ngram_counts(pred, k);
            let r = ngram_counts(reference, k);
            self.matches[k - 1] += clipped_overlap(&p, &r);
            self.totals[k - 1] += p.values().sum::<usize>();
        }
        self.pred_len += pred.len();
        self.ref_len += reference.len();
    }

    fn brevity_penalty(&self) -> f64 {
        (1.0 - self.ref_len as f64 / self.pred_len as f64).min(0.0).exp()
    }

    /// Unsmoothed score: any zero precision gives 0.
    pub fn score(&self) -> f64 {
        if self.pred_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let n = self.matches.len() as f64;
        let log_mean = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| (m as f64 / t as f64).ln())
            .sum::<f64>()
            / n;
        log_mean.exp() * self.brevity_penalty()
    }

    /// Add-one smoothing on orders above 1, for per-sample diagnostics.
    pub fn smoothed_score(&self) -> f64 {
        if self.pred_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let n = self.matches.len() as f64;
        let log_mean = self
            .matches
            .iter()
            .zip(&self.totals)
            .enumerate()
            .map(|(k, (&m, &t))| {
                let (m, t) = if k == 0 { (m, t) } else { (m + 1, t + 1) };
                (m as f64 / t as f64).ln()
            })
            .sum::<f64>()
            / n;
        log_mean.exp() * self.brevity_penalty()
    }
}

/// Corpus-level BLEU-n with uniform weights and no smoothing.
pub fn bleu_n<T: Eq + Hash + Clone>(pairs: &[(Vec<T>, Vec<T>)], n: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(JetError::Empty("BLEU corpus".into()));
    }
    if n == 0 {
        return Err(JetError::InvalidInput("BLEU order must be at least 1".into()));
    }
    let mut stats = BleuStats::new(n);
    for (p, r) in pairs {
        stats.add(p, r);
    }
    Ok(stats.score())
}

pub fn sentence_bleu<T: Eq + Hash + Clone>(pred: &[T], reference: &[T], n: usize) -> f64 {
    let mut stats = BleuStats::new(n.max(1));
    stats.add(pred, reference);
    stats.smoothed_score()
}

/// Positions of `seq` not covered by the incomplete utterance's multiset;
/// occurrences are matched left to right.
pub fn restored_positions<T: Eq + Hash>(seq: &[T], incomplete: &[T]) -> Vec<bool> {
    let mut budget: HashMap<&T, usize> = HashMap::new();
    for t in incomplete {
        *budget.entry(t).or_insert(0) += 1;
    }
    seq.iter()
        .map(|t| match budget.get_mut(t) {
            Some(c) if *c > 0 => {
                *c -= 1;
                false
            }
            _ => true,
        })
        .collect()
}

/// Counts of n-grams holding at least one restored word.
pub fn restored_ngrams<T: Eq + Hash + Clone>(seq: &[T], incomplete: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let restored = restored_positions(seq, incomplete);
    let mut out = HashMap::new();
    if n == 0 || seq.len() < n {
        return out;
    }
    for i in 0..=seq.len() - n {
        if restored[i..i + n].iter().any(|&r| r) {
            *out.entry(seq[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    out
}

/// Overlap and side totals of restored n-grams for one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RestorationCounts {
    pub overlap: usize,
    pub pred: usize,
    pub reference: usize,
}

impl RestorationCounts {
    pub fn of<T: Eq + Hash + Clone>(pred: &[T], reference: &[T], incomplete: &[T], n: usize) -> Self {
        let p = restored_ngrams(pred, incomplete, n);
        let r = restored_ngrams(reference, incomplete, n);
        RestorationCounts {
            overlap: clipped_overlap(&p, &r),
            pred: p.values().sum(),
            reference: r.values().sum(),
        }
    }

    pub fn add(&mut self, other: RestorationCounts) {
        self.overlap += other.overlap;
        self.pred += other.pred;
        self.reference += other.reference;
    }

    /// F-score; 1 when neither side restored anything.
    pub fn f_score(&self) -> f64 {
        if self.pred == 0 && self.reference == 0 {
            1.0
        } else {
            f_measure(self.overlap, self.pred, self.reference)
        }
    }
}

/// Restoration F-score of one prediction against its reference.
pub fn restoration_f<T: Eq + Hash + Clone>(pred: &[T], reference: &[T], incomplete: &[T], n: usize) -> f64 {
    RestorationCounts::of(pred, reference, incomplete, n).f_score()
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-sensitive equality after collapsing whitespace runs and trimming.
pub fn exact_match(pred: &str, reference: &str) -> bool {
    collapse_ws(pred) == collapse_ws(reference)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PickupMode {
    #[default]
    Any,
    All,
}

impl FromStr for PickupMode {
    type Err = JetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(PickupMode::Any),
            "all" => Ok(PickupMode::All),
            other => Err(JetError::Config(format!("unknown pickup mode `{other}`"))),
        }
    }
}

/// Fraction of samples whose normalized prediction tokens contain any (or
/// all) of their important tokens. Samples without important tokens are
/// excluded.
pub fn pickup_ratio(items: &[(BTreeSet<String>, BTreeSet<String>)], mode: PickupMode) -> Result<f64> {
    let mut hits = 0usize;
    let mut counted = 0usize;
    for (pred, important) in items {
        if important.is_empty() {
            continue;
        }
        counted += 1;
        let hit = match mode {
            PickupMode::Any => important.iter().any(|t| pred.contains(t)),
            PickupMode::All => important.iter().all(|t| pred.contains(t)),
        };
        hits += usize::from(hit);
    }
    if counted == 0 {
        return Err(JetError::InvalidInput(
            "no sample has important tokens; pickup ratio is undefined".into(),
        ));
    }
    Ok(hits as f64 / counted as f64)
}

/// Mean absolute character-length gap.
pub fn length_difference<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(JetError::Empty("length-difference corpus".into()));
    }
    let total: usize = pairs
        .iter()
        .map(|(p, r)| p.as_ref().chars().count().abs_diff(r.as_ref().chars().count()))
        .sum();
    Ok(total as f64 / pairs.len() as f64)
}

/// Left-closed character-length interval `[lo, hi)`; `hi = None` is open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub name: String,
    pub lo: usize,
    pub hi: Option<usize>,
}

impl LengthBucket {
    pub fn new(name: &str, lo: usize, hi: Option<usize>) -> Self {
        LengthBucket {
            name: name.into(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, len: usize) -> bool {
        len >= self.lo && self.hi.is_none_or(|h| len < h)
    }

    pub fn standard() -> Vec<LengthBucket> {
        vec![
            LengthBucket::new("0-100", 0, Some(100)),
            LengthBucket::new("100-200", 100, Some(200)),
            LengthBucket::new("200+", 200, None),
        ]
    }
}

/// Buckets must tile `[0, inf)` in order without gaps or overlaps.
pub fn check_buckets(buckets: &[LengthBucket]) -> Result<()> {
    let mut expect = Some(0);
    for b in buckets {
        match expect {
            Some(lo) if b.lo == lo && b.hi.is_none_or(|h| h > lo) => expect = b.hi,
            Some(lo) if b.lo < lo => {
                return Err(JetError::Config(format!("bucket `{}` overlaps its predecessor", b.name)))
            }
            _ => {
                return Err(JetError::Config(format!(
                    "bucket `{}` does not continue the partition of [0, inf)",
                    b.name
                )))
            }
        }
    }
    if expect.is_some() {
        return Err(JetError::Config("buckets do not cover [0, inf)".into()));
    }
    Ok(())
}

/// Corpus BLEU-n per input-length bucket; empty buckets are omitted.
pub fn bleu_by_length<T: Eq + Hash + Clone>(
    items: &[(Vec<T>, Vec<T>, usize)],
    n: usize,
    buckets: &[LengthBucket],
) -> Result<BTreeMap<String, f64>> {
    check_buckets(buckets)?;
    let mut out = BTreeMap::new();
    for b in buckets {
        let pairs: Vec<(Vec<T>, Vec<T>)> = items
            .iter()
            .filter(|(_, _, len)| b.contains(*len))
            .map(|(p, r, _)| (p.clone(), r.clone()))
            .collect();
        if !pairs.is_empty() {
            out.insert(b.name.clone(), bleu_n(&pairs, n)?);
        }
    }
    Ok(out)
}

/// Character length of a sample's model input: the context turns and the
/// utterance joined by single spaces.
pub fn input_length(sample: &DialogueSample) -> usize {
    let turns: usize = sample.context.iter().map(|u| u.chars().count()).sum();
    turns + sample.incomplete.chars().count() + sample.context.len()
}

/// `(start, end)` inclusive spans of a BIO sequence; an `I` after `O` opens
/// a new span.
pub fn bio_spans(tags: &[BioTag]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            BioTag::B => {
                if let Some(s) = open.take() {
                    spans.push((s, i - 1));
                }
                open = Some(i);
            }
            BioTag::I => {
                open.get_or_insert(i);
            }
            BioTag::O => {
                if let Some(s) = open.take() {
                    spans.push((s, i - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push((s, tags.len() - 1));
    }
    spans
}

/// Micro-averaged exact-span F1 over paired tag sequences; 1 when neither
/// side has a span.
pub fn span_f1(pred: &[Vec<BioTag>], gold: &[Vec<BioTag>]) -> f64 {
    let (mut hit, mut np, mut ng) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let ps = bio_spans(p);
        let gs: BTreeSet<(usize, usize)> = bio_spans(g).into_iter().collect();
        hit += ps.iter().filter(|s| gs.contains(s)).count();
        np += ps.len();
        ng += gs.len();
    }
    if np == 0 && ng == 0 {
        1.0
    } else {
        f_measure(hit, np, ng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub pickup_mode: PickupMode,
    pub buckets: Vec<LengthBucket>,
    /// BLEU order of the length-bucketed scores.
    pub bucket_bleu_order: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pickup_mode: PickupMode::Any,
            buckets: LengthBucket::standard(),
            bucket_bleu_order: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub bleu: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu4: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub em: f64,
    /// `None` when no sample has important tokens.
    pub pickup_ratio: Option<f64>,
    pub difference: f64,
    pub bleu_by_length: BTreeMap<String, BucketScore>,
}

fn pct(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

/// Normalized important tokens: the tagged context words when tags exist,
/// otherwise the exact-match labeler's choice.
fn important_set(sample: &DialogueSample, labels: Option<&LabeledSample>, lang: &LanguageConfig) -> Result<BTreeSet<String>> {
    let tags = labels.and_then(|l| l.labels.as_ref()).and_then(|l| l.tags());
    match tags {
        Some(tags) => {
            let norm = Normalizer::new(lang);
            let mut out = BTreeSet::new();
            for (utt, seq) in sample.context.iter().zip(tags) {
                let words = corpus::words(utt, lang);
                for (w, t) in words.iter().zip(seq) {
                    if *t != BioTag::O {
                        out.extend(norm.normalize_token(w));
                    }
                }
            }
            Ok(out)
        }
        None => labeler::important_tokens(sample, lang),
    }
}

/// Scores predictions against the gold corpus. Every gold id needs a
/// prediction; `labels`, when given, supply the important tokens.
pub fn evaluate(
    predictions: &[Prediction],
    gold: &[DialogueSample],
    labels: Option<&[LabeledSample]>,
    lang: &LanguageConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(JetError::Empty("gold corpus".into()));
    }
    check_buckets(&cfg.buckets)?;
    let by_id: HashMap<&str, &str> = predictions
        .iter()
        .map(|p| (p.id.as_str(), p.prediction.as_str()))
        .collect();
    let label_by_id: HashMap<&str, &LabeledSample> = labels
        .unwrap_or_default()
        .iter()
        .map(|l| (l.sample.id.as_str(), l))
        .collect();
    let norm = Normalizer::new(lang);

    let mut rouge = [0.0; 2];
    let mut bleu = [BleuStats::new(1), BleuStats::new(2), BleuStats::new(4)];
    let mut restoration = [RestorationCounts::default(); 3];
    let mut em = 0usize;
    let mut pickup_items = Vec::with_capacity(gold.len());
    let mut length_pairs = Vec::with_capacity(gold.len());
    let mut bucketed = Vec::with_capacity(gold.len());
    for sample in gold {
        let reference = sample.reference.as_deref().ok_or_else(|| {
            JetError::InvalidInput(format!("gold sample `{}` has no reference", sample.id))
        })?;
        let pred = *by_id
            .get(sample.id.as_str())
            .ok_or_else(|| JetError::MissingPrediction(sample.id.clone()))?;
        let p = corpus::words(pred, lang);
        let r = corpus::words(reference, lang);
        let inc = corpus::words(&sample.incomplete, lang);
        rouge[0] += rouge_n(&p, &r, 1);
        rouge[1] += rouge_n(&p, &r, 2);
        for b in &mut bleu {
            b.add(&p, &r);
        }
        for (k, counts) in restoration.iter_mut().enumerate() {
            counts.add(RestorationCounts::of(&p, &r, &inc, k + 1));
        }
        em += usize::from(exact_match(pred, reference));
        let important = important_set(sample, label_by_id.get(sample.id.as_str()).copied(), lang)?;
        let pred_norm: BTreeSet<String> = norm.normalize(&p).into_iter().map(|(_, n)| n).collect();
        pickup_items.push((pred_norm, important));
        length_pairs.push((pred, reference));
        bucketed.push((p, r, input_length(sample)));
    }

    let n = gold.len() as f64;
    let mut by_length = BTreeMap::new();
    for b in &cfg.buckets {
        let pairs: Vec<(Vec<String>, Vec<String>)> = bucketed
            .iter()
            .filter(|(_, _, len)| b.contains(*len))
            .map(|(p, r, _)| (p.clone(), r.clone()))
            .collect();
        if !pairs.is_empty() {
            by_length.insert(
                b.name.clone(),
                BucketScore {
                    bleu: pct(bleu_n(&pairs, cfg.bucket_bleu_order)?),
                    count: pairs.len(),
                },
            );
        }
    }
    let difference = length_difference(&length_pairs)?;
    Ok(EvalReport {
        samples: gold.len(),
        rouge1: pct(rouge[0] / n),
        rouge2: pct(rouge[1] / n),
        bleu1: pct(bleu[0].score()),
        bleu2: pct(bleu[1].score()),
        bleu4: pct(bleu[2].score()),
        f1: pct(restoration[0].f_score()),
        f2: pct(restoration[1].f_score()),
        f3: pct(restoration[2].f_score()),
        em: pct(em as f64 / n),
        pickup_ratio: pickup_ratio(&pickup_items, cfg.pickup_mode).ok().map(pct),
        difference: (difference * 100.0).round() / 100.0,
        bleu_by_length: by_length,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pickup = self
            .pickup_ratio
            .map_or_else(|| "n/a".to_string(), |p| format!("{p:.1}"));
        let mut rows = vec![
            ("samples", self.samples.to_string()),
            ("rouge1", format!("{:.1}", self.rouge1)),
            ("rouge2", format!("{:.1}", self.rouge2)),
            ("bleu1", format!("{:.1}", self.bleu1)),
            ("bleu2", format!("{:.1}", self.bleu2)),
            ("bleu4", format!("{:.1}", self.bleu4)),
            ("f1", format!("{:.1}", self.f1)),
            ("f2", format!("{:.1}", self.f2)),
            ("f3", format!("{:.1}", self.f3)),
            ("em", format!("{:.1}", self.em)),
            ("pickup", pickup),
            ("difference", format!("{:.2}", self.difference)),
        ];
        let bucket_rows: Vec<(String, String)> = self
            .bleu_by_length
            .iter()
            .map(|(k, v)| (format!("bleu[{k}]"), format!("{:.1} (n={})", v.bleu, v.count)))
            .collect();
        let width = rows
            .iter()
            .map(|(k, _)| k.len())
            .chain(bucket_rows.iter().map(|(k, _)| k.len()))
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows.drain(..) {
            let _ = writeln!(out, "{k:<width$}  {v:>10}");
        }
        for (k, v) in bucket_rows {
            let _ = writeln!(out, "{k:<width$}  {v:>10}");
        }
        f.write_str(&out)
    }
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    let json = dir.join("report.json");
    let text = dir.join("report.txt");
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n").map_err(|e| JetError::io(&json, e))?;
    std::fs::write(&text, report.to_string()).map_err(|e| JetError::io(&text, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn rouge_cases() {
        assert_eq!(rouge_n(&toks("a b c"), &toks("a b c"), 2), 1.0);
        assert!((rouge_n(&toks("a b c"), &toks("a b d"), 1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_n(&toks("a b"), &toks("c d"), 1), 0.0);
        assert_eq!(rouge_n(&toks("a"), &toks("a"), 2), 0.0);
    }

    #[test]
    fn bleu_cases() {
        fn pair(p: &'static str, r: &'static str) -> (Vec<&'static str>, Vec<&'static str>) {
            (toks(p), toks(r))
        }
        let b = bleu_n(&[pair("a b c d", "a b c e")], 2).unwrap();
        assert!((b - 0.5f64.sqrt()).abs() < 1e-12);
        let b = bleu_n(&[pair("a b", "a b x y")], 1).unwrap();
        assert!((b - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(bleu_n(&[pair("a b c d", "a b c d")], 4).unwrap(), 1.0);
        assert_eq!(bleu_n(&[pair("a b c d", "a x c y")], 2).unwrap(), 0.0);
        assert!(bleu_n::<&str>(&[], 2).is_err());
        assert!(sentence_bleu(&toks("a b c d"), &toks("a x c y"), 2) > 0.0);
    }

    #[test]
    fn restoration_cases() {
        let inc = toks("when did they tour");
        let r = toks("when did paramore tour");
        assert_eq!(restoration_f(&r, &r, &inc, 1), 1.0);
        assert_eq!(restoration_f(&inc, &r, &inc, 1), 0.0);
        assert_eq!(restoration_f(&inc, &inc, &inc, 2), 1.0);
        // bigrams touching "paramore": "did paramore", "paramore tour"
        assert_eq!(restored_ngrams(&r, &inc, 2).len(), 2);
        // multiset: the second "a" is restored
        assert_eq!(restored_positions(&toks("a b a"), &toks("a b")), vec![false, false, true]);
    }

    #[test]
    fn exact_match_normalizes_whitespace() {
        assert!(exact_match("a  b ", "a b"));
        assert!(!exact_match("a b", "A b"));
        assert!(!exact_match("a b", "a c"));
    }

    #[test]
    fn pickup_and_difference() {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let items = vec![
            (set(&["x", "y"]), set(&["x"])),
            (set(&["y"]), set(&["y", "z"])),
            (set(&["q"]), set(&["x"])),
        ];
        assert!((pickup_ratio(&items, PickupMode::Any).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((pickup_ratio(&items, PickupMode::All).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(pickup_ratio(&[(set(&["x"]), set(&[]))], PickupMode::Any).is_err());
        let pairs = [("a".repeat(10), "a".repeat(11)), ("a".repeat(12), "a".repeat(11))];
        assert_eq!(length_difference(&pairs).unwrap(), 1.0);
    }

    #[test]
    fn spans() {
        use BioTag::*;
        assert_eq!(bio_spans(&[B, I, O, B, B, I]), vec![(0, 1), (3, 3), (4, 5)]);
        assert_eq!(bio_spans(&[O, I, I]), vec![(1, 2)]);
        let gold = vec![vec![B, I, O, B]];
        assert_eq!(span_f1(&gold, &gold), 1.0);
        let half = vec![vec![B, O, O, B]];
        assert!((span_f1(&half, &gold) - 0.5).abs() < 1e-12);
        assert_eq!(span_f1(&[vec![O]], &[vec![O]]), 1.0);
    }

    #[test]
    fn buckets() {
        let std = LengthBucket::standard();
        assert!(check_buckets(&std).is_ok());
        assert!(std[1].contains(100) && !std[0].contains(100));
        let overlap = vec![
            LengthBucket::new("a", 0, Some(120)),
            LengthBucket::new("b", 100, None),
        ];
        assert!(check_buckets(&overlap).is_err());
        assert!(check_buckets(&std[..2]).is_err());
        let items = vec![(toks("a b"), toks("a b"), 50), (toks("c d"), toks("c d"), 250)];
        let m = bleu_by_length(&items, 2, &std).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.values().all(|&v| v == 1.0));
    }
}
