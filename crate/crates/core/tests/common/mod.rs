#![allow(dead_code)]

use jet::corpus::{TokenId, Vocabulary};
use jet::inference::StepModel;
use jet::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn prefix_rng(seed: u64, prefix: &[TokenId]) -> ChaCha8Rng {
    let mut h = seed ^ 0x51_7cc1_b727_220a;
    for &t in prefix {
        h = (h ^ t as u64).wrapping_mul(0x100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn log_normalize(z: Vec<f64>) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    z.into_iter().map(|v| v - lse).collect()
}

/// Dense prefix-hashed distributions; `peak` concentrates mass on one token.
pub struct Hashed {
    pub vocab: usize,
    pub seed: u64,
    pub peak: f64,
}

impl StepModel for Hashed {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut rng = prefix_rng(self.seed, prefix);
        let mut z: Vec<f64> = (0..self.vocab).map(|_| rng.random::<f64>() * 2.0).collect();
        let top = rng.random_range(0..self.vocab);
        z[top] += self.peak;
        Ok(log_normalize(z))
    }
}

/// Two-token support per step and `</s>` forced at step `depth`, so at most
/// `2^(depth-1)` hypotheses are ever live.
pub struct Sparse {
    pub vocab: usize,
    pub seed: u64,
    pub depth: usize,
}

impl StepModel for Sparse {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut out = vec![f64::NEG_INFINITY; self.vocab];
        if prefix.len() >= self.depth {
            out[Vocabulary::EOS_ID] = 0.0;
            return Ok(out);
        }
        let mut rng = prefix_rng(self.seed, prefix);
        let a = rng.random_range(0..self.vocab);
        let b = (a + rng.random_range(1..self.vocab)) % self.vocab;
        let p: f64 = rng.random_range(0.05..0.95);
        out[a] = p.ln();
        out[b] = (1.0 - p).ln();
        Ok(out)
    }
}

/// Best `</s>`-terminated sequence of at most `max_len` generated tokens by
/// `log_prob / len^penalty`; ties go to the lexicographically smaller one.
pub fn exhaustive_best(m: &dyn StepModel, max_len: usize, penalty: f64) -> Option<(Vec<TokenId>, f64)> {
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    let mut frontier = vec![(vec![Vocabulary::SOS_ID], 0.0)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (prefix, lp) in frontier {
            let dist = m.log_probs(&prefix).unwrap();
            for (tok, l) in dist.iter().enumerate() {
                if *l == f64::NEG_INFINITY {
                    continue;
                }
                let mut seq = prefix.clone();
                seq.push(tok);
                let total = lp + l;
                if tok == Vocabulary::EOS_ID {
                    let score = total / ((seq.len() - 1) as f64).powf(penalty);
                    let better = match &best {
                        None => true,
                        Some((b, s)) => score > *s || (score == *s && seq < *b),
                    };
                    if better {
                        best = Some((seq, score));
                    }
                } else {
                    next.push((seq, total));
                }
            }
        }
        frontier = next;
    }
    best
}

/// Argmax path with lowest-id tie-breaking, by brute force over every
/// sequence: the path whose every prefix extends by a maximal token.
pub fn exhaustive_greedy(m: &dyn StepModel, max_len: usize) -> Vec<TokenId> {
    let mut seq = vec![Vocabulary::SOS_ID];
    for _ in 0..max_len {
        let dist = m.log_probs(&seq).unwrap();
        let max = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tok = (0..dist.len()).find(|&t| dist[t] == max).unwrap();
        if tok == Vocabulary::EOS_ID {
            break;
        }
        seq.push(tok);
    }
    seq.remove(0);
    seq
}

// n-gram oracles over a small integer alphabet

pub const ALPHABET: u8 = 4;

/// Every string of length `n` over the alphabet.
pub fn all_ngrams(n: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|g| (0..ALPHABET).map(move |t| [g.clone(), vec![t]].concat()))
            .collect();
    }
    out
}

fn occurrences(seq: &[u8], g: &[u8]) -> usize {
    (0..seq.len()).filter(|&i| seq[i..].starts_with(g)).count()
}

fn f(overlap: usize, p: usize, r: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let (p, r) = (overlap as f64 / p as f64, overlap as f64 / r as f64);
    2.0 * p * r / (p + r)
}

pub fn rouge_oracle(pred: &[u8], reference: &[u8], n: usize) -> f64 {
    let (mut overlap, mut np, mut nr) = (0, 0, 0);
    for g in all_ngrams(n) {
        let (a, b) = (occurrences(pred, &g), occurrences(reference, &g));
        overlap += a.min(b);
        np += a;
        nr += b;
    }
    if np == 0 || nr == 0 {
        0.0
    } else {
        f(overlap, np, nr)
    }
}

/// Position `i` is restored when its token occurs more often in `seq[..=i]`
/// than in the incomplete utterance.
fn restored(seq: &[u8], inc: &[u8]) -> Vec<bool> {
    (0..seq.len())
        .map(|i| {
            let t = seq[i];
            let seen = seq[..=i].iter().filter(|&&x| x == t).count();
            seen > inc.iter().filter(|&&x| x == t).count()
        })
        .collect()
}

fn restored_occurrences(seq: &[u8], inc: &[u8], g: &[u8]) -> usize {
    let r = restored(seq, inc);
    (0..seq.len())
        .filter(|&i| seq[i..].starts_with(g) && r[i..i + g.len()].iter().any(|&x| x))
        .count()
}

pub fn restoration_oracle(pred: &[u8], reference: &[u8], inc: &[u8], n: usize) -> f64 {
    let (mut overlap, mut np, mut nr) = (0, 0, 0);
    for g in all_ngrams(n) {
        let (a, b) = (restored_occurrences(pred, inc, &g), restored_occurrences(reference, inc, &g));
        overlap += a.min(b);
        np += a;
        nr += b;
    }
    match (np, nr) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => f(overlap, np, nr),
    }
}
