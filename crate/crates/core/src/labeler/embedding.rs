//! Word-vector tables in the plain-text format (`count dim` header, then
//! `token v1 ... vd` per line).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{JetError, Result};

/// What to do with tokens that have no vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    /// Absent tokens score 0 against everything (exact matches still fire).
    Zero,
    /// Absent tokens get a pseudo-random unit vector derived from the token
    /// string and the seed.
    Hash { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
    fallback: Fallback,
}

impl EmbeddingTable {
    pub fn new(dim: usize, fallback: Fallback) -> Result<Self> {
        if dim == 0 {
            return Err(JetError::Config("embedding dimension must be at least 1".into()));
        }
        Ok(EmbeddingTable {
            vectors: HashMap::new(),
            dim,
            fallback,
        })
    }

    /// An empty table where every token resolves through the hash fallback.
    pub fn hashed(dim: usize, seed: u64) -> Result<Self> {
        Self::new(dim, Fallback::Hash { seed })
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(JetError::InvalidInput(format!(
                "vector of dimension {} in a table of dimension {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn fallback(&self) -> Fallback {
        self.fallback
    }

    pub fn set_fallback(&mut self, fallback: Fallback) {
        self.fallback = fallback;
    }

    /// Vector for `token`, or the fallback vector; `None` under [`Fallback::Zero`].
    pub fn vector(&self, token: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.vectors.get(token) {
            return Some(v.clone());
        }
        match self.fallback {
            Fallback::Zero => None,
            Fallback::Hash { seed } => Some(hash_vector(token, self.dim, seed)),
        }
    }

    pub fn parse(text: &str, fallback: Fallback) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, first)) = lines.next() else {
            return Err(JetError::Empty("embedding file".into()));
        };
        let header: Vec<&str> = first.split_whitespace().collect();
        let mut pending = None;
        let dim = match header.as_slice() {
            [count, dim] if count.parse::<usize>().is_ok() => {
                dim.parse::<usize>().map_err(|_| JetError::Parse {
                    line: 1,
                    message: "bad dimension in header".into(),
                })?
            }
            // headerless (GloVe-style) file: the first line is already a vector
            _ => {
                pending = Some((0, first));
                header.len().saturating_sub(1)
            }
        };
        let mut table = Self::new(dim, fallback)?;
        for (idx, line) in pending.into_iter().chain(lines) {
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap_or_default();
            let vector = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| JetError::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if vector.len() != dim {
                return Err(JetError::Parse {
                    line: idx + 1,
                    message: format!("expected {dim} components, found {}", vector.len()),
                });
            }
            table.vectors.insert(token.to_string(), vector);
        }
        Ok(table)
    }

    pub fn load(path: &Path, fallback: Fallback) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| JetError::io(path, e))?;
        Self::parse(&text, fallback)
    }
}

fn hash_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}
