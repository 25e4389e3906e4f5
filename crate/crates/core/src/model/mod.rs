//! Encoder-decoder transformer with a token-level picker head and a
//! generator head sharing one encoder.
//!
//! Blocks are pre-norm with scale-only RMS normalization, bias-free attention
//! and feed-forward projections, and a learned bucketed relative-position bias
//! added to self-attention logits (one table for the encoder, one for the
//! decoder, each shared across layers). The word-embedding matrix is shared by
//! encoder and decoder inputs; the output projection is separate.

pub mod checkpoint;
pub mod position;
pub mod tape;

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{JetError, Result};
use crate::serializer::EncodedBatch;

pub use tape::{Gradients, Mat, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_inner: usize,
    /// Picker feed-forward widths, input first: `[d_model, hidden.., arity]`.
    pub picker_widths: Vec<usize>,
    /// 1 for soft labels, 3 for BIO tags.
    pub picker_arity: usize,
    pub rel_buckets: usize,
    pub rel_max_distance: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Add sinusoidal absolute position encodings to the input embeddings.
    #[serde(default)]
    pub literal_pe: bool,
    #[serde(default = "default_eps")]
    pub norm_eps: f64,
}

fn default_eps() -> f64 {
    1e-6
}

/// Toy geometry; vocabulary size and picker arity are placeholders filled in
/// once the vocabulary and label mode are known.
impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy(0, 3)
    }
}

impl ModelConfig {
    /// Desk-scale default: width 64, 2 layers, 4 heads.
    pub fn toy(vocab_size: usize, picker_arity: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 64,
            layers: 2,
            heads: 4,
            ff_inner: 128,
            picker_widths: vec![64, 32, 16, picker_arity],
            picker_arity,
            rel_buckets: 32,
            rel_max_distance: 128,
            dropout: 0.1,
            seed: 0,
            literal_pe: false,
            norm_eps: default_eps(),
        }
    }

    /// T5-base geometry with the 768-256-64 picker head.
    pub fn base(vocab_size: usize, picker_arity: usize) -> Self {
        ModelConfig {
            d_model: 768,
            layers: 12,
            heads: 12,
            ff_inner: 3072,
            picker_widths: vec![768, 256, 64, picker_arity],
            ..Self::toy(vocab_size, picker_arity)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(JetError::Config(m));
        if self.layers == 0 {
            return fail("at least one layer is required".into());
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if self.vocab_size == 0 || self.ff_inner == 0 {
            return fail("vocabulary size and feed-forward width must be positive".into());
        }
        if !matches!(self.picker_arity, 1 | 3) {
            return fail(format!("picker arity must be 1 or 3, got {}", self.picker_arity));
        }
        if self.picker_widths.len() < 2
            || self.picker_widths[0] != self.d_model
            || *self.picker_widths.last().unwrap() != self.picker_arity
        {
            return fail(format!(
                "picker widths {:?} must start at d_model {} and end at arity {}",
                self.picker_widths, self.d_model, self.picker_arity
            ));
        }
        if self.rel_buckets < 4 || self.rel_max_distance < self.rel_buckets / 2 {
            return fail("relative-position buckets misconfigured".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Embedding,
    PositionBias,
    Norm,
    Weight,
    Bias,
}

impl ParamKind {
    /// Whether decoupled weight decay applies.
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy)]
struct AttnIds {
    q: usize,
    k: usize,
    v: usize,
    o: usize,
}

#[derive(Debug, Clone)]
struct EncLayer {
    attn_norm: usize,
    attn: AttnIds,
    ff_norm: usize,
    ff_in: usize,
    ff_out: usize,
}

#[derive(Debug, Clone)]
struct DecLayer {
    self_norm: usize,
    self_attn: AttnIds,
    cross_norm: usize,
    cross_attn: AttnIds,
    ff_norm: usize,
    ff_in: usize,
    ff_out: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    enc_rel: usize,
    dec_rel: usize,
    enc: Vec<EncLayer>,
    enc_final: usize,
    dec: Vec<DecLayer>,
    dec_final: usize,
    picker: Vec<(usize, usize)>,
    lm_head: usize,
}

/// All trainable tensors plus the layout that names them.
#[derive(Debug, Clone)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub values: Vec<Mat>,
    pub meta: Vec<TensorMeta>,
    layout: Layout,
}

impl PartialEq for ModelParameters {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values && self.meta == other.meta
    }
}

struct Builder {
    values: Vec<Mat>,
    meta: Vec<TensorMeta>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn push(&mut self, name: String, kind: ParamKind, value: Mat) -> usize {
        self.values.push(value);
        self.meta.push(TensorMeta { name, kind });
        self.values.len() - 1
    }

    fn normal(&mut self, name: String, kind: ParamKind, shape: (usize, usize), std: f64) -> usize {
        let dist = Normal::new(0.0, std).expect("positive std");
        let rng = &mut self.rng;
        let value = Mat::from_shape_simple_fn(shape, || dist.sample(rng));
        self.push(name, kind, value)
    }

    fn weight(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.normal(name, ParamKind::Weight, (rows, cols), 1.0 / (rows as f64).sqrt())
    }

    fn norm(&mut self, name: String, width: usize) -> usize {
        self.push(name, ParamKind::Norm, Mat::ones((1, width)))
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIds {
        AttnIds {
            q: self.weight(format!("{prefix}.q"), d, d),
            k: self.weight(format!("{prefix}.k"), d, d),
            v: self.weight(format!("{prefix}.v"), d, d),
            o: self.weight(format!("{prefix}.o"), d, d),
        }
    }
}

/// Seed-deterministic scaled-normal initialization with zero biases.
pub fn init_parameters(cfg: &ModelConfig) -> Result<ModelParameters> {
    cfg.validate()?;
    let d = cfg.d_model;
    let mut b = Builder {
        values: Vec::new(),
        meta: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let embed = b.normal("shared.embedding".into(), ParamKind::Embedding, (cfg.vocab_size, d), 1.0);
    let enc_rel = b.normal("encoder.relative_bias".into(), ParamKind::PositionBias, (cfg.rel_buckets, cfg.heads), 0.1);
    let dec_rel = b.normal("decoder.relative_bias".into(), ParamKind::PositionBias, (cfg.rel_buckets, cfg.heads), 0.1);
    let enc = (0..cfg.layers)
        .map(|l| {
            let p = format!("encoder.{l}");
            EncLayer {
                attn_norm: b.norm(format!("{p}.attn_norm"), d),
                attn: b.attn(&format!("{p}.self_attn"), d),
                ff_norm: b.norm(format!("{p}.ff_norm"), d),
                ff_in: b.weight(format!("{p}.ff_in"), d, cfg.ff_inner),
                ff_out: b.weight(format!("{p}.ff_out"), cfg.ff_inner, d),
            }
        })
        .collect();
    let enc_final = b.norm("encoder.final_norm".into(), d);
    let dec = (0..cfg.layers)
        .map(|l| {
            let p = format!("decoder.{l}");
            DecLayer {
                self_norm: b.norm(format!("{p}.self_norm"), d),
                self_attn: b.attn(&format!("{p}.self_attn"), d),
                cross_norm: b.norm(format!("{p}.cross_norm"), d),
                cross_attn: b.attn(&format!("{p}.cross_attn"), d),
                ff_norm: b.norm(format!("{p}.ff_norm"), d),
                ff_in: b.weight(format!("{p}.ff_in"), d, cfg.ff_inner),
                ff_out: b.weight(format!("{p}.ff_out"), cfg.ff_inner, d),
            }
        })
        .collect();
    let dec_final = b.norm("decoder.final_norm".into(), d);
    let picker = cfg
        .picker_widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let weight = b.weight(format!("picker.{i}.weight"), w[0], w[1]);
            let bias = b.push(format!("picker.{i}.bias"), ParamKind::Bias, Mat::zeros((1, w[1])));
            (weight, bias)
        })
        .collect();
    let lm_head = b.weight("generator.output".into(), d, cfg.vocab_size);
    let layout = Layout {
        embed,
        enc_rel,
        dec_rel,
        enc,
        enc_final,
        dec,
        dec_final,
        picker,
        lm_head,
    };
    Ok(ModelParameters {
        config: cfg.clone(),
        values: b.values,
        meta: b.meta,
        layout,
    })
}

impl ModelParameters {
    pub fn shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.values.iter().map(|v| (v.nrows(), v.ncols()))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Ids of the picker feed-forward tensors.
    pub fn picker_param_ids(&self) -> Vec<usize> {
        self.layout.picker.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn embedding_id(&self) -> usize {
        self.layout.embed
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.name == name)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients::zeros_like(self.shapes())
    }

    /// Rebuilds parameters from a config and raw tensors in layout order.
    pub fn from_values(config: ModelConfig, values: Vec<Mat>) -> Result<Self> {
        let mut fresh = init_parameters(&config)?;
        if values.len() != fresh.values.len() {
            return Err(JetError::Checkpoint(format!(
                "expected {} tensors, found {}",
                fresh.values.len(),
                values.len()
            )));
        }
        for (i, (a, b)) in fresh.values.iter().zip(&values).enumerate() {
            if a.raw_dim() != b.raw_dim() {
                return Err(JetError::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    fresh.meta[i].name,
                    b.shape(),
                    a.shape()
                )));
            }
        }
        fresh.values = values;
        Ok(fresh)
    }
}

/// Contextual input representations of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub hidden: Mat,
    pub mask: Vec<bool>,
}

/// One forward pass recorded on a tape, with optional dropout.
pub struct Graph<'p> {
    pub tape: Tape<'p>,
    params: &'p ModelParameters,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ModelParameters) -> Self {
        Graph {
            tape: Tape::new(&params.values),
            params,
            dropout: None,
        }
    }

    /// Training-mode graph; dropout masks are drawn from `seed`.
    pub fn training(params: &'p ModelParameters, seed: u64) -> Self {
        let rate = params.config.dropout;
        Graph {
            tape: Tape::new(&params.values),
            params,
            dropout: (rate > 0.0).then(|| (rate, ChaCha8Rng::seed_from_u64(seed))),
        }
    }

    fn cfg(&self) -> &'p ModelConfig {
        &self.params.config
    }

    fn drop(&mut self, x: Var) -> Var {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return x;
        };
        let keep = 1.0 - *rate;
        let shape = self.tape.value(x).raw_dim();
        let mask = Mat::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.tape.mul_const(x, mask)
    }

    fn linear(&mut self, x: Var, w: usize) -> Var {
        let w = self.tape.param(w);
        self.tape.matmul(x, w)
    }

    fn norm(&mut self, x: Var, w: usize) -> Var {
        let w = self.tape.param(w);
        self.tape.rms_norm(x, w, self.cfg().norm_eps)
    }

    fn check_finite(&self, x: Var, block: &'static str, layer: usize) -> Result<()> {
        if self.tape.value(x).iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(JetError::NonFinite { block, layer })
        }
    }

    fn relative_bias(&mut self, table: usize, rows: usize, cols: usize, bidirectional: bool) -> Vec<Var> {
        let cfg = self.cfg();
        let grid = position::bucket_grid(rows, cols, bidirectional, cfg.rel_buckets, cfg.rel_max_distance);
        let table = self.tape.param(table);
        (0..cfg.heads)
            .map(|h| self.tape.gather_bias(table, h, grid.clone(), (rows, cols)))
            .collect()
    }

    fn attention(
        &mut self,
        query_in: Var,
        kv_in: Var,
        ids: AttnIds,
        bias: Option<&[Var]>,
        allowed: Rc<Vec<bool>>,
    ) -> Var {
        let q = self.linear(query_in, ids.q);
        let k = self.linear(kv_in, ids.k);
        let v = self.linear(kv_in, ids.v);
        let dh = self.cfg().head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..self.cfg().heads)
            .map(|h| {
                let qh = self.tape.slice_cols(q, h * dh, dh);
                let kh = self.tape.slice_cols(k, h * dh, dh);
                let vh = self.tape.slice_cols(v, h * dh, dh);
                let scores = self.tape.matmul_t(qh, kh);
                let mut scores = self.tape.scale(scores, scale);
                if let Some(bias) = bias {
                    scores = self.tape.add(scores, bias[h]);
                }
                let probs = self.tape.masked_softmax(scores, allowed.clone());
                self.tape.matmul(probs, vh)
            })
            .collect();
        let joined = self.tape.concat_cols(&heads);
        self.linear(joined, ids.o)
    }

    fn feed_forward(&mut self, x: Var, ff_in: usize, ff_out: usize) -> Var {
        let h = self.linear(x, ff_in);
        let h = self.tape.relu(h);
        let h = self.drop(h);
        self.linear(h, ff_out)
    }

    fn embed_ids(&mut self, ids: &[usize]) -> Result<Var> {
        let size = self.cfg().vocab_size;
        if let Some(&id) = ids.iter().find(|&&id| id >= size) {
            return Err(JetError::TokenOutOfRange { id, size });
        }
        let table = self.tape.param(self.params.layout.embed);
        let mut x = self.tape.gather(table, ids);
        if self.cfg().literal_pe {
            let pe = self.tape.constant(position::sinusoidal(ids.len(), self.cfg().d_model));
            x = self.tape.add(x, pe);
        }
        Ok(x)
    }

    /// Encoder stack over one (possibly padded) sequence; `mask` marks real
    /// positions. Padding neither attends nor is attended to.
    pub fn encode(&mut self, ids: &[usize], mask: &[bool]) -> Result<Var> {
        let layout = &self.params.layout;
        let l = ids.len();
        let x = self.embed_ids(ids)?;
        let mut x = self.drop(x);
        let allowed: Rc<Vec<bool>> = Rc::new(
            (0..l * l)
                .map(|k| mask[k / l] && mask[k % l])
                .collect(),
        );
        let bias = self.relative_bias(layout.enc_rel, l, l, true);
        for (i, layer) in layout.enc.iter().enumerate() {
            let h = self.norm(x, layer.attn_norm);
            let a = self.attention(h, h, layer.attn, Some(&bias), allowed.clone());
            let a = self.drop(a);
            x = self.tape.add(x, a);
            let h = self.norm(x, layer.ff_norm);
            let f = self.feed_forward(h, layer.ff_in, layer.ff_out);
            let f = self.drop(f);
            x = self.tape.add(x, f);
            self.check_finite(x, "encoder", i)?;
        }
        let out = self.norm(x, layout.enc_final);
        Ok(self.drop(out))
    }

    /// Picker logits, one row per input position (`l × arity`).
    pub fn picker(&mut self, enc: Var) -> Var {
        let layers = self.params.layout.picker.clone();
        let mut h = enc;
        for (i, &(w, b)) in layers.iter().enumerate() {
            let z = self.linear(h, w);
            let b = self.tape.param(b);
            h = self.tape.add_row(z, b);
            if i + 1 < layers.len() {
                h = self.tape.relu(h);
            }
        }
        h
    }

    /// Generator logits for every decoder step (`t × vocab`). Step `i` sees
    /// decoder ids `..=i` and the unmasked encoder positions.
    pub fn decode(&mut self, enc: Var, enc_mask: &[bool], dec_ids: &[usize]) -> Result<Var> {
        let layout = &self.params.layout;
        let t = dec_ids.len();
        let l = enc_mask.len();
        let y = self.embed_ids(dec_ids)?;
        let mut y = self.drop(y);
        let causal: Rc<Vec<bool>> = Rc::new((0..t * t).map(|k| k % t <= k / t).collect());
        let cross: Rc<Vec<bool>> = Rc::new((0..t * l).map(|k| enc_mask[k % l]).collect());
        let bias = self.relative_bias(layout.dec_rel, t, t, false);
        for (i, layer) in layout.dec.iter().enumerate() {
            let h = self.norm(y, layer.self_norm);
            let a = self.attention(h, h, layer.self_attn, Some(&bias), causal.clone());
            let a = self.drop(a);
            y = self.tape.add(y, a);
            let h = self.norm(y, layer.cross_norm);
            let c = self.attention(h, enc, layer.cross_attn, None, cross.clone());
            let c = self.drop(c);
            y = self.tape.add(y, c);
            let h = self.norm(y, layer.ff_norm);
            let f = self.feed_forward(h, layer.ff_in, layer.ff_out);
            let f = self.drop(f);
            y = self.tape.add(y, f);
            self.check_finite(y, "decoder", i)?;
        }
        let y = self.norm(y, layout.dec_final);
        let y = self.drop(y);
        Ok(self.linear(y, layout.lm_head))
    }
}

/// Input embedding matrix (word embedding, plus absolute positions when the
/// literal-PE flag is set).
pub fn embed(ids: &[usize], params: &ModelParameters) -> Result<Mat> {
    let mut g = Graph::new(params);
    let x = g.embed_ids(ids)?;
    Ok(g.tape.value(x).clone())
}

pub fn encode_one(ids: &[usize], mask: &[bool], params: &ModelParameters) -> Result<EncoderOutput> {
    let mut g = Graph::new(params);
    let h = g.encode(ids, mask)?;
    Ok(EncoderOutput {
        hidden: g.tape.value(h).clone(),
        mask: mask.to_vec(),
    })
}

/// Encodes every row of a padded batch (evaluation mode).
pub fn encode(batch: &EncodedBatch, params: &ModelParameters) -> Result<Vec<EncoderOutput>> {
    batch
        .inputs
        .iter()
        .zip(&batch.input_mask)
        .map(|(ids, mask)| encode_one(ids, mask, params))
        .collect()
}

/// Picker probabilities per position: a 3-way BIO distribution, or a single
/// importance probability in soft mode.
pub fn picker_forward(enc: &EncoderOutput, params: &ModelParameters) -> Mat {
    let mut g = Graph::new(params);
    let h = g.tape.constant(enc.hidden.clone());
    let logits = g.picker(h);
    let z = g.tape.value(logits);
    if params.config.picker_arity == 1 {
        z.mapv(tape::sigmoid)
    } else {
        tape::softmax_rows(z)
    }
}

/// Next-token distributions for every decoder step.
pub fn decode_forward(enc: &EncoderOutput, dec_ids: &[usize], params: &ModelParameters) -> Result<Mat> {
    if dec_ids.is_empty() {
        return Err(JetError::InvalidInput("decoder input is empty".into()));
    }
    let mut g = Graph::new(params);
    let h = g.tape.constant(enc.hidden.clone());
    let logits = g.decode(h, &enc.mask, dec_ids)?;
    Ok(tape::softmax_rows(g.tape.value(logits)))
}

/// Log-probabilities of the next token after `dec_ids`.
pub fn next_token_log_probs(enc: &EncoderOutput, dec_ids: &[usize], params: &ModelParameters) -> Result<Vec<f64>> {
    let mut g = Graph::new(params);
    let h = g.tape.constant(enc.hidden.clone());
    let logits = g.decode(h, &enc.mask, dec_ids)?;
    let row = g.tape.value(logits).row(dec_ids.len() - 1).to_vec();
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    Ok(row.into_iter().map(|v| v - lse).collect())
}
