//! Picker, generator and joint losses; AdamW; the training loop.
//!
//! Losses are means over supervised positions: the picker mean runs over
//! every non-ignored input position of a batch, the generator mean over
//! every target token. The joint objective is `alpha * picker + generator`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageConfig, Vocabulary};
use crate::error::{JetError, Result};
use crate::labeler::{LabelMode, LabeledSample, PickerLabels};
use crate::model::{self, Gradients, Graph, Mat, ModelConfig, ModelParameters, Var};
use crate::serializer::{self, EncodedSample, PickerTarget, SerializerConfig};

/// Probability floor inside logarithms.
pub const PROB_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub label_mode: LabelMode,
    pub subsample_fraction: f64,
    /// Write a checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            batch_size: 12,
            epochs: 20,
            seed: 0,
            label_mode: LabelMode::Hard,
            subsample_fraction: 1.0,
            checkpoint_every: 0,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    /// Settings for training the toy model from scratch: the reference
    /// learning rate is tuned for fine-tuning a pretrained model and barely
    /// moves randomly initialized weights.
    pub fn toy() -> Self {
        TrainConfig {
            learning_rate: 2e-3,
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(JetError::Config(format!("alpha {} must be non-negative", self.alpha)));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(JetError::Config(format!(
                "subsample fraction {} outside (0, 1]",
                self.subsample_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(JetError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(JetError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn uses_picker(&self) -> bool {
        self.label_mode != LabelMode::None && self.alpha > 0.0
    }
}

/// Mean picker cross-entropy over non-ignored positions.
///
/// `predictions` holds one row per position: a 3-way BIO distribution, or a
/// single importance probability for soft targets.
pub fn picker_loss(predictions: &Mat, targets: &[PickerTarget]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (row, t) in predictions.rows().into_iter().zip(targets) {
        match *t {
            PickerTarget::Ignore => continue,
            PickerTarget::Class(tag) => total -= row[tag.class_id()].max(PROB_FLOOR).ln(),
            PickerTarget::Score(q) => {
                let p = row[0];
                total -= q * p.max(PROB_FLOOR).ln() + (1.0 - q) * (1.0 - p).max(PROB_FLOOR).ln();
            }
        }
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Mean negative log-likelihood of the target tokens over unmasked steps.
pub fn generator_loss(distributions: &Mat, targets: &[usize], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ((row, &t), &m) in distributions.rows().into_iter().zip(targets).zip(mask) {
        if m {
            total -= row[t].max(PROB_FLOOR).ln();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn joint_loss(picker: f64, generator: f64, alpha: f64) -> f64 {
    alpha * picker + generator
}

/// Summed (not yet averaged) loss nodes for one sample.
pub struct SampleLoss {
    pub picker_sum: Option<Var>,
    pub picker_count: usize,
    pub generator_sum: Var,
    pub generator_count: usize,
}

/// Records encoder, optional picker and decoder for one sample on `graph`.
pub fn sample_loss(graph: &mut Graph<'_>, sample: &EncodedSample, with_picker: bool) -> Result<SampleLoss> {
    if sample.decoder_input.is_empty() {
        return Err(JetError::InvalidInput("training sample has no reference".into()));
    }
    let mask = vec![true; sample.len()];
    let enc = graph.encode(&sample.input_ids, &mask)?;
    let mut picker_sum = None;
    let mut picker_count = 0;
    if with_picker {
        let logits = graph.picker(enc);
        picker_count = sample
            .picker_targets
            .iter()
            .filter(|t| **t != PickerTarget::Ignore)
            .count();
        let soft = sample
            .picker_targets
            .iter()
            .any(|t| matches!(t, PickerTarget::Score(_)));
        picker_sum = Some(if soft {
            let targets = sample
                .picker_targets
                .iter()
                .map(|t| match t {
                    PickerTarget::Score(q) => Some(*q),
                    _ => None,
                })
                .collect();
            graph.tape.sigmoid_bce(logits, targets)
        } else {
            let targets = sample
                .picker_targets
                .iter()
                .map(|t| match t {
                    PickerTarget::Class(c) => Some(c.class_id()),
                    _ => None,
                })
                .collect();
            graph.tape.softmax_xent(logits, targets)
        });
    }
    let logits = graph.decode(enc, &mask, &sample.decoder_input)?;
    let generator_sum = graph
        .tape
        .softmax_xent(logits, sample.decoder_target.iter().map(|&t| Some(t)).collect());
    Ok(SampleLoss {
        picker_sum,
        picker_count,
        generator_sum,
        generator_count: sample.decoder_target.len(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchLosses {
    pub picker: f64,
    pub generator: f64,
    pub joint: f64,
}

/// Joint objective over a batch and, when `dropout_seed` is `None`, in
/// evaluation mode. Returns the objective with its exact gradient.
pub fn batch_objective(
    params: &ModelParameters,
    batch: &[&EncodedSample],
    alpha: f64,
    with_picker: bool,
    dropout_seed: Option<u64>,
) -> Result<(BatchLosses, Gradients)> {
    batch_objective_impl(params, batch, alpha, with_picker, dropout_seed, true)
}

/// Forward-only value of [`batch_objective`].
pub fn batch_value(
    params: &ModelParameters,
    batch: &[&EncodedSample],
    alpha: f64,
    with_picker: bool,
) -> Result<BatchLosses> {
    Ok(batch_objective_impl(params, batch, alpha, with_picker, None, false)?.0)
}

fn batch_objective_impl(
    params: &ModelParameters,
    batch: &[&EncodedSample],
    alpha: f64,
    with_picker: bool,
    dropout_seed: Option<u64>,
    want_grad: bool,
) -> Result<(BatchLosses, Gradients)> {
    let picker_total: usize = if with_picker {
        batch
            .iter()
            .map(|s| s.picker_targets.iter().filter(|t| **t != PickerTarget::Ignore).count())
            .sum()
    } else {
        0
    };
    let gen_total: usize = batch.iter().map(|s| s.decoder_target.len()).sum();
    let picker_scale = if picker_total > 0 { 1.0 / picker_total as f64 } else { 0.0 };
    let gen_scale = 1.0 / gen_total.max(1) as f64;

    let mut grads = params.zero_gradients();
    let mut picker_sum = 0.0;
    let mut gen_sum = 0.0;
    for (row, sample) in batch.iter().enumerate() {
        let mut graph = match dropout_seed {
            Some(seed) => Graph::training(params, mix(seed, row as u64)),
            None => Graph::new(params),
        };
        let loss = sample_loss(&mut graph, sample, with_picker)?;
        let mut objective = graph.tape.scale(loss.generator_sum, gen_scale);
        gen_sum += graph.tape.scalar(loss.generator_sum);
        if let Some(p) = loss.picker_sum {
            picker_sum += graph.tape.scalar(p);
            let weighted = graph.tape.scale(p, alpha * picker_scale);
            objective = graph.tape.add(weighted, objective);
        }
        if want_grad {
            grads.add_assign(&graph.tape.backward(objective, 1.0)?);
        }
    }
    let picker = picker_sum * picker_scale;
    let generator = gen_sum * gen_scale;
    Ok((
        BatchLosses {
            picker,
            generator,
            joint: joint_loss(picker, generator, alpha),
        },
        grads,
    ))
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Parameters plus AdamW moments and counters.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParameters,
    pub first_moment: Vec<Mat>,
    pub second_moment: Vec<Mat>,
    pub step: u64,
    pub epoch: usize,
    pub skipped_steps: u64,
    pub last_losses: BatchLosses,
}

impl TrainState {
    pub fn new(params: ModelParameters) -> Self {
        let zeros: Vec<Mat> = params.shapes().map(Mat::zeros).collect();
        TrainState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            params,
            step: 0,
            epoch: 0,
            skipped_steps: 0,
            last_losses: BatchLosses::default(),
        }
    }
}

/// Bias-corrected AdamW step with decoupled weight decay on the tensors whose
/// kind decays. A non-finite gradient skips the step.
pub fn optimizer_step(state: &mut TrainState, grads: &Gradients, cfg: &TrainConfig) -> bool {
    if !grads.is_finite() {
        state.skipped_steps += 1;
        log::warn!("skipping step {}: non-finite gradient", state.step + 1);
        return false;
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);
    let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for (i, g) in grads.tensors.iter().enumerate() {
        let decays = state.params.meta[i].kind.decays();
        let p = &mut state.params.values[i];
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
            if decays {
                *p *= shrink;
            }
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        });
    }
    true
}

/// Uniform sample of `ceil(fraction * n)` items without replacement, kept in
/// original order.
pub fn subsample<T: Clone>(corpus: &[T], fraction: f64, seed: u64) -> Vec<T> {
    let n = corpus.len();
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    if k == n {
        return corpus.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| corpus[i].clone()).collect()
}

/// Encodes labeled samples for training, checking that labels agree with the
/// label mode.
pub fn prepare(
    corpus: &[LabeledSample],
    mode: LabelMode,
    vocab: &Vocabulary,
    lang: &LanguageConfig,
    ser: &SerializerConfig,
) -> Result<Vec<EncodedSample>> {
    corpus
        .iter()
        .map(|ls| {
            let labels = match (mode, &ls.labels) {
                (LabelMode::None, _) => None,
                (_, None) => {
                    return Err(JetError::InvalidInput(format!(
                        "sample `{}` has no labels but label mode is `{mode}`",
                        ls.sample.id
                    )))
                }
                (LabelMode::Soft, Some(l @ PickerLabels::Soft { .. }))
                | (LabelMode::Hard, Some(l @ PickerLabels::Hard { .. }))
                | (LabelMode::Defined, Some(l @ PickerLabels::Defined { .. })) => Some(l),
                (_, Some(l)) => {
                    return Err(JetError::InvalidInput(format!(
                        "sample `{}` carries `{}` labels but label mode is `{mode}`",
                        ls.sample.id,
                        l.mode()
                    )))
                }
            };
            serializer::encode_sample(&ls.sample, labels, vocab, lang, ser)
        })
        .collect()
}

/// Picker output arity a label mode needs.
pub fn arity_for(mode: LabelMode) -> usize {
    match mode {
        LabelMode::Soft => 1,
        _ => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    pub picker_loss: f64,
    pub generator_loss: f64,
    pub joint_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<EpochRecord>,
    pub samples: usize,
}

pub fn loss_log_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,step,picker_loss,generator_loss,joint_loss\n");
    for r in log {
        let _ = writeln!(
            out,
            "{},{},{:.8},{:.8},{:.8}",
            r.epoch, r.step, r.picker_loss, r.generator_loss, r.joint_loss
        );
    }
    out
}

pub fn write_loss_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, loss_log_csv(log)).map_err(|e| JetError::io(path, e))
}

/// Seeded mini-batch training. `on_epoch` runs after every epoch with the
/// current state (checkpointing, progress reporting).
pub fn train(
    data: &[EncodedSample],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    mut on_epoch: impl FnMut(&TrainState, &EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(JetError::Empty("training corpus".into()));
    }
    if cfg.label_mode != LabelMode::None && model_cfg.picker_arity != arity_for(cfg.label_mode) {
        return Err(JetError::Config(format!(
            "label mode `{}` needs picker arity {}, model has {}",
            cfg.label_mode,
            arity_for(cfg.label_mode),
            model_cfg.picker_arity
        )));
    }
    let with_picker = cfg.uses_picker();
    if with_picker {
        let soft = cfg.label_mode == LabelMode::Soft;
        for s in data {
            let ok = s.picker_targets.iter().all(|t| match t {
                PickerTarget::Ignore => true,
                PickerTarget::Score(_) => soft,
                PickerTarget::Class(_) => !soft,
            });
            if !ok || s.picker_targets.iter().all(|t| *t == PickerTarget::Ignore) {
                return Err(JetError::InvalidInput(format!(
                    "training sample lacks `{}` picker targets",
                    cfg.label_mode
                )));
            }
        }
    }
    let mut state = TrainState::new(model::init_parameters(model_cfg)?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = BatchLosses::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&EncodedSample> = chunk.iter().map(|&i| &data[i]).collect();
            let dropout_seed = mix(cfg.seed, state.step + 1);
            let (losses, mut grads) =
                batch_objective(&state.params, &batch, cfg.alpha, with_picker, Some(dropout_seed))?;
            if let Some(max) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            optimizer_step(&mut state, &grads, cfg);
            let w = batch.len() as f64;
            sums.picker += losses.picker * w;
            sums.generator += losses.generator * w;
            sums.joint += losses.joint * w;
            state.last_losses = losses;
        }
        state.epoch = epoch;
        let n = data.len() as f64;
        let record = EpochRecord {
            epoch,
            step: state.step,
            picker_loss: sums.picker / n,
            generator_loss: sums.generator / n,
            joint_loss: sums.joint / n,
        };
        log::info!(
            "epoch {epoch}: picker {:.4} generator {:.4} joint {:.4}",
            record.picker_loss,
            record.generator_loss,
            record.joint_loss
        );
        log.push(record);
        on_epoch(&state, &record)?;
    }
    Ok(TrainOutcome {
        state,
        log,
        samples: data.len(),
    })
}
