use jet::corpus::{build_vocab, LanguageConfig};
use jet::labeler::{EmbeddingTable, LabelMode, LabeledSample};
use jet::model::{init_parameters, Mat, ModelConfig, ParamKind};
use jet::pipeline;
use jet::serializer::{EncodedSample, SerializerConfig};
use jet::synth::{self, SynthConfig};
use jet::training::{self, batch_objective, optimizer_step, TrainConfig, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model(vocab: usize) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 2,
        ff_inner: 32,
        picker_widths: vec![16, 8, 3],
        ..ModelConfig::toy(vocab, 3)
    }
}

fn corpus(n: usize) -> (Vec<LabeledSample>, Vec<EncodedSample>, usize) {
    let lang = LanguageConfig::english();
    let samples = synth::generate(&SynthConfig::new(n, 7)).unwrap();
    let emb = EmbeddingTable::hashed(8, 0).unwrap();
    let labeled = pipeline::label_corpus(&samples, LabelMode::Hard, &emb, &lang).unwrap();
    let vocab = build_vocab(&samples, 4096, &lang).unwrap();
    let data = training::prepare(&labeled, LabelMode::Hard, &vocab, &lang, &SerializerConfig::default()).unwrap();
    (labeled, data, vocab.len())
}

/// Straight-line AdamW over flat slices.
fn adamw_reference(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: i32, decays: bool, c: &TrainConfig) {
    for i in 0..p.len() {
        if decays {
            p[i] -= c.learning_rate * c.weight_decay * p[i];
        }
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        let mh = m[i] / (1.0 - c.beta1.powi(t));
        let vh = v[i] / (1.0 - c.beta2.powi(t));
        p[i] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
    }
}

#[test]
fn optimizer_matches_reference() {
    let cfg = TrainConfig { learning_rate: 1e-2, ..TrainConfig::default() };
    let params = init_parameters(&small_model(20)).unwrap();
    let mut state = TrainState::new(params.clone());
    let mut flat: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, bool)> = params
        .values
        .iter()
        .zip(&params.meta)
        .map(|(v, m)| (v.iter().copied().collect(), vec![0.0; v.len()], vec![0.0; v.len()], m.kind == ParamKind::Weight))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 1..=3 {
        let mut grads = params.zero_gradients();
        for g in &mut grads.tensors {
            g.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        assert!(optimizer_step(&mut state, &grads, &cfg));
        for ((p, m, v, d), g) in flat.iter_mut().zip(&grads.tensors) {
            let g: Vec<f64> = g.iter().copied().collect();
            adamw_reference(p, m, v, &g, t, *d, &cfg);
        }
    }
    for (value, (p, ..)) in state.params.values.iter().zip(&flat) {
        for (a, b) in value.iter().zip(p) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
    assert_eq!(state.step, 3);
}

#[test]
fn alpha_zero_freezes_picker_and_matches_generator_only() {
    let (_, data, v) = corpus(6);
    let params = init_parameters(&small_model(v)).unwrap();
    let batch: Vec<&EncodedSample> = data.iter().collect();
    let (losses, grads) = batch_objective(&params, &batch, 0.0, true, None).unwrap();
    assert_eq!(losses.joint, losses.generator);
    for id in params.picker_param_ids() {
        assert!(grads.tensors[id].iter().all(|&g| g == 0.0));
    }
    let (alone, alone_grads) = batch_objective(&params, &batch, 0.0, false, None).unwrap();
    assert_eq!(alone.generator, losses.generator);
    for (a, b) in grads.tensors.iter().zip(&alone_grads.tensors) {
        assert_eq!(a, b);
    }
    // affine in alpha
    let (one, _) = batch_objective(&params, &batch, 1.0, true, None).unwrap();
    let (three, _) = batch_objective(&params, &batch, 3.0, true, None).unwrap();
    assert!((three.joint - (one.joint + 2.0 * one.picker)).abs() < 1e-12);
}

#[test]
fn alpha_zero_and_none_mode_train_identically() {
    let (_, data, v) = corpus(16);
    let model = small_model(v);
    let base = TrainConfig { epochs: 2, ..TrainConfig::toy() };
    let a = training::train(&data, &TrainConfig { alpha: 0.0, ..base.clone() }, &model, |_, _| Ok(())).unwrap();
    let b = training::train(&data, &TrainConfig { label_mode: LabelMode::None, ..base }, &model, |_, _| Ok(())).unwrap();
    assert_eq!(a.state.params.values, b.state.params.values);
    assert!(a.log.iter().all(|r| r.picker_loss == 0.0));
}

#[test]
fn loss_falls_and_runs_repeat() {
    let (_, data, v) = corpus(32);
    let model = ModelConfig::toy(v, 3);
    for alpha in [0.0, 1.0] {
        let cfg = TrainConfig { alpha, epochs: 50, ..TrainConfig::toy() };
        let run = training::train(&data, &cfg, &model, |_, _| Ok(())).unwrap();
        assert!(run.log[49].joint_loss < run.log[0].joint_loss);
        if alpha == 1.0 {
            let again = training::train(&data, &cfg, &model, |_, _| Ok(())).unwrap();
            assert_eq!(training::loss_log_csv(&run.log), training::loss_log_csv(&again.log));
        }
    }
}

#[test]
fn label_mode_mismatch_is_rejected() {
    let (labeled, _, _) = corpus(4);
    let lang = LanguageConfig::english();
    let vocab = build_vocab(&labeled.iter().map(|l| l.sample.clone()).collect::<Vec<_>>(), 512, &lang).unwrap();
    assert!(training::prepare(&labeled, LabelMode::Soft, &vocab, &lang, &SerializerConfig::default()).is_err());
    let none: Vec<LabeledSample> = labeled.iter().map(|l| LabeledSample::unlabeled(l.sample.clone())).collect();
    assert!(training::prepare(&none, LabelMode::Hard, &vocab, &lang, &SerializerConfig::default()).is_err());
    assert!(training::train(&[], &TrainConfig::toy(), &small_model(10), |_, _| Ok(())).is_err());
    let _ = Mat::zeros((1, 1));
}
