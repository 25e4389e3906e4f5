//! Joint picker+generator training against the generator-only baseline on a
//! 400/100 synthetic split, averaged over several seeds.

use jet::corpus::{DialogueSample, LanguageConfig};
use jet::evaluation::{self, EvalConfig};
use jet::inference::{self, DecodeConfig};
use jet::labeler::{EmbeddingTable, LabelMode, LabeledSample};
use jet::model::ModelConfig;
use jet::pipeline;
use jet::serializer::{self, SerializerConfig};
use jet::synth::{self, SynthConfig};
use jet::training::TrainConfig;

pub struct Comparison {
    pub joint_f1: Vec<f64>,
    pub baseline_f1: Vec<f64>,
    pub picker_f1: Vec<f64>,
}

fn env(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn held_out_picker_f1(fitted: &pipeline::Fitted, test: &[LabeledSample], lang: &LanguageConfig) -> jet::Result<f64> {
    let ser = SerializerConfig::default();
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for l in test {
        let tags = l.labels.as_ref().and_then(|x| x.tags()).expect("hard labels");
        let encoded = serializer::build_input(&l.sample, &fitted.vocab, lang, &ser)?;
        pred.extend(inference::predict_tags(fitted.params(), &encoded)?);
        gold.extend(tags.iter().cloned());
    }
    Ok(evaluation::span_f1(&pred, &gold))
}

pub fn run_example() -> jet::Result<Comparison> {
    let seeds = env("JET_SEEDS", 5) as u64;
    let epochs = env("JET_EPOCHS", 20);
    let lang = LanguageConfig::english();
    let corpus = synth::generate(&SynthConfig::new(500, 11))?;
    let emb = EmbeddingTable::hashed(32, 0)?;
    let labeled = pipeline::label_corpus(&corpus, LabelMode::Hard, &emb, &lang)?;
    let (train, test) = labeled.split_at(400);
    let gold: Vec<DialogueSample> = test.iter().map(|l| l.sample.clone()).collect();
    let decode = DecodeConfig { max_len: pipeline::default_max_len(&corpus, &lang), ..DecodeConfig::default() };

    let mut out = Comparison { joint_f1: Vec::new(), baseline_f1: Vec::new(), picker_f1: Vec::new() };
    for seed in 0..seeds {
        for alpha in [1.0, 0.0] {
            let cfg = TrainConfig { alpha, epochs, seed, ..TrainConfig::toy() };
            let model = ModelConfig::toy(0, 3).with_seed(seed);
            let fitted = pipeline::fit(train, &lang, &SerializerConfig::default(), &cfg, &model, 4096, |_, _, _| Ok(()))?;
            let preds = pipeline::restore_all(fitted.params(), &fitted.vocab, &lang, SerializerConfig::default(), decode, &gold)?;
            let report = evaluation::evaluate(&preds, &gold, Some(test), &lang, &EvalConfig::default())?;
            println!("seed {seed} alpha {alpha}: f1 {:.1} em {:.1} loss {:.4}", report.f1, report.em, fitted.log().last().map_or(0.0, |r| r.generator_loss));
            if alpha > 0.0 {
                out.joint_f1.push(report.f1);
                let pf = held_out_picker_f1(&fitted, test, &lang)?;
                println!("  picker span f1 {:.3}", pf);
                out.picker_f1.push(pf);
            } else {
                out.baseline_f1.push(report.f1);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "mean f1: joint {:.2}  baseline {:.2}  picker span f1 {:.3}",
        mean(&out.joint_f1),
        mean(&out.baseline_f1),
        mean(&out.picker_f1)
    );
    Ok(out)
}

#[allow(dead_code)]
fn main() -> jet::Result<()> {
    run_example().map(|_| ())
}
