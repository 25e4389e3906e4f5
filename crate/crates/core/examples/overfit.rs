//! Trains the toy model on 32 synthetic dialogues until it memorizes them,
//! then decodes the training set with beam 8.

use std::time::Instant;

use jet::corpus::LanguageConfig;
use jet::evaluation::exact_match;
use jet::inference::DecodeConfig;
use jet::labeler::{EmbeddingTable, LabelMode};
use jet::model::ModelConfig;
use jet::pipeline;
use jet::serializer::SerializerConfig;
use jet::synth::{self, SynthConfig};
use jet::training::TrainConfig;

pub fn run_example() -> jet::Result<f64> {
    let epochs: usize = std::env::var("JET_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(200);
    let lang = LanguageConfig::english();
    let corpus = synth::generate(&SynthConfig::new(32, 7))?;
    let emb = EmbeddingTable::hashed(32, 0)?;
    let labeled = pipeline::label_corpus(&corpus, LabelMode::Hard, &emb, &lang)?;
    let cfg = TrainConfig { epochs, ..TrainConfig::toy() };
    let start = Instant::now();
    let fitted = pipeline::fit(
        &labeled,
        &lang,
        &SerializerConfig::default(),
        &cfg,
        &ModelConfig::toy(0, 3),
        4096,
        |_, r, _| {
            if r.epoch % 20 == 0 || r.epoch == 1 {
                println!("epoch {:>3}  picker {:.4}  generator {:.4}", r.epoch, r.picker_loss, r.generator_loss);
            }
            Ok(())
        },
    )?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());
    let decode = DecodeConfig { max_len: pipeline::default_max_len(&corpus, &lang), ..DecodeConfig::default() };
    let preds = pipeline::restore_all(fitted.params(), &fitted.vocab, &lang, SerializerConfig::default(), decode, &corpus)?;
    let hits = preds
        .iter()
        .zip(&corpus)
        .filter(|(p, s)| exact_match(&p.prediction, s.reference.as_deref().unwrap_or("")))
        .count();
    let em = hits as f64 / corpus.len() as f64;
    println!("exact match {:.1}% after {:.1}s", 100.0 * em, start.elapsed().as_secs_f64());
    Ok(em)
}

#[allow(dead_code)]
fn main() -> jet::Result<()> {
    run_example().map(|_| ())
}
