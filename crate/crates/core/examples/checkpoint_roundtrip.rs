//! Saves freshly initialized parameters and reads them back.

use jet::corpus::{self, LanguageConfig};
use jet::model::{checkpoint, init_parameters, ModelConfig};
use jet::synth::{self, SynthConfig};

fn main() -> jet::Result<()> {
    let lang = LanguageConfig::english();
    let samples = synth::generate(&SynthConfig::new(20, 1))?;
    let vocab = corpus::build_vocab(&samples, 1000, &lang)?;
    let params = init_parameters(&ModelConfig::toy(vocab.len(), 3))?;

    let path = std::env::temp_dir().join("jet-example.ckpt");
    checkpoint::save(&path, &params, Some(vocab.fingerprint()))?;
    let (loaded, manifest) = checkpoint::load(&path)?;
    checkpoint::check_vocab(&manifest, vocab.fingerprint(), vocab.len())?;

    let max_err = params
        .values
        .iter()
        .zip(&loaded.values)
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    println!("{} tensors, {} scalars", params.values.len(), params.num_scalars());
    println!("largest f32 rounding error after reload: {max_err:.2e}");
    println!("written to {}", path.display());
    Ok(())
}
