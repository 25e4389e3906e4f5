//! Generates a small templated corpus and writes it as JSON lines.

use jet::corpus::{self, LanguageConfig};
use jet::labeler;
use jet::synth::{self, SynthConfig, Template};

fn main() -> jet::Result<()> {
    let lang = LanguageConfig::english();
    let cfg = SynthConfig { templates: vec![Template::Pronoun, Template::Ellipsis], ..SynthConfig::new(6, 42) };
    let samples = synth::generate(&cfg)?;
    for s in &samples {
        println!("[{}] {}", s.id, s.context.join(" | "));
        println!("    {} -> {}", s.incomplete, s.reference.as_deref().unwrap_or("?"));
        println!("    important: {:?}", labeler::important_tokens(s, &lang)?);
    }
    let path = std::env::temp_dir().join("jet-synth-example.jsonl");
    corpus::write_jsonl(&path, &samples)?;
    println!("wrote {}", path.display());
    Ok(())
}
