//! Soft and hard picker labels for one dialogue.

use jet::corpus::{self, DialogueSample, LanguageConfig};
use jet::labeler::{self, EmbeddingTable, Fallback, LabelMode, PickerLabels};

const VECTORS: &str = "\
band 0.9 0.1 0.0
paramore 0.8 0.3 0.1
album 0.1 0.9 0.2
record 0.2 0.8 0.3
tour 0.0 0.2 0.9
";

fn main() -> jet::Result<()> {
    let lang = LanguageConfig::english();
    let emb = EmbeddingTable::parse(VECTORS, Fallback::Zero)?;
    let sample = DialogueSample::new(
        "demo",
        vec!["paramore released a new record".into(), "the band is on tour".into()],
        "when is it out",
        Some("when is the paramore album out".into()),
    )?;
    let clues = labeler::extract_clue_tokens(sample.reference.as_deref().unwrap(), &sample.incomplete, &lang);
    println!("clue tokens: {:?}", clues.tokens().collect::<Vec<_>>());

    let soft = labeler::label_sample(&sample, LabelMode::Soft, &emb, &lang)?;
    let hard = labeler::label_sample(&sample, LabelMode::Hard, &emb, &lang)?;
    let (Some(PickerLabels::Soft { scores }), Some(tags)) = (&soft.labels, hard.labels.as_ref().and_then(|l| l.tags())) else {
        unreachable!()
    };
    for ((utt, s), t) in sample.context.iter().zip(scores).zip(tags) {
        for ((w, x), tag) in corpus::words(utt, &lang).iter().zip(s).zip(t) {
            println!("{w:>10}  soft {x:.3}  hard {tag:?}");
        }
        println!();
    }
    Ok(())
}
