//! Scores a handful of predictions and prints the evaluation table.

use jet::corpus::{DialogueSample, LanguageConfig};
use jet::evaluation::{self, EvalConfig};
use jet::inference::Prediction;

fn main() -> jet::Result<()> {
    let gold = vec![
        DialogueSample::new("0", vec!["have you heard of paramore".into()], "when did they start", Some("when did paramore start".into()))?,
        DialogueSample::new("1", vec!["i flew to lisbon in june".into()], "how was it", Some("how was lisbon".into()))?,
        DialogueSample::new("2", vec!["the new album is great".into(), "which one".into()], "the second", Some("the second album".into()))?,
    ];
    let preds = [
        ("0", "when did paramore start"),
        ("1", "how was june"),
        ("2", "the second album is great"),
    ]
    .map(|(id, p)| Prediction { id: id.into(), prediction: p.into(), nbest: None });
    let report = evaluation::evaluate(&preds, &gold, None, &LanguageConfig::english(), &EvalConfig::default())?;
    print!("{report}");
    Ok(())
}
