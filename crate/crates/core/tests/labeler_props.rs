use jet::corpus::{DialogueSample, LanguageConfig};
use jet::labeler::{
    hard_labels, is_well_formed_bio, label_sample, soft_labels, to_bio, BioTag, EmbeddingTable, LabelMode,
};
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "paramore", "albums", "album", "tour", "toured", "the", "they", "it", "lisbon", "city", "songs", "song",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..8).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn soft_dominates_hard_and_tags_are_bio(
        context in prop::collection::vec(sentence(), 1..4),
        incomplete in sentence(),
        reference in sentence(),
    ) {
        let lang = LanguageConfig::english();
        let emb = EmbeddingTable::hashed(16, 3).unwrap();
        let sample = DialogueSample::new("p", context, incomplete, Some(reference)).unwrap();
        let soft = label_sample(&sample, LabelMode::Soft, &emb, &lang).unwrap();
        let hard = label_sample(&sample, LabelMode::Hard, &emb, &lang).unwrap();
        let scores = match soft.labels.unwrap() {
            jet::labeler::PickerLabels::Soft { scores } => scores,
            _ => unreachable!(),
        };
        let tags = hard.labels.unwrap().tags().unwrap().to_vec();
        prop_assert_eq!(scores.iter().map(Vec::len).collect::<Vec<_>>(), tags.iter().map(Vec::len).collect::<Vec<_>>());
        for (s, t) in scores.iter().zip(&tags) {
            prop_assert!(is_well_formed_bio(t));
            for (x, tag) in s.iter().zip(t) {
                prop_assert!((0.0..=1.0).contains(x));
                let h = if *tag == BioTag::O { 0.0 } else { 1.0 };
                prop_assert!(*x >= h);
            }
        }
    }

    #[test]
    fn label_formulas(rows in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 0..5), 0..6)) {
        let soft = soft_labels(&rows);
        let hard = hard_labels(&rows);
        for ((row, s), h) in rows.iter().zip(&soft).zip(&hard) {
            let max = row.iter().copied().fold(0.0, f64::max);
            prop_assert_eq!(*s, max.clamp(0.0, 1.0));
            prop_assert_eq!(*h, row.contains(&1.0));
        }
        prop_assert!(is_well_formed_bio(&to_bio(&hard)));
    }
}
