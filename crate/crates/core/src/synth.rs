//! Seeded templated dialogues for desk-scale runs.
//!
//! Each template mentions one or more entities in the context and writes an
//! incomplete utterance that drops (pronoun) or omits (ellipsis) them; the
//! reference puts them back. Every reference therefore holds at least one
//! normalized token that the incomplete utterance lacks and the context has.

use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DialogueSample;
use crate::error::{JetError, Result};

const ARTISTS: &[&str] = &[
    "paramore", "coldplay", "metallica", "radiohead", "nirvana", "madonna", "adele",
    "beyonce", "shakira", "rihanna", "eminem", "drake", "queen", "abba", "blondie",
    "oasis", "muse", "weezer", "korn", "slipknot", "taylor swift", "bruno mars",
    "daft punk", "pink floyd", "green day", "arctic monkeys",
];
const PLACES: &[&str] = &[
    "paris", "berlin", "lisbon", "tokyo", "madrid", "vienna", "prague", "dublin",
    "oslo", "nairobi", "lima", "toronto", "new york", "buenos aires", "cape town",
    "hong kong",
];
const KINDS: &[&str] = &["band", "singer", "duo", "group", "rapper"];
const VERBS: &[&str] = &["tour", "retire", "perform", "split", "record", "debut"];
const NOUNS: &[&str] = &["albums", "singles", "awards", "concerts", "videos"];
const SEASONS: &[&str] = &["spring", "summer", "autumn", "winter"];
const ADJECTIVES: &[&str] = &["big", "old", "expensive", "crowded", "safe"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    /// "when did they tour" → "when did paramore tour"
    Pronoun,
    /// "what about adele" → "how many albums did adele release"
    Ellipsis,
    /// "how big is it" → "how big is lisbon"
    Place,
    /// two entities in context, the later turn singles one out
    Distractor,
    /// "and muse" → "did muse tour"
    Followup,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::Pronoun,
        Template::Ellipsis,
        Template::Place,
        Template::Distractor,
        Template::Followup,
    ];
}

impl FromStr for Template {
    type Err = JetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pronoun" => Ok(Template::Pronoun),
            "ellipsis" => Ok(Template::Ellipsis),
            "place" => Ok(Template::Place),
            "distractor" => Ok(Template::Distractor),
            "followup" => Ok(Template::Followup),
            other => Err(JetError::Config(format!("unknown template `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub size: usize,
    pub seed: u64,
    pub templates: Vec<Template>,
}

impl SynthConfig {
    pub fn new(size: usize, seed: u64) -> Self {
        SynthConfig {
            size,
            seed,
            templates: Template::ALL.to_vec(),
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty inventory")
}

/// Two distinct entries.
fn pick_two<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> (&'a str, &'a str) {
    let a = rng.random_range(0..xs.len());
    let b = (a + rng.random_range(1..xs.len())) % xs.len();
    (xs[a], xs[b])
}

fn render(rng: &mut ChaCha8Rng, template: Template) -> (Vec<String>, String, String) {
    match template {
        Template::Pronoun => {
            let e = pick(rng, ARTISTS);
            let (k, p, v) = (pick(rng, KINDS), pick(rng, PLACES), pick(rng, VERBS));
            (
                vec![format!("tell me about {e}"), format!("{e} is a {k} from {p}")],
                format!("when did they {v}"),
                format!("when did {e} {v}"),
            )
        }
        Template::Ellipsis => {
            let (e1, e2) = pick_two(rng, ARTISTS);
            let n = pick(rng, NOUNS);
            let count = rng.random_range(2..12);
            (
                vec![
                    format!("how many {n} did {e1} release"),
                    format!("{e1} released {count} {n}"),
                ],
                format!("what about {e2}"),
                format!("how many {n} did {e2} release"),
            )
        }
        Template::Place => {
            let p = pick(rng, PLACES);
            let (s, a) = (pick(rng, SEASONS), pick(rng, ADJECTIVES));
            (
                vec![format!("i want to visit {p}"), format!("{p} is lovely in {s}")],
                format!("how {a} is it"),
                format!("how {a} is {p}"),
            )
        }
        Template::Distractor => {
            let (e1, e2) = pick_two(rng, ARTISTS);
            let p = pick(rng, PLACES);
            (
                vec![
                    format!("{e1} and {e2} played in {p}"),
                    format!("i only liked {e2}"),
                ],
                "where are they from".to_string(),
                format!("where is {e2} from"),
            )
        }
        Template::Followup => {
            let (e1, e2) = pick_two(rng, ARTISTS);
            let v = pick(rng, VERBS);
            let year = rng.random_range(1990..2024);
            (
                vec![format!("did {e1} {v}"), format!("yes in {year}")],
                format!("and {e2}"),
                format!("did {e2} {v}"),
            )
        }
    }
}

/// `size` samples with ids `0..size`, drawn uniformly from the enabled
/// templates.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<DialogueSample>> {
    if cfg.size == 0 {
        return Err(JetError::Config("synthetic corpus size must be at least 1".into()));
    }
    if cfg.templates.is_empty() {
        return Err(JetError::Config("no templates enabled".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.size)
        .map(|i| {
            let t = *cfg.templates.choose(&mut rng).expect("non-empty");
            let (context, incomplete, reference) = render(&mut rng, t);
            DialogueSample::new(i.to_string(), context, incomplete, Some(reference))
        })
        .collect()
}
