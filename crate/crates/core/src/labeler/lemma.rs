//! Rule-based noun lemmatizer.
//!
//! Covers regular plural morphology plus a short irregular table. There is no
//! dictionary lookup, so rules are guarded to avoid stripping words that merely
//! end in `s` (`glass`, `status`, `bus`).

const IRREGULAR: &[(&str, &str)] = &[
    ("children", "child"),
    ("people", "person"),
    ("men", "man"),
    ("women", "woman"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("wives", "wife"),
    ("knives", "knife"),
    ("lives", "life"),
    ("leaves", "leaf"),
    ("data", "datum"),
    ("criteria", "criterion"),
];

const KEEP_ENDINGS: &[&str] = &["ss", "us", "is", "ous", "sis"];

pub fn lemmatize_noun(word: &str) -> String {
    if let Some((_, lemma)) = IRREGULAR.iter().find(|(w, _)| *w == word) {
        return (*lemma).to_string();
    }
    let n = word.chars().count();
    if n <= 3 || !word.ends_with('s') || KEEP_ENDINGS.iter().any(|e| word.ends_with(e)) {
        return word.to_string();
    }
    for (suffix, repl) in [
        ("ies", "y"),
        ("sses", "ss"),
        ("ches", "ch"),
        ("shes", "sh"),
        ("xes", "x"),
        ("zes", "z"),
    ] {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.chars().count() >= 2 {
                return format!("{stem}{repl}");
            }
        }
    }
    word[..word.len() - 1].to_string()
}
