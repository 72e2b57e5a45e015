use crate::error::{Error, Result};
use crate::text::tokenize;

pub const ANNOTATIONS_PER_QUESTION: usize = 5;

/// Lowercased words joined by single spaces, punctuation removed.
pub fn normalize_answer(answer: &str) -> String {
    tokenize(answer)
        .into_iter()
        .map(|t| t.surface)
        .collect::<Vec<_>>()
        .join(" ")
}

/// 0 matching annotations give 0, one gives 0.6, two or more give 1.
pub fn soft_score_from_matches(matches: usize) -> f64 {
    match matches {
        0 => 0.0,
        1 => 0.6,
        _ => 1.0,
    }
}

pub fn vqa_soft_score<S: AsRef<str>>(answer: &str, annotations: &[S]) -> Result<f64> {
    if annotations.len() != ANNOTATIONS_PER_QUESTION {
        return Err(Error::data(format!(
            "expected {ANNOTATIONS_PER_QUESTION} annotations, got {}",
            annotations.len()
        )));
    }
    let answer = normalize_answer(answer);
    let matches = annotations
        .iter()
        .filter(|a| normalize_answer(a.as_ref()) == answer)
        .count();
    Ok(soft_score_from_matches(matches))
}
