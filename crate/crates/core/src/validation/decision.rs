use serde::{Deserialize, Serialize};

use crate::candidates::AnswerVocabulary;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    VqaOnly,
    VqaWeightedValidation,
}

/// Where the fallback argmax of `P` looks when the criteria fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackScope {
    #[default]
    Vocabulary,
    Candidates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub question_id: String,
    pub candidates: Vec<String>,
    /// Fused prediction over the whole vocabulary.
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    /// Fused validation matrix over the candidates.
    #[serde(rename = "J")]
    pub j: Vec<Vec<f64>>,
    pub consistent: Vec<bool>,
    pub rule_used: DecisionRule,
    pub final_answer: String,
}

/// First index of the maximum.
fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Whether each candidate's diagonal entry strictly exceeds every other
/// entry in its row and its column.
pub fn consistent_candidates(j: &[Vec<f64>]) -> Vec<bool> {
    let n = j.len();
    (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| b != a)
                .all(|b| j[a][a] > j[b][a] && j[a][a] > j[a][b])
        })
        .collect()
}

/// Applies the consistency criteria and picks the final answer.
///
/// `candidates` are vocabulary indices in candidate order.
pub fn consistency_decision(
    question_id: &str,
    p: &[f64],
    j: &[Vec<f64>],
    candidates: &[usize],
    vocab: &AnswerVocabulary,
    fallback: FallbackScope,
) -> Result<DecisionRecord> {
    check_dim(vocab.len(), p.len())?;
    check_dim(candidates.len(), j.len())?;
    for row in j {
        check_dim(candidates.len(), row.len())?;
    }
    if candidates.is_empty() {
        return Err(Error::usage("decision needs at least one candidate"));
    }
    if let Some(&bad) = candidates.iter().find(|&&c| c >= vocab.len()) {
        return Err(Error::usage(format!(
            "candidate index {bad} outside the vocabulary"
        )));
    }
    let consistent = consistent_candidates(j);
    let top = argmax(p.iter().copied()).expect("non-empty vocabulary");
    let criteria_hold = candidates.contains(&top) && consistent.iter().any(|&c| c);
    let (rule_used, final_index) = if criteria_hold {
        let best = argmax((0..candidates.len()).map(|a| {
            if consistent[a] {
                j[a][a] * p[candidates[a]]
            } else {
                f64::NEG_INFINITY
            }
        }))
        .expect("non-empty candidates");
        (DecisionRule::VqaWeightedValidation, candidates[best])
    } else {
        let idx = match fallback {
            FallbackScope::Vocabulary => top,
            FallbackScope::Candidates => {
                candidates[argmax(candidates.iter().map(|&c| p[c])).expect("non-empty candidates")]
            }
        };
        (DecisionRule::VqaOnly, idx)
    };
    Ok(DecisionRecord {
        question_id: question_id.to_string(),
        candidates: candidates
            .iter()
            .map(|&c| vocab.get(c).expect("checked above").to_string())
            .collect(),
        p: p.to_vec(),
        j: j.to_vec(),
        consistent,
        rule_used,
        final_answer: vocab
            .get(final_index)
            .expect("index from vocabulary")
            .to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> AnswerVocabulary {
        AnswerVocabulary::new(["a", "b", "c", "d"].map(String::from).to_vec()).unwrap()
    }

    #[test]
    fn fully_consistent_matrix_uses_weighted_rule() {
        let j = vec![
            vec![0.9, 0.1, 0.1],
            vec![0.1, 0.9, 0.1],
            vec![0.1, 0.1, 0.9],
        ];
        let p = [0.5, 0.6, 0.55, 0.1];
        let r = consistency_decision("q", &p, &j, &[0, 1, 2], &vocab(), FallbackScope::Vocabulary)
            .unwrap();
        assert_eq!(r.rule_used, DecisionRule::VqaWeightedValidation);
        assert_eq!(r.final_answer, "b");
        assert_eq!(r.consistent, vec![true; 3]);
    }

    #[test]
    fn top_prediction_outside_candidates_falls_back() {
        let j = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let p = [0.5, 0.6, 0.1, 0.95];
        let r = consistency_decision("q", &p, &j, &[0, 1], &vocab(), FallbackScope::Vocabulary)
            .unwrap();
        assert_eq!(r.rule_used, DecisionRule::VqaOnly);
        assert_eq!(r.final_answer, "d");
        let r = consistency_decision("q", &p, &j, &[0, 1], &vocab(), FallbackScope::Candidates)
            .unwrap();
        assert_eq!(r.final_answer, "b");
    }

    #[test]
    fn no_consistent_candidate_falls_back() {
        let j = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let p = [0.7, 0.6, 0.1, 0.2];
        let r = consistency_decision("q", &p, &j, &[1, 0], &vocab(), FallbackScope::Vocabulary)
            .unwrap();
        assert_eq!(r.consistent, vec![false, false]);
        assert_eq!(
            (r.rule_used, r.final_answer.as_str()),
            (DecisionRule::VqaOnly, "a")
        );
    }

    #[test]
    fn single_candidate_is_chosen() {
        let p = [0.1, 0.2, 0.9, 0.3];
        let r = consistency_decision(
            "q",
            &p,
            &[vec![0.01]],
            &[2],
            &vocab(),
            FallbackScope::Vocabulary,
        )
        .unwrap();
        assert_eq!(r.final_answer, "c");
        assert_eq!(r.rule_used, DecisionRule::VqaWeightedValidation);
    }

    #[test]
    fn record_field_names() {
        let p = [0.1, 0.2, 0.9, 0.3];
        let r = consistency_decision(
            "q",
            &p,
            &[vec![0.5]],
            &[2],
            &vocab(),
            FallbackScope::Vocabulary,
        )
        .unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "J",
                "P",
                "candidates",
                "consistent",
                "final_answer",
                "question_id",
                "rule_used"
            ]
        );
        assert_eq!(v["rule_used"], "vqa_weighted_validation");
    }
}
