use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::dataset::QAInstance;
use super::records::SourceDecisionRecord;
use crate::candidates::best_achievable;
use crate::error::Result;
use crate::validation::{vqa_soft_score, DecisionRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question_id: String,
    /// `None` when no decision was recorded.
    pub final_answer: Option<String>,
    pub soft_score: f64,
    pub source_scores: BTreeMap<String, f64>,
    /// Best of the fused and single-source decisions.
    pub oracle_score: f64,
    pub base_score: f64,
    pub candidate_upper_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub questions: usize,
    /// Questions without a decision record; each scored 0.
    pub missing: Vec<String>,
    /// The run's aggregate: `oracle_score` with the oracle selector, else `fused_score`.
    pub mean_soft_score: f64,
    pub oracle_selector: bool,
    pub fused_score: f64,
    pub per_source: BTreeMap<String, f64>,
    pub oracle_score: f64,
    /// Top-1 base-scorer candidate.
    pub base_score: f64,
    /// Best achievable with the candidate set.
    pub candidate_upper_bound: f64,
    pub per_question: Vec<QuestionScore>,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Mean soft score of the final answers over `questions`. Questions without
/// a record count as 0 and are listed in `missing`.
pub fn evaluate(
    records: &[DecisionRecord],
    source_records: &[SourceDecisionRecord],
    questions: &[QAInstance],
    oracle_selector: bool,
) -> Result<Evaluation> {
    let by_id: HashMap<&str, &DecisionRecord> = records
        .iter()
        .map(|r| (r.question_id.as_str(), r))
        .collect();
    let sources_by_id: HashMap<&str, &SourceDecisionRecord> = source_records
        .iter()
        .map(|r| (r.question_id.as_str(), r))
        .collect();
    let source_names: Vec<String> = {
        let mut names: Vec<String> = source_records
            .iter()
            .flat_map(|r| r.sources.iter().map(|s| s.source.as_str().to_string()))
            .collect();
        names.sort();
        names.dedup();
        names
    };

    let mut missing = Vec::new();
    let mut per_question = Vec::with_capacity(questions.len());
    for q in questions {
        let record = by_id.get(q.question_id.as_str());
        let soft_score = match record {
            Some(r) => vqa_soft_score(&r.final_answer, &q.annotations)?,
            None => {
                log::warn!("no decision for question {}; scoring it 0", q.question_id);
                missing.push(q.question_id.clone());
                0.0
            }
        };
        let mut source_scores: BTreeMap<String, f64> =
            source_names.iter().map(|n| (n.clone(), 0.0)).collect();
        if let Some(sr) = sources_by_id.get(q.question_id.as_str()) {
            for s in &sr.sources {
                source_scores.insert(
                    s.source.as_str().to_string(),
                    vqa_soft_score(&s.final_answer, &q.annotations)?,
                );
            }
        }
        let oracle_score = source_scores.values().copied().fold(soft_score, f64::max);
        let base_score = match q.candidate_scores.first() {
            Some(c) => vqa_soft_score(&c.answer, &q.annotations)?,
            None => 0.0,
        };
        per_question.push(QuestionScore {
            question_id: q.question_id.clone(),
            final_answer: record.map(|r| r.final_answer.clone()),
            soft_score,
            source_scores,
            oracle_score,
            base_score,
            candidate_upper_bound: best_achievable(&q.candidate_scores, &q.annotations)?,
        });
    }

    let n = per_question.len();
    let fused_score = mean(per_question.iter().map(|p| p.soft_score), n);
    let oracle_score = mean(per_question.iter().map(|p| p.oracle_score), n);
    let per_source = source_names
        .iter()
        .map(|name| {
            (
                name.clone(),
                mean(per_question.iter().map(|p| p.source_scores[name]), n),
            )
        })
        .collect();
    Ok(Evaluation {
        questions: n,
        missing,
        mean_soft_score: if oracle_selector {
            oracle_score
        } else {
            fused_score
        },
        oracle_selector,
        fused_score,
        per_source,
        oracle_score,
        base_score: mean(per_question.iter().map(|p| p.base_score), n),
        candidate_upper_bound: mean(per_question.iter().map(|p| p.candidate_upper_bound), n),
        per_question,
    })
}
