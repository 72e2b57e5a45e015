//! Answer vocabulary, base scorers and top-k candidate selection.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::validation::metric::{normalize_answer, vqa_soft_score};

pub const DEFAULT_CANDIDATES: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerVocabulary {
    answers: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnswerVocabulary {
    pub fn new(answers: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(answers.len());
        for (i, a) in answers.iter().enumerate() {
            if a.trim().is_empty() {
                return Err(Error::data(format!("vocabulary entry {i} is empty")));
            }
            if index.insert(a.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate vocabulary entry {a:?}")));
            }
        }
        Ok(Self { answers, index })
    }

    /// One answer per non-empty line.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut answers = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if !line.is_empty() {
                answers.push(line.to_string());
            }
        }
        Self::new(answers)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.answers.get(i).map(String::as_str)
    }

    pub fn position(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }

    /// Soft score of every vocabulary entry against `annotations`.
    pub fn soft_targets<S: AsRef<str>>(&self, annotations: &[S]) -> Result<Vec<f64>> {
        self.answers
            .iter()
            .map(|a| vqa_soft_score(a, annotations))
            .collect()
    }
}

/// Scores every vocabulary answer for a question.
pub trait BaseScorer: Send + Sync {
    fn score(&self, question_id: &str, vocab: &AnswerVocabulary) -> Result<Vec<f64>>;
}

#[derive(Debug, Deserialize)]
struct ScoreRecord {
    #[serde(deserialize_with = "crate::ids::string_or_number")]
    question_id: String,
    scores: BTreeMap<String, f64>,
}

/// Precomputed scores read from JSONL records `{question_id, scores: {answer: score}}`.
/// Answers absent from a record score 0.
#[derive(Clone, Debug, Default)]
pub struct FixtureScorer {
    records: HashMap<String, BTreeMap<String, f64>>,
}

impl FixtureScorer {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.insert(rec.question_id, rec.scores);
        }
        Ok(Self { records })
    }

    pub fn insert(&mut self, question_id: impl Into<String>, scores: BTreeMap<String, f64>) {
        self.records.insert(question_id.into(), scores);
    }

    pub fn contains(&self, question_id: &str) -> bool {
        self.records.contains_key(question_id)
    }
}

impl BaseScorer for FixtureScorer {
    fn score(&self, question_id: &str, vocab: &AnswerVocabulary) -> Result<Vec<f64>> {
        let rec = self
            .records
            .get(question_id)
            .ok_or_else(|| Error::data(format!("no base scores for question {question_id}")))?;
        let mut out = vec![0.0; vocab.len()];
        for (answer, &s) in rec {
            let i = vocab.position(answer).ok_or_else(|| {
                Error::data(format!("scored answer {answer:?} is not in the vocabulary"))
            })?;
            if !s.is_finite() {
                return Err(Error::data(format!("non-finite score for {answer:?}")));
            }
            out[i] = s;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub answer: String,
    pub index: usize,
    pub score: f64,
}

/// The `k` best answers, highest first, ties by vocabulary position.
pub fn top_k_candidates(
    scores: &[f64],
    vocab: &AnswerVocabulary,
    k: usize,
) -> Result<Vec<Candidate>> {
    if scores.len() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            actual: scores.len(),
        });
    }
    if k == 0 || k > vocab.len() {
        return Err(Error::usage(format!(
            "k must be in 1..={}, got {k}",
            vocab.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| Candidate {
            answer: vocab.answers[i].clone(),
            index: i,
            score: scores[i],
        })
        .collect())
}

/// Best soft score any candidate could earn.
pub fn best_achievable<S: AsRef<str>>(candidates: &[Candidate], annotations: &[S]) -> Result<f64> {
    let mut best = 0.0f64;
    for c in candidates {
        best = best.max(vqa_soft_score(&c.answer, annotations)?);
    }
    Ok(best)
}

/// True if two answers are equal after normalization.
pub fn same_answer(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}
