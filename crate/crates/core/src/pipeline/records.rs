use serde::{Deserialize, Serialize};

use crate::embedding::KnowledgeSource;
use crate::query::{ExtractedPhrases, Link, PhraseKind, SearchQuery};
use crate::retrieval::{MatchedPool, PhraseVisual, Statement, TextualPool};
use crate::validation::DecisionRule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseLinks {
    pub phrase_kind: PhraseKind,
    pub phrase_index: usize,
    pub links: Vec<Link>,
}

/// Output of the extraction stage for one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub question_id: String,
    pub phrases: ExtractedPhrases,
    /// Approved links for every phrase, in phrase order.
    pub links: Vec<PhraseLinks>,
    /// Queries of every phrase, grouped by phrase and ordered by rank.
    pub queries: Vec<SearchQuery>,
    /// One statement per candidate, in candidate order.
    pub statements: Vec<Statement>,
}

impl QueryPlan {
    pub fn links_for(&self, kind: PhraseKind, index: usize) -> &[Link] {
        self.links
            .iter()
            .find(|l| l.phrase_kind == kind && l.phrase_index == index)
            .map(|l| l.links.as_slice())
            .unwrap_or(&[])
    }

    pub fn queries_for(&self, kind: PhraseKind, index: usize) -> Vec<&SearchQuery> {
        let mut out: Vec<&SearchQuery> = self
            .queries
            .iter()
            .filter(|q| q.phrase_kind == kind && q.phrase_index == index)
            .collect();
        out.sort_by_key(|q| q.rank);
        out
    }
}

/// Output of the retrieval stage for one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePool {
    pub question_id: String,
    /// Sentences before query matching, with per-article selection counts.
    pub pool: TextualPool,
    pub matched: MatchedPool,
    pub visual: Vec<PhraseVisual>,
}

impl KnowledgePool {
    pub fn visual_for(&self, kind: PhraseKind, index: usize) -> Option<&PhraseVisual> {
        self.visual
            .iter()
            .find(|v| v.phrase_kind == kind && v.phrase_index == index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceDecision {
    pub source: KnowledgeSource,
    pub rule_used: DecisionRule,
    pub final_answer: String,
}

/// Decisions taken from each source's own `P^k` and `J^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceDecisionRecord {
    pub question_id: String,
    pub sources: Vec<SourceDecision>,
}

/// A question dropped by a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub question_id: String,
    pub stage: String,
    pub error: String,
}
