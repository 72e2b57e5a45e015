use serde::{Deserialize, Serialize};

use super::pool::RetrievedSentence;
use super::sources::TextSource;
use crate::error::{Error, Result};
use crate::query::SearchQuery;
use crate::text::{mean_recall, tokenize, WordVectorTable};

pub const DEFAULT_SENTENCES_PER_QUERY: usize = 4;
pub const DEFAULT_RECALL_THRESHOLD: f64 = 0.6;

/// Indices into [`MatchedPool::sentences`] kept for one query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAssignment {
    pub query: String,
    pub wikipedia: Vec<usize>,
    pub conceptnet: Vec<usize>,
}

impl QueryAssignment {
    pub fn for_source(&self, source: TextSource) -> &[usize] {
        match source {
            TextSource::Wikipedia => &self.wikipedia,
            TextSource::Conceptnet => &self.conceptnet,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchedPool {
    /// Pool sentences matched to at least two queries, in pool order.
    pub sentences: Vec<RetrievedSentence>,
    /// One entry per distinct query text, in first-seen order.
    pub assignments: Vec<QueryAssignment>,
}

impl MatchedPool {
    pub fn assignment(&self, query: &str) -> Option<&QueryAssignment> {
        self.assignments.iter().find(|a| a.query == query)
    }

    pub fn sentences_for(&self, query: &str, source: TextSource) -> Vec<&RetrievedSentence> {
        self.assignment(query)
            .map(|a| {
                a.for_source(source)
                    .iter()
                    .map(|&i| &self.sentences[i])
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Assigns pool sentences back to queries.
///
/// A sentence matches a query when the query's mean recall against it is
/// strictly above `threshold`. Sentences matching fewer than two distinct
/// queries are dropped; each query then keeps its `m` best sentences per
/// source by `match_score`, ties by pool order.
pub fn match_pool_to_queries(
    pool: &[RetrievedSentence],
    queries: &[SearchQuery],
    table: &WordVectorTable,
    m: usize,
    threshold: f64,
) -> Result<MatchedPool> {
    if m == 0 {
        return Err(Error::usage("m must be at least 1"));
    }
    let mut texts: Vec<String> = Vec::new();
    for q in queries {
        if !tokenize(&q.text).is_empty() && !texts.contains(&q.text) {
            texts.push(q.text.clone());
        }
    }
    let query_tokens: Vec<_> = texts.iter().map(|t| tokenize(t)).collect();
    let mut kept = Vec::new();
    for s in pool {
        let toks = tokenize(&s.text);
        if toks.is_empty() {
            continue;
        }
        let mut matched = Vec::new();
        for (text, qt) in texts.iter().zip(&query_tokens) {
            if mean_recall(qt, &toks, table)? > threshold {
                matched.push(text.clone());
            }
        }
        if matched.len() >= 2 {
            let mut s = s.clone();
            s.matched_queries = matched;
            kept.push(s);
        }
    }
    let assignments = texts
        .iter()
        .map(|text| {
            let pick = |source: TextSource| {
                let mut idx: Vec<usize> = (0..kept.len())
                    .filter(|&i| kept[i].source == source && kept[i].matched_queries.contains(text))
                    .collect();
                idx.sort_by(|&a, &b| {
                    kept[b]
                        .match_score
                        .total_cmp(&kept[a].match_score)
                        .then(a.cmp(&b))
                });
                idx.truncate(m);
                idx
            };
            QueryAssignment {
                query: text.clone(),
                wikipedia: pick(TextSource::Wikipedia),
                conceptnet: pick(TextSource::Conceptnet),
            }
        })
        .collect();
    Ok(MatchedPool {
        sentences: kept,
        assignments,
    })
}
