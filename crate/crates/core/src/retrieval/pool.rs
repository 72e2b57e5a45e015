use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::sources::{KnowledgeClient, TextSource};
use super::statement::Statement;
use crate::error::{Error, Result};
use crate::query::SearchQuery;
use crate::text::{greedy_match_score, tokenize, TokenEncoder};

/// A sentence in the knowledge pool of one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSentence {
    pub text: String,
    pub source: TextSource,
    /// First query whose results contained this sentence.
    pub origin_query: SearchQuery,
    pub article_id: String,
    pub article_title: String,
    /// Neighbouring sentences from the same article.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub context: String,
    /// Best greedy-match f1 against any statement, clamped to `[0, 1]`.
    pub match_score: f64,
    /// Distinct query texts matched to this sentence; empty until matching.
    #[serde(default)]
    pub matched_queries: Vec<String>,
}

/// How many sentences one statement selected from one article.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSelection {
    pub query: String,
    pub source: TextSource,
    pub article_id: String,
    pub statement: usize,
    pub selected: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TextualPool {
    pub sentences: Vec<RetrievedSentence>,
    pub selections: Vec<PoolSelection>,
}

pub const DEFAULT_SENTENCES_PER_ARTICLE: usize = 15;

fn normalized(text: &str) -> String {
    tokenize(text)
        .into_iter()
        .map(|t| t.surface)
        .collect::<Vec<_>>()
        .join(" ")
}

fn context_window(sentences: &[String], i: usize) -> String {
    let lo = i.saturating_sub(1);
    let hi = (i + 2).min(sentences.len());
    sentences[lo..hi].join(" ")
}

/// Fetches every distinct query from every client and keeps, for each
/// statement and article, the `per_article` sentences with the highest
/// greedy-match f1 (ties by article order). Duplicate sentences within a
/// source are stored once with their best score. Client errors are logged
/// and the query is skipped.
pub fn build_textual_pool(
    queries: &[SearchQuery],
    statements: &[Statement],
    clients: &[&dyn KnowledgeClient],
    encoder: &dyn TokenEncoder,
    per_article: usize,
) -> Result<TextualPool> {
    if queries.is_empty() || statements.is_empty() {
        return Err(Error::usage(
            "pool construction needs queries and statements",
        ));
    }
    if per_article == 0 {
        return Err(Error::usage("sentences per article must be at least 1"));
    }
    let statement_tokens: Vec<_> = statements.iter().map(|s| tokenize(&s.text)).collect();
    if statement_tokens.iter().any(Vec::is_empty) {
        return Err(Error::usage("statements must contain at least one token"));
    }
    let mut pool = TextualPool::default();
    let mut index: HashMap<(TextSource, String), usize> = HashMap::new();
    let mut seen_queries = Vec::new();
    for query in queries {
        if seen_queries.contains(&query.text) {
            continue;
        }
        seen_queries.push(query.text.clone());
        for client in clients {
            let articles = match client.fetch(&query.text) {
                Ok(a) => a,
                Err(e) => {
                    log::warn!("{} fetch failed for {:?}: {e}", client.source(), query.text);
                    continue;
                }
            };
            for article in articles {
                let toks: Vec<_> = article.sentences.iter().map(|s| tokenize(s)).collect();
                let usable: Vec<usize> = (0..toks.len()).filter(|&i| !toks[i].is_empty()).collect();
                let mut scores = vec![vec![0.0; statements.len()]; toks.len()];
                for &i in &usable {
                    for (j, st) in statement_tokens.iter().enumerate() {
                        scores[i][j] = greedy_match_score(&toks[i], st, encoder)?
                            .f1
                            .clamp(0.0, 1.0);
                    }
                }
                let mut chosen = vec![false; toks.len()];
                for j in 0..statements.len() {
                    let mut order = usable.clone();
                    order.sort_by(|&a, &b| scores[b][j].total_cmp(&scores[a][j]).then(a.cmp(&b)));
                    order.truncate(per_article);
                    pool.selections.push(PoolSelection {
                        query: query.text.clone(),
                        source: client.source(),
                        article_id: article.id.clone(),
                        statement: j,
                        selected: order.len(),
                    });
                    for i in order {
                        chosen[i] = true;
                    }
                }
                for i in (0..toks.len()).filter(|&i| chosen[i]) {
                    let score = scores[i].iter().copied().fold(0.0, f64::max);
                    let key = (client.source(), normalized(&article.sentences[i]));
                    match index.get(&key) {
                        Some(&at) => {
                            let existing = &mut pool.sentences[at];
                            existing.match_score = existing.match_score.max(score);
                        }
                        None => {
                            index.insert(key, pool.sentences.len());
                            pool.sentences.push(RetrievedSentence {
                                text: article.sentences[i].clone(),
                                source: client.source(),
                                origin_query: query.clone(),
                                article_id: article.id.clone(),
                                article_title: article.title.clone(),
                                context: context_window(&article.sentences, i),
                                match_score: score,
                                matched_queries: Vec::new(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(pool)
}

/// Rewrites a sentence so it reads on its own.
pub trait Decontextualizer: Send + Sync {
    fn rewrite(&self, sentence: &str, context: &str, title: &str) -> String;
}

/// Leaves sentences unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassThrough;

impl Decontextualizer for PassThrough {
    fn rewrite(&self, sentence: &str, _context: &str, _title: &str) -> String {
        sentence.to_string()
    }
}

/// Replaces a sentence-initial pronoun with the article title
/// ("He starred in it." -> "Tom Hanks starred in it.").
#[derive(Clone, Copy, Debug, Default)]
pub struct PronounToTitle;

impl Decontextualizer for PronounToTitle {
    fn rewrite(&self, sentence: &str, _context: &str, title: &str) -> String {
        let trimmed = sentence.trim_start();
        let word_end = trimmed
            .find(|c: char| !c.is_alphabetic())
            .unwrap_or(trimmed.len());
        let (first, rest) = trimmed.split_at(word_end);
        let replacement = match first.to_lowercase().as_str() {
            "he" | "she" | "it" | "they" => title.to_string(),
            "his" | "her" | "its" | "their" => format!("{title}'s"),
            _ => return sentence.to_string(),
        };
        format!("{replacement}{rest}")
    }
}

/// Applies `d` to a Wikipedia sentence using its stored context.
pub fn decontextualize(
    sentence: &RetrievedSentence,
    d: &dyn Decontextualizer,
) -> Result<RetrievedSentence> {
    if sentence.source != TextSource::Wikipedia {
        return Err(Error::usage(
            "only Wikipedia sentences are decontextualized",
        ));
    }
    let mut out = sentence.clone();
    out.text = d.rewrite(&sentence.text, &sentence.context, &sentence.article_title);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::PhraseKind;
    use crate::retrieval::sources::Article;
    use crate::text::HashEncoder;

    fn query(text: &str) -> SearchQuery {
        SearchQuery {
            text: text.into(),
            phrase_kind: PhraseKind::Question,
            phrase_index: 1,
            rank: 1,
        }
    }

    fn statement(text: &str) -> Statement {
        Statement {
            text: text.into(),
            question_id: "q".into(),
            answer: "x".into(),
        }
    }

    struct OneArticle(Vec<String>, TextSource);

    impl KnowledgeClient for OneArticle {
        fn source(&self) -> TextSource {
            self.1
        }

        fn fetch(&self, _: &str) -> Result<Vec<Article>> {
            Ok(vec![Article {
                id: "a1".into(),
                title: "Title".into(),
                sentences: self.0.clone(),
            }])
        }
    }

    struct Failing;

    impl KnowledgeClient for Failing {
        fn source(&self) -> TextSource {
            TextSource::Conceptnet
        }

        fn fetch(&self, q: &str) -> Result<Vec<Article>> {
            Err(Error::Client {
                source_name: "conceptnet".into(),
                query: q.into(),
                message: "down".into(),
            })
        }
    }

    #[test]
    fn small_article_enters_whole_and_failures_are_skipped() {
        let wiki = OneArticle(
            vec![
                "a dog barks.".into(),
                "cats sleep.".into(),
                "birds fly.".into(),
            ],
            TextSource::Wikipedia,
        );
        let enc = HashEncoder::new(16, 1);
        let pool = build_textual_pool(
            &[query("dog"), query("dog")],
            &[statement("the dog barks")],
            &[&wiki, &Failing],
            &enc,
            15,
        )
        .unwrap();
        assert_eq!(pool.sentences.len(), 3);
        assert_eq!(pool.selections.len(), 1);
        assert!(pool
            .sentences
            .iter()
            .all(|s| (0.0..=1.0).contains(&s.match_score)));
        assert_eq!(pool.sentences[0].context, "a dog barks. cats sleep.");
    }

    #[test]
    fn preconditions() {
        let enc = HashEncoder::new(4, 1);
        assert!(build_textual_pool(&[], &[statement("s")], &[], &enc, 15).is_err());
        assert!(build_textual_pool(&[query("q")], &[], &[], &enc, 15).is_err());
        assert!(build_textual_pool(&[query("q")], &[statement("s")], &[], &enc, 0).is_err());
    }

    fn sentence(text: &str, source: TextSource) -> RetrievedSentence {
        RetrievedSentence {
            text: text.into(),
            source,
            origin_query: query("q"),
            article_id: "1".into(),
            article_title: "Tom Hanks".into(),
            context: String::new(),
            match_score: 0.5,
            matched_queries: vec![],
        }
    }

    #[test]
    fn decontextualization() {
        let s = sentence("He starred in the film.", TextSource::Wikipedia);
        assert_eq!(decontextualize(&s, &PassThrough).unwrap(), s);
        assert_eq!(
            decontextualize(&s, &PronounToTitle).unwrap().text,
            "Tom Hanks starred in the film."
        );
        let p = sentence("His role won praise.", TextSource::Wikipedia);
        assert_eq!(
            decontextualize(&p, &PronounToTitle).unwrap().text,
            "Tom Hanks's role won praise."
        );
        let other = sentence("Hello there.", TextSource::Wikipedia);
        assert_eq!(
            decontextualize(&other, &PronounToTitle).unwrap().text,
            "Hello there."
        );
        let c = sentence("dog is a animal", TextSource::Conceptnet);
        assert!(decontextualize(&c, &PassThrough).is_err());
    }
}
