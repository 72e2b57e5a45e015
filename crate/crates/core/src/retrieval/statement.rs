use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::chunker::{PhraseChunker, RuleChunker};
use crate::text::{tokenize, Token};

/// Declarative form of a question-answer pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub text: String,
    pub question_id: String,
    pub answer: String,
}

/// Turns a question and an answer into a declarative sentence.
pub trait StatementConverter: Send + Sync {
    fn convert(&self, question: &str, answer: &str) -> Result<String>;
}

const COPULAS: &[&str] = &["is", "are", "was", "were"];
const AUXILIARIES: &[&str] = &[
    "do", "does", "did", "can", "could", "will", "would", "should", "may", "might",
];
const FINITE_VERBS: &[&str] = &[
    "is", "are", "was", "were", "has", "have", "had", "does", "do", "did", "can", "will",
];

/// Substitutes the answer for the question's wh-phrase.
///
/// "which movie features X" + "forrest gump" gives "forrest gump features X".
/// A bare wh-word followed by a copula is inverted ("what is this" + "dog"
/// gives "this is dog"); a leading auxiliary is dropped and the answer
/// appended ("what do cows eat" + "grass" gives "cows eat grass"). Answers
/// that already read as sentences pass through.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleConverter;

fn join(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_full_sentence(answer: &str) -> bool {
    let trimmed = answer.trim_end();
    if trimmed.ends_with('.') || trimmed.ends_with('!') {
        return true;
    }
    let toks = tokenize(answer);
    toks.len() >= 3
        && toks
            .iter()
            .any(|t| FINITE_VERBS.contains(&t.surface.as_str()))
}

impl StatementConverter for RuleConverter {
    fn convert(&self, question: &str, answer: &str) -> Result<String> {
        let answer = answer.trim();
        if answer.is_empty() || tokenize(question).is_empty() {
            return Err(Error::usage(
                "statement conversion needs a question and an answer",
            ));
        }
        if is_full_sentence(answer) {
            return Ok(answer.to_string());
        }
        let toks = tokenize(question);
        let Some(target) = RuleChunker.chunk_question(&toks).target else {
            return Ok(format!("{} {answer}", join(&toks)));
        };
        let before = &toks[..target.span.start];
        let after = &toks[target.span.end..];
        if let (Some(first), true) = (after.first(), before.is_empty() && after.len() > 1) {
            let first = first.surface.as_str();
            if COPULAS.contains(&first) && target.head.is_none() {
                return Ok(format!("{} {first} {answer}", join(&after[1..])));
            }
            if AUXILIARIES.contains(&first) {
                return Ok(format!("{} {answer}", join(&after[1..])));
            }
        }
        let parts: Vec<String> = [join(before), answer.to_string(), join(after)]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect();
        Ok(parts.join(" "))
    }
}

pub fn qa_to_statement(
    question_id: &str,
    question: &str,
    answer: &str,
    converter: &dyn StatementConverter,
) -> Result<Statement> {
    let text = converter.convert(question, answer)?;
    debug_assert!(text.contains(answer.trim()));
    Ok(Statement {
        text,
        question_id: question_id.to_string(),
        answer: answer.to_string(),
    })
}
