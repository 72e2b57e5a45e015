//! Query extraction: noun phrases from the question and answers, phrase to
//! object linking, and visually grounded search-query generation.

pub mod chunker;
mod linking;

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use chunker::{Chunk, PhraseChunker, RuleChunker};
pub use linking::{link_phrase, LabelOverlapLinker, Link, ObjectLinker};

use crate::error::{Error, Result};
use crate::text::{tokenize, Token};

/// Default maximum number of queries per noun phrase.
pub const DEFAULT_MAX_QUERIES: usize = 3;
/// Linking scores must exceed this to be approved.
pub const DEFAULT_LINK_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseKind {
    Target,
    Question,
    Answer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    pub text: String,
    pub kind: PhraseKind,
    /// Token range in the question (or answer) text.
    pub span: Range<usize>,
    pub head: String,
    /// False when the phrase has no nominal word (e.g. "how many").
    pub head_is_noun: bool,
    /// 0 for the target; 1..=N for question phrases; the candidate index for
    /// answer phrases.
    pub index: usize,
}

impl NounPhrase {
    pub fn tokens(&self) -> Vec<Token> {
        tokenize(&self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedPhrases {
    pub target: NounPhrase,
    /// The question had no wh/how word and the target spans the whole question.
    pub degenerate: bool,
    pub question_phrases: Vec<NounPhrase>,
    pub answer_phrases: Vec<NounPhrase>,
}

impl ExtractedPhrases {
    /// Target first, then question phrases, then answer phrases.
    pub fn all(&self) -> impl Iterator<Item = &NounPhrase> {
        std::iter::once(&self.target)
            .chain(&self.question_phrases)
            .chain(&self.answer_phrases)
    }

    /// Target followed by question phrases.
    pub fn question_side(&self) -> impl Iterator<Item = &NounPhrase> {
        std::iter::once(&self.target).chain(&self.question_phrases)
    }
}

fn join(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn phrase_from_chunk(
    tokens: &[Token],
    chunk: &Chunk,
    kind: PhraseKind,
    index: usize,
) -> NounPhrase {
    let (head, head_is_noun) = match chunk.head {
        Some(h) => (tokens[h].surface.clone(), true),
        None => (
            tokens[chunk.span.end.saturating_sub(1).max(chunk.span.start)]
                .surface
                .clone(),
            false,
        ),
    };
    NounPhrase {
        text: join(&tokens[chunk.span.clone()]),
        kind,
        span: chunk.span.clone(),
        head,
        head_is_noun,
        index,
    }
}

pub fn extract_noun_phrases(
    question: &str,
    answers: &[String],
    chunker: &dyn PhraseChunker,
) -> Result<ExtractedPhrases> {
    let q_tokens = tokenize(question);
    if q_tokens.is_empty() {
        return Err(Error::usage("question has no tokens"));
    }
    let chunks = chunker.chunk_question(&q_tokens);

    let (target, degenerate) = match &chunks.target {
        Some(t) => (
            phrase_from_chunk(&q_tokens, t, PhraseKind::Target, 0),
            false,
        ),
        None => {
            let head = q_tokens
                .iter()
                .rposition(|t| !chunker::is_closed_class(&t.surface));
            let whole = Chunk {
                span: 0..q_tokens.len(),
                head,
            };
            (
                phrase_from_chunk(&q_tokens, &whole, PhraseKind::Target, 0),
                true,
            )
        }
    };

    let question_phrases = chunks
        .phrases
        .iter()
        .enumerate()
        .map(|(i, c)| phrase_from_chunk(&q_tokens, c, PhraseKind::Question, i + 1))
        .collect();

    let answer_phrases = answers
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let toks = tokenize(a);
            if toks.is_empty() {
                return Err(Error::usage(format!("answer {i} has no tokens")));
            }
            let chunk = chunker.chunk_answer(&toks);
            Ok(phrase_from_chunk(&toks, &chunk, PhraseKind::Answer, i))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExtractedPhrases {
        target,
        degenerate,
        question_phrases,
        answer_phrases,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub object_id: u32,
    pub label: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    /// Normalized corners `[x0, y0, x1, y1]`.
    pub r#box: [f64; 4],
    pub feature: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectsFile {
    pub image_id: String,
    pub objects: Vec<DetectedObject>,
}

impl ObjectsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ObjectsFile = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.objects.first().map(|o| o.feature.len());
        for o in &self.objects {
            if Some(o.feature.len()) != dim {
                return Err(Error::data(format!(
                    "image {}: object {} feature dimension {} differs from {}",
                    self.image_id,
                    o.object_id,
                    o.feature.len(),
                    dim.unwrap_or(0)
                )));
            }
            if o.r#box.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::data(format!(
                    "image {}: object {} box outside [0, 1]",
                    self.image_id, o.object_id
                )));
            }
            if o.feature.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "image {}: object {} has non-finite features",
                    self.image_id, o.object_id
                )));
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.objects.first().map(|o| o.feature.len())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SearchQuery {
    pub text: String,
    pub phrase_kind: PhraseKind,
    pub phrase_index: usize,
    /// 1-based rank within the phrase's query list.
    pub rank: usize,
}

/// Head word first, then "attribute head" for each distinct attribute of the
/// linked objects (in link order), deduplicated and truncated to `k_max`.
pub fn generate_queries(
    phrase: &NounPhrase,
    linked: &[Link],
    objects: &[DetectedObject],
    k_max: usize,
) -> Result<Vec<SearchQuery>> {
    if k_max == 0 {
        return Err(Error::usage("k_max must be at least 1"));
    }
    if !phrase.head_is_noun {
        return Ok(Vec::new());
    }
    let mut texts = vec![phrase.head.clone()];
    for link in linked {
        let Some(obj) = objects.iter().find(|o| o.object_id == link.object_id) else {
            continue;
        };
        for attr in &obj.attributes {
            let attr_words = tokenize(attr);
            if attr_words.is_empty() {
                continue;
            }
            let text = format!("{} {}", join(&attr_words), phrase.head);
            if !texts.contains(&text) {
                texts.push(text);
            }
        }
    }
    texts.truncate(k_max);
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| SearchQuery {
            text,
            phrase_kind: phrase.kind,
            phrase_index: phrase.index,
            rank: i + 1,
        })
        .collect())
}
