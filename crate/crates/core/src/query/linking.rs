use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chunker::is_closed_class;
use super::{DetectedObject, NounPhrase};
use crate::error::Result;
use crate::text::{mean_recall, tokenize, WordVectorTable};

/// Scores how likely a phrase refers to each detected object.
pub trait ObjectLinker: Send + Sync {
    /// One score in `[0, 1]` per object, in input order.
    fn score(&self, phrase: &NounPhrase, objects: &[DetectedObject]) -> Result<Vec<f64>>;
}

/// Mean recall of the object label against the phrase's open-class words,
/// clamped to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct LabelOverlapLinker {
    table: Arc<WordVectorTable>,
}

impl LabelOverlapLinker {
    pub fn new(table: Arc<WordVectorTable>) -> Self {
        Self { table }
    }
}

impl ObjectLinker for LabelOverlapLinker {
    fn score(&self, phrase: &NounPhrase, objects: &[DetectedObject]) -> Result<Vec<f64>> {
        let all = phrase.tokens();
        let content: Vec<_> = all
            .iter()
            .filter(|t| !is_closed_class(&t.surface))
            .cloned()
            .collect();
        let phrase_tokens = if content.is_empty() { all } else { content };
        objects
            .iter()
            .map(|o| {
                let label = tokenize(&o.label);
                if label.is_empty() || phrase_tokens.is_empty() {
                    return Ok(0.0);
                }
                Ok(mean_recall(&label, &phrase_tokens, &self.table)?.clamp(0.0, 1.0))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub object_id: u32,
    pub score: f64,
}

/// Objects whose linking score is strictly above `threshold`, best first,
/// ties by ascending object id.
pub fn link_phrase(
    phrase: &NounPhrase,
    objects: &[DetectedObject],
    linker: &dyn ObjectLinker,
    threshold: f64,
) -> Result<Vec<Link>> {
    if objects.is_empty() {
        return Ok(Vec::new());
    }
    let scores = linker.score(phrase, objects)?;
    let mut links: Vec<Link> = objects
        .iter()
        .zip(scores)
        .filter(|(_, s)| *s > threshold)
        .map(|(o, score)| Link {
            object_id: o.object_id,
            score,
        })
        .collect();
    links.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.object_id.cmp(&b.object_id))
    });
    Ok(links)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{extract_noun_phrases, PhraseKind, RuleChunker};
    use crate::text::OovPolicy;

    struct Fixed(Vec<f64>);

    impl ObjectLinker for Fixed {
        fn score(&self, _: &NounPhrase, _: &[DetectedObject]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    fn obj(id: u32, label: &str) -> DetectedObject {
        DetectedObject {
            object_id: id,
            label: label.into(),
            attributes: vec![],
            r#box: [0.0, 0.0, 1.0, 1.0],
            feature: vec![1.0],
        }
    }

    fn phrase(text: &str) -> NounPhrase {
        NounPhrase {
            text: text.into(),
            kind: PhraseKind::Question,
            span: 0..text.split(' ').count(),
            head: text.rsplit(' ').next().unwrap().into(),
            head_is_noun: true,
            index: 1,
        }
    }

    #[test]
    fn threshold_is_exclusive() {
        let objects = vec![obj(1, "a"), obj(2, "b"), obj(3, "c")];
        let links = link_phrase(&phrase("x"), &objects, &Fixed(vec![0.5, 0.2, 0.5]), 0.5).unwrap();
        assert!(links.is_empty());
    }

    #[test]
    fn ties_break_by_object_id() {
        let objects = vec![obj(9, "a"), obj(4, "b"), obj(7, "c")];
        let links = link_phrase(&phrase("x"), &objects, &Fixed(vec![0.8, 0.8, 0.95]), 0.5).unwrap();
        let ids: Vec<u32> = links.iter().map(|l| l.object_id).collect();
        assert_eq!(ids, [7, 4, 9]);
        assert!(links.iter().all(|l| l.score > 0.5));
    }

    #[test]
    fn label_overlap_linker_picks_the_named_object() {
        let mut table = WordVectorTable::new(3, OovPolicy::ZeroVector).unwrap();
        table.insert("man", vec![1.0, 0.0, 0.0]).unwrap();
        table.insert("sitting", vec![0.0, 1.0, 0.0]).unwrap();
        table.insert("racket", vec![0.0, 0.0, 1.0]).unwrap();
        let linker = LabelOverlapLinker::new(Arc::new(table));
        let p = extract_noun_phrases("who is the sitting man", &[], &RuleChunker)
            .unwrap()
            .question_phrases[0]
            .clone();
        assert_eq!(p.text, "the sitting man");
        let objects = vec![obj(1, "man"), obj(2, "racket")];
        // label "man" recalls itself (1.0); "racket" is orthogonal to both words (0.0)
        assert_eq!(linker.score(&p, &objects).unwrap(), vec![1.0, 0.0]);
        let links = link_phrase(&p, &objects, &linker, 0.5).unwrap();
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].object_id, 1);
    }
}
