use serde::{Deserialize, Serialize};

use super::sources::ImageClient;
use super::statement::Statement;
use crate::query::{DetectedObject, Link, NounPhrase, PhraseKind};

pub const DEFAULT_INTERNAL_OBJECTS: usize = 3;
pub const DEFAULT_EXTERNAL_IMAGES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualKind {
    InternalObject,
    ExternalImage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualKnowledgeItem {
    pub kind: VisualKind,
    pub feature: Vec<f64>,
    /// Object id for internal items, image URL or path for external ones.
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseVisual {
    pub phrase_kind: PhraseKind,
    pub phrase_index: usize,
    pub items: Vec<VisualKnowledgeItem>,
}

/// Question-side phrases keep their best `max_objects` linked objects;
/// answer phrases get the first `max_images` image results for their
/// statement, each summarized by its mean object feature.
pub fn retrieve_visual(
    question_phrases: &[(&NounPhrase, &[Link])],
    objects: &[DetectedObject],
    answer_phrases: &[(&NounPhrase, &Statement)],
    images: &dyn ImageClient,
    max_objects: usize,
    max_images: usize,
) -> Vec<PhraseVisual> {
    let mut out = Vec::new();
    for (phrase, links) in question_phrases {
        let items = links
            .iter()
            .filter_map(|l| objects.iter().find(|o| o.object_id == l.object_id))
            .take(max_objects)
            .map(|o| VisualKnowledgeItem {
                kind: VisualKind::InternalObject,
                feature: o.feature.clone(),
                provenance: o.object_id.to_string(),
            })
            .collect();
        out.push(PhraseVisual {
            phrase_kind: phrase.kind,
            phrase_index: phrase.index,
            items,
        });
    }
    for (phrase, statement) in answer_phrases {
        let results = images.search(&statement.text).unwrap_or_else(|e| {
            log::warn!("image search failed for {:?}: {e}", statement.text);
            Vec::new()
        });
        let items = results
            .into_iter()
            .take(max_images)
            .filter_map(|r| {
                let Some(feature) = r.mean_feature() else {
                    log::warn!("image {} has no usable object features", r.url);
                    return None;
                };
                Some(VisualKnowledgeItem {
                    kind: VisualKind::ExternalImage,
                    feature,
                    provenance: r.url,
                })
            })
            .collect();
        out.push(PhraseVisual {
            phrase_kind: phrase.kind,
            phrase_index: phrase.index,
            items,
        });
    }
    out
}
