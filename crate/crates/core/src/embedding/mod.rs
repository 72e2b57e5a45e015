//! Multi-granular attention over retrieved knowledge: queries into phrases,
//! phrases into a question vector, and answer-side knowledge attended by `z`.

pub mod attention;
pub mod encoder;
pub mod pooling;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use attention::{mhatt, AttentionNodes, AttentionOutput, AttentionWrap, MHAttParams};
pub use encoder::{
    fixed_projection, EncoderOutput, HashMultimodalEncoder, MultimodalEncoder,
    DEFAULT_MAX_QUESTION_TOKENS,
};
pub use pooling::{attentive_pool, AttentivePool};

use crate::error::{check_dim, Result};
use crate::query::PhraseKind;
use crate::retrieval::TextSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnowledgeSource {
    Wikipedia,
    Conceptnet,
    Images,
}

impl KnowledgeSource {
    pub const ALL: [KnowledgeSource; 3] = [
        KnowledgeSource::Wikipedia,
        KnowledgeSource::Conceptnet,
        KnowledgeSource::Images,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KnowledgeSource::Wikipedia => "wikipedia",
            KnowledgeSource::Conceptnet => "conceptnet",
            KnowledgeSource::Images => "images",
        }
    }

    pub fn text_source(self) -> Option<TextSource> {
        match self {
            KnowledgeSource::Wikipedia => Some(TextSource::Wikipedia),
            KnowledgeSource::Conceptnet => Some(TextSource::Conceptnet),
            KnowledgeSource::Images => None,
        }
    }
}

impl fmt::Display for KnowledgeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KnowledgeSource {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wikipedia" => Ok(KnowledgeSource::Wikipedia),
            "conceptnet" => Ok(KnowledgeSource::Conceptnet),
            "images" => Ok(KnowledgeSource::Images),
            other => Err(crate::Error::config(format!(
                "unknown knowledge source {other:?}"
            ))),
        }
    }
}

/// Mean feature of what one query (or one visual item) retrieved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryFeature {
    pub rank: usize,
    pub vector: Vec<f64>,
    /// Nothing was retrieved; `vector` is all zeros.
    #[serde(default)]
    pub empty: bool,
}

impl QueryFeature {
    /// Mean of `items`, or a zero vector flagged empty.
    pub fn mean_of(rank: usize, items: &[Vec<f64>], dim: usize) -> Result<Self> {
        let mut vector = vec![0.0; dim];
        for it in items {
            check_dim(dim, it.len())?;
            for (v, x) in vector.iter_mut().zip(it) {
                *v += x;
            }
        }
        if !items.is_empty() {
            vector.iter_mut().for_each(|v| *v /= items.len() as f64);
        }
        Ok(Self {
            rank,
            vector,
            empty: items.is_empty(),
        })
    }
}

/// Knowledge features of one phrase from one source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseKnowledge {
    pub kind: PhraseKind,
    pub index: usize,
    /// Token span in the question; `None` for answer phrases.
    pub span: Option<Range<usize>>,
    pub features: Vec<QueryFeature>,
}

impl PhraseKnowledge {
    /// Vectors of the non-empty features.
    pub fn keys(&self) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .filter(|f| !f.empty)
            .map(|f| f.vector.clone())
            .collect()
    }
}

/// A phrase- or answer-level vector; `empty` marks the zero vector used
/// when no knowledge was retrieved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseEmbedding {
    pub vector: Vec<f64>,
    pub empty: bool,
}

fn attend_or_zero(
    query: &[f64],
    feats: &[QueryFeature],
    params: &MHAttParams,
) -> Result<PhraseEmbedding> {
    let keys: Vec<Vec<f64>> = feats
        .iter()
        .filter(|f| !f.empty)
        .map(|f| f.vector.clone())
        .collect();
    if keys.is_empty() {
        return Ok(PhraseEmbedding {
            vector: vec![0.0; params.output_dim()],
            empty: true,
        });
    }
    Ok(PhraseEmbedding {
        vector: mhatt(query, &keys, &keys, params)?.output,
        empty: false,
    })
}

/// `MHAtt(u_n, feats, feats)`, skipping features that retrieved nothing.
pub fn embed_phrase(
    u_n: &[f64],
    feats: &[QueryFeature],
    params: &MHAttParams,
) -> Result<PhraseEmbedding> {
    attend_or_zero(u_n, feats, params)
}

/// `MHAtt(z, feats, feats)` for one answer phrase.
pub fn embed_answer(
    z: &[f64],
    feats: &[QueryFeature],
    params: &MHAttParams,
) -> Result<PhraseEmbedding> {
    attend_or_zero(z, feats, params)
}

/// `MHAtt(target, phrases, phrases)`; the target itself when there are no phrases.
pub fn embed_question(
    target: &[f64],
    phrase_embs: &[Vec<f64>],
    params: &MHAttParams,
) -> Result<Vec<f64>> {
    if phrase_embs.is_empty() {
        return Ok(target.to_vec());
    }
    Ok(mhatt(target, phrase_embs, phrase_embs, params)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use crate::tensor::Tensor;

    fn identity(d: usize, heads: usize) -> MHAttParams {
        let lin =
            |n: &str| Linear::from_parts(n, Tensor::identity(d), Tensor::zeros(1, d)).unwrap();
        MHAttParams::from_linears(heads, lin("q"), lin("k"), lin("v"), lin("o")).unwrap()
    }

    fn feat(v: Vec<f64>) -> QueryFeature {
        QueryFeature {
            rank: 1,
            vector: v,
            empty: false,
        }
    }

    #[test]
    fn empty_knowledge_gives_flagged_zero() {
        let p = identity(2, 1);
        let e = QueryFeature::mean_of(1, &[], 2).unwrap();
        assert!(e.empty);
        let out = embed_phrase(&[1.0, 1.0], &[e], &p).unwrap();
        assert!(out.empty);
        assert_eq!(out.vector, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_features_are_not_keys() {
        let p = identity(2, 1);
        let with = embed_answer(
            &[0.3, 0.1],
            &[
                feat(vec![1.0, 2.0]),
                QueryFeature::mean_of(2, &[], 2).unwrap(),
            ],
            &p,
        )
        .unwrap();
        assert_eq!(with.vector, vec![1.0, 2.0]);
    }

    #[test]
    fn question_passthrough_without_phrases() {
        let p = identity(2, 1);
        assert_eq!(
            embed_question(&[0.5, 0.25], &[], &p).unwrap(),
            vec![0.5, 0.25]
        );
        assert_eq!(
            embed_question(&[0.5, 0.25], &[vec![3.0, 4.0]], &p).unwrap(),
            vec![3.0, 4.0]
        );
    }

    #[test]
    fn mean_of_items() {
        let f = QueryFeature::mean_of(2, &[vec![1.0, 3.0], vec![3.0, 5.0]], 2).unwrap();
        assert_eq!(f.vector, vec![2.0, 4.0]);
        assert!(!f.empty);
        assert!(QueryFeature::mean_of(1, &[vec![1.0]], 2).is_err());
    }

    #[test]
    fn source_names_round_trip() {
        for s in KnowledgeSource::ALL {
            assert_eq!(s.as_str().parse::<KnowledgeSource>().unwrap(), s);
        }
        assert!("google".parse::<KnowledgeSource>().is_err());
    }
}
