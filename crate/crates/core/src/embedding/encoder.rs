use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::DetectedObject;
use crate::tensor::Tensor;
use crate::text::{hash_unit_vector, tokenize, HashEncoder};

pub const DEFAULT_MAX_QUESTION_TOKENS: usize = 23;

/// Token, visual and joint features for one question and image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderOutput {
    /// `|q| x d`.
    pub token_features: Tensor,
    /// `|V| x d`.
    pub visual_features: Tensor,
    /// The joint vector `z`, length `d`.
    pub joint: Vec<f64>,
}

impl EncoderOutput {
    pub fn dimension(&self) -> usize {
        self.joint.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 || self.token_features.rows() == 0 {
            return Err(Error::data(
                "encoder output has no tokens or zero dimension",
            ));
        }
        if self.token_features.cols() != d
            || (self.visual_features.rows() > 0 && self.visual_features.cols() != d)
        {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.token_features.cols(),
            });
        }
        Ok(())
    }
}

/// Produces question/image features and sentence features at one dimension.
pub trait MultimodalEncoder: Send + Sync {
    fn dimension(&self) -> usize;

    fn encode(&self, question: &str, objects: &[DetectedObject]) -> Result<EncoderOutput>;

    /// Sentence-level feature, used for statements and retrieved sentences.
    fn encode_text(&self, text: &str) -> Vec<f64>;
}

/// Deterministic stand-in for a pretrained vision-language encoder: hashed
/// token vectors, object features through a fixed seeded projection, and
/// `z` as the sum of the token mean and the object mean.
#[derive(Clone, Debug)]
pub struct HashMultimodalEncoder {
    dim: usize,
    seed: u64,
    max_tokens: usize,
}

impl HashMultimodalEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            max_tokens: DEFAULT_MAX_QUESTION_TOKENS,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }
}

fn mean_row(t: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; t.cols()];
    if t.rows() == 0 {
        return out;
    }
    for r in 0..t.rows() {
        for (o, v) in out.iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= t.rows() as f64);
    out
}

/// Fixed random linear map `in_dim -> out_dim` derived from `seed`; the
/// identity when the dimensions agree.
pub fn fixed_projection(v: &[f64], out_dim: usize, seed: u64) -> Vec<f64> {
    if v.len() == out_dim {
        return v.to_vec();
    }
    let in_dim = v.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((in_dim as u64) << 32) ^ out_dim as u64);
    let bound = (3.0 / in_dim.max(1) as f64).sqrt();
    let mut out = vec![0.0; out_dim];
    for x in v {
        for o in out.iter_mut() {
            *o += x * rng.gen_range(-bound..=bound);
        }
    }
    out
}

impl MultimodalEncoder for HashMultimodalEncoder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn encode(&self, question: &str, objects: &[DetectedObject]) -> Result<EncoderOutput> {
        let mut toks = tokenize(question);
        toks.truncate(self.max_tokens);
        if toks.is_empty() {
            return Err(Error::data("question has no tokens"));
        }
        let token_rows: Vec<Vec<f64>> = toks
            .iter()
            .map(|t| hash_unit_vector(&t.surface, self.dim, self.seed))
            .collect();
        let token_features = Tensor::from_rows(&token_rows)?;
        let visual_rows: Vec<Vec<f64>> = objects
            .iter()
            .map(|o| fixed_projection(&o.feature, self.dim, self.seed))
            .collect();
        let visual_features = if visual_rows.is_empty() {
            Tensor::zeros(0, self.dim)
        } else {
            Tensor::from_rows(&visual_rows)?
        };
        let joint = mean_row(&token_features)
            .into_iter()
            .zip(mean_row(&visual_features))
            .map(|(a, b)| a + b)
            .collect();
        Ok(EncoderOutput {
            token_features,
            visual_features,
            joint,
        })
    }

    fn encode_text(&self, text: &str) -> Vec<f64> {
        HashEncoder::new(self.dim, self.seed).sentence_vector(text)
    }
}
