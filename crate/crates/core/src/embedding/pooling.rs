use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::NodeId;
use crate::error::{check_dim, Error, Result};
use crate::nn::{Graph, Module, Param};
use crate::tensor::Tensor;

/// Learned scalar score per token, softmax over a span, weighted sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentivePool {
    /// `d x 1` scoring vector.
    pub score: Param,
}

impl AttentivePool {
    pub fn new(name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            score: Param::xavier(format!("{name}.score"), dim, 1, rng),
        }
    }

    pub fn from_weights(name: &str, weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self {
            score: Param::new(
                format!("{name}.score"),
                Tensor::from_vec(n, 1, weights).expect("column vector"),
            ),
        }
    }

    pub fn dim(&self) -> usize {
        self.score.value.rows()
    }

    /// Pools rows `span` of the `n x d` node `features` into a `1 x d` row.
    pub fn forward(&self, g: &mut Graph, features: NodeId, span: Range<usize>) -> NodeId {
        let idx: Vec<usize> = span.collect();
        let rows = g.tape.gather_rows(features, &idx);
        let w = g.p(&self.score);
        let scores = g.tape.matmul(rows, w);
        let row = g.tape.transpose(scores);
        let weights = g.tape.softmax_rows(row);
        g.tape.matmul_sorted(weights, rows)
    }
}

impl Module for AttentivePool {
    fn params(&self) -> Vec<&Param> {
        vec![&self.score]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.score]
    }
}

pub fn attentive_pool(
    span: Range<usize>,
    token_features: &Tensor,
    params: &AttentivePool,
) -> Result<Vec<f64>> {
    if span.is_empty() {
        return Err(Error::usage("attentive pooling needs a non-empty span"));
    }
    if span.end > token_features.rows() {
        return Err(Error::usage(format!(
            "span {span:?} exceeds {} token rows",
            token_features.rows()
        )));
    }
    check_dim(params.dim(), token_features.cols())?;
    let mut g = Graph::new();
    let u = g.constant(token_features.clone());
    let out = params.forward(&mut g, u, span);
    Ok(g.value(out).data().to_vec())
}
