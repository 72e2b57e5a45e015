use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::NodeId;
use crate::error::{check_dim, Error, Result};
use crate::nn::{Graph, Linear, Module, Param};
use crate::tensor::Tensor;

/// What wraps the bare attention output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionWrap {
    #[default]
    None,
    Residual,
    ResidualLayerNorm,
}

/// Multi-head scaled dot-product attention with a single query row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MHAttParams {
    pub head_count: usize,
    pub model_dim: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    #[serde(default)]
    pub wrap: AttentionWrap,
}

impl MHAttParams {
    /// Randomly initialized projections: query `dq -> D`, key `dk -> D`,
    /// value `dv -> D`, output `D -> D`.
    pub fn new(
        name: &str,
        query_dim: usize,
        key_dim: usize,
        value_dim: usize,
        model_dim: usize,
        head_count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Self::from_linears(
            head_count,
            Linear::new(&format!("{name}.q"), query_dim, model_dim, rng),
            Linear::new(&format!("{name}.k"), key_dim, model_dim, rng),
            Linear::new(&format!("{name}.v"), value_dim, model_dim, rng),
            Linear::new(&format!("{name}.o"), model_dim, model_dim, rng),
        )
    }

    pub fn from_linears(
        head_count: usize,
        query: Linear,
        key: Linear,
        value: Linear,
        output: Linear,
    ) -> Result<Self> {
        let model_dim = query.output_dim();
        if head_count == 0 || model_dim % head_count != 0 {
            return Err(Error::usage(format!(
                "model dimension {model_dim} is not divisible by {head_count} heads"
            )));
        }
        check_dim(model_dim, key.output_dim())?;
        check_dim(model_dim, value.output_dim())?;
        check_dim(model_dim, output.input_dim())?;
        Ok(Self {
            head_count,
            model_dim,
            query,
            key,
            value,
            output,
            wrap: AttentionWrap::None,
        })
    }

    pub fn with_wrap(mut self, wrap: AttentionWrap) -> Result<Self> {
        if wrap != AttentionWrap::None {
            check_dim(self.query.input_dim(), self.output.output_dim())?;
        }
        self.wrap = wrap;
        Ok(self)
    }

    pub fn query_dim(&self) -> usize {
        self.query.input_dim()
    }

    pub fn key_dim(&self) -> usize {
        self.key.input_dim()
    }

    pub fn value_dim(&self) -> usize {
        self.value.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.head_count
    }

    /// Records attention of one query row over `n` key/value rows.
    pub fn forward(
        &self,
        g: &mut Graph,
        query: NodeId,
        keys: NodeId,
        values: NodeId,
    ) -> AttentionNodes {
        let q = self.query.forward(g, query);
        let k = self.key.forward(g, keys);
        let v = self.value.forward(g, values);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut weights = Vec::with_capacity(self.head_count);
        let mut mixes = Vec::with_capacity(self.head_count);
        for h in 0..self.head_count {
            let qh = g.tape.slice_cols(q, h * dh, dh);
            let kh = g.tape.slice_cols(k, h * dh, dh);
            let vh = g.tape.slice_cols(v, h * dh, dh);
            let kt = g.tape.transpose(kh);
            let logits = g.tape.matmul(qh, kt);
            let scaled = g.tape.scale(logits, scale);
            let w = g.tape.softmax_rows(scaled);
            mixes.push(g.tape.matmul_sorted(w, vh));
            weights.push(w);
        }
        let mixture = g.tape.concat_cols(&mixes);
        let output = self.finish(g, query, mixture);
        AttentionNodes {
            output,
            mixture,
            weights,
        }
    }

    /// Same shapes as [`forward`](Self::forward) but with uniform weights
    /// over the values; the query is only used by a residual wrap.
    pub fn forward_mean(&self, g: &mut Graph, query: NodeId, values: NodeId) -> AttentionNodes {
        let v = self.value.forward(g, values);
        let n = g.value(v).rows();
        let w = g.constant(Tensor::filled(1, n, 1.0 / n as f64));
        let mixture = g.tape.matmul_sorted(w, v);
        let output = self.finish(g, query, mixture);
        AttentionNodes {
            output,
            mixture,
            weights: vec![w; self.head_count],
        }
    }

    fn finish(&self, g: &mut Graph, query: NodeId, mixture: NodeId) -> NodeId {
        let out = self.output.forward(g, mixture);
        match self.wrap {
            AttentionWrap::None => out,
            AttentionWrap::Residual => g.tape.add(out, query),
            AttentionWrap::ResidualLayerNorm => {
                let sum = g.tape.add(out, query);
                g.tape.layer_norm_rows(sum)
            }
        }
    }
}

impl Module for MHAttParams {
    fn params(&self) -> Vec<&Param> {
        [&self.query, &self.key, &self.value, &self.output]
            .into_iter()
            .flat_map(|l| l.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.query.params_mut();
        out.extend(self.key.params_mut());
        out.extend(self.value.params_mut());
        out.extend(self.output.params_mut());
        out
    }
}

#[derive(Clone, Debug)]
pub struct AttentionNodes {
    pub output: NodeId,
    /// Concatenated head mixtures before the output projection.
    pub mixture: NodeId,
    /// One `1 x n` weight row per head.
    pub weights: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub output: Vec<f64>,
    pub mixture: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

pub(crate) fn rows_tensor(rows: &[Vec<f64>], dim: usize) -> Result<Tensor> {
    for r in rows {
        check_dim(dim, r.len())?;
    }
    if rows.is_empty() {
        return Ok(Tensor::zeros(0, dim));
    }
    Tensor::from_rows(rows)
}

/// Multi-head attention of `query` over `keys`/`values`.
pub fn mhatt(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    params: &MHAttParams,
) -> Result<AttentionOutput> {
    if keys.is_empty() {
        return Err(Error::usage("mhatt needs at least one key"));
    }
    if keys.len() != values.len() {
        return Err(Error::usage(format!(
            "mhatt got {} keys and {} values",
            keys.len(),
            values.len()
        )));
    }
    check_dim(params.query_dim(), query.len())?;
    let mut g = Graph::new();
    let q = g.constant(Tensor::row_vector(query.to_vec()));
    let k = g.constant(rows_tensor(keys, params.key_dim())?);
    let v = g.constant(rows_tensor(values, params.value_dim())?);
    let nodes = params.forward(&mut g, q, k, v);
    Ok(AttentionOutput {
        output: g.value(nodes.output).data().to_vec(),
        mixture: g.value(nodes.mixture).data().to_vec(),
        weights: nodes
            .weights
            .iter()
            .map(|&w| g.value(w).data().to_vec())
            .collect(),
    })
}
