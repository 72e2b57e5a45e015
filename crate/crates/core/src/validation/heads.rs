use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::embedding::KnowledgeSource;
use crate::error::{check_dim, Error, Result};
use crate::nn::{Ffn, Graph};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourcePrediction {
    pub source: KnowledgeSource,
    pub scores: Vec<f64>,
}

fn ffn_row(head: &Ffn, input: Vec<f64>) -> Result<Vec<f64>> {
    check_dim(head.input_dim(), input.len())?;
    let mut g = Graph::new();
    let x = g.constant(Tensor::row_vector(input));
    let y = head.forward(&mut g, x);
    Ok(g.value(y).data().iter().map(|&v| sigmoid(v)).collect())
}

/// `sigmoid(FFN(k + z))` over the vocabulary.
pub fn predict_source(k_emb: &[f64], z: &[f64], head: &Ffn) -> Result<Vec<f64>> {
    check_dim(k_emb.len(), z.len())?;
    ffn_row(head, k_emb.iter().zip(z).map(|(a, b)| a + b).collect())
}

/// Elementwise max over sources.
pub fn fuse_predictions(preds: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = preds
        .first()
        .ok_or_else(|| Error::usage("fusing needs at least one source"))?;
    let mut out = first.clone();
    for p in &preds[1..] {
        check_dim(out.len(), p.len())?;
        for (o, v) in out.iter_mut().zip(p) {
            *o = o.max(*v);
        }
    }
    Ok(out)
}

/// Statement feature plus answer word vector.
pub fn answer_embedding(statement_vector: &[f64], answer_word_vector: &[f64]) -> Result<Vec<f64>> {
    check_dim(statement_vector.len(), answer_word_vector.len())?;
    Ok(statement_vector
        .iter()
        .zip(answer_word_vector)
        .map(|(a, b)| a + b)
        .collect())
}

/// `sigmoid(FFN(f_ans(a) * k^{a'}))` for one source.
pub fn validation_score(f_ans: &[f64], k_aprime: &[f64], head: &Ffn) -> Result<f64> {
    check_dim(f_ans.len(), k_aprime.len())?;
    if head.output_dim() != 1 {
        return Err(Error::usage("validation head must produce one output"));
    }
    Ok(ffn_row(
        head,
        f_ans.iter().zip(k_aprime).map(|(a, b)| a * b).collect(),
    )?[0])
}

/// Elementwise max of square matrices given as rows.
pub fn fuse_validation(mats: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let first = mats
        .first()
        .ok_or_else(|| Error::usage("fusing needs at least one source"))?;
    let mut out = first.clone();
    for m in &mats[1..] {
        check_dim(out.len(), m.len())?;
        for (orow, row) in out.iter_mut().zip(m) {
            check_dim(orow.len(), row.len())?;
            for (o, v) in orow.iter_mut().zip(row) {
                *o = o.max(*v);
            }
        }
    }
    Ok(out)
}
