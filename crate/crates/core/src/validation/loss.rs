use crate::autodiff::NodeId;
use crate::error::{check_dim, Error, Result};
use crate::nn::Graph;
use crate::tensor::Tensor;

pub const BCE_EPS: f64 = 1e-7;

/// Records the validation loss for one question. `j` holds the fused
/// `n x n` matrix flattened row-major (`n*n x 1` or `1 x n*n`); `soft` has
/// one target per candidate. With a single candidate only the diagonal
/// term remains.
pub fn mavex_loss_node(g: &mut Graph, j: NodeId, soft: &[f64], eps: f64) -> NodeId {
    let n = soft.len();
    assert_eq!(g.value(j).len(), n * n, "validation matrix size");
    let mut terms = Vec::with_capacity(3 * n);
    for c in 0..n {
        if n > 1 {
            let column: Vec<usize> = (0..n).filter(|&a| a != c).map(|a| a * n + c).collect();
            let col_max = g.tape.max_of(j, &column);
            terms.push(g.tape.bce(col_max, &[0.0], eps));
            let row: Vec<usize> = (0..n).filter(|&b| b != c).map(|b| c * n + b).collect();
            let row_max = g.tape.max_of(j, &row);
            terms.push(g.tape.bce(row_max, &[0.0], eps));
        }
        let diag = g.tape.max_of(j, &[c * n + c]);
        terms.push(g.tape.bce(diag, &[soft[c]], eps));
    }
    g.tape.sum_scalars(&terms)
}

/// Weighted sum of per-source binary cross-entropies of `P^k` against the
/// soft score of every vocabulary answer.
pub fn auxiliary_vqa_loss_node(
    g: &mut Graph,
    predictions: &[NodeId],
    targets: &[f64],
    weight: f64,
    eps: f64,
) -> NodeId {
    let terms: Vec<NodeId> = predictions
        .iter()
        .map(|&p| g.tape.bce(p, targets, eps))
        .collect();
    let total = g.tape.sum_scalars(&terms);
    g.tape.scale(total, weight)
}

/// Validation loss of one question from plain values.
pub fn mavex_loss(j: &[Vec<f64>], soft: &[f64]) -> Result<f64> {
    let n = soft.len();
    if n == 0 {
        return Err(Error::usage("loss needs at least one candidate"));
    }
    check_dim(n, j.len())?;
    for row in j {
        check_dim(n, row.len())?;
    }
    let mut g = Graph::new();
    let flat: Vec<f64> = j.iter().flatten().copied().collect();
    let jn = g.constant(Tensor::from_vec(n * n, 1, flat)?);
    let loss = mavex_loss_node(&mut g, jn, soft, BCE_EPS);
    Ok(g.tape.scalar(loss))
}
