//! Named parameters, a tape wrapper that binds them, and dense layers.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::error::{check_dim, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }

    /// Uniform in `±sqrt(6 / (rows + cols))`.
    pub fn xavier(name: impl Into<String>, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self::new(
            name,
            Tensor::from_vec(rows, cols, data).expect("shape matches data"),
        )
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Tensor::zeros(rows, cols))
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;
}

/// A tape plus the parameters bound onto it so far. Each parameter is
/// registered once, on first use, so its gradient accumulates over every use.
#[derive(Debug, Default)]
pub struct Graph {
    pub tape: Tape,
    bound: HashMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn p(&mut self, param: &Param) -> NodeId {
        if let Some(&id) = self.bound.get(&param.name) {
            return id;
        }
        let id = self.tape.param(param.value.clone());
        self.bound.insert(param.name.clone(), id);
        id
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.tape.constant(t)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.tape.value(id)
    }

    /// Gradients of every bound parameter with respect to the scalar `root`.
    pub fn param_grads(&self, root: NodeId) -> BTreeMap<String, Tensor> {
        let grads = self.tape.backward(root);
        self.bound
            .iter()
            .map(|(name, &id)| {
                let g = grads.get(id).cloned().unwrap_or_else(|| {
                    let (r, c) = self.tape.value(id).shape();
                    Tensor::zeros(r, c)
                });
                (name.clone(), g)
            })
            .collect()
    }
}

/// `x W + b` with `W` of shape `in x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::xavier(format!("{name}.weight"), input, output, rng),
            bias: Param::zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn from_parts(name: &str, weight: Tensor, bias: Tensor) -> Result<Self> {
        check_dim(1, bias.rows())?;
        check_dim(weight.cols(), bias.cols())?;
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let w = g.p(&self.weight);
        let b = g.p(&self.bias);
        let xw = g.tape.matmul(x, w);
        g.tape.add_row(xw, b)
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Feed-forward head: optional GELU hidden layer, then a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ffn {
    pub hidden: Option<Linear>,
    pub output: Linear,
}

impl Ffn {
    /// `hidden = 0` gives a single linear layer.
    pub fn new(
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        if hidden == 0 {
            return Self {
                hidden: None,
                output: Linear::new(&format!("{name}.out"), input, output, rng),
            };
        }
        Self {
            hidden: Some(Linear::new(&format!("{name}.hidden"), input, hidden, rng)),
            output: Linear::new(&format!("{name}.out"), hidden, output, rng),
        }
    }

    pub fn linear(output: Linear) -> Self {
        Self {
            hidden: None,
            output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .as_ref()
            .map_or(self.output.input_dim(), Linear::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    /// Pre-activation output (no sigmoid).
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let h = match &self.hidden {
            Some(layer) => {
                let pre = layer.forward(g, x);
                g.tape.gelu(pre)
            }
            None => x,
        };
        self.output.forward(g, h)
    }
}

impl Module for Ffn {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.hidden.as_ref().map(Linear::params).unwrap_or_default();
        out.extend(self.output.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self
            .hidden
            .as_mut()
            .map(Linear::params_mut)
            .unwrap_or_default();
        out.extend(self.output.params_mut());
        out
    }
}

/// Replaces each parameter's value with the same-named tensor in `tensors`.
pub fn assign_params(module: &mut dyn Module, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    for p in module.params_mut() {
        let t = tensors
            .get(&p.name)
            .ok_or_else(|| Error::data(format!("missing tensor {}", p.name)))?;
        if t.shape() != p.value.shape() {
            return Err(Error::data(format!(
                "tensor {} has shape {:?}, expected {:?}",
                p.name,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn xavier_bounds_and_seeding() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let p = Param::xavier("w", 10, 20, &mut a);
        let q = Param::xavier("w", 10, 20, &mut b);
        assert_eq!(p, q);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(p.value.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn shared_parameter_gradients_accumulate() {
        let lin = Linear::from_parts(
            "l",
            Tensor::from_rows(&[vec![2.0]]).unwrap(),
            Tensor::zeros(1, 1),
        )
        .unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(vec![3.0]));
        let y1 = lin.forward(&mut g, x);
        let y2 = lin.forward(&mut g, x);
        let s = g.tape.sum_scalars(&[y1, y2]);
        let grads = g.param_grads(s);
        assert_eq!(grads["l.weight"].data(), &[6.0]);
        assert_eq!(grads["l.bias"].data(), &[2.0]);
        assert_eq!(g.tape.param_count(), 2);
    }

    #[test]
    fn ffn_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = Ffn::new("f", 4, 8, 3, &mut rng);
        assert_eq!((f.input_dim(), f.output_dim()), (4, 3));
        assert_eq!(f.params().len(), 4);
        let lin = Ffn::new("f", 4, 0, 3, &mut rng);
        assert_eq!(lin.params().len(), 2);
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(vec![0.1, 0.2, 0.3, 0.4]));
        let y = f.forward(&mut g, x);
        assert_eq!(g.value(y).shape(), (1, 3));
    }

    #[test]
    fn assign_checks_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = Linear::new("l", 2, 2, &mut rng);
        let mut m = BTreeMap::new();
        m.insert("l.weight".to_string(), Tensor::identity(2));
        m.insert("l.bias".to_string(), Tensor::zeros(1, 3));
        assert!(assign_params(&mut lin, &m).is_err());
        m.insert("l.bias".to_string(), Tensor::zeros(1, 2));
        assign_params(&mut lin, &m).unwrap();
        assert_eq!(lin.weight.value, Tensor::identity(2));
    }
}
