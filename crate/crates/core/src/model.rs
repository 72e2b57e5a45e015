//! The per-source validation network and its checkpoint format.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::NodeId;
use crate::embedding::{
    AttentionWrap, AttentivePool, EncoderOutput, KnowledgeSource, MHAttParams, PhraseKnowledge,
};
use crate::error::{Error, Result};
use crate::nn::{assign_params, Ffn, Graph, Module, Param};
use crate::tensor::Tensor;
use crate::validation::{auxiliary_vqa_loss_node, mavex_loss_node, BCE_EPS};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Which argument `z` fills in the answer-level attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZRole {
    /// `MHAtt(z, feats, feats)`.
    #[default]
    Query,
    /// Mean feature as the query, `[feat; z]` as the keys.
    Keys,
}

/// Aggregation used at one granularity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Attention,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_dim: usize,
    pub heads: usize,
    /// Hidden width of the heads as a multiple of `model_dim`; 0 makes them linear.
    pub ffn_hidden_multiplier: usize,
    pub wrap: AttentionWrap,
    pub z_role: ZRole,
    pub phrase_pooling: Pooling,
    pub question_pooling: Pooling,
    pub sources: Vec<KnowledgeSource>,
    pub text_dim: usize,
    pub visual_dim: usize,
    pub vocab_size: usize,
    pub aux_weight: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_dim: 512,
            heads: 8,
            ffn_hidden_multiplier: 2,
            wrap: AttentionWrap::None,
            z_role: ZRole::Query,
            phrase_pooling: Pooling::Attention,
            question_pooling: Pooling::Attention,
            sources: KnowledgeSource::ALL.to_vec(),
            text_dim: 512,
            visual_dim: 2048,
            vocab_size: 0,
            aux_weight: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "model_dim {} must be a positive multiple of heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.sources.is_empty() {
            return Err(Error::config(
                "at least one knowledge source must be enabled",
            ));
        }
        let mut seen = self.sources.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.sources.len() {
            return Err(Error::config("knowledge sources listed twice"));
        }
        if self.text_dim == 0 || self.visual_dim == 0 || self.vocab_size == 0 {
            return Err(Error::config(
                "text_dim, visual_dim and vocab_size must be positive",
            ));
        }
        if !self.aux_weight.is_finite() || self.aux_weight < 0.0 {
            return Err(Error::config("aux_weight must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn feature_dim(&self, source: KnowledgeSource) -> usize {
        match source {
            KnowledgeSource::Images => self.visual_dim,
            _ => self.text_dim,
        }
    }
}

/// Parameters for one knowledge source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceModule {
    pub source: KnowledgeSource,
    pub pool: AttentivePool,
    pub phrase_att: MHAttParams,
    pub question_att: MHAttParams,
    pub answer_att: MHAttParams,
    pub prediction: Ffn,
    pub validation: Ffn,
}

impl SourceModule {
    fn new(source: KnowledgeSource, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let d = cfg.model_dim;
        let dk = cfg.feature_dim(source);
        let name = source.as_str();
        let hidden = cfg.ffn_hidden_multiplier * d;
        let (aq, ak) = match cfg.z_role {
            ZRole::Query => (d, dk),
            ZRole::Keys => (dk, dk + d),
        };
        let wrap = |p: MHAttParams| {
            p.with_wrap(cfg.wrap).map_err(|_| {
                Error::config("residual wrap needs query and output dimensions to agree")
            })
        };
        Ok(Self {
            source,
            pool: AttentivePool::new(&format!("{name}.pool"), d, rng),
            phrase_att: wrap(MHAttParams::new(
                &format!("{name}.phrase_att"),
                d,
                dk,
                dk,
                d,
                cfg.heads,
                rng,
            )?)?,
            question_att: wrap(MHAttParams::new(
                &format!("{name}.question_att"),
                d,
                d,
                d,
                d,
                cfg.heads,
                rng,
            )?)?,
            answer_att: wrap(MHAttParams::new(
                &format!("{name}.answer_att"),
                aq,
                ak,
                dk,
                d,
                cfg.heads,
                rng,
            )?)?,
            prediction: Ffn::new(
                &format!("{name}.prediction"),
                d,
                hidden,
                cfg.vocab_size,
                rng,
            ),
            validation: Ffn::new(&format!("{name}.validation"), d, hidden, 1, rng),
        })
    }
}

impl Module for SourceModule {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.pool.params();
        out.extend(self.phrase_att.params());
        out.extend(self.question_att.params());
        out.extend(self.answer_att.params());
        out.extend(self.prediction.params());
        out.extend(self.validation.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.pool.params_mut();
        out.extend(self.phrase_att.params_mut());
        out.extend(self.question_att.params_mut());
        out.extend(self.answer_att.params_mut());
        out.extend(self.prediction.params_mut());
        out.extend(self.validation.params_mut());
        out
    }
}

/// Knowledge features of one question from one source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceKnowledge {
    pub source: KnowledgeSource,
    pub target: PhraseKnowledge,
    pub question_phrases: Vec<PhraseKnowledge>,
    /// One entry per candidate, in candidate order.
    pub answers: Vec<PhraseKnowledge>,
}

/// Everything the network needs for one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedInstance {
    pub question_id: String,
    pub encoder: EncoderOutput,
    /// Vocabulary indices of the candidates.
    pub candidates: Vec<usize>,
    pub candidate_answers: Vec<String>,
    /// Soft score of each candidate.
    pub soft_scores: Vec<f64>,
    /// Soft score of each vocabulary answer.
    pub vocab_targets: Vec<f64>,
    /// `f_ans(a)` for each candidate.
    pub answer_inputs: Vec<Vec<f64>>,
    pub sources: Vec<SourceKnowledge>,
}

impl PreparedInstance {
    pub fn knowledge(&self, source: KnowledgeSource) -> Option<&SourceKnowledge> {
        self.sources.iter().find(|s| s.source == source)
    }
}

/// Recorded outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardNodes {
    /// `1 x |vocab|` per enabled source.
    pub p_sources: Vec<NodeId>,
    /// `|A|^2 x 1` per enabled source, row-major over `(a, a')`.
    pub j_sources: Vec<NodeId>,
    pub p: NodeId,
    pub j: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub sources: Vec<KnowledgeSource>,
    pub p_sources: Vec<Vec<f64>>,
    pub j_sources: Vec<Vec<Vec<f64>>>,
    pub p: Vec<f64>,
    pub j: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MavexModel {
    pub config: ModelConfig,
    pub modules: Vec<SourceModule>,
}

fn rows_node(g: &mut Graph, rows: &[Vec<f64>]) -> Result<NodeId> {
    Ok(g.constant(Tensor::from_rows(rows)?))
}

fn clip_span(span: &Range<usize>, rows: usize) -> Range<usize> {
    let start = span.start.min(rows);
    let end = span.end.min(rows);
    if start < end {
        start..end
    } else {
        0..rows
    }
}

impl MavexModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let modules = config
            .sources
            .iter()
            .map(|&s| SourceModule::new(s, &config, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Self { config, modules })
    }

    fn check_instance(&self, inst: &PreparedInstance) -> Result<()> {
        let n = inst.candidates.len();
        let d = self.config.model_dim;
        if n == 0 {
            return Err(Error::data(format!(
                "question {} has no candidates",
                inst.question_id
            )));
        }
        if inst.soft_scores.len() != n || inst.answer_inputs.len() != n {
            return Err(Error::data(format!(
                "question {}: per-candidate arrays disagree in length",
                inst.question_id
            )));
        }
        if inst.vocab_targets.len() != self.config.vocab_size {
            return Err(Error::DimensionMismatch {
                expected: self.config.vocab_size,
                actual: inst.vocab_targets.len(),
            });
        }
        if inst.encoder.dimension() != d || inst.answer_inputs.iter().any(|a| a.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: inst.encoder.dimension(),
            });
        }
        inst.encoder.validate()?;
        for m in &self.modules {
            let k = inst.knowledge(m.source).ok_or_else(|| {
                Error::data(format!(
                    "question {} lacks {} knowledge",
                    inst.question_id, m.source
                ))
            })?;
            if k.answers.len() != n {
                return Err(Error::data(format!(
                    "question {}: {} answer knowledge for {n} candidates",
                    inst.question_id,
                    k.answers.len()
                )));
            }
            let dk = self.config.feature_dim(m.source);
            let phrases = std::iter::once(&k.target)
                .chain(&k.question_phrases)
                .chain(&k.answers);
            for p in phrases {
                if let Some(f) = p.features.iter().find(|f| f.vector.len() != dk) {
                    return Err(Error::DimensionMismatch {
                        expected: dk,
                        actual: f.vector.len(),
                    });
                }
            }
        }
        Ok(())
    }

    fn phrase_vector(
        &self,
        g: &mut Graph,
        m: &SourceModule,
        u_all: NodeId,
        phrase: &PhraseKnowledge,
    ) -> Result<Option<NodeId>> {
        let keys = phrase.keys();
        if keys.is_empty() {
            return Ok(None);
        }
        let rows = g.value(u_all).rows();
        let span = clip_span(phrase.span.as_ref().unwrap_or(&(0..rows)), rows);
        let u = m.pool.forward(g, u_all, span);
        let feats = rows_node(g, &keys)?;
        let out = match self.config.phrase_pooling {
            Pooling::Attention => m.phrase_att.forward(g, u, feats, feats),
            Pooling::Mean => m.phrase_att.forward_mean(g, u, feats),
        };
        Ok(Some(out.output))
    }

    fn answer_vector(
        &self,
        g: &mut Graph,
        m: &SourceModule,
        z: NodeId,
        phrase: &PhraseKnowledge,
    ) -> Result<NodeId> {
        let keys = phrase.keys();
        let d = self.config.model_dim;
        if keys.is_empty() {
            return Ok(g.constant(Tensor::zeros(1, d)));
        }
        let feats = rows_node(g, &keys)?;
        let out = match (self.config.phrase_pooling, self.config.z_role) {
            (Pooling::Mean, ZRole::Query) => m.answer_att.forward_mean(g, z, feats),
            (Pooling::Mean, ZRole::Keys) => {
                let q = g.tape.mean_rows(feats);
                m.answer_att.forward_mean(g, q, feats)
            }
            (Pooling::Attention, ZRole::Query) => m.answer_att.forward(g, z, feats, feats),
            (Pooling::Attention, ZRole::Keys) => {
                let q = g.tape.mean_rows(feats);
                let zrep = g.tape.gather_rows(z, &vec![0; keys.len()]);
                let k = g.tape.concat_cols(&[feats, zrep]);
                m.answer_att.forward(g, q, k, feats)
            }
        };
        Ok(out.output)
    }

    /// Records the forward pass of one question on `g`.
    pub fn forward(&self, g: &mut Graph, inst: &PreparedInstance) -> Result<ForwardNodes> {
        self.check_instance(inst)?;
        let n = inst.candidates.len();
        let d = self.config.model_dim;
        let u_all = g.constant(inst.encoder.token_features.clone());
        let z = g.constant(Tensor::row_vector(inst.encoder.joint.clone()));
        let f_ans = rows_node(g, &inst.answer_inputs)?;
        let left: Vec<usize> = (0..n).flat_map(|a| std::iter::repeat_n(a, n)).collect();
        let right: Vec<usize> = (0..n).flat_map(|_| 0..n).collect();
        let f_rep = g.tape.gather_rows(f_ans, &left);
        let mut p_sources = Vec::with_capacity(self.modules.len());
        let mut j_sources = Vec::with_capacity(self.modules.len());
        for m in &self.modules {
            let k = inst.knowledge(m.source).expect("checked");
            let target = match self.phrase_vector(g, m, u_all, &k.target)? {
                Some(t) => t,
                None => g.constant(Tensor::zeros(1, d)),
            };
            let mut phrases = Vec::new();
            for p in &k.question_phrases {
                if let Some(v) = self.phrase_vector(g, m, u_all, p)? {
                    phrases.push(v);
                }
            }
            let question = if phrases.is_empty() {
                target
            } else {
                let stacked = g.tape.stack_rows(&phrases);
                match self.config.question_pooling {
                    Pooling::Attention => {
                        m.question_att.forward(g, target, stacked, stacked).output
                    }
                    Pooling::Mean => m.question_att.forward_mean(g, target, stacked).output,
                }
            };
            let qz = g.tape.add(question, z);
            let logits = m.prediction.forward(g, qz);
            p_sources.push(g.tape.sigmoid(logits));

            let answers = k
                .answers
                .iter()
                .map(|a| self.answer_vector(g, m, z, a))
                .collect::<Result<Vec<_>>>()?;
            let kmat = g.tape.stack_rows(&answers);
            let k_rep = g.tape.gather_rows(kmat, &right);
            let prod = g.tape.mul(f_rep, k_rep);
            let vlog = m.validation.forward(g, prod);
            j_sources.push(g.tape.sigmoid(vlog));
        }
        let p = g.tape.max_elementwise(&p_sources);
        let j = g.tape.max_elementwise(&j_sources);
        Ok(ForwardNodes {
            p_sources,
            j_sources,
            p,
            j,
        })
    }

    /// Validation loss plus the weighted auxiliary prediction loss for one question.
    pub fn instance_loss(&self, g: &mut Graph, inst: &PreparedInstance) -> Result<NodeId> {
        let out = self.forward(g, inst)?;
        let main = mavex_loss_node(g, out.j, &inst.soft_scores, BCE_EPS);
        let aux = auxiliary_vqa_loss_node(
            g,
            &out.p_sources,
            &inst.vocab_targets,
            self.config.aux_weight,
            BCE_EPS,
        );
        Ok(g.tape.sum_scalars(&[main, aux]))
    }

    /// Mean instance loss over a batch.
    pub fn batch_loss(&self, g: &mut Graph, batch: &[&PreparedInstance]) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let losses = batch
            .iter()
            .map(|inst| self.instance_loss(g, inst))
            .collect::<Result<Vec<_>>>()?;
        let total = g.tape.sum_scalars(&losses);
        Ok(g.tape.scale(total, 1.0 / batch.len() as f64))
    }

    pub fn loss_value(&self, batch: &[&PreparedInstance]) -> Result<f64> {
        let mut g = Graph::new();
        let l = self.batch_loss(&mut g, batch)?;
        Ok(g.tape.scalar(l))
    }

    pub fn predict(&self, inst: &PreparedInstance) -> Result<ModelOutput> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, inst)?;
        let n = inst.candidates.len();
        let square =
            |t: &Tensor| -> Vec<Vec<f64>> { t.data().chunks(n).map(<[f64]>::to_vec).collect() };
        Ok(ModelOutput {
            sources: self.config.sources.clone(),
            p_sources: out
                .p_sources
                .iter()
                .map(|&p| g.value(p).data().to_vec())
                .collect(),
            j_sources: out.j_sources.iter().map(|&j| square(g.value(j))).collect(),
            p: g.value(out.p).data().to_vec(),
            j: square(g.value(out.j)),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            tensors: self
                .params()
                .into_iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    dims: [p.value.rows(), p.value.cols()],
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model described by `ckpt.config` and checks that every
    /// tensor is present with the expected shape.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        let mut model = Self::new(ckpt.config.clone())?;
        let mut tensors = BTreeMap::new();
        for t in &ckpt.tensors {
            let tensor = Tensor::from_vec(t.dims[0], t.dims[1], t.data.clone()).map_err(|_| {
                Error::data(format!(
                    "tensor {} data does not match dims {:?}",
                    t.name, t.dims
                ))
            })?;
            if tensors.insert(t.name.clone(), tensor).is_some() {
                return Err(Error::data(format!("tensor {} appears twice", t.name)));
            }
        }
        let expected = model.params().len();
        if tensors.len() != expected {
            return Err(Error::data(format!(
                "checkpoint has {} tensors, model expects {expected}",
                tensors.len()
            )));
        }
        assign_params(&mut model, &tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(&ckpt)
    }
}

impl Module for MavexModel {
    fn params(&self) -> Vec<&Param> {
        self.modules.iter().flat_map(|m| m.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.modules
            .iter_mut()
            .flat_map(|m| m.params_mut())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub dims: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}
