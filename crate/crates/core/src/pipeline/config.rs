use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::candidates::DEFAULT_CANDIDATES;
use crate::embedding::{AttentionWrap, KnowledgeSource, DEFAULT_MAX_QUESTION_TOKENS};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Pooling, ZRole};
use crate::query::{DEFAULT_LINK_THRESHOLD, DEFAULT_MAX_QUERIES};
use crate::retrieval::{
    ConceptNetClient, WikipediaClient, DEFAULT_EXTERNAL_IMAGES, DEFAULT_INTERNAL_OBJECTS,
    DEFAULT_RECALL_THRESHOLD, DEFAULT_SENTENCES_PER_ARTICLE, DEFAULT_SENTENCES_PER_QUERY,
};
use crate::text::OovPolicy;
use crate::training::TrainConfig;
use crate::validation::FallbackScope;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Extract,
    Retrieve,
    Embed,
    Train,
    Validate,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Retrieve,
        Stage::Embed,
        Stage::Train,
        Stage::Validate,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Retrieve => "retrieve",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Validate => "validate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: PathBuf,
    pub vocabulary: PathBuf,
    pub scores: PathBuf,
    /// Whitespace-separated word vectors; without it every word uses the
    /// hash fallback at `word_vector_dim`.
    pub word_vectors: Option<PathBuf>,
    pub word_vector_dim: usize,
    pub oov_policy: OovPolicy,
    pub train_split: Option<String>,
    pub eval_split: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: "dataset.json".into(),
            vocabulary: "vocabulary.txt".into(),
            scores: "scores.jsonl".into(),
            word_vectors: None,
            word_vector_dim: 50,
            oov_policy: OovPolicy::HashFallback,
            train_split: None,
            eval_split: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Local JSON fixtures.
    #[default]
    Fixture,
    /// Live HTTP endpoints.
    Http,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecontextualizerKind {
    #[default]
    PassThrough,
    PronounToTitle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub backend: Backend,
    pub cache_dir: PathBuf,
    pub offline: bool,
    pub wikipedia_fixture: PathBuf,
    pub conceptnet_fixture: PathBuf,
    pub images_dir: PathBuf,
    pub wikipedia_url: String,
    pub conceptnet_url: String,
    pub wikipedia_articles: usize,
    pub conceptnet_limit: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    /// Extra or replacement ConceptNet relation templates.
    pub relation_templates: BTreeMap<String, String>,
    pub decontextualizer: DecontextualizerKind,
    /// Dimension of the hashed token encoder used for sentence scoring.
    pub match_encoder_dim: usize,
    pub k_queries: usize,
    pub link_threshold: f64,
    pub recall_threshold: f64,
    pub m: usize,
    pub sentences_per_article: usize,
    pub internal_objects: usize,
    pub external_images: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Fixture,
            cache_dir: "cache".into(),
            offline: false,
            wikipedia_fixture: "wikipedia.json".into(),
            conceptnet_fixture: "conceptnet.json".into(),
            images_dir: "images".into(),
            wikipedia_url: WikipediaClient::DEFAULT_BASE_URL.into(),
            conceptnet_url: ConceptNetClient::DEFAULT_BASE_URL.into(),
            wikipedia_articles: 3,
            conceptnet_limit: 50,
            retries: 2,
            backoff_ms: 200,
            relation_templates: BTreeMap::new(),
            decontextualizer: DecontextualizerKind::PassThrough,
            match_encoder_dim: 64,
            k_queries: DEFAULT_MAX_QUERIES,
            link_threshold: DEFAULT_LINK_THRESHOLD,
            recall_threshold: DEFAULT_RECALL_THRESHOLD,
            m: DEFAULT_SENTENCES_PER_QUERY,
            sentences_per_article: DEFAULT_SENTENCES_PER_ARTICLE,
            internal_objects: DEFAULT_INTERNAL_OBJECTS,
            external_images: DEFAULT_EXTERNAL_IMAGES,
        }
    }
}

/// Model settings that are not derived from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_hidden_multiplier: usize,
    pub wrap: AttentionWrap,
    pub z_role: ZRole,
    pub phrase_pooling: Pooling,
    pub question_pooling: Pooling,
    /// Object feature dimension of the detector output.
    pub visual_dim: usize,
    pub aux_weight: f64,
    pub max_question_tokens: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            model_dim: m.model_dim,
            heads: m.heads,
            ffn_hidden_multiplier: m.ffn_hidden_multiplier,
            wrap: m.wrap,
            z_role: m.z_role,
            phrase_pooling: m.phrase_pooling,
            question_pooling: m.question_pooling,
            visual_dim: m.visual_dim,
            aux_weight: m.aux_weight,
            max_question_tokens: DEFAULT_MAX_QUESTION_TOKENS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub sources: Vec<KnowledgeSource>,
    pub fallback: FallbackScope,
    /// Score each question by its best single-source or fused decision.
    pub oracle_selector: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            sources: KnowledgeSource::ALL.to_vec(),
            fallback: FallbackScope::Vocabulary,
            oracle_selector: false,
        }
    }
}

/// Everything one pipeline run needs, read from a TOML file. Relative paths
/// resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub work_dir: PathBuf,
    pub stages: Vec<Stage>,
    /// Largest tolerated fraction of failed questions.
    pub max_failure_rate: f64,
    /// Number of base-scorer candidates per question.
    pub k: usize,
    pub data: DataConfig,
    pub retrieval: RetrievalConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub validation: ValidationConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 4,
            work_dir: "work".into(),
            stages: Stage::ALL.to_vec(),
            max_failure_rate: 0.1,
            k: DEFAULT_CANDIDATES,
            data: DataConfig::default(),
            retrieval: RetrievalConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            validation: ValidationConfig::default(),
            base_dir: PathBuf::new(),
        }
    }
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.work_dir).join(name)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.retrieval;
        positive("workers", self.workers)?;
        positive("k", self.k)?;
        positive("retrieval.k_queries", r.k_queries)?;
        positive("retrieval.m", r.m)?;
        positive("retrieval.sentences_per_article", r.sentences_per_article)?;
        positive("retrieval.match_encoder_dim", r.match_encoder_dim)?;
        positive("data.word_vector_dim", self.data.word_vector_dim)?;
        positive("model.max_question_tokens", self.model.max_question_tokens)?;
        unit_open("retrieval.link_threshold", r.link_threshold)?;
        unit_open("retrieval.recall_threshold", r.recall_threshold)?;
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::config("max_failure_rate must lie in [0, 1]"));
        }
        if self.stages.is_empty() {
            return Err(Error::config("no stages selected"));
        }
        if self.validation.sources.is_empty() {
            return Err(Error::config(
                "at least one knowledge source must be enabled",
            ));
        }
        let mut sorted = self.validation.sources.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.validation.sources.len() {
            return Err(Error::config("knowledge sources are listed more than once"));
        }
        self.train.validate()?;
        // Shape checks that do not depend on the data.
        self.model_config(1).validate()
    }

    /// Enabled sources in canonical order.
    pub fn sources(&self) -> Vec<KnowledgeSource> {
        KnowledgeSource::ALL
            .into_iter()
            .filter(|s| self.validation.sources.contains(s))
            .collect()
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            model_dim: m.model_dim,
            heads: m.heads,
            ffn_hidden_multiplier: m.ffn_hidden_multiplier,
            wrap: m.wrap,
            z_role: m.z_role,
            phrase_pooling: m.phrase_pooling,
            question_pooling: m.question_pooling,
            sources: self.sources(),
            text_dim: m.model_dim,
            visual_dim: m.visual_dim,
            vocab_size,
            aux_weight: m.aux_weight,
            seed: self.seed,
        }
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}
