#![allow(dead_code)]

use kvqa_core::embedding::{EncoderOutput, KnowledgeSource, PhraseKnowledge, QueryFeature};
use kvqa_core::model::{ModelConfig, PreparedInstance, SourceKnowledge};
use kvqa_core::query::PhraseKind;
use kvqa_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_config(
    d: usize,
    heads: usize,
    vocab: usize,
    sources: &[KnowledgeSource],
) -> ModelConfig {
    ModelConfig {
        model_dim: d,
        heads,
        text_dim: d,
        visual_dim: d + 2,
        vocab_size: vocab,
        sources: sources.to_vec(),
        seed: 11,
        ..ModelConfig::default()
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn phrase(
    rng: &mut ChaCha8Rng,
    kind: PhraseKind,
    index: usize,
    span: Option<std::ops::Range<usize>>,
    dk: usize,
    queries: usize,
) -> PhraseKnowledge {
    PhraseKnowledge {
        kind,
        index,
        span,
        features: (0..queries)
            .map(|r| QueryFeature {
                rank: r + 1,
                vector: rand_vec(rng, dk),
                empty: false,
            })
            .collect(),
    }
}

/// Random instance whose shapes match `cfg`.
pub fn synthetic_instance(cfg: &ModelConfig, candidates: usize, seed: u64) -> PreparedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.model_dim;
    let tokens = 6;
    let token_rows: Vec<Vec<f64>> = (0..tokens).map(|_| rand_vec(&mut rng, d)).collect();
    let encoder = EncoderOutput {
        token_features: Tensor::from_rows(&token_rows).unwrap(),
        visual_features: Tensor::from_rows(&[rand_vec(&mut rng, d)]).unwrap(),
        joint: rand_vec(&mut rng, d),
    };
    let cand: Vec<usize> = (0..candidates)
        .map(|i| (i * 2 + 1) % cfg.vocab_size)
        .collect();
    let soft: Vec<f64> = (0..candidates)
        .map(|i| if i == 0 { 1.0 } else { 0.0 })
        .collect();
    let mut vocab_targets = vec![0.0; cfg.vocab_size];
    vocab_targets[cand[0]] = 1.0;
    let sources = cfg
        .sources
        .iter()
        .map(|&s| {
            let dk = cfg.feature_dim(s);
            SourceKnowledge {
                source: s,
                target: phrase(&mut rng, PhraseKind::Target, 0, Some(0..2), dk, 2),
                question_phrases: vec![
                    phrase(&mut rng, PhraseKind::Question, 1, Some(2..4), dk, 3),
                    phrase(&mut rng, PhraseKind::Question, 2, Some(5..6), dk, 1),
                ],
                answers: (0..candidates)
                    .map(|_| phrase(&mut rng, PhraseKind::Answer, 0, None, dk, 2))
                    .collect(),
            }
        })
        .collect();
    PreparedInstance {
        question_id: format!("syn{seed}"),
        encoder,
        candidates: cand.clone(),
        candidate_answers: cand.iter().map(|i| format!("a{i}")).collect(),
        soft_scores: soft,
        vocab_targets,
        answer_inputs: (0..candidates).map(|_| rand_vec(&mut rng, d)).collect(),
        sources,
    }
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

/// The mini fixture config with work and cache directories moved under `root`.
pub fn fixture_config(root: &std::path::Path) -> kvqa_core::pipeline::RunConfig {
    let mut cfg = kvqa_core::pipeline::RunConfig::load(&fixture_dir().join("config.toml")).unwrap();
    cfg.work_dir = root.join("work");
    cfg.retrieval.cache_dir = root.join("cache");
    cfg
}

pub fn copy_dir(from: &std::path::Path, to: &std::path::Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}
