mod common;

use common::{small_config, synthetic_instance};
use kvqa_core::embedding::{AttentionWrap, KnowledgeSource};
use kvqa_core::model::{MavexModel, Pooling, ZRole};
use kvqa_core::nn::Module;
use kvqa_core::training::grad_check;

#[test]
fn forward_shapes_and_ranges() {
    let cfg = small_config(8, 2, 7, &KnowledgeSource::ALL);
    let model = MavexModel::new(cfg.clone()).unwrap();
    let inst = synthetic_instance(&cfg, 3, 1);
    let out = model.predict(&inst).unwrap();
    assert_eq!(out.p.len(), 7);
    assert_eq!(out.p_sources.len(), 3);
    assert_eq!(out.j.len(), 3);
    assert!(out.j.iter().all(|r| r.len() == 3));
    assert!(out
        .p
        .iter()
        .chain(out.j.iter().flatten())
        .all(|v| *v > 0.0 && *v < 1.0));
    for (k, ps) in out.p_sources.iter().enumerate() {
        assert!(ps.iter().zip(&out.p).all(|(a, b)| a <= b));
        for (a, row) in out.j_sources[k].iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                assert!(*v <= out.j[a][b]);
            }
        }
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for (z_role, wrap, pooling) in [
        (ZRole::Query, AttentionWrap::None, Pooling::Attention),
        (
            ZRole::Keys,
            AttentionWrap::ResidualLayerNorm,
            Pooling::Attention,
        ),
        (ZRole::Query, AttentionWrap::Residual, Pooling::Mean),
    ] {
        let mut cfg = small_config(8, 2, 5, &KnowledgeSource::ALL);
        cfg.visual_dim = 8;
        cfg.z_role = z_role;
        cfg.wrap = wrap;
        cfg.phrase_pooling = pooling;
        cfg.question_pooling = pooling;
        let mut model = MavexModel::new(cfg.clone()).unwrap();
        let batch = vec![
            synthetic_instance(&cfg, 2, 3),
            synthetic_instance(&cfg, 2, 4),
        ];
        let report = grad_check(&mut model, &batch, 1e-5).unwrap();
        assert!(
            report.max_relative_error < 1e-4,
            "{z_role:?} {wrap:?}: {:?}",
            report
        );
        assert_eq!(report.per_tensor.len(), model.params().len());
    }
}

#[test]
fn checkpoint_round_trip_and_shape_validation() {
    let cfg = small_config(
        8,
        2,
        5,
        &[KnowledgeSource::Wikipedia, KnowledgeSource::Images],
    );
    let model = MavexModel::new(cfg.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    model.save(&path).unwrap();
    let loaded = MavexModel::load(&path).unwrap();
    assert_eq!(loaded, model);

    let mut ckpt = model.to_checkpoint();
    ckpt.tensors[0].dims = [1, ckpt.tensors[0].data.len()];
    assert!(MavexModel::from_checkpoint(&ckpt).is_err());
    let mut ckpt = model.to_checkpoint();
    ckpt.tensors.pop();
    assert!(MavexModel::from_checkpoint(&ckpt).is_err());
    let mut ckpt = model.to_checkpoint();
    ckpt.format_version = 99;
    assert!(MavexModel::from_checkpoint(&ckpt).is_err());
}

#[test]
fn mean_pooling_ablation_changes_outputs() {
    let cfg = small_config(8, 2, 5, &[KnowledgeSource::Wikipedia]);
    let inst = synthetic_instance(&cfg, 2, 9);
    let base = MavexModel::new(cfg.clone())
        .unwrap()
        .predict(&inst)
        .unwrap();
    let mut phrase = cfg.clone();
    phrase.phrase_pooling = Pooling::Mean;
    let mut question = cfg.clone();
    question.question_pooling = Pooling::Mean;
    for c in [phrase, question] {
        let out = MavexModel::new(c).unwrap().predict(&inst).unwrap();
        assert_ne!(out.p, base.p);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(8, 3, 5, &KnowledgeSource::ALL);
    assert!(MavexModel::new(cfg.clone()).is_err());
    cfg.heads = 2;
    cfg.sources.clear();
    assert!(MavexModel::new(cfg.clone()).is_err());
    let mut keys = small_config(8, 2, 5, &[KnowledgeSource::Images]);
    keys.z_role = ZRole::Keys;
    keys.wrap = AttentionWrap::Residual;
    assert!(MavexModel::new(keys).is_err());
}
