use kvqa_core::candidates::{best_achievable, top_k_candidates, AnswerVocabulary};
use kvqa_core::embedding::{mhatt, MHAttParams};
use kvqa_core::nn::Linear;
use kvqa_core::query::{
    extract_noun_phrases, generate_queries, link_phrase, DetectedObject, Link, NounPhrase,
    ObjectLinker, PhraseKind, RuleChunker, SearchQuery,
};
use kvqa_core::retrieval::{match_pool_to_queries, RetrievedSentence, TextSource};
use kvqa_core::tensor::Tensor;
use kvqa_core::text::{hash_unit_vector, mean_recall, tokenize, words, OovPolicy, WordVectorTable};
use kvqa_core::validation::{
    consistency_decision, consistent_candidates, fuse_predictions, fuse_validation, mavex_loss,
    FallbackScope,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "what", "which", "how", "many", "is", "the", "a", "this", "man", "dog", "red", "big", "tree",
    "on", "of", "in", "eats", "riding", "wave", "color", "fruit", "does", "have", "city", "green",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..10).prop_map(|w| w.join(" "))
}

fn table() -> WordVectorTable {
    let mut t = WordVectorTable::new(6, OovPolicy::HashFallback).unwrap();
    for (i, w) in WORDS.iter().enumerate().take(12) {
        t.insert(w, hash_unit_vector(w, 6, i as u64)).unwrap();
    }
    t
}

fn obj(id: u32, label: &str, attrs: Vec<String>) -> DetectedObject {
    DetectedObject {
        object_id: id,
        label: label.into(),
        attributes: attrs,
        r#box: [0.0, 0.0, 1.0, 1.0],
        feature: vec![0.0; 2],
    }
}

struct Fixed(Vec<f64>);

impl ObjectLinker for Fixed {
    fn score(&self, _: &NounPhrase, _: &[DetectedObject]) -> kvqa_core::Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

fn params(d: usize, heads: usize, seed: u64, identity_output: bool) -> MHAttParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MHAttParams::new("m", d, d, d, d, heads, &mut rng).unwrap();
    if identity_output {
        p.output = Linear::from_parts("o", Tensor::identity(d), Tensor::zeros(1, d)).unwrap();
    }
    p
}

fn rows(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verbatim_query_recall_is_one(s in sentence()) {
        let t = table();
        let toks = tokenize(&s);
        let r = mean_recall(&toks, &toks, &t).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-12);
        let mut doubled = toks.clone();
        doubled.extend(toks.iter().cloned());
        prop_assert_eq!(mean_recall(&toks, &doubled, &t).unwrap(), r);
    }

    #[test]
    fn phrase_extraction_is_deterministic(q in sentence(), a in sentence()) {
        let x = extract_noun_phrases(&q, &[a.clone()], &RuleChunker).unwrap();
        let y = extract_noun_phrases(&q, &[a], &RuleChunker).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn queries_rank_within_k_and_end_with_head(q in sentence(), attrs in prop::collection::vec(sentence(), 0..4), k in 1usize..5) {
        let phrases = extract_noun_phrases(&q, &["x".to_string()], &RuleChunker).unwrap();
        let objects = vec![obj(1, "man", attrs.clone()), obj(2, "dog", attrs.into_iter().rev().collect())];
        let links = [Link { object_id: 2, score: 0.9 }, Link { object_id: 1, score: 0.7 }];
        for p in phrases.all() {
            let qs = generate_queries(p, &links, &objects, k).unwrap();
            prop_assert!(qs.len() <= k);
            for (i, sq) in qs.iter().enumerate() {
                prop_assert_eq!(sq.rank, i + 1);
                let w = words(&sq.text);
                prop_assert_eq!(w.last().unwrap(), &p.head);
            }
        }
    }

    #[test]
    fn links_above_threshold_sorted(scores in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let phrase = extract_noun_phrases("what is the man", &[], &RuleChunker).unwrap().question_phrases[0].clone();
        let objects: Vec<_> = (0..scores.len()).map(|i| obj(i as u32, "man", vec![])).collect();
        let links = link_phrase(&phrase, &objects, &Fixed(scores), 0.5).unwrap();
        prop_assert!(links.iter().all(|l| l.score > 0.5));
        prop_assert!(links.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].object_id < w[1].object_id)));
    }

    #[test]
    fn matched_sentences_satisfy_threshold_and_cap(
        pool in prop::collection::vec((sentence(), 0.0f64..1.0, any::<bool>()), 1..15),
        queries in prop::collection::vec(sentence(), 1..5),
        m in 1usize..4,
    ) {
        let t = table();
        let pool: Vec<RetrievedSentence> = pool
            .into_iter()
            .map(|(text, score, wiki)| RetrievedSentence {
                text,
                source: if wiki { TextSource::Wikipedia } else { TextSource::Conceptnet },
                origin_query: SearchQuery { text: "x".into(), phrase_kind: PhraseKind::Question, phrase_index: 1, rank: 1 },
                article_id: "a".into(),
                article_title: "A".into(),
                context: String::new(),
                match_score: score,
                matched_queries: vec![],
            })
            .collect();
        let queries: Vec<SearchQuery> = queries
            .into_iter()
            .map(|text| SearchQuery { text, phrase_kind: PhraseKind::Question, phrase_index: 1, rank: 1 })
            .collect();
        let out = match_pool_to_queries(&pool, &queries, &t, m, 0.6).unwrap();
        for a in &out.assignments {
            for source in [TextSource::Wikipedia, TextSource::Conceptnet] {
                let list = out.sentences_for(&a.query, source);
                prop_assert!(list.len() <= m);
                for s in list {
                    prop_assert!(s.matched_queries.len() >= 2);
                    prop_assert!(mean_recall(&tokenize(&a.query), &tokenize(&s.text), &t).unwrap() > 0.6);
                }
            }
        }
    }

    #[test]
    fn coverage_monotone_in_k(scores in prop::collection::vec(0.0f64..1.0, 12), ann in prop::collection::vec(0usize..12, 5)) {
        let vocab = AnswerVocabulary::new((0..12).map(|i| format!("a{i}")).collect()).unwrap();
        let ann: Vec<String> = ann.iter().map(|i| format!("a{i}")).collect();
        let mut prev = 0.0;
        for k in 1..=12 {
            let best = best_achievable(&top_k_candidates(&scores, &vocab, k).unwrap(), &ann).unwrap();
            prop_assert!(best >= prev);
            prev = best;
        }
        // with every answer a candidate the best is set by the most repeated annotation
        let most = (0..12).map(|i| ann.iter().filter(|a| **a == format!("a{i}")).count()).max().unwrap();
        prop_assert_eq!(prev, if most >= 2 { 1.0 } else { 0.6 });
    }

    #[test]
    fn attention_rows_sum_to_one_and_finite(seed in 0u64..1000, q in prop::collection::vec(-50.0f64..50.0, 8), kv in rows(5, 8)) {
        let p = params(8, 4, seed, false);
        let out = mhatt(&q, &kv, &kv, &p).unwrap();
        for w in &out.weights {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        prop_assert!(out.output.iter().chain(&out.mixture).all(|v| v.is_finite()));
    }

    #[test]
    fn attention_permutation_invariant(seed in 0u64..1000, q in prop::collection::vec(-3.0f64..3.0, 4), keys in rows(6, 4), values in rows(6, 4), shift in 1usize..6) {
        let p = params(4, 2, seed, false);
        let out = mhatt(&q, &keys, &values, &p).unwrap();
        let (mut k2, mut v2) = (keys.clone(), values.clone());
        k2.rotate_left(shift);
        v2.rotate_left(shift);
        prop_assert_eq!(mhatt(&q, &k2, &v2, &p).unwrap().output, out.output);
    }

    #[test]
    fn mixture_linear_in_values(seed in 0u64..1000, q in prop::collection::vec(-3.0f64..3.0, 4), keys in rows(3, 4), values in rows(3, 4), c in 0.1f64..4.0) {
        let mut p = params(4, 2, seed, true);
        // bias-free value projection so scaling the input scales the projected values
        p.value.bias.value = Tensor::zeros(1, 4);
        let base = mhatt(&q, &keys, &values, &p).unwrap();
        let scaled: Vec<Vec<f64>> = values.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let out = mhatt(&q, &keys, &scaled, &p).unwrap();
        for (a, b) in out.mixture.iter().zip(&base.mixture) {
            prop_assert!((a - c * b).abs() < 1e-9 * (1.0 + b.abs() * c));
        }
        prop_assert_eq!(out.mixture, out.output);
    }

    #[test]
    fn fusion_dominates_every_source(preds in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 1..4)) {
        let fused = fuse_predictions(&preds).unwrap();
        for p in &preds {
            prop_assert!(fused.iter().zip(p).all(|(f, v)| f >= v));
        }
        let mats: Vec<Vec<Vec<f64>>> = preds.iter().map(|p| vec![p[..2].to_vec(), p[2..4].to_vec()]).collect();
        let j = fuse_validation(&mats).unwrap();
        for m in &mats {
            for a in 0..2 {
                for b in 0..2 {
                    prop_assert!(j[a][b] >= m[a][b]);
                }
            }
        }
    }

    #[test]
    fn decision_invariants(p in prop::collection::vec(0.01f64..1.0, 6), j in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 3), c in 0.01f64..=1.0) {
        let vocab = AnswerVocabulary::new((0..6).map(|i| format!("a{i}")).collect()).unwrap();
        let cands = [4, 0, 2];
        let scaled: Vec<Vec<f64>> = j.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        prop_assert_eq!(consistent_candidates(&j), consistent_candidates(&scaled));
        for fallback in [FallbackScope::Vocabulary, FallbackScope::Candidates] {
            let rec = consistency_decision("q", &p, &j, &cands, &vocab, fallback).unwrap();
            prop_assert!(vocab.position(&rec.final_answer).is_some());
            if fallback == FallbackScope::Candidates {
                prop_assert!(cands.iter().any(|&i| vocab.answers()[i] == rec.final_answer));
            }
        }
        // a single candidate holding the top prediction is always chosen
        let top = (0..6).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        let rec = consistency_decision("q", &p, &[vec![j[0][0]]], &[top], &vocab, FallbackScope::Vocabulary).unwrap();
        prop_assert_eq!(&rec.final_answer, &vocab.answers()[top]);
    }

    #[test]
    fn loss_is_non_negative(j in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 3), soft in prop::collection::vec(prop::sample::select(vec![0.0, 0.6, 1.0]), 3)) {
        prop_assert!(mavex_loss(&j, &soft).unwrap() >= 0.0);
    }
}

#[test]
fn loss_vanishes_only_at_a_perfect_fit() {
    let soft = [1.0, 0.0];
    let perfect = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
    let near = vec![vec![0.99, 0.01], vec![0.0, 0.0]];
    assert!(mavex_loss(&perfect, &soft).unwrap() < 1e-5);
    assert!(mavex_loss(&near, &soft).unwrap() > 1e-3);
}

#[test]
fn hash_vectors_are_pinned() {
    // recorded once; platform or refactor drift shows up here
    assert_eq!(
        format!("{:.12?}", hash_unit_vector("dog", 4, 0)),
        "[-0.013532237063, -0.422641811136, -0.889147100599, -0.174952026384]"
    );
    let v = hash_unit_vector("dog", 64, 7);
    assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
}
