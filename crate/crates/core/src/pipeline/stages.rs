use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{self, read_json, read_jsonl, write_json, write_jsonl};
use super::config::{Backend, DecontextualizerKind, RunConfig, Stage};
use super::dataset::{Dataset, QAInstance};
use super::evaluate::{evaluate, Evaluation};
use super::records::{
    Failure, KnowledgePool, PhraseLinks, QueryPlan, SourceDecision, SourceDecisionRecord,
};
use super::report::{build_report, render_markdown};
use crate::candidates::{top_k_candidates, AnswerVocabulary, BaseScorer, FixtureScorer};
use crate::embedding::{
    fixed_projection, HashMultimodalEncoder, KnowledgeSource, MultimodalEncoder, PhraseKnowledge,
    QueryFeature,
};
use crate::error::{check_dim, Error, Result};
use crate::model::{MavexModel, PreparedInstance, SourceKnowledge};
use crate::query::{
    extract_noun_phrases, generate_queries, link_phrase, LabelOverlapLinker, NounPhrase,
    ObjectsFile, RuleChunker,
};
use crate::retrieval::{
    build_textual_pool, decontextualize, match_pool_to_queries, qa_to_statement, retrieve_visual,
    CachedClient, ConceptNetClient, Decontextualizer, FixtureConceptNet, FixtureImages,
    FixtureWikipedia, KnowledgeClient, MatchedPool, PassThrough, PronounToTitle, RelationTemplates,
    ResponseCache, RuleConverter, TextSource, TextualPool, WikipediaClient,
};
use crate::text::{HashEncoder, WordVectorTable};
use crate::training::train;
use crate::validation::{answer_embedding, consistency_decision, vqa_soft_score, DecisionRecord};

/// What one stage produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    /// Questions the stage was asked to handle.
    pub attempted: usize,
    pub succeeded: usize,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSummary {
    pub outcomes: Vec<StageOutcome>,
    pub evaluation: Option<Evaluation>,
}

fn dataset_path(cfg: &RunConfig) -> PathBuf {
    cfg.resolve(&cfg.data.dataset)
}

fn dataset_root(cfg: &RunConfig) -> PathBuf {
    dataset_path(cfg)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn load_vocab(cfg: &RunConfig) -> Result<AnswerVocabulary> {
    AnswerVocabulary::load(&cfg.resolve(&cfg.data.vocabulary))
}

fn load_table(cfg: &RunConfig) -> Result<WordVectorTable> {
    match &cfg.data.word_vectors {
        Some(p) => WordVectorTable::load(&cfg.resolve(p), cfg.data.oov_policy),
        None => WordVectorTable::new(cfg.data.word_vector_dim, cfg.data.oov_policy),
    }
}

fn encoder(cfg: &RunConfig) -> HashMultimodalEncoder {
    HashMultimodalEncoder::new(cfg.model.model_dim, cfg.seed)
        .with_max_tokens(cfg.model.max_question_tokens)
}

fn load_objects(cfg: &RunConfig, inst: &QAInstance) -> Result<ObjectsFile> {
    ObjectsFile::load(&dataset_root(cfg).join(&inst.objects_file))
}

fn worker_pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {} workers: {e}", cfg.workers)))
}

/// Runs `f` over `items` on the configured workers, keeping input order.
/// Failed items are logged and reported instead of aborting the stage.
fn per_question<T, U, F>(
    cfg: &RunConfig,
    stage: Stage,
    items: &[T],
    id: impl Fn(&T) -> &str + Sync,
    f: F,
) -> Result<(Vec<U>, Vec<Failure>)>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync,
{
    let results: Vec<Result<U>> = worker_pool(cfg)?.install(|| items.par_iter().map(&f).collect());
    let mut ok = Vec::with_capacity(items.len());
    let mut failures = Vec::new();
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(u) => ok.push(u),
            Err(e) => {
                log::warn!("{} failed for question {}: {e}", stage.as_str(), id(item));
                failures.push(Failure {
                    question_id: id(item).to_string(),
                    stage: stage.as_str().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok((ok, failures))
}

fn failures_path(cfg: &RunConfig, stage: Stage) -> PathBuf {
    cfg.work_path(&format!("{}_failures.jsonl", stage.as_str()))
}

/// Errors when more than `max_failure_rate` of the ingested questions are
/// missing from this stage's output.
fn check_failures(cfg: &RunConfig, produced: usize) -> Result<()> {
    let total = read_jsonl::<QAInstance>(&cfg.work_path(artifacts::INSTANCES))?.len();
    check_failure_rate(total, produced, cfg.max_failure_rate)
}

pub fn check_failure_rate(total: usize, produced: usize, max_rate: f64) -> Result<()> {
    let failed = total.saturating_sub(produced);
    if failed as f64 > max_rate * total as f64 {
        return Err(Error::ExcessiveFailures { failed, total });
    }
    Ok(())
}

fn finish<U: Serialize>(
    cfg: &RunConfig,
    stage: Stage,
    artifact: &str,
    attempted: usize,
    ok: Vec<U>,
    failures: Vec<Failure>,
) -> Result<StageOutcome> {
    write_jsonl(&cfg.work_path(artifact), &ok)?;
    write_jsonl(&failures_path(cfg, stage), &failures)?;
    if stage != Stage::Ingest {
        check_failures(cfg, ok.len())?;
    }
    log::info!("{}: {} of {attempted} questions", stage.as_str(), ok.len());
    Ok(StageOutcome {
        stage,
        attempted,
        succeeded: ok.len(),
        failures,
    })
}

/// Validates the dataset and attaches the base scorer's top-k candidates.
pub fn ingest(cfg: &RunConfig) -> Result<StageOutcome> {
    let dataset = Dataset::load(&dataset_path(cfg))?;
    let vocab = load_vocab(cfg)?;
    if cfg.k > vocab.len() {
        return Err(Error::config(format!(
            "k = {} exceeds the vocabulary size {}",
            cfg.k,
            vocab.len()
        )));
    }
    let scorer = FixtureScorer::load(&cfg.resolve(&cfg.data.scores))?;
    let (ok, failures) = per_question(
        cfg,
        Stage::Ingest,
        &dataset.questions,
        |q| &q.question_id,
        |q| {
            let scores = scorer.score(&q.question_id, &vocab)?;
            Ok(QAInstance {
                candidate_scores: top_k_candidates(&scores, &vocab, cfg.k)?,
                ..q.clone()
            })
        },
    )?;
    let outcome = finish(
        cfg,
        Stage::Ingest,
        artifacts::INSTANCES,
        dataset.questions.len(),
        ok,
        failures,
    )?;
    check_failure_rate(
        dataset.questions.len(),
        outcome.succeeded,
        cfg.max_failure_rate,
    )?;
    Ok(outcome)
}

fn plan_question(
    cfg: &RunConfig,
    inst: &QAInstance,
    linker: &LabelOverlapLinker,
) -> Result<QueryPlan> {
    let objects = load_objects(cfg, inst)?;
    let answers: Vec<String> = inst
        .candidate_scores
        .iter()
        .map(|c| c.answer.clone())
        .collect();
    if answers.is_empty() {
        return Err(Error::data("question has no candidates"));
    }
    let phrases = extract_noun_phrases(&inst.question, &answers, &RuleChunker)?;
    let mut links = Vec::new();
    let mut queries = Vec::new();
    for phrase in phrases.all() {
        let approved = link_phrase(
            phrase,
            &objects.objects,
            linker,
            cfg.retrieval.link_threshold,
        )?;
        queries.extend(generate_queries(
            phrase,
            &approved,
            &objects.objects,
            cfg.retrieval.k_queries,
        )?);
        links.push(PhraseLinks {
            phrase_kind: phrase.kind,
            phrase_index: phrase.index,
            links: approved,
        });
    }
    let statements = answers
        .iter()
        .map(|a| qa_to_statement(&inst.question_id, &inst.question, a, &RuleConverter))
        .collect::<Result<Vec<_>>>()?;
    Ok(QueryPlan {
        question_id: inst.question_id.clone(),
        phrases,
        links,
        queries,
        statements,
    })
}

/// Noun phrases, object links, search queries and statements.
pub fn extract(cfg: &RunConfig) -> Result<StageOutcome> {
    let instances: Vec<QAInstance> = read_jsonl(&cfg.work_path(artifacts::INSTANCES))?;
    let linker = LabelOverlapLinker::new(Arc::new(load_table(cfg)?));
    let (ok, failures) = per_question(
        cfg,
        Stage::Extract,
        &instances,
        |q| &q.question_id,
        |inst| plan_question(cfg, inst, &linker),
    )?;
    finish(
        cfg,
        Stage::Extract,
        artifacts::QUERY_PLANS,
        instances.len(),
        ok,
        failures,
    )
}

/// Knowledge clients for the enabled text sources, behind the response cache.
pub fn text_clients(cfg: &RunConfig) -> Result<Vec<Box<dyn KnowledgeClient>>> {
    let r = &cfg.retrieval;
    let cache = Arc::new(ResponseCache::new(cfg.resolve(&r.cache_dir), r.offline));
    let backoff = Duration::from_millis(r.backoff_ms);
    let mut templates = RelationTemplates::default();
    templates.0.extend(r.relation_templates.clone());
    let mut out: Vec<Box<dyn KnowledgeClient>> = Vec::new();
    for source in cfg.sources() {
        let client: Box<dyn KnowledgeClient> = match (source, r.backend) {
            (KnowledgeSource::Wikipedia, Backend::Fixture) => Box::new(
                CachedClient::new(
                    FixtureWikipedia::load(&cfg.resolve(&r.wikipedia_fixture))?,
                    cache.clone(),
                )
                .with_retries(r.retries, backoff),
            ),
            (KnowledgeSource::Wikipedia, Backend::Http) => Box::new(
                CachedClient::new(
                    WikipediaClient::new(r.wikipedia_url.clone(), r.wikipedia_articles),
                    cache.clone(),
                )
                .with_retries(r.retries, backoff),
            ),
            (KnowledgeSource::Conceptnet, Backend::Fixture) => Box::new(
                CachedClient::new(
                    FixtureConceptNet::load(
                        &cfg.resolve(&r.conceptnet_fixture),
                        templates.clone(),
                    )?,
                    cache.clone(),
                )
                .with_retries(r.retries, backoff),
            ),
            (KnowledgeSource::Conceptnet, Backend::Http) => Box::new(
                CachedClient::new(
                    ConceptNetClient::new(
                        r.conceptnet_url.clone(),
                        r.conceptnet_limit,
                        templates.clone(),
                    ),
                    cache.clone(),
                )
                .with_retries(r.retries, backoff),
            ),
            (KnowledgeSource::Images, _) => continue,
        };
        out.push(client);
    }
    Ok(out)
}

fn decontextualizer(kind: DecontextualizerKind) -> Box<dyn Decontextualizer> {
    match kind {
        DecontextualizerKind::PassThrough => Box::new(PassThrough),
        DecontextualizerKind::PronounToTitle => Box::new(PronounToTitle),
    }
}

/// Textual pool, decontextualization, query matching and visual knowledge.
pub fn retrieve(cfg: &RunConfig) -> Result<StageOutcome> {
    let plans: Vec<QueryPlan> = read_jsonl(&cfg.work_path(artifacts::QUERY_PLANS))?;
    let instances: HashMap<String, QAInstance> =
        read_jsonl::<QAInstance>(&cfg.work_path(artifacts::INSTANCES))?
            .into_iter()
            .map(|q| (q.question_id.clone(), q))
            .collect();
    let r = &cfg.retrieval;
    let table = load_table(cfg)?;
    let clients = text_clients(cfg)?;
    let client_refs: Vec<&dyn KnowledgeClient> = clients.iter().map(|c| c.as_ref()).collect();
    let match_encoder = HashEncoder::new(r.match_encoder_dim, cfg.seed);
    let decon = decontextualizer(r.decontextualizer);
    let images = cfg
        .sources()
        .contains(&KnowledgeSource::Images)
        .then(|| FixtureImages::new(cfg.resolve(&r.images_dir)));

    let (ok, failures) = per_question(
        cfg,
        Stage::Retrieve,
        &plans,
        |p| &p.question_id,
        |plan| {
            let (pool, matched) = if client_refs.is_empty() || plan.queries.is_empty() {
                (TextualPool::default(), MatchedPool::default())
            } else {
                let mut pool = build_textual_pool(
                    &plan.queries,
                    &plan.statements,
                    &client_refs,
                    &match_encoder,
                    r.sentences_per_article,
                )?;
                for s in pool.sentences.iter_mut() {
                    if s.source == TextSource::Wikipedia {
                        *s = decontextualize(s, decon.as_ref())?;
                    }
                }
                let matched = match_pool_to_queries(
                    &pool.sentences,
                    &plan.queries,
                    &table,
                    r.m,
                    r.recall_threshold,
                )?;
                (pool, matched)
            };
            let visual = match &images {
                Some(client) => {
                    let inst = instances
                        .get(&plan.question_id)
                        .ok_or_else(|| Error::data("question missing from instances"))?;
                    let objects = load_objects(cfg, inst)?;
                    let question_side: Vec<(&NounPhrase, &[crate::query::Link])> = plan
                        .phrases
                        .question_side()
                        .map(|p| (p, plan.links_for(p.kind, p.index)))
                        .collect();
                    let answer_side: Vec<_> = plan
                        .phrases
                        .answer_phrases
                        .iter()
                        .zip(&plan.statements)
                        .collect();
                    retrieve_visual(
                        &question_side,
                        &objects.objects,
                        &answer_side,
                        client,
                        r.internal_objects,
                        r.external_images,
                    )
                }
                None => Vec::new(),
            };
            Ok(KnowledgePool {
                question_id: plan.question_id.clone(),
                pool,
                matched,
                visual,
            })
        },
    )?;
    finish(
        cfg,
        Stage::Retrieve,
        artifacts::KNOWLEDGE_POOLS,
        plans.len(),
        ok,
        failures,
    )
}

fn phrase_span(p: &NounPhrase) -> Option<std::ops::Range<usize>> {
    (p.kind != crate::query::PhraseKind::Answer).then(|| p.span.clone())
}

fn text_knowledge(
    phrase: &NounPhrase,
    plan: &QueryPlan,
    matched: &MatchedPool,
    source: TextSource,
    enc: &dyn MultimodalEncoder,
) -> Result<PhraseKnowledge> {
    let features = plan
        .queries_for(phrase.kind, phrase.index)
        .into_iter()
        .map(|q| {
            let items: Vec<Vec<f64>> = matched
                .sentences_for(&q.text, source)
                .iter()
                .map(|s| enc.encode_text(&s.text))
                .collect();
            QueryFeature::mean_of(q.rank, &items, enc.dimension())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhraseKnowledge {
        kind: phrase.kind,
        index: phrase.index,
        span: phrase_span(phrase),
        features,
    })
}

fn visual_knowledge(
    phrase: &NounPhrase,
    pool: &KnowledgePool,
    visual_dim: usize,
) -> Result<PhraseKnowledge> {
    let features = match pool.visual_for(phrase.kind, phrase.index) {
        Some(v) => v
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                check_dim(visual_dim, item.feature.len())?;
                Ok(QueryFeature {
                    rank: i + 1,
                    vector: item.feature.clone(),
                    empty: false,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(PhraseKnowledge {
        kind: phrase.kind,
        index: phrase.index,
        span: phrase_span(phrase),
        features,
    })
}

#[allow(clippy::too_many_arguments)]
fn prepare_question(
    cfg: &RunConfig,
    inst: &QAInstance,
    plan: &QueryPlan,
    pool: &KnowledgePool,
    vocab: &AnswerVocabulary,
    table: &WordVectorTable,
    enc: &HashMultimodalEncoder,
) -> Result<PreparedInstance> {
    let objects = load_objects(cfg, inst)?;
    for o in &objects.objects {
        check_dim(cfg.model.visual_dim, o.feature.len())?;
    }
    let encoder = enc.encode(&inst.question, &objects.objects)?;
    let d = enc.dimension();
    let mut sources = Vec::new();
    for source in cfg.sources() {
        let build = |p: &NounPhrase| match source.text_source() {
            Some(ts) => text_knowledge(p, plan, &pool.matched, ts, enc),
            None => visual_knowledge(p, pool, cfg.model.visual_dim),
        };
        sources.push(SourceKnowledge {
            source,
            target: build(&plan.phrases.target)?,
            question_phrases: plan
                .phrases
                .question_phrases
                .iter()
                .map(build)
                .collect::<Result<_>>()?,
            answers: plan
                .phrases
                .answer_phrases
                .iter()
                .map(build)
                .collect::<Result<_>>()?,
        });
    }
    let candidates: Vec<usize> = inst.candidate_scores.iter().map(|c| c.index).collect();
    let candidate_answers: Vec<String> = inst
        .candidate_scores
        .iter()
        .map(|c| c.answer.clone())
        .collect();
    let soft_scores = candidate_answers
        .iter()
        .map(|a| vqa_soft_score(a, &inst.annotations))
        .collect::<Result<Vec<_>>>()?;
    if plan.statements.len() != candidates.len() {
        return Err(Error::data("statement count differs from candidate count"));
    }
    let answer_inputs = plan
        .statements
        .iter()
        .zip(&candidate_answers)
        .map(|(st, a)| {
            let glove = fixed_projection(&table.phrase_vector(a), d, cfg.seed);
            answer_embedding(&enc.encode_text(&st.text), &glove)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedInstance {
        question_id: inst.question_id.clone(),
        encoder,
        candidates,
        candidate_answers,
        soft_scores,
        vocab_targets: vocab.soft_targets(&inst.annotations)?,
        answer_inputs,
        sources,
    })
}

fn by_id<T>(items: Vec<T>, id: impl Fn(&T) -> &str) -> HashMap<String, T> {
    items.into_iter().map(|t| (id(&t).to_string(), t)).collect()
}

/// Encoder outputs and per-query knowledge features for every question.
pub fn embed(cfg: &RunConfig) -> Result<StageOutcome> {
    let instances: Vec<QAInstance> = read_jsonl(&cfg.work_path(artifacts::INSTANCES))?;
    let plans = by_id(
        read_jsonl::<QueryPlan>(&cfg.work_path(artifacts::QUERY_PLANS))?,
        |p| &p.question_id,
    );
    let pools = by_id(
        read_jsonl::<KnowledgePool>(&cfg.work_path(artifacts::KNOWLEDGE_POOLS))?,
        |p| &p.question_id,
    );
    let todo: Vec<&QAInstance> = instances
        .iter()
        .filter(|q| plans.contains_key(&q.question_id) && pools.contains_key(&q.question_id))
        .collect();
    let vocab = load_vocab(cfg)?;
    let table = load_table(cfg)?;
    let enc = encoder(cfg);
    let (ok, failures) = per_question(
        cfg,
        Stage::Embed,
        &todo,
        |q| &q.question_id,
        |inst| {
            prepare_question(
                cfg,
                inst,
                &plans[&inst.question_id],
                &pools[&inst.question_id],
                &vocab,
                &table,
                &enc,
            )
        },
    )?;
    finish(
        cfg,
        Stage::Embed,
        artifacts::FEATURES,
        todo.len(),
        ok,
        failures,
    )
}

/// Prepared instances of `split` with their annotations, in instance order.
fn split_data(
    cfg: &RunConfig,
    split: Option<&str>,
) -> Result<(Vec<PreparedInstance>, Vec<Vec<String>>)> {
    let instances: Vec<QAInstance> = read_jsonl(&cfg.work_path(artifacts::INSTANCES))?;
    let mut features = by_id(
        read_jsonl::<PreparedInstance>(&cfg.work_path(artifacts::FEATURES))?,
        |p| &p.question_id,
    );
    let mut data = Vec::new();
    let mut annotations = Vec::new();
    for q in instances {
        if split.is_some() && q.split.as_deref() != split {
            continue;
        }
        if let Some(f) = features.remove(&q.question_id) {
            data.push(f);
            annotations.push(q.annotations);
        }
    }
    Ok((data, annotations))
}

/// Trains a fresh model on the training split and writes the checkpoint.
pub fn train_stage(cfg: &RunConfig) -> Result<StageOutcome> {
    let vocab = load_vocab(cfg)?;
    let (data, annotations) = split_data(cfg, cfg.data.train_split.as_deref())?;
    let mut model = MavexModel::new(cfg.model_config(vocab.len()))?;
    let mut report = train(&mut model, &data, &annotations, &vocab, &cfg.train_config())?;
    model.save(&cfg.work_path(artifacts::CHECKPOINT))?;
    report.checkpoint = Some(PathBuf::from(artifacts::CHECKPOINT));
    write_json(&cfg.work_path(artifacts::TRAIN_REPORT), &report)?;
    log::info!(
        "train: loss {:.4} -> {:.4} over {} steps",
        report.initial_loss,
        report.final_loss,
        report.steps
    );
    Ok(StageOutcome {
        stage: Stage::Train,
        attempted: data.len(),
        succeeded: data.len(),
        failures: Vec::new(),
    })
}

/// Fused and per-source decisions for the evaluation split.
pub fn validate(cfg: &RunConfig) -> Result<StageOutcome> {
    let vocab = load_vocab(cfg)?;
    let model = MavexModel::load(&cfg.work_path(artifacts::CHECKPOINT))?;
    if model.config.vocab_size != vocab.len() {
        return Err(Error::config(
            "checkpoint vocabulary size differs from the vocabulary file",
        ));
    }
    let (data, _) = split_data(cfg, cfg.data.eval_split.as_deref())?;
    let fallback = cfg.validation.fallback;
    let (ok, failures) = per_question(
        cfg,
        Stage::Validate,
        &data,
        |p| &p.question_id,
        |inst| {
            let out = model.predict(inst)?;
            let fused = consistency_decision(
                &inst.question_id,
                &out.p,
                &out.j,
                &inst.candidates,
                &vocab,
                fallback,
            )?;
            let sources = out
                .sources
                .iter()
                .enumerate()
                .map(|(k, &source)| {
                    let rec = consistency_decision(
                        &inst.question_id,
                        &out.p_sources[k],
                        &out.j_sources[k],
                        &inst.candidates,
                        &vocab,
                        fallback,
                    )?;
                    Ok(SourceDecision {
                        source,
                        rule_used: rec.rule_used,
                        final_answer: rec.final_answer,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((
                fused,
                SourceDecisionRecord {
                    question_id: inst.question_id.clone(),
                    sources,
                },
            ))
        },
    )?;
    let (decisions, source_decisions): (Vec<DecisionRecord>, Vec<SourceDecisionRecord>) =
        ok.into_iter().unzip();
    write_jsonl(
        &cfg.work_path(artifacts::SOURCE_DECISIONS),
        &source_decisions,
    )?;
    finish(
        cfg,
        Stage::Validate,
        artifacts::DECISIONS,
        data.len(),
        decisions,
        failures,
    )
}

/// Every dataset question of the evaluation split; questions that failed
/// ingestion stay in so they count against the score.
fn eval_questions(cfg: &RunConfig) -> Result<Vec<QAInstance>> {
    let split = cfg.data.eval_split.as_deref();
    let ingested: HashMap<String, QAInstance> =
        read_jsonl::<QAInstance>(&cfg.work_path(artifacts::INSTANCES))?
            .into_iter()
            .map(|q| (q.question_id.clone(), q))
            .collect();
    let dataset = Dataset::load(&dataset_path(cfg))?;
    Ok(dataset
        .split(split)
        .map(|q| {
            ingested
                .get(&q.question_id)
                .cloned()
                .unwrap_or_else(|| q.clone())
        })
        .collect())
}

pub fn evaluate_stage(cfg: &RunConfig) -> Result<Evaluation> {
    let records: Vec<DecisionRecord> = read_jsonl(&cfg.work_path(artifacts::DECISIONS))?;
    let source_records: Vec<SourceDecisionRecord> =
        read_jsonl(&cfg.work_path(artifacts::SOURCE_DECISIONS))?;
    let eval = evaluate(
        &records,
        &source_records,
        &eval_questions(cfg)?,
        cfg.validation.oracle_selector,
    )?;
    write_json(&cfg.work_path(artifacts::EVALUATION), &eval)?;
    log::info!(
        "evaluate: mean soft score {:.4} over {} questions",
        eval.mean_soft_score,
        eval.questions
    );
    Ok(eval)
}

pub fn report_stage(cfg: &RunConfig) -> Result<super::report::Report> {
    let eval: Evaluation = read_json(&cfg.work_path(artifacts::EVALUATION))?;
    let report = build_report(&eval, cfg);
    write_json(&cfg.work_path(artifacts::REPORT_JSON), &report)?;
    artifacts::write_atomic(
        &cfg.work_path(artifacts::REPORT_MD),
        render_markdown(&report).as_bytes(),
    )?;
    Ok(report)
}

/// Runs one stage against the artifacts in the work directory.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<StageOutcome> {
    let simple = |n: usize| StageOutcome {
        stage,
        attempted: n,
        succeeded: n,
        failures: Vec::new(),
    };
    match stage {
        Stage::Ingest => ingest(cfg),
        Stage::Extract => extract(cfg),
        Stage::Retrieve => retrieve(cfg),
        Stage::Embed => embed(cfg),
        Stage::Train => train_stage(cfg),
        Stage::Validate => validate(cfg),
        Stage::Evaluate => evaluate_stage(cfg).map(|e| simple(e.questions)),
        Stage::Report => report_stage(cfg).map(|r| simple(r.questions)),
    }
}

/// Runs the configured stages in pipeline order.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineSummary> {
    cfg.validate()?;
    let mut stages = cfg.stages.clone();
    stages.sort();
    stages.dedup();
    let mut outcomes = Vec::new();
    for stage in stages {
        outcomes.push(run_stage(cfg, stage)?);
    }
    let eval_path = cfg.work_path(artifacts::EVALUATION);
    let evaluation = if cfg.stages.contains(&Stage::Evaluate) {
        Some(read_json(&eval_path)?)
    } else {
        None
    };
    Ok(PipelineSummary {
        outcomes,
        evaluation,
    })
}
