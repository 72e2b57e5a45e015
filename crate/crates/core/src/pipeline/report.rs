use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::evaluate::Evaluation;
use crate::embedding::KnowledgeSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub sources: Vec<KnowledgeSource>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub seed: u64,
    pub k: usize,
    pub k_queries: usize,
    pub m: usize,
    pub link_threshold: f64,
    pub recall_threshold: f64,
    pub sentences_per_article: usize,
    pub oracle_selector: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub questions: usize,
    pub missing: usize,
    pub mean_soft_score: f64,
    pub candidate_upper_bound: f64,
    pub rows: Vec<ReportRow>,
    pub settings: ReportSettings,
}

pub fn source_label(source: KnowledgeSource) -> &'static str {
    match source {
        KnowledgeSource::Wikipedia => "Wikipedia",
        KnowledgeSource::Conceptnet => "ConceptNet",
        KnowledgeSource::Images => "Images",
    }
}

/// One row for the base scorer, one per enabled source, the fused
/// combination, and the oracle selection when several sources are enabled.
pub fn build_report(eval: &Evaluation, cfg: &RunConfig) -> Report {
    let sources = cfg.sources();
    let mut rows = vec![ReportRow {
        label: "Base scorer (top-1)".into(),
        sources: Vec::new(),
        score: eval.base_score,
    }];
    for &s in &sources {
        rows.push(ReportRow {
            label: source_label(s).into(),
            sources: vec![s],
            score: eval.per_source.get(s.as_str()).copied().unwrap_or(0.0),
        });
    }
    if sources.len() > 1 {
        rows.push(ReportRow {
            label: sources
                .iter()
                .map(|&s| source_label(s))
                .collect::<Vec<_>>()
                .join(" + "),
            sources: sources.clone(),
            score: eval.fused_score,
        });
        rows.push(ReportRow {
            label: "Oracle".into(),
            sources: sources.clone(),
            score: eval.oracle_score,
        });
    }
    let r = &cfg.retrieval;
    Report {
        questions: eval.questions,
        missing: eval.missing.len(),
        mean_soft_score: eval.mean_soft_score,
        candidate_upper_bound: eval.candidate_upper_bound,
        rows,
        settings: ReportSettings {
            seed: cfg.seed,
            k: cfg.k,
            k_queries: r.k_queries,
            m: r.m,
            link_threshold: r.link_threshold,
            recall_threshold: r.recall_threshold,
            sentences_per_article: r.sentences_per_article,
            oracle_selector: cfg.validation.oracle_selector,
        },
    }
}

pub fn render_markdown(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Answer validation report\n");
    let _ = writeln!(
        out,
        "{} questions ({} missing). Mean soft score: {:.2}. Candidate upper bound: {:.2}.\n",
        report.questions,
        report.missing,
        100.0 * report.mean_soft_score,
        100.0 * report.candidate_upper_bound
    );
    let _ = writeln!(out, "| Knowledge | Soft score |");
    let _ = writeln!(out, "|---|---:|");
    for row in &report.rows {
        let _ = writeln!(out, "| {} | {:.2} |", row.label, 100.0 * row.score);
    }
    let s = &report.settings;
    let _ = writeln!(
        out,
        "\nk = {}, queries per phrase = {}, sentences per query = {}, link threshold = {}, recall threshold = {}, seed = {}.",
        s.k, s.k_queries, s.m, s.link_threshold, s.recall_threshold, s.seed
    );
    out
}
