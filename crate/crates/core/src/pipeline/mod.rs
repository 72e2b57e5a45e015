//! Stage orchestration: dataset ingestion, per-question stage execution
//! with persisted JSONL artifacts, evaluation and reports.

pub mod artifacts;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod records;
pub mod report;
pub mod stages;

pub use config::{Backend, DecontextualizerKind, RunConfig, Stage};
pub use dataset::{convert_okvqa, Dataset, DatasetFile, QAInstance};
pub use evaluate::{evaluate, Evaluation, QuestionScore};
pub use records::{
    Failure, KnowledgePool, PhraseLinks, QueryPlan, SourceDecision, SourceDecisionRecord,
};
pub use report::{build_report, render_markdown, Report, ReportRow};
pub use stages::{run_pipeline, run_stage, PipelineSummary, StageOutcome};
