//! Statements, knowledge sources, sentence pools and query matching.

pub mod cache;
pub mod matching;
pub mod pool;
pub mod sources;
pub mod statement;
pub mod visual;

pub use cache::{sha256_hex, ResponseCache};
pub use matching::{
    match_pool_to_queries, MatchedPool, QueryAssignment, DEFAULT_RECALL_THRESHOLD,
    DEFAULT_SENTENCES_PER_QUERY,
};
pub use pool::{
    build_textual_pool, decontextualize, Decontextualizer, PassThrough, PoolSelection,
    PronounToTitle, RetrievedSentence, TextualPool, DEFAULT_SENTENCES_PER_ARTICLE,
};
pub use sources::{
    split_sentences, Article, CachedClient, ConceptEdge, ConceptNetClient, FixtureConceptNet,
    FixtureImages, FixtureWikipedia, ImageClient, ImageResult, KnowledgeClient, RelationTemplates,
    TextSource, WikipediaClient,
};
pub use statement::{qa_to_statement, RuleConverter, Statement, StatementConverter};
pub use visual::{
    retrieve_visual, PhraseVisual, VisualKind, VisualKnowledgeItem, DEFAULT_EXTERNAL_IMAGES,
    DEFAULT_INTERNAL_OBJECTS,
};
