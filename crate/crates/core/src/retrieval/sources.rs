use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cache::{sha256_hex, ResponseCache};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    Wikipedia,
    Conceptnet,
}

impl TextSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TextSource::Wikipedia => "wikipedia",
            TextSource::Conceptnet => "conceptnet",
        }
    }
}

impl fmt::Display for TextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One retrieved document, already split into sentences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub sentences: Vec<String>,
}

/// A textual knowledge source queried with short search strings.
pub trait KnowledgeClient: Send + Sync {
    fn source(&self) -> TextSource;

    fn fetch(&self, query: &str) -> Result<Vec<Article>>;
}

/// Wraps a client with the on-disk cache and retries with exponential backoff.
pub struct CachedClient<C> {
    inner: C,
    cache: Arc<ResponseCache>,
    retries: u32,
    backoff: Duration,
}

impl<C: KnowledgeClient> CachedClient<C> {
    pub fn new(inner: C, cache: Arc<ResponseCache>) -> Self {
        Self {
            inner,
            cache,
            retries: 2,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }
}

impl<C: KnowledgeClient> KnowledgeClient for CachedClient<C> {
    fn source(&self) -> TextSource {
        self.inner.source()
    }

    fn fetch(&self, query: &str) -> Result<Vec<Article>> {
        self.cache.get_or_fetch(self.source().as_str(), query, || {
            with_retries(self.retries, self.backoff, || self.inner.fetch(query))
        })
    }
}

/// Runs `f` up to `retries + 1` times, sleeping `backoff * 2^i` between attempts.
pub fn with_retries<T>(
    retries: u32,
    backoff: Duration,
    mut f: impl FnMut() -> Result<T>,
) -> Result<T> {
    let mut attempt = 0;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if attempt < retries => {
                log::warn!("attempt {} failed: {e}", attempt + 1);
                std::thread::sleep(backoff * 2u32.pow(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Splits running text into sentences at `.`, `!`, `?` followed by
/// whitespace, and at line breaks.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        for (i, &(pos, c)) in chars.iter().enumerate() {
            let at_boundary = matches!(c, '.' | '!' | '?')
                && chars.get(i + 1).is_none_or(|&(_, n)| n.is_whitespace());
            if at_boundary {
                let end = pos + c.len_utf8();
                let s = line[start..end].trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                start = end;
            }
        }
        let rest = line[start..].trim();
        if !rest.is_empty() {
            out.push(rest.to_string());
        }
    }
    out
}

fn client_error(source: TextSource, query: &str, message: impl fmt::Display) -> Error {
    Error::Client {
        source_name: source.as_str().to_string(),
        query: query.to_string(),
        message: message.to_string(),
    }
}

fn http_client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(20))
        .user_agent(concat!("kvqa/", env!("CARGO_PKG_VERSION")))
        .build()
        .expect("static client configuration is valid")
}

/// MediaWiki search + plain-text extracts.
pub struct WikipediaClient {
    base_url: String,
    max_articles: usize,
    http: reqwest::blocking::Client,
}

impl WikipediaClient {
    pub const DEFAULT_BASE_URL: &'static str = "https://en.wikipedia.org/w/api.php";

    pub fn new(base_url: impl Into<String>, max_articles: usize) -> Self {
        Self {
            base_url: base_url.into(),
            max_articles,
            http: http_client(),
        }
    }

    fn get_json(&self, query: &str, params: &[(&str, &str)]) -> Result<serde_json::Value> {
        let resp = self
            .http
            .get(&self.base_url)
            .query(params)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| client_error(TextSource::Wikipedia, query, e))?;
        resp.json()
            .map_err(|e| client_error(TextSource::Wikipedia, query, e))
    }
}

impl KnowledgeClient for WikipediaClient {
    fn source(&self) -> TextSource {
        TextSource::Wikipedia
    }

    fn fetch(&self, query: &str) -> Result<Vec<Article>> {
        let limit = self.max_articles.to_string();
        let search = self.get_json(
            query,
            &[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", query),
                ("srlimit", &limit),
                ("format", "json"),
            ],
        )?;
        let hits = search["query"]["search"]
            .as_array()
            .ok_or_else(|| client_error(TextSource::Wikipedia, query, "missing query.search"))?;
        let mut articles = Vec::new();
        for hit in hits.iter().take(self.max_articles) {
            let (Some(pageid), Some(title)) = (hit["pageid"].as_u64(), hit["title"].as_str())
            else {
                continue;
            };
            let id = pageid.to_string();
            let page = self.get_json(
                query,
                &[
                    ("action", "query"),
                    ("prop", "extracts"),
                    ("explaintext", "1"),
                    ("pageids", &id),
                    ("format", "json"),
                ],
            )?;
            let extract = page["query"]["pages"][&id]["extract"]
                .as_str()
                .unwrap_or("");
            articles.push(Article {
                id,
                title: title.to_string(),
                sentences: split_sentences(extract),
            });
        }
        Ok(articles)
    }
}

/// A ConceptNet assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptEdge {
    pub start: String,
    pub rel: String,
    pub end: String,
    #[serde(default)]
    pub weight: f64,
}

/// Relation name to sentence template with `{start}` and `{end}` slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationTemplates(pub BTreeMap<String, String>);

impl Default for RelationTemplates {
    fn default() -> Self {
        let pairs = [
            ("IsA", "{start} is a {end}"),
            ("UsedFor", "{start} is used for {end}"),
            ("PartOf", "{start} is part of {end}"),
            ("HasA", "{start} has {end}"),
            ("CapableOf", "{start} can {end}"),
            ("AtLocation", "{start} is found at {end}"),
            ("RelatedTo", "{start} is related to {end}"),
            ("Desires", "{start} wants {end}"),
            ("MadeOf", "{start} is made of {end}"),
            ("HasProperty", "{start} is {end}"),
            ("Causes", "{start} causes {end}"),
            ("Synonym", "{start} means {end}"),
            ("ReceivesAction", "{start} can be {end}"),
            ("CreatedBy", "{start} is created by {end}"),
            ("HasContext", "{start} is used in the context of {end}"),
            ("LocatedNear", "{start} is near {end}"),
            ("DefinedAs", "{start} is defined as {end}"),
        ];
        Self(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

/// "HasFirstSubevent" -> "has first subevent".
fn split_camel(rel: &str) -> String {
    let mut out = String::new();
    for (i, c) in rel.chars().enumerate() {
        if c.is_uppercase() && i > 0 {
            out.push(' ');
        }
        out.extend(c.to_lowercase());
    }
    out
}

impl RelationTemplates {
    pub fn render(&self, edge: &ConceptEdge) -> String {
        let rel = edge.rel.trim_start_matches("/r/");
        match self.0.get(rel) {
            Some(t) => t
                .replace("{start}", &edge.start)
                .replace("{end}", &edge.end),
            None => format!("{} {} {}", edge.start, split_camel(rel), edge.end),
        }
    }

    fn article(&self, query: &str, edges: &[ConceptEdge]) -> Vec<Article> {
        if edges.is_empty() {
            return Vec::new();
        }
        vec![Article {
            id: format!("/c/en/{}", concept_term(query)),
            title: query.to_string(),
            sentences: edges.iter().map(|e| self.render(e)).collect(),
        }]
    }
}

fn concept_term(query: &str) -> String {
    query
        .trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

/// ConceptNet `query` endpoint; all edges touching the query's node become
/// one article of rendered sentences.
pub struct ConceptNetClient {
    base_url: String,
    limit: usize,
    templates: RelationTemplates,
    http: reqwest::blocking::Client,
}

impl ConceptNetClient {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.conceptnet.io";

    pub fn new(base_url: impl Into<String>, limit: usize, templates: RelationTemplates) -> Self {
        Self {
            base_url: base_url.into(),
            limit,
            templates,
            http: http_client(),
        }
    }
}

impl KnowledgeClient for ConceptNetClient {
    fn source(&self) -> TextSource {
        TextSource::Conceptnet
    }

    fn fetch(&self, query: &str) -> Result<Vec<Article>> {
        let node = format!("/c/en/{}", concept_term(query));
        let limit = self.limit.to_string();
        let url = format!("{}/query", self.base_url.trim_end_matches('/'));
        let body: serde_json::Value = self
            .http
            .get(url)
            .query(&[
                ("node", node.as_str()),
                ("other", "/c/en"),
                ("limit", &limit),
            ])
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| client_error(TextSource::Conceptnet, query, e))?;
        let edges: Vec<ConceptEdge> = body["edges"]
            .as_array()
            .ok_or_else(|| client_error(TextSource::Conceptnet, query, "missing edges"))?
            .iter()
            .filter_map(|e| {
                Some(ConceptEdge {
                    start: e["start"]["label"].as_str()?.to_string(),
                    rel: e["rel"]["label"].as_str()?.to_string(),
                    end: e["end"]["label"].as_str()?.to_string(),
                    weight: e["weight"].as_f64().unwrap_or(1.0),
                })
            })
            .collect();
        Ok(self.templates.article(query, &edges))
    }
}

fn read_json_map<T: serde::de::DeserializeOwned>(path: &Path) -> Result<BTreeMap<String, T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Articles looked up from a JSON object keyed by query text.
pub struct FixtureWikipedia {
    articles: BTreeMap<String, Vec<Article>>,
}

impl FixtureWikipedia {
    pub fn new(articles: BTreeMap<String, Vec<Article>>) -> Self {
        Self { articles }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(read_json_map(path)?))
    }
}

impl KnowledgeClient for FixtureWikipedia {
    fn source(&self) -> TextSource {
        TextSource::Wikipedia
    }

    fn fetch(&self, query: &str) -> Result<Vec<Article>> {
        Ok(self.articles.get(query).cloned().unwrap_or_default())
    }
}

/// Edges looked up from a JSON object keyed by query text, rendered with
/// the same templates as the HTTP client.
pub struct FixtureConceptNet {
    edges: BTreeMap<String, Vec<ConceptEdge>>,
    templates: RelationTemplates,
}

impl FixtureConceptNet {
    pub fn new(edges: BTreeMap<String, Vec<ConceptEdge>>, templates: RelationTemplates) -> Self {
        Self { edges, templates }
    }

    pub fn load(path: &Path, templates: RelationTemplates) -> Result<Self> {
        Ok(Self::new(read_json_map(path)?, templates))
    }
}

impl KnowledgeClient for FixtureConceptNet {
    fn source(&self) -> TextSource {
        TextSource::Conceptnet
    }

    fn fetch(&self, query: &str) -> Result<Vec<Article>> {
        let edges = self.edges.get(query).map(Vec::as_slice).unwrap_or(&[]);
        Ok(self.templates.article(query, edges))
    }
}

/// One image-search hit with its pre-extracted object features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub url: String,
    pub objects: Vec<Vec<f64>>,
}

impl ImageResult {
    /// Mean of the object features, or `None` for an image without objects.
    pub fn mean_feature(&self) -> Option<Vec<f64>> {
        let first = self.objects.first()?;
        let mut out = vec![0.0; first.len()];
        for o in &self.objects {
            if o.len() != out.len() {
                return None;
            }
            for (a, b) in out.iter_mut().zip(o) {
                *a += b;
            }
        }
        let n = self.objects.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        Some(out)
    }
}

/// Image search keyed by a statement.
pub trait ImageClient: Send + Sync {
    /// Results in rank order.
    fn search(&self, statement: &str) -> Result<Vec<ImageResult>>;
}

/// Reads `<root>/<sha256 of statement>/1.json`, `2.json`, ... until a file is missing.
pub struct FixtureImages {
    root: PathBuf,
}

impl FixtureImages {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dir_for(&self, statement: &str) -> PathBuf {
        self.root.join(sha256_hex(statement))
    }
}

impl ImageClient for FixtureImages {
    fn search(&self, statement: &str) -> Result<Vec<ImageResult>> {
        let dir = self.dir_for(statement);
        let mut out = Vec::new();
        for rank in 1.. {
            let path = dir.join(format!("{rank}.json"));
            if !path.exists() {
                break;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let result: ImageResult = serde_json::from_str(&text)
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
            out.push(result);
        }
        Ok(out)
    }
}
