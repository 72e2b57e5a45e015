//! Tokenization, word vectors, and the two token-similarity scores used by
//! retrieval: mean recall over word vectors and greedy (BERTScore-style)
//! token matching.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub position: usize,
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(position, s)| Token {
            surface: s.to_lowercase(),
            position,
        })
        .collect()
}

/// Token surfaces only.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface).collect()
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, text: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(text.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic unit vector derived from `text`.
///
/// Uses only integer hashing, exact integer-to-float conversion, and a
/// correctly rounded square root, so the output is bit-identical on every
/// IEEE-754 platform.
pub fn hash_unit_vector(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut state = fnv1a(seed, text);
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            let bits = splitmix64(&mut state) >> 11;
            (bits as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    ZeroVector,
    #[default]
    HashFallback,
}

#[derive(Clone, Debug)]
pub struct WordVectorTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
    oov_policy: OovPolicy,
    seed: u64,
}

impl WordVectorTable {
    pub fn new(dimension: usize, oov_policy: OovPolicy) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::usage("word vector dimension must be positive"));
        }
        Ok(Self {
            dimension,
            entries: HashMap::new(),
            oov_policy,
            seed: 0x6c6f_7665,
        })
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        check_dim(self.dimension, vector.len())?;
        self.entries.insert(word.to_lowercase(), vector);
        Ok(())
    }

    /// Loads `word v1 ... vd` lines. The dimension is taken from the first line.
    pub fn load(path: &Path, oov_policy: OovPolicy) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file), path, oov_policy)
    }

    pub fn read(reader: impl BufRead, path: &Path, oov_policy: OovPolicy) -> Result<Self> {
        let mut table: Option<WordVectorTable> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line_no = i + 1;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            let vector = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(format!("bad component: {e}")))?;
            if vector.is_empty() {
                return Err(parse_err(format!("word {word:?} has no components")));
            }
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(WordVectorTable::new(vector.len(), oov_policy)?),
            };
            if vector.len() != t.dimension {
                return Err(parse_err(format!(
                    "expected {} components, found {}",
                    t.dimension,
                    vector.len()
                )));
            }
            t.entries.insert(word.to_lowercase(), vector);
        }
        table.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no word vectors".into(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Never fails: out-of-vocabulary words are resolved by the OOV policy.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.entries.get(word) {
            return v.clone();
        }
        match self.oov_policy {
            OovPolicy::ZeroVector => vec![0.0; self.dimension],
            OovPolicy::HashFallback => hash_unit_vector(word, self.dimension, self.seed),
        }
    }

    /// Mean of the word vectors of `text`'s tokens (zero for empty text).
    pub fn phrase_vector(&self, text: &str) -> Vec<f64> {
        let toks = words(text);
        let mut out = vec![0.0; self.dimension];
        if toks.is_empty() {
            return out;
        }
        for w in &toks {
            for (o, v) in out.iter_mut().zip(self.lookup(w)) {
                *o += v;
            }
        }
        let n = toks.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Mean over query tokens of the best cosine to any sentence token.
pub fn mean_recall(query: &[Token], sentence: &[Token], table: &WordVectorTable) -> Result<f64> {
    if query.is_empty() || sentence.is_empty() {
        return Err(Error::usage(
            "mean_recall needs non-empty query and sentence",
        ));
    }
    let sentence_vecs: Vec<Vec<f64>> = sentence.iter().map(|t| table.lookup(&t.surface)).collect();
    let mut total = 0.0;
    for q in query {
        let qv = table.lookup(&q.surface);
        let mut best = f64::NEG_INFINITY;
        for sv in &sentence_vecs {
            best = best.max(cosine(&qv, sv)?);
        }
        total += best;
    }
    Ok(total / query.len() as f64)
}

/// Maps a token sequence to one vector per token.
pub trait TokenEncoder: Send + Sync {
    fn dimension(&self) -> usize;

    fn deterministic(&self) -> bool;

    fn encode(&self, tokens: &[Token]) -> Vec<Vec<f64>>;
}

/// Position-independent encoder that hashes each token surface to a unit vector.
#[derive(Clone, Debug)]
pub struct HashEncoder {
    dimension: usize,
    seed: u64,
}

impl HashEncoder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self { dimension, seed }
    }

    pub fn token_vector(&self, surface: &str) -> Vec<f64> {
        hash_unit_vector(surface, self.dimension, self.seed)
    }

    /// Mean token vector of a text; used as the sentence feature extractor.
    pub fn sentence_vector(&self, text: &str) -> Vec<f64> {
        let toks = tokenize(text);
        let mut out = vec![0.0; self.dimension];
        if toks.is_empty() {
            return out;
        }
        for v in self.encode(&toks) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        let n = toks.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

impl TokenEncoder for HashEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode(&self, tokens: &[Token]) -> Vec<Vec<f64>> {
        tokens
            .iter()
            .map(|t| self.token_vector(&t.surface))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy max-similarity token alignment without IDF weighting.
pub fn greedy_match_score(
    candidate: &[Token],
    reference: &[Token],
    encoder: &dyn TokenEncoder,
) -> Result<MatchScore> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::usage(
            "greedy_match_score needs non-empty token lists",
        ));
    }
    let cand = encoder.encode(candidate);
    let refs = encoder.encode(reference);
    let mut sim = vec![vec![0.0; refs.len()]; cand.len()];
    for (i, c) in cand.iter().enumerate() {
        for (j, r) in refs.iter().enumerate() {
            sim[i][j] = cosine(c, r)?;
        }
    }
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / cand.len() as f64;
    let recall = (0..refs.len())
        .map(|j| {
            sim.iter()
                .map(|row| row[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / refs.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MatchScore {
        precision,
        recall,
        f1,
    })
}
