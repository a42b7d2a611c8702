//! Title embeddings: the interchange file, a hashed-trigram fallback encoder
//! and exact cosine neighborhoods.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Provider label written by the built-in encoder.
pub const FALLBACK_PROVIDER: &str = "fallback-trigram-fnv1a";
pub const DEFAULT_DIMENSION: usize = 256;
pub const MIN_FALLBACK_DIMENSION: usize = 16;
pub const DEFAULT_THRESHOLD: f64 = 0.75;

/// Off-norm vectors within this distance of 1 are renormalized on load.
const NORM_TOLERANCE: f64 = 1e-3;

/// A unit-length title vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Scales `values` to unit length. Fails on an all-zero vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector(String::new()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for EmbeddingVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return Err(Error::ZeroVector(String::new()));
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Signed hashed bag of character trigrams over `<title>`.
///
/// Each trigram's UTF-8 bytes are hashed with FNV-1a 64; the hash picks bucket
/// `hash % dimension` and adds `-1` when its top bit is set, `+1` otherwise.
/// The sum is scaled to unit length.
pub fn fallback_embed(title: &str, dimension: usize) -> Result<EmbeddingVector> {
    if title.is_empty() {
        return Err(Error::EmptyTitle);
    }
    if dimension < MIN_FALLBACK_DIMENSION {
        return Err(Error::InvalidConfig(format!(
            "fallback dimension must be at least {MIN_FALLBACK_DIMENSION}, got {dimension}"
        )));
    }
    let chars: Vec<char> = std::iter::once('<').chain(title.chars()).chain(std::iter::once('>')).collect();
    let mut values = vec![0.0; dimension];
    let mut buf = [0u8; 12];
    for gram in chars.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let hash = fnv1a64(&buf[..len]);
        let bucket = (hash % dimension as u64) as usize;
        values[bucket] += if hash >> 63 == 1 { -1.0 } else { 1.0 };
    }
    EmbeddingVector::normalized(values).map_err(|_| Error::ZeroVector(title.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackEmbedder {
    pub dimension: usize,
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl FallbackEmbedder {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < MIN_FALLBACK_DIMENSION {
            return Err(Error::InvalidConfig(format!(
                "fallback dimension must be at least {MIN_FALLBACK_DIMENSION}, got {dimension}"
            )));
        }
        Ok(Self { dimension })
    }

    pub fn embed(&self, title: &str) -> Result<EmbeddingVector> {
        fallback_embed(title, self.dimension)
    }

    /// Embeds every distinct title, in first-occurrence order.
    pub fn embed_all<'a>(&self, titles: impl IntoIterator<Item = &'a str>) -> Result<EmbeddingStore> {
        let mut store = EmbeddingStore::new(self.dimension, FALLBACK_PROVIDER);
        for title in titles {
            if store.contains(title) {
                continue;
            }
            store.insert(title, self.embed(title)?)?;
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodConfig {
    pub threshold: f64,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl NeighborhoodConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!("threshold must be in (0, 1], got {threshold}")));
        }
        Ok(Self { threshold })
    }
}

/// Unit vectors keyed by normalized title, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    provider: String,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum StoreLine {
    Header {
        dimension: usize,
        provider: String,
        count: usize,
    },
    Vec {
        id: String,
        v: Vec<f64>,
    },
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    dimension: usize,
    provider: &'a str,
    count: usize,
}

#[derive(Serialize)]
struct VecOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    id: &'a str,
    v: &'a [f64],
}

impl EmbeddingStore {
    pub fn new(dimension: usize, provider: impl Into<String>) -> Self {
        Self {
            dimension,
            provider: provider.into(),
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn insert(&mut self, id: &str, vector: EmbeddingVector) -> Result<()> {
        if vector.dimension() != self.dimension {
            return Err(Error::VectorLength {
                id: id.to_string(),
                expected: self.dimension,
                found: vector.dimension(),
            });
        }
        if self.index.contains_key(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(&vector);
        Ok(())
    }

    /// Reads the interchange format. Vectors within 1e-3 of unit norm are
    /// rescaled to exactly unit norm; anything further off is rejected.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut store: Option<(Self, usize)> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: StoreLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match (parsed, store.as_mut()) {
                (StoreLine::Header { dimension, provider, count }, None) => {
                    if dimension == 0 {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: "dimension must be positive".into(),
                        });
                    }
                    store = Some((Self::new(dimension, provider), count));
                }
                (StoreLine::Header { .. }, Some(_)) => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "repeated header".into(),
                    })
                }
                (StoreLine::Vec { .. }, None) => return Err(Error::MissingHeader),
                (StoreLine::Vec { id, v }, Some((s, _))) => {
                    if v.len() != s.dimension {
                        return Err(Error::VectorLength {
                            id,
                            expected: s.dimension,
                            found: v.len(),
                        });
                    }
                    let norm = l2_norm(&v);
                    if norm == 0.0 {
                        return Err(Error::ZeroVector(id));
                    }
                    if (norm - 1.0).abs() > NORM_TOLERANCE {
                        return Err(Error::NotUnitNorm { id, norm });
                    }
                    let vector = EmbeddingVector::normalized(v)?;
                    s.insert(&id, vector)?;
                }
            }
        }
        let (store, count) = store.ok_or(Error::MissingHeader)?;
        if store.len() != count {
            return Err(Error::CountMismatch {
                expected: count,
                found: store.len(),
            });
        }
        Ok(store)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(
            &mut writer,
            &HeaderOut {
                kind: "header",
                dimension: self.dimension,
                provider: &self.provider,
                count: self.len(),
            },
        )?;
        writer.write_all(b"\n")?;
        for (i, id) in self.ids.iter().enumerate() {
            serde_json::to_writer(
                &mut writer,
                &VecOut {
                    kind: "vec",
                    id,
                    v: self.row(i),
                },
            )?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Exact scan: every candidate whose cosine with `anchor` reaches the
/// threshold. The anchor is included when it is itself a candidate.
pub fn find_similar<'a>(
    anchor: &str,
    store: &EmbeddingStore,
    candidates: impl IntoIterator<Item = &'a str>,
    config: &NeighborhoodConfig,
) -> Result<BTreeSet<String>> {
    let a = store.require(anchor)?;
    let mut out = BTreeSet::new();
    for id in candidates {
        let v = store.require(id)?;
        if id == anchor || dot(a, v) >= config.threshold {
            out.insert(id.to_string());
        }
    }
    Ok(out)
}

/// Resolves titles to vectors: store lookup first, then the fallback encoder
/// when the store (if any) was produced by it.
#[derive(Debug, Clone)]
pub struct TitleEncoder {
    store: Option<EmbeddingStore>,
    fallback: Option<FallbackEmbedder>,
}

impl TitleEncoder {
    pub fn fallback(dimension: usize) -> Result<Self> {
        Ok(Self {
            store: None,
            fallback: Some(FallbackEmbedder::new(dimension)?),
        })
    }

    /// Unknown titles are embedded on the fly only if the store's vectors
    /// live in the fallback encoder's space.
    pub fn with_store(store: EmbeddingStore) -> Self {
        let fallback = (store.provider() == FALLBACK_PROVIDER && store.dimension() >= MIN_FALLBACK_DIMENSION)
            .then(|| FallbackEmbedder {
                dimension: store.dimension(),
            });
        Self {
            store: Some(store),
            fallback,
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        self.store
            .as_ref()
            .map(EmbeddingStore::dimension)
            .or(self.fallback.map(|f| f.dimension))
    }

    pub fn encode(&self, title: &str) -> Result<EmbeddingVector> {
        if let Some(v) = self.store.as_ref().and_then(|s| s.get(title)) {
            return Ok(EmbeddingVector(v.to_vec()));
        }
        match self.fallback {
            Some(f) => f.embed(title),
            None => Err(Error::MissingEmbedding(title.to_string())),
        }
    }
}
