//! Line-delimited interchange format for embeddings, logit gradients,
//! logits and probabilities.
//!
//! A file is UTF-8 text. Lines starting with `#` are comments; the first
//! comment written by [`write_store`] is a JSON header carrying `format`,
//! `version`, `dim` and `provenance`. Every other non-blank line is one JSON
//! record:
//!
//! ```text
//! # {"format":"conceptaudit.store","version":1,"dim":3,"provenance":"example"}
//! {"id":"c0","text":"women are vile.","embedding":[0.1,-0.2,0.3],"gradient":[1.0,0.0,0.5],"logit":1.25,"prob":0.777,"set_tag":"concept"}
//! {"id":"x0","embedding":[0.0,0.1,0.0],"set_tag":"input"}
//! ```
//!
//! `gradient` is the gradient of the positive-class logit with respect to the
//! embedding. `prob` is the model's own positive-class probability and is not
//! required to equal `sigmoid(logit)`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STORE_FORMAT: &str = "conceptaudit.store";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetTag {
    Concept,
    Random,
    Input,
    ChallengePos,
    ChallengeNeg,
}

impl SetTag {
    pub const ALL: [SetTag; 5] = [
        SetTag::Concept,
        SetTag::Random,
        SetTag::Input,
        SetTag::ChallengePos,
        SetTag::ChallengeNeg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SetTag::Concept => "concept",
            SetTag::Random => "random",
            SetTag::Input => "input",
            SetTag::ChallengePos => "challenge_pos",
            SetTag::ChallengeNeg => "challenge_neg",
        }
    }
}

impl fmt::Display for SetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SetTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown set_tag `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    pub set_tag: SetTag,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, embedding: Vec<f64>, set_tag: SetTag) -> Self {
        EmbeddingRecord {
            id: id.into(),
            text: None,
            embedding,
            gradient: None,
            logit: None,
            prob: None,
            set_tag,
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.len()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.embedding.len() != dim {
            return Err(Error::DimensionMismatch {
                id: self.id.clone(),
                expected: dim,
                found: self.embedding.len(),
            });
        }
        if let Some(g) = &self.gradient {
            if g.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: self.id.clone(),
                    expected: dim,
                    found: g.len(),
                });
            }
        }
        if let Some(p) = self.prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "record `{}` has prob {p} outside [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }

    fn non_finite_field(&self) -> Option<&'static str> {
        if self.embedding.iter().any(|v| !v.is_finite()) {
            return Some("embedding");
        }
        if self.gradient.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
            return Some("gradient");
        }
        if self.logit.is_some_and(|v| !v.is_finite()) {
            return Some("logit");
        }
        if self.prob.is_some_and(|v| !v.is_finite()) {
            return Some("prob");
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
    #[serde(default)]
    provenance: String,
}

/// A validated, immutable collection of records of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    records: Vec<EmbeddingRecord>,
    dim: usize,
    provenance: String,
}

impl EmbeddingStore {
    /// Validates `records`. The dimension is taken from the first record
    /// (0 for an empty store).
    pub fn new(records: Vec<EmbeddingRecord>, provenance: impl Into<String>) -> Result<Self> {
        let dim = records.first().map_or(0, EmbeddingRecord::dim);
        Self::with_dim(records, dim, provenance)
    }

    pub fn with_dim(records: Vec<EmbeddingRecord>, dim: usize, provenance: impl Into<String>) -> Result<Self> {
        for r in &records {
            r.validate(dim)?;
        }
        Ok(EmbeddingStore {
            records,
            dim,
            provenance: provenance.into(),
        })
    }

    /// Concatenates stores of equal dimension. Empty stores adopt any
    /// dimension; provenances are joined with `+`.
    pub fn merge(stores: &[EmbeddingStore]) -> Result<Self> {
        let dim = stores.iter().find(|s| !s.is_empty()).map_or(0, |s| s.dim);
        let records: Vec<_> = stores.iter().flat_map(|s| s.records.iter().cloned()).collect();
        let mut provenance: Vec<&str> = Vec::new();
        for s in stores {
            if !s.provenance.is_empty() && !provenance.contains(&s.provenance.as_str()) {
                provenance.push(&s.provenance);
            }
        }
        Self::with_dim(records, dim, provenance.join("+"))
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records carrying `tag`, in store order.
    pub fn select(&self, tag: SetTag) -> Vec<&EmbeddingRecord> {
        select(self, tag)
    }

    pub fn count(&self, tag: SetTag) -> usize {
        self.records.iter().filter(|r| r.set_tag == tag).count()
    }

    /// Embeddings of the records carrying `tag`.
    pub fn embeddings(&self, tag: SetTag) -> Vec<&[f64]> {
        self.records
            .iter()
            .filter(|r| r.set_tag == tag)
            .map(|r| r.embedding.as_slice())
            .collect()
    }
}

pub fn select(store: &EmbeddingStore, tag: SetTag) -> Vec<&EmbeddingRecord> {
    store.records.iter().filter(|r| r.set_tag == tag).collect()
}

pub fn read_store<R: BufRead>(reader: R) -> Result<EmbeddingStore> {
    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(comment) = body.strip_prefix('#') {
            if header.is_none() && records.is_empty() {
                if let Ok(h) = serde_json::from_str::<Header>(comment.trim()) {
                    if h.format != STORE_FORMAT {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("unexpected format `{}` (expected `{STORE_FORMAT}`)", h.format),
                        });
                    }
                    if h.version > FORMAT_VERSION {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!(
                                "format version {} is newer than supported version {FORMAT_VERSION}",
                                h.version
                            ),
                        });
                    }
                    header = Some(h);
                }
            }
            continue;
        }
        let record = parse_record(body, lineno)?;
        let expected = *dim.get_or_insert(header.as_ref().map_or(record.dim(), |h| h.dim));
        record.validate(expected)?;
        records.push(record);
    }
    let (hdr_dim, provenance) = header.map_or((None, String::new()), |h| (Some(h.dim), h.provenance));
    let dim = match (dim, hdr_dim) {
        (Some(d), _) => d,
        (None, Some(d)) => d,
        (None, None) => 0,
    };
    Ok(EmbeddingStore {
        records,
        dim,
        provenance,
    })
}

fn parse_record(body: &str, lineno: usize) -> Result<EmbeddingRecord> {
    // Parse through a Value first so an unknown set_tag gets a targeted message.
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    if let Some(tag) = value.get("set_tag").and_then(|t| t.as_str()) {
        tag.parse::<SetTag>().map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })
}

/// Writes the header comment followed by one record per line. Non-finite
/// values are rejected before anything is written.
pub fn write_store<W: Write>(store: &EmbeddingStore, mut out: W) -> Result<()> {
    for r in &store.records {
        if let Some(field) = r.non_finite_field() {
            return Err(Error::Serialize {
                id: r.id.clone(),
                message: format!("{field} contains a non-finite value"),
            });
        }
    }
    let header = Header {
        format: STORE_FORMAT.to_string(),
        version: FORMAT_VERSION,
        dim: store.dim,
        provenance: store.provenance.clone(),
    };
    writeln!(out, "# {}", to_json(&header, "header")?)?;
    for r in &store.records {
        writeln!(out, "{}", to_json(r, &r.id)?)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn to_json<T: Serialize>(value: &T, id: &str) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Serialize {
        id: id.to_string(),
        message: e.to_string(),
    })
}

pub fn read_store_file(path: &std::path::Path) -> Result<EmbeddingStore> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_store(std::io::BufReader::new(file))
}

pub fn write_store_file(store: &EmbeddingStore, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_store(store, std::io::BufWriter::new(file))
}
