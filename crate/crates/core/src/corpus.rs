//! Author-labeled document collections.
//!
//! Corpora are read from JSONL, one record per line:
//!
//! ```text
//! {"doc_id": "d1", "author_id": "a1", "text": "...", "meta": {"gender": "female", "age": "24"}}
//! ```
//!
//! `meta` is optional. Unknown top-level keys and unknown metadata keys are
//! kept verbatim so a corpus can be rewritten without losing information.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: document {doc_id} has empty text")]
    EmptyText { line: usize, doc_id: String },
    #[error("line {line}: duplicate doc_id {doc_id}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("unknown author {0}")]
    UnknownAuthor(String),
    #[error("author {author} has {available} documents, {requested} requested")]
    InsufficientDocuments {
        author: String,
        available: usize,
        requested: usize,
    },
}

/// One author-labeled text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub author_id: String,
    pub text: String,
    #[serde(
        default,
        skip_serializing_if = "BTreeMap::is_empty",
        deserialize_with = "string_map"
    )]
    pub meta: BTreeMap<String, String>,
    /// Top-level keys we don't interpret.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, author_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            author_id: author_id.into(),
            text: text.into(),
            meta: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

// Metadata values are kept as strings; numeric JSON scalars (e.g. `"age": 24`)
// are accepted and stringified.
fn string_map<'de, D>(de: D) -> Result<BTreeMap<String, String>, D::Error>
where
    D: Deserializer<'de>,
{
    let raw: Option<BTreeMap<String, Value>> = Option::deserialize(de)?;
    let mut out = BTreeMap::new();
    for (k, v) in raw.unwrap_or_default() {
        let s = match v {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Null => continue,
            other => {
                return Err(serde::de::Error::custom(format!(
                    "meta value for {k:?} must be a scalar, got {other}"
                )))
            }
        };
        out.insert(k, s);
    }
    Ok(out)
}

/// An immutable collection of documents indexed by author.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    author_index: BTreeMap<String, Vec<usize>>,
}

/// Result of [`load_corpus`]: the corpus plus how many records were dropped
/// by the length threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub skipped: usize,
}

impl Corpus {
    /// Builds a corpus, enforcing non-empty texts and unique doc ids.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, doc) in documents.iter().enumerate() {
            if doc.text.is_empty() {
                return Err(CorpusError::EmptyText {
                    line: i + 1,
                    doc_id: doc.doc_id.clone(),
                });
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId {
                    line: i + 1,
                    doc_id: doc.doc_id.clone(),
                });
            }
        }
        Ok(Self::index(documents))
    }

    fn index(documents: Vec<Document>) -> Self {
        let mut author_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, doc) in documents.iter().enumerate() {
            author_index.entry(doc.author_id.clone()).or_default().push(i);
        }
        Corpus {
            documents,
            author_index,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_authors(&self) -> usize {
        self.author_index.len()
    }

    /// Author ids in sorted order.
    pub fn authors(&self) -> impl Iterator<Item = &str> {
        self.author_index.keys().map(String::as_str)
    }

    pub fn contains_author(&self, author: &str) -> bool {
        self.author_index.contains_key(author)
    }

    /// Indices (into [`Corpus::documents`]) of an author's documents, in file order.
    pub fn author_doc_indices(&self, author: &str) -> Option<&[usize]> {
        self.author_index.get(author).map(Vec::as_slice)
    }

    pub fn author_documents(&self, author: &str) -> Result<Vec<&Document>, CorpusError> {
        let idx = self
            .author_doc_indices(author)
            .ok_or_else(|| CorpusError::UnknownAuthor(author.to_string()))?;
        Ok(idx.iter().map(|&i| &self.documents[i]).collect())
    }

    /// Uniformly samples `k` distinct documents of `author` without replacement.
    pub fn sample_author_documents<R: Rng + ?Sized>(
        &self,
        author: &str,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<&Document>, CorpusError> {
        let idx = self
            .author_doc_indices(author)
            .ok_or_else(|| CorpusError::UnknownAuthor(author.to_string()))?;
        if k > idx.len() {
            return Err(CorpusError::InsufficientDocuments {
                author: author.to_string(),
                available: idx.len(),
                requested: k,
            });
        }
        Ok(rand::seq::index::sample(rng, idx.len(), k)
            .into_iter()
            .map(|j| &self.documents[idx[j]])
            .collect())
    }
}

/// Reads a JSONL corpus. Records shorter than `min_doc_chars` characters are
/// counted in [`LoadedCorpus::skipped`] instead of loaded. Blank lines are ignored.
pub fn load_corpus(path: impl AsRef<Path>, min_doc_chars: usize) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);

    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    let mut skipped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if doc.text.is_empty() {
            return Err(CorpusError::EmptyText {
                line: line_no,
                doc_id: doc.doc_id,
            });
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId {
                line: line_no,
                doc_id: doc.doc_id,
            });
        }
        if doc.char_len() < min_doc_chars {
            skipped += 1;
            continue;
        }
        documents.push(doc);
    }
    if skipped > 0 {
        log::info!("{}: skipped {skipped} records shorter than {min_doc_chars} chars", path.display());
    }
    Ok(LoadedCorpus {
        corpus: Corpus::index(documents),
        skipped,
    })
}

/// Writes documents as JSONL (the format [`load_corpus`] reads).
pub fn write_corpus<W: std::io::Write>(mut out: W, documents: &[Document]) -> std::io::Result<()> {
    for doc in documents {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
