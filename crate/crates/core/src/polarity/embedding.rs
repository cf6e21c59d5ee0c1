use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::skipgram::SkipGramParams;
use crate::jsonl::write_atomic;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("dimension mismatch{}: expected {expected}, found {found}", .line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        found: usize,
        line: Option<usize>,
    },
    #[error("line {line}: duplicate token `{token}`")]
    DuplicateToken { line: usize, token: String },
    #[error("anchor token `{0}` missing or below min_count")]
    MissingAnchorToken(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("anchor vectors coincide; the axis has no direction")]
    DegenerateAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Trained,
    Loaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMetadata {
    pub source: EmbeddingSource,
    /// Token count of the training corpus; unknown for loaded spaces.
    pub corpus_size: Option<u64>,
    pub hyperparameters: Option<SkipGramParams>,
}

/// Token to vector table with a fixed dimension. Insertion order is kept so
/// that saving is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    dimension: usize,
    table: IndexMap<String, Vec<f64>>,
    pub metadata: EmbeddingMetadata,
}

impl EmbeddingSpace {
    pub fn new(dimension: usize, metadata: EmbeddingMetadata) -> Self {
        Self {
            dimension,
            table: IndexMap::new(),
            metadata,
        }
    }

    /// Adds a vector under the lowercased token.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
                line: None,
            });
        }
        self.table.insert(token.to_lowercase(), vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.table.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.table.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.table.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// word2vec text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.table.len(), self.dimension);
        for (token, v) in &self.table {
            out.push_str(token);
            for x in v {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        write_atomic(path, self.to_text().as_bytes()).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Parses the word2vec text format: a `vocab_size dim` header followed by
/// one `token v1 ... vdim` line per token.
pub fn parse_embeddings(contents: &str) -> Result<EmbeddingSpace, EmbeddingError> {
    let mut lines = contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(EmbeddingError::ParseError {
        line: 1,
        message: "missing header".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| {
        s.parse::<usize>().map_err(|_| EmbeddingError::ParseError {
            line: 1,
            message: format!("bad header `{header}`"),
        })
    };
    if fields.len() != 2 {
        return Err(EmbeddingError::ParseError {
            line: 1,
            message: format!("bad header `{header}`"),
        });
    }
    let vocab = parse_usize(fields[0])?;
    let dimension = parse_usize(fields[1])?;
    if dimension == 0 {
        return Err(EmbeddingError::ParseError {
            line: 1,
            message: "dimension must be positive".into(),
        });
    }
    let mut space = EmbeddingSpace::new(
        dimension,
        EmbeddingMetadata {
            source: EmbeddingSource::Loaded,
            corpus_size: None,
            hyperparameters: None,
        },
    );
    for (idx, line) in lines {
        let line_no = idx + 1;
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap().to_lowercase();
        let vector = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| EmbeddingError::ParseError {
                    line: line_no,
                    message: format!("`{p}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vector.len() != dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dimension,
                found: vector.len(),
                line: Some(line_no),
            });
        }
        if space.contains(&token) {
            return Err(EmbeddingError::DuplicateToken {
                line: line_no,
                token,
            });
        }
        space.table.insert(token, vector);
    }
    if space.len() != vocab {
        return Err(EmbeddingError::ParseError {
            line: 1,
            message: format!("header declares {vocab} tokens, found {}", space.len()),
        });
    }
    Ok(space)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSpace, EmbeddingError> {
    let contents = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&contents)
}
