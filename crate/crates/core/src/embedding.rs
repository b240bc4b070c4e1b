//! Word-embedding tables in the word2vec text and binary formats.
//!
//! Text format: a header line `count dim`, then one `token v1 ... vd` line
//! per entry. Binary format: the same ASCII header, then per entry the token
//! terminated by a space followed by `dim` little-endian 4-byte floats and an
//! optional trailing newline.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: entry {index} ('{token}'): {reason}")]
    BinaryEntry {
        path: PathBuf,
        index: usize,
        token: String,
        reason: String,
    },
    #[error("embedding for '{token}' has dimension {got}, table expects {expected}")]
    DimensionMismatch {
        token: String,
        got: usize,
        expected: usize,
    },
    #[error("embedding for '{token}' contains a non-finite component")]
    NonFinite { token: String },
}

/// Duplicate handling during load: first occurrence wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmbeddingLoadReport {
    pub entries: usize,
    pub duplicates: usize,
}

/// Token-to-vector table with a fixed dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            entries: HashMap::new(),
        }
    }

    /// Builds a table from `(token, vector)` pairs, validating dimension and
    /// finiteness. Later duplicates are ignored.
    pub fn from_entries<I, S>(dimension: usize, entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable::new(dimension);
        for (token, vector) in entries {
            table.insert(token.into(), vector)?;
        }
        Ok(table)
    }

    /// Inserts unless the token already exists; returns whether it was added.
    pub fn insert(&mut self, token: String, vector: Vec<f32>) -> Result<bool, EmbeddingError> {
        if vector.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                token,
                got: vector.len(),
                expected: self.dimension,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { token });
        }
        match self.entries.entry(token) {
            std::collections::hash_map::Entry::Occupied(_) => Ok(false),
            std::collections::hash_map::Entry::Vacant(slot) => {
                slot.insert(vector);
                Ok(true)
            }
        }
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.entries.get(token).map(|v| v.as_slice())
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

    /// Tokens in sorted order, for deterministic serialization.
    pub fn tokens(&self) -> Vec<&str> {
        let mut tokens: Vec<&str> = self.entries.keys().map(|s| s.as_str()).collect();
        tokens.sort_unstable();
        tokens
    }
}

fn parse_header(line: &str, path: &Path) -> Result<(usize, usize), EmbeddingError> {
    let mut parts = line.split_whitespace();
    let err = |reason: &str| EmbeddingError::Parse {
        path: path.to_path_buf(),
        line: 1,
        reason: reason.to_string(),
    };
    let count = parts
        .next()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| err("header must be 'count dim'"))?;
    let dim = parts
        .next()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| err("header must be 'count dim'"))?;
    if parts.next().is_some() {
        return Err(err("header must be exactly 'count dim'"));
    }
    if dim == 0 {
        return Err(err("dimension must be positive"));
    }
    Ok((count, dim))
}

/// Loads the text format. Duplicate tokens keep the first occurrence and are
/// tallied; any line whose component count disagrees with the header is a
/// parse error naming the line.
pub fn load_embeddings_text(
    path: &Path,
) -> Result<(EmbeddingTable, EmbeddingLoadReport), EmbeddingError> {
    let file = fs::File::open(path).map_err(|e| EmbeddingError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => {
            return Err(EmbeddingError::Io {
                path: path.to_path_buf(),
                source: e,
            })
        }
        None => {
            return Err(EmbeddingError::Parse {
                path: path.to_path_buf(),
                line: 1,
                reason: "empty file".into(),
            })
        }
    };
    // The body's counts win over a stale header count; only dim is binding.
    let (_declared_count, dim) = parse_header(&header, path)?;

    let mut table = EmbeddingTable::new(dim);
    let mut report = EmbeddingLoadReport::default();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| EmbeddingError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap();
        let components: Result<Vec<f32>, _> = parts.map(|p| p.parse::<f32>()).collect();
        let vector = components.map_err(|_| EmbeddingError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: "non-numeric vector component".into(),
        })?;
        if vector.len() != dim {
            return Err(EmbeddingError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("expected {dim} components, found {}", vector.len()),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: "non-finite vector component".into(),
            });
        }
        if !table.insert(token.to_string(), vector)? {
            report.duplicates += 1;
        }
    }
    report.entries = table.len();
    Ok((table, report))
}

/// Loads the binary format (little-endian 4-byte floats).
pub fn load_embeddings_binary(
    path: &Path,
) -> Result<(EmbeddingTable, EmbeddingLoadReport), EmbeddingError> {
    let file = fs::File::open(path).map_err(|e| EmbeddingError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut reader = BufReader::new(file);

    let mut header = Vec::new();
    reader
        .read_until(b'\n', &mut header)
        .map_err(|e| EmbeddingError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    let header = String::from_utf8(header).map_err(|_| EmbeddingError::Parse {
        path: path.to_path_buf(),
        line: 1,
        reason: "header is not UTF-8".into(),
    })?;
    let (count, dim) = parse_header(header.trim_end(), path)?;

    let mut table = EmbeddingTable::new(dim);
    let mut report = EmbeddingLoadReport::default();
    for index in 0..count {
        let mut token_bytes = Vec::new();
        reader
            .read_until(b' ', &mut token_bytes)
            .map_err(|e| EmbeddingError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
        if token_bytes.is_empty() {
            return Err(EmbeddingError::BinaryEntry {
                path: path.to_path_buf(),
                index,
                token: String::new(),
                reason: "unexpected end of file before token".into(),
            });
        }
        token_bytes.pop(); // trailing space
                           // Skip the newline terminating the previous entry's vector.
        let token = String::from_utf8_lossy(&token_bytes)
            .trim_matches(['\n', '\r'])
            .to_string();

        let mut vector = vec![0f32; dim];
        for slot in vector.iter_mut() {
            *slot = reader
                .read_f32::<LittleEndian>()
                .map_err(|_| EmbeddingError::BinaryEntry {
                    path: path.to_path_buf(),
                    index,
                    token: token.clone(),
                    reason: "truncated vector".into(),
                })?;
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::BinaryEntry {
                path: path.to_path_buf(),
                index,
                token,
                reason: "non-finite vector component".into(),
            });
        }
        if !table.insert(token, vector)? {
            report.duplicates += 1;
        }
    }
    report.entries = table.len();
    Ok((table, report))
}

/// Loads either format, sniffing binary content: a file whose first block is
/// not valid UTF-8 (or contains NUL bytes) is treated as binary.
pub fn load_embeddings(
    path: &Path,
) -> Result<(EmbeddingTable, EmbeddingLoadReport), EmbeddingError> {
    let mut probe = vec![0u8; 8192];
    let n = {
        let mut file = fs::File::open(path).map_err(|e| EmbeddingError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut read = 0;
        loop {
            match file.read(&mut probe[read..]) {
                Ok(0) => break,
                Ok(k) => {
                    read += k;
                    if read == probe.len() {
                        break;
                    }
                }
                Err(e) => {
                    return Err(EmbeddingError::Io {
                        path: path.to_path_buf(),
                        source: e,
                    })
                }
            }
        }
        read
    };
    let looks_binary = probe[..n].contains(&0) || std::str::from_utf8(&probe[..n]).is_err();
    if looks_binary {
        load_embeddings_binary(path)
    } else {
        load_embeddings_text(path)
    }
}

/// Writes the text format with tokens in sorted order.
pub fn write_embeddings_text(table: &EmbeddingTable, path: &Path) -> Result<(), EmbeddingError> {
    let file = fs::File::create(path).map_err(|e| EmbeddingError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BufWriter::new(file);
    let wrap = |e: std::io::Error| EmbeddingError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    writeln!(out, "{} {}", table.len(), table.dimension()).map_err(wrap)?;
    for token in table.tokens() {
        write!(out, "{token}").map_err(wrap)?;
        for v in table.get(token).unwrap() {
            write!(out, " {v}").map_err(wrap)?;
        }
        writeln!(out).map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

/// Writes the binary format (little-endian 4-byte floats), tokens sorted.
pub fn write_embeddings_binary(table: &EmbeddingTable, path: &Path) -> Result<(), EmbeddingError> {
    let file = fs::File::create(path).map_err(|e| EmbeddingError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BufWriter::new(file);
    let wrap = |e: std::io::Error| EmbeddingError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    writeln!(out, "{} {}", table.len(), table.dimension()).map_err(wrap)?;
    for token in table.tokens() {
        write!(out, "{token} ").map_err(wrap)?;
        for &v in table.get(token).unwrap() {
            out.write_f32::<LittleEndian>(v).map_err(wrap)?;
        }
        out.write_all(b"\n").map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}
