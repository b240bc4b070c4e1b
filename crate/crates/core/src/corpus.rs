//! Job-advertisement ingestion and the shared text plumbing: tokenization,
//! stopword lists, title normalization, and salary-point extraction.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stopwords every usable list must contain; a file lacking these is
/// almost certainly not an English stopword list.
const CORE_STOPWORDS: [&str; 8] = ["the", "a", "an", "of", "to", "in", "and", "with"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing required column '{column}' for format {format}")]
    MissingColumn {
        path: PathBuf,
        column: &'static str,
        format: CorpusFormat,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("stopword file {path} contains no tokens")]
    EmptyStopwords { path: PathBuf },
    #[error("stopword file {path} is missing core stopwords: {missing}")]
    IncompleteStopwords { path: PathBuf, missing: String },
    #[error("duplicate ad id '{id}'")]
    DuplicateAdId { id: String },
}

/// Identifier of an on-disk corpus column layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// Canonical layout: `Id, Title, FullDescription, Category, SalaryMin, SalaryMax`.
    Standard,
    /// Adzuna export: `Id, Title, FullDescription, Category, SalaryRaw, SalaryNormalized`
    /// plus any number of extra columns (location, contract type, ...), which are
    /// accepted and ignored. The salary range is taken from `SalaryRaw` when it
    /// parses as `low-high` or as a single number; otherwise `SalaryNormalized`
    /// is used for both bounds; otherwise the salary is recorded as absent.
    Adzuna,
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusFormat::Standard => write!(f, "standard"),
            CorpusFormat::Adzuna => write!(f, "adzuna"),
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(CorpusFormat::Standard),
            "adzuna" => Ok(CorpusFormat::Adzuna),
            other => Err(format!("unknown corpus format '{other}'")),
        }
    }
}

/// Opaque advertisement identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AdId(pub String);

impl fmt::Display for AdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Annual salary range in corpus currency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalaryRange {
    pub low: f64,
    pub high: f64,
}

impl SalaryRange {
    /// Returns the range when it is usable (`0 < low <= high`), else `None`.
    pub fn new(low: f64, high: f64) -> Option<Self> {
        if low > 0.0 && high >= low && low.is_finite() && high.is_finite() {
            Some(SalaryRange { low, high })
        } else {
            None
        }
    }

    /// Midpoint of the range, used as the ad's salary point.
    pub fn midpoint(&self) -> f64 {
        (self.low + self.high) / 2.0
    }
}

/// One job advertisement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAd {
    pub id: AdId,
    pub title: String,
    pub description: String,
    /// Absent categories are loaded but excluded from category-conditioned
    /// analyses.
    pub category: Option<String>,
    pub salary: Option<SalaryRange>,
}

impl JobAd {
    /// Midpoint of the salary range; `None` marks the ad as having no
    /// usable salary, excluding it from salary analyses.
    pub fn salary_point(&self) -> Option<f64> {
        self.salary.map(|r| r.midpoint())
    }
}

/// Midpoint of an ad's salary range (`None` when the salary is absent).
pub fn salary_point(ad: &JobAd) -> Option<f64> {
    ad.salary_point()
}

/// A row skipped during load, with the 1-based data-row number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

/// Per-file load accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub rejected: usize,
    /// Accepted rows whose salary field did not parse and was marked absent.
    pub missing_salary: usize,
    /// Accepted rows with an empty category field.
    pub missing_category: usize,
    pub rejections: Vec<RejectedRow>,
}

fn parse_salary_value(text: &str) -> Option<f64> {
    let cleaned: String = text
        .trim()
        .chars()
        .filter(|c| !matches!(c, ',' | '£' | '$' | '€'))
        .collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses `"20000-30000"`, `"20000 - 30000"`, or a single number into a range.
fn parse_salary_range(raw: &str) -> Option<SalaryRange> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if let Some((lo, hi)) = raw.split_once('-') {
        let low = parse_salary_value(lo)?;
        let high = parse_salary_value(hi)?;
        return SalaryRange::new(low, high);
    }
    let v = parse_salary_value(raw)?;
    SalaryRange::new(v, v)
}

struct ColumnMap {
    id: usize,
    title: usize,
    description: usize,
    category: usize,
    // Standard: (SalaryMin, SalaryMax). Adzuna: (SalaryRaw, SalaryNormalized).
    salary_a: usize,
    salary_b: usize,
}

fn locate_columns(
    headers: &csv::StringRecord,
    format: CorpusFormat,
    path: &Path,
) -> Result<ColumnMap, CorpusError> {
    let find = |name: &'static str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| CorpusError::MissingColumn {
                path: path.to_path_buf(),
                column: name,
                format,
            })
    };
    let (salary_a, salary_b) = match format {
        CorpusFormat::Standard => (find("SalaryMin")?, find("SalaryMax")?),
        CorpusFormat::Adzuna => (find("SalaryRaw")?, find("SalaryNormalized")?),
    };
    Ok(ColumnMap {
        id: find("Id")?,
        title: find("Title")?,
        description: find("FullDescription")?,
        category: find("Category")?,
        salary_a,
        salary_b,
    })
}

/// Loads a corpus CSV. Rows with an unusable salary are kept with the salary
/// marked absent; rows with an empty description are rejected. Both outcomes
/// are tallied in the [`LoadReport`].
pub fn load_ads(
    path: &Path,
    format: CorpusFormat,
) -> Result<(Vec<JobAd>, LoadReport), CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CorpusError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => CorpusError::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let cols = locate_columns(&headers, format, path)?;

    let mut ads = Vec::new();
    let mut report = LoadReport::default();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.rejected += 1;
                report.rejections.push(RejectedRow {
                    row,
                    reason: format!("unparseable row: {e}"),
                });
                continue;
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let description = field(cols.description);
        if description.is_empty() {
            report.rejected += 1;
            report.rejections.push(RejectedRow {
                row,
                reason: "empty description".into(),
            });
            continue;
        }
        let id = field(cols.id);
        if id.is_empty() {
            report.rejected += 1;
            report.rejections.push(RejectedRow {
                row,
                reason: "empty id".into(),
            });
            continue;
        }

        let salary = match format {
            CorpusFormat::Standard => {
                let lo = parse_salary_value(field(cols.salary_a));
                let hi = parse_salary_value(field(cols.salary_b));
                match (lo, hi) {
                    (Some(l), Some(h)) => SalaryRange::new(l, h),
                    _ => None,
                }
            }
            CorpusFormat::Adzuna => parse_salary_range(field(cols.salary_a)).or_else(|| {
                parse_salary_value(field(cols.salary_b)).and_then(|v| SalaryRange::new(v, v))
            }),
        };
        let had_salary_text = !field(cols.salary_a).is_empty() || !field(cols.salary_b).is_empty();
        if salary.is_none() && had_salary_text {
            report.missing_salary += 1;
        }

        let category = {
            let c = field(cols.category);
            if c.is_empty() {
                report.missing_category += 1;
                None
            } else {
                Some(c.to_string())
            }
        };

        ads.push(JobAd {
            id: AdId(id.to_string()),
            title: field(cols.title).to_string(),
            description: description.to_string(),
            category,
            salary,
        });
        report.accepted += 1;
    }
    Ok((ads, report))
}

/// Writes ads in the canonical (`standard`) layout. Loading the result back
/// with [`load_ads`] reproduces the records exactly.
pub fn save_ads(ads: &[JobAd], path: &Path) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let io_err = |e: csv::Error| CorpusError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    writer
        .write_record([
            "Id",
            "Title",
            "FullDescription",
            "Category",
            "SalaryMin",
            "SalaryMax",
        ])
        .map_err(io_err)?;
    for ad in ads {
        let (lo, hi) = match ad.salary {
            Some(r) => (r.low.to_string(), r.high.to_string()),
            None => (String::new(), String::new()),
        };
        writer
            .write_record([
                ad.id.0.as_str(),
                ad.title.as_str(),
                ad.description.as_str(),
                ad.category.as_deref().unwrap_or(""),
                lo.as_str(),
                hi.as_str(),
            ])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Fails with the offending id when two ads share one.
pub fn check_unique_ids(ads: &[JobAd]) -> Result<(), CorpusError> {
    let mut seen = HashSet::with_capacity(ads.len());
    for ad in ads {
        if !seen.insert(ad.id.0.as_str()) {
            return Err(CorpusError::DuplicateAdId {
                id: ad.id.0.clone(),
            });
        }
    }
    Ok(())
}

/// Lowercase tokens with the character offset of each token's first
/// character in the source string.
///
/// Tokens are runs of ASCII alphanumerics and apostrophes; every other
/// character (including hyphens) delimits. Edge apostrophes are trimmed, so
/// `'quoted'` yields `quoted`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub origin_offsets: Vec<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Deterministic lowercasing tokenizer shared by every stage.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut origin_offsets = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;

    let flush =
        |current: &mut String, start: usize, tokens: &mut Vec<String>, offsets: &mut Vec<usize>| {
            if current.is_empty() {
                return;
            }
            let leading = current.chars().take_while(|&c| c == '\'').count();
            let trimmed = current.trim_matches('\'');
            if !trimmed.is_empty() {
                tokens.push(trimmed.to_string());
                offsets.push(start + leading);
            }
            current.clear();
        };

    for (pos, c) in text.chars().enumerate() {
        if c.is_ascii_alphanumeric() || c == '\'' {
            if current.is_empty() {
                start = pos;
            }
            current.push(c.to_ascii_lowercase());
        } else {
            flush(&mut current, start, &mut tokens, &mut origin_offsets);
        }
    }
    flush(&mut current, start, &mut tokens, &mut origin_offsets);
    TokenSequence {
        tokens,
        origin_offsets,
    }
}

/// Tokenizes and drops stopwords; convenience for phrase handling.
pub fn content_tokens(text: &str, stopwords: &StopwordList) -> Vec<String> {
    tokenize(text)
        .tokens
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// Set of lowercase tokens ignored by title normalization, phrase
/// embedding, and the detection gap rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: BTreeSet<String>,
}

impl StopwordList {
    /// Builds a list from the given tokens without the core-stopword check;
    /// intended for tests and ad-hoc sets.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordList {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// Loads a stopword file (one token per line, `#` starts a comment) and
    /// verifies it is non-empty and contains the core English stopwords.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let words: BTreeSet<String> = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(CorpusError::EmptyStopwords {
                path: path.to_path_buf(),
            });
        }
        let missing: Vec<&str> = CORE_STOPWORDS
            .iter()
            .copied()
            .filter(|w| !words.contains(*w))
            .collect();
        if !missing.is_empty() {
            return Err(CorpusError::IncompleteStopwords {
                path: path.to_path_buf(),
                missing: missing.join(", "),
            });
        }
        Ok(StopwordList { words })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|s| s.as_str())
    }

    /// Writes the list in the file format accepted by [`StopwordList::load`].
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = fs::File::create(path).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        for w in &self.words {
            writeln!(out, "{w}").map_err(|e| CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
        }
        Ok(())
    }
}

/// Loads a plain token-list file (one lowercase token per line, `#`
/// comments allowed): competence terms, whitelists, adjective lists.
pub fn load_token_list(path: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text
        .lines()
        .map(|line| line.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect())
}

/// Canonical job-title key: the multiset of non-stopword title tokens,
/// serialized sorted. Invariant under word order and stopword insertion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormalizedTitle {
    key: String,
}

impl NormalizedTitle {
    pub fn key(&self) -> &str {
        &self.key
    }
}

impl fmt::Display for NormalizedTitle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.key.fmt(f)
    }
}

/// Normalizes a raw title. `None` signals a title made only of stopwords,
/// which excludes the ad from title-matched analyses.
pub fn normalize_title(title: &str, stopwords: &StopwordList) -> Option<NormalizedTitle> {
    let mut tokens: Vec<String> = tokenize(title)
        .tokens
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect();
    if tokens.is_empty() {
        return None;
    }
    tokens.sort_unstable();
    Some(NormalizedTitle {
        key: tokens.join(" "),
    })
}
