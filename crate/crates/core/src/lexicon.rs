//! Construction and curation of the soft-skill phrase list.
//!
//! Raw crowd submissions are cleaned automatically (whitespace, punctuation,
//! superfluous adjectives, edit-distance-1 typo correction against a
//! whitelist), then curated by a replayable edit script. Each short phrase is
//! scored by trust-weighted Candidate votes and the lexicon is filtered at a
//! confidence threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{tokenize, AdId, JobAd};

/// Adjectives stripped from the front of submitted phrases.
pub const DEFAULT_SUPERFLUOUS_ADJECTIVES: [&str; 6] =
    ["excellent", "highly", "very good", "good", "strong", "high"];

/// Snippets sampled per skill for the annotation task.
pub const DEFAULT_SNIPPET_COUNT: usize = 10;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path} row {row}: unknown vote '{value}' (expected Candidate, Company, or Other)")]
    BadVote {
        path: PathBuf,
        row: usize,
        value: String,
    },
    #[error("{path} row {row}: trust '{value}' outside (0, 1]")]
    BadTrust {
        path: PathBuf,
        row: usize,
        value: String,
    },
    #[error("{path} row {row}: bad field '{column}': {value}")]
    BadField {
        path: PathBuf,
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("edit script line {line}: {reason}")]
    BadDirective { line: usize, reason: String },
    #[error("confidence requires at least one annotation record")]
    NoRecords,
}

/// One phrase pasted by a crowdworker, with the ad it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSkillSubmission {
    pub text: String,
    pub source_ad: AdId,
}

/// A cleaned lexicon phrase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillPhrase {
    pub phrase: String,
    pub token_count: usize,
    /// Detection keeps this phrase's competence terms (`skills`, `able`, ...)
    /// instead of stripping them.
    pub keep_competence: bool,
    /// Trust-weighted Candidate share; `None` until the phrase is scored.
    pub confidence: Option<f64>,
}

impl SkillPhrase {
    pub fn new(phrase: impl Into<String>) -> Self {
        let phrase = phrase.into();
        let token_count = tokenize(&phrase).len();
        SkillPhrase {
            phrase,
            token_count,
            keep_competence: false,
            confidence: None,
        }
    }
}

/// How a crowdworker classified one snippet occurrence of a skill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vote {
    Candidate,
    Company,
    Other,
}

impl std::str::FromStr for Vote {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        match s.as_str() {
            "candidate" => Ok(Vote::Candidate),
            "other" => Ok(Vote::Other),
            _ if s.starts_with("company") => Ok(Vote::Company),
            _ => Err(()),
        }
    }
}

/// One crowdworker vote on one snippet, weighted by platform trust.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub skill: String,
    pub snippet_id: String,
    pub worker_id: String,
    pub vote: Vote,
    pub trust: f64,
}

/// A ±25-word context window around one occurrence of a skill.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub skill: String,
    pub ad_id: AdId,
    pub window: String,
}

/// Result of the automatic cleaning stage for one submission.
#[derive(Debug, Clone, PartialEq)]
pub enum CleanOutcome {
    Cleaned(SkillPhrase),
    /// Cleaning succeeded structurally but a token could not be validated;
    /// the phrase waits for a curation directive.
    NeedsReview {
        cleaned: String,
        reason: String,
    },
    Rejected {
        reason: String,
    },
}

fn strip_to_core(text: &str) -> String {
    // Keep alphanumerics, apostrophes, and internal hyphens; everything else
    // becomes a separator. Edge hyphens/apostrophes are trimmed per word.
    let mapped: String = text
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '\'' || c == '-' {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    mapped
        .split_whitespace()
        .map(|w| w.trim_matches(|c| c == '\'' || c == '-'))
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn strip_leading_adjectives(words: &mut Vec<String>, adjectives: &[Vec<String>]) {
    'outer: loop {
        for adj in adjectives {
            if adj.len() <= words.len() && words[..adj.len()] == adj[..] {
                words.drain(..adj.len());
                continue 'outer;
            }
        }
        break;
    }
}

/// True when `a` and `b` are within Levenshtein distance 1.
fn within_edit_distance_1(a: &str, b: &str) -> bool {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() {
        (&a, &b)
    } else {
        (&b, &a)
    };
    match long.len() - short.len() {
        0 => {
            short
                .iter()
                .zip(long.iter())
                .filter(|(x, y)| x != y)
                .count()
                <= 1
        }
        1 => {
            let mut i = 0;
            let mut j = 0;
            let mut skipped = false;
            while i < short.len() && j < long.len() {
                if short[i] == long[j] {
                    i += 1;
                    j += 1;
                } else if skipped {
                    return false;
                } else {
                    skipped = true;
                    j += 1;
                }
            }
            true
        }
        _ => false,
    }
}

fn adjective_sequences(adjectives: &BTreeSet<String>) -> Vec<Vec<String>> {
    // Longest sequences first so "very good" wins over "good".
    let mut seqs: Vec<Vec<String>> = adjectives
        .iter()
        .map(|a| a.split_whitespace().map(str::to_string).collect())
        .collect();
    seqs.sort_by_key(|s: &Vec<String>| std::cmp::Reverse(s.len()));
    seqs
}

/// Cleans one submission: lowercases, squeezes whitespace and punctuation,
/// strips leading superfluous adjectives, and corrects tokens to the
/// whitelist when a unique edit-distance-1 candidate exists. Tokens that
/// cannot be validated flag the phrase for manual review; ambiguous
/// corrections (two candidates at distance 1) do the same rather than guess.
pub fn clean_phrase(
    raw: &RawSkillSubmission,
    adjectives: &BTreeSet<String>,
    whitelist: &BTreeSet<String>,
) -> CleanOutcome {
    let core = strip_to_core(&raw.text);
    if core.is_empty() {
        return CleanOutcome::Rejected {
            reason: "empty after cleaning".into(),
        };
    }
    let mut words: Vec<String> = core.split(' ').map(str::to_string).collect();
    strip_leading_adjectives(&mut words, &adjective_sequences(adjectives));
    if words.is_empty() {
        return CleanOutcome::Rejected {
            reason: "only superfluous adjectives".into(),
        };
    }

    let token_valid = |w: &str| -> bool {
        whitelist.contains(w)
            || (w.contains('-') && w.split('-').all(|part| whitelist.contains(part)))
    };

    let mut corrected = Vec::with_capacity(words.len());
    for word in &words {
        if token_valid(word) {
            corrected.push(word.clone());
            continue;
        }
        let candidates: Vec<&String> = whitelist
            .iter()
            .filter(|w| within_edit_distance_1(word, w))
            .collect();
        match candidates.as_slice() {
            [unique] => corrected.push((*unique).clone()),
            [] => {
                return CleanOutcome::NeedsReview {
                    cleaned: words.join(" "),
                    reason: format!("token '{word}' not in whitelist, no close correction"),
                }
            }
            _ => {
                return CleanOutcome::NeedsReview {
                    cleaned: words.join(" "),
                    reason: format!(
                        "token '{word}' has {} whitelist corrections at distance 1",
                        candidates.len()
                    ),
                }
            }
        }
    }
    CleanOutcome::Cleaned(SkillPhrase::new(corrected.join(" ")))
}

/// Builds a token whitelist from the submissions themselves: every token
/// occurring at least `min_count` times. Used when no external whitelist
/// file is supplied.
pub fn whitelist_from_submissions(
    submissions: &[RawSkillSubmission],
    min_count: usize,
) -> BTreeSet<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for sub in submissions {
        for word in strip_to_core(&sub.text).split_whitespace() {
            *counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(w, _)| w)
        .collect()
}

/// A replayable manual-curation directive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexiconDirective {
    /// Approve a review-flagged phrase as-is.
    Keep(String),
    /// Remove a phrase from the lexicon.
    Drop(String),
    /// Replace a phrase (complement removal, respelling, ...).
    Rewrite { from: String, to: String },
}

/// Parses the line-oriented edit script: `keep <phrase>`, `drop <phrase>`,
/// `rewrite <phrase> -> <phrase>`. Blank lines and `#` comments are ignored.
pub fn parse_edit_script(text: &str) -> Result<Vec<LexiconDirective>, LexiconError> {
    let mut directives = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| LexiconError::BadDirective {
            line: idx + 1,
            reason,
        };
        let (verb, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| err(format!("missing operand in '{line}'")))?;
        let rest = rest.trim();
        match verb {
            "keep" => directives.push(LexiconDirective::Keep(rest.to_string())),
            "drop" => directives.push(LexiconDirective::Drop(rest.to_string())),
            "rewrite" => {
                let (from, to) = rest
                    .split_once("->")
                    .ok_or_else(|| err("rewrite needs '<from> -> <to>'".into()))?;
                let (from, to) = (from.trim(), to.trim());
                if from.is_empty() || to.is_empty() {
                    return Err(err("rewrite needs non-empty phrases".into()));
                }
                directives.push(LexiconDirective::Rewrite {
                    from: from.to_string(),
                    to: to.to_string(),
                });
            }
            other => return Err(err(format!("unknown directive '{other}'"))),
        }
    }
    Ok(directives)
}

/// Outcome of replaying the curation script over the cleaned submissions.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CurationReport {
    /// Final distinct phrases in first-appearance order.
    pub phrases: Vec<String>,
    pub dropped: Vec<String>,
    /// Review-flagged phrases no directive resolved; excluded from the lexicon.
    pub pending_review: Vec<String>,
    pub rejected: usize,
    /// Directives whose phrase matched nothing at their point in the replay.
    pub unmatched_directives: Vec<String>,
}

/// Replays the edit script over cleaning outcomes. Directives apply in
/// order; `keep` promotes review-flagged phrases, `rewrite` both corrects
/// phrases and resolves review flags, unresolved flags stay out.
pub fn curate(outcomes: &[CleanOutcome], script: &[LexiconDirective]) -> CurationReport {
    let mut report = CurationReport::default();
    // Phrase -> still under review? First-appearance order kept separately.
    let mut state: BTreeMap<String, bool> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let insert =
        |state: &mut BTreeMap<String, bool>, order: &mut Vec<String>, p: String, review: bool| {
            match state.get_mut(&p) {
                // A clean sighting of a phrase outweighs a review flag.
                Some(existing) => *existing = *existing && review,
                None => {
                    state.insert(p.clone(), review);
                    order.push(p);
                }
            }
        };

    for outcome in outcomes {
        match outcome {
            CleanOutcome::Cleaned(skill) => {
                insert(&mut state, &mut order, skill.phrase.clone(), false)
            }
            CleanOutcome::NeedsReview { cleaned, .. } => {
                insert(&mut state, &mut order, cleaned.clone(), true)
            }
            CleanOutcome::Rejected { .. } => report.rejected += 1,
        }
    }

    for directive in script {
        match directive {
            LexiconDirective::Keep(p) => match state.get_mut(p) {
                Some(review) => *review = false,
                None => report.unmatched_directives.push(format!("keep {p}")),
            },
            LexiconDirective::Drop(p) => {
                if state.remove(p).is_some() {
                    report.dropped.push(p.clone());
                } else {
                    report.unmatched_directives.push(format!("drop {p}"));
                }
            }
            LexiconDirective::Rewrite { from, to } => {
                if state.remove(from).is_some() {
                    insert(&mut state, &mut order, to.clone(), false);
                } else {
                    report
                        .unmatched_directives
                        .push(format!("rewrite {from} -> {to}"));
                }
            }
        }
    }

    for phrase in order {
        match state.get(&phrase) {
            Some(false) => report.phrases.push(phrase),
            Some(true) => report.pending_review.push(phrase),
            None => {} // dropped or rewritten away
        }
    }
    report
}

/// Positions (token indices) where the phrase occurs contiguously in `haystack`.
fn contiguous_occurrences(haystack: &[String], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| haystack[i..i + needle.len()] == *needle)
        .collect()
}

/// Extracts up to `n` seeded-random context snippets (25 words before and
/// after) for the skill's occurrences in the corpus. Deterministic for a
/// given seed; fewer snippets when the skill occurs fewer times.
pub fn extract_snippets(
    skill: &SkillPhrase,
    corpus: &[JobAd],
    n: usize,
    seed: u64,
) -> Vec<Snippet> {
    const WINDOW: usize = 25;
    let needle = tokenize(&skill.phrase).tokens;
    if needle.is_empty() {
        return Vec::new();
    }

    let mut occurrences: Vec<(usize, usize)> = Vec::new(); // (ad index, start token)
    let mut sequences: Vec<Option<crate::corpus::TokenSequence>> = vec![None; corpus.len()];
    for (ad_idx, ad) in corpus.iter().enumerate() {
        let seq = tokenize(&ad.description);
        let hits = contiguous_occurrences(&seq.tokens, &needle);
        if !hits.is_empty() {
            sequences[ad_idx] = Some(seq);
            occurrences.extend(hits.into_iter().map(|start| (ad_idx, start)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    occurrences.shuffle(&mut rng);
    occurrences.truncate(n);
    occurrences.sort_unstable();

    occurrences
        .into_iter()
        .map(|(ad_idx, start)| {
            let seq = sequences[ad_idx].as_ref().unwrap();
            let end = start + needle.len() - 1;
            let w_start = start.saturating_sub(WINDOW);
            let w_end = (end + WINDOW).min(seq.len() - 1);
            let char_start = seq.origin_offsets[w_start];
            let char_end = seq.origin_offsets[w_end] + seq.tokens[w_end].chars().count();
            let window: String = corpus[ad_idx]
                .description
                .chars()
                .skip(char_start)
                .take(char_end - char_start)
                .collect();
            Snippet {
                skill: skill.phrase.clone(),
                ad_id: corpus[ad_idx].id.clone(),
                window,
            }
        })
        .collect()
}

/// Trust-weighted share of Candidate votes over all of the skill's records:
/// the sum of trusts of workers voting Candidate divided by the sum of
/// trusts of all workers who assessed the skill.
pub fn compute_confidence(records: &[AnnotationRecord]) -> Result<f64, LexiconError> {
    if records.is_empty() {
        return Err(LexiconError::NoRecords);
    }
    let total: f64 = records.iter().map(|r| r.trust).sum();
    let candidate: f64 = records
        .iter()
        .filter(|r| r.vote == Vote::Candidate)
        .map(|r| r.trust)
        .sum();
    Ok(candidate / total)
}

/// Retention accounting for [`filter_lexicon`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RetentionReport {
    pub scored: usize,
    pub retained_scored: usize,
    /// Fraction of scored skills that passed the threshold.
    pub retention_fraction: f64,
    /// Phrases of three or fewer tokens that carried no score; these are
    /// dropped and listed here, since every short skill is expected scored.
    pub unscored_short: Vec<String>,
}

/// Keeps skills whose confidence reaches the threshold (inclusive). Skills
/// longer than three tokens pass unconditionally; they are taken to refer to
/// the candidate without annotation.
pub fn filter_lexicon(
    skills: &[SkillPhrase],
    threshold: f64,
) -> (Vec<SkillPhrase>, RetentionReport) {
    let mut report = RetentionReport::default();
    let mut kept = Vec::new();
    for skill in skills {
        if skill.token_count > 3 {
            kept.push(skill.clone());
            continue;
        }
        match skill.confidence {
            Some(c) => {
                report.scored += 1;
                if c >= threshold {
                    report.retained_scored += 1;
                    kept.push(skill.clone());
                }
            }
            None => report.unscored_short.push(skill.phrase.clone()),
        }
    }
    report.retention_fraction = if report.scored == 0 {
        1.0
    } else {
        report.retained_scored as f64 / report.scored as f64
    };
    (kept, report)
}

/// Cumulative count of distinct skills after each annotated ad, in order.
pub fn discovery_curve(annotated_ads: &[(AdId, Vec<String>)]) -> Vec<(usize, usize)> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    annotated_ads
        .iter()
        .enumerate()
        .map(|(i, (_, skills))| {
            for s in skills {
                seen.insert(s);
            }
            (i + 1, seen.len())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

fn open_csv(path: &Path, delimiter: u8) -> Result<csv::Reader<std::fs::File>, LexiconError> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => LexiconError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => LexiconError::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })
}

fn column_index(
    headers: &csv::StringRecord,
    name: &'static str,
    path: &Path,
) -> Result<usize, LexiconError> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| LexiconError::MissingColumn {
            path: path.to_path_buf(),
            column: name,
        })
}

/// Loads the annotation CSV (`skill, snippet_id, worker_id, vote, trust`).
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, LexiconError> {
    let mut reader = open_csv(path, b',')?;
    let headers = reader
        .headers()
        .map_err(|e| LexiconError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let skill = column_index(&headers, "skill", path)?;
    let snippet = column_index(&headers, "snippet_id", path)?;
    let worker = column_index(&headers, "worker_id", path)?;
    let vote = column_index(&headers, "vote", path)?;
    let trust = column_index(&headers, "trust", path)?;

    let mut records = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| LexiconError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let vote_text = field(vote);
        let vote: Vote = vote_text.parse().map_err(|_| LexiconError::BadVote {
            path: path.to_path_buf(),
            row,
            value: vote_text.clone(),
        })?;
        let trust_text = field(trust);
        let trust_value: f64 = trust_text.parse().map_err(|_| LexiconError::BadTrust {
            path: path.to_path_buf(),
            row,
            value: trust_text.clone(),
        })?;
        if !(trust_value > 0.0 && trust_value <= 1.0) {
            return Err(LexiconError::BadTrust {
                path: path.to_path_buf(),
                row,
                value: trust_text,
            });
        }
        records.push(AnnotationRecord {
            skill: field(skill),
            snippet_id: field(snippet),
            worker_id: field(worker),
            vote,
            trust: trust_value,
        });
    }
    Ok(records)
}

/// Loads the submissions CSV (`text, source_ad`).
pub fn load_submissions(path: &Path) -> Result<Vec<RawSkillSubmission>, LexiconError> {
    let mut reader = open_csv(path, b',')?;
    let headers = reader
        .headers()
        .map_err(|e| LexiconError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let text = column_index(&headers, "text", path)?;
    let source = column_index(&headers, "source_ad", path)?;

    let mut submissions = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| LexiconError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let text_value = record.get(text).unwrap_or("").trim().to_string();
        if text_value.is_empty() {
            return Err(LexiconError::BadField {
                path: path.to_path_buf(),
                row: idx + 1,
                column: "text",
                value: String::new(),
            });
        }
        submissions.push(RawSkillSubmission {
            text: text_value,
            source_ad: AdId(record.get(source).unwrap_or("").trim().to_string()),
        });
    }
    Ok(submissions)
}

/// One lexicon row: a scored skill phrase plus its cluster assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexiconEntry {
    pub skill: SkillPhrase,
    /// Filled by the clustering stage; empty until then.
    pub cluster_id: Option<String>,
}

/// Writes the lexicon TSV (`phrase, token_count, confidence, cluster_id,
/// keep_competence`), optionally preceded by a `# ...` provenance line.
/// Absent confidence/cluster fields stay empty.
pub fn write_lexicon(
    entries: &[LexiconEntry],
    path: &Path,
    header: Option<&str>,
) -> Result<(), LexiconError> {
    let file = std::fs::File::create(path).map_err(|e| LexiconError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = std::io::BufWriter::new(file);
    if let Some(comment) = header {
        use std::io::Write;
        writeln!(out, "# {comment}").map_err(|e| LexiconError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let wrap = |e: csv::Error| LexiconError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    writer
        .write_record([
            "phrase",
            "token_count",
            "confidence",
            "cluster_id",
            "keep_competence",
        ])
        .map_err(wrap)?;
    for entry in entries {
        writer
            .write_record([
                entry.skill.phrase.as_str(),
                &entry.skill.token_count.to_string(),
                &entry
                    .skill
                    .confidence
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
                entry.cluster_id.as_deref().unwrap_or(""),
                if entry.skill.keep_competence {
                    "true"
                } else {
                    "false"
                },
            ])
            .map_err(wrap)?;
    }
    writer.flush().map_err(|e| LexiconError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Loads a lexicon TSV written by [`write_lexicon`].
pub fn read_lexicon(path: &Path) -> Result<Vec<LexiconEntry>, LexiconError> {
    let mut reader = open_csv(path, b'\t')?;
    let headers = reader
        .headers()
        .map_err(|e| LexiconError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let phrase = column_index(&headers, "phrase", path)?;
    let token_count = column_index(&headers, "token_count", path)?;
    let confidence = column_index(&headers, "confidence", path)?;
    let cluster = column_index(&headers, "cluster_id", path)?;
    let keep = column_index(&headers, "keep_competence", path)?;

    let mut entries = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| LexiconError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let bad = |column: &'static str, value: &str| LexiconError::BadField {
            path: path.to_path_buf(),
            row,
            column,
            value: value.to_string(),
        };
        let token_count_value: usize = field(token_count)
            .parse()
            .map_err(|_| bad("token_count", field(token_count)))?;
        let confidence_value = match field(confidence) {
            "" => None,
            text => Some(text.parse::<f64>().map_err(|_| bad("confidence", text))?),
        };
        let keep_value = match field(keep) {
            "true" => true,
            "false" => false,
            other => return Err(bad("keep_competence", other)),
        };
        entries.push(LexiconEntry {
            skill: SkillPhrase {
                phrase: field(phrase).to_string(),
                token_count: token_count_value,
                keep_competence: keep_value,
                confidence: confidence_value,
            },
            cluster_id: match field(cluster) {
                "" => None,
                id => Some(id.to_string()),
            },
        });
    }
    Ok(entries)
}
