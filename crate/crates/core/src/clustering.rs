//! Grouping near-synonymous skill phrases into clusters.
//!
//! Phrases are embedded as the mean of their non-stopword token vectors and
//! clustered bottom-up under average-linkage cosine distance. The merge loop
//! is deterministic: ties pick the lexicographically smallest id pair.
//! Manual refinement replays a line-oriented edit script of split, merge,
//! move, and label directives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, StopwordList};
use crate::embedding::EmbeddingTable;
use crate::lexicon::SkillPhrase;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("cannot form {target} clusters from {available} vectors")]
    TooFewVectors { target: usize, available: usize },
    #[error("target cluster count must be at least 1")]
    ZeroTarget,
    #[error("edit script line {line}: {reason}")]
    BadDirective { line: usize, reason: String },
    #[error("directive {index}: {reason}")]
    EditFailed { index: usize, reason: String },
    #[error("cluster partition violated after directive {index}: {reason}")]
    PartitionViolated { index: usize, reason: String },
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
}

/// Stable cluster identifier (`c0001`, `c0002`, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterId(pub String);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<&str> for ClusterId {
    fn from(s: &str) -> Self {
        ClusterId(s.to_string())
    }
}

/// A phrase embedded as the mean of its covered token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseVector {
    pub phrase: String,
    pub vector: Vec<f64>,
    /// Tokens of the phrase found in the embedding table.
    pub covered_tokens: usize,
}

/// Mean of the phrase's non-stopword token embeddings. `None` when no token
/// is covered by the table; such phrases become singleton clusters.
pub fn embed_phrase(
    skill: &SkillPhrase,
    table: &EmbeddingTable,
    stopwords: &StopwordList,
) -> Option<PhraseVector> {
    let mut sum = vec![0f64; table.dimension()];
    let mut covered = 0usize;
    for token in tokenize(&skill.phrase).tokens {
        if stopwords.contains(&token) {
            continue;
        }
        if let Some(vector) = table.get(&token) {
            for (acc, &v) in sum.iter_mut().zip(vector) {
                *acc += v as f64;
            }
            covered += 1;
        }
    }
    if covered == 0 {
        return None;
    }
    for v in sum.iter_mut() {
        *v /= covered as f64;
    }
    Some(PhraseVector {
        phrase: skill.phrase.clone(),
        vector: sum,
        covered_tokens: covered,
    })
}

/// Cosine distance `1 - u.v / (|u||v|)`; zero-norm vectors are at distance 1
/// from everything.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    1.0 - dot / (nu * nv)
}

/// One skill cluster: members plus a representative label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    pub label: String,
    pub members: Vec<String>,
}

/// A partition of the phrase set into clusters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    /// Cosine distance of each merge, in merge order.
    pub linkage_heights: Vec<f64>,
    next_fresh: usize,
}

impl ClusterSet {
    /// Builds a set from pre-existing clusters (fresh ids for later edits
    /// continue after the largest `cNNNN` already present).
    pub fn from_clusters(clusters: Vec<Cluster>) -> Self {
        let next_fresh = clusters
            .iter()
            .filter_map(|c| {
                c.id.0
                    .strip_prefix('c')
                    .and_then(|n| n.parse::<usize>().ok())
            })
            .max()
            .unwrap_or(clusters.len());
        ClusterSet {
            clusters,
            linkage_heights: Vec::new(),
            next_fresh,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn get(&self, id: &ClusterId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| &c.id == id)
    }

    /// Resolves a cluster by id, falling back to its label.
    pub fn resolve(&self, key: &str) -> Option<&Cluster> {
        self.clusters
            .iter()
            .find(|c| c.id.0 == key)
            .or_else(|| self.clusters.iter().find(|c| c.label == key))
    }

    pub fn phrase_count(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    fn fresh_id(&mut self) -> ClusterId {
        loop {
            self.next_fresh += 1;
            let candidate = ClusterId(format!("c{:04}", self.next_fresh));
            if self.get(&candidate).is_none() {
                return candidate;
            }
        }
    }

    /// Appends one singleton cluster per phrase (used for phrases without a
    /// vector, which cannot be placed by the linkage).
    pub fn append_singletons<I, S>(&mut self, phrases: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for phrase in phrases {
            let phrase = phrase.into();
            let id = self.fresh_id();
            self.clusters.push(Cluster {
                id,
                label: phrase.clone(),
                members: vec![phrase],
            });
        }
    }

    /// Checks the partition property: non-empty disjoint clusters whose
    /// union is exactly `universe`.
    pub fn check_partition(&self, universe: &BTreeSet<String>) -> Result<(), String> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut ids: BTreeSet<&str> = BTreeSet::new();
        for cluster in &self.clusters {
            if cluster.members.is_empty() {
                return Err(format!("cluster {} is empty", cluster.id));
            }
            if !ids.insert(&cluster.id.0) {
                return Err(format!("duplicate cluster id {}", cluster.id));
            }
            for member in &cluster.members {
                if !seen.insert(member) {
                    return Err(format!("phrase '{member}' appears in two clusters"));
                }
                if !universe.contains(member) {
                    return Err(format!("phrase '{member}' is not in the phrase set"));
                }
            }
        }
        if seen.len() != universe.len() {
            let missing: Vec<&String> = universe
                .iter()
                .filter(|p| !seen.contains(p.as_str()))
                .collect();
            return Err(format!("uncovered phrases: {missing:?}"));
        }
        Ok(())
    }

    fn universe(&self) -> BTreeSet<String> {
        self.clusters
            .iter()
            .flat_map(|c| c.members.iter().cloned())
            .collect()
    }
}

/// Representative member: closest to the cluster centroid, ties resolved
/// lexicographically. Falls back to the first member when no vectors exist.
fn representative(members: &[usize], vectors: &[PhraseVector]) -> String {
    let dim = vectors[members[0]].vector.len();
    let mut centroid = vec![0f64; dim];
    for &m in members {
        for (acc, v) in centroid.iter_mut().zip(&vectors[m].vector) {
            *acc += v;
        }
    }
    for v in centroid.iter_mut() {
        *v /= members.len() as f64;
    }
    let mut best: Option<(f64, &str)> = None;
    for &m in members {
        let d = cosine_distance(&vectors[m].vector, &centroid);
        let phrase = vectors[m].phrase.as_str();
        best = match best {
            None => Some((d, phrase)),
            Some((bd, bp)) => {
                if d < bd || (d == bd && phrase < bp) {
                    Some((d, phrase))
                } else {
                    Some((bd, bp))
                }
            }
        };
    }
    best.unwrap().1.to_string()
}

/// Bottom-up average-linkage clustering under cosine distance.
///
/// Starts from singletons and repeatedly merges the pair of clusters with
/// the smallest mean pairwise member distance until `target_clusters`
/// remain. Equal-distance candidates merge the pair whose (smaller id,
/// larger id) tuple is lexicographically least, with a cluster's id being
/// the smallest input index it contains, so the result is deterministic.
pub fn agglomerate(
    vectors: &[PhraseVector],
    target_clusters: usize,
) -> Result<ClusterSet, ClusteringError> {
    if target_clusters == 0 {
        return Err(ClusteringError::ZeroTarget);
    }
    let n = vectors.len();
    if target_clusters > n {
        return Err(ClusteringError::TooFewVectors {
            target: target_clusters,
            available: n,
        });
    }

    // pair_sums[i][j]: sum of pairwise member distances between clusters i
    // and j. Sums (not means) merge exactly: S(a∪b, k) = S(a,k) + S(b,k).
    let mut pair_sums = vec![vec![0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(&vectors[i].vector, &vectors[j].vector);
            pair_sums[i][j] = d;
            pair_sums[j][i] = d;
        }
    }

    // Each active cluster is keyed by the smallest input index it contains.
    let mut members: BTreeMap<usize, Vec<usize>> = (0..n).map(|i| (i, vec![i])).collect();
    let mut heights = Vec::with_capacity(n - target_clusters);

    while members.len() > target_clusters {
        let ids: Vec<usize> = members.keys().copied().collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for (a_pos, &a) in ids.iter().enumerate() {
            for &b in &ids[a_pos + 1..] {
                let size_product = (members[&a].len() * members[&b].len()) as f64;
                let d = pair_sums[a][b] / size_product;
                let candidate = (d, a, b);
                best = match best {
                    None => Some(candidate),
                    Some(current) => {
                        if candidate.0 < current.0
                            || (candidate.0 == current.0
                                && (candidate.1, candidate.2) < (current.1, current.2))
                        {
                            Some(candidate)
                        } else {
                            Some(current)
                        }
                    }
                };
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        heights.push(height);

        let absorbed = members.remove(&b).unwrap();
        members.get_mut(&a).unwrap().extend(absorbed);
        for &k in &ids {
            if k != a && k != b {
                let sum = pair_sums[b][k];
                pair_sums[a][k] += sum;
                pair_sums[k][a] = pair_sums[a][k];
            }
        }
    }

    let mut clusters = Vec::with_capacity(members.len());
    for (seq, (_, mut cluster_members)) in members.into_iter().enumerate() {
        cluster_members.sort_unstable();
        let label = representative(&cluster_members, vectors);
        let mut phrases: Vec<String> = cluster_members
            .iter()
            .map(|&m| vectors[m].phrase.clone())
            .collect();
        phrases.sort_unstable();
        clusters.push(Cluster {
            id: ClusterId(format!("c{:04}", seq + 1)),
            label,
            members: phrases,
        });
    }
    let count = clusters.len();
    Ok(ClusterSet {
        clusters,
        linkage_heights: heights,
        next_fresh: count,
    })
}

/// A manual refinement directive.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterDirective {
    /// `merge <id> <id> [...]` — union into the first id.
    Merge(Vec<String>),
    /// `split <id> -> a ; b | c` — partition a cluster; the first part keeps
    /// the id, later parts get fresh ids.
    Split { id: String, parts: Vec<Vec<String>> },
    /// `move <phrase> -> <id>`.
    Move { phrase: String, target: String },
    /// `label <id> <name>`.
    Label { id: String, name: String },
}

/// Parses the cluster edit script. One directive per line; blank lines and
/// `#` comments are ignored.
pub fn parse_cluster_script(text: &str) -> Result<Vec<ClusterDirective>, ClusteringError> {
    let mut directives = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| ClusteringError::BadDirective {
            line: idx + 1,
            reason,
        };
        let (verb, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| err(format!("missing operand in '{line}'")))?;
        let rest = rest.trim();
        match verb {
            "merge" => {
                let ids: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if ids.len() < 2 {
                    return Err(err("merge needs at least two cluster ids".into()));
                }
                directives.push(ClusterDirective::Merge(ids));
            }
            "split" => {
                let (id, spec) = rest
                    .split_once("->")
                    .ok_or_else(|| err("split needs '<id> -> parts'".into()))?;
                let parts: Vec<Vec<String>> = spec
                    .split('|')
                    .map(|part| {
                        part.split(';')
                            .map(|p| p.trim().to_string())
                            .filter(|p| !p.is_empty())
                            .collect::<Vec<String>>()
                    })
                    .collect();
                if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
                    return Err(err("split needs two or more non-empty parts".into()));
                }
                directives.push(ClusterDirective::Split {
                    id: id.trim().to_string(),
                    parts,
                });
            }
            "move" => {
                let (phrase, target) = rest
                    .split_once("->")
                    .ok_or_else(|| err("move needs '<phrase> -> <id>'".into()))?;
                directives.push(ClusterDirective::Move {
                    phrase: phrase.trim().to_string(),
                    target: target.trim().to_string(),
                });
            }
            "label" => {
                let (id, name) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("label needs '<id> <name>'".into()))?;
                directives.push(ClusterDirective::Label {
                    id: id.to_string(),
                    name: name.trim().to_string(),
                });
            }
            other => return Err(err(format!("unknown directive '{other}'"))),
        }
    }
    Ok(directives)
}

/// Size bookkeeping for an edit replay.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClusterEditReport {
    pub directives_applied: usize,
    pub clusters_before: usize,
    pub clusters_after: usize,
}

/// Replays the edit script. The partition property is re-checked after every
/// directive; a dangling reference fails with the directive's index.
pub fn apply_cluster_edits(
    clusters: &ClusterSet,
    script: &[ClusterDirective],
) -> Result<(ClusterSet, ClusterEditReport), ClusteringError> {
    let mut set = clusters.clone();
    let universe = set.universe();
    let report_base = set.len();

    for (i, directive) in script.iter().enumerate() {
        let index = i + 1;
        let fail = |reason: String| ClusteringError::EditFailed { index, reason };
        match directive {
            ClusterDirective::Merge(ids) => {
                let positions: Vec<usize> = ids
                    .iter()
                    .map(|id| {
                        set.clusters
                            .iter()
                            .position(|c| c.id.0 == *id)
                            .ok_or_else(|| fail(format!("unknown cluster '{id}'")))
                    })
                    .collect::<Result<_, _>>()?;
                if positions.len() != positions.iter().collect::<BTreeSet<_>>().len() {
                    return Err(fail("merge lists a cluster twice".into()));
                }
                let keep = positions[0];
                let mut absorbed: Vec<String> = Vec::new();
                for &p in &positions[1..] {
                    absorbed.extend(set.clusters[p].members.iter().cloned());
                }
                set.clusters[keep].members.extend(absorbed);
                set.clusters[keep].members.sort_unstable();
                let drop_ids: BTreeSet<&String> = ids[1..].iter().collect();
                set.clusters.retain(|c| !drop_ids.contains(&c.id.0));
            }
            ClusterDirective::Split { id, parts } => {
                let pos = set
                    .clusters
                    .iter()
                    .position(|c| c.id.0 == *id)
                    .ok_or_else(|| fail(format!("unknown cluster '{id}'")))?;
                let current: BTreeSet<&String> = set.clusters[pos].members.iter().collect();
                let mut listed: BTreeSet<&String> = BTreeSet::new();
                for part in parts {
                    for phrase in part {
                        if !current.contains(phrase) {
                            return Err(fail(format!(
                                "phrase '{phrase}' is not in cluster '{id}'"
                            )));
                        }
                        if !listed.insert(phrase) {
                            return Err(fail(format!("phrase '{phrase}' listed twice in split")));
                        }
                    }
                }
                if listed.len() != current.len() {
                    return Err(fail(format!(
                        "split of '{id}' must list every member exactly once"
                    )));
                }
                let mut first = parts[0].clone();
                first.sort_unstable();
                set.clusters[pos].members = first;
                set.clusters[pos].label = set.clusters[pos].members[0].clone();
                for part in &parts[1..] {
                    let id = set.fresh_id();
                    let mut members = part.clone();
                    members.sort_unstable();
                    let label = members[0].clone();
                    set.clusters.push(Cluster { id, label, members });
                }
            }
            ClusterDirective::Move { phrase, target } => {
                let from = set
                    .clusters
                    .iter()
                    .position(|c| c.members.iter().any(|m| m == phrase))
                    .ok_or_else(|| fail(format!("phrase '{phrase}' is not in any cluster")))?;
                let to = set
                    .clusters
                    .iter()
                    .position(|c| c.id.0 == *target)
                    .ok_or_else(|| fail(format!("unknown cluster '{target}'")))?;
                if from == to {
                    continue;
                }
                set.clusters[from].members.retain(|m| m != phrase);
                set.clusters[to].members.push(phrase.clone());
                set.clusters[to].members.sort_unstable();
                if set.clusters[from].members.is_empty() {
                    set.clusters.remove(from);
                }
            }
            ClusterDirective::Label { id, name } => {
                let pos = set
                    .clusters
                    .iter()
                    .position(|c| c.id.0 == *id)
                    .ok_or_else(|| fail(format!("unknown cluster '{id}'")))?;
                set.clusters[pos].label = name.clone();
            }
        }
        set.check_partition(&universe)
            .map_err(|reason| ClusteringError::PartitionViolated { index, reason })?;
    }

    let report = ClusterEditReport {
        directives_applied: script.len(),
        clusters_before: report_base,
        clusters_after: set.len(),
    };
    Ok((set, report))
}

/// Writes the cluster TSV (`cluster_id, label, phrase`, one row per
/// member), optionally preceded by a `# ...` provenance line.
pub fn write_clusters(
    set: &ClusterSet,
    path: &Path,
    header: Option<&str>,
) -> Result<(), ClusteringError> {
    let file = std::fs::File::create(path).map_err(|e| ClusteringError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = std::io::BufWriter::new(file);
    if let Some(comment) = header {
        use std::io::Write;
        writeln!(out, "# {comment}").map_err(|e| ClusteringError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let wrap = |e: csv::Error| ClusteringError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    writer
        .write_record(["cluster_id", "label", "phrase"])
        .map_err(wrap)?;
    for cluster in &set.clusters {
        for member in &cluster.members {
            writer
                .write_record([
                    cluster.id.0.as_str(),
                    cluster.label.as_str(),
                    member.as_str(),
                ])
                .map_err(wrap)?;
        }
    }
    writer.flush().map_err(|e| ClusteringError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Loads a cluster TSV written by [`write_clusters`].
pub fn read_clusters(path: &Path) -> Result<ClusterSet, ClusteringError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => ClusteringError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => ClusteringError::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| ClusteringError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or(ClusteringError::MissingColumn {
                path: path.to_path_buf(),
                column: name,
            })
    };
    let id_col = col("cluster_id")?;
    let label_col = col("label")?;
    let phrase_col = col("phrase")?;

    let mut order: Vec<ClusterId> = Vec::new();
    let mut by_id: BTreeMap<ClusterId, Cluster> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| ClusteringError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let id = ClusterId(record.get(id_col).unwrap_or("").trim().to_string());
        let label = record.get(label_col).unwrap_or("").trim().to_string();
        let phrase = record.get(phrase_col).unwrap_or("").trim().to_string();
        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Cluster {
                id,
                label,
                members: Vec::new(),
            }
        });
        entry.members.push(phrase);
    }
    let clusters: Vec<Cluster> = order
        .into_iter()
        .map(|id| by_id.remove(&id).unwrap())
        .collect();
    let count = clusters.len();
    Ok(ClusterSet {
        clusters,
        linkage_heights: Vec::new(),
        next_fresh: count,
    })
}
