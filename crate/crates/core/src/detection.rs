//! Detection of skill clusters in job descriptions.
//!
//! Patterns are the lexicon phrases with stopwords removed and, unless a
//! phrase keeps them, competence terms stripped. A pattern matches when its
//! tokens appear in order with at most `max_gap` non-stopword words (plus
//! any number of stopwords) before each token after the first. Word order is
//! never relaxed and tokens are not lemmatized.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::clustering::{ClusterId, ClusterSet};
use crate::corpus::{tokenize, AdId, JobAd, StopwordList, TokenSequence};

/// Carrier words that rarely identify a skill on their own.
pub const DEFAULT_COMPETENCE_TERMS: [&str; 10] = [
    "able",
    "ability",
    "abilities",
    "capable",
    "capability",
    "capabilities",
    "competence",
    "competent",
    "skill",
    "skills",
];

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("phrase '{phrase}' reduces to zero tokens after {stage} removal")]
    EmptyPattern { phrase: String, stage: &'static str },
    #[error("unknown category '{category}'")]
    UnknownCategory { category: String },
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

/// A compiled search pattern: the ordered tokens required in a description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillPattern {
    pub cluster_id: ClusterId,
    pub tokens: Vec<String>,
    pub keep_competence: bool,
    /// Lexicon phrase the pattern was compiled from.
    pub phrase: String,
}

/// One located match, spanning token indices (inclusive) of the ad.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOccurrence {
    pub ad_id: AdId,
    pub cluster_id: ClusterId,
    pub span: (usize, usize),
}

/// The distinct clusters detected in one ad.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdSkillSet {
    pub ad_id: AdId,
    pub clusters: BTreeSet<ClusterId>,
}

/// Whether stripping competence terms would leave the phrase too ambiguous:
/// single-content-word skills such as "communication skills" keep them.
pub fn default_keep_competence(
    phrase: &str,
    competence_terms: &BTreeSet<String>,
    stopwords: &StopwordList,
) -> bool {
    let content: Vec<String> = tokenize(phrase)
        .tokens
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect();
    let stripped: Vec<&String> = content
        .iter()
        .filter(|t| !competence_terms.contains(*t))
        .collect();
    stripped.len() < 2 && stripped.len() < content.len()
}

/// Compiles one pattern per cluster member phrase: tokens minus stopwords,
/// minus competence terms unless the phrase's keep flag is set. Duplicate
/// (cluster, tokens) patterns collapse. A phrase that strips to nothing is a
/// configuration error naming the phrase.
pub fn compile_patterns(
    clusters: &ClusterSet,
    competence_terms: &BTreeSet<String>,
    keep_competence: &HashMap<String, bool>,
    stopwords: &StopwordList,
) -> Result<Vec<SkillPattern>, DetectionError> {
    let mut patterns = Vec::new();
    let mut seen: BTreeSet<(ClusterId, Vec<String>)> = BTreeSet::new();
    for cluster in &clusters.clusters {
        for phrase in &cluster.members {
            let content: Vec<String> = tokenize(phrase)
                .tokens
                .into_iter()
                .filter(|t| !stopwords.contains(t))
                .collect();
            if content.is_empty() {
                return Err(DetectionError::EmptyPattern {
                    phrase: phrase.clone(),
                    stage: "stopword",
                });
            }
            let keep = keep_competence.get(phrase).copied().unwrap_or(false);
            let tokens: Vec<String> = if keep {
                content
            } else {
                let stripped: Vec<String> = content
                    .iter()
                    .filter(|t| !competence_terms.contains(*t))
                    .cloned()
                    .collect();
                if stripped.is_empty() {
                    return Err(DetectionError::EmptyPattern {
                        phrase: phrase.clone(),
                        stage: "competence-term",
                    });
                }
                stripped
            };
            if seen.insert((cluster.id.clone(), tokens.clone())) {
                patterns.push(SkillPattern {
                    cluster_id: cluster.id.clone(),
                    tokens,
                    keep_competence: keep,
                    phrase: phrase.clone(),
                });
            }
        }
    }
    Ok(patterns)
}

/// Corpus-level coverage numbers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub total_ads: usize,
    pub ads_with_any: usize,
    pub ads_with_three_plus: usize,
    /// Fraction of ads mentioning at least one cluster; `None` on an empty corpus.
    pub coverage_any: Option<f64>,
    pub coverage_three_plus: Option<f64>,
}

/// Immutable multi-pattern matcher. Patterns are indexed by first token so
/// each ad is scanned in one pass over its distinct tokens.
pub struct Detector {
    patterns: Vec<SkillPattern>,
    first_token_index: HashMap<String, Vec<usize>>,
    stopwords: StopwordList,
    max_gap: usize,
}

impl Detector {
    pub fn new(patterns: Vec<SkillPattern>, stopwords: StopwordList, max_gap: usize) -> Self {
        let mut first_token_index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, pattern) in patterns.iter().enumerate() {
            assert!(
                !pattern.tokens.is_empty(),
                "pattern '{}' has no tokens",
                pattern.phrase
            );
            first_token_index
                .entry(pattern.tokens[0].clone())
                .or_default()
                .push(i);
        }
        Detector {
            patterns,
            first_token_index,
            stopwords,
            max_gap,
        }
    }

    pub fn patterns(&self) -> &[SkillPattern] {
        &self.patterns
    }

    pub fn max_gap(&self) -> usize {
        self.max_gap
    }

    /// Finds every cluster in the token sequence, with the occurrences that
    /// produced them.
    pub fn detect(&self, ad_id: &AdId, seq: &TokenSequence) -> (AdSkillSet, Vec<MatchOccurrence>) {
        let n = seq.len();
        let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, token) in seq.tokens.iter().enumerate() {
            positions.entry(token.as_str()).or_default().push(i);
        }
        // non_stop[i]: count of non-stopword tokens in tokens[..i].
        let mut non_stop = vec![0usize; n + 1];
        for i in 0..n {
            non_stop[i + 1] = non_stop[i] + usize::from(!self.stopwords.contains(&seq.tokens[i]));
        }

        let mut candidate_patterns: Vec<usize> = positions
            .keys()
            .filter_map(|token| self.first_token_index.get(*token))
            .flatten()
            .copied()
            .collect();
        candidate_patterns.sort_unstable();

        let mut clusters = BTreeSet::new();
        let mut occurrences = Vec::new();
        for pattern_idx in candidate_patterns {
            let pattern = &self.patterns[pattern_idx];
            self.match_pattern(
                pattern,
                &positions,
                &non_stop,
                ad_id,
                &mut occurrences,
                &mut clusters,
            );
        }
        (
            AdSkillSet {
                ad_id: ad_id.clone(),
                clusters,
            },
            occurrences,
        )
    }

    /// Ordered-subsequence search with the per-token gap budget. For each
    /// pattern token we keep the feasible end positions; a position `q` is
    /// feasible when some feasible position `p` of the previous token has at
    /// most `max_gap` non-stopwords strictly between `p` and `q`. Only the
    /// latest previous position needs checking: later positions never have
    /// more intervening non-stopwords.
    fn match_pattern(
        &self,
        pattern: &SkillPattern,
        positions: &HashMap<&str, Vec<usize>>,
        non_stop: &[usize],
        ad_id: &AdId,
        occurrences: &mut Vec<MatchOccurrence>,
        clusters: &mut BTreeSet<ClusterId>,
    ) {
        let mut layers: Vec<Vec<(usize, usize)>> = Vec::with_capacity(pattern.tokens.len());
        {
            let first = match positions.get(pattern.tokens[0].as_str()) {
                Some(p) => p,
                None => return,
            };
            layers.push(first.iter().map(|&q| (q, usize::MAX)).collect());
        }
        for token in &pattern.tokens[1..] {
            let occ = match positions.get(token.as_str()) {
                Some(p) => p,
                None => return,
            };
            let prev = layers.last().unwrap();
            let mut layer = Vec::new();
            let mut prev_idx = 0usize; // index into prev of the last position < q
            let mut best: Option<usize> = None;
            for &q in occ {
                while prev_idx < prev.len() && prev[prev_idx].0 < q {
                    best = Some(prev_idx);
                    prev_idx += 1;
                }
                if let Some(b) = best {
                    let p = prev[b].0;
                    if non_stop[q] - non_stop[p + 1] <= self.max_gap {
                        layer.push((q, b));
                    }
                }
            }
            if layer.is_empty() {
                return;
            }
            layers.push(layer);
        }

        clusters.insert(pattern.cluster_id.clone());
        for &(end, mut back) in layers.last().unwrap() {
            let mut start = end;
            for layer in layers[..layers.len() - 1].iter().rev() {
                let (pos, prev_back) = layer[back];
                start = pos;
                if prev_back == usize::MAX {
                    break;
                }
                back = prev_back;
            }
            occurrences.push(MatchOccurrence {
                ad_id: ad_id.clone(),
                cluster_id: pattern.cluster_id.clone(),
                span: (start, end),
            });
        }
    }

    /// Detects over a whole corpus (parallel map, deterministic output) and
    /// summarizes coverage.
    pub fn detect_corpus(
        &self,
        corpus: &[JobAd],
    ) -> (BTreeMap<AdId, AdSkillSet>, DetectionSummary) {
        let sets: Vec<AdSkillSet> = corpus
            .par_iter()
            .map(|ad| self.detect(&ad.id, &tokenize(&ad.description)).0)
            .collect();
        let mut summary = DetectionSummary {
            total_ads: corpus.len(),
            ..DetectionSummary::default()
        };
        let mut map = BTreeMap::new();
        for set in sets {
            if !set.clusters.is_empty() {
                summary.ads_with_any += 1;
            }
            if set.clusters.len() >= 3 {
                summary.ads_with_three_plus += 1;
            }
            map.insert(set.ad_id.clone(), set);
        }
        if summary.total_ads > 0 {
            summary.coverage_any = Some(summary.ads_with_any as f64 / summary.total_ads as f64);
            summary.coverage_three_plus =
                Some(summary.ads_with_three_plus as f64 / summary.total_ads as f64);
        }
        (map, summary)
    }
}

/// One-shot convenience wrapper over [`Detector::detect`].
pub fn detect_in_ad(
    ad_id: &AdId,
    seq: &TokenSequence,
    patterns: &[SkillPattern],
    stopwords: &StopwordList,
    max_gap: usize,
) -> (AdSkillSet, Vec<MatchOccurrence>) {
    Detector::new(patterns.to_vec(), stopwords.clone(), max_gap).detect(ad_id, seq)
}

/// Per-category distinctiveness of a cluster: its mention percentage inside
/// the category minus its percentage across all categorized ads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistinctivenessRow {
    pub cluster_id: ClusterId,
    pub category: String,
    pub pct_in_category: f64,
    pub pct_overall: f64,
    pub delta: f64,
}

/// Distinctiveness rows for one category, sorted by delta descending.
/// Uncategorized ads are excluded from both percentages.
pub fn distinctiveness(
    detections: &BTreeMap<AdId, AdSkillSet>,
    corpus: &[JobAd],
    category: &str,
) -> Result<Vec<DistinctivenessRow>, DetectionError> {
    let categorized: Vec<&JobAd> = corpus.iter().filter(|ad| ad.category.is_some()).collect();
    let in_category: Vec<&JobAd> = categorized
        .iter()
        .copied()
        .filter(|ad| ad.category.as_deref() == Some(category))
        .collect();
    if in_category.is_empty() {
        return Err(DetectionError::UnknownCategory {
            category: category.to_string(),
        });
    }

    let mut overall: BTreeMap<&ClusterId, usize> = BTreeMap::new();
    let mut within: BTreeMap<&ClusterId, usize> = BTreeMap::new();
    for ad in &categorized {
        if let Some(set) = detections.get(&ad.id) {
            let inside = ad.category.as_deref() == Some(category);
            for cluster in &set.clusters {
                *overall.entry(cluster).or_default() += 1;
                if inside {
                    *within.entry(cluster).or_default() += 1;
                }
            }
        }
    }

    let mut rows: Vec<DistinctivenessRow> = overall
        .iter()
        .map(|(cluster, &overall_count)| {
            let within_count = within.get(*cluster).copied().unwrap_or(0);
            let pct_in_category = 100.0 * within_count as f64 / in_category.len() as f64;
            let pct_overall = 100.0 * overall_count as f64 / categorized.len() as f64;
            DistinctivenessRow {
                cluster_id: (*cluster).clone(),
                category: category.to_string(),
                pct_in_category,
                pct_overall,
                delta: pct_in_category - pct_overall,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.delta
            .total_cmp(&a.delta)
            .then_with(|| a.cluster_id.cmp(&b.cluster_id))
    });
    Ok(rows)
}

/// Writes detections as TSV: `ad_id` and the sorted cluster ids joined by
/// commas. An optional `# ...` header line carries provenance.
pub fn write_detections(
    detections: &BTreeMap<AdId, AdSkillSet>,
    path: &Path,
    header: Option<&str>,
) -> Result<(), DetectionError> {
    use std::io::Write;
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| DetectionError::Io {
            path: path.to_path_buf(),
            source: e,
        })?);
    let wrap = |e: std::io::Error| DetectionError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if let Some(comment) = header {
        writeln!(out, "# {comment}").map_err(wrap)?;
    }
    writeln!(out, "ad_id\tclusters").map_err(wrap)?;
    for (ad_id, set) in detections {
        let clusters: Vec<&str> = set.clusters.iter().map(|c| c.0.as_str()).collect();
        writeln!(out, "{}\t{}", ad_id.0, clusters.join(",")).map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

/// Reads a detections TSV written by [`write_detections`].
pub fn read_detections(path: &Path) -> Result<BTreeMap<AdId, AdSkillSet>, DetectionError> {
    let text = std::fs::read_to_string(path).map_err(|e| DetectionError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(header) if header.trim() == "ad_id\tclusters" => {}
        _ => {
            return Err(DetectionError::MissingColumn {
                path: path.to_path_buf(),
                column: "ad_id",
            })
        }
    }
    let mut map = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (ad, clusters) = line.split_once('\t').unwrap_or((line, ""));
        let ad_id = AdId(ad.to_string());
        let clusters: BTreeSet<ClusterId> = clusters
            .split(',')
            .filter(|c| !c.is_empty())
            .map(|c| ClusterId(c.trim().to_string()))
            .collect();
        map.insert(ad_id.clone(), AdSkillSet { ad_id, clusters });
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Cluster;
    use proptest::prelude::*;

    fn stopwords() -> StopwordList {
        StopwordList::from_words([
            "the", "a", "an", "of", "to", "in", "and", "with", "for", "on",
        ])
    }

    fn competence() -> BTreeSet<String> {
        DEFAULT_COMPETENCE_TERMS
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn pattern(cluster: &str, tokens: &[&str]) -> SkillPattern {
        SkillPattern {
            cluster_id: cluster.into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            keep_competence: false,
            phrase: tokens.join(" "),
        }
    }

    fn matches(text: &str, tokens: &[&str], max_gap: usize) -> bool {
        let (set, _) = detect_in_ad(
            &AdId("t".into()),
            &tokenize(text),
            &[pattern("c1", tokens)],
            &stopwords(),
            max_gap,
        );
        !set.clusters.is_empty()
    }

    #[test]
    fn compile_strips_competence_and_stopwords() {
        let clusters = ClusterSet::from_clusters(vec![Cluster {
            id: "c0001".into(),
            label: "multitasking".into(),
            members: vec!["capable of handling multiple tasks".into()],
        }]);
        let patterns =
            compile_patterns(&clusters, &competence(), &HashMap::new(), &stopwords()).unwrap();
        assert_eq!(patterns.len(), 1);
        assert_eq!(patterns[0].tokens, vec!["handling", "multiple", "tasks"]);
    }

    #[test]
    fn compile_honors_keep_competence() {
        let clusters = ClusterSet::from_clusters(vec![Cluster {
            id: "c0002".into(),
            label: "communication skills".into(),
            members: vec!["communication skills".into()],
        }]);
        let keep: HashMap<String, bool> = [("communication skills".to_string(), true)]
            .into_iter()
            .collect();
        let patterns = compile_patterns(&clusters, &competence(), &keep, &stopwords()).unwrap();
        assert_eq!(patterns[0].tokens, vec!["communication", "skills"]);
    }

    #[test]
    fn compile_passthrough_without_competence_terms() {
        let clusters = ClusterSet::from_clusters(vec![Cluster {
            id: "c0003".into(),
            label: "team player".into(),
            members: vec!["team player".into()],
        }]);
        let patterns =
            compile_patterns(&clusters, &competence(), &HashMap::new(), &stopwords()).unwrap();
        assert_eq!(patterns[0].tokens, vec!["team", "player"]);
    }

    #[test]
    fn compile_errors_on_fully_stripped_phrase() {
        let clusters = ClusterSet::from_clusters(vec![Cluster {
            id: "c0004".into(),
            label: "skills".into(),
            members: vec!["skills".into()],
        }]);
        match compile_patterns(&clusters, &competence(), &HashMap::new(), &stopwords()) {
            Err(DetectionError::EmptyPattern { phrase, .. }) => assert_eq!(phrase, "skills"),
            other => panic!("expected EmptyPattern, got {other:?}"),
        }
    }

    #[test]
    fn default_keep_competence_rule() {
        let comp = competence();
        let sw = stopwords();
        assert!(default_keep_competence("communication skills", &comp, &sw));
        assert!(!default_keep_competence(
            "capable of handling multiple tasks",
            &comp,
            &sw
        ));
        assert!(!default_keep_competence("team player", &comp, &sw));
        assert!(default_keep_competence("able", &comp, &sw));
    }

    #[test]
    fn gap_rule_examples() {
        // Stopwords are free; up to two extra words before each token.
        assert!(matches(
            "we want excellent verbal communication skills today",
            &["communication", "skills"],
            2
        ));
        assert!(!matches(
            "communication technologies",
            &["communication", "skills"],
            2
        ));
        assert!(!matches(
            "skills communication",
            &["communication", "skills"],
            2
        ));
        assert!(matches(
            "handling of many simultaneous multiple tasks",
            &["handling", "multiple", "tasks"],
            2
        ));
        assert!(!matches(
            "handling nothing really very interesting multiple tasks",
            &["handling", "multiple", "tasks"],
            2
        ));
    }

    #[test]
    fn first_token_needs_no_lookbehind() {
        assert!(matches(
            "one two three four five communication skills",
            &["communication", "skills"],
            0
        ));
    }

    #[test]
    fn repeated_tokens_need_layered_search() {
        // Greedy earliest-start would anchor on the first alpha and fail.
        assert!(matches("alpha alpha beta", &["alpha", "beta"], 0));
        assert!(matches("alpha filler alpha beta", &["alpha", "beta"], 0));
        // A skipped duplicate still counts toward the gap budget.
        assert!(!matches(
            "alpha beta beta gamma",
            &["alpha", "beta", "gamma"],
            0
        ));
        assert!(matches(
            "alpha beta beta gamma",
            &["alpha", "beta", "gamma"],
            1
        ));
    }

    #[test]
    fn occurrence_spans_contain_pattern_in_order() {
        let text = "alpha filler beta alpha beta";
        let seq = tokenize(text);
        let (_, occurrences) = detect_in_ad(
            &AdId("t".into()),
            &seq,
            &[pattern("c1", &["alpha", "beta"])],
            &stopwords(),
            2,
        );
        assert!(!occurrences.is_empty());
        for occ in &occurrences {
            let (s, e) = occ.span;
            assert!(s <= e && e < seq.len());
            let window = &seq.tokens[s..=e];
            let mut idx = 0;
            for tok in window {
                if idx < 2 && tok == ["alpha", "beta"][idx] {
                    idx += 1;
                }
            }
            assert_eq!(idx, 2, "span {s}..={e} misses pattern tokens");
        }
    }

    #[test]
    fn detect_corpus_summary() {
        let mk = |id: &str, desc: &str| JobAd {
            id: AdId(id.into()),
            title: "t".into(),
            description: desc.into(),
            category: Some("IT".into()),
            salary: None,
        };
        let corpus = vec![
            mk("1", "team player with communication talents"),
            mk("2", "nothing here"),
        ];
        let detector = Detector::new(vec![pattern("c1", &["team", "player"])], stopwords(), 2);
        let (map, summary) = detector.detect_corpus(&corpus);
        assert_eq!(summary.total_ads, 2);
        assert_eq!(summary.ads_with_any, 1);
        assert_eq!(summary.coverage_any, Some(0.5));
        assert!(map[&AdId("1".into())].clusters.contains(&"c1".into()));
        assert!(map[&AdId("2".into())].clusters.is_empty());
    }

    #[test]
    fn planted_two_ad_fixture() {
        let mk = |id: &str, desc: &str| JobAd {
            id: AdId(id.into()),
            title: "t".into(),
            description: desc.into(),
            category: Some("IT".into()),
            salary: None,
        };
        let corpus = vec![
            mk(
                "a",
                "we need a team player with excellent communication skills",
            ),
            mk("b", "the role requires handling of several multiple tasks"),
        ];
        let patterns = vec![
            pattern("teamwork", &["team", "player"]),
            pattern("communication", &["communication", "skills"]),
            pattern("multitask", &["handling", "multiple", "tasks"]),
        ];
        let detector = Detector::new(patterns, stopwords(), 2);
        let (map, _) = detector.detect_corpus(&corpus);
        let clusters_a: Vec<&str> = map[&AdId("a".into())]
            .clusters
            .iter()
            .map(|c| c.0.as_str())
            .collect();
        let clusters_b: Vec<&str> = map[&AdId("b".into())]
            .clusters
            .iter()
            .map(|c| c.0.as_str())
            .collect();
        assert_eq!(clusters_a, vec!["communication", "teamwork"]);
        assert_eq!(clusters_b, vec!["multitask"]);
    }

    #[test]
    fn duplicated_sentence_keeps_set_identical() {
        let text = "strong team player wanted for the group";
        let doubled = format!("{text} {text}");
        let patterns = vec![pattern("c1", &["team", "player"])];
        let single = detect_in_ad(
            &AdId("x".into()),
            &tokenize(text),
            &patterns,
            &stopwords(),
            2,
        )
        .0;
        let double = detect_in_ad(
            &AdId("x".into()),
            &tokenize(&doubled),
            &patterns,
            &stopwords(),
            2,
        )
        .0;
        assert_eq!(single.clusters, double.clusters);
    }

    #[test]
    fn distinctiveness_planted_fixture() {
        let mk = |id: &str, cat: &str, desc: &str| JobAd {
            id: AdId(id.into()),
            title: "t".into(),
            description: desc.into(),
            category: Some(cat.into()),
            salary: None,
        };
        // Skill in 50% of category A ads (1/2) and 10% of all ads (1/10).
        let mut corpus = vec![
            mk("a1", "A", "planted skill here"),
            mk("a2", "A", "nothing"),
        ];
        for i in 0..8 {
            corpus.push(mk(&format!("b{i}"), "B", "nothing"));
        }
        let detector = Detector::new(
            vec![pattern("planted", &["planted", "skill"])],
            stopwords(),
            2,
        );
        let (map, _) = detector.detect_corpus(&corpus);
        let rows = distinctiveness(&map, &corpus, "A").unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].pct_in_category - 50.0).abs() < 1e-12);
        assert!((rows[0].pct_overall - 10.0).abs() < 1e-12);
        assert!((rows[0].delta - 40.0).abs() < 1e-12);
    }

    #[test]
    fn distinctiveness_unknown_category_errors() {
        let corpus = vec![JobAd {
            id: AdId("1".into()),
            title: "t".into(),
            description: "d".into(),
            category: Some("A".into()),
            salary: None,
        }];
        assert!(matches!(
            distinctiveness(&BTreeMap::new(), &corpus, "Z"),
            Err(DetectionError::UnknownCategory { .. })
        ));
    }

    #[test]
    fn detections_tsv_round_trip() {
        let mut map = BTreeMap::new();
        for (id, clusters) in [("1", vec!["c0001", "c0002"]), ("2", vec![])] {
            let ad_id = AdId(id.to_string());
            map.insert(
                ad_id.clone(),
                AdSkillSet {
                    ad_id,
                    clusters: clusters.into_iter().map(ClusterId::from).collect(),
                },
            );
        }
        let f = tempfile::NamedTempFile::new().unwrap();
        write_detections(&map, f.path(), Some("config deadbeef")).unwrap();
        let loaded = read_detections(f.path()).unwrap();
        assert_eq!(map, loaded);
    }

    /// Reference matcher: enumerate every ordered token subsequence and
    /// check the gap rule directly.
    fn brute_force_matches(
        tokens: &[String],
        pattern: &[String],
        stopwords: &StopwordList,
        max_gap: usize,
    ) -> bool {
        fn recurse(
            tokens: &[String],
            pattern: &[String],
            stopwords: &StopwordList,
            max_gap: usize,
            level: usize,
            from: usize,
            prev: Option<usize>,
        ) -> bool {
            if level == pattern.len() {
                return true;
            }
            for q in from..tokens.len() {
                if tokens[q] != pattern[level] {
                    continue;
                }
                let gap_ok = match prev {
                    None => true,
                    Some(p) => {
                        let between = &tokens[p + 1..q];
                        between.iter().filter(|t| !stopwords.contains(t)).count() <= max_gap
                    }
                };
                if gap_ok
                    && recurse(
                        tokens,
                        pattern,
                        stopwords,
                        max_gap,
                        level + 1,
                        q + 1,
                        Some(q),
                    )
                {
                    return true;
                }
            }
            false
        }
        recurse(tokens, pattern, stopwords, max_gap, 0, 0, None)
    }

    proptest! {
        // Matcher agrees with the brute-force subsequence reference.
        #[test]
        fn matcher_equals_brute_force(
            text_ids in proptest::collection::vec(0..8u8, 0..30),
            pattern_ids in proptest::collection::vec(0..8u8, 1..4),
            max_gap in 0..3usize,
        ) {
            let vocab = ["alpha", "beta", "gamma", "delta", "the", "of", "to", "epsilon"];
            let tokens: Vec<String> = text_ids.iter().map(|&i| vocab[i as usize].to_string()).collect();
            let pattern_tokens: Vec<String> =
                pattern_ids.iter().map(|&i| vocab[i as usize].to_string()).collect();
            let sw = StopwordList::from_words(["the", "of", "to"]);

            let expected = brute_force_matches(&tokens, &pattern_tokens, &sw, max_gap);
            let seq = TokenSequence {
                origin_offsets: (0..tokens.len()).collect(),
                tokens: tokens.clone(),
            };
            let patterns = vec![SkillPattern {
                cluster_id: "c1".into(),
                tokens: pattern_tokens.clone(),
                keep_competence: false,
                phrase: pattern_tokens.join(" "),
            }];
            let (set, _) = detect_in_ad(&AdId("p".into()), &seq, &patterns, &sw, max_gap);
            prop_assert_eq!(!set.clusters.is_empty(), expected);
        }

        // Monotonicity: a match at gap g survives at gap g+1.
        #[test]
        fn gap_monotonicity(
            text_ids in proptest::collection::vec(0..6u8, 0..25),
            pattern_ids in proptest::collection::vec(0..6u8, 1..4),
            max_gap in 0..2usize,
        ) {
            let vocab = ["alpha", "beta", "gamma", "the", "of", "delta"];
            let tokens: Vec<String> = text_ids.iter().map(|&i| vocab[i as usize].to_string()).collect();
            let pattern_tokens: Vec<String> =
                pattern_ids.iter().map(|&i| vocab[i as usize].to_string()).collect();
            let sw = StopwordList::from_words(["the", "of"]);
            let seq = TokenSequence {
                origin_offsets: (0..tokens.len()).collect(),
                tokens,
            };
            let patterns = vec![SkillPattern {
                cluster_id: "c1".into(),
                tokens: pattern_tokens.clone(),
                keep_competence: false,
                phrase: pattern_tokens.join(" "),
            }];
            let at_g = !detect_in_ad(&AdId("p".into()), &seq, &patterns, &sw, max_gap).0.clusters.is_empty();
            let at_g1 = !detect_in_ad(&AdId("p".into()), &seq, &patterns, &sw, max_gap + 1).0.clusters.is_empty();
            prop_assert!(!at_g || at_g1);
        }

        // Stopword transparency: inserting stopwords never destroys a match.
        #[test]
        fn stopword_transparency(
            text_ids in proptest::collection::vec(0..4u8, 1..20),
            pattern_ids in proptest::collection::vec(0..4u8, 1..3),
            insert_at in proptest::collection::vec((0..20usize, 0..2u8), 0..5),
            max_gap in 0..3usize,
        ) {
            let vocab = ["alpha", "beta", "gamma", "delta"];
            let stop_vocab = ["the", "of"];
            let tokens: Vec<String> = text_ids.iter().map(|&i| vocab[i as usize].to_string()).collect();
            let pattern_tokens: Vec<String> =
                pattern_ids.iter().map(|&i| vocab[i as usize].to_string()).collect();
            let sw = StopwordList::from_words(stop_vocab);

            let mut noisy = tokens.clone();
            for &(pos, which) in &insert_at {
                let at = pos.min(noisy.len());
                noisy.insert(at, stop_vocab[which as usize].to_string());
            }

            let patterns = vec![SkillPattern {
                cluster_id: "c1".into(),
                tokens: pattern_tokens.clone(),
                keep_competence: false,
                phrase: pattern_tokens.join(" "),
            }];
            let seq = |toks: &[String]| TokenSequence {
                origin_offsets: (0..toks.len()).collect(),
                tokens: toks.to_vec(),
            };
            let before = !detect_in_ad(&AdId("p".into()), &seq(&tokens), &patterns, &sw, max_gap).0.clusters.is_empty();
            let after = !detect_in_ad(&AdId("p".into()), &seq(&noisy), &patterns, &sw, max_gap).0.clusters.is_empty();
            prop_assert!(!before || after);
        }
    }
}
