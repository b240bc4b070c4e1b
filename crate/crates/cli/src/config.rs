//! Pipeline configuration: a declarative TOML file with CLI-flag
//! overrides. Precedence is flag > file > default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use softskills::corpus::CorpusFormat;

/// Raw shape of the config file; every field optional so flags and
/// defaults can fill the gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub thresholds: ThresholdsSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub submissions: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub competence_terms: Option<PathBuf>,
    pub whitelist: Option<PathBuf>,
    pub lexicon_edits: Option<PathBuf>,
    pub cluster_edits: Option<PathBuf>,
    pub gender_map: Option<PathBuf>,
    pub stereotype_map: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsSection {
    pub confidence: Option<f64>,
    pub max_gap: Option<usize>,
    pub min_title_count: Option<usize>,
    pub min_count: Option<u64>,
    pub min_skills: Option<usize>,
    pub target_clusters: Option<usize>,
    pub whitelist_min_count: Option<usize>,
    pub female_dominance_min: Option<f64>,
    pub male_dominance_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub corpus_format: Option<String>,
    pub replicates: Option<usize>,
    pub bootstrap_replicates: Option<usize>,
    pub seed: Option<u64>,
    /// Ascending upper band boundaries in currency units.
    pub bands: Option<Vec<f64>>,
}

/// Flag-level overrides collected by clap; `None` means "not given".
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Corpus CSV path
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus column layout: standard | adzuna
    #[arg(long)]
    pub corpus_format: Option<String>,
    /// Crowd submissions CSV (text, source_ad)
    #[arg(long)]
    pub submissions: Option<PathBuf>,
    /// Annotation CSV (skill, snippet_id, worker_id, vote, trust)
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Word-embedding file (word2vec text or binary)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Stopword file
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Competence-term file
    #[arg(long)]
    pub competence_terms: Option<PathBuf>,
    /// Token whitelist for typo correction (derived from submissions if absent)
    #[arg(long)]
    pub whitelist: Option<PathBuf>,
    /// Lexicon curation script
    #[arg(long)]
    pub lexicon_edits: Option<PathBuf>,
    /// Cluster refinement script
    #[arg(long)]
    pub cluster_edits: Option<PathBuf>,
    /// Category -> female-share TSV
    #[arg(long)]
    pub gender_map: Option<PathBuf>,
    /// Bem trait -> cluster TSV
    #[arg(long)]
    pub stereotype_map: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Confidence threshold for short skills
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Max non-stopword words allowed before each pattern token
    #[arg(long)]
    pub max_gap: Option<usize>,
    /// Minimum ads per (category, title) group
    #[arg(long)]
    pub min_title_count: Option<usize>,
    /// Minimum aggregation count for reward reporting
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Minimum distinct skills per ad for the regression
    #[arg(long)]
    pub min_skills: Option<usize>,
    /// Cluster count before manual refinement
    #[arg(long)]
    pub target_clusters: Option<usize>,
    /// Minimum token occurrences for the derived whitelist
    #[arg(long)]
    pub whitelist_min_count: Option<usize>,
    /// Female share at or above this marks a female-dominated category
    #[arg(long)]
    pub female_dominance_min: Option<f64>,
    /// Female share at or below this marks a male-dominated category
    #[arg(long)]
    pub male_dominance_max: Option<f64>,
    /// Permutation replicates
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Bootstrap replicates for band CIs
    #[arg(long)]
    pub bootstrap_replicates: Option<usize>,
    /// RNG seed (required for analyze)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated ascending band boundaries, e.g. 20000,40000,60000,80000
    #[arg(long)]
    pub bands: Option<String>,
}

/// Fully resolved configuration; serialized into the run manifest and
/// hashed for report headers.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub corpus_format: CorpusFormat,
    pub submissions: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub stopwords: PathBuf,
    pub competence_terms: Option<PathBuf>,
    pub whitelist: Option<PathBuf>,
    pub lexicon_edits: Option<PathBuf>,
    pub cluster_edits: Option<PathBuf>,
    pub gender_map: Option<PathBuf>,
    pub stereotype_map: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub confidence: f64,
    pub max_gap: usize,
    pub min_title_count: usize,
    pub min_count: u64,
    pub min_skills: usize,
    pub target_clusters: usize,
    pub whitelist_min_count: usize,
    pub female_dominance_min: f64,
    pub male_dominance_max: f64,
    pub replicates: usize,
    pub bootstrap_replicates: usize,
    pub seed: Option<u64>,
    pub bands: Vec<f64>,
}

fn resolve_path(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

impl PipelineConfig {
    /// Merges defaults, the optional config file, and flag overrides.
    /// Relative paths from the file resolve against the file's directory;
    /// flag paths resolve against the working directory.
    pub fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let file: ConfigFile = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("cannot parse config file {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        let base = config_path.and_then(Path::parent);

        let path_of = |flag: &Option<PathBuf>, file_value: &Option<PathBuf>| -> Option<PathBuf> {
            flag.clone()
                .or_else(|| file_value.clone().map(|p| resolve_path(base, p)))
        };

        let format_text = overrides
            .corpus_format
            .clone()
            .or(file.run.corpus_format.clone())
            .unwrap_or_else(|| "standard".to_string());
        let corpus_format: CorpusFormat = format_text
            .parse()
            .map_err(|e: String| anyhow::anyhow!(e))?;

        let bands = match (&overrides.bands, &file.run.bands) {
            (Some(text), _) => {
                let mut parsed = Vec::new();
                for part in text.split(',') {
                    parsed.push(
                        part.trim()
                            .parse::<f64>()
                            .with_context(|| format!("bad band boundary '{part}'"))?,
                    );
                }
                parsed
            }
            (None, Some(list)) => list.clone(),
            (None, None) => vec![20_000.0, 40_000.0, 60_000.0, 80_000.0],
        };

        let config = PipelineConfig {
            corpus: path_of(&overrides.corpus, &file.paths.corpus),
            corpus_format,
            submissions: path_of(&overrides.submissions, &file.paths.submissions),
            annotations: path_of(&overrides.annotations, &file.paths.annotations),
            embeddings: path_of(&overrides.embeddings, &file.paths.embeddings),
            stopwords: path_of(&overrides.stopwords, &file.paths.stopwords)
                .unwrap_or_else(|| PathBuf::from("data/stopwords.txt")),
            competence_terms: path_of(&overrides.competence_terms, &file.paths.competence_terms),
            whitelist: path_of(&overrides.whitelist, &file.paths.whitelist),
            lexicon_edits: path_of(&overrides.lexicon_edits, &file.paths.lexicon_edits),
            cluster_edits: path_of(&overrides.cluster_edits, &file.paths.cluster_edits),
            gender_map: path_of(&overrides.gender_map, &file.paths.gender_map),
            stereotype_map: path_of(&overrides.stereotype_map, &file.paths.stereotype_map),
            out_dir: path_of(&overrides.out_dir, &file.paths.out_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            confidence: overrides
                .confidence
                .or(file.thresholds.confidence)
                .unwrap_or(0.7),
            max_gap: overrides.max_gap.or(file.thresholds.max_gap).unwrap_or(2),
            min_title_count: overrides
                .min_title_count
                .or(file.thresholds.min_title_count)
                .unwrap_or(2),
            min_count: overrides
                .min_count
                .or(file.thresholds.min_count)
                .unwrap_or(50),
            min_skills: overrides
                .min_skills
                .or(file.thresholds.min_skills)
                .unwrap_or(3),
            target_clusters: overrides
                .target_clusters
                .or(file.thresholds.target_clusters)
                .unwrap_or(190),
            whitelist_min_count: overrides
                .whitelist_min_count
                .or(file.thresholds.whitelist_min_count)
                .unwrap_or(2),
            female_dominance_min: overrides
                .female_dominance_min
                .or(file.thresholds.female_dominance_min)
                .unwrap_or(60.0),
            male_dominance_max: overrides
                .male_dominance_max
                .or(file.thresholds.male_dominance_max)
                .unwrap_or(40.0),
            replicates: overrides.replicates.or(file.run.replicates).unwrap_or(1000),
            bootstrap_replicates: overrides
                .bootstrap_replicates
                .or(file.run.bootstrap_replicates)
                .unwrap_or(1000),
            seed: overrides.seed.or(file.run.seed),
            bands,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            bail!("confidence threshold {} outside [0, 1]", self.confidence);
        }
        if self.target_clusters == 0 {
            bail!("target_clusters must be at least 1");
        }
        if !(0.0..=100.0).contains(&self.female_dominance_min)
            || !(0.0..=100.0).contains(&self.male_dominance_max)
        {
            bail!("dominance thresholds must be percentages");
        }
        if self.male_dominance_max >= self.female_dominance_min {
            bail!(
                "male_dominance_max ({}) must be below female_dominance_min ({})",
                self.male_dominance_max,
                self.female_dominance_min
            );
        }
        for pair in self.bands.windows(2) {
            if pair[1] <= pair[0] {
                bail!("band boundaries must be strictly ascending");
            }
        }
        if self.bands.first().map(|b| *b <= 0.0).unwrap_or(true) {
            bail!("band boundaries must be positive and non-empty");
        }
        Ok(())
    }

    /// Seed, or a validation error: stochastic stages refuse to run unseeded.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| anyhow::anyhow!("a --seed is required for stochastic stages"))
    }

    pub fn require_path<'a>(
        &self,
        field: &'static str,
        value: &'a Option<PathBuf>,
    ) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("config is missing the '{field}' path"))
    }
}
