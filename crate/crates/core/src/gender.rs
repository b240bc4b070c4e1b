//! Gender-composition prediction and the stereotype analyses: mapping job
//! categories to official female shares, OLS regression of female share on
//! cluster indicators, and the Bem-trait prevalence/reward comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::clustering::{ClusterId, ClusterSet};
use crate::corpus::{AdId, JobAd};
use crate::detection::AdSkillSet;
use crate::stats::ttest::{equal_var_t_test, two_sided_p, TTestResult};
use crate::stats::{RewardResult, StatsError};

#[derive(Debug, Error)]
pub enum GenderError {
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
    #[error("{path} row {row}: bad field '{column}': {value}")]
    BadField {
        path: PathBuf,
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("corpus categories missing from the gender map: {0}")]
    UnmappedCategories(String),
    #[error("no ads qualify for the regression (need >= {min_skills} distinct skills)")]
    NoQualifyingAds { min_skills: usize },
    #[error("the {side}-dominated split contains no ads")]
    EmptySplitSide { side: &'static str },
    #[error("stereotype trait '{bem_trait}' maps to unknown cluster '{key}'")]
    UnknownCluster { bem_trait: String, key: String },
    #[error("duplicate stereotype trait '{0}'")]
    DuplicateTrait(String),
    #[error("stereotype trait '{bem_trait}': cluster '{key}' has no reward result")]
    MissingReward { bem_trait: String, key: String },
    #[error("no {0} stereotype rewards to compare")]
    EmptyGroup(&'static str),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A category's official female share, or N/A when no ONS category applies.
#[derive(Debug, Clone, PartialEq)]
pub enum CategoryShare {
    Share {
        ons_category: String,
        female_share: f64,
    },
    NotAvailable,
}

/// Job category -> female employment share (percent), per official labour
/// statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryGenderMap {
    rows: BTreeMap<String, CategoryShare>,
}

impl CategoryGenderMap {
    pub fn from_rows<I, S>(rows: I) -> Self
    where
        I: IntoIterator<Item = (S, CategoryShare)>,
        S: Into<String>,
    {
        CategoryGenderMap {
            rows: rows.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, category: &str) -> Option<&CategoryShare> {
        self.rows.get(category)
    }

    pub fn female_share(&self, category: &str) -> Option<f64> {
        match self.rows.get(category) {
            Some(CategoryShare::Share { female_share, .. }) => Some(*female_share),
            _ => None,
        }
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(|s| s.as_str())
    }
}

/// Loads the gender map TSV (`category, ons_category, female_share`);
/// `N/A` marks categories without a usable ONS mapping.
pub fn load_gender_map(path: &Path) -> Result<CategoryGenderMap, GenderError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => GenderError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => GenderError::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| GenderError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or(GenderError::MissingColumn {
                path: path.to_path_buf(),
                column: name,
            })
    };
    let cat_col = col("category")?;
    let ons_col = col("ons_category")?;
    let share_col = col("female_share")?;

    let mut rows = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| GenderError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let category = field(cat_col).to_string();
        let share_text = field(share_col);
        let share = if share_text.eq_ignore_ascii_case("n/a") {
            CategoryShare::NotAvailable
        } else {
            let value: f64 = share_text.parse().map_err(|_| GenderError::BadField {
                path: path.to_path_buf(),
                row: idx + 1,
                column: "female_share",
                value: share_text.to_string(),
            })?;
            if !(0.0..=100.0).contains(&value) {
                return Err(GenderError::BadField {
                    path: path.to_path_buf(),
                    row: idx + 1,
                    column: "female_share",
                    value: share_text.to_string(),
                });
            }
            CategoryShare::Share {
                ons_category: field(ons_col).to_string(),
                female_share: value,
            }
        };
        rows.insert(category, share);
    }
    Ok(CategoryGenderMap { rows })
}

/// Per-ad female shares, aligned with the corpus. N/A-mapped and
/// uncategorized ads carry `None` and are tallied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShareAttachment {
    pub shares: Vec<Option<f64>>,
    pub excluded_na: usize,
    pub excluded_uncategorized: usize,
}

/// Attaches each ad's category-level female share. Fails listing every
/// corpus category absent from the map.
pub fn attach_female_share(
    corpus: &[JobAd],
    map: &CategoryGenderMap,
) -> Result<ShareAttachment, GenderError> {
    let mut unmapped: BTreeSet<&str> = BTreeSet::new();
    for ad in corpus {
        if let Some(category) = &ad.category {
            if map.get(category).is_none() {
                unmapped.insert(category);
            }
        }
    }
    if !unmapped.is_empty() {
        let list: Vec<&str> = unmapped.into_iter().collect();
        return Err(GenderError::UnmappedCategories(list.join(", ")));
    }

    let mut attachment = ShareAttachment::default();
    for ad in corpus {
        match &ad.category {
            None => {
                attachment.excluded_uncategorized += 1;
                attachment.shares.push(None);
            }
            Some(category) => match map.get(category) {
                Some(CategoryShare::Share { female_share, .. }) => {
                    attachment.shares.push(Some(*female_share));
                }
                _ => {
                    attachment.excluded_na += 1;
                    attachment.shares.push(None);
                }
            },
        }
    }
    Ok(attachment)
}

/// Joins detections with attached shares into regression rows.
pub fn regression_rows(
    corpus: &[JobAd],
    detections: &BTreeMap<AdId, AdSkillSet>,
    attachment: &ShareAttachment,
) -> Vec<(BTreeSet<ClusterId>, f64)> {
    corpus
        .iter()
        .zip(&attachment.shares)
        .filter_map(|(ad, share)| {
            share.map(|s| {
                let clusters = detections
                    .get(&ad.id)
                    .map(|set| set.clusters.clone())
                    .unwrap_or_default();
                (clusters, s)
            })
        })
        .collect()
}

/// One fitted indicator coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientEntry {
    pub cluster: ClusterId,
    pub coefficient: f64,
    /// Two-sided classical-OLS p-value; `None` when the coefficient is
    /// rank-flagged or the degrees of freedom run out.
    pub p_value: Option<f64>,
    /// Qualifying ads mentioning the cluster.
    pub occurrences: usize,
    /// Set when the column participates in a collinear group.
    pub rank_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub intercept: f64,
    pub coefficients: Vec<CoefficientEntry>,
    pub r_squared: f64,
    pub n_observations: usize,
    pub rank_deficient: bool,
}

impl RegressionResult {
    pub fn coefficient(&self, cluster: &ClusterId) -> Option<&CoefficientEntry> {
        self.coefficients.iter().find(|c| &c.cluster == cluster)
    }
}

/// Ordinary least squares of the target on cluster indicators plus an
/// intercept, over rows with at least `min_skills` distinct clusters.
///
/// Solved via the normal equations with a Cholesky factorization; on rank
/// deficiency the minimum-norm solution is taken from an SVD and the
/// collinear columns are flagged. Coefficient p-values use classical
/// homoskedastic standard errors.
pub fn ols_fit(
    rows: &[(BTreeSet<ClusterId>, f64)],
    min_skills: usize,
) -> Result<RegressionResult, GenderError> {
    let qualifying: Vec<&(BTreeSet<ClusterId>, f64)> = rows
        .iter()
        .filter(|(set, _)| set.len() >= min_skills)
        .collect();
    let n = qualifying.len();
    if n == 0 {
        return Err(GenderError::NoQualifyingAds { min_skills });
    }

    let vocab: Vec<ClusterId> = {
        let mut set = BTreeSet::new();
        for (clusters, _) in &qualifying {
            set.extend(clusters.iter().cloned());
        }
        set.into_iter().collect()
    };
    let index: BTreeMap<&ClusterId, usize> =
        vocab.iter().enumerate().map(|(i, c)| (c, i + 1)).collect();
    let p = vocab.len() + 1; // intercept at column 0

    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut yty = 0.0;
    let mut y_sum = 0.0;
    let mut occurrences = vec![0usize; vocab.len()];
    for (clusters, y) in &qualifying {
        let cols: Vec<usize> = clusters.iter().map(|c| index[c]).collect();
        xtx[(0, 0)] += 1.0;
        xty[0] += y;
        yty += y * y;
        y_sum += y;
        for &j in &cols {
            occurrences[j - 1] += 1;
            xtx[(0, j)] += 1.0;
            xtx[(j, 0)] += 1.0;
            xty[j] += y;
            for &i in &cols {
                xtx[(i, j)] += 1.0;
            }
        }
    }

    let mut rank_deficient = false;
    let mut flagged = vec![false; p];
    let (beta, cov, rank) = match Cholesky::new(xtx.clone()) {
        Some(chol) => {
            let beta = chol.solve(&xty);
            let cov = chol.inverse();
            (beta, cov, p)
        }
        None => {
            rank_deficient = true;
            let svd = xtx.clone().svd(true, true);
            let max_sv = svd.singular_values.max();
            let tol = max_sv * 1e-10;
            let beta = svd
                .solve(&xty, tol)
                .expect("SVD solve with both factors requested");
            let cov = svd
                .clone()
                .pseudo_inverse(tol)
                .expect("SVD pseudo-inverse with both factors requested");
            let v_t = svd.v_t.as_ref().expect("V^T requested");
            let mut rank = 0usize;
            for (i, &sv) in svd.singular_values.iter().enumerate() {
                if sv > tol {
                    rank += 1;
                } else {
                    for j in 0..p {
                        if v_t[(i, j)].abs() > 1e-6 {
                            flagged[j] = true;
                        }
                    }
                }
            }
            (beta, cov, rank)
        }
    };

    // SSR from the accumulators: y'y - 2 b'X'y + b'X'X b.
    let ssr = (yty - 2.0 * beta.dot(&xty) + (&xtx * &beta).dot(&beta)).max(0.0);
    let sst = yty - y_sum * y_sum / n as f64;
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };

    let df = n as f64 - rank as f64;
    let sigma2 = if df > 0.0 { ssr / df } else { f64::NAN };
    let p_value = |j: usize, coeff: f64| -> Option<f64> {
        if flagged[j] || df <= 0.0 || !sigma2.is_finite() {
            return None;
        }
        let var = sigma2 * cov[(j, j)];
        if var <= 0.0 {
            return None;
        }
        Some(two_sided_p(coeff / var.sqrt(), df))
    };

    let coefficients: Vec<CoefficientEntry> = vocab
        .iter()
        .enumerate()
        .map(|(i, cluster)| {
            let j = i + 1;
            CoefficientEntry {
                cluster: cluster.clone(),
                coefficient: beta[j],
                p_value: p_value(j, beta[j]),
                occurrences: occurrences[i],
                rank_flagged: flagged[j],
            }
        })
        .collect();

    Ok(RegressionResult {
        intercept: beta[0],
        coefficients,
        r_squared,
        n_observations: n,
        rank_deficient,
    })
}

/// Residual-vs-design orthogonality defect max_j |X'r|_j / (1 + |X'y|_j).
/// Exposed for verification; a correct solve keeps this near zero.
pub fn normal_equation_defect(
    rows: &[(BTreeSet<ClusterId>, f64)],
    min_skills: usize,
    result: &RegressionResult,
) -> f64 {
    let qualifying: Vec<&(BTreeSet<ClusterId>, f64)> = rows
        .iter()
        .filter(|(set, _)| set.len() >= min_skills)
        .collect();
    let vocab: Vec<&ClusterId> = result.coefficients.iter().map(|c| &c.cluster).collect();
    let index: BTreeMap<&ClusterId, usize> =
        vocab.iter().enumerate().map(|(i, c)| (*c, i + 1)).collect();
    let p = vocab.len() + 1;
    let mut xtr = vec![0f64; p];
    let mut xty_abs = vec![0f64; p];
    for (clusters, y) in &qualifying {
        let mut fitted = result.intercept;
        for c in clusters.iter() {
            if let Some(&j) = index.get(c) {
                fitted += result.coefficients[j - 1].coefficient;
            }
        }
        let r = y - fitted;
        xtr[0] += r;
        xty_abs[0] += y.abs();
        for c in clusters.iter() {
            if let Some(&j) = index.get(c) {
                xtr[j] += r;
                xty_abs[j] += y.abs();
            }
        }
    }
    xtr.iter()
        .zip(&xty_abs)
        .map(|(r, scale)| r.abs() / (1.0 + scale))
        .fold(0.0, f64::max)
}

/// Which side of the dominance split a trait belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Gender {
    Feminine,
    Masculine,
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gender::Feminine => write!(f, "feminine"),
            Gender::Masculine => write!(f, "masculine"),
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "feminine" | "f" | "female" => Ok(Gender::Feminine),
            "masculine" | "m" | "male" => Ok(Gender::Masculine),
            _ => Err(()),
        }
    }
}

/// One Bem trait mapped to a skill cluster (by id or label).
#[derive(Debug, Clone, PartialEq)]
pub struct StereotypeEntry {
    pub bem_trait: String,
    pub gender: Gender,
    pub cluster_key: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StereotypeMap {
    pub entries: Vec<StereotypeEntry>,
}

/// Loads the stereotype map TSV (`bem_trait, gender, cluster_id`); `#`
/// comment lines are ignored, so excluded mappings can stay in the file.
pub fn load_stereotype_map(path: &Path) -> Result<StereotypeMap, GenderError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => GenderError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => GenderError::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| GenderError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or(GenderError::MissingColumn {
                path: path.to_path_buf(),
                column: name,
            })
    };
    let trait_col = col("bem_trait")?;
    let gender_col = col("gender")?;
    let cluster_col = col("cluster_id")?;

    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| GenderError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let bem_trait = field(trait_col);
        if !seen.insert(bem_trait.clone()) {
            return Err(GenderError::DuplicateTrait(bem_trait));
        }
        let gender_text = field(gender_col);
        let gender: Gender = gender_text.parse().map_err(|_| GenderError::BadField {
            path: path.to_path_buf(),
            row: idx + 1,
            column: "gender",
            value: gender_text,
        })?;
        entries.push(StereotypeEntry {
            bem_trait,
            gender,
            cluster_key: field(cluster_col),
        });
    }
    Ok(StereotypeMap { entries })
}

/// Thresholds for calling a category female- or male-dominated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceSplit {
    /// Female share at or above this is female-dominated.
    pub female_min: f64,
    /// Female share at or below this is male-dominated.
    pub male_max: f64,
}

impl Default for DominanceSplit {
    fn default() -> Self {
        DominanceSplit {
            female_min: 60.0,
            male_max: 40.0,
        }
    }
}

/// Splits mapped categories into female- and male-dominated sets; the
/// middle is excluded.
pub fn split_categories(
    map: &CategoryGenderMap,
    split: &DominanceSplit,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut female = BTreeSet::new();
    let mut male = BTreeSet::new();
    for category in map.categories() {
        if let Some(share) = map.female_share(category) {
            if share >= split.female_min {
                female.insert(category.to_string());
            } else if share <= split.male_max {
                male.insert(category.to_string());
            }
        }
    }
    (female, male)
}

/// Relative difference (P_f - P_m) / max(P_f, P_m) × 100; `None` when both
/// sides are zero.
pub fn relative_difference(p_f: f64, p_m: f64) -> Option<f64> {
    let denom = p_f.max(p_m);
    if denom == 0.0 {
        return None;
    }
    Some((p_f - p_m) / denom * 100.0)
}

/// Prevalence of one mapped cluster on both sides of the dominance split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StereotypePrevalence {
    pub bem_trait: String,
    pub gender: Gender,
    pub cluster: ClusterId,
    /// Percent of female-dominated-industry ads mentioning the cluster.
    pub p_f: f64,
    pub p_m: f64,
    pub rel_diff: Option<f64>,
}

/// Per-trait prevalence in female- vs male-dominated industries.
pub fn stereotype_prevalence(
    detections: &BTreeMap<AdId, AdSkillSet>,
    corpus: &[JobAd],
    map: &StereotypeMap,
    clusters: &ClusterSet,
    female_categories: &BTreeSet<String>,
    male_categories: &BTreeSet<String>,
) -> Result<Vec<StereotypePrevalence>, GenderError> {
    let side_ads = |categories: &BTreeSet<String>| -> Vec<&JobAd> {
        corpus
            .iter()
            .filter(|ad| {
                ad.category
                    .as_ref()
                    .map(|c| categories.contains(c))
                    .unwrap_or(false)
            })
            .collect()
    };
    let female_ads = side_ads(female_categories);
    let male_ads = side_ads(male_categories);
    if female_ads.is_empty() {
        return Err(GenderError::EmptySplitSide { side: "female" });
    }
    if male_ads.is_empty() {
        return Err(GenderError::EmptySplitSide { side: "male" });
    }

    let prevalence = |ads: &[&JobAd], cluster: &ClusterId| -> f64 {
        let hits = ads
            .iter()
            .filter(|ad| {
                detections
                    .get(&ad.id)
                    .map(|set| set.clusters.contains(cluster))
                    .unwrap_or(false)
            })
            .count();
        100.0 * hits as f64 / ads.len() as f64
    };

    map.entries
        .iter()
        .map(|entry| {
            let cluster = clusters
                .resolve(&entry.cluster_key)
                .ok_or_else(|| GenderError::UnknownCluster {
                    bem_trait: entry.bem_trait.clone(),
                    key: entry.cluster_key.clone(),
                })?
                .id
                .clone();
            let p_f = prevalence(&female_ads, &cluster);
            let p_m = prevalence(&male_ads, &cluster);
            Ok(StereotypePrevalence {
                bem_trait: entry.bem_trait.clone(),
                gender: entry.gender,
                cluster,
                p_f,
                p_m,
                rel_diff: relative_difference(p_f, p_m),
            })
        })
        .collect()
}

/// Group reward means and the one-tailed equal-variance test of
/// masculine > feminine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StereotypeComparison {
    pub feminine_mean: f64,
    pub masculine_mean: f64,
    pub test: TTestResult,
}

/// Mean rewards per stereotype gender plus the one-tailed equal-variance
/// t-test. Every mapped cluster must carry a reward result.
pub fn stereotype_reward_comparison(
    map: &StereotypeMap,
    clusters: &ClusterSet,
    rewards: &BTreeMap<ClusterId, RewardResult>,
) -> Result<StereotypeComparison, GenderError> {
    let mut feminine = Vec::new();
    let mut masculine = Vec::new();
    for entry in &map.entries {
        let cluster =
            clusters
                .resolve(&entry.cluster_key)
                .ok_or_else(|| GenderError::UnknownCluster {
                    bem_trait: entry.bem_trait.clone(),
                    key: entry.cluster_key.clone(),
                })?;
        let reward = rewards
            .get(&cluster.id)
            .ok_or_else(|| GenderError::MissingReward {
                bem_trait: entry.bem_trait.clone(),
                key: entry.cluster_key.clone(),
            })?;
        match entry.gender {
            Gender::Feminine => feminine.push(reward.r),
            Gender::Masculine => masculine.push(reward.r),
        }
    }
    if feminine.is_empty() {
        return Err(GenderError::EmptyGroup("feminine"));
    }
    if masculine.is_empty() {
        return Err(GenderError::EmptyGroup("masculine"));
    }
    let test = equal_var_t_test(&masculine, &feminine, true)?;
    Ok(StereotypeComparison {
        feminine_mean: feminine.iter().sum::<f64>() / feminine.len() as f64,
        masculine_mean: masculine.iter().sum::<f64>() / masculine.len() as f64,
        test,
    })
}

/// Writes the regression table (`cluster, coefficient, p_value, r, count`)
/// filtered to clusters with at least `min_count` occurrences and
/// p < `max_p`, sorted by coefficient descending. Summary lines (R², n,
/// intercept) ride along as comments.
pub fn write_regression_report(
    result: &RegressionResult,
    rewards: &BTreeMap<ClusterId, RewardResult>,
    path: &Path,
    min_count: usize,
    max_p: f64,
    header: Option<&str>,
) -> Result<(), GenderError> {
    let wrap = |e: std::io::Error| GenderError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    if let Some(comment) = header {
        writeln!(out, "# {comment}").map_err(wrap)?;
    }
    writeln!(out, "# r_squared {:.6}", result.r_squared).map_err(wrap)?;
    writeln!(out, "# intercept {:.6}", result.intercept).map_err(wrap)?;
    writeln!(out, "# n_observations {}", result.n_observations).map_err(wrap)?;
    writeln!(out, "# rank_deficient {}", result.rank_deficient).map_err(wrap)?;
    writeln!(out, "cluster\tcoefficient\tp_value\tr\tcount").map_err(wrap)?;

    let mut entries: Vec<&CoefficientEntry> = result
        .coefficients
        .iter()
        .filter(|c| {
            c.occurrences >= min_count
                && !c.rank_flagged
                && c.p_value.map(|p| p < max_p).unwrap_or(false)
        })
        .collect();
    entries.sort_by(|a, b| {
        b.coefficient
            .total_cmp(&a.coefficient)
            .then_with(|| a.cluster.cmp(&b.cluster))
    });
    for entry in entries {
        let reward = rewards.get(&entry.cluster);
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{}\t{}",
            entry.cluster,
            entry.coefficient,
            entry.p_value.unwrap_or(f64::NAN),
            reward
                .map(|r| format!("{:.1}{}", r.r, r.significance.stars()))
                .unwrap_or_default(),
            entry.occurrences,
        )
        .map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

/// Writes the stereotype table with one row per mapped trait and one
/// `average` row per gender; average rows are the exact arithmetic means of
/// their member rows.
pub fn write_stereotype_report(
    rows: &[StereotypePrevalence],
    rewards: &BTreeMap<ClusterId, RewardResult>,
    path: &Path,
    header: Option<&str>,
) -> Result<(), GenderError> {
    let wrap = |e: std::io::Error| GenderError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    if let Some(comment) = header {
        writeln!(out, "# {comment}").map_err(wrap)?;
    }
    writeln!(out, "bem_trait\tgender\tcluster\tr\tp_f\tp_m\trel_diff").map_err(wrap)?;

    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for gender in [Gender::Feminine, Gender::Masculine] {
        let members: Vec<&StereotypePrevalence> =
            rows.iter().filter(|r| r.gender == gender).collect();
        let mut reward_values = Vec::new();
        for row in &members {
            let reward = rewards.get(&row.cluster).map(|r| r.r);
            if let Some(r) = reward {
                reward_values.push(r);
            }
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}",
                row.bem_trait,
                gender,
                row.cluster,
                fmt_opt(reward),
                row.p_f,
                row.p_m,
                fmt_opt(row.rel_diff),
            )
            .map_err(wrap)?;
        }
        if members.is_empty() {
            continue;
        }
        let mean = |values: Vec<f64>| -> Option<f64> {
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let avg_reward = mean(reward_values);
        let avg_pf = mean(members.iter().map(|r| r.p_f).collect());
        let avg_pm = mean(members.iter().map(|r| r.p_m).collect());
        let avg_rel = mean(members.iter().filter_map(|r| r.rel_diff).collect());
        writeln!(
            out,
            "average\t{}\t\t{}\t{}\t{}\t{}",
            gender,
            fmt_opt(avg_reward),
            fmt_opt(avg_pf),
            fmt_opt(avg_pm),
            fmt_opt(avg_rel),
        )
        .map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}
