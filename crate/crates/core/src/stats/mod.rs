//! The matching study: per-(skill, category, title) salary rewards,
//! count-weighted aggregation, permutation significance, and the
//! skills-per-salary-band comparison.

pub mod ttest;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::clustering::ClusterId;
use crate::corpus::{normalize_title, AdId, JobAd, NormalizedTitle, StopwordList};
use crate::detection::AdSkillSet;
pub use ttest::{equal_var_t_test, welch_t_test, TTestResult};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample '{which}' has {n} values; at least {required} required")]
    UndersizedSample {
        which: &'static str,
        n: usize,
        required: usize,
    },
    #[error("no matched cells for skill '{0}'")]
    NoCells(ClusterId),
    #[error("permutation requires at least one replicate")]
    InvalidReplicates,
    #[error("invalid salary bands: {0}")]
    InvalidBands(String),
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Significance stars: `**` at p <= 0.01, `*` at p <= 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Significance {
    None,
    P05,
    P01,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        Self::from_p_with_alpha(p, 0.05)
    }

    /// `alpha` moves the single-star threshold; `**` stays pinned at 0.01.
    pub fn from_p_with_alpha(p: f64, alpha: f64) -> Self {
        if p <= 0.01 {
            Significance::P01
        } else if p <= alpha {
            Significance::P05
        } else {
            Significance::None
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Significance::None => "",
            Significance::P05 => "*",
            Significance::P01 => "**",
        }
    }
}

/// One matching cell: the ads of a (category, normalized title) group split
/// by whether they mention the skill. Both arms are non-empty by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedGroup {
    pub skill: ClusterId,
    pub category: String,
    pub title_key: NormalizedTitle,
    pub with_salaries: Vec<f64>,
    pub without_salaries: Vec<f64>,
}

impl MatchedGroup {
    /// Mean salary of the treated (skill-mentioning) arm.
    pub fn treated_mean(&self) -> f64 {
        self.with_salaries.iter().sum::<f64>() / self.with_salaries.len() as f64
    }

    /// Mean salary of the control arm.
    pub fn control_mean(&self) -> f64 {
        self.without_salaries.iter().sum::<f64>() / self.without_salaries.len() as f64
    }

    /// min(C, C-bar), the cell's aggregation weight.
    pub fn weight(&self) -> u64 {
        self.with_salaries.len().min(self.without_salaries.len()) as u64
    }
}

/// Normalized salary reward of one cell: (M - M̄) / M̄ × 100.
pub fn reward_cell(group: &MatchedGroup) -> f64 {
    let treated = group.treated_mean();
    let control = group.control_mean();
    (treated - control) / control * 100.0
}

/// A skill's aggregated reward with optional permutation significance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardResult {
    pub skill: ClusterId,
    /// Count-weighted mean cell reward, in percent.
    pub r: f64,
    /// Sum of min(C, C̄) over cells.
    pub count: u64,
    pub p_value: Option<f64>,
    pub significance: Significance,
}

/// Count-weighted mean over the skill's cells; `None` when there are none.
pub fn reward_aggregate<'a, I>(skill: &ClusterId, cells: I) -> Option<RewardResult>
where
    I: IntoIterator<Item = &'a MatchedGroup>,
{
    let mut num = 0.0;
    let mut den = 0u64;
    for cell in cells {
        let w = cell.weight();
        num += reward_cell(cell) * w as f64;
        den += w;
    }
    if den == 0 {
        return None;
    }
    Some(RewardResult {
        skill: skill.clone(),
        r: num / den as f64,
        count: den,
        p_value: None,
        significance: Significance::None,
    })
}

/// Permutation-test parameters. The seed is mandatory: every stochastic
/// stage must be reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermutationConfig {
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl PermutationConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        PermutationConfig {
            replicates,
            seed,
            alpha: 0.05,
        }
    }
}

/// Exclusion tallies from universe construction.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UniverseReport {
    pub ads_in: usize,
    pub excluded_no_salary: usize,
    pub excluded_no_category: usize,
    pub excluded_stopword_title: usize,
    pub excluded_small_group: usize,
    pub groups: usize,
}

struct GroupInfo {
    category: String,
    title: NormalizedTitle,
    start: usize,
    end: usize,
    salary_sum: f64,
}

/// The matching population: ads with a category, a usable title key, and a
/// salary, grouped by (category, title), keeping groups of at least
/// `min_title_count` ads. Skill sets are interned as dense cluster indices.
pub struct MatchUniverse {
    salaries: Vec<f64>,
    skills: Vec<Vec<u32>>,
    groups: Vec<GroupInfo>,
    cluster_ids: Vec<ClusterId>,
    pub report: UniverseReport,
}

impl MatchUniverse {
    pub fn build(
        corpus: &[JobAd],
        detections: &BTreeMap<AdId, AdSkillSet>,
        stopwords: &StopwordList,
        min_title_count: usize,
    ) -> Self {
        let mut report = UniverseReport::default();
        // (category, title) -> members as (ad id, salary).
        let mut cells: BTreeMap<(String, NormalizedTitle), Vec<(AdId, f64)>> = BTreeMap::new();
        for ad in corpus {
            let Some(category) = ad.category.clone() else {
                report.excluded_no_category += 1;
                continue;
            };
            let Some(salary) = ad.salary_point() else {
                report.excluded_no_salary += 1;
                continue;
            };
            let Some(title) = normalize_title(&ad.title, stopwords) else {
                report.excluded_stopword_title += 1;
                continue;
            };
            cells
                .entry((category, title))
                .or_default()
                .push((ad.id.clone(), salary));
        }

        // Dense cluster vocabulary over the qualifying ads.
        let mut cluster_ids: Vec<ClusterId> = Vec::new();
        {
            let mut seen = std::collections::BTreeSet::new();
            for members in cells.values() {
                if members.len() < min_title_count {
                    continue;
                }
                for (ad_id, _) in members {
                    if let Some(set) = detections.get(ad_id) {
                        for cluster in &set.clusters {
                            seen.insert(cluster.clone());
                        }
                    }
                }
            }
            cluster_ids.extend(seen);
        }
        let cluster_index: HashMap<&ClusterId, u32> = cluster_ids
            .iter()
            .enumerate()
            .map(|(i, c)| (c, i as u32))
            .collect();

        let mut salaries = Vec::new();
        let mut skills = Vec::new();
        let mut groups = Vec::new();
        for ((category, title), mut members) in cells {
            if members.len() < min_title_count {
                report.excluded_small_group += members.len();
                continue;
            }
            members.sort_by(|a, b| a.0.cmp(&b.0));
            let start = salaries.len();
            let mut salary_sum = 0.0;
            for (ad_id, salary) in &members {
                salaries.push(*salary);
                salary_sum += *salary;
                let mut ad_skills: Vec<u32> = detections
                    .get(ad_id)
                    .map(|set| set.clusters.iter().map(|c| cluster_index[c]).collect())
                    .unwrap_or_default();
                ad_skills.sort_unstable();
                skills.push(ad_skills);
            }
            groups.push(GroupInfo {
                category,
                title,
                start,
                end: salaries.len(),
                salary_sum,
            });
        }
        report.ads_in = salaries.len();
        report.groups = groups.len();
        MatchUniverse {
            salaries,
            skills,
            groups,
            cluster_ids,
            report,
        }
    }

    pub fn cluster_ids(&self) -> &[ClusterId] {
        &self.cluster_ids
    }

    pub fn ad_count(&self) -> usize {
        self.salaries.len()
    }

    fn cluster_position(&self, skill: &ClusterId) -> Option<usize> {
        self.cluster_ids.binary_search(skill).ok()
    }

    /// Reward and weight per cluster under an assignment of skill sets to
    /// ad slots (`assign[i]` = index of the ad whose skill set slot `i`
    /// receives). `None` where no valid cell exists.
    fn rewards_for_assignment(&self, assign: &[u32]) -> Vec<Option<(f64, u64)>> {
        let k = self.cluster_ids.len();
        let mut sum = vec![0f64; k];
        let mut cnt = vec![0u32; k];
        let mut touched: Vec<u32> = Vec::new();
        let mut num = vec![0f64; k];
        let mut den = vec![0u64; k];

        for group in &self.groups {
            let n_group = (group.end - group.start) as u32;
            let slots = &assign[group.start..group.end];
            let salaries = &self.salaries[group.start..group.end];
            for (&src, &salary) in slots.iter().zip(salaries) {
                for &c in &self.skills[src as usize] {
                    let c_us = c as usize;
                    if cnt[c_us] == 0 {
                        touched.push(c);
                    }
                    cnt[c_us] += 1;
                    sum[c_us] += salary;
                }
            }
            for &c in &touched {
                let c = c as usize;
                let n_with = cnt[c];
                if n_with < n_group {
                    let mean_with = sum[c] / n_with as f64;
                    let mean_without = (group.salary_sum - sum[c]) / (n_group - n_with) as f64;
                    let r = (mean_with - mean_without) / mean_without * 100.0;
                    let w = n_with.min(n_group - n_with) as u64;
                    num[c] += r * w as f64;
                    den[c] += w;
                }
                cnt[c] = 0;
                sum[c] = 0.0;
            }
            touched.clear();
        }

        (0..k)
            .map(|c| {
                if den[c] > 0 {
                    Some((num[c] / den[c] as f64, den[c]))
                } else {
                    None
                }
            })
            .collect()
    }

    fn identity_assignment(&self) -> Vec<u32> {
        (0..self.ad_count() as u32).collect()
    }

    /// Observed reward per cluster (no permutation).
    pub fn observed_rewards(&self) -> Vec<Option<(f64, u64)>> {
        self.rewards_for_assignment(&self.identity_assignment())
    }
}

/// Materializes every matching cell, keyed by (skill, category, title key).
pub fn build_matched_groups(
    corpus: &[JobAd],
    detections: &BTreeMap<AdId, AdSkillSet>,
    stopwords: &StopwordList,
    min_title_count: usize,
) -> BTreeMap<(ClusterId, String, String), MatchedGroup> {
    let universe = MatchUniverse::build(corpus, detections, stopwords, min_title_count);
    let mut out = BTreeMap::new();
    for group in &universe.groups {
        let mut present: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for slot in group.start..group.end {
            for &c in &universe.skills[slot] {
                present.entry(c).or_default().push(universe.salaries[slot]);
            }
        }
        let n_group = group.end - group.start;
        for (cluster_pos, with_salaries) in present {
            if with_salaries.len() == n_group {
                continue; // no control arm
            }
            let skill = universe.cluster_ids[cluster_pos as usize].clone();
            let without_salaries: Vec<f64> = (group.start..group.end)
                .filter(|&slot| !universe.skills[slot].contains(&cluster_pos))
                .map(|slot| universe.salaries[slot])
                .collect();
            out.insert(
                (
                    skill.clone(),
                    group.category.clone(),
                    group.title.key().to_string(),
                ),
                MatchedGroup {
                    skill,
                    category: group.category.clone(),
                    title_key: group.title.clone(),
                    with_salaries,
                    without_salaries,
                },
            );
        }
    }
    out
}

/// Permutation significance for every skill with at least one matched cell.
///
/// Each replicate shuffles the skill-set column against the fixed
/// (category, title, salary) records and recomputes every reward, weights
/// included. The p-value is the fraction of replicates whose |r| reaches
/// the observed |r|; replicates where a skill has no valid cell count as
/// not reaching it. Replicate RNG streams are indexed by replicate number,
/// so results do not depend on thread count.
pub fn permutation_p_values(
    universe: &MatchUniverse,
    config: &PermutationConfig,
) -> Result<BTreeMap<ClusterId, RewardResult>, StatsError> {
    if config.replicates == 0 {
        return Err(StatsError::InvalidReplicates);
    }
    let observed = universe.observed_rewards();
    let k = universe.cluster_ids.len();

    let exceed: Vec<u64> = (0..config.replicates)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(replicate as u64 + 1);
            let mut perm = universe.identity_assignment();
            perm.shuffle(&mut rng);
            let shuffled = universe.rewards_for_assignment(&perm);
            let mut hits = vec![0u64; k];
            for c in 0..k {
                if let (Some((r_obs, _)), Some((r_rand, _))) = (observed[c], shuffled[c]) {
                    if r_rand.abs() >= r_obs.abs() {
                        hits[c] = 1;
                    }
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let mut results = BTreeMap::new();
    for (c, obs) in observed.iter().enumerate() {
        if let Some((r, count)) = obs {
            let p = exceed[c] as f64 / config.replicates as f64;
            results.insert(
                universe.cluster_ids[c].clone(),
                RewardResult {
                    skill: universe.cluster_ids[c].clone(),
                    r: *r,
                    count: *count,
                    p_value: Some(p),
                    significance: Significance::from_p_with_alpha(p, config.alpha),
                },
            );
        }
    }
    Ok(results)
}

/// p-value for a single skill; `NoCells` when the skill never forms a cell.
pub fn permutation_test(
    universe: &MatchUniverse,
    skill: &ClusterId,
    config: &PermutationConfig,
) -> Result<f64, StatsError> {
    if universe.cluster_position(skill).is_none() {
        return Err(StatsError::NoCells(skill.clone()));
    }
    let results = permutation_p_values(universe, config)?;
    results
        .get(skill)
        .and_then(|r| r.p_value)
        .ok_or_else(|| StatsError::NoCells(skill.clone()))
}

/// Salary interval `(lower, upper]` in corpus currency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SalaryBand {
    pub lower: f64,
    pub upper: f64,
}

impl SalaryBand {
    pub fn contains(&self, salary: f64) -> bool {
        salary > self.lower && salary <= self.upper
    }
}

/// The four bands used for the skills-by-salary comparison.
pub fn default_bands() -> Vec<SalaryBand> {
    bands_from_boundaries(&[20_000.0, 40_000.0, 60_000.0, 80_000.0]).unwrap()
}

/// Builds contiguous bands from ascending upper boundaries, starting at 0.
pub fn bands_from_boundaries(bounds: &[f64]) -> Result<Vec<SalaryBand>, StatsError> {
    if bounds.is_empty() {
        return Err(StatsError::InvalidBands("no boundaries given".into()));
    }
    let mut bands = Vec::with_capacity(bounds.len());
    let mut lower = 0.0;
    for &upper in bounds {
        if upper <= lower {
            return Err(StatsError::InvalidBands(format!(
                "boundary {upper} does not exceed {lower}"
            )));
        }
        bands.push(SalaryBand { lower, upper });
        lower = upper;
    }
    Ok(bands)
}

/// Mean distinct-cluster count in one band with a bootstrap CI; empty bands
/// carry `None`s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SalaryBandSummary {
    pub band: SalaryBand,
    pub n_ads: usize,
    pub mean_skills: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// Welch test between two bands; `None` when a side has fewer than 2 ads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandPairTest {
    pub band_a: usize,
    pub band_b: usize,
    pub test: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SalaryBandReport {
    pub bands: Vec<SalaryBandSummary>,
    pub pairwise: Vec<BandPairTest>,
    pub bootstrap_replicates: usize,
    pub seed: u64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = q * (sorted.len() - 1) as f64;
    let low = rank.floor() as usize;
    let high = rank.ceil() as usize;
    let frac = rank - low as f64;
    sorted[low] * (1.0 - frac) + sorted[high] * frac
}

/// Mean skills per ad in each salary band, with 95% bootstrap CIs
/// (resampling ads with replacement) and all pairwise two-tailed Welch
/// tests. Ads without a salary, or with a salary outside every band, are
/// excluded.
pub fn skills_by_salary_band(
    corpus: &[JobAd],
    detections: &BTreeMap<AdId, AdSkillSet>,
    bands: &[SalaryBand],
    bootstrap_replicates: usize,
    seed: u64,
) -> Result<SalaryBandReport, StatsError> {
    if bands.is_empty() {
        return Err(StatsError::InvalidBands("no bands given".into()));
    }
    for pair in bands.windows(2) {
        if pair[1].lower != pair[0].upper {
            return Err(StatsError::InvalidBands(format!(
                "bands must be contiguous: ({}, {}] then ({}, {}]",
                pair[0].lower, pair[0].upper, pair[1].lower, pair[1].upper
            )));
        }
    }
    if bootstrap_replicates == 0 {
        return Err(StatsError::InvalidReplicates);
    }

    let mut counts: Vec<Vec<f64>> = vec![Vec::new(); bands.len()];
    for ad in corpus {
        let Some(salary) = ad.salary_point() else {
            continue;
        };
        if let Some(band_idx) = bands.iter().position(|b| b.contains(salary)) {
            let skills = detections
                .get(&ad.id)
                .map(|s| s.clusters.len())
                .unwrap_or(0);
            counts[band_idx].push(skills as f64);
        }
    }

    let mut summaries = Vec::with_capacity(bands.len());
    for (idx, (band, sample)) in bands.iter().zip(&counts).enumerate() {
        if sample.is_empty() {
            summaries.push(SalaryBandSummary {
                band: *band,
                n_ads: 0,
                mean_skills: None,
                ci_low: None,
                ci_high: None,
            });
            continue;
        }
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64 + 1);
        let mut means: Vec<f64> = (0..bootstrap_replicates)
            .map(|_| {
                let total: f64 = (0..sample.len())
                    .map(|_| sample[rng.gen_range(0..sample.len())])
                    .sum();
                total / sample.len() as f64
            })
            .collect();
        means.sort_by(f64::total_cmp);
        summaries.push(SalaryBandSummary {
            band: *band,
            n_ads: sample.len(),
            mean_skills: Some(mean),
            ci_low: Some(percentile(&means, 0.025)),
            ci_high: Some(percentile(&means, 0.975)),
        });
    }

    let mut pairwise = Vec::new();
    for a in 0..bands.len() {
        for b in (a + 1)..bands.len() {
            let test = if counts[a].len() >= 2 && counts[b].len() >= 2 {
                Some(welch_t_test(&counts[a], &counts[b]).expect("sizes checked"))
            } else {
                None
            };
            pairwise.push(BandPairTest {
                band_a: a,
                band_b: b,
                test,
            });
        }
    }

    Ok(SalaryBandReport {
        bands: summaries,
        pairwise,
        bootstrap_replicates,
        seed,
    })
}

/// Writes the reward table (`skill, r, count, p_value, stars`), sorted by
/// reward descending. Skills with `count` below `min_count` are hidden.
pub fn write_reward_report(
    results: &BTreeMap<ClusterId, RewardResult>,
    path: &Path,
    min_count: u64,
    header: Option<&str>,
) -> Result<(), StatsError> {
    let wrap = |e: std::io::Error| StatsError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut rows: Vec<&RewardResult> = results.values().filter(|r| r.count >= min_count).collect();
    rows.sort_by(|a, b| b.r.total_cmp(&a.r).then_with(|| a.skill.cmp(&b.skill)));

    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    if let Some(comment) = header {
        writeln!(out, "# {comment}").map_err(wrap)?;
    }
    writeln!(out, "skill\tr\tcount\tp_value\tstars").map_err(wrap)?;
    for row in rows {
        writeln!(
            out,
            "{}\t{:.4}\t{}\t{}\t{}",
            row.skill,
            row.r,
            row.count,
            row.p_value.map(|p| format!("{p:.6}")).unwrap_or_default(),
            row.significance.stars()
        )
        .map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::AdSkillSet;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn stopwords() -> StopwordList {
        StopwordList::from_words(["the", "a", "an", "of", "to", "in", "and", "with"])
    }

    fn group(with: &[f64], without: &[f64]) -> MatchedGroup {
        MatchedGroup {
            skill: "c1".into(),
            category: "IT".into(),
            title_key: normalize_title("Java Developer", &stopwords()).unwrap(),
            with_salaries: with.to_vec(),
            without_salaries: without.to_vec(),
        }
    }

    fn ad(id: &str, title: &str, category: &str, salary: f64) -> JobAd {
        JobAd {
            id: AdId(id.into()),
            title: title.into(),
            description: "text".into(),
            category: Some(category.into()),
            salary: crate::corpus::SalaryRange::new(salary, salary),
        }
    }

    fn detection(id: &str, clusters: &[&str]) -> (AdId, AdSkillSet) {
        let ad_id = AdId(id.to_string());
        (
            ad_id.clone(),
            AdSkillSet {
                ad_id,
                clusters: clusters.iter().map(|c| ClusterId::from(*c)).collect(),
            },
        )
    }

    #[test]
    fn reward_cell_worked_example() {
        // 28 treated at mean 46536, 182 control at mean 43170 -> 7.8%.
        let g = group(&[46_536.0; 28], &[43_170.0; 182]);
        let r = reward_cell(&g);
        assert!((r - 7.8).abs() < 0.05, "r = {r}");
    }

    #[test]
    fn reward_cell_zero_and_ten_percent() {
        assert_eq!(reward_cell(&group(&[50_000.0], &[50_000.0])), 0.0);
        let r = reward_cell(&group(&[110.0], &[100.0]));
        assert!((r - 10.0).abs() < 1e-12);
    }

    #[test]
    fn reward_cell_scale_invariant_but_not_shift_invariant() {
        let base = group(&[30_000.0, 34_000.0], &[28_000.0, 30_000.0]);
        let doubled = group(&[60_000.0, 68_000.0], &[56_000.0, 60_000.0]);
        assert_eq!(reward_cell(&base), reward_cell(&doubled));
        let shifted = group(&[31_000.0, 35_000.0], &[29_000.0, 31_000.0]);
        assert_ne!(reward_cell(&base), reward_cell(&shifted));
    }

    #[test]
    fn aggregate_weighted_mean() {
        // Cells (r=10, w=5) and (r=-2, w=15) -> (50 - 30)/20 = 1.0.
        let cell_a = group(&[110.0; 5], &[100.0; 20]);
        assert_eq!(reward_cell(&cell_a), 10.0);
        assert_eq!(cell_a.weight(), 5);
        let cell_b = group(&[98.0; 20], &[100.0; 15]);
        assert!((reward_cell(&cell_b) + 2.0).abs() < 1e-12);
        assert_eq!(cell_b.weight(), 15);
        let result = reward_aggregate(&"c1".into(), [&cell_a, &cell_b]).unwrap();
        assert!((result.r - 1.0).abs() < 1e-12);
        assert_eq!(result.count, 20);
    }

    #[test]
    fn aggregate_single_cell_is_identity() {
        let cell = group(&[120.0, 130.0], &[100.0]);
        let r = reward_aggregate(&"c1".into(), [&cell]).unwrap();
        assert_eq!(r.r, reward_cell(&cell));
        assert_eq!(r.count, 1);
        assert!(reward_aggregate(&"c1".into(), []).is_none());
    }

    #[test]
    fn matched_groups_fixture() {
        let corpus = vec![
            ad("1", "Java Developer", "IT", 40_000.0),
            ad("2", "Java Developer", "IT", 44_000.0),
            ad("3", "Developer Java", "IT", 30_000.0),
            ad("4", "java developer", "IT", 34_000.0),
            // Title occurring once: excluded.
            ad("5", "Unicorn Wrangler", "IT", 99_000.0),
        ];
        let detections: BTreeMap<AdId, AdSkillSet> = [
            detection("1", &["c1"]),
            detection("2", &["c1"]),
            detection("3", &[]),
            detection("4", &[]),
            detection("5", &["c1"]),
        ]
        .into_iter()
        .collect();
        let groups = build_matched_groups(&corpus, &detections, &stopwords(), 2);
        assert_eq!(groups.len(), 1);
        let cell = groups.values().next().unwrap();
        assert_eq!(cell.with_salaries.len(), 2);
        assert_eq!(cell.without_salaries.len(), 2);
        assert_eq!(cell.treated_mean(), 42_000.0);
        assert_eq!(cell.control_mean(), 32_000.0);
    }

    #[test]
    fn saturated_group_is_dropped() {
        let corpus = vec![
            ad("1", "Nurse", "Health", 30_000.0),
            ad("2", "Nurse", "Health", 31_000.0),
        ];
        let detections: BTreeMap<AdId, AdSkillSet> =
            [detection("1", &["c1"]), detection("2", &["c1"])]
                .into_iter()
                .collect();
        let groups = build_matched_groups(&corpus, &detections, &stopwords(), 2);
        assert!(groups.is_empty());
    }

    #[test]
    fn observed_rewards_match_cell_aggregation() {
        let corpus = vec![
            ad("1", "Java Developer", "IT", 40_000.0),
            ad("2", "Java Developer", "IT", 44_000.0),
            ad("3", "Developer Java", "IT", 30_000.0),
            ad("4", "Senior Nurse", "Health", 28_000.0),
            ad("5", "Nurse Senior", "Health", 26_000.0),
        ];
        let detections: BTreeMap<AdId, AdSkillSet> = [
            detection("1", &["c1", "c2"]),
            detection("2", &[]),
            detection("3", &["c1"]),
            detection("4", &["c1"]),
            detection("5", &[]),
        ]
        .into_iter()
        .collect();
        let universe = MatchUniverse::build(&corpus, &detections, &stopwords(), 2);
        let observed = universe.observed_rewards();
        let cells = build_matched_groups(&corpus, &detections, &stopwords(), 2);
        for (idx, cluster) in universe.cluster_ids().iter().enumerate() {
            let my_cells: Vec<&MatchedGroup> = cells
                .iter()
                .filter(|((s, _, _), _)| s == cluster)
                .map(|(_, g)| g)
                .collect();
            match reward_aggregate(cluster, my_cells.iter().copied()) {
                Some(expected) => {
                    let (r, count) = observed[idx].unwrap();
                    assert!((r - expected.r).abs() < 1e-12);
                    assert_eq!(count, expected.count);
                }
                None => assert!(observed[idx].is_none()),
            }
        }
    }

    #[test]
    fn permutation_two_ad_group_is_always_exceeded() {
        // One group of two ads, one treated: any shuffle gives |r_rand| =
        // |r_obs|, so p = 1 even with a single replicate.
        let corpus = vec![
            ad("1", "Chef", "Hospitality", 20_000.0),
            ad("2", "Chef", "Hospitality", 25_000.0),
        ];
        let detections: BTreeMap<AdId, AdSkillSet> = [detection("1", &["c1"]), detection("2", &[])]
            .into_iter()
            .collect();
        let universe = MatchUniverse::build(&corpus, &detections, &stopwords(), 2);
        let p = permutation_test(&universe, &"c1".into(), &PermutationConfig::new(1, 99)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn permutation_planted_effect_is_significant() {
        // 30 title groups, each with 4 ads; the treated ad pays 50% more.
        let mut corpus = Vec::new();
        let mut detections = BTreeMap::new();
        for g in 0..30 {
            for k in 0..4 {
                let id = format!("g{g}k{k}");
                let treated = k == 0;
                let base = 20_000.0 + (g as f64) * 500.0;
                let salary = if treated { base * 1.5 } else { base };
                corpus.push(ad(&id, &format!("Role {g}"), "IT", salary));
                let (ad_id, set) = detection(&id, if treated { &["c1"] } else { &[] });
                detections.insert(ad_id, set);
            }
        }
        let universe = MatchUniverse::build(&corpus, &detections, &stopwords(), 2);
        let p = permutation_test(&universe, &"c1".into(), &PermutationConfig::new(200, 7)).unwrap();
        assert!(p <= 0.01, "planted effect not significant: p = {p}");
    }

    #[test]
    fn permutation_deterministic_across_thread_counts() {
        let mut corpus = Vec::new();
        let mut detections = BTreeMap::new();
        for g in 0..10 {
            for k in 0..3 {
                let id = format!("g{g}k{k}");
                let salary = 20_000.0 + (g * 7 + k * 13) as f64 * 100.0;
                corpus.push(ad(&id, &format!("Role {g}"), "IT", salary));
                let clusters: &[&str] = if (g + k) % 2 == 0 { &["c1"] } else { &[] };
                let (ad_id, set) = detection(&id, clusters);
                detections.insert(ad_id, set);
            }
        }
        let universe = MatchUniverse::build(&corpus, &detections, &stopwords(), 2);
        let config = PermutationConfig::new(64, 1234);

        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| permutation_p_values(&universe, &config).unwrap())
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single, multi);
        assert_eq!(single, run(2));
    }

    #[test]
    fn permutation_invalid_replicates() {
        let universe = MatchUniverse::build(&[], &BTreeMap::new(), &stopwords(), 2);
        assert!(matches!(
            permutation_p_values(&universe, &PermutationConfig::new(0, 1)),
            Err(StatsError::InvalidReplicates)
        ));
    }

    #[test]
    fn permutation_unknown_skill_is_no_data() {
        let corpus = vec![
            ad("1", "Chef", "Hospitality", 20_000.0),
            ad("2", "Chef", "Hospitality", 25_000.0),
        ];
        let detections: BTreeMap<AdId, AdSkillSet> = [detection("1", &["c1"]), detection("2", &[])]
            .into_iter()
            .collect();
        let universe = MatchUniverse::build(&corpus, &detections, &stopwords(), 2);
        assert!(matches!(
            permutation_test(&universe, &"ghost".into(), &PermutationConfig::new(5, 1)),
            Err(StatsError::NoCells(_))
        ));
    }

    #[test]
    fn salary_bands_constant_counts_have_zero_width_ci() {
        let corpus: Vec<JobAd> = (0..10)
            .map(|i| ad(&i.to_string(), "Role", "IT", 15_000.0))
            .collect();
        let detections: BTreeMap<AdId, AdSkillSet> = corpus
            .iter()
            .map(|a| detection(&a.id.0, &["c1", "c2"]))
            .collect();
        let report =
            skills_by_salary_band(&corpus, &detections, &default_bands(), 200, 42).unwrap();
        let first = &report.bands[0];
        assert_eq!(first.n_ads, 10);
        assert_eq!(first.mean_skills, Some(2.0));
        assert_eq!(first.ci_low, Some(2.0));
        assert_eq!(first.ci_high, Some(2.0));
        // Other bands are empty.
        assert_eq!(report.bands[1].n_ads, 0);
        assert_eq!(report.bands[1].mean_skills, None);
    }

    #[test]
    fn salary_bands_identical_distributions_t_zero() {
        let mut corpus = Vec::new();
        let mut detections = BTreeMap::new();
        for i in 0..6 {
            // Same skill-count pattern in band 1 and band 2.
            let count: &[&str] = if i % 2 == 0 { &["c1"] } else { &["c1", "c2"] };
            let low = ad(&format!("lo{i}"), "Role", "IT", 15_000.0);
            let high = ad(&format!("hi{i}"), "Role", "IT", 35_000.0);
            let (id_lo, set_lo) = detection(&low.id.0, count);
            let (id_hi, set_hi) = detection(&high.id.0, count);
            corpus.push(low);
            corpus.push(high);
            detections.insert(id_lo, set_lo);
            detections.insert(id_hi, set_hi);
        }
        let report = skills_by_salary_band(&corpus, &detections, &default_bands(), 100, 9).unwrap();
        let pair = report
            .pairwise
            .iter()
            .find(|p| p.band_a == 0 && p.band_b == 1)
            .unwrap();
        let test = pair.test.unwrap();
        assert_eq!(test.t, 0.0);
        assert_eq!(test.p, 1.0);
    }

    #[test]
    fn bands_must_be_contiguous_and_ascending() {
        assert!(bands_from_boundaries(&[20_000.0, 10_000.0]).is_err());
        assert!(bands_from_boundaries(&[]).is_err());
        let bands = vec![
            SalaryBand {
                lower: 0.0,
                upper: 10.0,
            },
            SalaryBand {
                lower: 20.0,
                upper: 30.0,
            },
        ];
        assert!(matches!(
            skills_by_salary_band(&[], &BTreeMap::new(), &bands, 10, 0),
            Err(StatsError::InvalidBands(_))
        ));
    }

    #[test]
    fn bootstrap_ci_contains_point_estimate() {
        let corpus: Vec<JobAd> = (0..40)
            .map(|i| ad(&i.to_string(), "Role", "IT", 10_000.0 + (i as f64) * 100.0))
            .collect();
        let detections: BTreeMap<AdId, AdSkillSet> = corpus
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let clusters: Vec<&str> = match i % 3 {
                    0 => vec!["c1"],
                    1 => vec!["c1", "c2"],
                    _ => vec![],
                };
                detection(&a.id.0, &clusters)
            })
            .collect();
        let report =
            skills_by_salary_band(&corpus, &detections, &default_bands(), 500, 11).unwrap();
        for band in &report.bands {
            if let (Some(mean), Some(lo), Some(hi)) = (band.mean_skills, band.ci_low, band.ci_high)
            {
                assert!(lo <= mean && mean <= hi);
            }
        }
    }

    #[test]
    fn significance_thresholds() {
        assert_eq!(Significance::from_p(0.005).stars(), "**");
        assert_eq!(Significance::from_p(0.01).stars(), "**");
        assert_eq!(Significance::from_p(0.03).stars(), "*");
        assert_eq!(Significance::from_p(0.05).stars(), "*");
        assert_eq!(Significance::from_p(0.2).stars(), "");
        // A custom alpha moves the single-star bound, not the double.
        assert_eq!(Significance::from_p_with_alpha(0.08, 0.1).stars(), "*");
        assert_eq!(Significance::from_p_with_alpha(0.02, 0.01).stars(), "");
    }

    proptest! {
        // Aggregate reward lies within the cell rewards' range.
        #[test]
        fn aggregate_bounded_by_cells(
            cells in proptest::collection::vec(
                (
                    proptest::collection::vec(1000.0f64..100_000.0, 1..6),
                    proptest::collection::vec(1000.0f64..100_000.0, 1..6),
                ),
                1..8,
            )
        ) {
            let groups: Vec<MatchedGroup> = cells
                .iter()
                .map(|(w, wo)| group(w, wo))
                .collect();
            let rewards: Vec<f64> = groups.iter().map(reward_cell).collect();
            let min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let agg = reward_aggregate(&"c1".into(), groups.iter()).unwrap();
            prop_assert!(agg.r >= min - 1e-9 && agg.r <= max + 1e-9);
        }

        // Doubling every salary leaves the cell reward fixed exactly.
        #[test]
        fn reward_cell_scaling(
            with in proptest::collection::vec(1000.0f64..50_000.0, 1..5),
            without in proptest::collection::vec(1000.0f64..50_000.0, 1..5),
        ) {
            let base = group(&with, &without);
            let scaled = group(
                &with.iter().map(|s| s * 2.0).collect::<Vec<_>>(),
                &without.iter().map(|s| s * 2.0).collect::<Vec<_>>(),
            );
            prop_assert_eq!(reward_cell(&base), reward_cell(&scaled));
        }

        // Relabeling ad ids leaves permutation p-values unchanged.
        #[test]
        fn permutation_invariant_under_id_relabeling(seed in any::<u64>()) {
            let make = |prefix: &str| {
                let mut corpus = Vec::new();
                let mut detections = BTreeMap::new();
                for g in 0..4 {
                    for k in 0..3 {
                        let id = format!("{prefix}{}", g * 3 + k);
                        let salary = 20_000.0 + ((g * 3 + k) as f64) * 777.0;
                        corpus.push(ad(&id, &format!("Role {g}"), "IT", salary));
                        let clusters: &[&str] = if k == 0 { &["c1"] } else { &[] };
                        let (ad_id, set) = detection(&id, clusters);
                        detections.insert(ad_id, set);
                    }
                }
                MatchUniverse::build(&corpus, &detections, &stopwords(), 2)
            };
            // Same group structure, ids relabeled but order-preserving
            // within each group, so the universe layout is identical.
            let a = make("x");
            let b = make("y");
            let config = PermutationConfig::new(50, seed);
            let pa = permutation_p_values(&a, &config).unwrap();
            let pb = permutation_p_values(&b, &config).unwrap();
            let va: Vec<(ClusterId, Option<f64>)> =
                pa.into_iter().map(|(k, v)| (k, v.p_value)).collect();
            let vb: Vec<(ClusterId, Option<f64>)> =
                pb.into_iter().map(|(k, v)| (k, v.p_value)).collect();
            prop_assert_eq!(va, vb);
        }
    }

    #[test]
    fn reward_report_sorted_and_filtered() {
        let mut results = BTreeMap::new();
        for (name, r, count) in [("low", -3.0, 60), ("high", 9.0, 120), ("rare", 50.0, 3)] {
            let id = ClusterId::from(name);
            results.insert(
                id.clone(),
                RewardResult {
                    skill: id,
                    r,
                    count,
                    p_value: Some(0.004),
                    significance: Significance::P01,
                },
            );
        }
        let f = tempfile::NamedTempFile::new().unwrap();
        write_reward_report(&results, f.path(), 50, Some("config cafe")).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config"));
        assert_eq!(lines[1], "skill\tr\tcount\tp_value\tstars");
        assert!(lines[2].starts_with("high\t9.0000\t120\t0.004000\t**"));
        assert!(lines[3].starts_with("low\t-3.0000"));
        assert_eq!(lines.len(), 4, "count<50 row must be hidden");
    }

    #[test]
    fn universe_report_counts_exclusions() {
        let mut corpus = vec![
            ad("1", "Chef", "Hosp", 20_000.0),
            ad("2", "Chef", "Hosp", 21_000.0),
            ad("3", "The Of", "Hosp", 22_000.0), // stopword-only title
            ad("4", "Solo Title", "Hosp", 23_000.0), // group of one
        ];
        corpus.push(JobAd {
            id: AdId("5".into()),
            title: "Chef".into(),
            description: "d".into(),
            category: None,
            salary: crate::corpus::SalaryRange::new(20_000.0, 20_000.0),
        });
        corpus.push(JobAd {
            id: AdId("6".into()),
            title: "Chef".into(),
            description: "d".into(),
            category: Some("Hosp".into()),
            salary: None,
        });
        let detections: BTreeMap<AdId, AdSkillSet> =
            corpus.iter().map(|a| detection(&a.id.0, &["c1"])).collect();
        let universe = MatchUniverse::build(&corpus, &detections, &stopwords(), 2);
        assert_eq!(universe.report.ads_in, 2);
        assert_eq!(universe.report.excluded_no_category, 1);
        assert_eq!(universe.report.excluded_no_salary, 1);
        assert_eq!(universe.report.excluded_stopword_title, 1);
        assert_eq!(universe.report.excluded_small_group, 1);
        assert_eq!(universe.report.groups, 1);
    }

    #[test]
    fn salary_band_membership() {
        let bands = default_bands();
        assert!(bands[0].contains(20_000.0)); // inclusive upper bound
        assert!(!bands[0].contains(20_001.0));
        assert!(bands[1].contains(20_001.0));
        let all: BTreeSet<usize> = (0..bands.len()).collect();
        assert_eq!(all.len(), 4);
    }
}
