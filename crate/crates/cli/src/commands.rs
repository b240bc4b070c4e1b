//! The four subcommands: build-lexicon, detect, analyze, render.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use softskills::clustering::{
    agglomerate, apply_cluster_edits, embed_phrase, parse_cluster_script, Cluster, ClusterSet,
    PhraseVector,
};
use softskills::corpus::{check_unique_ids, load_ads, load_token_list, JobAd, StopwordList};
use softskills::detection::{
    compile_patterns, default_keep_competence, distinctiveness, read_detections, write_detections,
    Detector, DEFAULT_COMPETENCE_TERMS,
};
use softskills::embedding::load_embeddings;
use softskills::gender::{
    attach_female_share, load_gender_map, load_stereotype_map, ols_fit, regression_rows,
    split_categories, stereotype_prevalence, stereotype_reward_comparison, write_regression_report,
    write_stereotype_report, DominanceSplit,
};
use softskills::lexicon::{
    clean_phrase, compute_confidence, curate, discovery_curve, filter_lexicon, load_annotations,
    load_submissions, parse_edit_script, whitelist_from_submissions, write_lexicon, CleanOutcome,
    LexiconEntry, SkillPhrase, DEFAULT_SUPERFLUOUS_ADJECTIVES,
};
use softskills::stats::{
    bands_from_boundaries, permutation_p_values, skills_by_salary_band, write_reward_report,
    MatchUniverse, PermutationConfig,
};

use crate::config::PipelineConfig;
use crate::manifest::{config_digest, RunManifest, StageTimer};

fn short_digest(digest: &str) -> &str {
    &digest[..12.min(digest.len())]
}

fn load_stopwords(config: &PipelineConfig) -> Result<StopwordList> {
    StopwordList::load(&config.stopwords)
        .with_context(|| format!("loading stopwords from {}", config.stopwords.display()))
}

fn load_competence(config: &PipelineConfig) -> Result<std::collections::BTreeSet<String>> {
    match &config.competence_terms {
        Some(path) => load_token_list(path)
            .with_context(|| format!("loading competence terms from {}", path.display())),
        None => Ok(DEFAULT_COMPETENCE_TERMS
            .iter()
            .map(|s| s.to_string())
            .collect()),
    }
}

fn load_corpus(config: &PipelineConfig) -> Result<Vec<JobAd>> {
    let path = config.require_path("corpus", &config.corpus)?;
    let (ads, report) = load_ads(path, config.corpus_format)?;
    if report.rejected > 0 {
        eprintln!(
            "corpus: accepted {} rows, rejected {} (first: row {} — {})",
            report.accepted, report.rejected, report.rejections[0].row, report.rejections[0].reason
        );
    }
    check_unique_ids(&ads)?;
    Ok(ads)
}

fn upstream(path: PathBuf, producer: &str) -> Result<PathBuf> {
    if !path.exists() {
        bail!(
            "missing {} — run `softskills {}` first",
            path.display(),
            producer
        );
    }
    Ok(path)
}

/// Builds the curated, scored, clustered lexicon plus the discovery curve.
pub fn cmd_build_lexicon(config: &PipelineConfig) -> Result<()> {
    let digest = config_digest(config);
    let mut manifest = RunManifest::new("build-lexicon", config);
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("cannot create {}", config.out_dir.display()))?;

    let stage = StageTimer::start();
    let submissions_path = config.require_path("submissions", &config.submissions)?;
    let annotations_path = config.require_path("annotations", &config.annotations)?;
    let embeddings_path = config.require_path("embeddings", &config.embeddings)?;
    manifest.record_input("submissions", submissions_path)?;
    manifest.record_input("annotations", annotations_path)?;
    manifest.record_input("embeddings", embeddings_path)?;
    manifest.record_input("stopwords", &config.stopwords)?;

    let submissions = load_submissions(submissions_path).context("loading submissions")?;
    if submissions.is_empty() {
        bail!("no submissions in {}", submissions_path.display());
    }
    let annotations = load_annotations(annotations_path).context("loading annotations")?;
    if annotations.is_empty() {
        bail!("no annotation records in {}", annotations_path.display());
    }
    let stopwords = load_stopwords(config)?;
    let competence = load_competence(config)?;
    stage.finish(&mut manifest, "load_inputs");

    // Clean and curate.
    let stage = StageTimer::start();
    let adjectives = DEFAULT_SUPERFLUOUS_ADJECTIVES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let whitelist = match &config.whitelist {
        Some(path) => {
            manifest.record_input("whitelist", path)?;
            load_token_list(path)?
        }
        None => whitelist_from_submissions(&submissions, config.whitelist_min_count),
    };
    let outcomes: Vec<CleanOutcome> = submissions
        .iter()
        .map(|sub| clean_phrase(sub, &adjectives, &whitelist))
        .collect();
    let script = match &config.lexicon_edits {
        Some(path) => {
            manifest.record_input("lexicon_edits", path)?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read edit script {}", path.display()))?;
            parse_edit_script(&text)?
        }
        None => Vec::new(),
    };
    let curation = curate(&outcomes, &script);
    if curation.phrases.is_empty() {
        bail!("curation left no phrases in the lexicon");
    }
    stage.finish(&mut manifest, "clean_and_curate");

    // Score and filter.
    let stage = StageTimer::start();
    let mut by_skill: BTreeMap<&str, Vec<&softskills::lexicon::AnnotationRecord>> = BTreeMap::new();
    for record in &annotations {
        by_skill
            .entry(record.skill.as_str())
            .or_default()
            .push(record);
    }
    let mut skills: Vec<SkillPhrase> = Vec::new();
    for phrase in &curation.phrases {
        let mut skill = SkillPhrase::new(phrase.clone());
        if skill.token_count <= 3 {
            if let Some(records) = by_skill.get(phrase.as_str()) {
                let owned: Vec<softskills::lexicon::AnnotationRecord> =
                    records.iter().map(|r| (*r).clone()).collect();
                skill.confidence = Some(compute_confidence(&owned)?);
            }
        }
        skill.keep_competence = default_keep_competence(phrase, &competence, &stopwords);
        skills.push(skill);
    }
    let unmatched_annotation_skills: Vec<&str> = by_skill
        .keys()
        .copied()
        .filter(|s| !curation.phrases.iter().any(|p| p == s))
        .collect();
    let (kept, retention) = filter_lexicon(&skills, config.confidence);
    if kept.is_empty() {
        bail!("no skills survive the confidence filter");
    }
    stage.finish(&mut manifest, "score_and_filter");

    // Embed and cluster.
    let stage = StageTimer::start();
    let (table, embed_report) = load_embeddings(embeddings_path)?;
    let mut vectors: Vec<PhraseVector> = Vec::new();
    let mut out_of_vocabulary: Vec<String> = Vec::new();
    for skill in &kept {
        match embed_phrase(skill, &table, &stopwords) {
            Some(v) => vectors.push(v),
            None => out_of_vocabulary.push(skill.phrase.clone()),
        }
    }
    let mut clusters = if vectors.is_empty() {
        ClusterSet::from_clusters(Vec::new())
    } else {
        let target = config.target_clusters.min(vectors.len());
        agglomerate(&vectors, target)?
    };
    clusters.append_singletons(out_of_vocabulary.iter().cloned());
    let edit_report = match &config.cluster_edits {
        Some(path) => {
            manifest.record_input("cluster_edits", path)?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read cluster edits {}", path.display()))?;
            let script = parse_cluster_script(&text)?;
            let (edited, report) = apply_cluster_edits(&clusters, &script)?;
            clusters = edited;
            Some(report)
        }
        None => None,
    };
    stage.finish(&mut manifest, "embed_and_cluster");

    // Assemble and write.
    let stage = StageTimer::start();
    let mut cluster_of: HashMap<&str, &Cluster> = HashMap::new();
    for cluster in &clusters.clusters {
        for member in &cluster.members {
            cluster_of.insert(member.as_str(), cluster);
        }
    }
    let mut entries: Vec<LexiconEntry> = kept
        .iter()
        .map(|skill| LexiconEntry {
            skill: skill.clone(),
            cluster_id: cluster_of
                .get(skill.phrase.as_str())
                .map(|c| c.id.0.clone()),
        })
        .collect();
    entries.sort_by(|a, b| a.skill.phrase.cmp(&b.skill.phrase));

    let lexicon_path = config.out_dir.join("lexicon.tsv");
    let provenance = format!("config {}", short_digest(&digest));
    write_lexicon(&entries, &lexicon_path, Some(&provenance))?;
    let clusters_path = config.out_dir.join("clusters.tsv");
    softskills::clustering::write_clusters(&clusters, &clusters_path, Some(&provenance))?;

    let curve_path = config.out_dir.join("discovery_curve.csv");
    {
        // Submissions grouped by source ad in first-appearance order; each
        // contributes its cleaned phrase.
        let mut per_ad: Vec<(softskills::corpus::AdId, Vec<String>)> = Vec::new();
        let mut index: HashMap<&softskills::corpus::AdId, usize> = HashMap::new();
        for (sub, outcome) in submissions.iter().zip(&outcomes) {
            let phrase = match outcome {
                CleanOutcome::Cleaned(skill) => skill.phrase.clone(),
                CleanOutcome::NeedsReview { cleaned, .. } => cleaned.clone(),
                CleanOutcome::Rejected { .. } => continue,
            };
            match index.get(&sub.source_ad) {
                Some(&i) => per_ad[i].1.push(phrase),
                None => {
                    index.insert(&sub.source_ad, per_ad.len());
                    per_ad.push((sub.source_ad.clone(), vec![phrase]));
                }
            }
        }
        let curve = discovery_curve(&per_ad);
        let mut text = format!(
            "# config {}\nads_annotated,distinct_skills\n",
            short_digest(&digest)
        );
        for (x, y) in curve {
            text.push_str(&format!("{x},{y}\n"));
        }
        std::fs::write(&curve_path, text)
            .with_context(|| format!("cannot write {}", curve_path.display()))?;
    }

    let report_path = config.out_dir.join("build_report.json");
    {
        let report = serde_json::json!({
            "config_digest": digest,
            "curation": curation,
            "retention": retention,
            "unmatched_annotation_skills": unmatched_annotation_skills,
            "embedding_load": {
                "entries": embed_report.entries,
                "duplicates": embed_report.duplicates,
            },
            "clusters": clusters.len(),
            "cluster_edits": edit_report,
            "out_of_vocabulary": out_of_vocabulary,
        });
        std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    manifest.record_output("lexicon", &lexicon_path)?;
    manifest.record_output("clusters", &clusters_path)?;
    manifest.record_output("discovery_curve", &curve_path)?;
    manifest.record_output("build_report", &report_path)?;
    stage.finish(&mut manifest, "write_outputs");

    manifest.write(&config.out_dir.join("build_manifest.json"))?;
    println!(
        "lexicon: {} skills in {} clusters ({} pending review, {:.1}% of scored retained)",
        entries.len(),
        clusters.len(),
        curation.pending_review.len(),
        retention.retention_fraction * 100.0
    );
    Ok(())
}

fn cluster_set_from_lexicon(entries: &[LexiconEntry]) -> Result<ClusterSet> {
    let mut members: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for entry in entries {
        match &entry.cluster_id {
            Some(id) => members
                .entry(id.clone())
                .or_default()
                .push(entry.skill.phrase.clone()),
            None => bail!(
                "lexicon entry '{}' has no cluster_id — run `softskills build-lexicon` first",
                entry.skill.phrase
            ),
        }
    }
    Ok(ClusterSet::from_clusters(
        members
            .into_iter()
            .map(|(id, members)| Cluster {
                id: softskills::clustering::ClusterId(id),
                label: members[0].clone(),
                members,
            })
            .collect(),
    ))
}

/// Detects skill clusters in every corpus ad.
pub fn cmd_detect(config: &PipelineConfig, distinctiveness_category: Option<&str>) -> Result<()> {
    let digest = config_digest(config);
    let mut manifest = RunManifest::new("detect", config);
    std::fs::create_dir_all(&config.out_dir)?;

    let stage = StageTimer::start();
    let lexicon_path = upstream(config.out_dir.join("lexicon.tsv"), "build-lexicon")?;
    manifest.record_input("lexicon", &lexicon_path)?;
    let entries = softskills::lexicon::read_lexicon(&lexicon_path)?;
    let corpus_path = config.require_path("corpus", &config.corpus)?;
    manifest.record_input("corpus", corpus_path)?;
    let corpus = load_corpus(config)?;
    let stopwords = load_stopwords(config)?;
    let competence = load_competence(config)?;
    stage.finish(&mut manifest, "load_inputs");

    let stage = StageTimer::start();
    let clusters = cluster_set_from_lexicon(&entries)?;
    let keep_flags: HashMap<String, bool> = entries
        .iter()
        .map(|e| (e.skill.phrase.clone(), e.skill.keep_competence))
        .collect();
    let patterns = compile_patterns(&clusters, &competence, &keep_flags, &stopwords)?;
    let detector = Detector::new(patterns, stopwords, config.max_gap);
    let (detections, summary) = detector.detect_corpus(&corpus);
    stage.finish(&mut manifest, "detect");

    let stage = StageTimer::start();
    let detections_path = config.out_dir.join("detections.tsv");
    write_detections(
        &detections,
        &detections_path,
        Some(&format!("config {}", short_digest(&digest))),
    )?;
    let coverage_path = config.out_dir.join("coverage.json");
    {
        let coverage = serde_json::json!({
            "config_digest": digest,
            "summary": summary,
        });
        std::fs::write(
            &coverage_path,
            serde_json::to_string_pretty(&coverage)? + "\n",
        )?;
    }
    manifest.record_output("detections", &detections_path)?;
    manifest.record_output("coverage", &coverage_path)?;

    if let Some(category) = distinctiveness_category {
        let rows = distinctiveness(&detections, &corpus, category)?;
        let path = config.out_dir.join("distinctiveness.tsv");
        let mut text = format!(
            "# config {}\ncluster_id\tcategory\tpct_in_category\tpct_overall\tdelta\n",
            short_digest(&digest)
        );
        for row in rows {
            text.push_str(&format!(
                "{}\t{}\t{:.4}\t{:.4}\t{:+.4}\n",
                row.cluster_id, row.category, row.pct_in_category, row.pct_overall, row.delta
            ));
        }
        std::fs::write(&path, text)?;
        manifest.record_output("distinctiveness", &path)?;
    }
    stage.finish(&mut manifest, "write_outputs");

    manifest.write(&config.out_dir.join("detect_manifest.json"))?;
    match (summary.coverage_any, summary.coverage_three_plus) {
        (Some(any), Some(three)) => println!(
            "detected skills in {:.1}% of {} ads ({:.1}% with >= 3 clusters)",
            any * 100.0,
            summary.total_ads,
            three * 100.0
        ),
        _ => println!("no ads in corpus; coverage is no-data"),
    }
    Ok(())
}

/// Runs the matching study, salary bands, regression, and stereotype
/// analyses over an existing detection output.
pub fn cmd_analyze(config: &PipelineConfig) -> Result<()> {
    let digest = config_digest(config);
    let seed = config.require_seed()?;
    let mut manifest = RunManifest::new("analyze", config);
    std::fs::create_dir_all(&config.out_dir)?;

    let stage = StageTimer::start();
    let corpus_path = config.require_path("corpus", &config.corpus)?;
    manifest.record_input("corpus", corpus_path)?;
    let corpus = load_corpus(config)?;
    let detections_path = upstream(config.out_dir.join("detections.tsv"), "detect")?;
    manifest.record_input("detections", &detections_path)?;
    let detections = read_detections(&detections_path)?;
    let clusters_path = upstream(config.out_dir.join("clusters.tsv"), "build-lexicon")?;
    manifest.record_input("clusters", &clusters_path)?;
    let clusters = softskills::clustering::read_clusters(&clusters_path)?;
    let stopwords = load_stopwords(config)?;
    stage.finish(&mut manifest, "load_inputs");

    // Matching study with permutation significance.
    let stage = StageTimer::start();
    let universe = MatchUniverse::build(&corpus, &detections, &stopwords, config.min_title_count);
    let permutation = PermutationConfig::new(config.replicates, seed);
    let rewards = permutation_p_values(&universe, &permutation)?;
    let rewards_path = config.out_dir.join("rewards.tsv");
    write_reward_report(
        &rewards,
        &rewards_path,
        config.min_count,
        Some(&format!(
            "config {} seed {} replicates {}",
            short_digest(&digest),
            seed,
            config.replicates
        )),
    )?;
    manifest.record_output("rewards", &rewards_path)?;
    stage.finish(&mut manifest, "matching_study");

    // Skills by salary band.
    let stage = StageTimer::start();
    let bands = bands_from_boundaries(&config.bands)?;
    let band_report = skills_by_salary_band(
        &corpus,
        &detections,
        &bands,
        config.bootstrap_replicates,
        seed,
    )?;
    let bands_path = config.out_dir.join("salary_bands.json");
    {
        let wrapped = serde_json::json!({
            "config_digest": digest,
            "seed": seed,
            "report": band_report,
        });
        std::fs::write(&bands_path, serde_json::to_string_pretty(&wrapped)? + "\n")?;
    }
    manifest.record_output("salary_bands", &bands_path)?;
    stage.finish(&mut manifest, "salary_bands");

    // Gender-composition regression.
    let stage = StageTimer::start();
    let gender_map_path = config.require_path("gender_map", &config.gender_map)?;
    manifest.record_input("gender_map", gender_map_path)?;
    let gender_map = load_gender_map(gender_map_path)?;
    let attachment = attach_female_share(&corpus, &gender_map)?;
    let rows = regression_rows(&corpus, &detections, &attachment);
    let regression = ols_fit(&rows, config.min_skills)?;
    let regression_path = config.out_dir.join("regression.tsv");
    write_regression_report(
        &regression,
        &rewards,
        &regression_path,
        config.min_count as usize,
        0.01,
        Some(&format!("config {} seed {}", short_digest(&digest), seed)),
    )?;
    manifest.record_output("regression", &regression_path)?;
    stage.finish(&mut manifest, "regression");

    // Stereotype prevalence and reward comparison.
    let stage = StageTimer::start();
    let stereotype_path = config.require_path("stereotype_map", &config.stereotype_map)?;
    manifest.record_input("stereotype_map", stereotype_path)?;
    let stereotype_map = load_stereotype_map(stereotype_path)?;
    let split = DominanceSplit {
        female_min: config.female_dominance_min,
        male_max: config.male_dominance_max,
    };
    let (female_categories, male_categories) = split_categories(&gender_map, &split);
    let prevalence = stereotype_prevalence(
        &detections,
        &corpus,
        &stereotype_map,
        &clusters,
        &female_categories,
        &male_categories,
    )?;
    let comparison = stereotype_reward_comparison(&stereotype_map, &clusters, &rewards)?;
    let stereotypes_path = config.out_dir.join("stereotypes.tsv");
    {
        // write_stereotype_report appends the per-gender average rows; the
        // group comparison rides in the header.
        let header = format!(
            "config {} seed {} | dominance split: female >= {}%, male <= {}% | feminine_mean {:.4} masculine_mean {:.4} one_tailed_p {:.6}",
            short_digest(&digest),
            seed,
            config.female_dominance_min,
            config.male_dominance_max,
            comparison.feminine_mean,
            comparison.masculine_mean,
            comparison.test.p,
        );
        write_stereotype_report(&prevalence, &rewards, &stereotypes_path, Some(&header))?;
    }
    manifest.record_output("stereotypes", &stereotypes_path)?;
    stage.finish(&mut manifest, "stereotypes");

    manifest.write(&config.out_dir.join("manifest.json"))?;
    println!(
        "analyzed {} matched ads in {} groups; {} skills rewarded; R^2 = {:.4}",
        universe.report.ads_in,
        universe.report.groups,
        rewards.len(),
        regression.r_squared
    );
    Ok(())
}

/// Pretty-prints a TSV or JSON report to stdout.
pub fn cmd_render(file: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    let is_json = file.extension().map(|e| e == "json").unwrap_or(false)
        || text.trim_start().starts_with('{');
    if is_json {
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("{} is not valid JSON", file.display()))?;
        println!("{}", serde_json::to_string_pretty(&value)?);
        return Ok(());
    }

    let mut comments = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            comments.push(line.to_string());
        } else if !line.trim().is_empty() {
            rows.push(line.split('\t').map(str::to_string).collect());
        }
    }
    for comment in &comments {
        println!("{comment}");
    }
    if rows.is_empty() {
        return Ok(());
    }
    let columns = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    for (idx, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{:<width$}", cell, width = widths[i]))
            .collect();
        println!("{}", line.join("  ").trim_end());
        if idx == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            println!("{}", rule.join("  "));
        }
    }
    Ok(())
}
