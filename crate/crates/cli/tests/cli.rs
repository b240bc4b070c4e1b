//! End-to-end pipeline tests over the committed fixture corpus: snapshot
//! comparison, determinism, exit codes, and the render subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_softskills")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run_in_fixtures(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .current_dir(fixtures())
        .output()
        .expect("binary runs")
}

fn run_pipeline(out_dir: &Path) {
    for subcommand in ["build-lexicon", "detect", "analyze"] {
        let output = run_in_fixtures(&[
            subcommand,
            "--config",
            "config.toml",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(
            output.status.success(),
            "{subcommand} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
}

const SNAPSHOT_FILES: [&str; 10] = [
    "lexicon.tsv",
    "clusters.tsv",
    "discovery_curve.csv",
    "detections.tsv",
    "coverage.json",
    "rewards.tsv",
    "regression.tsv",
    "stereotypes.tsv",
    "salary_bands.json",
    "build_report.json",
];

#[test]
fn pipeline_matches_committed_snapshots() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    for file in SNAPSHOT_FILES {
        let got = std::fs::read_to_string(out.path().join(file))
            .unwrap_or_else(|_| panic!("{file} was not produced"));
        let expected = std::fs::read_to_string(fixtures().join("expected").join(file)).unwrap();
        assert_eq!(got, expected, "{file} deviates from its snapshot");
    }
}

#[test]
fn rewards_match_hand_computed_cells() {
    // Cell arithmetic done by hand from the fixture corpus:
    //   leadership: Site Manager with {45,47,46}k vs {40,41,42}k -> +12.1951, w3
    //   communication skills: Java Dev {40,42,41}k vs {38,37,39}k -> +7.8947, w3
    //   empathy: Primary Teacher {30,32,31}k vs {28,29,30}k -> +6.8966, w3
    //   analytical: Quantity Surveyor {38,39}k vs {36,37}k -> +5.4795, w2
    //   polite: Teaching Assistant {20,21}k vs {22,23}k -> -8.8889, w2
    //   teamwork: (-6.8182 w1) and (-5.7377 w3) -> -6.0078, count 4
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    let rewards = std::fs::read_to_string(out.path().join("rewards.tsv")).unwrap();
    let row = |cluster: &str| -> (f64, u64) {
        let line = rewards
            .lines()
            .find(|l| l.starts_with(&format!("{cluster}\t")))
            .unwrap_or_else(|| panic!("no reward row for {cluster}"));
        let fields: Vec<&str> = line.split('\t').collect();
        (fields[1].parse().unwrap(), fields[2].parse().unwrap())
    };
    let close = |(r, count): (f64, u64), expect_r: f64, expect_count: u64| {
        assert!((r - expect_r).abs() < 5e-5, "r = {r}, expected {expect_r}");
        assert_eq!(count, expect_count);
    };
    close(row("c0003"), 12.1951, 3); // leadership
    close(row("c0002"), 7.8947, 3); // communication skills
    close(row("c0007"), 6.8966, 3); // empathy
    close(row("c0005"), 5.4795, 2); // analytical skills
    close(row("c0006"), -8.8889, 2); // polite
    close(row("c0001"), -6.0078, 4); // teamwork
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    run_pipeline(first.path());
    run_pipeline(second.path());
    for file in SNAPSHOT_FILES {
        let a = std::fs::read(first.path().join(file)).unwrap();
        let b = std::fs::read(second.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn manifest_digests_cover_outputs() {
    use sha2::Digest;
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "analyze");
    let outputs = manifest["outputs"].as_object().unwrap();
    for role in ["rewards", "salary_bands", "regression", "stereotypes"] {
        let entry = &outputs[role];
        let bytes = std::fs::read(entry["path"].as_str().unwrap()).unwrap();
        let digest = hex::encode(sha2::Sha256::digest(&bytes));
        assert_eq!(
            digest,
            entry["sha256"].as_str().unwrap(),
            "{role} digest mismatch"
        );
    }
    // Reports embed the config digest they were generated under.
    let digest = manifest["config_digest"].as_str().unwrap();
    let rewards = std::fs::read_to_string(out.path().join("rewards.tsv")).unwrap();
    assert!(rewards.starts_with(&format!("# config {}", &digest[..12])));
}

#[test]
fn analyze_without_detect_names_prerequisite() {
    let out = tempfile::tempdir().unwrap();
    let output = run_in_fixtures(&[
        "analyze",
        "--config",
        "config.toml",
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("detect"), "stderr was: {stderr}");
}

#[test]
fn detect_without_lexicon_names_prerequisite() {
    let out = tempfile::tempdir().unwrap();
    let output = run_in_fixtures(&[
        "detect",
        "--config",
        "config.toml",
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("build-lexicon"), "stderr was: {stderr}");
}

#[test]
fn empty_submissions_and_annotations_are_rejected() {
    let out = tempfile::tempdir().unwrap();
    let empty_subs = out.path().join("subs.csv");
    std::fs::write(&empty_subs, "text,source_ad\n").unwrap();
    let output = run_in_fixtures(&[
        "build-lexicon",
        "--config",
        "config.toml",
        "--submissions",
        empty_subs.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no submissions"));

    let empty_annotations = out.path().join("ann.csv");
    std::fs::write(
        &empty_annotations,
        "skill,snippet_id,worker_id,vote,trust\n",
    )
    .unwrap();
    let output = run_in_fixtures(&[
        "build-lexicon",
        "--config",
        "config.toml",
        "--annotations",
        empty_annotations.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no annotation records"));
}

#[test]
fn zero_replicates_is_a_validation_error() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    let output = run_in_fixtures(&[
        "analyze",
        "--config",
        "config.toml",
        "--out-dir",
        out.path().to_str().unwrap(),
        "--replicates",
        "0",
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("replicate"));
}

#[test]
fn missing_seed_is_a_validation_error() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    // No config file -> no seed anywhere.
    let output = run_in_fixtures(&[
        "analyze",
        "--corpus",
        "corpus.csv",
        "--stopwords",
        "../../../../data/stopwords.txt",
        "--gender-map",
        "../../../../data/gender_map.tsv",
        "--stereotype-map",
        "stereotype_map.tsv",
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("seed"));
}

#[test]
fn missing_corpus_file_is_an_io_error() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    let output = run_in_fixtures(&[
        "detect",
        "--config",
        "config.toml",
        "--corpus",
        "no_such_corpus.csv",
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn duplicate_ad_ids_rejected() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    let dup = out.path().join("dup.csv");
    std::fs::write(
        &dup,
        "Id,Title,FullDescription,Category,SalaryMin,SalaryMax\n\
         a1,Chef,Cook well,Hospitality,20000,21000\n\
         a1,Chef,Cook more,Hospitality,22000,23000\n",
    )
    .unwrap();
    let output = run_in_fixtures(&[
        "detect",
        "--config",
        "config.toml",
        "--corpus",
        dup.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("a1"));
}

#[test]
fn empty_corpus_reports_no_data_coverage() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    let empty = out.path().join("empty.csv");
    std::fs::write(
        &empty,
        "Id,Title,FullDescription,Category,SalaryMin,SalaryMax\n",
    )
    .unwrap();
    let output = run_in_fixtures(&[
        "detect",
        "--config",
        "config.toml",
        "--corpus",
        empty.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let coverage: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("coverage.json")).unwrap())
            .unwrap();
    assert!(coverage["summary"]["coverage_any"].is_null());
    assert_eq!(coverage["summary"]["total_ads"], 0);
}

#[test]
fn render_aligns_tsv_and_pretty_prints_json() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(out.path());
    let rendered = run_in_fixtures(&["render", out.path().join("rewards.tsv").to_str().unwrap()]);
    assert!(rendered.status.success());
    let text = String::from_utf8_lossy(&rendered.stdout);
    assert!(text.contains("skill"));
    assert!(text.lines().any(|l| l.starts_with("-----")));

    let rendered_json =
        run_in_fixtures(&["render", out.path().join("coverage.json").to_str().unwrap()]);
    assert!(rendered_json.status.success());
    assert!(String::from_utf8_lossy(&rendered_json.stdout).contains("coverage_any"));
}
