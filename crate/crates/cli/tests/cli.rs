//! End-to-end tests of the binary: the full pipeline from synthesis to
//! metrics, determinism across seeds and thread counts, config-file
//! resolution, and the exit-code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_marginlab"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).args(["--out-dir", dir.to_str().unwrap()]).output().expect("binary runs")
}

/// Run expecting success; returns the artifact paths printed on stdout.
fn run_ok(args: &[&str], dir: &Path) -> Vec<PathBuf> {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "`{}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap().lines().map(PathBuf::from).collect()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The `.meta.json` sidecar written next to an artifact.
fn sidecar(artifact: &Path) -> PathBuf {
    let name = artifact.file_name().unwrap().to_str().unwrap();
    let stem_hash = name.rsplit_once('.').unwrap().0;
    artifact.with_file_name(format!("{stem_hash}.meta.json"))
}

const SYNTH_SMALL: &[&str] = &[
    "synth-ict",
    "--seed",
    "11",
    "--sources",
    "40",
    "--source-len",
    "100",
    "--vocab-size",
    "2000",
    "--max-queries",
    "30",
];

#[test]
fn full_pipeline_from_synthesis_to_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    let synth = run_ok(SYNTH_SMALL, dir);
    let [passages, queries] = &synth[..] else { panic!("synth-ict printed {synth:?}") };
    assert!(read(passages).lines().count() > 100);
    assert!(read(queries).lines().all(|l| l.contains("\"gold_id\"")));

    let collection = &run_ok(
        &["ingest", "--docs", passages.to_str().unwrap(), "--queries", queries.to_str().unwrap()],
        dir,
    )[0];
    let sparse = &run_ok(
        &["index-sparse", "--collection", collection.to_str().unwrap(), "--scheme", "bm25"],
        dir,
    )[0];
    let dense = &run_ok(
        &["index-dense", "--collection", collection.to_str().unwrap(), "--k", "128", "--seed", "5"],
        dir,
    )[0];

    let rankings = &run_ok(
        &[
            "retrieve",
            "--queries",
            queries.to_str().unwrap(),
            "--sparse-index",
            sparse.to_str().unwrap(),
            "--k",
            "10",
        ],
        dir,
    )[0];
    let tsv = read(rankings);
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some("query_id\tdoc_id\trank\tscore"));
    assert!(lines.clone().count() >= 30);
    assert!(lines.all(|l| l.split('\t').count() == 4));

    let metrics = &run_ok(
        &["eval", "--rankings", rankings.to_str().unwrap(), "--queries", queries.to_str().unwrap()],
        dir,
    )[0];
    let csv = read(metrics);
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("metric,cutoff,value"));
    let mrr: f64 = rows.next().unwrap().strip_prefix("mrr,10,").unwrap().parse().unwrap();
    let rec10: f64 = rows.next().unwrap().strip_prefix("recall,10,").unwrap().parse().unwrap();
    assert!((0.2..=1.0).contains(&mrr), "sparse mrr {mrr}");
    assert!(rec10 >= mrr && rec10 <= 1.0);

    let tuned = &run_ok(
        &[
            "tune-hybrid",
            "--sparse-index",
            sparse.to_str().unwrap(),
            "--dense-index",
            dense.to_str().unwrap(),
            "--queries",
            queries.to_str().unwrap(),
        ],
        dir,
    )[0];
    let tune_csv = read(tuned);
    let row = tune_csv.lines().nth(1).unwrap();
    let (lambda, hybrid_mrr) = row.split_once(',').unwrap();
    let lambda: f64 = lambda.parse().unwrap();
    let hybrid_mrr: f64 = hybrid_mrr.parse().unwrap();
    assert!((0.0..=5.0).contains(&lambda));
    assert!((0.0..=1.0).contains(&hybrid_mrr));

    for (args_mode, extra) in [
        (
            vec![
                "--dense-index",
                dense.to_str().unwrap(),
                "--collection",
                collection.to_str().unwrap(),
            ],
            "dense",
        ),
        (
            vec![
                "--sparse-index",
                sparse.to_str().unwrap(),
                "--dense-index",
                dense.to_str().unwrap(),
                "--lambda",
                "0.5",
            ],
            "hybrid",
        ),
    ] {
        let mut args = vec!["retrieve", "--queries", queries.to_str().unwrap(), "--k", "10"];
        args.extend(args_mode);
        let out = &run_ok(&args, dir)[0];
        let meta: serde_json::Value = serde_json::from_str(&read(&sidecar(out))).unwrap();
        assert_eq!(meta["extra"]["mode"], extra);
    }

    // Every artifact carries a sidecar echoing a 64-hex config hash that
    // prefixes the artifact name.
    for artifact in [collection, sparse, dense, rankings, metrics, tuned] {
        let meta: serde_json::Value = serde_json::from_str(&read(&sidecar(artifact))).unwrap();
        let hash = meta["config_hash"].as_str().unwrap();
        assert_eq!(hash.len(), 64);
        assert!(artifact.file_name().unwrap().to_str().unwrap().contains(&hash[..8]));
    }
}

#[test]
fn synthesis_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = run_ok(SYNTH_SMALL, a.path());
    let second = run_ok(SYNTH_SMALL, b.path());
    let names =
        |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    assert_eq!(names(&first), names(&second));
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }

    let mut reseeded: Vec<&str> = SYNTH_SMALL.to_vec();
    reseeded[2] = "12";
    let third = run_ok(&reseeded, c.path());
    assert_ne!(names(&first), names(&third));
}

#[test]
fn experiment_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["synth-ict"],
        vec!["min-k", "--docs-n", "60", "--queries-n", "6"],
        vec!["verify-bounds", "--quick"],
    ] {
        let out = run(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("--seed"), "{args:?}: {err}");
    }
}

#[test]
fn thread_count_never_changes_artifact_bytes() {
    let min_k: &[&str] = &[
        "min-k",
        "--docs-n",
        "150",
        "--queries-n",
        "15",
        "--vocab-size",
        "2000",
        "--doc-len",
        "30",
        "--grid",
        "32,256,4",
        "--bins",
        "3",
        "--sample-per-bin",
        "4",
        "--trials",
        "10",
        "--seed",
        "3",
    ];
    let margins: &[&str] = &[
        "margins-by-length",
        "--docs-n",
        "200",
        "--queries-n",
        "20",
        "--vocab-size",
        "2000",
        "--lengths",
        "30,60",
        "--ranks",
        "1,10",
        "--seed",
        "5",
    ];
    let recall: &[&str] = &[
        "recall-min-k",
        "--docs-n",
        "120",
        "--queries-n",
        "12",
        "--vocab-size",
        "1500",
        "--lengths",
        "30",
        "--targets",
        "0.8",
        "--trials",
        "4",
        "--max-queries",
        "8",
        "--grid",
        "32,128,3",
        "--seed",
        "4",
    ];
    for args in [min_k, margins, recall] {
        let one = tempfile::tempdir().unwrap();
        let eight = tempfile::tempdir().unwrap();
        let mut with_one: Vec<&str> = args.to_vec();
        with_one.extend(["--threads", "1"]);
        let mut with_eight: Vec<&str> = args.to_vec();
        with_eight.extend(["--threads", "8"]);
        let p1 = run_ok(&with_one, one.path());
        let p8 = run_ok(&with_eight, eight.path());
        assert_eq!(p1[0].file_name(), p8[0].file_name(), "{args:?}");
        assert_eq!(std::fs::read(&p1[0]).unwrap(), std::fs::read(&p8[0]).unwrap(), "{args:?}");
        // --threads is not part of the configuration, so the sidecars match too.
        assert_eq!(read(&sidecar(&p1[0])), read(&sidecar(&p8[0])), "{args:?}");
    }
}

#[test]
fn min_k_grid_default_records_forty_grid_values() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = &run_ok(
        &[
            "min-k",
            "--grid-default",
            "--docs-n",
            "150",
            "--queries-n",
            "15",
            "--vocab-size",
            "2000",
            "--doc-len",
            "30",
            "--bins",
            "2",
            "--sample-per-bin",
            "2",
            "--trials",
            "5",
            "--seed",
            "2",
        ],
        dir.path(),
    )[0];
    let meta: serde_json::Value = serde_json::from_str(&read(&sidecar(csv_path))).unwrap();
    assert_eq!(meta["grid"].as_array().unwrap().len(), 40);
    let grid_id = meta["grid_id"].as_str().unwrap();
    let csv = read(csv_path);
    assert!(csv.lines().nth(1).unwrap().ends_with(grid_id));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 9, "sources": 25, "source_len": 80, "vocab_size": 1500, "max_queries": 10}"#,
    )
    .unwrap();

    let from_file = run_ok(&["synth-ict", "--config", cfg.to_str().unwrap()], dir);
    let overridden = run_ok(&["synth-ict", "--config", cfg.to_str().unwrap(), "--seed", "10"], dir);
    let same_again = run_ok(&["synth-ict", "--config", cfg.to_str().unwrap(), "--seed", "9"], dir);
    assert_ne!(from_file[0].file_name(), overridden[0].file_name());
    assert_eq!(from_file[0].file_name(), same_again[0].file_name());

    let bad = dir.join("bad.json");
    std::fs::write(&bad, "[1, 2]").unwrap();
    let out = run(&["synth-ict", "--config", bad.to_str().unwrap(), "--seed", "1"], dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    // Runtime failure: exit 1 with a single-line error on stderr.
    let out = run(&["ingest", "--docs", "/nonexistent/corpus.jsonl"], dir);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end_matches('\n').lines().count(), 1, "{err}");
    assert!(err.starts_with("marginlab: error: "), "{err}");

    // Usage failure from validation: exit 2.
    let queries = dir.join("q.jsonl");
    std::fs::write(&queries, "{\"id\": \"q0\", \"text\": \"alpha beta\"}\n").unwrap();
    let out = run(&["retrieve", "--queries", queries.to_str().unwrap()], dir);
    assert_eq!(out.status.code(), Some(2));

    // Flag parse failure: exit 2 (from the parser itself).
    let out = run(&["min-k", "--no-such-flag"], dir);
    assert_eq!(out.status.code(), Some(2));

    // Malformed artifact: exit 1.
    let fake = dir.join("rankings.tsv");
    std::fs::write(&fake, "wrong header\n").unwrap();
    let out = run(
        &["eval", "--rankings", fake.to_str().unwrap(), "--queries", queries.to_str().unwrap()],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_bounds_quick_suite_passes_and_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify-bounds", "--seed", "1", "--trials", "150", "--quick"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("pairwise-grid"), "{stdout}");
    assert!(stdout.contains("passed 11/11 checks"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
}
