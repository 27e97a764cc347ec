use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use hocsearch::cli::MetricsFile;
use hocsearch::report::{read_report_json, read_run, sibling};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hocsearch")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// A small database, two scenes and a tree, built once and shared read-only.
fn workspace() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        ok(d, &["gen-db", "--families", "box,shelf", "--count", "12", "--seed", "1", "--out", "db"]);
        ok(d, &["gen-scenes", "--db", "db", "--count", "2", "--sigma", "0.005", "--seed", "1", "--out", "scenes"]);
        ok(d, &["build-tree", "--db", "db", "--k", "3", "--seed", "1", "--out", "tree.json"]);
        dir
    })
    .path()
}

#[test]
fn full_budget_search_agrees_with_exhaustive() {
    let d = workspace();
    let out = tempfile::tempdir().unwrap();
    let o = out.path();
    let scene = d.join("scenes/scene_0000");
    let tree = d.join("tree.json");
    let (s, t) = (scene.to_str().unwrap(), tree.to_str().unwrap());
    let hoc = o.join("hoc.json");
    let ex = o.join("ex.json");
    ok(d, &["search", "--tree", t, "--scene", s, "--iters", "48", "--out", hoc.to_str().unwrap()]);
    ok(d, &["exhaustive", "--db", "db", "--scene", s, "--out", ex.to_str().unwrap()]);
    let (hoc, ex) = (read_run(&hoc).unwrap(), read_run(&ex).unwrap());
    assert_eq!(hoc.evaluations, 48);
    assert_eq!((hoc.best.shape, hoc.best.angle_deg), (ex.best.shape, ex.best.angle_deg));
    assert_eq!(hoc.best.loss.to_bits(), ex.best.loss.to_bits());
    assert!(hoc.ground_truth.is_some());
}

#[test]
fn search_is_repeatable_and_seed_sensitive() {
    let d = workspace();
    let o = tempfile::tempdir().unwrap();
    let go = |seed: &str, name: &str| {
        let p = o.path().join(name);
        ok(
            d,
            &[
                "search",
                "--tree",
                "tree.json",
                "--scene",
                "scenes/scene_0001",
                "--iters",
                "10",
                "--seed",
                seed,
                "--out",
                p.to_str().unwrap(),
            ],
        );
        std::fs::read(p).unwrap()
    };
    let a = go("3", "a.json");
    assert_eq!(a, go("3", "b.json"));
    let runs: Vec<Vec<u8>> = (4..8).map(|s| go(&s.to_string(), &format!("s{s}.json"))).collect();
    assert!(runs.iter().any(|r| *r != a), "four other seeds all reproduced seed 3");
}

#[test]
fn tree_file_is_not_mutated_by_search() {
    let d = workspace();
    let before = std::fs::read(d.join("tree.json")).unwrap();
    let o = tempfile::tempdir().unwrap();
    let p = o.path().join("r.json");
    ok(d, &["search", "--tree", "tree.json", "--scene", "scenes/scene_0000", "--iters", "5", "--out", p.to_str().unwrap()]);
    assert_eq!(std::fs::read(d.join("tree.json")).unwrap(), before);
}

#[test]
fn bench_writes_consistent_csv_and_json() {
    let d = workspace();
    let o = tempfile::tempdir().unwrap();
    let csv = o.path().join("r.csv");
    ok(
        d,
        &[
            "bench",
            "--scenes",
            "scenes",
            "--tree",
            "tree.json",
            "--methods",
            "hoc@12,greedy,nn-rerank@3",
            "--timing",
            "--out",
            csv.to_str().unwrap(),
        ],
    );
    let json = read_report_json(&sibling(&csv, "", "json")).unwrap();
    let rows = hocsearch::report::read_records_csv(&csv).unwrap();
    assert_eq!(rows, json.records);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.wall_ms.is_some() && r.chamfer_to_gt.is_some()));
    let agg = hocsearch::report::read_aggregates_csv(&sibling(&csv, "_aggregates", "csv")).unwrap();
    assert_eq!(agg, json.aggregates);
    assert_eq!(agg.iter().map(|a| a.method.as_str()).collect::<Vec<_>>(), ["hoc@12", "greedy", "nn-rerank@3"]);
    assert_eq!(agg[0].speedup, 48.0 / 12.0);
    assert_eq!(agg[2].mean_evaluations, 12.0);
}

#[test]
fn eval_against_ground_truth_and_exhaustive() {
    let d = workspace();
    let o = tempfile::tempdir().unwrap();
    let res = o.path().join("res");
    for (i, scene) in ["scenes/scene_0000", "scenes/scene_0001"].iter().enumerate() {
        let p = |m: &str| res.join(format!("{m}_{i}.json")).to_str().unwrap().to_string();
        ok(d, &["exhaustive", "--db", "db", "--scene", scene, "--out", &p("ex")]);
        ok(d, &["search", "--tree", "tree.json", "--scene", scene, "--iters", "48", "--out", &p("hoc")]);
    }
    let m = o.path().join("m.json");
    ok(d, &["eval", "--results", res.to_str().unwrap(), "--reference", "exhaustive", "--k", "1,3", "--out", m.to_str().unwrap()]);
    let metrics: MetricsFile = serde_json::from_slice(&std::fs::read(&m).unwrap()).unwrap();
    assert_eq!(metrics.methods.len(), 1);
    assert_eq!(metrics.methods[0].topk_ra[&1], 1.0);
    assert_eq!(metrics.methods[0].speedup, 1.0);

    ok(d, &["eval", "--results", res.to_str().unwrap(), "--reference", "gt", "--out", m.to_str().unwrap()]);
    let metrics: MetricsFile = serde_json::from_slice(&std::fs::read(&m).unwrap()).unwrap();
    assert_eq!(metrics.methods.iter().map(|m| m.method.as_str()).collect::<Vec<_>>(), ["exhaustive", "hoc@48"]);
    // both rank all twelve shapes, so top-5 only misses if the truth ranks below fifth
    assert_eq!(metrics.methods[0].topk_ra, metrics.methods[1].topk_ra);
}

#[test]
fn config_file_and_flags_take_precedence_in_order() {
    let d = workspace();
    let o = tempfile::tempdir().unwrap();
    let cfg = o.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"lambda_cd": 0.0, "lambda_sil": 0.0}"#).unwrap();
    let loss = |extra: &[&str], name: &str| {
        let p = o.path().join(name);
        let mut args = vec!["exhaustive", "--db", "db", "--scene", "scenes/scene_0000", "--out", p.to_str().unwrap()];
        args.extend_from_slice(extra);
        ok(d, &args);
        read_run(&p).unwrap().best.loss
    };
    let defaults = loss(&[], "a.json");
    let depth_only = loss(&["--config", cfg.to_str().unwrap()], "b.json");
    let flag_wins = loss(&["--config", cfg.to_str().unwrap(), "--lambda-cd", "2", "--lambda-sil", "0.5"], "c.json");
    assert!(depth_only < defaults);
    assert_eq!(flag_wins.to_bits(), defaults.to_bits());
}

#[test]
fn errors_exit_non_zero_with_a_message() {
    let d = workspace();
    let cases: [&[&str]; 6] = [
        &["search", "--tree", "missing.json", "--scene", "scenes/scene_0000", "--iters", "3", "--out", "x.json"],
        &["search", "--tree", "tree.json", "--scene", "scenes/scene_0000", "--iters", "3", "--bogus", "--out", "x.json"],
        &["exhaustive", "--db", "db", "--scene", "scenes/nope", "--out", "x.json"],
        &["bench", "--scenes", "scenes", "--tree", "tree.json", "--methods", "hoc", "--out", "x.csv"],
        &["gen-db", "--families", "sofa", "--count", "3", "--out", "x"],
        &[
            "search",
            "--tree",
            "tree.json",
            "--scene",
            "scenes/scene_0000",
            "--iters",
            "3",
            "--objective",
            "iou",
            "--out",
            "x.json",
        ],
    ];
    for args in cases {
        let out = run(d, args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} printed nothing");
        assert!(!d.join("x.json").exists() && !d.join("x.csv").exists());
    }
}

#[test]
fn tree_rejects_a_different_database() {
    let d = workspace();
    let o = tempfile::tempdir().unwrap();
    ok(o.path(), &["gen-db", "--families", "box,shelf", "--count", "12", "--seed", "2", "--out", "db"]);
    let tree = d.join("tree.json");
    let scene = d.join("scenes/scene_0000");
    let out = run(
        o.path(),
        &[
            "search",
            "--tree",
            tree.to_str().unwrap(),
            "--scene",
            scene.to_str().unwrap(),
            "--db",
            "db",
            "--iters",
            "3",
            "--out",
            "r.json",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}
