use std::fs;
use std::path::Path;
use std::process::Command;

use conbandit::cli::{cmd_analyze, cmd_generate_dataset, cmd_run, cmd_validate, read_manifest, ValidateTarget};
use conbandit::config::{RunConfig, PRESETS};
use conbandit::environments::{load_dataset_env, Dataset, DatasetFiles, GeneratorSpec};
use conbandit::harness::read_batch_csv;
use conbandit::keyterm::read_report_csv;
use conbandit::Error;

const SMALL: &str = r#"
name = "small"
horizon = 300
repetitions = 4
base_seed = 11

[environment]
kind = "synthetic-stochastic"
num_keyterms = 3
items_per_keyterm = 3
lambda = 0.5

[[policies]]
kind = "hier-ucb"

[[policies]]
kind = "oracle"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conbandit"))
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn run_writes_csvs_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::parse(SMALL, None).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let manifest = cmd_run(&config, &a).unwrap();
    cmd_run(&config, &b).unwrap();

    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["hier-ucb.csv", "manifest.json", "oracle.csv"]);
    for name in &names {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }

    assert_eq!(read_manifest(&a.join("manifest.json")).unwrap(), manifest);
    assert_eq!(manifest.seeds, vec![11, 12, 13, 14]);
    assert_eq!(manifest.config_hash, config.hash());
    let oracle = manifest.policies.iter().find(|p| p.kind == "oracle").unwrap();
    assert_eq!(oracle.final_mean_regret, 0.0);
    let hier = manifest.policies.iter().find(|p| p.kind == "hier-ucb").unwrap();
    assert!(hier.final_mean_regret > 0.0);

    let rows = read_batch_csv(&a.join("hier-ucb.csv")).unwrap();
    assert_eq!(rows.len(), 300);
    assert_eq!(rows.last().unwrap().mean_cum_regret, hier.final_mean_regret);

    // Rerunning into the same directory overwrites in place.
    cmd_run(&config, &a).unwrap();
    assert_eq!(read(&a.join("hier-ucb.csv")), read(&b.join("hier-ucb.csv")));
}

#[test]
fn config_errors_name_the_problem() {
    let bad_lambda = SMALL.replace("lambda = 0.5", "lambda = 1.5");
    let err = RunConfig::parse(&bad_lambda, None).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("lambda out of range"), "{err}");

    let bad_kind = SMALL.replace("kind = \"oracle\"", "kind = \"thompson\"");
    let err = RunConfig::parse(&bad_kind, None).unwrap_err().to_string();
    assert!(err.contains("thompson"), "{err}");
    assert!(err.contains("line"), "{err}");

    let unknown = SMALL.replace("base_seed = 11", "base_seed = 11\nseeed = 3");
    let err = RunConfig::parse(&unknown, None).unwrap_err().to_string();
    assert!(err.contains("seeed"), "{err}");

    let zero = SMALL.replace("horizon = 300", "horizon = 0");
    assert!(RunConfig::parse(&zero, None).unwrap_err().to_string().contains("horizon"));

    let missing = r#"
name = "d"
horizon = 10
repetitions = 1
[environment]
kind = "dataset"
lambda = 0.5
noise_sigma = 0.1
files = { items = "nope/items.csv", graph = "nope/graph.csv", users = "nope/users.csv" }
[[policies]]
kind = "linucb"
"#;
    let err = RunConfig::parse(missing, None).unwrap_err().to_string();
    assert!(err.contains("items.csv"), "{err}");
}

#[test]
fn config_hash_tracks_meaningful_fields() {
    let base = RunConfig::parse(SMALL, None).unwrap();
    let mut moved = base.clone();
    moved.out_dir = Some("elsewhere".into());
    assert_eq!(base.hash(), moved.hash());
    let reformatted = RunConfig::parse(&SMALL.replace("\n\n", "\n\n\n"), None).unwrap();
    assert_eq!(base.hash(), reformatted.hash());
    for variant in [
        SMALL.replace("horizon = 300", "horizon = 301"),
        SMALL.replace("base_seed = 11", "base_seed = 12"),
        SMALL.replace("lambda = 0.5", "lambda = 0.6"),
        SMALL.replace("kind = \"hier-ucb\"", "kind = \"hier-ucb\"\ngamma = 2.0"),
    ] {
        assert_ne!(base.hash(), RunConfig::parse(&variant, None).unwrap().hash());
    }
}

#[test]
fn presets_parse_with_paper_parameters() {
    for name in PRESETS {
        RunConfig::preset(name).unwrap();
    }
    let p = RunConfig::preset("paper-synthetic").unwrap();
    assert_eq!((p.horizon, p.repetitions), (50_000, 50));
    assert!(p.policies.iter().all(|q| q.gamma == 1.0));
    assert!(RunConfig::preset("nope").is_err());
}

#[test]
fn generated_dataset_is_deterministic_and_loads() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GeneratorSpec {
        users: 3,
        items: 12,
        keyterms: 4,
        dim: 5,
        seed: 9,
    };
    let a = cmd_generate_dataset(&spec, &dir.path().join("a")).unwrap();
    let b = cmd_generate_dataset(&spec, &dir.path().join("b")).unwrap();
    for (x, y) in [(&a.items, &b.items), (&a.graph, &b.graph), (&a.users, &b.users)] {
        assert_eq!(read(x), read(y));
    }
    let problems = cmd_validate(&ValidateTarget::Dataset(dir.path().join("a"))).unwrap();
    assert!(problems.is_empty(), "{problems:?}");

    let loaded = Dataset::load(&DatasetFiles::in_dir(&dir.path().join("a"))).unwrap();
    let generated = Dataset::generate(&spec).unwrap();
    assert_eq!(loaded.catalog, generated.catalog);
    let lambda = conbandit::environments::DiscountFactor::new(0.5).unwrap();
    let envs = load_dataset_env(&a, lambda, 0.0, 1).unwrap();
    assert_eq!(envs.len(), 3);

    let minimal = GeneratorSpec {
        users: 1,
        items: 1,
        keyterms: 1,
        dim: 1,
        seed: 0,
    };
    let files = cmd_generate_dataset(&minimal, &dir.path().join("min")).unwrap();
    assert!(load_dataset_env(&files, lambda, 0.1, 0).is_ok());
}

#[test]
fn broken_graph_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.csv");
    fs::write(&path, "item_id,keyterm_id,weight\na,k1,0.5\na,k2,0.2\nb,k2,1\n").unwrap();
    let problems = cmd_validate(&ValidateTarget::Graph(path)).unwrap();
    assert!(!problems.is_empty());
}

#[test]
fn analyze_report_columns() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    fs::write(
        &ratings,
        "category,item,rating,weight\nthai,a,5,40\nthai,b,4,20\nthai,c,1,2\nsolo,x,3,1\n",
    )
    .unwrap();
    let out = dir.path().join("report.csv");
    let rows = cmd_analyze(&ratings, &[0.2, 0.5, 1.0], Some(&out)).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("category,simple,top_0.2,top_0.5,top_1,weighted\n"), "{text}");
    let (alphas, back) = read_report_csv(&out).unwrap();
    assert_eq!(alphas, vec![0.2, 0.5, 1.0]);
    assert_eq!(back, rows);
    let solo = rows.iter().find(|r| r.category == "solo").unwrap();
    assert!(solo.top.iter().all(|&t| t == 3.0) && solo.simple == 3.0 && solo.weighted == Some(3.0));
    for r in &rows {
        assert_eq!(r.top[2], r.simple);
    }

    let plain = dir.path().join("plain.csv");
    fs::write(&plain, "category,item,rating\nthai,a,5\nthai,b,4\n").unwrap();
    let out = dir.path().join("plain_report.csv");
    cmd_analyze(&plain, &[0.5], Some(&out)).unwrap();
    assert_eq!(
        fs::read_to_string(&out).unwrap().lines().next().unwrap(),
        "category,simple,top_0.5"
    );

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "category,item,rating\nthai,a,5\nthai,b,nine\n").unwrap();
    let err = cmd_analyze(&bad, &[0.5], None).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("out");

    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--reps", "2", "--horizon", "50"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let manifest = read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!((manifest.repetitions, manifest.horizon), (2, 50));

    let ok = bin().args(["validate", "--preset", "paper-synthetic"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));

    let graph = dir.path().join("graph.csv");
    fs::write(&graph, "item_id,keyterm_id,weight\na,k1,0.5\n").unwrap();
    let invalid = bin().args(["validate", "--graph"]).arg(&graph).output().unwrap();
    assert_eq!(invalid.status.code(), Some(1));

    let missing = bin().args(["run", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nonexistent.toml"));

    let gen = bin()
        .args(["generate-dataset", "--users", "2", "--items", "6", "--keyterms", "2", "--dim", "3", "--out"])
        .arg(dir.path().join("ds"))
        .output()
        .unwrap();
    assert!(gen.status.success());
    let check = bin().args(["validate", "--dataset"]).arg(dir.path().join("ds")).output().unwrap();
    assert_eq!(check.status.code(), Some(0));
}
