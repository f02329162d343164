use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-mix"));
    c.env_remove("SPARSE_MIX_OUT");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> toml::Value {
    toml::from_str(&fs::read_to_string(dir.join("fit_report.toml")).unwrap()).unwrap()
}

fn assignments(report: &toml::Value) -> Vec<i64> {
    report["assignments"].as_array().unwrap().iter().map(|v| v.as_integer().unwrap()).collect()
}

/// Six points near -10 and six near +10 in one dimension.
const TWO_CLUSTERS: &str = "1 12 2
-10.3 1
-9.8 1
-10.1 1
-9.6 1
-10.4 1
-9.9 1
9.7 2
10.2 2
10.0 2
9.5 2
10.6 2
10.1 2
";

#[test]
fn two_cluster_fixture_is_split_correctly() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("two.txt");
    fs::write(&input, TWO_CLUSTERS).unwrap();
    for method in ["sparse", "baseline"] {
        let out = tmp.path().join(method);
        let o = run(bin().args([
            "fit",
            input.to_str().unwrap(),
            "--method",
            method,
            "--lambda",
            "0.5",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert!(o.status.success(), "{method}: {}", stderr(&o));
        let rep = report(&out);
        assert_eq!(rep["summary"]["k"].as_integer(), Some(2));
        assert_eq!(rep["components"].as_array().unwrap().len(), 2);
        let a = assignments(&rep);
        assert!(a[..6].iter().all(|&x| x == a[0]), "{method}: {a:?}");
        assert!(a[6..].iter().all(|&x| x == a[6]), "{method}: {a:?}");
        assert_ne!(a[0], a[6]);
        assert!(a.iter().all(|&x| x == 1 || x == 2));
    }
}

#[test]
fn headerless_table_needs_k_and_accepts_one_component() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("table.csv");
    fs::write(&input, "1.0, 2.0\n1.5, 2.5\n0.5, 1.0\n2.0, 2.2\n").unwrap();
    let o = run(bin().args(["fit", input.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("-k"));

    let o = run(bin().args(["fit", input.to_str().unwrap(), "-k", "1", "--out", tmp.path().to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = report(tmp.path());
    assert_eq!(assignments(&rep), vec![1, 1, 1, 1]);
    assert!((rep["components"][0]["weight"].as_float().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn empty_input_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("empty.txt");
    fs::write(&input, "").unwrap();
    let o = run(bin().args(["fit", input.to_str().unwrap(), "-k", "2", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("fit_report.toml").exists());
}

#[test]
fn malformed_line_is_named_in_the_error() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("bad.txt");
    fs::write(&input, "1.0 2.0\n3.0 oops\n4.0 5.0\n").unwrap();
    let o = run(bin().args(["fit", input.to_str().unwrap(), "-k", "2", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("line 2"), "{msg}");
    assert!(msg.contains("oops"), "{msg}");
}

#[test]
fn missing_input_and_bad_flags_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let o = run(bin().args(["fit", tmp.path().join("nope.txt").to_str().unwrap(), "-k", "2"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().args(["sweep", "--replicates", "1", "--lambda", "-3", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().args(["simulate", "--weights", "0.5,0.6,0.1", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("two.txt");
    fs::write(&input, TWO_CLUSTERS).unwrap();
    let from_file = tmp.path().join("from-file");
    let config = tmp.path().join("cfg.toml");
    fs::write(
        &config,
        format!("out = {:?}\nseed = 5\n[hyperparams]\nlambda = 0.25\nrestarts = 2\n", from_file.to_str().unwrap()),
    )
    .unwrap();

    let o = run(bin().args(["--config", config.to_str().unwrap(), "fit", input.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = report(&from_file);
    assert_eq!(rep["summary"]["seed"].as_integer(), Some(5));
    assert_eq!(rep["hyperparams"]["lambda"].as_str(), Some("0.25"));
    assert_eq!(rep["hyperparams"]["restarts"].as_integer(), Some(2));

    let flagged = tmp.path().join("flagged");
    let o = run(bin().args([
        "--config",
        config.to_str().unwrap(),
        "fit",
        input.to_str().unwrap(),
        "--lambda",
        "heuristic:2",
        "--seed",
        "9",
        "--out",
        flagged.to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = report(&flagged);
    assert_eq!(rep["summary"]["seed"].as_integer(), Some(9));
    assert_eq!(rep["hyperparams"]["lambda"].as_str(), Some("heuristic:2.0"));
    assert_eq!(rep["hyperparams"]["restarts"].as_integer(), Some(2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("cfg.toml");
    fs::write(&config, "[hyperparams]\nlamda = 1.0\n").unwrap();
    let o = run(bin().args(["--config", config.to_str().unwrap(), "simulate", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"));
}

#[test]
fn environment_variable_sets_default_output() {
    let tmp = TempDir::new().unwrap();
    let target = tmp.path().join("env-out");
    let o = run(bin().current_dir(tmp.path()).env("SPARSE_MIX_OUT", &target).args(["simulate", "--replicates", "2"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("replicate_0000.txt").exists());
    assert!(target.join("replicate_0001.txt").exists());

    let explicit = tmp.path().join("explicit");
    let o = run(bin().env("SPARSE_MIX_OUT", &target).args(["simulate", "--out", explicit.to_str().unwrap()]));
    assert!(o.status.success());
    assert!(explicit.join("replicate_0000.txt").exists());
}

#[test]
fn simulated_files_feed_back_into_fit() {
    let tmp = TempDir::new().unwrap();
    let o = run(bin().args([
        "simulate",
        "--dim",
        "3",
        "--dilation",
        "40",
        "--seed",
        "4",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    assert!(o.status.success());
    let file = tmp.path().join("replicate_0000.txt");
    assert!(fs::read_to_string(&file).unwrap().starts_with("3 10 3\n"));
    let out = tmp.path().join("fit");
    let o = run(bin().args(["fit", file.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = report(&out);
    assert_eq!(rep["summary"]["d"].as_integer(), Some(3));
    assert_eq!(assignments(&rep).len(), 10);
}

fn sweep(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "sweep",
        "--dims",
        "2,3",
        "--dilations",
        "10,40",
        "--replicates",
        "6",
        "--seed",
        "21",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(bin().args(&args))
}

fn read_records(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn sweep_outputs_are_complete_and_paired() {
    let tmp = TempDir::new().unwrap();
    let o = sweep(tmp.path(), &["--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let table = fs::read_to_string(tmp.path().join("ancrci_sparse.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("dim,\"dilation 10 [-5,5]\",\"dilation 40 [-20,20]\""));
    assert_eq!(lines.count(), 2);

    let rows = read_records(&tmp.path().join("replicates.csv"));
    assert_eq!(rows.len(), 2 * 2 * 2 * 6);
    let key = |r: &csv::StringRecord| (r[0].to_string(), r[1].to_string(), r[3].to_string());
    for s in rows.iter().filter(|r| &r[2] == "sparse") {
        let b = rows.iter().find(|b| &b[2] == "baseline" && key(b) == key(s)).unwrap();
        assert_eq!(&s[7], &b[7], "paired datasets share a hash");
        assert_eq!(&s[6], "", "timings are off by default");
    }
    assert!(tmp.path().join("plot").join("sparse_d3_dil40.csv").exists());
    let manifest: toml::Value = toml::from_str(&fs::read_to_string(tmp.path().join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 8);
    assert_eq!(manifest["config"]["seed"].as_integer(), Some(21));
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(sweep(&a, &["--jobs", "1"]).status.success());
    assert!(sweep(&b, &["--jobs", "4"]).status.success());
    for file in ["ancrci_sparse.csv", "ancrci_baseline.csv", "replicates.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}
