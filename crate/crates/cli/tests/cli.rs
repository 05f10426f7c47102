use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spgd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spgd"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn spgd")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
[experiment]
kind = "gmean_sim"
seeds = [0, 1]

[data]
n = 300

[pgd]
iterations = 3
perturbations = 30
"#;

#[test]
fn validate_accepts_a_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[experiment]\nkind = \"gmean_sim\"\n").unwrap();
    let out = spgd(&["validate", "c.toml"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gmean_sim"));
}

#[test]
fn validate_lists_every_problem_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[experiment]\nkind = \"gmean_sim\"\nseeds = []\n\n[pgd]\neta = -1.0\nmystery = 3\n";
    fs::write(dir.path().join("bad.toml"), text).unwrap();
    let out = spgd(&["validate", "bad.toml"], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    for line in ["line 3", "line 6", "line 7"] {
        assert!(err.contains(line), "missing {line} in:\n{err}");
    }
}

#[test]
fn gen_data_then_run_on_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = spgd(&["gen-data", "simulated", "data.csv", "--n", "400", "--seed", "3"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x0,x1,label"));
    assert_eq!(csv.lines().count(), 401);

    let config = "[experiment]\nkind = \"gmean_sim\"\nseeds = [0]\n[data]\nsource = \"csv\"\npath = \"data.csv\"\n[pgd]\niterations = 2\nperturbations = 20\n";
    fs::write(dir.path().join("c.toml"), config).unwrap();
    let out = spgd(&["run", "c.toml", "--out", "report"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report = fs::read_to_string(dir.path().join("report/report.csv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("proposed,")), "{report}");
}

#[test]
fn reports_are_identical_apart_from_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), TINY).unwrap();
    let mut bodies = Vec::new();
    for out_dir in ["a", "b"] {
        let out = spgd(&["run", "c.toml", "--out", out_dir], dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
        let text = fs::read_to_string(dir.path().join(out_dir).join("report.csv")).unwrap();
        let (first, rest) = text.split_once('\n').unwrap();
        assert!(first.starts_with("# generated_at: "));
        bodies.push(rest.to_string());
        let trace = fs::read_to_string(dir.path().join(out_dir).join("trace_seed0.jsonl"));
        assert!(trace.is_ok_and(|t| t.lines().count() == 3));
    }
    assert_eq!(bodies[0], bodies[1]);

    for line in bodies[0].lines().filter(|l| !l.starts_with('#')).skip(1) {
        for cell in line.split(',').skip(1) {
            let v: f64 = cell.parse().unwrap_or_else(|_| panic!("cell {cell} in {line}"));
            assert!((0.0..=1.0).contains(&v), "{line}");
        }
    }
}

#[test]
fn run_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[experiment]\nkind = \"nope\"\n").unwrap();
    let out = spgd(&["run", "c.toml"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}
