use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn lpmln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpmln"))
        .args(args)
        .env_remove("LPMLN_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report_line(o: &Output) -> Value {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(err.lines().last().expect("report on stderr")).unwrap()
}

#[test]
fn ground_prints_origins() {
    let o = lpmln(&["ground", "--program", fixture("coin.lpmln").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("% origin 1"));
    assert!(text.contains("@w(1) head :- flip. % origin 2"));
    assert_eq!(report_line(&o)["subcommand"], "ground");
}

#[test]
fn infer_virus_marginal_ten_digits() {
    let o = lpmln(&[
        "infer",
        "--program",
        fixture("virus_learned.lpmln").to_str().unwrap(),
        "--query",
        "carries_virus(\"E\")",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn infer_table_is_csv_with_probability_column() {
    let o = lpmln(&["infer", "--table", "--program", fixture("virus_learned.lpmln").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert!(header.ends_with("log_weight,probability"));
    let total: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn models_respects_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let evid = dir.path().join("e.evid");
    std::fs::write(&evid, ":- not flip.\n:- head.\n").unwrap();
    let o = lpmln(&[
        "models",
        "--program",
        fixture("coin.lpmln").to_str().unwrap(),
        "--evidence",
        evid.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "{flip}");
}

#[test]
fn sample_is_reproducible_from_env_seed() {
    let program = fixture("virus_learned.lpmln");
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_lpmln"))
            .args(["sample", "--negate", "--n", "20", "--program", program.to_str().unwrap()])
            .env("LPMLN_SEED", seed)
            .output()
            .unwrap()
    };
    let a = run("7");
    let b = run("7");
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let footer: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(footer["samples"], 20);
    assert_eq!(footer["seed"], 7);
    assert!(!text.contains("neg("));
}

#[test]
fn translate_index_adds_example_facts() {
    let o = lpmln(&["translate", "--mode", "index:3", "--program", fixture("coin.lpmln").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    for k in 1..=3 {
        assert!(text.contains(&format!("ex_index({k}).")));
    }
}

#[test]
fn translate_completion_rejects_non_tight() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("loop.lpmln");
    std::fs::write(&p, "p :- q.\nq :- p.\n").unwrap();
    let o = lpmln(&["translate", "--mode", "completion", "--program", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_mode_and_flags_are_usage_errors() {
    let o = lpmln(&["translate", "--mode", "bogus", "--program", fixture("coin.lpmln").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(lpmln(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(lpmln(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_is_data_error() {
    let o = lpmln(&["ground", "--program", "/nonexistent/x.lpmln"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_error_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.lpmln");
    std::fs::write(&p, "p :- q(.\n").unwrap();
    let o = lpmln(&["ground", "--program", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn learn_coin_writes_output_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("learned.lpmln");
    let rep = dir.path().join("report.json");
    let o = lpmln(&[
        "--output",
        out.to_str().unwrap(),
        "--report",
        rep.to_str().unwrap(),
        "learn",
        "--program",
        fixture("coin.lpmln").to_str().unwrap(),
        "--evidence",
        fixture("coin.evid").to_str().unwrap(),
        "--max-iters",
        "2000",
        "--lr",
        "0.5",
        "--delta",
        "1e-9",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let learned = std::fs::read_to_string(&out).unwrap();
    assert!(!learned.contains("@w("));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(report["subcommand"], "learn");
    assert_eq!(report["outputs"][0], out.to_str().unwrap());
    let w = report["details"]["weights"][0].as_f64().unwrap();
    // two of three flips landed tails, with the no-flip model as a third option
    assert!((w - 0.25f64.ln()).abs() < 1e-6, "{w}");
}

#[test]
fn learn_closed_form_requires_complete_data() {
    let o = lpmln(&[
        "learn",
        "--closed-form",
        "--program",
        fixture("coin.lpmln").to_str().unwrap(),
        "--evidence",
        fixture("coin.evid").to_str().unwrap(),
    ]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn jobs_flag_is_accepted() {
    let o = lpmln(&["--jobs", "2", "ground", "--program", fixture("coin.lpmln").to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn demo_unknown_is_usage_error() {
    assert_eq!(lpmln(&["demo", "nope"]).status.code(), Some(1));
    let o = lpmln(&["demo", "virus"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("P(carries_virus(\"E\")) = 0"));
}
