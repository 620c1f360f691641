//! End-to-end checks of the binary: exit codes, output values matching
//! the library exactly, and CSV round-trips.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use stogame::game::builtins;
use stogame_cli::gamefile::emit_game;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stogame"))
}

fn scratch(name: &str) -> PathBuf {
    let mut dir = std::env::temp_dir();
    dir.push(format!("stogame-cli-test-{}-{name}", std::process::id()));
    dir
}

fn write_game(name: &str, doc: &str) -> PathBuf {
    let path = scratch(name);
    fs::write(&path, doc).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn value_command_matches_closed_form() {
    let path = write_game("e1.json", &emit_game(&builtins::example1(), "example1"));
    let out = run(&[
        "value",
        "--game",
        path.to_str().unwrap(),
        "--discount",
        "0.25",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(
        text.contains("0.666666666"),
        "expected the 2/3 value in output:\n{text}"
    );
    let _ = fs::remove_file(path);
}

#[test]
fn value_command_is_a_thin_adapter() {
    // The printed discounted value equals the library result exactly.
    let game = builtins::big_match::<f64>();
    let path = write_game("bm.json", &emit_game(&game, "bigmatch"));
    let out = run(&[
        "value",
        "--game",
        path.to_str().unwrap(),
        "--discount",
        "0.5",
        "--tol",
        "1e-10",
    ]);
    assert!(out.status.success());
    let lib = stogame::shapley::discounted_value(&game, 0.5, 1e-10).unwrap();
    let text = stdout(&out);
    let printed: f64 = text
        .lines()
        .find(|l| l.trim_start().starts_with('k'))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((printed - lib.value[0]).abs() < 1e-15);
    let _ = fs::remove_file(path);
}

#[test]
fn validation_failures_exit_one() {
    let mut doc = emit_game(&builtins::big_match(), "bm");
    doc = doc.replace("\"1*\": 1.0", "\"1*\": 0.8");
    let path = write_game("bad.json", &doc);
    let out = run(&["value", "--game", path.to_str().unwrap(), "--discount", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("transition[0][0][0]"), "{err}");
    let _ = fs::remove_file(path);

    let path = write_game("missing.json", "{\"name\": \"x\"}");
    let out = run(&["value", "--game", path.to_str().unwrap(), "--discount", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let _ = fs::remove_file(path);
}

#[test]
fn solver_failures_exit_two() {
    // A discount above 1 is rejected by the solver layer.
    let path = write_game("e1b.json", &emit_game(&builtins::example1(), "example1"));
    let out = run(&[
        "value",
        "--game",
        path.to_str().unwrap(),
        "--discount",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1), "bad discount is a validation error");
    // Blackwell on a two-player game is a validation error.
    let out = run(&["mdp-blackwell", "--game", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let _ = fs::remove_file(path);
}

#[test]
fn sweep_csv_round_trips_exactly() {
    let game = builtins::example1::<f64>();
    let path = write_game("e1c.json", &emit_game(&game, "example1"));
    let csv_path = scratch("sweep.csv");
    let out = run(&[
        "sweep",
        "--game",
        path.to_str().unwrap(),
        "--lambdas",
        "geometric:0.25,0.4,3",
        "--csv",
        csv_path.to_str().unwrap(),
        "--tol",
        "1e-10",
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,v_k,v_1*,v_0*");
    let lambdas: Vec<f64> = (0..3).map(|k| 0.25 * 0.4f64.powi(k)).collect();
    let table = stogame::shapley::lambda_sweep(&game, &lambdas, 1e-10).unwrap();
    for ((lambda, values), line) in table.iter().zip(lines) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells[0].to_bits(), lambda.to_bits());
        for (a, b) in values.iter().zip(&cells[1..]) {
            assert_eq!(a.to_bits(), b.to_bits(), "CSV must round-trip floats");
        }
    }
    let _ = fs::remove_file(path);
    let _ = fs::remove_file(csv_path);
}

#[test]
fn bigmatch_command_reports_bound() {
    let out = run(&["bigmatch", "--M", "10", "--T", "200"]);
    assert!(out.status.success());
    let text = stdout(&out);
    // 10/22 - 10/400 = 0.42954545...
    assert!(text.contains("0.4295454545"), "{text}");
}

#[test]
fn pathology_command_writes_oscillation_csv() {
    let csv_path = scratch("odd.csv");
    let out = run(&[
        "pathology",
        "--sequence",
        "odd",
        "--n-from",
        "3",
        "--n-to",
        "8",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows[3..] {
        let y: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!(y <= 4.0 / 9.0 + 0.02, "tail y {y}");
    }
    let _ = fs::remove_file(csv_path);
}

#[test]
fn mn_command_runs_with_check() {
    let path = write_game("bm2.json", &emit_game(&builtins::big_match(), "bigmatch"));
    let out = run(&[
        "mn",
        "--game",
        path.to_str().unwrap(),
        "--eps",
        "0.1",
        "--T",
        "300",
        "--opponent",
        "uniform",
        "--seed",
        "7",
        "--check",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("0 violations"), "{text}");
    let _ = fs::remove_file(path);
}

#[test]
fn puiseux_and_limit_commands() {
    let path = write_game("e1d.json", &emit_game(&builtins::example1(), "example1"));
    let out = run(&["puiseux", "--game", path.to_str().unwrap(), "--state", "k"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let exponent: f64 = text
        .split("lambda^")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((exponent - 0.5).abs() < 0.02, "{text}");

    let out = run(&[
        "limit",
        "--game",
        path.to_str().unwrap(),
        "--n-big",
        "200",
        "--lambda-small",
        "0.005",
    ]);
    assert!(out.status.success());
    let _ = fs::remove_file(path);
}

#[test]
fn blackwell_command_on_mdp_file() {
    let path = write_game("e2.json", &emit_game(&builtins::example2(), "example2"));
    let out = run(&["mdp-blackwell", "--game", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("to_k5"), "k1 should move to k5:\n{text}");
    assert!(text.contains("to_k1"), "k5 should move to k1:\n{text}");
    let _ = fs::remove_file(path);
}
