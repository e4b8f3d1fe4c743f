use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value as Json;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn hyper(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hyper"))
        .args(args)
        .env_remove("HYPER_CONFIG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn path(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

fn stdout_json(o: &Output) -> Json {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr_json(o: &Output) -> Json {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn whatif_prints_the_result_as_json() {
    let o = hyper(&["-c", &path("toy/toy.json"), "whatif", "-q", &path("toy/count_y.hql")], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["value"], 3.0);
}

#[test]
fn query_text_can_come_from_stdin() {
    let text = std::fs::read_to_string(fixtures().join("toy/count_y.hql")).unwrap();
    let o = hyper(&["-c", &path("toy/toy.json"), "whatif", "--indep"], Some(&text));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["value"], 2.0);
}

#[test]
fn config_can_come_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_hyper"))
        .args(["whatif", "-e", "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1"])
        .env("HYPER_CONFIG", path("toy/toy.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["value"], 3.0);
}

#[test]
fn howto_and_oracle_agree_on_the_toy_plan() {
    let args = ["-c", &path("toy/toy.json")];
    let h = hyper(&[&args[..], &["howto", "-q", &path("toy/howto_x.hql")]].concat(), None);
    let o = hyper(&[&args[..], &["oracle", "-q", &path("toy/howto_x.hql")]].concat(), None);
    assert_eq!(h.status.code(), Some(0));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&h)["plan"], stdout_json(&o)["plan"]);
    assert_eq!(stdout_json(&h)["plan"]["X"]["kind"], "SET");
}

#[test]
fn blocks_lists_the_partition() {
    let o = hyper(&["-c", &path("amazon/amazon.json"), "blocks"], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["diagnostics"]["blocks"], 3);
}

#[test]
fn check_without_a_session_only_parses() {
    let o = hyper(&["check", "-q", &path("amazon/fig5.hql")], None);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["kind"], "howto");
    assert_eq!(v["diagnostics"]["validated"], false);
}

#[test]
fn syntax_errors_exit_with_one_and_a_location() {
    let o = hyper(&["check", "-e", "USE T UPDATE(X) 1 OUTPUT COUNT(*)"], None);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "SyntaxError");
    assert_eq!(e["error"]["line"], 1);
    assert_eq!(e["error"]["col"], 17);
}

#[test]
fn validation_errors_exit_with_one() {
    let o = hyper(&["-c", &path("toy/toy.json"), "check", "-e", "USE T UPDATE(Q) = 1 OUTPUT COUNT(*)"], None);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"]["kind"], "UnknownAttribute");
}

#[test]
fn data_errors_exit_with_two() {
    let o = hyper(&["-c", "/nonexistent/session.json", "blocks"], None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "Io");
    let missing = hyper(&["blocks"], None);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(stderr_json(&missing)["error"]["kind"], "Config");
}

#[test]
fn evaluation_errors_exit_with_three() {
    let q = "USE T WHEN X = 0 HOWTOUPDATE X LIMIT POST(X) IN (0) TOMAXIMIZE AVG(POST(Y))";
    let o = hyper(&["-c", &path("toy/toy.json"), "howto", "-e", q], None);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"]["kind"], "EmptyCandidateSet");
}

#[test]
fn estimator_flags_override_the_session_file() {
    let o = hyper(
        &["-c", &path("toy/toy.json"), "--estimator", "freq", "whatif", "-q", &path("toy/count_y.hql")],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["diagnostics"]["estimator"], "freq");
    assert_eq!(v["value"], 2.0);
    let bad = hyper(&["-c", &path("toy/toy.json"), "--sample", "0", "whatif", "-q", &path("toy/count_y.hql")], None);
    assert_eq!(stderr_json(&bad)["error"]["kind"], "EmptySample");
}

#[test]
fn repl_answers_queries_and_meta_commands() {
    let input = "USE T UPDATE(X) = 1 OUTPUT COUNT(*)\nFOR POST(Y) = 1;\n:dag\nUSE T UPDATE(X) 1;\n:quit\n";
    let o = hyper(&["-c", &path("toy/toy.json"), "repl"], Some(input));
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Json> =
        String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["value"], 3.0);
    assert_eq!(lines[1]["diagnostics"]["edges"], 1);
    assert_eq!(lines[2]["error"]["kind"], "SyntaxError");
}
