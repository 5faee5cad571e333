use std::process::{Command, Output};

fn persymm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persymm"))
        .args(args)
        .env_remove("PERSYMM_CACHE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_count_prints_the_decimal_count() {
    let o = persymm(&["solve-count", "--shape", "[5]x5", "--q", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "63");
    let o = persymm(&["solve-count", "--shape", "[5]x5", "--q", "2"]);
    assert_eq!(stdout(&o).trim(), "8704");
}

#[test]
fn oracle_dist_of_three_single_rows() {
    let o = persymm(&["dist", "--shape", "[1;1;1]x1", "--method", "oracle", "--format", "csv"]);
    assert!(o.status.success());
    let rows = persymm::report::parse_csv(&stdout(&o)).unwrap();
    let counts: Vec<_> = rows.iter().map(|r| r.count.as_str()).collect();
    assert_eq!(counts, ["1", "7"]);
}

#[test]
fn dist_methods_agree() {
    let mut outs = Vec::new();
    for m in ["oracle", "formula"] {
        let o = persymm(&["dist", "--shape", "[2;2]x4", "--method", m, "--format", "json"]);
        assert!(o.status.success(), "{m}");
        let rows = persymm::report::parse_json(&stdout(&o)).unwrap();
        outs.push(rows.into_iter().map(|r| r.count).collect::<Vec<_>>());
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], ["1", "9", "126", "504", "384"]);
    let o = persymm(&["dist", "--shape", "[2;2;(4)]x4", "--method", "extension", "--format", "csv"]);
    assert!(stdout(&o).contains("63288384"));
}

#[test]
fn verify_exit_codes() {
    let ok = persymm(&["verify", "--family", "double55", "--k", "4"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let ok = persymm(&["verify", "--family", "double22", "--k", "1..10", "--quiet"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("0 failed"));
    let shape = persymm(&["verify", "--family", "[2;2;2]x6"]);
    assert_eq!(shape.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(persymm(&["dist", "--shape", "[2;2"]).status.code(), Some(2));
    assert_eq!(persymm(&["verify", "--family", "nope"]).status.code(), Some(2));
    assert_eq!(persymm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(persymm(&["verify"]).status.code(), Some(2));
    assert_eq!(
        persymm(&["dist", "--shape", "[2]x2", "--max-states", "2^x"]).status.code(),
        Some(2)
    );
}

#[test]
fn over_budget_enumeration_fails_with_1() {
    let o = persymm(&["dist", "--shape", "[5;5]x10", "--max-states", "2^20"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn oracle_solve_and_expansion() {
    let o = persymm(&["oracle-solve", "--shape", "[2;2;2]x2", "--q", "2", "--expand"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[0], "x1*x5 + x3*x7 = 0");
    assert_eq!(lines[8], "x2*x14 + x4*x16 = 0");
    assert_eq!(lines[9], "4720");
}

#[test]
fn symbolic_table_for_l2() {
    let o = persymm(&["table", "--family", "triple-s3", "--l", "2", "--symbolic"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("2^(3k+8) - 7*2^(2k+16) + 7*2^(k+25) - 2^35"));
    assert!(text.contains("347*2^(k+3) + 1503872"));
}

#[test]
fn explicit_table_report() {
    let o = persymm(&["table", "--family", "triple-2-3-4x6", "--format", "csv"]);
    let rows = persymm::report::parse_csv(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[6].count, "2145687552");
    let typos = persymm(&["table", "--typos"]);
    assert!(stdout(&typos).contains("8257536"));
}

#[test]
fn reduce_traces_to_a_base() {
    let o = persymm(&["reduce", "--smL", "3,0,2", "--k", "12", "--i", "8"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("G_8([3;3;3+2]x12) = 2^4 * G_7([3;3;3+1]x11)"));
    let same = persymm(&["reduce", "--shape", "[3;3;5]x12", "--i", "8"]);
    assert_eq!(stdout(&same), text);
}

#[test]
fn bench_reports_a_rate() {
    let o = persymm(&["bench", "--shape", "[3;3]x6", "--states", "2^12"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("states/s per worker"));
}

#[test]
fn cache_flag_persists_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let p = path.to_str().unwrap();
    let a = persymm(&["--cache", p, "dist", "--shape", "[3;3]x4", "--format", "csv"]);
    assert!(a.status.success());
    assert!(std::fs::read_to_string(&path).unwrap().contains("\"[3;3]x4\""));
    let b = persymm(&["--cache", p, "dist", "--shape", "[3;3]x4", "--format", "csv"]);
    assert_eq!(stdout(&a), stdout(&b));
}
