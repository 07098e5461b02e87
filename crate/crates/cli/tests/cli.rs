use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name)
}

fn segtrust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segtrust"))
        .args(args)
        .env_remove("SEGTRUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_all_outputs_reproducibly() {
    let fig2 = scenario("fig2.scenario");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let o = segtrust(&[
            "run",
            "--config",
            fig2.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--key-bits",
            "512",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("query_id,s,d,routes,messages,decrypt_ms,tst_sd"));
    }
    for file in ["metrics.csv", "trace.jsonl", "snapshots.jsonl", "report.json"] {
        assert!(dirs[0].path().join(file).exists(), "{file}");
    }
    for file in ["metrics.csv", "trace.jsonl"] {
        assert_eq!(
            fs::read(dirs[0].path().join(file)).unwrap(),
            fs::read(dirs[1].path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn trust_query_reports_both_routes() {
    let fig3 = scenario("fig3.scenario");
    let o = segtrust(&["trust-query", "--config", fig3.to_str().unwrap(), "s", "d", "--at", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("routes 2"), "{text}");
    assert!(text.contains("  1 -> 2 -> 4 -> 6"));
    assert!(text.contains("  1 -> 3 -> 5 -> 6"));
    assert!(text.contains("messages 6"));
}

#[test]
fn adjacent_vehicles_need_no_messages() {
    let fig3 = scenario("fig3.scenario");
    let o = segtrust(&[
        "trust-query",
        "--config",
        fig3.to_str().unwrap(),
        "s",
        "A",
        "--at",
        "5",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mode"], "direct");
    assert_eq!(v["messages_sent"], 0);
}

#[test]
fn unreachable_target_exits_4() {
    let fig2 = scenario("fig2.scenario");
    let o = segtrust(&["trust-query", "--config", fig2.to_str().unwrap(), "D", "A", "--at", "5"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("no trusted route"));
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scenario");
    let text = fs::read_to_string(scenario("fig2.scenario"))
        .unwrap()
        .replace("psi_t = 0.5", "psi_t = 3.0");
    fs::write(&path, text).unwrap();
    let o = segtrust(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("thresholds.psi_t"), "{}", stderr(&o));
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.json");
    fs::write(
        &path,
        r#"{"sim": {"duration": 2.0}, "vehicles": [{"id": 1, "speed": 20.0, "profile": "11"}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = segtrust(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["steps"], 3);
}

#[test]
fn bench_tables() {
    let o = segtrust(&["bench", "dijkstra", "--sizes", "50,100,200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().ends_with(",ratio"));
    assert_eq!(text.lines().count(), 4);

    let o = segtrust(&["bench", "crypto", "--key-bits", "128,256", "--samples", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(text.contains("256,exponentiation,2,"));
}

#[test]
fn export_after_run() {
    let dir = tempfile::tempdir().unwrap();
    let fig3 = scenario("fig3.scenario");
    let o = segtrust(&[
        "run",
        "--config",
        fig3.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--key-bits",
        "256",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snaps = dir.path().join("snapshots.jsonl");
    let o = segtrust(&["export", snaps.to_str().unwrap(), "--table", "nodes"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("snapshot,time,id,x,y,v,lane,centrality,established_out"));
}

#[test]
fn log_level_comes_from_environment() {
    let fig3 = scenario("fig3.scenario");
    let o = Command::new(env!("CARGO_BIN_EXE_segtrust"))
        .args(["trust-query", "--config", fig3.to_str().unwrap(), "s", "d", "--at", "5"])
        .env("SEGTRUST_LOG", "debug")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stderr(&o).contains("DEBUG"), "{}", stderr(&o));
    let quiet = segtrust(&["trust-query", "--config", fig3.to_str().unwrap(), "s", "d", "--at", "5"]);
    assert!(stderr(&quiet).is_empty());
}
