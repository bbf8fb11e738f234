//! Kills the real server process mid-session and checks nothing is lost.

mod support;

use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::json;

use annobench::export::ExportRecord;
use annobench::scheme::RawLabel;
use annobench::session::TaskView;

use support::*;

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let rows: Vec<_> = (0..40).map(|i| json!({"id": format!("d{i:03}"), "text": format!("text {i}")})).collect();
    write_jsonl(&dir.join("data.jsonl"), &rows);
    let cfg = "task_name: crash test\n\
data_files: [data.jsonl]\n\
id_field: id\n\
text_field: text\n\
schemes:\n  - name: s\n    kind: radio\n    required: true\n    options: [{value: a}, {value: b}]\n\
server:\n  output_dir: out\n";
    let path = dir.join("config.yaml");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn start(config: &Path, port: u16) -> Child {
    Command::new(env!("CARGO_BIN_EXE_annobench"))
        .args(["start", config.to_str().unwrap(), "--port", &port.to_string(), "--host", "127.0.0.1"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap()
}

async fn wait_up(client: &reqwest::Client, base: &str) {
    let deadline = Instant::now() + Duration::from_secs(20);
    while Instant::now() < deadline {
        if client.get(format!("{base}/")).send().await.is_ok() {
            return;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("server did not come up");
}

async fn login(client: &reqwest::Client, base: &str, worker: &str) -> String {
    let resp = client.get(format!("{base}/?id={worker}")).send().await.unwrap();
    let token = cookie_token(&resp).unwrap();
    format!("{}={token}", annobench::server::SESSION_COOKIE)
}

async fn task(client: &reqwest::Client, base: &str, cookie: &str) -> TaskView {
    client
        .get(format!("{base}/task"))
        .header(reqwest::header::COOKIE, cookie)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn sigkill_loses_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let client = client();
    let mut acknowledged = std::collections::HashMap::<String, usize>::new();

    for round in 0..4 {
        let port = free_port();
        let base = format!("http://127.0.0.1:{port}");
        let mut child = start(&config, port);
        wait_up(&client, &base).await;
        for w in ["k1", "k2", "k3"] {
            let cookie = login(&client, &base, w).await;
            let view = task(&client, &base, &cookie).await;
            let done = acknowledged.entry(w.to_string()).or_default();
            if let TaskView::Instance { position, .. } = &view {
                assert_eq!(*position, *done, "round {round}: {w} resumed at the wrong item");
            }
            // Fire several submissions; only those answered with 200 count.
            for _ in 0..(3 + round) {
                let view = task(&client, &base, &cookie).await;
                if view.item_id().is_none() {
                    break;
                }
                let body = submission_json(&view, &[RawLabel::new("s", json!("a"))]);
                let resp = client
                    .post(format!("{base}/submit"))
                    .header(reqwest::header::COOKIE, &cookie)
                    .json(&body)
                    .send()
                    .await
                    .unwrap();
                assert_eq!(resp.status(), 200);
                *done += 1;
            }
        }
        child.kill().unwrap();
        child.wait().unwrap();
    }

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_annobench"))
        .args(["export", config.to_str().unwrap(), "--format", "jsonl"])
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows: Vec<ExportRecord> = annobench::export::read_jsonl(Path::new(summary["annotations"].as_str().unwrap())).unwrap();
    let total: usize = acknowledged.values().sum();
    assert_eq!(rows.len(), total);
    let pairs: std::collections::HashSet<_> = rows.iter().map(|r| (r.annotator.clone(), r.instance_id.clone())).collect();
    assert_eq!(pairs.len(), rows.len(), "duplicate annotations");
}
