//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use annobench::config::TextField;
use annobench::render::WidgetDescriptor;
use annobench::scheme::{AnnotationScheme, RawLabel, SchemeKind};
use annobench::session::{Submission, SubmitOutcome, TaskView, Workbench, WorkbenchOptions};
use annobench::TaskConfig;

pub fn write_jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

/// `n` one-line documents with a required radio scheme `s` (a/b).
pub fn simple_task(dir: &Path, n: usize) -> TaskConfig {
    let rows: Vec<Value> = (0..n)
        .map(|i| json!({"id": format!("d{i:03}"), "text": format!("document number {i} about topic {}", i % 7)}))
        .collect();
    write_jsonl(&dir.join("data.jsonl"), &rows);
    let mut cfg = TaskConfig::minimal("test task", vec![PathBuf::from("data.jsonl")], "id", TextField::One("text".into()));
    cfg.base_dir = dir.to_path_buf();
    cfg.server.output_dir = dir.join("out");
    let mut s = AnnotationScheme::new("s", SchemeKind::Radio).with_options(["a", "b"]);
    s.required = true;
    cfg.schemes = vec![s];
    cfg
}

pub fn open(cfg: TaskConfig) -> Workbench {
    Workbench::open_with(
        cfg,
        WorkbenchOptions {
            background_training: false,
            ..Default::default()
        },
    )
    .unwrap()
}

pub fn widgets(view: &TaskView) -> &[WidgetDescriptor] {
    match view {
        TaskView::Survey { widgets, .. } => widgets,
        TaskView::Prestudy { model, .. } | TaskView::Instance { model, .. } => &model.widgets,
        _ => &[],
    }
}

/// Some valid answer for every widget of the view.
pub fn auto_labels(view: &TaskView) -> Vec<RawLabel> {
    let text_doc = match view {
        TaskView::Prestudy { model, .. } | TaskView::Instance { model, .. } => model
            .documents
            .iter()
            .find(|d| d.kind == annobench::data::DocumentKind::Text && !d.payload.is_empty())
            .map(|d| d.index),
        _ => None,
    };
    widgets(view)
        .iter()
        .map(|w| {
            let value = match w.kind {
                SchemeKind::Multiselect => json!([w.options[0].value]),
                SchemeKind::Radio | SchemeKind::Dropdown => json!(w.options[0].value),
                SchemeKind::BestWorst => json!({"best": w.choices[0], "worst": w.choices[1]}),
                SchemeKind::Likert => json!(1),
                SchemeKind::FreeText => json!("fine"),
                SchemeKind::Number => json!(30),
                SchemeKind::Span => match text_doc {
                    Some(i) => json!([{"document_index": i, "start": 0, "end": 1, "label": w.span_labels[0]}]),
                    None => json!([]),
                },
            };
            RawLabel::new(w.scheme.clone(), value)
        })
        .collect()
}

/// The gold answer when `item_id` is a prestudy or attention item.
pub fn gold_labels(wb: &Workbench, item_id: &str) -> Option<Vec<RawLabel>> {
    wb.prestudy_gold()
        .iter()
        .chain(wb.attention_gold())
        .find(|g| g.instance.id == item_id)
        .map(|g| g.answers.to_raw())
}

/// Correct answer for gold items, otherwise [`auto_labels`].
pub fn answer_for(wb: &Workbench, view: &TaskView) -> Vec<RawLabel> {
    view.item_id()
        .and_then(|id| gold_labels(wb, id))
        .unwrap_or_else(|| auto_labels(view))
}

pub fn submit_view(wb: &Workbench, user: &str, view: &TaskView, labels: Vec<RawLabel>) -> annobench::Result<SubmitOutcome> {
    let mut sub = Submission::new(view.item_id().expect("answerable view"), labels, 25);
    sub.revision = view.revision();
    wb.submit(user, &sub)
}

/// Answers everything until the user is complete or blocked. Returns the number of submissions.
pub fn run_to_end(wb: &Workbench, user: &str) -> usize {
    let mut n = 0;
    loop {
        let view = wb.current(user).unwrap();
        if view.item_id().is_none() {
            return n;
        }
        let labels = answer_for(wb, &view);
        submit_view(wb, user, &view, labels).unwrap();
        n += 1;
        assert!(n < 10_000, "session does not terminate");
    }
}

/// A server on an ephemeral localhost port.
pub struct TestServer {
    pub base: String,
    pub wb: Workbench,
    stop: tokio::sync::oneshot::Sender<()>,
    join: tokio::task::JoinHandle<annobench::Result<()>>,
}

impl TestServer {
    pub async fn start(wb: Workbench) -> Self {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, rx) = tokio::sync::oneshot::channel::<()>();
        let join = tokio::spawn(annobench::server::serve_until(wb.clone(), listener, async {
            let _ = rx.await;
        }));
        Self { base, wb, stop, join }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn stop(self) {
        let _ = self.stop.send(());
        self.join.await.unwrap().unwrap();
    }
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder()
        .redirect(reqwest::redirect::Policy::none())
        .build()
        .unwrap()
}

/// Session token from a `Set-Cookie` header.
pub fn cookie_token(resp: &reqwest::Response) -> Option<String> {
    resp.headers()
        .get_all(reqwest::header::SET_COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .find_map(|v| v.strip_prefix(&format!("{}=", annobench::server::SESSION_COOKIE)))
        .map(|rest| rest.split(';').next().unwrap_or_default().to_string())
}

/// Logs in through `/?id=` and returns the cookie header value.
pub async fn url_login(client: &reqwest::Client, server: &TestServer, worker: &str) -> String {
    let resp = client.get(server.url(&format!("/?id={worker}"))).send().await.unwrap();
    assert_eq!(resp.status(), 303, "url login redirects");
    let token = cookie_token(&resp).expect("session cookie");
    format!("{}={token}", annobench::server::SESSION_COOKIE)
}

pub async fn get_task(client: &reqwest::Client, server: &TestServer, cookie: &str) -> TaskView {
    let resp = client
        .get(server.url("/task"))
        .header(reqwest::header::COOKIE, cookie)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    resp.json().await.unwrap()
}

pub async fn post_submit(client: &reqwest::Client, server: &TestServer, cookie: &str, body: &Value) -> (u16, Value) {
    let resp = client
        .post(server.url("/submit"))
        .header(reqwest::header::COOKIE, cookie)
        .json(body)
        .send()
        .await
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.json().await.unwrap_or(Value::Null))
}

pub fn submission_json(view: &TaskView, labels: &[RawLabel]) -> Value {
    json!({
        "item_id": view.item_id(),
        "labels": labels,
        "elapsed_ms": 40,
        "revision": view.revision(),
    })
}

/// HTTP Basic header value.
pub fn basic(user: &str, pass: &str) -> String {
    use base64::Engine;
    format!("Basic {}", base64::engine::general_purpose::STANDARD.encode(format!("{user}:{pass}")))
}
