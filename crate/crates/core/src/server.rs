//! HTTP API over a [`Workbench`].
//!
//! JSON is the primary interface. Browsers without scripts get plain HTML
//! from the same views: `GET /task` with `Accept: text/html`, and
//! form-encoded posts to `/submit`, `/navigate`, `/login` and `/signup`.
//!
//! | method | path | auth |
//! |---|---|---|
//! | GET | `/` (`?id=` for URL login) | none |
//! | POST | `/signup`, `/login` | none |
//! | POST | `/logout` | session |
//! | GET | `/task` | session |
//! | POST | `/submit`, `/navigate` | session |
//! | GET | `/admin/progress` | basic |
//! | POST | `/admin/export`, `/admin/retrain` | basic |
//! | GET | `/static/*` | none |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::TaskConfig;
use crate::error::{Error, Result};
use crate::export::{self, ExportFormat};
use crate::render::{html, WidgetDescriptor};
use crate::scheme::{RawLabel, SchemeKind, SpanLabel};
use crate::session::{now_ms, Direction, Submission, TaskView, Workbench};

pub const SESSION_COOKIE: &str = "annobench_session";

/// Environment variables that override `server` settings.
pub const ENV_PORT: &str = "ANNOBENCH_PORT";
pub const ENV_OUTPUT_DIR: &str = "ANNOBENCH_OUTPUT_DIR";
pub const ENV_ADMIN_PASSWORD: &str = "ANNOBENCH_ADMIN_PASSWORD";

/// Applies the environment overrides. Returns an error for a malformed port.
pub fn apply_env_overrides(config: &mut TaskConfig, get: impl Fn(&str) -> Option<String>) -> Result<()> {
    if let Some(p) = get(ENV_PORT) {
        config.server.port = p
            .trim()
            .parse()
            .map_err(|_| Error::invalid("server.port", format!("{ENV_PORT}={p:?} is not a port number")))?;
    }
    if let Some(d) = get(ENV_OUTPUT_DIR) {
        config.server.output_dir = d.into();
    }
    if let Some(pw) = get(ENV_ADMIN_PASSWORD) {
        config.server.admin_password = Some(pw);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiSession {
    pub user_id: String,
    pub issued_at: u64,
    pub expires_at: u64,
}

/// Shared state behind the router.
pub struct AppState {
    wb: Workbench,
    sessions: Mutex<HashMap<String, ApiSession>>,
    ttl_ms: u64,
}

impl AppState {
    pub fn new(wb: Workbench) -> Arc<Self> {
        let ttl_ms = wb.config().server.session_ttl_secs.saturating_mul(1000);
        Arc::new(Self {
            wb,
            sessions: Mutex::new(HashMap::new()),
            ttl_ms,
        })
    }

    pub fn workbench(&self) -> &Workbench {
        &self.wb
    }

    /// Issues a fresh 128-bit token for `user_id`.
    pub fn issue(&self, user_id: &str) -> String {
        let mut bytes = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        let now = now_ms();
        let mut sessions = self.sessions.lock();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(
            token.clone(),
            ApiSession {
                user_id: user_id.to_string(),
                issued_at: now,
                expires_at: now.saturating_add(self.ttl_ms),
            },
        );
        token
    }

    fn lookup(&self, token: &str) -> Option<String> {
        let mut sessions = self.sessions.lock();
        let now = now_ms();
        match sessions.get(token) {
            Some(s) if s.expires_at > now => Some(s.user_id.clone()),
            Some(_) => {
                sessions.remove(token);
                None
            }
            None => None,
        }
    }

    /// Test hook: moves a token's expiry into the past.
    pub fn expire(&self, token: &str) {
        if let Some(s) = self.sessions.lock().get_mut(token) {
            s.expires_at = 0;
        }
    }
}

// ---- errors ----

/// An error response: JSON for API clients, HTML for browsers.
pub struct ApiError {
    status: StatusCode,
    body: Value,
    html: bool,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({"error": kind, "message": message.into()}),
            html: false,
        }
    }

    fn unauthenticated() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", "log in first")
    }

    fn html(mut self, html: bool) -> Self {
        self.html = html;
        self
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Auth(_) => Self::new(StatusCode::UNAUTHORIZED, "auth", message),
            Error::Forbidden(_) => Self::new(StatusCode::FORBIDDEN, "forbidden", message),
            Error::Stale(_) | Error::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", message),
            Error::Submission(errors) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({"error": "validation", "message": message, "schemes": errors}),
                html: false,
            },
            Error::Invalid(issues) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({"error": "invalid", "message": message, "issues": issues}),
                html: false,
            },
            Error::NotFound(_) | Error::UnknownTemplate(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message),
            _ => {
                log::error!("{message}");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.html {
            let msg = self.body["message"].as_str().unwrap_or("error").to_string();
            let title = self.status.canonical_reason().unwrap_or("Error");
            (self.status, axum::response::Html(html::message_page(title, &msg))).into_response()
        } else {
            (self.status, Json(self.body)).into_response()
        }
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Runs blocking workbench calls (they fsync) off the async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

// ---- request helpers ----

fn wants_html(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .map(|a| a.contains("text/html"))
        .unwrap_or(false)
}

fn is_form(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|c| c.starts_with("application/x-www-form-urlencoded"))
        .unwrap_or(false)
}

fn token_from(headers: &HeaderMap) -> Option<String> {
    if let Some(auth) = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()) {
        if let Some(t) = auth.strip_prefix("Bearer ") {
            return Some(t.trim().to_string());
        }
    }
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|kv| kv.trim().split_once('='))
        .find(|(k, _)| *k == SESSION_COOKIE)
        .map(|(_, v)| v.to_string())
}

fn require_user(state: &AppState, headers: &HeaderMap) -> ApiResult<String> {
    token_from(headers)
        .and_then(|t| state.lookup(&t))
        .ok_or_else(|| ApiError::unauthenticated().html(wants_html(headers) || is_form(headers)))
}

fn session_cookie(token: &str, ttl_ms: u64) -> HeaderValue {
    HeaderValue::from_str(&format!(
        "{SESSION_COOKIE}={token}; Path=/; HttpOnly; SameSite=Lax; Max-Age={}",
        ttl_ms / 1000
    ))
    .expect("token is ascii")
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_request", e.to_string()))
}

fn form_pairs(body: &[u8]) -> Vec<(String, String)> {
    url::form_urlencoded::parse(body).into_owned().collect()
}

fn form_get<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Builds raw labels from form fields using the widgets of the page shown.
pub fn labels_from_form(widgets: &[WidgetDescriptor], pairs: &[(String, String)]) -> std::result::Result<Vec<RawLabel>, String> {
    let mut out = Vec::new();
    for w in widgets {
        let values: Vec<&str> = pairs.iter().filter(|(k, _)| *k == w.scheme).map(|(_, v)| v.as_str()).collect();
        let first = values.first().copied().filter(|v| !v.is_empty());
        let value = match w.kind {
            SchemeKind::Radio | SchemeKind::Dropdown | SchemeKind::FreeText => first.map(|v| Value::String(v.to_string())),
            SchemeKind::Multiselect => {
                (!values.is_empty()).then(|| Value::Array(values.iter().map(|v| Value::String(v.to_string())).collect()))
            }
            SchemeKind::Likert | SchemeKind::Number => match first {
                None => None,
                Some(v) => Some(
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .and_then(|n| {
                            if w.kind == SchemeKind::Likert && n.fract() == 0.0 && n >= 0.0 {
                                Some(Value::from(n as u64))
                            } else {
                                serde_json::Number::from_f64(n).map(Value::Number)
                            }
                        })
                        .ok_or_else(|| format!("{}: {v:?} is not a number", w.scheme))?,
                ),
            },
            SchemeKind::BestWorst => {
                let best = form_get(pairs, &format!("{}.best", w.scheme)).filter(|v| !v.is_empty());
                let worst = form_get(pairs, &format!("{}.worst", w.scheme)).filter(|v| !v.is_empty());
                match (best, worst) {
                    (None, None) => None,
                    (b, w) => Some(json!({"best": b, "worst": w})),
                }
            }
            SchemeKind::Span => match first {
                None => None,
                Some(text) => {
                    let mut spans = Vec::new();
                    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
                        let parts: Vec<&str> = line.splitn(4, ':').collect();
                        let bad = || format!("{}: span line {line:?} is not document:start:end:label", w.scheme);
                        if parts.len() != 4 {
                            return Err(bad());
                        }
                        spans.push(SpanLabel {
                            document_index: parts[0].trim().parse().map_err(|_| bad())?,
                            start: parts[1].trim().parse().map_err(|_| bad())?,
                            end: parts[2].trim().parse().map_err(|_| bad())?,
                            label: parts[3].trim().to_string(),
                        });
                    }
                    Some(serde_json::to_value(spans).expect("spans serialize"))
                }
            },
        };
        if let Some(value) = value {
            out.push(RawLabel {
                scheme: w.scheme.clone(),
                value,
            });
        }
    }
    Ok(out)
}

fn view_widgets(view: &TaskView) -> &[WidgetDescriptor] {
    match view {
        TaskView::Survey { widgets, .. } => widgets,
        TaskView::Prestudy { model, .. } | TaskView::Instance { model, .. } => &model.widgets,
        _ => &[],
    }
}

pub fn view_html(view: &TaskView, task_name: &str) -> String {
    match view {
        TaskView::Survey { title, item_id, widgets, .. } => html::survey_page(title, item_id, widgets),
        TaskView::Prestudy { model, revision, .. } => html::instance_page(model, 0, *revision),
        TaskView::Instance {
            model, position, revision, ..
        } => html::instance_page(model, *position, *revision),
        TaskView::Complete { completion_code, .. } => html::message_page(
            task_name,
            &match completion_code {
                Some(c) => format!("All done, thank you. Your completion code is {c}."),
                None => "All done, thank you.".to_string(),
            },
        ),
        TaskView::Blocked { reason } => html::message_page(task_name, reason),
    }
}

fn see_task() -> Response {
    Redirect::to("/task").into_response()
}

// ---- handlers ----

#[derive(Deserialize)]
struct RootQuery {
    id: Option<String>,
}

async fn root(State(st): State<Arc<AppState>>, headers: HeaderMap, Query(q): Query<RootQuery>) -> ApiResult<Response> {
    if let Some(id) = q.id {
        let wb = st.wb.clone();
        let user = blocking(move || wb.login_url(&id)).await.map_err(|e| e.html(true))?;
        let token = st.issue(&user);
        let mut resp = see_task();
        resp.headers_mut().insert(header::SET_COOKIE, session_cookie(&token, st.ttl_ms));
        return Ok(resp);
    }
    if token_from(&headers).and_then(|t| st.lookup(&t)).is_some() {
        return Ok(see_task());
    }
    let config = st.wb.config();
    Ok(axum::response::Html(html::login_page(&config.task_name, config.login_mode.allows_email())).into_response())
}

#[derive(Deserialize)]
struct Credentials {
    email: String,
    password: String,
}

async fn credentials_route(st: Arc<AppState>, headers: HeaderMap, body: Bytes, signup: bool) -> ApiResult<Response> {
    let form = is_form(&headers);
    let creds: Credentials = if form {
        let pairs = form_pairs(&body);
        Credentials {
            email: form_get(&pairs, "email").unwrap_or_default().to_string(),
            password: form_get(&pairs, "password").unwrap_or_default().to_string(),
        }
    } else {
        parse_json(&body)?
    };
    let wb = st.wb.clone();
    let user = blocking(move || {
        if signup {
            wb.signup(&creds.email, &creds.password)
        } else {
            wb.login(&creds.email, &creds.password)
        }
    })
    .await
    .map_err(|e| e.html(form))?;
    let token = st.issue(&user);
    let mut resp = if form {
        see_task()
    } else {
        Json(json!({"user_id": user, "token": token})).into_response()
    };
    resp.headers_mut().insert(header::SET_COOKIE, session_cookie(&token, st.ttl_ms));
    Ok(resp)
}

async fn signup(State(st): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    credentials_route(st, headers, body, true).await
}

async fn login(State(st): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    credentials_route(st, headers, body, false).await
}

async fn logout(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    require_user(&st, &headers)?;
    if let Some(t) = token_from(&headers) {
        st.sessions.lock().remove(&t);
    }
    let mut resp = Json(json!({"logged_out": true})).into_response();
    resp.headers_mut().insert(
        header::SET_COOKIE,
        HeaderValue::from_static("annobench_session=; Path=/; HttpOnly; Max-Age=0"),
    );
    Ok(resp)
}

async fn task(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    let html_out = wants_html(&headers);
    let user = require_user(&st, &headers)?;
    let wb = st.wb.clone();
    let view = blocking(move || wb.current(&user)).await.map_err(|e| e.html(html_out))?;
    if html_out {
        Ok(axum::response::Html(view_html(&view, &st.wb.config().task_name)).into_response())
    } else {
        Ok(Json(view).into_response())
    }
}

async fn submit(State(st): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let form = is_form(&headers);
    let user = require_user(&st, &headers)?;
    let wb = st.wb.clone();
    if !form {
        let sub: Submission = parse_json(&body)?;
        let outcome = blocking(move || wb.submit(&user, &sub)).await?;
        return Ok(Json(outcome).into_response());
    }
    let pairs = form_pairs(&body);
    blocking(move || {
        let view = wb.current(&user)?;
        let labels = labels_from_form(view_widgets(&view), &pairs)
            .map_err(|m| Error::Submission(vec![crate::error::SchemeError::new("form", m)]))?;
        let item_id = form_get(&pairs, "item_id").unwrap_or_default().to_string();
        let elapsed_ms = form_get(&pairs, "elapsed_ms").and_then(|v| v.parse().ok()).unwrap_or(0);
        let mut sub = Submission::new(item_id, labels, elapsed_ms);
        sub.revision = form_get(&pairs, "revision").and_then(|v| v.parse().ok());
        wb.submit(&user, &sub)
    })
    .await
    .map_err(|e| e.html(true))?;
    Ok(see_task())
}

#[derive(Deserialize)]
struct NavigateBody {
    direction: Direction,
}

async fn navigate(State(st): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let form = is_form(&headers);
    let user = require_user(&st, &headers)?;
    let direction = if form {
        match form_get(&form_pairs(&body), "direction") {
            Some("back") => Direction::Back,
            Some("forward") => Direction::Forward,
            _ => {
                return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_request", "direction must be back or forward").html(true))
            }
        }
    } else {
        parse_json::<NavigateBody>(&body)?.direction
    };
    let wb = st.wb.clone();
    let outcome = blocking(move || wb.navigate(&user, direction)).await.map_err(|e| e.html(form))?;
    if form {
        Ok(see_task())
    } else {
        Ok(Json(outcome).into_response())
    }
}

fn require_admin(st: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let server = &st.wb.config().server;
    let Some(expected) = &server.admin_password else {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "admin endpoints are disabled: no admin password configured"));
    };
    let denied = || {
        let mut e = ApiError::new(StatusCode::UNAUTHORIZED, "auth", "admin credentials required");
        e.body["realm"] = json!("admin");
        e
    };
    let raw = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Basic "))
        .ok_or_else(denied)?;
    let decoded = base64::engine::general_purpose::STANDARD
        .decode(raw.trim())
        .ok()
        .and_then(|b| String::from_utf8(b).ok())
        .ok_or_else(denied)?;
    let (user, pass) = decoded.split_once(':').ok_or_else(denied)?;
    let ok_user = user.as_bytes() == server.admin_user.as_bytes();
    let ok_pass = pass.len() == expected.len() && pass.bytes().zip(expected.bytes()).fold(0u8, |a, (x, y)| a | (x ^ y)) == 0;
    if ok_user && ok_pass {
        Ok(())
    } else {
        Err(denied())
    }
}

async fn admin_progress(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    require_admin(&st, &headers)?;
    let wb = st.wb.clone();
    let p = blocking(move || Ok(wb.progress())).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn admin_export(State(st): State<Arc<AppState>>, headers: HeaderMap, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    require_admin(&st, &headers)?;
    let format = match q.format.as_deref() {
        None | Some("jsonl") => ExportFormat::Jsonl,
        Some("csv") => ExportFormat::Csv,
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "bad_request",
                format!("unknown export format {other:?}"),
            ))
        }
    };
    let wb = st.wb.clone();
    let summary = blocking(move || {
        let dir = export::default_dir(wb.config());
        export::export(&wb, format, &dir)
    })
    .await?;
    Ok(Json(summary).into_response())
}

async fn admin_retrain(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    require_admin(&st, &headers)?;
    let wb = st.wb.clone();
    let report = blocking(move || Ok(wb.retrain_now())).await?;
    Ok(Json(json!({"report": report})).into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/", get(root))
        .route("/signup", post(signup))
        .route("/login", post(login))
        .route("/logout", post(logout))
        .route("/task", get(task))
        .route("/submit", post(submit))
        .route("/navigate", post(navigate))
        .route("/admin/progress", get(admin_progress))
        .route("/admin/export", post(admin_export))
        .route("/admin/retrain", post(admin_retrain));
    if let Some(dir) = &state.wb.config().server.static_dir {
        app = app.nest_service("/static", tower_http::services::ServeDir::new(state.wb.config().resolve(dir)));
    }
    app.fallback(not_found).with_state(state)
}

/// Binds and serves until `shutdown` resolves, then snapshots every annotator.
pub async fn serve_until(
    wb: Workbench,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let addr = listener.local_addr().ok();
    let state = AppState::new(wb.clone());
    if let Some(a) = addr {
        log::info!("serving {:?} on http://{a}", wb.config().task_name);
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::io("<listener>", e))?;
    tokio::task::spawn_blocking(move || wb.flush())
        .await
        .map_err(|e| Error::io("<flush>", std::io::Error::other(e)))?
}

/// Serves on the configured host and port until Ctrl-C.
pub async fn serve(wb: Workbench) -> Result<()> {
    let server = &wb.config().server;
    let addr: SocketAddr = format!("{}:{}", server.host, server.port)
        .parse()
        .map_err(|_| Error::invalid("server.host", format!("{}:{} is not a socket address", server.host, server.port)))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("<bind {addr}>"), e))?;
    serve_until(wb, listener, async {
        let _ = tokio::signal::ctrl_c().await;
        // Give in-flight requests a moment before the final snapshot.
        tokio::time::sleep(Duration::from_millis(50)).await;
    })
    .await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn widget(name: &str, kind: SchemeKind) -> WidgetDescriptor {
        WidgetDescriptor::from_scheme(&crate::scheme::AnnotationScheme::new(name, kind), None)
    }

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn form_fields_become_raw_labels() {
        let ws = [
            widget("m", SchemeKind::Multiselect),
            widget("l", SchemeKind::Likert),
            widget("b", SchemeKind::BestWorst),
            widget("s", SchemeKind::Span),
            widget("t", SchemeKind::FreeText),
        ];
        let p = pairs(&[("m", "a"), ("m", "c"), ("l", "4"), ("b.best", "0"), ("b.worst", "2"), ("s", "0:1:3:x\n"), ("t", "")]);
        let labels = labels_from_form(&ws, &p).unwrap();
        let got: Vec<(&str, Value)> = labels.iter().map(|r| (r.scheme.as_str(), r.value.clone())).collect();
        assert_eq!(
            got,
            [
                ("m", json!(["a", "c"])),
                ("l", json!(4)),
                ("b", json!({"best": "0", "worst": "2"})),
                ("s", json!([{"document_index": 0, "start": 1, "end": 3, "label": "x"}])),
            ]
        );
        assert!(labels_from_form(&ws[3..4], &pairs(&[("s", "0:1")])).is_err());
    }

    #[test]
    fn bearer_and_cookie_tokens() {
        let mut h = HeaderMap::new();
        h.insert(header::COOKIE, HeaderValue::from_static("a=b; annobench_session=abc"));
        assert_eq!(token_from(&h).as_deref(), Some("abc"));
        h.insert(header::AUTHORIZATION, HeaderValue::from_static("Bearer xyz"));
        assert_eq!(token_from(&h).as_deref(), Some("xyz"));
    }

    #[test]
    fn env_overrides() {
        let mut c = TaskConfig::minimal("t", vec![], "id", crate::config::TextField::One("text".into()));
        let env: HashMap<&str, &str> = [(ENV_PORT, "9123"), (ENV_OUTPUT_DIR, "/tmp/x"), (ENV_ADMIN_PASSWORD, "pw")].into();
        apply_env_overrides(&mut c, |k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.server.port, 9123);
        assert_eq!(c.server.output_dir, std::path::PathBuf::from("/tmp/x"));
        assert_eq!(c.server.admin_password.as_deref(), Some("pw"));
        assert!(apply_env_overrides(&mut c, |k| (k == ENV_PORT).then(|| "nope".to_string())).is_err());
    }
}
