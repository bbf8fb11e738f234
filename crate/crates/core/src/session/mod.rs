//! Accounts, queue assignment, the annotate/submit loop and crash-safe
//! per-annotator persistence.
//!
//! Each annotator moves through: pre-surveys, prestudy, the main queue (with
//! attention items mixed in), post-surveys, completion. All mutations of one
//! annotator are serialized by that annotator's lock; assignment counts sit
//! behind one global lock, always taken after a user lock.

pub mod assign;
mod state;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::{mpsc, Arc, Weak};
use std::time::{SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;
use parking_lot::{Mutex, RwLock};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use state::{Auth, Event, ItemRecord, LogLine, PrestudyResponse, SurveyPhase, SurveyResponse, UserState};
pub use store::{user_dir_name, users_root, LOG_FILE, SNAPSHOT_FILE};

use crate::active::{featurize, fit_target, reorder_scored, snapshot_text, ConfidenceModel, FeatureVector, TrainOptions};
use crate::config::{check_loaded, Ordering, TaskConfig};
use crate::data::{load_instances, Instance};
use crate::error::{ConfigIssue, Error, Result};
use crate::highlight::{decoy_seed, highlight_instance, HighlightSpan};
use crate::quality::{
    gold_matches, insert_attention_tests, resolve_gold, run_prestudy, score_attention, AnnotatorState, Gold,
    PrestudyState, QualityStatus, QueueItem, SurveyPage,
};
use crate::render::{build_render_model, Layout, ProgressInfo, RenderModel, WidgetDescriptor};
use crate::scheme::{validate_submission, RawLabel};
use crate::template::{layout_blocks, BindingTarget};
use store::UserLog;

pub const MODEL_FILE: &str = "model.txt";

/// What the annotator should see next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum TaskView {
    Survey {
        phase: SurveyPhase,
        page: usize,
        item_id: String,
        title: String,
        widgets: Vec<WidgetDescriptor>,
    },
    Prestudy {
        item_id: String,
        revision: u32,
        model: RenderModel,
    },
    Instance {
        item_id: String,
        position: usize,
        revision: u32,
        model: RenderModel,
    },
    Complete {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        completion_code: Option<String>,
        progress: ProgressInfo,
    },
    Blocked {
        reason: String,
    },
}

impl TaskView {
    /// Id a submission for this view must carry.
    pub fn item_id(&self) -> Option<&str> {
        match self {
            TaskView::Survey { item_id, .. } | TaskView::Prestudy { item_id, .. } | TaskView::Instance { item_id, .. } => {
                Some(item_id)
            }
            _ => None,
        }
    }

    pub fn revision(&self) -> Option<u32> {
        match self {
            TaskView::Prestudy { revision, .. } | TaskView::Instance { revision, .. } => Some(*revision),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub item_id: String,
    #[serde(default)]
    pub labels: Vec<RawLabel>,
    #[serde(default)]
    pub elapsed_ms: u64,
    /// Revision the client saw; makes resubmission idempotent.
    #[serde(default)]
    pub revision: Option<u32>,
}

impl Submission {
    pub fn new(item_id: impl Into<String>, labels: Vec<RawLabel>, elapsed_ms: u64) -> Self {
        Self {
            item_id: item_id.into(),
            labels,
            elapsed_ms,
            revision: None,
        }
    }

    pub fn with_revision(mut self, revision: u32) -> Self {
        self.revision = Some(revision);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitOutcome {
    /// True when this was a replay of an already-recorded submission.
    pub duplicate: bool,
    pub next: TaskView,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Back,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NavigateOutcome {
    pub moved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    pub view: TaskView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProgress {
    pub user_id: String,
    pub completed: usize,
    pub assigned: usize,
    pub attention_items: usize,
    pub attention_failures: u32,
    pub state: AnnotatorState,
    pub prestudy: PrestudyState,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminProgress {
    pub users: Vec<UserProgress>,
    /// Stored annotations per instance id, in data order.
    pub coverage: IndexMap<String, usize>,
    pub total_annotations: usize,
    pub attention_failures: u32,
    pub flagged: usize,
    pub blocked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrainReport {
    pub round: u64,
    pub trained_on: usize,
    pub reordered_users: usize,
}

#[derive(Debug, Clone)]
pub struct WorkbenchOptions {
    /// Retrain on a background thread when due. Off: only [`Workbench::retrain_now`].
    pub background_training: bool,
    /// Compact a user's log into a snapshot after this many events.
    pub snapshot_every: usize,
}

impl Default for WorkbenchOptions {
    fn default() -> Self {
        Self {
            background_training: true,
            snapshot_every: 64,
        }
    }
}

struct UserSlot {
    state: UserState,
    log: UserLog,
}

struct ModelState {
    round: u64,
    /// Confidence per instance index.
    confidences: HashMap<usize, f64>,
}

struct Inner {
    config: TaskConfig,
    options: WorkbenchOptions,
    layout: Layout,
    instances: Vec<Instance>,
    index: HashMap<String, usize>,
    features: Vec<FeatureVector>,
    prestudy_gold: Vec<Gold>,
    attention_gold: Vec<Gold>,
    users_root: PathBuf,
    users: RwLock<HashMap<String, Arc<Mutex<UserSlot>>>>,
    counts: Mutex<Vec<u32>>,
    total: AtomicUsize,
    model: RwLock<Option<Arc<ModelState>>>,
    train_lock: Mutex<()>,
    trainer: Mutex<Option<mpsc::Sender<()>>>,
}

/// A loaded task with its annotators. Cheap to clone.
#[derive(Clone)]
pub struct Workbench {
    inner: Arc<Inner>,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Deterministic 64-bit seed from byte strings.
pub fn stable_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

const HASH_ROUNDS: usize = 10_000;

fn hash_password(salt: &str, password: &str) -> String {
    let mut digest = Sha256::new().chain_update(salt.as_bytes()).chain_update(password.as_bytes()).finalize();
    for _ in 1..HASH_ROUNDS {
        digest = Sha256::new().chain_update(digest).chain_update(salt.as_bytes()).finalize();
    }
    hex::encode(digest)
}

fn constant_time_eq(a: &str, b: &str) -> bool {
    a.len() == b.len() && a.bytes().zip(b.bytes()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn check_identifier(kind: &str, raw: &str) -> Result<String> {
    let v = raw.trim();
    if v.is_empty() || v.len() > 256 || v.chars().any(char::is_control) {
        return Err(Error::Auth(format!("invalid {kind}")));
    }
    Ok(v.to_string())
}

fn survey_item_id(phase: SurveyPhase, page: usize) -> String {
    match phase {
        SurveyPhase::Pre => format!("pre_survey:{page}"),
        SurveyPhase::Post => format!("post_survey:{page}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    PreSurvey(usize),
    Prestudy(usize),
    Item(usize),
    PostSurvey(usize),
    Complete,
    Blocked,
}

impl Workbench {
    pub fn open(config: TaskConfig) -> Result<Self> {
        Self::open_with(config, WorkbenchOptions::default())
    }

    /// Ingests instances and recovers every annotator from the output directory.
    pub fn open_with(config: TaskConfig, options: WorkbenchOptions) -> Result<Self> {
        let report = check_loaded(&config)?;
        let instances = load_instances(&config)?;
        let layout = match (&report, config.template_text()?) {
            (Some(r), Some(text)) => {
                for b in &r.bindings {
                    if let BindingTarget::Meta(field) = &b.target {
                        if !instances.iter().any(|i| i.display_meta.contains_key(field)) {
                            return Err(Error::Invalid(vec![ConfigIssue::new(
                                "template_override",
                                format!("placeholder {{{{meta.{field}}}}} matches no field in the data"),
                            )]));
                        }
                    }
                }
                Layout::Template {
                    blocks: layout_blocks(&text, &r.bindings),
                }
            }
            _ => Layout::TextAboveLabels,
        };
        let index: HashMap<String, usize> = instances.iter().enumerate().map(|(i, x)| (x.id.clone(), i)).collect();
        let features = if config.active_learning.is_some() {
            instances.iter().map(|i| featurize(&i.joined_text())).collect()
        } else {
            Vec::new()
        };
        let qc = config.quality_control.clone().unwrap_or_default();
        let prestudy_gold = qc.prestudy.as_ref().map(|p| resolve_gold(&config, &p.test_items)).unwrap_or_default();
        let attention_gold = qc.attention.as_ref().map(|a| resolve_gold(&config, &a.test_items)).unwrap_or_default();

        let output = config.output_dir();
        let users_root = users_root(&output);
        std::fs::create_dir_all(&users_root).map_err(|e| Error::io(&users_root, e))?;

        let mut counts = vec![0u32; instances.len()];
        let mut users = HashMap::new();
        let mut total = 0;
        for dir in store::user_dirs(&users_root)? {
            let Some((state, log)) = store::recover(&dir)? else {
                log::warn!("{}: registration never completed, ignoring", dir.display());
                continue;
            };
            for item in &state.queue {
                if let Some(i) = item.instance_id().and_then(|id| index.get(id)) {
                    counts[*i] += 1;
                }
            }
            total += state.annotation_count();
            users.insert(state.user_id.clone(), Arc::new(Mutex::new(UserSlot { state, log })));
        }
        log::info!(
            "{}: {} instances, {} annotators recovered, {} annotations",
            config.task_name,
            instances.len(),
            users.len(),
            total
        );

        let background = options.background_training && config.active_learning.is_some();
        let wb = Workbench {
            inner: Arc::new(Inner {
                config,
                options,
                layout,
                instances,
                index,
                features,
                prestudy_gold,
                attention_gold,
                users_root,
                users: RwLock::new(users),
                counts: Mutex::new(counts),
                total: AtomicUsize::new(total),
                model: RwLock::new(None),
                train_lock: Mutex::new(()),
                trainer: Mutex::new(None),
            }),
        };
        // Rebuild the in-memory model; queues on disk already reflect past reorders.
        if let Some(m) = wb.train_model(0) {
            *wb.inner.model.write() = Some(m);
        }
        if background {
            wb.spawn_trainer();
        }
        Ok(wb)
    }

    pub fn config(&self) -> &TaskConfig {
        &self.inner.config
    }

    pub fn instances(&self) -> &[Instance] {
        &self.inner.instances
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.inner.index.get(id).map(|i| &self.inner.instances[*i])
    }

    pub fn layout(&self) -> &Layout {
        &self.inner.layout
    }

    pub fn attention_gold(&self) -> &[Gold] {
        &self.inner.attention_gold
    }

    pub fn prestudy_gold(&self) -> &[Gold] {
        &self.inner.prestudy_gold
    }

    /// Real annotations stored across all annotators.
    pub fn total_annotations(&self) -> usize {
        self.inner.total.load(AtomicOrdering::SeqCst)
    }

    /// Assignments per instance, in data order.
    pub fn assignment_counts(&self) -> Vec<u32> {
        self.inner.counts.lock().clone()
    }

    fn pre_pages(&self) -> &[SurveyPage] {
        self.inner.config.quality_control.as_ref().map(|q| q.pre_surveys.as_slice()).unwrap_or(&[])
    }

    fn post_pages(&self) -> &[SurveyPage] {
        self.inner.config.quality_control.as_ref().map(|q| q.post_surveys.as_slice()).unwrap_or(&[])
    }

    fn slot(&self, user_id: &str) -> Result<Arc<Mutex<UserSlot>>> {
        self.inner
            .users
            .read()
            .get(user_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("user {user_id}")))
    }

    pub fn has_user(&self, user_id: &str) -> bool {
        self.inner.users.read().contains_key(user_id)
    }

    pub fn user_state(&self, user_id: &str) -> Result<UserState> {
        Ok(self.slot(user_id)?.lock().state.clone())
    }

    /// Every annotator's state, ordered by user id.
    pub fn user_states(&self) -> Vec<UserState> {
        let slots: Vec<_> = self.inner.users.read().values().cloned().collect();
        let mut out: Vec<UserState> = slots.iter().map(|s| s.lock().state.clone()).collect();
        out.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        out
    }

    // ---- accounts ----

    pub fn signup(&self, email: &str, password: &str) -> Result<String> {
        if !self.inner.config.login_mode.allows_email() {
            return Err(Error::Auth("email signup is disabled for this task".into()));
        }
        let email = check_identifier("email", email)?.to_lowercase();
        if !email.contains('@') {
            return Err(Error::Auth("invalid email".into()));
        }
        if password.is_empty() {
            return Err(Error::Auth("password must be non-empty".into()));
        }
        let mut salt = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut salt);
        let salt = hex::encode(salt);
        let hash = hash_password(&salt, password);
        let user_id = format!("email:{email}");
        self.register(&user_id, Auth::PasswordHash { salt, hash })?;
        Ok(user_id)
    }

    pub fn login(&self, email: &str, password: &str) -> Result<String> {
        if !self.inner.config.login_mode.allows_email() {
            return Err(Error::Auth("email login is disabled for this task".into()));
        }
        let email = check_identifier("email", email)?.to_lowercase();
        let user_id = format!("email:{email}");
        let slot = self.slot(&user_id).map_err(|_| Error::Auth("unknown user".into()))?;
        let g = slot.lock();
        match &g.state.auth {
            Auth::PasswordHash { salt, hash } if constant_time_eq(&hash_password(salt, password), hash) => Ok(user_id),
            _ => Err(Error::Auth("wrong password".into())),
        }
    }

    /// Crowdsourcing login: the platform's worker id, no signup step.
    pub fn login_url(&self, worker_id: &str) -> Result<String> {
        if !self.inner.config.login_mode.allows_url() {
            return Err(Error::Auth("URL login is disabled for this task".into()));
        }
        let user_id = format!("url:{}", check_identifier("worker id", worker_id)?);
        match self.register(&user_id, Auth::UrlArgument) {
            Ok(()) | Err(Error::Conflict(_)) => Ok(user_id),
            Err(e) => Err(e),
        }
    }

    fn register(&self, user_id: &str, auth: Auth) -> Result<()> {
        let slot = {
            let mut users = self.inner.users.write();
            if users.contains_key(user_id) {
                return Err(Error::Conflict(format!("user {user_id} already exists")));
            }
            let mut log = UserLog::create(&self.inner.users_root, user_id)?;
            let status = QualityStatus {
                prestudy_passed: if self.inner.prestudy_gold.is_empty() {
                    PrestudyState::NotRequired
                } else {
                    PrestudyState::Pending
                },
                ..Default::default()
            };
            let at = now_ms();
            log.append(
                1,
                &Event::Registered {
                    user_id: user_id.to_string(),
                    auth: auth.clone(),
                    at,
                    status: status.clone(),
                },
            )?;
            let mut state = UserState::new(user_id.to_string(), auth, at, status);
            state.seq = 1;
            let slot = Arc::new(Mutex::new(UserSlot { state, log }));
            users.insert(user_id.to_string(), slot.clone());
            slot
        };
        let mut g = slot.lock();
        self.advance_gates(&mut g)
    }

    // ---- persistence ----

    fn commit(&self, slot: &mut UserSlot, event: Event) -> Result<()> {
        let seq = slot.state.seq + 1;
        slot.log.append(seq, &event)?;
        slot.state.apply(seq, &event);
        if slot.log.since_snapshot() >= self.inner.options.snapshot_every {
            if let Err(e) = slot.log.write_snapshot(&slot.state) {
                log::warn!("snapshot for {} failed: {e}", slot.state.user_id);
            }
        }
        Ok(())
    }

    /// Writes a snapshot for every annotator.
    pub fn flush(&self) -> Result<()> {
        let slots: Vec<_> = self.inner.users.read().values().cloned().collect();
        for s in slots {
            let mut g = s.lock();
            let UserSlot { state, log } = &mut *g;
            log.write_snapshot(state)?;
        }
        Ok(())
    }

    // ---- flow ----

    /// Assigns the main queue once the pre-phase gates are passed.
    fn advance_gates(&self, slot: &mut UserSlot) -> Result<()> {
        let s = &slot.state;
        if s.queue_assigned || s.qc_status.is_blocked() || s.pre_surveys.len() < self.pre_pages().len() {
            return Ok(());
        }
        if matches!(s.qc_status.prestudy_passed, PrestudyState::Pending | PrestudyState::Failed) {
            return Ok(());
        }
        let (queue, picked) = self.build_queue(&s.user_id);
        if let Err(e) = self.commit(slot, Event::QueueAssigned { queue }) {
            let mut counts = self.inner.counts.lock();
            for i in picked {
                counts[i] -= 1;
            }
            return Err(e);
        }
        Ok(())
    }

    fn build_queue(&self, user_id: &str) -> (Vec<QueueItem>, Vec<usize>) {
        let cfg = &self.inner.config;
        let seed = stable_seed(&[&cfg.assignment.seed.to_le_bytes(), user_id.as_bytes(), b"order"]);
        let model = self.inner.model.read().clone();
        let ratio = cfg.active_learning.as_ref().map(|a| a.random_ratio).unwrap_or(0.0);
        let ordered = {
            let mut counts = self.inner.counts.lock();
            let picked = assign::select_instances(&mut counts, &cfg.assignment);
            let active = match (&cfg.assignment.ordering, &model) {
                (Ordering::ActiveLearning, Some(m)) => Some((&m.confidences, ratio)),
                _ => None,
            };
            let ordered = assign::order_selection(picked, &cfg.assignment, seed, active);
            assign::apply_cap(ordered, &mut counts, &cfg.assignment)
        };
        let queue: Vec<QueueItem> = ordered
            .iter()
            .map(|&i| QueueItem::Instance(self.inner.instances[i].id.clone()))
            .collect();
        let queue = match cfg.quality_control.as_ref().and_then(|q| q.attention.as_ref()) {
            Some(att) if !self.inner.attention_gold.is_empty() && !queue.is_empty() => {
                let mut att = att.clone();
                att.test_items.truncate(self.inner.attention_gold.len());
                insert_attention_tests(&queue, &att, stable_seed(&[user_id.as_bytes(), b"attention"]))
            }
            _ => queue,
        };
        (queue, ordered)
    }

    fn step(&self, s: &UserState) -> Step {
        if s.qc_status.is_blocked() {
            return Step::Blocked;
        }
        if s.pre_surveys.len() < self.pre_pages().len() {
            return Step::PreSurvey(s.pre_surveys.len());
        }
        if s.qc_status.prestudy_passed == PrestudyState::Pending {
            return Step::Prestudy(s.prestudy.len());
        }
        if s.queue_assigned && s.cursor < s.queue.len() {
            return Step::Item(s.cursor);
        }
        if s.post_surveys.len() < self.post_pages().len() {
            return Step::PostSurvey(s.post_surveys.len());
        }
        Step::Complete
    }

    fn item_instance(&self, item: &QueueItem) -> &Instance {
        match item {
            QueueItem::Instance(id) => &self.inner.instances[self.inner.index[id]],
            QueueItem::Attention(k) => &self.inner.attention_gold[*k].instance,
        }
    }

    pub fn highlights_for(&self, user_id: &str, instance: &Instance) -> Vec<HighlightSpan> {
        match &self.inner.config.highlight_config {
            Some(h) => highlight_instance(h, instance, decoy_seed(user_id, &instance.id)),
            None => Vec::new(),
        }
    }

    fn render(&self, user_id: &str, instance: &Instance, progress: ProgressInfo) -> RenderModel {
        let spans = self.highlights_for(user_id, instance);
        build_render_model(
            &self.inner.config,
            &self.inner.layout,
            instance,
            &spans,
            progress,
            decoy_seed(user_id, &instance.id),
        )
    }

    fn survey_view(&self, phase: SurveyPhase, page: usize) -> TaskView {
        let p = match phase {
            SurveyPhase::Pre => &self.pre_pages()[page],
            SurveyPhase::Post => &self.post_pages()[page],
        };
        TaskView::Survey {
            phase,
            page,
            item_id: survey_item_id(phase, page),
            title: p.title.clone(),
            widgets: p.effective_questions().iter().map(|q| WidgetDescriptor::from_scheme(q, None)).collect(),
        }
    }

    fn view(&self, s: &UserState) -> TaskView {
        match self.step(s) {
            Step::Blocked => TaskView::Blocked {
                reason: if s.qc_status.consent_declined {
                    "Consent was declined, so the task cannot continue.".into()
                } else if s.qc_status.prestudy_passed == PrestudyState::Failed {
                    "The qualification test was not passed.".into()
                } else {
                    "Access to this task has ended.".into()
                },
            },
            Step::PreSurvey(p) => self.survey_view(SurveyPhase::Pre, p),
            Step::PostSurvey(p) => self.survey_view(SurveyPhase::Post, p),
            Step::Prestudy(i) => {
                let gold = &self.inner.prestudy_gold[i];
                TaskView::Prestudy {
                    item_id: gold.instance.id.clone(),
                    revision: 0,
                    model: self.render(&s.user_id, &gold.instance, ProgressInfo::new(i, self.inner.prestudy_gold.len())),
                }
            }
            Step::Item(pos) => {
                let instance = self.item_instance(&s.queue[pos]);
                let progress = ProgressInfo::new(s.frontier(), s.queue.len());
                let mut model = self.render(&s.user_id, instance, progress);
                let record = s.records[pos].as_ref();
                if let Some(r) = record {
                    model.prefill = r.labels.to_raw();
                }
                TaskView::Instance {
                    item_id: instance.id.clone(),
                    position: pos,
                    revision: record.map(|r| r.revision).unwrap_or(0),
                    model,
                }
            }
            Step::Complete => TaskView::Complete {
                completion_code: self.inner.config.server.completion_code.clone(),
                progress: ProgressInfo::new(s.frontier(), s.queue.len()),
            },
        }
    }

    /// The annotator's current page.
    pub fn current(&self, user_id: &str) -> Result<TaskView> {
        let slot = self.slot(user_id)?;
        let mut g = slot.lock();
        self.advance_gates(&mut g)?;
        Ok(self.view(&g.state))
    }

    /// A recorded submission this one replays, if any.
    fn find_replay(&self, s: &UserState, sub: &Submission) -> Option<usize> {
        let r = sub.revision?;
        // A valid answer to the page on screen is fresh even when an earlier
        // position showed the same item (attention items repeat).
        if let Step::Item(pos) = self.step(s) {
            let current_rev = s.records[pos].as_ref().map(|rec| rec.revision).unwrap_or(0);
            if self.item_instance(&s.queue[pos]).id == sub.item_id && current_rev == r {
                return None;
            }
        }
        s.records.iter().enumerate().find_map(|(pos, rec)| {
            let rec = rec.as_ref()?;
            if rec.instance_id != sub.item_id || rec.revision != r + 1 {
                return None;
            }
            let inst = self.item_instance(&rec.item);
            let labels = validate_submission(&self.inner.config.schemes, &sub.labels, Some(inst)).ok()?;
            (labels == rec.labels).then_some(pos)
        })
    }

    /// Validates and stores one submission, then returns the next page.
    pub fn submit(&self, user_id: &str, sub: &Submission) -> Result<SubmitOutcome> {
        let slot = self.slot(user_id)?;
        let mut g = slot.lock();
        if g.state.qc_status.is_blocked() {
            return Err(Error::Forbidden("annotator is blocked".into()));
        }
        self.advance_gates(&mut g)?;
        if self.find_replay(&g.state, sub).is_some() {
            return Ok(SubmitOutcome {
                duplicate: true,
                next: self.view(&g.state),
            });
        }
        let at = now_ms();
        let mut retrain = false;
        match self.step(&g.state) {
            Step::Blocked => return Err(Error::Forbidden("annotator is blocked".into())),
            Step::Complete => return Err(Error::Conflict("the task is already complete".into())),
            Step::PreSurvey(page) | Step::PostSurvey(page) => {
                let (phase, p) = match self.step(&g.state) {
                    Step::PreSurvey(_) => (SurveyPhase::Pre, &self.pre_pages()[page]),
                    _ => (SurveyPhase::Post, &self.post_pages()[page]),
                };
                let expected = survey_item_id(phase, page);
                if sub.item_id != expected {
                    return Err(Error::Stale(format!("expected {expected}, got {}", sub.item_id)));
                }
                let answers = validate_submission(&p.effective_questions(), &sub.labels, None).map_err(Error::Submission)?;
                let mut status = g.state.qc_status.clone();
                if p.declines_consent(&answers) {
                    status.consent_declined = true;
                    status.state = AnnotatorState::Blocked;
                }
                self.commit(
                    &mut g,
                    Event::SurveyAnswered {
                        phase,
                        page,
                        answers,
                        at,
                        status,
                    },
                )?;
            }
            Step::Prestudy(i) => {
                let gold = &self.inner.prestudy_gold[i];
                if sub.item_id != gold.instance.id {
                    return Err(Error::Stale(format!("expected {}, got {}", gold.instance.id, sub.item_id)));
                }
                let answers = validate_submission(&self.inner.config.schemes, &sub.labels, Some(&gold.instance))
                    .map_err(Error::Submission)?;
                let correct = gold_matches(&gold.answers, &answers);
                let mut status = g.state.qc_status.clone();
                let n = self.inner.prestudy_gold.len();
                if i + 1 == n {
                    let right = g.state.prestudy.iter().filter(|p| p.correct).count() + usize::from(correct);
                    let threshold = self
                        .inner
                        .config
                        .quality_control
                        .as_ref()
                        .and_then(|q| q.prestudy.as_ref())
                        .map(|p| p.pass_threshold)
                        .unwrap_or(1.0);
                    run_prestudy(&mut status, right, n, threshold);
                }
                self.commit(
                    &mut g,
                    Event::PrestudyAnswered {
                        instance_id: gold.instance.id.clone(),
                        answers,
                        correct,
                        elapsed_ms: sub.elapsed_ms,
                        at,
                        status,
                    },
                )?;
            }
            Step::Item(pos) => {
                let item = g.state.queue[pos].clone();
                let instance = self.item_instance(&item);
                if sub.item_id != instance.id {
                    return Err(Error::Stale(format!("expected {}, got {}", instance.id, sub.item_id)));
                }
                let current_rev = g.state.records[pos].as_ref().map(|r| r.revision).unwrap_or(0);
                if let Some(r) = sub.revision {
                    if r != current_rev {
                        return Err(Error::Stale(format!("revision {r} is not current ({current_rev})")));
                    }
                }
                let labels = validate_submission(&self.inner.config.schemes, &sub.labels, Some(instance))
                    .map_err(Error::Submission)?;
                let mut status = g.state.qc_status.clone();
                let first = current_rev == 0;
                let attention_correct = match &item {
                    QueueItem::Attention(k) => {
                        let previous = g.state.records[pos].as_ref().and_then(|r| r.attention_correct);
                        match previous {
                            Some(p) => Some(p),
                            None => {
                                let ok = gold_matches(&self.inner.attention_gold[*k].answers, &labels);
                                if let Some(att) = self.inner.config.quality_control.as_ref().and_then(|q| q.attention.as_ref()) {
                                    score_attention(&mut status, att, ok);
                                }
                                Some(ok)
                            }
                        }
                    }
                    QueueItem::Instance(_) => None,
                };
                self.commit(
                    &mut g,
                    Event::Annotated {
                        position: pos,
                        instance_id: instance.id.clone(),
                        labels,
                        elapsed_ms: sub.elapsed_ms,
                        revision: current_rev + 1,
                        at,
                        attention_correct,
                        status,
                    },
                )?;
                if first && matches!(item, QueueItem::Instance(_)) {
                    let total = self.inner.total.fetch_add(1, AtomicOrdering::SeqCst) + 1;
                    if let Some(al) = &self.inner.config.active_learning {
                        retrain = crate::active::retrain_due(total, al);
                    }
                }
            }
        }
        self.advance_gates(&mut g)?;
        let next = self.view(&g.state);
        drop(g);
        if retrain {
            self.request_retrain();
        }
        Ok(SubmitOutcome { duplicate: false, next })
    }

    /// Moves the cursor within the annotated prefix.
    pub fn navigate(&self, user_id: &str, direction: Direction) -> Result<NavigateOutcome> {
        let slot = self.slot(user_id)?;
        let mut g = slot.lock();
        let s = &mut g.state;
        if s.qc_status.is_blocked() {
            return Err(Error::Forbidden("annotator is blocked".into()));
        }
        let in_main = s.queue_assigned && matches!(self.step(s), Step::Item(_) | Step::PostSurvey(_) | Step::Complete);
        let notice = if !in_main || s.queue.is_empty() {
            Some("navigation is only available between annotation items")
        } else {
            match direction {
                Direction::Back if s.cursor == 0 => Some("already at the first item"),
                Direction::Back => {
                    s.cursor -= 1;
                    None
                }
                Direction::Forward if s.cursor >= s.frontier() => Some("submit the current item before moving on"),
                Direction::Forward => {
                    s.cursor += 1;
                    None
                }
            }
        };
        Ok(NavigateOutcome {
            moved: notice.is_none(),
            notice: notice.map(str::to_string),
            view: self.view(&g.state),
        })
    }

    // ---- admin ----

    pub fn progress(&self) -> AdminProgress {
        let states = self.user_states();
        let mut coverage: IndexMap<String, usize> = self.inner.instances.iter().map(|i| (i.id.clone(), 0)).collect();
        let mut users = Vec::new();
        let (mut failures, mut flagged, mut blocked) = (0, 0, 0);
        for s in &states {
            for r in s.records.iter().flatten() {
                if let QueueItem::Instance(id) = &r.item {
                    *coverage.entry(id.clone()).or_insert(0) += 1;
                }
            }
            failures += s.qc_status.attention_failures;
            match s.qc_status.state {
                AnnotatorState::Flagged => flagged += 1,
                AnnotatorState::Blocked => blocked += 1,
                AnnotatorState::Active => {}
            }
            users.push(UserProgress {
                user_id: s.user_id.clone(),
                completed: s.annotation_count(),
                assigned: s.queue.iter().filter(|q| q.instance_id().is_some()).count(),
                attention_items: s.queue.iter().filter(|q| q.instance_id().is_none()).count(),
                attention_failures: s.qc_status.attention_failures,
                state: s.qc_status.state,
                prestudy: s.qc_status.prestudy_passed,
                complete: s.is_complete() && s.post_surveys.len() == self.post_pages().len(),
            });
        }
        AdminProgress {
            total_annotations: coverage.values().sum(),
            users,
            coverage,
            attention_failures: failures,
            flagged,
            blocked,
        }
    }

    // ---- active learning ----

    fn spawn_trainer(&self) {
        let (tx, rx) = mpsc::channel::<()>();
        let weak: Weak<Inner> = Arc::downgrade(&self.inner);
        let spawned = std::thread::Builder::new().name("retrain".into()).spawn(move || {
            while rx.recv().is_ok() {
                while rx.try_recv().is_ok() {}
                let Some(inner) = weak.upgrade() else { break };
                let wb = Workbench { inner };
                if let Some(r) = wb.retrain_now() {
                    log::info!("retrained on {} labels, reordered {} queues", r.trained_on, r.reordered_users);
                }
            }
        });
        match spawned {
            Ok(_) => *self.inner.trainer.lock() = Some(tx),
            Err(e) => log::warn!("could not start the retraining thread: {e}"),
        }
    }

    fn request_retrain(&self) {
        if let Some(tx) = self.inner.trainer.lock().as_ref() {
            let _ = tx.send(());
        }
    }

    /// Pooled `(text, answer)` training pairs for the target scheme. Attention
    /// and prestudy answers are never included.
    pub fn training_examples(&self) -> Vec<(String, crate::scheme::Answer)> {
        let Some(al) = &self.inner.config.active_learning else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for s in self.user_states() {
            for r in s.records.iter().flatten() {
                if let (QueueItem::Instance(id), Some(answer)) = (&r.item, r.labels.get(&al.target_scheme)) {
                    out.push((self.inner.instances[self.inner.index[id]].joined_text(), answer.clone()));
                }
            }
        }
        out
    }

    fn train_model(&self, round: u64) -> Option<Arc<ModelState>> {
        let al = self.inner.config.active_learning.as_ref()?;
        let scheme = self.inner.config.scheme(&al.target_scheme)?;
        let examples = self.training_examples();
        let options: Vec<String> = scheme.option_values().map(str::to_string).collect();
        let model = match fit_target(scheme.kind, &options, &examples, al, &TrainOptions::default()) {
            Ok(m) => m,
            Err(skip) => {
                log::info!("retraining skipped: {skip}");
                return None;
            }
        };
        let confidences = self
            .inner
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (i, model.confidence(f)))
            .collect();
        let path = self.inner.config.output_dir().join(MODEL_FILE);
        let tmp = path.with_extension("txt.tmp");
        if let Err(e) = std::fs::write(&tmp, snapshot_text(&model)).and_then(|_| std::fs::rename(&tmp, &path)) {
            log::warn!("could not write {}: {e}", path.display());
        }
        Some(Arc::new(ModelState { round, confidences }))
    }

    /// Retrains synchronously and reorders every annotator's unannotated
    /// suffix. The item currently at an annotator's frontier stays in place.
    pub fn retrain_now(&self) -> Option<RetrainReport> {
        let _guard = self.inner.train_lock.lock();
        let al = self.inner.config.active_learning.as_ref()?;
        let round = self.inner.model.read().as_ref().map(|m| m.round).unwrap_or(0) + 1;
        let trained_on = self.training_examples().len();
        let model = self.train_model(round)?;
        *self.inner.model.write() = Some(model.clone());

        let slots: Vec<_> = {
            let users = self.inner.users.read();
            let mut v: Vec<_> = users.iter().map(|(k, s)| (k.clone(), s.clone())).collect();
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        };
        let mut reordered = 0;
        for (user_id, slot) in slots {
            let mut g = slot.lock();
            let s = &g.state;
            if !s.queue_assigned {
                continue;
            }
            let from = (s.frontier() + 1).min(s.queue.len());
            let suffix = &s.queue[from..];
            let scored: Vec<(String, f64)> = suffix
                .iter()
                .filter_map(|q| q.instance_id())
                .map(|id| {
                    let i = self.inner.index[id];
                    (id.to_string(), model.confidences.get(&i).copied().unwrap_or(1.0))
                })
                .collect();
            if scored.len() < 2 {
                continue;
            }
            let seed = stable_seed(&[&al.seed.to_le_bytes(), user_id.as_bytes(), &round.to_le_bytes()]);
            let plan = reorder_scored(&scored, al.random_ratio, seed);
            let mut ids = plan.ids();
            let new_suffix: Vec<QueueItem> = suffix
                .iter()
                .map(|q| match q {
                    QueueItem::Attention(_) => q.clone(),
                    QueueItem::Instance(_) => QueueItem::Instance(ids.next().expect("same count").to_string()),
                })
                .collect();
            if new_suffix != suffix {
                let ev = Event::QueueReordered {
                    from,
                    suffix: new_suffix,
                };
                match self.commit(&mut g, ev) {
                    Ok(()) => reordered += 1,
                    Err(e) => log::warn!("reorder for {user_id} not persisted: {e}"),
                }
            }
        }
        Some(RetrainReport {
            round,
            trained_on,
            reordered_users: reordered,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TextField;
    use crate::scheme::{AnnotationScheme, SchemeKind};
    use serde_json::json;

    fn setup(n: usize, edit: impl FnOnce(&mut TaskConfig)) -> (tempfile::TempDir, Workbench) {
        let dir = tempfile::tempdir().unwrap();
        let data: String = (0..n).map(|i| format!("{{\"id\":\"d{i}\",\"text\":\"doc {i}\"}}\n")).collect();
        std::fs::write(dir.path().join("data.jsonl"), data).unwrap();
        let mut cfg = TaskConfig::minimal("t", vec!["data.jsonl".into()], "id", TextField::One("text".into()));
        cfg.base_dir = dir.path().to_path_buf();
        cfg.schemes = vec![AnnotationScheme::new("s", SchemeKind::Radio).with_options(["a", "b"])];
        edit(&mut cfg);
        let wb = Workbench::open_with(cfg, WorkbenchOptions { background_training: false, snapshot_every: 3 }).unwrap();
        (dir, wb)
    }

    fn answer(wb: &Workbench, user: &str, v: &str) -> SubmitOutcome {
        let id = wb.current(user).unwrap().item_id().unwrap().to_string();
        wb.submit(user, &Submission::new(id, vec![RawLabel::new("s", json!(v))], 10)).unwrap()
    }

    #[test]
    fn url_login_assigns_queue() {
        let (_d, wb) = setup(10, |_| {});
        let u = wb.login_url("W123").unwrap();
        assert_eq!(u, "url:W123");
        let s = wb.user_state(&u).unwrap();
        assert_eq!(s.queue.len(), 10);
        assert_eq!(wb.login_url("W123").unwrap(), u);
    }

    #[test]
    fn email_auth() {
        let (_d, wb) = setup(3, |_| {});
        let u = wb.signup("A@x.org", "pw").unwrap();
        assert_eq!(wb.login("a@x.org", "pw").unwrap(), u);
        assert!(matches!(wb.login("a@x.org", "nope"), Err(Error::Auth(_))));
        assert!(matches!(wb.login("b@x.org", "pw"), Err(Error::Auth(_))));
        assert!(matches!(wb.signup("a@x.org", "pw"), Err(Error::Conflict(_))));
    }

    #[test]
    fn email_only_rejects_url_login() {
        let (_d, wb) = setup(3, |c| c.login_mode = crate::config::LoginMode::EmailSignup);
        assert!(matches!(wb.login_url("W1"), Err(Error::Auth(_))));
    }

    #[test]
    fn submit_advances_and_edit_returns_to_frontier() {
        let (_d, wb) = setup(10, |_| {});
        let u = wb.login_url("w").unwrap();
        for _ in 0..7 {
            answer(&wb, &u, "a");
        }
        assert_eq!(wb.user_state(&u).unwrap().cursor, 7);
        for _ in 0..5 {
            assert!(wb.navigate(&u, Direction::Back).unwrap().moved);
        }
        let view = wb.current(&u).unwrap();
        let TaskView::Instance { position, model, revision, .. } = &view else { panic!() };
        assert_eq!(*position, 2);
        assert_eq!(*revision, 1);
        assert_eq!(model.prefill, vec![RawLabel::new("s", json!("a"))]);
        answer(&wb, &u, "b");
        assert_eq!(wb.user_state(&u).unwrap().cursor, 7);
    }

    #[test]
    fn timing_accumulates() {
        let (_d, wb) = setup(3, |_| {});
        let u = wb.login_url("w").unwrap();
        wb.submit(&u, &Submission::new("d0", vec![RawLabel::new("s", json!("a"))], 4000)).unwrap();
        wb.navigate(&u, Direction::Back).unwrap();
        wb.submit(&u, &Submission::new("d0", vec![RawLabel::new("s", json!("b"))], 1500)).unwrap();
        assert_eq!(wb.user_state(&u).unwrap().per_item_timing()["d0"], 5500);
    }

    #[test]
    fn navigation_frontier() {
        let (_d, wb) = setup(5, |_| {});
        let u = wb.login_url("w").unwrap();
        assert!(!wb.navigate(&u, Direction::Back).unwrap().moved);
        assert!(!wb.navigate(&u, Direction::Forward).unwrap().moved);
        for _ in 0..3 {
            answer(&wb, &u, "a");
        }
        wb.navigate(&u, Direction::Back).unwrap();
        wb.navigate(&u, Direction::Forward).unwrap();
        assert_eq!(wb.user_state(&u).unwrap().cursor, 3);
    }

    #[test]
    fn stale_and_invalid_do_not_move() {
        let (_d, wb) = setup(3, |_| {});
        let u = wb.login_url("w").unwrap();
        let e = wb.submit(&u, &Submission::new("d2", vec![RawLabel::new("s", json!("a"))], 0)).unwrap_err();
        assert!(matches!(e, Error::Stale(_)));
        let e = wb.submit(&u, &Submission::new("d0", vec![RawLabel::new("s", json!("zzz"))], 0)).unwrap_err();
        assert!(matches!(e, Error::Submission(_)));
        assert_eq!(wb.user_state(&u).unwrap().cursor, 0);
    }

    #[test]
    fn replay_is_idempotent() {
        let (_d, wb) = setup(3, |_| {});
        let u = wb.login_url("w").unwrap();
        let sub = Submission::new("d0", vec![RawLabel::new("s", json!("a"))], 5).with_revision(0);
        assert!(!wb.submit(&u, &sub).unwrap().duplicate);
        assert!(wb.submit(&u, &sub).unwrap().duplicate);
        let s = wb.user_state(&u).unwrap();
        assert_eq!(s.frontier(), 1);
        assert_eq!(s.records[0].as_ref().unwrap().elapsed_ms, 5);
        assert_eq!(wb.total_annotations(), 1);
    }

    #[test]
    fn restart_recovers_state() {
        let (d, wb) = setup(6, |_| {});
        let u = wb.login_url("w").unwrap();
        for _ in 0..4 {
            answer(&wb, &u, "b");
        }
        let before = wb.user_state(&u).unwrap();
        let cfg = wb.config().clone();
        drop(wb);
        let wb = Workbench::open_with(cfg, WorkbenchOptions { background_training: false, snapshot_every: 3 }).unwrap();
        assert_eq!(wb.user_state(&u).unwrap(), before);
        assert_eq!(wb.total_annotations(), 4);
        drop(d);
    }

    #[test]
    fn quota_disjoint_queues() {
        let (_d, wb) = setup(4, |c| {
            c.assignment.annotations_per_instance = 1;
            c.assignment.max_instances_per_annotator = Some(2);
        });
        let a = wb.login_url("a").unwrap();
        let b = wb.login_url("b").unwrap();
        let c = wb.login_url("c").unwrap();
        assert_eq!(wb.user_state(&a).unwrap().queue.len(), 2);
        assert_eq!(wb.user_state(&b).unwrap().queue.len(), 2);
        assert!(matches!(wb.current(&c).unwrap(), TaskView::Complete { .. }));
        assert_eq!(wb.assignment_counts(), [1, 1, 1, 1]);
    }

    #[test]
    fn completion_code_shown() {
        let (_d, wb) = setup(1, |c| c.server.completion_code = Some("XYZ".into()));
        let u = wb.login_url("w").unwrap();
        let next = answer(&wb, &u, "a").next;
        assert_eq!(next, TaskView::Complete { completion_code: Some("XYZ".into()), progress: ProgressInfo::new(1, 1) });
        assert!(matches!(wb.submit(&u, &Submission::new("d0", vec![], 0)), Err(Error::Conflict(_))));
    }

    #[test]
    fn repeated_attention_item_is_not_a_replay() {
        use crate::quality::{AttentionConfig, GoldItem, QualityControlConfig};
        let (_d, wb) = setup(6, |c| {
            let mut instance = crate::data::Record::new();
            instance.insert("id".into(), json!("gold"));
            instance.insert("text".into(), json!("check"));
            let mut answers = IndexMap::new();
            answers.insert("s".into(), json!("a"));
            c.quality_control = Some(QualityControlConfig {
                attention: Some(AttentionConfig {
                    test_items: vec![GoldItem { instance, answers }],
                    insertion_rate: 0.5,
                    fail_threshold: 5,
                    on_fail: Default::default(),
                }),
                ..Default::default()
            });
        });
        let u = wb.login_url("w").unwrap();
        assert_eq!(wb.user_state(&u).unwrap().queue.len(), 9);
        for _ in 0..9 {
            let view = wb.current(&u).unwrap();
            let sub = Submission::new(view.item_id().unwrap(), vec![RawLabel::new("s", json!("a"))], 1)
                .with_revision(view.revision().unwrap());
            assert!(!wb.submit(&u, &sub).unwrap().duplicate);
        }
        assert!(wb.user_state(&u).unwrap().is_complete());
    }
}
