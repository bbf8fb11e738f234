use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::quality::{QualityStatus, QueueItem};
use crate::scheme::ValidatedLabels;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Auth {
    PasswordHash { salt: String, hash: String },
    UrlArgument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyPhase {
    Pre,
    Post,
}

/// One stored answer to a queue position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item: QueueItem,
    /// Instance id shown, the gold instance's id for attention items.
    pub instance_id: String,
    pub labels: ValidatedLabels,
    /// Active time summed over every submitted visit.
    pub elapsed_ms: u64,
    /// Number of accepted submissions for this position.
    pub revision: u32,
    pub first_submitted_at: u64,
    pub last_submitted_at: u64,
    /// Attention outcome; `None` for real instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub page: usize,
    pub answers: ValidatedLabels,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrestudyResponse {
    pub instance_id: String,
    pub answers: ValidatedLabels,
    pub correct: bool,
    pub elapsed_ms: u64,
    pub at: u64,
}

/// Everything persisted about one annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub user_id: String,
    pub auth: Auth,
    pub created_at: u64,
    pub queue_assigned: bool,
    pub queue: Vec<QueueItem>,
    /// Aligned with `queue`. Filled entries always form a prefix.
    pub records: Vec<Option<ItemRecord>>,
    /// Position shown; `queue.len()` once the queue is done.
    pub cursor: usize,
    pub qc_status: QualityStatus,
    pub pre_surveys: Vec<SurveyResponse>,
    pub post_surveys: Vec<SurveyResponse>,
    pub prestudy: Vec<PrestudyResponse>,
    /// Sequence number of the last applied event.
    pub seq: u64,
}

impl UserState {
    pub fn new(user_id: String, auth: Auth, created_at: u64, status: QualityStatus) -> Self {
        Self {
            user_id,
            auth,
            created_at,
            queue_assigned: false,
            queue: Vec::new(),
            records: Vec::new(),
            cursor: 0,
            qc_status: status,
            pre_surveys: Vec::new(),
            post_surveys: Vec::new(),
            prestudy: Vec::new(),
            seq: 0,
        }
    }

    /// First position without a stored annotation.
    pub fn frontier(&self) -> usize {
        self.records.iter().position(Option::is_none).unwrap_or(self.records.len())
    }

    pub fn is_complete(&self) -> bool {
        self.queue_assigned && self.frontier() == self.queue.len()
    }

    /// Accumulated active milliseconds per shown instance id.
    pub fn per_item_timing(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for r in self.records.iter().flatten() {
            *out.entry(r.instance_id.clone()).or_insert(0) += r.elapsed_ms;
        }
        out
    }

    /// Real (non-attention) annotations stored.
    pub fn annotation_count(&self) -> usize {
        self.records
            .iter()
            .flatten()
            .filter(|r| matches!(r.item, QueueItem::Instance(_)))
            .count()
    }

    pub fn apply(&mut self, seq: u64, event: &Event) {
        self.seq = seq;
        match event {
            Event::Registered { .. } => {}
            Event::SurveyAnswered {
                phase,
                page,
                answers,
                at,
                status,
            } => {
                let resp = SurveyResponse {
                    page: *page,
                    answers: answers.clone(),
                    at: *at,
                };
                match phase {
                    SurveyPhase::Pre => self.pre_surveys.push(resp),
                    SurveyPhase::Post => self.post_surveys.push(resp),
                }
                self.qc_status = status.clone();
            }
            Event::PrestudyAnswered {
                instance_id,
                answers,
                correct,
                elapsed_ms,
                at,
                status,
            } => {
                self.prestudy.push(PrestudyResponse {
                    instance_id: instance_id.clone(),
                    answers: answers.clone(),
                    correct: *correct,
                    elapsed_ms: *elapsed_ms,
                    at: *at,
                });
                self.qc_status = status.clone();
            }
            Event::QueueAssigned { queue } => {
                self.queue = queue.clone();
                self.records = vec![None; queue.len()];
                self.queue_assigned = true;
                self.cursor = 0;
            }
            Event::QueueReordered { from, suffix } => {
                self.queue.truncate(*from);
                self.queue.extend(suffix.iter().cloned());
                self.records.resize(self.queue.len(), None);
            }
            Event::Annotated {
                position,
                instance_id,
                labels,
                elapsed_ms,
                revision,
                at,
                attention_correct,
                status,
            } => {
                let slot = &mut self.records[*position];
                match slot {
                    Some(r) => {
                        r.labels = labels.clone();
                        r.elapsed_ms += elapsed_ms;
                        r.revision = *revision;
                        r.last_submitted_at = *at;
                        r.attention_correct = *attention_correct;
                    }
                    None => {
                        *slot = Some(ItemRecord {
                            item: self.queue[*position].clone(),
                            instance_id: instance_id.clone(),
                            labels: labels.clone(),
                            elapsed_ms: *elapsed_ms,
                            revision: *revision,
                            first_submitted_at: *at,
                            last_submitted_at: *at,
                            attention_correct: *attention_correct,
                        });
                    }
                }
                self.qc_status = status.clone();
                self.cursor = self.frontier();
            }
        }
    }
}

/// One line of a user's append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Registered {
        user_id: String,
        auth: Auth,
        at: u64,
        status: QualityStatus,
    },
    SurveyAnswered {
        phase: SurveyPhase,
        page: usize,
        answers: ValidatedLabels,
        at: u64,
        status: QualityStatus,
    },
    PrestudyAnswered {
        instance_id: String,
        answers: ValidatedLabels,
        correct: bool,
        elapsed_ms: u64,
        at: u64,
        status: QualityStatus,
    },
    QueueAssigned {
        queue: Vec<QueueItem>,
    },
    /// Replaces the unannotated suffix starting at `from`.
    QueueReordered {
        from: usize,
        suffix: Vec<QueueItem>,
    },
    Annotated {
        position: usize,
        instance_id: String,
        labels: ValidatedLabels,
        /// Active time of this visit only.
        elapsed_ms: u64,
        revision: u32,
        at: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attention_correct: Option<bool>,
        status: QualityStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}
