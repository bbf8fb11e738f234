//! On-disk layout, one directory per annotator under `<output_dir>/users/`:
//!
//! - `log.jsonl`: append-only, one [`LogLine`] per line, fsynced before the
//!   triggering request is acknowledged.
//! - `state.json`: compacted [`UserState`] snapshot, replaced atomically. Its
//!   `seq` says which log lines it already covers.
//!
//! Recovery loads the snapshot, then replays later log lines. A torn final
//! line (crash mid-write) is dropped and truncated away.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::state::{Event, LogLine, UserState};
use crate::error::{Error, Result};

pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "state.json";

/// Filesystem-safe directory name: readable prefix plus a hash of the full id.
pub fn user_dir_name(user_id: &str) -> String {
    let readable: String = user_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .take(40)
        .collect();
    let digest = Sha256::digest(user_id.as_bytes());
    format!("{readable}-{}", hex::encode(&digest[..8]))
}

pub fn users_root(output_dir: &Path) -> PathBuf {
    output_dir.join("users")
}

pub struct UserLog {
    dir: PathBuf,
    file: File,
    since_snapshot: usize,
}

impl UserLog {
    pub fn create(root: &Path, user_id: &str) -> Result<Self> {
        let dir = root.join(user_dir_name(user_id));
        if fs::metadata(dir.join(LOG_FILE)).map(|m| m.len() > 0).unwrap_or(false) {
            return Err(Error::Conflict(format!("user {user_id} already exists on disk")));
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let file = open_append(&dir.join(LOG_FILE))?;
        sync_dir(root);
        Ok(Self {
            dir,
            file,
            since_snapshot: 0,
        })
    }

    /// Appends and fsyncs one event. The caller applies it only on success.
    pub fn append(&mut self, seq: u64, event: &Event) -> Result<()> {
        let line = LogLine {
            seq,
            event: event.clone(),
        };
        let mut bytes = serde_json::to_vec(&line).expect("log line serializes");
        bytes.push(b'\n');
        let path = self.dir.join(LOG_FILE);
        self.file.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&path, e))?;
        self.since_snapshot += 1;
        Ok(())
    }

    pub fn since_snapshot(&self) -> usize {
        self.since_snapshot
    }

    pub fn write_snapshot(&mut self, state: &UserState) -> Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let dst = self.dir.join(SNAPSHOT_FILE);
        let bytes = serde_json::to_vec(state).expect("state serializes");
        {
            let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
        sync_dir(&self.dir);
        self.since_snapshot = 0;
        Ok(())
    }
}

fn open_append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

fn sync_dir(dir: &Path) {
    // Best effort: directory fsync is not supported everywhere.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

/// Rebuilds one user's state from disk and reopens the log for appending.
/// `None` when the registration itself never reached the disk.
pub fn recover(dir: &Path) -> Result<Option<(UserState, UserLog)>> {
    let log_path = dir.join(LOG_FILE);
    let snap_path = dir.join(SNAPSHOT_FILE);
    let mut state: Option<UserState> = match fs::read(&snap_path) {
        Ok(bytes) => Some(serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: snap_path.clone(),
            line: None,
            message: e.to_string(),
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&snap_path, e)),
    };

    let file = File::open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut reader = BufReader::new(file);
    let mut good_len: u64 = 0;
    let mut line_no = 0usize;
    let mut since_snapshot = 0usize;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(&log_path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.last() == Some(&b'\n');
        let parsed: std::result::Result<LogLine, _> = serde_json::from_slice(&buf);
        let line = match parsed {
            Ok(l) if complete => l,
            Ok(_) | Err(_) => {
                // Only the final line may be torn.
                let mut rest = Vec::new();
                std::io::Read::read_to_end(&mut reader, &mut rest).map_err(|e| Error::io(&log_path, e))?;
                if !rest.is_empty() {
                    return Err(Error::Parse {
                        path: log_path,
                        line: Some(line_no),
                        message: "corrupt log line".into(),
                    });
                }
                log::warn!("{}: dropping torn final line {line_no}", log_path.display());
                break;
            }
        };
        good_len += n as u64;
        match (&mut state, &line.event) {
            (None, Event::Registered { user_id, auth, at, status }) => {
                let mut s = UserState::new(user_id.clone(), auth.clone(), *at, status.clone());
                s.seq = line.seq;
                state = Some(s);
            }
            (None, _) => {
                return Err(Error::Parse {
                    path: log_path,
                    line: Some(line_no),
                    message: "log does not start with a registration".into(),
                })
            }
            (Some(s), ev) => {
                if line.seq > s.seq {
                    if line.seq != s.seq + 1 {
                        return Err(Error::Parse {
                            path: log_path,
                            line: Some(line_no),
                            message: format!("sequence gap: {} after {}", line.seq, s.seq),
                        });
                    }
                    s.apply(line.seq, ev);
                    since_snapshot += 1;
                }
            }
        }
    }
    let Some(mut state) = state else {
        return Ok(None);
    };
    let f = OpenOptions::new().write(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    if f.metadata().map_err(|e| Error::io(&log_path, e))?.len() != good_len {
        f.set_len(good_len).map_err(|e| Error::io(&log_path, e))?;
        f.sync_all().map_err(|e| Error::io(&log_path, e))?;
    }
    // Resume rule: show the first unannotated item.
    state.cursor = state.frontier();
    let file = open_append(&log_path)?;
    Ok(Some((
        state,
        UserLog {
            dir: dir.to_path_buf(),
            file,
            since_snapshot,
        },
    )))
}

/// Directories under `users/` that hold a log.
pub fn user_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(root, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let p = entry.path();
        if p.join(LOG_FILE).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
