use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Holder {
    pid: u32,
    run_id: String,
}

/// Exclusive per-character run lock, released on drop. A lock left by a
/// process that no longer exists is taken over.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
    run_id: String,
}

fn process_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        // Without a cheap liveness check, assume the holder is running.
        true
    }
}

impl RunLock {
    pub fn acquire(path: &Path, character: &str, run_id: &str) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| StoreError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        let me = Holder {
            pid: std::process::id(),
            run_id: run_id.to_string(),
        };
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    let body = serde_json::to_vec(&me).expect("holder serializes");
                    f.write_all(&body).map_err(|source| StoreError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    return Ok(Self {
                        path: path.to_path_buf(),
                        run_id: run_id.to_string(),
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder: Option<Holder> = fs::read(path).ok().and_then(|b| serde_json::from_slice(&b).ok());
                    match holder {
                        Some(h) if process_alive(h.pid) => {
                            return Err(StoreError::Locked {
                                character: character.to_string(),
                                holder: h.run_id,
                            })
                        }
                        _ => {
                            tracing::warn!(path = %path.display(), "taking over stale run lock");
                            let _ = fs::remove_file(path);
                        }
                    }
                }
                Err(source) => {
                    return Err(StoreError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }
        Err(StoreError::Locked {
            character: character.to_string(),
            holder: "unknown".into(),
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusive_until_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.lock");
        let a = RunLock::acquire(&p, "c", "run-a").unwrap();
        match RunLock::acquire(&p, "c", "run-b") {
            Err(StoreError::Locked { holder, .. }) => assert_eq!(holder, "run-a"),
            other => panic!("expected lock conflict, got {other:?}"),
        }
        drop(a);
        RunLock::acquire(&p, "c", "run-b").unwrap();
    }

    #[test]
    fn stale_lock_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.lock");
        fs::write(&p, br#"{"pid":4294967294,"runId":"dead"}"#).unwrap();
        let l = RunLock::acquire(&p, "c", "fresh").unwrap();
        assert_eq!(l.run_id(), "fresh");
        fs::write(&p, b"garbage").unwrap();
        drop(l);
    }
}
