//! `run_log.jsonl`: one JSON object per line for the run, each stage and each
//! provider call. A call's `request_hash` is its cache key, so a rerun with
//! the same cache directory can be checked entry by entry.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use radvid_core::telemetry::{CallLog, CallRecord};
use serde::{Deserialize, Serialize};

pub const RUN_LOG_FILE: &str = "run_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Run {
        command: String,
        status: String,
        config_sha256: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        exit_code: Option<i32>,
    },
    Stage {
        stage: String,
        ok: bool,
        elapsed_ms: u64,
    },
    Call {
        stage: String,
        #[serde(flatten)]
        call: CallRecord,
    },
}

pub struct RunLog {
    path: Option<PathBuf>,
    calls: CallLog,
    written: usize,
    events: Vec<Event>,
}

impl RunLog {
    /// Log to `dir/run_log.jsonl`, truncating any previous log; `None` keeps
    /// events in memory only.
    pub fn create(dir: Option<&Path>, calls: CallLog) -> std::io::Result<Self> {
        let path = match dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                let p = d.join(RUN_LOG_FILE);
                std::fs::File::create(&p)?;
                Some(p)
            }
            None => None,
        };
        Ok(Self {
            path,
            calls,
            written: 0,
            events: Vec::new(),
        })
    }

    pub fn calls(&self) -> &CallLog {
        &self.calls
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn emit(&mut self, e: Event) {
        if let Some(p) = &self.path {
            let line = serde_json::to_string(&e).expect("event serializes");
            let r = std::fs::OpenOptions::new()
                .append(true)
                .open(p)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(err) = r {
                log::warn!("could not append to {}: {err}", p.display());
            }
        }
        self.events.push(e);
    }

    /// Run `f` as stage `name`, then log its provider calls and timing.
    pub fn stage<T, E>(&mut self, name: &str, f: impl FnOnce() -> Result<T, E>) -> Result<T, E> {
        log::info!("stage {name}");
        let t0 = Instant::now();
        let r = f();
        self.flush_calls(name);
        self.emit(Event::Stage {
            stage: name.to_string(),
            ok: r.is_ok(),
            elapsed_ms: t0.elapsed().as_millis() as u64,
        });
        r
    }

    fn flush_calls(&mut self, stage: &str) {
        let all = self.calls.snapshot();
        for call in all.into_iter().skip(self.written) {
            self.written += 1;
            self.emit(Event::Call {
                stage: stage.to_string(),
                call,
            });
        }
    }
}

pub fn read_log(path: &Path) -> std::io::Result<Vec<Event>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_and_calls_are_logged() {
        let dir = tempfile::tempdir().unwrap();
        let calls = CallLog::new();
        let mut log = RunLog::create(Some(dir.path()), calls.clone()).unwrap();
        log.emit(Event::Run {
            command: "generate".into(),
            status: "started".into(),
            config_sha256: "abc".into(),
            exit_code: None,
        });
        let r: Result<u8, ()> = log.stage("report", || {
            calls.push(CallRecord {
                provider: "llm".into(),
                backend: "mock".into(),
                request_hash: "k1".into(),
                latency_ms: 0,
                cache_hit: false,
                ok: true,
            });
            Ok(1)
        });
        assert_eq!(r, Ok(1));
        let _: Result<(), &str> = log.stage("segment", || Err("boom"));
        let events = read_log(&dir.path().join(RUN_LOG_FILE)).unwrap();
        assert_eq!(events, log.events());
        assert_eq!(events.len(), 4);
        assert!(matches!(&events[1], Event::Call { stage, call } if stage == "report" && call.request_hash == "k1"));
        assert!(matches!(&events[3], Event::Stage { ok: false, .. }));
    }
}
