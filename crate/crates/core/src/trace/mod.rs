//! Trace replay: the stand-in for live kernel attachment.
//!
//! A trace is a JSON Lines file. The first line is the header
//! `{"format":1}`; every following line is one event with an integer `seq`,
//! a `kind` and the payload fields of that kind:
//!
//! ```text
//! {"format":1}
//! {"seq":1,"kind":"confine","pid":1,"policy_name":"hello_taint","ns_info":{"mount_ns":1,"ipc_ns":1}}
//! {"seq":2,"kind":"file_access","pid":1,"path":"/dev/tty","requested":"r","fs_kind":"regular"}
//! {"seq":3,"kind":"hardening_op","pid":1,"op":"bpf_syscall"}
//! ```
//!
//! Lifecycle kinds are `confine`, `fork` and `exit`; every other kind is a
//! [`HookEvent`]. Unknown kinds and unknown fields are rejected.

mod audit;
mod replay;

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{EngineError, HookEvent};
use crate::state::{NamespaceInfo, Pid};

pub use audit::{
    AuditDecision, AuditReader, AuditRecord, AuditRing, AuditSink, JsonlAuditWriter,
    DEFAULT_AUDIT_CAPACITY,
};
pub use replay::{replay, replay_into, Replay, ReplaySummary, Replayer};

/// Version written to and expected in the header line of trace and audit files.
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    BadHeader { line: usize, reason: String },
    #[error("malformed event{}: line {line}: {reason}", seq.map(|s| format!(" at seq {s}")).unwrap_or_default())]
    MalformedEvent {
        seq: Option<u64>,
        line: usize,
        reason: String,
    },
    #[error("out-of-order trace: seq {seq} follows seq {previous}")]
    OutOfOrderTrace { seq: u64, previous: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Process lifecycle records: the scheduler tracepoints and confine uprobe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Lifecycle {
    Confine {
        pid: Pid,
        policy_name: String,
        ns_info: NamespaceInfo,
    },
    Fork {
        parent: Pid,
        child: Pid,
    },
    Exit {
        pid: Pid,
    },
}

impl Lifecycle {
    const KINDS: [&'static str; 3] = ["confine", "fork", "exit"];

    /// The pid whose action this record describes.
    pub fn actor(&self) -> Pid {
        match self {
            Lifecycle::Confine { pid, .. } | Lifecycle::Exit { pid } => *pid,
            Lifecycle::Fork { parent, .. } => *parent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceBody {
    Lifecycle(Lifecycle),
    Hook(HookEvent),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub body: TraceBody,
}

impl TraceEvent {
    pub fn hook(seq: u64, event: HookEvent) -> Self {
        TraceEvent {
            seq,
            body: TraceBody::Hook(event),
        }
    }

    pub fn lifecycle(seq: u64, record: Lifecycle) -> Self {
        TraceEvent {
            seq,
            body: TraceBody::Lifecycle(record),
        }
    }

    pub fn confine(seq: u64, pid: u32, policy_name: &str, ns_info: NamespaceInfo) -> Self {
        Self::lifecycle(
            seq,
            Lifecycle::Confine {
                pid: Pid(pid),
                policy_name: policy_name.to_string(),
                ns_info,
            },
        )
    }

    pub fn fork(seq: u64, parent: u32, child: u32) -> Self {
        Self::lifecycle(
            seq,
            Lifecycle::Fork {
                parent: Pid(parent),
                child: Pid(child),
            },
        )
    }

    pub fn exit(seq: u64, pid: u32) -> Self {
        Self::lifecycle(seq, Lifecycle::Exit { pid: Pid(pid) })
    }

    /// Serialize as one trace line, `seq` first.
    pub fn to_json(&self) -> String {
        let body = match &self.body {
            TraceBody::Lifecycle(l) => serde_json::to_string(l),
            TraceBody::Hook(h) => serde_json::to_string(h),
        }
        .expect("trace events serialize");
        // The tagged body always starts with `{"kind":`.
        format!("{{\"seq\":{},{}", self.seq, &body[1..])
    }

    /// Parse one event line. `line` is only used for error positions.
    pub fn from_json(text: &str, line: usize) -> Result<Self, TraceError> {
        let malformed = |seq, reason: String| TraceError::MalformedEvent { seq, line, reason };
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| malformed(None, e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| malformed(None, "expected a JSON object".into()))?;
        let seq = match obj.remove("seq") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| malformed(None, "`seq` must be a non-negative integer".into()))?,
            None => return Err(malformed(None, "missing field `seq`".into())),
        };
        let kind = obj.get("kind").and_then(Value::as_str).unwrap_or_default();
        let body = if Lifecycle::KINDS.contains(&kind) {
            serde_json::from_value(value).map(TraceBody::Lifecycle)
        } else {
            serde_json::from_value(value).map(TraceBody::Hook)
        }
        .map_err(|e| malformed(Some(seq), e.to_string()))?;
        Ok(TraceEvent { seq, body })
    }
}

/// The header line shared by trace and audit files.
pub fn header_line() -> String {
    serde_json::json!({ "format": FORMAT_VERSION }).to_string()
}

fn check_header(text: &str, line: usize) -> Result<(), TraceError> {
    let bad = |reason: String| TraceError::BadHeader { line, reason };
    let value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let obj = value
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or_else(|| bad("expected a header of the form {\"format\":1}".into()))?;
    match obj.get("format").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => Ok(()),
        Some(v) => Err(bad(format!("unsupported format version {v}"))),
        None => Err(bad("expected a header of the form {\"format\":1}".into())),
    }
}

/// Streaming trace parser. Blank lines are skipped. An input with no lines
/// at all is an empty trace; otherwise the header must come first.
pub struct TraceReader<R> {
    lines: io::Lines<R>,
    line: usize,
    header_seen: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R) -> Self {
        TraceReader {
            lines: reader.lines(),
            line: 0,
            header_seen: false,
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            if !self.header_seen {
                self.header_seen = true;
                if let Err(e) = check_header(&text, self.line) {
                    return Some(Err(e));
                }
                continue;
            }
            return Some(TraceEvent::from_json(&text, self.line));
        }
    }
}

pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceEvent>, TraceError> {
    TraceReader::new(reader).collect()
}

pub fn parse_trace_str(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    parse_trace(text.as_bytes())
}

pub fn write_trace<W: Write>(mut out: W, events: &[TraceEvent]) -> io::Result<()> {
    writeln!(out, "{}", header_line())?;
    for event in events {
        writeln!(out, "{}", event.to_json())?;
    }
    out.flush()
}
