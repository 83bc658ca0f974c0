use std::collections::VecDeque;
use std::io::{self, Write};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;

use super::header_line;
use crate::engine::DecisionKind;
use crate::state::ContainerId;

pub const DEFAULT_AUDIT_CAPACITY: usize = 65536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditDecision {
    Allow,
    Deny,
    Kill,
    Unconfined,
    ContainerCreated,
    ContainerRemoved,
    LifecycleError,
}

impl From<DecisionKind> for AuditDecision {
    fn from(kind: DecisionKind) -> Self {
        match kind {
            DecisionKind::Allow => AuditDecision::Allow,
            DecisionKind::Deny => AuditDecision::Deny,
            DecisionKind::Kill => AuditDecision::Kill,
            DecisionKind::Unconfined => AuditDecision::Unconfined,
        }
    }
}

/// One logged decision and the provenance behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub container_id: Option<ContainerId>,
    pub policy: Option<String>,
    pub event: String,
    pub decision: AuditDecision,
    pub reason: String,
    pub taint_transition: bool,
}

impl AuditRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("audit records serialize")
    }
}

pub trait AuditSink {
    fn record(&mut self, record: AuditRecord) -> io::Result<()>;

    /// Records lost to overflow so far.
    fn dropped(&self) -> u64 {
        0
    }
}

impl AuditSink for Vec<AuditRecord> {
    fn record(&mut self, record: AuditRecord) -> io::Result<()> {
        self.push(record);
        Ok(())
    }
}

#[derive(Debug)]
struct Ring {
    records: VecDeque<AuditRecord>,
    capacity: usize,
    dropped: u64,
}

/// Bounded in-memory audit buffer with ring-buffer semantics: when full,
/// new records are dropped and counted rather than overwriting old ones.
///
/// The writer side is the replay; one [`AuditReader`] may drain it
/// concurrently from another thread.
#[derive(Debug)]
pub struct AuditRing {
    inner: Arc<Mutex<Ring>>,
}

impl Default for AuditRing {
    fn default() -> Self {
        AuditRing::new(DEFAULT_AUDIT_CAPACITY)
    }
}

impl AuditRing {
    pub fn new(capacity: usize) -> Self {
        AuditRing {
            inner: Arc::new(Mutex::new(Ring {
                records: VecDeque::with_capacity(capacity.min(DEFAULT_AUDIT_CAPACITY)),
                capacity,
                dropped: 0,
            })),
        }
    }

    pub fn reader(&self) -> AuditReader {
        AuditReader {
            inner: Arc::clone(&self.inner),
        }
    }

    pub fn len(&self) -> usize {
        lock(&self.inner).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        lock(&self.inner).capacity
    }
}

impl AuditSink for AuditRing {
    fn record(&mut self, record: AuditRecord) -> io::Result<()> {
        let mut ring = lock(&self.inner);
        if ring.records.len() < ring.capacity {
            ring.records.push_back(record);
        } else {
            ring.dropped += 1;
        }
        Ok(())
    }

    fn dropped(&self) -> u64 {
        lock(&self.inner).dropped
    }
}

/// Consumer handle for an [`AuditRing`].
#[derive(Debug)]
pub struct AuditReader {
    inner: Arc<Mutex<Ring>>,
}

impl AuditReader {
    /// Take every buffered record, oldest first, freeing space for the writer.
    pub fn drain(&self) -> Vec<AuditRecord> {
        lock(&self.inner).records.drain(..).collect()
    }

    pub fn dropped(&self) -> u64 {
        lock(&self.inner).dropped
    }
}

fn lock(ring: &Mutex<Ring>) -> MutexGuard<'_, Ring> {
    // A panicking holder cannot leave the ring half-updated.
    ring.lock().unwrap_or_else(|e| e.into_inner())
}

/// Streams records as JSON Lines, after the format header.
pub struct JsonlAuditWriter<W: Write> {
    out: W,
}

impl<W: Write> JsonlAuditWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", header_line())?;
        Ok(JsonlAuditWriter { out })
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> AuditSink for JsonlAuditWriter<W> {
    fn record(&mut self, record: AuditRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, &record)?;
        self.out.write_all(b"\n")
    }
}
