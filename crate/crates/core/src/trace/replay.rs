use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::audit::{AuditDecision, AuditRecord, AuditSink};
use super::{Lifecycle, TraceBody, TraceError, TraceEvent};
use crate::compiler::CompiledPolicyStore;
use crate::engine::{decide, Decision, EngineError, HookEvent};
use crate::state::{Container, ContainerState, ExitOutcome, Pid};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ReplaySummary {
    pub events: u64,
    pub allows: u64,
    pub denies: u64,
    pub kills: u64,
    pub unconfined: u64,
    pub taint_transitions: u64,
    pub containers_created: u64,
    pub containers_removed: u64,
    pub lifecycle_errors: u64,
    pub post_kill_events: u64,
    pub dropped_records: u64,
}

impl fmt::Display for ReplaySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "events={} allows={} denies={} kills={} unconfined={} taint_transitions={} \
             containers_created={} containers_removed={} lifecycle_errors={} \
             post_kill_events={} dropped_records={}",
            self.events,
            self.allows,
            self.denies,
            self.kills,
            self.unconfined,
            self.taint_transitions,
            self.containers_created,
            self.containers_removed,
            self.lifecycle_errors,
            self.post_kill_events,
            self.dropped_records,
        )
    }
}

/// Sequential replay driver. Feed events with [`apply`](Self::apply) in
/// trace order, then call [`finish`](Self::finish).
pub struct Replayer<'s> {
    store: &'s CompiledPolicyStore,
    state: ContainerState,
    last_seq: Option<u64>,
    /// Pids removed by a Kill, with the seq of the kill.
    killed: HashMap<Pid, u64>,
    summary: ReplaySummary,
}

impl<'s> Replayer<'s> {
    pub fn new(store: &'s CompiledPolicyStore, state: ContainerState) -> Result<Self, TraceError> {
        if !store.is_sealed() {
            return Err(EngineError::StoreNotSealed.into());
        }
        Ok(Replayer {
            store,
            state,
            last_seq: None,
            killed: HashMap::new(),
            summary: ReplaySummary::default(),
        })
    }

    pub fn state(&self) -> &ContainerState {
        &self.state
    }

    pub fn summary(&self) -> &ReplaySummary {
        &self.summary
    }

    pub fn apply(&mut self, event: &TraceEvent, sink: &mut dyn AuditSink) -> Result<(), TraceError> {
        if let Some(previous) = self.last_seq {
            if event.seq <= previous {
                return Err(TraceError::OutOfOrderTrace {
                    seq: event.seq,
                    previous,
                });
            }
        }
        self.last_seq = Some(event.seq);
        self.summary.events += 1;
        let record = match &event.body {
            TraceBody::Lifecycle(l) => self.lifecycle(event.seq, l),
            TraceBody::Hook(h) => Some(self.hook(event.seq, h)?),
        };
        if let Some(record) = record {
            sink.record(record)?;
        }
        Ok(())
    }

    pub fn finish(mut self, sink: &dyn AuditSink) -> (ContainerState, ReplaySummary) {
        self.summary.dropped_records = sink.dropped();
        (self.state, self.summary)
    }

    fn policy_name(&self, container: &Container) -> Option<String> {
        self.store.meta(container.policy).map(|m| m.name.clone())
    }

    fn hook(&mut self, seq: u64, event: &HookEvent) -> Result<AuditRecord, TraceError> {
        let pid = event.pid();
        if let Some(&killed_at) = self.killed.get(&pid) {
            self.summary.post_kill_events += 1;
            self.summary.unconfined += 1;
            return Ok(AuditRecord {
                seq,
                container_id: None,
                policy: None,
                event: event.to_string(),
                decision: AuditDecision::Unconfined,
                reason: format!("warning: pid {pid} was killed at seq {killed_at}"),
                taint_transition: false,
            });
        }

        let verdict = decide(event, &self.state, self.store)?;
        let container = self.state.container_of(pid);
        let container_id = container.map(|c| c.id);
        let policy = container.and_then(|c| self.policy_name(c));

        let taint_transition = match &verdict.taint {
            Some(t) => self.state.taint(t.container).map_err(EngineError::from)?,
            None => false,
        };
        if taint_transition {
            self.summary.taint_transitions += 1;
        }

        let mut reason = verdict.explain();
        match verdict.decision {
            Decision::Allow(_) => self.summary.allows += 1,
            Decision::Deny(_) => self.summary.denies += 1,
            Decision::Unconfined => self.summary.unconfined += 1,
            Decision::Kill(_) => {
                self.summary.kills += 1;
                self.killed.insert(pid, seq);
                if let ExitOutcome::Removed { container } = self.state.on_exit(pid) {
                    self.summary.containers_removed += 1;
                    reason.push_str(&format!("; container {container} removed"));
                }
            }
        }
        Ok(AuditRecord {
            seq,
            container_id,
            policy,
            event: event.to_string(),
            decision: verdict.decision.kind().into(),
            reason,
            taint_transition,
        })
    }

    fn lifecycle(&mut self, seq: u64, record: &Lifecycle) -> Option<AuditRecord> {
        let summary = lifecycle_summary(record);
        let error = |this: &mut Self, reason: String| {
            this.summary.lifecycle_errors += 1;
            Some(AuditRecord {
                seq,
                container_id: None,
                policy: None,
                event: summary.clone(),
                decision: AuditDecision::LifecycleError,
                reason,
                taint_transition: false,
            })
        };

        let actor = record.actor();
        if let Some(&killed_at) = self.killed.get(&actor) {
            // The exit of a killed process is the kill itself, already accounted for.
            if let Lifecycle::Exit { .. } = record {
                self.killed.remove(&actor);
                return None;
            }
            return error(self, format!("pid {actor} was killed at seq {killed_at}"));
        }

        match record {
            Lifecycle::Confine {
                pid,
                policy_name,
                ns_info,
            } => match self.state.confine(*pid, policy_name, *ns_info, self.store) {
                Ok(c) => {
                    let reason = format!(
                        "confined pid {pid} under {policy_name}{}",
                        if c.tainted { ", tainted from start" } else { "" }
                    );
                    let id = c.id;
                    self.summary.containers_created += 1;
                    Some(AuditRecord {
                        seq,
                        container_id: Some(id),
                        policy: Some(policy_name.clone()),
                        event: summary,
                        decision: AuditDecision::ContainerCreated,
                        reason,
                        taint_transition: false,
                    })
                }
                Err(e) => error(self, e.to_string()),
            },
            Lifecycle::Fork { parent, child } => {
                if self.killed.contains_key(child) {
                    return error(self, format!("pid {child} was killed and cannot reappear"));
                }
                match self.state.on_fork(*parent, *child) {
                    Ok(_) => None,
                    Err(e) => error(self, e.to_string()),
                }
            }
            Lifecycle::Exit { pid } => match self.state.on_exit(*pid) {
                ExitOutcome::Removed { container } => {
                    self.summary.containers_removed += 1;
                    Some(AuditRecord {
                        seq,
                        container_id: Some(container),
                        policy: None,
                        event: summary,
                        decision: AuditDecision::ContainerRemoved,
                        reason: format!("last member pid {pid} exited"),
                        taint_transition: false,
                    })
                }
                ExitOutcome::Left { .. } | ExitOutcome::Untracked => None,
            },
        }
    }
}

fn lifecycle_summary(record: &Lifecycle) -> String {
    match record {
        Lifecycle::Confine {
            pid,
            policy_name,
            ns_info,
        } => format!(
            "confine pid={pid} policy={policy_name} mount_ns={} ipc_ns={}",
            ns_info.mount_ns.0, ns_info.ipc_ns.0
        ),
        Lifecycle::Fork { parent, child } => format!("fork parent={parent} child={child}"),
        Lifecycle::Exit { pid } => format!("exit pid={pid}"),
    }
}

/// Outcome of [`replay`].
#[derive(Debug, Clone)]
pub struct Replay {
    pub state: ContainerState,
    pub audit: Vec<AuditRecord>,
    pub summary: ReplaySummary,
}

/// Replay a whole trace into an unbounded in-memory audit log.
pub fn replay<'a, I>(
    trace: I,
    store: &CompiledPolicyStore,
    state: ContainerState,
) -> Result<Replay, TraceError>
where
    I: IntoIterator<Item = &'a TraceEvent>,
{
    let mut audit = Vec::new();
    let (state, summary) = replay_into(trace, store, state, &mut audit)?;
    Ok(Replay {
        state,
        audit,
        summary,
    })
}

pub fn replay_into<'a, I>(
    trace: I,
    store: &CompiledPolicyStore,
    state: ContainerState,
    sink: &mut dyn AuditSink,
) -> Result<(ContainerState, ReplaySummary), TraceError>
where
    I: IntoIterator<Item = &'a TraceEvent>,
{
    let mut replayer = Replayer::new(store, state)?;
    for event in trace {
        replayer.apply(event, sink)?;
    }
    Ok(replayer.finish(sink))
}
