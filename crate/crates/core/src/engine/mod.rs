//! The reference monitor: one [`HookEvent`] in, one [`Decision`] out.
//!
//! [`decide`] is pure. When an event trips a taint rule the returned
//! [`Verdict`] carries a [`TaintTrigger`] and the caller applies it to the
//! container state; [`Engine::handle`] does both.
//!
//! Evaluation order:
//!
//! 1. pid not in any container: `Unconfined`
//! 2. hardening (bpf, keyring, ptrace, mount, lockdown, pinned objects,
//!    namespace switches, privilege escalation), regardless of policy
//! 3. implicit filesystem and address-family policy
//! 4. taint rules: an untainted container that matches one is tainted and
//!    the event is judged as tainted
//! 5. explicit deny rules
//! 6. untainted containers: allow
//! 7. capability mask, ipc allowlists
//! 8. explicit allow rules, then the policy's default mode

mod decision;
mod event;
mod file;
mod hardening;
mod ipc;
mod network;

use std::sync::Arc;

use thiserror::Error;

use crate::compiler::{CompiledPolicyStore, PolicyId};
use crate::policy::{AccessSet, DefaultMode};
use crate::state::{Container, ContainerState, StateError};

pub use decision::{
    AllowReason, Decision, DecisionKind, DenyReason, HardeningTarget, KillReason, RuleCategory,
    RuleRef, TaintTrigger, Verdict,
};
pub use event::{
    FsKind, HardeningKind, HookEvent, IpcMechanism, PrivLevel, SocketFamily, SocketOpKind,
};
pub use file::decide_file;
pub use hardening::check_hardening;
pub use ipc::decide_ipc;
pub use network::decide_network;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("policy store is not sealed")]
    StoreNotSealed,
    #[error("container references policy {0}, which is not in the store")]
    UnknownPolicy(PolicyId),
    #[error(transparent)]
    State(#[from] StateError),
}

/// What the explicit policy says about one event, before taint state and
/// default mode are taken into account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMatches {
    pub deny: Option<RuleRef>,
    pub taint: Option<RuleRef>,
    pub grant: Grant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Grant {
    Allowed(AllowReason),
    /// Denied whatever the default mode (capability mask, ipc allowlists).
    Refused(DenyReason),
    /// Nothing grants the event; the default mode decides.
    Unmatched {
        partial: Option<(RuleRef, AccessSet)>,
    },
}

impl RuleMatches {
    fn granted(reason: AllowReason) -> Self {
        RuleMatches {
            deny: None,
            taint: None,
            grant: Grant::Allowed(reason),
        }
    }
}

pub fn decide(
    event: &HookEvent,
    state: &ContainerState,
    store: &CompiledPolicyStore,
) -> Result<Verdict, EngineError> {
    if !store.is_sealed() {
        return Err(EngineError::StoreNotSealed);
    }
    let Some(container) = state.container_of(event.pid()) else {
        return Ok(Verdict::new(Decision::Unconfined));
    };
    let meta = store
        .meta(container.policy)
        .ok_or(EngineError::UnknownPolicy(container.policy))?;

    if let Some(decision) = check_hardening(event, container) {
        return Ok(Verdict::new(decision));
    }

    let matches = match match_rules(event, container, state, store) {
        Ok(m) => m,
        Err(implicit_deny) => return Ok(Verdict::new(implicit_deny)),
    };

    let mut tainted = container.tainted;
    let mut taint = None;
    if !tainted {
        if let Some(rule) = matches.taint {
            tainted = true;
            taint = Some(TaintTrigger {
                container: container.id,
                rule,
            });
        }
    }

    let decision = if let Some(rule) = matches.deny {
        Decision::Deny(DenyReason::ExplicitDeny(rule))
    } else if !tainted {
        Decision::Allow(AllowReason::UntaintedExemption)
    } else {
        match matches.grant {
            Grant::Allowed(reason) => Decision::Allow(reason),
            Grant::Refused(reason) => Decision::Deny(reason),
            Grant::Unmatched { partial } => match meta.default {
                DefaultMode::Allow => Decision::Allow(AllowReason::DefaultAllow),
                DefaultMode::Deny => Decision::Deny(DenyReason::DefaultDeny { partial }),
            },
        }
    };
    Ok(Verdict { decision, taint })
}

/// Explicit-policy view of an event. `Err` carries an implicit denial that
/// ends evaluation before taint rules are consulted.
fn match_rules(
    event: &HookEvent,
    container: &Container,
    state: &ContainerState,
    store: &CompiledPolicyStore,
) -> Result<RuleMatches, Decision> {
    match event {
        HookEvent::FileAccess {
            path,
            requested,
            fs_kind,
            owner_mount_ns,
            proc_subject_pid,
            ..
        } => decide_file(
            path,
            *requested,
            *fs_kind,
            *owner_mount_ns,
            *proc_subject_pid,
            container,
            store,
        ),
        HookEvent::SocketOp { family, op, .. } => decide_network(*family, *op, container, store),
        HookEvent::IpcOp { peer_pid, .. } => Ok(decide_ipc(container, *peer_pid, state, store)),
        HookEvent::CapabilityUse {
            capability,
            possessed,
            ..
        } => {
            let entry = store.capability(container.policy, *capability);
            let rule = |grant: bool| {
                grant.then(|| RuleRef {
                    category: RuleCategory::Capability,
                    target: capability.name().to_string(),
                    grant: String::new(),
                })
            };
            let allowed = entry.is_some_and(|e| e.allow);
            Ok(RuleMatches {
                deny: rule(entry.is_some_and(|e| e.deny)),
                taint: rule(entry.is_some_and(|e| e.taint)),
                grant: match (allowed, *possessed) {
                    (true, true) => Grant::Allowed(AllowReason::Rule(rule(true).unwrap())),
                    (true, false) => Grant::Refused(DenyReason::CapabilityNotPossessed(*capability)),
                    (false, _) => Grant::Refused(DenyReason::CapabilityMask(*capability)),
                },
            })
        }
        // Escalations were killed by the hardening stage.
        HookEvent::CommitCreds { .. } => Ok(RuleMatches::granted(AllowReason::NoEscalation)),
        HookEvent::SwitchNamespaces { .. } | HookEvent::HardeningOp { .. } => {
            unreachable!("always decided by the hardening stage")
        }
    }
}

/// Single-writer wrapper that applies taint transitions as it decides.
#[derive(Debug, Clone)]
pub struct Engine {
    store: Arc<CompiledPolicyStore>,
    state: ContainerState,
}

impl Engine {
    pub fn new(store: Arc<CompiledPolicyStore>, state: ContainerState) -> Self {
        Engine { store, state }
    }

    pub fn handle(&mut self, event: &HookEvent) -> Result<Verdict, EngineError> {
        let verdict = decide(event, &self.state, &self.store)?;
        if let Some(t) = &verdict.taint {
            self.state.taint(t.container)?;
        }
        Ok(verdict)
    }

    pub fn store(&self) -> &CompiledPolicyStore {
        &self.store
    }

    pub fn shared_store(&self) -> Arc<CompiledPolicyStore> {
        Arc::clone(&self.store)
    }

    pub fn state(&self) -> &ContainerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ContainerState {
        &mut self.state
    }

    pub fn into_state(self) -> ContainerState {
        self.state
    }
}
