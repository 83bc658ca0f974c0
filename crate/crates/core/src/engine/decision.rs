use std::fmt;

use serde::Serialize;

use super::event::HardeningKind;
use crate::policy::{AccessSet, Capability};
use crate::state::ContainerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCategory {
    File,
    Subdir,
    Filesystem,
    Device,
    Network,
    Ipc,
    Capability,
}

impl RuleCategory {
    pub fn name(self) -> &'static str {
        match self {
            RuleCategory::File => "file",
            RuleCategory::Subdir => "subdir",
            RuleCategory::Filesystem => "filesystem",
            RuleCategory::Device => "device",
            RuleCategory::Network => "network",
            RuleCategory::Ipc => "ipc",
            RuleCategory::Capability => "capability",
        }
    }
}

/// Which compiled rule produced a decision, e.g. `device rule tty rw`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleRef {
    pub category: RuleCategory,
    pub target: String,
    /// Access flags or network categories; empty for ipc and capability rules.
    pub grant: String,
}

impl RuleRef {
    /// Target and grant only, e.g. `tty r`.
    pub fn short(&self) -> String {
        match (self.target.is_empty(), self.grant.is_empty()) {
            (false, false) => format!("{} {}", self.target, self.grant),
            (false, true) => self.target.clone(),
            (true, _) => self.grant.clone(),
        }
    }
}

impl fmt::Display for RuleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rule {}", self.category.name(), self.short())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllowReason {
    Rule(RuleRef),
    /// The process reads its own container's procfs entries.
    OwnProcfs,
    /// The overlay filesystem belongs to the container's mount namespace.
    OwnOverlay,
    SameContainerIpc,
    UnixSocket,
    /// A credential change that grants nothing new.
    NoEscalation,
    UntaintedExemption,
    DefaultAllow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HardeningTarget {
    Op(HardeningKind),
    SwitchNamespaces,
    Bpffs,
}

impl fmt::Display for HardeningTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HardeningTarget::Op(op) => f.write_str(op.name()),
            HardeningTarget::SwitchNamespaces => f.write_str("switch namespaces"),
            HardeningTarget::Bpffs => f.write_str("bpf filesystem"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenyReason {
    Hardening(HardeningTarget),
    ForeignProcfs,
    Sysfs,
    AddressFamily,
    ExplicitDeny(RuleRef),
    CapabilityMask(Capability),
    CapabilityNotPossessed(Capability),
    IpcNotMutual { peer_policy: String },
    IpcNamespaceMismatch { peer_policy: String },
    IpcUnconfinedPeer,
    /// No grant applied. `partial` is the most specific rule that matched the
    /// target but did not cover every requested flag.
    DefaultDeny {
        partial: Option<(RuleRef, AccessSet)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KillReason {
    PrivilegeEscalation { old_uid: u32, new_uid: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Allow(AllowReason),
    Deny(DenyReason),
    Kill(KillReason),
    /// The pid belongs to no container.
    Unconfined,
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow(_))
    }

    pub fn is_deny(&self) -> bool {
        matches!(self, Decision::Deny(_))
    }

    pub fn kind(&self) -> DecisionKind {
        match self {
            Decision::Allow(_) => DecisionKind::Allow,
            Decision::Deny(_) => DecisionKind::Deny,
            Decision::Kill(_) => DecisionKind::Kill,
            Decision::Unconfined => DecisionKind::Unconfined,
        }
    }

    /// The reason text without the `Allow:` / `Deny:` prefix.
    pub fn reason(&self) -> String {
        match self {
            Decision::Allow(r) => match r {
                AllowReason::Rule(rule) => rule.to_string(),
                AllowReason::OwnProcfs => "implicit procfs, own process entry".into(),
                AllowReason::OwnOverlay => "implicit overlayfs, own mount namespace".into(),
                AllowReason::SameContainerIpc => "ipc within the same container".into(),
                AllowReason::UnixSocket => "unix socket, mediated as ipc".into(),
                AllowReason::NoEscalation => "credential change without escalation".into(),
                AllowReason::UntaintedExemption => "untainted container".into(),
                AllowReason::DefaultAllow => "default allow".into(),
            },
            Decision::Deny(r) => match r {
                DenyReason::Hardening(t) => format!("implicit hardening ({t})"),
                DenyReason::ForeignProcfs => "implicit procfs, foreign entry".into(),
                DenyReason::Sysfs => "implicit sysfs".into(),
                DenyReason::AddressFamily => "implicit network, address family not permitted".into(),
                DenyReason::ExplicitDeny(rule) => format!("deny {rule}"),
                DenyReason::CapabilityMask(c) => format!("capability mask, no rule for {c}"),
                DenyReason::CapabilityNotPossessed(c) => format!("capability {c} not possessed"),
                DenyReason::IpcNotMutual { peer_policy } => {
                    format!("ipc with `{peer_policy}` not allowlisted by both policies")
                }
                DenyReason::IpcNamespaceMismatch { peer_policy } => {
                    format!("ipc with `{peer_policy}` across ipc namespaces")
                }
                DenyReason::IpcUnconfinedPeer => "ipc with an unconfined process".into(),
                DenyReason::DefaultDeny { partial: None } => "default deny, no matching rule".into(),
                DenyReason::DefaultDeny {
                    partial: Some((rule, requested)),
                } => format!("default deny, requested {requested} not covered by {rule}"),
            },
            Decision::Kill(KillReason::PrivilegeEscalation { old_uid, new_uid }) => {
                format!("privilege escalation (uid {old_uid} -> {new_uid})")
            }
            Decision::Unconfined => "pid is not confined".into(),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind().label(), self.reason())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Allow,
    Deny,
    Kill,
    Unconfined,
}

impl DecisionKind {
    pub fn label(self) -> &'static str {
        match self {
            DecisionKind::Allow => "Allow",
            DecisionKind::Deny => "Deny",
            DecisionKind::Kill => "Kill",
            DecisionKind::Unconfined => "Unconfined",
        }
    }
}

/// The taint transition an event triggered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintTrigger {
    pub container: ContainerId,
    pub rule: RuleRef,
}

/// A decision plus the taint transition, if any, that the caller must apply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub decision: Decision,
    pub taint: Option<TaintTrigger>,
}

impl Verdict {
    pub fn new(decision: Decision) -> Self {
        Verdict {
            decision,
            taint: None,
        }
    }

    /// Human-readable explanation, e.g.
    /// `Allow: tainted by rule tty r, then device rule tty rw`.
    pub fn explain(&self) -> String {
        match &self.taint {
            Some(t) => format!(
                "{}: tainted by rule {}, then {}",
                self.decision.kind().label(),
                t.rule.short(),
                self.decision.reason()
            ),
            None => self.decision.to_string(),
        }
    }
}
