use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::policy::path::normalize_event_path;
use crate::policy::{AccessSet, Capability, CapabilitySet};
use crate::state::{NsId, Pid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsKind {
    Regular,
    Procfs,
    Sysfs,
    Overlayfs,
    Bpffs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocketFamily {
    Ipv4,
    Ipv6,
    Unix,
    /// Netlink, packet, and every other address family.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocketOpKind {
    Create,
    Bind,
    Listen,
    Accept,
    Connect,
    Send,
    Receive,
    Shutdown,
}

impl SocketOpKind {
    pub const ALL: [SocketOpKind; 8] = [
        SocketOpKind::Create,
        SocketOpKind::Bind,
        SocketOpKind::Listen,
        SocketOpKind::Accept,
        SocketOpKind::Connect,
        SocketOpKind::Send,
        SocketOpKind::Receive,
        SocketOpKind::Shutdown,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpcMechanism {
    UnixSocket,
    Signal,
    #[serde(rename = "sysv")]
    SysV,
    #[serde(rename = "shmem")]
    ShMem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardeningKind {
    BpfSyscall,
    Keyring,
    Ptrace,
    Mount,
    Lockdown,
    UnlinkPinnedObject,
}

impl HardeningKind {
    pub const ALL: [HardeningKind; 6] = [
        HardeningKind::BpfSyscall,
        HardeningKind::Keyring,
        HardeningKind::Ptrace,
        HardeningKind::Mount,
        HardeningKind::Lockdown,
        HardeningKind::UnlinkPinnedObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HardeningKind::BpfSyscall => "bpf",
            HardeningKind::Keyring => "keyring",
            HardeningKind::Ptrace => "ptrace",
            HardeningKind::Mount => "mount",
            HardeningKind::Lockdown => "lockdown",
            HardeningKind::UnlinkPinnedObject => "unlink pinned object",
        }
    }
}

/// Credentials before or after a `commit_creds` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivLevel {
    pub uid: u32,
    #[serde(default)]
    pub capability_set: CapabilitySet,
}

impl PrivLevel {
    /// Becoming root from non-root, or gaining any capability not held before.
    pub fn is_escalation(old: &PrivLevel, new: &PrivLevel) -> bool {
        (new.uid == 0 && old.uid != 0) || !new.capability_set.is_subset(old.capability_set)
    }
}

/// One mediated kernel event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HookEvent {
    FileAccess {
        pid: Pid,
        #[serde(deserialize_with = "event_path")]
        path: String,
        requested: AccessSet,
        fs_kind: FsKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        owner_mount_ns: Option<NsId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        proc_subject_pid: Option<Pid>,
    },
    SocketOp {
        pid: Pid,
        family: SocketFamily,
        op: SocketOpKind,
    },
    IpcOp {
        pid: Pid,
        peer_pid: Pid,
        mechanism: IpcMechanism,
    },
    CapabilityUse {
        pid: Pid,
        capability: Capability,
        possessed: bool,
    },
    CommitCreds {
        pid: Pid,
        old_priv: PrivLevel,
        new_priv: PrivLevel,
    },
    SwitchNamespaces {
        pid: Pid,
    },
    HardeningOp {
        pid: Pid,
        op: HardeningKind,
    },
}

fn event_path<'de, D: Deserializer<'de>>(deserializer: D) -> Result<String, D::Error> {
    let raw = String::deserialize(deserializer)?;
    normalize_event_path(&raw).map_err(serde::de::Error::custom)
}

impl HookEvent {
    pub fn pid(&self) -> Pid {
        match self {
            HookEvent::FileAccess { pid, .. }
            | HookEvent::SocketOp { pid, .. }
            | HookEvent::IpcOp { pid, .. }
            | HookEvent::CapabilityUse { pid, .. }
            | HookEvent::CommitCreds { pid, .. }
            | HookEvent::SwitchNamespaces { pid }
            | HookEvent::HardeningOp { pid, .. } => *pid,
        }
    }

    pub fn with_pid(mut self, new_pid: Pid) -> Self {
        match &mut self {
            HookEvent::FileAccess { pid, .. }
            | HookEvent::SocketOp { pid, .. }
            | HookEvent::IpcOp { pid, .. }
            | HookEvent::CapabilityUse { pid, .. }
            | HookEvent::CommitCreds { pid, .. }
            | HookEvent::SwitchNamespaces { pid }
            | HookEvent::HardeningOp { pid, .. } => *pid = new_pid,
        }
        self
    }

    /// A plain file access with no procfs/overlay metadata.
    pub fn file(pid: Pid, path: &str, requested: AccessSet) -> Self {
        HookEvent::FileAccess {
            pid,
            path: normalize_event_path(path).expect("absolute path"),
            requested,
            fs_kind: FsKind::Regular,
            owner_mount_ns: None,
            proc_subject_pid: None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            HookEvent::FileAccess { .. } => "file_access",
            HookEvent::SocketOp { .. } => "socket_op",
            HookEvent::IpcOp { .. } => "ipc_op",
            HookEvent::CapabilityUse { .. } => "capability_use",
            HookEvent::CommitCreds { .. } => "commit_creds",
            HookEvent::SwitchNamespaces { .. } => "switch_namespaces",
            HookEvent::HardeningOp { .. } => "hardening_op",
        }
    }
}

fn snake<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::from("?"),
    }
}

/// One-line summary used in audit records.
impl fmt::Display for HookEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} pid={}", self.kind_name(), self.pid())?;
        match self {
            HookEvent::FileAccess {
                path,
                requested,
                fs_kind,
                owner_mount_ns,
                proc_subject_pid,
                ..
            } => {
                write!(f, " path={path} requested={requested} fs={}", snake(fs_kind))?;
                if let Some(ns) = owner_mount_ns {
                    write!(f, " owner_mount_ns={}", ns.0)?;
                }
                if let Some(p) = proc_subject_pid {
                    write!(f, " proc_subject_pid={p}")?;
                }
                Ok(())
            }
            HookEvent::SocketOp { family, op, .. } => {
                write!(f, " family={} op={}", snake(family), snake(op))
            }
            HookEvent::IpcOp {
                peer_pid, mechanism, ..
            } => write!(f, " peer_pid={peer_pid} mechanism={}", snake(mechanism)),
            HookEvent::CapabilityUse {
                capability,
                possessed,
                ..
            } => write!(f, " capability={capability} possessed={possessed}"),
            HookEvent::CommitCreds {
                old_priv, new_priv, ..
            } => write!(f, " uid={}->{}", old_priv.uid, new_priv.uid),
            HookEvent::SwitchNamespaces { .. } => Ok(()),
            HookEvent::HardeningOp { op, .. } => write!(f, " op={}", snake(op)),
        }
    }
}
