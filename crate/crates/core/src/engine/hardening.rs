use super::decision::{Decision, DenyReason, HardeningTarget, KillReason};
use super::event::{FsKind, HookEvent, PrivLevel};
use crate::state::Container;

/// Implicit protections that hold for every confined pid under every policy.
/// `None` means the event is not a hardening concern and evaluation continues.
pub fn check_hardening(event: &HookEvent, _container: &Container) -> Option<Decision> {
    let deny = |t| Some(Decision::Deny(DenyReason::Hardening(t)));
    match event {
        HookEvent::HardeningOp { op, .. } => deny(HardeningTarget::Op(*op)),
        HookEvent::SwitchNamespaces { .. } => deny(HardeningTarget::SwitchNamespaces),
        HookEvent::CommitCreds {
            old_priv, new_priv, ..
        } if PrivLevel::is_escalation(old_priv, new_priv) => {
            Some(Decision::Kill(KillReason::PrivilegeEscalation {
                old_uid: old_priv.uid,
                new_uid: new_priv.uid,
            }))
        }
        // Pinned maps and programs belong to the daemon.
        HookEvent::FileAccess {
            fs_kind: FsKind::Bpffs,
            ..
        } => deny(HardeningTarget::Bpffs),
        _ => None,
    }
}
