use super::decision::{AllowReason, Decision, DenyReason, RuleCategory, RuleRef};
use super::event::FsKind;
use super::{Grant, RuleMatches};
use crate::compiler::{AccessEntry, CompiledPolicyStore};
use crate::policy::{AccessSet, DeviceKind};
use crate::state::{Container, NsId, Pid};

/// Filesystem decision component.
///
/// Rule targets are ranked file > subdir (nearest root first) > filesystem
/// (longest mountpoint first) > device. Any matching deny or taint flag
/// counts; for allow only the most specific target carrying allow flags is
/// consulted, and it must cover every requested flag.
pub fn decide_file(
    path: &str,
    requested: AccessSet,
    fs_kind: FsKind,
    owner_mount_ns: Option<NsId>,
    proc_subject_pid: Option<Pid>,
    container: &Container,
    store: &CompiledPolicyStore,
) -> Result<RuleMatches, Decision> {
    let id = container.policy;
    let device = DeviceKind::of_path(path);
    let device_name = device.map(DeviceKind::name).unwrap_or("");

    let targets = store
        .file(id, path)
        .map(|e| (RuleCategory::File, path, e))
        .into_iter()
        .chain(store.subdirs_containing(id, path).map(|(r, e)| (RuleCategory::Subdir, r, e)))
        .chain(
            store
                .filesystems_containing(id, path)
                .map(|(m, e)| (RuleCategory::Filesystem, m, e)),
        )
        .chain(
            device
                .and_then(|k| store.device(id, k))
                .map(|e| (RuleCategory::Device, device_name, e)),
        );

    let mut deny = None;
    let mut taint = None;
    let mut allow: Option<(RuleCategory, &str, &AccessEntry)> = None;
    for (category, target, entry) in targets {
        if deny.is_none() && entry.deny.intersects(requested) {
            deny = Some(rule_ref(category, target, entry.deny));
        }
        if taint.is_none() && entry.taint.intersects(requested) {
            taint = Some(rule_ref(category, target, entry.taint));
        }
        if allow.is_none() && !entry.allow.is_empty() {
            allow = Some((category, target, entry));
        }
    }

    let explicit_grant = allow.filter(|(_, _, e)| e.allow.contains(requested));
    let explicit_file_or_subdir = matches!(
        explicit_grant,
        Some((RuleCategory::File | RuleCategory::Subdir, _, _))
    );

    let implicit = match fs_kind {
        FsKind::Procfs => {
            if proc_subject_pid.is_some_and(|p| container.pids.contains(&p)) {
                Some(AllowReason::OwnProcfs)
            } else if explicit_file_or_subdir {
                None
            } else {
                return Err(Decision::Deny(DenyReason::ForeignProcfs));
            }
        }
        FsKind::Sysfs => {
            if !explicit_file_or_subdir {
                return Err(Decision::Deny(DenyReason::Sysfs));
            }
            None
        }
        FsKind::Overlayfs if owner_mount_ns == Some(container.mount_ns) => {
            Some(AllowReason::OwnOverlay)
        }
        _ => None,
    };

    let grant = match (implicit, explicit_grant, allow) {
        (Some(reason), _, _) => Grant::Allowed(reason),
        (None, Some((c, t, e)), _) => Grant::Allowed(AllowReason::Rule(rule_ref(c, t, e.allow))),
        (None, None, Some((c, t, e))) => Grant::Unmatched {
            partial: Some((rule_ref(c, t, e.allow), requested)),
        },
        (None, None, None) => Grant::Unmatched { partial: None },
    };
    Ok(RuleMatches { deny, taint, grant })
}

fn rule_ref(category: RuleCategory, target: &str, grant: AccessSet) -> RuleRef {
    RuleRef {
        category,
        target: target.to_string(),
        grant: grant.to_string(),
    }
}
