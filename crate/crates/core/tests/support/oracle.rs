//! A deliberately naive reference interpreter. It walks raw
//! `PolicyDocument` rule lists on every query and shares no code with the
//! compiler or the engine, so agreement between the two is evidence that the
//! compiled maps encode the documents faithfully.

use std::collections::BTreeMap;

use bpfcontain_core::engine::{DecisionKind, FsKind, HookEvent, SocketFamily, SocketOpKind};
use bpfcontain_core::policy::{
    AccessSet, Capability, DefaultMode, DeviceKind, NetworkCategory, PolicyDocument, Rule,
};

#[derive(Debug, Clone)]
pub struct OracleContainer {
    pub id: u64,
    pub policy: String,
    pub tainted: bool,
    pub pids: Vec<u32>,
    pub mount_ns: u64,
    pub ipc_ns: u64,
}

/// The oracle's view of the process table.
#[derive(Debug, Clone, Default)]
pub struct World {
    pub containers: Vec<OracleContainer>,
    next_id: u64,
}

impl World {
    pub fn confine(&mut self, pid: u32, policy: &str, tainted: bool, mount_ns: u64, ipc_ns: u64) {
        self.next_id += 1;
        let id = self.next_id;
        self.containers.push(OracleContainer {
            id,
            policy: policy.to_string(),
            tainted,
            pids: vec![pid],
            mount_ns,
            ipc_ns,
        });
    }

    pub fn fork(&mut self, parent: u32, child: u32) {
        if let Some(c) = self.containers.iter_mut().find(|c| c.pids.contains(&parent)) {
            c.pids.push(child);
        }
    }

    pub fn exit(&mut self, pid: u32) {
        for c in &mut self.containers {
            c.pids.retain(|p| *p != pid);
        }
        self.containers.retain(|c| !c.pids.is_empty());
    }

    pub fn taint(&mut self, pid: u32) {
        if let Some(c) = self.containers.iter_mut().find(|c| c.pids.contains(&pid)) {
            c.tainted = true;
        }
    }

    pub fn container_of(&self, pid: u32) -> Option<&OracleContainer> {
        self.containers.iter().find(|c| c.pids.contains(&pid))
    }
}

/// How the oracle classifies an event before the final decision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Classification {
    pub unconfined: bool,
    pub hardening: bool,
    pub implicit_deny: bool,
    pub deny_match: bool,
    pub taint_match: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub kind: DecisionKind,
    /// The event moves an untainted container to tainted.
    pub taints: bool,
    pub class: Classification,
}

enum Grant {
    Allowed,
    Refused,
    Unmatched,
}

fn doc<'a>(docs: &'a [PolicyDocument], name: &str) -> &'a PolicyDocument {
    docs.iter()
        .find(|d| d.name == name)
        .unwrap_or_else(|| panic!("oracle: no policy named {name}"))
}

fn lists(d: &PolicyDocument) -> [&[Rule]; 3] {
    [&d.allow, &d.deny, &d.taint]
}

const ALLOW: usize = 0;
const DENY: usize = 1;
const TAINT: usize = 2;

fn depth(path: &str) -> usize {
    path.split('/').filter(|c| !c.is_empty()).count()
}

fn is_within(root: &str, path: &str) -> bool {
    root == "/" || path == root || path.starts_with(&format!("{root}/"))
}

fn device_of(path: &str) -> Option<DeviceKind> {
    let name = path.strip_prefix("/dev/")?;
    if name == "random" || name == "urandom" {
        return Some(DeviceKind::Random);
    }
    if name == "null" {
        return Some(DeviceKind::Null);
    }
    if name == "zero" {
        return Some(DeviceKind::Zero);
    }
    if name == "console" || (name.starts_with("tty") && !name.contains('/')) {
        return Some(DeviceKind::Tty);
    }
    let pts = name.strip_prefix("pts/")?;
    (!pts.is_empty() && !pts.contains('/')).then_some(DeviceKind::Tty)
}

/// Rank of a rule target for `path`, lower is more specific, plus a label
/// naming the target. `None` if the rule does not cover `path`.
fn file_target(rule: &Rule, path: &str) -> Option<((u8, usize, String), AccessSet)> {
    // Deeper roots sort first within a rank.
    let deeper_first = |p: &str| usize::MAX - depth(p);
    match rule {
        Rule::File { path: p, access } if p == path => Some(((0, 0, p.clone()), *access)),
        Rule::Subdir { path: root, access }
            if is_within(root, path) && depth(path) - depth(root) <= 9 =>
        {
            Some(((1, deeper_first(root), root.clone()), *access))
        }
        Rule::Filesystem { mountpoint, access } if is_within(mountpoint, path) => {
            Some(((2, deeper_first(mountpoint), mountpoint.clone()), *access))
        }
        Rule::Device { kind, access } if device_of(path) == Some(*kind) => {
            Some(((3, 0, kind.name().to_string()), *access))
        }
        Rule::Tty { access } if device_of(path) == Some(DeviceKind::Tty) => {
            Some(((3, 0, "tty".to_string()), *access))
        }
        _ => None,
    }
}

fn category_of(op: SocketOpKind) -> Option<NetworkCategory> {
    match op {
        SocketOpKind::Connect => Some(NetworkCategory::Client),
        SocketOpKind::Bind | SocketOpKind::Listen | SocketOpKind::Accept | SocketOpKind::Shutdown => {
            Some(NetworkCategory::Server)
        }
        SocketOpKind::Send => Some(NetworkCategory::Send),
        SocketOpKind::Receive => Some(NetworkCategory::Receive),
        SocketOpKind::Create => None,
    }
}

fn has_cap_rule(rules: &[Rule], cap: Capability) -> bool {
    rules
        .iter()
        .any(|r| matches!(r, Rule::Capability { capability } if *capability == cap))
}

fn has_ipc_rule(rules: &[Rule], peer: &str) -> bool {
    rules.iter().any(|r| matches!(r, Rule::Ipc { peer: p } if p == peer))
}

/// (deny matched, taint matched, grant), or `None` for an implicit denial.
fn explicit(
    docs: &[PolicyDocument],
    world: &World,
    c: &OracleContainer,
    d: &PolicyDocument,
    event: &HookEvent,
) -> Option<(bool, bool, Grant)> {
    let l = lists(d);
    match event {
        HookEvent::FileAccess {
            path,
            requested,
            fs_kind,
            owner_mount_ns,
            proc_subject_pid,
            ..
        } => {
            let mut targets: BTreeMap<(u8, usize, String), [AccessSet; 3]> = BTreeMap::new();
            for (i, rules) in l.iter().enumerate() {
                for rule in rules.iter() {
                    if let Some((key, access)) = file_target(rule, path) {
                        let slot = &mut targets.entry(key).or_insert([AccessSet::EMPTY; 3])[i];
                        *slot |= access;
                    }
                }
            }
            let deny = targets.values().any(|t| t[DENY].intersects(*requested));
            let taint = targets.values().any(|t| t[TAINT].intersects(*requested));
            let best = targets.iter().find(|(_, t)| !t[ALLOW].is_empty());
            let covered = best.filter(|(_, t)| t[ALLOW].contains(*requested));
            let file_or_subdir = covered.is_some_and(|((rank, _, _), _)| *rank <= 1);

            let mut implicit_grant = false;
            match fs_kind {
                FsKind::Procfs => {
                    if proc_subject_pid.is_some_and(|p| c.pids.contains(&p.0)) {
                        implicit_grant = true;
                    } else if !file_or_subdir {
                        return None;
                    }
                }
                FsKind::Sysfs if !file_or_subdir => return None,
                FsKind::Overlayfs if owner_mount_ns.is_some_and(|n| n.0 == c.mount_ns) => {
                    implicit_grant = true;
                }
                _ => {}
            }
            let grant = if implicit_grant || covered.is_some() {
                Grant::Allowed
            } else {
                Grant::Unmatched
            };
            Some((deny, taint, grant))
        }
        HookEvent::SocketOp { family, op, .. } => {
            match family {
                SocketFamily::Unix => return Some((false, false, Grant::Allowed)),
                SocketFamily::Other => return None,
                SocketFamily::Ipv4 | SocketFamily::Ipv6 => {}
            }
            let cats = |rules: &[Rule]| -> Vec<NetworkCategory> {
                rules
                    .iter()
                    .filter_map(|r| match r {
                        Rule::Network { categories } => Some(categories.iter().collect::<Vec<_>>()),
                        _ => None,
                    })
                    .flatten()
                    .collect()
            };
            let [allow, deny, taint] = l.map(cats);
            let hit = |set: &Vec<NetworkCategory>, create_needs_all: bool| match category_of(*op) {
                Some(cat) => set.contains(&cat),
                None if create_needs_all => NetworkCategory::ALL.iter().all(|c| set.contains(c)),
                None => !set.is_empty(),
            };
            let grant = if hit(&allow, false) { Grant::Allowed } else { Grant::Unmatched };
            Some((hit(&deny, true), hit(&taint, false), grant))
        }
        HookEvent::IpcOp { peer_pid, .. } => {
            let Some(peer) = world.container_of(peer_pid.0) else {
                return Some((false, false, Grant::Refused));
            };
            if peer.id == c.id {
                return Some((false, false, Grant::Allowed));
            }
            let peer_doc = doc(docs, &peer.policy);
            let mutual = has_ipc_rule(&d.allow, &peer.policy) && has_ipc_rule(&peer_doc.allow, &d.name);
            let grant = if mutual && peer.ipc_ns == c.ipc_ns {
                Grant::Allowed
            } else {
                Grant::Refused
            };
            Some((
                has_ipc_rule(&d.deny, &peer.policy),
                has_ipc_rule(&d.taint, &peer.policy),
                grant,
            ))
        }
        HookEvent::CapabilityUse {
            capability,
            possessed,
            ..
        } => {
            let grant = if has_cap_rule(&d.allow, *capability) && *possessed {
                Grant::Allowed
            } else {
                Grant::Refused
            };
            Some((
                has_cap_rule(&d.deny, *capability),
                has_cap_rule(&d.taint, *capability),
                grant,
            ))
        }
        HookEvent::CommitCreds { .. } => Some((false, false, Grant::Allowed)),
        HookEvent::SwitchNamespaces { .. } | HookEvent::HardeningOp { .. } => {
            unreachable!("hardening handled first")
        }
    }
}

pub fn decide(docs: &[PolicyDocument], world: &World, event: &HookEvent) -> Outcome {
    let mut class = Classification::default();
    let outcome = |kind, taints, class| Outcome { kind, taints, class };

    let Some(c) = world.container_of(event.pid().0) else {
        class.unconfined = true;
        return outcome(DecisionKind::Unconfined, false, class);
    };
    let d = doc(docs, &c.policy);

    match event {
        HookEvent::HardeningOp { .. } | HookEvent::SwitchNamespaces { .. } => {
            class.hardening = true;
            return outcome(DecisionKind::Deny, false, class);
        }
        HookEvent::FileAccess {
            fs_kind: FsKind::Bpffs,
            ..
        } => {
            class.hardening = true;
            return outcome(DecisionKind::Deny, false, class);
        }
        HookEvent::CommitCreds {
            old_priv, new_priv, ..
        } => {
            let gains_root = new_priv.uid == 0 && old_priv.uid != 0;
            let gains_cap = new_priv
                .capability_set
                .iter()
                .any(|cap| !old_priv.capability_set.contains(cap));
            if gains_root || gains_cap {
                class.hardening = true;
                return outcome(DecisionKind::Kill, false, class);
            }
        }
        _ => {}
    }

    let Some((deny, taint, grant)) = explicit(docs, world, c, d, event) else {
        class.implicit_deny = true;
        return outcome(DecisionKind::Deny, false, class);
    };
    class.deny_match = deny;
    class.taint_match = taint;

    let taints = !c.tainted && taint;
    let tainted = c.tainted || taint;
    let kind = if deny {
        DecisionKind::Deny
    } else if !tainted {
        DecisionKind::Allow
    } else {
        match grant {
            Grant::Allowed => DecisionKind::Allow,
            Grant::Refused => DecisionKind::Deny,
            Grant::Unmatched => match d.default {
                DefaultMode::Allow => DecisionKind::Allow,
                DefaultMode::Deny => DecisionKind::Deny,
            },
        }
    };
    outcome(kind, taints, class)
}
