use super::decision::{AllowReason, Decision, DenyReason, RuleCategory, RuleRef};
use super::event::{SocketFamily, SocketOpKind};
use super::{Grant, RuleMatches};
use crate::compiler::CompiledPolicyStore;
use crate::policy::{NetworkCategory, NetworkSet};
use crate::state::Container;

/// The category a socket operation belongs to. `Create` belongs to none:
/// any granted category permits creating a socket.
pub fn op_category(op: SocketOpKind) -> Option<NetworkCategory> {
    match op {
        SocketOpKind::Create => None,
        SocketOpKind::Connect => Some(NetworkCategory::Client),
        SocketOpKind::Bind
        | SocketOpKind::Listen
        | SocketOpKind::Accept
        | SocketOpKind::Shutdown => Some(NetworkCategory::Server),
        SocketOpKind::Send => Some(NetworkCategory::Send),
        SocketOpKind::Receive => Some(NetworkCategory::Receive),
    }
}

/// Network decision component for IPv4/IPv6 sockets. Unix sockets are
/// mediated by ipc policy; every other family is implicitly denied.
pub fn decide_network(
    family: SocketFamily,
    op: SocketOpKind,
    container: &Container,
    store: &CompiledPolicyStore,
) -> Result<RuleMatches, Decision> {
    match family {
        SocketFamily::Ipv4 | SocketFamily::Ipv6 => {}
        SocketFamily::Unix => return Ok(RuleMatches::granted(AllowReason::UnixSocket)),
        SocketFamily::Other => return Err(Decision::Deny(DenyReason::AddressFamily)),
    }
    let entry = store.network(container.policy).copied().unwrap_or_default();
    let category = op_category(op);
    let grants = |set: NetworkSet| match category {
        Some(c) => set.contains(c),
        None => !set.is_empty(),
    };
    // Creation is only denied when every category is.
    let denies = |set: NetworkSet| match category {
        Some(c) => set.contains(c),
        None => set.is_full(),
    };
    let rule = |set: NetworkSet| RuleRef {
        category: RuleCategory::Network,
        target: String::new(),
        grant: set.to_string(),
    };

    Ok(RuleMatches {
        deny: denies(entry.deny).then(|| rule(entry.deny)),
        taint: grants(entry.taint).then(|| rule(entry.taint)),
        grant: if grants(entry.allow) {
            Grant::Allowed(AllowReason::Rule(rule(entry.allow)))
        } else {
            Grant::Unmatched { partial: None }
        },
    })
}
