use super::decision::{AllowReason, DenyReason, RuleCategory, RuleRef};
use super::{Grant, RuleMatches};
use crate::compiler::CompiledPolicyStore;
use crate::state::{Container, ContainerState, Pid};

/// IPC decision component.
///
/// Processes of one container may always talk to each other. Across
/// containers both policies must allowlist each other and both containers
/// must share an IPC namespace. IPC with unconfined processes is refused.
pub fn decide_ipc(
    container: &Container,
    peer_pid: Pid,
    state: &ContainerState,
    store: &CompiledPolicyStore,
) -> RuleMatches {
    let Some(peer) = state.container_of(peer_pid) else {
        return RuleMatches {
            deny: None,
            taint: None,
            grant: Grant::Refused(DenyReason::IpcUnconfinedPeer),
        };
    };
    if peer.id == container.id {
        return RuleMatches::granted(AllowReason::SameContainerIpc);
    }

    let peer_policy = store
        .meta(peer.policy)
        .map(|m| m.name.clone())
        .unwrap_or_else(|| peer.policy.to_string());
    let ours = store.ipc(container.policy, peer.policy).copied().unwrap_or_default();
    let theirs = store.ipc(peer.policy, container.policy).copied().unwrap_or_default();
    let rule = |flag: bool| {
        flag.then(|| RuleRef {
            category: RuleCategory::Ipc,
            target: peer_policy.clone(),
            grant: String::new(),
        })
    };

    let grant = if !(ours.allow && theirs.allow) {
        Grant::Refused(DenyReason::IpcNotMutual {
            peer_policy: peer_policy.clone(),
        })
    } else if peer.ipc_ns != container.ipc_ns {
        Grant::Refused(DenyReason::IpcNamespaceMismatch {
            peer_policy: peer_policy.clone(),
        })
    } else {
        Grant::Allowed(AllowReason::Rule(rule(true).unwrap()))
    };
    RuleMatches {
        deny: rule(ours.deny),
        taint: rule(ours.taint),
        grant,
    }
}
