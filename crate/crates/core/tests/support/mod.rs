#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use bpfcontain_core::compiler::CompiledPolicyStore;
use bpfcontain_core::state::{ContainerState, Pid};

use gen::{ns, standard_peers, SUBJECT, SUBJECT_CHILD, SUBJECT_PID};
use oracle::World;

/// Build the standard world (see [`gen::standard_peers`]) in both the real
/// container state and the oracle's model.
pub fn standard_world(store: &CompiledPolicyStore, subject_tainted: bool) -> (ContainerState, World) {
    let mut state = ContainerState::default();
    let mut world = World::default();
    let (subject, _) = store.policy_by_name(SUBJECT).expect("subject policy loaded");
    state
        .confine_with(Pid(SUBJECT_PID), subject, subject_tainted, ns(1, 1))
        .unwrap();
    world.confine(SUBJECT_PID, SUBJECT, subject_tainted, 1, 1);
    state.on_fork(Pid(SUBJECT_PID), Pid(SUBJECT_CHILD)).unwrap();
    world.fork(SUBJECT_PID, SUBJECT_CHILD);
    for p in standard_peers() {
        let (id, meta) = store.policy_by_name(p.policy).expect("peer policy loaded");
        state
            .confine_with(Pid(p.pid), id, meta.tainted_from_start, p.ns)
            .unwrap();
        world.confine(p.pid, p.policy, meta.tainted_from_start, p.ns.mount_ns.0, p.ns.ipc_ns.0);
    }
    (state, world)
}
