//! Container and process bookkeeping: the processes map and containers map.
//!
//! A container is created by [`ContainerState::confine`], gains members
//! through [`ContainerState::on_fork`], and disappears when its last member
//! exits. Taint is one-way.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{CompiledPolicyStore, PolicyId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pid(pub u32);

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Opaque namespace identifier as reported by the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NsId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContainerId(pub u64);

impl fmt::Display for ContainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamespaceInfo {
    pub mount_ns: NsId,
    pub ipc_ns: NsId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub id: ContainerId,
    pub policy: PolicyId,
    pub tainted: bool,
    pub refcount: usize,
    pub mount_ns: NsId,
    pub ipc_ns: NsId,
    pub pids: BTreeSet<Pid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("pid {0} is already confined")]
    AlreadyConfined(Pid),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("container table is full ({0} containers)")]
    ContainerTableFull(usize),
    #[error("pid {0} is already tracked")]
    DuplicatePid(Pid),
    #[error("unknown container {0}")]
    UnknownContainer(ContainerId),
}

/// What an exit did to the container state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitOutcome {
    Untracked,
    Left { container: ContainerId, refcount: usize },
    Removed { container: ContainerId },
}

#[derive(Debug, Clone)]
pub struct ContainerState {
    capacity: usize,
    next_id: u64,
    containers: BTreeMap<ContainerId, Container>,
    processes: HashMap<Pid, ContainerId>,
}

impl Default for ContainerState {
    fn default() -> Self {
        ContainerState::new(Self::DEFAULT_CAPACITY)
    }
}

impl ContainerState {
    pub const DEFAULT_CAPACITY: usize = 1024;

    pub fn new(capacity: usize) -> Self {
        ContainerState {
            capacity,
            next_id: 1,
            containers: BTreeMap::new(),
            processes: HashMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Create a container for `pid` under the named policy.
    pub fn confine(
        &mut self,
        pid: Pid,
        policy_name: &str,
        ns: NamespaceInfo,
        store: &CompiledPolicyStore,
    ) -> Result<&Container, StateError> {
        let (policy, meta) = store
            .policy_by_name(policy_name)
            .ok_or_else(|| StateError::UnknownPolicy(policy_name.to_string()))?;
        self.confine_with(pid, policy, meta.tainted_from_start, ns)
    }

    /// [`confine`](Self::confine) with the policy already resolved.
    pub fn confine_with(
        &mut self,
        pid: Pid,
        policy: PolicyId,
        tainted: bool,
        ns: NamespaceInfo,
    ) -> Result<&Container, StateError> {
        // Re-confinement would let a process swap itself into a laxer policy.
        if self.processes.contains_key(&pid) {
            return Err(StateError::AlreadyConfined(pid));
        }
        if self.containers.len() >= self.capacity {
            return Err(StateError::ContainerTableFull(self.capacity));
        }
        let id = ContainerId(self.next_id);
        self.next_id += 1;
        self.processes.insert(pid, id);
        let container = Container {
            id,
            policy,
            tainted,
            refcount: 1,
            mount_ns: ns.mount_ns,
            ipc_ns: ns.ipc_ns,
            pids: BTreeSet::from([pid]),
        };
        Ok(self.containers.entry(id).or_insert(container))
    }

    /// A child inherits its parent's container. Returns the container joined, if any.
    pub fn on_fork(&mut self, parent: Pid, child: Pid) -> Result<Option<ContainerId>, StateError> {
        if self.processes.contains_key(&child) {
            return Err(StateError::DuplicatePid(child));
        }
        let Some(&id) = self.processes.get(&parent) else {
            return Ok(None);
        };
        let container = self
            .containers
            .get_mut(&id)
            .expect("process map points at a live container");
        container.pids.insert(child);
        container.refcount += 1;
        self.processes.insert(child, id);
        Ok(Some(id))
    }

    pub fn on_exit(&mut self, pid: Pid) -> ExitOutcome {
        let Some(id) = self.processes.remove(&pid) else {
            return ExitOutcome::Untracked;
        };
        let container = self
            .containers
            .get_mut(&id)
            .expect("process map points at a live container");
        container.pids.remove(&pid);
        container.refcount -= 1;
        if container.refcount == 0 {
            self.containers.remove(&id);
            ExitOutcome::Removed { container: id }
        } else {
            ExitOutcome::Left {
                container: id,
                refcount: container.refcount,
            }
        }
    }

    /// Mark a container tainted. Returns whether this call changed it.
    pub fn taint(&mut self, id: ContainerId) -> Result<bool, StateError> {
        let container = self
            .containers
            .get_mut(&id)
            .ok_or(StateError::UnknownContainer(id))?;
        let changed = !container.tainted;
        container.tainted = true;
        Ok(changed)
    }

    pub fn container_of(&self, pid: Pid) -> Option<&Container> {
        let id = self.processes.get(&pid)?;
        self.containers.get(id)
    }

    pub fn container(&self, id: ContainerId) -> Option<&Container> {
        self.containers.get(&id)
    }

    pub fn is_confined(&self, pid: Pid) -> bool {
        self.processes.contains_key(&pid)
    }

    pub fn containers(&self) -> impl Iterator<Item = &Container> {
        self.containers.values()
    }

    pub fn container_count(&self) -> usize {
        self.containers.len()
    }

    pub fn process_count(&self) -> usize {
        self.processes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.containers.is_empty()
    }

    /// Check the bookkeeping invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut members = 0;
        for c in self.containers.values() {
            if c.refcount == 0 {
                return Err(format!("container {} has refcount 0", c.id));
            }
            if c.refcount != c.pids.len() {
                return Err(format!(
                    "container {} refcount {} != {} members",
                    c.id,
                    c.refcount,
                    c.pids.len()
                ));
            }
            for pid in &c.pids {
                if self.processes.get(pid) != Some(&c.id) {
                    return Err(format!("pid {pid} not mapped to container {}", c.id));
                }
            }
            if c.id.0 >= self.next_id {
                return Err(format!("container {} ahead of the id counter", c.id));
            }
            members += c.pids.len();
        }
        if members != self.processes.len() {
            return Err(format!(
                "{} tracked pids but {members} container members",
                self.processes.len()
            ));
        }
        Ok(())
    }
}
