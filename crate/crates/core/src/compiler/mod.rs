//! Lowering of policy documents into per-category decision maps.
//!
//! Each rule category gets its own capacity-bounded map keyed by policy ID
//! (and, where it applies, the rule target). Allow, deny and taint rules on
//! the same target share one entry. Once [`CompiledPolicyStore::seal`] has
//! been called every mutation fails with [`CompileError::StoreSealed`].

mod loader;
mod map;

use std::fmt;

use thiserror::Error;

use crate::policy::path::{depth_below, self_and_ancestors};
use crate::policy::{
    AccessSet, Capability, DefaultMode, DeviceKind, Entry, NetworkSet, PolicyDocument, Rule,
    RuleList,
};

pub use loader::{load_policy_dir, policy_dir_from_env, LoadedPolicy, DEFAULT_POLICY_DIR, POLICY_DIR_ENV};
pub use map::{BoundedMap, Capacities, MapCategory, PathMap};

/// Deepest directory nesting a subdir rule reaches below its root.
pub const SUBDIR_MAX_NESTING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicyId(pub u64);

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("policy name is empty")]
    EmptyName,
    #[error("{category} map is full ({capacity} entries)")]
    CapacityExceeded {
        category: MapCategory,
        capacity: usize,
    },
    #[error("policies `{first}` and `{second}` hash to the same policy ID")]
    PolicyIdCollision { first: String, second: String },
    #[error("policy `{0}` is loaded twice")]
    DuplicatePolicy(String),
    #[error("{0} map is sealed")]
    StoreSealed(MapCategory),
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a (64-bit) over the UTF-8 bytes of the policy name.
pub fn policy_id(name: &str) -> Result<PolicyId, CompileError> {
    if name.is_empty() {
        return Err(CompileError::EmptyName);
    }
    let hash = name
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME));
    Ok(PolicyId(hash))
}

/// Allow, deny and taint grants for one rule target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RuleSets<T> {
    pub allow: T,
    pub deny: T,
    pub taint: T,
}

impl<T: Copy> RuleSets<T> {
    pub fn get(&self, list: RuleList) -> T {
        match list {
            RuleList::Allow => self.allow,
            RuleList::Deny => self.deny,
            RuleList::Taint => self.taint,
        }
    }

    fn slot(&mut self, list: RuleList) -> &mut T {
        match list {
            RuleList::Allow => &mut self.allow,
            RuleList::Deny => &mut self.deny,
            RuleList::Taint => &mut self.taint,
        }
    }
}

pub type AccessEntry = RuleSets<AccessSet>;
pub type NetworkEntry = RuleSets<NetworkSet>;
pub type FlagEntry = RuleSets<bool>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyMeta {
    pub name: String,
    pub default: DefaultMode,
    pub tainted_from_start: bool,
    pub entry: Entry,
}

#[derive(Debug, Clone)]
pub struct CompiledPolicyStore {
    sealed: bool,
    capacities: Capacities,
    policies: BoundedMap<PolicyId, PolicyMeta>,
    files: PathMap<AccessEntry>,
    subdirs: PathMap<AccessEntry>,
    filesystems: PathMap<AccessEntry>,
    devices: BoundedMap<(PolicyId, DeviceKind), AccessEntry>,
    network: BoundedMap<PolicyId, NetworkEntry>,
    ipc: BoundedMap<(PolicyId, PolicyId), FlagEntry>,
    capabilities: BoundedMap<(PolicyId, Capability), FlagEntry>,
}

/// Compile and seal a policy set.
pub fn compile(
    docs: &[PolicyDocument],
    capacities: Capacities,
) -> Result<CompiledPolicyStore, CompileError> {
    let mut store = CompiledPolicyStore::new(capacities);
    for doc in docs {
        store.load(doc)?;
    }
    store.seal();
    Ok(store)
}

impl CompiledPolicyStore {
    pub fn new(capacities: Capacities) -> Self {
        let cap = |c| capacities.get(c);
        CompiledPolicyStore {
            sealed: false,
            capacities,
            policies: BoundedMap::new(MapCategory::Policy, cap(MapCategory::Policy)),
            files: PathMap::new(MapCategory::File, cap(MapCategory::File)),
            subdirs: PathMap::new(MapCategory::Subdir, cap(MapCategory::Subdir)),
            filesystems: PathMap::new(MapCategory::Filesystem, cap(MapCategory::Filesystem)),
            devices: BoundedMap::new(MapCategory::Device, cap(MapCategory::Device)),
            network: BoundedMap::new(MapCategory::Network, cap(MapCategory::Network)),
            ipc: BoundedMap::new(MapCategory::Ipc, cap(MapCategory::Ipc)),
            capabilities: BoundedMap::new(MapCategory::Capability, cap(MapCategory::Capability)),
        }
    }

    /// Lower one document into the maps.
    pub fn load(&mut self, doc: &PolicyDocument) -> Result<PolicyId, CompileError> {
        if self.sealed {
            return Err(CompileError::StoreSealed(MapCategory::Policy));
        }
        let id = policy_id(&doc.name)?;
        if let Some(existing) = self.policies.get(&id) {
            return Err(if existing.name == doc.name {
                CompileError::DuplicatePolicy(doc.name.clone())
            } else {
                CompileError::PolicyIdCollision {
                    first: existing.name.clone(),
                    second: doc.name.clone(),
                }
            });
        }
        self.policies.insert(
            id,
            PolicyMeta {
                name: doc.name.clone(),
                default: doc.default,
                tainted_from_start: doc.tainted_from_start(),
                entry: doc.entry.clone(),
            },
        )?;

        let lists = [
            (RuleList::Allow, &doc.allow),
            (RuleList::Deny, &doc.deny),
            (RuleList::Taint, &doc.taint),
        ];
        for (list, rules) in lists {
            for rule in rules {
                self.lower(id, list, rule)?;
            }
        }
        Ok(id)
    }

    fn lower(&mut self, id: PolicyId, list: RuleList, rule: &Rule) -> Result<(), CompileError> {
        let add_access = |access: AccessSet| move |e: &mut AccessEntry| *e.slot(list) |= access;
        match rule {
            Rule::File { path, access } => self.files.upsert(id, path, add_access(*access)),
            Rule::Subdir { path, access } => self.subdirs.upsert(id, path, add_access(*access)),
            Rule::Filesystem { mountpoint, access } => {
                self.filesystems.upsert(id, mountpoint, add_access(*access))
            }
            Rule::Device { kind, access } => self.devices.upsert((id, *kind), add_access(*access)),
            Rule::Tty { access } => self.devices.upsert((id, DeviceKind::Tty), add_access(*access)),
            Rule::Network { categories } => self.network.upsert(id, |e| {
                let slot = e.slot(list);
                *slot = slot.union(*categories);
            }),
            Rule::Ipc { peer } => {
                let peer_id = policy_id(peer)?;
                self.ipc.upsert((id, peer_id), |e| *e.slot(list) = true)
            }
            Rule::Capability { capability } => self
                .capabilities
                .upsert((id, *capability), |e| *e.slot(list) = true),
        }
    }

    /// Drop every entry belonging to a policy.
    pub fn remove(&mut self, id: PolicyId) -> Result<(), CompileError> {
        if self.sealed {
            return Err(CompileError::StoreSealed(MapCategory::Policy));
        }
        self.policies.remove(&id)?;
        self.files.remove_policy(id)?;
        self.subdirs.remove_policy(id)?;
        self.filesystems.remove_policy(id)?;
        self.devices.retain(|(p, _), _| *p != id)?;
        self.network.remove(&id)?;
        self.ipc.retain(|(p, _), _| *p != id)?;
        self.capabilities.retain(|(p, _), _| *p != id)?;
        Ok(())
    }

    /// Freeze every map. Idempotent.
    pub fn seal(&mut self) {
        self.sealed = true;
        self.policies.seal();
        self.files.seal();
        self.subdirs.seal();
        self.filesystems.seal();
        self.devices.seal();
        self.network.seal();
        self.ipc.seal();
        self.capabilities.seal();
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn capacities(&self) -> Capacities {
        self.capacities
    }

    /// Number of entries in one map.
    pub fn len(&self, category: MapCategory) -> usize {
        match category {
            MapCategory::Policy => self.policies.len(),
            MapCategory::File => self.files.len(),
            MapCategory::Subdir => self.subdirs.len(),
            MapCategory::Filesystem => self.filesystems.len(),
            MapCategory::Device => self.devices.len(),
            MapCategory::Network => self.network.len(),
            MapCategory::Ipc => self.ipc.len(),
            MapCategory::Capability => self.capabilities.len(),
        }
    }

    pub fn meta(&self, id: PolicyId) -> Option<&PolicyMeta> {
        self.policies.get(&id)
    }

    pub fn policy_by_name(&self, name: &str) -> Option<(PolicyId, &PolicyMeta)> {
        let id = policy_id(name).ok()?;
        let meta = self.policies.get(&id)?;
        (meta.name == name).then_some((id, meta))
    }

    pub fn policy_count(&self) -> usize {
        self.policies.len()
    }

    pub fn file(&self, id: PolicyId, path: &str) -> Option<&AccessEntry> {
        self.files.get(id, path)
    }

    /// Subdir rules whose root contains `path` within the nesting limit,
    /// nearest root first.
    pub fn subdirs_containing<'a>(
        &'a self,
        id: PolicyId,
        path: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a AccessEntry)> + 'a {
        let has_any = self.subdirs.has_policy(id);
        self_and_ancestors(path)
            .take(if has_any { SUBDIR_MAX_NESTING + 2 } else { 0 })
            .filter_map(move |root| {
                debug_assert!(depth_below(root, path).is_some_and(|d| d <= SUBDIR_MAX_NESTING + 1));
                self.subdirs.get(id, root).map(|e| (root, e))
            })
    }

    /// Filesystem rules whose mountpoint contains `path`, longest mountpoint first.
    pub fn filesystems_containing<'a>(
        &'a self,
        id: PolicyId,
        path: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a AccessEntry)> + 'a {
        let has_any = self.filesystems.has_policy(id);
        self_and_ancestors(path)
            .take(if has_any { usize::MAX } else { 0 })
            .filter_map(move |mp| self.filesystems.get(id, mp).map(|e| (mp, e)))
    }

    pub fn device(&self, id: PolicyId, kind: DeviceKind) -> Option<&AccessEntry> {
        self.devices.get(&(id, kind))
    }

    pub fn network(&self, id: PolicyId) -> Option<&NetworkEntry> {
        self.network.get(&id)
    }

    pub fn ipc(&self, id: PolicyId, peer: PolicyId) -> Option<&FlagEntry> {
        self.ipc.get(&(id, peer))
    }

    pub fn capability(&self, id: PolicyId, cap: Capability) -> Option<&FlagEntry> {
        self.capabilities.get(&(id, cap))
    }
}
