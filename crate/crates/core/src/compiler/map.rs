use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use super::{CompileError, PolicyId};

/// The decision maps a compiled store is made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MapCategory {
    Policy,
    File,
    Subdir,
    Filesystem,
    Device,
    Network,
    Ipc,
    Capability,
}

impl MapCategory {
    pub const ALL: [MapCategory; 8] = [
        MapCategory::Policy,
        MapCategory::File,
        MapCategory::Subdir,
        MapCategory::Filesystem,
        MapCategory::Device,
        MapCategory::Network,
        MapCategory::Ipc,
        MapCategory::Capability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapCategory::Policy => "policy",
            MapCategory::File => "file",
            MapCategory::Subdir => "subdir",
            MapCategory::Filesystem => "filesystem",
            MapCategory::Device => "device",
            MapCategory::Network => "network",
            MapCategory::Ipc => "ipc",
            MapCategory::Capability => "capability",
        }
    }
}

impl fmt::Display for MapCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MapCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown map category `{s}`"))
    }
}

/// Per-category entry limits, fixed when the store is created.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacities([usize; 8]);

impl Capacities {
    pub const DEFAULT_PER_CATEGORY: usize = 256;

    pub fn uniform(n: usize) -> Self {
        Capacities([n; 8])
    }

    pub fn get(&self, category: MapCategory) -> usize {
        self.0[category as usize]
    }

    pub fn set(&mut self, category: MapCategory, n: usize) {
        self.0[category as usize] = n;
    }

    pub fn with(mut self, category: MapCategory, n: usize) -> Self {
        self.set(category, n);
        self
    }
}

impl Default for Capacities {
    fn default() -> Self {
        Capacities::uniform(Self::DEFAULT_PER_CATEGORY)
    }
}

/// A hash map with a fixed entry limit that can be frozen.
#[derive(Debug, Clone)]
pub struct BoundedMap<K, V> {
    category: MapCategory,
    capacity: usize,
    sealed: bool,
    entries: HashMap<K, V>,
}

impl<K: Hash + Eq, V> BoundedMap<K, V> {
    pub fn new(category: MapCategory, capacity: usize) -> Self {
        BoundedMap {
            category,
            capacity,
            sealed: false,
            entries: HashMap::new(),
        }
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seal(&mut self) {
        self.sealed = true;
    }

    fn check_open(&self) -> Result<(), CompileError> {
        if self.sealed {
            Err(CompileError::StoreSealed(self.category))
        } else {
            Ok(())
        }
    }

    fn check_room(&self, key: &K) -> Result<(), CompileError> {
        if !self.entries.contains_key(key) && self.entries.len() >= self.capacity {
            return Err(CompileError::CapacityExceeded {
                category: self.category,
                capacity: self.capacity,
            });
        }
        Ok(())
    }

    pub fn insert(&mut self, key: K, value: V) -> Result<Option<V>, CompileError> {
        self.check_open()?;
        self.check_room(&key)?;
        Ok(self.entries.insert(key, value))
    }

    /// Insert `V::default()` if absent, then apply `f` to the entry.
    pub fn upsert(&mut self, key: K, f: impl FnOnce(&mut V)) -> Result<(), CompileError>
    where
        V: Default,
    {
        self.check_open()?;
        self.check_room(&key)?;
        f(self.entries.entry(key).or_default());
        Ok(())
    }

    pub fn remove(&mut self, key: &K) -> Result<Option<V>, CompileError> {
        self.check_open()?;
        Ok(self.entries.remove(key))
    }

    pub fn retain(&mut self, f: impl FnMut(&K, &mut V) -> bool) -> Result<(), CompileError> {
        self.check_open()?;
        self.entries.retain(f);
        Ok(())
    }
}

/// Path-keyed rules, grouped per policy so lookups borrow the path.
/// The capacity bounds the total number of (policy, path) entries.
#[derive(Debug, Clone)]
pub struct PathMap<V> {
    category: MapCategory,
    capacity: usize,
    sealed: bool,
    len: usize,
    by_policy: HashMap<PolicyId, HashMap<Box<str>, V>>,
}

impl<V: Default> PathMap<V> {
    pub fn new(category: MapCategory, capacity: usize) -> Self {
        PathMap {
            category,
            capacity,
            sealed: false,
            len: 0,
            by_policy: HashMap::new(),
        }
    }

    pub fn get(&self, policy: PolicyId, path: &str) -> Option<&V> {
        self.by_policy.get(&policy)?.get(path)
    }

    /// All entries of one policy.
    pub fn policy_entries(&self, policy: PolicyId) -> impl Iterator<Item = (&str, &V)> {
        self.by_policy
            .get(&policy)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (&**k, v)))
    }

    pub fn has_policy(&self, policy: PolicyId) -> bool {
        self.by_policy.contains_key(&policy)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seal(&mut self) {
        self.sealed = true;
    }

    pub fn upsert(
        &mut self,
        policy: PolicyId,
        path: &str,
        f: impl FnOnce(&mut V),
    ) -> Result<(), CompileError> {
        if self.sealed {
            return Err(CompileError::StoreSealed(self.category));
        }
        let exists = self.get(policy, path).is_some();
        if !exists && self.len >= self.capacity {
            return Err(CompileError::CapacityExceeded {
                category: self.category,
                capacity: self.capacity,
            });
        }
        let table = self.by_policy.entry(policy).or_default();
        if !exists {
            self.len += 1;
        }
        f(table.entry(path.into()).or_default());
        Ok(())
    }

    pub fn remove_policy(&mut self, policy: PolicyId) -> Result<(), CompileError> {
        if self.sealed {
            return Err(CompileError::StoreSealed(self.category));
        }
        if let Some(table) = self.by_policy.remove(&policy) {
            self.len -= table.len();
        }
        Ok(())
    }
}
