use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PolicyError;

/// A set of filesystem access flags.
///
/// Written as a flag string: `r` read, `w` write, `a` append, `x` execute.
/// The canonical rendering always uses that order, so `"ar"` displays as `"ra"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct AccessSet(u8);

impl AccessSet {
    pub const READ: AccessSet = AccessSet(0b0001);
    pub const WRITE: AccessSet = AccessSet(0b0010);
    pub const APPEND: AccessSet = AccessSet(0b0100);
    pub const EXEC: AccessSet = AccessSet(0b1000);
    pub const EMPTY: AccessSet = AccessSet(0);
    pub const ALL: AccessSet = AccessSet(0b1111);

    const FLAGS: [(char, AccessSet); 4] = [
        ('r', Self::READ),
        ('w', Self::WRITE),
        ('a', Self::APPEND),
        ('x', Self::EXEC),
    ];

    pub fn parse(flags: &str) -> Result<Self, PolicyError> {
        let mut set = AccessSet::EMPTY;
        for c in flags.chars() {
            match Self::FLAGS.iter().find(|(f, _)| *f == c) {
                Some((_, bit)) => set |= *bit,
                None => {
                    return Err(PolicyError::BadAccessFlags {
                        flags: flags.to_string(),
                    })
                }
            }
        }
        if set.is_empty() {
            return Err(PolicyError::BadAccessFlags {
                flags: flags.to_string(),
            });
        }
        Ok(set)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Self {
        AccessSet(bits & Self::ALL.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: AccessSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: AccessSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Every non-empty access set, in bit order.
    pub fn all_nonempty() -> impl Iterator<Item = AccessSet> {
        (1..=Self::ALL.0).map(AccessSet)
    }
}

impl std::ops::BitOr for AccessSet {
    type Output = AccessSet;
    fn bitor(self, rhs: AccessSet) -> AccessSet {
        AccessSet(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for AccessSet {
    fn bitor_assign(&mut self, rhs: AccessSet) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for AccessSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for (c, bit) in Self::FLAGS {
            if self.contains(bit) {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for AccessSet {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AccessSet::parse(s)
    }
}

impl Serialize for AccessSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccessSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        AccessSet::parse(&s).map_err(serde::de::Error::custom)
    }
}
