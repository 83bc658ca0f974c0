use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{DefaultMode, PolicyDocument, Rule};
use crate::compiler::policy_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    DuplicateName,
    /// Two distinct names hash to the same policy ID.
    PolicyIdCollision { other: String },
    /// An `ipc` rule names a policy that is not in the set. The peer may
    /// still be loaded later, so this is only a warning.
    DanglingIpcPeer { peer: String },
    /// Default-deny policy with no allow rules at all.
    NoAllowRules,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub policy: String,
    pub severity: Severity,
    pub kind: IssueKind,
}

impl ValidationIssue {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: policy `{}`: ", self.policy)?;
        match &self.kind {
            IssueKind::DuplicateName => write!(f, "duplicate policy name"),
            IssueKind::PolicyIdCollision { other } => {
                write!(f, "policy ID collides with policy `{other}`")
            }
            IssueKind::DanglingIpcPeer { peer } => {
                write!(f, "ipc rule names policy `{peer}`, which is not loaded")
            }
            IssueKind::NoAllowRules => {
                write!(f, "default-deny policy has no allow rules")
            }
        }
    }
}

/// Cross-document checks over a set of parsed policies. Never fails; callers
/// decide what to do with [`Severity::Error`] issues.
pub fn validate_policy_set(docs: &[PolicyDocument]) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let names: BTreeSet<&str> = docs.iter().map(|d| d.name.as_str()).collect();

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ids: BTreeMap<u64, &str> = BTreeMap::new();
    for doc in docs {
        let count = seen.entry(doc.name.as_str()).or_insert(0);
        *count += 1;
        if *count == 2 {
            issues.push(ValidationIssue {
                policy: doc.name.clone(),
                severity: Severity::Error,
                kind: IssueKind::DuplicateName,
            });
        }
        if let Ok(id) = policy_id(&doc.name) {
            match ids.get(&id.0) {
                Some(other) if *other != doc.name => issues.push(ValidationIssue {
                    policy: doc.name.clone(),
                    severity: Severity::Error,
                    kind: IssueKind::PolicyIdCollision {
                        other: other.to_string(),
                    },
                }),
                Some(_) => {}
                None => {
                    ids.insert(id.0, &doc.name);
                }
            }
        }
    }

    for doc in docs {
        let mut reported = BTreeSet::new();
        for rule in doc.allow.iter().chain(&doc.deny).chain(&doc.taint) {
            if let Rule::Ipc { peer } = rule {
                if !names.contains(peer.as_str()) && reported.insert(peer.as_str()) {
                    issues.push(ValidationIssue {
                        policy: doc.name.clone(),
                        severity: Severity::Warning,
                        kind: IssueKind::DanglingIpcPeer { peer: peer.clone() },
                    });
                }
            }
        }
        if doc.default == DefaultMode::Deny && doc.allow.is_empty() {
            issues.push(ValidationIssue {
                policy: doc.name.clone(),
                severity: Severity::Warning,
                kind: IssueKind::NoAllowRules,
            });
        }
    }
    issues
}
