//! The YAML policy language: a named policy with an entrypoint, a default
//! mode, and three rule lists (`allow`, `deny`, `taint`).
//!
//! ```yaml
//! name: hello_taint
//! entry: /usr/bin/hello.dynamic
//! allow:
//!   - tty: rw
//! taint:
//!   - tty: r
//! ```
//!
//! Rule syntax, one single-key mapping per list item:
//!
//! | key                  | value                                        |
//! |----------------------|----------------------------------------------|
//! | `file`               | `PATH [FLAGS]` or `{path, access}`           |
//! | `subdir`             | `PATH [FLAGS]` or `{path, access}`           |
//! | `filesystem` / `fs`  | `MOUNTPOINT [FLAGS]` or `{mountpoint, access}` |
//! | `device`             | `KIND [FLAGS]` or `{kind, access}`           |
//! | `tty`                | `FLAGS`                                      |
//! | `net` / `network`    | a category or a list of categories           |
//! | `ipc`                | name of the peer policy                      |
//! | `capability`         | a `CAP_*` name                               |
//!
//! Omitted access flags mean every flag (`rwax`).

mod access;
mod capability;
pub mod path;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_yaml::Value;
use thiserror::Error;

pub use access::AccessSet;
pub use capability::{Capability, CapabilitySet, UnknownCapability};
pub use validate::{validate_policy_set, IssueKind, Severity, ValidationIssue};

use path::{normalize_rule_path, PathError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("malformed YAML: {0}")]
    MalformedYaml(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("unknown top-level field `{0}`")]
    UnknownField(String),
    #[error("policy name is empty")]
    EmptyName,
    #[error("unknown rule kind `{0}`")]
    UnknownRuleKind(String),
    #[error("bad access flags `{flags}` (expected a non-empty combination of r, w, a, x)")]
    BadAccessFlags { flags: String },
    #[error("bad `{kind}` rule: {reason}")]
    BadRule { kind: String, reason: String },
    #[error(transparent)]
    BadPath(#[from] PathError),
    #[error("unknown device kind `{0}`")]
    UnknownDevice(String),
    #[error("unknown network category `{0}`")]
    UnknownNetworkCategory(String),
    #[error("network rule grants no categories")]
    EmptyNetwork,
    #[error("bad default mode `{0}` (expected `allow` or `deny`)")]
    BadDefault(String),
    #[error(transparent)]
    UnknownCapability(#[from] UnknownCapability),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultMode {
    #[default]
    Deny,
    Allow,
}

impl fmt::Display for DefaultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DefaultMode::Deny => "deny",
            DefaultMode::Allow => "allow",
        })
    }
}

/// Character devices a device rule can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    /// `/dev/tty*`, `/dev/pts/*` and `/dev/console`.
    Tty,
    /// `/dev/random` and `/dev/urandom`.
    Random,
    Null,
    Zero,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 4] = [
        DeviceKind::Tty,
        DeviceKind::Random,
        DeviceKind::Null,
        DeviceKind::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::Tty => "tty",
            DeviceKind::Random => "random",
            DeviceKind::Null => "null",
            DeviceKind::Zero => "zero",
        }
    }

    /// The device class a normalized path refers to, if any.
    pub fn of_path(path: &str) -> Option<DeviceKind> {
        let dev = path.strip_prefix("/dev/")?;
        match dev {
            "random" | "urandom" => Some(DeviceKind::Random),
            "null" => Some(DeviceKind::Null),
            "zero" => Some(DeviceKind::Zero),
            "console" => Some(DeviceKind::Tty),
            d if d.starts_with("tty") && !d.contains('/') => Some(DeviceKind::Tty),
            d => match d.strip_prefix("pts/") {
                Some(n) if !n.is_empty() && !n.contains('/') => Some(DeviceKind::Tty),
                _ => None,
            },
        }
    }

    fn parse(s: &str) -> Result<Self, PolicyError> {
        DeviceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PolicyError::UnknownDevice(s.to_string()))
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkCategory {
    Client,
    Server,
    Send,
    Receive,
}

impl NetworkCategory {
    pub const ALL: [NetworkCategory; 4] = [
        NetworkCategory::Client,
        NetworkCategory::Server,
        NetworkCategory::Send,
        NetworkCategory::Receive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetworkCategory::Client => "client",
            NetworkCategory::Server => "server",
            NetworkCategory::Send => "send",
            NetworkCategory::Receive => "receive",
        }
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

/// A set of network categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NetworkSet(u8);

impl NetworkSet {
    pub const EMPTY: NetworkSet = NetworkSet(0);
    pub const ALL: NetworkSet = NetworkSet(0b1111);

    pub fn contains(self, cat: NetworkCategory) -> bool {
        self.0 & cat.bit() != 0
    }

    pub fn insert(&mut self, cat: NetworkCategory) {
        self.0 |= cat.bit();
    }

    pub fn union(self, other: NetworkSet) -> NetworkSet {
        NetworkSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_full(self) -> bool {
        self.0 == Self::ALL.0
    }

    pub fn iter(self) -> impl Iterator<Item = NetworkCategory> {
        NetworkCategory::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl FromIterator<NetworkCategory> for NetworkSet {
    fn from_iter<I: IntoIterator<Item = NetworkCategory>>(iter: I) -> Self {
        let mut set = NetworkSet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Display for NetworkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(NetworkCategory::name).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rule {
    File { path: String, access: AccessSet },
    Subdir { path: String, access: AccessSet },
    Filesystem { mountpoint: String, access: AccessSet },
    Device { kind: DeviceKind, access: AccessSet },
    /// Shorthand for a [`DeviceKind::Tty`] device rule.
    Tty { access: AccessSet },
    Network { categories: NetworkSet },
    Ipc { peer: String },
    Capability { capability: Capability },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::File { path, access } => write!(f, "file: {path} {access}"),
            Rule::Subdir { path, access } => write!(f, "subdir: {path} {access}"),
            Rule::Filesystem { mountpoint, access } => write!(f, "filesystem: {mountpoint} {access}"),
            Rule::Device { kind, access } => write!(f, "device: {kind} {access}"),
            Rule::Tty { access } => write!(f, "tty: {access}"),
            Rule::Network { categories } => write!(f, "net: {categories}"),
            Rule::Ipc { peer } => write!(f, "ipc: {peer}"),
            Rule::Capability { capability } => write!(f, "capability: {capability}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entry {
    pub path: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDocument {
    pub name: String,
    pub entry: Entry,
    pub default: DefaultMode,
    pub allow: Vec<Rule>,
    pub deny: Vec<Rule>,
    pub taint: Vec<Rule>,
}

impl PolicyDocument {
    /// Policies without taint rules start out tainted.
    pub fn tainted_from_start(&self) -> bool {
        self.taint.is_empty()
    }
}

/// Which rule list a rule was declared in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleList {
    Allow,
    Deny,
    Taint,
}

impl RuleList {
    pub fn name(self) -> &'static str {
        match self {
            RuleList::Allow => "allow",
            RuleList::Deny => "deny",
            RuleList::Taint => "taint",
        }
    }
}

pub fn parse_policy(text: &str) -> Result<PolicyDocument, PolicyError> {
    let value: Value =
        serde_yaml::from_str(text).map_err(|e| PolicyError::MalformedYaml(e.to_string()))?;
    let map = match value {
        Value::Mapping(m) => m,
        Value::Null => return Err(PolicyError::MissingField("name")),
        _ => return Err(PolicyError::MalformedYaml("top level must be a mapping".into())),
    };

    let mut name = None;
    let mut entry = None;
    let mut default = DefaultMode::Deny;
    let mut allow = Vec::new();
    let mut deny = Vec::new();
    let mut taint = Vec::new();

    for (key, val) in map {
        let key = match key {
            Value::String(s) => s,
            other => return Err(PolicyError::UnknownField(scalar_text(&other))),
        };
        match key.as_str() {
            "name" => name = Some(expect_string(val, "name")?),
            "entry" => entry = Some(parse_entry(val)?),
            "default" => default = parse_default(val)?,
            "allow" => allow = parse_rule_list(val, "allow")?,
            "deny" => deny = parse_rule_list(val, "deny")?,
            "taint" => taint = parse_rule_list(val, "taint")?,
            _ => return Err(PolicyError::UnknownField(key)),
        }
    }

    let name = name.ok_or(PolicyError::MissingField("name"))?;
    if name.trim().is_empty() {
        return Err(PolicyError::EmptyName);
    }
    let entry = entry.ok_or(PolicyError::MissingField("entry"))?;

    Ok(PolicyDocument {
        name,
        entry,
        default,
        allow,
        deny,
        taint,
    })
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::Null => "null".to_string(),
        _ => format!("{v:?}"),
    }
}

fn expect_string(v: Value, field: &'static str) -> Result<String, PolicyError> {
    match v {
        Value::String(s) => Ok(s),
        Value::Null => Err(PolicyError::MissingField(field)),
        other => Err(PolicyError::MalformedYaml(format!(
            "`{field}` must be a string, got {}",
            scalar_text(&other)
        ))),
    }
}

fn parse_entry(v: Value) -> Result<Entry, PolicyError> {
    let text = expect_string(v, "entry")?;
    let mut words = text.split_whitespace();
    let path = words.next().ok_or(PolicyError::MissingField("entry"))?;
    if !path.starts_with('/') {
        return Err(PathError::NotAbsolute(path.to_string()).into());
    }
    Ok(Entry {
        path: path.to_string(),
        args: words.map(str::to_string).collect(),
    })
}

fn parse_default(v: Value) -> Result<DefaultMode, PolicyError> {
    let text = match v {
        Value::String(s) => s,
        other => return Err(PolicyError::BadDefault(scalar_text(&other))),
    };
    match text.to_ascii_lowercase().as_str() {
        "deny" => Ok(DefaultMode::Deny),
        "allow" => Ok(DefaultMode::Allow),
        _ => Err(PolicyError::BadDefault(text)),
    }
}

fn parse_rule_list(v: Value, list: &str) -> Result<Vec<Rule>, PolicyError> {
    match v {
        // A list key followed only by comments parses as null.
        Value::Null => Ok(Vec::new()),
        Value::Sequence(items) => items.into_iter().map(parse_rule).collect(),
        _ => Err(PolicyError::MalformedYaml(format!("`{list}` must be a list of rules"))),
    }
}

fn parse_rule(item: Value) -> Result<Rule, PolicyError> {
    let map = match item {
        Value::Mapping(m) if m.len() == 1 => m,
        Value::Mapping(_) => {
            return Err(PolicyError::MalformedYaml(
                "each rule must be a mapping with exactly one key".into(),
            ))
        }
        Value::String(s) => return Err(PolicyError::UnknownRuleKind(s)),
        other => return Err(PolicyError::UnknownRuleKind(scalar_text(&other))),
    };
    let (key, val) = map.into_iter().next().expect("length checked");
    let kind = match key {
        Value::String(s) => s,
        other => return Err(PolicyError::UnknownRuleKind(scalar_text(&other))),
    };

    match kind.as_str() {
        "file" => {
            let (path, access) = target_and_access(&kind, val, "path")?;
            Ok(Rule::File {
                path: normalize_rule_path(&path)?,
                access,
            })
        }
        "subdir" => {
            let (path, access) = target_and_access(&kind, val, "path")?;
            Ok(Rule::Subdir {
                path: normalize_rule_path(&path)?,
                access,
            })
        }
        "filesystem" | "fs" => {
            let (mountpoint, access) = target_and_access(&kind, val, "mountpoint")?;
            Ok(Rule::Filesystem {
                mountpoint: normalize_rule_path(&mountpoint)?,
                access,
            })
        }
        "device" => {
            let (name, access) = target_and_access(&kind, val, "kind")?;
            Ok(Rule::Device {
                kind: DeviceKind::parse(&name)?,
                access,
            })
        }
        "tty" => {
            let access = match val {
                Value::Null => AccessSet::ALL,
                Value::String(s) => AccessSet::parse(s.trim())?,
                other => return Err(bad_rule(&kind, format!("expected flags, got {}", scalar_text(&other)))),
            };
            Ok(Rule::Tty { access })
        }
        "net" | "network" => {
            let names: Vec<String> = match val {
                Value::String(s) => s.split([',', ' ']).filter(|w| !w.is_empty()).map(str::to_string).collect(),
                Value::Sequence(items) => items
                    .into_iter()
                    .map(|i| match i {
                        Value::String(s) => Ok(s),
                        other => Err(PolicyError::UnknownNetworkCategory(scalar_text(&other))),
                    })
                    .collect::<Result<_, _>>()?,
                Value::Null => Vec::new(),
                other => return Err(PolicyError::UnknownNetworkCategory(scalar_text(&other))),
            };
            let categories = names
                .iter()
                .map(|n| {
                    NetworkCategory::ALL
                        .into_iter()
                        .find(|c| c.name() == n.as_str())
                        .ok_or_else(|| PolicyError::UnknownNetworkCategory(n.clone()))
                })
                .collect::<Result<NetworkSet, _>>()?;
            if categories.is_empty() {
                return Err(PolicyError::EmptyNetwork);
            }
            Ok(Rule::Network { categories })
        }
        "ipc" => match val {
            Value::String(s) if !s.trim().is_empty() => Ok(Rule::Ipc { peer: s }),
            _ => Err(bad_rule(&kind, "expected the name of the peer policy".into())),
        },
        "capability" => match val {
            Value::String(s) => Ok(Rule::Capability {
                capability: s.trim().parse()?,
            }),
            _ => Err(bad_rule(&kind, "expected a CAP_* name".into())),
        },
        _ => Err(PolicyError::UnknownRuleKind(kind)),
    }
}

fn bad_rule(kind: &str, reason: String) -> PolicyError {
    PolicyError::BadRule {
        kind: kind.to_string(),
        reason,
    }
}

/// Accepts `TARGET [FLAGS]` or `{<target_key>: TARGET, access: FLAGS}`.
fn target_and_access(
    kind: &str,
    val: Value,
    target_key: &str,
) -> Result<(String, AccessSet), PolicyError> {
    match val {
        Value::String(s) => {
            let words: Vec<&str> = s.split_whitespace().collect();
            match words.as_slice() {
                [target] => Ok((target.to_string(), AccessSet::ALL)),
                [target, flags] => Ok((target.to_string(), AccessSet::parse(flags)?)),
                _ => Err(bad_rule(kind, format!("expected `TARGET [FLAGS]`, got `{s}`"))),
            }
        }
        Value::Mapping(m) => {
            let mut target = None;
            let mut access = AccessSet::ALL;
            for (k, v) in m {
                let k = scalar_text(&k);
                // `kind: null` parses as a YAML null, not a string.
                let v = match v {
                    Value::String(s) => s,
                    Value::Null | Value::Bool(_) | Value::Number(_) => scalar_text(&v),
                    other => return Err(bad_rule(kind, format!("`{k}` must be a scalar, got {other:?}"))),
                };
                if k == target_key {
                    target = Some(v);
                } else if k == "access" {
                    access = AccessSet::parse(&v)?;
                } else {
                    return Err(bad_rule(kind, format!("unexpected key `{k}`")));
                }
            }
            let target = target.ok_or_else(|| bad_rule(kind, format!("missing `{target_key}`")))?;
            Ok((target, access))
        }
        // `device: null` is the null device, not a missing value.
        Value::Null | Value::Bool(_) | Value::Number(_) => Ok((scalar_text(&val), AccessSet::ALL)),
        other => Err(bad_rule(kind, format!("unexpected value {}", scalar_text(&other)))),
    }
}
