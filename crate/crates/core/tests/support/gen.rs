//! Fixed vocabularies and seeded random generators for policies, events and traces.

use bpfcontain_core::engine::{
    FsKind, HardeningKind, HookEvent, IpcMechanism, PrivLevel, SocketFamily, SocketOpKind,
};
use bpfcontain_core::policy::{
    AccessSet, Capability, CapabilitySet, DefaultMode, DeviceKind, Entry, NetworkCategory,
    NetworkSet, PolicyDocument, Rule, RuleList,
};
use bpfcontain_core::state::{NamespaceInfo, NsId, Pid};
use bpfcontain_core::trace::TraceEvent;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cap(name: &str) -> Capability {
    name.parse().unwrap()
}

fn access(flags: &str) -> AccessSet {
    AccessSet::parse(flags).unwrap()
}

pub const SUBJECT: &str = "subject";
pub const PEER_A: &str = "peer_a";
pub const PEER_B: &str = "peer_b";

pub const VOCAB_CAPS: [&str; 3] = ["CAP_NET_BIND_SERVICE", "CAP_CHOWN", "CAP_SETUID"];

pub fn document(name: &str, default: DefaultMode, rules: &[(RuleList, Rule)]) -> PolicyDocument {
    let pick = |list| {
        rules
            .iter()
            .filter(|(l, _)| *l == list)
            .map(|(_, r)| r.clone())
            .collect()
    };
    PolicyDocument {
        name: name.to_string(),
        entry: Entry {
            path: format!("/usr/bin/{name}"),
            args: Vec::new(),
        },
        default,
        allow: pick(RuleList::Allow),
        deny: pick(RuleList::Deny),
        taint: pick(RuleList::Taint),
    }
}

/// The fixed rule vocabulary: ten path rules, four device kinds, four
/// network categories, three capabilities and two ipc peers.
pub fn rule_vocab() -> Vec<Rule> {
    let file = |p: &str, a| Rule::File { path: p.into(), access: access(a) };
    let subdir = |p: &str, a| Rule::Subdir { path: p.into(), access: access(a) };
    let fs = |p: &str, a| Rule::Filesystem { mountpoint: p.into(), access: access(a) };
    let mut v = vec![
        file("/etc/passwd", "r"),
        file("/var/log/app.log", "ra"),
        file("/proc/meminfo", "r"),
        file("/sys/kernel/notes", "r"),
        subdir("/etc", "r"),
        subdir("/var/www", "rw"),
        subdir("/proc/sys", "r"),
        subdir("/home", "w"),
        fs("/", "r"),
        fs("/tmp", "rwa"),
        Rule::Tty { access: access("rw") },
        Rule::Device { kind: DeviceKind::Random, access: access("r") },
        Rule::Device { kind: DeviceKind::Null, access: access("rw") },
        Rule::Device { kind: DeviceKind::Zero, access: access("r") },
    ];
    v.extend(NetworkCategory::ALL.into_iter().map(|c| Rule::Network {
        categories: [c].into_iter().collect(),
    }));
    v.extend(VOCAB_CAPS.iter().map(|c| Rule::Capability { capability: cap(c) }));
    v.extend([PEER_A, PEER_B].map(|p| Rule::Ipc { peer: p.into() }));
    v
}

/// Peer policies for ipc: `peer_a` allowlists the subject, `peer_b` nothing.
pub fn peer_documents() -> Vec<PolicyDocument> {
    vec![
        document(
            PEER_A,
            DefaultMode::Deny,
            &[(RuleList::Allow, Rule::Ipc { peer: SUBJECT.into() })],
        ),
        document(PEER_B, DefaultMode::Deny, &[]),
    ]
}

pub fn ns(mount: u64, ipc: u64) -> NamespaceInfo {
    NamespaceInfo {
        mount_ns: NsId(mount),
        ipc_ns: NsId(ipc),
    }
}

/// The standard world: the subject container holds pids 1 and 6 (mount ns 1,
/// ipc ns 1); pid 2 runs `peer_a` in the same ipc namespace, pid 3 runs
/// `peer_b`, pid 4 runs `peer_a` in ipc namespace 2; pid 5 is unconfined.
pub struct Placement {
    pub pid: u32,
    pub policy: &'static str,
    pub ns: NamespaceInfo,
}

pub const SUBJECT_PID: u32 = 1;
pub const SUBJECT_CHILD: u32 = 6;
pub const UNCONFINED_PID: u32 = 5;

pub fn standard_peers() -> [Placement; 3] {
    [
        Placement { pid: 2, policy: PEER_A, ns: ns(2, 1) },
        Placement { pid: 3, policy: PEER_B, ns: ns(3, 1) },
        Placement { pid: 4, policy: PEER_A, ns: ns(4, 2) },
    ]
}

fn file_event(pid: u32, path: &str, requested: AccessSet, fs_kind: FsKind) -> HookEvent {
    HookEvent::FileAccess {
        pid: Pid(pid),
        path: path.into(),
        requested,
        fs_kind,
        owner_mount_ns: None,
        proc_subject_pid: None,
    }
}

fn priv_level(uid: u32, caps: &[&str]) -> PrivLevel {
    PrivLevel {
        uid,
        capability_set: caps.iter().map(|c| cap(c)).collect(),
    }
}

/// Every event kind the engine mediates, issued by the subject pid.
pub fn event_vocab() -> Vec<HookEvent> {
    let pid = Pid(SUBJECT_PID);
    let mut v = Vec::new();
    let paths = [
        "/etc/passwd",
        "/etc/shadow",
        "/etc/ssl/certs/ca.pem",
        "/var/log/app.log",
        "/var/www/html/index.html",
        "/var/www/1/2/3/4/5/6/7/8/deep",
        "/var/www/1/2/3/4/5/6/7/8/9/deeper",
        "/home/u/notes",
        "/tmp/scratch",
        "/usr/bin/env",
        "/dev/tty1",
        "/dev/pts/0",
        "/dev/urandom",
        "/dev/null",
        "/dev/zero",
    ];
    for path in paths {
        for flags in ["r", "w", "a", "x", "rw"] {
            v.push(file_event(pid.0, path, access(flags), FsKind::Regular));
        }
    }
    let r = AccessSet::READ;
    let proc = |path: &str, subject: Option<u32>| HookEvent::FileAccess {
        pid,
        path: path.into(),
        requested: r,
        fs_kind: FsKind::Procfs,
        owner_mount_ns: None,
        proc_subject_pid: subject.map(Pid),
    };
    v.extend([
        proc("/proc/1/status", Some(1)),
        proc("/proc/6/status", Some(6)),
        proc("/proc/5/status", Some(5)),
        proc("/proc/2/environ", Some(2)),
        proc("/proc/meminfo", None),
        proc("/proc/sys/kernel/hostname", None),
        file_event(pid.0, "/sys/kernel/notes", r, FsKind::Sysfs),
        file_event(pid.0, "/sys/class/net/eth0/address", r, FsKind::Sysfs),
        file_event(pid.0, "/sys/fs/bpf/bpfcontain/maps", r, FsKind::Bpffs),
    ]);
    for owner in [1, 9] {
        v.push(HookEvent::FileAccess {
            pid,
            path: "/app/data.db".into(),
            requested: AccessSet::READ | AccessSet::WRITE,
            fs_kind: FsKind::Overlayfs,
            owner_mount_ns: Some(NsId(owner)),
            proc_subject_pid: None,
        });
    }
    for op in SocketOpKind::ALL {
        v.push(HookEvent::SocketOp { pid, family: SocketFamily::Ipv4, op });
    }
    v.extend([
        HookEvent::SocketOp { pid, family: SocketFamily::Ipv6, op: SocketOpKind::Connect },
        HookEvent::SocketOp { pid, family: SocketFamily::Unix, op: SocketOpKind::Connect },
        HookEvent::SocketOp { pid, family: SocketFamily::Other, op: SocketOpKind::Create },
        HookEvent::SocketOp { pid, family: SocketFamily::Other, op: SocketOpKind::Send },
    ]);
    for peer in [2, 3, 4, 5, 6] {
        v.push(HookEvent::IpcOp {
            pid,
            peer_pid: Pid(peer),
            mechanism: IpcMechanism::Signal,
        });
    }
    for name in VOCAB_CAPS.iter().chain(&["CAP_SYS_ADMIN"]) {
        for possessed in [true, false] {
            v.push(HookEvent::CapabilityUse { pid, capability: cap(name), possessed });
        }
    }
    for (old, new) in [
        (priv_level(1000, &[]), priv_level(0, &[])),
        (priv_level(1000, &[]), priv_level(1000, &[])),
        (priv_level(0, &["CAP_CHOWN"]), priv_level(0, &[])),
        (priv_level(1000, &[]), priv_level(1000, &["CAP_SETUID"])),
    ] {
        v.push(HookEvent::CommitCreds { pid, old_priv: old, new_priv: new });
    }
    v.push(HookEvent::SwitchNamespaces { pid });
    for op in HardeningKind::ALL {
        v.push(HookEvent::HardeningOp { pid, op });
    }
    v
}

const BASES: [&str; 12] = [
    "/", "/etc", "/var/www", "/var/log", "/proc", "/proc/sys", "/sys/kernel", "/dev", "/tmp",
    "/home/u", "/app", "/usr/lib",
];
const LEAVES: [&str; 6] = ["a", "b", "c", "tty1", "null", "urandom"];

fn random_path(rng: &mut TestRng, max_extra: usize) -> String {
    let mut path = BASES.choose(rng).unwrap().to_string();
    for _ in 0..rng.random_range(0..=max_extra) {
        if !path.ends_with('/') {
            path.push('/');
        }
        path.push_str(LEAVES.choose(rng).unwrap());
    }
    path
}

fn random_access(rng: &mut TestRng) -> AccessSet {
    AccessSet::from_bits(rng.random_range(1..16))
}

pub const RANDOM_CAPS: [&str; 5] = [
    "CAP_NET_BIND_SERVICE",
    "CAP_CHOWN",
    "CAP_SETUID",
    "CAP_SYS_ADMIN",
    "CAP_NET_RAW",
];

pub fn random_rule(rng: &mut TestRng, peers: &[&str]) -> Rule {
    match rng.random_range(0..9) {
        0 => Rule::File { path: random_path(rng, 3), access: random_access(rng) },
        1 => Rule::Subdir { path: random_path(rng, 2), access: random_access(rng) },
        2 => Rule::Filesystem { mountpoint: random_path(rng, 1), access: random_access(rng) },
        3 => Rule::Device { kind: *DeviceKind::ALL.choose(rng).unwrap(), access: random_access(rng) },
        4 => Rule::Tty { access: random_access(rng) },
        5 | 6 => Rule::Network {
            categories: NetworkCategory::ALL
                .into_iter()
                .filter(|_| rng.random_bool(0.4))
                .collect::<NetworkSet>()
                .union([*NetworkCategory::ALL.choose(rng).unwrap()].into_iter().collect()),
        },
        7 => Rule::Capability { capability: cap(RANDOM_CAPS.choose(rng).unwrap()) },
        _ => Rule::Ipc { peer: peers.choose(rng).unwrap().to_string() },
    }
}

/// A random policy. `taint` controls whether taint rules may appear at all.
pub fn random_policy(rng: &mut TestRng, name: &str, peers: &[&str], taint: bool) -> PolicyDocument {
    let default = if rng.random_bool(0.5) { DefaultMode::Allow } else { DefaultMode::Deny };
    let n = rng.random_range(0..10);
    let mut rules = Vec::with_capacity(n);
    for _ in 0..n {
        let list = match rng.random_range(0..if taint { 3 } else { 2 }) {
            0 => RuleList::Allow,
            1 => RuleList::Deny,
            _ => RuleList::Taint,
        };
        rules.push((list, random_rule(rng, peers)));
    }
    if taint && !rules.iter().any(|(l, _)| *l == RuleList::Taint) {
        rules.push((RuleList::Taint, random_rule(rng, peers)));
    }
    document(name, default, &rules)
}

pub fn random_priv(rng: &mut TestRng) -> PrivLevel {
    let uid = *[0, 0, 1000, 1000, 33].choose(rng).unwrap();
    let capability_set: CapabilitySet = RANDOM_CAPS
        .iter()
        .filter(|_| rng.random_bool(0.2))
        .map(|c| cap(c))
        .collect();
    PrivLevel { uid, capability_set }
}

/// A random event issued by `pid`. `pids` are candidate peers and procfs subjects.
pub fn random_event(rng: &mut TestRng, pid: u32, pids: &[u32], escalation_odds: f64) -> HookEvent {
    let pid = Pid(pid);
    let other = |rng: &mut TestRng| Pid(*pids.choose(rng).unwrap_or(&pid.0));
    match rng.random_range(0..20) {
        0..=9 => {
            let path = random_path(rng, 10);
            let (fs_kind, owner, subject) = if path.starts_with("/proc") {
                let subject = rng.random_bool(0.7).then(|| other(rng));
                (FsKind::Procfs, None, subject)
            } else if path.starts_with("/sys") {
                (if rng.random_bool(0.1) { FsKind::Bpffs } else { FsKind::Sysfs }, None, None)
            } else if path.starts_with("/app") {
                (FsKind::Overlayfs, Some(NsId(rng.random_range(1..4))), None)
            } else {
                (FsKind::Regular, None, None)
            };
            HookEvent::FileAccess {
                pid,
                path,
                requested: random_access(rng),
                fs_kind,
                owner_mount_ns: owner,
                proc_subject_pid: subject,
            }
        }
        10..=12 => HookEvent::SocketOp {
            pid,
            family: *[SocketFamily::Ipv4, SocketFamily::Ipv4, SocketFamily::Ipv6, SocketFamily::Unix, SocketFamily::Other]
                .choose(rng)
                .unwrap(),
            op: *SocketOpKind::ALL.choose(rng).unwrap(),
        },
        13 | 14 => HookEvent::IpcOp {
            pid,
            peer_pid: other(rng),
            mechanism: *[IpcMechanism::Signal, IpcMechanism::UnixSocket, IpcMechanism::SysV, IpcMechanism::ShMem]
                .choose(rng)
                .unwrap(),
        },
        15 | 16 => HookEvent::CapabilityUse {
            pid,
            capability: cap(RANDOM_CAPS.choose(rng).unwrap()),
            possessed: rng.random_bool(0.8),
        },
        17 => {
            let old_priv = random_priv(rng);
            let new_priv = if rng.random_bool(escalation_odds) {
                PrivLevel { uid: 0, ..random_priv(rng) }
            } else {
                PrivLevel {
                    uid: old_priv.uid,
                    capability_set: old_priv.capability_set.iter().filter(|_| rng.random_bool(0.5)).collect(),
                }
            };
            let old_priv = if new_priv.uid == 0 && rng.random_bool(escalation_odds) {
                PrivLevel { uid: 1000, ..old_priv }
            } else {
                old_priv
            };
            HookEvent::CommitCreds { pid, old_priv, new_priv }
        }
        18 => HookEvent::SwitchNamespaces { pid },
        _ => HookEvent::HardeningOp { pid, op: *HardeningKind::ALL.choose(rng).unwrap() },
    }
}

/// A synthetic trace with container churn across `policies`. Pids are never
/// reused; a few events are deliberately issued by pids that were killed.
pub fn synthetic_trace(rng: &mut TestRng, policies: &[&str], len: usize) -> Vec<TraceEvent> {
    let mut trace = Vec::with_capacity(len);
    let mut live: Vec<u32> = Vec::new();
    let mut gone: Vec<u32> = Vec::new();
    let mut next_pid = 100u32;
    let mut seq = 0u64;
    let mut next_seq = || {
        seq += rng_step(seq);
        seq
    };
    while trace.len() < len {
        let roll = rng.random_range(0..100);
        if live.len() < 4 || roll < 3 {
            next_pid += 1;
            let policy = policies.choose(rng).unwrap();
            let namespace = ns(rng.random_range(1..20), rng.random_range(1..4));
            trace.push(TraceEvent::confine(next_seq(), next_pid, policy, namespace));
            live.push(next_pid);
        } else if roll < 10 {
            next_pid += 1;
            let parent = *live.choose(rng).unwrap();
            trace.push(TraceEvent::fork(next_seq(), parent, next_pid));
            live.push(next_pid);
        } else if roll < 15 {
            let i = rng.random_range(0..live.len());
            let pid = live.swap_remove(i);
            gone.push(pid);
            trace.push(TraceEvent::exit(next_seq(), pid));
        } else {
            let pid = if roll < 17 && !gone.is_empty() {
                *gone.choose(rng).unwrap()
            } else if roll < 19 {
                // An unconfined process.
                rng.random_range(2..100)
            } else {
                *live.choose(rng).unwrap()
            };
            let event = random_event(rng, pid, &live, 0.05);
            trace.push(TraceEvent::hook(next_seq(), event));
        }
    }
    trace
}

/// Gaps in sequence numbers are legal; exercise them.
fn rng_step(seq: u64) -> u64 {
    1 + (seq % 7 == 3) as u64
}
