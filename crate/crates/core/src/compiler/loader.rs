use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::policy::{parse_policy, PolicyDocument, PolicyError};

pub const DEFAULT_POLICY_DIR: &str = "/var/lib/bpfcontain/policy";
pub const POLICY_DIR_ENV: &str = "BPFCONTAIN_POLICY_DIR";

/// `$BPFCONTAIN_POLICY_DIR`, or the default policy directory.
pub fn policy_dir_from_env() -> PathBuf {
    std::env::var_os(POLICY_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_POLICY_DIR))
}

#[derive(Debug)]
pub struct LoadedPolicy {
    pub path: PathBuf,
    pub result: Result<PolicyDocument, PolicyError>,
}

/// Read and parse every `*.yml` / `*.yaml` file directly inside `dir`, sorted
/// by file name. Parse failures are returned per file; only I/O errors abort.
pub fn load_policy_dir(dir: &Path) -> io::Result<Vec<LoadedPolicy>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_yaml = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("yml" | "yaml")
        );
        if is_yaml && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();

    paths
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path)?;
            Ok(LoadedPolicy {
                result: parse_policy(&text),
                path,
            })
        })
        .collect()
}
