//! Lexical path normalization. Nothing here touches the filesystem.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path `{0}` is not absolute")]
    NotAbsolute(String),
    #[error("path `{0}` contains a `..` component")]
    ParentComponent(String),
}

/// Normalize a path written in a policy rule: collapse `//` and `.`,
/// reject relative paths and any `..` component.
pub fn normalize_rule_path(path: &str) -> Result<String, PathError> {
    if !path.starts_with('/') {
        return Err(PathError::NotAbsolute(path.to_string()));
    }
    let mut parts = Vec::new();
    for comp in path.split('/') {
        match comp {
            "" | "." => {}
            ".." => return Err(PathError::ParentComponent(path.to_string())),
            c => parts.push(c),
        }
    }
    Ok(join(&parts))
}

/// Normalize a path observed in an event. `..` is resolved lexically and
/// clamps at the root, the way the kernel hands hooks a resolved path.
pub fn normalize_event_path(path: &str) -> Result<String, PathError> {
    if !path.starts_with('/') {
        return Err(PathError::NotAbsolute(path.to_string()));
    }
    let mut parts: Vec<&str> = Vec::new();
    for comp in path.split('/') {
        match comp {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            c => parts.push(c),
        }
    }
    Ok(join(&parts))
}

fn join(parts: &[&str]) -> String {
    if parts.is_empty() {
        return "/".to_string();
    }
    let mut out = String::with_capacity(parts.iter().map(|p| p.len() + 1).sum());
    for p in parts {
        out.push('/');
        out.push_str(p);
    }
    out
}

/// Components of a normalized absolute path.
pub fn components(path: &str) -> impl Iterator<Item = &str> {
    path.split('/').filter(|c| !c.is_empty())
}

/// Number of components `path` lies below `root`, or `None` if `path` is not
/// `root` itself or a descendant of it. Both paths must be normalized.
pub fn depth_below(root: &str, path: &str) -> Option<usize> {
    if root == "/" {
        return Some(components(path).count());
    }
    let rest = path.strip_prefix(root)?;
    if rest.is_empty() {
        Some(0)
    } else if rest.starts_with('/') {
        Some(components(rest).count())
    } else {
        None
    }
}

/// `path` followed by each of its ancestors up to and including `/`, nearest first.
pub fn self_and_ancestors(path: &str) -> impl Iterator<Item = &str> {
    let mut next = Some(path);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == "/" {
            None
        } else {
            match cur.rfind('/') {
                Some(0) => Some("/"),
                Some(i) => Some(&cur[..i]),
                None => None,
            }
        };
        Some(cur)
    })
}
