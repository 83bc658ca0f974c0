//! Container confinement policy engine.
//!
//! Policies written in a small YAML language ([`policy`]) are compiled into
//! fixed-capacity, read-only decision maps ([`compiler`]). Containers and
//! their processes are tracked across confine/fork/exit ([`state`]), and every
//! mediated kernel event is judged by the reference monitor in [`engine`].
//! [`trace`] replays recorded event traces through all of it and produces an
//! audit log.

pub mod compiler;
pub mod policy;
pub mod engine;
pub mod state;
pub mod trace;
