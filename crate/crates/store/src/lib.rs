//! Durable storage for dress: an append-only log of canonical documents
//! keyed by `(kind, id)`, with per-key version histories and optimistic
//! concurrency. See `FORMAT.md` for the on-disk layout.

pub mod backend;
pub mod repo;
mod store;

pub use repo::{domain_validator, Repository, View};
pub use store::{
    Clock, EntityKind, Key, Lease, Snapshot, Store, StoreError, StoreOptions, StoreRecord, Validator, MAGIC,
};
