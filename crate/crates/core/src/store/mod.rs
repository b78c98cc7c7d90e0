// SPDX-License-Identifier: Apache-2.0

//! Versioned twin snapshots and how they are built.

pub mod persist;
pub mod pipeline;
pub mod repo;
pub mod snapshot;

pub use persist::{StoreError, TwinStore};
pub use pipeline::{
    fold_history, full_rebuild, incremental_update, reapply_overlay, BuildError, EventKind,
    RepoHistory, UpdateEvent, UpdateReport,
};
pub use repo::{load_repo, RepoError};
pub use snapshot::{Sources, TwinConfig, TwinSnapshot};
