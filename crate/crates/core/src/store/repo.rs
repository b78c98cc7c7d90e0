// SPDX-License-Identifier: Apache-2.0

//! On-disk repository input: `history.hist`, optional `issues.iss`, and one
//! source tree per revision under `trees/<revision>/`.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::pipeline::RepoHistory;
use crate::extractors::{load_tree, ExtractError};
use crate::history::{ingest_history, ingest_issues, HistoryError};

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    History { path: PathBuf, source: HistoryError },
    #[error(transparent)]
    Tree(#[from] ExtractError),
    #[error("no tree for revision {0}")]
    MissingTree(String),
}

fn read(path: PathBuf) -> Result<String, RepoError> {
    std::fs::read_to_string(&path).map_err(|source| RepoError::Io { path, source })
}

pub fn load_repo(dir: &Path) -> Result<RepoHistory, RepoError> {
    let hist = dir.join("history.hist");
    let records = ingest_history(&read(hist.clone())?)
        .map_err(|source| RepoError::History { path: hist, source })?;
    let iss = dir.join("issues.iss");
    let issues = if iss.exists() {
        ingest_issues(&read(iss.clone())?)
            .map_err(|source| RepoError::History { path: iss, source })?
    } else {
        Vec::new()
    };
    let mut commits = Vec::with_capacity(records.len());
    for r in records {
        let root = dir.join("trees").join(&r.revision);
        if !root.is_dir() {
            return Err(RepoError::MissingTree(r.revision));
        }
        let tree = load_tree(&root)?;
        commits.push((r, tree));
    }
    Ok(RepoHistory { commits, issues })
}
