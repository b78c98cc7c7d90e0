// SPDX-License-Identifier: Apache-2.0

//! Store-backed operations shared by the CLI and the HTTP service.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use twin_core::curation::Overlay;
use twin_core::model::{Node, NodeId, TypedEdge};
use twin_core::query::{QuerySpec, RankWeights};
use twin_core::store::{
    fold_history, incremental_update, load_repo, StoreError, TwinConfig, TwinSnapshot, TwinStore,
    UpdateEvent,
};
use twin_core::writeback::CurationLog;

use crate::config::ServiceConfig;
use crate::error::ApiError;

/// A committed snapshot with its store id.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub id: String,
    pub snapshot: TwinSnapshot,
}

pub struct Twin {
    pub config: ServiceConfig,
    pub pipeline: TwinConfig,
    pub store: TwinStore,
    pub log: CurationLog,
}

/// `GET /nodes/{id}` payload: the node and every edge touching it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub node: Node,
    pub edges: Vec<TypedEdge>,
}

impl NodeView {
    pub fn of(snapshot: &TwinSnapshot, id: &NodeId) -> Option<NodeView> {
        let node = snapshot.graph.node(id)?.clone();
        let edges = snapshot
            .graph
            .incident(id)
            .map(|(k, attrs)| TypedEdge {
                source: k.source.clone(),
                relation: k.relation,
                target: k.target.clone(),
                attributes: attrs.clone(),
            })
            .collect();
        Some(NodeView { node, edges })
    }
}

/// Pretty JSON, the wire form of every JSON payload.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

impl Twin {
    pub fn open(config: ServiceConfig) -> Result<Self, ApiError> {
        config.check()?;
        let pipeline = config.twin_config()?;
        let store = TwinStore::open(&config.store)?;
        let log = CurationLog::for_store(&store)?;
        Ok(Twin {
            config,
            pipeline,
            store,
            log,
        })
    }

    pub fn weights(&self) -> RankWeights {
        self.config.defaults.weights
    }

    /// Latest snapshot, or the latest one of `revision`.
    pub fn load(&self, revision: Option<&str>) -> Result<Loaded, ApiError> {
        let entry = self.store.resolve(revision).map_err(|e| match e {
            StoreError::UnknownId(r) => ApiError::new(
                axum::http::StatusCode::NOT_FOUND,
                "unknown-revision",
                format!("unknown revision {r}"),
            ),
            other => other.into(),
        })?;
        let snapshot = self.store.load(Some(&entry.id), &self.pipeline)?;
        Ok(Loaded {
            id: entry.id,
            snapshot,
        })
    }

    /// Stored revisions in history order, without repeats. An empty store
    /// is an error.
    pub fn revisions(&self) -> Result<Vec<String>, ApiError> {
        let mut out: Vec<String> = Vec::new();
        for r in self.store.revisions()? {
            if !out.contains(&r) {
                out.push(r);
            }
        }
        if out.is_empty() {
            return Err(StoreError::Empty.into());
        }
        Ok(out)
    }

    pub fn spec(&self, text: &str) -> QuerySpec {
        let d = &self.config.defaults;
        QuerySpec {
            hops: d.hops,
            budget: d.node_budget,
            seeds: d.seeds,
            ..QuerySpec::new(text)
        }
    }

    /// Parses a JSON query spec, filling omitted bounds from the config.
    pub fn spec_from_json(&self, mut value: Value) -> Result<QuerySpec, ApiError> {
        let d = &self.config.defaults;
        if let Value::Object(map) = &mut value {
            for (k, v) in [
                ("hops", d.hops),
                ("budget", d.node_budget),
                ("seeds", d.seeds),
            ] {
                map.entry(k).or_insert(Value::from(v));
            }
        }
        serde_json::from_value(value)
            .map_err(|e| ApiError::new(axum::http::StatusCode::BAD_REQUEST, "invalid-spec", e))
    }

    /// Builds every revision of the repository at `repo` into an empty store.
    pub fn build(&mut self, repo: &Path) -> Result<Vec<String>, ApiError> {
        if !self.store.index()?.snapshots.is_empty() {
            return Err(ApiError::new(
                axum::http::StatusCode::CONFLICT,
                "store-not-empty",
                format!(
                    "{} already holds snapshots; use update",
                    self.store.root().display()
                ),
            ));
        }
        let history = load_repo(repo)?;
        let snapshots = fold_history(&history, &Overlay::default(), &self.pipeline)?;
        snapshots
            .iter()
            .map(|s| Ok(self.store.commit(s)?))
            .collect()
    }

    /// Applies the repository commits newer than the latest stored revision.
    pub fn update(&mut self, repo: &Path) -> Result<Vec<String>, ApiError> {
        let history = load_repo(repo)?;
        let mut current = self.load(None)?.snapshot;
        let at = history
            .commits
            .iter()
            .position(|(r, _)| r.revision == current.revision)
            .ok_or_else(|| {
                ApiError::new(
                    axum::http::StatusCode::CONFLICT,
                    "history-conflict",
                    format!(
                        "stored revision {} is not in the repository history",
                        current.revision
                    ),
                )
            })?;
        let mut ids = Vec::new();
        for (i, mut event) in history.events().into_iter().enumerate().skip(at) {
            if i == at {
                event.issues = changed_issues(&current, &history.issues);
            }
            current = apply(&current, &event, &self.pipeline)?;
            ids.push(self.store.commit(&current)?);
        }
        Ok(ids)
    }
}

fn changed_issues(
    snapshot: &TwinSnapshot,
    issues: &[twin_core::history::IssueRecord],
) -> Vec<twin_core::history::IssueRecord> {
    issues
        .iter()
        .filter(|i| !snapshot.sources.issues.contains(i))
        .cloned()
        .collect()
}

fn apply(
    prev: &TwinSnapshot,
    event: &UpdateEvent,
    config: &TwinConfig,
) -> Result<TwinSnapshot, ApiError> {
    Ok(incremental_update(prev, event, config)?.0)
}
