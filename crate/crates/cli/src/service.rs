// SPDX-License-Identifier: Apache-2.0

//! HTTP service. Bodies are the module wire formats verbatim; every
//! response names the snapshot it was served from in the `x-twin-revision`
//! and `x-twin-snapshot` headers.

use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Mutex;
use twin_core::context::compile_package;
use twin_core::curation::GraphDelta;
use twin_core::model::NodeId;
use twin_core::query::{impact_of_change, run_query, select_revision, QuerySpec, TwinSubgraph};
use twin_core::writeback::{
    propose_update, record_feedback, review, AuthorKind, Decision, FeedbackEvent, ProposalState,
    Provenance, Signal, UpdateProposal,
};

use crate::error::ApiError;
use crate::twin::{to_json, Loaded, NodeView, Twin};

pub const REVISION_HEADER: &str = "x-twin-revision";
pub const SNAPSHOT_HEADER: &str = "x-twin-snapshot";

pub struct AppState {
    /// Snapshot every read is served from; replaced whole after a write.
    current: RwLock<Arc<Loaded>>,
    /// Single writer for store and curation log.
    writer: Mutex<Twin>,
    /// Read-side handle for older revisions and the curation log.
    reader: Twin,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(twin: Twin) -> Result<Shared, ApiError> {
        let current = twin.load(None)?;
        let reader = Twin::open(twin.config.clone())?;
        Ok(Arc::new(AppState {
            current: RwLock::new(Arc::new(current)),
            writer: Mutex::new(twin),
            reader,
        }))
    }

    pub fn current(&self) -> Arc<Loaded> {
        self.current.read().expect("snapshot lock").clone()
    }

    fn replace(&self, next: Loaded) {
        *self.current.write().expect("snapshot lock") = Arc::new(next);
    }

    /// The current snapshot, or a stored one when `revision` names another.
    fn at(&self, revision: Option<&str>) -> Result<Arc<Loaded>, ApiError> {
        let cur = self.current();
        match revision {
            None => Ok(cur),
            Some(r) if r == cur.snapshot.revision => Ok(cur),
            Some(r) => Ok(Arc::new(self.reader.load(Some(r))?)),
        }
    }
}

fn stamped(
    loaded: &Loaded,
    status: StatusCode,
    content_type: &'static str,
    body: String,
) -> Response {
    let mut res = (status, [(header::CONTENT_TYPE, content_type)], body).into_response();
    let h = res.headers_mut();
    h.insert(
        REVISION_HEADER,
        HeaderValue::from_str(&loaded.snapshot.revision).expect("ascii revision"),
    );
    h.insert(
        SNAPSHOT_HEADER,
        HeaderValue::from_str(&loaded.id).expect("ascii id"),
    );
    res
}

fn json(loaded: &Loaded, body: String) -> Response {
    stamped(loaded, StatusCode::OK, "application/json", body)
}

fn text(loaded: &Loaded, body: String) -> Response {
    stamped(loaded, StatusCode::OK, "text/plain; charset=utf-8", body)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/revisions", get(revisions))
        .route("/nodes/{*id}", get(node))
        .route("/cards/{*id}", get(card))
        .route("/query", post(query))
        .route("/impact", post(impact))
        .route("/context", post(context))
        .route("/proposals", get(list_proposals).post(create_proposal))
        .route("/proposals/{id}/review", post(review_proposal))
        .route("/feedback", get(list_feedback).post(feedback))
        .route("/conflicts", get(conflicts))
        .with_state(state)
}

async fn revisions(State(s): State<Shared>) -> Result<Response, ApiError> {
    let cur = s.current();
    Ok(json(&cur, to_json(&s.reader.revisions()?)))
}

async fn node(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let cur = s.current();
    let view = NodeView::of(&cur.snapshot, &NodeId::from(id.as_str()))
        .ok_or_else(|| ApiError::not_found(format!("unknown node {id}")))?;
    Ok(json(&cur, to_json(&view)))
}

async fn card(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let cur = s.current();
    let card = cur
        .snapshot
        .card_text(&NodeId::from(id.as_str()))
        .ok_or_else(|| ApiError::not_found(format!("no card for {id}")))?;
    Ok(text(&cur, card))
}

/// Applies revision scoping, then returns the snapshot and spec to run.
fn scoped(s: &AppState, spec: &QuerySpec) -> Result<Arc<Loaded>, ApiError> {
    let revisions = s.reader.revisions()?;
    let rev = select_revision(spec, &revisions)?;
    s.at(Some(&rev))
}

async fn query(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let spec = s.reader.spec_from_json(parse::<Value>(&body)?)?;
    let at = scoped(&s, &spec)?;
    let g = run_query(&spec, &at.snapshot, s.reader.weights())?;
    Ok(json(&at, g.to_json()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpactRequest {
    pub node: NodeId,
    #[serde(default)]
    pub hops: Option<usize>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub revision: Option<String>,
}

async fn impact(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: ImpactRequest = parse(&body)?;
    let at = s.at(req.revision.as_deref())?;
    let d = &s.reader.config.defaults;
    let g = impact_of_change(
        &req.node,
        &at.snapshot,
        req.hops.unwrap_or(d.impact_hops),
        req.budget.unwrap_or(d.node_budget),
        s.reader.weights(),
    )?;
    Ok(json(&at, g.to_json()))
}

/// Either an inline `qres/1` subgraph or a query spec to run first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextRequest {
    #[serde(default)]
    pub subgraph: Option<TwinSubgraph>,
    #[serde(default)]
    pub spec: Option<Value>,
    #[serde(default)]
    pub budget: Option<usize>,
}

async fn context(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: ContextRequest = parse(&body)?;
    let budget = req.budget.unwrap_or(s.reader.config.defaults.token_budget);
    let (at, subgraph) = match (req.subgraph, req.spec) {
        (Some(g), None) => (s.at(Some(&g.revision))?, g),
        (None, Some(v)) => {
            let spec = s.reader.spec_from_json(v)?;
            let at = scoped(&s, &spec)?;
            let g = run_query(&spec, &at.snapshot, s.reader.weights())?;
            (at, g)
        }
        _ => {
            return Err(ApiError::bad_request(
                "give exactly one of `subgraph` or `spec`",
            ))
        }
    };
    let package = compile_package(&subgraph, budget, &at.snapshot)?;
    Ok(text(&at, package.render()))
}

#[derive(Debug, Clone, Deserialize)]
pub struct ProposalFilter {
    pub state: Option<ProposalState>,
}

async fn list_proposals(
    State(s): State<Shared>,
    Query(f): Query<ProposalFilter>,
) -> Result<Response, ApiError> {
    let cur = s.current();
    let all: Vec<UpdateProposal> = s
        .reader
        .log
        .proposals()?
        .into_iter()
        .filter(|p| f.state.is_none_or(|st| p.state == st))
        .collect();
    Ok(json(&cur, to_json(&all)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposalRequest {
    pub delta: GraphDelta,
    pub provenance: Vec<Provenance>,
    pub author: AuthorKind,
}

async fn create_proposal(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: ProposalRequest = parse(&body)?;
    let w = s.writer.lock().await;
    let cur = s.current();
    let p = propose_update(&w.log, &cur.snapshot, req.delta, req.provenance, req.author)?;
    Ok(stamped(
        &cur,
        StatusCode::CREATED,
        "application/json",
        to_json(&p),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub decision: Decision,
    pub reviewer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewReply {
    pub proposal: UpdateProposal,
    pub event: FeedbackEvent,
    pub snapshot: String,
}

async fn review_proposal(
    State(s): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: ReviewRequest = parse(&body)?;
    let mut w = s.writer.lock().await;
    let cur = s.current();
    let Twin {
        log,
        store,
        pipeline,
        ..
    } = &mut *w;
    let out = review(
        log,
        store,
        &cur.snapshot,
        &id,
        req.decision,
        &req.reviewer,
        pipeline,
    )?;
    let reply = ReviewReply {
        proposal: out.proposal,
        event: out.event,
        snapshot: out.snapshot_id.clone(),
    };
    let served = match out.snapshot {
        Some(snapshot) => {
            s.replace(Loaded {
                id: out.snapshot_id,
                snapshot,
            });
            s.current()
        }
        None => cur,
    };
    Ok(json(&served, to_json(&reply)))
}

async fn list_feedback(State(s): State<Shared>) -> Result<Response, ApiError> {
    let cur = s.current();
    Ok(json(&cur, to_json(&s.reader.log.events()?)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub signal: Signal,
    pub subjects: Vec<NodeId>,
    pub provenance: Provenance,
}

async fn feedback(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: FeedbackRequest = parse(&body)?;
    let mut w = s.writer.lock().await;
    let cur = s.current();
    let Twin {
        log,
        store,
        pipeline,
        ..
    } = &mut *w;
    let (event, snapshot, id) = record_feedback(
        log,
        store,
        &cur.snapshot,
        req.signal,
        req.subjects,
        req.provenance,
        pipeline,
    )?;
    s.replace(Loaded { id, snapshot });
    let served = s.current();
    Ok(stamped(
        &served,
        StatusCode::CREATED,
        "application/json",
        to_json(&event),
    ))
}

async fn conflicts(State(s): State<Shared>) -> Result<Response, ApiError> {
    let cur = s.current();
    Ok(json(&cur, to_json(&s.reader.log.conflicts(&cur.snapshot)?)))
}

/// Serves until the process stops.
pub async fn serve(twin: Twin) -> Result<(), ApiError> {
    let listen = twin.config.listen.clone();
    let state = AppState::new(twin)?;
    let listener = tokio::net::TcpListener::bind(&listen).await.map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "listen-failed",
            format!("{listen}: {e}"),
        )
    })?;
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "serve-failed", e))
}
