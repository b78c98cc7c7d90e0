// SPDX-License-Identifier: Apache-2.0

//! Writeback: update proposals (`prop/1`), their review, the append-only
//! feedback log (`evt/1`) and conflict tasks. State lives in a directory
//! beside the snapshots so pending work survives restarts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{
    check_delta, detect_conflicts, recalibrate, ConflictKind, GraphDelta, Tally,
};
use crate::knowledge::evidence::EvidenceSources;
use crate::model::{KnowledgeStatus, Node, NodeId, Relation};
use crate::store::{reapply_overlay, StoreError, TwinConfig, TwinSnapshot, TwinStore};
use crate::text::digest;
use crate::validate::ValidationReport;

pub const PROP_FORMAT: &str = "prop/1";
pub const EVT_FORMAT: &str = "evt/1";

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("proposal does not validate:\n{0}")]
    SchemaViolation(ValidationReport),
    #[error("provenance does not resolve: {0}")]
    DanglingProvenance(String),
    #[error("empty delta; nothing to propose")]
    EmptyDelta,
    #[error("unknown proposal `{0}`")]
    UnknownProposal(String),
    #[error("proposal `{id}` is {state}, not pending")]
    NotPending { id: String, state: ProposalState },
    #[error("accepting `{id}` fails validation; proposal left pending:\n{report}")]
    AcceptFailed {
        id: String,
        report: ValidationReport,
    },
    #[error("feedback subject `{0}` does not resolve")]
    DanglingSubject(NodeId),
    #[error("feedback event names no subjects")]
    NoSubjects,
    #[error("unknown conflict task `{0}`")]
    UnknownConflict(String),
    #[error("curation log I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt curation file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthorKind {
    Assistant,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalState {
    Pending,
    Accepted,
    Rejected,
}

impl std::fmt::Display for ProposalState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProposalState::Pending => "pending",
            ProposalState::Accepted => "accepted",
            ProposalState::Rejected => "rejected",
        })
    }
}

/// What a proposal or event is traced to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Revision {
        revision: String,
    },
    Issue {
        key: String,
    },
    /// A reviewer's remark; its text becomes a discussion source that
    /// evidence fragments may quote.
    ReviewComment {
        key: String,
        text: String,
    },
}

impl Provenance {
    fn check(&self, snapshot: &TwinSnapshot) -> Result<(), CurationError> {
        let ok = match self {
            Provenance::Revision { revision } => snapshot.revision_index(revision).is_some(),
            Provenance::Issue { key } => snapshot.sources.issues.iter().any(|i| &i.key == key),
            Provenance::ReviewComment { key, text } => {
                !key.trim().is_empty()
                    && !text.trim().is_empty()
                    && snapshot
                        .overlay
                        .discussions
                        .get(key)
                        .is_none_or(|t| t == text)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CurationError::DanglingProvenance(
                serde_json::to_string(self).expect("serializable"),
            ))
        }
    }

    fn discussion(&self) -> Option<(&String, &String)> {
        match self {
            Provenance::ReviewComment { key, text } => Some((key, text)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateProposal {
    pub format: String,
    pub id: String,
    pub author: AuthorKind,
    pub delta: GraphDelta,
    pub provenance: Vec<Provenance>,
    pub state: ProposalState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
    /// Findings from a failed accept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    PatchAccepted,
    PatchRejected,
    SuggestionChosen,
    ContextCorrected,
    SummaryEdited,
    BoundaryOverridden,
    /// Review decisions are logged but never move confidence.
    ProposalAccepted,
    ProposalRejected,
}

impl Signal {
    /// `Some(true)` for positive, `Some(false)` for negative signals.
    pub fn polarity(self) -> Option<bool> {
        match self {
            Signal::PatchAccepted | Signal::SuggestionChosen => Some(true),
            Signal::PatchRejected | Signal::ContextCorrected | Signal::BoundaryOverridden => {
                Some(false)
            }
            Signal::SummaryEdited | Signal::ProposalAccepted | Signal::ProposalRejected => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub format: String,
    pub id: String,
    /// Position in the log.
    pub index: usize,
    pub signal: Signal,
    pub subjects: Vec<NodeId>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskState {
    Open,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictTask {
    pub id: String,
    pub kind: ConflictKind,
    pub nodes: Vec<NodeId>,
    pub target: NodeId,
    pub aspect: String,
    pub evidence: Vec<String>,
    pub state: TaskState,
}

/// Per-node accept/reject counts over the whole log.
pub fn tallies(events: &[FeedbackEvent]) -> BTreeMap<NodeId, Tally> {
    let mut out: BTreeMap<NodeId, Tally> = BTreeMap::new();
    for e in events {
        let Some(positive) = e.signal.polarity() else {
            continue;
        };
        for s in e.subjects.iter().collect::<BTreeSet<_>>() {
            let t = out.entry(s.clone()).or_default();
            if positive {
                t.accepted += 1;
            } else {
                t.rejected += 1;
            }
        }
    }
    out
}

/// Confidence of `subject` given the log; 0.5 with no signals.
pub fn confidence(subject: &NodeId, events: &[FeedbackEvent]) -> f64 {
    let t = tallies(events).get(subject).copied().unwrap_or_default();
    recalibrate(t.accepted, t.rejected)
}

/// Detected conflicts as curation tasks, each carrying the evidence of the
/// nodes involved. Nothing is resolved automatically.
pub fn conflict_tasks(snapshot: &TwinSnapshot, resolved: &BTreeSet<String>) -> Vec<ConflictTask> {
    let graph = &snapshot.graph;
    let evidence_of = |id: &NodeId| -> Vec<String> {
        graph
            .incident(id)
            .filter(|(k, _)| &k.source == id && k.relation == Relation::EvidencedBy)
            .filter_map(|(k, _)| match graph.node(&k.target) {
                Some(Node::History(h)) => Some(h.key.clone()),
                _ => None,
            })
            .collect()
    };
    detect_conflicts(graph)
        .into_iter()
        .map(|c| {
            let mut evidence: BTreeSet<String> =
                c.nodes.iter().flat_map(|n| evidence_of(n)).collect();
            evidence.extend(evidence_of(&c.target));
            let nodes: Vec<&str> = c.nodes.iter().map(NodeId::as_str).collect();
            let key = format!("{:?}|{}|{}|{}", c.kind, nodes.join(","), c.target, c.aspect);
            let id = format!("t-{}", &digest(&key)[..10]);
            let state = if resolved.contains(&id) {
                TaskState::Resolved
            } else {
                TaskState::Open
            };
            ConflictTask {
                id,
                kind: c.kind,
                nodes: c.nodes,
                target: c.target,
                aspect: c.aspect,
                evidence: evidence.into_iter().collect(),
                state,
            }
        })
        .collect()
}

/// On-disk curation state:
///
/// ```text
/// <dir>/proposals/<id>.json   one prop/1 document each
/// <dir>/events.jsonl          evt/1, one event per line, append-only
/// <dir>/resolved.json         ids of conflict tasks marked resolved
/// ```
#[derive(Debug, Clone)]
pub struct CurationLog {
    dir: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CurationError + '_ {
    move |source| CurationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, e: impl ToString) -> CurationError {
    CurationError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

impl CurationLog {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CurationError> {
        let dir = dir.into();
        let proposals = dir.join("proposals");
        fs::create_dir_all(&proposals).map_err(io(&proposals))?;
        Ok(CurationLog { dir })
    }

    pub fn for_store(store: &TwinStore) -> Result<Self, CurationError> {
        Self::open(store.curation_dir())
    }

    fn events_path(&self) -> PathBuf {
        self.dir.join("events.jsonl")
    }

    fn resolved_path(&self) -> PathBuf {
        self.dir.join("resolved.json")
    }

    fn proposal_path(&self, id: &str) -> PathBuf {
        self.dir.join("proposals").join(format!("{id}.json"))
    }

    /// All proposals, in id order.
    pub fn proposals(&self) -> Result<Vec<UpdateProposal>, CurationError> {
        let dir = self.dir.join("proposals");
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| self.read_proposal(p)).collect()
    }

    fn read_proposal(&self, path: &Path) -> Result<UpdateProposal, CurationError> {
        let bytes = fs::read(path).map_err(io(path))?;
        let p: UpdateProposal = serde_json::from_slice(&bytes).map_err(|e| corrupt(path, e))?;
        if p.format != PROP_FORMAT {
            return Err(corrupt(
                path,
                format!("expected format {PROP_FORMAT}, found {}", p.format),
            ));
        }
        Ok(p)
    }

    pub fn proposal(&self, id: &str) -> Result<UpdateProposal, CurationError> {
        let path = self.proposal_path(id);
        if !path.exists() {
            return Err(CurationError::UnknownProposal(id.to_string()));
        }
        self.read_proposal(&path)
    }

    fn save(&self, p: &UpdateProposal) -> Result<(), CurationError> {
        let path = self.proposal_path(&p.id);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(p).expect("serializable")).map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))
    }

    fn next_proposal_id(&self) -> Result<String, CurationError> {
        Ok(format!("p{:04}", self.proposals()?.len() + 1))
    }

    pub fn events(&self) -> Result<Vec<FeedbackEvent>, CurationError> {
        let path = self.events_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| corrupt(&path, e)))
            .collect()
    }

    fn append(
        &self,
        signal: Signal,
        subjects: Vec<NodeId>,
        provenance: Provenance,
    ) -> Result<FeedbackEvent, CurationError> {
        let index = self.events()?.len();
        let event = FeedbackEvent {
            format: EVT_FORMAT.into(),
            id: format!("e{:06}", index + 1),
            index,
            signal,
            subjects,
            provenance,
        };
        let path = self.events_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        let mut line = serde_json::to_vec(&event).expect("serializable");
        line.push(b'\n');
        f.write_all(&line).map_err(io(&path))?;
        Ok(event)
    }

    pub fn resolved(&self) -> Result<BTreeSet<String>, CurationError> {
        let path = self.resolved_path();
        if !path.exists() {
            return Ok(BTreeSet::new());
        }
        let bytes = fs::read(&path).map_err(io(&path))?;
        serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e))
    }

    /// Marks an open conflict task as resolved by a curator.
    pub fn resolve_conflict(
        &self,
        snapshot: &TwinSnapshot,
        id: &str,
    ) -> Result<ConflictTask, CurationError> {
        let mut resolved = self.resolved()?;
        let mut task = conflict_tasks(snapshot, &resolved)
            .into_iter()
            .find(|t| t.id == id)
            .ok_or_else(|| CurationError::UnknownConflict(id.to_string()))?;
        resolved.insert(id.to_string());
        let path = self.resolved_path();
        fs::write(
            &path,
            serde_json::to_vec_pretty(&resolved).expect("serializable"),
        )
        .map_err(io(&path))?;
        task.state = TaskState::Resolved;
        Ok(task)
    }

    pub fn conflicts(&self, snapshot: &TwinSnapshot) -> Result<Vec<ConflictTask>, CurationError> {
        Ok(conflict_tasks(snapshot, &self.resolved()?))
    }
}

/// Added nodes enter as curated, matching what applying them produces.
fn normalize(mut delta: GraphDelta) -> GraphDelta {
    for n in &mut delta.add_nodes {
        n.status = KnowledgeStatus::Curated;
    }
    delta
}

fn dry_run(
    snapshot: &TwinSnapshot,
    delta: &GraphDelta,
    provenance: &[Provenance],
) -> ValidationReport {
    let mut discussions = snapshot.overlay.discussions.clone();
    for (k, t) in provenance.iter().filter_map(Provenance::discussion) {
        discussions.insert(k.clone(), t.clone());
    }
    let sources = EvidenceSources {
        discussions: &discussions,
        ..snapshot.evidence_sources()
    };
    check_delta(&snapshot.graph, &snapshot.evidence, &sources, delta)
}

/// Validates `delta` as if applied and records it as pending. The snapshot
/// is not touched.
pub fn propose_update(
    log: &CurationLog,
    snapshot: &TwinSnapshot,
    delta: GraphDelta,
    provenance: Vec<Provenance>,
    author: AuthorKind,
) -> Result<UpdateProposal, CurationError> {
    if delta.is_empty() {
        return Err(CurationError::EmptyDelta);
    }
    if provenance.is_empty() {
        return Err(CurationError::DanglingProvenance(
            "no provenance given".into(),
        ));
    }
    for p in &provenance {
        p.check(snapshot)?;
    }
    let delta = normalize(delta);
    let report = dry_run(snapshot, &delta, &provenance);
    if !report.is_clean() {
        return Err(CurationError::SchemaViolation(report));
    }
    let proposal = UpdateProposal {
        format: PROP_FORMAT.into(),
        id: log.next_proposal_id()?,
        author,
        delta,
        provenance,
        state: ProposalState::Pending,
        reviewer: None,
        findings: Vec::new(),
    };
    log.save(&proposal)?;
    Ok(proposal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone)]
pub struct ReviewOutcome {
    pub proposal: UpdateProposal,
    /// Store id of the snapshot current after the review.
    pub snapshot_id: String,
    /// The new snapshot, when accepting produced one.
    pub snapshot: Option<TwinSnapshot>,
    pub event: FeedbackEvent,
}

/// Decides a pending proposal against `current`, the latest committed
/// snapshot. Rejecting changes nothing but the proposal and the log.
pub fn review(
    log: &CurationLog,
    store: &mut TwinStore,
    current: &TwinSnapshot,
    id: &str,
    decision: Decision,
    reviewer: &str,
    config: &TwinConfig,
) -> Result<ReviewOutcome, CurationError> {
    let mut proposal = log.proposal(id)?;
    if proposal.state != ProposalState::Pending {
        return Err(CurationError::NotPending {
            id: id.to_string(),
            state: proposal.state,
        });
    }
    let provenance = Provenance::ReviewComment {
        key: format!("review:{id}"),
        text: format!(
            "{} by {reviewer}",
            if decision == Decision::Accept {
                "accepted"
            } else {
                "rejected"
            }
        ),
    };
    let subjects = proposal_subjects(&proposal, current);
    match decision {
        Decision::Reject => {
            proposal.state = ProposalState::Rejected;
            proposal.reviewer = Some(reviewer.to_string());
            log.save(&proposal)?;
            let event = log.append(Signal::ProposalRejected, subjects, provenance)?;
            let snapshot_id = store.resolve(None)?.id;
            Ok(ReviewOutcome {
                proposal,
                snapshot_id,
                snapshot: None,
                event,
            })
        }
        Decision::Accept => {
            let mut report = dry_run(current, &proposal.delta, &proposal.provenance);
            let next = if report.is_clean() {
                let mut overlay = current.overlay.clone();
                for (k, t) in proposal
                    .provenance
                    .iter()
                    .filter_map(Provenance::discussion)
                {
                    overlay.discussions.insert(k.clone(), t.clone());
                }
                overlay.accepted.push(proposal.delta.clone());
                match reapply_overlay(current, overlay, config) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        report.push(id, "rebuild", e.to_string());
                        None
                    }
                }
            } else {
                None
            };
            let Some(next) = next else {
                proposal.findings = report.findings.iter().map(ToString::to_string).collect();
                log.save(&proposal)?;
                return Err(CurationError::AcceptFailed {
                    id: id.to_string(),
                    report,
                });
            };
            let snapshot_id = match store.commit(&next) {
                Ok(sid) => sid,
                Err(StoreError::Invalid(report)) => {
                    proposal.findings = report.findings.iter().map(ToString::to_string).collect();
                    log.save(&proposal)?;
                    return Err(CurationError::AcceptFailed {
                        id: id.to_string(),
                        report,
                    });
                }
                Err(e) => return Err(e.into()),
            };
            proposal.state = ProposalState::Accepted;
            proposal.reviewer = Some(reviewer.to_string());
            proposal.findings.clear();
            log.save(&proposal)?;
            let event = log.append(Signal::ProposalAccepted, subjects, provenance)?;
            Ok(ReviewOutcome {
                proposal,
                snapshot_id,
                snapshot: Some(next),
                event,
            })
        }
    }
}

/// Nodes a proposal touches that exist in `snapshot`, for the review event.
fn proposal_subjects(p: &UpdateProposal, snapshot: &TwinSnapshot) -> Vec<NodeId> {
    let d = &p.delta;
    let ids = d
        .update_nodes
        .iter()
        .map(|u| &u.id)
        .chain(&d.remove_nodes)
        .chain(d.add_edges.iter().flat_map(|e| [&e.source, &e.target]))
        .chain(d.remove_edges.iter().flat_map(|k| [&k.source, &k.target]))
        .filter(|id| snapshot.graph.contains(id));
    ids.cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Appends an event, recalibrates its subjects and commits the resulting
/// snapshot. Returns the event, the snapshot and its store id.
pub fn record_feedback(
    log: &CurationLog,
    store: &mut TwinStore,
    current: &TwinSnapshot,
    signal: Signal,
    subjects: Vec<NodeId>,
    provenance: Provenance,
    config: &TwinConfig,
) -> Result<(FeedbackEvent, TwinSnapshot, String), CurationError> {
    if subjects.is_empty() {
        return Err(CurationError::NoSubjects);
    }
    if let Some(s) = subjects.iter().find(|s| !current.graph.contains(s)) {
        return Err(CurationError::DanglingSubject(s.clone()));
    }
    provenance.check(current)?;
    let event = log.append(signal, subjects, provenance)?;
    let mut overlay = current.overlay.clone();
    overlay.feedback = tallies(&log.events()?);
    let next = reapply_overlay(current, overlay, config).map_err(StoreError::from)?;
    let id = store.commit(&next)?;
    Ok((event, next, id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(signal: Signal, subject: &str) -> FeedbackEvent {
        FeedbackEvent {
            format: EVT_FORMAT.into(),
            id: "e".into(),
            index: 0,
            signal,
            subjects: vec![NodeId::from(subject)],
            provenance: Provenance::Revision {
                revision: "c1".into(),
            },
        }
    }

    #[test]
    fn confidence_from_log() {
        let r = "k:rationale:r";
        assert_eq!(confidence(&NodeId::from(r), &[]), 0.5);
        let mut log = vec![ev(Signal::PatchAccepted, r); 3];
        log.push(ev(Signal::PatchRejected, r));
        log.push(ev(Signal::SummaryEdited, r));
        log.push(ev(Signal::ProposalAccepted, r));
        assert!((confidence(&NodeId::from(r), &log) - 4.0 / 6.0).abs() < 1e-12);
        log.reverse();
        assert!((confidence(&NodeId::from(r), &log) - 4.0 / 6.0).abs() < 1e-12);
        let two = vec![
            ev(Signal::ContextCorrected, r),
            ev(Signal::BoundaryOverridden, r),
        ];
        assert_eq!(confidence(&NodeId::from(r), &two), 0.25);
    }
}
