// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::PathBuf;

use twin_core::canonical::canonical_bytes_unchecked;
use twin_core::curation::{apply_delta, ConflictKind, GraphDelta, Overlay};
use twin_core::extractors::FACTS_EXTRACTOR;
use twin_core::knowledge::evidence::{EvidenceFragment, SourceKind};
use twin_core::model::{
    EdgeKey, KnowledgeKind, KnowledgeNode, KnowledgeStatus, Node, NodeId, Relation, TypedEdge,
};
use twin_core::store::{full_rebuild, load_repo, TwinConfig, TwinSnapshot, TwinStore};
use twin_core::writeback::{
    conflict_tasks, propose_update, record_feedback, review, AuthorKind, CurationError,
    CurationLog, Decision, ProposalState, Provenance, Signal, TaskState,
};

const COMMENT: &str = "validate may run async once the mainframe queue lands";

fn config() -> TwinConfig {
    TwinConfig {
        extractor: FACTS_EXTRACTOR.into(),
        ..TwinConfig::default()
    }
}

struct Env {
    _dir: tempfile::TempDir,
    store: TwinStore,
    log: CurationLog,
    snapshot: TwinSnapshot,
}

fn env() -> Env {
    let history =
        load_repo(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/payfix")).unwrap();
    let snapshot = full_rebuild(&history, &Overlay::default(), &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut store = TwinStore::open(dir.path().join("twin")).unwrap();
    store.commit(&snapshot).unwrap();
    let log = CurationLog::for_store(&store).unwrap();
    Env {
        _dir: dir,
        store,
        log,
        snapshot,
    }
}

fn id(s: &str) -> NodeId {
    NodeId::from(s)
}

fn comment() -> Provenance {
    Provenance::ReviewComment {
        key: "rc1".into(),
        text: COMMENT.into(),
    }
}

/// A constraint that allows async validation, opposing ordered-requests.
fn async_allowed() -> GraphDelta {
    let quote = "validate may run async";
    let e = EvidenceFragment::new(
        SourceKind::Discussion,
        "rc1",
        quote,
        0,
        quote.chars().count(),
        "c2",
    );
    let node = id("k:constraint:async-allowed");
    GraphDelta {
        add_nodes: vec![KnowledgeNode {
            id: node.clone(),
            kind: KnowledgeKind::Constraint,
            title: "async allowed".into(),
            summary: "validate may run asynchronously".into(),
            status: KnowledgeStatus::Extracted,
            confidence: 0.5,
        }],
        add_edges: vec![
            TypedEdge::new(
                node.clone(),
                Relation::ConstrainedBy,
                id("a:pay/validator.x#validate"),
            )
            .with_attr("polarity", "supports"),
            TypedEdge::new(node, Relation::EvidencedBy, NodeId::evidence(&e.id)),
        ],
        evidence: vec![e],
        ..GraphDelta::default()
    }
}

fn lines(bytes: Vec<u8>) -> BTreeSet<String> {
    String::from_utf8(bytes)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn accepted_constraint_is_exact_delta_and_raises_conflict() {
    let mut env = env();
    let p = propose_update(
        &env.log,
        &env.snapshot,
        async_allowed(),
        vec![comment()],
        AuthorKind::Assistant,
    )
    .unwrap();
    assert_eq!(p.state, ProposalState::Pending);
    assert_eq!(p.format, "prop/1");
    // proposing leaves the twin alone
    assert_eq!(env.store.index().unwrap().snapshots.len(), 1);

    let before = env.snapshot.clone();
    let out = review(
        &env.log,
        &mut env.store,
        &env.snapshot,
        &p.id,
        Decision::Accept,
        "rita",
        &config(),
    )
    .unwrap();
    let after = out.snapshot.unwrap();
    assert_eq!(out.proposal.state, ProposalState::Accepted);
    assert!(after.validate().is_clean());

    // independent application of the same delta
    let mut expected = before.graph.clone();
    let mut ev = before.evidence.clone();
    apply_delta(&mut expected, &mut ev, &p.delta);
    assert_eq!(after.graph, expected);

    let old = lines(canonical_bytes_unchecked(&before.graph));
    let new = lines(canonical_bytes_unchecked(&after.graph));
    assert!(old.is_subset(&new));
    // one constraint node, one evidence node, two edges
    assert_eq!(new.difference(&old).count(), 4);

    let tasks = conflict_tasks(&after, &BTreeSet::new());
    assert_eq!(tasks.len(), 1);
    let t = &tasks[0];
    assert_eq!(t.kind, ConflictKind::ContradictoryConstraints);
    assert_eq!(
        t.nodes,
        vec![
            id("k:constraint:async-allowed"),
            id("k:constraint:ordered-requests")
        ]
    );
    assert!(t.nodes.len() >= 2 && !t.evidence.is_empty());
    assert_eq!(t.state, TaskState::Open);
    assert!(conflict_tasks(&before, &BTreeSet::new()).is_empty());

    // the latest stored snapshot is the accepted one, loadable
    let loaded = env.store.load(None, &config()).unwrap();
    assert_eq!(loaded.canonical_bytes(), after.canonical_bytes());
    let resolved = env.log.resolve_conflict(&after, &t.id).unwrap();
    assert_eq!(resolved.state, TaskState::Resolved);
    assert_eq!(
        env.log.conflicts(&after).unwrap()[0].state,
        TaskState::Resolved
    );
}

#[test]
fn reject_is_a_no_op_and_review_is_terminal() {
    let mut env = env();
    let p = propose_update(
        &env.log,
        &env.snapshot,
        async_allowed(),
        vec![comment()],
        AuthorKind::Human,
    )
    .unwrap();
    let before_id = env.store.resolve(None).unwrap().id;
    let out = review(
        &env.log,
        &mut env.store,
        &env.snapshot,
        &p.id,
        Decision::Reject,
        "rita",
        &config(),
    )
    .unwrap();
    assert_eq!(out.snapshot_id, before_id);
    assert!(out.snapshot.is_none());
    let latest = env.store.load(None, &config()).unwrap();
    assert_eq!(latest.canonical_bytes(), env.snapshot.canonical_bytes());
    for d in [Decision::Reject, Decision::Accept] {
        let err = review(
            &env.log,
            &mut env.store,
            &env.snapshot,
            &p.id,
            d,
            "rita",
            &config(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CurationError::NotPending {
                state: ProposalState::Rejected,
                ..
            }
        ));
    }
    assert_eq!(
        env.log.proposal(&p.id).unwrap().state,
        ProposalState::Rejected
    );
    assert_eq!(env.log.events().unwrap().len(), 1);
}

#[test]
fn invalid_proposals_never_enter_the_log() {
    let env = env();
    let mut dangling = async_allowed();
    dangling.add_edges.push(TypedEdge::new(
        id("k:constraint:async-allowed"),
        Relation::ConstrainedBy,
        id("a:pay/nowhere.x#ghost"),
    ));
    let err = propose_update(
        &env.log,
        &env.snapshot,
        dangling,
        vec![comment()],
        AuthorKind::Assistant,
    )
    .unwrap_err();
    assert!(matches!(err, CurationError::SchemaViolation(_)));
    let err = propose_update(
        &env.log,
        &env.snapshot,
        GraphDelta::default(),
        vec![comment()],
        AuthorKind::Human,
    )
    .unwrap_err();
    assert!(matches!(err, CurationError::EmptyDelta));
    let bad_rev = vec![Provenance::Revision {
        revision: "c9".into(),
    }];
    let err = propose_update(
        &env.log,
        &env.snapshot,
        async_allowed(),
        bad_rev,
        AuthorKind::Human,
    )
    .unwrap_err();
    assert!(matches!(err, CurationError::DanglingProvenance(_)));
    // the quote must match the review comment it cites
    let other = vec![Provenance::ReviewComment {
        key: "rc1".into(),
        text: "something else entirely".into(),
    }];
    let err = propose_update(
        &env.log,
        &env.snapshot,
        async_allowed(),
        other,
        AuthorKind::Human,
    )
    .unwrap_err();
    assert!(matches!(err, CurationError::SchemaViolation(_)));
    assert!(env.log.proposals().unwrap().is_empty());
}

#[test]
fn feedback_recalibrates_and_is_append_only() {
    let mut env = env();
    let r = id("k:rationale:mainframe-ordered-requests");
    let prov = Provenance::Revision {
        revision: "c1".into(),
    };
    let (e1, s1, _) = record_feedback(
        &env.log,
        &mut env.store,
        &env.snapshot,
        Signal::PatchAccepted,
        vec![r.clone()],
        prov.clone(),
        &config(),
    )
    .unwrap();
    let conf = |s: &TwinSnapshot| match s.graph.node(&r) {
        Some(Node::Knowledge(k)) => k.confidence,
        _ => panic!("missing rationale"),
    };
    assert!((conf(&s1) - 2.0 / 3.0).abs() < 1e-12);
    let (e2, s2, _) = record_feedback(
        &env.log,
        &mut env.store,
        &s1,
        Signal::PatchRejected,
        vec![r.clone()],
        prov.clone(),
        &config(),
    )
    .unwrap();
    assert_eq!(conf(&s2), 0.5);
    assert_eq!(env.log.events().unwrap(), vec![e1, e2]);
    assert!(s2.validate().is_clean());

    let err = record_feedback(
        &env.log,
        &mut env.store,
        &s2,
        Signal::PatchAccepted,
        vec![id("k:rationale:nope")],
        prov,
        &config(),
    )
    .unwrap_err();
    assert!(matches!(err, CurationError::DanglingSubject(_)));
    assert_eq!(env.log.events().unwrap().len(), 2);
}

#[test]
fn exclusive_assignment_to_two_files_is_flagged() {
    let mut env = env();
    let resp = id("k:responsibility:validate");
    let target = id("a:pay/gateway.x");
    let delta = GraphDelta {
        remove_edges: vec![EdgeKey::new(
            resp.clone(),
            Relation::AssignedTo,
            target.clone(),
        )],
        add_edges: vec![TypedEdge::new(resp.clone(), Relation::AssignedTo, target)
            .with_attr("exclusive", "true")],
        ..GraphDelta::default()
    };
    let p = propose_update(
        &env.log,
        &env.snapshot,
        delta,
        vec![Provenance::Issue { key: "#57".into() }],
        AuthorKind::Human,
    )
    .unwrap();
    let out = review(
        &env.log,
        &mut env.store,
        &env.snapshot,
        &p.id,
        Decision::Accept,
        "rita",
        &config(),
    )
    .unwrap();
    let tasks = conflict_tasks(out.snapshot.as_ref().unwrap(), &BTreeSet::new());
    assert_eq!(tasks.len(), 1);
    assert_eq!(tasks[0].kind, ConflictKind::DuplicateExclusiveAssignment);
    assert_eq!(tasks[0].target, resp);
    assert!(!tasks[0].evidence.is_empty());
}
