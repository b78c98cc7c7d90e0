// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::PathBuf;

use twin_core::curation::Overlay;
use twin_core::extractors::FACTS_EXTRACTOR;
use twin_core::history::ChangeRecord;
use twin_core::model::{NodeId, Relation};
use twin_core::store::pipeline::check_against_rebuild;
use twin_core::store::snapshot::FileChanges;
use twin_core::store::{
    full_rebuild, incremental_update, load_repo, RepoHistory, TwinConfig, TwinSnapshot, UpdateEvent,
};

fn payfix() -> RepoHistory {
    load_repo(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/payfix")).unwrap()
}

fn config() -> TwinConfig {
    TwinConfig {
        extractor: FACTS_EXTRACTOR.into(),
        ..TwinConfig::default()
    }
}

fn build(history: &RepoHistory) -> TwinSnapshot {
    full_rebuild(history, &Overlay::default(), &config()).unwrap()
}

fn id(s: &str) -> NodeId {
    NodeId::from(s)
}

fn has_edge(s: &TwinSnapshot, src: &str, rel: Relation, tgt: &str) -> bool {
    s.graph
        .edges
        .keys()
        .any(|k| k.source == id(src) && k.relation == rel && k.target == id(tgt))
}

fn truncated(history: &RepoHistory, n: usize) -> RepoHistory {
    RepoHistory {
        commits: history.commits[..n].to_vec(),
        issues: history.issues.clone(),
    }
}

/// The c2 commit expressed as a change event against the c1 snapshot.
fn c2_event(history: &RepoHistory) -> UpdateEvent {
    let (record, tree) = &history.commits[1];
    let before = &history.commits[0].1;
    let files: FileChanges = tree
        .iter()
        .filter(|(p, t)| before.get(*p) != Some(*t))
        .map(|(p, t)| (p.clone(), Some(t.clone())))
        .collect();
    UpdateEvent::commit(record.clone(), files)
}

#[test]
fn artifact_census_at_head() {
    let s = build(&payfix());
    // hand count: 5 files, charge, validate, retry.max, test_validate
    assert_eq!(s.graph.artifacts().count(), 9);
    let artifact_edges = s
        .graph
        .edges
        .keys()
        .filter(|k| k.relation.is_artifact())
        .count();
    // 4 contains + calls + configured-by + tests + imports
    assert_eq!(artifact_edges, 8);
    assert!(s.unresolved.is_empty());
    assert!(has_edge(
        &s,
        "a:pay/gateway.x#charge",
        Relation::Calls,
        "a:pay/validator.x#validate"
    ));
    assert!(s.validate().is_clean());
}

#[test]
fn earlier_revision_has_smaller_census() {
    let full = build(&payfix());
    let c1 = build(&truncated(&payfix(), 1));
    assert!(c1.graph.nodes.len() < full.graph.nodes.len());
    assert!(!c1.graph.contains(&id("a:pay/gateway.x")));
    assert!(!c1.graph.contains(&id("k:rationale:flaky-network")));
    assert!(c1
        .graph
        .contains(&id("k:rationale:mainframe-ordered-requests")));
}

#[test]
fn knowledge_extracted_from_docs_commits_and_call_graph() {
    let s = build(&payfix());
    let constraint = "k:constraint:ordered-requests";
    assert!(has_edge(
        &s,
        constraint,
        Relation::ConstrainedBy,
        "k:concept:payment-validation"
    ));
    assert!(has_edge(
        &s,
        constraint,
        Relation::ConstrainedBy,
        "a:pay/validator.x#validate"
    ));
    let rationale = "k:rationale:mainframe-ordered-requests";
    assert!(has_edge(
        &s,
        rationale,
        Relation::JustifiedBy,
        "a:pay/validator.x#validate"
    ));
    assert!(has_edge(
        &s,
        rationale,
        Relation::JustifiedBy,
        "a:pay/validator.x"
    ));
    let retry = "k:rationale:flaky-network";
    assert!(has_edge(
        &s,
        retry,
        Relation::JustifiedBy,
        "a:pay/gateway.x#charge"
    ));
    assert!(has_edge(
        &s,
        retry,
        Relation::JustifiedBy,
        "a:settings.cfg#retry.max"
    ));
    assert!(!s
        .graph
        .knowledge()
        .any(|k| k.id.as_str().starts_with("k:constraint:") && k.id.as_str() != constraint));

    let func = "k:functionality:validate";
    assert!(has_edge(
        &s,
        "k:concept:payment-validation",
        Relation::OperationalizedBy,
        func
    ));
    assert!(has_edge(
        &s,
        "a:pay/gateway.x#charge",
        Relation::Implements,
        func
    ));
    assert!(has_edge(
        &s,
        "a:pay/validator.x#validate",
        Relation::Implements,
        func
    ));
    assert!(has_edge(
        &s,
        func,
        Relation::GDependsOn,
        "a:settings.cfg#retry.max"
    ));
    assert!(has_edge(
        &s,
        "k:responsibility:validate",
        Relation::AssignedTo,
        "a:pay/gateway.x"
    ));
    assert!(has_edge(
        &s,
        "k:responsibility:validate",
        Relation::AssignedTo,
        "a:pay/validator.x"
    ));
}

#[test]
fn every_knowledge_node_has_a_card_with_evidence() {
    let s = build(&payfix());
    let knowledge: BTreeSet<&NodeId> = s.graph.knowledge().map(|k| &k.id).collect();
    assert_eq!(knowledge, s.cards.keys().collect());
    for card in s.cards.values() {
        assert!(!card.evidence.is_empty(), "{}", card.subject);
        let text = card.render();
        for section in ["GROUNDING", "LINKS", "EVIDENCE"] {
            assert!(text.contains(section));
        }
    }
}

#[test]
fn incremental_c2_equals_full_rebuild() {
    let history = payfix();
    let c1 = build(&truncated(&history, 1));
    let (next, report) = incremental_update(&c1, &c2_event(&history), &config()).unwrap();
    assert_eq!(next.canonical_bytes(), build(&history).canonical_bytes());
    assert!(report.changed.added.contains(&id("a:pay/gateway.x#charge")));
    check_against_rebuild(&next, &config()).unwrap();
}

#[test]
fn deleting_gateway_regrounds_functionality() {
    let history = payfix();
    let head = build(&history);
    let facts = head.sources.tree["payfix.facts"]
        .lines()
        .filter(|l| !l.contains("pay/gateway.x"))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    let mut files = FileChanges::new();
    files.insert("pay/gateway.x".into(), None);
    files.insert("payfix.facts".into(), Some(facts));
    let record = ChangeRecord::new(
        "c3",
        Some("c2"),
        "fay",
        "Drop gateway",
        &["pay/gateway.x", "payfix.facts"],
    );
    let paranoid = TwinConfig {
        paranoid: true,
        ..config()
    };
    let (next, report) =
        incremental_update(&head, &UpdateEvent::commit(record, files), &paranoid).unwrap();
    assert!(!next.graph.contains(&id("a:pay/gateway.x#charge")));
    assert!(!has_edge(
        &next,
        "k:responsibility:validate",
        Relation::AssignedTo,
        "a:pay/gateway.x"
    ));
    assert!(has_edge(
        &next,
        "a:pay/validator.x#validate",
        Relation::Implements,
        "k:functionality:validate"
    ));
    assert!(report
        .regenerated_cards
        .contains(&id("k:functionality:validate")));
    assert_ne!(
        head.cards[&id("k:functionality:validate")],
        next.cards[&id("k:functionality:validate")]
    );
    // the c1 rationale card is untouched by the deletion and is reused as is
    assert!(!report
        .regenerated_cards
        .contains(&id("k:rationale:mainframe-ordered-requests")));
    // anchors of the deleted function stay in the log but are no longer visible
    assert!(next
        .anchors
        .iter()
        .any(|a| a.subject == id("a:pay/gateway.x#charge")));
    assert!(next
        .visible_anchors()
        .all(|a| a.subject != id("a:pay/gateway.x#charge")));
}

#[test]
fn update_rejects_wrong_parent() {
    let history = payfix();
    let head = build(&history);
    let record = ChangeRecord::new("c9", Some("c1"), "x", "stray", &["docs/payments.md"]);
    assert!(incremental_update(
        &head,
        &UpdateEvent::commit(record, FileChanges::new()),
        &config()
    )
    .is_err());
}

#[test]
fn empty_repository_has_no_nodes() {
    let history = RepoHistory {
        commits: vec![(
            ChangeRecord::new("r0", None, "a", "init", &[]),
            Default::default(),
        )],
        issues: vec![],
    };
    let s = full_rebuild(&history, &Overlay::default(), &config()).unwrap();
    assert!(s.graph.nodes.is_empty() && s.graph.edges.is_empty());
}

#[test]
fn folded_history_ends_at_the_rebuild() {
    let history = payfix();
    let snaps = twin_core::store::fold_history(&history, &Default::default(), &config()).unwrap();
    let revs: Vec<&str> = snaps.iter().map(|s| s.revision.as_str()).collect();
    assert_eq!(revs, ["c1", "c2"]);
    assert_eq!(
        snaps[1].canonical_bytes(),
        build(&history).canonical_bytes()
    );
    assert_eq!(history.events()[0], c2_event(&history));
}
