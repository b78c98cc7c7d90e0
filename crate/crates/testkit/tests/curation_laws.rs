// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use proptest::prelude::*;
use twin_core::curation::{apply_delta, Overlay};
use twin_core::model::{Node, NodeId};
use twin_core::store::{full_rebuild, TwinConfig, TwinSnapshot, TwinStore};
use twin_core::writeback::{
    propose_update, record_feedback, review, AuthorKind, CurationLog, Decision, Provenance, Signal,
};
use twin_testkit::random::{random_delta, random_history};

struct Env {
    _dir: tempfile::TempDir,
    store: TwinStore,
    log: CurationLog,
    snapshot: TwinSnapshot,
}

fn env(seed: u64) -> Env {
    let snapshot = full_rebuild(
        &random_history(seed, 5),
        &Overlay::default(),
        &TwinConfig::default(),
    )
    .unwrap();
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

fn without_confidence(g: &twin_core::model::Graph) -> Vec<Node> {
    g.node_list()
        .into_iter()
        .map(|mut n| {
            if let Node::Knowledge(k) = &mut n {
                k.confidence = 0.0;
            }
            n
        })
        .collect()
}

const SIGNALS: [Signal; 6] = [
    Signal::PatchAccepted,
    Signal::PatchRejected,
    Signal::SuggestionChosen,
    Signal::SummaryEdited,
    Signal::ContextCorrected,
    Signal::BoundaryOverridden,
];

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn accepting_applies_exactly_the_delta(seed in any::<u64>(), rounds in 1usize..4) {
        let mut e = env(seed);
        for n in 0..rounds {
            let (delta, prov) = random_delta(seed.wrapping_add(n as u64), &e.snapshot, n);
            let p = propose_update(&e.log, &e.snapshot, delta, prov, AuthorKind::Assistant).unwrap();
            let out = review(&e.log, &mut e.store, &e.snapshot, &p.id, Decision::Accept, "rev", &TwinConfig::default()).unwrap();
            let next = out.snapshot.unwrap();
            let mut expected = e.snapshot.graph.clone();
            let mut evidence = e.snapshot.evidence.clone();
            apply_delta(&mut expected, &mut evidence, &p.delta);
            prop_assert_eq!(&next.graph.edges, &expected.edges);
            prop_assert_eq!(without_confidence(&next.graph), without_confidence(&expected));
            prop_assert_eq!(&next.evidence, &evidence);
            prop_assert!(next.validate().findings.is_empty(), "{:?}", next.validate().findings);
            prop_assert_eq!(e.store.resolve(None).unwrap().id, out.snapshot_id);
            e.snapshot = next;
        }
    }

    #[test]
    fn rejecting_changes_nothing(seed in any::<u64>()) {
        let mut e = env(seed);
        let before = e.store.resolve(None).unwrap().id;
        let (delta, prov) = random_delta(seed, &e.snapshot, 0);
        let p = propose_update(&e.log, &e.snapshot, delta, prov, AuthorKind::Human).unwrap();
        let out = review(&e.log, &mut e.store, &e.snapshot, &p.id, Decision::Reject, "rev", &TwinConfig::default()).unwrap();
        prop_assert!(out.snapshot.is_none());
        prop_assert_eq!(&out.snapshot_id, &before);
        prop_assert_eq!(e.store.revisions().unwrap().len(), 1);
        let reloaded = e.store.load(None, &TwinConfig::default()).unwrap();
        prop_assert!(reloaded.canonical_bytes() == e.snapshot.canonical_bytes());
    }

    #[test]
    fn confidence_follows_the_whole_log(seed in any::<u64>(), picks in prop::collection::vec((0usize..6, 0usize..64), 1..8)) {
        let mut e = env(seed);
        let subjects: Vec<NodeId> = e.snapshot.graph.knowledge().map(|k| k.id.clone()).collect();
        prop_assume!(!subjects.is_empty());
        let rev = e.snapshot.revision.clone();
        let mut counts: BTreeMap<NodeId, (u32, u32)> = BTreeMap::new();
        let mut seen = Vec::new();
        for (s, k) in picks {
            let subject = subjects[k % subjects.len()].clone();
            let signal = SIGNALS[s];
            let (event, next, _) = record_feedback(
                &e.log, &mut e.store, &e.snapshot, signal, vec![subject.clone()],
                Provenance::Revision { revision: rev.clone() }, &TwinConfig::default(),
            ).unwrap();
            seen.push(event);
            let c = counts.entry(subject).or_default();
            match signal {
                Signal::PatchAccepted | Signal::SuggestionChosen => c.0 += 1,
                Signal::SummaryEdited => {}
                _ => c.1 += 1,
            }
            for (id, (a, r)) in &counts {
                let want = (1.0 + *a as f64) / (2.0 + (*a + *r) as f64);
                let got = match next.graph.node(id) { Some(Node::Knowledge(k)) => k.confidence, _ => f64::NAN };
                prop_assert!((got - want).abs() < 1e-12, "{}: {} vs {}", id, got, want);
            }
            prop_assert_eq!(&e.log.events().unwrap(), &seen);
            e.snapshot = next;
        }
    }
}
