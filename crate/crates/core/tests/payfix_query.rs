// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::PathBuf;

use twin_core::curation::Overlay;
use twin_core::extractors::FACTS_EXTRACTOR;
use twin_core::model::NodeId;
use twin_core::query::{
    expand_subgraph, impact_of_change, resolve_entities, run_query, select_revision, QueryError,
    QuerySpec, RankWeights,
};
use twin_core::store::{full_rebuild, load_repo, TwinConfig, TwinSnapshot};

fn snapshot() -> TwinSnapshot {
    let history =
        load_repo(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/payfix")).unwrap();
    let config = TwinConfig {
        extractor: FACTS_EXTRACTOR.into(),
        ..TwinConfig::default()
    };
    full_rebuild(&history, &Overlay::default(), &config).unwrap()
}

fn id(s: &str) -> NodeId {
    NodeId::from(s)
}

fn w() -> RankWeights {
    RankWeights::default()
}

#[test]
fn retry_request_seeds_config_and_functionality() {
    let s = snapshot();
    let seeds: Vec<NodeId> = resolve_entities("fix retry behavior for payment failures", &s)
        .into_iter()
        .take(3)
        .map(|c| c.id)
        .collect();
    assert!(seeds.contains(&id("a:settings.cfg#retry.max")));
    assert!(seeds.contains(&id("k:functionality:validate")));
}

#[test]
fn gibberish_and_exact_title() {
    let s = snapshot();
    assert!(resolve_entities("qwxz zzyq", &s).is_empty());
    assert!(resolve_entities("", &s).is_empty());
    let top = &resolve_entities("Payment Validation", &s)[0];
    assert_eq!(top.id, id("k:concept:payment-validation"));
    assert_eq!(top.score, 1.0);
}

#[test]
fn one_hop_from_validate() {
    let s = snapshot();
    let spec = QuerySpec {
        hops: 1,
        ..QuerySpec::new("validate")
    };
    let g = expand_subgraph(&[id("a:pay/validator.x#validate")], &spec, &s, w()).unwrap();
    let ids = g.node_ids();
    for expected in [
        "a:pay/gateway.x#charge",
        "a:tests/validate_test.x#test_validate",
        "k:constraint:ordered-requests",
        "k:rationale:mainframe-ordered-requests",
    ] {
        assert!(ids.contains(&id(expected)), "{expected}");
    }
    assert!(g.nodes.iter().all(|n| n.hop <= 1));
    let c = g.get(&id("k:constraint:ordered-requests")).unwrap();
    assert!(c.constraint_path && c.score >= 2.5);
}

#[test]
fn degenerate_bounds_give_seeds_only() {
    let s = snapshot();
    let seed = [id("a:pay/validator.x#validate")];
    for spec in [
        QuerySpec {
            budget: 1,
            ..QuerySpec::new("x")
        },
        QuerySpec {
            hops: 0,
            ..QuerySpec::new("x")
        },
    ] {
        let g = expand_subgraph(&seed, &spec, &s, w()).unwrap();
        assert_eq!(g.node_ids(), seed.iter().collect::<BTreeSet<_>>());
    }
    let err = expand_subgraph(&[id("a:nope")], &QuerySpec::new("x"), &s, w()).unwrap_err();
    assert_eq!(err, QueryError::UnknownSeed(id("a:nope")));
}

#[test]
fn async_refactor_surfaces_legacy_constraint() {
    let s = snapshot();
    let g = run_query(
        &QuerySpec::new("refactor payment validation to async"),
        &s,
        w(),
    )
    .unwrap();
    assert!(g.node_ids().contains(&id("k:constraint:ordered-requests")));
    assert!(g
        .node_ids()
        .contains(&id("k:rationale:mainframe-ordered-requests")));
    // identical spec, identical bytes
    let again = run_query(
        &QuerySpec::new("refactor payment validation to async"),
        &s,
        w(),
    )
    .unwrap();
    assert_eq!(g.to_json(), again.to_json());
}

#[test]
fn impact_of_validate() {
    let s = snapshot();
    let g = impact_of_change(&id("a:pay/validator.x#validate"), &s, 2, 40, w()).unwrap();
    let ids = g.node_ids();
    for expected in [
        "a:pay/gateway.x#charge",
        "a:tests/validate_test.x#test_validate",
        "k:constraint:ordered-requests",
        "k:rationale:mainframe-ordered-requests",
    ] {
        assert!(ids.contains(&id(expected)), "{expected}");
    }
    let leaf = impact_of_change(&id("a:settings.cfg"), &s, 0, 40, w()).unwrap();
    // settings.cfg has no callers; only its rationale neighbor joins
    assert_eq!(
        leaf.node_ids(),
        [id("a:settings.cfg"), id("k:rationale:flaky-network")]
            .iter()
            .collect::<BTreeSet<_>>()
    );
}

#[test]
fn revision_selection() {
    let revs = vec!["c1".to_string(), "c2".to_string()];
    assert_eq!(select_revision(&QuerySpec::new("q"), &revs).unwrap(), "c2");
    let pinned = QuerySpec {
        revision: Some("c1".into()),
        ..QuerySpec::new("q")
    };
    assert_eq!(select_revision(&pinned, &revs).unwrap(), "c1");
    let bad = QuerySpec {
        revision: Some("c9".into()),
        ..QuerySpec::new("q")
    };
    assert_eq!(
        select_revision(&bad, &revs),
        Err(QueryError::UnknownRevision("c9".into()))
    );
}
