// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use twin_core::context::{compile_package, section_headers, ContextError, HookKind, SectionKind};
use twin_core::curation::Overlay;
use twin_core::extractors::FACTS_EXTRACTOR;
use twin_core::model::NodeId;
use twin_core::query::{run_query, QuerySpec, RankWeights, TwinSubgraph};
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

fn refactor(s: &TwinSnapshot) -> TwinSubgraph {
    run_query(
        &QuerySpec::new("refactor payment validation to async"),
        s,
        RankWeights::default(),
    )
    .unwrap()
}

/// Independent cost model: ceil(scalar count / 4).
fn oracle_cost(text: &str) -> usize {
    let n = text.chars().count();
    n / 4 + usize::from(n % 4 != 0)
}

fn rank(kind: SectionKind) -> usize {
    [
        "interface-and-constraint",
        "implementation",
        "peripheral",
        "evidence",
    ]
    .iter()
    .position(|k| *k == kind.as_str())
    .unwrap()
}

#[test]
fn refactor_package_leads_with_constraint_and_boundary() {
    let s = snapshot();
    let p = compile_package(&refactor(&s), 2000, &s).unwrap();
    let first: Vec<&str> = p
        .sections
        .iter()
        .take(2)
        .map(|x| x.subject.as_str())
        .collect();
    assert_eq!(
        first,
        [
            "k:constraint:ordered-requests",
            "a:pay/validator.x#validate"
        ]
    );
    assert_eq!(p.sections[1].kind, SectionKind::InterfaceAndConstraint);
    assert!(
        p.sections[1].body.contains("must not assume:")
            && p.sections[1].body.contains("mainframe in order")
    );
    let hooks: Vec<(HookKind, &str)> = p
        .hooks
        .iter()
        .map(|h| (h.kind, h.subject.as_str()))
        .collect();
    assert!(hooks.contains(&(HookKind::RunTest, "a:tests/validate_test.x#test_validate")));
    assert!(hooks.contains(&(HookKind::CheckInvariant, "k:constraint:ordered-requests")));

    // budget and ordering re-checked from the rendered text alone
    let text = p.render();
    let headers = section_headers(&text).unwrap();
    assert_eq!(headers.len(), p.sections.len());
    assert!(headers.windows(2).all(|w| rank(w[0].0) <= rank(w[1].0)));
    let total: usize = p.sections.iter().map(|x| oracle_cost(&x.body)).sum();
    assert!(total <= 2000);
    assert_eq!(total, p.used());
}

#[test]
fn budget_equal_to_first_cost_admits_one() {
    let s = snapshot();
    let g = refactor(&s);
    let full = compile_package(&g, 100_000, &s).unwrap();
    let cost = oracle_cost(&full.sections[0].body);
    let p = compile_package(&g, cost, &s).unwrap();
    assert_eq!(p.sections.len(), 1);
    assert_eq!(p.manifest.len(), full.manifest.len());
    assert!(p.manifest.iter().skip(1).all(|m| m.evicted.is_some()));
    let err = compile_package(&g, cost - 1, &s).unwrap_err();
    assert!(matches!(err, ContextError::BudgetTooSmall { .. }));
}

#[test]
fn manifest_complete_and_hooks_in_subgraph() {
    let s = snapshot();
    let g = refactor(&s);
    let first = oracle_cost(&compile_package(&g, 100_000, &s).unwrap().sections[0].body);
    for budget in [first, first + 50, 500, 5000] {
        let p = compile_package(&g, budget, &s).unwrap();
        assert!(p.used() <= budget);
        let admitted: Vec<_> = p.admitted().map(|m| (m.kind, m.subject.clone())).collect();
        let sections: Vec<_> = p
            .sections
            .iter()
            .map(|x| (x.kind, x.subject.clone()))
            .collect();
        assert_eq!(admitted, sections);
        assert!(p.hooks.iter().all(|h| g.get(&h.subject).is_some()));
        assert_eq!(
            p.manifest[0].subject,
            NodeId::from("k:constraint:ordered-requests")
        );
    }
}

#[test]
fn empty_subgraph_gives_empty_package() {
    let s = snapshot();
    let g = run_query(&QuerySpec::new("qwxz zzyq"), &s, RankWeights::default()).unwrap();
    let p = compile_package(&g, 0, &s).unwrap();
    assert!(p.manifest.is_empty() && p.sections.is_empty() && p.hooks.is_empty());
}

#[test]
fn rendering_is_byte_stable() {
    let s = snapshot();
    let a = compile_package(&refactor(&s), 800, &s).unwrap().render();
    let b = compile_package(&refactor(&s), 800, &s).unwrap().render();
    assert_eq!(a, b);
    assert!(a.starts_with("ctx/1\nrevision: c2\nbudget: 800\ntoken-model: chars/4\n"));
}
