// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use twin_core::model::{Graph, NodeId};
use twin_core::query::{expand_subgraph, QuerySpec, RankWeights};
use twin_testkit::oracle::hop_closure as oracle;
use twin_testkit::random::{random_graph, rng, snapshot_of};

fn seeds_of(graph: &Graph, seed: u64, count: usize) -> Vec<NodeId> {
    use rand::seq::IteratorRandom;
    let mut r = rng(seed ^ 0x5eed);
    graph.nodes.keys().cloned().choose_multiple(&mut r, count)
}

fn spec(hops: usize, budget: usize) -> QuerySpec {
    QuerySpec {
        hops,
        budget,
        ..QuerySpec::new("random")
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn unbounded_budget_returns_the_hop_closure(
        seed in any::<u64>(), nodes in 1usize..40, edges in 0usize..120, hops in 0usize..4, k in 1usize..4,
    ) {
        let g = random_graph(seed, nodes, edges);
        let seeds = seeds_of(&g, seed, k);
        let snap = snapshot_of(g, "r0");
        let s = spec(hops, nodes + 1);
        let got = expand_subgraph(&seeds, &s, &snap, RankWeights::default()).unwrap();
        let want = oracle(&snap.graph, &seeds, &s.relations, hops);
        let got_hops: BTreeMap<NodeId, usize> = got.nodes.iter().map(|n| (n.id.clone(), n.hop)).collect();
        prop_assert_eq!(got_hops, want);
    }

    #[test]
    fn bounded_results_are_sound_and_induced(
        seed in any::<u64>(), nodes in 1usize..40, edges in 0usize..120, hops in 0usize..4, budget in 1usize..12,
    ) {
        let g = random_graph(seed, nodes, edges);
        let seeds = seeds_of(&g, seed, budget.min(2));
        let snap = snapshot_of(g, "r0");
        let s = spec(hops, budget);
        let got = expand_subgraph(&seeds, &s, &snap, RankWeights::default()).unwrap();
        let closure = oracle(&snap.graph, &seeds, &s.relations, hops);
        prop_assert!(got.nodes.len() <= budget);
        prop_assert_eq!(got.nodes.len(), budget.min(closure.len()));
        let ids = got.node_ids();
        for sd in &seeds {
            prop_assert!(ids.contains(sd));
        }
        for n in &got.nodes {
            prop_assert_eq!(closure.get(&n.id), Some(&n.hop));
        }
        let induced: BTreeSet<_> = snap.graph.edges.keys()
            .filter(|k| s.relations.contains(&k.relation) && ids.contains(&k.source) && ids.contains(&k.target))
            .cloned()
            .collect();
        let returned: BTreeSet<_> = got.edges.iter().map(|e| e.key()).collect();
        prop_assert_eq!(returned, induced);
    }

    #[test]
    fn admission_is_prefix_monotone_in_budget(
        seed in any::<u64>(), nodes in 2usize..30, edges in 0usize..80, budget in 1usize..10,
    ) {
        let g = random_graph(seed, nodes, edges);
        let seeds = seeds_of(&g, seed, 1);
        let snap = snapshot_of(g, "r0");
        let small = expand_subgraph(&seeds, &spec(2, budget), &snap, RankWeights::default()).unwrap();
        let large = expand_subgraph(&seeds, &spec(2, budget + 1), &snap, RankWeights::default()).unwrap();
        prop_assert!(small.node_ids().is_subset(&large.node_ids()));
    }
}
