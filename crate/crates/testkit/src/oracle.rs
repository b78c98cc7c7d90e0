// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference computations, written without the library's
//! helpers so they can check it.

use std::collections::{BTreeMap, BTreeSet};

use twin_core::model::{Graph, NodeId, Relation};

/// Hop distances by edge relaxation over the raw edge list, in both
/// directions, stopping after `hops` rounds.
pub fn hop_closure(
    graph: &Graph,
    seeds: &[NodeId],
    relations: &BTreeSet<Relation>,
    hops: usize,
) -> BTreeMap<NodeId, usize> {
    let mut dist: BTreeMap<NodeId, usize> = seeds.iter().map(|s| (s.clone(), 0)).collect();
    for round in 1..=hops {
        let mut next = dist.clone();
        for key in graph
            .edges
            .keys()
            .filter(|k| relations.contains(&k.relation))
        {
            for (a, b) in [(&key.source, &key.target), (&key.target, &key.source)] {
                if dist.get(a) == Some(&(round - 1)) && !next.contains_key(b) {
                    next.insert(b.clone(), round);
                }
            }
        }
        if next.len() == dist.len() {
            break;
        }
        dist = next;
    }
    dist
}

/// `ceil(chars / 4)`.
pub fn quarter_chars(s: &str) -> usize {
    let n = s.chars().count();
    n / 4 + usize::from(n % 4 != 0)
}

/// `(1 + a) / (2 + a + r)`.
pub fn smoothed(a: u32, r: u32) -> f64 {
    (1.0 + f64::from(a)) / (2.0 + f64::from(a) + f64::from(r))
}
