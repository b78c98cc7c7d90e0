// SPDX-License-Identifier: Apache-2.0

//! Twin-RAG retrieval: entity resolution, bounded typed expansion, ranking,
//! and change-impact neighborhoods.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Graph, Node, NodeId, NodeKind, Relation, TypedEdge, Visibility};
use crate::store::TwinSnapshot;
use crate::text::normalized_tokens;

pub const QRES_FORMAT: &str = "qres/1";

pub const TWIN_RAG_RELATIONS: [Relation; 8] = [
    Relation::Calls,
    Relation::DependsOn,
    Relation::ConfiguredBy,
    Relation::Tests,
    Relation::Implements,
    Relation::HasResponsibility,
    Relation::ConstrainedBy,
    Relation::JustifiedBy,
];

const SPINE: [Relation; 2] = [Relation::ConstrainedBy, Relation::JustifiedBy];
const IMPACT: [Relation; 3] = [Relation::Calls, Relation::DependsOn, Relation::ConfiguredBy];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("unknown seed {0}")]
    UnknownSeed(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown revision {0}")]
    UnknownRevision(String),
    #[error("invalid query: {0}")]
    InvalidSpec(String),
}

fn default_hops() -> usize {
    2
}
fn default_budget() -> usize {
    40
}
fn default_seeds() -> usize {
    3
}
fn default_relations() -> BTreeSet<Relation> {
    TWIN_RAG_RELATIONS.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<String>,
    #[serde(default = "default_hops")]
    pub hops: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_relations")]
    pub relations: BTreeSet<Relation>,
}

impl QuerySpec {
    pub fn new(text: &str) -> Self {
        QuerySpec {
            text: text.to_string(),
            revision: None,
            hops: default_hops(),
            budget: default_budget(),
            seeds: default_seeds(),
            relations: default_relations(),
        }
    }

    fn check(&self, seeds: usize) -> Result<(), QueryError> {
        if self.budget == 0 {
            return Err(QueryError::InvalidSpec(
                "node budget must be positive".into(),
            ));
        }
        if self.budget < seeds {
            return Err(QueryError::InvalidSpec(format!(
                "node budget {} below seed count {seeds}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Ranking weights for boundary, public-interface and constraint-path flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankWeights {
    pub boundary: f64,
    pub public: f64,
    pub constraint_path: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights {
            boundary: 3.0,
            public: 2.0,
            constraint_path: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: NodeId,
    pub score: f64,
}

/// Text a node is matched on: its title plus its card, if any.
fn match_tokens(snapshot: &TwinSnapshot, node: &Node) -> BTreeSet<String> {
    let mut text = node.title().to_string();
    if let Some(card) = snapshot.cards.get(node.id()) {
        text.push(' ');
        text.push_str(&card.search_text());
    }
    normalized_tokens(&text)
}

/// Artifact and knowledge nodes sharing tokens with `text`, best first.
pub fn resolve_entities(text: &str, snapshot: &TwinSnapshot) -> Vec<Candidate> {
    let query = normalized_tokens(text);
    if query.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<Candidate> = snapshot
        .graph
        .nodes
        .values()
        .filter(|n| !matches!(n, Node::History(_)))
        .filter_map(|n| {
            let shared = match_tokens(snapshot, n).intersection(&query).count();
            (shared > 0).then(|| Candidate {
                id: n.id().clone(),
                score: shared as f64 / query.len() as f64,
            })
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    out
}

/// `spec.revision` when it is committed, else the latest revision.
pub fn select_revision(spec: &QuerySpec, revisions: &[String]) -> Result<String, QueryError> {
    match &spec.revision {
        Some(r) if revisions.contains(r) => Ok(r.clone()),
        Some(r) => Err(QueryError::UnknownRevision(r.clone())),
        None => revisions
            .last()
            .cloned()
            .ok_or_else(|| QueryError::UnknownRevision("<latest>".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub title: String,
    pub hop: usize,
    pub score: f64,
    pub boundary: bool,
    pub public: bool,
    pub constraint_path: bool,
}

/// Result document, serialized as `qres/1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSubgraph {
    pub format: String,
    pub revision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub seeds: Vec<NodeId>,
    /// Rank order: score descending, then id.
    pub nodes: Vec<RankedNode>,
    /// Induced edges among `nodes`, direction preserved, sorted.
    pub edges: Vec<TypedEdge>,
}

impl TwinSubgraph {
    pub fn node_ids(&self) -> BTreeSet<&NodeId> {
        self.nodes.iter().map(|n| &n.id).collect()
    }

    pub fn get(&self, id: &NodeId) -> Option<&RankedNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Undirected adjacency over edges whose relation is in `relations`.
fn adjacency<'a>(
    graph: &'a Graph,
    relations: &BTreeSet<Relation>,
) -> BTreeMap<&'a NodeId, BTreeSet<&'a NodeId>> {
    let mut adj: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
    for key in graph
        .edges
        .keys()
        .filter(|k| relations.contains(&k.relation))
    {
        adj.entry(&key.source).or_default().insert(&key.target);
        adj.entry(&key.target).or_default().insert(&key.source);
    }
    adj
}

fn bfs<'a>(
    adj: &BTreeMap<&'a NodeId, BTreeSet<&'a NodeId>>,
    starts: impl IntoIterator<Item = &'a NodeId>,
    bound: usize,
    within: Option<&BTreeMap<NodeId, usize>>,
) -> BTreeMap<NodeId, usize> {
    let mut dist: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in starts {
        if dist.insert(s.clone(), 0).is_none() {
            queue.push_back((s, 0));
        }
    }
    while let Some((id, d)) = queue.pop_front() {
        if d == bound {
            continue;
        }
        for next in adj.get(id).into_iter().flatten() {
            if within.is_some_and(|w| !w.contains_key(*next)) || dist.contains_key(*next) {
                continue;
            }
            dist.insert((*next).clone(), d + 1);
            queue.push_back((next, d + 1));
        }
    }
    dist
}

/// Scores every member of a subgraph. `members` maps node to hop distance
/// from the nearest seed; the constraint-path flag is evaluated inside the
/// subgraph only.
pub fn rank_subgraph(
    graph: &Graph,
    members: &BTreeMap<NodeId, usize>,
    relations: &BTreeSet<Relation>,
    hop_bound: usize,
    weights: RankWeights,
) -> BTreeMap<NodeId, RankedNode> {
    let adj = adjacency(graph, relations);
    let constraints: Vec<&NodeId> = members
        .keys()
        .filter(|id| matches!(graph.node(id), Some(Node::Knowledge(k)) if k.kind == crate::model::KnowledgeKind::Constraint))
        .collect();
    let to_constraint = bfs(&adj, constraints, usize::MAX, Some(members));
    members
        .iter()
        .filter_map(|(id, &hop)| {
            let node = graph.node(id)?;
            let boundary = graph
                .incident(id)
                .any(|(k, _)| matches!(k.relation, Relation::AssignedTo | Relation::Owns));
            let public = matches!(node, Node::Artifact(a) if a.visibility == Visibility::Public);
            let constraint_path = to_constraint.get(id).is_some_and(|d| hop + d <= hop_bound);
            let flag = |on: bool, w: f64| if on { w } else { 0.0 };
            let score = flag(boundary, weights.boundary)
                + flag(public, weights.public)
                + flag(constraint_path, weights.constraint_path)
                + 1.0 / (1.0 + hop as f64);
            Some((
                id.clone(),
                RankedNode {
                    id: id.clone(),
                    kind: node.kind(),
                    title: node.title().to_string(),
                    hop,
                    score,
                    boundary,
                    public,
                    constraint_path,
                },
            ))
        })
        .collect()
}

fn rank_order(a: &RankedNode, b: &RankedNode) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.hop.cmp(&b.hop))
        .then_with(|| a.id.cmp(&b.id))
}

/// Admits seeds, then repeatedly the best pending spine neighbor of an
/// admitted node, else the best remaining node, until the budget is used.
fn admit(
    graph: &Graph,
    seeds: &[NodeId],
    ranked: &BTreeMap<NodeId, RankedNode>,
    budget: usize,
) -> Vec<NodeId> {
    let mut order: Vec<&RankedNode> = ranked.values().filter(|n| !seeds.contains(&n.id)).collect();
    order.sort_by(|a, b| rank_order(a, b));
    let position: BTreeMap<&NodeId, usize> =
        order.iter().enumerate().map(|(i, n)| (&n.id, i)).collect();
    let mut optional: BTreeSet<usize> = (0..order.len()).collect();
    let mut mandatory: BTreeSet<usize> = BTreeSet::new();
    let mut admitted: Vec<NodeId> = Vec::new();
    let admit_one = |id: &NodeId,
                     admitted: &mut Vec<NodeId>,
                     mandatory: &mut BTreeSet<usize>,
                     optional: &mut BTreeSet<usize>| {
        admitted.push(id.clone());
        for (k, _) in graph
            .incident(id)
            .filter(|(k, _)| SPINE.contains(&k.relation))
        {
            let other = if &k.source == id {
                &k.target
            } else {
                &k.source
            };
            if let Some(&p) = position.get(other) {
                if optional.remove(&p) {
                    mandatory.insert(p);
                }
            }
        }
    };
    for s in seeds.iter().take(budget) {
        admit_one(s, &mut admitted, &mut mandatory, &mut optional);
    }
    while admitted.len() < budget {
        let next = match mandatory.pop_first() {
            Some(p) => p,
            None => match optional.pop_first() {
                Some(p) => p,
                None => break,
            },
        };
        admit_one(
            &order[next].id,
            &mut admitted,
            &mut mandatory,
            &mut optional,
        );
    }
    admitted
}

fn assemble_result(
    snapshot: &TwinSnapshot,
    query: Option<&str>,
    seeds: Vec<NodeId>,
    ranked: BTreeMap<NodeId, RankedNode>,
    admitted: Vec<NodeId>,
    relations: &BTreeSet<Relation>,
) -> TwinSubgraph {
    let set: BTreeSet<&NodeId> = admitted.iter().collect();
    let mut nodes: Vec<RankedNode> = admitted
        .iter()
        .filter_map(|id| ranked.get(id).cloned())
        .collect();
    nodes.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    let edges = snapshot
        .graph
        .edge_list()
        .into_iter()
        .filter(|e| {
            relations.contains(&e.relation) && set.contains(&e.source) && set.contains(&e.target)
        })
        .collect();
    TwinSubgraph {
        format: QRES_FORMAT.into(),
        revision: snapshot.revision.clone(),
        query: query.map(str::to_string),
        seeds,
        nodes,
        edges,
    }
}

/// Bounded typed neighborhood of `seeds`.
pub fn expand_subgraph(
    seeds: &[NodeId],
    spec: &QuerySpec,
    snapshot: &TwinSnapshot,
    weights: RankWeights,
) -> Result<TwinSubgraph, QueryError> {
    spec.check(seeds.len())?;
    if let Some(s) = seeds.iter().find(|s| !snapshot.graph.contains(s)) {
        return Err(QueryError::UnknownSeed((*s).clone()));
    }
    let adj = adjacency(&snapshot.graph, &spec.relations);
    let closure = bfs(&adj, seeds.iter(), spec.hops, None);
    let ranked = rank_subgraph(
        &snapshot.graph,
        &closure,
        &spec.relations,
        spec.hops,
        weights,
    );
    let admitted = admit(&snapshot.graph, seeds, &ranked, spec.budget);
    Ok(assemble_result(
        snapshot,
        Some(&spec.text),
        seeds.to_vec(),
        ranked,
        admitted,
        &spec.relations,
    ))
}

/// Resolve, then expand. No matching entity gives an empty subgraph.
pub fn run_query(
    spec: &QuerySpec,
    snapshot: &TwinSnapshot,
    weights: RankWeights,
) -> Result<TwinSubgraph, QueryError> {
    let seeds: Vec<NodeId> = resolve_entities(&spec.text, snapshot)
        .into_iter()
        .take(spec.seeds)
        .map(|c| c.id)
        .collect();
    expand_subgraph(&seeds, spec, snapshot, weights)
}

/// What may break if `node` changes: reverse reachability over calls,
/// depends-on and configured-by, plus the constraint, rationale and test
/// neighbors of everything reached.
pub fn impact_of_change(
    node: &NodeId,
    snapshot: &TwinSnapshot,
    hops: usize,
    budget: usize,
    weights: RankWeights,
) -> Result<TwinSubgraph, QueryError> {
    let graph = &snapshot.graph;
    if !graph.contains(node) {
        return Err(QueryError::UnknownNode(node.clone()));
    }
    if budget == 0 {
        return Err(QueryError::InvalidSpec(
            "node budget must be positive".into(),
        ));
    }
    let mut reverse: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for key in graph.edges.keys().filter(|k| IMPACT.contains(&k.relation)) {
        reverse.entry(&key.target).or_default().push(&key.source);
    }
    let mut members: BTreeMap<NodeId, usize> = BTreeMap::from([(node.clone(), 0)]);
    let mut queue = VecDeque::from([(node, 0usize)]);
    while let Some((id, d)) = queue.pop_front() {
        if d == hops {
            continue;
        }
        for caller in reverse.get(id).into_iter().flatten() {
            if !members.contains_key(*caller) {
                members.insert((*caller).clone(), d + 1);
                queue.push_back((caller, d + 1));
            }
        }
    }
    let reached: Vec<(NodeId, usize)> = members.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for (id, d) in reached {
        for (k, _) in graph.incident(&id) {
            if SPINE.contains(&k.relation) || k.relation == Relation::Tests {
                let other = if k.source == id { &k.target } else { &k.source };
                let hop = members.get(other).copied().unwrap_or(usize::MAX).min(d + 1);
                members.insert(other.clone(), hop);
            }
        }
    }
    let relations: BTreeSet<Relation> = IMPACT
        .into_iter()
        .chain(SPINE)
        .chain([Relation::Tests])
        .collect();
    let ranked = rank_subgraph(graph, &members, &relations, hops + 1, weights);
    let seeds = vec![node.clone()];
    let admitted = admit(graph, &seeds, &ranked, budget);
    Ok(assemble_result(
        snapshot, None, seeds, ranked, admitted, &relations,
    ))
}
