// SPDX-License-Identifier: Apache-2.0

//! Seeded generators. Every function is a pure function of its seed so a
//! failing case can be replayed from the number alone.

use rand::seq::{IndexedRandom, IteratorRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twin_core::curation::{GraphDelta, NodeUpdate};
use twin_core::extractors::SourceTree;
use twin_core::history::{ChangeRecord, IssueRecord};
use twin_core::knowledge::evidence::{EvidenceFragment, SourceKind};
use twin_core::model::{
    signature, ArtifactKind, ArtifactNode, Graph, HistoryKind, HistoryNode, KnowledgeKind,
    KnowledgeNode, KnowledgeStatus, Node, NodeId, Relation, RelationGroup, TypedEdge, Visibility,
};
use twin_core::store::{RepoHistory, TwinSnapshot};
use twin_core::writeback::Provenance;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const WORDS: &[&str] = &[
    "ledger", "refund", "payment", "invoice", "queue", "retry", "audit", "batch", "order", "settle",
];
const CONFIG_KEYS: &[&str] = &["retry_max", "queue_size", "batch_limit", "audit_level"];
const AUTHORS: &[&str] = &["ana", "bo", "chen", "dee"];
const REASONS: &[&str] = &[
    "the mainframe rejects reordered batches",
    "settlement runs nightly",
    "audits need a stable trail",
    "the gateway times out",
];

fn pick<'a>(rng: &mut impl Rng, from: &[&'a str]) -> &'a str {
    from.choose(rng).copied().expect("non-empty word list")
}

fn python_module(rng: &mut impl Rng, word: &str) -> String {
    let mut out = String::new();
    if rng.random_bool(0.5) {
        out.push_str(&format!("from pkg import {}\n\n", pick(rng, WORDS)));
    }
    let count = rng.random_range(1..=3);
    let suffixes: Vec<&str> = WORDS.choose_multiple(rng, count).copied().collect();
    for (i, suffix) in suffixes.into_iter().enumerate() {
        let name = if i == 0 {
            word.to_string()
        } else {
            format!("{word}_{suffix}")
        };
        let name = if rng.random_bool(0.2) {
            format!("_{name}")
        } else {
            name
        };
        out.push_str(&format!("def {name}(x):\n"));
        for _ in 0..rng.random_range(0..=2) {
            out.push_str(&format!("    x = {}(x)\n", pick(rng, WORDS)));
        }
        if rng.random_bool(0.4) {
            out.push_str(&format!(
                "    limit = settings[\"{}\"]\n",
                pick(rng, CONFIG_KEYS)
            ));
        }
        out.push_str(&format!("    return x + {}\n\n", rng.random_range(0..100)));
    }
    if rng.random_bool(0.3) {
        out.push_str(&format!(
            "class {}Handler:\n    pass\n",
            word.to_uppercase()
        ));
    }
    out
}

fn test_module(rng: &mut impl Rng, word: &str) -> String {
    format!(
        "from pkg.{word} import {word}\n\ndef test_{word}():\n    assert {word}({}) > 0\n",
        rng.random_range(1..9)
    )
}

fn settings(rng: &mut impl Rng) -> String {
    let mut out = String::new();
    for k in CONFIG_KEYS {
        if rng.random_bool(0.7) {
            out.push_str(&format!("{k} = {}\n", rng.random_range(1..50)));
        }
    }
    out
}

fn document(rng: &mut impl Rng, word: &str) -> String {
    let modal = pick(rng, &["must", "never", "requires"]);
    format!(
        "# {word}\n\nThe {word} path {modal} keep requests in order because {}.\n\nSee pkg/{word}.py.\n",
        pick(rng, REASONS)
    )
}

fn new_file(rng: &mut impl Rng, tree: &SourceTree) -> Option<(String, String)> {
    for _ in 0..8 {
        let word = pick(rng, WORDS);
        let (path, text) = match rng.random_range(0..4) {
            0 => (format!("pkg/{word}.py"), python_module(rng, word)),
            1 => (format!("tests/test_{word}.py"), test_module(rng, word)),
            2 => (format!("docs/{word}.md"), document(rng, word)),
            _ => ("settings.cfg".to_string(), settings(rng)),
        };
        if !tree.contains_key(&path) {
            return Some((path, text));
        }
    }
    None
}

fn modified(rng: &mut impl Rng, path: &str, old: &str) -> String {
    let word = path
        .rsplit('/')
        .next()
        .unwrap_or(path)
        .trim_end_matches(".py")
        .trim_end_matches(".md");
    let word = word.trim_start_matches("test_");
    let fresh = if path.ends_with(".cfg") {
        settings(rng)
    } else if path.starts_with("tests/") {
        test_module(rng, word)
    } else if path.ends_with(".md") {
        document(rng, word)
    } else {
        python_module(rng, word)
    };
    if fresh == old {
        format!("{old}# touched {}\n", rng.random_range(0..1000))
    } else {
        fresh
    }
}

fn message(rng: &mut impl Rng, verb: &str, path: &str, issues: usize) -> String {
    let subject = format!("{verb} {path}");
    let tail = match rng.random_range(0..6) {
        0 => format!(" because {}", pick(rng, REASONS)),
        1 => format!(" so that {} stays ordered", pick(rng, WORDS)),
        2 => format!(": {} must never run twice", pick(rng, WORDS)),
        3 => format!(" due to {}; requires a retry", pick(rng, REASONS)),
        _ => String::new(),
    };
    let issue = if issues > 0 && rng.random_bool(0.4) {
        format!(" (#{})", rng.random_range(1..=issues))
    } else {
        String::new()
    };
    format!("{subject}{tail}{issue}")
}

/// A python repository with one root commit and `events` further commits,
/// each changing at least one file.
pub fn random_history(seed: u64, events: usize) -> RepoHistory {
    let mut rng = rng(seed);
    let issues = rng.random_range(0..=3usize);
    let mut tree = SourceTree::new();
    for _ in 0..rng.random_range(2..=4) {
        if let Some((p, t)) = new_file(&mut rng, &tree) {
            tree.insert(p, t);
        }
    }
    let mut commits = Vec::new();
    let root_paths: Vec<&str> = tree.keys().map(String::as_str).collect();
    let msg = message(&mut rng, "Import", "pkg", issues);
    commits.push((
        ChangeRecord::new("r000", None, pick(&mut rng, AUTHORS), &msg, &root_paths),
        tree.clone(),
    ));

    for i in 1..=events {
        let parent = commits.last().map(|(c, _)| c.revision.clone());
        let before = tree.clone();
        let (verb, path) = loop {
            let op = rng.random_range(0..10);
            if op < 3 || tree.len() < 2 {
                if let Some((p, t)) = new_file(&mut rng, &tree) {
                    tree.insert(p.clone(), t);
                    break ("Add", p);
                }
            }
            if op < 8 {
                let p = tree
                    .keys()
                    .choose(&mut rng)
                    .cloned()
                    .expect("tree is never empty");
                let next = modified(&mut rng, &p, &tree[&p]);
                tree.insert(p.clone(), next);
                break ("Update", p);
            }
            if tree.len() > 1 {
                let p = tree
                    .keys()
                    .choose(&mut rng)
                    .cloned()
                    .expect("tree is never empty");
                tree.remove(&p);
                break ("Remove", p);
            }
        };
        let mut changed: Vec<&str> = tree
            .iter()
            .filter(|(p, t)| before.get(*p) != Some(t))
            .map(|(p, _)| p.as_str())
            .chain(
                before
                    .keys()
                    .filter(|p| !tree.contains_key(*p))
                    .map(String::as_str),
            )
            .collect();
        changed.sort();
        let rev = format!("r{i:03}");
        let msg = message(&mut rng, verb, &path, issues);
        let author = pick(&mut rng, AUTHORS);
        commits.push((
            ChangeRecord::new(&rev, parent.as_deref(), author, &msg, &changed),
            tree.clone(),
        ));
    }

    let issues = (1..=issues)
        .map(|n| {
            let word = pick(&mut rng, WORDS);
            let revisions: Vec<String> = commits
                .iter()
                .filter(|_| rng.random_bool(0.2))
                .map(|(c, _)| c.revision.clone())
                .collect();
            IssueRecord {
                key: format!("#{n}"),
                title: format!("{word} fails under load"),
                body: format!(
                    "The {word} job must finish before settlement because {}.",
                    pick(&mut rng, REASONS)
                ),
                revisions,
            }
        })
        .collect();
    RepoHistory { commits, issues }
}

fn artifact(path: &str, name: Option<&str>, kind: ArtifactKind) -> Node {
    Node::Artifact(ArtifactNode {
        id: NodeId::artifact(path, name),
        kind,
        name: name.unwrap_or(path).to_string(),
        path: path.to_string(),
        span: kind.has_span().then_some((1, 2)),
        visibility: Visibility::Public,
        content_hash: "0".repeat(16),
    })
}

fn knowledge(kind: KnowledgeKind, slug: &str) -> Node {
    Node::Knowledge(KnowledgeNode {
        id: NodeId::knowledge(kind, slug),
        kind,
        title: slug.replace('-', " "),
        summary: format!("{slug} summary"),
        status: KnowledgeStatus::Extracted,
        confidence: 0.5,
    })
}

/// A graph of `nodes` typed nodes and up to `edges` signature-respecting
/// edges. Only the node kinds and edges matter; spans and hashes are filler.
pub fn random_graph(seed: u64, nodes: usize, edges: usize) -> Graph {
    let mut rng = rng(seed);
    let mut g = Graph::new();
    for i in 0..nodes {
        let node = match rng.random_range(0..3) {
            0 => {
                let kind = *ArtifactKind::ALL.choose(&mut rng).expect("kinds");
                let path = format!("src/f{}.py", i % 7);
                if kind == ArtifactKind::File {
                    artifact(&format!("src/file{i}.py"), None, kind)
                } else {
                    artifact(&path, Some(&format!("n{i}")), kind)
                }
            }
            1 => knowledge(
                *KnowledgeKind::ALL.choose(&mut rng).expect("kinds"),
                &format!("n{i}"),
            ),
            _ => {
                let kind = *HistoryKind::ALL.choose(&mut rng).expect("kinds");
                let key = format!("n{i}");
                Node::History(HistoryNode {
                    id: NodeId::history(kind, &key),
                    kind,
                    key,
                })
            }
        };
        g.insert_node(node);
    }
    let list = g.node_list();
    for _ in 0..edges {
        let relation = *Relation::ALL.choose(&mut rng).expect("relations");
        let sig = signature(relation);
        let sources: Vec<&Node> = list
            .iter()
            .filter(|n| sig.sources.contains(&n.kind()))
            .collect();
        let targets: Vec<&Node> = list
            .iter()
            .filter(|n| sig.targets.contains(&n.kind()))
            .collect();
        if let (Some(s), Some(t)) = (sources.choose(&mut rng), targets.choose(&mut rng)) {
            g.insert_edge(TypedEdge::new(s.id().clone(), relation, t.id().clone()));
        }
    }
    g
}

/// Wraps a bare graph into a snapshot with empty side stores.
pub fn snapshot_of(graph: Graph, revision: &str) -> TwinSnapshot {
    TwinSnapshot {
        revision: revision.to_string(),
        graph,
        unresolved: Vec::new(),
        anchors: Vec::new(),
        evidence: Default::default(),
        cards: Default::default(),
        sources: Default::default(),
        overlay: Default::default(),
        map: Default::default(),
        drafts: Default::default(),
    }
}

/// A schema-valid curation delta against `snapshot`, with provenance that
/// exists in its history. `n` keeps ids apart across proposals.
pub fn random_delta(seed: u64, snapshot: &TwinSnapshot, n: usize) -> (GraphDelta, Vec<Provenance>) {
    let mut rng = rng(seed);
    let records = &snapshot.sources.records;
    let record = records.choose(&mut rng).expect("snapshot has history");
    let provenance = vec![Provenance::Revision {
        revision: record.revision.clone(),
    }];
    let mut delta = GraphDelta::default();

    let artifacts: Vec<&ArtifactNode> = snapshot
        .graph
        .artifacts()
        .filter(|a| a.kind != ArtifactKind::File)
        .collect();
    let add = rng.random_bool(0.6) || artifacts.is_empty();
    if let (true, Some(target)) = (add, artifacts.choose(&mut rng)) {
        let kind = if rng.random_bool(0.5) {
            KnowledgeKind::Constraint
        } else {
            KnowledgeKind::Rationale
        };
        let id = NodeId::knowledge(kind, &format!("curated-{n}"));
        let chars: Vec<char> = record.message.chars().collect();
        let start = rng.random_range(0..chars.len().saturating_sub(1).max(1));
        let end = rng.random_range(start + 1..=chars.len().max(start + 1));
        let quote: String = chars[start..end.min(chars.len())].iter().collect();
        let e = EvidenceFragment::new(
            SourceKind::CommitMessage,
            &record.revision,
            &quote,
            start,
            end,
            &record.revision,
        );
        let relation = if kind == KnowledgeKind::Constraint {
            Relation::ConstrainedBy
        } else {
            Relation::JustifiedBy
        };
        let polarity = if rng.random_bool(0.5) {
            "supports"
        } else {
            "forbids"
        };
        delta.add_nodes.push(KnowledgeNode {
            id: id.clone(),
            kind,
            title: format!("curated {n}"),
            summary: format!("reviewer note {n}"),
            status: KnowledgeStatus::Curated,
            confidence: 0.5,
        });
        delta.add_edges.push(
            TypedEdge::new(id.clone(), relation, target.id.clone()).with_attr("polarity", polarity),
        );
        delta.add_edges.push(TypedEdge::new(
            id,
            Relation::EvidencedBy,
            NodeId::evidence(&e.id),
        ));
        delta.evidence.push(e);
        return (delta, provenance);
    }

    let knowledge: Vec<&KnowledgeNode> = snapshot.graph.knowledge().collect();
    let removable: Vec<TypedEdge> = snapshot
        .graph
        .edge_list()
        .into_iter()
        .filter(|e| {
            matches!(
                e.relation.group(),
                RelationGroup::Skeleton | RelationGroup::Spine | RelationGroup::Grounding
            )
        })
        .collect();
    if rng.random_bool(0.5) && !removable.is_empty() {
        delta
            .remove_edges
            .push(removable.choose(&mut rng).expect("non-empty").key());
    } else if let Some(k) = knowledge.choose(&mut rng) {
        delta.update_nodes.push(NodeUpdate {
            id: k.id.clone(),
            title: None,
            summary: Some(format!("{} (reviewed {n})", k.summary)),
            status: Some(KnowledgeStatus::Curated),
        });
    } else {
        let id = NodeId::knowledge(KnowledgeKind::Concept, &format!("curated-{n}"));
        delta.add_nodes.push(KnowledgeNode {
            id,
            kind: KnowledgeKind::Concept,
            title: format!("curated {n}"),
            summary: String::new(),
            status: KnowledgeStatus::Curated,
            confidence: 0.5,
        });
    }
    (delta, provenance)
}
