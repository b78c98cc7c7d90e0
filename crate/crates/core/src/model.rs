// SPDX-License-Identifier: Apache-2.0

//! Twin vocabulary: node kinds, edge relations, the identity scheme and the
//! relation signature table.
//!
//! Nodes live in three id namespaces:
//! - `a:<path>[#<local-name>]` for artifacts (files, functions, config entries, ...)
//! - `k:<kind>:<slug>` for knowledge (concepts, functionalities, constraints, ...)
//! - `h:<kind>:<key>` for history (revisions, issues, evidence fragments)
//!
//! Ids are derived from paths and names only, so rebuilding from the same
//! inputs always yields the same ids.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn artifact(path: &str, local: Option<&str>) -> Self {
        match local {
            Some(name) => NodeId(format!("a:{path}#{name}")),
            None => NodeId(format!("a:{path}")),
        }
    }

    pub fn knowledge(kind: KnowledgeKind, slug: &str) -> Self {
        NodeId(format!("k:{}:{slug}", kind.as_str()))
    }

    pub fn history(kind: HistoryKind, key: &str) -> Self {
        NodeId(format!("h:{}:{key}", kind.as_str()))
    }

    pub fn revision(rev: &str) -> Self {
        Self::history(HistoryKind::Revision, rev)
    }

    pub fn issue(key: &str) -> Self {
        Self::history(HistoryKind::Issue, key)
    }

    pub fn evidence(key: &str) -> Self {
        Self::history(HistoryKind::Evidence, key)
    }

    /// Wraps an id string without checking its namespace.
    pub fn from_raw(raw: impl Into<String>) -> Self {
        NodeId(raw.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_artifact(&self) -> bool {
        self.0.starts_with("a:")
    }

    pub fn is_knowledge(&self) -> bool {
        self.0.starts_with("k:")
    }

    pub fn is_history(&self) -> bool {
        self.0.starts_with("h:")
    }

    /// The `<path>` or `<path>#<name>` part of an artifact id.
    pub fn artifact_locator(&self) -> Option<&str> {
        self.0.strip_prefix("a:")
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

macro_rules! str_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

str_enum!(ArtifactKind {
    File => "file",
    Function => "function",
    TypeDefinition => "type-definition",
    Module => "module",
    ConfigEntry => "config-entry",
    TestCase => "test-case",
    BuildArtifact => "build-artifact",
    Document => "document",
});

impl ArtifactKind {
    /// Kinds that carry a line span.
    pub fn has_span(self) -> bool {
        matches!(
            self,
            ArtifactKind::Function
                | ArtifactKind::TypeDefinition
                | ArtifactKind::TestCase
                | ArtifactKind::ConfigEntry
        )
    }
}

str_enum!(KnowledgeKind {
    Concept => "concept",
    Functionality => "functionality",
    Responsibility => "responsibility",
    Constraint => "constraint",
    Rationale => "rationale",
});

str_enum!(HistoryKind {
    Revision => "revision",
    Issue => "issue",
    Evidence => "evidence",
});

str_enum!(Visibility {
    Public => "public",
    Internal => "internal",
});

str_enum!(KnowledgeStatus {
    Extracted => "extracted",
    Curated => "curated",
    Disputed => "disputed",
});

str_enum!(
    /// Every typed relation the twin knows about, grouped as artifact,
    /// skeleton, spine, grounding and trace relations.
    Relation {
        Contains => "contains",
        Defines => "defines",
        Imports => "imports",
        Calls => "calls",
        ReadsWrites => "reads-writes",
        DependsOn => "depends-on",
        ConfiguredBy => "configured-by",
        BuiltInto => "built-into",
        DeployedAs => "deployed-as",
        Tests => "tests",
        OperationalizedBy => "operationalized-by",
        Requires => "requires",
        Uses => "uses",
        DecomposesTo => "decomposes-to",
        FDependsOn => "f-depends-on",
        HasResponsibility => "has-responsibility",
        AssignedTo => "assigned-to",
        ConstrainedBy => "constrained-by",
        JustifiedBy => "justified-by",
        Implements => "implements",
        Owns => "owns",
        GDependsOn => "g-depends-on",
        AnchoredTo => "anchored-to",
        EvidencedBy => "evidenced-by",
    }
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationGroup {
    Artifact,
    Skeleton,
    Spine,
    Grounding,
    Trace,
}

impl Relation {
    pub fn group(self) -> RelationGroup {
        use Relation::*;
        match self {
            Contains | Defines | Imports | Calls | ReadsWrites | DependsOn | ConfiguredBy
            | BuiltInto | DeployedAs | Tests => RelationGroup::Artifact,
            OperationalizedBy | Requires | Uses | DecomposesTo | FDependsOn | HasResponsibility
            | AssignedTo => RelationGroup::Skeleton,
            ConstrainedBy | JustifiedBy => RelationGroup::Spine,
            Implements | Owns | GDependsOn => RelationGroup::Grounding,
            AnchoredTo | EvidencedBy => RelationGroup::Trace,
        }
    }

    pub fn is_artifact(self) -> bool {
        self.group() == RelationGroup::Artifact
    }
}

/// Kind of any node, across the three namespaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeKind {
    Artifact(ArtifactKind),
    Knowledge(KnowledgeKind),
    History(HistoryKind),
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Artifact(k) => k.as_str(),
            NodeKind::Knowledge(k) => k.as_str(),
            NodeKind::History(k) => k.as_str(),
        }
    }

    pub fn all() -> Vec<NodeKind> {
        let mut out: Vec<NodeKind> = ArtifactKind::ALL
            .iter()
            .map(|k| NodeKind::Artifact(*k))
            .collect();
        out.extend(KnowledgeKind::ALL.iter().map(|k| NodeKind::Knowledge(*k)));
        out.extend(HistoryKind::ALL.iter().map(|k| NodeKind::History(*k)));
        out
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactNode {
    pub id: NodeId,
    pub kind: ArtifactKind,
    pub name: String,
    pub path: String,
    pub span: Option<(u32, u32)>,
    pub visibility: Visibility,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeNode {
    pub id: NodeId,
    pub kind: KnowledgeKind,
    pub title: String,
    pub summary: String,
    pub status: KnowledgeStatus,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryNode {
    pub id: NodeId,
    pub kind: HistoryKind,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "kebab-case")]
pub enum Node {
    Artifact(ArtifactNode),
    Knowledge(KnowledgeNode),
    History(HistoryNode),
}

impl Node {
    pub fn id(&self) -> &NodeId {
        match self {
            Node::Artifact(n) => &n.id,
            Node::Knowledge(n) => &n.id,
            Node::History(n) => &n.id,
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            Node::Artifact(n) => NodeKind::Artifact(n.kind),
            Node::Knowledge(n) => NodeKind::Knowledge(n.kind),
            Node::History(n) => NodeKind::History(n.kind),
        }
    }

    /// Human-facing title: artifact name, knowledge title, or history key.
    pub fn title(&self) -> &str {
        match self {
            Node::Artifact(n) => &n.name,
            Node::Knowledge(n) => &n.title,
            Node::History(n) => &n.key,
        }
    }

    pub fn as_artifact(&self) -> Option<&ArtifactNode> {
        match self {
            Node::Artifact(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_knowledge(&self) -> Option<&KnowledgeNode> {
        match self {
            Node::Knowledge(n) => Some(n),
            _ => None,
        }
    }
}

pub type Attributes = BTreeMap<String, String>;

/// Identity of an edge. Ordered by (source, relation name, target).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub source: NodeId,
    pub relation: Relation,
    pub target: NodeId,
}

impl EdgeKey {
    pub fn new(source: NodeId, relation: Relation, target: NodeId) -> Self {
        EdgeKey {
            source,
            relation,
            target,
        }
    }
}

impl Ord for EdgeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.source
            .cmp(&other.source)
            .then_with(|| self.relation.as_str().cmp(other.relation.as_str()))
            .then_with(|| self.target.cmp(&other.target))
    }
}

impl PartialOrd for EdgeKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.source, self.relation, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedEdge {
    pub source: NodeId,
    pub relation: Relation,
    pub target: NodeId,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: Attributes,
}

impl TypedEdge {
    pub fn new(source: NodeId, relation: Relation, target: NodeId) -> Self {
        TypedEdge {
            source,
            relation,
            target,
            attributes: Attributes::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: &str) -> Self {
        self.attributes.insert(key.to_string(), value.to_string());
        self
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey::new(self.source.clone(), self.relation, self.target.clone())
    }
}

/// A node/edge set keyed for deterministic iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    pub nodes: BTreeMap<NodeId, Node>,
    pub edges: BTreeMap<EdgeKey, Attributes>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = TypedEdge>,
    ) -> Self {
        let mut g = Graph::new();
        for n in nodes {
            g.insert_node(n);
        }
        for e in edges {
            g.insert_edge(e);
        }
        g
    }

    pub fn insert_node(&mut self, node: Node) {
        self.nodes.insert(node.id().clone(), node);
    }

    pub fn insert_edge(&mut self, edge: TypedEdge) {
        let TypedEdge {
            source,
            relation,
            target,
            attributes,
        } = edge;
        self.edges
            .insert(EdgeKey::new(source, relation, target), attributes);
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn edge_list(&self) -> Vec<TypedEdge> {
        self.edges
            .iter()
            .map(|(k, a)| TypedEdge {
                source: k.source.clone(),
                relation: k.relation,
                target: k.target.clone(),
                attributes: a.clone(),
            })
            .collect()
    }

    pub fn node_list(&self) -> Vec<Node> {
        self.nodes.values().cloned().collect()
    }

    /// Edges touching `id` in either direction.
    pub fn incident<'a>(
        &'a self,
        id: &'a NodeId,
    ) -> impl Iterator<Item = (&'a EdgeKey, &'a Attributes)> + 'a {
        self.edges
            .iter()
            .filter(move |(k, _)| &k.source == id || &k.target == id)
    }

    /// Removes the node and all edges incident to it.
    pub fn remove_node(&mut self, id: &NodeId) {
        self.nodes.remove(id);
        self.edges.retain(|k, _| &k.source != id && &k.target != id);
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &ArtifactNode> {
        self.nodes.values().filter_map(Node::as_artifact)
    }

    pub fn knowledge(&self) -> impl Iterator<Item = &KnowledgeNode> {
        self.nodes.values().filter_map(Node::as_knowledge)
    }
}

/// One record of the relation signature table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationSignature {
    pub name: Relation,
    pub group: RelationGroup,
    pub sources: Vec<NodeKind>,
    pub targets: Vec<NodeKind>,
}

const ALL_ARTIFACTS: &[ArtifactKind] = ArtifactKind::ALL;

fn art(kinds: &[ArtifactKind]) -> Vec<NodeKind> {
    kinds.iter().map(|k| NodeKind::Artifact(*k)).collect()
}

fn know(kinds: &[KnowledgeKind]) -> Vec<NodeKind> {
    kinds.iter().map(|k| NodeKind::Knowledge(*k)).collect()
}

fn hist(kinds: &[HistoryKind]) -> Vec<NodeKind> {
    kinds.iter().map(|k| NodeKind::History(*k)).collect()
}

fn join(mut a: Vec<NodeKind>, b: Vec<NodeKind>) -> Vec<NodeKind> {
    a.extend(b);
    a
}

/// Allowed (source kinds, target kinds) for a relation.
pub fn signature(relation: Relation) -> RelationSignature {
    use ArtifactKind as A;
    use KnowledgeKind as K;
    use Relation::*;
    let skeleton = [K::Concept, K::Functionality, K::Responsibility];
    let (sources, targets) = match relation {
        Contains => (
            art(&[A::File, A::Module]),
            art(&[
                A::Function,
                A::TypeDefinition,
                A::ConfigEntry,
                A::TestCase,
                A::File,
                A::Module,
                A::Document,
            ]),
        ),
        Defines => (
            art(&[A::File, A::Module, A::TypeDefinition]),
            art(&[A::Function, A::TypeDefinition, A::ConfigEntry]),
        ),
        Imports => (art(&[A::File, A::Module]), art(&[A::File, A::Module])),
        Calls => (
            art(&[A::Function, A::TestCase]),
            art(&[A::Function, A::TypeDefinition]),
        ),
        ReadsWrites => (
            art(&[A::Function, A::TestCase, A::TypeDefinition]),
            art(ALL_ARTIFACTS),
        ),
        DependsOn => (art(ALL_ARTIFACTS), art(ALL_ARTIFACTS)),
        ConfiguredBy => (
            art(&[
                A::Function,
                A::TypeDefinition,
                A::TestCase,
                A::File,
                A::Module,
            ]),
            art(&[A::ConfigEntry]),
        ),
        BuiltInto => (art(&[A::File, A::Module]), art(&[A::BuildArtifact])),
        DeployedAs => (
            art(&[A::BuildArtifact, A::Module]),
            art(&[A::BuildArtifact]),
        ),
        Tests => (
            art(&[A::TestCase]),
            art(&[A::Function, A::TypeDefinition, A::Module, A::File]),
        ),
        OperationalizedBy => (know(&[K::Concept]), know(&[K::Functionality])),
        Requires | Uses => (know(&[K::Functionality]), know(&[K::Concept])),
        DecomposesTo | FDependsOn => (know(&[K::Functionality]), know(&[K::Functionality])),
        HasResponsibility => (know(&[K::Functionality]), know(&[K::Responsibility])),
        AssignedTo => (know(&[K::Responsibility]), art(&[A::File, A::Module])),
        ConstrainedBy => (
            know(&[K::Constraint]),
            join(art(ALL_ARTIFACTS), know(&skeleton)),
        ),
        JustifiedBy => (
            know(&[K::Rationale]),
            join(
                art(ALL_ARTIFACTS),
                know(&[
                    K::Concept,
                    K::Functionality,
                    K::Responsibility,
                    K::Constraint,
                ]),
            ),
        ),
        Implements => (
            art(&[A::Function, A::TypeDefinition, A::File, A::Module]),
            know(&[K::Functionality]),
        ),
        Owns => (art(&[A::File, A::Module]), know(&[K::Responsibility])),
        GDependsOn => (know(&skeleton), art(ALL_ARTIFACTS)),
        AnchoredTo => (
            join(art(ALL_ARTIFACTS), know(KnowledgeKind::ALL)),
            hist(&[HistoryKind::Revision, HistoryKind::Issue]),
        ),
        EvidencedBy => (know(KnowledgeKind::ALL), hist(&[HistoryKind::Evidence])),
    };
    RelationSignature {
        name: relation,
        group: relation.group(),
        sources,
        targets,
    }
}

/// The full signature table, one record per relation.
pub fn signature_table() -> Vec<RelationSignature> {
    Relation::ALL.iter().map(|r| signature(*r)).collect()
}

/// Machine-readable signature table document.
pub fn signature_table_json() -> String {
    #[derive(Serialize)]
    struct Doc {
        format: &'static str,
        relations: Vec<RelationSignature>,
    }
    serde_json::to_string_pretty(&Doc {
        format: "schema/1",
        relations: signature_table(),
    })
    .expect("signature table serializes")
}

pub fn signature_allows(relation: Relation, source: NodeKind, target: NodeKind) -> bool {
    let sig = signature(relation);
    sig.sources.contains(&source) && sig.targets.contains(&target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_namespaces() {
        assert_eq!(
            NodeId::artifact("pay/validator.x", Some("validate")).as_str(),
            "a:pay/validator.x#validate"
        );
        assert_eq!(
            NodeId::knowledge(KnowledgeKind::Concept, "payment-validation").as_str(),
            "k:concept:payment-validation"
        );
        assert_eq!(NodeId::revision("c1").as_str(), "h:revision:c1");
        assert_eq!(
            NodeId::artifact("settings.cfg", None).artifact_locator(),
            Some("settings.cfg")
        );
    }

    #[test]
    fn every_relation_has_nonempty_signature() {
        for sig in signature_table() {
            assert!(!sig.sources.is_empty(), "{}", sig.name);
            assert!(!sig.targets.is_empty(), "{}", sig.name);
        }
        assert_eq!(signature_table().len(), 24);
    }

    #[test]
    fn requires_and_uses_share_a_signature() {
        let r = signature(Relation::Requires);
        let u = signature(Relation::Uses);
        assert_eq!((r.sources, r.targets), (u.sources, u.targets));
    }

    #[test]
    fn edge_keys_order_by_relation_name() {
        let a = NodeId::from("a:x");
        let b = NodeId::from("a:y");
        let k1 = EdgeKey::new(a.clone(), Relation::Tests, b.clone());
        let k2 = EdgeKey::new(a, Relation::Calls, b);
        assert!(k2 < k1);
    }

    #[test]
    fn relation_names_round_trip() {
        for r in Relation::ALL {
            assert_eq!(Relation::parse(r.as_str()), Some(*r));
        }
        let json = signature_table_json();
        assert!(json.contains("\"g-depends-on\""));
    }
}
