// SPDX-License-Identifier: Apache-2.0

//! The `facts/1` code-facts interchange format.
//!
//! ```text
//! facts/1
//! declares-file	pay/validator.x	-	-	public	-
//! declares-function	pay/validator.x	validate	3-14	public	-
//! edge-fact	calls	pay/gateway.x#charge	validate
//! ```
//!
//! Fields are tab separated and `-` marks an absent value. Declaration
//! records carry `kind path name span visibility digest`; edge records carry
//! `relation source-locator target-locator`. A locator is a path, a
//! `path#name`, or bare symbol text.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArtifactKind, Relation, Visibility};

pub const FACTS_FORMAT: &str = "facts/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeclKind {
    File,
    Module,
    Function,
    Type,
    ConfigEntry,
    Test,
    BuildArtifact,
}

impl DeclKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeclKind::File => "declares-file",
            DeclKind::Module => "declares-module",
            DeclKind::Function => "declares-function",
            DeclKind::Type => "declares-type",
            DeclKind::ConfigEntry => "declares-config-entry",
            DeclKind::Test => "declares-test",
            DeclKind::BuildArtifact => "declares-build-artifact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "declares-file" => DeclKind::File,
            "declares-module" => DeclKind::Module,
            "declares-function" => DeclKind::Function,
            "declares-type" => DeclKind::Type,
            "declares-config-entry" => DeclKind::ConfigEntry,
            "declares-test" => DeclKind::Test,
            "declares-build-artifact" => DeclKind::BuildArtifact,
            _ => return None,
        })
    }

    /// Artifact kind for a declaration at `path`. Files with documentation
    /// extensions become document nodes.
    pub fn artifact_kind(self, path: &str) -> ArtifactKind {
        match self {
            DeclKind::File if is_document_path(path) => ArtifactKind::Document,
            DeclKind::File => ArtifactKind::File,
            DeclKind::Module => ArtifactKind::Module,
            DeclKind::Function => ArtifactKind::Function,
            DeclKind::Type => ArtifactKind::TypeDefinition,
            DeclKind::ConfigEntry => ArtifactKind::ConfigEntry,
            DeclKind::Test => ArtifactKind::TestCase,
            DeclKind::BuildArtifact => ArtifactKind::BuildArtifact,
        }
    }

    pub fn is_member(self) -> bool {
        !matches!(
            self,
            DeclKind::File | DeclKind::Module | DeclKind::BuildArtifact
        )
    }
}

pub fn is_document_path(path: &str) -> bool {
    [".md", ".rst", ".txt", ".adoc"]
        .iter()
        .any(|ext| path.ends_with(ext))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Declaration {
    pub kind: DeclKind,
    pub path: String,
    /// Member name; file and module declarations leave it empty.
    pub name: String,
    pub span: Option<(u32, u32)>,
    pub visibility: Visibility,
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeFact {
    pub relation: Relation,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeFact {
    Declares(Declaration),
    Edge(EdgeFact),
}

impl CodeFact {
    pub fn file(path: &str) -> Self {
        CodeFact::Declares(Declaration {
            kind: DeclKind::File,
            path: path.to_string(),
            name: String::new(),
            span: None,
            visibility: Visibility::Public,
            digest: None,
        })
    }

    pub fn member(
        kind: DeclKind,
        path: &str,
        name: &str,
        span: (u32, u32),
        visibility: Visibility,
    ) -> Self {
        CodeFact::Declares(Declaration {
            kind,
            path: path.to_string(),
            name: name.to_string(),
            span: Some(span),
            visibility,
            digest: None,
        })
    }

    pub fn edge(relation: Relation, source: &str, target: &str) -> Self {
        CodeFact::Edge(EdgeFact {
            relation,
            source: source.to_string(),
            target: target.to_string(),
        })
    }

    /// Path used for stream ordering.
    pub fn path(&self) -> &str {
        match self {
            CodeFact::Declares(d) => &d.path,
            CodeFact::Edge(e) => locator_path(&e.source),
        }
    }

    fn sort_key(&self) -> (&str, u8, u32, String, String, String) {
        match self {
            CodeFact::Declares(d) => (
                &d.path,
                0,
                d.span.map(|s| s.0).unwrap_or(0),
                d.kind.as_str().to_string(),
                d.name.clone(),
                d.digest.clone().unwrap_or_default(),
            ),
            CodeFact::Edge(e) => (
                locator_path(&e.source),
                1,
                0,
                e.relation.as_str().to_string(),
                e.source.clone(),
                e.target.clone(),
            ),
        }
    }
}

impl Ord for CodeFact {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then_with(|| self.to_string().cmp(&other.to_string()))
    }
}

impl PartialOrd for CodeFact {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Path part of a locator (`path#name` → `path`).
pub fn locator_path(locator: &str) -> &str {
    locator.split_once('#').map(|(p, _)| p).unwrap_or(locator)
}

fn dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

impl fmt::Display for CodeFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeFact::Declares(d) => {
                let span = d
                    .span
                    .map(|(a, b)| format!("{a}-{b}"))
                    .unwrap_or_else(|| "-".into());
                write!(
                    f,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    d.kind.as_str(),
                    d.path,
                    dash(&d.name),
                    span,
                    d.visibility,
                    d.digest.as_deref().unwrap_or("-")
                )
            }
            CodeFact::Edge(e) => write!(f, "edge-fact\t{}\t{}\t{}", e.relation, e.source, e.target),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FactsError {
    #[error("missing `{FACTS_FORMAT}` header")]
    MissingHeader,
    #[error("malformed fact at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn malformed(line: usize, reason: impl Into<String>) -> FactsError {
    FactsError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_span(s: &str, line: usize) -> Result<Option<(u32, u32)>, FactsError> {
    if s == "-" {
        return Ok(None);
    }
    let (a, b) = s
        .split_once('-')
        .ok_or_else(|| malformed(line, format!("bad span `{s}`")))?;
    let a: u32 = a
        .parse()
        .map_err(|_| malformed(line, format!("bad span start `{a}`")))?;
    let b: u32 = b
        .parse()
        .map_err(|_| malformed(line, format!("bad span end `{b}`")))?;
    if a == 0 || a > b {
        return Err(malformed(line, format!("span {a}-{b} out of order")));
    }
    Ok(Some((a, b)))
}

fn parse_line(text: &str, line: usize) -> Result<CodeFact, FactsError> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields[0] == "edge-fact" {
        if fields.len() != 4 {
            return Err(malformed(
                line,
                format!("edge-fact needs 4 fields, got {}", fields.len()),
            ));
        }
        let relation = Relation::parse(fields[1])
            .ok_or_else(|| malformed(line, format!("unknown relation `{}`", fields[1])))?;
        if !relation.is_artifact() {
            return Err(malformed(
                line,
                format!("`{relation}` is not an artifact relation"),
            ));
        }
        if fields[2].is_empty() || fields[3].is_empty() {
            return Err(malformed(line, "empty locator"));
        }
        return Ok(CodeFact::edge(relation, fields[2], fields[3]));
    }
    let kind = DeclKind::parse(fields[0])
        .ok_or_else(|| malformed(line, format!("unknown fact kind `{}`", fields[0])))?;
    if fields.len() != 6 {
        return Err(malformed(
            line,
            format!("declaration needs 6 fields, got {}", fields.len()),
        ));
    }
    let path = fields[1];
    if path.is_empty() || path == "-" || path.contains('#') {
        return Err(malformed(line, format!("bad path `{path}`")));
    }
    let name = if fields[2] == "-" { "" } else { fields[2] };
    let span = parse_span(fields[3], line)?;
    let visibility = Visibility::parse(fields[4])
        .ok_or_else(|| malformed(line, format!("bad visibility `{}`", fields[4])))?;
    let digest = (fields[5] != "-").then(|| fields[5].to_string());
    if kind.is_member() {
        if name.is_empty() {
            return Err(malformed(line, "member declaration needs a name"));
        }
        if span.is_none() {
            return Err(malformed(line, "member declaration needs a span"));
        }
    } else if span.is_some() || !name.is_empty() {
        return Err(malformed(
            line,
            "file, module and build-artifact declarations take no name or span",
        ));
    }
    Ok(CodeFact::Declares(Declaration {
        kind,
        path: path.to_string(),
        name: name.to_string(),
        span,
        visibility,
        digest,
    }))
}

/// Parses a `facts/1` document. Blank lines and `//` comments are skipped.
pub fn parse_facts(text: &str) -> Result<Vec<CodeFact>, FactsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == FACTS_FORMAT => {}
        _ => return Err(FactsError::MissingHeader),
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with("//") {
            continue;
        }
        out.push(parse_line(raw, idx + 1)?);
    }
    Ok(out)
}

pub fn write_facts(facts: &[CodeFact]) -> String {
    let mut out = String::from(FACTS_FORMAT);
    out.push('\n');
    for fact in facts {
        out.push_str(&fact.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_declarations_and_edges() {
        let text = "facts/1\ndeclares-file\tpay/validator.x\t-\t-\tpublic\t-\n\
                    declares-function\tpay/validator.x\tvalidate\t3-14\tpublic\t-\n\
                    edge-fact\tcalls\tpay/gateway.x#charge\tvalidate\n";
        let facts = parse_facts(text).unwrap();
        assert_eq!(facts.len(), 3);
        assert_eq!(write_facts(&facts), text);
    }

    #[test]
    fn rejects_bad_records_with_line_numbers() {
        let err = parse_facts("facts/1\n\ndeclares-function\tp\tf\t9-2\tpublic\t-\n").unwrap_err();
        assert_eq!(
            err,
            FactsError::Malformed {
                line: 3,
                reason: "span 9-2 out of order".into()
            }
        );
        assert!(matches!(
            parse_facts("facts/1\nedge-fact\timplements\ta\tb\n"),
            Err(FactsError::Malformed { line: 2, .. })
        ));
        assert_eq!(parse_facts("nope\n"), Err(FactsError::MissingHeader));
    }

    #[test]
    fn markdown_files_are_documents() {
        assert_eq!(
            DeclKind::File.artifact_kind("docs/payments.md"),
            ArtifactKind::Document
        );
        assert_eq!(
            DeclKind::File.artifact_kind("pay/gateway.x"),
            ArtifactKind::File
        );
    }

    #[test]
    fn ordering_is_path_then_span() {
        let mut facts = vec![
            CodeFact::member(DeclKind::Function, "b.x", "g", (5, 6), Visibility::Public),
            CodeFact::member(DeclKind::Function, "b.x", "f", (1, 2), Visibility::Public),
            CodeFact::file("a.x"),
        ];
        facts.sort();
        assert_eq!(facts[0].path(), "a.x");
        assert!(matches!(&facts[1], CodeFact::Declares(d) if d.name == "f"));
    }
}
