// SPDX-License-Identifier: Apache-2.0

//! Version history and issue ingestion, and trace anchors linking artifacts
//! to the revisions and issues that introduced, modified or discussed them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codemap::CodeMap;
use crate::model::{Graph, NodeId};
use crate::validate::ValidationReport;

pub const HIST_FORMAT: &str = "hist/1";
pub const ISS_FORMAT: &str = "iss/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub revision: String,
    pub parent: Option<String>,
    pub author: String,
    pub message: String,
    pub changed_paths: Vec<String>,
    pub issue_refs: Vec<String>,
}

impl ChangeRecord {
    pub fn new(
        revision: &str,
        parent: Option<&str>,
        author: &str,
        message: &str,
        paths: &[&str],
    ) -> Self {
        ChangeRecord {
            revision: revision.to_string(),
            parent: parent.map(str::to_string),
            author: author.to_string(),
            message: message.to_string(),
            changed_paths: paths.iter().map(|p| p.to_string()).collect(),
            issue_refs: extract_issue_refs(message),
        }
    }
}

/// Issues, pull requests and discussion threads share this shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub key: String,
    pub title: String,
    pub body: String,
    pub revisions: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("malformed record #{index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("record #{index} names unknown parent `{parent}`")]
    UnknownParent { index: usize, parent: String },
    #[error("no code map for revision `{0}`")]
    MissingMap(String),
    #[error("unknown subject {0}")]
    UnknownSubject(NodeId),
    #[error("unknown revision `{0}`")]
    UnknownRevision(String),
}

/// Every `#<digits>` token in order of appearance, deduplicated. Tokens
/// behind `fixes`/`closes`/`see` are covered by the same pattern.
pub fn extract_issue_refs(message: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"#[0-9]+").unwrap());
    let mut seen = BTreeSet::new();
    re.find_iter(message)
        .map(|m| m.as_str().to_string())
        .filter(|k| seen.insert(k.clone()))
        .collect()
}

fn stuff(line: &str) -> String {
    if line.starts_with('.') {
        format!(".{line}")
    } else {
        line.to_string()
    }
}

fn write_block(out: &mut String, body: &str) {
    for line in body.split('\n') {
        out.push_str(&stuff(line));
        out.push('\n');
    }
    out.push_str(".\n");
}

/// Reads dot-terminated text; lines starting with `.` are unstuffed.
fn read_block<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Option<String> {
    let mut parts = Vec::new();
    loop {
        let line = lines.next()?;
        if line == "." {
            return Some(parts.join("\n"));
        }
        parts.push(
            line.strip_prefix('.')
                .filter(|_| line.starts_with(".."))
                .unwrap_or(line)
                .to_string(),
        );
    }
}

pub fn write_history(records: &[ChangeRecord]) -> String {
    let mut out = format!("{HIST_FORMAT}\n");
    for r in records {
        out.push_str(&format!("revision {}\n", r.revision));
        out.push_str(&format!("parent {}\n", r.parent.as_deref().unwrap_or("-")));
        out.push_str(&format!("author {}\n", r.author));
        out.push_str("message\n");
        write_block(&mut out, &r.message);
        out.push_str("paths\n");
        for p in &r.changed_paths {
            out.push_str(&format!("+ {p}\n"));
        }
        out.push_str("end\n");
    }
    out
}

fn field<'a>(line: Option<&'a str>, name: &str, index: usize) -> Result<&'a str, HistoryError> {
    let line = line.ok_or_else(|| HistoryError::Malformed {
        index,
        reason: format!("missing `{name}`"),
    })?;
    line.strip_prefix(name)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| HistoryError::Malformed {
            index,
            reason: format!("expected `{name} ...`, got `{line}`"),
        })
}

/// Parses a `hist/1` log into records in log order.
pub fn ingest_history(text: &str) -> Result<Vec<ChangeRecord>, HistoryError> {
    let mut lines = text.lines();
    if lines.next() != Some(HIST_FORMAT) {
        return Err(HistoryError::Malformed {
            index: 0,
            reason: format!("missing `{HIST_FORMAT}` header"),
        });
    }
    let mut records: Vec<ChangeRecord> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut lines = lines.peekable();
    while lines.peek().is_some() {
        let index = records.len();
        let malformed = |reason: &str| HistoryError::Malformed {
            index,
            reason: reason.to_string(),
        };
        let revision = field(lines.next(), "revision", index)?.to_string();
        if revision.is_empty() || !seen.insert(revision.clone()) {
            return Err(malformed("empty or duplicate revision"));
        }
        let parent = match field(lines.next(), "parent", index)? {
            "-" => None,
            p => Some(p.to_string()),
        };
        match (&parent, index) {
            (None, 0) => {}
            (None, _) => return Err(malformed("only the first record may be a root")),
            (Some(p), _) if !records.iter().any(|r| &r.revision == p) => {
                return Err(HistoryError::UnknownParent {
                    index,
                    parent: p.clone(),
                })
            }
            _ => {}
        }
        let author = field(lines.next(), "author", index)?.to_string();
        if lines.next() != Some("message") {
            return Err(malformed("expected `message`"));
        }
        let message = read_block(&mut lines).ok_or_else(|| malformed("unterminated message"))?;
        if lines.next() != Some("paths") {
            return Err(malformed("expected `paths`"));
        }
        let mut changed_paths = Vec::new();
        loop {
            match lines.next() {
                Some("end") => break,
                Some(l) => match l.strip_prefix("+ ") {
                    Some(p) if !p.is_empty() => changed_paths.push(p.to_string()),
                    _ => return Err(malformed(&format!("bad path line `{l}`"))),
                },
                None => return Err(malformed("unterminated paths")),
            }
        }
        let issue_refs = extract_issue_refs(&message);
        records.push(ChangeRecord {
            revision,
            parent,
            author,
            message,
            changed_paths,
            issue_refs,
        });
    }
    Ok(records)
}

pub fn write_issues(issues: &[IssueRecord]) -> String {
    let mut out = format!("{ISS_FORMAT}\n");
    for i in issues {
        out.push_str(&format!("key {}\n", i.key));
        out.push_str(&format!("title {}\n", i.title));
        let revs = if i.revisions.is_empty() {
            "-".to_string()
        } else {
            i.revisions.join(" ")
        };
        out.push_str(&format!("revisions {revs}\n"));
        out.push_str("body\n");
        write_block(&mut out, &i.body);
        out.push_str("end\n");
    }
    out
}

pub fn ingest_issues(text: &str) -> Result<Vec<IssueRecord>, HistoryError> {
    let mut lines = text.lines();
    if lines.next() != Some(ISS_FORMAT) {
        return Err(HistoryError::Malformed {
            index: 0,
            reason: format!("missing `{ISS_FORMAT}` header"),
        });
    }
    let mut out = Vec::new();
    let mut lines = lines.peekable();
    while lines.peek().is_some() {
        let index = out.len();
        let malformed = |reason: &str| HistoryError::Malformed {
            index,
            reason: reason.to_string(),
        };
        let key = field(lines.next(), "key", index)?.to_string();
        let title = field(lines.next(), "title", index)?.to_string();
        let revisions = match field(lines.next(), "revisions", index)? {
            "-" => Vec::new(),
            revs => revs.split(' ').map(str::to_string).collect(),
        };
        if lines.next() != Some("body") {
            return Err(malformed("expected `body`"));
        }
        let body = read_block(&mut lines).ok_or_else(|| malformed("unterminated body"))?;
        if lines.next() != Some("end") {
            return Err(malformed("expected `end`"));
        }
        out.push(IssueRecord {
            key,
            title,
            body,
            revisions,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorKind {
    IntroducedIn,
    ModifiedIn,
    ReferencedIn,
    DiscussedIn,
}

impl AnchorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnchorKind::IntroducedIn => "introduced-in",
            AnchorKind::ModifiedIn => "modified-in",
            AnchorKind::ReferencedIn => "referenced-in",
            AnchorKind::DiscussedIn => "discussed-in",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorTarget {
    Revision(String),
    Issue(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceAnchor {
    pub subject: NodeId,
    pub kind: AnchorKind,
    pub target: AnchorTarget,
    /// Revision of the change record that produced the anchor.
    pub revision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

impl fmt::Display for TraceAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let target = match &self.target {
            AnchorTarget::Revision(r) => r,
            AnchorTarget::Issue(k) => k,
        };
        write!(f, "{} {} {}", self.subject, self.kind.as_str(), target)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkOutput {
    pub anchors: Vec<TraceAnchor>,
    /// Changed paths absent from both maps, and references to unknown issues.
    pub warnings: ValidationReport,
}

/// Anchors for a single record given the maps before and after it.
pub fn link_record(
    record: &ChangeRecord,
    parent_map: Option<&CodeMap>,
    map: &CodeMap,
    known_issues: &BTreeSet<String>,
    out: &mut LinkOutput,
) {
    let empty = CodeMap::default();
    let parent_map = parent_map.unwrap_or(&empty);
    let mut paths: Vec<&String> = record.changed_paths.iter().collect();
    paths.sort();
    paths.dedup();
    let mut changed = Vec::new();
    for path in paths {
        let now = map.nodes_under(path);
        if now.is_empty() && parent_map.nodes_under(path).is_empty() {
            out.warnings.push(
                path.as_str(),
                "unmapped-path",
                format!("{} touches a path with no artifacts", record.revision),
            );
            continue;
        }
        for id in now {
            let current = map.artifact(&id).expect("listed");
            let kind = match parent_map.artifact(&id) {
                None => AnchorKind::IntroducedIn,
                Some(prev) if prev.content_hash != current.content_hash => AnchorKind::ModifiedIn,
                Some(_) => continue,
            };
            out.anchors.push(TraceAnchor {
                subject: id.clone(),
                kind,
                target: AnchorTarget::Revision(record.revision.clone()),
                revision: record.revision.clone(),
                evidence: None,
            });
            changed.push(id);
        }
    }
    for issue in &record.issue_refs {
        if !known_issues.contains(issue) {
            // the anchor is kept so a later-ingested issue links up the same way
            out.warnings.push(
                issue.as_str(),
                "unknown-issue",
                format!("{} references an issue not ingested", record.revision),
            );
        }
        for id in &changed {
            out.anchors.push(TraceAnchor {
                subject: id.clone(),
                kind: AnchorKind::DiscussedIn,
                target: AnchorTarget::Issue(issue.clone()),
                revision: record.revision.clone(),
                evidence: None,
            });
        }
    }
}

/// Anchors every record against the maps of its parent and its own revision.
pub fn link_history(
    records: &[ChangeRecord],
    maps: &BTreeMap<String, CodeMap>,
    known_issues: &BTreeSet<String>,
) -> Result<LinkOutput, HistoryError> {
    let mut out = LinkOutput::default();
    for record in records {
        let map = maps
            .get(&record.revision)
            .ok_or_else(|| HistoryError::MissingMap(record.revision.clone()))?;
        let parent_map = match &record.parent {
            Some(p) => Some(
                maps.get(p)
                    .ok_or_else(|| HistoryError::MissingMap(p.clone()))?,
            ),
            None => None,
        };
        link_record(record, parent_map, map, known_issues, &mut out);
    }
    Ok(out)
}

/// Anchors of `subject` whose carrying record lies in `[from, to]` (history
/// order, inclusive). A reversed range is empty.
pub fn anchors_for(
    anchors: &[TraceAnchor],
    records: &[ChangeRecord],
    graph: &Graph,
    subject: &NodeId,
    from: &str,
    to: &str,
) -> Result<Vec<TraceAnchor>, HistoryError> {
    if !graph.contains(subject) {
        return Err(HistoryError::UnknownSubject(subject.clone()));
    }
    let order: BTreeMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.revision.as_str(), i))
        .collect();
    let lo = *order
        .get(from)
        .ok_or_else(|| HistoryError::UnknownRevision(from.to_string()))?;
    let hi = *order
        .get(to)
        .ok_or_else(|| HistoryError::UnknownRevision(to.to_string()))?;
    let mut hits: Vec<(usize, &TraceAnchor)> = anchors
        .iter()
        .filter(|a| &a.subject == subject)
        .filter_map(|a| order.get(a.revision.as_str()).map(|i| (*i, a)))
        .filter(|(i, _)| lo <= *i && *i <= hi)
        .collect();
    hits.sort_by_key(|(i, _)| *i);
    Ok(hits.into_iter().map(|(_, a)| a.clone()).collect())
}
