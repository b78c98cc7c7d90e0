// SPDX-License-Identifier: Apache-2.0

//! Evidence fragments: verbatim, revision-pinned quotes backing knowledge
//! claims, and their verification against the stored sources.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::extractors::SourceTree;
use crate::history::{ChangeRecord, IssueRecord};
use crate::text::char_slice;
use crate::validate::{rules, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Document,
    CommitMessage,
    Issue,
    Discussion,
    /// Source text of an artifact; backs functionality and responsibility nodes.
    Code,
}

impl SourceKind {
    pub fn short(self) -> &'static str {
        match self {
            SourceKind::Document => "doc",
            SourceKind::CommitMessage => "commit",
            SourceKind::Issue => "issue",
            SourceKind::Discussion => "disc",
            SourceKind::Code => "code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvidenceFragment {
    pub id: String,
    pub source_kind: SourceKind,
    /// Path, revision, issue key or discussion key.
    pub source_key: String,
    pub quote: String,
    /// Character range (unicode scalar values) within the source text.
    pub start: usize,
    pub end: usize,
    pub revision: String,
}

impl EvidenceFragment {
    pub fn new(
        source_kind: SourceKind,
        source_key: &str,
        quote: &str,
        start: usize,
        end: usize,
        revision: &str,
    ) -> Self {
        EvidenceFragment {
            id: format!("{}:{}:{}-{}", source_kind.short(), source_key, start, end),
            source_kind,
            source_key: source_key.to_string(),
            quote: quote.to_string(),
            start,
            end,
            revision: revision.to_string(),
        }
    }
}

pub type EvidenceStore = BTreeMap<String, EvidenceFragment>;

/// Everything evidence can be checked against.
#[derive(Debug, Clone, Copy)]
pub struct EvidenceSources<'a> {
    pub tree: &'a SourceTree,
    pub records: &'a [ChangeRecord],
    pub issues: &'a [IssueRecord],
    pub discussions: &'a BTreeMap<String, String>,
}

/// Last revision whose record touched `path`, or the root revision.
pub fn last_touch(records: &[ChangeRecord], path: &str) -> Option<String> {
    records
        .iter()
        .rev()
        .find(|r| r.changed_paths.iter().any(|p| p == path))
        .or_else(|| records.first())
        .map(|r| r.revision.clone())
}

impl EvidenceSources<'_> {
    fn source_text(&self, e: &EvidenceFragment) -> Result<&str, String> {
        match e.source_kind {
            SourceKind::Document | SourceKind::Code => {
                let text = self
                    .tree
                    .get(&e.source_key)
                    .ok_or("source file not in tree")?;
                let expected = last_touch(self.records, &e.source_key);
                if expected.as_deref() != Some(e.revision.as_str()) {
                    return Err(format!(
                        "file text at {} is not the stored text",
                        e.revision
                    ));
                }
                Ok(text)
            }
            SourceKind::CommitMessage => {
                if e.source_key != e.revision {
                    return Err("commit evidence must be pinned to its own revision".into());
                }
                self.records
                    .iter()
                    .find(|r| r.revision == e.source_key)
                    .map(|r| r.message.as_str())
                    .ok_or_else(|| "unknown revision".into())
            }
            SourceKind::Issue => self
                .issues
                .iter()
                .find(|i| i.key == e.source_key)
                .map(|i| i.body.as_str())
                .ok_or_else(|| "unknown issue".into()),
            SourceKind::Discussion => self
                .discussions
                .get(&e.source_key)
                .map(String::as_str)
                .ok_or_else(|| "unknown discussion".into()),
        }
    }

    /// `Ok` iff the quote equals the source substring at the stated range.
    pub fn verify(&self, e: &EvidenceFragment) -> Result<(), String> {
        let text = self.source_text(e)?;
        match char_slice(text, e.start, e.end) {
            Some(s) if s == e.quote => Ok(()),
            Some(s) => Err(format!("quote differs from source text `{s}`")),
            None => Err("range outside source".into()),
        }
    }

    pub fn verify_all(&self, store: &EvidenceStore) -> ValidationReport {
        let mut report = ValidationReport::default();
        for e in store.values() {
            if let Err(msg) = self.verify(e) {
                report.push(&e.id, rules::EVIDENCE_MISMATCH, msg);
            }
        }
        report
    }
}
