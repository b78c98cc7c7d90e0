// SPDX-License-Identifier: Apache-2.0

//! Fact extractors: turn a source tree into a sorted `facts/1` stream.
//!
//! Two extractors ship:
//! - `facts`: passes through `*.facts` files found in the tree, fills missing
//!   digests from the tree text and declares every other file.
//! - `python`: top-level functions, classes, tests, imports and
//!   call-by-name edges for `.py` files, `key = value` entries for config
//!   files, and a file node for everything else.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::facts::{parse_facts, CodeFact, DeclKind, Declaration, FactsError};
use crate::model::{Relation, Visibility};
use crate::text::digest;

/// Repository-relative path → file text.
pub type SourceTree = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("unreadable path {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("unknown extractor `{0}`")]
    UnknownExtractor(String),
    #[error("in {path}: {source}")]
    Facts { path: String, source: FactsError },
}

pub trait Extractor: Send + Sync {
    fn id(&self) -> &'static str;
    /// Must be deterministic: same tree, same facts.
    fn extract(&self, tree: &SourceTree) -> Result<Vec<CodeFact>, ExtractError>;
}

pub const FACTS_EXTRACTOR: &str = "facts";
pub const PYTHON_EXTRACTOR: &str = "python";

pub fn extractor(id: &str) -> Result<&'static dyn Extractor, ExtractError> {
    static FACTS: FactsPassThrough = FactsPassThrough;
    static PYTHON: PythonExtractor = PythonExtractor;
    match id {
        FACTS_EXTRACTOR => Ok(&FACTS),
        PYTHON_EXTRACTOR => Ok(&PYTHON),
        other => Err(ExtractError::UnknownExtractor(other.to_string())),
    }
}

/// Sorted (path, then span), deduplicated fact stream.
pub fn extract_facts(tree: &SourceTree, extractor_id: &str) -> Result<Vec<CodeFact>, ExtractError> {
    let mut facts = extractor(extractor_id)?.extract(tree)?;
    facts.sort();
    facts.dedup();
    Ok(facts)
}

/// Reads every regular file under `root` into a tree keyed by `/`-separated
/// relative paths. Hidden entries are skipped.
pub fn load_tree(root: &Path) -> Result<SourceTree, ExtractError> {
    fn walk(root: &Path, dir: &Path, out: &mut SourceTree) -> Result<(), ExtractError> {
        let unreadable = |e| ExtractError::Unreadable {
            path: dir.display().to_string(),
            source: e,
        };
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(unreadable)?
            .collect::<Result<_, _>>()
            .map_err(unreadable)?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let text =
                    std::fs::read_to_string(&path).map_err(|e| ExtractError::Unreadable {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                let rel = path.strip_prefix(root).expect("under root");
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(key, text);
            }
        }
        Ok(())
    }
    let mut out = SourceTree::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

/// Lines `start..=end` (1-based) of `text`, or `None` when out of range.
pub fn span_text(text: &str, span: (u32, u32)) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let (start, end) = (span.0 as usize, span.1 as usize);
    if start == 0 || end > lines.len() || start > end {
        return None;
    }
    Some(lines[start - 1..end].join("\n"))
}

pub fn is_facts_path(path: &str) -> bool {
    path.ends_with(".facts")
}

pub fn is_config_path(path: &str) -> bool {
    [".cfg", ".ini", ".env", ".properties"]
        .iter()
        .any(|ext| path.ends_with(ext))
}

struct FactsPassThrough;

impl Extractor for FactsPassThrough {
    fn id(&self) -> &'static str {
        FACTS_EXTRACTOR
    }

    fn extract(&self, tree: &SourceTree) -> Result<Vec<CodeFact>, ExtractError> {
        let mut out = Vec::new();
        let mut declared_files = BTreeSet::new();
        for (path, text) in tree.iter().filter(|(p, _)| is_facts_path(p)) {
            let facts = parse_facts(text).map_err(|source| ExtractError::Facts {
                path: path.clone(),
                source,
            })?;
            for fact in facts {
                out.push(match fact {
                    CodeFact::Declares(mut d) => {
                        if !d.kind.is_member() {
                            declared_files.insert(d.path.clone());
                        }
                        if d.digest.is_none() {
                            d.digest = tree_digest(tree, &d);
                        }
                        CodeFact::Declares(d)
                    }
                    edge => edge,
                });
            }
        }
        for (path, text) in tree {
            if !is_facts_path(path) && !declared_files.contains(path) {
                out.push(file_fact(path, text));
            }
        }
        Ok(out)
    }
}

fn tree_digest(tree: &SourceTree, d: &Declaration) -> Option<String> {
    let text = tree.get(&d.path)?;
    match d.span {
        Some(span) => span_text(text, span).map(|t| digest(&t)),
        None => Some(digest(text)),
    }
}

fn file_fact(path: &str, text: &str) -> CodeFact {
    CodeFact::Declares(Declaration {
        kind: DeclKind::File,
        path: path.to_string(),
        name: String::new(),
        span: None,
        visibility: Visibility::Public,
        digest: Some(digest(text)),
    })
}

fn member_fact(kind: DeclKind, path: &str, name: &str, span: (u32, u32), text: &str) -> CodeFact {
    let visibility = if name.starts_with('_') {
        Visibility::Internal
    } else {
        Visibility::Public
    };
    CodeFact::Declares(Declaration {
        kind,
        path: path.to_string(),
        name: name.to_string(),
        span: Some(span),
        visibility,
        digest: span_text(text, span).map(|t| digest(&t)),
    })
}

struct PythonExtractor;

const NOT_CALLS: &[&str] = &[
    "if",
    "elif",
    "while",
    "for",
    "return",
    "and",
    "or",
    "not",
    "in",
    "print",
    "len",
    "range",
    "str",
    "int",
    "float",
    "dict",
    "list",
    "set",
    "tuple",
    "isinstance",
    "super",
    "open",
    "sorted",
    "lambda",
    "yield",
    "assert",
    "with",
    "except",
];

fn def_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:async\s+)?(def|class)\s+([A-Za-z_][A-Za-z0-9_]*)").unwrap())
}

fn call_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap())
}

fn import_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:from\s+([.A-Za-z0-9_]+)\s+import\b|import\s+([A-Za-z0-9_.]+))").unwrap()
    })
}

fn config_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([A-Za-z_][A-Za-z0-9_.\-]*)\s*=").unwrap())
}

fn is_test_file(path: &str) -> bool {
    let file = path.rsplit('/').next().unwrap_or(path);
    file.starts_with("test_") || file.ends_with("_test.py") || path.starts_with("tests/")
}

fn resolve_module(tree: &SourceTree, from_path: &str, module: &str) -> String {
    let dir = from_path.rsplit_once('/').map(|(d, _)| d).unwrap_or("");
    let (base, rest) = match module.strip_prefix('.') {
        Some(rest) => (dir.to_string(), rest),
        None => (String::new(), module),
    };
    let rel = rest.replace('.', "/");
    let join = |suffix: &str| {
        if base.is_empty() {
            format!("{rel}{suffix}")
        } else {
            format!("{base}/{rel}{suffix}")
        }
    };
    for candidate in [join(".py"), join("/__init__.py")] {
        if tree.contains_key(&candidate) {
            return candidate;
        }
    }
    module.to_string()
}

fn contains_token(haystack: &str, key: &str) -> bool {
    let is_key_char = |c: char| c.is_alphanumeric() || c == '_' || c == '.';
    haystack.match_indices(key).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + key.len()..].chars().next();
        !before.is_some_and(is_key_char) && !after.is_some_and(is_key_char)
    })
}

struct PyDef {
    kind: DeclKind,
    name: String,
    span: (u32, u32),
}

fn python_defs(path: &str, text: &str) -> Vec<PyDef> {
    let lines: Vec<&str> = text.lines().collect();
    let mut starts = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if let Some(c) = def_regex().captures(line) {
            starts.push((i, c[1].to_string(), c[2].to_string()));
        }
    }
    let top_level = |l: &str| {
        !l.trim().is_empty() && !l.starts_with(char::is_whitespace) && !l.starts_with('#')
    };
    let mut out = Vec::new();
    for (i, kw, name) in starts {
        let mut end = i;
        for (j, line) in lines.iter().enumerate().skip(i + 1) {
            if top_level(line) {
                break;
            }
            if !line.trim().is_empty() {
                end = j;
            }
        }
        let kind = if kw == "class" {
            DeclKind::Type
        } else if name.starts_with("test_") && is_test_file(path) {
            DeclKind::Test
        } else {
            DeclKind::Function
        };
        out.push(PyDef {
            kind,
            name,
            span: (i as u32 + 1, end as u32 + 1),
        });
    }
    out
}

impl Extractor for PythonExtractor {
    fn id(&self) -> &'static str {
        PYTHON_EXTRACTOR
    }

    fn extract(&self, tree: &SourceTree) -> Result<Vec<CodeFact>, ExtractError> {
        let mut out = Vec::new();
        let mut config_keys: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (path, text) in tree {
            out.push(file_fact(path, text));
            if is_config_path(path) {
                for (i, line) in text.lines().enumerate() {
                    let trimmed = line.trim_start();
                    if trimmed.starts_with('#')
                        || trimmed.starts_with(';')
                        || trimmed.starts_with('[')
                    {
                        continue;
                    }
                    if let Some(c) = config_regex().captures(line) {
                        let key = c[1].to_string();
                        let n = i as u32 + 1;
                        out.push(member_fact(DeclKind::ConfigEntry, path, &key, (n, n), text));
                        config_keys.entry(key).or_default().push(path.clone());
                    }
                }
            }
        }
        for (path, text) in tree.iter().filter(|(p, _)| p.ends_with(".py")) {
            for line in text.lines() {
                if let Some(c) = import_regex().captures(line) {
                    let module = c
                        .get(1)
                        .or_else(|| c.get(2))
                        .map(|m| m.as_str())
                        .unwrap_or_default();
                    let target = resolve_module(tree, path, module);
                    if &target != path {
                        out.push(CodeFact::edge(Relation::Imports, path, &target));
                    }
                }
            }
            for def in python_defs(path, text) {
                out.push(member_fact(def.kind, path, &def.name, def.span, text));
                let source = format!("{path}#{}", def.name);
                if def.kind == DeclKind::Type {
                    continue;
                }
                let body = span_text(text, def.span).unwrap_or_default();
                let mut callees = BTreeSet::new();
                for line in body.lines().skip(1) {
                    let code = line.split('#').next().unwrap_or("");
                    for c in call_regex().captures_iter(code) {
                        let callee = &c[1];
                        if !NOT_CALLS.contains(&callee) {
                            callees.insert(callee.to_string());
                        }
                    }
                }
                for callee in callees {
                    out.push(CodeFact::edge(Relation::Calls, &source, &callee));
                }
                if def.kind == DeclKind::Test {
                    if let Some(subject) = def.name.strip_prefix("test_").filter(|s| !s.is_empty())
                    {
                        out.push(CodeFact::edge(Relation::Tests, &source, subject));
                    }
                }
                for (key, cfg_paths) in &config_keys {
                    if contains_token(&body, key) {
                        for cfg in cfg_paths {
                            out.push(CodeFact::edge(
                                Relation::ConfiguredBy,
                                &source,
                                &format!("{cfg}#{key}"),
                            ));
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(files: &[(&str, &str)]) -> SourceTree {
        files
            .iter()
            .map(|(p, t)| (p.to_string(), t.to_string()))
            .collect()
    }

    #[test]
    fn empty_tree_yields_empty_stream() {
        assert!(extract_facts(&SourceTree::new(), PYTHON_EXTRACTOR)
            .unwrap()
            .is_empty());
        assert!(extract_facts(&SourceTree::new(), FACTS_EXTRACTOR)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_function_file() {
        let facts = extract_facts(
            &tree(&[("m.py", "def run():\n    return 1\n")]),
            PYTHON_EXTRACTOR,
        )
        .unwrap();
        assert_eq!(facts.len(), 2);
        assert!(matches!(&facts[0], CodeFact::Declares(d) if d.kind == DeclKind::File));
        assert!(
            matches!(&facts[1], CodeFact::Declares(d) if d.kind == DeclKind::Function && d.span == Some((1, 2)))
        );
    }

    #[test]
    fn unknown_extractor_is_an_error() {
        assert!(matches!(
            extract_facts(&SourceTree::new(), "cobol"),
            Err(ExtractError::UnknownExtractor(_))
        ));
    }

    #[test]
    fn config_keys_create_configured_by() {
        let t = tree(&[
            ("app.cfg", "# settings\nretry.max=3\n"),
            (
                "svc.py",
                "def send():\n    n = conf('retry.max')\n    return n\n",
            ),
        ]);
        let facts = extract_facts(&t, PYTHON_EXTRACTOR).unwrap();
        assert!(facts.contains(&CodeFact::edge(
            Relation::ConfiguredBy,
            "svc.py#send",
            "app.cfg#retry.max"
        )));
        assert!(facts.contains(&CodeFact::edge(Relation::Calls, "svc.py#send", "conf")));
    }

    #[test]
    fn pass_through_fills_digests_and_declares_files() {
        let t = tree(&[
            (
                "code.facts",
                "facts/1\ndeclares-function\ta.x\tf\t1-1\tpublic\t-\n",
            ),
            ("a.x", "fn f\n"),
            ("README.md", "# hi\n"),
        ]);
        let facts = extract_facts(&t, FACTS_EXTRACTOR).unwrap();
        assert_eq!(facts.len(), 3);
        let f = facts.iter().find_map(|f| match f {
            CodeFact::Declares(d) if d.name == "f" => Some(d),
            _ => None,
        });
        assert_eq!(f.unwrap().digest.as_deref(), Some(digest("fn f").as_str()));
    }

    #[test]
    fn key_tokens_need_boundaries() {
        assert!(contains_token("get('retry.max')", "retry.max"));
        assert!(!contains_token("retry.maximum", "retry.max"));
        assert!(!contains_token("xretry.max", "retry.max"));
    }
}
