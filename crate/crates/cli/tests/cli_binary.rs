// SPDX-License-Identifier: Apache-2.0

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use twin_core::canonical::canonical_bytes_unchecked;
use twin_core::context::compile_package;
use twin_core::query::run_query;
use twin_core::writeback::AuthorKind;
use twin_service::service::ProposalRequest;
use twin_service::twin::{to_json, Twin};
use twin_testkit::payfix;

use common::{config, copy_dir, payfix_repo};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

struct Cli {
    dir: tempfile::TempDir,
    cfg_path: PathBuf,
}

impl Cli {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("twin.toml");
        std::fs::write(&cfg_path, config(&dir.path().join("store")).render()).unwrap();
        Cli { dir, cfg_path }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Run {
        let out = Command::new(env!("CARGO_BIN_EXE_twin"))
            .args(args)
            .env("TWIN_CONFIG", &self.cfg_path)
            .env_remove("TWIN_STORE")
            .env_remove("TWIN_LISTEN")
            .output()
            .unwrap();
        Run {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8(out.stdout).unwrap(),
            stderr: String::from_utf8(out.stderr).unwrap(),
        }
    }

    fn ok(&self, args: &[&str]) -> String {
        let r = self.run(args);
        assert_eq!(r.code, 0, "twin {args:?} failed: {}", r.stderr);
        r.stdout
    }

    fn twin(&self) -> Twin {
        Twin::open(twin_service::config::ServiceConfig::load(Some(&self.cfg_path)).unwrap())
            .unwrap()
    }
}

fn repo_str() -> String {
    payfix_repo().to_string_lossy().into_owned()
}

fn rule(stderr: &str) -> String {
    let v: Value = serde_json::from_str(stderr.trim()).unwrap();
    v["error"]["rule"].as_str().unwrap().to_string()
}

#[test]
fn build_then_read_commands_match_the_library() {
    let cli = Cli::new();
    let built: Value = serde_json::from_str(&cli.ok(&["build", &repo_str()])).unwrap();
    assert_eq!(built["snapshots"].as_array().unwrap().len(), 2);

    let again = cli.run(&["build", &repo_str()]);
    assert_eq!(
        (again.code, rule(&again.stderr).as_str()),
        (1, "store-not-empty")
    );

    let twin = cli.twin();
    let cur = twin.load(None).unwrap();
    let expected = run_query(
        &twin.spec(payfix::GOLDEN_QUERY),
        &cur.snapshot,
        twin.weights(),
    )
    .unwrap();
    assert_eq!(
        cli.ok(&["query", payfix::GOLDEN_QUERY]).trim_end(),
        expected.to_json()
    );

    let ctx = compile_package(&expected, 500, &cur.snapshot)
        .unwrap()
        .render();
    assert_eq!(
        cli.ok(&["compile", payfix::GOLDEN_QUERY, "--budget", "500"]),
        ctx
    );
    let saved = cli.path("qres.json");
    std::fs::write(&saved, expected.to_json()).unwrap();
    assert_eq!(
        cli.ok(&[
            "compile",
            "--subgraph",
            saved.to_str().unwrap(),
            "--budget",
            "500"
        ]),
        ctx
    );

    let graph = String::from_utf8(canonical_bytes_unchecked(&cur.snapshot.graph)).unwrap();
    assert_eq!(cli.ok(&["export"]), graph);
    let v: Value = serde_json::from_str(&cli.ok(&["validate"])).unwrap();
    assert_eq!(v["findings"].as_array().unwrap().len(), 0);
    assert_eq!(v["revision"], "c2");

    let small = cli.run(&["compile", payfix::GOLDEN_QUERY, "--budget", "3"]);
    assert_eq!(
        (small.code, rule(&small.stderr).as_str()),
        (1, "budget-too-small")
    );
    let unknown = cli.run(&["query", "x", "--revision", "c7"]);
    assert_eq!(
        (unknown.code, rule(&unknown.stderr).as_str()),
        (1, "unknown-revision")
    );
}

#[test]
fn curation_round_trip_through_files() {
    let cli = Cli::new();
    cli.ok(&["build", &repo_str()]);
    let req = cli.path("proposal.json");
    let body = ProposalRequest {
        delta: payfix::async_allowed(),
        provenance: vec![payfix::review_comment()],
        author: AuthorKind::Human,
    };
    std::fs::write(&req, to_json(&body)).unwrap();
    let p: Value = serde_json::from_str(&cli.ok(&["propose", req.to_str().unwrap()])).unwrap();
    assert_eq!(
        (p["id"].as_str(), p["state"].as_str()),
        (Some("p0001"), Some("pending"))
    );

    let reviewed: Value =
        serde_json::from_str(&cli.ok(&["review", "p0001", "accept", "--reviewer", "ana"])).unwrap();
    assert_eq!(reviewed["proposal"]["state"], "accepted");
    let twice = cli.run(&["review", "p0001", "reject"]);
    assert_eq!(
        (twice.code, rule(&twice.stderr).as_str()),
        (1, "not-pending")
    );

    let conflicts: Value = serde_json::from_str(&cli.ok(&["conflicts"])).unwrap();
    assert_eq!(conflicts.as_array().unwrap().len(), 1);

    let fb = cli.path("feedback.json");
    std::fs::write(
        &fb,
        r#"{"signal":"patch-rejected","subjects":["k:constraint:async-allowed"],"provenance":{"kind":"revision","revision":"c2"}}"#,
    )
    .unwrap();
    let e: Value = serde_json::from_str(&cli.ok(&["feedback", fb.to_str().unwrap()])).unwrap();
    assert_eq!(e["format"], "evt/1");
    let twin = cli.twin();
    let node = twin
        .load(None)
        .unwrap()
        .snapshot
        .graph
        .node(&"k:constraint:async-allowed".into())
        .cloned();
    let Some(twin_core::model::Node::Knowledge(k)) = node else {
        panic!("curated node missing")
    };
    assert!((k.confidence - 1.0 / 3.0).abs() < 1e-12);
}

/// Copies payfix keeping only its first commit.
fn first_commit_only(to: &Path) {
    copy_dir(&payfix_repo(), to);
    std::fs::remove_dir_all(to.join("trees/c2")).unwrap();
    let hist = std::fs::read_to_string(to.join("history.hist")).unwrap();
    let cut = hist.find("revision c2").unwrap();
    std::fs::write(to.join("history.hist"), &hist[..cut]).unwrap();
}

#[test]
fn update_matches_a_full_build() {
    let full = Cli::new();
    let built: Value = serde_json::from_str(&full.ok(&["build", &repo_str()])).unwrap();

    let partial = Cli::new();
    let repo = partial.path("repo");
    first_commit_only(&repo);
    partial.ok(&["build", repo.to_str().unwrap()]);
    let noop: Value =
        serde_json::from_str(&partial.ok(&["update", repo.to_str().unwrap()])).unwrap();
    assert_eq!(noop["snapshots"].as_array().unwrap().len(), 0);
    let updated: Value = serde_json::from_str(&partial.ok(&["update", &repo_str()])).unwrap();
    assert_eq!(updated["snapshots"][0], built["snapshots"][1]);
    assert_eq!(
        partial.ok(&["export", "--format", "snapshot"]),
        full.ok(&["export", "--format", "snapshot"])
    );
}

#[test]
fn bad_inputs_exit_nonzero_with_a_record() {
    let cli = Cli::new();
    let empty = cli.run(&["query", "anything"]);
    assert_eq!(empty.code, 1);
    assert_eq!(rule(&empty.stderr), "store-empty");

    std::fs::write(&cli.cfg_path, "format = \"cfg/1\"\nbogus = 1\n").unwrap();
    let bad = cli.run(&["validate"]);
    assert_eq!(
        (bad.code, rule(&bad.stderr).as_str()),
        (1, "config-invalid")
    );

    let missing = Cli::new();
    let r = missing.run(&["build", "/nonexistent/repo"]);
    assert_eq!((r.code, rule(&r.stderr).as_str()), (1, "repo-unreadable"));
}
