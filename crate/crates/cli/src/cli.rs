// SPDX-License-Identifier: Apache-2.0

//! `twin` command line. Each subcommand prints one document in the owning
//! module's format; failures print `{"error": ...}` to stderr.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use twin_core::canonical::canonical_bytes_unchecked;
use twin_core::context::compile_package;
use twin_core::model::NodeId;
use twin_core::query::{impact_of_change, run_query, select_revision, TwinSubgraph};
use twin_core::validate::Finding;
use twin_core::writeback::{propose_update, record_feedback, review, Decision};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::service::{FeedbackRequest, ProposalRequest, ReviewReply};
use crate::twin::{to_json, Twin};

#[derive(Debug, Parser)]
#[command(name = "twin", version, about = "Version-aware code knowledge twin")]
pub struct Cli {
    /// cfg/1 configuration file.
    #[arg(long, global = true, env = "TWIN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Snapshot store directory; overrides the config file and TWIN_STORE.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    /// Canonical graph/1 lines.
    Graph,
    /// Graph plus anchors, unresolved references, evidence and cards.
    Snapshot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build every revision of a repository directory into an empty store.
    Build { repo: PathBuf },
    /// Apply repository commits newer than the latest stored revision.
    Update { repo: PathBuf },
    /// Resolve, expand and rank; prints qres/1.
    Query {
        text: String,
        #[arg(long)]
        revision: Option<String>,
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// What may break if a node changes; prints qres/1.
    Impact {
        node: String,
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        revision: Option<String>,
    },
    /// Compile a context package (ctx/1) from a query or a saved qres/1 file.
    Compile {
        /// Query text; ignored when --subgraph is given.
        text: Option<String>,
        #[arg(long)]
        subgraph: Option<PathBuf>,
        /// Token budget.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        revision: Option<String>,
    },
    /// Submit a proposal from a JSON file `{delta, provenance, author}`; prints prop/1.
    Propose { request: PathBuf },
    /// Accept or reject a pending proposal.
    Review {
        id: String,
        verdict: Verdict,
        #[arg(long, default_value = "cli")]
        reviewer: String,
    },
    /// Record a feedback event from a JSON file `{signal, subjects, provenance}`; prints evt/1.
    Feedback { event: PathBuf },
    /// List open and resolved conflict tasks.
    Conflicts,
    /// Validate a stored snapshot; exits nonzero on any finding.
    Validate {
        #[arg(long)]
        snapshot: Option<String>,
    },
    /// Print a stored snapshot in canonical form.
    Export {
        #[arg(long)]
        snapshot: Option<String>,
        #[arg(long, value_enum, default_value = "graph")]
        format: ExportFormat,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Serialize)]
struct Built<'a> {
    snapshots: &'a [String],
}

#[derive(Serialize)]
struct Validation {
    snapshot: String,
    revision: String,
    findings: Vec<Finding>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ApiError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))
}

/// Outcome of a command: text for stdout and whether it counts as success.
pub struct Output {
    pub stdout: String,
    pub ok: bool,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Output { stdout, ok: true }
    }
}

pub fn config_for(cli: &Cli) -> Result<ServiceConfig, ApiError> {
    let mut cfg = ServiceConfig::load(cli.config.as_deref())?;
    if let Some(s) = &cli.store {
        cfg.store = s.clone();
    }
    Ok(cfg)
}

/// Runs every command except `serve`.
pub fn run(cli: Cli) -> Result<Output, ApiError> {
    let mut twin = Twin::open(config_for(&cli)?)?;
    let out = match cli.command {
        Command::Build { repo } => to_json(&Built {
            snapshots: &twin.build(&repo)?,
        }),
        Command::Update { repo } => to_json(&Built {
            snapshots: &twin.update(&repo)?,
        }),
        Command::Query {
            text,
            revision,
            hops,
            budget,
            seeds,
        } => {
            let mut spec = twin.spec(&text);
            spec.revision = revision;
            spec.hops = hops.unwrap_or(spec.hops);
            spec.budget = budget.unwrap_or(spec.budget);
            spec.seeds = seeds.unwrap_or(spec.seeds);
            let rev = select_revision(&spec, &twin.revisions()?)?;
            let at = twin.load(Some(&rev))?;
            run_query(&spec, &at.snapshot, twin.weights())?.to_json()
        }
        Command::Impact {
            node,
            hops,
            budget,
            revision,
        } => {
            let at = twin.load(revision.as_deref())?;
            let d = &twin.config.defaults;
            impact_of_change(
                &NodeId::from(node.as_str()),
                &at.snapshot,
                hops.unwrap_or(d.impact_hops),
                budget.unwrap_or(d.node_budget),
                twin.weights(),
            )?
            .to_json()
        }
        Command::Compile {
            text,
            subgraph,
            budget,
            revision,
        } => {
            let budget = budget.unwrap_or(twin.config.defaults.token_budget);
            let g: TwinSubgraph = match (subgraph, text) {
                (Some(path), _) => read_json(&path)?,
                (None, Some(text)) => {
                    let mut spec = twin.spec(&text);
                    spec.revision = revision.clone();
                    let rev = select_revision(&spec, &twin.revisions()?)?;
                    run_query(&spec, &twin.load(Some(&rev))?.snapshot, twin.weights())?
                }
                (None, None) => return Err(ApiError::bad_request("give query text or --subgraph")),
            };
            let at = twin.load(Some(&g.revision))?;
            compile_package(&g, budget, &at.snapshot)?.render()
        }
        Command::Propose { request } => {
            let req: ProposalRequest = read_json(&request)?;
            let cur = twin.load(None)?;
            to_json(&propose_update(
                &twin.log,
                &cur.snapshot,
                req.delta,
                req.provenance,
                req.author,
            )?)
        }
        Command::Review {
            id,
            verdict,
            reviewer,
        } => {
            let cur = twin.load(None)?;
            let decision = match verdict {
                Verdict::Accept => Decision::Accept,
                Verdict::Reject => Decision::Reject,
            };
            let out = review(
                &twin.log,
                &mut twin.store,
                &cur.snapshot,
                &id,
                decision,
                &reviewer,
                &twin.pipeline,
            )?;
            to_json(&ReviewReply {
                proposal: out.proposal,
                event: out.event,
                snapshot: out.snapshot_id,
            })
        }
        Command::Feedback { event } => {
            let req: FeedbackRequest = read_json(&event)?;
            let cur = twin.load(None)?;
            let (e, _, _) = record_feedback(
                &twin.log,
                &mut twin.store,
                &cur.snapshot,
                req.signal,
                req.subjects,
                req.provenance,
                &twin.pipeline,
            )?;
            to_json(&e)
        }
        Command::Conflicts => {
            let cur = twin.load(None)?;
            to_json(&twin.log.conflicts(&cur.snapshot)?)
        }
        Command::Validate { snapshot } => {
            let at = twin.load(snapshot.as_deref())?;
            let findings = at.snapshot.validate().findings;
            let ok = findings.is_empty();
            let body = to_json(&Validation {
                snapshot: at.id,
                revision: at.snapshot.revision.clone(),
                findings,
            });
            return Ok(Output { stdout: body, ok });
        }
        Command::Export { snapshot, format } => {
            let at = twin.load(snapshot.as_deref())?;
            let bytes = match format {
                ExportFormat::Graph => canonical_bytes_unchecked(&at.snapshot.graph),
                ExportFormat::Snapshot => at.snapshot.canonical_bytes(),
            };
            String::from_utf8(bytes).expect("canonical form is UTF-8")
        }
        Command::Serve { .. } => {
            return Err(ApiError::bad_request(
                "serve runs through the async entry point",
            ))
        }
    };
    Ok(Output::ok(out))
}
