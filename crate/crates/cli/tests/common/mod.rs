// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;
use twin_service::config::ServiceConfig;
use twin_service::service::{router, AppState, REVISION_HEADER, SNAPSHOT_HEADER};
use twin_service::twin::Twin;

pub fn payfix_repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/payfix")
}

pub fn config(store: &Path) -> ServiceConfig {
    ServiceConfig {
        store: store.to_path_buf(),
        extractor: "facts".into(),
        ..ServiceConfig::default()
    }
}

/// A store holding payfix at c1 and c2.
pub fn payfix_store() -> (tempfile::TempDir, ServiceConfig) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir.path().join("store"));
    let mut twin = Twin::open(cfg.clone()).unwrap();
    twin.build(&payfix_repo()).unwrap();
    (dir, cfg)
}

pub fn app(cfg: &ServiceConfig) -> Router {
    router(AppState::new(Twin::open(cfg.clone()).unwrap()).unwrap())
}

pub struct Reply {
    pub status: StatusCode,
    pub revision: Option<String>,
    pub snapshot: Option<String>,
    pub body: String,
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let (status, revision, snapshot) = {
        let header = |name: &str| {
            res.headers()
                .get(name)
                .map(|v| v.to_str().unwrap().to_string())
        };
        (
            res.status(),
            header(REVISION_HEADER),
            header(SNAPSHOT_HEADER),
        )
    };
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        revision,
        snapshot,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}
