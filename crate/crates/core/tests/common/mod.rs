//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod fake_jira;
pub mod props;

use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn backlog51() -> PathBuf {
    fixtures().join("backlog51.json")
}

pub fn truth51() -> PathBuf {
    fixtures().join("truth51.csv")
}

/// Copies the bundled backlog into a fresh temp dir.
pub fn backlog_copy() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("backlog.json");
    std::fs::copy(backlog51(), &path).expect("copy fixture");
    (dir, path)
}
