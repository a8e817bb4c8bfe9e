#![allow(dead_code)]

use std::path::{Path, PathBuf};

use seqchart_cli::{ExternalEvent, SessionService};

pub const COURSES: [&str; 3] = ["minimal", "quiz", "empty_first"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Copies the loadable course fixtures into `dir`.
pub fn content_dir(dir: &Path) -> PathBuf {
    let content = dir.join("content");
    std::fs::create_dir_all(&content).unwrap();
    for c in COURSES {
        let name = format!("{c}.json");
        std::fs::copy(fixtures().join(&name), content.join(&name)).unwrap();
    }
    content
}

pub fn open(dir: &Path) -> SessionService {
    let (svc, report) = SessionService::open(content_dir(dir), Some(dir.join("logs"))).unwrap();
    assert!(report.quarantined.is_empty(), "{report:?}");
    svc
}

pub fn submit(score: f64) -> ExternalEvent {
    ExternalEvent::Submit { score }
}
