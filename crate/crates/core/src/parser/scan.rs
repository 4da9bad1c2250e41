use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use super::{parse_source, FileTransfer, Grammar, ParseError};

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("repository root not found: {0}")]
    RootNotFound(PathBuf),
    #[error("invalid glob {pattern:?}: {message}")]
    BadGlob { pattern: String, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    /// When empty every file the grammar recognises is included.
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

/// A non-fatal problem with one file or directory entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ScanOutput {
    pub transfers: Vec<FileTransfer>,
    pub diagnostics: Vec<Diagnostic>,
}

fn build_set(patterns: &[String]) -> Result<Option<GlobSet>, ScanError> {
    if patterns.is_empty() {
        return Ok(None);
    }
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| ScanError::BadGlob {
            pattern: p.clone(),
            message: e.to_string(),
        })?;
        builder.add(glob);
    }
    builder.build().map(Some).map_err(|e| ScanError::BadGlob {
        pattern: patterns.join(","),
        message: e.to_string(),
    })
}

fn matches(set: &GlobSet, rel: &str) -> bool {
    let file_name = rel.rsplit('/').next().unwrap_or(rel);
    set.is_match(rel) || set.is_match(file_name)
}

/// Parse every matching source file under `root`, ordered by relative path.
pub fn scan_repository(
    root: &Path,
    options: &ScanOptions,
    grammar: &Grammar,
) -> Result<ScanOutput, ScanError> {
    if !root.is_dir() {
        return Err(ScanError::RootNotFound(root.to_path_buf()));
    }
    let include = build_set(&options.include)?;
    let exclude = build_set(&options.exclude)?;

    let mut diagnostics = Vec::new();
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                // symlink loops and unreadable directories
                diagnostics.push(Diagnostic {
                    path: err
                        .path()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                    message: err.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() || !grammar.matches_path(entry.path()) {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else {
            continue;
        };
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if include.as_ref().is_some_and(|set| !matches(set, &rel)) {
            continue;
        }
        if exclude.as_ref().is_some_and(|set| matches(set, &rel)) {
            continue;
        }
        files.push((rel, entry.path().to_path_buf()));
    }
    files.sort();
    files.dedup_by(|a, b| a.0 == b.0);

    let results: Vec<Result<FileTransfer, Diagnostic>> = files
        .par_iter()
        .map(|(rel, abs)| {
            let bytes = std::fs::read(abs).map_err(|e| Diagnostic {
                path: rel.clone(),
                message: e.to_string(),
            })?;
            parse_source(rel, bytes, grammar).map_err(|e: ParseError| Diagnostic {
                path: rel.clone(),
                message: e.to_string(),
            })
        })
        .collect();

    let mut transfers = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(t) => transfers.push(t),
            Err(d) => {
                log::warn!("skipping {}: {}", d.path, d.message);
                diagnostics.push(d);
            }
        }
    }
    Ok(ScanOutput {
        transfers,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::write_two_file_fixture;

    fn names(out: &ScanOutput) -> Vec<&str> {
        out.transfers.iter().map(|t| t.source.path.as_str()).collect()
    }

    #[test]
    fn fixture_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        write_two_file_fixture(dir.path()).unwrap();
        let out = scan_repository(dir.path(), &ScanOptions::default(), &Grammar::python()).unwrap();
        assert_eq!(names(&out), vec!["base.py", "extended.py"]);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn exclude_glob_filters() {
        let dir = tempfile::tempdir().unwrap();
        write_two_file_fixture(dir.path()).unwrap();
        let opts = ScanOptions {
            include: vec![],
            exclude: vec!["extended*".into()],
        };
        let out = scan_repository(dir.path(), &opts, &Grammar::python()).unwrap();
        assert_eq!(names(&out), vec!["base.py"]);
    }

    #[test]
    fn empty_dir_and_missing_root() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("notes.txt"), "hi").unwrap();
        let out = scan_repository(dir.path(), &ScanOptions::default(), &Grammar::python()).unwrap();
        assert!(out.transfers.is_empty());
        let err = scan_repository(&dir.path().join("nope"), &ScanOptions::default(), &Grammar::python());
        assert!(matches!(err, Err(ScanError::RootNotFound(_))));
    }

    #[test]
    fn bad_files_become_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("pkg")).unwrap();
        std::fs::write(dir.path().join("pkg/ok.py"), "x = 1\n").unwrap();
        std::fs::write(dir.path().join("pkg/bad.py"), [0xffu8, 0xfe, 0x41]).unwrap();
        let out = scan_repository(dir.path(), &ScanOptions::default(), &Grammar::python()).unwrap();
        assert_eq!(names(&out), vec!["pkg/ok.py"]);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.transfers[0].source.module_name, "pkg.ok");
    }

    #[cfg(unix)]
    #[test]
    fn symlink_cycles_are_not_followed() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("a/m.py"), "y = 2\n").unwrap();
        std::os::unix::fs::symlink(dir.path(), dir.path().join("a/loop")).unwrap();
        let out = scan_repository(dir.path(), &ScanOptions::default(), &Grammar::python()).unwrap();
        assert_eq!(names(&out), vec!["a/m.py"]);
        assert!(!out.diagnostics.is_empty());
    }

    #[test]
    fn deterministic_serialization() {
        let dir = tempfile::tempdir().unwrap();
        write_two_file_fixture(dir.path()).unwrap();
        let a = scan_repository(dir.path(), &ScanOptions::default(), &Grammar::python()).unwrap();
        let b = scan_repository(dir.path(), &ScanOptions::default(), &Grammar::python()).unwrap();
        let ja: Vec<String> = a.transfers.iter().map(|t| t.to_json()).collect();
        let jb: Vec<String> = b.transfers.iter().map(|t| t.to_json()).collect();
        assert_eq!(ja, jb);
    }
}
