//! `uq report`: re-verifies a run manifest and summarizes the run.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::manifest::{read_manifest, verify, Check, RunStatus, MANIFEST_NAME};

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub text: String,
    pub mismatches: usize,
}

/// Accepts a manifest path or the run directory holding it. Fails with a
/// verification error (exit 3) if any recorded file is missing or changed.
pub fn run_report(path: &Path) -> CliResult<ReportOutcome> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let manifest = read_manifest(&manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut text = String::new();
    writeln!(
        text,
        "{} {} `{}` seed {} ({})",
        manifest.tool, manifest.version, manifest.command, manifest.seed, manifest.seed_source
    )
    .unwrap();
    if manifest.status == RunStatus::Failed {
        writeln!(
            text,
            "status: failed at stage `{}`: {}",
            manifest.failed_stage.as_deref().unwrap_or("?"),
            manifest.error.as_deref().unwrap_or("")
        )
        .unwrap();
    } else {
        writeln!(text, "status: complete").unwrap();
    }
    for (k, v) in &manifest.settings {
        writeln!(text, "  {k} = {v}").unwrap();
    }
    let mut mismatches = 0;
    for (what, check) in verify(&manifest, dir) {
        let status = match check {
            Check::Ok => "ok".to_string(),
            Check::Missing => {
                mismatches += 1;
                "MISSING".to_string()
            }
            Check::Changed { sha256 } => {
                mismatches += 1;
                format!("CHANGED (now {sha256})")
            }
        };
        writeln!(text, "{status:>8}  {what}").unwrap();
    }
    for n in &manifest.notes {
        writeln!(text, "note: {n}").unwrap();
    }
    if mismatches > 0 {
        return Err(CliError::Verification(format!(
            "{text}{mismatches} recorded file(s) do not match {}",
            manifest_path.display()
        )));
    }
    Ok(ReportOutcome { text, mismatches })
}
