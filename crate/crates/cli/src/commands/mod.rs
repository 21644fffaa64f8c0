//! Subcommand implementations. Each takes a resolved [`RunContext`] and
//! returns the manifest it wrote.

pub mod decompose;
pub mod eval;
pub mod report;
pub mod simulate;
pub mod superpixel;

use std::path::{Path, PathBuf};

use uq_core::io::{array_content, decode_pgm, map_to_array, preview, ArrayContent, NpyArray, ReadOptions};
use uq_core::DenseMap;

use crate::config::{RunConfig, SeedSource, Task};
use crate::error::{CliError, CliResult, WithPath};
use crate::manifest::RunWriter;

pub use decompose::{run_decompose, DecomposeArgs};
pub use eval::{run_eval, EvalArgs};
pub use report::{run_report, ReportOutcome};
pub use simulate::run_simulate;
pub use superpixel::{run_superpixel, SuperpixelArgs};

pub const PREVIEW_NOTE: &str =
    "PGM previews are min-max normalized per map (first channel); they show relative structure, not calibrated magnitudes";

/// Settings shared by every run-producing subcommand.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub cfg: RunConfig,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub out: PathBuf,
}

impl RunContext {
    pub fn new(cfg: RunConfig, seed: u64, seed_source: SeedSource, out: PathBuf) -> Self {
        RunContext {
            cfg,
            seed,
            seed_source,
            out,
        }
    }

    /// Opens the output directory with the run's settings recorded.
    pub fn writer(&self, task: Task) -> CliResult<RunWriter> {
        if let Some(t) = self.cfg.task {
            if t != task {
                return Err(CliError::usage(format!(
                    "config is for task `{t}` but `{task}` was invoked"
                )));
            }
        }
        let mut settings = self.cfg.entries();
        settings.remove("seed");
        RunWriter::create(&self.out, &task.to_string(), self.seed, self.seed_source, settings)
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Reads an `.npy` array (rank-dispatched) or a `.pgm` image, recording the
/// input's hash.
pub fn load_content(w: &mut RunWriter, path: &Path, opts: ReadOptions) -> CliResult<ArrayContent> {
    let bytes = w.read_input(path)?;
    if is_pgm(path) {
        let map = decode_pgm(&bytes).with_path(path)?;
        return Ok(ArrayContent::Map(map.with_kind(opts.kind).with_path(path)?));
    }
    let array = NpyArray::from_bytes(&bytes).with_path(path)?;
    array_content(&array, opts).with_path(path)
}

pub fn load_map(w: &mut RunWriter, path: &Path, opts: ReadOptions) -> CliResult<DenseMap> {
    match load_content(w, path, opts)? {
        ArrayContent::Map(m) => Ok(m),
        _ => Err(CliError::usage(format!(
            "{}: expected a single map of shape (H, W) or (H, W, C)",
            path.display()
        ))),
    }
}

/// Writes `<name>.npy` and its `<name>.pgm` preview.
pub fn write_map_with_preview(w: &mut RunWriter, name: &str, map: &DenseMap) -> CliResult<()> {
    w.write(&format!("{name}.npy"), &map_to_array(map).to_bytes())?;
    w.write(&format!("{name}.pgm"), &uq_core::io::encode_pgm(&preview(map))?)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(w: &mut RunWriter, name: &str, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    w.write(name, text.as_bytes())
}
