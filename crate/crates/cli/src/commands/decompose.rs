//! `uq decompose`: sample stack in, `U_p`/`U_a`/`U_e` maps out.

use std::path::PathBuf;

use serde::Serialize;
use uq_core::io::{ArrayContent, ReadOptions};
use uq_core::{
    decompose_blvm_entropy, decompose_blvm_variance, decompose_entropy, decompose_variance,
    MapKind, UncertaintyMaps,
};

use crate::commands::{load_content, write_json, write_map_with_preview, RunContext, PREVIEW_NOTE};
use crate::config::{DecomposeMode, Task};
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, RunWriter};

#[derive(Debug, Clone)]
pub struct DecomposeArgs {
    pub input: PathBuf,
    /// Optional per-sample variance heads, laid out like the input.
    pub heads: Option<PathBuf>,
    /// Overrides the kind implied by the mode.
    pub kind: Option<MapKind>,
    pub scale_u8: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    mode: String,
    measure: uq_core::Measure,
    aleatoric_missing: bool,
    mean_predictive: f64,
    mean_aleatoric: f64,
    mean_epistemic: f64,
}

pub fn run_decompose(args: &DecomposeArgs, ctx: &RunContext) -> CliResult<Manifest> {
    let mode = ctx.cfg.mode;
    let mut w = ctx.writer(Task::Decompose)?;
    let kind = args.kind.unwrap_or(if mode.is_entropy() {
        MapKind::Probability
    } else {
        MapKind::Real
    });
    w.set("kind", kind);
    w.set("scale_u8", args.scale_u8);
    let maps = decompose_inputs(&mut w, args, mode, kind)?;
    for (name, map) in [
        ("U_p", &maps.predictive),
        ("U_a", &maps.aleatoric),
        ("U_e", &maps.epistemic),
    ] {
        write_map_with_preview(&mut w, name, map)?;
    }
    write_json(
        &mut w,
        "summary.json",
        &Summary {
            mode: mode.to_string(),
            measure: maps.measure,
            aleatoric_missing: maps.aleatoric_missing,
            mean_predictive: maps.predictive.mean(),
            mean_aleatoric: maps.aleatoric.mean(),
            mean_epistemic: maps.epistemic.mean(),
        },
    )?;
    if maps.aleatoric_missing {
        w.note("no variance heads were supplied: U_a is zero and U_p equals U_e");
    }
    w.note(PREVIEW_NOTE);
    w.finish()
}

fn decompose_inputs(
    w: &mut RunWriter,
    args: &DecomposeArgs,
    mode: DecomposeMode,
    kind: MapKind,
) -> CliResult<UncertaintyMaps> {
    let opts = ReadOptions {
        kind,
        scale_u8: args.scale_u8,
    };
    let content = load_content(w, &args.input, opts)?;
    let heads = match &args.heads {
        Some(p) => Some(load_content(
            w,
            p,
            ReadOptions {
                kind: MapKind::Real,
                scale_u8: false,
            },
        )?),
        None => None,
    };
    let wrong = |expected: &str| {
        CliError::usage(format!(
            "mode `{mode}` expects {expected} in {}",
            args.input.display()
        ))
    };
    let maps = match (mode, content) {
        (DecomposeMode::Entropy | DecomposeMode::Variance, ArrayContent::Stack(stack)) => {
            let stack = match heads {
                Some(ArrayContent::Stack(h)) => stack.with_variance_heads(h.samples().to_vec())?,
                Some(_) => return Err(CliError::usage("variance heads must be a (T, H, W, C) array")),
                None => stack,
            };
            if mode == DecomposeMode::Entropy {
                decompose_entropy(&stack)?
            } else {
                decompose_variance(&stack)?
            }
        }
        (DecomposeMode::BlvmEntropy | DecomposeMode::BlvmVariance, ArrayContent::Nested(nested)) => {
            let nested = match heads {
                Some(ArrayContent::Nested(h)) => nested.with_variance_heads(h.groups().to_vec())?,
                Some(_) => {
                    return Err(CliError::usage("variance heads must be a (M, S, H, W, C) array"))
                }
                None => nested,
            };
            if mode == DecomposeMode::BlvmEntropy {
                decompose_blvm_entropy(&nested)?
            } else {
                decompose_blvm_variance(&nested)?
            }
        }
        (m, _) if m.is_nested() => return Err(wrong("a rank-5 (M, S, H, W, C) array")),
        _ => return Err(wrong("a rank-4 (T, H, W, C) array")),
    };
    Ok(maps)
}
