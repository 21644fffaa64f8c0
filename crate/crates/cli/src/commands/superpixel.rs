//! `uq superpixel`: patch labeling of an image.

use std::path::PathBuf;

use serde::Serialize;
use uq_core::calib::{grid_patches, slic_superpixels};
use uq_core::io::ReadOptions;

use crate::commands::{load_map, write_json, write_map_with_preview, RunContext, PREVIEW_NOTE};
use crate::config::{Patching, Task};
use crate::error::CliResult;
use crate::manifest::Manifest;

#[derive(Debug, Clone)]
pub struct SuperpixelArgs {
    pub image: PathBuf,
    pub scale_u8: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    patching: String,
    height: usize,
    width: usize,
    patch_count: usize,
    areas: Vec<usize>,
    connected: bool,
}

pub fn run_superpixel(args: &SuperpixelArgs, ctx: &RunContext) -> CliResult<Manifest> {
    let mut w = ctx.writer(Task::Superpixel)?;
    w.set("scale_u8", args.scale_u8);
    let image = load_map(
        &mut w,
        &args.image,
        ReadOptions {
            scale_u8: args.scale_u8,
            ..Default::default()
        },
    )?;
    let cfg = &ctx.cfg;
    let labeling = match cfg.patching {
        Patching::Grid(size) => grid_patches(image.height(), image.width(), size)?,
        Patching::Slic(n) => slic_superpixels(&image, n, cfg.compactness, cfg.slic_iterations, ctx.seed)?,
    };
    write_map_with_preview(&mut w, "labels", &labeling.to_map())?;
    write_json(
        &mut w,
        "summary.json",
        &Summary {
            patching: cfg.patching.to_string(),
            height: labeling.height(),
            width: labeling.width(),
            patch_count: labeling.patch_count(),
            areas: labeling.areas(),
            connected: labeling.is_connected(),
        },
    )?;
    w.note(PREVIEW_NOTE);
    w.finish()
}
