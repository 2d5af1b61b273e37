//! Subcommand implementations.

use std::path::{Path, PathBuf};

use clap::Args;

use zoomgrid::attention::MarginalMode;
use zoomgrid::error::{Error, Result};
use zoomgrid::fit::{saliency_to_grid, Fitter};
use zoomgrid::geom::SamplingGrid;
use zoomgrid::image::ImageBuffer;
use zoomgrid::invert::invert_detections;
use zoomgrid::io::config::{load_config, RunConfig};
use zoomgrid::io::detections::{
    detection_to_entry, read_detection_file, write_detection_file, DetectionFile, SpaceTag,
};
use zoomgrid::io::gridfile::{read_grid, write_grid};
use zoomgrid::io::raster::{load_image, read_saliency_pgm, save_image, write_saliency_pgm};
use zoomgrid::io::write_atomic;
use zoomgrid::overlay::{render_detections_overlay, render_grid_overlay};
use zoomgrid::pipeline::{run_pipeline, FrameSource};
use zoomgrid::saliency::{generate_saliency, map_composition};
use zoomgrid::warp::warp_image;

/// Parse a `WIDTHxHEIGHT` flag into the crate's `(height, width)` order.
fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    Ok((h, w))
}

fn load_config_or_default(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

// --- saliency ---------------------------------------------------------------

#[derive(Args)]
pub struct SaliencyArgs {
    /// Detection JSON file.
    #[arg(long)]
    detections: PathBuf,
    /// Image id within the detections file (default: first listed image).
    #[arg(long)]
    image_id: Option<u64>,
    /// Original image size as WIDTHxHEIGHT (default: from the detections file).
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(usize, usize)>,
    /// Output 16-bit PGM path.
    #[arg(long)]
    out: PathBuf,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score threshold override.
    #[arg(long)]
    tau: Option<f64>,
    /// Small-object area threshold override (percent of image area).
    #[arg(long)]
    alpha: Option<f64>,
    /// Map resolution override as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    out_size: Option<(usize, usize)>,
}

pub fn saliency(args: SaliencyArgs) -> Result<()> {
    let mut cfg = load_config_or_default(&args.config)?;
    if let Some(tau) = args.tau {
        cfg.saliency.tau = tau;
    }
    if let Some(alpha) = args.alpha {
        cfg.saliency.alpha_pct = alpha;
    }
    if let Some(size) = args.out_size {
        cfg.saliency.out_size = size;
    }
    let file = read_detection_file(&args.detections)?;
    let image_id = args
        .image_id
        .or_else(|| file.images.first().map(|im| im.id))
        .ok_or_else(|| Error::Format("detections file lists no images".into()))?;
    let dims = match args.image_size {
        Some(d) => d,
        None => {
            let im = file
                .image(image_id)
                .ok_or_else(|| Error::Format(format!("image id {image_id} not found")))?;
            (im.height as usize, im.width as usize)
        }
    };
    let dets = file.detections_for(image_id)?;
    let map = generate_saliency(&dets, dims, &cfg.saliency)?;
    write_saliency_pgm(&args.out, &map)
}

// --- grid -------------------------------------------------------------------

#[derive(Args)]
pub struct GridArgs {
    /// Saliency map (16-bit PGM).
    #[arg(long)]
    saliency: PathBuf,
    /// Output grid file.
    #[arg(long)]
    out: PathBuf,
    /// Dense grid size as WIDTHxHEIGHT (default: the schedule's resampled size).
    #[arg(long, value_parser = parse_size)]
    out_size: Option<(usize, usize)>,
    /// Number of TPS control points (perfect square).
    #[arg(long)]
    control_points: Option<usize>,
    /// Write a JSON loss/bending-energy report here.
    #[arg(long)]
    emit_loss: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Background supervision weight override.
    #[arg(long)]
    gamma: Option<f64>,
    /// Ridge strength override.
    #[arg(long)]
    ridge: Option<f64>,
    /// Marginal density floor override.
    #[arg(long)]
    floor_eps: Option<f64>,
    /// Marginal reduction: max or sum.
    #[arg(long)]
    marginal_mode: Option<String>,
    /// Fit working resolution as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    work_size: Option<(usize, usize)>,
}

pub fn grid(args: GridArgs) -> Result<()> {
    let mut cfg = load_config_or_default(&args.config)?;
    if let Some(n) = args.control_points {
        cfg.fit.control_points = n;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(r) = args.ridge {
        cfg.fit.ridge_lambda = r;
    }
    if let Some(e) = args.floor_eps {
        cfg.sampler.floor_eps = e;
    }
    if let Some(w) = args.work_size {
        cfg.fit.work_size = w;
    }
    if let Some(mode) = &args.marginal_mode {
        cfg.sampler.marginal_mode = match mode.to_ascii_lowercase().as_str() {
            "max" => MarginalMode::Max,
            "sum" => MarginalMode::Sum,
            other => {
                return Err(Error::Config(format!(
                    "marginal mode must be max or sum, got {other:?}"
                )))
            }
        };
    }
    cfg.validate()?;
    let out_size = args.out_size.unwrap_or(cfg.schedule.resampled_size);

    let map = read_saliency_pgm(&args.saliency)?;
    let fitter = Fitter::new(cfg.fit.clone())?;
    let (grid, result) = saliency_to_grid(
        &map,
        &fitter,
        &cfg.sampler,
        &cfg.saliency,
        cfg.gamma,
        out_size,
    )?;
    write_grid(&args.out, &grid)?;

    if let Some(loss_path) = &args.emit_loss {
        let composition = map_composition(&map, &cfg.saliency);
        let report = serde_json::json!({
            "loss": result.loss,
            "loss_unsquared": result.loss_unsquared,
            "residual_norm": result.residual_norm,
            "bending_energy": result.model.bending_energy(),
            "control_points": cfg.fit.control_points,
            "composition": format!("{composition:?}"),
            "clamped": grid.is_clamped(),
            // the reference-sampler settings are metadata, not ground truth
            "marginal_mode": cfg.sampler.marginal_mode,
            "floor_eps": cfg.sampler.floor_eps,
            "work_size": [cfg.fit.work_size.0, cfg.fit.work_size.1],
        });
        write_atomic(loss_path, format!("{report:#}\n").as_bytes())?;
    }
    Ok(())
}

// --- warp ---------------------------------------------------------------------

#[derive(Args)]
pub struct WarpArgs {
    /// Input image (.png, .ppm, or 8-bit .pgm).
    #[arg(long)]
    image: PathBuf,
    /// Sampling grid file.
    #[arg(long)]
    grid: PathBuf,
    /// Output image path (format by extension).
    #[arg(long)]
    out: PathBuf,
}

pub fn warp(args: WarpArgs) -> Result<()> {
    let src = load_image(&args.image)?;
    let grid = read_grid(&args.grid)?;
    let out = warp_image(&src, &grid);
    save_image(&args.out, &out)
}

// --- invert ---------------------------------------------------------------------

#[derive(Args)]
pub struct InvertArgs {
    /// Detection JSON in resampled coordinates.
    #[arg(long)]
    detections: PathBuf,
    /// Grid file the detections were produced on.
    #[arg(long)]
    grid: PathBuf,
    /// Output detection JSON in original coordinates.
    #[arg(long)]
    out: PathBuf,
    /// Grid id for entries without a resampled space tag.
    #[arg(long, default_value_t = 0)]
    grid_id: u64,
    /// Original image size as WIDTHxHEIGHT (default: from the detections file).
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(usize, usize)>,
}

pub fn invert(args: InvertArgs) -> Result<()> {
    let file = read_detection_file(&args.detections)?;
    let grid = read_grid(&args.grid)?;
    let dims = match args.image_size {
        Some(d) => d,
        None => {
            let im = file
                .images
                .first()
                .ok_or_else(|| Error::Format("detections file lists no images".into()))?;
            (im.height as usize, im.width as usize)
        }
    };
    // untagged entries are treated as resampled on the given grid
    let mut dets = Vec::new();
    for e in &file.detections {
        let mut entry = e.clone();
        match entry.space {
            None | Some(SpaceTag::Original) => {
                entry.space = Some(SpaceTag::Resampled {
                    grid_id: args.grid_id,
                });
            }
            Some(SpaceTag::Resampled { .. }) => {}
        }
        dets.push(zoomgrid::io::detections::entry_to_detection(&entry)?);
    }
    let inverted = invert_detections(&dets, &grid, args.grid_id, dims)?;
    if inverted.dropped > 0 {
        eprintln!("warning: dropped {} degenerate boxes", inverted.dropped);
    }
    let out = DetectionFile {
        images: file.images.clone(),
        detections: inverted
            .detections
            .iter()
            .zip(file.detections.iter())
            .map(|(d, orig)| detection_to_entry(d, orig.image_id))
            .collect(),
    };
    write_detection_file(&args.out, &out)
}

// --- pipeline ---------------------------------------------------------------------

#[derive(Args)]
pub struct PipelineArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of frame images, processed in lexicographic order.
    #[arg(long)]
    frames: PathBuf,
    /// Output directory (frames.jsonl + summary.json).
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed override for playback noise.
    #[arg(long)]
    seed: Option<u64>,
}

struct DirFrameSource {
    paths: Vec<PathBuf>,
    dims: (usize, usize),
}

impl DirFrameSource {
    fn new(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("png") | Some("ppm") | Some("pgm")
                )
            })
            .collect();
        paths.sort();
        let first = paths
            .first()
            .ok_or_else(|| Error::Format(format!("no frame images found in {}", dir.display())))?;
        let dims = load_image(first)?.dims();
        Ok(Self { paths, dims })
    }
}

impl FrameSource for DirFrameSource {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn frame(&self, index: usize) -> Result<ImageBuffer> {
        let img = load_image(&self.paths[index])?;
        if img.dims() != self.dims {
            return Err(Error::Dimension(format!(
                "frame {} has size {:?}, expected {:?}",
                self.paths[index].display(),
                img.dims(),
                self.dims
            )));
        }
        Ok(img)
    }

    fn path(&self, index: usize) -> Option<PathBuf> {
        self.paths.get(index).cloned()
    }
}

pub fn pipeline(args: PipelineArgs) -> Result<()> {
    let mut cfg = load_config_or_default(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let source = DirFrameSource::new(&args.frames)?;
    let key = cfg.key_detector()?;
    let light = cfg.light_detector()?;
    let output = run_pipeline(&source, &key, &light, &cfg.pipeline_config())?;

    std::fs::create_dir_all(&args.out_dir)?;
    let mut lines = String::new();
    for record in &output.records {
        lines.push_str(&serde_json::to_string(record)?);
        lines.push('\n');
    }
    write_atomic(&args.out_dir.join("frames.jsonl"), lines.as_bytes())?;
    let summary = serde_json::to_string_pretty(&output.summary)?;
    write_atomic(
        &args.out_dir.join("summary.json"),
        format!("{summary}\n").as_bytes(),
    )?;
    println!(
        "{} frames: {} key, {} resampled, {} propagated, {} failed; mean {:.5} GFLOPs/frame",
        output.summary.frames,
        output.summary.key_frames,
        output.summary.resampled_frames,
        output.summary.propagated_frames,
        output.summary.failed_frames,
        output.summary.mean_gflops
    );
    Ok(())
}

// --- overlay ---------------------------------------------------------------------

#[derive(Args)]
pub struct OverlayArgs {
    /// Base image.
    #[arg(long)]
    image: PathBuf,
    /// Grid file to draw as a deformation field.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Detection JSON to draw as boxes.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
    /// Draw every Nth grid line.
    #[arg(long, default_value_t = 8)]
    stride: usize,
}

pub fn overlay(args: OverlayArgs) -> Result<()> {
    if args.grid.is_none() && args.detections.is_none() {
        return Err(Error::Config(
            "overlay needs --grid and/or --detections".into(),
        ));
    }
    let mut img = load_image(&args.image)?.to_rgb();
    if let Some(grid_path) = &args.grid {
        let grid: SamplingGrid = read_grid(grid_path)?;
        img = render_grid_overlay(&img, &grid, args.stride);
    }
    if let Some(det_path) = &args.detections {
        let file = read_detection_file(det_path)?;
        let dets = file
            .detections
            .iter()
            .map(zoomgrid::io::detections::entry_to_detection)
            .collect::<Result<Vec<_>>>()?;
        img = render_detections_overlay(&img, &dets);
    }
    save_image(&args.out, &img)
}
