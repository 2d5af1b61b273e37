//! Keyframe-scheduled video pipeline.
//!
//! Frame 0 and every S-th frame go to the heavy detector at full
//! resolution. Other frames build a saliency map from the previous frame's
//! detections, fit a sampling grid, warp, run the light detector on the
//! warped frame, and invert the boxes back to original coordinates. With
//! prediction propagation on, even-indexed non-key frames copy the previous
//! frame's detections at zero cost. Per-frame compute is charged from a
//! static cost table and summarized as mean GFLOPs per frame.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionSamplerConfig;
use crate::detection::{BBox, CoordSpace, Detection};
use crate::error::{Error, Result};
use crate::fit::{saliency_to_grid, FitConfig, Fitter};
use crate::geom::SamplingGrid;
use crate::image::ImageBuffer;
use crate::invert::{forward_point, invert_detections};
use crate::io::detections::{read_detection_file, DetectionFile};
use crate::saliency::{generate_saliency, SaliencyConfig};
use crate::warp::warp_image;

/// How a detector is realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Replay detections from an annotation file indexed by frame.
    Playback { path: PathBuf },
    /// Run an external command; `{input}` in the template is replaced by the
    /// frame image path, stdout must be detection JSON.
    Command { template: String },
    /// Emits no detections.
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub name: String,
    pub kind: DetectorKind,
    pub cost_gflops: f64,
}

impl DetectorSpec {
    pub fn null(name: &str, cost_gflops: f64) -> Self {
        Self {
            name: name.into(),
            kind: DetectorKind::Null,
            cost_gflops,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cost_gflops.is_finite() || self.cost_gflops < 0.0 {
            return Err(Error::Config(format!(
                "detector {} cost must be finite and non-negative",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Key frames are the indices divisible by this interval.
    pub keyframe_interval: usize,
    /// Copy detections onto even-indexed non-key frames at zero cost.
    pub propagate_odd_frames: bool,
    /// Size `(height, width)` of the warped frames fed to the light detector.
    pub resampled_size: (usize, usize),
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            keyframe_interval: 16,
            propagate_odd_frames: true,
            resampled_size: (180, 320),
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keyframe_interval < 1 {
            return Err(Error::Config("keyframe_interval must be >= 1".into()));
        }
        if self.resampled_size.0 < 2 || self.resampled_size.1 < 2 {
            return Err(Error::Config(format!(
                "resampled_size must be at least 2x2, got {:?}",
                self.resampled_size
            )));
        }
        Ok(())
    }
}

/// Static per-detector FLOPs table plus the resampler cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub sampler_gflops: f64,
    pub entries: BTreeMap<String, f64>,
}

impl Default for CostModel {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("efficientdet-d0".to_string(), 2.5);
        entries.insert("efficientnet-b0".to_string(), 1.36);
        entries.insert("efficientnet-b1".to_string(), 3.20);
        entries.insert("efficientnet-b2".to_string(), 5.9);
        entries.insert("efficientnet-b3".to_string(), 13.4);
        Self {
            sampler_gflops: 0.06,
            entries,
        }
    }
}

/// Seed-deterministic playback noise emulating an imperfect detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaybackOptions {
    /// Box-coordinate jitter as a percentage of box size.
    pub jitter_pct: f64,
    /// Probability of dropping each box.
    pub drop_rate: f64,
}

impl Default for PlaybackOptions {
    fn default() -> Self {
        Self {
            jitter_pct: 0.0,
            drop_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameRole {
    Key,
    Resampled,
    Propagated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub role: FrameRole,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Detections in original-image coordinates.
    pub detections: Vec<Detection>,
    pub cost_gflops: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub frames: usize,
    pub key_frames: usize,
    pub resampled_frames: usize,
    pub propagated_frames: usize,
    pub failed_frames: usize,
    pub dropped_boxes: usize,
    pub detector_gflops: f64,
    pub sampler_gflops: f64,
    pub total_gflops: f64,
    pub mean_gflops: f64,
}

/// Ordered source of equally-sized frames.
pub trait FrameSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Original dimensions `(height, width)` shared by all frames.
    fn dims(&self) -> (usize, usize);
    fn frame(&self, index: usize) -> Result<ImageBuffer>;
    /// Path of the frame image if it exists on disk (external detectors
    /// can then skip a re-encode).
    fn path(&self, _index: usize) -> Option<PathBuf> {
        None
    }
}

/// Frames held in memory (synthetic sequences, tests).
pub struct MemoryFrameSource {
    frames: Vec<ImageBuffer>,
}

impl MemoryFrameSource {
    pub fn new(frames: Vec<ImageBuffer>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("empty frame sequence".into()))?;
        let dims = first.dims();
        if frames.iter().any(|f| f.dims() != dims) {
            return Err(Error::InvalidInput("frames must share dimensions".into()));
        }
        Ok(Self { frames })
    }
}

impl FrameSource for MemoryFrameSource {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    fn frame(&self, index: usize) -> Result<ImageBuffer> {
        self.frames
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("frame {index} out of range")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub saliency: SaliencyConfig,
    pub sampler: AttentionSamplerConfig,
    pub fit: FitConfig,
    /// Background supervision weight for the mask triples.
    pub gamma: f64,
    pub schedule: ScheduleConfig,
    pub playback: PlaybackOptions,
    pub costs: CostModel,
    pub seed: u64,
    /// External detector timeout in milliseconds.
    pub detector_timeout_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            saliency: SaliencyConfig::default(),
            sampler: AttentionSamplerConfig::default(),
            fit: FitConfig::default(),
            gamma: 0.5,
            schedule: ScheduleConfig::default(),
            playback: PlaybackOptions::default(),
            costs: CostModel::default(),
            seed: 0,
            detector_timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<FrameRecord>,
    pub summary: PipelineSummary,
}

/// Compensated (Neumaier) summation; keeps the cost accounting exact.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

enum DetectorImpl {
    Playback(PlaybackDetector),
    Command { template: String },
    Null,
}

fn build_detector(spec: &DetectorSpec) -> Result<DetectorImpl> {
    spec.validate()?;
    Ok(match &spec.kind {
        DetectorKind::Playback { path } => {
            DetectorImpl::Playback(PlaybackDetector::from_file(path)?)
        }
        DetectorKind::Command { template } => DetectorImpl::Command {
            template: template.clone(),
        },
        DetectorKind::Null => DetectorImpl::Null,
    })
}

/// Run the full schedule over a frame source.
pub fn run_pipeline(
    source: &dyn FrameSource,
    d_key: &DetectorSpec,
    d_light: &DetectorSpec,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    if source.is_empty() {
        return Err(Error::InvalidInput("empty frame source".into()));
    }
    cfg.saliency.validate()?;
    cfg.sampler.validate()?;
    cfg.schedule.validate()?;
    let dims = source.dims();
    if dims.0 < 2 || dims.1 < 2 {
        return Err(Error::Dimension(format!(
            "frames must be at least 2x2, got {dims:?}"
        )));
    }
    let fitter = Fitter::new(cfg.fit.clone())?;
    let key_impl = build_detector(d_key)?;
    let light_impl = build_detector(d_light)?;
    let s = cfg.schedule.keyframe_interval;

    let mut records: Vec<FrameRecord> = Vec::with_capacity(source.len());
    let mut prev_dets: Vec<Detection> = Vec::new();
    let mut detector_cost = CompensatedSum::default();
    let mut sampler_cost = CompensatedSum::default();
    let mut key_frames = 0;
    let mut resampled_frames = 0;
    let mut propagated_frames = 0;
    let mut failed_frames = 0;
    let mut dropped_boxes = 0;

    for index in 0..source.len() {
        let record = if index % s == 0 {
            key_frames += 1;
            detector_cost.add(d_key.cost_gflops);
            let frame_cost = d_key.cost_gflops;
            match run_key_frame(source, index, &key_impl, cfg) {
                Ok(dets) => FrameRecord {
                    index,
                    role: FrameRole::Key,
                    failed: false,
                    error: None,
                    detections: dets,
                    cost_gflops: frame_cost,
                    grid_id: None,
                },
                Err(e) => {
                    failed_frames += 1;
                    FrameRecord {
                        index,
                        role: FrameRole::Key,
                        failed: true,
                        error: Some(e.to_string()),
                        detections: Vec::new(),
                        cost_gflops: frame_cost,
                        grid_id: None,
                    }
                }
            }
        } else if cfg.schedule.propagate_odd_frames && index % 2 == 0 {
            propagated_frames += 1;
            FrameRecord {
                index,
                role: FrameRole::Propagated,
                failed: false,
                error: None,
                detections: prev_dets.clone(),
                cost_gflops: 0.0,
                grid_id: None,
            }
        } else {
            resampled_frames += 1;
            detector_cost.add(d_light.cost_gflops);
            sampler_cost.add(cfg.costs.sampler_gflops);
            let frame_cost = d_light.cost_gflops + cfg.costs.sampler_gflops;
            let grid_id = index as u64;
            match run_resampled_frame(
                source, index, grid_id, &light_impl, &prev_dets, &fitter, cfg,
            ) {
                Ok((dets, dropped)) => {
                    dropped_boxes += dropped;
                    FrameRecord {
                        index,
                        role: FrameRole::Resampled,
                        failed: false,
                        error: None,
                        detections: dets,
                        cost_gflops: frame_cost,
                        grid_id: Some(grid_id),
                    }
                }
                Err(e) => {
                    failed_frames += 1;
                    FrameRecord {
                        index,
                        role: FrameRole::Resampled,
                        failed: true,
                        error: Some(e.to_string()),
                        detections: Vec::new(),
                        cost_gflops: frame_cost,
                        grid_id: Some(grid_id),
                    }
                }
            }
        };
        prev_dets = record.detections.clone();
        records.push(record);
    }

    let detector_gflops = detector_cost.value();
    let sampler_gflops = sampler_cost.value();
    let total_gflops = detector_gflops + sampler_gflops;
    let summary = PipelineSummary {
        frames: source.len(),
        key_frames,
        resampled_frames,
        propagated_frames,
        failed_frames,
        dropped_boxes,
        detector_gflops,
        sampler_gflops,
        total_gflops,
        mean_gflops: total_gflops / source.len() as f64,
    };
    Ok(PipelineOutput { records, summary })
}

fn run_key_frame(
    source: &dyn FrameSource,
    index: usize,
    detector: &DetectorImpl,
    cfg: &PipelineConfig,
) -> Result<Vec<Detection>> {
    match detector {
        DetectorImpl::Null => Ok(Vec::new()),
        DetectorImpl::Playback(p) => Ok(p.detect(index, None, source.dims(), cfg)),
        DetectorImpl::Command { template } => {
            let frame = source.frame(index)?;
            external_detector_on_image(template, &frame, source.path(index), cfg)
        }
    }
}

fn run_resampled_frame(
    source: &dyn FrameSource,
    index: usize,
    grid_id: u64,
    detector: &DetectorImpl,
    prev_dets: &[Detection],
    fitter: &Fitter,
    cfg: &PipelineConfig,
) -> Result<(Vec<Detection>, usize)> {
    let dims = source.dims();
    // a failed or empty previous frame yields an empty map, and the grid
    // falls back to the identity
    let map = generate_saliency(prev_dets, dims, &cfg.saliency)?;
    let (grid, _fit) = saliency_to_grid(
        &map,
        fitter,
        &cfg.sampler,
        &cfg.saliency,
        cfg.gamma,
        cfg.schedule.resampled_size,
    )?;

    let raw = match detector {
        DetectorImpl::Null => Vec::new(),
        DetectorImpl::Playback(p) => p.detect(index, Some((&grid, grid_id)), dims, cfg),
        DetectorImpl::Command { template } => {
            let frame = source.frame(index)?;
            let warped = warp_image(&frame, &grid);
            external_detector_on_image(template, &warped, None, cfg)?
                .into_iter()
                .map(|mut d| {
                    d.space = CoordSpace::Resampled { grid_id };
                    d
                })
                .collect()
        }
    };

    let inverted = invert_detections(&raw, &grid, grid_id, dims)?;
    Ok((inverted.detections, inverted.dropped))
}

// --- playback detector ------------------------------------------------------

/// Replays stored per-frame annotations, optionally jittered, and — on
/// resampled frames — forward-mapped through the grid so the pipeline's
/// inverse transformation is exercised.
pub struct PlaybackDetector {
    by_frame: BTreeMap<u64, Vec<Detection>>,
}

impl PlaybackDetector {
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = read_detection_file(path)?;
        Self::new(&file)
    }

    pub fn new(file: &DetectionFile) -> Result<Self> {
        file.validate()?;
        Ok(Self {
            by_frame: file.by_image()?,
        })
    }

    pub fn from_map(by_frame: BTreeMap<u64, Vec<Detection>>) -> Self {
        Self { by_frame }
    }

    /// Detections for a frame. With a grid, ground-truth boxes are
    /// forward-mapped into resampled coordinates first. Noise (drop +
    /// jitter) is seed-deterministic per frame. Frames without annotations
    /// return no detections.
    pub fn detect(
        &self,
        frame_index: usize,
        grid: Option<(&SamplingGrid, u64)>,
        original_dims: (usize, usize),
        cfg: &PipelineConfig,
    ) -> Vec<Detection> {
        let stored = match self.by_frame.get(&(frame_index as u64)) {
            Some(dets) => dets,
            None => return Vec::new(),
        };
        let mut rng = frame_rng(cfg.seed, frame_index);
        let mut out = Vec::with_capacity(stored.len());
        for det in stored {
            if cfg.playback.drop_rate > 0.0 && rng.random::<f64>() < cfg.playback.drop_rate {
                continue;
            }
            let mapped = match grid {
                None => det.clone(),
                Some((g, gid)) => match forward_map_detection(det, g, gid, original_dims) {
                    Some(d) => d,
                    None => continue,
                },
            };
            let jittered = if cfg.playback.jitter_pct > 0.0 {
                jitter_box(&mapped, cfg.playback.jitter_pct, &mut rng)
            } else {
                mapped
            };
            out.push(jittered);
        }
        out
    }
}

fn frame_rng(seed: u64, frame_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (frame_index as u64).wrapping_mul(0x9E3779B97F4A7C15))
}

/// Map an original-space detection into resampled coordinates through the
/// grid inverse; `None` if any corner has no preimage on the grid.
pub fn forward_map_detection(
    det: &Detection,
    grid: &SamplingGrid,
    grid_id: u64,
    original_dims: (usize, usize),
) -> Option<Detection> {
    let mut corners = [(0.0, 0.0); 4];
    for (slot, corner) in corners.iter_mut().zip(det.bbox.corners()) {
        *slot = forward_point(corner, grid, original_dims)?;
    }
    let hull = BBox::hull(&corners).ok()?;
    let bbox = hull.clamp_to(grid.dims())?;
    Some(Detection {
        bbox,
        score: det.score,
        category: det.category,
        space: CoordSpace::Resampled { grid_id },
    })
}

fn jitter_box(det: &Detection, jitter_pct: f64, rng: &mut ChaCha8Rng) -> Detection {
    let w = det.bbox.width();
    let h = det.bbox.height();
    let amp_x = w * jitter_pct / 100.0;
    let amp_y = h * jitter_pct / 100.0;
    let mut delta = |amp: f64| (rng.random::<f64>() * 2.0 - 1.0) * amp;
    let x_min = det.bbox.x_min + delta(amp_x);
    let y_min = det.bbox.y_min + delta(amp_y);
    let x_max = det.bbox.x_max + delta(amp_x);
    let y_max = det.bbox.y_max + delta(amp_y);
    match BBox::new(x_min, y_min, x_max.max(x_min + 1e-6), y_max.max(y_min + 1e-6)) {
        Ok(bbox) => Detection { bbox, ..det.clone() },
        Err(_) => det.clone(),
    }
}

// --- external detector -------------------------------------------------------

fn external_detector_on_image(
    template: &str,
    image: &ImageBuffer,
    existing_path: Option<PathBuf>,
    cfg: &PipelineConfig,
) -> Result<Vec<Detection>> {
    match existing_path {
        Some(p) => external_detector(template, &p, cfg.detector_timeout_ms),
        None => {
            let tmp = tempfile::Builder::new()
                .prefix("zoomgrid-frame-")
                .suffix(".png")
                .tempfile()?;
            let bytes = crate::io::raster::encode_png(image)?;
            std::fs::write(tmp.path(), &bytes)?;
            external_detector(template, tmp.path(), cfg.detector_timeout_ms)
        }
    }
}

/// Invoke an external detector command on an image file and parse detection
/// JSON from its stdout. `{input}` in the template is replaced by the image
/// path. Non-zero exit, malformed output, or a timeout produce
/// [`Error::Detector`].
pub fn external_detector(
    template: &str,
    image_path: &Path,
    timeout_ms: u64,
) -> Result<Vec<Detection>> {
    use std::process::{Command, Stdio};

    let cmdline = template.replace("{input}", &image_path.to_string_lossy());
    let parts = shell_split(&cmdline);
    if parts.is_empty() {
        return Err(Error::Detector("empty detector command".into()));
    }
    let mut child = Command::new(&parts[0])
        .args(&parts[1..])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Detector(format!("spawn {:?}: {e}", parts[0])))?;

    let deadline = std::time::Instant::now() + std::time::Duration::from_millis(timeout_ms);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if std::time::Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Detector(format!(
                        "detector timed out after {timeout_ms} ms"
                    )));
                }
                std::thread::sleep(std::time::Duration::from_millis(2));
            }
            Err(e) => return Err(Error::Detector(format!("wait: {e}"))),
        }
    }
    let output = child
        .wait_with_output()
        .map_err(|e| Error::Detector(format!("collect output: {e}")))?;
    if !output.status.success() {
        return Err(Error::Detector(format!(
            "detector exited with status {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let file: DetectionFile = serde_json::from_slice(&output.stdout)
        .map_err(|e| Error::Detector(format!("bad detector JSON: {e}")))?;
    file.validate()
        .map_err(|e| Error::Detector(format!("bad detector output: {e}")))?;
    file.detections
        .iter()
        .map(crate::io::detections::entry_to_detection)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Detector(format!("bad detector box: {e}")))
}

fn shell_split(cmdline: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    for ch in cmdline.chars() {
        match ch {
            '"' => in_quotes = !in_quotes,
            c if c.is_whitespace() && !in_quotes => {
                if !cur.is_empty() {
                    parts.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    parts
}

/// Convenience wrapper: replay one frame's annotations without a grid.
pub fn playback_detector(
    annotations: &PlaybackDetector,
    frame_index: usize,
    original_dims: (usize, usize),
    cfg: &PipelineConfig,
) -> Vec<Detection> {
    annotations.detect(frame_index, None, original_dims, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_frames(n: usize, h: usize, w: usize) -> MemoryFrameSource {
        let frames = (0..n)
            .map(|k| ImageBuffer::filled(h, w, 1, (k % 7) as f64 / 10.0).unwrap())
            .collect();
        MemoryFrameSource::new(frames).unwrap()
    }

    fn gt_file(n: usize) -> DetectionFile {
        use crate::io::detections::{DetectionEntry, ImageEntry};
        let images = (0..n)
            .map(|i| ImageEntry {
                id: i as u64,
                file: format!("f{i:04}.png"),
                width: 640,
                height: 360,
            })
            .collect();
        let detections = (0..n)
            .map(|i| DetectionEntry {
                image_id: i as u64,
                bbox: [200.0 + i as f64, 150.0, 40.0, 30.0],
                score: 0.9,
                category_id: 1,
                space: None,
            })
            .collect();
        DetectionFile { images, detections }
    }

    #[test]
    fn schedule_key_frame_indices() {
        let source = flat_frames(33, 36, 64);
        let cfg = PipelineConfig {
            schedule: ScheduleConfig {
                keyframe_interval: 16,
                propagate_odd_frames: false,
                resampled_size: (18, 32),
            },
            ..Default::default()
        };
        let key = DetectorSpec::null("key", 3.2);
        let light = DetectorSpec::null("light", 1.36);
        let out = run_pipeline(&source, &key, &light, &cfg).unwrap();
        let keys: Vec<usize> = out
            .records
            .iter()
            .filter(|r| r.role == FrameRole::Key)
            .map(|r| r.index)
            .collect();
        assert_eq!(keys, vec![0, 16, 32]);
        assert_eq!(out.summary.key_frames, 3); // ceil(33/16)
        assert!(keys.iter().all(|i| i % 16 == 0));
    }

    #[test]
    fn dense_mode_cost_matches_closed_form() {
        let source = flat_frames(16, 36, 64);
        let cfg = PipelineConfig {
            schedule: ScheduleConfig {
                keyframe_interval: 16,
                propagate_odd_frames: false,
                resampled_size: (18, 32),
            },
            ..Default::default()
        };
        let key = DetectorSpec::null("efficientnet-b1", 3.2);
        let light = DetectorSpec::null("efficientnet-b0", 1.36);
        let out = run_pipeline(&source, &key, &light, &cfg).unwrap();
        let expected = (3.2 + 15.0 * (1.36 + 0.06)) / 16.0;
        assert_eq!(out.summary.mean_gflops, expected);
        assert_eq!(out.summary.mean_gflops, 1.53125);
    }

    #[test]
    fn s_equals_one_is_all_key_frames() {
        let source = flat_frames(7, 36, 64);
        let cfg = PipelineConfig {
            schedule: ScheduleConfig {
                keyframe_interval: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let key = DetectorSpec::null("key", 2.0);
        let light = DetectorSpec::null("light", 1.0);
        let out = run_pipeline(&source, &key, &light, &cfg).unwrap();
        assert!(out.records.iter().all(|r| r.role == FrameRole::Key));
        assert_eq!(out.summary.mean_gflops, 2.0);
    }

    #[test]
    fn propagation_copies_previous_detections_at_zero_cost() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        crate::io::detections::write_detection_file(&path, &gt_file(8)).unwrap();
        let source = flat_frames(8, 360, 640);
        let cfg = PipelineConfig::default();
        let key = DetectorSpec {
            name: "key".into(),
            kind: DetectorKind::Playback { path: path.clone() },
            cost_gflops: 3.2,
        };
        let light = DetectorSpec::null("light", 1.36);
        let out = run_pipeline(&source, &key, &light, &cfg).unwrap();
        // frame 2 copies frame 1's detections (light = Null -> empty)
        assert_eq!(out.records[2].role, FrameRole::Propagated);
        assert_eq!(out.records[2].cost_gflops, 0.0);
        assert_eq!(out.records[2].detections, out.records[1].detections);
        // frame 0 is a key frame with playback boxes
        assert_eq!(out.records[0].detections.len(), 1);
    }

    #[test]
    fn playback_is_deterministic_and_noise_behaves() {
        let file = gt_file(4);
        let playback = PlaybackDetector::new(&file).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.playback.jitter_pct = 2.0;
        cfg.seed = 42;
        let a = playback.detect(1, None, (360, 640), &cfg);
        let b = playback.detect(1, None, (360, 640), &cfg);
        assert_eq!(a, b);
        assert_ne!(a[0].bbox, file.detections_for(1).unwrap()[0].bbox);

        cfg.playback.jitter_pct = 0.0;
        let exact = playback.detect(1, None, (360, 640), &cfg);
        assert_eq!(exact, file.detections_for(1).unwrap());

        cfg.playback.drop_rate = 1.0;
        assert!(playback.detect(1, None, (360, 640), &cfg).is_empty());

        // missing frame -> empty
        cfg.playback.drop_rate = 0.0;
        assert!(playback.detect(99, None, (360, 640), &cfg).is_empty());
    }

    #[test]
    fn temporal_causality_and_determinism_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        crate::io::detections::write_detection_file(&path, &gt_file(12)).unwrap();
        let source = flat_frames(12, 360, 640);
        let mut cfg = PipelineConfig {
            schedule: ScheduleConfig {
                keyframe_interval: 8,
                propagate_odd_frames: true,
                resampled_size: (90, 160),
            },
            ..Default::default()
        };
        cfg.playback.jitter_pct = 1.0;
        cfg.seed = 7;
        let key = DetectorSpec {
            name: "key".into(),
            kind: DetectorKind::Playback { path: path.clone() },
            cost_gflops: 3.2,
        };
        let light = DetectorSpec {
            name: "light".into(),
            kind: DetectorKind::Playback { path },
            cost_gflops: 1.36,
        };
        let a = run_pipeline(&source, &key, &light, &cfg).unwrap();
        let b = run_pipeline(&source, &key, &light, &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary, b.summary);
        // resampled frames carry grids; the keyframe does not
        assert!(a.records[0].grid_id.is_none());
        let resampled: Vec<&FrameRecord> = a
            .records
            .iter()
            .filter(|r| r.role == FrameRole::Resampled)
            .collect();
        assert!(!resampled.is_empty());
        for r in &resampled {
            assert_eq!(r.grid_id, Some(r.index as u64));
            assert!(!r.failed);
            // boxes returned in original space near the ground truth
            if !r.detections.is_empty() {
                let gt = &gt_file(12).detections_for(r.index as u64).unwrap()[0];
                let d = &r.detections[0];
                assert!((d.bbox.x_min - gt.bbox.x_min).abs() < 15.0);
                assert_eq!(d.space, CoordSpace::Original);
            }
        }
    }

    #[test]
    fn null_light_detector_and_odd_keyframe_propagation() {
        // with S=3 the key frame at index 3 is followed by a propagated
        // frame, which must copy the key-frame boxes even though the light
        // detector emits nothing
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        crate::io::detections::write_detection_file(&path, &gt_file(8)).unwrap();
        let source = flat_frames(8, 360, 640);
        let cfg = PipelineConfig {
            schedule: ScheduleConfig {
                keyframe_interval: 3,
                propagate_odd_frames: true,
                resampled_size: (90, 160),
            },
            ..Default::default()
        };
        let key = DetectorSpec {
            name: "key".into(),
            kind: DetectorKind::Playback { path },
            cost_gflops: 3.2,
        };
        let light = DetectorSpec::null("light", 1.36);
        let out = run_pipeline(&source, &key, &light, &cfg).unwrap();
        assert_eq!(out.records[3].role, FrameRole::Key);
        assert_eq!(out.records[4].role, FrameRole::Propagated);
        assert!(!out.records[3].detections.is_empty());
        assert_eq!(out.records[4].detections, out.records[3].detections);
        // null light detector leaves resampled frames empty
        for r in &out.records {
            if r.role == FrameRole::Resampled {
                assert!(r.detections.is_empty());
            }
        }
    }

    #[test]
    fn detector_failure_marks_frame_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        crate::io::detections::write_detection_file(&path, &gt_file(6)).unwrap();
        let source = flat_frames(6, 360, 640);
        let cfg = PipelineConfig {
            schedule: ScheduleConfig {
                keyframe_interval: 4,
                propagate_odd_frames: false,
                resampled_size: (90, 160),
            },
            ..Default::default()
        };
        let key = DetectorSpec {
            name: "key".into(),
            kind: DetectorKind::Playback { path },
            cost_gflops: 3.2,
        };
        let light = DetectorSpec {
            name: "broken".into(),
            kind: DetectorKind::Command {
                template: "false".into(),
            },
            cost_gflops: 1.36,
        };
        let out = run_pipeline(&source, &key, &light, &cfg).unwrap();
        assert_eq!(out.summary.frames, 6);
        // non-key frames fail but the pipeline keeps going
        let failed: Vec<usize> = out
            .records
            .iter()
            .filter(|r| r.failed)
            .map(|r| r.index)
            .collect();
        assert_eq!(failed, vec![1, 2, 3, 5]);
        assert_eq!(out.summary.failed_frames, 4);
        for r in &out.records {
            if r.failed {
                assert!(r.error.is_some());
                assert!(r.detections.is_empty());
            }
        }
        // the key frame after the failures still detects
        assert!(!out.records[4].detections.is_empty());
    }

    #[test]
    fn external_detector_parses_and_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("frame.png");
        std::fs::write(
            &img,
            crate::io::raster::encode_png(&ImageBuffer::filled(8, 8, 1, 0.5).unwrap()).unwrap(),
        )
        .unwrap();

        let json = r#"{"images":[{"id":0,"file":"x","width":8,"height":8}],"detections":[{"image_id":0,"bbox":[1.0,1.0,2.0,2.0],"score":0.7,"category_id":3}]}"#;
        let json_path = dir.path().join("dets.json");
        std::fs::write(&json_path, json).unwrap();
        let dets = external_detector(&format!("cat {}", json_path.display()), &img, 5000).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].category, 3);

        let err = external_detector("echo not-json", &img, 5000).unwrap_err();
        assert!(matches!(err, Error::Detector(_)));

        let err = external_detector("false", &img, 5000).unwrap_err();
        assert!(matches!(err, Error::Detector(_)));

        let err = external_detector("sleep 5", &img, 50).unwrap_err();
        assert!(matches!(err, Error::Detector(_)));
    }

    #[test]
    fn empty_source_is_an_error() {
        let frames: Vec<ImageBuffer> = Vec::new();
        assert!(MemoryFrameSource::new(frames).is_err());
    }
}
