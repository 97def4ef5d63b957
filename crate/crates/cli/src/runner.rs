//! End-to-end tracking runs: sequence loading, tracker orchestration,
//! result/metric emission, and evaluation of result files.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use sparsetrack_core::imaging::{annotate, decode_pgm, state_to_bbox, BBox, GrayFrame};
use sparsetrack_core::tracker::{AffineState, TrackRecord, Tracker};

use crate::config::RunConfig;
use crate::metrics::{curves, format_box_lines, parse_box_lines, MetricsReport};

/// Zero-padded numeric PGM filenames, sorted lexicographically.
pub fn list_sequence(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading sequence dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
        .collect();
    frames.sort();
    if frames.is_empty() {
        anyhow::bail!("no .pgm frames in {}", dir.display());
    }
    Ok(frames)
}

fn load_frame(path: &Path) -> anyhow::Result<GrayFrame> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading frame {}", path.display()))?;
    decode_pgm(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// Shifts a 1-based ground-truth box into 0-based image coordinates.
fn to_image_coords(b: &BBox) -> BBox {
    BBox { x: b.x - 1.0, y: b.y - 1.0, ..*b }
}

/// Shifts a 0-based image box into the 1-based file convention.
fn to_file_coords(b: &BBox) -> BBox {
    BBox { x: b.x + 1.0, y: b.y + 1.0, ..*b }
}

pub struct TrackOutcome {
    pub records: Vec<TrackRecord>,
    pub metrics: MetricsReport,
    pub fps: f64,
    pub results_path: PathBuf,
    pub metrics_path: PathBuf,
    pub records_path: PathBuf,
}

/// Runs the tracker over the configured sequence: the first `init_frames`
/// annotations build the model (and pass through as output rows), every
/// later frame is tracked. Ground truth is never consulted after
/// initialization. Reported FPS covers tracking work only, not IO.
pub fn run_track(cfg: &RunConfig, threads: usize) -> anyhow::Result<TrackOutcome> {
    cfg.validate()?;
    let frame_paths = list_sequence(&cfg.sequence_dir)?;
    let gt_text = std::fs::read_to_string(&cfg.gt_path)
        .with_context(|| format!("reading ground truth {}", cfg.gt_path.display()))?;
    let gt_boxes = parse_box_lines(&gt_text)
        .with_context(|| format!("parsing ground truth {}", cfg.gt_path.display()))?;
    if gt_boxes.len() != frame_paths.len() {
        anyhow::bail!(
            "ground truth has {} lines but the sequence has {} frames",
            gt_boxes.len(),
            frame_paths.len()
        );
    }
    let tcfg = cfg.tracker;
    if frame_paths.len() <= tcfg.init_frames {
        anyhow::bail!(
            "sequence has {} frames, need more than init_frames = {}",
            frame_paths.len(),
            tcfg.init_frames
        );
    }

    // initialization from the annotated head of the sequence
    let side = tcfg.patch_side;
    let mut init: Vec<(GrayFrame, AffineState)> = Vec::with_capacity(tcfg.init_frames);
    let mut records: Vec<TrackRecord> = Vec::with_capacity(frame_paths.len());
    for t in 0..tcfg.init_frames {
        let frame = load_frame(&frame_paths[t])?;
        let gt = to_image_coords(&gt_boxes[t]);
        let state = AffineState::from_bbox(&gt, side)
            .map_err(|e| anyhow::anyhow!("frame {t} ground truth: {e}"))?;
        records.push(TrackRecord {
            frame_index: t,
            state,
            bbox: state_to_bbox(&state, side),
            likelihood: 1.0,
            noise_ratio: 0.0,
            solver_iterations: 0,
            reinit_fired: false,
        });
        init.push((frame, state));
    }
    let mut tracker = Tracker::init(&init, tcfg, cfg.dictionary_init)
        .map_err(|e| anyhow::anyhow!("tracker init: {e}"))?;
    drop(init);

    let parallel = threads != 1;
    tracker.set_parallel(parallel);
    let mut track_time = Duration::ZERO;
    let run = |tracker: &mut Tracker,
               records: &mut Vec<TrackRecord>,
               track_time: &mut Duration|
     -> anyhow::Result<()> {
        for path in &frame_paths[tcfg.init_frames..] {
            let frame = load_frame(path)?;
            let start = Instant::now();
            let record = tracker
                .step(&frame)
                .map_err(|e| anyhow::anyhow!("tracking {}: {e}", path.display()))?;
            *track_time += start.elapsed();
            records.push(record);
        }
        Ok(())
    };
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building thread pool")?;
        pool.install(|| run(&mut tracker, &mut records, &mut track_time))?;
    } else {
        run(&mut tracker, &mut records, &mut track_time)?;
    }

    let tracked = (frame_paths.len() - tcfg.init_frames) as f64;
    let fps = tracked / track_time.as_secs_f64().max(1e-9);

    // metrics and files share the 1-based box convention so that curves
    // recomputed from the results file are bit-identical
    let file_boxes: Vec<BBox> = records.iter().map(|r| to_file_coords(&r.bbox)).collect();
    let pairs: Vec<(BBox, BBox)> =
        file_boxes.iter().copied().zip(gt_boxes.iter().copied()).collect();
    let mut metrics = curves(&pairs)?;
    metrics.fps = Some(fps);

    std::fs::create_dir_all(&cfg.out_dir)?;
    let results_path = cfg.out_dir.join("results.txt");
    let header = format!(
        "# sparsetrack results\n# sequence: {}\n# seed: {}\n# frames: {}\n",
        cfg.sequence_dir.display(),
        tcfg.seed,
        frame_paths.len()
    );
    std::fs::write(&results_path, header + &format_box_lines(&file_boxes))?;

    let records_path = cfg.out_dir.join("records.jsonl");
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    std::fs::write(&records_path, jsonl)?;

    let metrics_path = cfg.out_dir.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;

    if cfg.emit_annotated {
        let ann_dir = cfg.out_dir.join("annotated");
        std::fs::create_dir_all(&ann_dir)?;
        for (t, (path, record)) in frame_paths.iter().zip(records.iter()).enumerate() {
            let frame = load_frame(path)?;
            let bytes = annotate(&frame, &record.bbox);
            std::fs::write(ann_dir.join(format!("{t:05}.ppm")), bytes)?;
        }
    }

    Ok(TrackOutcome { records, metrics, fps, results_path, metrics_path, records_path })
}

/// Recomputes the metric curves from a results file against ground truth.
pub fn eval_files(results_path: &Path, gt_path: &Path) -> anyhow::Result<MetricsReport> {
    let results_text = std::fs::read_to_string(results_path)
        .with_context(|| format!("reading results {}", results_path.display()))?;
    let gt_text = std::fs::read_to_string(gt_path)
        .with_context(|| format!("reading ground truth {}", gt_path.display()))?;
    let results = parse_box_lines(&results_text)?;
    let gt = parse_box_lines(&gt_text)?;
    if results.len() != gt.len() {
        anyhow::bail!(
            "results have {} boxes but ground truth has {}",
            results.len(),
            gt.len()
        );
    }
    let pairs: Vec<(BBox, BBox)> = results.into_iter().zip(gt).collect();
    curves(&pairs)
}
