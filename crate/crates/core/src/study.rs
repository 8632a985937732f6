//! Sensitivity-study sweeps: depth noise, contrast noise and frame rate.

use std::path::Path;

use crate::config::PipelineConfig;
use crate::eval::{self, AlignMode};
use crate::geometry::Trajectory;
use crate::io::DataError;
use crate::pipeline::{self, Dataset, PipelineError, RunResult};
use crate::simconfig::{self, SceneConfig, TrajConfig};
use crate::simulator::ContrastModel;

/// One sweep entry.
#[derive(Debug, Clone, Copy)]
pub struct StudyRow {
    pub level: f64,
    pub seed: u64,
    pub ate_cm: f64,
    pub rot_deg: f64,
    pub completed_fraction: f64,
    pub diverged: bool,
}

pub const DEPTH_LEVELS: [f64; 5] = [0.01, 0.05, 0.10, 0.20, 0.50];
pub const CONTRAST_SIGMAS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];
pub const CONTRAST_MU: f64 = 0.5;
pub const FRAMERATE_LEVELS: [f64; 4] = [20.0, 10.0, 7.0, 5.0];

/// Aligned trajectory metrics against ground truth over the tracked part;
/// NaN when too few poses were produced.
fn metrics_against_gt(result: &RunResult, gt: &Trajectory, mode: AlignMode) -> (f64, f64) {
    if result.trajectory.len() < 3 {
        return (f64::NAN, f64::NAN);
    }
    let Ok(pairs) = eval::associate(&result.trajectory, gt, 0.05) else {
        return (f64::NAN, f64::NAN);
    };
    let Ok((aligned, _)) = eval::align(&pairs, mode) else {
        return (f64::NAN, f64::NAN);
    };
    (eval::ate_rmse(&aligned), eval::rot_rmse(&aligned))
}

fn row_from_run(
    level: f64,
    seed: u64,
    outcome: Result<RunResult, PipelineError>,
    gt: &Trajectory,
    mode: AlignMode,
) -> StudyRow {
    match outcome {
        Ok(result) => {
            let (ate_cm, rot_deg) = metrics_against_gt(&result, gt, mode);
            StudyRow {
                level,
                seed,
                ate_cm,
                rot_deg,
                completed_fraction: result.report.completed_fraction(),
                diverged: result.report.diverged || result.report.tracking_lost_at_packet.is_some(),
            }
        }
        // a failed run records a diverged row rather than aborting the sweep
        Err(_) => StudyRow {
            level,
            seed,
            ate_cm: f64::NAN,
            rot_deg: f64::NAN,
            completed_fraction: 0.0,
            diverged: true,
        },
    }
}

/// Tracker sensitivity to map depth noise: ground-truth keyframe depths
/// perturbed at each level, SE3-aligned errors.
pub fn depth_study(
    ds: &Dataset,
    base_cfg: &PipelineConfig,
    levels: &[f64],
    seeds: &[u64],
) -> Result<Vec<StudyRow>, PipelineError> {
    let gt = ds
        .gt_traj
        .as_ref()
        .ok_or_else(|| PipelineError::Dataset("depth study requires gt_traj.txt".into()))?;
    let mut rows = Vec::new();
    for &level in levels {
        for &seed in seeds {
            let mut cfg = base_cfg.clone();
            cfg.use_gt_depth = true;
            cfg.depth_noise_frac = level;
            cfg.seed = seed;
            let outcome = pipeline::run_pipeline(ds, &cfg);
            rows.push(row_from_run(level, seed, outcome, gt, AlignMode::SE3));
        }
    }
    Ok(rows)
}

/// Full-pipeline sensitivity to contrast noise: events regenerated at each
/// sigma with the study's mean contrast, Sim3-aligned errors.
pub fn contrast_study(
    dataset_dir: &Path,
    base_cfg: &PipelineConfig,
    sigmas: &[f64],
    seeds: &[u64],
) -> Result<Vec<StudyRow>, PipelineError> {
    let (scene_cfg, traj_cfg) = load_sim_configs(dataset_dir)?;
    let ds = pipeline::load_dataset(dataset_dir, base_cfg.log_offset)?;
    let gt = ds
        .gt_traj
        .as_ref()
        .ok_or_else(|| PipelineError::Dataset("contrast study requires gt_traj.txt".into()))?
        .clone();
    let mut rows = Vec::new();
    for &sigma in sigmas {
        for &seed in seeds {
            // manufacturing mismatch: one threshold draw per pixel
            let events = simconfig::regenerate_events(
                &scene_cfg,
                &traj_cfg,
                ContrastModel::per_pixel(CONTRAST_MU, sigma, seed),
            );
            let ds_row = Dataset {
                cam: ds.cam.clone(),
                events,
                frames: reuse_frames(&ds),
                gt_traj: ds.gt_traj.clone(),
            };
            let mut cfg = base_cfg.clone();
            cfg.seed = seed;
            let outcome = pipeline::run_pipeline(&ds_row, &cfg);
            rows.push(row_from_run(sigma, seed, outcome, &gt, AlignMode::Sim3));
        }
    }
    Ok(rows)
}

/// Full-pipeline robustness to the exported frame rate: the same event
/// stream with frames subsampled to each level, Sim3-aligned errors.
pub fn framerate_study(
    dataset_dir: &Path,
    base_cfg: &PipelineConfig,
    fps_levels: &[f64],
    seeds: &[u64],
) -> Result<Vec<StudyRow>, PipelineError> {
    let (scene_cfg, traj_cfg) = load_sim_configs(dataset_dir)?;
    let ds = pipeline::load_dataset(dataset_dir, base_cfg.log_offset)?;
    let gt = ds
        .gt_traj
        .as_ref()
        .ok_or_else(|| PipelineError::Dataset("framerate study requires gt_traj.txt".into()))?
        .clone();
    let base_fps = traj_cfg.fps;
    let mut rows = Vec::new();
    for &seed in seeds {
        // one event stream per seed, shared across the frame-rate grid
        let events = simconfig::regenerate_events(
            &scene_cfg,
            &traj_cfg,
            ContrastModel {
                mu: scene_cfg.mu_c,
                sigma: scene_cfg.sigma_c,
                seed,
                per_pixel: scene_cfg.noise_per_pixel,
            },
        );
        for &fps in fps_levels {
            let keep = subsample_indices(ds.frames.len(), base_fps, fps);
            let frames = keep
                .iter()
                .map(|&i| clone_frame(&ds.frames[i]))
                .collect();
            let ds_row = Dataset {
                cam: ds.cam.clone(),
                events: events.clone(),
                frames,
                gt_traj: ds.gt_traj.clone(),
            };
            let mut cfg = base_cfg.clone();
            cfg.seed = seed;
            let outcome = pipeline::run_pipeline(&ds_row, &cfg);
            rows.push(row_from_run(fps, seed, outcome, &gt, AlignMode::Sim3));
        }
    }
    Ok(rows)
}

/// Frame indices retained when subsampling `base_fps` down to `fps`.
pub fn subsample_indices(n_frames: usize, base_fps: f64, fps: f64) -> Vec<usize> {
    if fps >= base_fps {
        return (0..n_frames).collect();
    }
    let duration = n_frames as f64 / base_fps;
    let mut keep = Vec::new();
    let count = (duration * fps).ceil() as usize;
    for k in 0..count {
        let t = k as f64 / fps;
        let idx = (t * base_fps).round() as usize;
        if idx < n_frames && keep.last() != Some(&idx) {
            keep.push(idx);
        }
    }
    keep
}

fn clone_frame(f: &pipeline::DatasetFrame) -> pipeline::DatasetFrame {
    pipeline::DatasetFrame {
        t: f.t,
        intensity: f.intensity.clone(),
        log: f.log.clone(),
        grads: f.grads.clone(),
        gt_depth: f.gt_depth.clone(),
    }
}

fn reuse_frames(ds: &Dataset) -> Vec<pipeline::DatasetFrame> {
    ds.frames.iter().map(clone_frame).collect()
}

/// Reads the `sim_scene.cfg` / `sim_traj.cfg` copies the simulator leaves in
/// exported datasets.
pub fn load_sim_configs(dir: &Path) -> Result<(SceneConfig, TrajConfig), PipelineError> {
    let scene_path = dir.join("sim_scene.cfg");
    let traj_path = dir.join("sim_traj.cfg");
    let scene_text = std::fs::read_to_string(&scene_path).map_err(|e| DataError::io(&scene_path, e))?;
    let traj_text = std::fs::read_to_string(&traj_path).map_err(|e| DataError::io(&traj_path, e))?;
    Ok((
        simconfig::parse_scene_config(&scene_text)?,
        simconfig::parse_traj_config(&traj_text)?,
    ))
}

pub const STUDY_CSV_HEADER: &str = "level,seed,ate_cm,rot_deg,completed_fraction,diverged";

pub fn write_study_csv(path: &Path, rows: &[StudyRow]) -> Result<(), DataError> {
    let mut text = String::from(STUDY_CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            r.level, r.seed, r.ate_cm, r.rot_deg, r.completed_fraction, r.diverged
        ));
    }
    std::fs::write(path, text).map_err(|e| DataError::io(path, e))
}

/// Median over the per-seed values of one level (NaNs sort last and are
/// picked only if every seed failed).
pub fn median_over_seeds(rows: &[StudyRow], level: f64, pick: impl Fn(&StudyRow) -> f64) -> f64 {
    let mut values: Vec<f64> = rows
        .iter()
        .filter(|r| (r.level - level).abs() < 1e-12)
        .map(&pick)
        .collect();
    values.sort_by(|a, b| match (a.is_nan(), b.is_nan()) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        (false, false) => a.partial_cmp(b).unwrap(),
    });
    if values.is_empty() {
        f64::NAN
    } else {
        values[values.len() / 2]
    }
}
