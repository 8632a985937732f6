//! Full odometry pipeline: dataset loading, bootstrap, per-packet tracking,
//! keyframe management and windowed refinement.

use std::path::Path;
use std::time::Instant;

use nalgebra::Vector2;
use thiserror::Error;

use crate::bootstrap::{self, BootstrapConfig, BootstrapError, BootstrapFrame};
use crate::camera::{self, CameraError, CameraIntrinsics};
use crate::config::{ConfigError, PipelineConfig};
use crate::egm::{log_image_from_normalized, sobel_gradient, GradientImage, LogImage};
use crate::event::{self, Event, EventError};
use crate::eval;
use crate::geometry::{se3_log, GeometryError, Pose, Trajectory, Twist};
use crate::image::ImageF64;
use crate::io::{self, DataError};
use crate::keyframes::{self, Keyframe, PointStatus, SelectedPoint};
use crate::pba::{self, PbaConfig, PbaError, SlidingWindow};
use crate::simulator::{self, GT_RHO_MAX};
use crate::tracking::{self, TrackError, TrackerConfig, TrackerState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("calibration: {0}")]
    Camera(#[from] CameraError),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("data: {0}")]
    Event(#[from] EventError),
    #[error("bootstrap failed: {0}")]
    Bootstrap(#[from] BootstrapError),
    #[error("refinement: {0}")]
    Pba(#[from] PbaError),
    #[error("tracking failed at packet {packet}: {source}")]
    Track {
        packet: usize,
        #[source]
        source: TrackError,
    },
    #[error("{0}")]
    Geometry(#[from] GeometryError),
    #[error("dataset: {0}")]
    Dataset(String),
}

/// One ingested frame: undistorted intensity, its log image and gradients,
/// and the optional ground-truth depth map.
pub struct DatasetFrame {
    pub t: f64,
    pub intensity: ImageF64,
    pub log: LogImage,
    pub grads: GradientImage,
    /// Depth in meters; infinity on background pixels.
    pub gt_depth: Option<ImageF64>,
}

/// A dataset after ingestion: everything lives on the undistorted pinhole
/// model of `cam`.
pub struct Dataset {
    pub cam: CameraIntrinsics,
    pub events: Vec<Event>,
    pub frames: Vec<DatasetFrame>,
    pub gt_traj: Option<Trajectory>,
}

/// Loads the dataset layout (`calib.txt`, `events.csv|bin`, `frames.csv` +
/// PGMs, optional `gt_traj.txt` and `gt_depth/`). Raw events and frames are
/// undistorted here, once.
pub fn load_dataset(dir: &Path, log_offset: f64) -> Result<Dataset, PipelineError> {
    let raw_cam = camera::load_calib(&dir.join("calib.txt"))?;
    let cam = raw_cam.undistorted();

    let bin_path = dir.join("events.bin");
    let csv_path = dir.join("events.csv");
    let mut events = if bin_path.exists() {
        io::read_events_bin(&bin_path)?
    } else {
        io::read_events_csv(&csv_path)?
    };
    event::validate_stream(&events, cam.width, cam.height)?;
    if raw_cam.has_distortion() {
        events = undistort_events(&events, &raw_cam);
    }

    let entries = io::read_frames_csv(&dir.join("frames.csv"))?;
    if entries.is_empty() {
        return Err(PipelineError::Dataset("frames.csv lists no frames".into()));
    }
    let mut frames = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let raw = io::read_pgm(&dir.join(&entry.filename))?;
        let normalized = raw.to_normalized();
        if normalized.width() != cam.width || normalized.height() != cam.height {
            return Err(PipelineError::Dataset(format!(
                "{}: frame size {}x{} does not match calibration {}x{}",
                entry.filename,
                normalized.width(),
                normalized.height(),
                cam.width,
                cam.height
            )));
        }
        let undistorted = raw_cam.undistort_image(&normalized);
        let log = log_image_from_normalized(&undistorted, log_offset);
        let grads = sobel_gradient(&log);
        let depth_path = dir.join(format!("gt_depth/{i:06}.pgm"));
        let gt_depth = if depth_path.exists() {
            let raw = io::read_pgm(&depth_path)?;
            let (w, h) = raw.dimensions();
            let data = match raw {
                io::RawImage::U16 { data, .. } => data,
                io::RawImage::U8 { .. } => {
                    return Err(PipelineError::Dataset(format!(
                        "gt_depth/{i:06}.pgm must be 16-bit"
                    )))
                }
            };
            // inverse depth encoded over [0, GT_RHO_MAX]; 0 = background
            let depth = ImageF64::from_vec(
                w,
                h,
                data.iter()
                    .map(|&v| {
                        if v == 0 {
                            f64::INFINITY
                        } else {
                            1.0 / (v as f64 / 65535.0 * GT_RHO_MAX)
                        }
                    })
                    .collect(),
            );
            Some(depth)
        } else {
            None
        };
        frames.push(DatasetFrame {
            t: entry.timestamp_s,
            intensity: undistorted,
            log,
            grads,
            gt_depth,
        });
    }

    let traj_path = dir.join("gt_traj.txt");
    let gt_traj = if traj_path.exists() {
        Some(eval::read_tum(&traj_path).map_err(|e| PipelineError::Dataset(e.to_string()))?)
    } else {
        None
    };

    Ok(Dataset {
        cam,
        events,
        frames,
        gt_traj,
    })
}

/// Moves raw event pixels onto the undistorted grid, dropping events that
/// leave the sensor.
fn undistort_events(events: &[Event], raw_cam: &CameraIntrinsics) -> Vec<Event> {
    // per-pixel lookup table: raw pixel -> undistorted pixel (rounded)
    let mut map = vec![None; raw_cam.width * raw_cam.height];
    for y in 0..raw_cam.height {
        for x in 0..raw_cam.width {
            let u = raw_cam.undistort_pixel(Vector2::new(x as f64, y as f64));
            let ux = u.x.round();
            let uy = u.y.round();
            if ux >= 0.0 && uy >= 0.0 && ux < raw_cam.width as f64 && uy < raw_cam.height as f64 {
                map[y * raw_cam.width + x] = Some((ux as u16, uy as u16));
            }
        }
    }
    events
        .iter()
        .filter_map(|e| {
            map[e.y as usize * raw_cam.width + e.x as usize].map(|(x, y)| Event::new(e.t_us, x, y, e.polarity))
        })
        .collect()
}

/// Per-run statistics for the run report.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub packets_total: usize,
    pub packets_tracked: usize,
    pub packets_skipped: usize,
    pub diverged: bool,
    pub diverged_at_packet: Option<usize>,
    pub tracking_lost_at_packet: Option<usize>,
    pub keyframes_created: usize,
    pub max_points_per_keyframe: usize,
    pub realized_packet_rate_hz: f64,
    pub runtime_s: f64,
    pub deterministic: bool,
}

impl RunReport {
    pub fn completed_fraction(&self) -> f64 {
        let usable = self.packets_total.saturating_sub(self.packets_skipped);
        if usable == 0 {
            return 0.0;
        }
        self.packets_tracked as f64 / usable as f64
    }

    pub fn to_text(&self) -> String {
        format!(
            "packets_total={}\npackets_tracked={}\npackets_skipped={}\ncompleted_fraction={:.6}\n\
             diverged={}\ndiverged_at_packet={}\ntracking_lost_at_packet={}\nkeyframes_created={}\n\
             max_points_per_keyframe={}\nrealized_packet_rate_hz={:.3}\nruntime_s={:.3}\ndeterministic={}\n",
            self.packets_total,
            self.packets_tracked,
            self.packets_skipped,
            self.completed_fraction(),
            self.diverged,
            self.diverged_at_packet.map_or(-1i64, |v| v as i64),
            self.tracking_lost_at_packet.map_or(-1i64, |v| v as i64),
            self.keyframes_created,
            self.max_points_per_keyframe,
            self.realized_packet_rate_hz,
            self.runtime_s,
            self.deterministic,
        )
    }
}

pub struct RunResult {
    /// One pose per tracked packet, `T_{world, event camera}` at the packet
    /// midpoint.
    pub trajectory: Trajectory,
    pub report: RunReport,
    pub window: SlidingWindow,
}

fn tracker_config(cfg: &PipelineConfig) -> TrackerConfig {
    TrackerConfig {
        contrast: cfg.contrast_c,
        sigma_factor: cfg.sigma_factor,
        huber_gamma: cfg.huber_gamma_track,
        max_iterations: cfg.max_iters_track,
        ..TrackerConfig::default()
    }
}

fn pba_config(cfg: &PipelineConfig) -> PbaConfig {
    PbaConfig {
        huber_gamma: cfg.huber_gamma_pba,
        max_iterations: cfg.max_iters_pba,
        ..PbaConfig::default()
    }
}

fn bootstrap_config(cfg: &PipelineConfig) -> BootstrapConfig {
    BootstrapConfig {
        min_parallax_px: cfg.min_parallax_px,
        ransac_iterations: cfg.ransac_iters,
        ransac_threshold_px: cfg.ransac_thresh_px,
        seed: cfg.seed,
        tiles: cfg.tiles,
        select_fraction: cfg.select_fraction,
        grad_floor: cfg.grad_floor,
        match_radius: cfg.match_radius,
        nn_radius: cfg.nn_radius,
        ..BootstrapConfig::default()
    }
}

/// Builds a keyframe whose depths come from the frame's ground-truth map,
/// optionally perturbed for the sensitivity studies.
fn keyframe_from_gt(
    id: u64,
    frame: &DatasetFrame,
    pose: Pose,
    cfg: &PipelineConfig,
) -> Result<Keyframe, PipelineError> {
    let depth_map = frame
        .gt_depth
        .as_ref()
        .ok_or_else(|| PipelineError::Dataset("use_gt_depth requires gt_depth maps".into()))?;
    let candidates =
        keyframes::select_candidates(&frame.log, &frame.grads, cfg.tiles, cfg.select_fraction, cfg.grad_floor);
    let mut points: Vec<SelectedPoint> = candidates
        .iter()
        .filter_map(|c| {
            let depth = depth_map.get(c.x as usize, c.y as usize);
            (depth.is_finite() && depth > 0.0).then(|| SelectedPoint {
                x: c.x,
                y: c.y,
                rho: 1.0 / depth,
                grad_mag: c.grad_mag,
                status: PointStatus::Active,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(PipelineError::Dataset("ground-truth depth map is empty on all candidates".into()));
    }
    if cfg.depth_noise_frac > 0.0 {
        points = simulator::perturb_depth(&points, cfg.depth_noise_frac, cfg.seed ^ (id.wrapping_mul(0x9e3779b9)));
    }
    Ok(Keyframe {
        id,
        t: frame.t,
        pose,
        log: frame.log.clone(),
        grads: frame.grads.clone(),
        points,
    })
}

/// Body twist between two trajectory samples around `t`, used to seed the
/// tracker's constant-velocity model.
fn twist_from_trajectory(traj: &Trajectory, t: f64, dt: f64) -> Twist {
    let a = traj.interpolate(t).unwrap();
    let b = traj.interpolate(t + dt).unwrap();
    let delta = a.inverse().compose(&b);
    Twist::from_vector(se3_log(&delta) / dt)
}

/// Runs bootstrap, per-packet tracking, the keyframe policy and windowed
/// refinement over a loaded dataset.
pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig) -> Result<RunResult, PipelineError> {
    let start = Instant::now();
    let cam = &ds.cam;
    let packets = tracking::packetize(&ds.events, cfg.events_per_packet, cfg.packet_stride);
    if packets.is_empty() {
        return Err(PipelineError::Dataset(format!(
            "{} events yield no packets of {}",
            ds.events.len(),
            cfg.events_per_packet
        )));
    }

    // --- bootstrap ---------------------------------------------------------
    let mut window;
    let mut next_kf_id;
    let mut state;
    if cfg.use_gt_depth {
        let gt = ds
            .gt_traj
            .as_ref()
            .ok_or_else(|| PipelineError::Dataset("use_gt_depth requires gt_traj.txt".into()))?;
        let frame0 = &ds.frames[0];
        let pose0 = gt
            .interpolate(frame0.t)
            .ok_or_else(|| PipelineError::Dataset("ground-truth trajectory is empty".into()))?;
        let kf0 = keyframe_from_gt(0, frame0, pose0.clone(), cfg)?;
        window = SlidingWindow::new(cfg.window_keyframes);
        window.slide(kf0);
        next_kf_id = 1;
        let twist0 = twist_from_trajectory(gt, frame0.t, 0.02);
        state = TrackerState::new(0, pose0, twist0);
        state.t_mid = Some(frame0.t);
    } else {
        let boot_frames: Vec<BootstrapFrame> = ds
            .frames
            .iter()
            .take(cfg.bootstrap_max_frames.max(2))
            .map(|f| BootstrapFrame {
                t: f.t,
                log: f.log.clone(),
                grads: f.grads.clone(),
            })
            .collect();
        let boot = bootstrap::initialize(&boot_frames, cam, cfg.window_keyframes, &bootstrap_config(cfg), &pba_config(cfg))?;
        let kf_last = boot.window.last().unwrap();
        let (t0, t1) = (
            boot.window.keyframes[0].t,
            kf_last.t,
        );
        let pose_last = kf_last.pose.clone();
        let twist0 = {
            let delta = boot.window.keyframes[0]
                .pose
                .inverse()
                .compose(&pose_last);
            Twist::from_vector(se3_log(&delta) / (t1 - t0).max(1e-6))
        };
        state = TrackerState::new(kf_last.id, pose_last, twist0);
        state.t_mid = Some(t1);
        next_kf_id = kf_last.id + 1;
        window = boot.window;
    }

    // --- per-packet tracking ------------------------------------------------
    let tcfg = tracker_config(cfg);
    let pcfg = pba_config(cfg);
    let mut trajectory = Trajectory::new();
    let mut report = RunReport {
        packets_total: packets.len(),
        packets_tracked: 0,
        packets_skipped: 0,
        diverged: false,
        diverged_at_packet: None,
        tracking_lost_at_packet: None,
        keyframes_created: window.len(),
        max_points_per_keyframe: window.keyframes.iter().map(|k| k.points.len()).max().unwrap_or(0),
        realized_packet_rate_hz: 0.0,
        runtime_s: 0.0,
        deterministic: cfg.deterministic,
    };
    let t_begin = window.last().unwrap().t;
    let mut first_tracked_t = None;
    let mut last_tracked_t = 0.0f64;

    for (pi, packet) in packets.iter().enumerate() {
        let t_mid = packet.t_mid_seconds();
        if t_mid <= t_begin {
            report.packets_skipped += 1;
            continue;
        }
        let kf = window
            .keyframes
            .iter()
            .find(|k| k.id == state.kf_id)
            .expect("reference keyframe stays in the window");
        let (new_state, diag) = match tracking::track_packet(&state, &ds.events, packet, kf, cam, &tcfg) {
            Ok(v) => v,
            Err(e) => {
                report.tracking_lost_at_packet = Some(pi);
                let _ = e;
                break;
            }
        };
        state = new_state;
        if trajectory.push(t_mid, state.pose.clone()).is_ok() {
            report.packets_tracked += 1;
            first_tracked_t.get_or_insert(t_mid);
            last_tracked_t = t_mid;
        }
        if state.diverged {
            report.diverged = true;
            report.diverged_at_packet = Some(pi);
            break;
        }

        // --- keyframe policy ------------------------------------------------
        if keyframes::should_create_keyframe(
            diag.visible_fraction,
            diag.rel_rotation,
            cfg.kf_visibility_drop,
            cfg.kf_rotation_deg.to_radians(),
        ) {
            let kf_t = window.keyframes.iter().find(|k| k.id == state.kf_id).unwrap().t;
            // latest frame at or before the packet midpoint, newer than the
            // current reference
            let frame_idx = ds
                .frames
                .iter()
                .rposition(|f| f.t <= t_mid && f.t > kf_t);
            if let Some(fi) = frame_idx {
                let frame = &ds.frames[fi];
                // pose at frame time: the tracked packet pose nearest in time
                let pose_at_frame = trajectory
                    .nearest(frame.t)
                    .map(|idx| trajectory.samples()[idx].1.clone())
                    .unwrap_or_else(|| state.pose.clone());
                let new_kf = if cfg.use_gt_depth {
                    let gt = ds.gt_traj.as_ref().unwrap();
                    let pose_gt = gt.interpolate(frame.t).unwrap();
                    keyframe_from_gt(next_kf_id, frame, pose_gt, cfg)?
                } else {
                    let candidates = keyframes::select_candidates(
                        &frame.log,
                        &frame.grads,
                        cfg.tiles,
                        cfg.select_fraction,
                        cfg.grad_floor,
                    );
                    let old: Vec<&Keyframe> = window.keyframes.iter().collect();
                    match keyframes::propagate_depth(
                        &old,
                        &pose_at_frame,
                        &candidates,
                        cam,
                        cfg.match_radius,
                        cfg.nn_radius,
                    ) {
                        Ok(points) => Keyframe {
                            id: next_kf_id,
                            t: frame.t,
                            pose: pose_at_frame,
                            log: frame.log.clone(),
                            grads: frame.grads.clone(),
                            points,
                        },
                        Err(_) => continue, // keep tracking against the old keyframe
                    }
                };
                report.max_points_per_keyframe = report.max_points_per_keyframe.max(new_kf.points.len());
                let new_id = new_kf.id;
                window.slide(new_kf);
                next_kf_id += 1;
                report.keyframes_created += 1;
                if !cfg.use_gt_depth {
                    pba::optimize_window(&mut window, cam, &pcfg)?;
                }
                state.kf_id = new_id;
            }
        }
    }

    if let (Some(t0), true) = (first_tracked_t, report.packets_tracked > 1) {
        report.realized_packet_rate_hz = (report.packets_tracked - 1) as f64 / (last_tracked_t - t0).max(1e-9);
    }
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(RunResult {
        trajectory,
        report,
        window,
    })
}

/// Writes `traj.txt` (TUM), `report.txt` and per-keyframe dumps under
/// `keyframes/`.
pub fn write_outputs(out_dir: &Path, result: &RunResult) -> Result<(), PipelineError> {
    std::fs::create_dir_all(out_dir.join("keyframes")).map_err(|e| DataError::io(out_dir, e))?;
    eval::write_tum(&out_dir.join("traj.txt"), &result.trajectory)
        .map_err(|e| PipelineError::Dataset(e.to_string()))?;
    std::fs::write(out_dir.join("report.txt"), result.report.to_text())
        .map_err(|e| DataError::io(&out_dir.join("report.txt"), e))?;
    for kf in &result.window.keyframes {
        keyframes::write_points_csv(&out_dir.join(format!("keyframes/kf_{:06}.csv", kf.id)), kf)?;
        let rho_max = kf
            .active_points()
            .map(|p| p.rho)
            .fold(0.0f64, f64::max)
            .max(1e-6);
        keyframes::write_depth_pgm(&out_dir.join(format!("keyframes/kf_{:06}.pgm", kf.id)), kf, 0.0, rho_max)?;
    }
    Ok(())
}

/// Window dump: TUM rows for keyframe poses plus the point table
/// `host_id,x,y,inverse_depth,status` (inspection and tests).
pub fn write_window_dump(path: &Path, win: &SlidingWindow) -> Result<(), PipelineError> {
    let mut text = String::new();
    for kf in &win.keyframes {
        let q = kf.pose.rotation.as_ref();
        text.push_str(&format!(
            "# kf {} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\n",
            kf.id,
            kf.t,
            kf.pose.translation.x,
            kf.pose.translation.y,
            kf.pose.translation.z,
            q.i,
            q.j,
            q.k,
            q.w
        ));
    }
    text.push_str("host_id,x,y,inverse_depth,status\n");
    for kf in &win.keyframes {
        for p in &kf.points {
            text.push_str(&format!("{},{},{},{:.9},{}\n", kf.id, p.x, p.y, p.rho, p.status));
        }
    }
    std::fs::write(path, text).map_err(|e| PipelineError::Data(DataError::io(path, e)))
}

/// Exit-code mapping used by the command-line front-end: 2 config, 3 data,
/// 4 tracking failure.
pub fn exit_code(err: &PipelineError) -> i32 {
    match err {
        PipelineError::Config(_) | PipelineError::Camera(_) => 2,
        PipelineError::Data(_) | PipelineError::Event(_) | PipelineError::Dataset(_) | PipelineError::Geometry(_) => 3,
        PipelineError::Bootstrap(_) | PipelineError::Track { .. } | PipelineError::Pba(_) => 4,
    }
}
