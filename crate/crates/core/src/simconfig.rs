//! Plain-text scene and trajectory descriptions for the simulator, and the
//! dataset synthesis entry point built on them.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraIntrinsics;
use crate::config::ConfigError;
use crate::geometry::{se3_exp, Pose, Trajectory, Twist};
use crate::image::ImageF64;
use crate::simulator::{self, ContrastModel, SimDataset, SimScene, TexturedPlane};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    /// Smooth value noise (bilinear upsample of a coarse random grid).
    Noise,
    Checker,
    /// Horizontal intensity ramp.
    Ramp,
}

#[derive(Debug, Clone)]
pub struct PlaneSpec {
    pub center: Vector3<f64>,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub size: (f64, f64),
    pub texture: TextureKind,
    pub texture_px: usize,
    /// Feature cells across the texture (noise/checker).
    pub cells: usize,
    pub min_intensity: f64,
    pub max_intensity: f64,
}

impl Default for PlaneSpec {
    fn default() -> Self {
        Self {
            center: Vector3::new(0.0, 0.0, 5.0),
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            size: (12.0, 9.0),
            texture: TextureKind::Noise,
            texture_px: 256,
            cells: 12,
            min_intensity: 0.05,
            max_intensity: 0.95,
        }
    }
}

/// Scene description: camera intrinsics, contrast model and textured planes.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub cam: CameraIntrinsics,
    pub ambient: f64,
    pub mu_c: f64,
    pub sigma_c: f64,
    /// Per-pixel (manufacturing mismatch) instead of per-event noise.
    pub noise_per_pixel: bool,
    pub seed: u64,
    pub planes: Vec<PlaneSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            cam: CameraIntrinsics::pinhole(110.0, 110.0, 80.0, 60.0, 160, 120),
            ambient: 0.4,
            mu_c: 0.2,
            sigma_c: 0.0,
            noise_per_pixel: false,
            seed: 0,
            planes: vec![PlaneSpec::default()],
        }
    }
}

/// Trajectory description: a constant body twist plus sinusoidal oscillation
/// on all six components, integrated at the render rate.
#[derive(Debug, Clone)]
pub struct TrajConfig {
    pub duration_s: f64,
    /// Exported frame rate.
    pub fps: f64,
    /// Render (and trajectory sampling) rate for event synthesis.
    pub render_fps: f64,
    pub v: Vector3<f64>,
    pub omega_deg: Vector3<f64>,
    pub osc_v_amp: Vector3<f64>,
    pub osc_v_freq_hz: f64,
    pub osc_w_amp_deg: Vector3<f64>,
    pub osc_w_freq_hz: f64,
}

impl Default for TrajConfig {
    fn default() -> Self {
        Self {
            duration_s: 5.0,
            fps: 20.0,
            render_fps: 1000.0,
            v: Vector3::new(0.2, 0.0, 0.0),
            omega_deg: Vector3::zeros(),
            osc_v_amp: Vector3::zeros(),
            osc_v_freq_hz: 1.0,
            osc_w_amp_deg: Vector3::zeros(),
            osc_w_freq_hz: 1.0,
        }
    }
}

fn parse_vec3(value: &str, key: &str, line: usize) -> Result<Vector3<f64>, ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            line,
            msg: "expected three comma-separated numbers".into(),
        });
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p.parse().map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            line,
            msg: format!("bad number '{p}'"),
        })?;
    }
    Ok(Vector3::new(out[0], out[1], out[2]))
}

fn parse_pair(value: &str, key: &str, line: usize) -> Result<(f64, f64), ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            line,
            msg: "expected two comma-separated numbers".into(),
        });
    }
    let a = parts[0].parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        line,
        msg: format!("bad number '{}'", parts[0]),
    })?;
    let b = parts[1].parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        line,
        msg: format!("bad number '{}'", parts[1]),
    })?;
    Ok((a, b))
}

macro_rules! bad {
    ($key:expr, $line:expr, $msg:expr) => {
        ConfigError::BadValue {
            key: $key.to_string(),
            line: $line,
            msg: $msg.to_string(),
        }
    };
}

pub fn parse_scene_config(text: &str) -> Result<SceneConfig, ConfigError> {
    let mut cfg = SceneConfig::default();
    cfg.planes.clear();
    let mut planes: Vec<PlaneSpec> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Malformed { line: lineno + 1 })?;
        let (key, value) = (key.trim(), value.trim());
        let lineno = lineno + 1;
        let num = |v: &str, k: &str| -> Result<f64, ConfigError> {
            v.parse().map_err(|_| bad!(k, lineno, format!("bad number '{v}'")))
        };
        if let Some(rest) = key.strip_prefix("plane") {
            let (idx_str, field) = rest
                .split_once('_')
                .ok_or_else(|| bad!(key, lineno, "expected planeN_field"))?;
            let idx: usize = idx_str
                .parse()
                .map_err(|_| bad!(key, lineno, "bad plane index"))?;
            while planes.len() <= idx {
                planes.push(PlaneSpec::default());
            }
            let p = &mut planes[idx];
            match field {
                "center" => p.center = parse_vec3(value, key, lineno)?,
                "yaw_deg" => p.yaw_deg = num(value, key)?,
                "pitch_deg" => p.pitch_deg = num(value, key)?,
                "size" => p.size = parse_pair(value, key, lineno)?,
                "texture" => {
                    p.texture = match value {
                        "noise" => TextureKind::Noise,
                        "checker" => TextureKind::Checker,
                        "ramp" => TextureKind::Ramp,
                        other => return Err(bad!(key, lineno, format!("unknown texture '{other}'"))),
                    }
                }
                "texture_px" => p.texture_px = num(value, key)? as usize,
                "cells" => p.cells = num(value, key)? as usize,
                "min" => p.min_intensity = num(value, key)?,
                "max" => p.max_intensity = num(value, key)?,
                other => {
                    return Err(ConfigError::UnknownKey {
                        key: format!("plane{idx}_{other}"),
                        line: lineno,
                    })
                }
            }
            continue;
        }
        match key {
            "width" => cfg.cam.width = num(value, key)? as usize,
            "height" => cfg.cam.height = num(value, key)? as usize,
            "fx" => cfg.cam.fx = num(value, key)?,
            "fy" => cfg.cam.fy = num(value, key)?,
            "cx" => cfg.cam.cx = num(value, key)?,
            "cy" => cfg.cam.cy = num(value, key)?,
            "ambient" => cfg.ambient = num(value, key)?,
            "mu_c" => cfg.mu_c = num(value, key)?,
            "sigma_c" => cfg.sigma_c = num(value, key)?,
            "noise_mode" => {
                cfg.noise_per_pixel = match value {
                    "per_event" => false,
                    "per_pixel" => true,
                    other => return Err(bad!(key, lineno, format!("unknown noise mode '{other}'"))),
                }
            }
            "seed" => cfg.seed = num(value, key)? as u64,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    line: lineno,
                })
            }
        }
    }
    if planes.is_empty() {
        planes.push(PlaneSpec::default());
    }
    cfg.planes = planes;
    Ok(cfg)
}

pub fn parse_traj_config(text: &str) -> Result<TrajConfig, ConfigError> {
    let mut cfg = TrajConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Malformed { line: lineno + 1 })?;
        let (key, value) = (key.trim(), value.trim());
        let lineno = lineno + 1;
        let num = |v: &str, k: &str| -> Result<f64, ConfigError> {
            v.parse().map_err(|_| bad!(k, lineno, format!("bad number '{v}'")))
        };
        match key {
            "duration_s" => cfg.duration_s = num(value, key)?,
            "fps" => cfg.fps = num(value, key)?,
            "render_fps" => cfg.render_fps = num(value, key)?,
            "v" => cfg.v = parse_vec3(value, key, lineno)?,
            "omega_deg" => cfg.omega_deg = parse_vec3(value, key, lineno)?,
            "osc_v_amp" => cfg.osc_v_amp = parse_vec3(value, key, lineno)?,
            "osc_v_freq_hz" => cfg.osc_v_freq_hz = num(value, key)?,
            "osc_w_amp_deg" => cfg.osc_w_amp_deg = parse_vec3(value, key, lineno)?,
            "osc_w_freq_hz" => cfg.osc_w_freq_hz = num(value, key)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    line: lineno,
                })
            }
        }
    }
    Ok(cfg)
}

pub fn scene_config_to_string(cfg: &SceneConfig) -> String {
    let mut s = format!(
        "width={}\nheight={}\nfx={}\nfy={}\ncx={}\ncy={}\nambient={}\nmu_c={}\nsigma_c={}\nnoise_mode={}\nseed={}\n",
        cfg.cam.width,
        cfg.cam.height,
        cfg.cam.fx,
        cfg.cam.fy,
        cfg.cam.cx,
        cfg.cam.cy,
        cfg.ambient,
        cfg.mu_c,
        cfg.sigma_c,
        if cfg.noise_per_pixel { "per_pixel" } else { "per_event" },
        cfg.seed
    );
    for (i, p) in cfg.planes.iter().enumerate() {
        let tex = match p.texture {
            TextureKind::Noise => "noise",
            TextureKind::Checker => "checker",
            TextureKind::Ramp => "ramp",
        };
        s.push_str(&format!(
            "plane{i}_center={},{},{}\nplane{i}_yaw_deg={}\nplane{i}_pitch_deg={}\nplane{i}_size={},{}\n\
             plane{i}_texture={tex}\nplane{i}_texture_px={}\nplane{i}_cells={}\nplane{i}_min={}\nplane{i}_max={}\n",
            p.center.x,
            p.center.y,
            p.center.z,
            p.yaw_deg,
            p.pitch_deg,
            p.size.0,
            p.size.1,
            p.texture_px,
            p.cells,
            p.min_intensity,
            p.max_intensity
        ));
    }
    s
}

pub fn traj_config_to_string(cfg: &TrajConfig) -> String {
    format!(
        "duration_s={}\nfps={}\nrender_fps={}\nv={},{},{}\nomega_deg={},{},{}\n\
         osc_v_amp={},{},{}\nosc_v_freq_hz={}\nosc_w_amp_deg={},{},{}\nosc_w_freq_hz={}\n",
        cfg.duration_s,
        cfg.fps,
        cfg.render_fps,
        cfg.v.x,
        cfg.v.y,
        cfg.v.z,
        cfg.omega_deg.x,
        cfg.omega_deg.y,
        cfg.omega_deg.z,
        cfg.osc_v_amp.x,
        cfg.osc_v_amp.y,
        cfg.osc_v_amp.z,
        cfg.osc_v_freq_hz,
        cfg.osc_w_amp_deg.x,
        cfg.osc_w_amp_deg.y,
        cfg.osc_w_amp_deg.z,
        cfg.osc_w_freq_hz
    )
}

fn make_texture(spec: &PlaneSpec, rng: &mut ChaCha8Rng) -> ImageF64 {
    let n = spec.texture_px;
    let lo = spec.min_intensity;
    let hi = spec.max_intensity;
    match spec.texture {
        TextureKind::Ramp => ImageF64::from_fn(n, n, |x, _| lo + (hi - lo) * x as f64 / (n - 1) as f64),
        TextureKind::Checker => {
            let cell = (n / spec.cells.max(1)).max(1);
            ImageF64::from_fn(n, n, |x, y| {
                if ((x / cell) + (y / cell)) % 2 == 0 {
                    lo
                } else {
                    hi
                }
            })
        }
        TextureKind::Noise => {
            let cells = spec.cells.max(2);
            let coarse: Vec<f64> = (0..(cells + 1) * (cells + 1))
                .map(|_| rng.random_range(lo..hi))
                .collect();
            ImageF64::from_fn(n, n, |x, y| {
                let gx = x as f64 / n as f64 * cells as f64;
                let gy = y as f64 / n as f64 * cells as f64;
                let (ix, iy) = ((gx as usize).min(cells - 1), (gy as usize).min(cells - 1));
                let (fx, fy) = (gx - ix as f64, gy - iy as f64);
                // smoothstep keeps gradients continuous across cell borders
                let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
                let at = |i: usize, j: usize| coarse[j * (cells + 1) + i];
                at(ix, iy) * (1.0 - sx) * (1.0 - sy)
                    + at(ix + 1, iy) * sx * (1.0 - sy)
                    + at(ix, iy + 1) * (1.0 - sx) * sy
                    + at(ix + 1, iy + 1) * sx * sy
            })
        }
    }
}

/// Instantiates the scene: plane textures are deterministic in the seed.
pub fn build_scene(cfg: &SceneConfig) -> SimScene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let planes = cfg
        .planes
        .iter()
        .map(|spec| {
            let rot = UnitQuaternion::from_euler_angles(
                spec.pitch_deg.to_radians(),
                spec.yaw_deg.to_radians(),
                0.0,
            );
            TexturedPlane {
                pose: Pose::new(rot, spec.center),
                width: spec.size.0,
                height: spec.size.1,
                texture: make_texture(spec, &mut rng),
            }
        })
        .collect();
    SimScene::new(planes, cfg.ambient)
}

/// Body twist commanded at time `t`.
pub fn twist_at(cfg: &TrajConfig, t: f64) -> Twist {
    let two_pi = std::f64::consts::TAU;
    let phases = [0.0, two_pi / 3.0, 2.0 * two_pi / 3.0];
    let mut v = cfg.v;
    let mut w = cfg.omega_deg.map(|d| d.to_radians());
    for i in 0..3 {
        v[i] += cfg.osc_v_amp[i] * (two_pi * cfg.osc_v_freq_hz * t + phases[i]).sin();
        w[i] += cfg.osc_w_amp_deg[i].to_radians() * (two_pi * cfg.osc_w_freq_hz * t + phases[i]).sin();
    }
    Twist::new(v, w)
}

/// Integrates the commanded body twist from the identity at the render rate.
pub fn build_trajectory(cfg: &TrajConfig) -> Trajectory {
    let steps = (cfg.duration_s * cfg.render_fps).round() as usize;
    let dt = 1.0 / cfg.render_fps;
    let mut traj = Trajectory::new();
    let mut pose = Pose::identity();
    traj.push(0.0, pose.clone()).unwrap();
    for k in 0..steps {
        let t = k as f64 * dt;
        let xi = twist_at(cfg, t).as_vector() * dt;
        pose = pose.compose(&se3_exp(xi));
        pose.renormalize();
        traj.push((k + 1) as f64 * dt, pose.clone()).unwrap();
    }
    traj
}

/// Renders frames and ground truth, and synthesizes the event stream.
pub fn simulate_dataset(scene_cfg: &SceneConfig, traj_cfg: &TrajConfig) -> SimDataset {
    let scene = build_scene(scene_cfg);
    let traj = build_trajectory(traj_cfg);
    let contrast = ContrastModel {
        mu: scene_cfg.mu_c,
        sigma: scene_cfg.sigma_c,
        seed: scene_cfg.seed,
        per_pixel: scene_cfg.noise_per_pixel,
    };
    let (events, metadata) =
        simulator::generate_events(&scene, &scene_cfg.cam, &traj, traj_cfg.render_fps, contrast);
    let n_frames = (traj_cfg.duration_s * traj_cfg.fps).round() as usize;
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = k as f64 / traj_cfg.fps;
        let pose = traj.interpolate(t).unwrap();
        let (intensity, depth) = simulator::render(&scene, &scene_cfg.cam, &pose);
        frames.push((t, intensity, depth));
    }
    SimDataset {
        cam: scene_cfg.cam.clone(),
        events,
        frames,
        gt_traj: traj,
        metadata,
    }
}

/// Regenerates only the event stream of a configured scene with a different
/// contrast model (sensitivity studies).
pub fn regenerate_events(
    scene_cfg: &SceneConfig,
    traj_cfg: &TrajConfig,
    contrast: ContrastModel,
) -> Vec<crate::event::Event> {
    let scene = build_scene(scene_cfg);
    let traj = build_trajectory(traj_cfg);
    simulator::generate_events(&scene, &scene_cfg.cam, &traj, traj_cfg.render_fps, contrast).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_config_parses_planes_and_camera() {
        let text = "width=64\nheight=48\nfx=60\nfy=60\ncx=32\ncy=24\nmu_c=0.5\nsigma_c=0.1\n\
                    plane0_center=0,0,4\nplane0_size=10,8\nplane0_texture=checker\n\
                    plane1_center=2,0,6\nplane1_yaw_deg=30\n";
        let cfg = parse_scene_config(text).unwrap();
        assert_eq!(cfg.cam.width, 64);
        assert_eq!(cfg.planes.len(), 2);
        assert_eq!(cfg.planes[0].texture, TextureKind::Checker);
        assert_eq!(cfg.planes[1].yaw_deg, 30.0);
        assert!(matches!(
            parse_scene_config("plane0_middle=1,2,3\n"),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn traj_config_parses_and_rejects_unknowns() {
        let cfg = parse_traj_config("duration_s=2\nv=0.1,0,0.05\nosc_w_amp_deg=1,2,0\n").unwrap();
        assert_eq!(cfg.duration_s, 2.0);
        assert_eq!(cfg.v.x, 0.1);
        assert!(matches!(
            parse_traj_config("velocity=1,0,0\n"),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn trajectory_integrates_constant_twist() {
        let cfg = TrajConfig {
            duration_s: 2.0,
            render_fps: 500.0,
            v: Vector3::new(0.3, 0.0, 0.0),
            ..TrajConfig::default()
        };
        let traj = build_trajectory(&cfg);
        let end = traj.samples().last().unwrap();
        assert!((end.1.translation - Vector3::new(0.6, 0.0, 0.0)).norm() < 1e-9);
        assert_eq!(traj.len(), 1001);
    }

    #[test]
    fn textures_are_deterministic_in_the_seed() {
        let mut cfg = SceneConfig::default();
        cfg.seed = 9;
        let a = build_scene(&cfg);
        let b = build_scene(&cfg);
        assert_eq!(a.planes[0].texture.data(), b.planes[0].texture.data());
    }
}
