//! Plain-text `key=value` pipeline configuration with typo-safe parsing.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: bad value for '{key}': {msg}")]
    BadValue {
        key: String,
        line: usize,
        msg: String,
    },
    #[error("line {line}: expected key=value")]
    Malformed { line: usize },
    #[error("{0}")]
    Io(String),
}

/// All pipeline settings. Every field maps to one configuration key; unknown
/// keys are rejected.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub events_per_packet: usize,
    pub packet_stride: usize,
    pub window_keyframes: usize,
    pub tiles: usize,
    pub select_fraction: f64,
    pub kf_visibility_drop: f64,
    pub kf_rotation_deg: f64,
    pub huber_gamma_track: f64,
    pub huber_gamma_pba: f64,
    /// Contrast sensitivity assumed when accumulating increments.
    pub contrast_c: f64,
    pub deterministic: bool,
    pub seed: u64,
    /// Gaussian event-weight width: sigma = packet size / sigma_factor;
    /// zero selects uniform weights.
    pub sigma_factor: f64,
    pub grad_floor: f64,
    pub log_offset: f64,
    pub match_radius: f64,
    pub nn_radius: f64,
    pub min_parallax_px: f64,
    pub ransac_iters: usize,
    pub ransac_thresh_px: f64,
    pub max_iters_track: usize,
    pub max_iters_pba: usize,
    /// Seed keyframe depths from the dataset's ground-truth maps instead of
    /// bootstrapping and refining them (tracker-isolation studies).
    pub use_gt_depth: bool,
    /// Std of Gaussian depth noise as a fraction of the median scene depth,
    /// applied to ground-truth maps.
    pub depth_noise_frac: f64,
    pub bootstrap_max_frames: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            events_per_packet: 20000,
            packet_stride: 10000,
            window_keyframes: 7,
            tiles: 11,
            select_fraction: 0.10,
            kf_visibility_drop: 0.25,
            kf_rotation_deg: 10.0,
            huber_gamma_track: 0.05,
            huber_gamma_pba: 0.1,
            contrast_c: 0.2,
            deterministic: true,
            seed: 0,
            sigma_factor: 6.0,
            grad_floor: 0.01,
            log_offset: 0.01,
            match_radius: 1.5,
            nn_radius: 30.0,
            min_parallax_px: 5.0,
            ransac_iters: 200,
            ransac_thresh_px: 1.5,
            max_iters_track: 50,
            max_iters_pba: 30,
            use_gt_depth: false,
            depth_noise_frac: 0.0,
            bootstrap_max_frames: 20,
        }
    }
}

impl PipelineConfig {
    /// Point budget implied by the selection settings (resource bound for
    /// keyframes).
    pub fn point_budget(&self, width: usize, height: usize) -> usize {
        (self.select_fraction * (width * height) as f64).ceil() as usize + self.tiles * self.tiles
    }
}

/// Parses `key=value` lines ('#' comments allowed) over the defaults,
/// rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = PipelineConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Malformed { line: lineno + 1 })?;
        apply_key(&mut cfg, key.trim(), value.trim(), lineno + 1)?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {}", path.display(), e)))?;
    parse_config(&text)
}

fn apply_key(cfg: &mut PipelineConfig, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
    macro_rules! parse {
        ($ty:ty) => {
            value.parse::<$ty>().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                line,
                msg: e.to_string(),
            })?
        };
    }
    match key {
        "events_per_packet" => cfg.events_per_packet = parse!(usize),
        "packet_stride" => cfg.packet_stride = parse!(usize),
        "window_keyframes" => cfg.window_keyframes = parse!(usize),
        "tiles" => cfg.tiles = parse!(usize),
        "select_fraction" => cfg.select_fraction = parse!(f64),
        "kf_visibility_drop" => cfg.kf_visibility_drop = parse!(f64),
        "kf_rotation_deg" => cfg.kf_rotation_deg = parse!(f64),
        "huber_gamma_track" => cfg.huber_gamma_track = parse!(f64),
        "huber_gamma_pba" => cfg.huber_gamma_pba = parse!(f64),
        "contrast_C" => cfg.contrast_c = parse!(f64),
        "deterministic" => cfg.deterministic = parse!(bool),
        "seed" => cfg.seed = parse!(u64),
        "sigma_factor" => cfg.sigma_factor = parse!(f64),
        "grad_floor" => cfg.grad_floor = parse!(f64),
        "log_offset" => cfg.log_offset = parse!(f64),
        "match_radius" => cfg.match_radius = parse!(f64),
        "nn_radius" => cfg.nn_radius = parse!(f64),
        "min_parallax_px" => cfg.min_parallax_px = parse!(f64),
        "ransac_iters" => cfg.ransac_iters = parse!(usize),
        "ransac_thresh_px" => cfg.ransac_thresh_px = parse!(f64),
        "max_iters_track" => cfg.max_iters_track = parse!(usize),
        "max_iters_pba" => cfg.max_iters_pba = parse!(usize),
        "use_gt_depth" => cfg.use_gt_depth = parse!(bool),
        "depth_noise_frac" => cfg.depth_noise_frac = parse!(f64),
        "bootstrap_max_frames" => cfg.bootstrap_max_frames = parse!(usize),
        _ => {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line,
            })
        }
    }
    Ok(())
}

/// Serializes every key with its current value.
pub fn config_to_string(cfg: &PipelineConfig) -> String {
    format!(
        "events_per_packet={}\npacket_stride={}\nwindow_keyframes={}\ntiles={}\n\
         select_fraction={}\nkf_visibility_drop={}\nkf_rotation_deg={}\n\
         huber_gamma_track={}\nhuber_gamma_pba={}\ncontrast_C={}\ndeterministic={}\nseed={}\n\
         sigma_factor={}\ngrad_floor={}\nlog_offset={}\nmatch_radius={}\nnn_radius={}\n\
         min_parallax_px={}\nransac_iters={}\nransac_thresh_px={}\nmax_iters_track={}\n\
         max_iters_pba={}\nuse_gt_depth={}\ndepth_noise_frac={}\nbootstrap_max_frames={}\n",
        cfg.events_per_packet,
        cfg.packet_stride,
        cfg.window_keyframes,
        cfg.tiles,
        cfg.select_fraction,
        cfg.kf_visibility_drop,
        cfg.kf_rotation_deg,
        cfg.huber_gamma_track,
        cfg.huber_gamma_pba,
        cfg.contrast_c,
        cfg.deterministic,
        cfg.seed,
        cfg.sigma_factor,
        cfg.grad_floor,
        cfg.log_offset,
        cfg.match_radius,
        cfg.nn_radius,
        cfg.min_parallax_px,
        cfg.ransac_iters,
        cfg.ransac_thresh_px,
        cfg.max_iters_track,
        cfg.max_iters_pba,
        cfg.use_gt_depth,
        cfg.depth_noise_frac,
        cfg.bootstrap_max_frames,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.events_per_packet, 20000);
        assert_eq!(cfg.packet_stride, 10000);
        assert_eq!(cfg.window_keyframes, 7);
        assert_eq!(cfg.tiles, 11);
        assert_eq!(cfg.select_fraction, 0.10);
        assert_eq!(cfg.kf_visibility_drop, 0.25);
        assert_eq!(cfg.kf_rotation_deg, 10.0);
        assert_eq!(cfg.huber_gamma_track, 0.05);
        assert_eq!(cfg.huber_gamma_pba, 0.1);
        assert_eq!(cfg.contrast_c, 0.2);
        assert!(cfg.deterministic);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = parse_config("events_per_packet=100\nevetns_per_packet=100\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { key, line } => {
                assert_eq!(key, "evetns_per_packet");
                assert_eq!(line, 2);
            }
            other => panic!("expected unknown-key error, got {other}"),
        }
    }

    #[test]
    fn parses_overrides_and_round_trips() {
        let cfg = parse_config("# comment\nevents_per_packet=4000\ncontrast_C=0.5\nuse_gt_depth=true\n").unwrap();
        assert_eq!(cfg.events_per_packet, 4000);
        assert_eq!(cfg.contrast_c, 0.5);
        assert!(cfg.use_gt_depth);
        let again = parse_config(&config_to_string(&cfg)).unwrap();
        assert_eq!(again.events_per_packet, 4000);
        assert_eq!(again.contrast_c, 0.5);
    }

    #[test]
    fn reports_bad_values_with_line_numbers() {
        let err = parse_config("tiles=eleven\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 1, .. }));
    }
}
