//! Event generation model: measured brightness-increment images accumulated
//! from events, and increments predicted from a keyframe under a camera
//! twist.

use nalgebra::Vector2;
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::event::Event;
use crate::geometry::{feature_sensitivity, Twist};
use crate::image::ImageF64;
use crate::io::RawImage;

#[derive(Debug, Error)]
pub enum EgmError {
    #[error("event {index} at ({x},{y}) outside {width}x{height} image")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: usize,
        height: usize,
    },
    #[error("{events} events but {weights} weights")]
    WeightMismatch { events: usize, weights: usize },
    #[error("invalid inverse depth {0} at point {1}")]
    InvalidInverseDepth(f64, usize),
}

/// Per-pixel accumulated weighted polarity times contrast, with time-span
/// metadata.
#[derive(Debug, Clone)]
pub struct IncrementImage {
    pub values: ImageF64,
    pub t_start_us: u64,
    pub t_end_us: u64,
    pub n_events: usize,
    /// Contrast sensitivity used during accumulation.
    pub contrast: f64,
}

impl IncrementImage {
    pub fn span_seconds(&self) -> f64 {
        (self.t_end_us - self.t_start_us) as f64 * 1e-6
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.l2_norm()
    }
}

/// Log-brightness image of a frame.
#[derive(Debug, Clone)]
pub struct LogImage {
    pub values: ImageF64,
}

impl LogImage {
    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }
}

/// Sobel gradients of a log image; zero on the 1-pixel border.
#[derive(Debug, Clone)]
pub struct GradientImage {
    pub gx: ImageF64,
    pub gy: ImageF64,
}

impl GradientImage {
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        let gx = self.gx.get(x, y);
        let gy = self.gy.get(x, y);
        (gx * gx + gy * gy).sqrt()
    }
}

/// Gaussian weights in time index:
/// `w_k = exp(-(k - (n-1)/2)^2 / (2 sigma^2))`, maximal at the window center.
pub fn gaussian_weights(n: usize, sigma: f64) -> Vec<f64> {
    assert!(n >= 1 && sigma > 0.0);
    let center = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|k| {
            let d = k as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Accumulates weighted signed polarities into a brightness-increment image:
/// `values[u] = sum_k w_k p_k C` over events landing on pixel u. `None`
/// weights selects the uniform case `w_k = 1`.
pub fn accumulate(
    events: &[Event],
    contrast: f64,
    weights: Option<&[f64]>,
    width: usize,
    height: usize,
) -> Result<IncrementImage, EgmError> {
    if let Some(w) = weights {
        if w.len() != events.len() {
            return Err(EgmError::WeightMismatch {
                events: events.len(),
                weights: w.len(),
            });
        }
    }
    let mut values = ImageF64::zeros(width, height);
    for (index, e) in events.iter().enumerate() {
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= width || y >= height {
            return Err(EgmError::OutOfBounds {
                index,
                x: e.x,
                y: e.y,
                width,
                height,
            });
        }
        let w = weights.map_or(1.0, |w| w[index]);
        values.add(x, y, w * e.polarity as f64 * contrast);
    }
    Ok(IncrementImage {
        values,
        t_start_us: events.first().map_or(0, |e| e.t_us),
        t_end_us: events.last().map_or(0, |e| e.t_us),
        n_events: events.len(),
        contrast,
    })
}

/// Default offset added inside the log so black pixels stay bounded.
pub const LOG_OFFSET: f64 = 0.01;

/// Logarithmic normalized intensity: `L(u) = ln(I(u)/I_max + b)`.
pub fn log_image(raw: &RawImage, offset: f64) -> LogImage {
    let normalized = raw.to_normalized();
    log_image_from_normalized(&normalized, offset)
}

/// Same mapping for an intensity image already normalized to [0, 1].
pub fn log_image_from_normalized(normalized: &ImageF64, offset: f64) -> LogImage {
    let mut values = normalized.clone();
    for v in values.data_mut() {
        *v = (*v + offset).ln();
    }
    LogImage { values }
}

/// 3x3 Sobel gradients scaled by 1/8 so a unit-slope ramp yields a unit
/// gradient; the 1-pixel border is zeroed.
pub fn sobel_gradient(log: &LogImage) -> GradientImage {
    let img = &log.values;
    let (w, h) = (img.width(), img.height());
    assert!(w >= 3 && h >= 3, "Sobel needs at least a 3x3 image");
    let mut gx = ImageF64::zeros(w, h);
    let mut gy = ImageF64::zeros(w, h);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = |dx: i64, dy: i64| img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
            let sx = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
            let sy = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
            gx.set(x, y, sx / 8.0);
            gy.set(x, y, sy / 8.0);
        }
    }
    GradientImage { gx, gy }
}

/// Predicted brightness change per point:
/// `dL(u) = -grad_L(u) . diag(fx, fy) . J(u_norm, 1/rho) . twist . dt`.
///
/// `points` carries the pixel location (on the undistorted pinhole grid) and
/// the inverse depth of each selected point.
pub fn predict_increment(
    grads: &GradientImage,
    cam: &CameraIntrinsics,
    points: &[(Vector2<f64>, f64)],
    twist: &Twist,
    dt: f64,
) -> Result<Vec<f64>, EgmError> {
    let nu = twist.as_vector();
    let mut out = Vec::with_capacity(points.len());
    for (i, (u, rho)) in points.iter().enumerate() {
        if !(*rho > 0.0) {
            return Err(EgmError::InvalidInverseDepth(*rho, i));
        }
        let depth = 1.0 / rho;
        let u_norm = Vector2::new((u.x - cam.cx) / cam.fx, (u.y - cam.cy) / cam.fy);
        let j = feature_sensitivity(u_norm, depth).expect("positive depth");
        let v_norm = j * nu;
        let gx = grads
            .gx
            .sample_bilinear(u.x, u.y)
            .unwrap_or(0.0);
        let gy = grads
            .gy
            .sample_bilinear(u.x, u.y)
            .unwrap_or(0.0);
        out.push(-(gx * cam.fx * v_norm.x + gy * cam.fy * v_norm.y) * dt);
    }
    Ok(out)
}
