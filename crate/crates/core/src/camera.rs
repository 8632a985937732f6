//! Pinhole camera model with radial-tangential distortion and the plain-text
//! calibration file format.

use std::fmt;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::image::ImageF64;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("point behind camera (z = {0})")]
    PointBehindCamera(f64),
    #[error("invalid depth {0}; depth must be positive")]
    InvalidDepth(f64),
    #[error("calibration: {0}")]
    Calibration(String),
}

/// Intrinsic calibration of one camera.
///
/// Distortion follows the radial-tangential model (k1, k2, p1, p2); all-zero
/// coefficients select the pure pinhole model.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl fmt::Display for CameraIntrinsics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} fx={} fy={} cx={} cy={}",
            self.width, self.height, self.fx, self.fy, self.cx, self.cy
        )
    }
}

impl CameraIntrinsics {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
        }
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0 || self.p1 != 0.0 || self.p2 != 0.0
    }

    fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::Calibration("focal lengths must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) || !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(CameraError::Calibration(
                "principal point must lie inside the sensor".into(),
            ));
        }
        Ok(())
    }

    /// Applies the distortion model to normalized coordinates.
    pub fn distort(&self, n: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        Vector2::new(radial * x + dx, radial * y + dy)
    }

    /// Inverts the distortion model by fixed-point iteration.
    pub fn undistort(&self, d: Vector2<f64>) -> Vector2<f64> {
        if !self.has_distortion() {
            return d;
        }
        let mut n = d;
        for _ in 0..25 {
            let r2 = n.x * n.x + n.y * n.y;
            let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
            let dx = 2.0 * self.p1 * n.x * n.y + self.p2 * (r2 + 2.0 * n.x * n.x);
            let dy = self.p1 * (r2 + 2.0 * n.y * n.y) + 2.0 * self.p2 * n.x * n.y;
            n.x = (d.x - dx) / radial;
            n.y = (d.y - dy) / radial;
        }
        n
    }

    /// Projects a camera-frame point onto the (distorted) pixel plane.
    pub fn project(&self, x: Vector3<f64>) -> Result<Vector2<f64>, CameraError> {
        if x.z <= 0.0 {
            return Err(CameraError::PointBehindCamera(x.z));
        }
        let n = self.distort(Vector2::new(x.x / x.z, x.y / x.z));
        Ok(Vector2::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy))
    }

    /// Back-projects a pixel to a camera-frame point at the given depth.
    pub fn back_project(&self, u: Vector2<f64>, depth: f64) -> Result<Vector3<f64>, CameraError> {
        if depth <= 0.0 {
            return Err(CameraError::InvalidDepth(depth));
        }
        let n = self.undistort(Vector2::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy));
        Ok(Vector3::new(n.x * depth, n.y * depth, depth))
    }

    /// Pixel -> normalized coordinates of the undistorted pinhole model.
    pub fn pixel_to_normalized(&self, u: Vector2<f64>) -> Vector2<f64> {
        self.undistort(Vector2::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy))
    }

    /// Normalized coordinates -> pixel of the undistorted pinhole model.
    pub fn normalized_to_pixel(&self, n: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }

    pub fn contains_pixel(&self, u: Vector2<f64>) -> bool {
        u.x >= 0.0 && u.y >= 0.0 && u.x <= (self.width - 1) as f64 && u.y <= (self.height - 1) as f64
    }

    /// The same intrinsics with distortion removed; the frame of reference for
    /// all internal math after ingestion.
    pub fn undistorted(&self) -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
            ..self.clone()
        }
    }

    /// Moves a raw (distorted) pixel to its undistorted pinhole location.
    pub fn undistort_pixel(&self, u: Vector2<f64>) -> Vector2<f64> {
        self.normalized_to_pixel(self.pixel_to_normalized(u))
    }

    /// Resamples a raw frame onto the undistorted pinhole grid. Pixels whose
    /// source falls outside the sensor keep their border value.
    pub fn undistort_image(&self, img: &ImageF64) -> ImageF64 {
        if !self.has_distortion() {
            return img.clone();
        }
        ImageF64::from_fn(img.width(), img.height(), |x, y| {
            let n = Vector2::new(
                (x as f64 - self.cx) / self.fx,
                (y as f64 - self.cy) / self.fy,
            );
            let src = self.normalized_to_pixel(self.distort(n));
            img.sample_bilinear(src.x, src.y).unwrap_or_else(|| {
                let cx = src.x.clamp(0.0, (img.width() - 1) as f64);
                let cy = src.y.clamp(0.0, (img.height() - 1) as f64);
                img.sample_bilinear(cx, cy).unwrap()
            })
        })
    }
}

/// Parses the plain-text calibration format: one `key=value` per line,
/// required keys fx, fy, cx, cy, width, height; optional k1, k2, p1, p2.
pub fn parse_calib(text: &str) -> Result<CameraIntrinsics, CameraError> {
    let mut fx = None;
    let mut fy = None;
    let mut cx = None;
    let mut cy = None;
    let mut width = None;
    let mut height = None;
    let mut dist = [0.0f64; 4];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CameraError::Calibration(format!("line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let num = |v: &str| -> Result<f64, CameraError> {
            v.parse::<f64>()
                .map_err(|_| CameraError::Calibration(format!("line {}: bad number '{}'", lineno + 1, v)))
        };
        match key {
            "fx" => fx = Some(num(value)?),
            "fy" => fy = Some(num(value)?),
            "cx" => cx = Some(num(value)?),
            "cy" => cy = Some(num(value)?),
            "width" => width = Some(num(value)? as usize),
            "height" => height = Some(num(value)? as usize),
            "k1" => dist[0] = num(value)?,
            "k2" => dist[1] = num(value)?,
            "p1" => dist[2] = num(value)?,
            "p2" => dist[3] = num(value)?,
            other => {
                return Err(CameraError::Calibration(format!(
                    "line {}: unknown key '{}'",
                    lineno + 1,
                    other
                )))
            }
        }
    }
    let require = |opt: Option<f64>, name: &str| {
        opt.ok_or_else(|| CameraError::Calibration(format!("missing key '{}'", name)))
    };
    let cam = CameraIntrinsics {
        fx: require(fx, "fx")?,
        fy: require(fy, "fy")?,
        cx: require(cx, "cx")?,
        cy: require(cy, "cy")?,
        width: width.ok_or_else(|| CameraError::Calibration("missing key 'width'".into()))?,
        height: height.ok_or_else(|| CameraError::Calibration("missing key 'height'".into()))?,
        k1: dist[0],
        k2: dist[1],
        p1: dist[2],
        p2: dist[3],
    };
    cam.validate()?;
    Ok(cam)
}

pub fn load_calib(path: &Path) -> Result<CameraIntrinsics, CameraError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CameraError::Calibration(format!("{}: {}", path.display(), e)))?;
    parse_calib(&text)
}

pub fn calib_to_string(cam: &CameraIntrinsics) -> String {
    let mut s = format!(
        "fx={}\nfy={}\ncx={}\ncy={}\nwidth={}\nheight={}\n",
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height
    );
    if cam.has_distortion() {
        s.push_str(&format!("k1={}\nk2={}\np1={}\np2={}\n", cam.k1, cam.k2, cam.p1, cam.p2));
    }
    s
}
