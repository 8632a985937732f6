//! Keyframes: candidate point selection on strong gradients, the keyframe
//! creation policy, and inverse-depth propagation between keyframes.

use std::fmt;
use std::path::Path;

use nalgebra::Vector2;
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::egm::{self, GradientImage, LogImage};
use crate::geometry::{Pose, Twist};
use crate::io::{self, DataError};

#[derive(Debug, Error)]
pub enum KeyframeError {
    #[error("depth propagation requires at least one prior keyframe with active points")]
    BootstrapRequired,
}

/// Default absolute gradient floor for candidate selection, log-units/px.
pub const DEFAULT_GRAD_FLOOR: f64 = 0.01;
/// Default pixel radius for direct inverse-depth assignment.
pub const DEFAULT_MATCH_RADIUS: f64 = 1.5;
/// Default nearest-neighbor radius beyond which the median depth is used.
pub const DEFAULT_NN_RADIUS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Active,
    Outlier,
    OutOfView,
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointStatus::Active => write!(f, "active"),
            PointStatus::Outlier => write!(f, "outlier"),
            PointStatus::OutOfView => write!(f, "out_of_view"),
        }
    }
}

/// A high-gradient pixel picked by tile-based selection; inverse depth is
/// assigned later (propagation, triangulation or a ground-truth map).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub x: u32,
    pub y: u32,
    pub grad_mag: f64,
}

/// A selected keyframe point with an inverse depth estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedPoint {
    pub x: u32,
    pub y: u32,
    /// Inverse depth in the host keyframe, 1/m. Positive while active.
    pub rho: f64,
    pub grad_mag: f64,
    pub status: PointStatus,
}

impl SelectedPoint {
    pub fn pixel(&self) -> Vector2<f64> {
        Vector2::new(self.x as f64, self.y as f64)
    }

    pub fn is_active(&self) -> bool {
        self.status == PointStatus::Active
    }
}

/// Reference frame of the local semi-dense map: log-brightness image, its
/// gradients, a pose and the selected points with inverse depths.
#[derive(Debug, Clone)]
pub struct Keyframe {
    pub id: u64,
    /// Timestamp in seconds.
    pub t: f64,
    /// `T_{world,frame}`.
    pub pose: Pose,
    pub log: LogImage,
    pub grads: GradientImage,
    pub points: Vec<SelectedPoint>,
}

impl Keyframe {
    pub fn active_points(&self) -> impl Iterator<Item = &SelectedPoint> {
        self.points.iter().filter(|p| p.is_active())
    }

    pub fn active_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_active()).count()
    }

    pub fn median_depth(&self) -> Option<f64> {
        let mut depths: Vec<f64> = self.active_points().map(|p| 1.0 / p.rho).collect();
        if depths.is_empty() {
            return None;
        }
        depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(depths[depths.len() / 2])
    }

    pub fn median_inverse_depth(&self) -> Option<f64> {
        let mut rhos: Vec<f64> = self.active_points().map(|p| p.rho).collect();
        if rhos.is_empty() {
            return None;
        }
        rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(rhos[rhos.len() / 2])
    }

    /// Predicted brightness change at the active points for a camera twist.
    pub fn predict_increment(
        &self,
        cam: &CameraIntrinsics,
        twist: &Twist,
        dt: f64,
    ) -> Result<Vec<f64>, egm::EgmError> {
        let pts: Vec<(Vector2<f64>, f64)> =
            self.active_points().map(|p| (p.pixel(), p.rho)).collect();
        egm::predict_increment(&self.grads, cam, &pts, twist, dt)
    }
}

/// Tile-based candidate selection: the image is divided into `tiles x tiles`
/// rectangles and the strongest-gradient pixels above `grad_floor` are taken
/// per tile, budgeted at `fraction` of the tile area.
pub fn select_candidates(
    log: &LogImage,
    grads: &GradientImage,
    tiles: usize,
    fraction: f64,
    grad_floor: f64,
) -> Vec<Candidate> {
    assert!(tiles >= 1 && fraction > 0.0 && fraction <= 1.0);
    let (w, h) = (log.width(), log.height());
    let mut out = Vec::new();
    // Keep a 2-px margin so every selected point has full interpolation
    // support.
    let margin = 2usize;
    for ty in 0..tiles {
        let y0 = (ty * h) / tiles;
        let y1 = ((ty + 1) * h) / tiles;
        for tx in 0..tiles {
            let x0 = (tx * w) / tiles;
            let x1 = ((tx + 1) * w) / tiles;
            let area = (x1 - x0) * (y1 - y0);
            let budget = (fraction * area as f64).ceil() as usize;
            let mut tile: Vec<Candidate> = Vec::new();
            for y in y0.max(margin)..y1.min(h - margin) {
                for x in x0.max(margin)..x1.min(w - margin) {
                    let m = grads.magnitude(x, y);
                    if m > grad_floor {
                        tile.push(Candidate {
                            x: x as u32,
                            y: y as u32,
                            grad_mag: m,
                        });
                    }
                }
            }
            tile.sort_by(|a, b| {
                b.grad_mag
                    .partial_cmp(&a.grad_mag)
                    .unwrap()
                    .then_with(|| (a.y, a.x).cmp(&(b.y, b.x)))
            });
            tile.truncate(budget);
            out.extend(tile);
        }
    }
    out.sort_by_key(|c| (c.y, c.x));
    out
}

/// Keyframe creation policy: trigger when the visible fraction of the current
/// keyframe's points drops below `1 - drop_threshold`, or when the relative
/// rotation exceeds `rot_threshold_rad`.
pub fn should_create_keyframe(
    visible_fraction: f64,
    rel_rotation_rad: f64,
    drop_threshold: f64,
    rot_threshold_rad: f64,
) -> bool {
    visible_fraction < 1.0 - drop_threshold || rel_rotation_rad > rot_threshold_rad
}

/// Transfers an inverse-depth estimate into another frame:
/// `X_n = T_nf * backproject(u, 1/rho)`, returning the new pixel and
/// `1 / X_n.z`. `None` when the point leaves the view.
pub fn transform_inverse_depth(
    rho: f64,
    u: Vector2<f64>,
    t_nf: &Pose,
    cam: &CameraIntrinsics,
) -> Option<(Vector2<f64>, f64)> {
    assert!(rho > 0.0);
    let x_f = cam.back_project(u, 1.0 / rho).ok()?;
    let x_n = t_nf.apply(x_f);
    if x_n.z <= 0.0 {
        return None;
    }
    let u_new = cam.project(x_n).ok()?;
    if !cam.contains_pixel(u_new) {
        return None;
    }
    Some((u_new, 1.0 / x_n.z))
}

/// Populates inverse depths of `candidates` in a new frame from the active
/// points of past keyframes.
///
/// Old points projecting within `match_radius` px of a candidate assign their
/// transformed inverse depth directly; remaining candidates copy the value of
/// the nearest assigned pixel (k-d tree lookup), falling back to the median
/// assigned inverse depth beyond `nn_radius`.
pub fn propagate_depth(
    old_kfs: &[&Keyframe],
    new_pose: &Pose,
    candidates: &[Candidate],
    cam: &CameraIntrinsics,
    match_radius: f64,
    nn_radius: f64,
) -> Result<Vec<SelectedPoint>, KeyframeError> {
    if old_kfs.iter().all(|kf| kf.active_count() == 0) {
        return Err(KeyframeError::BootstrapRequired);
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    // Transform all old active points into the new frame.
    let mut projected: Vec<(Vector2<f64>, f64)> = Vec::new();
    for kf in old_kfs {
        let t_nf = new_pose.inverse().compose(&kf.pose);
        for p in kf.active_points() {
            if let Some((u_new, rho_new)) = transform_inverse_depth(p.rho, p.pixel(), &t_nf, cam) {
                projected.push((u_new, rho_new));
            }
        }
    }
    if projected.is_empty() {
        return Err(KeyframeError::BootstrapRequired);
    }

    // Direct assignment: nearest projected point within match_radius.
    let candidate_px: Vec<[f64; 2]> = candidates.iter().map(|c| [c.x as f64, c.y as f64]).collect();
    let candidate_tree = KdTree2::build(&candidate_px);
    let mut assigned: Vec<Option<(f64, f64)>> = vec![None; candidates.len()]; // (dist, rho)
    for (u, rho) in &projected {
        if let Some((idx, d2)) = candidate_tree.nearest([u.x, u.y]) {
            let d = d2.sqrt();
            if d <= match_radius {
                match assigned[idx] {
                    Some((best, _)) if best <= d => {}
                    _ => assigned[idx] = Some((d, *rho)),
                }
            }
        }
    }

    let mut assigned_px: Vec<[f64; 2]> = Vec::new();
    let mut assigned_rho: Vec<f64> = Vec::new();
    for (i, a) in assigned.iter().enumerate() {
        if let Some((_, rho)) = a {
            assigned_px.push(candidate_px[i]);
            assigned_rho.push(*rho);
        }
    }
    // With no direct hits, seed from the projected cloud itself so the new
    // map stays finite.
    if assigned_px.is_empty() {
        for (u, rho) in &projected {
            assigned_px.push([u.x, u.y]);
            assigned_rho.push(*rho);
        }
    }
    let mut sorted = assigned_rho.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_rho = sorted[sorted.len() / 2];
    let assigned_tree = KdTree2::build(&assigned_px);

    let points = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let rho = match assigned[i] {
                Some((_, rho)) => rho,
                None => {
                    let (idx, d2) = assigned_tree.nearest([c.x as f64, c.y as f64]).unwrap();
                    if d2.sqrt() <= nn_radius {
                        assigned_rho[idx]
                    } else {
                        median_rho
                    }
                }
            };
            SelectedPoint {
                x: c.x,
                y: c.y,
                rho,
                grad_mag: c.grad_mag,
                status: PointStatus::Active,
            }
        })
        .collect();
    Ok(points)
}

/// Writes the per-keyframe point table `x,y,inverse_depth,status`.
pub fn write_points_csv(path: &Path, kf: &Keyframe) -> Result<(), DataError> {
    let mut text = String::from("x,y,inverse_depth,status\n");
    for p in &kf.points {
        text.push_str(&format!("{},{},{:.9},{}\n", p.x, p.y, p.rho, p.status));
    }
    std::fs::write(path, text).map_err(|e| DataError::io(path, e))
}

/// Writes the semi-dense inverse-depth map as a 16-bit PGM scaled to
/// [0, 65535] over `[rho_min, rho_max]`; pixels without a point are 0.
pub fn write_depth_pgm(
    path: &Path,
    kf: &Keyframe,
    rho_min: f64,
    rho_max: f64,
) -> Result<(), DataError> {
    let (w, h) = (kf.log.width(), kf.log.height());
    let mut data = vec![0u16; w * h];
    let span = (rho_max - rho_min).max(1e-12);
    for p in kf.active_points() {
        let v = ((p.rho - rho_min) / span).clamp(0.0, 1.0);
        data[p.y as usize * w + p.x as usize] = (v * 65535.0).round() as u16;
    }
    io::write_pgm_u16(path, w, h, &data)
}

// ---------------------------------------------------------------------------
// 2D k-d tree for pixel-space nearest-neighbor queries
// ---------------------------------------------------------------------------

/// Static 2D k-d tree over pixel coordinates.
pub struct KdTree2 {
    // (point, original index), reordered in place; nodes split alternately on
    // x and y at the median.
    items: Vec<([f64; 2], usize)>,
}

impl KdTree2 {
    pub fn build(points: &[[f64; 2]]) -> Self {
        let mut items: Vec<([f64; 2], usize)> =
            points.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        if !items.is_empty() {
            build_recursive(&mut items, 0);
        }
        Self { items }
    }

    /// Returns `(original index, squared distance)` of the nearest point.
    pub fn nearest(&self, query: [f64; 2]) -> Option<(usize, f64)> {
        if self.items.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        nearest_recursive(&self.items, 0, query, &mut best);
        Some(best)
    }
}

fn build_recursive(items: &mut [([f64; 2], usize)], axis: usize) {
    if items.len() <= 1 {
        return;
    }
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| {
        a.0[axis]
            .partial_cmp(&b.0[axis])
            .unwrap()
            .then_with(|| a.1.cmp(&b.1))
    });
    let (left, right) = items.split_at_mut(mid);
    build_recursive(left, (axis + 1) % 2);
    build_recursive(&mut right[1..], (axis + 1) % 2);
}

fn nearest_recursive(
    items: &[([f64; 2], usize)],
    axis: usize,
    query: [f64; 2],
    best: &mut (usize, f64),
) {
    if items.is_empty() {
        return;
    }
    let mid = items.len() / 2;
    let (point, index) = items[mid];
    let dx = point[0] - query[0];
    let dy = point[1] - query[1];
    let d2 = dx * dx + dy * dy;
    if d2 < best.1 || (d2 == best.1 && index < best.0) {
        *best = (index, d2);
    }
    let diff = query[axis] - point[axis];
    let (near, far) = if diff < 0.0 {
        (&items[..mid], &items[mid + 1..])
    } else {
        (&items[mid + 1..], &items[..mid])
    };
    nearest_recursive(near, (axis + 1) % 2, query, best);
    if diff * diff <= best.1 {
        nearest_recursive(far, (axis + 1) % 2, query, best);
    }
}
