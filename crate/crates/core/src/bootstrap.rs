//! Two-view initialization from frames: patch correspondences, essential
//! matrix estimation with RANSAC, midpoint triangulation and one bundle
//! adjustment pass over the initial window.

use nalgebra::{Matrix2, Matrix3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::egm::{sobel_gradient, GradientImage, LogImage};
use crate::geometry::Pose;
use crate::keyframes::{self, Candidate, Keyframe, PointStatus, SelectedPoint};
use crate::pba::{self, PbaConfig, SlidingWindow};

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("only {0} correspondences survived matching, need at least 8")]
    InsufficientMatches(usize),
    #[error("degenerate two-view geometry: {0}")]
    DegenerateGeometry(String),
    #[error("no frame pair with median displacement above {0} px")]
    InsufficientParallax(f64),
    #[error(transparent)]
    Pba(#[from] pba::PbaError),
}

/// A pixel correspondence between two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub u_a: Vector2<f64>,
    pub u_b: Vector2<f64>,
    pub weight: f64,
}

/// Settings for [`initialize`].
#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    /// Median correspondence displacement required before a pair is accepted.
    pub min_parallax_px: f64,
    pub ransac_iterations: usize,
    /// Sampson threshold, pixels.
    pub ransac_threshold_px: f64,
    pub seed: u64,
    /// Strongest-gradient seeds used for matching.
    pub max_seeds: usize,
    pub tiles: usize,
    pub select_fraction: f64,
    pub grad_floor: f64,
    pub match_radius: f64,
    pub nn_radius: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            min_parallax_px: 5.0,
            ransac_iterations: 200,
            ransac_threshold_px: 1.5,
            seed: 0,
            max_seeds: 1200,
            tiles: 11,
            select_fraction: 0.10,
            grad_floor: keyframes::DEFAULT_GRAD_FLOOR,
            match_radius: keyframes::DEFAULT_MATCH_RADIUS,
            nn_radius: keyframes::DEFAULT_NN_RADIUS,
        }
    }
}

const PATCH_HALF: i64 = 4; // 9x9 alignment patch
const KLT_MAX_ITERS: usize = 30;
const KLT_EPS: f64 = 0.03;
// near the minimum the bilinear-sampled gradients make Gauss-Newton jitter;
// a track whose final step is this small is still usable and the
// forward-backward check arbitrates
const KLT_ACCEPT_LAST_STEP: f64 = 0.2;
const FB_CHECK_PX: f64 = 0.5;

/// Tracks one seed from `a` into `b` by translational Gauss-Newton patch
/// alignment. Returns the matched position in `b`.
fn klt_track(
    a: &LogImage,
    b: &LogImage,
    gb: &GradientImage,
    seed: Vector2<f64>,
    init: Vector2<f64>,
) -> Option<Vector2<f64>> {
    let (w, h) = (a.width() as f64, a.height() as f64);
    let inside = |p: Vector2<f64>| {
        p.x - PATCH_HALF as f64 >= 1.0
            && p.y - PATCH_HALF as f64 >= 1.0
            && p.x + PATCH_HALF as f64 <= w - 2.0
            && p.y + PATCH_HALF as f64 <= h - 2.0
    };
    if !inside(seed) {
        return None;
    }
    let mut pos = init;
    let mut last_step = f64::INFINITY;
    for _ in 0..KLT_MAX_ITERS {
        if !inside(pos) {
            return None;
        }
        let mut hess = Matrix2::<f64>::zeros();
        let mut rhs = Vector2::<f64>::zeros();
        for oy in -PATCH_HALF..=PATCH_HALF {
            for ox in -PATCH_HALF..=PATCH_HALF {
                // the seed may be fractional (backward pass of the
                // forward-backward check)
                let pa = a
                    .values
                    .sample_bilinear(seed.x + ox as f64, seed.y + oy as f64)?;
                let bx = pos.x + ox as f64;
                let by = pos.y + oy as f64;
                let pb = b.values.sample_bilinear(bx, by)?;
                let gx = gb.gx.sample_bilinear(bx, by)?;
                let gy = gb.gy.sample_bilinear(bx, by)?;
                let r = pb - pa;
                hess[(0, 0)] += gx * gx;
                hess[(0, 1)] += gx * gy;
                hess[(1, 1)] += gy * gy;
                rhs.x -= gx * r;
                rhs.y -= gy * r;
            }
        }
        hess[(1, 0)] = hess[(0, 1)];
        // flat patches have a (near-)singular normal matrix
        if hess.determinant().abs() < 1e-12 {
            return None;
        }
        let delta = hess.try_inverse()? * rhs;
        pos += delta;
        last_step = delta.norm();
        if last_step < KLT_EPS {
            return Some(pos);
        }
    }
    (last_step < KLT_ACCEPT_LAST_STEP && inside(pos)).then_some(pos)
}

/// 2x2 box downsample used for coarse-to-fine alignment.
fn half_resolution(img: &crate::image::ImageF64) -> crate::image::ImageF64 {
    let (w, h) = (img.width() / 2, img.height() / 2);
    crate::image::ImageF64::from_fn(w, h, |x, y| {
        0.25 * (img.get(2 * x, 2 * y)
            + img.get(2 * x + 1, 2 * y)
            + img.get(2 * x, 2 * y + 1)
            + img.get(2 * x + 1, 2 * y + 1))
    })
}

/// Image and gradients at each pyramid level (finest first).
struct MatchPyramid {
    levels: Vec<(LogImage, GradientImage)>,
}

impl MatchPyramid {
    fn build(log: &LogImage, n_levels: usize) -> Self {
        let mut levels = Vec::with_capacity(n_levels);
        let mut current = log.values.clone();
        for k in 0..n_levels {
            let lvl = LogImage {
                values: current.clone(),
            };
            let grads = sobel_gradient(&lvl);
            levels.push((lvl, grads));
            if k + 1 < n_levels && current.width() >= 32 && current.height() >= 32 {
                current = half_resolution(&current);
            } else {
                break;
            }
        }
        Self { levels }
    }
}

/// Coarse-to-fine translational track of one seed.
fn klt_track_pyramid(
    pa: &MatchPyramid,
    pb: &MatchPyramid,
    seed: Vector2<f64>,
    init: Vector2<f64>,
) -> Option<Vector2<f64>> {
    let n = pa.levels.len().min(pb.levels.len());
    let top_scale = (1 << (n - 1)) as f64;
    let mut pos = init / top_scale;
    for k in (0..n).rev() {
        let scale = (1 << k) as f64;
        let (ref a, _) = pa.levels[k];
        let (ref b, ref gb) = pb.levels[k];
        match klt_track(a, b, gb, seed / scale, pos) {
            Some(refined) => pos = refined,
            // coarse levels are advisory (fine texture may vanish there);
            // only the finest level must converge
            None if k > 0 => {}
            None => return None,
        }
        if k > 0 {
            pos *= 2.0;
        }
    }
    Some(pos)
}

const MATCH_PYRAMID_LEVELS: usize = 3;

/// Matches seed points from `frame_a` into `frame_b` with 9x9 translational
/// patch alignment over a 3-level pyramid; matches failing a 0.5 px
/// forward-backward check are dropped. The optional warm starts carry track
/// positions when chaining through intermediate frames.
pub fn match_points_from(
    frame_a: &LogImage,
    frame_b: &LogImage,
    seeds: &[Candidate],
    inits: Option<&[Option<Vector2<f64>>]>,
) -> Result<Vec<(usize, Correspondence)>, BootstrapError> {
    assert_eq!(
        (frame_a.width(), frame_a.height()),
        (frame_b.width(), frame_b.height()),
        "frames must share a size"
    );
    let pa = MatchPyramid::build(frame_a, MATCH_PYRAMID_LEVELS);
    let pb = MatchPyramid::build(frame_b, MATCH_PYRAMID_LEVELS);
    let mut out = Vec::new();
    for (i, s) in seeds.iter().enumerate() {
        let u_a = Vector2::new(s.x as f64, s.y as f64);
        let init = match inits {
            Some(inits) => match inits[i] {
                Some(p) => p,
                None => continue,
            },
            None => u_a,
        };
        let Some(u_b) = klt_track_pyramid(&pa, &pb, u_a, init) else {
            continue;
        };
        let Some(back) = klt_track_pyramid(&pb, &pa, u_b, u_a) else {
            continue;
        };
        if (back - u_a).norm() > FB_CHECK_PX {
            continue;
        }
        out.push((
            i,
            Correspondence {
                u_a,
                u_b,
                weight: 1.0,
            },
        ));
    }
    if out.len() < 8 {
        return Err(BootstrapError::InsufficientMatches(out.len()));
    }
    Ok(out)
}

/// [`match_points_from`] without warm starts.
pub fn match_points(
    frame_a: &LogImage,
    frame_b: &LogImage,
    seeds: &[Candidate],
) -> Result<Vec<Correspondence>, BootstrapError> {
    Ok(match_points_from(frame_a, frame_b, seeds, None)?
        .into_iter()
        .map(|(_, c)| c)
        .collect())
}

type Ray = Vector2<f64>; // normalized image coordinates

fn to_rays(corrs: &[Correspondence], cam: &CameraIntrinsics) -> Vec<(Ray, Ray)> {
    corrs
        .iter()
        .map(|c| (cam.pixel_to_normalized(c.u_a), cam.pixel_to_normalized(c.u_b)))
        .collect()
}

/// Least-squares essential matrix from >= 8 ray pairs, with Hartley
/// normalization and projection onto the essential manifold.
fn solve_essential(rays: &[(Ray, Ray)]) -> Option<Matrix3<f64>> {
    solve_essential_weighted(rays, None)
}

/// Huber-reweighted essential refit: grazing outliers that slip inside the
/// RANSAC threshold get downweighted instead of steering the fit.
fn solve_essential_irls(rays: &[(Ray, Ray)], kernel: f64, iterations: usize) -> Option<Matrix3<f64>> {
    let mut e = solve_essential(rays)?;
    let mut weights = vec![1.0; rays.len()];
    for _ in 0..iterations {
        for (w, (xa, xb)) in weights.iter_mut().zip(rays) {
            let d = sampson_distance(&e, *xa, *xb);
            *w = if d <= kernel { 1.0 } else { kernel / d };
        }
        e = solve_essential_weighted(rays, Some(&weights))?;
    }
    Some(e)
}

fn solve_essential_weighted(rays: &[(Ray, Ray)], weights: Option<&[f64]>) -> Option<Matrix3<f64>> {
    let n = rays.len();
    if n < 8 {
        return None;
    }
    let normalize = |pts: Vec<Vector2<f64>>| -> (Matrix3<f64>, Vec<Vector2<f64>>) {
        let centroid = pts.iter().sum::<Vector2<f64>>() / n as f64;
        let mean_dist = pts.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n as f64;
        let s = if mean_dist > 1e-12 {
            (2.0f64).sqrt() / mean_dist
        } else {
            1.0
        };
        let t = Matrix3::new(s, 0.0, -s * centroid.x, 0.0, s, -s * centroid.y, 0.0, 0.0, 1.0);
        let mapped = pts.iter().map(|p| (p - centroid) * s).collect();
        (t, mapped)
    };
    let (ta, pa) = normalize(rays.iter().map(|r| r.0).collect());
    let (tb, pb) = normalize(rays.iter().map(|r| r.1).collect());

    // normal matrix of the epipolar constraint rows; the essential vector is
    // the eigenvector of the smallest eigenvalue
    let mut ata = nalgebra::SMatrix::<f64, 9, 9>::zeros();
    for (k, (xa, xb)) in pa.iter().zip(&pb).enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        let row = [
            xb.x * xa.x,
            xb.x * xa.y,
            xb.x,
            xb.y * xa.x,
            xb.y * xa.y,
            xb.y,
            xa.x,
            xa.y,
            1.0,
        ];
        for i in 0..9 {
            for j in 0..9 {
                ata[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(ata);
    let mut min_idx = 0;
    for k in 1..9 {
        if eig.eigenvalues[k] < eig.eigenvalues[min_idx] {
            min_idx = k;
        }
    }
    let e_vec = eig.eigenvectors.column(min_idx);
    let e_norm = Matrix3::new(
        e_vec[0], e_vec[1], e_vec[2], e_vec[3], e_vec[4], e_vec[5], e_vec[6], e_vec[7], e_vec[8],
    );
    let e = tb.transpose() * e_norm * ta;

    // project onto the essential manifold: singular values (1, 1, 0)
    let mut svd3 = nalgebra::SVD::new(e, true, true);
    svd3.sort_by_singular_values();
    let u = svd3.u?;
    let v_t = svd3.v_t?;
    Some(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * v_t)
}

/// First-order (Sampson) distance of a ray pair to the epipolar constraint.
fn sampson_distance(e: &Matrix3<f64>, xa: Ray, xb: Ray) -> f64 {
    let pa = Vector3::new(xa.x, xa.y, 1.0);
    let pb = Vector3::new(xb.x, xb.y, 1.0);
    let ea = e * pa;
    let etb = e.transpose() * pb;
    let num = pb.dot(&ea);
    let den = ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (num * num / den).sqrt()
}

/// Midpoint triangulation of one ray pair given `T_ba`. Returns the depth in
/// frame `a`, rejecting near-parallel rays and points behind either camera.
fn triangulate_ray(
    xa: Ray,
    xb: Ray,
    t_ba: &Pose,
    min_angle_rad: f64,
) -> Option<f64> {
    let da = Vector3::new(xa.x, xa.y, 1.0).normalize();
    let t_ab = t_ba.inverse();
    let ob = t_ab.translation;
    let db = (t_ab.rotation * Vector3::new(xb.x, xb.y, 1.0)).normalize();
    if da.dot(&db).abs() > min_angle_rad.cos() {
        return None; // rays within the parallel-rejection cone
    }
    // closest points on the two rays: o_a + s da, o_b + t db
    let r = -ob;
    let a = 1.0;
    let b = da.dot(&db);
    let c = 1.0;
    let d = da.dot(&r);
    let e = db.dot(&r);
    let denom = a * c - b * b;
    if denom.abs() < 1e-15 {
        return None;
    }
    let s = (b * e - c * d) / denom;
    let t = (a * e - b * d) / denom;
    let pa = da * s;
    let pb = ob + db * t;
    let x = (pa + pb) * 0.5;
    if x.z <= 0.0 {
        return None;
    }
    if t_ba.apply(x).z <= 0.0 {
        return None;
    }
    Some(x.z)
}

/// Normalized 8-point algorithm on calibrated rays inside a RANSAC loop.
/// Returns the cheirality-positive relative pose `T_ba` with unit translation
/// and the inlier mask.
pub fn eight_point(
    corrs: &[Correspondence],
    cam: &CameraIntrinsics,
    cfg: &BootstrapConfig,
) -> Result<(Pose, Vec<bool>), BootstrapError> {
    if corrs.len() < 8 {
        return Err(BootstrapError::InsufficientMatches(corrs.len()));
    }
    let rays = to_rays(corrs, cam);
    let displacements: Vec<f64> = corrs.iter().map(|c| (c.u_b - c.u_a).norm()).collect();
    let mut sorted = displacements.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[sorted.len() / 2] < 0.25 {
        return Err(BootstrapError::DegenerateGeometry(
            "zero-baseline correspondences".into(),
        ));
    }

    let thresh = cfg.ransac_threshold_px / (0.5 * (cam.fx + cam.fy));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Matrix3<f64>, Vec<bool>, usize)> = None;
    for _ in 0..cfg.ransac_iterations {
        let mut sample: Vec<usize> = Vec::with_capacity(8);
        while sample.len() < 8 {
            let k = rng.random_range(0..rays.len());
            if !sample.contains(&k) {
                sample.push(k);
            }
        }
        let subset: Vec<(Ray, Ray)> = sample.iter().map(|&k| rays[k]).collect();
        let Some(e) = solve_essential(&subset) else {
            continue;
        };
        let mask: Vec<bool> = rays
            .iter()
            .map(|(xa, xb)| sampson_distance(&e, *xa, *xb) < thresh)
            .collect();
        let count = mask.iter().filter(|&&m| m).count();
        if best.as_ref().map_or(true, |(_, _, c)| count > *c) {
            best = Some((e, mask, count));
        }
    }
    let (_, mut mask, count) = best.ok_or_else(|| {
        BootstrapError::DegenerateGeometry("essential matrix estimation failed".into())
    })?;
    if count < 8 {
        return Err(BootstrapError::DegenerateGeometry(format!(
            "only {count} RANSAC inliers"
        )));
    }
    // robust refit on the RANSAC inliers, then one reclassification pass
    let kernel = 0.02 * thresh;
    for _ in 0..2 {
        let inlier_rays: Vec<(Ray, Ray)> = rays
            .iter()
            .zip(&mask)
            .filter_map(|(r, &m)| m.then_some(*r))
            .collect();
        let e = solve_essential_irls(&inlier_rays, kernel, 15)
            .ok_or_else(|| BootstrapError::DegenerateGeometry("refit failed".into()))?;
        let next: Vec<bool> = rays
            .iter()
            .map(|(xa, xb)| sampson_distance(&e, *xa, *xb) < thresh)
            .collect();
        if next.iter().filter(|&&m| m).count() >= 8 {
            mask = next;
        }
    }
    let count = mask.iter().filter(|&&m| m).count();
    let inlier_rays: Vec<(Ray, Ray)> = rays
        .iter()
        .zip(&mask)
        .filter_map(|(r, &m)| m.then_some(*r))
        .collect();
    let e = solve_essential_irls(&inlier_rays, kernel, 15)
        .ok_or_else(|| BootstrapError::DegenerateGeometry("refit failed".into()))?;

    // decompose into the four (R, t) candidates and pick by cheirality
    let mut svd = nalgebra::SVD::new(e, true, true);
    svd.sort_by_singular_values();
    let mut u = svd
        .u
        .ok_or_else(|| BootstrapError::DegenerateGeometry("SVD failed".into()))?;
    let mut v_t = svd
        .v_t
        .ok_or_else(|| BootstrapError::DegenerateGeometry("SVD failed".into()))?;
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if v_t.determinant() < 0.0 {
        v_t.row_mut(2).neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t = u.column(2).into_owned();
    let min_angle = 0.1f64.to_radians();
    let mut best_pose: Option<(Pose, usize)> = None;
    for r in [r1, r2] {
        for sign in [1.0, -1.0] {
            let pose = Pose::new(
                UnitQuaternion::from_matrix(&r),
                t * sign,
            );
            let positive = inlier_rays
                .iter()
                .filter(|(xa, xb)| triangulate_ray(*xa, *xb, &pose, min_angle).is_some())
                .count();
            if best_pose.as_ref().map_or(true, |(_, c)| positive > *c) {
                best_pose = Some((pose, positive));
            }
        }
    }
    let (pose, positive) = best_pose.unwrap();
    if positive * 2 < count {
        return Err(BootstrapError::DegenerateGeometry(format!(
            "cheirality check kept {positive} of {count} inliers"
        )));
    }
    Ok((pose, mask))
}

/// Midpoint triangulation of correspondences under `T_ba`; inverse depths in
/// frame `a`, with per-point rejection of negative depths and near-parallel
/// rays.
pub fn triangulate(
    corrs: &[Correspondence],
    t_ba: &Pose,
    cam: &CameraIntrinsics,
) -> Vec<Option<f64>> {
    let min_angle = 0.1f64.to_radians();
    to_rays(corrs, cam)
        .iter()
        .map(|(xa, xb)| triangulate_ray(*xa, *xb, t_ba, min_angle).map(|d| 1.0 / d))
        .collect()
}

/// A frame handed to the bootstrapper.
#[derive(Debug, Clone)]
pub struct BootstrapFrame {
    pub t: f64,
    pub log: LogImage,
    pub grads: GradientImage,
}

/// Result of a successful initialization.
pub struct BootstrapResult {
    pub window: SlidingWindow,
    /// Indices of the frames that became the first two keyframes.
    pub frame_a: usize,
    pub frame_b: usize,
    pub inliers: usize,
}

/// Initializes the first two-view map: picks a frame pair with enough
/// parallax (skipping frames), estimates the relative pose with the 8-point
/// algorithm, triangulates inverse depths normalized so the first keyframe's
/// median inverse depth is 1, and runs one bundle adjustment pass.
pub fn initialize(
    frames: &[BootstrapFrame],
    cam: &CameraIntrinsics,
    window_capacity: usize,
    cfg: &BootstrapConfig,
    pba_cfg: &PbaConfig,
) -> Result<BootstrapResult, BootstrapError> {
    assert!(frames.len() >= 2, "need at least two frames");
    let mut seeds = keyframes::select_candidates(
        &frames[0].log,
        &frames[0].grads,
        cfg.tiles,
        cfg.select_fraction,
        cfg.grad_floor,
    );
    seeds.sort_by(|a, b| b.grad_mag.partial_cmp(&a.grad_mag).unwrap().then((a.y, a.x).cmp(&(b.y, b.x))));
    seeds.truncate(cfg.max_seeds);
    seeds.sort_by_key(|c| (c.y, c.x));

    // chain patch tracking through the intermediate frames so displacements
    // beyond the 9x9 basin stay trackable
    let mut warm: Vec<Option<Vector2<f64>>> = seeds
        .iter()
        .map(|s| Some(Vector2::new(s.x as f64, s.y as f64)))
        .collect();
    let mut chosen: Option<(usize, Vec<Correspondence>)> = None;
    for j in 1..frames.len() {
        let matched = match match_points_from(&frames[0].log, &frames[j].log, &seeds, Some(&warm)) {
            Ok(m) => m,
            Err(BootstrapError::InsufficientMatches(_)) => break,
            Err(e) => return Err(e),
        };
        let mut next_warm: Vec<Option<Vector2<f64>>> = vec![None; seeds.len()];
        for (i, c) in &matched {
            next_warm[*i] = Some(c.u_b);
        }
        warm = next_warm;
        let corrs: Vec<Correspondence> = matched.into_iter().map(|(_, c)| c).collect();
        let mut disp: Vec<f64> = corrs.iter().map(|c| (c.u_b - c.u_a).norm()).collect();
        disp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if disp[disp.len() / 2] > cfg.min_parallax_px {
            chosen = Some((j, corrs));
            break;
        }
    }
    let (frame_b, corrs) =
        chosen.ok_or(BootstrapError::InsufficientParallax(cfg.min_parallax_px))?;

    let (t_ba, mask) = eight_point(&corrs, cam, cfg)?;
    let inlier_corrs: Vec<Correspondence> = corrs
        .iter()
        .zip(&mask)
        .filter_map(|(c, &m)| m.then_some(*c))
        .collect();
    let rhos = triangulate(&inlier_corrs, &t_ba, cam);

    let mut points = Vec::new();
    let mut rho_values = Vec::new();
    for (c, rho) in inlier_corrs.iter().zip(&rhos) {
        if let Some(rho) = rho {
            points.push(SelectedPoint {
                x: c.u_a.x.round() as u32,
                y: c.u_a.y.round() as u32,
                rho: *rho,
                grad_mag: 0.0,
                status: PointStatus::Active,
            });
            rho_values.push(*rho);
        }
    }
    if points.len() < 8 {
        return Err(BootstrapError::DegenerateGeometry(format!(
            "only {} triangulated points",
            points.len()
        )));
    }
    // arbitrary monocular scale: median inverse depth of keyframe 0 becomes 1
    rho_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = rho_values[rho_values.len() / 2];
    for p in &mut points {
        p.rho /= scale;
    }
    let mut t_wb = t_ba.inverse();
    t_wb.translation *= scale;

    let kf0 = Keyframe {
        id: 0,
        t: frames[0].t,
        pose: Pose::identity(),
        log: frames[0].log.clone(),
        grads: frames[0].grads.clone(),
        points,
    };
    let candidates_b = keyframes::select_candidates(
        &frames[frame_b].log,
        &frames[frame_b].grads,
        cfg.tiles,
        cfg.select_fraction,
        cfg.grad_floor,
    );
    let points_b = keyframes::propagate_depth(
        &[&kf0],
        &t_wb,
        &candidates_b,
        cam,
        cfg.match_radius,
        cfg.nn_radius,
    )
    .map_err(|_| BootstrapError::DegenerateGeometry("no propagated depths".into()))?;
    let kf1 = Keyframe {
        id: 1,
        t: frames[frame_b].t,
        pose: t_wb,
        log: frames[frame_b].log.clone(),
        grads: frames[frame_b].grads.clone(),
        points: points_b,
    };

    let mut window = SlidingWindow::new(window_capacity);
    window.slide(kf0);
    window.slide(kf1);
    pba::optimize_window(&mut window, cam, pba_cfg)?;
    pba::renormalize_scale(&mut window, 1.0);

    Ok(BootstrapResult {
        window,
        frame_a: 0,
        frame_b,
        inliers: inlier_corrs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egm::log_image_from_normalized;
    use crate::image::ImageF64;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn smooth_image(seed: u64, w: usize, h: usize) -> ImageF64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = 10usize;
        let coarse: Vec<f64> = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random_range(0.1..0.9))
            .collect();
        ImageF64::from_fn(w, h, |x, y| {
            let gx = x as f64 / w as f64 * cells as f64;
            let gy = y as f64 / h as f64 * cells as f64;
            let (ix, iy) = ((gx as usize).min(cells - 1), (gy as usize).min(cells - 1));
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            let at = |i: usize, j: usize| coarse[j * (cells + 1) + i];
            at(ix, iy) * (1.0 - fx) * (1.0 - fy)
                + at(ix + 1, iy) * fx * (1.0 - fy)
                + at(ix, iy + 1) * (1.0 - fx) * fy
                + at(ix + 1, iy + 1) * fx * fy
        })
    }

    fn log_of(img: &ImageF64) -> LogImage {
        log_image_from_normalized(img, 0.01)
    }

    fn seeds_on(log: &LogImage) -> Vec<Candidate> {
        let grads = sobel_gradient(log);
        keyframes::select_candidates(log, &grads, 8, 0.05, 1e-4)
    }

    #[test]
    fn matching_a_frame_to_itself_is_exact() {
        let img = smooth_image(5, 96, 72);
        let log = log_of(&img);
        let seeds = seeds_on(&log);
        let corrs = match_points(&log, &log, &seeds).unwrap();
        assert!(corrs.len() >= 8);
        for c in &corrs {
            assert!((c.u_b - c.u_a).norm() < 1e-6);
        }
    }

    #[test]
    fn matching_recovers_a_pure_shift() {
        let img = smooth_image(6, 96, 72);
        // frame_b = frame_a shifted by (3, 0) px: b(x) = a(x - 3)
        let shifted = ImageF64::from_fn(96, 72, |x, y| {
            let sx = (x as i64 - 3).clamp(0, 95) as usize;
            img.get(sx, y)
        });
        let log_a = log_of(&img);
        let log_b = log_of(&shifted);
        let seeds = seeds_on(&log_a);
        let corrs = match_points(&log_a, &log_b, &seeds).unwrap();
        let mut errs: Vec<f64> = corrs
            .iter()
            .map(|c| (c.u_b - c.u_a - Vector2::new(3.0, 0.0)).norm())
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(errs[errs.len() / 2] < 0.1, "median shift error {}", errs[errs.len() / 2]);
    }

    #[test]
    fn flat_seeds_are_dropped() {
        let img = ImageF64::filled(64, 64, 0.5);
        let log = log_of(&img);
        let seeds = vec![
            Candidate {
                x: 20,
                y: 20,
                grad_mag: 0.0,
            };
            10
        ];
        assert!(matches!(
            match_points(&log, &log, &seeds),
            Err(BootstrapError::InsufficientMatches(0))
        ));
    }

    /// Synthetic two-view scene: random 3D points projected exactly.
    fn synthetic_corrs(
        cam: &CameraIntrinsics,
        t_ba: &Pose,
        n: usize,
        seed: u64,
    ) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut corrs = Vec::new();
        while corrs.len() < n {
            let x = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.2..1.2),
                rng.random_range(2.0..8.0),
            );
            let (Ok(u_a), Ok(u_b)) = (cam.project(x), cam.project(t_ba.apply(x))) else {
                continue;
            };
            if !cam.contains_pixel(u_a) || !cam.contains_pixel(u_b) {
                continue;
            }
            corrs.push(Correspondence {
                u_a,
                u_b,
                weight: 1.0,
            });
        }
        corrs
    }

    fn test_cam() -> CameraIntrinsics {
        CameraIntrinsics::pinhole(120.0, 120.0, 80.0, 60.0, 160, 120)
    }

    fn gt_pose() -> Pose {
        Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.02, -0.05, 0.01)),
            Vector3::new(0.3, 0.05, -0.1).normalize(),
        )
    }

    #[test]
    fn eight_point_recovers_exact_geometry() {
        let cam = test_cam();
        let t_ba = gt_pose();
        let corrs = synthetic_corrs(&cam, &t_ba, 60, 42);
        let cfg = BootstrapConfig::default();
        let (pose, mask) = eight_point(&corrs, &cam, &cfg).unwrap();
        assert!(mask.iter().all(|&m| m));
        assert!(pose.rotation.angle_to(&t_ba.rotation) < 1e-6);
        let dir_err = pose
            .translation
            .normalize()
            .cross(&t_ba.translation.normalize())
            .norm()
            .asin();
        assert!(dir_err < 1e-6, "translation direction error {dir_err}");
        assert_relative_eq!(pose.translation.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn eight_point_rejects_zero_baseline() {
        let cam = test_cam();
        let corrs = synthetic_corrs(&cam, &Pose::identity(), 30, 43);
        let cfg = BootstrapConfig::default();
        assert!(matches!(
            eight_point(&corrs, &cam, &cfg),
            Err(BootstrapError::DegenerateGeometry(_))
        ));
    }

    /// Distance of a correspondence to the ground-truth epipolar line, px.
    fn gt_sampson_px(cam: &CameraIntrinsics, t_ba: &Pose, c: &Correspondence) -> f64 {
        let r = t_ba.rotation.to_rotation_matrix();
        let t = t_ba.translation;
        let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
        let e = tx * r.matrix();
        let xa = cam.pixel_to_normalized(c.u_a);
        let xb = cam.pixel_to_normalized(c.u_b);
        let pa = Vector3::new(xa.x, xa.y, 1.0);
        let pb = Vector3::new(xb.x, xb.y, 1.0);
        let ea = e * pa;
        let etb = e.transpose() * pb;
        let num: f64 = pb.dot(&ea);
        let den = ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y;
        (num * num / den).sqrt() * 0.5 * (cam.fx + cam.fy)
    }

    #[test]
    fn eight_point_survives_gross_outliers() {
        let cam = test_cam();
        let t_ba = gt_pose();
        let mut corrs = synthetic_corrs(&cam, &t_ba, 80, 44);
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let n_out = 20; // 20% gross outliers, verified off the epipolar line
        let mut out_idx = Vec::new();
        for k in 0..n_out {
            let i = k * corrs.len() / n_out;
            loop {
                let mut c = corrs[i];
                c.u_b = Vector2::new(rng.random_range(5.0..150.0), rng.random_range(5.0..110.0));
                if gt_sampson_px(&cam, &t_ba, &c) > 3.0 {
                    corrs[i] = c;
                    break;
                }
            }
            out_idx.push(i);
        }
        let cfg = BootstrapConfig::default();
        let (pose, mask) = eight_point(&corrs, &cam, &cfg).unwrap();
        assert!(pose.rotation.angle_to(&t_ba.rotation) < 1e-3);
        // every injected outlier is excluded from the mask
        assert!(out_idx.iter().all(|&i| !mask[i]));
        let inlier_count = mask.iter().filter(|&&m| m).count();
        assert!(inlier_count >= 55 && inlier_count <= corrs.len() - n_out);
    }

    #[test]
    fn eight_point_is_symmetric_under_role_swap() {
        let cam = test_cam();
        let t_ba = gt_pose();
        let corrs = synthetic_corrs(&cam, &t_ba, 60, 46);
        let swapped: Vec<Correspondence> = corrs
            .iter()
            .map(|c| Correspondence {
                u_a: c.u_b,
                u_b: c.u_a,
                weight: 1.0,
            })
            .collect();
        let cfg = BootstrapConfig::default();
        let (p_fwd, _) = eight_point(&corrs, &cam, &cfg).unwrap();
        let (p_bwd, _) = eight_point(&swapped, &cam, &cfg).unwrap();
        let composed = p_fwd.compose(&p_bwd);
        assert!(composed.rotation.angle() < 1e-6);
        assert!(composed.translation.norm() < 1e-6);
    }

    #[test]
    fn triangulation_matches_ground_truth_depths() {
        let cam = test_cam();
        let t_ba = gt_pose();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut corrs = Vec::new();
        let mut depths = Vec::new();
        while corrs.len() < 40 {
            let x = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.2..1.2),
                rng.random_range(2.0..8.0),
            );
            let (Ok(u_a), Ok(u_b)) = (cam.project(x), cam.project(t_ba.apply(x))) else {
                continue;
            };
            if !cam.contains_pixel(u_a) || !cam.contains_pixel(u_b) {
                continue;
            }
            corrs.push(Correspondence {
                u_a,
                u_b,
                weight: 1.0,
            });
            depths.push(x.z);
        }
        let rhos = triangulate(&corrs, &t_ba, &cam);
        for (rho, depth) in rhos.iter().zip(&depths) {
            let rho = rho.expect("accepted point");
            assert_relative_eq!(1.0 / rho, *depth, max_relative = 1e-6);
        }
        // positivity in both views is part of acceptance
        for (c, rho) in corrs.iter().zip(&rhos) {
            if let Some(rho) = rho {
                let x = cam.back_project(c.u_a, 1.0 / rho).unwrap();
                assert!(x.z > 0.0 && t_ba.apply(x).z > 0.0);
            }
        }
    }

    #[test]
    fn triangulation_rejects_parallel_and_behind() {
        let cam = test_cam();
        // zero baseline makes every ray pair parallel
        let corrs = synthetic_corrs(&cam, &Pose::identity(), 10, 48);
        assert!(triangulate(&corrs, &Pose::identity(), &cam).iter().all(|r| r.is_none()));

        // a correspondence geometrically behind the baseline
        let t_ba = Pose::from_translation(Vector3::new(0.0, 0.0, -4.0));
        let corr = Correspondence {
            u_a: Vector2::new(80.0, 60.0),
            u_b: Vector2::new(140.0, 60.0),
            weight: 1.0,
        };
        let r = triangulate(&[corr], &t_ba, &cam);
        assert!(r[0].is_none());
    }
}
