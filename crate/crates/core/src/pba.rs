//! Sliding-window photometric bundle adjustment over keyframe poses and
//! point inverse depths.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, Vector2, Vector6};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::geometry::{se3_exp, Pose};
use crate::keyframes::{Keyframe, PointStatus, SelectedPoint};
use crate::tracking::huber_cost;

#[derive(Debug, Error)]
pub enum PbaError {
    #[error("window underdetermined: {0}")]
    Gauge(String),
}

/// The 8-pixel residual pattern around each point; all offsets share the
/// point's inverse depth.
pub const PATCH_OFFSETS: [(i32, i32); 8] = [
    (0, -2),
    (-1, -1),
    (1, -1),
    (-2, 0),
    (0, 0),
    (2, 0),
    (-1, 1),
    (0, 2),
];

/// Ordered set of at most `capacity` keyframes optimized jointly.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    pub keyframes: Vec<Keyframe>,
    pub capacity: usize,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            keyframes: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn last(&self) -> Option<&Keyframe> {
        self.keyframes.last()
    }

    /// Appends a keyframe; past capacity the oldest keyframe is dropped
    /// together with all points it hosts (no marginalization prior). Returns
    /// the dropped keyframe.
    pub fn slide(&mut self, new_kf: Keyframe) -> Option<Keyframe> {
        if let Some(last) = self.keyframes.last() {
            assert!(new_kf.id > last.id, "keyframe ids must increase");
        }
        self.keyframes.push(new_kf);
        if self.keyframes.len() > self.capacity {
            Some(self.keyframes.remove(0))
        } else {
            None
        }
    }

    pub fn total_active_points(&self) -> usize {
        self.keyframes.iter().map(|kf| kf.active_count()).sum()
    }
}

/// Settings for [`optimize_window`].
#[derive(Debug, Clone)]
pub struct PbaConfig {
    pub huber_gamma: f64,
    pub max_iterations: usize,
    pub step_tol: f64,
    pub cost_rel_tol: f64,
    /// Patch samples must stay this far inside the target image.
    pub border_margin: f64,
    /// Number of outlier rejection rounds after the first convergence.
    pub outlier_rounds: usize,
}

impl Default for PbaConfig {
    fn default() -> Self {
        Self {
            huber_gamma: 0.1,
            max_iterations: 30,
            step_tol: 1e-8,
            cost_rel_tol: 1e-6,
            border_margin: 2.0,
            outlier_rounds: 1,
        }
    }
}

/// Summary of one window refinement.
#[derive(Debug, Clone, Copy)]
pub struct PbaReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub observations: usize,
    pub outliers_flagged: usize,
}

/// Photometric patch residual of one host point observed in a target
/// keyframe: `r_o = L_host(u+o) - L_target(warp(u+o, rho, T_th))`.
/// `None` when any patch pixel leaves the target's interpolation domain.
pub fn pba_residual(
    host: &Keyframe,
    pt: &SelectedPoint,
    target: &Keyframe,
    cam: &CameraIntrinsics,
) -> Option<[f64; 8]> {
    let t_th = target.pose.inverse().compose(&host.pose);
    patch_residual(
        &host.log.values,
        pt.pixel(),
        pt.rho,
        &target.log.values,
        &t_th,
        cam,
        2.0,
        false,
    )
}

/// Patch evaluation shared by the public residual and the solver. With
/// `clamped` the warp never fails: coordinates are clamped into the
/// interpolation domain (used for frozen-set derivative evaluations).
#[allow(clippy::too_many_arguments)]
fn patch_residual(
    host_log: &crate::image::ImageF64,
    u: Vector2<f64>,
    rho: f64,
    target_log: &crate::image::ImageF64,
    t_th: &Pose,
    cam: &CameraIntrinsics,
    margin: f64,
    clamped: bool,
) -> Option<[f64; 8]> {
    if rho <= 0.0 {
        return None;
    }
    let mut out = [0.0f64; 8];
    let lo = margin.max(1.0);
    let hi_x = (cam.width as f64 - 2.0).min(cam.width as f64 - 1.0 - margin);
    let hi_y = (cam.height as f64 - 2.0).min(cam.height as f64 - 1.0 - margin);
    for (k, (ox, oy)) in PATCH_OFFSETS.iter().enumerate() {
        let up = Vector2::new(u.x + *ox as f64, u.y + *oy as f64);
        let hx = up.x as usize;
        let hy = up.y as usize;
        if up.x < 0.0 || up.y < 0.0 || hx >= host_log.width() || hy >= host_log.height() {
            return None;
        }
        let host_val = host_log.get(hx, hy);
        let x_h = cam.back_project(up, 1.0 / rho).ok()?;
        let x_t = t_th.apply(x_h);
        let u_t = if x_t.z > 0.0 {
            cam.project(x_t).ok()?
        } else if clamped {
            let z = x_t.z.max(1e-6);
            Vector2::new(cam.fx * x_t.x / z + cam.cx, cam.fy * x_t.y / z + cam.cy)
        } else {
            return None;
        };
        let (sx, sy) = if clamped {
            (u_t.x.clamp(lo, hi_x), u_t.y.clamp(lo, hi_y))
        } else {
            if u_t.x < lo || u_t.y < lo || u_t.x > hi_x || u_t.y > hi_y {
                return None;
            }
            (u_t.x, u_t.y)
        };
        let target_val = target_log.sample_cubic(sx, sy)?;
        out[k] = host_val - target_val;
    }
    Some(out)
}

/// Flags observations whose robust norm exceeds the median by more than
/// `3 x (1.4826 x MAD)`.
pub fn detect_outliers(norms: &[f64]) -> Vec<bool> {
    assert!(!norms.is_empty());
    let median = |values: &mut Vec<f64>| -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values[values.len() / 2]
    };
    let med = median(&mut norms.to_vec());
    let mad = median(&mut norms.iter().map(|v| (v - med).abs()).collect());
    let threshold = med + 3.0 * 1.4826 * mad;
    norms.iter().map(|&v| v > threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct ObsKey {
    host: usize,
    point: usize,
    target: usize,
}

struct Observation {
    key: ObsKey,
    residual: [f64; 8],
}

fn window_cost(obs: &[Observation], gamma: f64) -> f64 {
    if obs.is_empty() {
        return f64::INFINITY;
    }
    obs.iter()
        .map(|o| huber_cost(norm8(&o.residual), gamma))
        .sum::<f64>()
        / obs.len() as f64
}

fn norm8(r: &[f64; 8]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn collect_observations(
    kfs: &[Keyframe],
    cam: &CameraIntrinsics,
    margin: f64,
    banned: &HashSet<ObsKey>,
) -> Vec<Observation> {
    let mut obs = Vec::new();
    for (hi, host) in kfs.iter().enumerate() {
        for (pi, pt) in host.points.iter().enumerate() {
            if !pt.is_active() {
                continue;
            }
            for (ti, target) in kfs.iter().enumerate() {
                if ti == hi {
                    continue;
                }
                let key = ObsKey {
                    host: hi,
                    point: pi,
                    target: ti,
                };
                if banned.contains(&key) {
                    continue;
                }
                let t_th = target.pose.inverse().compose(&host.pose);
                if let Some(residual) = patch_residual(
                    &host.log.values,
                    pt.pixel(),
                    pt.rho,
                    &target.log.values,
                    &t_th,
                    cam,
                    margin,
                    false,
                ) {
                    obs.push(Observation { key, residual });
                }
            }
        }
    }
    obs
}

/// Jointly refines window poses (first keyframe fixed) and point inverse
/// depths with damped Gauss-Newton on the Huber patch cost. One depth (the
/// median inverse-depth point of the first keyframe) is frozen as the scale
/// gauge.
pub fn optimize_window(
    win: &mut SlidingWindow,
    cam: &CameraIntrinsics,
    cfg: &PbaConfig,
) -> Result<PbaReport, PbaError> {
    if win.len() < 2 {
        return Err(PbaError::Gauge(format!("{} keyframes, need at least 2", win.len())));
    }
    if win.total_active_points() < 8 {
        return Err(PbaError::Gauge(format!(
            "{} active points, need at least 8",
            win.total_active_points()
        )));
    }

    // Depth variable layout, skipping the gauge point.
    let gauge = gauge_point(&win.keyframes)
        .ok_or_else(|| PbaError::Gauge("no keyframe with active points".into()))?;
    let mut depth_index = Vec::new(); // (kf, point) -> variable id
    for (ki, kf) in win.keyframes.iter().enumerate() {
        for (pi, pt) in kf.points.iter().enumerate() {
            if pt.is_active() && (ki, pi) != gauge {
                depth_index.push((ki, pi));
            }
        }
    }
    let n_pose = 6 * (win.len() - 1);
    let n_depth = depth_index.len();
    let depth_var: std::collections::HashMap<(usize, usize), usize> = depth_index
        .iter()
        .enumerate()
        .map(|(v, k)| (*k, v))
        .collect();

    let mut banned: HashSet<ObsKey> = HashSet::new();
    let mut obs = collect_observations(&win.keyframes, cam, cfg.border_margin, &banned);
    if obs.is_empty() {
        return Err(PbaError::Gauge("no valid observations".into()));
    }
    let initial_cost = window_cost(&obs, cfg.huber_gamma);
    let mut cost = initial_cost;
    let mut iterations = 0usize;
    let mut outliers_flagged = 0usize;

    for round in 0..=cfg.outlier_rounds {
        let mut lambda = 1e-4;
        let mut converged = false;
        while iterations < cfg.max_iterations && !converged {
            iterations += 1;
            obs = collect_observations(&win.keyframes, cam, cfg.border_margin, &banned);
            if obs.is_empty() {
                break;
            }
            cost = window_cost(&obs, cfg.huber_gamma);

            // Assemble the weighted normal equations with the depth block
            // eliminated by a Schur complement.
            let mut h_pp = DMatrix::<f64>::zeros(n_pose, n_pose);
            let mut g_p = DVector::<f64>::zeros(n_pose);
            let mut h_dd = vec![0.0f64; n_depth];
            let mut g_d = vec![0.0f64; n_depth];
            let mut h_pd = vec![DVector::<f64>::zeros(n_pose); n_depth];

            let eps = 1e-7;
            for o in &obs {
                let host = &win.keyframes[o.key.host];
                let target = &win.keyframes[o.key.target];
                let pt = &host.points[o.key.point];
                let w = {
                    let s = norm8(&o.residual);
                    if s <= cfg.huber_gamma {
                        1.0
                    } else {
                        cfg.huber_gamma / s
                    }
                };

                // parameter list for this observation: (kind, col base)
                let mut cols: Vec<(usize, [f64; 8])> = Vec::with_capacity(13);
                let eval = |h_pose: &Pose, t_pose: &Pose, rho: f64| -> [f64; 8] {
                    let t_th = t_pose.inverse().compose(h_pose);
                    patch_residual(
                        &host.log.values,
                        pt.pixel(),
                        rho,
                        &target.log.values,
                        &t_th,
                        cam,
                        cfg.border_margin,
                        true,
                    )
                    .unwrap_or(o.residual)
                };
                if o.key.host > 0 {
                    for k in 0..6 {
                        let mut d = Vector6::zeros();
                        d[k] = eps;
                        let r = eval(&host.pose.left_update(d), &target.pose, pt.rho);
                        let mut col = [0.0; 8];
                        for j in 0..8 {
                            col[j] = (r[j] - o.residual[j]) / eps;
                        }
                        cols.push(((o.key.host - 1) * 6 + k, col));
                    }
                }
                if o.key.target > 0 {
                    for k in 0..6 {
                        let mut d = Vector6::zeros();
                        d[k] = eps;
                        let r = eval(&host.pose, &target.pose.left_update(d), pt.rho);
                        let mut col = [0.0; 8];
                        for j in 0..8 {
                            col[j] = (r[j] - o.residual[j]) / eps;
                        }
                        cols.push(((o.key.target - 1) * 6 + k, col));
                    }
                }
                let depth_id = depth_var.get(&(o.key.host, o.key.point)).copied();
                let mut depth_col = [0.0; 8];
                if depth_id.is_some() {
                    let drho = eps * pt.rho.max(1e-3);
                    let r = eval(&host.pose, &target.pose, pt.rho + drho);
                    for j in 0..8 {
                        depth_col[j] = (r[j] - o.residual[j]) / drho;
                    }
                }

                // accumulate weighted blocks
                for (ca, col_a) in &cols {
                    let mut dot_r = 0.0;
                    for j in 0..8 {
                        dot_r += col_a[j] * o.residual[j];
                    }
                    g_p[*ca] += w * dot_r;
                    for (cb, col_b) in &cols {
                        if cb < ca {
                            continue;
                        }
                        let mut dot = 0.0;
                        for j in 0..8 {
                            dot += col_a[j] * col_b[j];
                        }
                        h_pp[(*ca, *cb)] += w * dot;
                        if ca != cb {
                            h_pp[(*cb, *ca)] += w * dot;
                        }
                    }
                }
                if let Some(d) = depth_id {
                    let mut dot_r = 0.0;
                    let mut dot_dd = 0.0;
                    for j in 0..8 {
                        dot_r += depth_col[j] * o.residual[j];
                        dot_dd += depth_col[j] * depth_col[j];
                    }
                    g_d[d] += w * dot_r;
                    h_dd[d] += w * dot_dd;
                    for (ca, col_a) in &cols {
                        let mut dot = 0.0;
                        for j in 0..8 {
                            dot += col_a[j] * depth_col[j];
                        }
                        h_pd[d][*ca] += w * dot;
                    }
                }
            }

            // gradient small -> already at a minimum
            let grad_norm = g_p.norm().hypot(g_d.iter().map(|v| v * v).sum::<f64>().sqrt());
            if grad_norm < 1e-12 {
                break;
            }

            let mut accepted = false;
            for _ in 0..8 {
                let mut s = h_pp.clone();
                for a in 0..n_pose {
                    s[(a, a)] += lambda * h_pp[(a, a)].max(1e-9);
                }
                let mut rhs = -&g_p;
                let mut h_dd_damped = vec![0.0; n_depth];
                for d in 0..n_depth {
                    h_dd_damped[d] = h_dd[d] + lambda * h_dd[d].max(1e-9);
                    if h_dd_damped[d] <= 0.0 {
                        h_dd_damped[d] = 1e-9;
                    }
                    let inv = 1.0 / h_dd_damped[d];
                    // S -= v v^T / d ; rhs += v g_d / d
                    let v = &h_pd[d];
                    for a in 0..n_pose {
                        if v[a] == 0.0 {
                            continue;
                        }
                        let va = v[a] * inv;
                        for b in 0..n_pose {
                            s[(a, b)] -= va * v[b];
                        }
                        rhs[a] += va * g_d[d];
                    }
                }
                let Some(chol) = s.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let dx_pose = chol.solve(&rhs);
                let mut dx_depth = vec![0.0; n_depth];
                for d in 0..n_depth {
                    dx_depth[d] = (-g_d[d] - h_pd[d].dot(&dx_pose)) / h_dd_damped[d];
                }

                // candidate window
                let mut cand = win.keyframes.clone();
                for (ki, kf) in cand.iter_mut().enumerate().skip(1) {
                    let base = (ki - 1) * 6;
                    let delta = Vector6::new(
                        dx_pose[base],
                        dx_pose[base + 1],
                        dx_pose[base + 2],
                        dx_pose[base + 3],
                        dx_pose[base + 4],
                        dx_pose[base + 5],
                    );
                    kf.pose = se3_exp(delta).compose(&kf.pose);
                }
                for (d, (ki, pi)) in depth_index.iter().enumerate() {
                    let rho = &mut cand[*ki].points[*pi].rho;
                    *rho = (*rho + dx_depth[d]).max(1e-6);
                }

                let obs_try = collect_observations(&cand, cam, cfg.border_margin, &banned);
                let cost_try = window_cost(&obs_try, cfg.huber_gamma);
                if cost_try.is_finite() && cost_try < cost {
                    let step_norm = dx_pose.norm().hypot(
                        dx_depth.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    );
                    win.keyframes = cand;
                    let rel = (cost - cost_try) / cost.max(1e-300);
                    cost = cost_try;
                    lambda = (lambda / 3.0).max(1e-10);
                    accepted = true;
                    if step_norm < cfg.step_tol || rel < cfg.cost_rel_tol {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }

        if round == cfg.outlier_rounds {
            break;
        }
        // outlier pass on the converged residuals
        obs = collect_observations(&win.keyframes, cam, cfg.border_margin, &banned);
        if obs.is_empty() {
            break;
        }
        let norms: Vec<f64> = obs.iter().map(|o| norm8(&o.residual)).collect();
        let flags = detect_outliers(&norms);
        let flagged: Vec<ObsKey> = obs
            .iter()
            .zip(&flags)
            .filter_map(|(o, &f)| f.then_some(o.key))
            .collect();
        if flagged.is_empty() {
            break;
        }
        // safety clamp: never strip the last observation of more than half of
        // the observed points
        let mut count_per_point: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for o in &obs {
            *count_per_point.entry((o.key.host, o.key.point)).or_insert(0) += 1;
        }
        let mut would_lose_all = 0usize;
        let mut flagged_per_point: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for key in &flagged {
            *flagged_per_point.entry((key.host, key.point)).or_insert(0) += 1;
        }
        for (pt, flagged_count) in &flagged_per_point {
            if *flagged_count >= count_per_point[pt] {
                would_lose_all += 1;
            }
        }
        if would_lose_all * 2 > count_per_point.len() {
            break;
        }
        outliers_flagged += flagged.len();
        banned.extend(flagged);
        // points with no remaining observations become outliers
        let remaining = collect_observations(&win.keyframes, cam, cfg.border_margin, &banned);
        let still_observed: HashSet<(usize, usize)> = remaining
            .iter()
            .map(|o| (o.key.host, o.key.point))
            .collect();
        for (pt, _) in count_per_point {
            if !still_observed.contains(&pt) {
                win.keyframes[pt.0].points[pt.1].status = PointStatus::Outlier;
            }
        }
    }

    let final_obs = collect_observations(&win.keyframes, cam, cfg.border_margin, &banned);
    let final_cost = window_cost(&final_obs, cfg.huber_gamma);
    Ok(PbaReport {
        initial_cost,
        final_cost: final_cost.min(cost),
        iterations,
        observations: final_obs.len(),
        outliers_flagged,
    })
}

/// The (keyframe, point) holding the median inverse depth of the first
/// keyframe that has active points; frozen as the scale gauge.
fn gauge_point(kfs: &[Keyframe]) -> Option<(usize, usize)> {
    for (ki, kf) in kfs.iter().enumerate() {
        let mut actives: Vec<(usize, f64)> = kf
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_active())
            .map(|(i, p)| (i, p.rho))
            .collect();
        if actives.is_empty() {
            continue;
        }
        actives.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        return Some((ki, actives[actives.len() / 2].0));
    }
    None
}

/// Rescales the window about the first keyframe's camera center so that the
/// median inverse depth of the first keyframe equals `target`. Photometric
/// residuals are invariant under this similarity.
pub fn renormalize_scale(win: &mut SlidingWindow, target: f64) {
    let Some(median) = win.keyframes.first().and_then(|kf| kf.median_inverse_depth()) else {
        return;
    };
    let a = median / target;
    if !(a.is_finite() && a > 0.0) {
        return;
    }
    let c0 = win.keyframes[0].pose.translation;
    for kf in &mut win.keyframes {
        kf.pose.translation = c0 + (kf.pose.translation - c0) * a;
        for p in &mut kf.points {
            if p.is_active() {
                p.rho /= a;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egm::{log_image_from_normalized, sobel_gradient, LogImage};
    use crate::image::ImageF64;
    use approx::assert_relative_eq;

    fn flat_keyframe(id: u64, pose: Pose, points: Vec<SelectedPoint>) -> Keyframe {
        let img = ImageF64::from_fn(64, 64, |x, y| {
            0.4 + 0.3 * ((x as f64) * 0.21).sin() * ((y as f64) * 0.17).cos()
        });
        let log = log_image_from_normalized(&img, 0.01);
        let grads = sobel_gradient(&log);
        Keyframe {
            id,
            t: id as f64,
            pose,
            log: LogImage {
                values: log.values,
            },
            grads,
            points,
        }
    }

    fn active(x: u32, y: u32, rho: f64) -> SelectedPoint {
        SelectedPoint {
            x,
            y,
            rho,
            grad_mag: 1.0,
            status: PointStatus::Active,
        }
    }

    #[test]
    fn residual_is_zero_for_identity_relative_pose() {
        let cam = CameraIntrinsics::pinhole(80.0, 80.0, 32.0, 32.0, 64, 64);
        let pts = vec![active(20, 20, 0.5)];
        let host = flat_keyframe(0, Pose::identity(), pts.clone());
        let target = flat_keyframe(1, Pose::identity(), Vec::new());
        for rho in [0.1, 0.5, 3.0] {
            let mut pt = pts[0];
            pt.rho = rho;
            let r = pba_residual(&host, &pt, &target, &cam).unwrap();
            for v in r {
                assert_relative_eq!(v, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn window_slide_drops_oldest_and_its_points() {
        let mut win = SlidingWindow::new(7);
        for id in 0..7 {
            assert!(win
                .slide(flat_keyframe(id, Pose::identity(), vec![active(10, 10, 1.0)]))
                .is_none());
        }
        assert_eq!(win.len(), 7);
        let dropped = win.slide(flat_keyframe(7, Pose::identity(), vec![active(10, 10, 1.0)]));
        assert_eq!(win.len(), 7);
        assert_eq!(dropped.unwrap().id, 0);
        // every surviving point's host remains in the window
        let ids: Vec<u64> = win.keyframes.iter().map(|k| k.id).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn outlier_detection_mad_rule() {
        assert!(detect_outliers(&[0.2; 12]).iter().all(|&f| !f));

        let mut norms = vec![0.1; 9];
        norms.push(10.0);
        let flags = detect_outliers(&norms);
        assert!(flags[9]);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
    }

    #[test]
    fn renormalize_scale_fixes_median_and_keeps_residuals() {
        let cam = CameraIntrinsics::pinhole(80.0, 80.0, 32.0, 32.0, 64, 64);
        let host_pts = vec![active(20, 20, 0.4), active(30, 25, 0.5), active(25, 36, 0.8)];
        let host = flat_keyframe(0, Pose::identity(), host_pts);
        let target = flat_keyframe(
            1,
            Pose::from_translation(nalgebra::Vector3::new(0.2, 0.0, 0.0)),
            Vec::new(),
        );
        let mut win = SlidingWindow::new(7);
        win.slide(host);
        win.slide(target);

        let before: Vec<[f64; 8]> = win.keyframes[0]
            .points
            .clone()
            .iter()
            .map(|pt| pba_residual(&win.keyframes[0], pt, &win.keyframes[1], &cam).unwrap())
            .collect();
        renormalize_scale(&mut win, 1.0);
        assert_relative_eq!(
            win.keyframes[0].median_inverse_depth().unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let after: Vec<[f64; 8]> = win.keyframes[0]
            .points
            .clone()
            .iter()
            .map(|pt| pba_residual(&win.keyframes[0], pt, &win.keyframes[1], &cam).unwrap())
            .collect();
        for (a, b) in before.iter().zip(&after) {
            for k in 0..8 {
                assert_relative_eq!(a[k], b[k], epsilon = 1e-9);
            }
        }
    }
}
