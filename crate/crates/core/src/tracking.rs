//! Front-end camera tracking: event packetization, keyframe-to-event-camera
//! warping and per-packet joint pose/twist estimation against normalized
//! brightness increments.

use nalgebra::{DMatrix, DVector, Vector2, Vector6};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::egm::{self, IncrementImage};
use crate::event::Event;
use crate::geometry::{feature_sensitivity, se3_exp, se3_log, Pose, Twist};
use crate::keyframes::Keyframe;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("tracking lost: no visible selected points")]
    TrackingLost,
    #[error("empty packet")]
    EmptyPacket,
}

/// A fixed-count window into the event stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventPacket {
    /// Index of the first event in the owning stream.
    pub start: usize,
    pub len: usize,
    pub t_start_us: u64,
    pub t_end_us: u64,
    /// Median event timestamp, the packet's representative time.
    pub t_mid_us: u64,
}

impl EventPacket {
    pub fn t_mid_seconds(&self) -> f64 {
        self.t_mid_us as f64 * 1e-6
    }

    pub fn span_seconds(&self) -> f64 {
        (self.t_end_us - self.t_start_us) as f64 * 1e-6
    }

    pub fn slice<'a>(&self, events: &'a [Event]) -> &'a [Event] {
        &events[self.start..self.start + self.len]
    }
}

/// Splits a stream into fixed-size packets advancing by `stride` events; the
/// trailing incomplete window is dropped.
pub fn packetize(events: &[Event], n_pkt: usize, stride: usize) -> Vec<EventPacket> {
    assert!(n_pkt >= stride && stride >= 1, "need n_pkt >= stride >= 1");
    let mut packets = Vec::new();
    let mut start = 0usize;
    while start + n_pkt <= events.len() {
        let slice = &events[start..start + n_pkt];
        packets.push(EventPacket {
            start,
            len: n_pkt,
            t_start_us: slice[0].t_us,
            t_end_us: slice[n_pkt - 1].t_us,
            t_mid_us: slice[n_pkt / 2].t_us,
        });
        start += stride;
    }
    packets
}

/// Warps a keyframe pixel with inverse depth `rho` into the event camera:
/// `u_e = project(T_ef * backproject(u_f, 1/rho))`. `None` marks the point
/// invisible (behind the camera or outside the sensor).
pub fn warp_point(
    u_f: Vector2<f64>,
    rho: f64,
    t_ef: &Pose,
    cam: &CameraIntrinsics,
) -> Option<Vector2<f64>> {
    debug_assert!(rho > 0.0);
    let x_f = cam.back_project(u_f, 1.0 / rho).ok()?;
    let x_e = t_ef.apply(x_f);
    if x_e.z <= 0.0 {
        return None;
    }
    let u_e = cam.project(x_e).ok()?;
    if !cam.contains_pixel(u_e) {
        return None;
    }
    Some(u_e)
}

/// Huber cost: `r^2/2` inside the threshold, `gamma (|r| - gamma/2)` outside.
pub fn huber_cost(r: f64, gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0);
    let a = r.abs();
    if a <= gamma {
        0.5 * r * r
    } else {
        gamma * (a - 0.5 * gamma)
    }
}

/// IRLS weight of the Huber kernel.
fn huber_weight(r: f64, gamma: f64) -> f64 {
    let a = r.abs();
    if a <= gamma {
        1.0
    } else {
        gamma / a
    }
}

/// Tracker settings; defaults follow the documented configuration keys.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    /// Contrast sensitivity used when accumulating measured increments.
    pub contrast: f64,
    /// Gaussian weight width as a fraction of the packet: sigma = n / factor.
    /// Zero selects uniform weights.
    pub sigma_factor: f64,
    pub huber_gamma: f64,
    pub max_iterations: usize,
    pub step_tol: f64,
    pub cost_rel_tol: f64,
    /// Points warping closer than this to the border are excluded from the
    /// residuals and the normalizing norms (cubic support).
    pub border_margin: f64,
    /// Divergence: final cost above this fraction of the zero-motion cost
    /// counts as a bad packet.
    pub divergence_cost_ratio: f64,
    /// Bad packets in a row before the diverged flag fires.
    pub divergence_streak: u32,
    /// One-packet pose-change limits: rotation (rad) and translation as a
    /// multiple of the median scene depth.
    pub max_rot_step: f64,
    pub max_trans_step_depth_factor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            contrast: 0.2,
            sigma_factor: 6.0,
            huber_gamma: 0.05,
            max_iterations: 50,
            step_tol: 1e-8,
            cost_rel_tol: 1e-6,
            border_margin: 2.0,
            divergence_cost_ratio: 0.95,
            divergence_streak: 3,
            max_rot_step: 1.0,
            max_trans_step_depth_factor: 10.0,
        }
    }
}

/// Per-packet tracker state.
#[derive(Debug, Clone)]
pub struct TrackerState {
    /// Reference keyframe id.
    pub kf_id: u64,
    /// `T_{world, event camera}` at the last tracked packet midpoint.
    pub pose: Pose,
    pub twist: Twist,
    /// Midpoint time (seconds) of the last tracked packet.
    pub t_mid: Option<f64>,
    pub last_cost: f64,
    pub diverged: bool,
    pub bad_streak: u32,
}

impl TrackerState {
    pub fn new(kf_id: u64, pose: Pose, twist: Twist) -> Self {
        Self {
            kf_id,
            pose,
            twist,
            t_mid: None,
            last_cost: 0.0,
            diverged: false,
            bad_streak: 0,
        }
    }
}

/// Diagnostics returned alongside the updated state.
#[derive(Debug, Clone, Copy)]
pub struct PacketDiagnostics {
    pub visible_fraction: f64,
    /// Rotation of the event camera relative to the keyframe, radians.
    pub rel_rotation: f64,
    pub iterations: usize,
    pub cost: f64,
    pub cost_zero_motion: f64,
}

/// Residuals of Eq-style normalized increment comparison at the currently
/// visible selected points.
#[derive(Debug, Clone)]
pub struct ResidualEval {
    /// One residual per visible point.
    pub residuals: Vec<f64>,
    /// Indices into the keyframe's active-point list.
    pub visible: Vec<usize>,
    pub pred_norm: f64,
    pub meas_norm: f64,
}

/// Precomputed per-point data that does not change during one packet solve.
struct PointCache {
    /// Keyframe pixel.
    u_f: Vector2<f64>,
    rho: f64,
    /// Row mapping a twist to the predicted increment (before the dt factor):
    /// `a = -grad_L . diag(fx, fy) . J(u_norm, 1/rho)`.
    pred_row: Vector6<f64>,
}

fn build_point_cache(kf: &Keyframe, cam: &CameraIntrinsics) -> Vec<PointCache> {
    kf.active_points()
        .map(|p| {
            let u_f = p.pixel();
            let u_norm = Vector2::new((u_f.x - cam.cx) / cam.fx, (u_f.y - cam.cy) / cam.fy);
            let j = feature_sensitivity(u_norm, 1.0 / p.rho).expect("active point depth");
            let gx = kf.grads.gx.get(p.x as usize, p.y as usize);
            let gy = kf.grads.gy.get(p.x as usize, p.y as usize);
            let row = -(j.row(0) * (gx * cam.fx) + j.row(1) * (gy * cam.fy));
            PointCache {
                u_f,
                rho: p.rho,
                pred_row: row.transpose(),
            }
        })
        .collect()
}

fn visible_set(
    cache: &[PointCache],
    t_ef: &Pose,
    cam: &CameraIntrinsics,
    margin: f64,
) -> Vec<usize> {
    let lo_x = margin;
    let lo_y = margin;
    let hi_x = (cam.width - 1) as f64 - margin;
    let hi_y = (cam.height - 1) as f64 - margin;
    cache
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let u_e = warp_point(p.u_f, p.rho, t_ef, cam)?;
            (u_e.x >= lo_x && u_e.x <= hi_x && u_e.y >= lo_y && u_e.y <= hi_y).then_some(i)
        })
        .collect()
}

/// Evaluates normalized-increment residuals on a fixed point subset. Samples
/// that drift outside the interpolation domain are clamped; callers that need
/// fresh visibility recompute the subset first.
fn residuals_on_subset(
    cache: &[PointCache],
    subset: &[usize],
    inc: &IncrementImage,
    t_ef: &Pose,
    twist: &Twist,
    dt: f64,
    cam: &CameraIntrinsics,
) -> (Vec<f64>, f64, f64) {
    let nu = twist.as_vector();
    let mut pred = Vec::with_capacity(subset.len());
    let mut meas = Vec::with_capacity(subset.len());
    let img = &inc.values;
    let hi_x = (img.width() - 2) as f64;
    let hi_y = (img.height() - 2) as f64;
    for &i in subset {
        let p = &cache[i];
        pred.push(p.pred_row.dot(&nu) * dt);
        let u_e = match warp_point(p.u_f, p.rho, t_ef, cam) {
            Some(u) => u,
            None => {
                // clamped fallback for frozen-set evaluations near the border
                let x_f = cam.back_project(p.u_f, 1.0 / p.rho).unwrap();
                let x_e = t_ef.apply(x_f);
                let z = x_e.z.max(1e-6);
                Vector2::new(cam.fx * x_e.x / z + cam.cx, cam.fy * x_e.y / z + cam.cy)
            }
        };
        let x = u_e.x.clamp(1.0, hi_x);
        let y = u_e.y.clamp(1.0, hi_y);
        meas.push(img.sample_cubic(x, y).unwrap_or(0.0));
    }
    let pred_norm = pred.iter().map(|v| v * v).sum::<f64>().sqrt();
    let meas_norm = meas.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ps = if pred_norm > 1e-12 { 1.0 / pred_norm } else { 0.0 };
    let ms = if meas_norm > 1e-12 { 1.0 / meas_norm } else { 0.0 };
    let residuals = pred
        .iter()
        .zip(&meas)
        .map(|(p, m)| p * ps - m * ms)
        .collect();
    (residuals, pred_norm, meas_norm)
}

/// Residual vector of the tracking objective at the currently visible
/// selected points; both L2 normalizations run over the same visible set.
pub fn tracking_residuals(
    kf: &Keyframe,
    inc: &IncrementImage,
    t_ef: &Pose,
    twist: &Twist,
    dt: f64,
    cam: &CameraIntrinsics,
    border_margin: f64,
) -> Result<ResidualEval, TrackError> {
    let cache = build_point_cache(kf, cam);
    let visible = visible_set(&cache, t_ef, cam, border_margin);
    if visible.is_empty() {
        return Err(TrackError::TrackingLost);
    }
    let (residuals, pred_norm, meas_norm) =
        residuals_on_subset(&cache, &visible, inc, t_ef, twist, dt, cam);
    Ok(ResidualEval {
        residuals,
        visible,
        pred_norm,
        meas_norm,
    })
}

/// Mean Huber cost over the residual set. The mean (rather than the sum)
/// keeps packet costs comparable when the visible set changes size.
fn robust_cost(residuals: &[f64], gamma: f64) -> f64 {
    if residuals.is_empty() {
        return f64::INFINITY;
    }
    residuals.iter().map(|&r| huber_cost(r, gamma)).sum::<f64>() / residuals.len() as f64
}

/// Tracks one packet: accumulates the weighted increment image and minimizes
/// the Huber norm of normalized-increment differences over the relative pose
/// and the camera twist with damped Gauss-Newton.
pub fn track_packet(
    state: &TrackerState,
    events: &[Event],
    packet: &EventPacket,
    kf: &Keyframe,
    cam: &CameraIntrinsics,
    cfg: &TrackerConfig,
) -> Result<(TrackerState, PacketDiagnostics), TrackError> {
    if packet.len == 0 {
        return Err(TrackError::EmptyPacket);
    }
    let slice = packet.slice(events);
    let weights = if cfg.sigma_factor > 0.0 {
        Some(egm::gaussian_weights(slice.len(), slice.len() as f64 / cfg.sigma_factor))
    } else {
        None
    };
    let inc = egm::accumulate(slice, cfg.contrast, weights.as_deref(), cam.width, cam.height)
        .expect("validated stream");

    let dt = packet.span_seconds().max(1e-6);
    let t_mid = packet.t_mid_seconds();
    let dt_gap = state.t_mid.map_or(dt, |prev| (t_mid - prev).max(1e-6));

    // Constant-velocity prediction of the event-camera pose at the packet
    // midpoint, composed in the body frame.
    let pose_pred = state
        .pose
        .compose(&se3_exp(state.twist.as_vector() * dt_gap));
    let t_wf = &kf.pose;
    let mut t_ef = pose_pred.inverse().compose(t_wf);
    let mut twist = state.twist;

    let cache = build_point_cache(kf, cam);
    let zero_visible = visible_set(&cache, &state.pose.inverse().compose(t_wf), cam, cfg.border_margin);
    let cost_zero = if zero_visible.is_empty() {
        f64::INFINITY
    } else {
        let (r0, _, _) = residuals_on_subset(
            &cache,
            &zero_visible,
            &inc,
            &state.pose.inverse().compose(t_wf),
            &Twist::zero(),
            dt,
            cam,
        );
        robust_cost(&r0, cfg.huber_gamma)
    };

    let mut visible = visible_set(&cache, &t_ef, cam, cfg.border_margin);
    if visible.is_empty() {
        return Err(TrackError::TrackingLost);
    }
    let (mut residuals, _, _) = residuals_on_subset(&cache, &visible, &inc, &t_ef, &twist, dt, cam);
    let mut cost = robust_cost(&residuals, cfg.huber_gamma);
    let mut lambda = 1e-3;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < cfg.max_iterations && !converged {
        iterations += 1;
        let n = visible.len();
        // forward-difference Jacobian over the 12 parameters on the frozen
        // visible set
        let mut jac = DMatrix::<f64>::zeros(n, 12);
        let eps = 1e-6;
        for k in 0..12 {
            let (t_pert, twist_pert) = if k < 6 {
                let mut delta = Vector6::zeros();
                delta[k] = eps;
                (se3_exp(delta).compose(&t_ef), twist)
            } else {
                let mut nu = twist.as_vector();
                nu[k - 6] += eps;
                (t_ef.clone(), Twist::from_vector(nu))
            };
            let (r_pert, _, _) =
                residuals_on_subset(&cache, &visible, &inc, &t_pert, &twist_pert, dt, cam);
            for i in 0..n {
                jac[(i, k)] = (r_pert[i] - residuals[i]) / eps;
            }
        }

        // IRLS-weighted normal equations
        let mut h = DMatrix::<f64>::zeros(12, 12);
        let mut g = DVector::<f64>::zeros(12);
        for i in 0..n {
            let w = huber_weight(residuals[i], cfg.huber_gamma);
            let row = jac.row(i);
            for a in 0..12 {
                g[a] -= w * row[a] * residuals[i];
                for b in a..12 {
                    h[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..12 {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }

        let mut accepted = false;
        for _ in 0..8 {
            let mut damped = h.clone();
            for a in 0..12 {
                damped[(a, a)] += lambda * h[(a, a)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&g);
            let delta_pose = Vector6::new(step[0], step[1], step[2], step[3], step[4], step[5]);
            let delta_twist = Vector6::new(step[6], step[7], step[8], step[9], step[10], step[11]);
            let t_try = se3_exp(delta_pose).compose(&t_ef);
            let twist_try = Twist::from_vector(twist.as_vector() + delta_twist);

            let visible_try = visible_set(&cache, &t_try, cam, cfg.border_margin);
            if visible_try.is_empty() {
                lambda *= 10.0;
                continue;
            }
            let (r_try, _, _) =
                residuals_on_subset(&cache, &visible_try, &inc, &t_try, &twist_try, dt, cam);
            let cost_try = robust_cost(&r_try, cfg.huber_gamma);
            if cost_try.is_finite() && cost_try < cost {
                let step_norm = step.norm();
                let rel_decrease = (cost - cost_try) / cost.max(1e-300);
                t_ef = t_try;
                twist = twist_try;
                visible = visible_try;
                residuals = r_try;
                cost = cost_try;
                lambda = (lambda / 3.0).max(1e-9);
                accepted = true;
                if step_norm < cfg.step_tol || rel_decrease < cfg.cost_rel_tol {
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

    // New world pose of the event camera and the pose-derived twist used for
    // the next constant-velocity prediction.
    let pose_new = t_wf.compose(&t_ef.inverse());
    let delta_world = state.pose.inverse().compose(&pose_new);
    let twist_new = if dt_gap > 1e-9 {
        Twist::from_vector(se3_log(&delta_world) / dt_gap)
    } else {
        state.twist
    };

    // Divergence tests.
    let mut diverged = state.diverged;
    let mut bad_streak = state.bad_streak;
    if !cost.is_finite() {
        diverged = true;
    }
    if cost > cfg.divergence_cost_ratio * cost_zero {
        bad_streak += 1;
        if bad_streak >= cfg.divergence_streak {
            diverged = true;
        }
    } else {
        bad_streak = 0;
    }
    let median_depth = kf.median_depth().unwrap_or(1.0);
    if delta_world.rotation.angle() > cfg.max_rot_step
        || delta_world.translation.norm() > cfg.max_trans_step_depth_factor * median_depth
    {
        diverged = true;
    }

    let diag = PacketDiagnostics {
        visible_fraction: visible.len() as f64 / cache.len().max(1) as f64,
        rel_rotation: t_ef.rotation.angle(),
        iterations,
        cost,
        cost_zero_motion: cost_zero,
    };
    let new_state = TrackerState {
        kf_id: kf.id,
        pose: pose_new,
        twist: if twist_new.is_finite() { twist_new } else { state.twist },
        t_mid: Some(t_mid),
        last_cost: cost,
        diverged,
        bad_streak,
    };
    Ok((new_state, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn stream(n: usize) -> Vec<Event> {
        (0..n)
            .map(|i| Event::new(i as u64, (i % 10) as u16, (i % 8) as u16, 1))
            .collect()
    }

    #[test]
    fn packetize_examples() {
        let packets = packetize(&stream(40000), 20000, 10000);
        assert_eq!(packets.len(), 3);
        assert_eq!(
            packets.iter().map(|p| p.start).collect::<Vec<_>>(),
            vec![0, 10000, 20000]
        );
        assert!(packetize(&stream(19999), 20000, 10000).is_empty());
        assert_eq!(packetize(&stream(20000), 20000, 10000).len(), 1);
    }

    #[test]
    fn packet_median_time_is_the_middle_event() {
        let packets = packetize(&stream(100), 50, 25);
        assert_eq!(packets[0].t_mid_us, 25);
        assert_eq!(packets[1].t_mid_us, 50);
    }

    #[test]
    fn warp_point_examples() {
        let cam = CameraIntrinsics::pinhole(100.0, 100.0, 50.0, 50.0, 100, 100);
        // identity warp is the identity map
        for rho in [0.1, 0.5, 2.0] {
            let u = warp_point(Vector2::new(30.0, 70.0), rho, &Pose::identity(), &cam).unwrap();
            assert_relative_eq!(u, Vector2::new(30.0, 70.0), epsilon = 1e-9);
        }
        // translation (0.2, 0, 0) moves the principal point by fx * 0.2 / 2
        let t = Pose::from_translation(Vector3::new(0.2, 0.0, 0.0));
        let u = warp_point(Vector2::new(50.0, 50.0), 0.5, &t, &cam).unwrap();
        assert_relative_eq!(u, Vector2::new(60.0, 50.0), epsilon = 1e-9);
        // pushed behind the camera
        let t = Pose::from_translation(Vector3::new(0.0, 0.0, -10.0));
        assert!(warp_point(Vector2::new(50.0, 50.0), 0.5, &t, &cam).is_none());
    }

    #[test]
    fn huber_cost_examples() {
        let g = 0.3;
        assert_eq!(huber_cost(0.0, g), 0.0);
        assert_relative_eq!(huber_cost(g, g), g * g / 2.0, epsilon = 1e-15);
        assert_relative_eq!(huber_cost(2.0 * g, g), 1.5 * g * g, epsilon = 1e-15);
        // continuity of value and first derivative at the threshold
        let eps = 1e-9;
        let d_in = (huber_cost(g, g) - huber_cost(g - eps, g)) / eps;
        let d_out = (huber_cost(g + eps, g) - huber_cost(g, g)) / eps;
        assert_relative_eq!(d_in, d_out, epsilon = 1e-6);
        assert_relative_eq!(huber_cost(g + 1e-12, g), huber_cost(g, g), epsilon = 1e-12);
    }
}
