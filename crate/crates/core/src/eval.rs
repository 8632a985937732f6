//! Trajectory evaluation: timestamp association, closed-form SE3/Sim3
//! alignment and the ATE / rotation RMSE metrics.

use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::geometry::{Pose, Trajectory};
use crate::io::DataError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no overlapping poses within the association window")]
    NoOverlap,
    #[error("alignment needs at least 3 paired positions, got {0}")]
    Underdetermined(usize),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One associated (estimate, ground truth) pose pair.
#[derive(Debug, Clone)]
pub struct PosePair {
    pub t: f64,
    pub est: Pose,
    pub gt: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    SE3,
    Sim3,
}

/// Nearest-timestamp pairing within `max_dt` seconds; unmatched estimate
/// poses are dropped.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<PosePair>, EvalError> {
    assert!(!est.is_empty() && !gt.is_empty(), "trajectories must be nonempty");
    let mut pairs = Vec::new();
    for (t, pose) in est.samples() {
        let idx = gt.nearest(*t).unwrap();
        let (tg, pg) = &gt.samples()[idx];
        if (t - tg).abs() <= max_dt {
            pairs.push(PosePair {
                t: *t,
                est: pose.clone(),
                gt: pg.clone(),
            });
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    Ok(pairs)
}

/// Closed-form least-squares alignment of the estimate onto the ground truth.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Alignment {
    pub fn apply(&self, pose: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * pose.rotation,
            translation: self.scale * (self.rotation * pose.translation) + self.translation,
        }
    }

    /// Scale of the estimate relative to the ground truth (the inverse of
    /// the correction factor applied to the estimate).
    pub fn recovered_scale(&self) -> f64 {
        1.0 / self.scale
    }
}

/// Umeyama alignment of the paired positions; `Sim3` also recovers a global
/// scale. The returned pairs carry the transformed estimate.
pub fn align(pairs: &[PosePair], mode: AlignMode) -> Result<(Vec<PosePair>, Alignment), EvalError> {
    if pairs.len() < 3 {
        return Err(EvalError::Underdetermined(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mean_est: Vector3<f64> = pairs.iter().map(|p| p.est.translation).sum::<Vector3<f64>>() / n;
    let mean_gt: Vector3<f64> = pairs.iter().map(|p| p.gt.translation).sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::<f64>::zeros();
    let mut var_est = 0.0f64;
    for p in pairs {
        let de = p.est.translation - mean_est;
        let dg = p.gt.translation - mean_gt;
        cov += dg * de.transpose();
        var_est += de.norm_squared();
    }
    cov /= n;
    var_est /= n;

    let mut svd = nalgebra::SVD::new(cov, true, true);
    svd.sort_by_singular_values();
    let u = svd.u.ok_or(EvalError::Underdetermined(pairs.len()))?;
    let v_t = svd.v_t.ok_or(EvalError::Underdetermined(pairs.len()))?;
    let mut s = Matrix3::<f64>::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let scale = match mode {
        AlignMode::SE3 => 1.0,
        AlignMode::Sim3 => {
            let trace_ds = (Matrix3::from_diagonal(&svd.singular_values) * s).trace();
            if var_est > 1e-300 {
                trace_ds / var_est
            } else {
                1.0
            }
        }
    };
    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = mean_gt - scale * (rotation * mean_est);
    let alignment = Alignment {
        rotation,
        translation,
        scale,
    };
    let aligned = pairs
        .iter()
        .map(|p| PosePair {
            t: p.t,
            est: alignment.apply(&p.est),
            gt: p.gt.clone(),
        })
        .collect();
    Ok((aligned, alignment))
}

/// Absolute trajectory error: RMS of position differences, in centimeters.
pub fn ate_rmse(pairs: &[PosePair]) -> f64 {
    assert!(!pairs.is_empty());
    let sum: f64 = pairs
        .iter()
        .map(|p| (p.est.translation - p.gt.translation).norm_squared())
        .sum();
    (sum / pairs.len() as f64).sqrt() * 100.0
}

/// Rotation RMSE: RMS geodesic angle of the relative rotation errors, in
/// degrees.
pub fn rot_rmse(pairs: &[PosePair]) -> f64 {
    assert!(!pairs.is_empty());
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            let err = p.gt.rotation.angle_to(&p.est.rotation);
            err * err
        })
        .sum();
    (sum / pairs.len() as f64).sqrt().to_degrees()
}

// ---------------------------------------------------------------------------
// TUM trajectory files
// ---------------------------------------------------------------------------

/// Reads a TUM trajectory: `t tx ty tz qx qy qz qw` per line, '#' comments.
pub fn read_tum(path: &Path) -> Result<Trajectory, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut traj = Trajectory::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 8 {
            return Err(DataError::parse(path, i + 1, format!("expected 8 columns, got {}", cols.len())).into());
        }
        let mut vals = [0.0f64; 8];
        for (k, c) in cols.iter().enumerate() {
            vals[k] = c
                .parse()
                .map_err(|_| DataError::parse(path, i + 1, format!("bad number '{c}'")))?;
        }
        let quat = nalgebra::Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        let pose = Pose::new(
            UnitQuaternion::from_quaternion(quat),
            Vector3::new(vals[1], vals[2], vals[3]),
        );
        traj.push(vals[0], pose)
            .map_err(|_| DataError::parse(path, i + 1, "timestamps must be strictly increasing"))?;
    }
    if traj.is_empty() {
        return Err(DataError::format(path, "no poses").into());
    }
    Ok(traj)
}

pub fn write_tum(path: &Path, traj: &Trajectory) -> Result<(), EvalError> {
    let mut text = String::new();
    for (t, pose) in traj.samples() {
        let q = pose.rotation.as_ref();
        text.push_str(&format!(
            "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\n",
            t,
            pose.translation.x,
            pose.translation.y,
            pose.translation.z,
            q.i,
            q.j,
            q.k,
            q.w
        ));
    }
    std::fs::write(path, text).map_err(|e| EvalError::Data(DataError::io(path, e)))
}
