//! SE(3) poses, camera twists, trajectories and the feature sensitivity
//! matrix that maps a twist to normalized image-point velocity.

use nalgebra::{Matrix3, SMatrix, UnitQuaternion, Vector2, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid depth {0}; depth must be positive")]
    InvalidDepth(f64),
    #[error("trajectory timestamps must be strictly increasing (t = {0})")]
    NonIncreasingTime(f64),
}

/// Rigid transform `T_{a,b}` mapping coordinates of frame `b` into frame `a`,
/// stored as a unit quaternion and a translation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    /// `T_ac = T_ab * T_bc`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rot_inv = self.rotation.inverse();
        Pose {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    pub fn apply(&self, x: Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Tangent-space increment composed on the left: `exp(delta) * self`.
    /// `delta` is ordered (linear, angular).
    pub fn left_update(&self, delta: Vector6<f64>) -> Pose {
        se3_exp(delta).compose(self)
    }

    /// Geodesic rotation angle between two poses, radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn renormalize(&mut self) {
        self.rotation.renormalize_fast();
    }
}

/// Camera twist: linear velocity (m/s) and angular velocity (rad/s) expressed
/// in the camera body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self {
            linear: Vector3::zeros(),
            angular: Vector3::zeros(),
        }
    }

    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn from_vector(v: Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn scaled(&self, s: f64) -> Twist {
        Twist {
            linear: self.linear * s,
            angular: self.angular * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_vector().iter().all(|v| v.is_finite())
    }
}

/// Exponential map of se(3); tangent ordered (linear, angular).
pub fn se3_exp(xi: Vector6<f64>) -> Pose {
    let v = Vector3::new(xi[0], xi[1], xi[2]);
    let w = Vector3::new(xi[3], xi[4], xi[5]);
    let theta = w.norm();
    let rotation = UnitQuaternion::from_scaled_axis(w);
    let translation = if theta < 1e-10 {
        v + 0.5 * w.cross(&v)
    } else {
        let k = skew(w);
        let theta2 = theta * theta;
        let jac = Matrix3::identity()
            + k * ((1.0 - theta.cos()) / theta2)
            + (k * k) * ((theta - theta.sin()) / (theta2 * theta));
        jac * v
    };
    Pose {
        rotation,
        translation,
    }
}

/// Logarithm map of SE(3); inverse of [`se3_exp`].
pub fn se3_log(pose: &Pose) -> Vector6<f64> {
    let w = pose.rotation.scaled_axis();
    let theta = w.norm();
    let v = if theta < 1e-10 {
        pose.translation - 0.5 * w.cross(&pose.translation)
    } else {
        let k = skew(w);
        let theta2 = theta * theta;
        let half = 0.5 * theta;
        let coeff = (1.0 - half * half.cos() / half.sin()) / theta2;
        let jac_inv = Matrix3::identity() - k * 0.5 + (k * k) * coeff;
        jac_inv * pose.translation
    };
    Vector6::new(v.x, v.y, v.z, w.x, w.y, w.z)
}

fn skew(w: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Feature sensitivity matrix: the 2x6 map from a camera twist to the
/// velocity of an image point in normalized coordinates, given the point's
/// depth. Pixel-plane velocity is obtained by scaling the rows by (fx, fy).
pub fn feature_sensitivity(u_norm: Vector2<f64>, depth: f64) -> Result<SMatrix<f64, 2, 6>, GeometryError> {
    if depth <= 0.0 {
        return Err(GeometryError::InvalidDepth(depth));
    }
    let (x, y) = (u_norm.x, u_norm.y);
    let inv_d = 1.0 / depth;
    Ok(SMatrix::<f64, 2, 6>::new(
        -inv_d,
        0.0,
        x * inv_d,
        x * y,
        -(1.0 + x * x),
        y,
        0.0,
        -inv_d,
        y * inv_d,
        1.0 + y * y,
        -x * y,
        -x,
    ))
}

/// Time-stamped camera poses `T_{world,camera}` with strictly increasing
/// timestamps in seconds.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self {
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, pose: Pose) -> Result<(), GeometryError> {
        if let Some((last, _)) = self.samples.last() {
            if t <= *last {
                return Err(GeometryError::NonIncreasingTime(t));
            }
        }
        self.samples.push((t, pose));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(f64, Pose)] {
        &self.samples
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|(t, _)| *t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|(t, _)| *t)
    }

    /// Index of the sample with timestamp nearest to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        if self.samples.is_empty() {
            return None;
        }
        let idx = self
            .samples
            .partition_point(|(s, _)| *s < t)
            .min(self.samples.len() - 1);
        if idx > 0 && (t - self.samples[idx - 1].0).abs() <= (self.samples[idx].0 - t).abs() {
            Some(idx - 1)
        } else {
            Some(idx)
        }
    }

    /// Pose at `t` by interpolating the bracketing samples (slerp on rotation,
    /// lerp on translation). Clamps outside the time range.
    pub fn interpolate(&self, t: f64) -> Option<Pose> {
        if self.samples.is_empty() {
            return None;
        }
        let idx = self.samples.partition_point(|(s, _)| *s < t);
        if idx == 0 {
            return Some(self.samples[0].1.clone());
        }
        if idx >= self.samples.len() {
            return Some(self.samples.last().unwrap().1.clone());
        }
        let (t0, p0) = &self.samples[idx - 1];
        let (t1, p1) = &self.samples[idx];
        let a = (t - t0) / (t1 - t0);
        let rotation = p0.rotation.slerp(&p1.rotation, a);
        let translation = p0.translation * (1.0 - a) + p1.translation * a;
        Some(Pose {
            rotation,
            translation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle: f64 = rng.random_range(-3.0..3.0);
        Pose::new(
            UnitQuaternion::from_scaled_axis(axis.normalize() * angle),
            Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ),
        )
    }

    #[test]
    fn compose_inverse_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let t = random_pose(&mut rng);
            let id = t.compose(&t.inverse());
            assert!(id.rotation.angle() < 1e-12);
            assert!(id.translation.norm() < 1e-12);
        }
    }

    #[test]
    fn apply_respects_composition() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let x = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let lhs = a.compose(&b).apply(x);
            let rhs = a.apply(b.apply(x));
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
        assert_relative_eq!(Pose::identity().apply(Vector3::new(1.0, 2.0, 3.0)), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quaternion_norm_survives_long_composition_chains() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut acc = Pose::identity();
        for _ in 0..1000 {
            acc = acc.compose(&random_pose(&mut rng));
            acc.renormalize();
        }
        assert!((acc.rotation.as_ref().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let xi = Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let back = se3_log(&se3_exp(xi));
            assert_relative_eq!(xi, back, epsilon = 1e-9);
        }
        // small-angle branch
        let xi = Vector6::new(0.1, -0.2, 0.3, 1e-13, -1e-13, 1e-13);
        assert_relative_eq!(se3_log(&se3_exp(xi)), xi, epsilon = 1e-12);
    }

    #[test]
    fn feature_sensitivity_matches_spec_values() {
        let j = feature_sensitivity(Vector2::new(0.0, 0.0), 1.0).unwrap();
        let expect = SMatrix::<f64, 2, 6>::new(
            -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, //
            0.0, -1.0, 0.0, 1.0, 0.0, 0.0,
        );
        assert_relative_eq!(j, expect, epsilon = 1e-15);

        let j = feature_sensitivity(Vector2::new(1.0, 0.0), 2.0).unwrap();
        let expect = SMatrix::<f64, 2, 6>::new(
            -0.5, 0.0, 0.5, 0.0, -2.0, 0.0, //
            0.0, -0.5, 0.0, 1.0, 0.0, -1.0,
        );
        assert_relative_eq!(j, expect, epsilon = 1e-15);

        assert!(feature_sensitivity(Vector2::new(0.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn feature_sensitivity_matches_finite_differences() {
        // Oracle: move the camera along each twist generator, track the
        // projected normalized point numerically with central differences.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let eps = 1e-6;
        for _ in 0..20 {
            let x_cam = Vector3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(1.0..6.0),
            );
            let u_norm = Vector2::new(x_cam.x / x_cam.z, x_cam.y / x_cam.z);
            let j = feature_sensitivity(u_norm, x_cam.z).unwrap();
            for gen in 0..6 {
                let mut xi = Vector6::zeros();
                xi[gen] = eps;
                let before = project_after_motion(x_cam, -xi);
                let after = project_after_motion(x_cam, xi);
                let numeric = (after - before) / (2.0 * eps);
                let analytic = Vector2::new(j[(0, gen)], j[(1, gen)]);
                let scale = analytic.norm().max(1e-6);
                assert!(
                    (numeric - analytic).norm() / scale < 1e-5,
                    "generator {gen}: numeric {numeric:?} vs analytic {analytic:?}"
                );
            }
        }
    }

    /// Camera moves by exp(xi); the static point's camera coordinates follow
    /// the inverse motion.
    fn project_after_motion(x_cam: Vector3<f64>, xi: Vector6<f64>) -> Vector2<f64> {
        let moved = se3_exp(xi).inverse().apply(x_cam);
        Vector2::new(moved.x / moved.z, moved.y / moved.z)
    }

    #[test]
    fn trajectory_rejects_non_increasing_times() {
        let mut traj = Trajectory::new();
        traj.push(0.0, Pose::identity()).unwrap();
        traj.push(0.5, Pose::identity()).unwrap();
        assert!(traj.push(0.5, Pose::identity()).is_err());
        assert!(traj.push(0.4, Pose::identity()).is_err());
        assert_eq!(traj.nearest(0.4), Some(1));
        assert_eq!(traj.nearest(0.1), Some(0));
    }

    proptest! {
        #[test]
        fn group_laws_hold_for_random_poses(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            // associativity
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!((lhs.translation - rhs.translation).norm() < 1e-12);
            prop_assert!(lhs.rotation.angle_to(&rhs.rotation) < 1e-12);
            // inverse
            let id = b.inverse().compose(&b);
            prop_assert!(id.translation.norm() < 1e-12);
            prop_assert!(id.rotation.angle() < 1e-12);
        }
    }
}
