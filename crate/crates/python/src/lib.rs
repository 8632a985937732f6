//! Python bindings for the main odometry types and operations.
//!
//! Build with `cargo build --release -p edvo-python`; the resulting
//! `libedvo.so` imports as the `edvo` module once renamed to `edvo.so`
//! (`python/smoke_test.py` does this automatically).

use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use edvo_core::camera::CameraIntrinsics as CoreIntrinsics;
use edvo_core::config;
use edvo_core::egm;
use edvo_core::eval::{self, AlignMode};
use edvo_core::event::Event as CoreEvent;
use edvo_core::geometry;
use edvo_core::image::ImageF64;
use edvo_core::pipeline;
use edvo_core::simconfig;
use edvo_core::simulator;
use edvo_core::tracking;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Pinhole camera with radial-tangential distortion.
#[pyclass(name = "CameraIntrinsics", skip_from_py_object)]
#[derive(Clone)]
struct PyCameraIntrinsics {
    inner: CoreIntrinsics,
}

#[pymethods]
impl PyCameraIntrinsics {
    #[new]
    #[pyo3(signature = (fx, fy, cx, cy, width, height, k1=0.0, k2=0.0, p1=0.0, p2=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        k1: f64,
        k2: f64,
        p1: f64,
        p2: f64,
    ) -> Self {
        let mut inner = CoreIntrinsics::pinhole(fx, fy, cx, cy, width, height);
        inner.k1 = k1;
        inner.k2 = k2;
        inner.p1 = p1;
        inner.p2 = p2;
        Self { inner }
    }

    fn project(&self, x: (f64, f64, f64)) -> PyResult<(f64, f64)> {
        let u = self
            .inner
            .project(Vector3::new(x.0, x.1, x.2))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((u.x, u.y))
    }

    fn back_project(&self, u: (f64, f64), depth: f64) -> PyResult<(f64, f64, f64)> {
        let x = self
            .inner
            .back_project(Vector2::new(u.0, u.1), depth)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((x.x, x.y, x.z))
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    fn __repr__(&self) -> String {
        format!("CameraIntrinsics({})", self.inner)
    }
}

/// Rigid transform T_{a,b}: quaternion (x, y, z, w) plus translation.
#[pyclass(name = "Pose", skip_from_py_object)]
#[derive(Clone)]
struct PyPose {
    inner: geometry::Pose,
}

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (quat_xyzw=(0.0, 0.0, 0.0, 1.0), translation=(0.0, 0.0, 0.0)))]
    fn new(quat_xyzw: (f64, f64, f64, f64), translation: (f64, f64, f64)) -> Self {
        let q = nalgebra::Quaternion::new(quat_xyzw.3, quat_xyzw.0, quat_xyzw.1, quat_xyzw.2);
        Self {
            inner: geometry::Pose::new(
                UnitQuaternion::from_quaternion(q),
                Vector3::new(translation.0, translation.1, translation.2),
            ),
        }
    }

    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: geometry::Pose::identity(),
        }
    }

    fn compose(&self, other: &PyPose) -> PyPose {
        PyPose {
            inner: self.inner.compose(&other.inner),
        }
    }

    fn inverse(&self) -> PyPose {
        PyPose {
            inner: self.inner.inverse(),
        }
    }

    fn apply(&self, x: (f64, f64, f64)) -> (f64, f64, f64) {
        let y = self.inner.apply(Vector3::new(x.0, x.1, x.2));
        (y.x, y.y, y.z)
    }

    #[getter]
    fn translation(&self) -> (f64, f64, f64) {
        let t = self.inner.translation;
        (t.x, t.y, t.z)
    }

    #[getter]
    fn quat_xyzw(&self) -> (f64, f64, f64, f64) {
        let q = self.inner.rotation.as_ref();
        (q.i, q.j, q.k, q.w)
    }

    fn rotation_angle(&self) -> f64 {
        self.inner.rotation.angle()
    }

    fn __repr__(&self) -> String {
        let t = self.inner.translation;
        format!("Pose(t=[{:.4}, {:.4}, {:.4}])", t.x, t.y, t.z)
    }
}

/// 2x6 feature sensitivity matrix at a normalized point and depth.
#[pyfunction]
fn feature_sensitivity(u_norm: (f64, f64), depth: f64) -> PyResult<Vec<Vec<f64>>> {
    let j = geometry::feature_sensitivity(Vector2::new(u_norm.0, u_norm.1), depth)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((0..2)
        .map(|r| (0..6).map(|c| j[(r, c)]).collect())
        .collect())
}

#[pyfunction]
fn gaussian_weights(n: usize, sigma: f64) -> Vec<f64> {
    egm::gaussian_weights(n, sigma)
}

#[pyfunction]
fn huber_cost(r: f64, gamma: f64) -> f64 {
    tracking::huber_cost(r, gamma)
}

/// Accumulates events (t_us, x, y, polarity) into a brightness-increment
/// image; returns (flat row-major values, width, height).
#[pyfunction]
#[pyo3(signature = (events, contrast, width, height, gaussian_sigma=None))]
fn accumulate_events(
    events: Vec<(u64, u16, u16, i8)>,
    contrast: f64,
    width: usize,
    height: usize,
    gaussian_sigma: Option<f64>,
) -> PyResult<(Vec<f64>, usize, usize)> {
    let events: Vec<CoreEvent> = events
        .into_iter()
        .map(|(t, x, y, p)| CoreEvent::new(t, x, y, p))
        .collect();
    let weights = gaussian_sigma.map(|s| egm::gaussian_weights(events.len(), s));
    let inc = egm::accumulate(&events, contrast, weights.as_deref(), width, height)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((inc.values.data().to_vec(), width, height))
}

/// Packet (start, len, t_mid_us) tuples for a stream of event timestamps.
#[pyfunction]
fn packetize(timestamps_us: Vec<u64>, n_pkt: usize, stride: usize) -> Vec<(usize, usize, u64)> {
    let events: Vec<CoreEvent> = timestamps_us
        .into_iter()
        .map(|t| CoreEvent::new(t, 0, 0, 1))
        .collect();
    tracking::packetize(&events, n_pkt, stride)
        .into_iter()
        .map(|p| (p.start, p.len, p.t_mid_us))
        .collect()
}

/// Catmull-Rom bicubic sample of a row-major image.
#[pyfunction]
fn sample_cubic(values: Vec<f64>, width: usize, height: usize, x: f64, y: f64) -> Option<f64> {
    ImageF64::from_vec(width, height, values).sample_cubic(x, y)
}

/// Aligns an estimated TUM trajectory to ground truth and reports
/// (ate_cm, rot_deg, scale, pairs).
#[pyfunction]
#[pyo3(signature = (est_path, gt_path, mode="sim3", max_dt=0.01))]
fn evaluate_trajectories(
    est_path: PathBuf,
    gt_path: PathBuf,
    mode: &str,
    max_dt: f64,
) -> PyResult<(f64, f64, f64, usize)> {
    let est = eval::read_tum(Path::new(&est_path)).map_err(err)?;
    let gt = eval::read_tum(Path::new(&gt_path)).map_err(err)?;
    let pairs = eval::associate(&est, &gt, max_dt).map_err(err)?;
    let mode = match mode {
        "se3" => AlignMode::SE3,
        "sim3" => AlignMode::Sim3,
        other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    };
    let (aligned, alignment) = eval::align(&pairs, mode).map_err(err)?;
    Ok((
        eval::ate_rmse(&aligned),
        eval::rot_rmse(&aligned),
        alignment.recovered_scale(),
        aligned.len(),
    ))
}

/// Simulates a dataset from scene/trajectory config texts into `out_dir`.
#[pyfunction]
#[pyo3(signature = (scene_text, traj_text, out_dir, bin_events=false))]
fn simulate_dataset(
    scene_text: &str,
    traj_text: &str,
    out_dir: PathBuf,
    bin_events: bool,
) -> PyResult<usize> {
    let scene_cfg = simconfig::parse_scene_config(scene_text).map_err(err)?;
    let traj_cfg = simconfig::parse_traj_config(traj_text).map_err(err)?;
    let ds = simconfig::simulate_dataset(&scene_cfg, &traj_cfg);
    std::fs::create_dir_all(&out_dir).map_err(err)?;
    simulator::export_dataset(&ds, &out_dir, bin_events).map_err(err)?;
    std::fs::write(out_dir.join("sim_scene.cfg"), scene_text).map_err(err)?;
    std::fs::write(out_dir.join("sim_traj.cfg"), traj_text).map_err(err)?;
    Ok(ds.events.len())
}

/// Runs the pipeline on a dataset directory; writes outputs and returns the
/// report as a dict-like list of (key, value) strings.
#[pyfunction]
#[pyo3(signature = (dataset_dir, out_dir, config_text=None))]
fn run_dataset(
    dataset_dir: PathBuf,
    out_dir: PathBuf,
    config_text: Option<&str>,
) -> PyResult<Vec<(String, String)>> {
    let cfg = match config_text {
        Some(text) => config::parse_config(text).map_err(err)?,
        None => config::PipelineConfig::default(),
    };
    let ds = pipeline::load_dataset(&dataset_dir, cfg.log_offset).map_err(err)?;
    let result = pipeline::run_pipeline(&ds, &cfg).map_err(err)?;
    std::fs::create_dir_all(&out_dir).map_err(err)?;
    pipeline::write_outputs(&out_dir, &result).map_err(err)?;
    Ok(result
        .report
        .to_text()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect())
}

#[pymodule]
fn edvo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCameraIntrinsics>()?;
    m.add_class::<PyPose>()?;
    m.add_function(wrap_pyfunction!(feature_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_weights, m)?)?;
    m.add_function(wrap_pyfunction!(huber_cost, m)?)?;
    m.add_function(wrap_pyfunction!(accumulate_events, m)?)?;
    m.add_function(wrap_pyfunction!(packetize, m)?)?;
    m.add_function(wrap_pyfunction!(sample_cubic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_trajectories, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_dataset, m)?)?;
    Ok(())
}
