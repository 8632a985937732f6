//! End-to-end checks of the `edvo` binary: simulate -> run -> evaluate,
//! deterministic reruns and the documented exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::LazyLock;

use tempfile::TempDir;

fn edvo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edvo"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = edvo().args(args).output().expect("spawn edvo");
    assert!(
        out.status.success(),
        "edvo {:?} failed: {}\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    edvo()
        .args(args)
        .output()
        .expect("spawn edvo")
        .status
        .code()
        .unwrap_or(-1)
}

struct Fixture {
    _dir: TempDir,
    dataset: PathBuf,
}

/// One small simulated dataset shared by the tests.
static FIXTURE: LazyLock<Fixture> = LazyLock::new(|| {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("scene.cfg");
    let traj = dir.path().join("traj.cfg");
    std::fs::write(
        &scene,
        "width=160\nheight=120\nfx=110\nfy=110\ncx=80\ncy=60\nambient=0.4\nmu_c=0.5\nsigma_c=0\nseed=7\n\
         plane0_center=0,0,5\nplane0_size=18,12\nplane0_texture=noise\nplane0_texture_px=1024\n\
         plane0_cells=128\nplane0_min=0.03\nplane0_max=0.97\n\
         plane1_center=5,0,3.5\nplane1_yaw_deg=-40\nplane1_size=9,9\nplane1_texture=noise\n\
         plane1_texture_px=768\nplane1_cells=96\nplane1_min=0.05\nplane1_max=0.95\n",
    )
    .unwrap();
    std::fs::write(
        &traj,
        "duration_s=1.5\nfps=20\nrender_fps=800\nv=0.18,0.04,0.08\nomega_deg=1,7,0.5\n\
         osc_v_amp=0.4,0.22,0.18\nosc_v_freq_hz=0.5\nosc_w_amp_deg=3,5,2\nosc_w_freq_hz=0.4\n",
    )
    .unwrap();
    let dataset = dir.path().join("data");
    run_ok(&[
        "simulate",
        "--scene",
        scene.to_str().unwrap(),
        "--trajectory",
        traj.to_str().unwrap(),
        "--out",
        dataset.to_str().unwrap(),
    ]);
    Fixture {
        _dir: dir,
        dataset,
    }
});

fn write_gt_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("pipeline.cfg");
    std::fs::write(&cfg, "use_gt_depth=true\n").unwrap();
    cfg
}

#[test]
fn simulate_writes_the_documented_layout() {
    let ds = &FIXTURE.dataset;
    for file in [
        "calib.txt",
        "events.csv",
        "frames.csv",
        "gt_traj.txt",
        "sim_scene.cfg",
        "sim_traj.cfg",
        "frames/000000.pgm",
        "gt_depth/000000.pgm",
    ] {
        assert!(ds.join(file).exists(), "missing {file}");
    }
    // 1.5 s at 20 FPS
    let frames = std::fs::read_to_string(ds.join("frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 31, "header + 30 frames");
}

#[test]
fn run_then_evaluate_round_trip() {
    let ds = &FIXTURE.dataset;
    let out = TempDir::new().unwrap();
    let cfg = write_gt_config(out.path());
    let run_dir = out.path().join("run");
    let output = run_ok(&[
        "run",
        "--dataset",
        ds.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("completed_fraction=1.000000"), "{stdout}");
    assert!(run_dir.join("traj.txt").exists());
    assert!(run_dir.join("report.txt").exists());
    assert!(run_dir.join("window.csv").exists());

    let eval_out = run_ok(&[
        "evaluate",
        "--est",
        run_dir.join("traj.txt").to_str().unwrap(),
        "--gt",
        ds.join("gt_traj.txt").to_str().unwrap(),
        "--mode",
        "se3",
        "--max-dt",
        "0.05",
    ]);
    let text = String::from_utf8_lossy(&eval_out.stdout);
    let ate: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("ate_cm="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ate < 10.0, "ate {ate} cm:\n{text}");
}

#[test]
fn deterministic_reruns_are_bitwise_identical() {
    let ds = &FIXTURE.dataset;
    let out = TempDir::new().unwrap();
    let cfg = write_gt_config(out.path());
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let run_dir = out.path().join(name);
        run_ok(&[
            "run",
            "--dataset",
            ds.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
        ]);
        bytes.push(std::fs::read(run_dir.join("traj.txt")).unwrap());
    }
    assert!(!bytes[0].is_empty());
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn evaluate_a_file_against_itself_is_zero() {
    let ds = &FIXTURE.dataset;
    let gt = ds.join("gt_traj.txt");
    let out = run_ok(&[
        "evaluate",
        "--est",
        gt.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["ate_cm=0.000000000", "rot_deg=0.000000000", "scale=1.000000000"] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let ds = &FIXTURE.dataset;
    let out = TempDir::new().unwrap();
    let bad_cfg = out.path().join("bad.cfg");
    std::fs::write(&bad_cfg, "events_per_pakcet=100\n").unwrap();
    let code = exit_code(&[
        "run",
        "--dataset",
        ds.to_str().unwrap(),
        "--config",
        bad_cfg.to_str().unwrap(),
        "--out",
        out.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);

    // dataset missing its calibration is a config error naming the problem
    let empty = out.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let code = exit_code(&[
        "run",
        "--dataset",
        empty.to_str().unwrap(),
        "--out",
        out.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn data_errors_exit_with_code_3() {
    let out = TempDir::new().unwrap();
    // broken events.csv in an otherwise valid dataset copy
    let broken = out.path().join("broken");
    std::fs::create_dir_all(&broken).unwrap();
    for f in ["calib.txt", "frames.csv", "gt_traj.txt"] {
        std::fs::copy(FIXTURE.dataset.join(f), broken.join(f)).unwrap();
    }
    std::fs::create_dir_all(broken.join("frames")).unwrap();
    for entry in std::fs::read_dir(FIXTURE.dataset.join("frames")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), broken.join("frames").join(entry.file_name())).unwrap();
    }
    std::fs::write(broken.join("events.csv"), "t_us,x,y,p\n1,2,3,7\n").unwrap();
    let code = exit_code(&[
        "run",
        "--dataset",
        broken.to_str().unwrap(),
        "--out",
        out.path().join("z").to_str().unwrap(),
    ]);
    assert_eq!(code, 3);

    // malformed trajectory line is reported with its line number
    let bad_tum = out.path().join("bad.txt");
    std::fs::write(&bad_tum, "0 0 0 0 0 0 0 1\nnot numbers\n").unwrap();
    let output = edvo()
        .args([
            "evaluate",
            "--est",
            bad_tum.to_str().unwrap(),
            "--gt",
            bad_tum.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains(":2:"));
}
