//! Command-line front-end: dataset runs, simulation, trajectory evaluation
//! and the sensitivity-study sweeps.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 tracking failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use edvo_core::config::{self, PipelineConfig};
use edvo_core::eval::{self, AlignMode};
use edvo_core::pipeline::{self, PipelineError};
use edvo_core::simconfig;
use edvo_core::simulator;
use edvo_core::study;

#[derive(Parser)]
#[command(name = "edvo", about = "Direct visual odometry with events and frames", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Se3,
    Sim3,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Depth,
    Contrast,
    Framerate,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a dataset directory.
    Run {
        /// Dataset directory (calib.txt, events.csv|bin, frames/, frames.csv).
        #[arg(long)]
        dataset: PathBuf,
        /// key=value configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (traj.txt, report.txt, keyframes/).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset from scene and trajectory configs.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write events.bin instead of events.csv.
        #[arg(long)]
        bin_events: bool,
    },
    /// Compare an estimated TUM trajectory against ground truth.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "sim3")]
        mode: Mode,
        /// Association window, seconds.
        #[arg(long, default_value_t = 0.01)]
        max_dt: f64,
    },
    /// Sensitivity sweeps over depth noise, contrast noise or frame rate.
    Study {
        #[arg(long, value_enum)]
        kind: StudyKind,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}

fn load_cfg(path: &Option<PathBuf>) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => Ok(config::load_config(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn dispatch(command: Command) -> Result<ExitCode, PipelineError> {
    match command {
        Command::Run {
            dataset,
            config: cfg_path,
            out,
        } => {
            let cfg = load_cfg(&cfg_path)?;
            let ds = pipeline::load_dataset(&dataset, cfg.log_offset)?;
            let result = pipeline::run_pipeline(&ds, &cfg)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| PipelineError::Dataset(format!("{}: {e}", out.display())))?;
            pipeline::write_outputs(&out, &result)?;
            pipeline::write_window_dump(&out.join("window.csv"), &result.window)?;
            print!("{}", result.report.to_text());
            if let Some(p) = result.report.tracking_lost_at_packet {
                eprintln!("error: tracking lost at packet {p}");
                return Ok(ExitCode::from(4));
            }
            if result.report.diverged {
                eprintln!(
                    "error: tracking diverged at packet {}",
                    result.report.diverged_at_packet.unwrap_or(0)
                );
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            scene,
            trajectory,
            out,
            bin_events,
        } => {
            let scene_text = std::fs::read_to_string(&scene)
                .map_err(|e| PipelineError::Dataset(format!("{}: {e}", scene.display())))?;
            let traj_text = std::fs::read_to_string(&trajectory)
                .map_err(|e| PipelineError::Dataset(format!("{}: {e}", trajectory.display())))?;
            let scene_cfg = simconfig::parse_scene_config(&scene_text)?;
            let traj_cfg = simconfig::parse_traj_config(&traj_text)?;
            let ds = simconfig::simulate_dataset(&scene_cfg, &traj_cfg);
            std::fs::create_dir_all(&out)
                .map_err(|e| PipelineError::Dataset(format!("{}: {e}", out.display())))?;
            simulator::export_dataset(&ds, &out, bin_events)?;
            // keep the generating configs with the dataset so the studies can
            // regenerate events
            std::fs::copy(&scene, out.join("sim_scene.cfg"))
                .map_err(|e| PipelineError::Dataset(format!("{}: {e}", scene.display())))?;
            std::fs::copy(&trajectory, out.join("sim_traj.cfg"))
                .map_err(|e| PipelineError::Dataset(format!("{}: {e}", trajectory.display())))?;
            println!(
                "events={} frames={} aliasing_warning={}",
                ds.events.len(),
                ds.frames.len(),
                ds.metadata.aliasing_warning
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            est,
            gt,
            mode,
            max_dt,
        } => {
            let est_traj = eval::read_tum(&est).map_err(eval_to_pipeline)?;
            let gt_traj = eval::read_tum(&gt).map_err(eval_to_pipeline)?;
            let pairs = eval::associate(&est_traj, &gt_traj, max_dt).map_err(eval_to_pipeline)?;
            let mode = match mode {
                Mode::Se3 => AlignMode::SE3,
                Mode::Sim3 => AlignMode::Sim3,
            };
            let (aligned, alignment) = eval::align(&pairs, mode).map_err(eval_to_pipeline)?;
            println!("pairs={}", aligned.len());
            println!("ate_cm={:.9}", eval::ate_rmse(&aligned));
            println!("rot_deg={:.9}", eval::rot_rmse(&aligned));
            println!("scale={:.9}", alignment.recovered_scale());
            Ok(ExitCode::SUCCESS)
        }
        Command::Study {
            kind,
            dataset,
            config: cfg_path,
            out,
            seeds,
        } => {
            let cfg = load_cfg(&cfg_path)?;
            let seed_list: Vec<u64> = (0..seeds).collect();
            let rows = match kind {
                StudyKind::Depth => {
                    let ds = pipeline::load_dataset(&dataset, cfg.log_offset)?;
                    study::depth_study(&ds, &cfg, &study::DEPTH_LEVELS, &seed_list)?
                }
                StudyKind::Contrast => {
                    study::contrast_study(&dataset, &cfg, &study::CONTRAST_SIGMAS, &seed_list)?
                }
                StudyKind::Framerate => {
                    study::framerate_study(&dataset, &cfg, &study::FRAMERATE_LEVELS, &seed_list)?
                }
            };
            study::write_study_csv(&out, &rows)?;
            for r in &rows {
                println!(
                    "level={} seed={} ate_cm={:.4} rot_deg={:.4} completed={:.3} diverged={}",
                    r.level, r.seed, r.ate_cm, r.rot_deg, r.completed_fraction, r.diverged
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn eval_to_pipeline(e: eval::EvalError) -> PipelineError {
    match e {
        eval::EvalError::Data(d) => PipelineError::Data(d),
        other => PipelineError::Dataset(other.to_string()),
    }
}
