use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use tdflio::dataset::{
    evaluate_ate, read_scans, read_trajectory, write_imu, write_scans, write_trajectory, AteReport,
    DatasetManifest, TrajectoryRecord, ASSOCIATION_WINDOW,
};
use tdflio::pipeline;
use tdflio::synthetic::{
    corridor, corridor_config, generate_sequence, CorridorMotion, SequenceConfig,
};
use tdflio::TdfGrid;

use crate::failure::{CliResult, Failure};
use crate::{clamp_budget, host_budget, ConfigArgs};

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Dataset manifest (TOML)
    #[arg(long, short = 'm')]
    manifest: PathBuf,
    /// Output directory
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Keyframe translation threshold, meters (overrides keyframe.t_th)
    #[arg(long)]
    t_th: Option<f64>,
    /// Keyframe rotation threshold, degrees (overrides keyframe.q_th)
    #[arg(long)]
    q_th: Option<f64>,
    /// Also write the final map as map.ftdf and map.ply
    #[arg(long)]
    snapshot: bool,
}

#[derive(Args, Debug)]
pub struct MapArgs {
    /// Trajectory file with one pose per scan, in scan order
    #[arg(long)]
    poses: PathBuf,
    /// Scan log file or directory of scan files
    #[arg(long)]
    scans: PathBuf,
    /// Output snapshot path
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Zero-level point cloud path [default: snapshot path with .ply]
    #[arg(long)]
    ply: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Estimated trajectory
    estimate: PathBuf,
    /// Ground-truth trajectory
    ground_truth: PathBuf,
    /// Also write the report as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Map snapshot
    snapshot: PathBuf,
    /// Output PLY file
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Corridor length, meters
    #[arg(long, default_value_t = 10.0)]
    length: f64,
    /// Travel speed, m/s
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long, default_value_t = 9)]
    seed: u64,
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::input(anyhow!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

pub fn run(args: &RunArgs) -> CliResult {
    let mut cfg = args.config.load()?;
    for (key, v) in [("keyframe.t_th", args.t_th), ("keyframe.q_th", args.q_th)] {
        if let Some(v) = v {
            cfg.apply_override(&format!("{key}={v}"))
                .map_err(|e| Failure::input(anyhow!(e)))?;
        }
    }
    let manifest = DatasetManifest::load(&args.manifest)?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let dir = &args.out;
    write_file(&dir.join("config.toml"), cfg.to_toml())?;
    clamp_budget(&mut cfg);

    let out = pipeline::run(manifest.imu()?, manifest.scans()?, &cfg)?;
    if out.trajectory.is_empty() {
        return Err(Failure::insufficient(anyhow!(
            "{}: no scans to process",
            manifest.scans.display()
        )));
    }
    write_trajectory(&out.trajectory, &dir.join("trajectory.txt"))?;
    let keyframes: Vec<TrajectoryRecord> = out
        .keyframes
        .iter()
        .map(|k| TrajectoryRecord::new(k.t, k.pose))
        .collect();
    write_trajectory(&keyframes, &dir.join("keyframes.txt"))?;
    write_file(&dir.join("timing.json"), out.timing.to_json())?;
    write_file(&dir.join("timing.txt"), out.timing.to_table())?;
    if args.snapshot {
        out.grid.save_snapshot(&dir.join("map.ftdf"))?;
        out.grid.save_zero_level_ply(&dir.join("map.ply"))?;
    }

    println!(
        "scans: {}  keyframes: {}  degraded: {}",
        out.trajectory.len(),
        out.keyframes.len(),
        out.degraded_scans()
    );
    print!("{}", out.timing.to_table());
    if let Some(gt) = manifest.ground_truth()? {
        match evaluate_ate(&out.trajectory, &gt) {
            Ok(r) => println!("ATE RMSE: {:.6} m ({} poses)", r.rmse, r.pairs),
            Err(e) => log::warn!("ground truth not evaluated: {e}"),
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn map(args: &MapArgs) -> CliResult {
    let mut cfg = args.config.load()?;
    clamp_budget(&mut cfg);
    let poses = read_trajectory(&args.poses)?;
    let kernel = cfg.new_kernel()?;
    let mut grid = cfg.new_grid()?;
    let mut fused = 0;
    for (i, scan) in read_scans(&args.scans)?.enumerate() {
        let scan = scan?;
        let Some(rec) = poses.get(i) else {
            return Err(Failure::input(anyhow!(
                "{} has {} poses but {} holds more scans",
                args.poses.display(),
                poses.len(),
                args.scans.display()
            )));
        };
        if (rec.t - scan.t_end).abs() > ASSOCIATION_WINDOW {
            log::warn!(
                "scan {i} ends at {} but its pose is at {}",
                scan.t_end,
                rec.t
            );
        }
        let world: Vec<_> = scan
            .points
            .iter()
            .map(|p| rec.pose.transform_point(p))
            .collect();
        let stats = grid.insert_cloud(&kernel, &world);
        if stats.out_of_bounds > 0 {
            log::warn!("scan {i}: {} points outside the map", stats.out_of_bounds);
        }
        fused += 1;
    }
    if fused == 0 {
        return Err(Failure::insufficient(anyhow!(
            "{}: no scans to fuse",
            args.scans.display()
        )));
    }
    if poses.len() > fused {
        log::warn!("{} poses left unused", poses.len() - fused);
    }
    grid.save_snapshot(&args.out)?;
    let ply = args
        .ply
        .clone()
        .unwrap_or_else(|| args.out.with_extension("ply"));
    grid.save_zero_level_ply(&ply)?;
    println!(
        "fused {fused} scans, {} occupied cells; wrote {} and {}",
        grid.occupied_count(),
        args.out.display(),
        ply.display()
    );
    Ok(())
}

fn ate_text(r: &AteReport) -> String {
    let mut s = format!("ATE RMSE: {:.6} m\n", r.rmse);
    s += &format!(
        "pairs: {}  mean: {:.6}  median: {:.6}  max: {:.6}\n",
        r.pairs, r.mean, r.median, r.max
    );
    s += &format!(
        "{:<5}{:>12}{:>12}{:>12}{:>12}\n",
        "axis", "mean", "std", "rmse", "max|e|"
    );
    for (name, a) in ["x", "y", "z"].iter().zip(&r.axes) {
        s += &format!(
            "{name:<5}{:>12.6}{:>12.6}{:>12.6}{:>12.6}\n",
            a.mean, a.std, a.rmse, a.max_abs
        );
    }
    s
}

fn ate_json(r: &AteReport) -> serde_json::Value {
    let axes: Vec<_> = ["x", "y", "z"]
        .iter()
        .zip(&r.axes)
        .map(|(n, a)| {
            serde_json::json!({
                "axis": n, "mean": a.mean, "std": a.std, "rmse": a.rmse, "max_abs": a.max_abs
            })
        })
        .collect();
    serde_json::json!({
        "rmse": r.rmse,
        "mean": r.mean,
        "median": r.median,
        "max": r.max,
        "pairs": r.pairs,
        "axes": axes,
    })
}

pub fn eval(args: &EvalArgs) -> CliResult {
    let est = read_trajectory(&args.estimate)?;
    let gt = read_trajectory(&args.ground_truth)?;
    let report = evaluate_ate(&est, &gt)?;
    print!("{}", ate_text(&report));
    if let Some(p) = &args.json {
        let text = serde_json::to_string_pretty(&ate_json(&report)).expect("report serializes");
        write_file(p, text + "\n")?;
    }
    Ok(())
}

pub fn export(args: &ExportArgs) -> CliResult {
    let grid = TdfGrid::load_snapshot(&args.snapshot, host_budget())?;
    grid.save_zero_level_ply(&args.out)?;
    println!(
        "{} zero-level points written to {}",
        grid.occupied_count(),
        args.out.display()
    );
    Ok(())
}

pub fn synth(args: &SynthArgs) -> CliResult {
    if !(args.length > 0.0 && args.speed > 0.0) {
        return Err(Failure::input(anyhow!(
            "--length and --speed must be positive"
        )));
    }
    let motion = CorridorMotion::cruise(args.speed);
    let seq_cfg = SequenceConfig {
        duration: motion.time_to_travel(args.length),
        seed: args.seed,
        ..SequenceConfig::default()
    };
    let seq = generate_sequence(&corridor(args.length, args.seed), &motion, &seq_cfg);
    let dir = &args.out;
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    write_scans(&seq.scans, &dir.join("scans.bin"))?;
    write_imu(&seq.imu, &dir.join("imu.csv"))?;
    write_trajectory(&seq.ground_truth, &dir.join("ground_truth.txt"))?;
    write_file(
        &dir.join("manifest.toml"),
        "scans = \"scans.bin\"\nimu = \"imu.csv\"\nground_truth = \"ground_truth.txt\"\n",
    )?;
    write_file(
        &dir.join("config.toml"),
        corridor_config(args.length).to_toml(),
    )?;
    println!(
        "{} scans, {} IMU samples written to {}",
        seq.scans.len(),
        seq.imu.len(),
        dir.display()
    );
    Ok(())
}
