use std::path::PathBuf;
use std::time::Instant;

use anyhow::anyhow;
use clap::Args;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tdflio::registration::{register, RegistrationConfig};
use tdflio::synthetic::three_wall_room;
use tdflio::{BinaryKernel, Pose, TdfGrid};

use crate::failure::{CliResult, Failure};
use crate::{host_budget, ConfigArgs};

/// Side of the cube the insertion cloud is drawn from, meters. Small enough
/// that default kernel footprints stay inside the 10^6-cell tier.
const CLOUD_EXTENT: f64 = 2.0;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Points in the insertion cloud
    #[arg(long, default_value_t = 20_000)]
    points: usize,
    /// Grid sizes as powers of ten of the cell count
    #[arg(long, value_delimiter = ',', default_values_t = [6u32, 7, 8])]
    tiers: Vec<u32>,
    /// Timed repetitions; the fastest is reported
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Interpolation queries
    #[arg(long, default_value_t = 200_000)]
    queries: usize,
    /// Cloud sizes for the registration benchmark
    #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 5_000, 20_000])]
    registration_sizes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the machine-readable report here
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn best_of<F: FnMut()>(repeats: usize, mut f: F) -> f64 {
    (0..repeats.max(1))
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn cube_grid(
    exponent: u32,
    res: f64,
    bits: u32,
    budget: u64,
) -> Result<TdfGrid, tdflio::tdf::TdfError> {
    let side = 10f64.powf(exponent as f64 / 3.0).round().max(1.0) as usize;
    let half = side as f64 * res / 2.0;
    TdfGrid::with_dims(
        Point3::new(-half, -half, -half),
        [side; 3],
        res,
        bits,
        budget,
    )
}

fn insertion_rows(
    args: &BenchArgs,
    kernel: &BinaryKernel,
    res: f64,
    budget: u64,
    cloud: &[Point3<f64>],
) -> (Vec<Value>, Option<TdfGrid>) {
    let mut rows = Vec::new();
    let mut last = None;
    for &e in &args.tiers {
        let mut grid = match cube_grid(e, res, kernel.bits(), budget) {
            Ok(g) => g,
            Err(err) => {
                rows.push(json!({ "tier": e, "skipped": err.to_string() }));
                continue;
            }
        };
        let secs = if cloud.is_empty() {
            0.0
        } else {
            best_of(args.repeats, || {
                grid.insert_cloud(kernel, cloud);
            })
        };
        let per_point = (!cloud.is_empty()).then(|| secs / cloud.len() as f64);
        rows.push(json!({
            "tier": e,
            "cells": grid.len(),
            "points": cloud.len(),
            "update_s": secs,
            "per_point_s": per_point,
        }));
        last = Some(grid);
    }
    (rows, last)
}

fn interpolation_row(args: &BenchArgs, grid: Option<&TdfGrid>, rng: &mut ChaCha8Rng) -> Value {
    let Some(grid) = grid else {
        return json!({ "skipped": "no grid was built" });
    };
    let h = CLOUD_EXTENT / 2.0;
    let queries: Vec<Point3<f64>> = (0..args.queries)
        .map(|_| {
            Point3::new(
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(-h..h),
            )
        })
        .collect();
    let mut hits = 0usize;
    let secs = best_of(args.repeats, || {
        hits = queries
            .iter()
            .filter(|q| grid.distance_and_gradient_at(q).is_some())
            .count();
    });
    let per_query = (!queries.is_empty()).then(|| secs / queries.len() as f64);
    json!({
        "grid_cells": grid.len(),
        "queries": queries.len(),
        "valid": hits,
        "total_s": secs,
        "per_query_s": per_query,
        "queries_per_s": per_query.map(|p| 1.0 / p),
    })
}

fn registration_rows(
    args: &BenchArgs,
    kernel: &BinaryKernel,
    res: f64,
    budget: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<Value> {
    let room_size = 4.0;
    let dims = [((room_size + 2.0) / res).ceil() as usize; 3];
    let mut grid = match TdfGrid::with_dims(
        Point3::new(-1.0, -1.0, -1.0),
        dims,
        res,
        kernel.bits(),
        budget,
    ) {
        Ok(g) => g,
        Err(e) => return vec![json!({ "skipped": e.to_string() })],
    };
    grid.insert_cloud(kernel, &three_wall_room(50_000, room_size, room_size, rng));
    let truth = Pose::from_translation(Vector3::new(2.0, 2.0, 1.5));
    let cfg = RegistrationConfig::default();
    let mut rows = Vec::new();
    for &n in &args.registration_sizes {
        let cloud: Vec<Point3<f64>> = three_wall_room(n, room_size, room_size, rng)
            .iter()
            .map(|p| truth.inverse().transform_point(p))
            .collect();
        let initial = truth.retract(
            &Vector3::new(0.1, -0.05, 0.05),
            &Vector3::new(0.0, 0.0, 2f64.to_radians()),
        );
        let mut outcome = None;
        let secs = best_of(args.repeats, || {
            outcome = Some(register(&cloud, &grid, &initial, &cfg));
        });
        rows.push(match outcome.expect("ran at least once") {
            Ok(r) => json!({
                "points": n,
                "time_s": secs,
                "iterations": r.iterations,
                "translation_error_m": (r.pose.t - truth.t).norm(),
            }),
            Err(e) => json!({ "points": n, "time_s": null, "note": e.to_string() }),
        });
    }
    rows
}

fn fmt_opt(v: &Value, scale: f64, unit: &str) -> String {
    v.as_f64()
        .map_or("-".into(), |x| format!("{:.3} {unit}", x * scale))
}

fn print_human(report: &Value) {
    let cell = |v: &Value| v.to_string();
    println!(
        "map insertion, kernel {}",
        report["kernel"].as_str().unwrap_or("?")
    );
    println!(
        "{:>6} {:>12} {:>8} {:>14} {:>14}",
        "tier", "cells", "points", "update", "per point"
    );
    for r in report["insertion"].as_array().into_iter().flatten() {
        if let Some(note) = r["skipped"].as_str() {
            println!("{:>6} skipped: {note}", format!("1e{}", r["tier"]));
            continue;
        }
        println!(
            "{:>6} {:>12} {:>8} {:>14} {:>14}",
            format!("1e{}", r["tier"]),
            cell(&r["cells"]),
            cell(&r["points"]),
            fmt_opt(&r["update_s"], 1e3, "ms"),
            fmt_opt(&r["per_point_s"], 1e6, "us"),
        );
    }
    if let Some(ratio) = report["per_point_ratio"].as_f64() {
        println!("per-point time, largest / smallest tier: {ratio:.2}");
    }
    let q = &report["interpolation"];
    match q["skipped"].as_str() {
        Some(note) => println!("interpolation skipped: {note}"),
        None => println!(
            "interpolation: {} queries, {} per query, {} valid",
            cell(&q["queries"]),
            fmt_opt(&q["per_query_s"], 1e9, "ns"),
            cell(&q["valid"])
        ),
    }
    println!("registration");
    println!("{:>8} {:>12} {:>6}", "points", "time", "iters");
    for r in report["registration"].as_array().into_iter().flatten() {
        if let Some(note) = r["skipped"].as_str() {
            println!("skipped: {note}");
            continue;
        }
        match r["note"].as_str() {
            Some(note) => println!("{:>8} {:>12} {note}", cell(&r["points"]), "-"),
            None => println!(
                "{:>8} {:>12} {:>6}",
                cell(&r["points"]),
                fmt_opt(&r["time_s"], 1e3, "ms"),
                cell(&r["iterations"])
            ),
        }
    }
}

pub fn bench(args: &BenchArgs) -> CliResult {
    let cfg = args.config.load()?;
    let kernel = cfg.new_kernel()?;
    let res = cfg.map.resolution;
    let budget = host_budget().min(cfg.memory_budget_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let h = CLOUD_EXTENT / 2.0;
    let cloud: Vec<Point3<f64>> = (0..args.points)
        .map(|_| {
            Point3::new(
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(-h..h),
            )
        })
        .collect();

    let (insertion, grid) = insertion_rows(args, &kernel, res, budget, &cloud);
    let per_point: Vec<f64> = insertion
        .iter()
        .filter_map(|r| r["per_point_s"].as_f64())
        .collect();
    let ratio = (per_point.len() >= 2).then(|| per_point[per_point.len() - 1] / per_point[0]);
    let interpolation = interpolation_row(args, grid.as_ref(), &mut rng);
    drop(grid);
    let registration = registration_rows(args, &kernel, res, budget, &mut rng);

    let report = json!({
        "kernel": format!("r={} bits={}", cfg.kernel.radius, cfg.kernel.bits),
        "resolution_m": res,
        "threads": rayon::current_num_threads(),
        "insertion": insertion,
        "per_point_ratio": ratio,
        "interpolation": interpolation,
        "registration": registration,
    });
    print_human(&report);
    if let Some(p) = &args.json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(p, text + "\n")
            .map_err(|e| Failure::input(anyhow!("{}: {e}", p.display())))?;
    }
    Ok(())
}
