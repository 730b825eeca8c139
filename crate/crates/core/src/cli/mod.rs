//! The `ben` command line.
//!
//! Exit codes: 0 success, 1 certificate not solved or a check failed,
//! 2 configuration error, 3 numerical failure, 4 I/O error.

mod config;

pub use config::{InitialProfile, RunConfig};

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::convex_core::{eval_conjugate, PowerDensity};
use crate::discretization::Trajectory;
use crate::energy::{energy_and_gradient, eval_energy, trajectory_norm, Certificate, EnergyReport};
use crate::error::{Error, Result};
use crate::format::{g17, json_string};
use crate::models::check_condition;
use crate::solver::{compare, implicit_baseline, initial_trajectory, minimize, SolveOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNSOLVED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "ben", version, about = "Space-time variational solver for parabolic evolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimize the energy and certify the result.
    Solve {
        config: PathBuf,
        /// Output directory, overriding `outputs.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the implicit-Euler baseline and report its energy.
    Baseline {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the structural hypotheses of the configured model.
    Verify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the scalar conjugate ψ* on a uniform grid of y.
    ConjugateTable {
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        max: f64,
        #[arg(long, default_value_t = 41)]
        steps: usize,
        /// CSV destination.
        #[arg(long, default_value = "conjugate_table.csv")]
        out: PathBuf,
    },
    /// Compare the energy gradient with central differences.
    Gradcheck {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        directions: usize,
        #[arg(long, default_value_t = 5)]
        trajectories: usize,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::UnknownCondition(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Json(_) => EXIT_IO,
        _ => EXIT_SOLVE,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BEN_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::config("BEN_THREADS", format!("expected a positive integer, got `{v}`")))?;
        // A pool may already exist when running in-process (tests); keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Solve { config, out } => run_solve(&config, out.as_deref()),
        Command::Baseline { config, out } => run_baseline(&config, out.as_deref()),
        Command::Verify { config, out } => run_verify(&config, out.as_deref()),
        Command::ConjugateTable {
            q,
            a,
            eps,
            min,
            max,
            steps,
            out,
        } => run_conjugate_table(q, a, eps, (min, max), steps, &out),
        Command::Gradcheck {
            config,
            directions,
            trajectories,
        } => run_gradcheck(&config, directions, trajectories),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map_or_else(|| cfg.outputs.clone(), Path::to_path_buf);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn report_value(report: &EnergyReport) -> Value {
    serde_json::to_value(report).expect("plain struct")
}

fn write_history(path: &Path, out: &SolveOutcome) -> Result<()> {
    let mut s = String::from("iter,J,grad_norm\n");
    for (i, h) in out.history.iter().enumerate() {
        s.push_str(&format!("{i},{},{}\n", g17(h.energy), g17(h.grad_norm)));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Gnuplot data: time followed by the selected nodal values (component 0).
fn write_profiles(path: &Path, traj: &Trajectory, nodes: &[usize]) -> Result<()> {
    let k = traj.components();
    let mut s = String::from("# t");
    for n in nodes {
        s.push_str(&format!(" node_{n}"));
    }
    s.push('\n');
    for (t, state) in traj.times().iter().zip(traj.states()) {
        s.push_str(&g17(*t));
        for n in nodes {
            s.push(' ');
            s.push_str(&g17(state.values()[n * k]));
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    fs::write(path, json_string(v))?;
    Ok(())
}

fn run_solve(path: &Path, out: Option<&Path>) -> Result<i32> {
    let cfg = RunConfig::load(path)?;
    let ev = cfg.evolution()?;
    let w0 = cfg.initial_field()?;
    let dir = output_dir(&cfg, out)?;
    let init = initial_trajectory(&w0, cfg.horizon, cfg.intervals, &cfg.solve)?;
    let start = Instant::now();
    let outcome = match minimize(&ev, &init, &cfg.solve) {
        Ok(o) => o,
        Err(Error::Stagnation {
            iterations,
            energy,
            last,
        }) => {
            last.save_csv(&dir.join("trajectory.csv"))?;
            return Err(Error::Stagnation {
                iterations,
                energy,
                last,
            });
        }
        Err(e) => return Err(e),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let cert = Certificate::from_report(
        &outcome.report,
        trajectory_norm(&ev, &outcome.trajectory),
        cfg.certificate_tol,
    );

    let mut report = report_value(&outcome.report);
    let obj = report.as_object_mut().expect("object");
    obj.insert("model".into(), json!(cfg.model.name));
    obj.insert(
        "solve".into(),
        json!({
            "iterations": outcome.iterations,
            "converged": outcome.converged,
            "grad_norm": outcome.grad_norm(),
            "seed": cfg.solve.seed,
            "elapsed_seconds": elapsed,
        }),
    );
    obj.insert("certificate".into(), serde_json::to_value(cert)?);
    if cfg.compare_baseline {
        let base = implicit_baseline(&ev, &w0, cfg.horizon, cfg.intervals)?;
        obj.insert("compare_baseline".into(), serde_json::to_value(compare(&outcome.trajectory, &base)?)?);
    }

    outcome.trajectory.save_csv(&dir.join("trajectory.csv"))?;
    write_json(&dir.join("report.json"), &report)?;
    write_history(&dir.join("history.csv"), &outcome)?;
    write_profiles(&dir.join("profiles.dat"), &outcome.trajectory, &cfg.profile_nodes)?;

    println!(
        "{}: normalized={} defect={} iterations={} -> {}",
        cfg.model.name,
        g17(cert.normalized),
        g17(cert.defect_norm),
        outcome.iterations,
        if cert.solved { "solved" } else { "not solved" }
    );
    Ok(if cert.solved { EXIT_OK } else { EXIT_UNSOLVED })
}

fn run_baseline(path: &Path, out: Option<&Path>) -> Result<i32> {
    let cfg = RunConfig::load(path)?;
    let ev = cfg.evolution()?;
    let w0 = cfg.initial_field()?;
    let dir = output_dir(&cfg, out)?;
    let traj = implicit_baseline(&ev, &w0, cfg.horizon, cfg.intervals)?;
    let report = eval_energy(&ev, &traj)?;
    let cert = Certificate::from_report(&report, trajectory_norm(&ev, &traj), cfg.certificate_tol);
    let mut value = report_value(&report);
    let obj = value.as_object_mut().expect("object");
    obj.insert("model".into(), json!(cfg.model.name));
    obj.insert("certificate".into(), serde_json::to_value(cert)?);
    traj.save_csv(&dir.join("trajectory.csv"))?;
    write_json(&dir.join("report.json"), &value)?;
    write_profiles(&dir.join("profiles.dat"), &traj, &cfg.profile_nodes)?;
    println!(
        "{} baseline: normalized={} defect={}",
        cfg.model.name,
        g17(report.normalized),
        g17(report.defect_norm)
    );
    Ok(EXIT_OK)
}

fn run_verify(path: &Path, out: Option<&Path>) -> Result<i32> {
    let cfg = RunConfig::load(path)?;
    let ev = cfg.evolution()?;
    let dir = output_dir(&cfg, out)?;
    let reports: Vec<_> = cfg
        .conditions
        .iter()
        .map(|c| check_condition(&ev, *c, &cfg.sampler))
        .collect();
    write_json(&dir.join("conditions.json"), &serde_json::to_value(&reports)?)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.condition_name.as_str())
        .collect();
    for r in &reports {
        eprintln!(
            "{:<18} worst margin {:>24}  {}",
            r.condition_name,
            g17(r.worst_margin),
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    if failed.is_empty() {
        println!("{}: all {} conditions pass", cfg.model.name, reports.len());
        Ok(EXIT_OK)
    } else {
        println!("{}: failed {}", cfg.model.name, failed.join(", "));
        Ok(EXIT_UNSOLVED)
    }
}

fn run_conjugate_table(q: f64, a: f64, eps: f64, range: (f64, f64), steps: usize, out: &Path) -> Result<i32> {
    if steps < 2 {
        return Err(Error::config("steps", "must be at least 2"));
    }
    if !(range.0 < range.1) {
        return Err(Error::config("min", "must be below max"));
    }
    let density = PowerDensity::new(a, q, eps).map_err(|e| Error::config("q", e.to_string()))?;
    let mut s = String::from("y,psi_star,argmax\n");
    let mut failures = 0;
    for i in 0..steps {
        let y = range.0 + (range.1 - range.0) * i as f64 / (steps - 1) as f64;
        match eval_conjugate(&density, &[y]) {
            Ok(c) => s.push_str(&format!("{},{},{}\n", g17(y), g17(c.value), g17(c.argmax[0]))),
            Err(e) => {
                failures += 1;
                eprintln!("row {i} (y = {}): {e}", g17(y));
                s.push_str(&format!("{},nan,nan\n", g17(y)));
            }
        }
    }
    let mut f = fs::File::create(out)?;
    f.write_all(s.as_bytes())?;
    println!("wrote {steps} rows to {} ({failures} failures)", out.display());
    Ok(if failures == 0 { EXIT_OK } else { EXIT_SOLVE })
}

fn run_gradcheck(path: &Path, directions: usize, trajectories: usize) -> Result<i32> {
    let cfg = RunConfig::load(path)?;
    let ev = cfg.evolution()?;
    let w0 = cfg.initial_field()?;
    let worst = gradient_check(&ev, &w0, cfg.horizon, cfg.intervals, directions, trajectories, cfg.solve.seed)?;
    println!("gradcheck {}: worst relative error {}", cfg.model.name, g17(worst));
    Ok(if worst <= 1e-5 { EXIT_OK } else { EXIT_UNSOLVED })
}

/// Worst relative discrepancy between the analytic directional derivative
/// and the best central difference over steps `10⁻⁴ … 10⁻⁷`, across random
/// trajectories near `w0` and random directions.
pub fn gradient_check(
    ev: &crate::models::Evolution,
    w0: &crate::discretization::Field,
    horizon: f64,
    intervals: usize,
    directions: usize,
    trajectories: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = w0.max_abs().max(1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..trajectories {
        let base = Trajectory::constant(w0, horizon, intervals)?;
        let free: Vec<f64> = base
            .free_values()
            .iter()
            .map(|v| v + 0.5 * scale * rng.gen_range(-1.0..1.0))
            .collect();
        let traj = base.with_free_values(&free);
        let (_, grad) = energy_and_gradient(ev, &traj)?;
        let g: Vec<f64> = grad[1..].iter().flat_map(|f| f.values().to_vec()).collect();
        for _ in 0..directions {
            let dir: Vec<f64> = (0..free.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let exact: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let energy = |s: f64| -> Result<f64> {
                let p: Vec<f64> = free.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                Ok(eval_energy(ev, &traj.with_free_values(&p))?.total)
            };
            let mut best = f64::INFINITY;
            for step in [1e-4, 1e-5, 1e-6, 1e-7] {
                let fd = (energy(step)? - energy(-step)?) / (2.0 * step);
                best = best.min((fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
            }
            worst = worst.max(best);
        }
    }
    Ok(worst)
}
