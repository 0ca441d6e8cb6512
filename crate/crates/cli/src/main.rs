//! `gasnet`: transient gas pipeline network simulation from the command
//! line. Subcommands: run, ensemble, verify, init-steady, ingest-power.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 numerical
//! instability or failed verification, 3 I/O error.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gasnet_core::ensemble::run_ensemble;
use gasnet_core::error::Error as CoreError;
use gasnet_core::gas::EosMode;
use gasnet_core::grid::discretize;
use gasnet_core::metrics::{detect_crossings, survival_time, DEFAULT_THRESHOLD_PA};
use gasnet_core::network::load_network;
use gasnet_core::power::{load_power_csv, power_to_gas, EfficiencyCurve};
use gasnet_core::report;
use gasnet_core::scenario::{compose, load_scenario};
use gasnet_core::sim::{init_state, simulate, SolverConfig};
use gasnet_core::verify::run_battery;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "gasnet", version, about = "Transient gas pipeline network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Serialize)]
struct SolverArgs {
    /// Target spatial resolution [m]
    #[arg(long = "dx-m", default_value_t = 1000.0)]
    dx_m: f64,
    /// CFL factor in (0, 1)
    #[arg(long, default_value_t = 0.8)]
    cfl: f64,
    /// Equation of state: cnga or ideal
    #[arg(long, default_value = "cnga")]
    eos: String,
    /// Output cadence [s]
    #[arg(long = "cadence-s", default_value_t = 300.0)]
    cadence_s: f64,
    /// Reference pressure at the reference supply node [bar]
    #[arg(long = "ref-bar", default_value_t = 70.0)]
    ref_bar: f64,
}

impl SolverArgs {
    fn to_config(&self, seed: u64) -> anyhow::Result<SolverConfig> {
        let eos_mode = match self.eos.as_str() {
            "cnga" => EosMode::Cnga,
            "ideal" => EosMode::Ideal,
            other => anyhow::bail!("unknown eos mode {other:?} (use cnga or ideal)"),
        };
        Ok(SolverConfig {
            target_dx_m: self.dx_m,
            cfl: self.cfl,
            output_cadence_s: self.cadence_s,
            eos_mode,
            ref_pressure_pa: self.ref_bar * 1e5,
            seed,
            ..SolverConfig::default()
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Single simulation: trajectory CSVs, crossing events, manifest
    Run {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Monte-Carlo ensemble: quantile CSVs, summary JSON, manifest
    Ensemble {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        replicas: usize,
        /// Worker threads (0 = rayon default); results are identical at any
        /// worker count
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Built-in verification battery (conservation, convergence order,
    /// steady-pipe oracle, EOS round trip, monotonicity pairs)
    Verify {
        /// Network file (defaults to the shipped dataset)
        #[arg(long, default_value = "data/israel11.json")]
        network: PathBuf,
        /// Insult scenario driving the conservation and monotonicity checks
        #[arg(long, default_value = "data/scenarios/scenario3.json")]
        scenario: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve and emit the steady initial state for a scenario's t = 0 loads
    InitSteady {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Convert a half-hourly power CSV into a demand profile CSV
    IngestPower {
        /// CSV with columns timestamp,unit_id,power_MW
        #[arg(long)]
        power: PathBuf,
        /// Efficiency curve CSV (load_fraction,efficiency)
        #[arg(long)]
        curve: PathBuf,
        /// Rated unit capacity [MW] defining the load fraction
        #[arg(long = "rated-mw")]
        rated_mw: f64,
        /// Unit id to convert (default: sum over all units)
        #[arg(long)]
        unit: Option<String>,
        /// Node id stamped on the output profile
        #[arg(long, default_value_t = 0)]
        node: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::Instability { .. } => 2,
            CoreError::Io(_) => 3,
            _ => 1,
        }
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn ensure_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run {
            network,
            scenario,
            out,
            seed,
            solver,
        } => cmd_run(&network, &scenario, &out, seed, &solver),
        Command::Ensemble {
            network,
            scenario,
            out,
            seed,
            replicas,
            workers,
            solver,
        } => cmd_ensemble(&network, &scenario, &out, seed, replicas, workers, &solver),
        Command::Verify {
            network,
            scenario,
            solver,
        } => cmd_verify(&network, &scenario, &solver),
        Command::InitSteady {
            network,
            scenario,
            out,
            solver,
        } => cmd_init_steady(&network, &scenario, &out, &solver),
        Command::IngestPower {
            power,
            curve,
            rated_mw,
            unit,
            node,
            out,
        } => cmd_ingest_power(&power, &curve, rated_mw, unit.as_deref(), node, &out),
    }
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    network: &'a Path,
    scenario: &'a Path,
    seed: u64,
    replicas: Option<usize>,
    solver: &'a SolverArgs,
}

fn config_json(
    network: &Path,
    scenario: &Path,
    seed: u64,
    replicas: Option<usize>,
    solver: &SolverArgs,
) -> String {
    serde_json::to_string(&EffectiveConfig {
        network,
        scenario,
        seed,
        replicas,
        solver,
    })
    .expect("serializable config")
}

fn cmd_run(
    network_path: &Path,
    scenario_path: &Path,
    out: &Path,
    seed: u64,
    solver: &SolverArgs,
) -> anyhow::Result<ExitCode> {
    let started = Instant::now();
    let cfg = solver.to_config(seed)?;
    let network = load_network(network_path)?;
    let scenario = load_scenario(scenario_path)?;
    ensure_out_dir(out)?;

    let traj = simulate(&network, &scenario, &cfg)?;
    let mut files = report::write_trajectory_csvs(out, &traj)?;

    let crossings = detect_crossings(&traj, DEFAULT_THRESHOLD_PA)?;
    let crossings_path = out.join("crossings.csv");
    report::write_crossings_csv(&crossings_path, &crossings, DEFAULT_THRESHOLD_PA)?;
    files.push(crossings_path);

    if let Some(t0) = scenario.first_insult_s() {
        let s = survival_time(&traj, t0, DEFAULT_THRESHOLD_PA)?;
        let summary = serde_json::json!({
            "scenario": scenario.name,
            "seed": seed,
            "insult_time_s": t0,
            "tau_s": s.tau_s,
            "tau_h": s.tau_s.map(|t| t / 3600.0),
            "first_crossing_node": s.first_node,
            "clipped_nodes": traj.meta.clipped_nodes,
        });
        let path = out.join("survival.json");
        std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
        files.push(path);
    }

    let mut manifest = RunManifest::new(
        "run",
        &config_json(network_path, scenario_path, seed, None, solver),
        vec![seed],
    );
    manifest.add_files(&files)?;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "run complete: {} samples, {} crossings, outputs in {}",
        traj.n_samples(),
        crossings.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_ensemble(
    network_path: &Path,
    scenario_path: &Path,
    out: &Path,
    seed: u64,
    replicas: usize,
    workers: usize,
    solver: &SolverArgs,
) -> anyhow::Result<ExitCode> {
    let started = Instant::now();
    let cfg = solver.to_config(seed)?;
    let network = load_network(network_path)?;
    let scenario = load_scenario(scenario_path)?;
    ensure_out_dir(out)?;

    let stats = if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()?;
        pool.install(|| run_ensemble(&network, &scenario, replicas, seed, &cfg, DEFAULT_THRESHOLD_PA))?
    } else {
        run_ensemble(&network, &scenario, replicas, seed, &cfg, DEFAULT_THRESHOLD_PA)?
    };

    let mut files = report::write_quantile_csvs(out, &stats)?;
    let summary_path = out.join("ensemble_summary.json");
    report::write_ensemble_summary(&summary_path, &stats, &files)?;
    files.push(summary_path);

    let mut manifest = RunManifest::new(
        "ensemble",
        &config_json(network_path, scenario_path, seed, Some(replicas), solver),
        (0..replicas as u64).map(|i| seed + i).collect(),
    );
    manifest.add_files(&files)?;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(&out.join("manifest.json"))?;

    match (&stats.tau.median_h, &stats.tau.mean_h, &stats.tau.std_h) {
        (Some(median), Some(mean), Some(std)) => println!(
            "ensemble complete: {} replicas, tau = {:.2} +/- {:.2} h (median {:.2} h, {}/{} crossed)",
            replicas, mean, std, median, stats.tau.n_crossed, replicas
        ),
        _ => println!(
            "ensemble complete: {} replicas, no pressure crossings",
            replicas
        ),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    network_path: &Path,
    scenario_path: &Path,
    solver: &SolverArgs,
) -> anyhow::Result<ExitCode> {
    let started = Instant::now();
    let cfg = solver.to_config(0)?;
    let network = load_network(network_path)?;
    let scenario = load_scenario(scenario_path)?;

    let results = run_battery(&network, &scenario, &scenario, &cfg)?;
    let mut all_passed = true;
    for r in &results {
        println!("{}", r.line());
        all_passed &= r.passed;
    }
    println!(
        "verification {} in {:.1} s",
        if all_passed { "PASSED" } else { "FAILED" },
        started.elapsed().as_secs_f64()
    );
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_init_steady(
    network_path: &Path,
    scenario_path: &Path,
    out: &Path,
    solver: &SolverArgs,
) -> anyhow::Result<ExitCode> {
    let cfg = solver.to_config(0)?;
    let network = load_network(network_path)?;
    let scenario = load_scenario(scenario_path)?;
    let grids = discretize(&network, cfg.target_dx_m)?;
    let (bc, _) = compose(&network, &scenario.without_noise(), 0)?;
    let (state, report_info) = init_state(&network, &grids, &cfg, &bc)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    report::write_state_json(out, &network, &grids, &state)?;
    println!(
        "steady state written to {} (drift {:.2e}/h after {:.0} h relaxation)",
        out.display(),
        report_info.drift_per_hour,
        report_info.relax_hours
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_ingest_power(
    power_path: &Path,
    curve_path: &Path,
    rated_mw: f64,
    unit: Option<&str>,
    node: u32,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let curve = EfficiencyCurve::from_csv(curve_path)?;
    let units = load_power_csv(power_path)?;
    let series = match unit {
        Some(name) => units
            .into_iter()
            .find(|s| s.unit == name)
            .ok_or_else(|| anyhow::anyhow!("unit {name:?} not present in {}", power_path.display()))?,
        None => {
            let mut iter = units.into_iter();
            let mut total = iter
                .next()
                .ok_or_else(|| anyhow::anyhow!("no units in {}", power_path.display()))?;
            for s in iter {
                if s.times_s != total.times_s {
                    anyhow::bail!(
                        "units are not on a common time grid; pass --unit to select one"
                    );
                }
                for (acc, mw) in total.power_mw.iter_mut().zip(&s.power_mw) {
                    *acc += mw;
                }
            }
            total.unit = "aggregate".to_string();
            total
        }
    };
    let props = gasnet_core::gas::GasProperties::default_cnga();
    let (profile, meta) = power_to_gas(&series, &curve, rated_mw, &props, node)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    report::write_profile_csv(out, &profile)?;
    println!(
        "profile written to {} ({} samples{} )",
        out.display(),
        profile.times().len(),
        if meta.clamped_samples > 0 {
            format!(", {} samples outside the efficiency table were clamped", meta.clamped_samples)
        } else {
            String::new()
        }
    );
    Ok(ExitCode::SUCCESS)
}
