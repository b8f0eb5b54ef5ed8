use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use leo_aoi::constellation::build_walker;
use leo_aoi::harness::{
    load_catalog, run_matrix, run_trial_traced, write_results, MatrixPlan, TrialSpec, DEFAULT_HORIZON_S,
    DEFAULT_STEPS_S, DEFAULT_SWATHS_KM, RESULTS_HEADER,
};
use leo_aoi::topology::{build_snapshot, GroundStation};

#[derive(Parser)]
#[command(name = "leo-aoi", version, about = "Age of Information simulator for LEO edge computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trial and print its result row.
    Simulate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        shell: String,
        #[arg(long)]
        station: String,
        #[arg(long)]
        swath_km: f64,
        #[arg(long)]
        dt_s: f64,
        #[arg(long, default_value_t = DEFAULT_HORIZON_S)]
        horizon_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw compute delays from truncated normals instead of using the means.
        #[arg(long)]
        stochastic: bool,
        /// Write the result as CSV (header + one row).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a per-event packet trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the Cartesian product of shells x stations x swaths x steps.
    Matrix {
        #[arg(long)]
        catalog: PathBuf,
        /// Comma-separated shell names (default: all).
        #[arg(long, value_delimiter = ',')]
        shells: Option<Vec<String>>,
        /// Comma-separated station names (default: all).
        #[arg(long, value_delimiter = ',')]
        stations: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        swaths: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_HORIZON_S)]
        horizon_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Results CSV; existing rows are kept and skipped.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Export the topology edge list at one instant.
    Snapshot {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        shell: String,
        #[arg(long)]
        t_s: f64,
        /// Ground station for SGLs (default: first in catalog).
        #[arg(long)]
        station: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            catalog,
            shell,
            station,
            swath_km,
            dt_s,
            horizon_s,
            seed,
            stochastic,
            out,
            trace,
        } => {
            let cat = load_catalog(&catalog)?;
            let mut spec = TrialSpec::from_catalog(&cat, &shell, &station, swath_km, dt_s, horizon_s)?;
            spec.seed = seed;
            spec.compute.stochastic = stochastic;
            let trace_sink: Option<Box<dyn Write + Send>> = match &trace {
                Some(p) => Some(Box::new(BufWriter::new(
                    File::create(p).with_context(|| format!("creating {}", p.display()))?,
                ))),
                None => None,
            };
            let result = run_trial_traced(&spec, trace_sink)?;
            println!("{RESULTS_HEADER}");
            println!("{}", result.csv_row());
            eprintln!("wall clock {:.2} s", result.wall_clock_s);
            if let Some(p) = out {
                write_results(std::slice::from_ref(&result), &p)?;
            }
        }
        Command::Matrix {
            catalog,
            shells,
            stations,
            swaths,
            steps,
            horizon_s,
            seed,
            out,
            jobs,
        } => {
            let cat = load_catalog(&catalog)?;
            let mut plan = MatrixPlan::full(&cat);
            if let Some(s) = shells {
                plan.shells = s;
            }
            if let Some(s) = stations {
                plan.stations = s;
            }
            plan.swaths_km = swaths.unwrap_or_else(|| DEFAULT_SWATHS_KM.to_vec());
            plan.steps_s = steps.unwrap_or_else(|| DEFAULT_STEPS_S.to_vec());
            plan.horizon_s = horizon_s;
            plan.seed = seed;
            plan.jobs = jobs.max(1);
            eprintln!("{} trials -> {}", plan.trial_count(), out.display());
            let rows = run_matrix(&cat, &plan, Some(&out))?;
            let failed: Vec<_> = rows.iter().filter(|r| r.error.is_some()).collect();
            for r in &failed {
                eprintln!("{}: {}", r.key(), r.error.as_deref().unwrap_or_default());
            }
            if !failed.is_empty() {
                bail!("{} of {} trials failed", failed.len(), rows.len());
            }
        }
        Command::Snapshot {
            catalog,
            shell,
            t_s,
            station,
            out,
        } => {
            let cat = load_catalog(&catalog)?;
            let cfg = cat.shell(&shell)?;
            let gs: &GroundStation = match &station {
                Some(name) => cat.station(name)?,
                None => cat.stations.first().context("catalog has no ground stations")?,
            };
            let elements = build_walker(cfg)?;
            let snap = build_snapshot(cfg, &elements, gs, t_s, &cat.links)?;
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            snap.write_edge_list(BufWriter::new(f))
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{} edges ({} SGL) -> {}", snap.edges().len(), snap.sgl_count(), out.display());
        }
    }
    Ok(())
}
