//! Configuration loading, the per-trial event loop, the experiment matrix
//! and CSV persistence.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::constellation::{build_walker, GeodeticCoord, ShellConfig, SimClock};
use crate::coverage::{active_set, CoverageTally, RegionOfInterest, SwathModel};
use crate::error::{Result, SimError};
use crate::metrics::{AoiSummary, AoiTimeline};
use crate::netsim::NetSim;
use crate::pipeline::{
    assign_workers, create_task, packetize_task, patch_transfer_delay, select_master, ComputeParams,
    DelaySampler,
};
use crate::topology::{build_snapshot, GroundStation, LinkBandwidths};

/// The bundled catalog: 12 shells, 4 ground stations and the default RoI.
pub const DEFAULT_CATALOG: &str = include_str!("../../../config/catalog.toml");

pub const DEFAULT_HORIZON_S: f64 = 86_400.0;
pub const DEFAULT_STEPS_S: [f64; 3] = [10.0, 20.0, 30.0];
pub const DEFAULT_SWATHS_KM: [f64; 5] = [100.0, 200.0, 300.0, 400.0, 500.0];

pub const RESULTS_HEADER: &str = "shell,ground_station,swath_km,dt_s,horizon_s,avg_aoi_s,peak_aoi_s,coverage_prob,tasks_created,tasks_delivered,tasks_superseded,mean_latency_s";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    #[serde(default)]
    shell: Vec<ShellConfig>,
    #[serde(default)]
    station: Vec<StationEntry>,
    roi: Option<RoiEntry>,
    links: Option<LinkBandwidths>,
    compute: Option<ComputeParams>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationEntry {
    name: String,
    lat_deg: f64,
    lon_deg: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoiEntry {
    name: String,
    /// `[lat_deg, lon_deg]` pairs.
    vertices: Vec<[f64; 2]>,
}

/// Shells, ground stations, RoI and link/compute defaults from one config file.
#[derive(Debug, Clone)]
pub struct ShellCatalog {
    pub shells: Vec<ShellConfig>,
    pub stations: Vec<GroundStation>,
    pub roi: RegionOfInterest,
    pub links: LinkBandwidths,
    pub compute: ComputeParams,
}

impl ShellCatalog {
    pub fn shell(&self, name: &str) -> Result<&ShellConfig> {
        self.shells.iter().find(|s| s.name == name).ok_or_else(|| {
            SimError::config(format!(
                "unknown shell '{name}' (known: {})",
                self.shells.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn station(&self, name: &str) -> Result<&GroundStation> {
        self.stations.iter().find(|s| s.name == name).ok_or_else(|| {
            SimError::config(format!(
                "unknown ground station '{name}' (known: {})",
                self.stations.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
            ))
        })
    }

    /// The bundled catalog.
    pub fn builtin() -> Self {
        parse_catalog(DEFAULT_CATALOG, Path::new("<builtin catalog>")).expect("bundled catalog is valid")
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<ShellCatalog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_catalog(&text, path)
}

/// Parses catalog text; `origin` only labels diagnostics.
pub fn parse_catalog(text: &str, origin: &Path) -> Result<ShellCatalog> {
    let parse_err = |message: String| SimError::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let file: CatalogFile = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;

    let mut names = HashSet::new();
    for shell in &file.shell {
        if !names.insert(shell.name.as_str()) {
            return Err(parse_err(format!("duplicate shell name '{}'", shell.name)));
        }
        shell.validate().map_err(|e| parse_err(e.to_string()))?;
    }

    let mut stations = Vec::new();
    let mut station_names = HashSet::new();
    for s in file.station {
        if !station_names.insert(s.name.clone()) {
            return Err(parse_err(format!("duplicate station name '{}'", s.name)));
        }
        let loc = GeodeticCoord::new(s.lat_deg, s.lon_deg)
            .map_err(|e| parse_err(format!("station '{}': {e}", s.name)))?;
        stations.push(GroundStation::new(s.name, loc)?);
    }

    let roi = match file.roi {
        Some(r) => {
            let vertices = r
                .vertices
                .iter()
                .map(|[lat, lon]| GeodeticCoord::new(*lat, *lon))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| parse_err(format!("roi '{}': {e}", r.name)))?;
            RegionOfInterest::new(r.name, vertices).map_err(|e| parse_err(e.to_string()))?
        }
        None => default_roi(),
    };
    let links = file.links.unwrap_or_default();
    links.validate().map_err(|e| parse_err(e.to_string()))?;
    let compute = file.compute.unwrap_or_default();
    compute.validate().map_err(|e| parse_err(e.to_string()))?;

    Ok(ShellCatalog {
        shells: file.shell,
        stations,
        roi,
        links,
        compute,
    })
}

/// A 0.4 x 0.5 degree box over northern California.
pub fn default_roi() -> RegionOfInterest {
    let v = |lat, lon| GeodeticCoord { lat_deg: lat, lon_deg: lon };
    RegionOfInterest::new(
        "northern_california",
        vec![v(39.8, -121.75), v(39.8, -121.25), v(40.2, -121.25), v(40.2, -121.75)],
    )
    .expect("valid default RoI")
}

/// Everything one simulation run depends on.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub shell: ShellConfig,
    pub ground_station: GroundStation,
    pub roi: RegionOfInterest,
    pub swath_km: f64,
    pub step_s: f64,
    pub horizon_s: f64,
    pub compute: ComputeParams,
    pub bandwidths: LinkBandwidths,
    pub seed: u64,
    /// Samples with `t_i` below this are left out of the summary.
    pub warmup_s: f64,
}

impl TrialSpec {
    pub fn from_catalog(
        catalog: &ShellCatalog,
        shell: &str,
        station: &str,
        swath_km: f64,
        step_s: f64,
        horizon_s: f64,
    ) -> Result<Self> {
        let spec = Self {
            shell: catalog.shell(shell)?.clone(),
            ground_station: catalog.station(station)?.clone(),
            roi: catalog.roi.clone(),
            swath_km,
            step_s,
            horizon_s,
            compute: catalog.compute.clone(),
            bandwidths: catalog.links,
            seed: 0,
            warmup_s: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.shell.validate()?;
        SwathModel::new(self.swath_km)?;
        SimClock::new(self.horizon_s, self.step_s)?;
        self.compute.validate()?;
        self.bandwidths.validate()?;
        if !(self.warmup_s >= 0.0) || self.warmup_s > self.horizon_s {
            return Err(SimError::config("warmup must lie within the horizon"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub shell: String,
    pub ground_station: String,
    pub swath_km: f64,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub average_aoi_s: f64,
    pub peak_aoi_s: f64,
    pub coverage_probability: f64,
    pub tasks_created: u64,
    pub tasks_delivered: u64,
    pub tasks_superseded: u64,
    pub mean_delivery_latency_s: f64,
    pub wall_clock_s: f64,
    /// Set when the trial could not run; metrics are NaN then.
    pub error: Option<String>,
}

impl TrialResult {
    fn failed(shell: &str, station: &str, swath_km: f64, dt_s: f64, horizon_s: f64, err: String) -> Self {
        Self {
            shell: shell.to_string(),
            ground_station: station.to_string(),
            swath_km,
            dt_s,
            horizon_s,
            average_aoi_s: f64::NAN,
            peak_aoi_s: f64::NAN,
            coverage_probability: f64::NAN,
            tasks_created: 0,
            tasks_delivered: 0,
            tasks_superseded: 0,
            mean_delivery_latency_s: f64::NAN,
            wall_clock_s: 0.0,
            error: Some(err),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{},{},{},{:.3}",
            self.shell,
            self.ground_station,
            self.swath_km,
            self.dt_s,
            self.horizon_s,
            self.average_aoi_s,
            self.peak_aoi_s,
            self.coverage_probability,
            self.tasks_created,
            self.tasks_delivered,
            self.tasks_superseded,
            self.mean_delivery_latency_s
        )
    }

    fn from_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return None;
        }
        let num = |i: usize| f[i].parse::<f64>().ok();
        let int = |i: usize| f[i].parse::<u64>().ok();
        Some(Self {
            shell: f[0].to_string(),
            ground_station: f[1].to_string(),
            swath_km: num(2)?,
            dt_s: num(3)?,
            horizon_s: num(4)?,
            average_aoi_s: num(5)?,
            peak_aoi_s: num(6)?,
            coverage_probability: num(7)?,
            tasks_created: int(8)?,
            tasks_delivered: int(9)?,
            tasks_superseded: int(10)?,
            mean_delivery_latency_s: num(11)?,
            wall_clock_s: 0.0,
            error: None,
        })
    }

    /// Identity of the trial within a matrix, used for resuming.
    pub fn key(&self) -> String {
        trial_key(&self.shell, &self.ground_station, self.swath_km, self.dt_s, self.horizon_s)
    }
}

fn trial_key(shell: &str, station: &str, swath_km: f64, dt_s: f64, horizon_s: f64) -> String {
    format!("{shell},{station},{swath_km:.3},{dt_s:.3},{horizon_s:.3}")
}

pub fn run_trial(spec: &TrialSpec) -> Result<TrialResult> {
    run_trial_traced(spec, None)
}

/// Runs one trial, optionally writing the event trace to `trace`.
pub fn run_trial_traced(spec: &TrialSpec, trace: Option<Box<dyn Write + Send>>) -> Result<TrialResult> {
    run_trial_detailed(spec, trace).map(|run| run.result)
}

/// A finished trial together with the delivery log behind its summary.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub result: TrialResult,
    pub timeline: AoiTimeline,
    pub clock: SimClock,
}

pub fn run_trial_detailed(spec: &TrialSpec, trace: Option<Box<dyn Write + Send>>) -> Result<TrialRun> {
    let started = Instant::now();
    spec.validate()?;
    let clock = SimClock::new(spec.horizon_s, spec.step_s)?;
    let swath = SwathModel::new(spec.swath_km)?;
    let elements = build_walker(&spec.shell)?;
    let per_plane = spec.shell.sats_per_plane;
    let mtu = spec.compute.mtu_bytes;
    let snapshot_at =
        |t: f64| build_snapshot(&spec.shell, &elements, &spec.ground_station, t, &spec.bandwidths);

    let mut net = NetSim::new(snapshot_at(0.0)?);
    if let Some(w) = trace {
        net.set_trace(w);
    }
    let mut sampler = DelaySampler::new(&spec.compute, spec.seed);
    let mut timeline = AoiTimeline::new();
    let mut tally = CoverageTally::default();
    let mut tasks_created = 0u64;

    for i in 0..=clock.step_count() {
        let t = clock.time_at(i);
        if i > 0 {
            net.reroute_in_flight(snapshot_at(t)?)?;
        }
        absorb_deliveries(&mut net, &mut timeline)?;

        let snap = net.snapshot();
        let active = active_set(t, snap.satellite_positions(), per_plane, &spec.roi, &swath)?;
        tally.record(&active);
        let Some(master) = select_master(&active, &spec.roi, snap.satellite_positions(), per_plane)? else {
            continue;
        };
        let workers = assign_workers(master, snap)?;
        let mut task = create_task(tasks_created, t, master, &workers, &spec.compute, sampler.sample())?;
        if spec.compute.patch_transfer {
            task.compute_ready_time += patch_transfer_delay(&task, &spec.compute, snap)?;
        }
        let packets = packetize_task(&task, mtu)?;
        net.submit_task(task, packets)?;
        tasks_created += 1;
    }
    absorb_deliveries(&mut net, &mut timeline)?;
    net.finish_trace().map_err(|e| SimError::io("<trace>", e))?;

    let summary = AoiSummary::compute(&timeline, &clock, tally.probability()?, spec.warmup_s)?;
    let deliveries = timeline.deliveries();
    let mean_latency = if deliveries.is_empty() {
        f64::NAN
    } else {
        deliveries.iter().map(|r| r.completion_time - r.generation_time).sum::<f64>() / deliveries.len() as f64
    };
    let result = TrialResult {
        shell: spec.shell.name.clone(),
        ground_station: spec.ground_station.name.clone(),
        swath_km: spec.swath_km,
        dt_s: spec.step_s,
        horizon_s: spec.horizon_s,
        average_aoi_s: summary.average_aoi,
        peak_aoi_s: summary.peak_aoi,
        coverage_probability: summary.coverage_probability,
        tasks_created,
        tasks_delivered: summary.delivered_tasks as u64,
        tasks_superseded: summary.superseded_tasks as u64,
        mean_delivery_latency_s: mean_latency,
        wall_clock_s: started.elapsed().as_secs_f64(),
        error: None,
    };
    Ok(TrialRun { result, timeline, clock })
}

fn absorb_deliveries(net: &mut NetSim, timeline: &mut AoiTimeline) -> Result<()> {
    for rec in net.drain_deliveries() {
        let accepted = timeline.accept_delivery(rec);
        net.resolve_task(rec.task_id, accepted)?;
    }
    Ok(())
}

/// Axes of an experiment matrix plus the settings shared by every trial.
#[derive(Debug, Clone)]
pub struct MatrixPlan {
    pub shells: Vec<String>,
    pub stations: Vec<String>,
    pub swaths_km: Vec<f64>,
    pub steps_s: Vec<f64>,
    pub horizon_s: f64,
    pub seed: u64,
    pub jobs: usize,
}

impl MatrixPlan {
    /// Every shell and station in the catalog with the default swaths and steps.
    pub fn full(catalog: &ShellCatalog) -> Self {
        Self {
            shells: catalog.shells.iter().map(|s| s.name.clone()).collect(),
            stations: catalog.stations.iter().map(|s| s.name.clone()).collect(),
            swaths_km: DEFAULT_SWATHS_KM.to_vec(),
            steps_s: DEFAULT_STEPS_S.to_vec(),
            horizon_s: DEFAULT_HORIZON_S,
            seed: 0,
            jobs: 1,
        }
    }

    pub fn trial_count(&self) -> usize {
        self.shells.len() * self.stations.len() * self.swaths_km.len() * self.steps_s.len()
    }

    fn cells(&self) -> Vec<(String, String, f64, f64)> {
        let mut out = Vec::with_capacity(self.trial_count());
        for shell in &self.shells {
            for station in &self.stations {
                for &swath in &self.swaths_km {
                    for &dt in &self.steps_s {
                        out.push((shell.clone(), station.clone(), swath, dt));
                    }
                }
            }
        }
        out
    }
}

/// Runs the Cartesian product of the plan's axes. With `out`, rows are
/// appended as trials finish and rows already present are not re-run.
pub fn run_matrix(catalog: &ShellCatalog, plan: &MatrixPlan, out: Option<&Path>) -> Result<Vec<TrialResult>> {
    if plan.trial_count() == 0 {
        return Err(SimError::config("every matrix axis needs at least one value"));
    }
    let existing = match out {
        Some(p) if p.exists() => read_results(p)?,
        _ => Vec::new(),
    };
    let done: HashSet<String> = existing.iter().map(TrialResult::key).collect();

    let sink = match out {
        Some(p) => {
            let fresh = !p.exists() || fs::metadata(p).map(|m| m.len() == 0).unwrap_or(true);
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| SimError::io(p, e))?;
            if fresh {
                writeln!(f, "{RESULTS_HEADER}").map_err(|e| SimError::io(p, e))?;
            }
            Some((Mutex::new(f), p.to_path_buf()))
        }
        None => None,
    };

    let pending: Vec<_> = plan
        .cells()
        .into_iter()
        .filter(|(s, g, w, dt)| !done.contains(&trial_key(s, g, *w, *dt, plan.horizon_s)))
        .collect();

    let run_one = |(shell, station, swath, dt): &(String, String, f64, f64)| -> Result<TrialResult> {
        let result = TrialSpec::from_catalog(catalog, shell, station, *swath, *dt, plan.horizon_s)
            .and_then(|mut spec| {
                spec.seed = plan.seed;
                run_trial(&spec)
            })
            .unwrap_or_else(|e| TrialResult::failed(shell, station, *swath, *dt, plan.horizon_s, e.to_string()));
        if let Some((file, path)) = &sink {
            let mut f = file.lock().expect("result sink poisoned");
            writeln!(f, "{}", result.csv_row())
                .and_then(|_| f.flush())
                .map_err(|e| SimError::io(path, e))?;
        }
        Ok(result)
    };

    let fresh: Vec<TrialResult> = if plan.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .map_err(|e| SimError::config(format!("thread pool: {e}")))?;
        pool.install(|| pending.par_iter().map(run_one).collect::<Result<Vec<_>>>())?
    } else {
        pending.iter().map(run_one).collect::<Result<Vec<_>>>()?
    };

    // Report in matrix order regardless of completion order.
    let mut by_key: std::collections::HashMap<String, TrialResult> =
        existing.into_iter().chain(fresh).map(|r| (r.key(), r)).collect();
    Ok(plan
        .cells()
        .iter()
        .filter_map(|(s, g, w, dt)| by_key.remove(&trial_key(s, g, *w, *dt, plan.horizon_s)))
        .collect())
}

/// Writes the header and one row per result.
pub fn write_results(results: &[TrialResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(64 * (results.len() + 1));
    text.push_str(RESULTS_HEADER);
    text.push('\n');
    for r in results {
        let _ = writeln!(text, "{}", r.csv_row());
    }
    fs::write(path, text).map_err(|e| SimError::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<TrialResult>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SimError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SimError::io(path, e))?;
        if n == 0 {
            if line != RESULTS_HEADER {
                return Err(SimError::Parse {
                    path: PathBuf::from(path),
                    message: "unexpected results header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(TrialResult::from_csv_row(&line).ok_or_else(|| SimError::Parse {
            path: PathBuf::from(path),
            message: format!("malformed row at line {}", n + 1),
        })?);
    }
    Ok(out)
}
