//! Sensing-task creation: master selection, worker assignment, the measured
//! compute-delay model and packetization of the fire-mask payload.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constellation::{subsatellite_point, EcefPosition, SatelliteId};
use crate::coverage::{azimuthal_equidistant_distance, ActiveSet, RegionOfInterest};
use crate::error::{Result, SimError};
use crate::netsim::Packet;
use crate::topology::{NodeId, TopologySnapshot, SPEED_OF_LIGHT_KM_S};

/// Largest IP datagram, used as the default packet payload.
pub const DEFAULT_MTU_BYTES: u64 = 65_535;

/// Onboard processing parameters. Delays default to the measured means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComputeParams {
    pub preprocess_delay_s: f64,
    pub inference_delay_s: f64,
    pub preprocess_sigma_s: f64,
    pub inference_sigma_s: f64,
    pub scene_width: u64,
    pub scene_height: u64,
    pub patch_size: u64,
    pub mask_bits_per_pixel: u64,
    pub mtu_bytes: u64,
    /// Sample per-task delays from truncated normals instead of using the means.
    pub stochastic: bool,
    /// Charge the raw-patch hand-off from master to workers over the ISLs.
    pub patch_transfer: bool,
    /// Raw image depth used when `patch_transfer` is on.
    pub raw_bits_per_pixel: u64,
}

impl Default for ComputeParams {
    fn default() -> Self {
        Self {
            preprocess_delay_s: 49.62,
            inference_delay_s: 43.27,
            preprocess_sigma_s: 12.28,
            inference_sigma_s: 9.00,
            scene_width: 7811,
            scene_height: 7931,
            patch_size: 256,
            mask_bits_per_pixel: 1,
            mtu_bytes: DEFAULT_MTU_BYTES,
            stochastic: false,
            patch_transfer: false,
            raw_bits_per_pixel: 16,
        }
    }
}

impl ComputeParams {
    pub fn validate(&self) -> Result<()> {
        let delays = [
            self.preprocess_delay_s,
            self.inference_delay_s,
            self.preprocess_sigma_s,
            self.inference_sigma_s,
        ];
        if delays.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(SimError::config("compute delays and sigmas must be finite and >= 0"));
        }
        if self.patch_size == 0 {
            return Err(SimError::config("patch_size must be positive"));
        }
        if self.mtu_bytes == 0 {
            return Err(SimError::InvalidMtu(0));
        }
        Ok(())
    }

    pub fn mask(&self) -> FireMaskPayload {
        FireMaskPayload::for_scene(self.scene_width, self.scene_height, self.mask_bits_per_pixel)
    }

    pub fn patch_count(&self) -> u64 {
        self.scene_width.div_ceil(self.patch_size) * self.scene_height.div_ceil(self.patch_size)
    }
}

/// Byte size of the binary mask for one scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FireMaskPayload {
    pub total_bytes: u64,
}

impl FireMaskPayload {
    pub fn for_scene(width: u64, height: u64, bits_per_pixel: u64) -> Self {
        Self {
            total_bytes: (width * height * bits_per_pixel).div_ceil(8),
        }
    }
}

/// Effective inference time with the master plus `workers` sharing the load.
pub fn compute_delay(inference_delay_s: f64, workers: usize) -> f64 {
    inference_delay_s / (1 + workers) as f64
}

/// Draws `(preprocess, inference)` delays for each new task.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    params: ComputeParams,
    rng: Option<ChaCha8Rng>,
}

impl DelaySampler {
    pub fn new(params: &ComputeParams, seed: u64) -> Self {
        Self {
            params: params.clone(),
            rng: params.stochastic.then(|| ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn sample(&mut self) -> (f64, f64) {
        let p = &self.params;
        match self.rng.as_mut() {
            None => (p.preprocess_delay_s, p.inference_delay_s),
            Some(rng) => (
                truncated_normal(rng, p.preprocess_delay_s, p.preprocess_sigma_s),
                truncated_normal(rng, p.inference_delay_s, p.inference_sigma_s),
            ),
        }
    }
}

// Normal restricted to [0, inf) by rejection.
fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    let dist = Normal::new(mean, sigma).expect("validated sigma");
    loop {
        let x = dist.sample(rng);
        if x >= 0.0 {
            return x;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskState {
    Computing,
    Transmitting,
    Complete,
    Superseded,
}

impl TaskState {
    fn can_move_to(self, next: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, next),
            (Computing, Transmitting)
                | (Transmitting, Complete)
                | (Computing, Complete)
                | (Computing, Superseded)
                | (Transmitting, Superseded)
        )
    }
}

/// Bytes one compute source must deliver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceShare {
    pub satellite: SatelliteId,
    pub bytes: u64,
    pub packets: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingTask {
    pub task_id: u64,
    pub generation_time: f64,
    pub master: SatelliteId,
    pub workers: Vec<SatelliteId>,
    /// Master first, then workers in `(plane, slot)` order.
    pub sources: Vec<SourceShare>,
    pub compute_ready_time: f64,
    pub packet_count_total: u64,
    pub delivered_packets: u64,
    pub patch_count: u64,
    pub state: TaskState,
}

impl SensingTask {
    pub fn total_bytes(&self) -> u64 {
        self.sources.iter().map(|s| s.bytes).sum()
    }

    pub fn transition(&mut self, next: TaskState) -> Result<()> {
        if !self.state.can_move_to(next) {
            return Err(SimError::config(format!(
                "task {}: illegal transition {:?} -> {:?}",
                self.task_id, self.state, next
            )));
        }
        self.state = next;
        Ok(())
    }
}

/// Active satellite whose sub-satellite point is closest to the RoI centroid.
/// Ties go to the smallest `(plane, slot)`.
pub fn select_master(
    active: &ActiveSet,
    roi: &RegionOfInterest,
    positions: &[EcefPosition],
    sats_per_plane: usize,
) -> Result<Option<SatelliteId>> {
    let mut best: Option<(f64, SatelliteId)> = None;
    for &id in &active.members {
        let pos = positions
            .get(id.flat_index(sats_per_plane))
            .ok_or_else(|| SimError::UnknownNode(id.to_string()))?;
        let d = azimuthal_equidistant_distance(subsatellite_point(*pos)?, roi.centroid);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && id < bid),
        };
        if better {
            best = Some((d, id));
        }
    }
    Ok(best.map(|(_, id)| id))
}

/// ISL neighbors of the master in the current snapshot, sorted.
pub fn assign_workers(master: SatelliteId, snapshot: &TopologySnapshot) -> Result<Vec<SatelliteId>> {
    let idx = snapshot.node_index(NodeId::Satellite(master))?;
    let mut workers: Vec<SatelliteId> = snapshot
        .isl_neighbors_of(idx)
        .into_iter()
        .filter_map(|n| match snapshot.node_id(n) {
            NodeId::Satellite(s) => Some(s),
            NodeId::Ground => None,
        })
        .collect();
    workers.sort();
    workers.dedup();
    Ok(workers)
}

/// Builds the task created at step `t_i`. `delays` are the `(preprocess,
/// inference)` times for this task, usually from a [`DelaySampler`].
pub fn create_task(
    task_id: u64,
    t_i: f64,
    master: SatelliteId,
    workers: &[SatelliteId],
    params: &ComputeParams,
    delays: (f64, f64),
) -> Result<SensingTask> {
    params.validate()?;
    let (pre, inf) = delays;
    let sources_n = 1 + workers.len() as u64;
    let total = params.mask().total_bytes;
    let share = total / sources_n;
    let remainder = total - share * sources_n;

    let mut sources = Vec::with_capacity(sources_n as usize);
    for (i, sat) in std::iter::once(master).chain(workers.iter().copied()).enumerate() {
        let bytes = if i == 0 { share + remainder } else { share };
        sources.push(SourceShare {
            satellite: sat,
            bytes,
            packets: bytes.div_ceil(params.mtu_bytes),
        });
    }
    let packet_count_total = sources.iter().map(|s| s.packets).sum();
    Ok(SensingTask {
        task_id,
        generation_time: t_i,
        master,
        workers: workers.to_vec(),
        sources,
        compute_ready_time: t_i + pre + compute_delay(inf, workers.len()),
        packet_count_total,
        delivered_packets: 0,
        patch_count: params.patch_count(),
        state: TaskState::Computing,
    })
}

/// Extra delay for handing raw patches from the master to its workers:
/// the slowest worker link bounds the start of parallel inference.
pub fn patch_transfer_delay(task: &SensingTask, params: &ComputeParams, snapshot: &TopologySnapshot) -> Result<f64> {
    let raw_bits = params.scene_width * params.scene_height * params.raw_bits_per_pixel;
    let per_source = raw_bits as f64 / (1 + task.workers.len()) as f64;
    let m = snapshot.node_index(NodeId::Satellite(task.master))?;
    let mut worst: f64 = 0.0;
    for w in &task.workers {
        let wi = snapshot.node_index(NodeId::Satellite(*w))?;
        let edge = snapshot
            .edge(m, wi)
            .ok_or_else(|| SimError::UnknownNode(format!("no ISL {} -> {}", task.master, w)))?;
        worst = worst.max(per_source / edge.bandwidth_bps + edge.distance_km / SPEED_OF_LIGHT_KM_S);
    }
    Ok(worst)
}

/// Splits `bytes` from `source` into MTU-sized packets; only the last may be short.
pub fn packetize(source: SatelliteId, bytes: u64, mtu_bytes: i64, task: &SensingTask) -> Result<Vec<Packet>> {
    if mtu_bytes <= 0 {
        return Err(SimError::InvalidMtu(mtu_bytes));
    }
    let mtu = mtu_bytes as u64;
    let count = bytes.div_ceil(mtu);
    Ok((0..count)
        .map(|seq| {
            let size = if seq + 1 == count { bytes - seq * mtu } else { mtu };
            Packet::new(task.task_id, source, seq, size * 8)
        })
        .collect())
}

/// Packets for every source share of `task`.
pub fn packetize_task(task: &SensingTask, mtu_bytes: u64) -> Result<Vec<Packet>> {
    let mut out = Vec::with_capacity(task.packet_count_total as usize);
    for s in &task.sources {
        out.extend(packetize(s.satellite, s.bytes, mtu_bytes as i64, task)?);
    }
    Ok(out)
}
