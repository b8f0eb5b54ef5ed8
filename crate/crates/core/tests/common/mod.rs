//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the engine's routing or event queue.

#![allow(dead_code, clippy::needless_range_loop)]

use leo_aoi::constellation::{build_walker, propagate, EcefPosition, SatelliteId, EARTH_RADIUS_KM};
use leo_aoi::harness::ShellCatalog;
use leo_aoi::netsim::{NetSim, Packet};
use leo_aoi::pipeline::{create_task, ComputeParams, SensingTask};
use leo_aoi::topology::{build_snapshot, shortest_path, LinkBandwidths, LinkKind, NodeId, TopologySnapshot, SPEED_OF_LIGHT_KM_S};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sid(slot: usize) -> SatelliteId {
    SatelliteId::new(0, slot)
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> EcefPosition {
    loop {
        let v = EcefPosition::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v.scale(radius / n);
        }
    }
}

/// A random single-plane snapshot with `sats` satellites plus ground, connected
/// toward ground, with random bandwidths so that costs do not tie.
pub fn random_snapshot(rng: &mut ChaCha8Rng, sats: usize, extra_link_prob: f64) -> TopologySnapshot {
    let positions: Vec<EcefPosition> = (0..sats)
        .map(|_| {
            let r = rng.random_range(6800.0..8000.0);
            random_point(rng, r)
        })
        .collect();
    let ground = random_point(rng, 6371.0);
    let bw = |rng: &mut ChaCha8Rng| rng.random_range(5e6..5e8);
    let mut links = Vec::new();
    let mut adjacent = vec![vec![false; sats]; sats];
    // Spanning tree: satellite k > 0 attaches to a random earlier one.
    for k in 1..sats {
        let j = rng.random_range(0..k);
        adjacent[j][k] = true;
        links.push((NodeId::Satellite(sid(k)), NodeId::Satellite(sid(j)), LinkKind::IntraPlaneIsl, bw(rng)));
        links.push((NodeId::Satellite(sid(j)), NodeId::Satellite(sid(k)), LinkKind::IntraPlaneIsl, bw(rng)));
    }
    for a in 0..sats {
        for b in (a + 1)..sats {
            if !adjacent[a][b] && rng.random_bool(extra_link_prob) {
                links.push((NodeId::Satellite(sid(a)), NodeId::Satellite(sid(b)), LinkKind::InterPlaneIsl, bw(rng)));
                links.push((NodeId::Satellite(sid(b)), NodeId::Satellite(sid(a)), LinkKind::InterPlaneIsl, bw(rng)));
            }
        }
    }
    // Satellite 0 always sees the ground; others sometimes.
    for s in 0..sats {
        if s == 0 || rng.random_bool(0.3) {
            links.push((NodeId::Satellite(sid(s)), NodeId::Ground, LinkKind::Sgl, bw(rng)));
            links.push((NodeId::Ground, NodeId::Satellite(sid(s)), LinkKind::Sgl, bw(rng)));
        }
    }
    TopologySnapshot::from_links(0.0, sats, positions, ground, &links).expect("valid fixture")
}

/// Cost of each directed edge for a packet of `bits`, in a dense matrix.
fn edge_costs(snap: &TopologySnapshot, bits: f64) -> Vec<Vec<Option<f64>>> {
    let n = snap.node_count();
    let mut m = vec![vec![None; n]; n];
    for e in snap.edges() {
        m[e.from][e.to] = Some(bits / e.bandwidth_bps + e.distance_km / SPEED_OF_LIGHT_KM_S);
    }
    m
}

/// Minimum over every simple path from `src` to `dst`, by depth-first enumeration.
pub fn brute_force_path(snap: &TopologySnapshot, src: usize, dst: usize, bits: f64) -> Option<(f64, Vec<usize>)> {
    fn walk(
        m: &[Vec<Option<f64>>],
        node: usize,
        dst: usize,
        cost: f64,
        path: &mut Vec<usize>,
        seen: &mut [bool],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if node == dst {
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                *best = Some((cost, path.clone()));
            }
            return;
        }
        for next in 0..m.len() {
            if let (Some(c), false) = (m[node][next], seen[next]) {
                seen[next] = true;
                path.push(next);
                walk(m, next, dst, cost + c, path, seen, best);
                path.pop();
                seen[next] = false;
            }
        }
    }
    let m = edge_costs(snap, bits);
    let mut seen = vec![false; m.len()];
    seen[src] = true;
    let mut best = None;
    walk(&m, src, dst, 0.0, &mut vec![src], &mut seen, &mut best);
    best
}

/// One task for the FIFO oracle: packets become ready at `ready_s`, in list order.
#[derive(Debug, Clone)]
pub struct OracleTask {
    pub task_id: u64,
    pub ready_s: f64,
    pub packets: Vec<Packet>,
}

/// Completion time of every task under per-link FIFO service, computed by
/// repeatedly serving the packet that reached its next link earliest.
/// Equal readiness is broken by submission order (task, then packet index).
pub fn fifo_schedule(snap: &TopologySnapshot, tasks: &[OracleTask]) -> Vec<(u64, Option<f64>)> {
    struct State {
        task: usize,
        route: Vec<usize>,
        hop: usize,
        ready: f64,
        bits: f64,
    }
    let ground = snap.ground_index();
    let mut packets = Vec::new();
    let mut unroutable = vec![false; tasks.len()];
    for (ti, t) in tasks.iter().enumerate() {
        for p in &t.packets {
            let src = snap.node_index(NodeId::Satellite(p.source)).unwrap();
            match brute_force_path(snap, src, ground, p.size_bits as f64) {
                Some((_, route)) => packets.push(State {
                    task: ti,
                    route,
                    hop: 0,
                    ready: t.ready_s,
                    bits: p.size_bits as f64,
                }),
                None => unroutable[ti] = true,
            }
        }
    }
    let n = snap.node_count();
    let mut link_free = vec![vec![f64::NEG_INFINITY; n]; n];
    let mut finish = vec![f64::NEG_INFINITY; tasks.len()];
    loop {
        let mut pick: Option<usize> = None;
        for (i, p) in packets.iter().enumerate() {
            if p.hop + 1 >= p.route.len() {
                continue;
            }
            if pick.is_none_or(|j| p.ready < packets[j].ready) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let p = &mut packets[i];
        let (u, v) = (p.route[p.hop], p.route[p.hop + 1]);
        let e = snap.edge(u, v).unwrap();
        let start = p.ready.max(link_free[u][v]);
        let end = start + p.bits / e.bandwidth_bps;
        let arrival = end + e.distance_km / SPEED_OF_LIGHT_KM_S;
        link_free[u][v] = end;
        p.ready = arrival;
        p.hop += 1;
        if v == ground {
            finish[p.task] = finish[p.task].max(arrival);
        }
    }
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.task_id, (!unroutable[i]).then_some(finish[i])))
        .collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    cov / (sx * sy)
}

pub fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn oracle_task(id: u64, ready: f64, packets: u64) -> SensingTask {
    let mut t = create_task(id, 0.0, sid(0), &[], &ComputeParams::default(), (0.0, 0.0)).unwrap();
    t.compute_ready_time = ready;
    t.packet_count_total = packets;
    t
}

/// Runs one random fixture through the engine and the oracle.
pub fn compare_with_oracle(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sats = rng.random_range(2..=4);
    let snap = random_snapshot(&mut rng, sats, 0.4);
    let n_tasks = rng.random_range(1..=3);
    let mut tasks = Vec::new();
    for id in 0..n_tasks {
        let count = rng.random_range(1..=10);
        let packets: Vec<Packet> = (0..count)
            .map(|seq| Packet::new(id, sid(rng.random_range(0..sats)), seq, rng.random_range(1_000..600_000)))
            .collect();
        tasks.push(OracleTask { task_id: id, ready_s: rng.random_range(0.0..0.05), packets });
    }

    let mut sim = NetSim::new(snap.clone());
    for t in &tasks {
        sim.submit_task(oracle_task(t.task_id, t.ready_s, t.packets.len() as u64), t.packets.clone())
            .map_err(|e| e.to_string())?;
    }
    sim.advance_to(1e6).map_err(|e| e.to_string())?;
    let mut got: Vec<(u64, f64)> = sim.drain_deliveries().iter().map(|r| (r.task_id, r.completion_time)).collect();
    got.sort_by_key(|g| g.0);

    for (id, expected) in fifo_schedule(&snap, &tasks) {
        let actual = got.iter().find(|g| g.0 == id).map(|g| g.1);
        if actual != expected {
            return Err(format!("seed {seed} task {id}: engine {actual:?} vs oracle {expected:?}"));
        }
    }
    Ok(())
}

/// Largest relative error between Dijkstra and exhaustive search over
/// `count` random snapshots of at most 12 nodes.
pub fn worst_relative_error(count: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let sats = rng.random_range(2..=11);
        let snap = random_snapshot(&mut rng, sats, 0.35);
        let bits = rng.random_range(1e3..1e6);
        let src = rng.random_range(0..sats);
        let dst = snap.ground_index();
        let fast = shortest_path(&snap, snap.node_id(src), snap.node_id(dst), bits).unwrap();
        let slow = brute_force_path(&snap, src, dst, bits);
        match (fast, slow) {
            (Some(p), Some((c, nodes))) => {
                worst = worst.max((p.cost_s - c).abs() / c);
                let ids: Vec<_> = nodes.iter().map(|&i| snap.node_id(i)).collect();
                assert_eq!(p.nodes.first(), ids.first());
                assert_eq!(p.nodes.last(), ids.last());
            }
            (None, None) => {}
            (a, b) => panic!("seed {seed}: reachability differs ({a:?} vs {b:?})"),
        }
    }
    worst
}

/// Largest relative deviation of `|r(t)|` from `R_E + h` over `epochs`
/// random times per shell, across every satellite.
pub fn worst_radius_drift(catalog: &ShellCatalog, epochs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for shell in &catalog.shells {
        let a = EARTH_RADIUS_KM + shell.altitude_km;
        let elements = build_walker(shell).unwrap();
        for _ in 0..epochs {
            let t = rng.random_range(0.0..30.0 * 86_400.0);
            for (_, e) in &elements {
                worst = worst.max((propagate(e, t).norm() - a).abs() / a);
            }
        }
    }
    worst
}

/// Maximum ISL out-degree over `count` random (shell, time) snapshots.
pub fn max_isl_degree(catalog: &ShellCatalog, count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gs = &catalog.stations[0];
    let walkers: Vec<_> = catalog.shells.iter().map(|s| build_walker(s).unwrap()).collect();
    let mut worst = 0;
    for _ in 0..count {
        let k = rng.random_range(0..catalog.shells.len());
        let t = rng.random_range(0.0..86_400.0);
        let snap = build_snapshot(&catalog.shells[k], &walkers[k], gs, t, &LinkBandwidths::default()).unwrap();
        for u in 0..snap.satellite_count() {
            let isl = snap.out_edges(u).filter(|e| e.kind.is_isl()).count();
            worst = worst.max(isl);
        }
    }
    worst
}

