//! Per-step communication graph: Grid+ inter-satellite links plus
//! elevation-gated ground links, and latency-weighted shortest paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constellation::{
    geodetic_to_ecef, propagate, EcefPosition, GeodeticCoord, OrbitalElements, SatelliteId,
    ShellConfig, WalkerPattern,
};
use crate::error::{Result, SimError};

/// Speed of light in km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

pub const DEFAULT_ISL_BPS: f64 = 10e9;
pub const DEFAULT_SGL_BPS: f64 = 100e6;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStation {
    pub name: String,
    pub location: GeodeticCoord,
    pub ecef: EcefPosition,
}

impl GroundStation {
    pub fn new(name: impl Into<String>, location: GeodeticCoord) -> Result<Self> {
        location.validate()?;
        Ok(Self {
            name: name.into(),
            location,
            ecef: geodetic_to_ecef(location, 0.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkBandwidths {
    pub isl_bps: f64,
    pub sgl_bps: f64,
}

impl Default for LinkBandwidths {
    fn default() -> Self {
        Self {
            isl_bps: DEFAULT_ISL_BPS,
            sgl_bps: DEFAULT_SGL_BPS,
        }
    }
}

impl LinkBandwidths {
    pub fn validate(&self) -> Result<()> {
        if !(self.isl_bps > 0.0) || !(self.sgl_bps > 0.0) {
            return Err(SimError::config("link bandwidths must be positive"));
        }
        Ok(())
    }
}

/// Graph vertex: a satellite or the single ground station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Satellite(SatelliteId),
    Ground,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Satellite(s) => s.fmt(f),
            NodeId::Ground => f.write_str("ground"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    IntraPlaneIsl,
    InterPlaneIsl,
    Sgl,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::IntraPlaneIsl => "intra_isl",
            LinkKind::InterPlaneIsl => "inter_isl",
            LinkKind::Sgl => "sgl",
        }
    }

    pub fn is_isl(self) -> bool {
        !matches!(self, LinkKind::Sgl)
    }
}

/// Directed edge between two node indices of a snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEdge {
    pub from: usize,
    pub to: usize,
    pub kind: LinkKind,
    pub distance_km: f64,
    pub bandwidth_bps: f64,
}

impl LinkEdge {
    /// Transmission plus propagation time for a packet of `bits`.
    pub fn cost(&self, bits: f64) -> f64 {
        bits / self.bandwidth_bps + self.distance_km / SPEED_OF_LIGHT_KM_S
    }
}

/// The directed graph valid over one snapshot epoch.
///
/// Node indices `0..n` are satellites in flat `(plane, slot)` order; index
/// `n` is the ground station.
#[derive(Debug, Clone)]
pub struct TopologySnapshot {
    time_s: f64,
    sats_per_plane: usize,
    positions: Vec<EcefPosition>,
    edges: Vec<LinkEdge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl TopologySnapshot {
    /// Builds a snapshot from explicit links. Distances are taken from the
    /// endpoint positions; `ground` becomes the last node.
    pub fn from_links(
        time_s: f64,
        sats_per_plane: usize,
        satellites: Vec<EcefPosition>,
        ground: EcefPosition,
        links: &[(NodeId, NodeId, LinkKind, f64)],
    ) -> Result<Self> {
        let mut positions = satellites;
        positions.push(ground);
        let mut snap = Self::empty(time_s, sats_per_plane.max(1), positions);
        for &(u, v, kind, bandwidth_bps) in links {
            let (u, v) = (snap.node_index(u)?, snap.node_index(v)?);
            if u == v {
                return Err(SimError::config("self-loop link"));
            }
            if snap.edge(u, v).is_some() {
                return Err(SimError::config(format!(
                    "duplicate link {} -> {}",
                    snap.node_id(u),
                    snap.node_id(v)
                )));
            }
            if !(bandwidth_bps > 0.0) {
                return Err(SimError::config("link bandwidth must be positive"));
            }
            let touches_ground = (u == snap.ground_index()) as u8 + (v == snap.ground_index()) as u8;
            if (kind == LinkKind::Sgl) != (touches_ground == 1) {
                return Err(SimError::config(
                    "SGL links must have exactly one ground endpoint",
                ));
            }
            snap.push_edge(u, v, kind, bandwidth_bps)?;
        }
        Ok(snap)
    }

    fn empty(time_s: f64, sats_per_plane: usize, positions: Vec<EcefPosition>) -> Self {
        let n = positions.len();
        Self {
            time_s,
            sats_per_plane,
            positions,
            edges: Vec::new(),
            out_edges: vec![Vec::new(); n],
            in_edges: vec![Vec::new(); n],
        }
    }

    fn push_edge(&mut self, from: usize, to: usize, kind: LinkKind, bandwidth_bps: f64) -> Result<()> {
        let distance_km = self.positions[from].distance(self.positions[to]);
        if !(distance_km > 0.0) {
            return Err(SimError::CoincidentPoints);
        }
        let idx = self.edges.len();
        self.edges.push(LinkEdge {
            from,
            to,
            kind,
            distance_km,
            bandwidth_bps,
        });
        self.out_edges[from].push(idx);
        self.in_edges[to].push(idx);
        Ok(())
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn satellite_count(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn ground_index(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn node_index(&self, node: NodeId) -> Result<usize> {
        match node {
            NodeId::Ground => Ok(self.ground_index()),
            NodeId::Satellite(s) => {
                let idx = s.flat_index(self.sats_per_plane);
                if s.slot < self.sats_per_plane && idx < self.satellite_count() {
                    Ok(idx)
                } else {
                    Err(SimError::UnknownNode(s.to_string()))
                }
            }
        }
    }

    pub fn node_id(&self, index: usize) -> NodeId {
        if index == self.ground_index() {
            NodeId::Ground
        } else {
            NodeId::Satellite(SatelliteId::from_flat(index, self.sats_per_plane))
        }
    }

    pub fn position(&self, index: usize) -> EcefPosition {
        self.positions[index]
    }

    /// Satellite positions in flat index order (ground excluded).
    pub fn satellite_positions(&self) -> &[EcefPosition] {
        &self.positions[..self.satellite_count()]
    }

    pub fn edges(&self) -> &[LinkEdge] {
        &self.edges
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &LinkEdge> + '_ {
        self.out_edges[node].iter().map(move |&e| &self.edges[e])
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&LinkEdge> {
        self.out_edges(from).find(|e| e.to == to)
    }

    pub fn isl_neighbors_of(&self, node: usize) -> Vec<usize> {
        self.out_edges(node).filter(|e| e.kind.is_isl()).map(|e| e.to).collect()
    }

    pub fn sgl_count(&self) -> usize {
        self.out_edges[self.ground_index()].len()
    }

    /// Writes `node_u,node_v,kind,distance_km,bandwidth_bps`, one line per directed edge.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "node_u,node_v,kind,distance_km,bandwidth_bps")?;
        for e in &self.edges {
            writeln!(
                w,
                "{},{},{},{:.6},{}",
                self.node_id(e.from),
                self.node_id(e.to),
                e.kind.as_str(),
                e.distance_km,
                e.bandwidth_bps
            )?;
        }
        Ok(())
    }
}

/// Elevation of `sat` above the local horizon at ground point `gs`, in degrees.
pub fn elevation_angle(gs: EcefPosition, sat: EcefPosition) -> Result<f64> {
    let los = sat.minus(gs);
    let range = los.norm();
    if range == 0.0 {
        return Err(SimError::CoincidentPoints);
    }
    let up = gs.unit()?;
    // atan2 keeps full precision near zenith where asin flattens out.
    let vertical = up.dot(los);
    let horizontal = up.cross(los).norm();
    Ok(vertical.atan2(horizontal).to_degrees())
}

/// Grid+ neighbors: slot +-1 in the same plane and the same slot in planes
/// +-1. On a Star shell the seam link from plane `P-1` to plane 0 is offset
/// by `F` slots.
pub fn isl_neighbors(id: SatelliteId, cfg: &ShellConfig) -> Vec<SatelliteId> {
    let (p, r) = (cfg.planes, cfg.sats_per_plane);
    let mut out: Vec<SatelliteId> = Vec::with_capacity(4);
    let mut add = |n: SatelliteId| {
        if n != id && !out.contains(&n) {
            out.push(n);
        }
    };
    add(SatelliteId::new(id.plane, (id.slot + r - 1) % r));
    add(SatelliteId::new(id.plane, (id.slot + 1) % r));

    let seam = cfg.pattern == WalkerPattern::Star;
    let prev_plane = (id.plane + p - 1) % p;
    let next_plane = (id.plane + 1) % p;
    let prev_slot = if seam && id.plane == 0 {
        (id.slot + r - cfg.phasing % r) % r
    } else {
        id.slot
    };
    let next_slot = if seam && id.plane == p - 1 {
        (id.slot + cfg.phasing) % r
    } else {
        id.slot
    };
    add(SatelliteId::new(prev_plane, prev_slot));
    add(SatelliteId::new(next_plane, next_slot));
    out
}

/// Propagates the shell to `t` and assembles `G(t)`.
pub fn build_snapshot(
    shell: &ShellConfig,
    elements: &[(SatelliteId, OrbitalElements)],
    gs: &GroundStation,
    t: f64,
    bandwidths: &LinkBandwidths,
) -> Result<TopologySnapshot> {
    let r = shell.sats_per_plane;
    let mut positions = vec![EcefPosition::default(); elements.len() + 1];
    for (id, elem) in elements {
        positions[id.flat_index(r)] = propagate(elem, t);
    }
    let ground = elements.len();
    positions[ground] = gs.ecef;
    let mut snap = TopologySnapshot::empty(t, r, positions);

    for (id, _) in elements {
        let u = id.flat_index(r);
        for n in isl_neighbors(*id, shell) {
            let kind = if n.plane == id.plane {
                LinkKind::IntraPlaneIsl
            } else {
                LinkKind::InterPlaneIsl
            };
            snap.push_edge(u, n.flat_index(r), kind, bandwidths.isl_bps)?;
        }
    }
    for u in 0..elements.len() {
        if elevation_angle(gs.ecef, snap.positions[u])? >= shell.min_elevation_deg {
            snap.push_edge(u, ground, LinkKind::Sgl, bandwidths.sgl_bps)?;
            snap.push_edge(ground, u, LinkKind::Sgl, bandwidths.sgl_bps)?;
        }
    }
    Ok(snap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub cost_s: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Reversed for a min-heap; equal costs pop the lower index first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `root`. With `toward_root` the search runs over reversed
/// edges so `link[v]` is the next hop from `v` toward `root`; otherwise it is
/// the predecessor of `v` on the path from `root`.
fn dijkstra(snap: &TopologySnapshot, root: usize, bits: f64, toward_root: bool) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = snap.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut link = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[root] = 0.0;
    heap.push(Frontier { cost: 0.0, node: root });
    while let Some(Frontier { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        let adjacent = if toward_root {
            &snap.in_edges[node]
        } else {
            &snap.out_edges[node]
        };
        for &ei in adjacent {
            let e = &snap.edges[ei];
            let next = if toward_root { e.from } else { e.to };
            let c = cost + e.cost(bits);
            if c < dist[next] {
                dist[next] = c;
                link[next] = Some(node);
                heap.push(Frontier { cost: c, node: next });
            }
        }
    }
    (dist, link)
}

/// Minimum-latency path (transmission + propagation, no queueing) for a
/// packet of `packet_bits`. `Ok(None)` when `dst` is unreachable.
pub fn shortest_path(
    snap: &TopologySnapshot,
    src: NodeId,
    dst: NodeId,
    packet_bits: f64,
) -> Result<Option<Path>> {
    let (s, d) = (snap.node_index(src)?, snap.node_index(dst)?);
    let (dist, pred) = dijkstra(snap, s, packet_bits, false);
    if !dist[d].is_finite() {
        return Ok(None);
    }
    let mut nodes = vec![d];
    let mut cur = d;
    while let Some(p) = pred[cur] {
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    Ok(Some(Path {
        nodes: nodes.into_iter().map(|i| snap.node_id(i)).collect(),
        cost_s: dist[d],
    }))
}

/// Shortest-path tree toward a single destination for one packet size.
#[derive(Debug, Clone)]
pub struct RouteTree {
    dest: usize,
    cost: Vec<f64>,
    next_hop: Vec<Option<usize>>,
}

impl RouteTree {
    pub fn toward(snap: &TopologySnapshot, dest: usize, packet_bits: f64) -> Self {
        let (cost, next_hop) = dijkstra(snap, dest, packet_bits, true);
        Self { dest, cost, next_hop }
    }

    pub fn cost_from(&self, node: usize) -> Option<f64> {
        self.cost[node].is_finite().then_some(self.cost[node])
    }

    /// Node indices after `node` up to and including the destination.
    /// Empty when `node` is the destination, `None` when unreachable.
    pub fn route_from(&self, node: usize) -> Option<Vec<usize>> {
        if node == self.dest {
            return Some(Vec::new());
        }
        self.cost_from(node)?;
        let mut route = Vec::new();
        let mut cur = node;
        while let Some(next) = self.next_hop[cur] {
            route.push(next);
            cur = next;
        }
        Some(route)
    }
}
