//! Packet-level discrete-event engine.
//!
//! Every directed link is a capacity-1 resource served FIFO. A packet holds
//! the link for its transmission time `bits / B`, then propagates for `d / c`
//! while the link already serves the next packet. The topology is fixed
//! within a snapshot epoch; at each boundary queued and parked packets are
//! rerouted, and packets already on a link finish that hop first.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use crate::constellation::SatelliteId;
use crate::error::{Result, SimError};
use crate::pipeline::{SensingTask, TaskState};
use crate::topology::{LinkEdge, NodeId, RouteTree, TopologySnapshot, SPEED_OF_LIGHT_KM_S};

/// `queue_wait + bits / B + d / c`.
pub fn hop_latency(edge: &LinkEdge, bits: f64, queue_wait: f64) -> f64 {
    queue_wait + bits / edge.bandwidth_bps + edge.distance_km / SPEED_OF_LIGHT_KM_S
}

/// One MTU-sized fragment of a task payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub task_id: u64,
    pub source: SatelliteId,
    pub seq: u64,
    pub size_bits: u64,
    pub current_node: NodeId,
    pub remaining_route: Vec<NodeId>,
    pub injected_at: Option<f64>,
    pub delivered_at: Option<f64>,
}

impl Packet {
    pub fn new(task_id: u64, source: SatelliteId, seq: u64, size_bits: u64) -> Self {
        Self {
            task_id,
            source,
            seq,
            size_bits,
            current_node: NodeId::Satellite(source),
            remaining_route: Vec::new(),
            injected_at: None,
            delivered_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub task_id: u64,
    pub generation_time: f64,
    pub completion_time: f64,
}

/// Handle to a packet inside the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketKey(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketStatus {
    /// Created but not yet injected.
    Pending,
    /// Waiting for a link to free up.
    Queued,
    /// Holding a link or propagating over it.
    OnLink,
    /// No route to the ground station in the current snapshot.
    Parked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TaskReady { task_id: u64 },
    Inject { key: PacketKey },
    LinkFree { from: usize, to: usize },
    HopComplete { key: PacketKey, node: usize },
}

impl EventKind {
    fn label(&self) -> &'static str {
        match self {
            EventKind::TaskReady { .. } => "task_ready",
            EventKind::Inject { .. } => "inject",
            EventKind::LinkFree { .. } => "link_free",
            EventKind::HopComplete { .. } => "hop_complete",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    ordinal: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    // Min-heap on (time, ordinal).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.ordinal.cmp(&self.ordinal))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events in time order; equal times dispatch in insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_ordinal: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event {
            time,
            ordinal: self.next_ordinal,
            kind,
        });
        self.next_ordinal += 1;
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn pop(&mut self) -> Option<(f64, EventKind)> {
        self.heap.pop().map(|e| (e.time, e.kind))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct LinkResource {
    pub holder: Option<PacketKey>,
    pub busy_until: f64,
    pub waiting: VecDeque<PacketKey>,
}

/// One transmission on one link, for capacity and causality checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkOccupancy {
    pub from: usize,
    pub to: usize,
    pub task_id: u64,
    pub seq: u64,
    pub enqueued_at: f64,
    pub start: f64,
    pub end: f64,
    pub arrival: f64,
    pub bits: f64,
    pub bandwidth_bps: f64,
    pub distance_km: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketCensus {
    pub injected: u64,
    pub delivered: u64,
    pub queued: u64,
    pub on_link: u64,
    pub parked: u64,
}

impl PacketCensus {
    pub fn in_flight(&self) -> u64 {
        self.queued + self.on_link
    }
}

#[derive(Debug)]
struct PacketSlot {
    task_id: u64,
    source: SatelliteId,
    seq: u64,
    size_bits: u64,
    node: usize,
    route: VecDeque<usize>,
    route_epoch: u64,
    status: PacketStatus,
    order: u64,
    enqueued_at: f64,
    injected_at: Option<f64>,
}

#[derive(Debug)]
struct TaskEntry {
    task: SensingTask,
    unsent: Vec<Packet>,
    remaining: u64,
}

pub struct NetSim {
    now: f64,
    snapshot: TopologySnapshot,
    epoch: u64,
    routes: HashMap<u64, RouteTree>,
    events: EventQueue,
    slots: Vec<Option<PacketSlot>>,
    free_slots: Vec<usize>,
    links: HashMap<(usize, usize), LinkResource>,
    parked: Vec<PacketKey>,
    tasks: HashMap<u64, TaskEntry>,
    deliveries: Vec<DeliveryRecord>,
    order_counter: u64,
    census: PacketCensus,
    occupancy: Option<Vec<LinkOccupancy>>,
    trace: Option<Box<dyn Write + Send>>,
    trace_error: Option<std::io::Error>,
}

impl NetSim {
    pub fn new(snapshot: TopologySnapshot) -> Self {
        Self {
            now: snapshot.time_s(),
            snapshot,
            epoch: 0,
            routes: HashMap::new(),
            events: EventQueue::default(),
            slots: Vec::new(),
            free_slots: Vec::new(),
            links: HashMap::new(),
            parked: Vec::new(),
            tasks: HashMap::new(),
            deliveries: Vec::new(),
            order_counter: 0,
            census: PacketCensus::default(),
            occupancy: None,
            trace: None,
            trace_error: None,
        }
    }

    /// Keeps a log of every link transmission.
    pub fn record_occupancy(&mut self) {
        self.occupancy.get_or_insert_with(Vec::new);
    }

    pub fn occupancy_log(&self) -> &[LinkOccupancy] {
        self.occupancy.as_deref().unwrap_or(&[])
    }

    /// Emits `time_s,kind,task_id,seq,node_u,node_v` per dispatched event.
    pub fn set_trace(&mut self, mut w: Box<dyn Write + Send>) {
        if let Err(e) = writeln!(w, "time_s,kind,task_id,seq,node_u,node_v") {
            self.trace_error = Some(e);
        }
        self.trace = Some(w);
    }

    /// Flushes the trace and reports the first write failure, if any.
    pub fn finish_trace(&mut self) -> std::io::Result<()> {
        if let Some(e) = self.trace_error.take() {
            return Err(e);
        }
        match self.trace.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn snapshot(&self) -> &TopologySnapshot {
        &self.snapshot
    }

    pub fn census(&self) -> PacketCensus {
        self.census
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&LinkResource> {
        let u = self.snapshot.node_index(from).ok()?;
        let v = self.snapshot.node_index(to).ok()?;
        self.links.get(&(u, v))
    }

    pub fn task(&self, task_id: u64) -> Option<&SensingTask> {
        self.tasks.get(&task_id).map(|e| &e.task)
    }

    /// Settles a delivered task: `Complete` if the sink accepted it,
    /// `Superseded` if it arrived obsolete.
    pub fn resolve_task(&mut self, task_id: u64, accepted: bool) -> Result<()> {
        let entry = self
            .tasks
            .get_mut(&task_id)
            .ok_or_else(|| SimError::config(format!("unknown task {task_id}")))?;
        if entry.remaining != 0 {
            return Err(SimError::config(format!("task {task_id} still has packets in transit")));
        }
        entry.task.transition(if accepted {
            TaskState::Complete
        } else {
            TaskState::Superseded
        })
    }

    /// Delivery records produced since the last drain, in completion order.
    pub fn drain_deliveries(&mut self) -> Vec<DeliveryRecord> {
        std::mem::take(&mut self.deliveries)
    }

    /// Registers a task and schedules its packets for injection at
    /// `compute_ready_time`, each from its own source satellite.
    pub fn submit_task(&mut self, task: SensingTask, packets: Vec<Packet>) -> Result<()> {
        if packets.len() as u64 != task.packet_count_total {
            return Err(SimError::config(format!(
                "task {}: expected {} packets, got {}",
                task.task_id,
                task.packet_count_total,
                packets.len()
            )));
        }
        if task.compute_ready_time < self.now {
            return Err(SimError::config(format!(
                "task {} ready at {} before current time {}",
                task.task_id, task.compute_ready_time, self.now
            )));
        }
        let id = task.task_id;
        let ready = task.compute_ready_time;
        self.register(task, packets)?;
        self.events.push(ready, EventKind::TaskReady { task_id: id });
        Ok(())
    }

    /// Registers a task whose packets will be injected one by one through [`NetSim::inject`].
    pub fn register_task(&mut self, task: SensingTask) -> Result<()> {
        self.register(task, Vec::new())
    }

    fn register(&mut self, task: SensingTask, unsent: Vec<Packet>) -> Result<()> {
        if self.tasks.contains_key(&task.task_id) {
            return Err(SimError::config(format!("duplicate task id {}", task.task_id)));
        }
        let remaining = task.packet_count_total;
        self.tasks.insert(task.task_id, TaskEntry { task, unsent, remaining });
        Ok(())
    }

    /// Schedules `packet` to enter the network at its source at time `at`.
    pub fn inject(&mut self, packet: Packet, at: f64) -> Result<PacketKey> {
        if at < self.now {
            return Err(SimError::config(format!("inject at {at} is before current time {}", self.now)));
        }
        if !self.tasks.contains_key(&packet.task_id) {
            return Err(SimError::config(format!("packet for unregistered task {}", packet.task_id)));
        }
        let key = self.alloc(packet)?;
        self.events.push(at, EventKind::Inject { key });
        Ok(key)
    }

    /// Current view of a packet that has not been delivered yet.
    pub fn packet(&self, key: PacketKey) -> Option<Packet> {
        let s = self.slots.get(key.0)?.as_ref()?;
        Some(Packet {
            task_id: s.task_id,
            source: s.source,
            seq: s.seq,
            size_bits: s.size_bits,
            current_node: self.snapshot.node_id(s.node),
            remaining_route: s.route.iter().map(|&n| self.snapshot.node_id(n)).collect(),
            injected_at: s.injected_at,
            delivered_at: None,
        })
    }

    pub fn packet_status(&self, key: PacketKey) -> Option<PacketStatus> {
        self.slots.get(key.0)?.as_ref().map(|s| s.status)
    }

    /// Dispatches every event with time `<= t_next`, then sets the clock to `t_next`.
    pub fn advance_to(&mut self, t_next: f64) -> Result<()> {
        if t_next < self.now {
            return Err(SimError::config(format!("cannot rewind from {} to {t_next}", self.now)));
        }
        while let Some(t) = self.events.peek_time() {
            if t > t_next {
                break;
            }
            let (time, kind) = self.events.pop().expect("peeked");
            self.now = time;
            self.dispatch(kind)?;
        }
        self.now = t_next;
        Ok(())
    }

    /// Installs the next snapshot at its boundary time. Queued and parked
    /// packets are rerouted from their current node; packets on a link keep
    /// going and reroute when that hop completes.
    pub fn reroute_in_flight(&mut self, snapshot: TopologySnapshot) -> Result<()> {
        if snapshot.node_count() != self.snapshot.node_count() {
            return Err(SimError::config("snapshot node set changed between epochs"));
        }
        self.advance_to(snapshot.time_s())?;
        self.snapshot = snapshot;
        self.epoch += 1;
        self.routes.clear();
        self.write_trace("snapshot_boundary", None, None, None);

        let mut moved: Vec<PacketKey> = std::mem::take(&mut self.parked);
        for link in self.links.values_mut() {
            moved.extend(link.waiting.drain(..));
        }
        self.links.retain(|_, l| l.holder.is_some());
        moved.sort_by_key(|k| self.slot(*k).order);
        for key in moved {
            match self.slot(key).status {
                PacketStatus::Parked => self.census.parked -= 1,
                PacketStatus::Queued => self.census.queued -= 1,
                s => unreachable!("rerouting packet in state {s:?}"),
            }
            self.route(key);
        }
        Ok(())
    }

    fn alloc(&mut self, packet: Packet) -> Result<PacketKey> {
        let node = self.snapshot.node_index(NodeId::Satellite(packet.source))?;
        let slot = PacketSlot {
            task_id: packet.task_id,
            source: packet.source,
            seq: packet.seq,
            size_bits: packet.size_bits,
            node,
            route: VecDeque::new(),
            route_epoch: u64::MAX,
            status: PacketStatus::Pending,
            order: 0,
            enqueued_at: 0.0,
            injected_at: None,
        };
        let idx = match self.free_slots.pop() {
            Some(i) => {
                self.slots[i] = Some(slot);
                i
            }
            None => {
                self.slots.push(Some(slot));
                self.slots.len() - 1
            }
        };
        Ok(PacketKey(idx))
    }

    fn slot(&self, key: PacketKey) -> &PacketSlot {
        self.slots[key.0].as_ref().expect("live packet")
    }

    fn slot_mut(&mut self, key: PacketKey) -> &mut PacketSlot {
        self.slots[key.0].as_mut().expect("live packet")
    }

    fn next_order(&mut self) -> u64 {
        self.order_counter += 1;
        self.order_counter
    }

    fn dispatch(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::TaskReady { task_id } => {
                let entry = self.tasks.get_mut(&task_id).expect("registered task");
                let packets = std::mem::take(&mut entry.unsent);
                let master = entry.task.master;
                if packets.is_empty() {
                    let rec = DeliveryRecord {
                        task_id,
                        generation_time: entry.task.generation_time,
                        completion_time: self.now,
                    };
                    self.deliveries.push(rec);
                } else {
                    entry.task.transition(TaskState::Transmitting)?;
                }
                let m = self.snapshot.node_index(NodeId::Satellite(master))?;
                self.write_trace(kind.label(), Some((task_id, None)), Some(m), None);
                for p in packets {
                    let key = self.alloc(p)?;
                    self.start_packet(key);
                }
            }
            EventKind::Inject { key } => {
                let s = self.slot(key);
                let (task_id, seq, node) = (s.task_id, s.seq, s.node);
                if let Some(e) = self.tasks.get_mut(&task_id) {
                    if e.task.state == TaskState::Computing {
                        e.task.transition(TaskState::Transmitting)?;
                    }
                }
                self.write_trace(kind.label(), Some((task_id, Some(seq))), Some(node), None);
                self.start_packet(key);
            }
            EventKind::LinkFree { from, to } => {
                let link = self.links.get_mut(&(from, to)).expect("link in use");
                let done = link.holder.take().expect("link had a holder");
                let next = link.waiting.pop_front();
                if self.trace.is_some() {
                    let s = self.slot(done);
                    let ids = (s.task_id, Some(s.seq));
                    self.write_trace(kind.label(), Some(ids), Some(from), Some(to));
                }
                if let Some(k) = next {
                    self.census.queued -= 1;
                    self.transmit(k, from, to);
                } else if self.snapshot.edge(from, to).is_none() {
                    self.links.remove(&(from, to));
                }
            }
            EventKind::HopComplete { key, node } => {
                let from = self.slot(key).node;
                if self.trace.is_some() {
                    let s = self.slot(key);
                    let ids = (s.task_id, Some(s.seq));
                    self.write_trace(kind.label(), Some(ids), Some(from), Some(node));
                }
                self.census.on_link -= 1;
                let epoch = self.epoch;
                let ground = self.snapshot.ground_index();
                let slot = self.slot_mut(key);
                slot.node = node;
                if node == ground {
                    self.deliver(key)?;
                } else if slot.route_epoch == epoch {
                    slot.route.pop_front();
                    self.enqueue(key);
                } else {
                    self.route(key);
                }
            }
        }
        Ok(())
    }

    fn start_packet(&mut self, key: PacketKey) {
        let now = self.now;
        self.slot_mut(key).injected_at = Some(now);
        self.census.injected += 1;
        self.route(key);
    }

    fn route(&mut self, key: PacketKey) {
        let (node, bits) = {
            let s = self.slot(key);
            (s.node, s.size_bits)
        };
        let ground = self.snapshot.ground_index();
        let snapshot = &self.snapshot;
        let tree = self
            .routes
            .entry(bits)
            .or_insert_with(|| RouteTree::toward(snapshot, ground, bits as f64));
        match tree.route_from(node) {
            Some(route) => {
                let epoch = self.epoch;
                let s = self.slot_mut(key);
                s.route = route.into();
                s.route_epoch = epoch;
                self.enqueue(key);
            }
            None => {
                let order = self.next_order();
                let s = self.slot_mut(key);
                s.route.clear();
                s.status = PacketStatus::Parked;
                s.order = order;
                self.census.parked += 1;
                self.parked.push(key);
            }
        }
    }

    fn enqueue(&mut self, key: PacketKey) {
        let order = self.next_order();
        let now = self.now;
        let s = self.slot_mut(key);
        let from = s.node;
        let to = *s.route.front().expect("non-empty route to ground");
        s.status = PacketStatus::Queued;
        s.order = order;
        s.enqueued_at = now;
        let link = self.links.entry((from, to)).or_default();
        if link.holder.is_none() {
            self.transmit(key, from, to);
        } else {
            link.waiting.push_back(key);
            self.census.queued += 1;
        }
    }

    fn transmit(&mut self, key: PacketKey, from: usize, to: usize) {
        let edge = *self
            .snapshot
            .edge(from, to)
            .expect("routes only use links of the current snapshot");
        let now = self.now;
        let (bits, task_id, seq, enqueued_at) = {
            let s = self.slot_mut(key);
            s.status = PacketStatus::OnLink;
            (s.size_bits as f64, s.task_id, s.seq, s.enqueued_at)
        };
        let end = now + bits / edge.bandwidth_bps;
        let arrival = end + edge.distance_km / SPEED_OF_LIGHT_KM_S;
        let link = self.links.get_mut(&(from, to)).expect("link entry");
        link.holder = Some(key);
        link.busy_until = end;
        self.census.on_link += 1;
        self.events.push(end, EventKind::LinkFree { from, to });
        self.events.push(arrival, EventKind::HopComplete { key, node: to });
        if let Some(log) = self.occupancy.as_mut() {
            log.push(LinkOccupancy {
                from,
                to,
                task_id,
                seq,
                enqueued_at,
                start: now,
                end,
                arrival,
                bits,
                bandwidth_bps: edge.bandwidth_bps,
                distance_km: edge.distance_km,
            });
        }
    }

    fn deliver(&mut self, key: PacketKey) -> Result<()> {
        let slot = self.slots[key.0].take().expect("live packet");
        self.free_slots.push(key.0);
        self.census.delivered += 1;
        let now = self.now;
        let entry = self
            .tasks
            .get_mut(&slot.task_id)
            .ok_or_else(|| SimError::config(format!("packet for unknown task {}", slot.task_id)))?;
        entry.remaining = entry.remaining.saturating_sub(1);
        entry.task.delivered_packets += 1;
        if entry.remaining == 0 {
            self.deliveries.push(DeliveryRecord {
                task_id: slot.task_id,
                generation_time: entry.task.generation_time,
                completion_time: now,
            });
        }
        Ok(())
    }

    fn write_trace(&mut self, kind: &str, ids: Option<(u64, Option<u64>)>, u: Option<usize>, v: Option<usize>) {
        if self.trace.is_none() || self.trace_error.is_some() {
            return;
        }
        let name = |n: Option<usize>| n.map(|i| self.snapshot.node_id(i).to_string()).unwrap_or_default();
        let (task, seq) = match ids {
            Some((t, s)) => (t.to_string(), s.map(|s| s.to_string()).unwrap_or_default()),
            None => (String::new(), String::new()),
        };
        let line = format!("{:.9},{kind},{task},{seq},{},{}", self.now, name(u), name(v));
        let w = self.trace.as_mut().expect("checked");
        if let Err(e) = writeln!(w, "{line}") {
            self.trace_error = Some(e);
        }
    }
}
