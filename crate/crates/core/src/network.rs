//! The simulated network: nodes, the event queue, flow sessions at sources,
//! the source-routed data plane and both vetting protocols.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;

use crate::adversary::{blackhole_on_base_request, blackhole_on_data, blackhole_on_dri_request, blackhole_on_rreq, AdversaryProfile};
use crate::aodv::{rank_candidates, rank_key, Candidate, RreqAction, Rrep, Rreq};
use crate::baseline::{honest_base_reply, BaseQuery, BaseReply, BaseStep, BaselineVetting};
use crate::config::{ScenarioConfig, Scheme};
use crate::error::SimError;
use crate::metrics::{FlowStats, RouteEvent};
use crate::node::Node;
use crate::packet::{DataPayload, DriReply, DriRequest, FlowId, Packet, Payload, ProbeId, SourceRoute};
use crate::rel::{
    reliability_ratio, select_route, HopStep, RelEnvelope, VetId, VettingConfig, VettingResult, VettingState, VettingStatus,
};
use crate::sim::{transmit, warmup_stream, Destination, EventQueue, LinkParams, NodeId, SimTime, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub scheme: Scheme,
    pub link: LinkParams,
    pub vetting: VettingConfig,
    /// How long a discovery ring collects replies.
    pub discovery_window: SimTime,
    pub route_lifetime: SimTime,
    /// Pause after a failed discovery before the next attempt.
    pub holdoff: SimTime,
    pub warmup_packets: u32,
    pub warmup_span: SimTime,
    pub packet_size: u32,
    pub seed: u64,
}

impl NetParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        NetParams {
            scheme: cfg.scheme,
            link: cfg.link_params(),
            vetting: cfg.vetting_config(),
            seed: cfg.seed,
            warmup_packets: cfg.warmup_packets,
            packet_size: cfg.packet_size,
            ..NetParams::default()
        }
    }
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            scheme: Scheme::Proposed,
            link: LinkParams::default(),
            vetting: VettingConfig::default(),
            discovery_window: SimTime::from_millis(200),
            route_lifetime: SimTime::from_millis(3_000),
            holdoff: SimTime::from_millis(1_000),
            warmup_packets: 10,
            warmup_span: SimTime::from_millis(1_000),
            packet_size: 64,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VetKind {
    Rel,
    Base,
}

#[derive(Debug, Clone)]
enum Action {
    Deliver { to: NodeId, packet: Packet },
    AppSend { flow: FlowId },
    WarmupProbe { from: NodeId, to: NodeId },
    RingTimeout { session: usize, request_id: u64 },
    RelTimer { node: NodeId, vet: VetId, token: u64 },
    BaseTimer { vet: VetId, token: u64 },
    VetGuard { vet: VetId },
    PingTimeout { probe: u32 },
    HoldoffEnd { session: usize, token: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DropCause {
    BlackHole,
    Link,
    NoRoute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Discovering,
    Vetting,
    Active { expiry: SimTime },
    Pinging { probe: u32 },
    Revetting,
    Holdoff { token: u64 },
}

/// Route currently used by a session.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedRoute {
    pub path: Vec<NodeId>,
    pub dest_seq_no: u64,
    /// MRR computed by vetting (proposed scheme only).
    pub vetted_mrr: Option<f64>,
    /// MRR recomputed from the truthful DRI tables at selection time.
    pub audit_mrr: f64,
}

/// One route selection, kept for inspection by tests and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub time: SimTime,
    pub flow: Option<FlowId>,
    pub route: SelectedRoute,
}

#[derive(Debug, Clone)]
struct Session {
    source: NodeId,
    destination: NodeId,
    flow: Option<FlowId>,
    phase: Phase,
    buffer: VecDeque<(DataPayload, u64)>,
    last_seq: u64,
    route: Option<SelectedRoute>,
    ring: usize,
    request_id: u64,
    candidates: Vec<Candidate>,
    rejected: BTreeSet<Vec<NodeId>>,
    pending: VecDeque<Candidate>,
    current: Option<Candidate>,
    results: Vec<(Candidate, VettingResult)>,
    discover_only: bool,
    discovered: Option<Vec<Candidate>>,
}

impl Session {
    fn new(source: NodeId, destination: NodeId, flow: Option<FlowId>) -> Self {
        Session {
            source,
            destination,
            flow,
            phase: Phase::Idle,
            buffer: VecDeque::new(),
            last_seq: 0,
            route: None,
            ring: 0,
            request_id: 0,
            candidates: Vec::new(),
            rejected: BTreeSet::new(),
            pending: VecDeque::new(),
            current: None,
            results: Vec::new(),
            discover_only: false,
            discovered: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Session(usize),
    Standalone,
}

#[derive(Debug, Clone)]
struct VetRecord {
    owner: Owner,
    done: Option<VettingResult>,
}

#[derive(Debug, Clone)]
struct FlowState {
    stats: FlowStats,
    session: usize,
    start: SimTime,
    period: SimTime,
    count: u64,
    generated: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetCounters {
    /// Link transmissions of DRI_REQ, DRI_REP, REL, BASE_REQ and BASE_REP.
    pub vet_msgs: u64,
    pub vettings: u64,
    /// Vetted paths that were not accepted.
    pub untrusted_paths: u64,
    pub discoveries: u64,
    pub pings: u64,
    pub link_losses: u64,
    pub undeliverable: u64,
    pub blackhole_drops: u64,
}

/// Per-flow accounting closure at a given instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowLedger {
    pub generated: u64,
    pub delivered: u64,
    pub blackhole: u64,
    pub link: u64,
    pub no_route: u64,
    pub in_flight: u64,
}

impl FlowLedger {
    pub fn balances(&self) -> bool {
        self.generated == self.delivered + self.blackhole + self.link + self.no_route + self.in_flight
    }
}

pub struct Network {
    topology: Topology,
    params: NetParams,
    nodes: Vec<Node>,
    queue: EventQueue<Action>,
    sessions: Vec<Session>,
    session_index: BTreeMap<(NodeId, NodeId), usize>,
    flows: Vec<FlowState>,
    vets: BTreeMap<VetId, VetRecord>,
    baseline: BTreeMap<VetId, (BaselineVetting, u64)>,
    probes: BTreeMap<u32, (Owner, Option<bool>)>,
    rings: Vec<u32>,
    next_packet_id: u64,
    next_token: u64,
    next_vet: u32,
    next_probe: u32,
    pub counters: NetCounters,
    pub selections: Vec<SelectionRecord>,
    pub route_log: Vec<RouteEvent>,
}

impl Network {
    pub fn new(topology: Topology, profiles: Vec<AdversaryProfile>, params: NetParams) -> Result<Self, SimError> {
        if profiles.len() != topology.node_count() {
            return Err(SimError::Precondition(format!(
                "{} adversary profiles for {} nodes",
                profiles.len(),
                topology.node_count()
            )));
        }
        for (i, p) in profiles.iter().enumerate() {
            if p.node.index() != i {
                return Err(SimError::Precondition(format!("profile {i} describes {}", p.node)));
            }
            p.validate().map_err(SimError::InvalidConfig)?;
        }
        params.vetting.validate().map_err(SimError::InvalidConfig)?;
        let n = topology.node_count() as u32;
        let mut rings: Vec<u32> = [1, 3, 5, 7].into_iter().filter(|t| *t < n).collect();
        rings.push(n.max(1));
        let nodes = profiles.into_iter().map(|p| Node::new(p, params.seed)).collect();
        Ok(Network {
            topology,
            params,
            nodes,
            queue: EventQueue::new(),
            sessions: Vec::new(),
            session_index: BTreeMap::new(),
            flows: Vec::new(),
            vets: BTreeMap::new(),
            baseline: BTreeMap::new(),
            probes: BTreeMap::new(),
            rings,
            next_packet_id: 0,
            next_token: 0,
            next_vet: 0,
            next_probe: 0,
            counters: NetCounters::default(),
            selections: Vec::new(),
            route_log: Vec::new(),
        })
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// TTLs tried by the expanding ring search, in order.
    pub fn rings(&self) -> &[u32] {
        &self.rings
    }

    fn token(&mut self) -> u64 {
        self.next_token += 1;
        self.next_token
    }

    fn packet_id(&mut self) -> u64 {
        self.next_packet_id += 1;
        self.next_packet_id
    }

    // ---------------------------------------------------------------------
    // Event loop

    /// Processes every event scheduled at or before `end`.
    pub fn run_until(&mut self, end: SimTime) {
        while let Some(t) = self.queue.peek_time() {
            if t > end {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.dispatch(ev.action);
        }
    }

    /// Runs until `done` holds or the queue passes `deadline`.
    fn run_while<F: Fn(&Network) -> bool>(&mut self, deadline: SimTime, done: F) -> bool {
        while !done(self) {
            match self.queue.peek_time() {
                Some(t) if t <= deadline => {
                    let ev = self.queue.pop().expect("peeked");
                    self.dispatch(ev.action);
                }
                _ => return done(self),
            }
        }
        true
    }

    fn dispatch(&mut self, action: Action) {
        match action {
            Action::Deliver { to, packet } => self.deliver(to, packet),
            Action::AppSend { flow } => self.app_send(flow),
            Action::WarmupProbe { from, to } => self.warmup_probe(from, to),
            Action::RingTimeout { session, request_id } => self.ring_timeout(session, request_id),
            Action::RelTimer { node, vet, token } => self.rel_timer(node, vet, token),
            Action::BaseTimer { vet, token } => self.base_timer(vet, token),
            Action::VetGuard { vet } => self.vet_guard(vet),
            Action::PingTimeout { probe } => self.ping_timeout(probe),
            Action::HoldoffEnd { session, token } => {
                if self.sessions[session].phase == (Phase::Holdoff { token }) {
                    self.sessions[session].phase = Phase::Idle;
                }
            }
        }
    }

    // ---------------------------------------------------------------------
    // Link layer

    fn send(&mut self, from: NodeId, to: NodeId, mut packet: Packet) {
        let kind = packet.kind();
        if kind.is_vetting_control() {
            self.counters.vet_msgs += 1;
        }
        if kind.is_data_plane() {
            self.nodes[from.index()].note_sent(to, packet.seq_no);
        }
        packet.prev_hop = from;
        packet.hop_count += 1;
        if !self.topology.is_adjacent(from, to) {
            self.counters.undeliverable += 1;
            self.drop_packet(&packet, DropCause::Link);
            return;
        }
        let rng = &mut self.nodes[from.index()].rng;
        let out = transmit(&mut self.queue, &self.topology, &self.params.link, rng, from, Destination::Unicast(to), |rx| {
            Action::Deliver { to: rx, packet: packet.clone() }
        })
        .expect("adjacency checked");
        if out.lost > 0 {
            self.counters.link_losses += 1;
            self.drop_packet(&packet, DropCause::Link);
        }
    }

    fn broadcast(&mut self, from: NodeId, packet: Packet) {
        let rng = &mut self.nodes[from.index()].rng;
        let out = transmit(&mut self.queue, &self.topology, &self.params.link, rng, from, Destination::Broadcast, |rx| {
            Action::Deliver { to: rx, packet: Packet { prev_hop: from, hop_count: packet.hop_count + 1, ..packet.clone() } }
        })
        .expect("broadcast never fails");
        self.counters.link_losses += out.lost as u64;
    }

    /// Sends a source-routed packet one hop further from `at`.
    fn forward_routed(&mut self, at: NodeId, mut packet: Packet) {
        let Some(route) = packet.route.as_mut() else { return };
        let Some(next) = route.next() else { return };
        route.advance();
        self.send(at, next, packet);
    }

    fn originate_routed(&mut self, hops: Vec<NodeId>, payload: Payload) {
        let from = hops[0];
        let id = self.packet_id();
        let packet = Packet::routed(SourceRoute::new(hops), id, payload);
        self.forward_routed(from, packet);
    }

    fn drop_packet(&mut self, packet: &Packet, cause: DropCause) {
        if let Some(f) = packet.flow() {
            self.count_drop(f, cause);
        }
    }

    fn count_drop(&mut self, flow: FlowId, cause: DropCause) {
        let s = &mut self.flows[flow.0 as usize].stats;
        match cause {
            DropCause::BlackHole => s.dropped_blackhole += 1,
            DropCause::Link => s.dropped_link += 1,
            DropCause::NoRoute => s.dropped_no_route += 1,
        }
    }

    fn deliver(&mut self, to: NodeId, packet: Packet) {
        let kind = packet.kind();
        if kind.is_data_plane() {
            self.nodes[to.index()].note_received(packet.prev_hop, packet.seq_no);
            if blackhole_on_data(&self.nodes[to.index()].profile, kind) {
                self.counters.blackhole_drops += 1;
                self.drop_packet(&packet, DropCause::BlackHole);
                return;
            }
        }
        match &packet.payload {
            Payload::Rreq(rreq) => {
                let rreq = rreq.clone();
                self.on_rreq(to, packet.prev_hop, rreq);
                return;
            }
            Payload::Rrep(rrep) => {
                let rrep = rrep.clone();
                self.on_rrep(to, rrep);
                return;
            }
            _ => {}
        }
        let Some(route) = packet.route.as_ref() else { return };
        if route.current() != to {
            return;
        }
        if !route.is_final() {
            self.forward_routed(to, packet);
            return;
        }
        let back = route.reversed();
        match packet.payload {
            Payload::Data(d) => {
                if let Some(f) = d.flow {
                    let delay = self.now().saturating_sub(d.created_at).as_secs_f64();
                    self.flows[f.0 as usize].stats.record_delivery(d.bytes, delay);
                    self.originate_routed(back.hops, Payload::Ack(d));
                }
            }
            Payload::Ack(_) => {}
            Payload::Ping(p) => self.originate_routed(back.hops, Payload::Pong(p)),
            Payload::Pong(p) => self.on_pong(p),
            Payload::DriReq(req) => self.on_dri_request(to, req, back),
            Payload::DriRep(rep) => self.on_dri_reply(to, rep),
            Payload::Rel(env) => {
                if env.state.status.is_final() {
                    if to == env.state.source() {
                        self.vet_complete(env.vet, env.state.result());
                    }
                } else {
                    self.rel_arrive(to, *env);
                }
            }
            Payload::BaseReq(q) => self.on_base_request(to, q, back),
            Payload::BaseRep(r) => self.on_base_reply(r),
            Payload::Rreq(_) | Payload::Rrep(_) => unreachable!("handled above"),
        }
    }

    // ---------------------------------------------------------------------
    // Route discovery

    fn on_rreq(&mut self, me: NodeId, from: NodeId, rreq: Rreq) {
        let now = self.now();
        let node = &mut self.nodes[me.index()];
        if node.is_blackhole() {
            if rreq.path.is_empty() || rreq.path.contains(&me) || !node.aodv.mark_seen(rreq.origin(), rreq.request_id) {
                return;
            }
            let rrep = blackhole_on_rreq(&node.profile, &rreq);
            self.send_rrep(me, rrep);
            return;
        }
        match node.aodv.handle_rreq(me, from, &rreq, now) {
            RreqAction::Drop => {}
            RreqAction::Reply(rrep) => self.send_rrep(me, rrep),
            RreqAction::Forward(next) => {
                let packet = Packet {
                    origin: next.origin(),
                    final_dst: next.destination,
                    prev_hop: me,
                    seq_no: next.dest_seq_no,
                    hop_count: 0,
                    route: None,
                    payload: Payload::Rreq(next),
                };
                self.broadcast(me, packet);
            }
        }
    }

    /// Passes an RREP one hop back towards its originator.
    fn send_rrep(&mut self, me: NodeId, rrep: Rrep) {
        let Some(idx) = rrep.path.iter().position(|n| *n == me) else { return };
        if idx == 0 {
            return;
        }
        let prev = rrep.path[idx - 1];
        let packet = Packet {
            origin: me,
            final_dst: rrep.origin(),
            prev_hop: me,
            seq_no: rrep.dest_seq_no,
            hop_count: 0,
            route: None,
            payload: Payload::Rrep(rrep),
        };
        self.send(me, prev, packet);
    }

    fn on_rrep(&mut self, me: NodeId, rrep: Rrep) {
        let now = self.now();
        let lifetime = self.params.route_lifetime;
        let node = &mut self.nodes[me.index()];
        if node.is_blackhole() || !node.aodv.handle_rrep(me, &rrep, now, lifetime) {
            return;
        }
        if me != rrep.origin() {
            self.send_rrep(me, rrep);
            return;
        }
        let Some(&s) = self.session_index.get(&(me, rrep.destination)) else { return };
        let hop_count = rrep.hops_from(me);
        let sess = &mut self.sessions[s];
        if sess.phase != Phase::Discovering || sess.request_id != rrep.request_id {
            return;
        }
        if crate::aodv::has_repeats(&rrep.path)
            || sess.rejected.contains(&rrep.path)
            || sess.candidates.iter().any(|c| c.path == rrep.path)
        {
            return;
        }
        sess.candidates.push(Candidate { path: rrep.path, dest_seq_no: rrep.dest_seq_no, hop_count, replier: rrep.replier });
    }

    fn start_discovery(&mut self, s: usize, already_rejected: Option<Vec<NodeId>>) {
        self.counters.discoveries += 1;
        let sess = &mut self.sessions[s];
        sess.ring = 0;
        sess.rejected.clear();
        sess.rejected.extend(already_rejected);
        self.launch_ring(s);
    }

    fn launch_ring(&mut self, s: usize) {
        let ttl = self.rings[self.sessions[s].ring];
        let (src, dst, seq) = {
            let sess = &self.sessions[s];
            (sess.source, sess.destination, sess.last_seq)
        };
        let mut rreq = self.nodes[src.index()].aodv.originate(src, dst, seq, ttl);
        let sess = &mut self.sessions[s];
        rreq.dest_only = !sess.rejected.is_empty();
        sess.request_id = rreq.request_id;
        sess.candidates.clear();
        sess.phase = Phase::Discovering;
        let request_id = rreq.request_id;
        let packet = Packet {
            origin: src,
            final_dst: dst,
            prev_hop: src,
            seq_no: seq,
            hop_count: 0,
            route: None,
            payload: Payload::Rreq(rreq),
        };
        self.broadcast(src, packet);
        self.queue.schedule_in(self.params.discovery_window, Action::RingTimeout { session: s, request_id });
    }

    fn ring_timeout(&mut self, s: usize, request_id: u64) {
        let sess = &mut self.sessions[s];
        if sess.phase != Phase::Discovering || sess.request_id != request_id {
            return;
        }
        let mut cands = std::mem::take(&mut sess.candidates);
        rank_candidates(&mut cands);
        if sess.discover_only && (!cands.is_empty() || sess.ring + 1 >= self.rings.len()) {
            sess.discovered = Some(cands);
            sess.phase = Phase::Idle;
            return;
        }
        if cands.is_empty() {
            self.next_ring_or_fail(s);
            return;
        }
        match self.params.scheme {
            Scheme::Undefended => {
                let best = cands.swap_remove(0);
                self.activate(s, best.path, best.dest_seq_no, None);
            }
            Scheme::Baseline | Scheme::Proposed => {
                let sess = &mut self.sessions[s];
                sess.pending = cands.into();
                sess.results.clear();
                sess.phase = Phase::Vetting;
                self.vet_next(s);
            }
        }
    }

    fn next_ring_or_fail(&mut self, s: usize) {
        if self.sessions[s].ring + 1 < self.rings.len() {
            self.sessions[s].ring += 1;
            self.launch_ring(s);
            return;
        }
        let buffered: Vec<(DataPayload, u64)> = self.sessions[s].buffer.drain(..).collect();
        for (d, _) in buffered {
            if let Some(f) = d.flow {
                self.count_drop(f, DropCause::NoRoute);
            }
        }
        let token = self.token();
        self.sessions[s].phase = Phase::Holdoff { token };
        self.queue.schedule_in(self.params.holdoff, Action::HoldoffEnd { session: s, token });
    }

    fn vet_kind(&self) -> VetKind {
        match self.params.scheme {
            Scheme::Baseline => VetKind::Base,
            _ => VetKind::Rel,
        }
    }

    fn vet_next(&mut self, s: usize) {
        if let Some(c) = self.sessions[s].pending.pop_front() {
            let path = c.path.clone();
            self.sessions[s].current = Some(c);
            let kind = self.vet_kind();
            self.start_vet(Owner::Session(s), path, kind);
            return;
        }
        let results = std::mem::take(&mut self.sessions[s].results);
        let chosen = match self.params.scheme {
            Scheme::Proposed => {
                let view: Vec<(&[NodeId], VettingResult)> = results.iter().map(|(c, r)| (c.path.as_slice(), *r)).collect();
                select_route(&view).ok()
            }
            _ => results
                .iter()
                .enumerate()
                .filter(|(_, (_, r))| r.status == VettingStatus::Trusted)
                .min_by_key(|(_, (c, _))| (rank_key(c.dest_seq_no, c.hop_count, c.first_hop()), c.path.clone()))
                .map(|(i, _)| i),
        };
        match chosen {
            Some(i) => {
                let (c, r) = results[i].clone();
                let mrr = (self.params.scheme == Scheme::Proposed).then(|| r.mrr());
                self.activate(s, c.path, c.dest_seq_no, mrr);
            }
            None => self.next_ring_or_fail(s),
        }
    }

    fn is_accepted(&self, r: &VettingResult) -> bool {
        r.status == VettingStatus::Trusted && (self.params.scheme != Scheme::Proposed || r.mrr() > 0.0)
    }

    fn on_session_vet_done(&mut self, s: usize, result: VettingResult) {
        let accepted = self.is_accepted(&result);
        let Some(c) = self.sessions[s].current.take() else { return };
        if !accepted {
            self.counters.untrusted_paths += 1;
            self.sessions[s].rejected.insert(c.path.clone());
        }
        match self.sessions[s].phase {
            Phase::Vetting => {
                self.sessions[s].results.push((c, result));
                self.vet_next(s);
            }
            Phase::Revetting => {
                if accepted {
                    let mrr = (self.params.scheme == Scheme::Proposed).then(|| result.mrr());
                    self.activate(s, c.path, c.dest_seq_no, mrr);
                } else {
                    self.clear_route(s);
                    self.start_discovery(s, Some(c.path));
                }
            }
            _ => {}
        }
    }

    /// MRR of `path` computed from what the intermediates actually observed.
    pub fn audit_mrr(&self, path: &[NodeId]) -> f64 {
        if path.len() <= 2 {
            return 1.0;
        }
        let inner = path.len() - 2;
        let rel: f64 = (1..path.len() - 1)
            .map(|i| reliability_ratio(self.nodes[path[i].index()].dri.entry(path[i - 1]), &self.params.vetting))
            .sum();
        rel / inner as f64
    }

    fn activate(&mut self, s: usize, path: Vec<NodeId>, dest_seq_no: u64, vetted_mrr: Option<f64>) {
        let now = self.now();
        let audit_mrr = self.audit_mrr(&path);
        let route = SelectedRoute { path, dest_seq_no, vetted_mrr, audit_mrr };
        let (src, dst, flow) = {
            let sess = &self.sessions[s];
            (sess.source, sess.destination, sess.flow)
        };
        if let Some(m) = vetted_mrr {
            self.nodes[src.index()].aodv.table.set_reliability(dst, route.path[1], m);
        }
        self.selections.push(SelectionRecord { time: now, flow, route: route.clone() });
        if let Some(f) = flow {
            self.route_log.push(RouteEvent { time: now.as_secs_f64(), flow: f, mrr: Some(audit_mrr) });
        }
        let sess = &mut self.sessions[s];
        sess.last_seq = dest_seq_no;
        sess.phase = Phase::Active { expiry: now + self.params.route_lifetime };
        let hops = route.path.clone();
        sess.route = Some(route);
        let buffered: Vec<(DataPayload, u64)> = sess.buffer.drain(..).collect();
        for (d, id) in buffered {
            let packet = Packet::routed(SourceRoute::new(hops.clone()), id, Payload::Data(d));
            self.forward_routed(src, packet);
        }
    }

    fn clear_route(&mut self, s: usize) {
        let now = self.now().as_secs_f64();
        let sess = &mut self.sessions[s];
        if sess.route.take().is_some() {
            if let Some(f) = sess.flow {
                self.route_log.push(RouteEvent { time: now, flow: f, mrr: None });
            }
        }
    }

    // ---------------------------------------------------------------------
    // Liveness probes

    fn send_ping(&mut self, owner: Owner, path: Vec<NodeId>) -> u32 {
        self.counters.pings += 1;
        self.next_probe += 1;
        let probe = self.next_probe;
        let source = path[0];
        let hops = (path.len() - 1) as u64;
        let timeout = self.params.link.max_hop_delay() * (2 * hops) + SimTime::from_millis(10);
        self.probes.insert(probe, (owner, None));
        self.originate_routed(path, Payload::Ping(ProbeId { source, n: probe }));
        self.queue.schedule_in(timeout, Action::PingTimeout { probe });
        probe
    }

    fn on_pong(&mut self, p: ProbeId) {
        let Some((owner, status)) = self.probes.get_mut(&p.n) else { return };
        if status.is_some() {
            return;
        }
        *status = Some(true);
        let Owner::Session(s) = *owner else { return };
        if self.sessions[s].phase != (Phase::Pinging { probe: p.n }) {
            return;
        }
        let route = self.sessions[s].route.clone().expect("pinging sessions hold a route");
        match self.params.scheme {
            Scheme::Undefended => self.activate(s, route.path, route.dest_seq_no, None),
            Scheme::Baseline | Scheme::Proposed => {
                self.sessions[s].phase = Phase::Revetting;
                self.sessions[s].current = Some(Candidate {
                    hop_count: (route.path.len() - 1) as u32,
                    replier: *route.path.last().unwrap(),
                    path: route.path.clone(),
                    dest_seq_no: route.dest_seq_no,
                });
                let kind = self.vet_kind();
                self.start_vet(Owner::Session(s), route.path, kind);
            }
        }
    }

    fn ping_timeout(&mut self, probe: u32) {
        let Some((owner, status)) = self.probes.get_mut(&probe) else { return };
        if status.is_some() {
            return;
        }
        *status = Some(false);
        let Owner::Session(s) = *owner else { return };
        if self.sessions[s].phase == (Phase::Pinging { probe }) {
            self.clear_route(s);
            self.start_discovery(s, None);
        }
    }

    // ---------------------------------------------------------------------
    // Vetting

    fn start_vet(&mut self, owner: Owner, path: Vec<NodeId>, kind: VetKind) -> VetId {
        self.next_vet += 1;
        let vet = VetId { source: path[0], n: self.next_vet };
        self.counters.vettings += 1;
        self.vets.insert(vet, VetRecord { owner, done: None });
        let cfg = self.params.vetting;
        let n = path.len() as u64;
        let attempt = cfg.t1 + self.params.link.max_hop_delay() * (2 * n);
        let guard = attempt * (n * u64::from(cfg.k_r + 1) * u64::from(cfg.k_m + 1)) + SimTime::from_millis(100);
        self.queue.schedule_in(guard, Action::VetGuard { vet });
        match kind {
            VetKind::Rel => {
                let state = VettingState::new(path);
                let env = RelEnvelope { vet, header: state.rel_packet(), state };
                let holder = env.state.holder();
                self.rel_arrive(holder, env);
            }
            VetKind::Base => {
                let mut bv = BaselineVetting::new(vet, path);
                let step = bv.start(self.now(), &cfg);
                self.base_step(bv, step);
            }
        }
        vet
    }

    fn vet_complete(&mut self, vet: VetId, result: VettingResult) {
        let Some(rec) = self.vets.get_mut(&vet) else { return };
        if rec.done.is_some() {
            return;
        }
        rec.done = Some(result);
        self.baseline.remove(&vet);
        if let Owner::Session(s) = rec.owner {
            self.on_session_vet_done(s, result);
        }
    }

    fn vet_guard(&mut self, vet: VetId) {
        for node in &mut self.nodes {
            node.held.remove(&vet);
        }
        let mut r = VettingResult::untrusted();
        if let Some((bv, _)) = self.baseline.get(&vet) {
            r.c_m = bv.c_m;
            r.timeouts = bv.timeouts;
        }
        self.vet_complete(vet, r);
    }

    fn rel_arrive(&mut self, at: NodeId, mut env: RelEnvelope) {
        if self.vets.get(&env.vet).is_none_or(|r| r.done.is_some()) {
            return;
        }
        let step = env.state.begin_hop(self.now(), &self.params.vetting);
        self.rel_step(at, env, step);
    }

    fn rel_step(&mut self, at: NodeId, mut env: RelEnvelope, step: HopStep) {
        match step {
            HopStep::RequestDri { to } => {
                let token = self.token();
                let req = DriRequest { vet: env.vet, subject: at };
                self.originate_routed(vec![at, to], Payload::DriReq(req));
                self.queue.schedule_in(self.params.vetting.t1, Action::RelTimer { node: at, vet: env.vet, token });
                self.nodes[at.index()].held.insert(env.vet, (env, token));
            }
            HopStep::Forward { to } => {
                env.header = env.state.rel_packet();
                self.originate_routed(vec![at, to], Payload::Rel(Box::new(env)));
            }
            HopStep::ReturnToSource => {
                if at == env.state.source() {
                    let r = env.state.result();
                    self.vet_complete(env.vet, r);
                    return;
                }
                let mut back: Vec<NodeId> = env.state.path[..=env.state.hop_index].to_vec();
                back.reverse();
                self.originate_routed(back, Payload::Rel(Box::new(env)));
            }
        }
    }

    fn on_dri_request(&mut self, me: NodeId, req: DriRequest, back: SourceRoute) {
        let subject_group = self.nodes[req.subject.index()].profile.collusion_group;
        let node = &mut self.nodes[me.index()];
        let entry = if node.is_blackhole() {
            blackhole_on_dri_request(&node.profile, subject_group, &mut node.rng)
        } else {
            Some(node.dri.entry(req.subject))
        };
        if let Some(entry) = entry {
            self.originate_routed(back.hops, Payload::DriRep(DriReply { vet: req.vet, reporter: me, entry }));
        }
    }

    fn on_dri_reply(&mut self, me: NodeId, rep: DriReply) {
        let reporter_group = self.nodes[rep.reporter.index()].profile.collusion_group;
        let node = &mut self.nodes[me.index()];
        let Some((mut env, token)) = node.held.remove(&rep.vet) else { return };
        if env.state.next_hop() != rep.reporter {
            node.held.insert(rep.vet, (env, token));
            return;
        }
        let friendly = node.is_blackhole()
            && node.profile.collusion_group.is_some()
            && node.profile.collusion_group == reporter_group;
        let local = if friendly { rep.entry } else { self.nodes[me.index()].dri.entry(rep.reporter) };
        let step = env.state.on_reply(local, rep.entry, &self.params.vetting);
        self.rel_step(me, env, step);
    }

    fn rel_timer(&mut self, at: NodeId, vet: VetId, token: u64) {
        let node = &mut self.nodes[at.index()];
        match node.held.get(&vet) {
            Some((_, t)) if *t == token => {}
            _ => return,
        }
        let (mut env, _) = node.held.remove(&vet).expect("checked");
        let step = env.state.on_timeout(self.now(), &self.params.vetting);
        self.rel_step(at, env, step);
    }

    fn base_step(&mut self, bv: BaselineVetting, step: BaseStep) {
        match step {
            BaseStep::Query { index, .. } => {
                let token = self.token();
                let q = bv.query();
                let rtt = self.params.link.max_hop_delay() * (2 * (index as u64 + 1));
                self.queue.schedule_in(self.params.vetting.t1 + rtt, Action::BaseTimer { vet: bv.vet, token });
                self.originate_routed(q.route(), Payload::BaseReq(q));
                self.baseline.insert(bv.vet, (bv, token));
            }
            BaseStep::Done(status) => {
                let r = VettingResult { status, rel: 0.0, vetted_hops: 0, c_m: bv.c_m, timeouts: bv.timeouts };
                self.vet_complete(bv.vet, r);
            }
        }
    }

    fn on_base_request(&mut self, me: NodeId, q: BaseQuery, back: SourceRoute) {
        if q.index + 1 >= q.path.len() || q.responder() != me {
            return;
        }
        let node = &mut self.nodes[me.index()];
        let reply = if node.is_blackhole() {
            blackhole_on_base_request(&node.profile, &q, &mut node.rng)
        } else {
            Some(honest_base_reply(&node.flags, me, &q))
        };
        if let Some(r) = reply {
            self.originate_routed(back.hops, Payload::BaseRep(r));
        }
    }

    fn on_base_reply(&mut self, r: BaseReply) {
        let Some((mut bv, token)) = self.baseline.remove(&r.vet) else { return };
        match bv.on_reply(r, self.now(), &self.params.vetting) {
            Some(step) => self.base_step(bv, step),
            None => {
                self.baseline.insert(bv.vet, (bv, token));
            }
        }
    }

    fn base_timer(&mut self, vet: VetId, token: u64) {
        match self.baseline.get(&vet) {
            Some((_, t)) if *t == token => {}
            _ => return,
        }
        let (mut bv, _) = self.baseline.remove(&vet).expect("checked");
        let step = bv.on_timeout(self.now(), &self.params.vetting);
        self.base_step(bv, step);
    }

    // ---------------------------------------------------------------------
    // Traffic

    /// Schedules the warm-up exchange: every honest node sends
    /// `warmup_packets` probes to each neighbour, spread over the warm-up span.
    pub fn schedule_warmup(&mut self) {
        let w = u64::from(self.params.warmup_packets);
        if w == 0 {
            return;
        }
        let slot = (self.params.warmup_span.as_micros() / w).max(1);
        let mut rng = warmup_stream(self.params.seed);
        for (u, v) in self.topology.edges() {
            for (from, to) in [(u, v), (v, u)] {
                for k in 0..w {
                    let at = SimTime(self.now().0 + k * slot + rng.gen_range(0..slot));
                    self.queue.schedule(at, Action::WarmupProbe { from, to }).expect("future time");
                }
            }
        }
    }

    /// Runs the warm-up exchange to completion.
    pub fn warmup(&mut self) {
        self.schedule_warmup();
        let end = self.now() + self.params.warmup_span + SimTime::from_millis(50);
        self.run_until(end);
    }

    fn warmup_probe(&mut self, from: NodeId, to: NodeId) {
        if self.nodes[from.index()].is_blackhole() {
            return;
        }
        let d = DataPayload { flow: None, created_at: self.now(), bytes: self.params.packet_size };
        self.originate_routed(vec![from, to], Payload::Data(d));
    }

    fn session_for(&mut self, source: NodeId, destination: NodeId, flow: Option<FlowId>) -> usize {
        if let Some(&s) = self.session_index.get(&(source, destination)) {
            return s;
        }
        self.sessions.push(Session::new(source, destination, flow));
        let s = self.sessions.len() - 1;
        self.session_index.insert((source, destination), s);
        s
    }

    /// Adds a constant-rate flow of `count` packets starting at `start`.
    pub fn add_flow(&mut self, source: NodeId, destination: NodeId, start: SimTime, period: SimTime, count: u64) -> Result<FlowId, SimError> {
        if source == destination {
            return Err(SimError::Precondition("flow source equals destination".into()));
        }
        if self.session_index.contains_key(&(source, destination)) {
            return Err(SimError::Precondition(format!("duplicate flow {source} -> {destination}")));
        }
        let flow = FlowId(self.flows.len() as u32);
        let session = self.session_for(source, destination, Some(flow));
        let active = (period * count).as_secs_f64();
        self.flows.push(FlowState { stats: FlowStats::new(flow.0, active), session, start, period, count, generated: 0 });
        if count > 0 {
            self.queue.schedule(start, Action::AppSend { flow }).map_err(|e| SimError::Precondition(e.to_string()))?;
        }
        Ok(flow)
    }

    fn app_send(&mut self, flow: FlowId) {
        let now = self.now();
        let f = &mut self.flows[flow.0 as usize];
        f.generated += 1;
        if f.generated < f.count {
            let next = f.start + f.period * f.generated;
            self.queue.schedule(next, Action::AppSend { flow }).expect("future send");
        }
        let bytes = self.params.packet_size;
        f.stats.record_sent(bytes);
        let s = f.session;
        let d = DataPayload { flow: Some(flow), created_at: now, bytes };
        let id = self.packet_id();
        match self.sessions[s].phase {
            Phase::Active { expiry } if now < expiry => {
                let path = self.sessions[s].route.as_ref().expect("active sessions hold a route").path.clone();
                let src = path[0];
                self.forward_routed(src, Packet::routed(SourceRoute::new(path), id, Payload::Data(d)));
            }
            Phase::Active { .. } => {
                self.sessions[s].buffer.push_back((d, id));
                let path = self.sessions[s].route.as_ref().expect("active sessions hold a route").path.clone();
                let probe = self.send_ping(Owner::Session(s), path);
                self.sessions[s].phase = Phase::Pinging { probe };
            }
            Phase::Holdoff { .. } => self.count_drop(flow, DropCause::NoRoute),
            Phase::Idle => {
                self.sessions[s].buffer.push_back((d, id));
                self.start_discovery(s, None);
            }
            Phase::Discovering | Phase::Vetting | Phase::Pinging { .. } | Phase::Revetting => {
                self.sessions[s].buffer.push_back((d, id));
            }
        }
    }

    pub fn flow_stats(&self) -> Vec<FlowStats> {
        self.flows.iter().map(|f| f.stats.clone()).collect()
    }

    pub fn flow_endpoints(&self, flow: FlowId) -> (NodeId, NodeId) {
        let s = &self.sessions[self.flows[flow.0 as usize].session];
        (s.source, s.destination)
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    /// Accounting snapshot for one flow; in-flight packets are counted from
    /// the event queue and the source buffer.
    pub fn ledger(&self, flow: FlowId) -> FlowLedger {
        let f = &self.flows[flow.0 as usize];
        let queued = self
            .queue
            .iter()
            .filter(|e| matches!(&e.action, Action::Deliver { packet, .. } if packet.flow() == Some(flow)))
            .count() as u64;
        let buffered = self.sessions[f.session].buffer.len() as u64;
        FlowLedger {
            generated: f.stats.packets_sent,
            delivered: f.stats.packets_received,
            blackhole: f.stats.dropped_blackhole,
            link: f.stats.dropped_link,
            no_route: f.stats.dropped_no_route,
            in_flight: queued + buffered,
        }
    }

    /// Currently selected route of a flow, if any.
    pub fn current_route(&self, flow: FlowId) -> Option<&SelectedRoute> {
        self.sessions[self.flows[flow.0 as usize].session].route.as_ref()
    }

    // ---------------------------------------------------------------------
    // Standalone operations used by fixtures and tests

    fn horizon(&self) -> SimTime {
        self.now() + SimTime::from_millis(60_000)
    }

    /// Runs one expanding-ring discovery and returns the replies of the
    /// first ring that produced any, best-ranked first.
    pub fn discover(&mut self, source: NodeId, destination: NodeId) -> Result<Vec<Candidate>, SimError> {
        if source == destination {
            return Err(SimError::Precondition("discovery towards oneself".into()));
        }
        let s = self.session_for(source, destination, None);
        if self.sessions[s].flow.is_some() {
            return Err(SimError::Precondition("pair already carries a flow".into()));
        }
        self.sessions[s].discover_only = true;
        self.sessions[s].discovered = None;
        self.start_discovery(s, None);
        let deadline = self.horizon();
        self.run_while(deadline, |n| n.sessions[s].discovered.is_some());
        self.sessions[s].discovered.take().ok_or_else(|| SimError::Precondition("discovery did not finish".into()))
    }

    fn run_vet(&mut self, path: &[NodeId], kind: VetKind) -> Result<VettingResult, SimError> {
        if path.len() < 2 || crate::aodv::has_repeats(path) {
            return Err(SimError::Precondition("a vetted path needs two or more distinct nodes".into()));
        }
        if path.iter().any(|n| n.index() >= self.nodes.len()) {
            return Err(SimError::Precondition("path names an unknown node".into()));
        }
        let vet = self.start_vet(Owner::Standalone, path.to_vec(), kind);
        let deadline = self.horizon();
        self.run_while(deadline, |n| n.vets[&vet].done.is_some());
        self.vets[&vet].done.ok_or_else(|| SimError::Precondition("vetting did not finish".into()))
    }

    /// REL vetting of `path` (source first, destination last).
    pub fn vet_path(&mut self, path: &[NodeId]) -> Result<VettingResult, SimError> {
        self.run_vet(path, VetKind::Rel)
    }

    /// Flag-based vetting of `path`.
    pub fn baseline_vet(&mut self, path: &[NodeId]) -> Result<VettingResult, SimError> {
        self.run_vet(path, VetKind::Base)
    }

    /// Pings `destination` along the source's best stored route.
    pub fn ping_destination(&mut self, source: NodeId, destination: NodeId) -> Result<bool, SimError> {
        let now = self.now();
        let path = self.nodes[source.index()]
            .aodv
            .table
            .best(destination, now)
            .map(|e| {
                let mut p = vec![source];
                p.extend_from_slice(&e.path[1..]);
                p
            })
            .ok_or_else(|| SimError::Precondition(format!("{source} has no route to {destination}")))?;
        self.ping_path(&path)
    }

    pub fn ping_path(&mut self, path: &[NodeId]) -> Result<bool, SimError> {
        if path.len() < 2 {
            return Err(SimError::Precondition("ping needs a path".into()));
        }
        let probe = self.send_ping(Owner::Standalone, path.to_vec());
        let deadline = self.horizon();
        self.run_while(deadline, |n| n.probes[&probe].1.is_some());
        Ok(self.probes[&probe].1 == Some(true))
    }
}
