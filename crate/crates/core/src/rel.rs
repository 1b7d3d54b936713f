//! Reliability-based path vetting.
//!
//! Each node keeps per-neighbour counts of data packets sent and received
//! (the DRI table). A REL packet walks a candidate path; at every hop the
//! holder asks its next-hop neighbour for the neighbour's entry about the
//! holder, cross-checks it against its own mirror entry and, on a match, adds
//! the neighbour's reliability ratio to the running REL. A mismatch zeroes
//! REL and bumps the malicious counter; silent neighbours exhaust the reply
//! counter first. The source finally scores every path by its mean route
//! reliability and keeps the best one.

use std::collections::{BTreeMap, VecDeque};

use crate::sim::{NodeId, SimTime};

/// Identifies one vetting run; allocated by the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VetId {
    pub source: NodeId,
    pub n: u32,
}

/// Data-packet counts a node keeps about one neighbour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DriEntry {
    /// Data packets this node transmitted to the neighbour.
    pub sent: u64,
    /// Data packets this node received from the neighbour.
    pub received: u64,
}

impl DriEntry {
    pub fn new(sent: u64, received: u64) -> Self {
        DriEntry { sent, received }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

const RECENT_IDS: usize = 16;

#[derive(Debug, Clone, Default)]
pub struct DriTable {
    entries: BTreeMap<NodeId, DriEntry>,
    recent: BTreeMap<NodeId, VecDeque<u64>>,
}

impl DriTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_data_packet(&mut self, neighbour: NodeId, direction: Direction, packet_id: u64) {
        let e = self.entries.entry(neighbour).or_default();
        match direction {
            Direction::Sent => e.sent += 1,
            Direction::Received => e.received += 1,
        }
        let log = self.recent.entry(neighbour).or_default();
        if log.len() == RECENT_IDS {
            log.pop_front();
        }
        log.push_back(packet_id);
    }

    /// Entry for a neighbour; all-zero when nothing was exchanged yet.
    pub fn entry(&self, neighbour: NodeId) -> DriEntry {
        self.entries.get(&neighbour).copied().unwrap_or_default()
    }

    pub fn recent_packet_ids(&self, neighbour: NodeId) -> impl Iterator<Item = u64> + '_ {
        self.recent.get(&neighbour).into_iter().flat_map(|l| l.iter().copied())
    }

    pub fn neighbours(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VettingConfig {
    /// Feedback timer per DRI request.
    pub t1: SimTime,
    /// Retries before a silent hop counts against the path.
    pub k_r: u32,
    /// Tolerated malicious-counter value; exceeding it marks the path untrusted.
    pub k_m: u32,
    pub delta_match: u64,
    pub ratio_cap: f64,
}

impl Default for VettingConfig {
    fn default() -> Self {
        VettingConfig { t1: SimTime::from_millis(50), k_r: 3, k_m: 3, delta_match: 2, ratio_cap: 1.0 }
    }
}

impl VettingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.t1 == SimTime::ZERO {
            return Err("t1 must be positive".into());
        }
        if self.k_r < 1 {
            return Err("k_r must be at least 1".into());
        }
        if self.k_m < 1 {
            return Err("k_m must be at least 1".into());
        }
        if !(self.ratio_cap >= 1.0) || !self.ratio_cap.is_finite() {
            return Err("ratio_cap must be a finite value >= 1".into());
        }
        Ok(())
    }
}

/// Packets sent over packets received. No traffic at all scores 1.0 and a
/// zero denominator with traffic saturates at `ratio_cap`.
pub fn reliability_ratio(entry: DriEntry, cfg: &VettingConfig) -> f64 {
    match (entry.sent, entry.received) {
        (0, 0) => 1.0,
        (_, 0) => cfg.ratio_cap,
        (s, r) => (s as f64 / r as f64).min(cfg.ratio_cap),
    }
}

pub fn accumulate_rel(rel: f64, ratio: f64) -> f64 {
    rel + ratio
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossCheck {
    Matched,
    Mismatched,
}

/// Mirror comparison: what I sent you must be what you received from me,
/// and vice versa, within `delta`.
pub fn cross_check(local: DriEntry, reported: DriEntry, delta: u64) -> CrossCheck {
    if local.sent.abs_diff(reported.received) <= delta && local.received.abs_diff(reported.sent) <= delta {
        CrossCheck::Matched
    } else {
        CrossCheck::Mismatched
    }
}

/// Mean route reliability: accumulated REL over the number of contributions.
/// `None` when nothing was vetted.
pub fn mean_route_reliability(rel: f64, vetted_hops: u32) -> Option<f64> {
    (vetted_hops > 0).then(|| rel / f64::from(vetted_hops))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VettingStatus {
    InProgress,
    Trusted,
    Untrusted,
    RelZeroed,
}

impl VettingStatus {
    pub fn is_final(self) -> bool {
        self != VettingStatus::InProgress
    }
}

/// The REL header as it travels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelPacket {
    pub source: NodeId,
    pub destination: NodeId,
    pub next_hop_neighbour: NodeId,
    pub rel: f64,
}

/// What the holder of the REL packet must do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopStep {
    /// Send (or resend) a DRI request to this neighbour and arm the timer.
    RequestDri { to: NodeId },
    /// Hop matched: hand the REL packet to this neighbour.
    Forward { to: NodeId },
    /// Vetting finished; carry the outcome back to the source.
    ReturnToSource,
}

/// Vetting progress for one path. The state travels inside the REL packet;
/// timer fields only matter at the node currently holding it.
#[derive(Debug, Clone, PartialEq)]
pub struct VettingState {
    pub path: Vec<NodeId>,
    pub hop_index: usize,
    pub rel: f64,
    pub vetted_hops: u32,
    pub t_f_deadline: Option<SimTime>,
    pub c_r: u32,
    pub c_m: u32,
    pub status: VettingStatus,
    /// Total feedback-timer expiries, kept for diagnostics.
    pub timeouts: u32,
}

impl VettingState {
    pub fn new(path: Vec<NodeId>) -> Self {
        assert!(path.len() >= 2, "a path needs a source and a destination");
        VettingState {
            path,
            hop_index: 0,
            rel: 0.0,
            vetted_hops: 0,
            t_f_deadline: None,
            c_r: 0,
            c_m: 0,
            status: VettingStatus::InProgress,
            timeouts: 0,
        }
    }

    pub fn source(&self) -> NodeId {
        self.path[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.path.last().unwrap()
    }

    /// Node holding the REL packet.
    pub fn holder(&self) -> NodeId {
        self.path[self.hop_index]
    }

    pub fn next_hop(&self) -> NodeId {
        self.path[self.hop_index + 1]
    }

    pub fn rel_packet(&self) -> RelPacket {
        RelPacket {
            source: self.source(),
            destination: self.destination(),
            next_hop_neighbour: self.next_hop(),
            rel: self.rel,
        }
    }

    /// Called when the REL packet arrives at a new holder.
    pub fn begin_hop(&mut self, now: SimTime, cfg: &VettingConfig) -> HopStep {
        debug_assert_eq!(self.status, VettingStatus::InProgress);
        if self.next_hop() == self.destination() {
            self.status = VettingStatus::Trusted;
            self.t_f_deadline = None;
            return HopStep::ReturnToSource;
        }
        self.c_r = 0;
        self.t_f_deadline = Some(now + cfg.t1);
        HopStep::RequestDri { to: self.next_hop() }
    }

    /// Handles a timely DRI reply from the next-hop neighbour. `local` is the
    /// holder's own entry for that neighbour, `reported` the neighbour's
    /// claimed entry for the holder.
    pub fn on_reply(&mut self, local: DriEntry, reported: DriEntry, cfg: &VettingConfig) -> HopStep {
        debug_assert_eq!(self.status, VettingStatus::InProgress);
        self.t_f_deadline = None;
        match cross_check(local, reported, cfg.delta_match) {
            CrossCheck::Matched => {
                self.rel = accumulate_rel(self.rel, reliability_ratio(reported, cfg));
                self.vetted_hops += 1;
                let to = self.next_hop();
                self.hop_index += 1;
                HopStep::Forward { to }
            }
            CrossCheck::Mismatched => {
                self.rel = 0.0;
                self.c_m += 1;
                self.status =
                    if self.c_m > cfg.k_m { VettingStatus::Untrusted } else { VettingStatus::RelZeroed };
                HopStep::ReturnToSource
            }
        }
    }

    /// Handles expiry of the feedback timer. Retries until `c_r` passes
    /// `k_r`; then `c_m` grows, and the hop is retried afresh unless `c_m`
    /// has passed `k_m`.
    pub fn on_timeout(&mut self, now: SimTime, cfg: &VettingConfig) -> HopStep {
        debug_assert_eq!(self.status, VettingStatus::InProgress);
        self.timeouts += 1;
        self.c_r += 1;
        if self.c_r > cfg.k_r {
            self.c_r = 0;
            self.c_m += 1;
            if self.c_m > cfg.k_m {
                self.rel = 0.0;
                self.status = VettingStatus::Untrusted;
                self.t_f_deadline = None;
                return HopStep::ReturnToSource;
            }
        }
        self.t_f_deadline = Some(now + cfg.t1);
        HopStep::RequestDri { to: self.next_hop() }
    }

    pub fn result(&self) -> VettingResult {
        VettingResult { status: self.status, rel: self.rel, vetted_hops: self.vetted_hops, c_m: self.c_m, timeouts: self.timeouts }
    }
}

/// REL packet plus the travelling vetting context.
#[derive(Debug, Clone, PartialEq)]
pub struct RelEnvelope {
    pub vet: VetId,
    pub header: RelPacket,
    pub state: VettingState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VettingResult {
    pub status: VettingStatus,
    pub rel: f64,
    pub vetted_hops: u32,
    pub c_m: u32,
    pub timeouts: u32,
}

impl VettingResult {
    pub fn untrusted() -> Self {
        VettingResult { status: VettingStatus::Untrusted, rel: 0.0, vetted_hops: 0, c_m: 0, timeouts: 0 }
    }

    /// Selection score. A trusted path with nothing to vet (destination is a
    /// direct neighbour) scores 1.0; rejected paths score 0.
    pub fn mrr(&self) -> f64 {
        match self.status {
            VettingStatus::Trusted => mean_route_reliability(self.rel, self.vetted_hops).unwrap_or(1.0),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SelectError {
    #[error("no candidate paths")]
    NoRoute,
    #[error("no candidate path passed vetting")]
    NoTrustedRoute,
}

/// Picks the index of the maximum-MRR candidate. Untrusted paths and paths
/// scoring zero are never chosen; ties go to fewer hops, then the lower
/// first-hop id.
pub fn select_route(candidates: &[(&[NodeId], VettingResult)]) -> Result<usize, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::NoRoute);
    }
    candidates
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| r.status != VettingStatus::Untrusted && r.mrr() > 0.0)
        .max_by(|(_, (pa, ra)), (_, (pb, rb))| {
            ra.mrr()
                .total_cmp(&rb.mrr())
                .then_with(|| pb.len().cmp(&pa.len()))
                .then_with(|| pb[1].cmp(&pa[1]))
        })
        .map(|(i, _)| i)
        .ok_or(SelectError::NoTrustedRoute)
}
