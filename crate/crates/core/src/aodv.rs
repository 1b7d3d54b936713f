//! AODV per-node state: RREQ flooding with duplicate suppression, RREP
//! path recording, and a routing table that keeps several candidates per
//! destination until they are vetted.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap, HashSet};

use crate::sim::{NodeId, SimTime};

/// One stored route. `path` is the recorded node sequence from the owning
/// node to `destination`.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    /// Accumulated REL of the last vetting; `None` until vetted.
    pub reliability_count: Option<f64>,
    pub dest_seq_no: u64,
    pub expiry: SimTime,
    pub path: Vec<NodeId>,
}

impl RouteEntry {
    /// Pre-vetting preference: higher sequence number, then fewer hops,
    /// then lower next-hop id.
    pub fn rank_key(&self) -> (Reverse<u64>, u32, NodeId) {
        rank_key(self.dest_seq_no, self.hop_count, self.next_hop)
    }

    pub fn is_live(&self, now: SimTime) -> bool {
        now < self.expiry
    }
}

pub fn rank_key(dest_seq_no: u64, hop_count: u32, next_hop: NodeId) -> (Reverse<u64>, u32, NodeId) {
    (Reverse(dest_seq_no), hop_count, next_hop)
}

#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    routes: BTreeMap<NodeId, Vec<RouteEntry>>,
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or updates the entry for `(destination, next_hop)`. An existing
    /// entry is replaced only by a newer sequence number, or an equal one with
    /// no more hops. Returns whether the table changed.
    pub fn upsert(&mut self, entry: RouteEntry) -> bool {
        let list = self.routes.entry(entry.destination).or_default();
        match list.iter_mut().find(|e| e.next_hop == entry.next_hop) {
            Some(existing) => {
                let newer = entry.dest_seq_no > existing.dest_seq_no
                    || (entry.dest_seq_no == existing.dest_seq_no && entry.hop_count <= existing.hop_count);
                if newer {
                    *existing = entry;
                }
                newer
            }
            None => {
                list.push(entry);
                true
            }
        }
    }

    pub fn candidates(&self, destination: NodeId) -> &[RouteEntry] {
        self.routes.get(&destination).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Best live entry under the pre-vetting ranking.
    pub fn best(&self, destination: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.candidates(destination)
            .iter()
            .filter(|e| e.is_live(now))
            .min_by_key(|e| e.rank_key())
    }

    pub fn contains(&self, destination: NodeId) -> bool {
        !self.candidates(destination).is_empty()
    }

    pub fn set_reliability(&mut self, destination: NodeId, next_hop: NodeId, rel: f64) {
        if let Some(e) = self
            .routes
            .get_mut(&destination)
            .and_then(|l| l.iter_mut().find(|e| e.next_hop == next_hop))
        {
            e.reliability_count = Some(rel);
        }
    }

    pub fn remove_expired(&mut self, now: SimTime) {
        for list in self.routes.values_mut() {
            list.retain(|e| e.is_live(now));
        }
        self.routes.retain(|_, l| !l.is_empty());
    }
}

/// Intermediate nodes of a path, source and destination excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InList(pub Vec<NodeId>);

impl InList {
    pub fn from_path(path: &[NodeId]) -> InList {
        if path.len() <= 2 {
            return InList(Vec::new());
        }
        InList(path[1..path.len() - 1].to_vec())
    }
}

/// A path offered by an RREP and held at the source until vetting.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub path: Vec<NodeId>,
    pub dest_seq_no: u64,
    /// Advertised hop count (what an RREP claims, not necessarily `path.len() - 1`).
    pub hop_count: u32,
    pub replier: NodeId,
}

impl Candidate {
    pub fn first_hop(&self) -> NodeId {
        self.path[1]
    }

    pub fn rank_key(&self) -> (Reverse<u64>, u32, NodeId) {
        rank_key(self.dest_seq_no, self.hop_count, self.first_hop())
    }

    pub fn in_list(&self) -> InList {
        InList::from_path(&self.path)
    }
}

/// Sorts candidates best-first under the pre-vetting ranking.
pub fn rank_candidates(cands: &mut [Candidate]) {
    cands.sort_by(|a, b| a.rank_key().cmp(&b.rank_key()).then_with(|| a.path.cmp(&b.path)));
}

pub fn has_repeats(path: &[NodeId]) -> bool {
    let mut seen = HashSet::with_capacity(path.len());
    !path.iter().all(|n| seen.insert(*n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub request_id: u64,
    pub destination: NodeId,
    /// Last destination sequence number known to the originator.
    pub dest_seq_no: u64,
    pub ttl: u32,
    /// Only the destination itself may answer; intermediates must not reply
    /// from their caches.
    pub dest_only: bool,
    /// Nodes traversed so far, originator first.
    pub path: Vec<NodeId>,
}

impl Rreq {
    pub fn origin(&self) -> NodeId {
        self.path[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    pub request_id: u64,
    pub destination: NodeId,
    pub dest_seq_no: u64,
    /// Full recorded path, RREQ originator first, destination last.
    pub path: Vec<NodeId>,
    pub replier: NodeId,
    /// Hops from the replier to the destination as the replier claims.
    pub replier_hops: u32,
}

impl Rrep {
    pub fn origin(&self) -> NodeId {
        self.path[0]
    }

    /// Position of the replier in `path`; the RREP travels back from here.
    pub fn replier_index(&self) -> usize {
        self.path.iter().position(|n| *n == self.replier).expect("replier is on the recorded path")
    }

    /// Hop count as seen by `node` on the way back.
    pub fn hops_from(&self, node: NodeId) -> u32 {
        let idx = self.path.iter().position(|n| *n == node).unwrap_or(0);
        (self.replier_index() - idx) as u32 + self.replier_hops
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RreqAction {
    Drop,
    Reply(Rrep),
    Forward(Rreq),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AodvCounters {
    pub duplicates_dropped: u64,
    pub rrep_dropped: u64,
    pub malformed_dropped: u64,
    pub rreq_forwarded: u64,
}

/// Honest AODV behaviour of one node.
#[derive(Debug, Clone, Default)]
pub struct AodvState {
    pub own_seq: u64,
    next_request_id: u64,
    seen: HashSet<(NodeId, u64)>,
    reverse: HashMap<(NodeId, u64), NodeId>,
    pub table: RoutingTable,
    pub counters: AodvCounters,
}

impl AodvState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fresh request originated by `me`; its own copies are suppressed.
    pub fn originate(&mut self, me: NodeId, destination: NodeId, dest_seq_no: u64, ttl: u32) -> Rreq {
        self.next_request_id += 1;
        let request_id = self.next_request_id;
        self.seen.insert((me, request_id));
        Rreq { request_id, destination, dest_seq_no, ttl, dest_only: false, path: vec![me] }
    }

    /// Marks a request as seen; `false` means it was a duplicate.
    pub fn mark_seen(&mut self, origin: NodeId, request_id: u64) -> bool {
        self.seen.insert((origin, request_id))
    }

    pub fn handle_rreq(&mut self, me: NodeId, from: NodeId, rreq: &Rreq, now: SimTime) -> RreqAction {
        if rreq.path.is_empty() || rreq.path.contains(&me) && rreq.origin() != me {
            self.counters.malformed_dropped += 1;
            return RreqAction::Drop;
        }
        if !self.mark_seen(rreq.origin(), rreq.request_id) {
            self.counters.duplicates_dropped += 1;
            return RreqAction::Drop;
        }
        self.reverse.insert((rreq.origin(), rreq.request_id), from);
        let mut recorded = rreq.path.clone();
        recorded.push(me);

        if me == rreq.destination {
            self.own_seq = self.own_seq.max(rreq.dest_seq_no);
            return RreqAction::Reply(Rrep {
                request_id: rreq.request_id,
                destination: me,
                dest_seq_no: self.own_seq,
                path: recorded,
                replier: me,
                replier_hops: 0,
            });
        }

        if let Some(cached) = self.table.best(rreq.destination, now).filter(|_| !rreq.dest_only) {
            if cached.dest_seq_no >= rreq.dest_seq_no {
                let mut path = recorded.clone();
                path.extend_from_slice(&cached.path[1..]);
                if !has_repeats(&path) {
                    return RreqAction::Reply(Rrep {
                        request_id: rreq.request_id,
                        destination: rreq.destination,
                        dest_seq_no: cached.dest_seq_no,
                        path,
                        replier: me,
                        replier_hops: cached.hop_count,
                    });
                }
            }
        }

        if rreq.ttl <= 1 {
            return RreqAction::Drop;
        }
        self.counters.rreq_forwarded += 1;
        RreqAction::Forward(Rreq { ttl: rreq.ttl - 1, path: recorded, ..rreq.clone() })
    }

    /// Processes an RREP passing through (or arriving at) `me`. Installs the
    /// forward route and returns `false` when the reply has no matching
    /// reverse-path state and must be dropped.
    pub fn handle_rrep(&mut self, me: NodeId, rrep: &Rrep, now: SimTime, lifetime: SimTime) -> bool {
        let Some(idx) = rrep.path.iter().position(|n| *n == me) else {
            self.counters.malformed_dropped += 1;
            return false;
        };
        let known = if me == rrep.origin() {
            self.seen.contains(&(me, rrep.request_id))
        } else {
            self.reverse.contains_key(&(rrep.origin(), rrep.request_id))
        };
        if !known || idx + 1 >= rrep.path.len() {
            self.counters.rrep_dropped += 1;
            return false;
        }
        self.table.upsert(RouteEntry {
            destination: rrep.destination,
            next_hop: rrep.path[idx + 1],
            hop_count: rrep.hops_from(me),
            reliability_count: None,
            dest_seq_no: rrep.dest_seq_no,
            expiry: now + lifetime,
            path: rrep.path[idx..].to_vec(),
        });
        true
    }
}
