//! Flag-based comparison scheme.
//!
//! Nodes only remember whether they ever exchanged data with a neighbour
//! (`from` / `through` flags). To vet a path the source asks, for every
//! intermediate node X, X's next hop N for three pieces of information:
//! N's flags for X, N's own next hop N', and N's flags for N'. An
//! intermediate is accepted when somebody vouches for it with both flags
//! raised, either its successor (first piece) or the node two hops upstream
//! (third piece). Requests and replies travel through the path itself.

use std::collections::BTreeMap;

use crate::rel::{VetId, VettingConfig, VettingStatus};
use crate::sim::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlagDriEntry {
    /// Data was received from the neighbour.
    pub from_flag: bool,
    /// Data was sent through the neighbour.
    pub through_flag: bool,
}

impl FlagDriEntry {
    pub fn both() -> Self {
        FlagDriEntry { from_flag: true, through_flag: true }
    }

    pub fn vouches(&self) -> bool {
        self.from_flag && self.through_flag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagKind {
    From,
    Through,
}

#[derive(Debug, Clone, Default)]
pub struct FlagDriTable {
    entries: BTreeMap<NodeId, FlagDriEntry>,
}

impl FlagDriTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, neighbour: NodeId) -> FlagDriEntry {
        self.entries.get(&neighbour).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn baseline_update(table: &mut FlagDriTable, neighbour: NodeId, kind: FlagKind) {
    let e = table.entries.entry(neighbour).or_default();
    match kind {
        FlagKind::From => e.from_flag = true,
        FlagKind::Through => e.through_flag = true,
    }
}

/// Interrogation of the next hop of intermediate `path[index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseQuery {
    pub vet: VetId,
    pub index: usize,
    pub path: Vec<NodeId>,
}

impl BaseQuery {
    pub fn subject(&self) -> NodeId {
        self.path[self.index]
    }

    pub fn responder(&self) -> NodeId {
        self.path[self.index + 1]
    }

    pub fn successor_of(&self, node: NodeId) -> Option<NodeId> {
        let i = self.path.iter().position(|n| *n == node)?;
        self.path.get(i + 1).copied()
    }

    /// The request travels from the source through the subject to the responder.
    pub fn route(&self) -> Vec<NodeId> {
        self.path[..=self.index + 1].to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseReply {
    pub vet: VetId,
    pub index: usize,
    pub reporter: NodeId,
    pub subject_flags: FlagDriEntry,
    pub next_hop: Option<NodeId>,
    pub next_flags: Option<FlagDriEntry>,
}

/// Honest responder: reads its own flag table.
pub fn honest_base_reply(table: &FlagDriTable, me: NodeId, query: &BaseQuery) -> BaseReply {
    let next_hop = query.successor_of(me);
    BaseReply {
        vet: query.vet,
        index: query.index,
        reporter: me,
        subject_flags: table.entry(query.subject()),
        next_hop,
        next_flags: next_hop.map(|n| table.entry(n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseStep {
    Query { index: usize, responder: NodeId },
    Done(VettingStatus),
}

/// Source-held baseline vetting. Queries run one at a time, with the same
/// feedback timer and counters as the REL scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineVetting {
    pub vet: VetId,
    pub path: Vec<NodeId>,
    pub index: usize,
    pub replies: Vec<Option<BaseReply>>,
    pub c_r: u32,
    pub c_m: u32,
    pub status: VettingStatus,
    pub timeouts: u32,
    pub t_f_deadline: Option<SimTime>,
}

impl BaselineVetting {
    pub fn new(vet: VetId, path: Vec<NodeId>) -> Self {
        assert!(path.len() >= 2);
        let slots = path.len();
        BaselineVetting {
            vet,
            path,
            index: 0,
            replies: vec![None; slots],
            c_r: 0,
            c_m: 0,
            status: VettingStatus::InProgress,
            timeouts: 0,
            t_f_deadline: None,
        }
    }

    pub fn query(&self) -> BaseQuery {
        BaseQuery { vet: self.vet, index: self.index, path: self.path.clone() }
    }

    fn advance(&mut self, now: SimTime, cfg: &VettingConfig) -> BaseStep {
        self.index += 1;
        self.c_r = 0;
        if self.index + 1 >= self.path.len() {
            self.status = self.verdict();
            self.t_f_deadline = None;
            return BaseStep::Done(self.status);
        }
        self.t_f_deadline = Some(now + cfg.t1);
        BaseStep::Query { index: self.index, responder: self.path[self.index + 1] }
    }

    pub fn start(&mut self, now: SimTime, cfg: &VettingConfig) -> BaseStep {
        self.index = 0;
        self.advance(now, cfg)
    }

    pub fn on_reply(&mut self, reply: BaseReply, now: SimTime, cfg: &VettingConfig) -> Option<BaseStep> {
        if self.status.is_final() || reply.index != self.index || reply.reporter != self.path[self.index + 1] {
            return None;
        }
        self.replies[self.index] = Some(reply);
        Some(self.advance(now, cfg))
    }

    /// Feedback timer expiry. Past `k_r` retries the query counts as failed:
    /// `c_m` grows and the next intermediate is queried, leaving this one
    /// without a voucher from its successor.
    pub fn on_timeout(&mut self, now: SimTime, cfg: &VettingConfig) -> BaseStep {
        self.timeouts += 1;
        self.c_r += 1;
        if self.c_r > cfg.k_r {
            self.c_m += 1;
            if self.c_m > cfg.k_m {
                self.status = VettingStatus::Untrusted;
                self.t_f_deadline = None;
                return BaseStep::Done(self.status);
            }
            return self.advance(now, cfg);
        }
        self.t_f_deadline = Some(now + cfg.t1);
        BaseStep::Query { index: self.index, responder: self.path[self.index + 1] }
    }

    /// Every intermediate needs at least one positive voucher.
    pub fn verdict(&self) -> VettingStatus {
        let last = self.path.len() - 1;
        let all_vouched = (1..last).all(|i| {
            let by_successor = self.replies[i].as_ref().is_some_and(|r| r.subject_flags.vouches());
            let by_upstream = i >= 3
                && self.replies[i - 2].as_ref().is_some_and(|r| {
                    r.next_hop == Some(self.path[i]) && r.next_flags.is_some_and(|f| f.vouches())
                });
            by_successor || by_upstream
        });
        if all_vouched {
            VettingStatus::Trusted
        } else {
            VettingStatus::Untrusted
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    const VET: VetId = VetId { source: NodeId(0), n: 1 };

    #[test]
    fn flags_are_monotone_and_idempotent() {
        let mut t = FlagDriTable::new();
        baseline_update(&mut t, n(1), FlagKind::From);
        assert_eq!(t.entry(n(1)), FlagDriEntry { from_flag: true, through_flag: false });
        baseline_update(&mut t, n(1), FlagKind::Through);
        assert_eq!(t.entry(n(1)), FlagDriEntry::both());
        baseline_update(&mut t, n(1), FlagKind::From);
        baseline_update(&mut t, n(1), FlagKind::Through);
        assert_eq!(t.entry(n(1)), FlagDriEntry::both());
        assert_eq!(t.len(), 1);
    }

    fn reply(index: usize, reporter: u32, subject: FlagDriEntry, next: Option<(u32, FlagDriEntry)>) -> BaseReply {
        BaseReply {
            vet: VET,
            index,
            reporter: n(reporter),
            subject_flags: subject,
            next_hop: next.map(|(x, _)| n(x)),
            next_flags: next.map(|(_, f)| f),
        }
    }

    fn run(path: &[u32], replies: Vec<BaseReply>) -> (VettingStatus, usize) {
        let cfg = VettingConfig::default();
        let mut v = BaselineVetting::new(VET, path.iter().map(|i| n(*i)).collect());
        let mut queries = 0;
        let mut step = v.start(SimTime::ZERO, &cfg);
        let mut it = replies.into_iter();
        loop {
            match step {
                BaseStep::Query { .. } => {
                    queries += 1;
                    step = v.on_reply(it.next().unwrap(), SimTime::ZERO, &cfg).unwrap();
                }
                BaseStep::Done(s) => return (s, queries),
            }
        }
    }

    #[test]
    fn honest_line_is_trusted() {
        // S=0 A=1 B=2 D=3
        let (s, q) = run(
            &[0, 1, 2, 3],
            vec![reply(1, 2, FlagDriEntry::both(), Some((3, FlagDriEntry::both()))), reply(2, 3, FlagDriEntry::both(), None)],
        );
        assert_eq!(s, VettingStatus::Trusted);
        assert_eq!(q, 2);
    }

    #[test]
    fn solo_blackhole_is_caught_by_honest_successor() {
        // S=0 A=1 M=2 D=3; D never received anything from M.
        let d_view = FlagDriEntry { from_flag: false, through_flag: true };
        let (s, _) = run(
            &[0, 1, 2, 3],
            vec![reply(1, 2, FlagDriEntry::both(), Some((3, FlagDriEntry::both()))), reply(2, 3, d_view, None)],
        );
        assert_eq!(s, VettingStatus::Untrusted);
    }

    #[test]
    fn colluding_pair_vouches_its_way_through() {
        // S=0 A=1 M1=2 M2=3 D=4
        let d_view = FlagDriEntry { from_flag: false, through_flag: true };
        let (s, q) = run(
            &[0, 1, 2, 3, 4],
            vec![
                reply(1, 2, FlagDriEntry::both(), Some((3, FlagDriEntry::both()))),
                reply(2, 3, FlagDriEntry::both(), Some((4, FlagDriEntry::both()))),
                reply(3, 4, d_view, None),
            ],
        );
        assert_eq!(s, VettingStatus::Trusted);
        assert_eq!(q, 3);
    }

    #[test]
    fn direct_neighbour_needs_no_queries() {
        let (s, q) = run(&[0, 3], vec![]);
        assert_eq!((s, q), (VettingStatus::Trusted, 0));
    }

    #[test]
    fn wrong_reporter_is_ignored() {
        let cfg = VettingConfig::default();
        let mut v = BaselineVetting::new(VET, vec![n(0), n(1), n(2), n(3)]);
        v.start(SimTime::ZERO, &cfg);
        assert!(v.on_reply(reply(1, 3, FlagDriEntry::both(), None), SimTime::ZERO, &cfg).is_none());
    }

    #[test]
    fn silent_responder_exhausts_counters() {
        let cfg = VettingConfig { k_r: 3, k_m: 1, ..VettingConfig::default() };
        let mut v = BaselineVetting::new(VET, vec![n(0), n(1), n(2), n(3)]);
        v.start(SimTime::ZERO, &cfg);
        let mut expiries = 0;
        while let BaseStep::Query { .. } = v.on_timeout(SimTime::ZERO, &cfg) {
            expiries += 1;
        }
        assert_eq!(expiries + 1, 8);
        assert_eq!(v.status, VettingStatus::Untrusted);
    }

    #[test]
    fn failed_query_moves_on_and_loses_the_voucher() {
        let cfg = VettingConfig { k_r: 1, k_m: 3, ..VettingConfig::default() };
        let mut v = BaselineVetting::new(VET, vec![n(0), n(1), n(2)]);
        assert_eq!(v.start(SimTime::ZERO, &cfg), BaseStep::Query { index: 1, responder: n(2) });
        assert!(matches!(v.on_timeout(SimTime::ZERO, &cfg), BaseStep::Query { index: 1, .. }));
        assert_eq!(v.on_timeout(SimTime::ZERO, &cfg), BaseStep::Done(VettingStatus::Untrusted));
        assert_eq!(v.c_m, 1);
    }

    #[test]
    fn honest_reply_reads_table() {
        let mut t = FlagDriTable::new();
        baseline_update(&mut t, n(1), FlagKind::From);
        baseline_update(&mut t, n(1), FlagKind::Through);
        baseline_update(&mut t, n(3), FlagKind::Through);
        let q = BaseQuery { vet: VET, index: 1, path: vec![n(0), n(1), n(2), n(3)] };
        assert_eq!(q.route(), vec![n(0), n(1), n(2)]);
        let r = honest_base_reply(&t, n(2), &q);
        assert!(r.subject_flags.vouches());
        assert_eq!(r.next_hop, Some(n(3)));
        assert_eq!(r.next_flags, Some(FlagDriEntry { from_flag: false, through_flag: true }));
    }
}
