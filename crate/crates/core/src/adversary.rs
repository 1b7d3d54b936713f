//! Black-hole behaviour: forged route replies, silent data drop, and lying
//! answers to DRI interrogation, optionally coordinated inside a collusion
//! group.

use rand::Rng;

use crate::aodv::{Rrep, Rreq};
use crate::baseline::{BaseQuery, BaseReply, FlagDriEntry};
use crate::packet::PacketKind;
use crate::rel::DriEntry;
use crate::sim::NodeId;

/// Range of the counts a black hole invents when asked for a DRI entry.
pub const FABRICATED_RANGE: std::ops::RangeInclusive<u64> = 20..=60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Honest,
    BlackHole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryProfile {
    pub node: NodeId,
    pub role: Role,
    pub collusion_group: Option<u32>,
    /// Colluding partner the forged route claims to pass through.
    pub partner: Option<NodeId>,
    /// Counts shared by every member of the collusion group.
    pub group_story: u64,
    pub seq_inflation: u64,
    pub claimed_hop_count: u32,
    /// Probability of answering a DRI / baseline query at all.
    pub reply_prob: f64,
}

impl AdversaryProfile {
    pub fn honest(node: NodeId) -> Self {
        AdversaryProfile {
            node,
            role: Role::Honest,
            collusion_group: None,
            partner: None,
            group_story: 0,
            seq_inflation: 100,
            claimed_hop_count: 1,
            reply_prob: 1.0,
        }
    }

    pub fn blackhole(node: NodeId) -> Self {
        AdversaryProfile { role: Role::BlackHole, ..Self::honest(node) }
    }

    pub fn colluding(node: NodeId, group: u32, partner: NodeId, group_story: u64) -> Self {
        AdversaryProfile {
            collusion_group: Some(group),
            partner: Some(partner),
            group_story,
            ..Self::blackhole(node)
        }
    }

    pub fn silent(mut self) -> Self {
        self.reply_prob = 0.0;
        self
    }

    pub fn is_blackhole(&self) -> bool {
        self.role == Role::BlackHole
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.collusion_group.is_some() && self.role != Role::BlackHole {
            return Err(format!("{}: only black holes may collude", self.node));
        }
        if self.seq_inflation < 1 {
            return Err(format!("{}: seq_inflation must be at least 1", self.node));
        }
        if !(0.0..=1.0).contains(&self.reply_prob) {
            return Err(format!("{}: reply_prob must lie in [0, 1]", self.node));
        }
        Ok(())
    }
}

/// Immediate forged reply: the black hole claims to sit next to the
/// destination (or next to its partner, who is next to the destination)
/// with an inflated sequence number. The request is never rebroadcast.
pub fn blackhole_on_rreq(profile: &AdversaryProfile, rreq: &Rreq) -> Rrep {
    debug_assert!(profile.is_blackhole());
    let mut path = rreq.path.clone();
    path.push(profile.node);
    if let Some(p) = profile.partner {
        if p != rreq.destination && !path.contains(&p) {
            path.push(p);
        }
    }
    path.push(rreq.destination);
    Rrep {
        request_id: rreq.request_id,
        destination: rreq.destination,
        dest_seq_no: rreq.dest_seq_no + profile.seq_inflation,
        path,
        replier: profile.node,
        replier_hops: profile.claimed_hop_count,
    }
}

/// Whether a black hole swallows a packet of this kind. Control traffic is
/// exempt so interrogation still reaches (and is answered by) the attacker.
pub fn blackhole_on_data(profile: &AdversaryProfile, kind: PacketKind) -> bool {
    profile.is_blackhole() && kind.is_data_plane()
}

fn answers<R: Rng + ?Sized>(profile: &AdversaryProfile, rng: &mut R) -> bool {
    profile.reply_prob >= 1.0 || (profile.reply_prob > 0.0 && rng.gen::<f64>() < profile.reply_prob)
}

/// Fabricated DRI entry about `subject`. A colluder vouching for a group
/// member reports the group's shared story; otherwise the counts are fresh
/// inventions. `None` means the black hole stays silent.
pub fn blackhole_on_dri_request<R: Rng + ?Sized>(
    profile: &AdversaryProfile,
    subject_group: Option<u32>,
    rng: &mut R,
) -> Option<DriEntry> {
    debug_assert!(profile.is_blackhole());
    if !answers(profile, rng) {
        return None;
    }
    if profile.collusion_group.is_some() && profile.collusion_group == subject_group {
        return Some(DriEntry::new(profile.group_story, profile.group_story));
    }
    let v = rng.gen_range(FABRICATED_RANGE);
    Some(DriEntry::new(v, v))
}

/// Baseline interrogation answered by a black hole: every flag is raised.
pub fn blackhole_on_base_request<R: Rng + ?Sized>(
    profile: &AdversaryProfile,
    query: &BaseQuery,
    rng: &mut R,
) -> Option<BaseReply> {
    debug_assert!(profile.is_blackhole());
    if !answers(profile, rng) {
        return None;
    }
    let next_hop = query.successor_of(profile.node);
    Some(BaseReply {
        vet: query.vet,
        index: query.index,
        reporter: profile.node,
        subject_flags: FlagDriEntry::both(),
        next_hop,
        next_flags: next_hop.map(|_| FlagDriEntry::both()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::node_stream;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn forged_reply_claims_short_fresh_route() {
        let m = AdversaryProfile::blackhole(n(2));
        let rreq = Rreq { request_id: 4, destination: n(9), dest_seq_no: 3, ttl: 5, dest_only: false, path: vec![n(0), n(1)] };
        let rrep = blackhole_on_rreq(&m, &rreq);
        assert_eq!(rrep.dest_seq_no, 103);
        assert_eq!(rrep.path, vec![n(0), n(1), n(2), n(9)]);
        assert_eq!(rrep.hops_from(n(0)), 3);
        assert_eq!(rrep.hops_from(n(2)), 1);
    }

    #[test]
    fn colluder_routes_through_partner() {
        let m1 = AdversaryProfile::colluding(n(2), 0, n(3), 33);
        let rreq = Rreq { request_id: 1, destination: n(9), dest_seq_no: 0, ttl: 5, dest_only: false, path: vec![n(0), n(1)] };
        assert_eq!(blackhole_on_rreq(&m1, &rreq).path, vec![n(0), n(1), n(2), n(3), n(9)]);
    }

    #[test]
    fn only_data_plane_is_dropped() {
        let m = AdversaryProfile::blackhole(n(2));
        let h = AdversaryProfile::honest(n(1));
        for k in [PacketKind::Data, PacketKind::Ack, PacketKind::Ping, PacketKind::Pong] {
            assert!(blackhole_on_data(&m, k));
            assert!(!blackhole_on_data(&h, k));
        }
        for k in [PacketKind::DriReq, PacketKind::Rel, PacketKind::BaseReq, PacketKind::Rrep] {
            assert!(!blackhole_on_data(&m, k));
        }
    }

    #[test]
    fn fabricated_counts_stay_in_range_and_vary() {
        let m = AdversaryProfile::blackhole(n(2));
        let mut rng = node_stream(5, n(2));
        let values: Vec<u64> =
            (0..200).map(|_| blackhole_on_dri_request(&m, None, &mut rng).unwrap().sent).collect();
        assert!(values.iter().all(|v| FABRICATED_RANGE.contains(v)));
        assert!(values.iter().any(|v| *v != values[0]));
    }

    #[test]
    fn colluders_share_a_story_only_about_each_other() {
        let m2 = AdversaryProfile::colluding(n(3), 7, n(2), 44);
        let mut rng = node_stream(5, n(3));
        assert_eq!(blackhole_on_dri_request(&m2, Some(7), &mut rng), Some(DriEntry::new(44, 44)));
        let about_honest = blackhole_on_dri_request(&m2, None, &mut rng).unwrap();
        assert_eq!(about_honest.sent, about_honest.received);
    }

    #[test]
    fn silent_mode_never_answers() {
        let m = AdversaryProfile::blackhole(n(2)).silent();
        let mut rng = node_stream(5, n(2));
        assert!((0..50).all(|_| blackhole_on_dri_request(&m, None, &mut rng).is_none()));
    }

    #[test]
    fn profile_validation() {
        assert!(AdversaryProfile::honest(n(1)).validate().is_ok());
        let mut bad = AdversaryProfile::honest(n(1));
        bad.collusion_group = Some(1);
        assert!(bad.validate().is_err());
        let mut bad = AdversaryProfile::blackhole(n(1));
        bad.seq_inflation = 0;
        assert!(bad.validate().is_err());
    }
}
