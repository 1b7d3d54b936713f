//! Per-node protocol state.

use std::collections::BTreeMap;

use crate::adversary::AdversaryProfile;
use crate::aodv::AodvState;
use crate::baseline::{baseline_update, FlagDriTable, FlagKind};
use crate::rel::{Direction, DriTable, RelEnvelope, VetId};
use crate::sim::{node_stream, NodeId, NodeRng};

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub profile: AdversaryProfile,
    pub aodv: AodvState,
    pub dri: DriTable,
    pub flags: FlagDriTable,
    pub(crate) rng: NodeRng,
    /// REL packets waiting here for a DRI reply, with their timer token.
    pub(crate) held: BTreeMap<VetId, (RelEnvelope, u64)>,
}

impl Node {
    pub fn new(profile: AdversaryProfile, seed: u64) -> Self {
        let id = profile.node;
        Node {
            id,
            profile,
            aodv: AodvState::new(),
            dri: DriTable::new(),
            flags: FlagDriTable::new(),
            rng: node_stream(seed, id),
            held: BTreeMap::new(),
        }
    }

    pub fn is_blackhole(&self) -> bool {
        self.profile.is_blackhole()
    }

    /// Both tables observe every data-plane packet.
    pub(crate) fn note_sent(&mut self, to: NodeId, packet_id: u64) {
        self.dri.record_data_packet(to, Direction::Sent, packet_id);
        baseline_update(&mut self.flags, to, FlagKind::Through);
    }

    pub(crate) fn note_received(&mut self, from: NodeId, packet_id: u64) {
        self.dri.record_data_packet(from, Direction::Received, packet_id);
        baseline_update(&mut self.flags, from, FlagKind::From);
    }
}
