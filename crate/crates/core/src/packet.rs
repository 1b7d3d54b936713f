//! Wire-level packet model shared by every protocol module.

use crate::aodv::{Rrep, Rreq};
use crate::baseline::{BaseQuery, BaseReply};
use crate::rel::{DriEntry, RelEnvelope};
use crate::sim::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    Data,
    Ack,
    Rreq,
    Rrep,
    Ping,
    Pong,
    DriReq,
    DriRep,
    Rel,
    BaseReq,
    BaseRep,
}

impl PacketKind {
    /// DATA, ACK, PING and PONG travel on the data plane: they feed the DRI
    /// tables and black holes swallow them.
    pub fn is_data_plane(self) -> bool {
        matches!(self, PacketKind::Data | PacketKind::Ack | PacketKind::Ping | PacketKind::Pong)
    }

    /// Control messages spent on path vetting (the `vet_msgs` counter).
    pub fn is_vetting_control(self) -> bool {
        matches!(
            self,
            PacketKind::DriReq | PacketKind::DriRep | PacketKind::Rel | PacketKind::BaseReq | PacketKind::BaseRep
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Data => "DATA",
            PacketKind::Ack => "ACK",
            PacketKind::Rreq => "RREQ",
            PacketKind::Rrep => "RREP",
            PacketKind::Ping => "PING",
            PacketKind::Pong => "PONG",
            PacketKind::DriReq => "DRI_REQ",
            PacketKind::DriRep => "DRI_REP",
            PacketKind::Rel => "REL",
            PacketKind::BaseReq => "BASE_REQ",
            PacketKind::BaseRep => "BASE_REP",
        }
    }
}

/// Index of an application flow within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

/// Hop-by-hop source route; `at` is the index of the node currently holding
/// the packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRoute {
    pub hops: Vec<NodeId>,
    pub at: usize,
}

impl SourceRoute {
    pub fn new(hops: Vec<NodeId>) -> Self {
        debug_assert!(hops.len() >= 2);
        SourceRoute { hops, at: 0 }
    }

    pub fn current(&self) -> NodeId {
        self.hops[self.at]
    }

    pub fn next(&self) -> Option<NodeId> {
        self.hops.get(self.at + 1).copied()
    }

    pub fn is_final(&self) -> bool {
        self.at + 1 == self.hops.len()
    }

    pub fn target(&self) -> NodeId {
        *self.hops.last().expect("routes are never empty")
    }

    pub fn advance(&mut self) {
        self.at += 1;
    }

    pub fn reversed(&self) -> SourceRoute {
        let mut hops = self.hops.clone();
        hops.reverse();
        SourceRoute { hops, at: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPayload {
    /// `None` for warm-up probes.
    pub flow: Option<FlowId>,
    pub created_at: SimTime,
    pub bytes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeId {
    pub source: NodeId,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriRequest {
    pub vet: crate::rel::VetId,
    /// Node whose DRI entry is being requested (the requester itself).
    pub subject: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriReply {
    pub vet: crate::rel::VetId,
    pub reporter: NodeId,
    pub entry: DriEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data(DataPayload),
    Ack(DataPayload),
    Rreq(Rreq),
    Rrep(Rrep),
    Ping(ProbeId),
    Pong(ProbeId),
    DriReq(DriRequest),
    DriRep(DriReply),
    Rel(Box<RelEnvelope>),
    BaseReq(BaseQuery),
    BaseRep(BaseReply),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub origin: NodeId,
    pub final_dst: NodeId,
    pub prev_hop: NodeId,
    pub seq_no: u64,
    pub hop_count: u32,
    /// Present for everything except flooded RREQs.
    pub route: Option<SourceRoute>,
    pub payload: Payload,
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match &self.payload {
            Payload::Data(_) => PacketKind::Data,
            Payload::Ack(_) => PacketKind::Ack,
            Payload::Rreq(_) => PacketKind::Rreq,
            Payload::Rrep(_) => PacketKind::Rrep,
            Payload::Ping(_) => PacketKind::Ping,
            Payload::Pong(_) => PacketKind::Pong,
            Payload::DriReq(_) => PacketKind::DriReq,
            Payload::DriRep(_) => PacketKind::DriRep,
            Payload::Rel(_) => PacketKind::Rel,
            Payload::BaseReq(_) => PacketKind::BaseReq,
            Payload::BaseRep(_) => PacketKind::BaseRep,
        }
    }

    /// Builds a source-routed packet starting at `route.hops[0]`.
    pub fn routed(route: SourceRoute, seq_no: u64, payload: Payload) -> Packet {
        Packet {
            origin: route.hops[0],
            final_dst: route.target(),
            prev_hop: route.hops[0],
            seq_no,
            hop_count: 0,
            route: Some(route),
            payload,
        }
    }

    pub fn flow(&self) -> Option<FlowId> {
        match &self.payload {
            Payload::Data(d) => d.flow,
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_route_walks_and_reverses() {
        let mut r = SourceRoute::new(vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(r.next(), Some(NodeId(1)));
        r.advance();
        assert_eq!(r.current(), NodeId(1));
        r.advance();
        assert!(r.is_final());
        assert_eq!(r.next(), None);
        let back = r.reversed();
        assert_eq!(back.hops, vec![NodeId(2), NodeId(1), NodeId(0)]);
        assert_eq!(back.at, 0);
    }

    #[test]
    fn plane_classification() {
        assert!(PacketKind::Ping.is_data_plane());
        assert!(!PacketKind::DriReq.is_data_plane());
        assert!(PacketKind::Rel.is_vetting_control());
        assert!(!PacketKind::Rreq.is_vetting_control());
        assert!(!PacketKind::Data.is_vetting_control());
    }
}
