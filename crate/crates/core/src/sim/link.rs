use rand::Rng;

use super::{EventQueue, NodeId, SimTime, Topology};
use crate::error::SimError;

/// Per-hop channel: fixed delay, uniform jitter in `[0, jitter)`, and an
/// independent drop probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub base_delay: SimTime,
    pub jitter: SimTime,
    pub loss: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            base_delay: SimTime::from_millis(2),
            jitter: SimTime::from_millis(1),
            loss: 0.0,
        }
    }
}

impl LinkParams {
    /// Draws the fate of one transmission: `None` when it is lost.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<SimTime> {
        if self.loss > 0.0 && rng.gen::<f64>() < self.loss {
            return None;
        }
        let jitter = if self.jitter.0 > 0 { rng.gen_range(0..self.jitter.0) } else { 0 };
        Some(self.base_delay + SimTime(jitter))
    }

    /// Worst-case one-hop latency.
    pub fn max_hop_delay(&self) -> SimTime {
        self.base_delay + self.jitter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Unicast(NodeId),
    Broadcast,
}

/// Outcome counts of one `transmit` call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TxOutcome {
    pub scheduled: usize,
    pub lost: usize,
}

/// Schedules deliveries of one transmission. Broadcast fans out to every
/// neighbour with independently sampled delay and loss. `make` builds the
/// queued action for a given receiver.
pub fn transmit<A, R, F>(
    queue: &mut EventQueue<A>,
    topology: &Topology,
    params: &LinkParams,
    rng: &mut R,
    from: NodeId,
    to: Destination,
    mut make: F,
) -> Result<TxOutcome, SimError>
where
    R: Rng + ?Sized,
    F: FnMut(NodeId) -> A,
{
    let mut out = TxOutcome::default();
    let mut send_one = |queue: &mut EventQueue<A>, rx: NodeId| match params.sample(rng) {
        Some(delay) => {
            queue.schedule_in(delay, make(rx));
            out.scheduled += 1;
        }
        None => out.lost += 1,
    };
    match to {
        Destination::Unicast(rx) => {
            if !topology.is_adjacent(from, rx) {
                return Err(SimError::Undeliverable { from, to: rx });
            }
            send_one(queue, rx);
        }
        Destination::Broadcast => {
            for &rx in topology.neighbours(from) {
                send_one(queue, rx);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::node_stream;

    fn star() -> Topology {
        Topology::from_positions(vec![(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (-10.0, 0.0), (500.0, 0.0)], 20.0)
            .unwrap()
    }

    #[test]
    fn fixed_delay_without_jitter() {
        let topo = star();
        let mut q = EventQueue::new();
        let p = LinkParams { base_delay: SimTime::from_millis(2), jitter: SimTime::ZERO, loss: 0.0 };
        let mut rng = node_stream(1, NodeId(0));
        transmit(&mut q, &topo, &p, &mut rng, NodeId(0), Destination::Unicast(NodeId(1)), |rx| rx).unwrap();
        let ev = q.pop().unwrap();
        assert_eq!(ev.time, SimTime::from_millis(2));
        assert_eq!(ev.action, NodeId(1));
    }

    #[test]
    fn certain_loss_schedules_nothing() {
        let topo = star();
        let mut q: EventQueue<NodeId> = EventQueue::new();
        let p = LinkParams { loss: 1.0, ..LinkParams::default() };
        let mut rng = node_stream(1, NodeId(0));
        let out = transmit(&mut q, &topo, &p, &mut rng, NodeId(0), Destination::Broadcast, |rx| rx).unwrap();
        assert_eq!(out.scheduled, 0);
        assert_eq!(out.lost, 3);
        assert!(q.is_empty());
    }

    #[test]
    fn broadcast_fans_out_to_degree() {
        let topo = star();
        let mut q = EventQueue::new();
        let mut rng = node_stream(1, NodeId(0));
        let out = transmit(&mut q, &topo, &LinkParams::default(), &mut rng, NodeId(0), Destination::Broadcast, |rx| rx)
            .unwrap();
        assert_eq!(out.scheduled, topo.degree(NodeId(0)));
        assert_eq!(out.scheduled, 3);
        let mut rx: Vec<NodeId> = std::iter::from_fn(|| q.pop()).map(|e| e.action).collect();
        rx.sort();
        assert_eq!(rx, vec![NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn jitter_stays_in_range() {
        let p = LinkParams::default();
        let mut rng = node_stream(9, NodeId(2));
        for _ in 0..1000 {
            let d = p.sample(&mut rng).unwrap();
            assert!(d >= SimTime::from_millis(2) && d < SimTime::from_millis(3));
        }
    }

    #[test]
    fn unicast_to_non_neighbour_is_an_error() {
        let topo = star();
        let mut q: EventQueue<NodeId> = EventQueue::new();
        let mut rng = node_stream(1, NodeId(0));
        let err = transmit(&mut q, &topo, &LinkParams::default(), &mut rng, NodeId(0), Destination::Unicast(NodeId(4)), |rx| rx)
            .unwrap_err();
        assert_eq!(err, SimError::Undeliverable { from: NodeId(0), to: NodeId(4) });
    }
}
