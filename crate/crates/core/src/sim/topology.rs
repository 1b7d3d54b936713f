use rand::Rng;

use super::NodeId;
use crate::error::SimError;

/// Resampling budget used when a random layout comes out disconnected.
pub const MAX_TOPOLOGY_ATTEMPTS: usize = 100;

/// Fixed node positions with unit-disk connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    radio_range: f64,
    neighbours: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Builds adjacency from explicit coordinates: `u ~ v` iff `u != v` and
    /// their distance is at most `radio_range`.
    pub fn from_positions(positions: Vec<(f64, f64)>, radio_range: f64) -> Result<Self, SimError> {
        if positions.len() < 2 {
            return Err(SimError::InvalidConfig(format!(
                "need at least 2 nodes, got {}",
                positions.len()
            )));
        }
        if !(radio_range > 0.0) {
            return Err(SimError::InvalidConfig("radio range must be positive".into()));
        }
        let n = positions.len();
        let mut neighbours = vec![Vec::new(); n];
        for u in 0..n {
            for v in (u + 1)..n {
                let (dx, dy) = (positions[u].0 - positions[v].0, positions[u].1 - positions[v].1);
                if dx.hypot(dy) <= radio_range {
                    neighbours[u].push(NodeId(v as u32));
                    neighbours[v].push(NodeId(u as u32));
                }
            }
        }
        for list in &mut neighbours {
            list.sort();
        }
        Ok(Topology { positions, radio_range, neighbours })
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.positions.len() as u32).map(NodeId)
    }

    pub fn position(&self, node: NodeId) -> (f64, f64) {
        self.positions[node.index()]
    }

    pub fn radio_range(&self) -> f64 {
        self.radio_range
    }

    /// Sorted neighbour list.
    pub fn neighbours(&self, node: NodeId) -> &[NodeId] {
        &self.neighbours[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbours[node.index()].len()
    }

    pub fn is_adjacent(&self, u: NodeId, v: NodeId) -> bool {
        u.index() < self.node_count() && self.neighbours[u.index()].binary_search(&v).is_ok()
    }

    /// All undirected edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for u in self.nodes() {
            for &v in self.neighbours(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in &self.neighbours[u] {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    count += 1;
                    stack.push(v.index());
                }
            }
        }
        count == n
    }
}

/// Places `node_count` nodes uniformly over an `area_side` square.
pub fn build_topology<R: Rng + ?Sized>(
    node_count: usize,
    area_side: f64,
    radio_range: f64,
    rng: &mut R,
) -> Result<Topology, SimError> {
    if node_count < 2 {
        return Err(SimError::InvalidConfig(format!("need at least 2 nodes, got {node_count}")));
    }
    if !(area_side > 0.0) {
        return Err(SimError::InvalidConfig("area side must be positive".into()));
    }
    let positions = (0..node_count)
        .map(|_| (rng.gen_range(0.0..area_side), rng.gen_range(0.0..area_side)))
        .collect();
    Topology::from_positions(positions, radio_range)
}

/// Resamples until connected, up to [`MAX_TOPOLOGY_ATTEMPTS`] layouts.
pub fn build_connected_topology<R: Rng + ?Sized>(
    node_count: usize,
    area_side: f64,
    radio_range: f64,
    rng: &mut R,
) -> Result<Topology, SimError> {
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        let topo = build_topology(node_count, area_side, radio_range, rng)?;
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(SimError::Disconnected(MAX_TOPOLOGY_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario_stream;

    #[test]
    fn boundary_distance_is_adjacent() {
        let t = Topology::from_positions(vec![(0.0, 0.0), (0.0, 100.0)], 100.0).unwrap();
        assert!(t.is_adjacent(NodeId(0), NodeId(1)));
        let t = Topology::from_positions(vec![(0.0, 0.0), (0.0, 101.0)], 100.0).unwrap();
        assert!(!t.is_adjacent(NodeId(0), NodeId(1)));
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut rng = scenario_stream(1);
        assert!(matches!(build_topology(1, 100.0, 10.0, &mut rng), Err(SimError::InvalidConfig(_))));
        assert!(matches!(build_topology(0, 100.0, 10.0, &mut rng), Err(SimError::InvalidConfig(_))));
        assert!(build_topology(5, 0.0, 10.0, &mut rng).is_err());
        assert!(build_topology(5, 10.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn adjacency_matches_pairwise_distance_oracle() {
        let mut rng = scenario_stream(2024);
        let t = build_topology(25, 500.0, 150.0, &mut rng).unwrap();
        for u in t.nodes() {
            assert!(!t.is_adjacent(u, u));
            for v in t.nodes() {
                let (a, b) = (t.position(u), t.position(v));
                let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                assert_eq!(t.is_adjacent(u, v), u != v && d <= 150.0, "{u} {v}");
                assert_eq!(t.is_adjacent(u, v), t.is_adjacent(v, u));
            }
        }
    }

    #[test]
    fn sparse_layouts_exhaust_resampling() {
        let mut rng = scenario_stream(3);
        let err = build_connected_topology(30, 10_000.0, 1.0, &mut rng).unwrap_err();
        assert_eq!(err, SimError::Disconnected(MAX_TOPOLOGY_ATTEMPTS));
    }
}
