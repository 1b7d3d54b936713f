//! Scenario construction (topology, adversary placement, flow endpoints),
//! deterministic fixtures, and the single-run pipeline.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::adversary::AdversaryProfile;
use crate::config::ScenarioConfig;
use crate::error::SimError;
use crate::experiment::RunRecord;
use crate::metrics::{self, FlowStats, MetricsReport};
use crate::network::{FlowLedger, NetCounters, NetParams, Network, SelectionRecord};
use crate::packet::FlowId;
use crate::sim::{build_connected_topology, scenario_stream, NodeId, SimTime, Topology};

/// When application traffic starts; the warm-up exchange precedes it.
pub const TRAFFIC_START: SimTime = SimTime(1_500_000);
/// Quiet period after the last packet is generated.
pub const DRAIN: SimTime = SimTime(5_000_000);
pub const SAMPLE_INTERVAL_SECS: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub profiles: Vec<AdversaryProfile>,
    pub flows: Vec<(NodeId, NodeId)>,
    /// Offset of each flow's first packet after `TRAFFIC_START`, as a
    /// fraction of the packet period.
    pub phases: Vec<f64>,
}

impl Scenario {
    pub fn blackholes(&self) -> impl Iterator<Item = &AdversaryProfile> {
        self.profiles.iter().filter(|p| p.is_blackhole())
    }
}

/// Draws topology, adversaries and flow endpoints from the scenario stream.
/// The result depends only on the seed and the scenario keys, never on the
/// scheme.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    cfg.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut rng = scenario_stream(cfg.seed);
    let topology = build_connected_topology(cfg.nodes, cfg.area_side, cfg.radio_range, &mut rng)?;
    let n = topology.node_count();
    let mut profiles: Vec<AdversaryProfile> = (0..n as u32).map(|i| AdversaryProfile::honest(NodeId(i))).collect();

    let mut edges = topology.edges();
    edges.shuffle(&mut rng);
    let mut group = 0u32;
    for (u, v) in edges {
        if group as usize == cfg.colluding_pairs {
            break;
        }
        if profiles[u.index()].is_blackhole() || profiles[v.index()].is_blackhole() {
            continue;
        }
        let story = rng.gen_range(crate::adversary::FABRICATED_RANGE);
        profiles[u.index()] = AdversaryProfile::colluding(u, group, v, story);
        profiles[v.index()] = AdversaryProfile::colluding(v, group, u, story);
        group += 1;
    }
    if (group as usize) < cfg.colluding_pairs {
        return Err(SimError::Precondition(format!(
            "only {group} disjoint adjacent pairs available for {} colluding pairs",
            cfg.colluding_pairs
        )));
    }

    let mut free: Vec<NodeId> = profiles.iter().filter(|p| !p.is_blackhole()).map(|p| p.node).collect();
    free.shuffle(&mut rng);
    for m in free.iter().take(cfg.blackholes) {
        profiles[m.index()] = AdversaryProfile::blackhole(*m);
    }

    let honest: Vec<NodeId> = profiles.iter().filter(|p| !p.is_blackhole()).map(|p| p.node).collect();
    let mut pairs: Vec<(NodeId, NodeId)> =
        honest.iter().flat_map(|s| honest.iter().filter(move |d| *d != s).map(move |d| (*s, *d))).collect();
    if pairs.len() < cfg.flows {
        return Err(SimError::Precondition(format!("{} flows requested but only {} honest pairs", cfg.flows, pairs.len())));
    }
    pairs.shuffle(&mut rng);
    pairs.truncate(cfg.flows);
    let phases = (0..pairs.len()).map(|_| rng.gen::<f64>()).collect();
    Ok(Scenario { topology, profiles, flows: pairs, phases })
}

/// Everything measured in one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub report: MetricsReport,
    pub flows: Vec<FlowStats>,
    pub ledgers: Vec<FlowLedger>,
    pub counters: NetCounters,
    pub selections: Vec<SelectionRecord>,
    pub endpoints: Vec<(NodeId, NodeId)>,
}

/// Executes a prepared scenario under `cfg` (scheme, timers, traffic).
pub fn run_prepared(scenario: &Scenario, cfg: &ScenarioConfig, scenario_id: &str) -> Result<RunOutcome, SimError> {
    let mut net = Network::new(scenario.topology.clone(), scenario.profiles.clone(), NetParams::from_config(cfg))?;
    net.schedule_warmup();
    let period = SimTime::from_secs_f64(1.0 / cfg.packet_rate).max(SimTime(1));
    let count = (cfg.duration * cfg.packet_rate).round() as u64;
    let mut last_start = TRAFFIC_START;
    for (i, (s, d)) in scenario.flows.iter().enumerate() {
        let phase = scenario.phases.get(i).copied().unwrap_or(0.0);
        let start = TRAFFIC_START + SimTime((period.0 as f64 * phase) as u64);
        last_start = last_start.max(start);
        net.add_flow(*s, *d, start, period, count)?;
    }
    let traffic_end = last_start + period * count;
    net.run_until(traffic_end + DRAIN);

    let flows = net.flow_stats();
    let ledgers: Vec<FlowLedger> = (0..flows.len()).map(|f| net.ledger(FlowId(f as u32))).collect();
    let endpoints: Vec<(NodeId, NodeId)> = (0..flows.len()).map(|f| net.flow_endpoints(FlowId(f as u32))).collect();
    let start = TRAFFIC_START.as_secs_f64();
    let series =
        metrics::reliability_series(&net.route_log, start, start + cfg.duration, SAMPLE_INTERVAL_SECS).unwrap_or_default();
    let mut selected_route_mrr = BTreeMap::new();
    for sel in &net.selections {
        if let Some(f) = sel.flow {
            selected_route_mrr.insert(endpoints[f.0 as usize], sel.route.audit_mrr);
        }
    }
    let report = MetricsReport {
        throughput_ratio: metrics::throughput_ratio(&flows).ok(),
        packet_loss: metrics::packet_loss(&flows).ok(),
        mean_delay: metrics::mean_end_to_end_delay(&flows).ok(),
        starved_flows: metrics::starved_flows(&flows),
        selected_route_mrr,
        reliability_series: series,
    };
    let record = RunRecord::from_report(scenario_id, cfg, &report, &net.counters);
    Ok(RunOutcome {
        record,
        report,
        flows,
        ledgers,
        counters: net.counters,
        selections: net.selections.clone(),
        endpoints,
    })
}

/// Builds the scenario from `cfg` and runs it.
pub fn run_scenario(cfg: &ScenarioConfig, scenario_id: &str) -> Result<RunOutcome, SimError> {
    let scenario = build_scenario(cfg)?;
    run_prepared(&scenario, cfg, scenario_id)
}

/// A small hand-placed network with named nodes.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub topology: Topology,
    pub profiles: Vec<AdversaryProfile>,
    names: Vec<&'static str>,
}

impl Fixture {
    /// Named nodes at fixed positions, all honest.
    pub fn new(nodes: &[(&'static str, f64, f64)], range: f64) -> Fixture {
        let positions = nodes.iter().map(|(_, x, y)| (*x, *y)).collect();
        let topology = Topology::from_positions(positions, range).expect("fixture layouts are valid");
        let profiles = (0..nodes.len() as u32).map(|i| AdversaryProfile::honest(NodeId(i))).collect();
        Fixture { topology, profiles, names: nodes.iter().map(|(n, _, _)| *n).collect() }
    }

    pub fn id(&self, name: &str) -> NodeId {
        let i = self.names.iter().position(|n| *n == name).unwrap_or_else(|| panic!("fixture has no node {name}"));
        NodeId(i as u32)
    }

    pub fn path(&self, names: &[&str]) -> Vec<NodeId> {
        names.iter().map(|n| self.id(n)).collect()
    }

    pub fn with_blackhole(mut self, name: &str) -> Fixture {
        let id = self.id(name);
        self.profiles[id.index()] = AdversaryProfile::blackhole(id);
        self
    }

    pub fn with_colluders(mut self, a: &str, b: &str, story: u64) -> Fixture {
        let (x, y) = (self.id(a), self.id(b));
        self.profiles[x.index()] = AdversaryProfile::colluding(x, 0, y, story);
        self.profiles[y.index()] = AdversaryProfile::colluding(y, 0, x, story);
        self
    }

    pub fn network(&self, params: NetParams) -> Network {
        Network::new(self.topology.clone(), self.profiles.clone(), params).expect("fixture profiles are consistent")
    }

    /// Scenario carrying a single flow between two named nodes.
    pub fn scenario(&self, source: &str, destination: &str) -> Scenario {
        Scenario {
            topology: self.topology.clone(),
            profiles: self.profiles.clone(),
            flows: vec![(self.id(source), self.id(destination))],
            phases: vec![0.0],
        }
    }
}

/// S - A - B - D on a line, 200 m apart, range 250 m.
pub fn line_fixture() -> Fixture {
    Fixture::new(&[("S", 0.0, 0.0), ("A", 200.0, 0.0), ("B", 400.0, 0.0), ("D", 600.0, 0.0)], 250.0)
}

/// S - A - D with M hanging off S and A; the shortest path is S-A-D and M
/// is adjacent to both of its first two nodes.
pub fn kite_fixture() -> Fixture {
    Fixture::new(&[("S", 0.0, 0.0), ("A", 200.0, 0.0), ("D", 400.0, 0.0), ("M", 100.0, 150.0)], 250.0)
        .with_blackhole("M")
}

/// S - A - M1 - M2 - D on a line with M1 and M2 colluding.
pub fn collusion_fixture() -> Fixture {
    Fixture::new(
        &[("S", 0.0, 0.0), ("A", 200.0, 0.0), ("M1", 400.0, 0.0), ("M2", 600.0, 0.0), ("D", 800.0, 0.0)],
        250.0,
    )
    .with_colluders("M1", "M2", 40)
}
