use proptest::prelude::*;
use relsim::config::{ScenarioConfig, Scheme};
use relsim::metrics::{packet_loss, throughput_ratio};
use relsim::scenario::{kite_fixture, line_fixture, run_prepared};
use relsim::run_scenario;

#[test]
fn single_honest_flow_reliability_is_flat() {
    let cfg = ScenarioConfig { flows: 1, duration: 30.0, ..Default::default() };
    let out = run_prepared(&line_fixture().scenario("S", "D"), &cfg, "flat").unwrap();
    assert!(!out.report.reliability_series.is_empty());
    assert!(out.report.reliability_series.iter().all(|(_, v)| *v == 100.0));
    assert_eq!(out.record.mrr, 1.0);
}

/// With concurrent flows a route can be scored while other traffic over the
/// same links still awaits its acknowledgement, so samples dip just below
/// 100.
#[test]
fn honest_reliability_stays_near_the_ceiling() {
    let cfg = ScenarioConfig { duration: 30.0, ..Default::default() };
    let out = run_scenario(&cfg, "near").unwrap();
    assert!(!out.report.reliability_series.is_empty());
    assert!(out.report.reliability_series.iter().all(|(_, v)| (99.0..=100.0).contains(v)));
    assert!(out.record.mrr > 0.99);
}

#[test]
fn captured_route_contributes_zero_reliability() {
    let cfg = ScenarioConfig { scheme: Scheme::Undefended, flows: 1, duration: 10.0, ..Default::default() };
    let out = run_prepared(&kite_fixture().scenario("S", "D"), &cfg, "kite").unwrap();
    assert!(out.report.reliability_series.iter().any(|(_, v)| *v == 0.0));
}

#[test]
fn lossy_links_show_up_as_link_drops() {
    let cfg = ScenarioConfig { link_loss: 0.05, duration: 20.0, seed: 3, ..Default::default() };
    let out = run_scenario(&cfg, "lossy").unwrap();
    assert!(out.flows.iter().map(|f| f.dropped_link).sum::<u64>() > 0);
    assert!(out.ledgers.iter().all(|l| l.balances()));
    assert!(out.record.loss_pct > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Every generated packet is delivered, dropped for a stated cause, or
    /// still in flight; and the run report agrees with the flow counts.
    #[test]
    fn accounting_closes(
        seed in 0u64..100_000,
        nodes in 8usize..30,
        blackholes in 0usize..4,
        pairs in 0usize..2,
        loss in prop::sample::select(vec![0.0, 0.02]),
        scheme in prop::sample::select(Scheme::ALL.to_vec()),
    ) {
        let cfg = ScenarioConfig {
            nodes,
            area_side: 80.0 * (nodes as f64).sqrt(),
            radio_range: 100.0,
            blackholes,
            colluding_pairs: pairs,
            flows: 3,
            duration: 8.0,
            link_loss: loss,
            scheme,
            seed,
            ..Default::default()
        };
        let out = run_scenario(&cfg, "p").unwrap();
        for (l, f) in out.ledgers.iter().zip(&out.flows) {
            prop_assert!(l.balances(), "{l:?}");
            prop_assert_eq!(l.generated, f.packets_sent);
            prop_assert_eq!(l.delivered, f.packets_received);
            prop_assert_eq!(f.packets_sent, f.packets_received + f.dropped() + l.in_flight);
        }
        let eta = throughput_ratio(&out.flows).unwrap();
        let l = packet_loss(&out.flows).unwrap();
        prop_assert!((0.0..=100.0).contains(&eta) && (0.0..=100.0).contains(&l));
        // Equal packet sizes and windows make the two measures complementary.
        prop_assert!((eta + l - 100.0).abs() < 1e-9);
        if l == 0.0 {
            prop_assert_eq!(eta, 100.0);
        }
        for (_, v) in &out.report.reliability_series {
            prop_assert!((0.0..=100.0).contains(v));
        }
    }
}
