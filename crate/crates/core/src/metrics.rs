//! Per-flow accounting and the evaluation formulas: throughput ratio,
//! packet loss, mean end-to-end delay and the reliability time series.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::MetricError;
use crate::packet::FlowId;
use crate::sim::NodeId;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub app_id: u32,
    pub packets_sent: u64,
    pub packets_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Length of the traffic generation window in seconds; both throughputs
    /// are measured over it.
    pub active_secs: f64,
    pub delay_samples: Vec<f64>,
    pub dropped_blackhole: u64,
    pub dropped_link: u64,
    pub dropped_no_route: u64,
}

impl FlowStats {
    pub fn new(app_id: u32, active_secs: f64) -> Self {
        FlowStats { app_id, active_secs, ..Default::default() }
    }

    pub fn send_throughput(&self) -> f64 {
        if self.active_secs > 0.0 {
            self.bytes_sent as f64 / self.active_secs
        } else {
            0.0
        }
    }

    pub fn recv_throughput(&self) -> f64 {
        if self.active_secs > 0.0 {
            self.bytes_received as f64 / self.active_secs
        } else {
            0.0
        }
    }

    pub fn mean_delay(&self) -> Option<f64> {
        (!self.delay_samples.is_empty()).then(|| self.delay_samples.iter().sum::<f64>() / self.delay_samples.len() as f64)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped_blackhole + self.dropped_link + self.dropped_no_route
    }

    pub fn record_sent(&mut self, bytes: u32) {
        self.packets_sent += 1;
        self.bytes_sent += u64::from(bytes);
    }

    pub fn record_delivery(&mut self, bytes: u32, delay_secs: f64) {
        self.packets_received += 1;
        self.bytes_received += u64::from(bytes);
        self.delay_samples.push(delay_secs);
    }
}

pub fn throughput_ratio(flows: &[FlowStats]) -> Result<f64, MetricError> {
    let send: f64 = flows.iter().map(FlowStats::send_throughput).sum();
    if send <= 0.0 {
        return Err(MetricError::Undefined("throughput ratio with zero send throughput"));
    }
    let recv: f64 = flows.iter().map(FlowStats::recv_throughput).sum();
    Ok(recv / send * 100.0)
}

pub fn packet_loss(flows: &[FlowStats]) -> Result<f64, MetricError> {
    let sent: u64 = flows.iter().map(|f| f.packets_sent).sum();
    if sent == 0 {
        return Err(MetricError::Undefined("packet loss with zero packets sent"));
    }
    let lost: u64 = flows.iter().map(|f| f.packets_sent - f.packets_received).sum();
    Ok(lost as f64 / sent as f64 * 100.0)
}

/// Mean over flows of each flow's mean delay. Flows that delivered nothing
/// are left out (see `starved_flows`).
pub fn mean_end_to_end_delay(flows: &[FlowStats]) -> Result<f64, MetricError> {
    let per_flow: Vec<f64> = flows.iter().filter_map(FlowStats::mean_delay).collect();
    if per_flow.is_empty() {
        return Err(MetricError::Undefined("end-to-end delay with no delivered packets"));
    }
    Ok(per_flow.iter().sum::<f64>() / per_flow.len() as f64)
}

pub fn starved_flows(flows: &[FlowStats]) -> usize {
    flows.iter().filter(|f| f.packets_received == 0).count()
}

/// Change in a flow's selected route: `Some(mrr)` when a route is chosen,
/// `None` when it is abandoned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteEvent {
    pub time: f64,
    pub flow: FlowId,
    pub mrr: Option<f64>,
}

/// Samples the mean MRR (percent) of all selected routes at every
/// `interval` boundary in `(start, end]`. Boundaries with no selected route
/// are omitted. `log` must be ordered by time.
pub fn reliability_series(log: &[RouteEvent], start: f64, end: f64, interval: f64) -> Result<Vec<(f64, f64)>, MetricError> {
    if !(interval > 0.0) {
        return Err(MetricError::Undefined("reliability series with non-positive interval"));
    }
    let mut current: BTreeMap<FlowId, f64> = BTreeMap::new();
    let mut out = Vec::new();
    let mut next = 0;
    let mut k = 1u64;
    loop {
        let t = start + interval * k as f64;
        if t > end + 1e-9 {
            break;
        }
        while next < log.len() && log[next].time <= t {
            match log[next].mrr {
                Some(m) => current.insert(log[next].flow, m),
                None => current.remove(&log[next].flow),
            };
            next += 1;
        }
        if !current.is_empty() {
            out.push((t, current.values().sum::<f64>() / current.len() as f64 * 100.0));
        }
        k += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub throughput_ratio: Option<f64>,
    pub packet_loss: Option<f64>,
    pub mean_delay: Option<f64>,
    pub starved_flows: usize,
    pub selected_route_mrr: BTreeMap<(NodeId, NodeId), f64>,
    pub reliability_series: Vec<(f64, f64)>,
}

impl MetricsReport {
    /// Mean of the reliability series as a fraction, if any sample exists.
    pub fn mean_mrr(&self) -> Option<f64> {
        let s = &self.reliability_series;
        (!s.is_empty()).then(|| s.iter().map(|(_, v)| v).sum::<f64>() / s.len() as f64 / 100.0)
    }
}

/// Mean and 95% confidence half-width (Student t) of the finite values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub ci95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len();
        if n == 0 {
            return Summary { n, mean: f64::NAN, ci95: f64::NAN };
        }
        let mean = finite.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Summary { n, mean, ci95: f64::NAN };
        }
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
        Summary { n, mean, ci95: t * (var / n as f64).sqrt() }
    }

    pub fn low(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn high(&self) -> f64 {
        self.mean + self.ci95
    }

    /// True when this interval lies strictly above `other`.
    pub fn above(&self, other: &Summary) -> bool {
        self.low() > other.high()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate_flow(send: u64, recv: u64) -> FlowStats {
        FlowStats { bytes_sent: send, bytes_received: recv, active_secs: 1.0, ..Default::default() }
    }

    fn count_flow(sent: u64, received: u64) -> FlowStats {
        FlowStats { packets_sent: sent, packets_received: received, ..Default::default() }
    }

    fn delay_flow(samples: &[f64]) -> FlowStats {
        FlowStats { delay_samples: samples.to_vec(), packets_received: samples.len() as u64, ..Default::default() }
    }

    #[test]
    fn throughput_examples() {
        assert!((throughput_ratio(&[rate_flow(100, 76)]).unwrap() - 76.0).abs() < 1e-9);
        assert!((throughput_ratio(&[rate_flow(100, 65)]).unwrap() - 65.0).abs() < 1e-9);
        assert_eq!(throughput_ratio(&[rate_flow(64, 64), rate_flow(128, 128)]).unwrap(), 100.0);
        assert!(throughput_ratio(&[rate_flow(0, 0)]).is_err());
        assert!(throughput_ratio(&[]).is_err());
    }

    #[test]
    fn loss_examples() {
        assert!((packet_loss(&[count_flow(100, 50)]).unwrap() - 50.0).abs() < 1e-9);
        assert!((packet_loss(&[count_flow(100, 80)]).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(packet_loss(&[count_flow(10, 10)]).unwrap(), 0.0);
        assert!(packet_loss(&[count_flow(0, 0)]).is_err());
    }

    #[test]
    fn delay_examples() {
        assert!((mean_end_to_end_delay(&[delay_flow(&[0.065])]).unwrap() - 0.065).abs() < 1e-9);
        let two = [delay_flow(&[0.092]), delay_flow(&[0.092])];
        assert!((mean_end_to_end_delay(&two).unwrap() - 0.092).abs() < 1e-9);
        let three = [delay_flow(&[0.010]), delay_flow(&[0.020]), delay_flow(&[0.030])];
        assert!((mean_end_to_end_delay(&three).unwrap() - 0.020).abs() < 1e-9);
    }

    #[test]
    fn starved_flows_are_excluded_from_delay() {
        let flows = [delay_flow(&[0.010, 0.030]), delay_flow(&[])];
        assert!((mean_end_to_end_delay(&flows).unwrap() - 0.020).abs() < 1e-12);
        assert_eq!(starved_flows(&flows), 1);
        assert!(mean_end_to_end_delay(&[delay_flow(&[])]).is_err());
    }

    #[test]
    fn series_flat_when_all_routes_perfect() {
        let log = [
            RouteEvent { time: 0.5, flow: FlowId(0), mrr: Some(1.0) },
            RouteEvent { time: 0.7, flow: FlowId(1), mrr: Some(1.0) },
        ];
        let s = reliability_series(&log, 0.0, 5.0, 1.0).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|(_, v)| *v == 100.0));
    }

    #[test]
    fn series_includes_captured_routes_and_omits_empty_samples() {
        let log = [
            RouteEvent { time: 1.5, flow: FlowId(0), mrr: Some(1.0) },
            RouteEvent { time: 1.5, flow: FlowId(1), mrr: Some(0.0) },
            RouteEvent { time: 3.5, flow: FlowId(0), mrr: None },
            RouteEvent { time: 3.5, flow: FlowId(1), mrr: None },
        ];
        let s = reliability_series(&log, 0.0, 4.0, 1.0).unwrap();
        assert_eq!(s, vec![(2.0, 50.0), (3.0, 50.0)]);
        assert!(reliability_series(&log, 0.0, 4.0, 0.0).is_err());
    }

    #[test]
    fn summary_matches_hand_computation() {
        let s = Summary::of(&[1.0, 2.0, 3.0, f64::NAN]);
        assert_eq!(s.n, 3);
        assert!((s.mean - 2.0).abs() < 1e-12);
        // t(0.975, 2) = 4.302652729911275; sd = 1
        assert!((s.ci95 - 4.302652729911275 / 3f64.sqrt()).abs() < 1e-6);
        assert!(Summary::of(&[]).mean.is_nan());
    }
}
