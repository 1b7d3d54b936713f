//! Scenario configuration: defaults, `key = value` parsing, overrides and
//! validation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::rel::VettingConfig;
use crate::sim::{LinkParams, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Undefended,
    Baseline,
    Proposed,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Undefended, Scheme::Baseline, Scheme::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Undefended => "undefended",
            Scheme::Baseline => "baseline",
            Scheme::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "undefended" => Ok(Scheme::Undefended),
            "baseline" => Ok(Scheme::Baseline),
            "proposed" => Ok(Scheme::Proposed),
            other => Err(format!("unknown scheme `{other}` (expected undefended, baseline or proposed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub nodes: usize,
    pub area_side: f64,
    pub radio_range: f64,
    pub blackholes: usize,
    pub colluding_pairs: usize,
    pub scheme: Scheme,
    pub flows: usize,
    pub packet_rate: f64,
    pub packet_size: u32,
    pub duration: f64,
    pub seed: u64,
    pub t1_ms: f64,
    pub k_r: u32,
    pub k_m: u32,
    pub delta_match: u64,
    pub ratio_cap: f64,
    pub warmup_packets: u32,
    pub link_delay_ms: f64,
    pub link_jitter_ms: f64,
    pub link_loss: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            nodes: 50,
            area_side: 1000.0,
            radio_range: 250.0,
            blackholes: 0,
            colluding_pairs: 0,
            scheme: Scheme::Proposed,
            flows: 10,
            packet_rate: 4.0,
            packet_size: 64,
            duration: 100.0,
            seed: 1,
            t1_ms: 50.0,
            k_r: 3,
            k_m: 3,
            delta_match: 2,
            ratio_cap: 1.0,
            warmup_packets: 10,
            link_delay_ms: 2.0,
            link_jitter_ms: 1.0,
            link_loss: 0.0,
        }
    }
}

pub const KEYS: [&str; 20] = [
    "nodes",
    "area_side",
    "radio_range",
    "blackholes",
    "colluding_pairs",
    "scheme",
    "flows",
    "packet_rate",
    "packet_size",
    "duration",
    "seed",
    "t1_ms",
    "k_r",
    "k_m",
    "delta_match",
    "ratio_cap",
    "warmup_packets",
    "link_delay_ms",
    "link_jitter_ms",
    "link_loss",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl ScenarioConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "nodes" => self.nodes = parse_value(key, value)?,
            "area_side" => self.area_side = parse_value(key, value)?,
            "radio_range" => self.radio_range = parse_value(key, value)?,
            "blackholes" => self.blackholes = parse_value(key, value)?,
            "colluding_pairs" => self.colluding_pairs = parse_value(key, value)?,
            "scheme" => self.scheme = parse_value(key, value)?,
            "flows" => self.flows = parse_value(key, value)?,
            "packet_rate" => self.packet_rate = parse_value(key, value)?,
            "packet_size" => self.packet_size = parse_value(key, value)?,
            "duration" => self.duration = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "t1_ms" => self.t1_ms = parse_value(key, value)?,
            "k_r" => self.k_r = parse_value(key, value)?,
            "k_m" => self.k_m = parse_value(key, value)?,
            "delta_match" => self.delta_match = parse_value(key, value)?,
            "ratio_cap" => self.ratio_cap = parse_value(key, value)?,
            "warmup_packets" => self.warmup_packets = parse_value(key, value)?,
            "link_delay_ms" => self.link_delay_ms = parse_value(key, value)?,
            "link_jitter_ms" => self.link_jitter_ms = parse_value(key, value)?,
            "link_loss" => self.link_loss = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses a flat `key = value` document on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() || value.trim().is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Applies `--key value` style overrides, then revalidates.
    pub fn with_overrides<'a, I>(mut self, overrides: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (k, v) in overrides {
            self.set(k, v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &'static str, reason: &str| Err(ConfigError::Invariant { field, reason: reason.to_string() });
        if self.nodes < 2 {
            return bad("nodes", "at least 2 nodes are required");
        }
        if self.blackholes + 2 * self.colluding_pairs > self.nodes - 2 {
            return bad("blackholes", "blackholes + 2 * colluding_pairs must not exceed nodes - 2");
        }
        let positive = [
            ("area_side", self.area_side),
            ("radio_range", self.radio_range),
            ("packet_rate", self.packet_rate),
            ("duration", self.duration),
            ("t1_ms", self.t1_ms),
            ("ratio_cap", self.ratio_cap),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, "must be a positive number");
            }
        }
        if self.flows == 0 {
            return bad("flows", "must be positive");
        }
        if self.packet_size == 0 {
            return bad("packet_size", "must be positive");
        }
        if !(self.link_delay_ms.is_finite() && self.link_delay_ms >= 0.0) {
            return bad("link_delay_ms", "must be non-negative");
        }
        if !(self.link_jitter_ms.is_finite() && self.link_jitter_ms >= 0.0) {
            return bad("link_jitter_ms", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.link_loss) {
            return bad("link_loss", "must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            base_delay: SimTime::from_millis_f64(self.link_delay_ms),
            jitter: SimTime::from_millis_f64(self.link_jitter_ms),
            loss: self.link_loss,
        }
    }

    pub fn vetting_config(&self) -> VettingConfig {
        VettingConfig {
            t1: SimTime::from_millis_f64(self.t1_ms),
            k_r: self.k_r,
            k_m: self.k_m,
            delta_match: self.delta_match,
            ratio_cap: self.ratio_cap,
        }
    }

    /// Renders the configuration in the file format accepted by `parse_str`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(&format!("{key} = {}\n", self.get(key)));
        }
        out
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "nodes" => self.nodes.to_string(),
            "area_side" => self.area_side.to_string(),
            "radio_range" => self.radio_range.to_string(),
            "blackholes" => self.blackholes.to_string(),
            "colluding_pairs" => self.colluding_pairs.to_string(),
            "scheme" => self.scheme.to_string(),
            "flows" => self.flows.to_string(),
            "packet_rate" => self.packet_rate.to_string(),
            "packet_size" => self.packet_size.to_string(),
            "duration" => self.duration.to_string(),
            "seed" => self.seed.to_string(),
            "t1_ms" => self.t1_ms.to_string(),
            "k_r" => self.k_r.to_string(),
            "k_m" => self.k_m.to_string(),
            "delta_match" => self.delta_match.to_string(),
            "ratio_cap" => self.ratio_cap.to_string(),
            "warmup_packets" => self.warmup_packets.to_string(),
            "link_delay_ms" => self.link_delay_ms.to_string(),
            "link_jitter_ms" => self.link_jitter_ms.to_string(),
            "link_loss" => self.link_loss.to_string(),
            _ => String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ScenarioConfig::parse_str("").unwrap(), ScenarioConfig::default());
        assert_eq!(ScenarioConfig::parse_str("# nothing\n\n").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn ten_blackholes_in_fifty_nodes_accepted() {
        let cfg = ScenarioConfig::parse_str("blackholes = 10\nnodes = 50").unwrap();
        assert_eq!(cfg.blackholes, 10);
    }

    #[test]
    fn too_many_blackholes_rejected() {
        let err = ScenarioConfig::parse_str("blackholes = 49\nnodes = 50").unwrap_err();
        assert!(matches!(err, ConfigError::Invariant { field: "blackholes", .. }));
        let err = ScenarioConfig::parse_str("blackholes = 44\ncolluding_pairs = 3").unwrap_err();
        assert!(matches!(err, ConfigError::Invariant { field: "blackholes", .. }));
        assert!(ScenarioConfig::parse_str("blackholes = 42\ncolluding_pairs = 3").is_ok());
    }

    #[test]
    fn unknown_key_and_bad_values() {
        assert!(matches!(ScenarioConfig::parse_str("speed = 3"), Err(ConfigError::UnknownKey(k)) if k == "speed"));
        assert!(matches!(ScenarioConfig::parse_str("nodes = many"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ScenarioConfig::parse_str("nodes 5"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(ScenarioConfig::parse_str("scheme = magic"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(
            ScenarioConfig::parse_str("packet_rate = 0"),
            Err(ConfigError::Invariant { field: "packet_rate", .. })
        ));
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = ScenarioConfig::parse_str("  scheme = baseline   # cmp\nseed=42\n").unwrap();
        assert_eq!(cfg.scheme, Scheme::Baseline);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn rendering_round_trips() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("link_loss", "0.05").unwrap();
        cfg.set("scheme", "undefended").unwrap();
        assert_eq!(ScenarioConfig::parse_str(&cfg.to_config_string()).unwrap(), cfg);
    }
}
