use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use relsim::experiment::{self, RunRecord};
use relsim::{ScenarioConfig, Scheme};

#[derive(Parser, Debug)]
#[command(name = "relsim", version, about = "Black-hole defence experiments over a simulated AODV network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single scenario and print its CSV row.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run the cross product of black-hole counts, seeds and schemes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Largest black-hole count; the sweep covers 0..=N.
        #[arg(long, alias = "max_blackholes", default_value_t = 10)]
        max_blackholes: usize,
        #[command(flatten)]
        seeds: Seeds,
        /// Comma-separated scheme list.
        #[arg(long, value_delimiter = ',', default_values_t = Scheme::ALL.to_vec())]
        schemes: Vec<Scheme>,
    },
    /// Run every scheme at the configured black-hole count over several seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: Seeds,
    },
}

#[derive(Args, Debug)]
struct Seeds {
    /// Number of seeds per cell.
    #[arg(long = "seeds", default_value_t = 30)]
    count: u64,
    /// First seed; seeds run consecutively from here.
    #[arg(long, alias = "seed_start", default_value_t = 1)]
    seed_start: u64,
}

impl Seeds {
    fn list(&self) -> Vec<u64> {
        (0..self.count).map(|i| self.seed_start.wrapping_add(i)).collect()
    }
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenario id written to the first CSV column.
    #[arg(long, default_value = "default")]
    scenario: String,
    #[command(flatten)]
    keys: KeyFlags,
}

/// One optional flag per configuration key. Values stay textual so parsing
/// and validation share the config file path.
#[derive(Args, Debug, Default)]
struct KeyFlags {
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long = "area_side", alias = "area-side")]
    area_side: Option<String>,
    #[arg(long = "radio_range", alias = "radio-range")]
    radio_range: Option<String>,
    #[arg(long)]
    blackholes: Option<String>,
    #[arg(long = "colluding_pairs", alias = "colluding-pairs")]
    colluding_pairs: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    flows: Option<String>,
    #[arg(long = "packet_rate", alias = "packet-rate")]
    packet_rate: Option<String>,
    #[arg(long = "packet_size", alias = "packet-size")]
    packet_size: Option<String>,
    #[arg(long)]
    duration: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "t1_ms", alias = "t1-ms")]
    t1_ms: Option<String>,
    #[arg(long = "k_r", alias = "k-r")]
    k_r: Option<String>,
    #[arg(long = "k_m", alias = "k-m")]
    k_m: Option<String>,
    #[arg(long = "delta_match", alias = "delta-match")]
    delta_match: Option<String>,
    #[arg(long = "ratio_cap", alias = "ratio-cap")]
    ratio_cap: Option<String>,
    #[arg(long = "warmup_packets", alias = "warmup-packets")]
    warmup_packets: Option<String>,
    #[arg(long = "link_delay_ms", alias = "link-delay-ms")]
    link_delay_ms: Option<String>,
    #[arg(long = "link_jitter_ms", alias = "link-jitter-ms")]
    link_jitter_ms: Option<String>,
    #[arg(long = "link_loss", alias = "link-loss")]
    link_loss: Option<String>,
}

impl KeyFlags {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("nodes", &self.nodes),
            ("area_side", &self.area_side),
            ("radio_range", &self.radio_range),
            ("blackholes", &self.blackholes),
            ("colluding_pairs", &self.colluding_pairs),
            ("scheme", &self.scheme),
            ("flows", &self.flows),
            ("packet_rate", &self.packet_rate),
            ("packet_size", &self.packet_size),
            ("duration", &self.duration),
            ("seed", &self.seed),
            ("t1_ms", &self.t1_ms),
            ("k_r", &self.k_r),
            ("k_m", &self.k_m),
            ("delta_match", &self.delta_match),
            ("ratio_cap", &self.ratio_cap),
            ("warmup_packets", &self.warmup_packets),
            ("link_delay_ms", &self.link_delay_ms),
            ("link_jitter_ms", &self.link_jitter_ms),
            ("link_loss", &self.link_loss),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

enum Failure {
    Config(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Run(_) => 2,
        }
    }
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let base = match &common.config {
        Some(path) => ScenarioConfig::from_file(path),
        None => Ok(ScenarioConfig::default()),
    };
    base.and_then(|cfg| cfg.with_overrides(common.keys.pairs())).map_err(|e| Failure::Config(e.to_string()))
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_failures(records: &[RunRecord]) -> Result<(), Failure> {
    let failed: Vec<&RunRecord> = records.iter().filter(|r| r.is_failed()).collect();
    if failed.is_empty() {
        return Ok(());
    }
    for r in &failed {
        eprintln!(
            "run failed: scheme={} blackholes={} seed={}: {}",
            r.scheme,
            r.blackholes,
            r.seed,
            r.failure.as_deref().unwrap_or("unknown")
        );
    }
    Err(Failure::Run(format!("{} of {} runs failed", failed.len(), records.len())))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { common } => {
            let cfg = load(&common)?;
            let record = experiment::run_record(&cfg, &common.scenario);
            emit(&experiment::render_csv(std::slice::from_ref(&record)), &common.out)?;
            check_failures(std::slice::from_ref(&record))
        }
        Command::Sweep { common, max_blackholes, seeds, schemes } => {
            let cfg = load(&common)?;
            if seeds.count == 0 {
                return Err(Failure::Config("seeds: at least one seed is required".into()));
            }
            if schemes.is_empty() {
                return Err(Failure::Config("schemes: at least one scheme is required".into()));
            }
            let counts: Vec<usize> = (0..=max_blackholes).collect();
            let records = experiment::sweep(&cfg, &common.scenario, &counts, &seeds.list(), &schemes);
            emit(&experiment::render_sweep_csv(&records), &common.out)?;
            check_failures(&records)
        }
        Command::Compare { common, seeds } => {
            let cfg = load(&common)?;
            if seeds.count == 0 {
                return Err(Failure::Config("seeds: at least one seed is required".into()));
            }
            let records = experiment::compare(&cfg, &common.scenario, &seeds.list());
            emit(&experiment::render_sweep_csv(&records), &common.out)?;
            check_failures(&records)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Config(m) => format!("config error: {m}"),
                Failure::Run(m) => format!("run failure: {m}"),
            };
            eprintln!("relsim: {msg}");
            ExitCode::from(f.code())
        }
    }
}
