use std::process::{Command, Output};

const HEADER: &str =
    "scenario,scheme,blackholes,seed,throughput_pct,loss_pct,delay_s,mrr,vet_msgs,untrusted_paths,starved_flows";

fn relsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: [&str; 8] = ["--nodes", "14", "--area_side", "300", "--radio_range", "100", "--duration", "2"];

#[test]
fn run_prints_one_row() {
    let mut args = vec!["run", "--scenario", "smoke", "--seed", "4"];
    args.extend(SMALL);
    let o = relsim(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, [HEADER, lines[1]]);
    assert!(lines[1].starts_with("smoke,proposed,0,4,100.000000,0.000000,"));
}

#[test]
fn hyphenated_flags_are_accepted() {
    let o = relsim(&["run", "--nodes", "14", "--area-side", "300", "--radio-range", "100", "--duration", "2"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn config_errors_exit_with_one() {
    assert_eq!(relsim(&["run", "--blackholes", "49"]).status.code(), Some(1));
    assert_eq!(relsim(&["run", "--nodes", "many"]).status.code(), Some(1));
    assert_eq!(relsim(&["run", "--warp", "9"]).status.code(), Some(1));
    assert_eq!(relsim(&["run", "--config", "/nonexistent/relsim.conf"]).status.code(), Some(1));
    assert_eq!(relsim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(relsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_failure_exits_with_two() {
    let o = relsim(&["run", "--nodes", "5", "--area_side", "10000", "--radio_range", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with("NaN,NaN,NaN,NaN,NaN,NaN,NaN"));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    std::fs::write(&conf, "nodes = 14\narea_side = 300\nradio_range = 100\nduration = 2\nscheme = baseline\n").unwrap();
    let conf = conf.to_str().unwrap();
    let o = relsim(&["run", "--config", conf]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("default,baseline,"));
    let o = relsim(&["run", "--config", conf, "--scheme", "undefended"]);
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("default,undefended,"));
}

#[test]
fn sweep_writes_rows_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let mut args = vec!["sweep", "--max-blackholes", "2", "--seeds", "3", "--schemes", "baseline,proposed", "--out"];
    args.push(out.to_str().unwrap());
    args.extend(SMALL);
    let o = relsim(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 1 + 3 * 3 * 2 + 2 * 3 * 2);
    assert!(lines[1].starts_with("default,baseline,0,1,"));
    assert!(lines.last().unwrap().starts_with("summary_ci95,proposed,2,,"));

    let again = dir.path().join("again.csv");
    let slot = args.iter().position(|a| *a == out.to_str().unwrap()).unwrap();
    args[slot] = again.to_str().unwrap();
    assert_eq!(relsim(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn compare_covers_every_scheme() {
    let mut args = vec!["compare", "--blackholes", "2", "--seeds", "2", "--seed-start", "10"];
    args.extend(SMALL);
    let o = relsim(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for scheme in ["baseline", "proposed", "undefended"] {
        for seed in [10, 11] {
            assert!(text.contains(&format!("default,{scheme},2,{seed},")), "{scheme} {seed}");
        }
        assert!(text.contains(&format!("summary_mean,{scheme},2,,")));
    }
}
