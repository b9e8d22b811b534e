//! Experiment runner.
//!
//! Exit codes: 0 success, 1 runtime or output failure, 2 unreadable or
//! invalid scenario (and usage errors), 3 invariant violated during a run,
//! 4 an experiment finished with failing checks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use twoscale::experiments::{reproduce, ExperimentError, EXPERIMENTS};
use twoscale::icn::{bpsr_delay_bounds, IcnError};
use twoscale::mobility::reference_lp_solve;
use twoscale::scenario::{Model, RunOutput, ScenarioConfig, ScenarioDoc, ScenarioError};
use twoscale::sim::metrics::{sinks_to_csv, MetricsError};
use twoscale::sim::{MetricsSink, Record};
use twoscale::tcp::{
    rate_function_lprime, solve_beta, steady_state_oracle, throughput_lower_bound, BetaSolution,
};

#[derive(Parser)]
#[command(name = "twoscale", version, about = "Slotted network simulations and their reference oracles")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate one scenario and write metrics.csv and summary.csv.
    Run(ScenarioArgs),
    /// One run per value of a key, each in its own subdirectory.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Dotted key to vary, e.g. tcp.paths.
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Evaluate the analytic reference for a scenario.
    Oracle {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Marking headroom for the TCP bounds.
        #[arg(long, default_value_t = 1.1)]
        rho: f64,
    },
    /// Run a named experiment and score it; `all` runs every one.
    Reproduce {
        id: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory for the experiment's metrics.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replaces run.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{0} experiment(s) failed")]
    Failed(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        let scenario = match self {
            CliError::Scenario(e) => e,
            CliError::Experiment(ExperimentError::Scenario(e)) => e,
            CliError::Experiment(ExperimentError::Unknown { .. }) | CliError::Usage(_) => return 2,
            CliError::Failed(_) => return 4,
            _ => return 1,
        };
        match scenario {
            e if e.invariant().is_some() => 3,
            ScenarioError::Metrics(_) => 1,
            _ => 2,
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Scenario(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Scenario(s) | CliError::Experiment(ExperimentError::Scenario(s)) if s.invariant().is_some() => {
                    let (slot, what) = s.invariant().expect("checked");
                    eprintln!("error: invariant violated at slot {slot}: {what}");
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(verb: Verb) -> Result<(), CliError> {
    match verb {
        Verb::Run(args) => {
            let cfg = load(&args, &[])?;
            let out = cfg.run()?;
            write_run(&args.out, &out)?;
            print_summary(&out.summary);
            Ok(())
        }
        Verb::Sweep { scenario, key, values, parallel } => sweep(&scenario, &key, &values, parallel),
        Verb::Oracle { scenario, rho } => oracle(&load(&scenario, &[])?, rho, &scenario.out),
        Verb::Reproduce { id, seed, out } => {
            let ids: Vec<&str> = if id == "all" { EXPERIMENTS.iter().map(|e| e.0).collect() } else { vec![id.as_str()] };
            let mut failed = 0;
            for id in ids {
                let report = reproduce(id, seed)?;
                print!("{}", report.render());
                if let Some(dir) = &out {
                    write(&dir.join(format!("{id}.csv")), &report.csv())?;
                }
                failed += usize::from(!report.passed());
            }
            if failed > 0 {
                return Err(CliError::Failed(failed));
            }
            Ok(())
        }
        Verb::Validate { scenario, overrides } => {
            let mut doc = ScenarioDoc::load(&scenario)?;
            for (k, v) in split_overrides(&overrides)? {
                doc.set(&k, &v)?;
            }
            let cfg = doc.typed()?;
            cfg.validate()?;
            println!("{}: ok ({} slots, seed {})", scenario.display(), cfg.run.horizon, cfg.run.seed);
            Ok(())
        }
    }
}

fn split_overrides(raw: &[String]) -> Result<Vec<(String, String)>, CliError> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))
        })
        .collect()
}

fn load(args: &ScenarioArgs, extra: &[(String, String)]) -> Result<ScenarioConfig, CliError> {
    let mut doc = ScenarioDoc::load(&args.scenario)?;
    for (k, v) in split_overrides(&args.overrides)?.iter().chain(extra) {
        doc.set(k, v)?;
    }
    if let Some(seed) = args.seed {
        doc.set("run.seed", &seed.to_string())?;
    }
    Ok(doc.typed()?)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    let fail = |source| CliError::Output { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    fs::write(path, text).map_err(fail)
}

fn summary_sink(run_id: &str, records: &[Record]) -> Result<MetricsSink, MetricsError> {
    let mut sink = MetricsSink::new(run_id);
    for r in records {
        sink.record(r.t, &r.metric, &r.subject, r.value)?;
    }
    Ok(sink)
}

fn write_run(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    write(&dir.join("metrics.csv"), &out.sink.to_csv())?;
    let summary = summary_sink(out.sink.run_id(), &out.summary)?;
    write(&dir.join("summary.csv"), &summary.to_csv())
}

fn print_summary(records: &[Record]) {
    for r in records {
        println!("{:<26} {:<28} {}", r.metric, r.subject, r.value);
    }
}

fn sweep(args: &ScenarioArgs, key: &str, values: &[String], parallel: usize) -> Result<(), CliError> {
    let base = load(args, &[])?;
    let configs: Vec<(String, ScenarioConfig)> = values
        .iter()
        .map(|v| {
            let tag = format!("{key}={v}");
            let extra = [(key.to_string(), v.clone()), ("run.id".to_string(), format!("{}/{tag}", base.run.id))];
            load(args, &extra).map(|c| (tag, c))
        })
        .collect::<Result<_, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("--parallel: {e}")))?;
    let outputs: Vec<Result<RunOutput, ScenarioError>> =
        pool.install(|| configs.par_iter().map(|(_, cfg)| cfg.run()).collect());
    let mut summaries = Vec::new();
    for ((tag, _), out) in configs.iter().zip(outputs) {
        let out = out?;
        write_run(&args.out.join(tag), &out)?;
        summaries.push(summary_sink(out.sink.run_id(), &out.summary)?);
    }
    let combined = sinks_to_csv(&summaries);
    write(&args.out.join("summary.csv"), &combined)?;
    print!("{combined}");
    Ok(())
}

fn oracle(cfg: &ScenarioConfig, rho: f64, out: &Path) -> Result<(), CliError> {
    let mut sink = MetricsSink::new(format!("{}/oracle", cfg.run.id));
    match &cfg.model {
        Model::Mobility(s) => {
            let net = s.network().map_err(ScenarioError::from)?;
            let flows = s.flows(&net).map_err(ScenarioError::from)?;
            let costs = s.costs(&net).map_err(ScenarioError::from)?;
            let lp = reference_lp_solve(&net, &flows, &costs).map_err(ScenarioError::from)?;
            for (f, flow) in flows.iter().enumerate() {
                for (j, route) in net.routes.iter().enumerate() {
                    if net.pickup_rate(flow.source, j) > 0.0 {
                        let subject = format!(
                            "{}->{}@{}",
                            net.stationaries[flow.source], net.stationaries[flow.dest], route.name
                        );
                        sink.record(0, "lp_split_per_minute", &subject, s.per_minute(lp.splits[f][j]))?;
                    }
                }
            }
            for (j, route) in net.routes.iter().enumerate() {
                sink.record(0, "lp_route_fraction", &route.name, lp.fractions[j])?;
            }
            sink.record(0, "lp_cost", "all", lp.cost)?;
        }
        Model::Tcp(s) => {
            let (m, c) = (s.paths, s.per_path_capacity() as f64);
            let profile = &s.channel;
            let beta = match solve_beta(m, c, rho, profile).map_err(ScenarioError::from)? {
                BetaSolution::Root(b) => b,
                BetaSolution::NoDiversity => f64::NAN,
                BetaSolution::FullDiversity => f64::INFINITY,
            };
            sink.record(0, "beta", "all", beta)?;
            let bound = throughput_lower_bound(m, c, rho, profile, 0.0, 0.0).map_err(ScenarioError::from)?;
            sink.record(0, "throughput_lower_bound", "all", bound)?;
            sink.record(0, "lprime_at_mean_loss", "all", rate_function_lprime(1.0 - profile.mean(), profile))?;
            // window chain with a constant mark rate equal to the mean loss
            let loss = 1.0 - profile.mean();
            let w_max = s.w_max.unwrap_or(4 * s.capacity).max(2);
            let ss = steady_state_oracle(|_| loss, w_max).map_err(ScenarioError::from)?;
            sink.record(0, "steady_state_mean_window", "all", ss.mean)?;
        }
        Model::Icn(s) => {
            let topo = twoscale::sim::build_topology(&s.topology).map_err(|e| ScenarioError::from(IcnError::from(e)))?;
            for (c, cluster) in topo.clusters().iter().enumerate() {
                let size = cluster.nodes.len();
                if size >= 2 {
                    let (lo, hi) = bpsr_delay_bounds(size, s.super_slot, 0.2, 0.05).map_err(ScenarioError::from)?;
                    let subject = format!("cluster{}", c + 1);
                    sink.record(0, "bp_pickup_delay_lower_bound", &subject, lo)?;
                    sink.record(0, "bpsr_pickup_delay_upper_bound", &subject, hi)?;
                }
            }
        }
    }
    write(&out.join("oracle.csv"), &sink.to_csv())?;
    print_summary(sink.records());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use twoscale::tcp::TcpError;

    #[test]
    fn exit_codes() {
        let invariant = TcpError::Invariant { slot: 7, what: "window 0 outside [1, 9]".into() };
        assert_eq!(CliError::Scenario(ScenarioError::Tcp(invariant)).code(), 3);
        assert_eq!(CliError::Scenario(ScenarioError::Parse("x".into())).code(), 2);
        assert_eq!(CliError::Usage("x".into()).code(), 2);
        assert_eq!(CliError::Failed(1).code(), 4);
    }
}
