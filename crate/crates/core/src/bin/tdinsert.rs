use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tdinsert::insertion::Algorithm;
use tdinsert::simbench::{run_benchmark_suite, run_simulation, write_sweep_csv, NetworkSource, SimConfig, Sweep};
use tdinsert::tdgraph::SyntheticConfig;

#[derive(Parser)]
#[command(name = "tdinsert", version, about = "Insertion operators for time-dependent ridesharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a request stream with one insertion operator.
    Run(RunArgs),
    /// Sweep one parameter for all three operators and write aggregate rows.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct SharedArgs {
    /// Road network file; when absent a synthetic network is generated.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    gen_vertices: usize,
    #[arg(long, default_value_t = 3.0)]
    gen_degree: f64,
    #[arg(long, default_value_t = 6)]
    gen_breakpoints: usize,
    #[arg(long, default_value_t = 20)]
    workers: usize,
    #[arg(long, default_value_t = 5)]
    capacity: u32,
    /// Deadline minus release time.
    #[arg(long, default_value_t = 15.0)]
    window_min: f64,
    #[arg(long, default_value_t = 200)]
    requests: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Timing repeats per insertion (median kept).
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Requests CSV (`id,origin,destination,release_time,deadline,passengers`).
    #[arg(long)]
    requests_file: Option<PathBuf>,
    /// Workers CSV (`id,start_vertex,capacity`).
    #[arg(long)]
    workers_file: Option<PathBuf>,
    /// Skip re-verifying routes after each commit.
    #[arg(long)]
    no_verify: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    algorithm: Algorithm,
    #[command(flatten)]
    shared: SharedArgs,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    sweep: Sweep,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated sweep values; defaults to the built-in grid.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[command(flatten)]
    shared: SharedArgs,
}

fn config(shared: &SharedArgs, algorithm: Algorithm) -> SimConfig {
    let network = match &shared.network {
        Some(p) => NetworkSource::File(p.clone()),
        None => NetworkSource::Synthetic(SyntheticConfig::new(
            shared.gen_vertices,
            shared.gen_degree,
            shared.gen_breakpoints,
            shared.seed,
        )),
    };
    SimConfig {
        algorithm,
        worker_count: shared.workers,
        capacity: shared.capacity,
        window_min: shared.window_min,
        request_count: shared.requests,
        seed: shared.seed,
        network,
        timing_repeats: shared.repeats,
        verify_commits: !shared.no_verify,
        requests_file: shared.requests_file.clone(),
        workers_file: shared.workers_file.clone(),
        ..SimConfig::default()
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let mut cfg = config(&args.shared, args.algorithm);
            cfg.metrics_out = args.metrics_out;
            let res = run_simulation(&cfg).context("simulation failed")?;
            let s = &res.summary;
            println!(
                "{}: served {}/{} ({:.1}%), mean queries {:.1}, mean insertion {:.0} ns, mean response {:.0} ns, peak breakpoints {}",
                cfg.algorithm,
                s.served,
                s.total,
                100.0 * s.served_ratio,
                s.mean_point_queries,
                s.mean_insertion_ns,
                s.mean_response_ns,
                s.peak_compound_breakpoints
            );
        }
        Command::Bench(args) => {
            let values = if args.values.is_empty() {
                args.sweep.default_values()
            } else {
                args.values
            };
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                bail!("sweep values must be positive");
            }
            let base = config(&args.shared, Algorithm::Linear);
            let rows = run_benchmark_suite(args.sweep, &base, &values).context("benchmark failed")?;
            write_sweep_csv(&args.out, &rows).with_context(|| format!("writing {}", args.out.display()))?;
            for r in &rows {
                println!(
                    "{}={} {:>9}: served {}/{}, queries {:.1}, insertion {:.0} ns",
                    r.sweep, r.value, r.algorithm, r.served, r.requests, r.mean_point_queries, r.mean_insertion_ns
                );
            }
        }
    }
    Ok(())
}
