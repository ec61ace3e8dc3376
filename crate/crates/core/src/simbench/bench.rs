//! Parameter sweeps over the simulator, the single-route scaling micro-benchmark and
//! the compound-storage measurement.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{run_simulation, sample_vertices, SimConfig, SimError};
use crate::insertion::{self, Algorithm};
use crate::routestate::{prepare_route, CompoundMode, Request, RequestBook, Worker};
use crate::tdgraph::{generate_synthetic, SyntheticConfig, TdGraph, VertexId};
use crate::tdsp::{earliest_arrival, ProfileMode, QueryCounter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Capacity,
    Window,
    Requests,
    Workers,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Capacity => "capacity",
            Sweep::Window => "window",
            Sweep::Requests => "requests",
            Sweep::Workers => "workers",
        }
    }

    /// Desk-scale grid; the middle value of each matches [`SimConfig::default`].
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Sweep::Capacity => vec![3.0, 5.0, 10.0, 15.0, 20.0],
            Sweep::Window => vec![10.0, 15.0, 20.0, 25.0, 30.0],
            Sweep::Requests => vec![100.0, 200.0, 300.0, 400.0, 500.0],
            Sweep::Workers => vec![10.0, 20.0, 30.0, 40.0, 50.0],
        }
    }

    pub fn apply(self, cfg: &mut SimConfig, value: f64) {
        match self {
            Sweep::Capacity => cfg.capacity = value as u32,
            Sweep::Window => cfg.window_min = value,
            Sweep::Requests => cfg.request_count = value as usize,
            Sweep::Workers => cfg.worker_count = value as usize,
        }
    }
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "capacity" => Ok(Sweep::Capacity),
            "window" => Ok(Sweep::Window),
            "requests" => Ok(Sweep::Requests),
            "workers" => Ok(Sweep::Workers),
            other => Err(format!("unknown sweep `{other}`")),
        }
    }
}

/// Aggregate of one simulation run within a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep: String,
    pub value: f64,
    pub algorithm: String,
    pub requests: usize,
    pub served: usize,
    pub served_ratio: f64,
    pub mean_point_queries: f64,
    pub mean_insertion_ns: f64,
    pub mean_response_ns: f64,
    pub peak_compound_breakpoints: usize,
}

/// Runs every algorithm at every `values` entry of `sweep`, other parameters from `base`.
pub fn run_benchmark_suite(sweep: Sweep, base: &SimConfig, values: &[f64]) -> Result<Vec<SweepRow>, SimError> {
    let mut rows = Vec::with_capacity(values.len() * 3);
    for &value in values {
        for alg in Algorithm::ALL {
            let mut cfg = base.clone();
            cfg.algorithm = alg;
            cfg.metrics_out = None;
            sweep.apply(&mut cfg, value);
            let s = run_simulation(&cfg)?.summary;
            rows.push(SweepRow {
                sweep: sweep.name().to_string(),
                value,
                algorithm: alg.name().to_string(),
                requests: s.total,
                served: s.served,
                served_ratio: s.served_ratio,
                mean_point_queries: s.mean_point_queries,
                mean_insertion_ns: s.mean_insertion_ns,
                mean_response_ns: s.mean_response_ns,
                peak_compound_breakpoints: s.peak_compound_breakpoints,
            });
        }
    }
    Ok(rows)
}

/// Single worker whose route holds `n` stops (`n / 2` back-to-back pickup/dropoff pairs
/// at random vertices, starting at `start_time`); each deadline is the planned dropoff
/// time plus `slack` seconds.
pub fn scaling_instance(g: &TdGraph, n: usize, slack: f64, start_time: f64, seed: u64) -> (Worker, RequestBook) {
    assert!(n % 2 == 0, "stop count must be even");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..g.vertex_count()) as VertexId;
    let mut w = Worker::new(0, start, 3, start_time).expect("positive capacity");
    let mut book = RequestBook::new();
    let mut at = start;
    let mut t = start_time;
    let pick_vertex = |rng: &mut ChaCha8Rng, not: VertexId| loop {
        let v = rng.gen_range(0..g.vertex_count()) as VertexId;
        if v != not {
            break v;
        }
    };
    for id in 0..(n / 2) as u32 {
        let o = pick_vertex(&mut rng, at);
        let d = pick_vertex(&mut rng, o);
        t = earliest_arrival(g, at, o, t).expect("strongly connected network");
        t = earliest_arrival(g, o, d, t).expect("strongly connected network");
        let r = Request::new(id, o, d, start_time, t + slack, 1).expect("valid request");
        w.route.push_pickup(&r).push_dropoff(&r);
        book.insert(r);
        at = d;
    }
    (w, book)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub network: SyntheticConfig,
    pub sizes: Vec<usize>,
    /// New requests timed per route size.
    pub probes: usize,
    pub repeats: usize,
    pub slack: f64,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            network: SyntheticConfig::new(120, 2.5, 4, 11),
            sizes: vec![4, 8, 16, 32, 64],
            probes: 2,
            repeats: 3,
            slack: 4.0 * 3_600.0,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub n: usize,
    pub algorithm: Algorithm,
    /// Mean over probes of the median insertion time.
    pub insertion_ns: f64,
    pub mean_point_queries: f64,
    pub compound_breakpoints: usize,
}

/// Times each operator on single routes of growing length.
pub fn scaling_benchmark(cfg: &ScalingConfig) -> Result<Vec<ScalingPoint>, SimError> {
    let g = generate_synthetic(&cfg.network);
    let start_time = 30_600.0;
    let mut out = Vec::new();
    for &n in &cfg.sizes {
        let (w, book) = scaling_instance(&g, n, cfg.slack, start_time, cfg.seed ^ n as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(n as u64));
        let probes: Vec<Request> = (0..cfg.probes)
            .map(|k| {
                let v = sample_vertices(&g, 2, &mut rng);
                Request::new(1_000_000 + k as u32, v[0], v[1], start_time, start_time + 2.0 * crate::DAY, 1)
                    .expect("distinct vertices")
            })
            .collect();
        for alg in Algorithm::ALL {
            let prepared = match alg.compound_mode() {
                Some(m) => Some(prepare_route(&w.route, &g, &book, m, ProfileMode::Exact, &mut QueryCounter::new())?),
                None => None,
            };
            let mut total_ns = 0.0;
            let mut total_q = 0;
            for r in &probes {
                let mut times = Vec::with_capacity(cfg.repeats.max(1));
                for rep in 0..cfg.repeats.max(1) {
                    let mut c = QueryCounter::new();
                    let o = insertion::insert(alg, &w, &book, prepared.as_ref(), r, &g, &mut c)?;
                    if rep == 0 {
                        total_q += o.point_queries_used;
                    }
                    times.push(o.elapsed_ns);
                }
                times.sort_unstable();
                total_ns += times[times.len() / 2] as f64;
            }
            out.push(ScalingPoint {
                n,
                algorithm: alg,
                insertion_ns: total_ns / probes.len().max(1) as f64,
                mean_point_queries: total_q as f64 / probes.len().max(1) as f64,
                compound_breakpoints: prepared.as_ref().map_or(0, |p| p.breakpoints()),
            });
        }
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpacePoint {
    pub n: usize,
    pub mode: CompoundMode,
    pub functions: usize,
    pub breakpoints: usize,
}

/// Compound storage of both layouts on scaling instances of each size in `sizes`.
pub fn space_measurement(g: &TdGraph, sizes: &[usize], slack: f64, seed: u64) -> Result<Vec<SpacePoint>, SimError> {
    let mut out = Vec::new();
    for &n in sizes {
        let (w, book) = scaling_instance(g, n, slack, 30_600.0, seed ^ n as u64);
        for mode in [CompoundMode::AllPairs, CompoundMode::LegAndTail] {
            let p = prepare_route(&w.route, g, &book, mode, ProfileMode::Exact, &mut QueryCounter::new())?;
            out.push(SpacePoint {
                n,
                mode,
                functions: p.function_count(),
                breakpoints: p.breakpoints(),
            });
        }
    }
    Ok(out)
}
