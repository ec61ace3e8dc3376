//! Request-replay simulation: a greedy dispatcher probes every worker with one insertion
//! operator per request, commits the cheapest insertion and records per-request metrics.

mod bench;
mod io;

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use bench::{
    loglog_slope, run_benchmark_suite, scaling_benchmark, scaling_instance, space_measurement, ScalingConfig,
    ScalingPoint, SpacePoint, Sweep, SweepRow,
};
pub use io::{read_requests, read_workers, write_metrics, write_sweep_csv, MetricsRow};

use crate::insertion::{self, Algorithm, InsertionOutcome};
use crate::routestate::{
    prepare_route, verify_route, PreparedRoute, Request, RequestBook, Route, RouteError, StopRole, Violation, Worker,
    WorkerId,
};
use crate::tdgraph::{generate_synthetic, load_network, GraphError, LoadOptions, SyntheticConfig, TdGraph, VertexId};
use crate::tdsp::{earliest_arrivals_from, ProfileMode, QueryCounter};
use crate::EPS;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("worker {worker} holds an infeasible route after serving request {request}: {violations:?}")]
    Unsound {
        request: u32,
        worker: WorkerId,
        violations: Vec<Violation>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    File(PathBuf),
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub worker_count: usize,
    pub capacity: u32,
    /// Deadline minus release time, in minutes.
    pub window_min: f64,
    pub request_count: usize,
    pub seed: u64,
    pub network: NetworkSource,
    /// Release times are drawn uniformly from this interval (seconds of the day).
    pub release_window: (f64, f64),
    /// Each insertion is timed this many times and the median kept.
    pub timing_repeats: usize,
    /// Re-verify every committed route from scratch.
    pub verify_commits: bool,
    pub profile_mode: ProfileMode,
    pub requests_file: Option<PathBuf>,
    pub workers_file: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Linear,
            worker_count: 20,
            capacity: 5,
            window_min: 15.0,
            request_count: 200,
            seed: 1,
            network: NetworkSource::Synthetic(SyntheticConfig::new(200, 3.0, 6, 1)),
            release_window: (28_800.0, 64_800.0),
            timing_repeats: 5,
            verify_commits: true,
            profile_mode: ProfileMode::Exact,
            requests_file: None,
            workers_file: None,
            metrics_out: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.worker_count == 0 && self.workers_file.is_none() {
            return bad("worker count must be at least 1");
        }
        if self.capacity == 0 {
            return bad("capacity must be at least 1");
        }
        if !(self.window_min > 0.0) || !self.window_min.is_finite() {
            return bad("deadline window must be positive");
        }
        if self.request_count == 0 && self.requests_file.is_none() {
            return bad("request count must be at least 1");
        }
        if self.timing_repeats == 0 {
            return bad("timing repeats must be at least 1");
        }
        let (lo, hi) = self.release_window;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("release window must be a finite interval");
        }
        if let NetworkSource::Synthetic(s) = &self.network {
            if s.vertices < 2 {
                return bad("synthetic network needs at least two vertices");
            }
        }
        Ok(())
    }
}

/// Per-request metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub request_id: u32,
    pub algorithm: Algorithm,
    pub assigned_worker: Option<WorkerId>,
    /// Increase in the assigned worker's final arrival time.
    pub objective_delta: Option<f64>,
    pub point_queries: u64,
    /// Sum over probed workers of the median insertion time.
    pub insertion_ns: u64,
    /// Insertion time plus route preparation and commit.
    pub response_ns: u64,
    /// Breakpoints held in compound functions across all workers while probing.
    pub compound_breakpoints: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimSummary {
    pub total: usize,
    pub served: usize,
    pub rejected: usize,
    pub served_ratio: f64,
    pub total_point_queries: u64,
    pub mean_point_queries: f64,
    pub mean_insertion_ns: f64,
    pub mean_response_ns: f64,
    pub peak_compound_breakpoints: usize,
    /// Profile queries spent building leg functions (amortized across probes).
    pub profile_queries: u64,
    pub verified_commits: usize,
}

impl SimSummary {
    fn from_records(records: &[MetricsRecord], profile_queries: u64, verified_commits: usize) -> Self {
        let total = records.len();
        let served = records.iter().filter(|r| r.assigned_worker.is_some()).count();
        let mean = |f: &dyn Fn(&MetricsRecord) -> f64| {
            if total == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / total as f64
            }
        };
        let total_point_queries = records.iter().map(|r| r.point_queries).sum();
        Self {
            total,
            served,
            rejected: total - served,
            served_ratio: if total == 0 { 0.0 } else { served as f64 / total as f64 },
            total_point_queries,
            mean_point_queries: mean(&|r| r.point_queries as f64),
            mean_insertion_ns: mean(&|r| r.insertion_ns as f64),
            mean_response_ns: mean(&|r| r.response_ns as f64),
            peak_compound_breakpoints: records.iter().map(|r| r.compound_breakpoints).max().unwrap_or(0),
            profile_queries,
            verified_commits,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub records: Vec<MetricsRecord>,
    pub summary: SimSummary,
    pub workers: Vec<Worker>,
    pub book: RequestBook,
}

impl SimResult {
    /// `(request, worker)` in processing order.
    pub fn assignments(&self) -> Vec<(u32, Option<WorkerId>)> {
        self.records.iter().map(|r| (r.request_id, r.assigned_worker)).collect()
    }
}

/// Loads or generates the network, workers and requests, runs the replay and writes
/// the metrics file when one is configured.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let g = match &cfg.network {
        NetworkSource::File(p) => load_network(p, LoadOptions::default())?,
        NetworkSource::Synthetic(s) => generate_synthetic(s),
    };
    let workers = match &cfg.workers_file {
        Some(p) => read_workers(p, cfg.release_window.0)?,
        None => generate_workers(&g, cfg.worker_count, cfg.capacity, cfg.release_window.0, cfg.seed),
    };
    let requests = match &cfg.requests_file {
        Some(p) => read_requests(p)?,
        None => generate_requests(&g, cfg.request_count, cfg.window_min * 60.0, cfg.release_window, cfg.seed),
    };
    let result = simulate(&g, workers, requests, cfg)?;
    if let Some(path) = &cfg.metrics_out {
        write_metrics(path, &result)?;
    }
    Ok(result)
}

/// Workers at seeded-random vertices, idle from `start_time`.
pub fn generate_workers(g: &TdGraph, count: usize, capacity: u32, start_time: f64, seed: u64) -> Vec<Worker> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5745_524b);
    (0..count)
        .map(|id| {
            let v = rng.gen_range(0..g.vertex_count()) as VertexId;
            Worker::new(id as WorkerId, v, capacity.max(1), start_time).expect("capacity is positive")
        })
        .collect()
}

/// Seeded request stream sorted by release time; ids follow that order.
pub fn generate_requests(
    g: &TdGraph,
    count: usize,
    window_s: f64,
    release_window: (f64, f64),
    seed: u64,
) -> Vec<Request> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5245_5155);
    let n = g.vertex_count();
    let mut raw = Vec::with_capacity(count);
    let mut reach: Vec<Option<Vec<f64>>> = vec![None; n];
    while raw.len() < count {
        let o = rng.gen_range(0..n);
        let d = rng.gen_range(0..n);
        let release = if release_window.0 < release_window.1 {
            rng.gen_range(release_window.0..release_window.1)
        } else {
            release_window.0
        };
        if o == d {
            continue;
        }
        let arrivals = reach[o].get_or_insert_with(|| earliest_arrivals_from(g, o as VertexId, release_window.0));
        if !arrivals[d].is_finite() {
            continue;
        }
        raw.push((release, o as VertexId, d as VertexId));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    raw.into_iter()
        .enumerate()
        .map(|(id, (release, o, d))| Request {
            id: id as u32,
            origin: o,
            destination: d,
            release_time: release,
            deadline: release + window_s,
            passengers: 1,
        })
        .collect()
}

/// Drops the stops a worker has already passed by `now`. The stop it is driving
/// towards is kept as the new start, since the worker cannot turn around mid-edge.
/// Returns `None` when nothing changes.
pub fn advance_route(route: &Route, arrivals: &[f64], now: f64, book: &RequestBook) -> Result<Option<Route>, RouteError> {
    if arrivals[0] > now {
        return Ok(None);
    }
    let n = route.n();
    let k = (1..=n).find(|&k| arrivals[k] > now).unwrap_or(n);
    if k == 0 {
        // Idle at the start vertex: time simply moves on.
        if route.start_time >= now {
            return Ok(None);
        }
        let mut r = route.clone();
        r.start_time = now;
        return Ok(Some(r));
    }
    let mut onboard = route.onboard.clone();
    for s in &route.stops[1..=k] {
        match s.role {
            StopRole::Pickup(id) => {
                book.get(id)?;
                onboard.push(id);
            }
            StopRole::Dropoff(id) => onboard.retain(|&x| x != id),
            StopRole::Start => {}
        }
    }
    let mut stops = route.stops[k..].to_vec();
    stops[0].role = StopRole::Start;
    Ok(Some(Route {
        stops,
        start_time: arrivals[k].max(now),
        onboard,
    }))
}

/// Cached per-worker state, rebuilt whenever the route changes.
struct Slot {
    worker: Worker,
    arrivals: Option<Vec<f64>>,
    prepared: Option<PreparedRoute>,
}

impl Slot {
    fn invalidate(&mut self) {
        self.arrivals = None;
        self.prepared = None;
    }

    fn arrivals(&mut self, g: &TdGraph) -> Result<&[f64], RouteError> {
        if self.arrivals.is_none() {
            let a = self.worker.route.arrivals(g, &mut QueryCounter::new())?;
            self.arrivals = Some(a);
        }
        Ok(self.arrivals.as_deref().expect("just filled"))
    }

    fn end_time(&self) -> f64 {
        *self.arrivals.as_ref().and_then(|a| a.last()).expect("arrivals are cached before probing")
    }
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Replays `requests` in release order against `workers`.
pub fn simulate(
    g: &TdGraph,
    workers: Vec<Worker>,
    mut requests: Vec<Request>,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    requests.sort_by(|a, b| a.release_time.total_cmp(&b.release_time).then(a.id.cmp(&b.id)));
    let mut slots: Vec<Slot> = workers
        .into_iter()
        .map(|worker| Slot {
            worker,
            arrivals: None,
            prepared: None,
        })
        .collect();
    slots.sort_by_key(|s| s.worker.id);
    let mut book = RequestBook::new();
    let mut records = Vec::with_capacity(requests.len());
    let mut prep_counter = QueryCounter::new();
    let mut verified = 0;
    let mode = cfg.algorithm.compound_mode();

    for r in &requests {
        let now = r.release_time;
        book.insert(*r);

        let prep_start = Instant::now();
        for slot in &mut slots {
            let arrivals = slot.arrivals(g)?.to_vec();
            if let Some(next) = advance_route(&slot.worker.route, &arrivals, now, &book)? {
                slot.worker.route = next;
                slot.invalidate();
                slot.arrivals(g)?;
            }
            if let (Some(m), None) = (mode, &slot.prepared) {
                slot.prepared = Some(prepare_route(&slot.worker.route, g, &book, m, cfg.profile_mode, &mut prep_counter)?);
            }
        }
        let prep_ns = prep_start.elapsed().as_nanos() as u64;
        let compound_breakpoints = slots
            .iter()
            .filter_map(|s| s.prepared.as_ref())
            .map(PreparedRoute::breakpoints)
            .sum();

        let mut point_queries = 0;
        let mut insertion_ns = 0;
        let mut best: Option<(f64, usize, InsertionOutcome)> = None;
        for (idx, slot) in slots.iter().enumerate() {
            let mut counter = QueryCounter::new();
            let probe = |c: &mut QueryCounter| {
                insertion::insert(cfg.algorithm, &slot.worker, &book, slot.prepared.as_ref(), r, g, c)
            };
            let out = probe(&mut counter)?;
            let mut times = vec![out.elapsed_ns];
            for _ in 1..cfg.timing_repeats {
                times.push(probe(&mut QueryCounter::new())?.elapsed_ns);
            }
            point_queries += counter.point_queries;
            insertion_ns += median(times);
            if out.feasible {
                let delta = out.objective - slot.end_time();
                if best.as_ref().map_or(true, |(b, _, _)| delta < b - EPS) {
                    best = Some((delta, idx, out));
                }
            }
        }

        let commit_start = Instant::now();
        let (assigned_worker, objective_delta) = match best {
            Some((delta, idx, out)) => {
                let slot = &mut slots[idx];
                slot.worker.route = out.new_route.expect("feasible outcomes carry a route");
                slot.invalidate();
                if cfg.verify_commits {
                    let report = verify_route(&slot.worker.route, g, &book, &slot.worker);
                    if !report.is_feasible() {
                        return Err(SimError::Unsound {
                            request: r.id,
                            worker: slot.worker.id,
                            violations: report.violations,
                        });
                    }
                    verified += 1;
                }
                (Some(slot.worker.id), Some(delta))
            }
            None => (None, None),
        };
        let commit_ns = commit_start.elapsed().as_nanos() as u64;

        records.push(MetricsRecord {
            request_id: r.id,
            algorithm: cfg.algorithm,
            assigned_worker,
            objective_delta,
            point_queries,
            insertion_ns,
            response_ns: insertion_ns + prep_ns + commit_ns,
            compound_breakpoints,
        });
    }

    let summary = SimSummary::from_records(&records, prep_counter.profile_queries, verified);
    Ok(SimResult {
        records,
        summary,
        workers: slots.into_iter().map(|s| s.worker).collect(),
        book,
    })
}

/// Picks `count` distinct vertices, used by tests and benchmarks that need spread-out stops.
pub fn sample_vertices(g: &TdGraph, count: usize, rng: &mut impl Rng) -> Vec<VertexId> {
    let mut all: Vec<VertexId> = (0..g.vertex_count() as VertexId).collect();
    all.shuffle(rng);
    all.truncate(count);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::PwlFunction;
    use crate::DAY;

    fn small_config(alg: Algorithm) -> SimConfig {
        SimConfig {
            algorithm: alg,
            worker_count: 4,
            capacity: 3,
            window_min: 30.0,
            request_count: 25,
            seed: 9,
            network: NetworkSource::Synthetic(SyntheticConfig::new(40, 3.0, 4, 9)),
            timing_repeats: 1,
            ..SimConfig::default()
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = SimConfig::default();
        c.capacity = 0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.window_min = 0.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.worker_count = 0;
        assert!(c.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn singleton_is_served() {
        let g = TdGraph::from_edges(
            2,
            vec![
                (0, 1, PwlFunction::constant(60.0, 0.0, DAY)),
                (1, 0, PwlFunction::constant(60.0, 0.0, DAY)),
            ],
        );
        let w = Worker::new(0, 0, 2, 0.0).unwrap();
        let r = Request::new(0, 0, 1, 100.0, 1_000.0, 1).unwrap();
        let res = simulate(&g, vec![w], vec![r], &small_config(Algorithm::Linear)).unwrap();
        assert_eq!(res.summary.served_ratio, 1.0);
        assert_eq!(res.records[0].assigned_worker, Some(0));
        assert_eq!(res.records[0].objective_delta, Some(60.0));
    }

    #[test]
    fn hopeless_window_is_rejected() {
        let g = TdGraph::from_edges(
            2,
            vec![
                (0, 1, PwlFunction::constant(60.0, 0.0, DAY)),
                (1, 0, PwlFunction::constant(60.0, 0.0, DAY)),
            ],
        );
        let w = Worker::new(0, 0, 2, 0.0).unwrap();
        let r = Request::new(0, 0, 1, 100.0, 100.001, 1).unwrap();
        for alg in Algorithm::ALL {
            let res = simulate(&g, vec![w.clone()], vec![r], &small_config(alg)).unwrap();
            assert_eq!(res.summary.rejected, 1);
            assert_eq!(res.records[0].assigned_worker, None);
        }
    }

    #[test]
    fn advance_freezes_next_stop() {
        let r1 = Request::new(1, 1, 2, 0.0, 1_000.0, 1).unwrap();
        let r2 = Request::new(2, 3, 4, 0.0, 1_000.0, 1).unwrap();
        let book: RequestBook = [r1, r2].into_iter().collect();
        let mut route = Route::new(0, 0.0);
        route.push_pickup(&r1).push_pickup(&r2).push_dropoff(&r1).push_dropoff(&r2);
        let arr = [0.0, 10.0, 20.0, 30.0, 40.0];
        let next = advance_route(&route, &arr, 15.0, &book).unwrap().unwrap();
        // Past o1; heading to o2, which becomes the start.
        assert_eq!(next.stops.len(), 3);
        assert_eq!(next.stops[0].vertex, 3);
        assert_eq!(next.stops[0].role, StopRole::Start);
        assert_eq!(next.start_time, 20.0);
        assert_eq!(next.onboard, vec![1, 2]);
        let done = advance_route(&route, &arr, 100.0, &book).unwrap().unwrap();
        assert_eq!(done.n(), 0);
        assert_eq!(done.stops[0].vertex, 4);
        assert_eq!(done.start_time, 100.0);
        assert!(done.onboard.is_empty());
        assert!(advance_route(&route, &arr, -1.0, &book).unwrap().is_none());
    }

    #[test]
    fn replay_is_deterministic_and_sound() {
        let a = run_simulation(&small_config(Algorithm::Linear)).unwrap();
        let b = run_simulation(&small_config(Algorithm::Linear)).unwrap();
        assert_eq!(a.assignments(), b.assignments());
        assert_eq!(a.summary.served + a.summary.rejected, 25);
        assert_eq!(a.summary.verified_commits, a.summary.served);
        for r in &a.records {
            assert!(r.response_ns >= r.insertion_ns);
        }
        let c = run_simulation(&small_config(Algorithm::Cubic)).unwrap();
        assert_eq!(a.assignments(), c.assignments());
    }
}
