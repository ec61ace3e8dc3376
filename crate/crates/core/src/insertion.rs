//! Insertion operators. Each finds the positions `(i, j)` at which to insert a new
//! request's origin and destination into a worker's route so that the arrival time at
//! the final stop is minimized while every constraint still holds.
//!
//! Position `i` means "immediately before stop `v_i`" (with `i = n + 1` meaning after the
//! last stop); `1 <= i <= j <= n + 1`. Ties in the objective go to the lexicographically
//! smallest `(i, j)`.

use std::time::Instant;

use crate::routestate::{
    CompoundMode, PreparedRoute, Request, RequestBook, Route, RouteError, StopRole, Worker,
};
use crate::tdgraph::{TdGraph, VertexId};
use crate::tdsp::{self, QueryCounter};
use crate::EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Cubic,
    Quadratic,
    Linear,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Cubic, Algorithm::Quadratic, Algorithm::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cubic => "cubic",
            Algorithm::Quadratic => "quadratic",
            Algorithm::Linear => "linear",
        }
    }

    /// Compound layout the operator reads, if any.
    pub fn compound_mode(self) -> Option<CompoundMode> {
        match self {
            Algorithm::Cubic => None,
            Algorithm::Quadratic => Some(CompoundMode::AllPairs),
            Algorithm::Linear => Some(CompoundMode::LegAndTail),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cubic" => Ok(Algorithm::Cubic),
            "quadratic" => Ok(Algorithm::Quadratic),
            "linear" => Ok(Algorithm::Linear),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InsertionOutcome {
    pub feasible: bool,
    pub i_star: usize,
    pub j_star: usize,
    /// Arrival time at the final stop of the new route; infinite when infeasible.
    pub objective: f64,
    pub new_route: Option<Route>,
    pub point_queries_used: u64,
    pub elapsed_ns: u64,
}

impl InsertionOutcome {
    fn finish(best: Best, route: &Route, r: &Request, queries: u64, started: Instant) -> Self {
        let elapsed_ns = started.elapsed().as_nanos() as u64;
        match best.0 {
            Some((objective, i, j)) => Self {
                feasible: true,
                i_star: i,
                j_star: j,
                objective,
                new_route: Some(route.with_insertion(i, j, r)),
                point_queries_used: queries,
                elapsed_ns,
            },
            None => Self {
                feasible: false,
                i_star: 0,
                j_star: 0,
                objective: f64::INFINITY,
                new_route: None,
                point_queries_used: queries,
                elapsed_ns,
            },
        }
    }
}

/// Running minimum with the shared tie rule.
#[derive(Debug, Default)]
struct Best(Option<(f64, usize, usize)>);

impl Best {
    fn offer(&mut self, obj: f64, i: usize, j: usize) {
        let replace = match self.0 {
            None => true,
            Some((b, bi, bj)) => obj < b - EPS || ((obj - b).abs() <= EPS && (i, j) < (bi, bj)),
        };
        if replace {
            self.0 = Some((obj, i, j));
        }
    }
}

fn q(g: &TdGraph, from: VertexId, to: VertexId, t: f64, counter: &mut QueryCounter) -> Option<f64> {
    tdsp::query(g, from, to, t, counter)
}

/// Per-stop constraint data of an existing route, looked up once.
struct StopInfo {
    vertex: VertexId,
    load_delta: i64,
    deadline: f64,
}

fn stop_infos(route: &Route, book: &RequestBook) -> Result<(Vec<StopInfo>, i64), RouteError> {
    let mut out = Vec::with_capacity(route.stops.len());
    for s in &route.stops {
        let (load_delta, deadline) = match s.role {
            StopRole::Start => (0, f64::INFINITY),
            StopRole::Pickup(id) => (book.get(id)?.passengers as i64, f64::INFINITY),
            StopRole::Dropoff(id) => {
                let req = book.get(id)?;
                (-(req.passengers as i64), req.deadline)
            }
        };
        out.push(StopInfo {
            vertex: s.vertex,
            load_delta,
            deadline,
        });
    }
    Ok((out, route.initial_load(book)? as i64))
}

/// Evaluates candidate `(i, j)` by walking the whole new route with point queries.
/// Returns the final arrival time when every constraint holds.
fn cubic_candidate(
    stops: &[StopInfo],
    initial_load: i64,
    capacity: i64,
    start_time: f64,
    r: &Request,
    i: usize,
    j: usize,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> Option<f64> {
    let pickup = StopInfo {
        vertex: r.origin,
        load_delta: r.passengers as i64,
        deadline: f64::INFINITY,
    };
    let dropoff = StopInfo {
        vertex: r.destination,
        load_delta: -(r.passengers as i64),
        deadline: r.deadline,
    };
    let seq = stops[..i]
        .iter()
        .chain(std::iter::once(&pickup))
        .chain(&stops[i..j])
        .chain(std::iter::once(&dropoff))
        .chain(&stops[j..]);

    let mut feasible = initial_load <= capacity;
    let mut reachable = true;
    let mut load = initial_load;
    let mut t = start_time;
    let mut prev: Option<VertexId> = None;
    for s in seq {
        if let Some(p) = prev {
            match q(g, p, s.vertex, t, counter) {
                Some(d) if reachable => t += d,
                _ => reachable = false,
            }
        }
        load += s.load_delta;
        if load > capacity || (reachable && t > s.deadline + EPS) {
            feasible = false;
        }
        prev = Some(s.vertex);
    }
    (feasible && reachable).then_some(t)
}

/// Baseline: every candidate `(i, j)` is rebuilt and its arrivals recomputed from scratch.
pub fn insert_cubic(
    worker: &Worker,
    book: &RequestBook,
    r: &Request,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> Result<InsertionOutcome, RouteError> {
    let started = Instant::now();
    let before = counter.point_queries;
    let route = &worker.route;
    let n = route.n();
    let (stops, initial_load) = stop_infos(route, book)?;
    let cap = worker.capacity as i64;
    let mut best = Best::default();
    for i in 1..=n + 1 {
        for j in i..=n + 1 {
            if let Some(obj) = cubic_candidate(&stops, initial_load, cap, route.start_time, r, i, j, g, counter) {
                best.offer(obj, i, j);
            }
        }
    }
    Ok(InsertionOutcome::finish(best, route, r, counter.point_queries - before, started))
}

/// Cubic evaluation of a single candidate; `None` when infeasible.
pub fn evaluate_candidate_cubic(
    worker: &Worker,
    book: &RequestBook,
    r: &Request,
    i: usize,
    j: usize,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> Result<Option<f64>, RouteError> {
    let (stops, initial_load) = stop_infos(&worker.route, book)?;
    Ok(cubic_candidate(
        &stops,
        initial_load,
        worker.capacity as i64,
        worker.route.start_time,
        r,
        i,
        j,
        g,
        counter,
    ))
}

fn fits(num: u32, r: &Request, capacity: u32) -> bool {
    num as u64 + r.passengers as u64 <= capacity as u64
}

/// Quadratic operator over precomputed `arr`, `latest`, `num` and compound functions.
pub fn insert_quadratic(
    worker: &Worker,
    prepared: &PreparedRoute,
    r: &Request,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> InsertionOutcome {
    let started = Instant::now();
    let before = counter.point_queries;
    let route = &prepared.route;
    let n = route.n();
    let a = &prepared.arrays;
    let (o, d, e) = (r.origin, r.destination, r.deadline);
    let mut best = Best::default();

    for i in 1..=n + 1 {
        if !fits(a.num[i - 1], r, worker.capacity) {
            continue;
        }
        let Some(to_o) = q(g, route.vertex(i - 1), o, a.arr[i - 1], counter) else {
            continue;
        };
        let pick = a.arr[i - 1] + to_o;
        if pick > e + EPS {
            continue;
        }
        // Arrival at v_i once the origin has been inserted before it.
        let mut arr_i = f64::NAN;
        if i <= n {
            let Some(dt) = q(g, o, route.vertex(i), pick, counter) else {
                continue;
            };
            arr_i = pick + dt;
            if arr_i > a.latest[i] + EPS {
                continue;
            }
        }
        for j in i..=n + 1 {
            let deliver = if j == i {
                match q(g, o, d, pick, counter) {
                    Some(dt) => pick + dt,
                    None => continue,
                }
            } else {
                if !fits(a.num[j - 1], r, worker.capacity) {
                    break;
                }
                let at_prev = arr_i + prepared.travel(i, j - 1, arr_i);
                if at_prev > a.latest[j - 1] + EPS {
                    break;
                }
                match q(g, route.vertex(j - 1), d, at_prev, counter) {
                    Some(dt) => at_prev + dt,
                    None => continue,
                }
            };
            if deliver > e + EPS {
                continue;
            }
            if j == n + 1 {
                best.offer(deliver, i, j);
                continue;
            }
            let Some(dt) = q(g, d, route.vertex(j), deliver, counter) else {
                continue;
            };
            let arr_j = deliver + dt;
            if arr_j > a.latest[j] + EPS {
                continue;
            }
            best.offer(arr_j + prepared.tail_travel(j, arr_j), i, j);
        }
    }
    InsertionOutcome::finish(best, route, r, counter.point_queries - before, started)
}

/// Quadratic evaluation of a single candidate from scratch: two queries around the
/// origin, a compound lookup across the untouched middle, two queries around the
/// destination and a compound lookup for the suffix.
pub fn evaluate_candidate_quadratic(
    worker: &Worker,
    prepared: &PreparedRoute,
    r: &Request,
    i: usize,
    j: usize,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> Option<f64> {
    let route = &prepared.route;
    let n = route.n();
    let a = &prepared.arrays;
    assert!(1 <= i && i <= j && j <= n + 1, "invalid insertion ({i}, {j})");
    let cap_ok = (i - 1..j).all(|k| fits(a.num[k], r, worker.capacity));
    let pick = a.arr[i - 1] + q(g, route.vertex(i - 1), r.origin, a.arr[i - 1], counter)?;
    let deliver = if i == j {
        pick + q(g, r.origin, r.destination, pick, counter)?
    } else {
        let arr_i = pick + q(g, r.origin, route.vertex(i), pick, counter)?;
        let at_prev = arr_i + prepared.travel(i, j - 1, arr_i);
        if at_prev > a.latest[j - 1] + EPS {
            return None;
        }
        at_prev + q(g, route.vertex(j - 1), r.destination, at_prev, counter)?
    };
    if deliver > r.deadline + EPS {
        return None;
    }
    let obj = if j == n + 1 {
        deliver
    } else {
        let arr_j = deliver + q(g, r.destination, route.vertex(j), deliver, counter)?;
        if arr_j > a.latest[j] + EPS {
            return None;
        }
        arr_j + prepared.tail_travel(j, arr_j)
    };
    cap_ok.then_some(obj)
}

/// Best pickup position for each dropoff position, maintained by the linear operator.
/// Index `k` refers to stop `v_k`; entry 0 is always unset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PickupTracker {
    pub plc: Vec<Option<usize>>,
    /// Arrival at `v_k` when the origin is inserted at `plc[k]`.
    pub arr_with_pickup: Vec<Option<f64>>,
}

/// Per-position detail of a linear run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearTrace {
    pub tracker: PickupTracker,
    /// Arrival at `v_k` with the origin inserted right before `v_k`, when valid.
    pub fresh: Vec<Option<f64>>,
    /// Arrival at `v_k` carrying the previous best pickup over the leg `v_{k-1} -> v_k`, when valid.
    pub carried: Vec<Option<f64>>,
}

/// Linear operator: one pass over the dropoff position, tracking the pickup position
/// that minimizes the arrival time at the current stop.
pub fn insert_linear(
    worker: &Worker,
    prepared: &PreparedRoute,
    r: &Request,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> InsertionOutcome {
    insert_linear_traced(worker, prepared, r, g, counter).0
}

pub fn insert_linear_traced(
    worker: &Worker,
    prepared: &PreparedRoute,
    r: &Request,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> (InsertionOutcome, LinearTrace) {
    let started = Instant::now();
    let before = counter.point_queries;
    let route = &prepared.route;
    let n = route.n();
    let a = &prepared.arrays;
    let (o, d, e) = (r.origin, r.destination, r.deadline);
    let mut best = Best::default();
    let mut trace = LinearTrace {
        tracker: PickupTracker {
            plc: vec![None; n + 1],
            arr_with_pickup: vec![None; n + 1],
        },
        fresh: vec![None; n + 1],
        carried: vec![None; n + 1],
    };

    for k in 1..=n + 1 {
        // Capacity over the segment leaving v_{k-1} covers every candidate with j = k
        // and every pickup carried past v_{k-1}.
        if !fits(a.num[k - 1], r, worker.capacity) {
            continue;
        }
        let prev = (k >= 2).then(|| trace.tracker.plc[k - 1].zip(trace.tracker.arr_with_pickup[k - 1])).flatten();

        // Origin inserted right before v_k.
        let mut pick = None;
        let mut fresh = None;
        if let Some(dt) = q(g, route.vertex(k - 1), o, a.arr[k - 1], counter) {
            let p = a.arr[k - 1] + dt;
            if p <= e + EPS {
                if k <= n {
                    if let Some(dt) = q(g, o, route.vertex(k), p, counter) {
                        if p + dt <= a.latest[k] + EPS {
                            pick = Some(p);
                            fresh = Some(p + dt);
                        }
                    }
                } else {
                    pick = Some(p);
                }
            }
        }

        // Destination inserted right before v_k.
        let direct = pick.and_then(|p| q(g, o, d, p, counter).map(|dt| (p + dt, k)));
        let via_prev = prev.and_then(|(i, at)| q(g, route.vertex(k - 1), d, at, counter).map(|dt| (at + dt, i)));
        let deliver = match (via_prev, direct) {
            (Some(c), Some(f)) => Some(if f.0 < c.0 - EPS { f } else { c }),
            (c, f) => c.or(f),
        };
        if let Some((deliver, i)) = deliver.filter(|&(t, _)| t <= e + EPS) {
            if k == n + 1 {
                best.offer(deliver, i, k);
            } else if let Some(dt) = q(g, d, route.vertex(k), deliver, counter) {
                let delta = deliver + dt;
                if delta <= a.latest[k] + EPS {
                    best.offer(delta + prepared.tail_travel(k, delta), i, k);
                }
            }
        }

        if k <= n {
            let carried = prev
                .map(|(i, at)| (at + prepared.leg_travel(k - 1, at), i))
                .filter(|&(t, _)| t <= a.latest[k] + EPS);
            trace.fresh[k] = fresh;
            trace.carried[k] = carried.map(|c| c.0);
            let chosen = match (carried, fresh) {
                (Some(c), Some(f)) => Some(if f < c.0 - EPS { (f, k) } else { c }),
                (Some(c), None) => Some(c),
                (None, Some(f)) => Some((f, k)),
                (None, None) => None,
            };
            if let Some((t, i)) = chosen {
                trace.tracker.plc[k] = Some(i);
                trace.tracker.arr_with_pickup[k] = Some(t);
            }
        }
    }
    let outcome = InsertionOutcome::finish(best, route, r, counter.point_queries - before, started);
    (outcome, trace)
}

/// Runs `algorithm` on a worker whose route has been prepared with the matching compound
/// layout (ignored by the cubic operator).
pub fn insert(
    algorithm: Algorithm,
    worker: &Worker,
    book: &RequestBook,
    prepared: Option<&PreparedRoute>,
    r: &Request,
    g: &TdGraph,
    counter: &mut QueryCounter,
) -> Result<InsertionOutcome, RouteError> {
    match (algorithm, prepared) {
        (Algorithm::Cubic, _) => insert_cubic(worker, book, r, g, counter),
        (Algorithm::Quadratic, Some(p)) => Ok(insert_quadratic(worker, p, r, g, counter)),
        (Algorithm::Linear, Some(p)) => Ok(insert_linear(worker, p, r, g, counter)),
        (_, None) => panic!("{algorithm} needs a prepared route"),
    }
}
