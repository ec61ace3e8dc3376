#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdinsert::insertion::Algorithm;
use tdinsert::pwl::{Point, PwlFunction};
use tdinsert::routestate::{
    prepare_route, verify_route, PreparedRoute, Request, RequestBook, Route, Worker,
};
use tdinsert::tdgraph::{generate_synthetic, SyntheticConfig, TdGraph, VertexId};
use tdinsert::tdsp::{earliest_arrivals_from, query, ProfileMode, QueryCounter};
use tdinsert::DAY;

/// Random FIFO function on `[lo, hi]` with `k` breakpoints; every slope is at least
/// `-0.95` and weights stay in `[0, 2000]`.
pub fn random_fifo(rng: &mut impl Rng, k: usize, lo: f64, hi: f64) -> PwlFunction {
    let mut ts: Vec<f64> = (0..k.saturating_sub(2)).map(|_| rng.gen_range(lo..hi)).collect();
    ts.push(lo);
    if k >= 2 {
        ts.push(hi);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut pts = Vec::with_capacity(ts.len());
    let mut w = rng.gen_range(0.0..600.0);
    let mut prev_t = ts[0];
    for t in ts {
        let dt = t - prev_t;
        if dt > 0.0 {
            let down = rng.gen_range(0.0..0.95) * dt;
            let up = rng.gen_range(0.0..400.0);
            w = if rng.gen_bool(0.5) { (w - down).max(0.0) } else { (w + up).min(2_000.0) };
        }
        pts.push(Point::new(t, w));
        prev_t = t;
    }
    let f = PwlFunction::new(pts).expect("sorted finite breakpoints");
    assert!(f.is_fifo());
    f
}

/// Random strongly connected graph: a ring plus `extra` random edges, all with random
/// FIFO functions over the whole day.
pub fn random_small_graph(rng: &mut impl Rng, vertices: usize, extra: usize, allow_parallel: bool) -> TdGraph {
    let mut pairs = Vec::new();
    let mut present = std::collections::HashSet::new();
    for u in 0..vertices {
        let v = (u + 1) % vertices;
        present.insert((u, v));
        pairs.push((u, v));
    }
    for _ in 0..extra {
        let u = rng.gen_range(0..vertices);
        let v = rng.gen_range(0..vertices);
        if u == v || (!allow_parallel && !present.insert((u, v))) {
            continue;
        }
        pairs.push((u, v));
    }
    let edges = pairs
        .into_iter()
        .map(|(u, v)| {
            let k = rng.gen_range(1..=5);
            (u as VertexId, v as VertexId, random_fifo(rng, k, 0.0, DAY))
        })
        .collect();
    TdGraph::from_edges(vertices, edges)
}

/// Exhaustive simple-path search for the earliest arrival.
pub fn brute_force_arrival(g: &TdGraph, from: VertexId, to: VertexId, t: f64) -> Option<f64> {
    fn go(g: &TdGraph, u: VertexId, to: VertexId, t: f64, seen: &mut Vec<bool>, best: &mut Option<f64>) {
        if u == to {
            *best = Some(best.map_or(t, |b: f64| b.min(t)));
            return;
        }
        for e in g.out_edges(u) {
            let v = e.head as usize;
            if !seen[v] {
                seen[v] = true;
                go(g, e.head, to, e.travel.arrival(t), seen, best);
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; g.vertex_count()];
    seen[from as usize] = true;
    let mut best = None;
    go(g, from, to, t, &mut seen, &mut best);
    best
}

/// A worker with a feasible route, the requests it serves and a new request to insert.
pub struct Instance {
    pub graph: TdGraph,
    pub worker: Worker,
    pub book: RequestBook,
    pub request: Request,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.worker.route.n()
    }

    pub fn prepared(&self, alg: Algorithm) -> Option<PreparedRoute> {
        alg.compound_mode().map(|m| {
            prepare_route(
                &self.worker.route,
                &self.graph,
                &self.book,
                m,
                ProfileMode::Exact,
                &mut QueryCounter::new(),
            )
            .expect("generated routes are feasible")
        })
    }

    /// Book including the new request, for verifying returned routes.
    pub fn full_book(&self) -> RequestBook {
        let mut b = self.book.clone();
        b.insert(self.request);
        b
    }
}

/// Random insertion instance with at most `max_n` stops on a graph of `vertices` vertices.
pub fn random_instance(seed: u64, vertices: usize, max_n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SyntheticConfig::new(vertices, rng.gen_range(2.0..3.5), rng.gen_range(2..=6), seed);
    cfg.base_weight = (rng.gen_range(20.0..120.0), rng.gen_range(200.0..600.0));
    cfg.factor_range = (1.0, rng.gen_range(1.5..3.5));
    let g = generate_synthetic(&cfg);
    let nv = g.vertex_count();
    let t0 = rng.gen_range(0.0..72_000.0);
    let start = rng.gen_range(0..nv) as VertexId;

    let n_target = rng.gen_range(0..=max_n);
    let mut route = Route::new(start, t0);
    let mut open: Vec<Request> = Vec::new();
    let mut all: Vec<Request> = Vec::new();
    let mut next_id = 0u32;
    let random_vertex = |rng: &mut ChaCha8Rng| rng.gen_range(0..nv) as VertexId;
    let new_request = |rng: &mut ChaCha8Rng, next_id: &mut u32| {
        let o = random_vertex(rng);
        let d = loop {
            let d = random_vertex(rng);
            if d != o {
                break d;
            }
        };
        *next_id += 1;
        // Deadlines are set once the planned dropoff time is known.
        Request {
            id: *next_id,
            origin: o,
            destination: d,
            release_time: t0 - 60.0,
            deadline: f64::INFINITY,
            passengers: rng.gen_range(1..=2),
        }
    };

    // A few riders already onboard.
    let onboard = rng.gen_range(0..=(n_target / 3));
    for _ in 0..onboard {
        let r = new_request(&mut rng, &mut next_id);
        route.onboard.push(r.id);
        open.push(r);
    }
    while route.n() < n_target {
        let remaining = n_target - route.n();
        let can_open = remaining > open.len();
        if !open.is_empty() && (!can_open || rng.gen_bool(0.5)) {
            let idx = rng.gen_range(0..open.len());
            let r = open.swap_remove(idx);
            route.push_dropoff(&r);
            all.push(r);
        } else {
            let r = new_request(&mut rng, &mut next_id);
            route.push_pickup(&r);
            open.push(r);
        }
    }
    // Close whatever is still open so the route is complete.
    for r in open.drain(..) {
        route.push_dropoff(&r);
        all.push(r);
    }

    let arr = route
        .arrivals(&g, &mut QueryCounter::new())
        .expect("synthetic networks are strongly connected");
    let mut book = RequestBook::new();
    let tight = rng.gen_bool(0.3);
    for (k, s) in route.stops.iter().enumerate() {
        if let tdinsert::routestate::StopRole::Dropoff(id) = s.role {
            let mut r = *all.iter().find(|r| r.id == id).unwrap();
            let slack = if tight { rng.gen_range(1.0..600.0) } else { rng.gen_range(1.0..5_000.0) };
            r.deadline = arr[k] + slack;
            book.insert(r);
        }
    }

    let mut load: u32 = route.onboard.iter().map(|id| book.get(*id).unwrap().passengers).sum();
    let mut peak = load;
    for s in &route.stops[1..] {
        match s.role {
            tdinsert::routestate::StopRole::Pickup(id) => load += book.get(id).unwrap().passengers,
            tdinsert::routestate::StopRole::Dropoff(id) => load -= book.get(id).unwrap().passengers,
            _ => {}
        }
        peak = peak.max(load);
    }
    let capacity = (peak + rng.gen_range(0..=2)).max(1);
    let mut worker = Worker::new(0, start, capacity, t0).unwrap();
    worker.route = route;

    let o = random_vertex(&mut rng);
    let d = loop {
        let d = random_vertex(&mut rng);
        if d != o {
            break d;
        }
    };
    let end = *arr.last().unwrap();
    let deadline = match rng.gen_range(0..4) {
        0 => t0 + rng.gen_range(60.0..3_600.0),
        1 => end + rng.gen_range(0.0..3_000.0),
        _ => end + rng.gen_range(1_000.0..20_000.0),
    };
    let request = Request::new(10_000, o, d, t0 - 30.0, deadline.max(t0 - 29.0), rng.gen_range(1..=2)).unwrap();

    let report = verify_route(&worker.route, &g, &book, &worker);
    assert!(report.is_feasible(), "generator produced an infeasible route: {:?}", report.violations);
    Instance {
        graph: g,
        worker,
        book,
        request,
    }
}

/// Vertices reachable from `v` at time `t`.
pub fn reachable(g: &TdGraph, v: VertexId, t: f64) -> Vec<bool> {
    earliest_arrivals_from(g, v, t).into_iter().map(f64::is_finite).collect()
}

/// Counted point query used by oracles that need the public API only.
pub fn travel(g: &TdGraph, u: VertexId, v: VertexId, t: f64) -> Option<f64> {
    query(g, u, v, t, &mut QueryCounter::new())
}

/// Enumerates every `(i, j)` and checks each candidate route from scratch.
pub fn naive_best(inst: &Instance) -> Option<(f64, usize, usize)> {
    let n = inst.n();
    let book = inst.full_book();
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 1..=n + 1 {
        for j in i..=n + 1 {
            let cand = inst.worker.route.with_insertion(i, j, &inst.request);
            let report = verify_route(&cand, &inst.graph, &book, &inst.worker);
            if report.is_feasible() {
                let obj = *report.arrivals.last().unwrap();
                if best.map_or(true, |(b, _, _)| obj < b - tdinsert::EPS) {
                    best = Some((obj, i, j));
                }
            }
        }
    }
    best
}

/// Proptest strategy for FIFO functions: a start time, a first weight and up to seven
/// further breakpoints, each a gap plus either a bounded drop (slope above -0.95) or a rise.
pub fn fifo_strategy() -> impl proptest::strategy::Strategy<Value = PwlFunction> {
    use proptest::prelude::*;
    (
        0.0f64..40_000.0,
        0.0f64..800.0,
        prop::collection::vec((1.0f64..6_000.0, 0.0f64..0.95, 0.0f64..500.0, any::<bool>()), 0..8),
    )
        .prop_map(|(t0, w0, steps)| {
            let mut pts = vec![Point::new(t0, w0)];
            let (mut t, mut w) = (t0, w0);
            for (gap, down, up, fall) in steps {
                t += gap;
                w = if fall { (w - down * gap).max(0.0) } else { w + up };
                pts.push(Point::new(t, w));
            }
            PwlFunction::new(pts).expect("strictly increasing times")
        })
}

/// Departure times worth probing for `f`: its breakpoints, points just beside them,
/// a uniform grid and both ends of the domain.
pub fn probe_times(f: &PwlFunction, grid: usize) -> Vec<f64> {
    let (lo, hi) = f.domain();
    let mut ts: Vec<f64> = f.points().iter().map(|p| p.t).collect();
    for p in f.points() {
        ts.push((p.t - 0.37).max(lo));
        ts.push((p.t + 0.37).min(hi));
    }
    for k in 0..=grid {
        ts.push(lo + (hi - lo) * k as f64 / grid as f64);
    }
    ts
}

/// Composition, merge, inversion and FIFO-closure invariants for one pair.
pub fn check_pwl_pair(f: &PwlFunction, g: &PwlFunction, tol: f64) -> Result<(), String> {
    let h = f.link(g).map_err(|e| format!("link failed: {e}"))?;
    if !h.is_fifo() {
        return Err("link of FIFO functions is not FIFO".into());
    }
    if h.domain() != f.domain() {
        return Err(format!("link domain {:?} != {:?}", h.domain(), f.domain()));
    }
    for t in probe_times(f, 64) {
        let want = f.eval(t) + g.eval(t + f.eval(t));
        if (h.eval(t) - want).abs() > tol {
            return Err(format!("link at {t}: {} vs {want}", h.eval(t)));
        }
    }

    let (lo, hi) = (f.domain().0.max(g.domain().0), f.domain().1.min(g.domain().1));
    match f.merge(g) {
        Ok(m) => {
            if lo > hi {
                return Err("merge of disjoint domains succeeded".into());
            }
            if !m.is_fifo() {
                return Err("merge of FIFO functions is not FIFO".into());
            }
            for t in probe_times(f, 32).into_iter().chain(probe_times(g, 32)) {
                if t < lo || t > hi {
                    continue;
                }
                let want = f.eval(t).min(g.eval(t));
                if (m.eval(t) - want).abs() > tol {
                    return Err(format!("merge at {t}: {} vs {want}", m.eval(t)));
                }
            }
        }
        Err(e) if lo > hi => {
            let _ = e;
        }
        Err(e) => return Err(format!("merge failed: {e}")),
    }

    let (dlo, dhi) = h.domain();
    for k in 0..=16 {
        let deadline = h.arrival(dlo) - 50.0 + (h.arrival(dhi) - h.arrival(dlo) + 100.0) * k as f64 / 16.0;
        match h.latest_departure(deadline) {
            None => {
                if h.arrival(dlo) <= deadline {
                    return Err(format!("no departure found for reachable deadline {deadline}"));
                }
            }
            Some(t) => {
                if t < dlo || t > dhi {
                    return Err(format!("latest departure {t} outside domain"));
                }
                if h.arrival(t) > deadline + tol {
                    return Err(format!("latest departure {t} arrives at {} > {deadline}", h.arrival(t)));
                }
                // Nothing later in the domain may still make it.
                if t < dhi && h.arrival(t) < deadline - tol {
                    return Err(format!("latest departure {t} leaves slack before {deadline}"));
                }
            }
        }
    }
    Ok(())
}

/// Outcome of running all three operators on one instance.
pub struct Comparison {
    pub n: usize,
    pub feasible: [bool; 3],
    pub objective: [f64; 3],
    pub queries: [u64; 3],
    pub routes_verified: bool,
}

impl Comparison {
    /// Feasibility flags agree and objectives are within `tol`.
    pub fn agrees(&self, tol: f64) -> bool {
        let f = self.feasible;
        if f[0] != f[1] || f[0] != f[2] {
            return false;
        }
        !f[0] || (1..3).all(|k| (self.objective[k] - self.objective[0]).abs() <= tol)
    }

    pub fn dominance_holds(&self) -> bool {
        self.queries[2] <= self.queries[1] && self.queries[1] <= self.queries[0]
    }
}

pub fn compare(inst: &Instance) -> Comparison {
    let book = inst.full_book();
    let mut feasible = [false; 3];
    let mut objective = [f64::INFINITY; 3];
    let mut queries = [0; 3];
    let mut routes_verified = true;
    for (k, alg) in Algorithm::ALL.into_iter().enumerate() {
        let prepared = inst.prepared(alg);
        let mut c = QueryCounter::new();
        let out = tdinsert::insertion::insert(
            alg,
            &inst.worker,
            &inst.book,
            prepared.as_ref(),
            &inst.request,
            &inst.graph,
            &mut c,
        )
        .unwrap();
        assert_eq!(out.point_queries_used, c.point_queries);
        feasible[k] = out.feasible;
        objective[k] = out.objective;
        queries[k] = out.point_queries_used;
        if let Some(route) = &out.new_route {
            let report = verify_route(route, &inst.graph, &book, &inst.worker);
            let final_arrival = *report.arrivals.last().unwrap();
            if !report.is_feasible() || (final_arrival - out.objective).abs() > 1e-9 {
                routes_verified = false;
            }
        }
    }
    Comparison {
        n: inst.n(),
        feasible,
        objective,
        queries,
        routes_verified,
    }
}
