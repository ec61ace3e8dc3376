//! Workers, requests and routes, plus the per-route state the fast insertion operators
//! rely on: arrival times `arr`, latest feasible arrivals `latest`, onboard load `num`,
//! per-leg travel-time profiles and the compound functions derived from them.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::pwl::{PwlError, PwlFunction};
use crate::tdgraph::{TdGraph, VertexId};
use crate::tdsp::{self, ProfileMode, QueryCounter, TdspError};
use crate::EPS;

pub type RequestId = u32;
pub type WorkerId = u32;

/// Stand-in for an unconstrained latest arrival.
pub const UNBOUNDED: f64 = 1e18;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("invalid request {id}: {reason}")]
    InvalidRequest { id: RequestId, reason: &'static str },
    #[error("invalid worker {id}: capacity must be at least 1")]
    InvalidWorker { id: WorkerId },
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("route is infeasible at stop {stop}: arrival {arrival} > latest {latest}")]
    Infeasible { stop: usize, arrival: f64, latest: f64 },
    #[error("stop {stop} cannot be reached from the previous stop")]
    Unreachable { stop: usize },
    #[error(transparent)]
    Tdsp(#[from] TdspError),
    #[error(transparent)]
    Pwl(#[from] PwlError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub id: RequestId,
    pub origin: VertexId,
    pub destination: VertexId,
    pub release_time: f64,
    pub deadline: f64,
    pub passengers: u32,
}

impl Request {
    pub fn new(
        id: RequestId,
        origin: VertexId,
        destination: VertexId,
        release_time: f64,
        deadline: f64,
        passengers: u32,
    ) -> Result<Self, RouteError> {
        let reason = if !(release_time < deadline) {
            Some("release time must precede the deadline")
        } else if passengers == 0 {
            Some("at least one passenger")
        } else if origin == destination {
            Some("origin equals destination")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(RouteError::InvalidRequest { id, reason }),
            None => Ok(Self {
                id,
                origin,
                destination,
                release_time,
                deadline,
                passengers,
            }),
        }
    }
}

/// Requests by id.
#[derive(Debug, Clone, Default)]
pub struct RequestBook {
    by_id: HashMap<RequestId, Request>,
}

impl RequestBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: Request) {
        self.by_id.insert(r.id, r);
    }

    pub fn get(&self, id: RequestId) -> Result<&Request, RouteError> {
        self.by_id.get(&id).ok_or(RouteError::UnknownRequest(id))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl FromIterator<Request> for RequestBook {
    fn from_iter<I: IntoIterator<Item = Request>>(iter: I) -> Self {
        let mut book = RequestBook::new();
        for r in iter {
            book.insert(r);
        }
        book
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRole {
    Start,
    Pickup(RequestId),
    Dropoff(RequestId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stop {
    pub vertex: VertexId,
    pub role: StopRole,
}

/// Planned stop sequence `v_0 .. v_n`, where `v_0` is where the worker is (or will
/// next be) at `start_time`. `onboard` lists requests already picked up before `v_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub stops: Vec<Stop>,
    pub start_time: f64,
    pub onboard: Vec<RequestId>,
}

impl Route {
    pub fn new(start_vertex: VertexId, start_time: f64) -> Self {
        Self {
            stops: vec![Stop {
                vertex: start_vertex,
                role: StopRole::Start,
            }],
            start_time,
            onboard: Vec::new(),
        }
    }

    /// Index of the final stop (`n`); zero for a route holding only its start.
    pub fn n(&self) -> usize {
        self.stops.len() - 1
    }

    pub fn vertex(&self, k: usize) -> VertexId {
        self.stops[k].vertex
    }

    pub fn push_pickup(&mut self, r: &Request) -> &mut Self {
        self.stops.push(Stop {
            vertex: r.origin,
            role: StopRole::Pickup(r.id),
        });
        self
    }

    pub fn push_dropoff(&mut self, r: &Request) -> &mut Self {
        self.stops.push(Stop {
            vertex: r.destination,
            role: StopRole::Dropoff(r.id),
        });
        self
    }

    /// New route with the origin of `r` before stop `i` and its destination before stop
    /// `j` (indices into this route, `1 <= i <= j <= n + 1`).
    pub fn with_insertion(&self, i: usize, j: usize, r: &Request) -> Route {
        assert!(1 <= i && i <= j && j <= self.n() + 1, "invalid insertion ({i}, {j})");
        let mut stops = Vec::with_capacity(self.stops.len() + 2);
        stops.extend_from_slice(&self.stops[..i]);
        stops.push(Stop {
            vertex: r.origin,
            role: StopRole::Pickup(r.id),
        });
        stops.extend_from_slice(&self.stops[i..j]);
        stops.push(Stop {
            vertex: r.destination,
            role: StopRole::Dropoff(r.id),
        });
        stops.extend_from_slice(&self.stops[j..]);
        Route {
            stops,
            start_time: self.start_time,
            onboard: self.onboard.clone(),
        }
    }

    /// Ids of every request the route serves (onboard or still to be picked up).
    pub fn request_ids(&self) -> Vec<RequestId> {
        let mut ids = self.onboard.clone();
        ids.extend(self.stops.iter().filter_map(|s| match s.role {
            StopRole::Pickup(id) => Some(id),
            _ => None,
        }));
        ids
    }

    pub fn initial_load(&self, book: &RequestBook) -> Result<u32, RouteError> {
        self.onboard
            .iter()
            .map(|&id| book.get(id).map(|r| r.passengers))
            .sum()
    }

    /// Arrival times by point queries, from scratch.
    pub fn arrivals(&self, g: &TdGraph, counter: &mut QueryCounter) -> Result<Vec<f64>, RouteError> {
        let mut arr = Vec::with_capacity(self.stops.len());
        arr.push(self.start_time);
        for k in 1..self.stops.len() {
            let t = arr[k - 1];
            let d = tdsp::query(g, self.vertex(k - 1), self.vertex(k), t, counter)
                .ok_or(RouteError::Unreachable { stop: k })?;
            arr.push(t + d);
        }
        Ok(arr)
    }
}

#[derive(Debug, Clone)]
pub struct Worker {
    pub id: WorkerId,
    pub start_vertex: VertexId,
    pub capacity: u32,
    pub route: Route,
}

impl Worker {
    pub fn new(id: WorkerId, start_vertex: VertexId, capacity: u32, start_time: f64) -> Result<Self, RouteError> {
        if capacity == 0 {
            return Err(RouteError::InvalidWorker { id });
        }
        Ok(Self {
            id,
            start_vertex,
            capacity,
            route: Route::new(start_vertex, start_time),
        })
    }
}

/// `arr`, `latest`, `num` and the per-leg travel-time profiles of one route.
#[derive(Debug, Clone)]
pub struct RouteArrays {
    pub arr: Vec<f64>,
    pub latest: Vec<f64>,
    pub num: Vec<u32>,
    /// `legs[k]` is the profile from stop `k` to stop `k + 1`.
    pub legs: Vec<PwlFunction>,
}

/// Fills `arr` forward with point queries, `num` from the stop roles and `latest`
/// backward by inverting each leg profile.
pub fn init_arrays(
    route: &Route,
    g: &TdGraph,
    book: &RequestBook,
    mode: ProfileMode,
    counter: &mut QueryCounter,
) -> Result<RouteArrays, RouteError> {
    let n = route.n();
    let arr = route.arrivals(g, counter)?;

    let mut num = Vec::with_capacity(n + 1);
    let mut load = route.initial_load(book)? as i64;
    num.push(load.max(0) as u32);
    for s in &route.stops[1..] {
        match s.role {
            StopRole::Pickup(id) => load += book.get(id)?.passengers as i64,
            StopRole::Dropoff(id) => load -= book.get(id)?.passengers as i64,
            StopRole::Start => {}
        }
        num.push(load.max(0) as u32);
    }

    let own_deadline = |k: usize| -> Result<f64, RouteError> {
        match route.stops[k].role {
            StopRole::Dropoff(id) => Ok(book.get(id)?.deadline),
            _ => Ok(UNBOUNDED),
        }
    };

    let mut latest = vec![UNBOUNDED; n + 1];
    let mut legs = Vec::with_capacity(n);
    latest[n] = own_deadline(n)?;
    for k in (0..n).rev() {
        let downstream = latest[k + 1];
        // Built over [arr[k], latest[k+1]] to invert, then cut back to [arr[k], latest[k]].
        let hi = if downstream < UNBOUNDED {
            (downstream + 1.0).max(arr[k])
        } else {
            arr[k].max(crate::DAY) + 1.0
        };
        let leg = tdsp::profile_with_mode(g, route.vertex(k), route.vertex(k + 1), arr[k], hi, mode, counter)?;
        let propagated = if downstream < UNBOUNDED {
            leg.latest_departure(downstream).unwrap_or(f64::NEG_INFINITY)
        } else {
            UNBOUNDED
        };
        latest[k] = propagated.min(own_deadline(k)?);
        let leg = if latest[k] < UNBOUNDED {
            leg.restricted(arr[k], (latest[k] + 1.0).max(arr[k]))
        } else {
            leg
        };
        legs.push(leg);
    }
    legs.reverse();

    for k in 1..=n {
        let e = own_deadline(k)?;
        if arr[k] > e + EPS {
            return Err(RouteError::Infeasible {
                stop: k,
                arrival: arr[k],
                latest: e,
            });
        }
    }
    if let Some(k) = (0..=n).find(|&k| arr[k] > latest[k] + EPS) {
        return Err(RouteError::Infeasible {
            stop: k,
            arrival: arr[k],
            latest: latest[k],
        });
    }

    Ok(RouteArrays { arr, latest, num, legs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompoundMode {
    /// Leg functions plus one function from every stop to the final stop.
    LegAndTail,
    /// A function for every ordered pair of stops.
    AllPairs,
}

#[derive(Debug, Clone)]
pub enum CompoundFunctions {
    /// `tails[k]` runs from stop `k` to stop `n`, for `k < n - 1`; the tail of stop
    /// `n - 1` is its leg.
    LegAndTail { tails: Vec<PwlFunction> },
    /// Upper-triangular table over `0 <= x < y <= n`.
    AllPairs { n: usize, table: Vec<PwlFunction> },
}

fn pair_index(n: usize, x: usize, y: usize) -> usize {
    x * n - x * x.saturating_sub(1) / 2 + (y - x - 1)
}

/// Route with arrays and compound functions ready for probing.
#[derive(Debug, Clone)]
pub struct PreparedRoute {
    pub route: Route,
    pub arrays: RouteArrays,
    pub compound: CompoundFunctions,
}

impl PreparedRoute {
    pub fn n(&self) -> usize {
        self.route.n()
    }

    /// Travel time from stop `x` to stop `y >= x` departing at `t`.
    pub fn travel(&self, x: usize, y: usize, t: f64) -> f64 {
        if x == y {
            return 0.0;
        }
        match &self.compound {
            CompoundFunctions::AllPairs { n, table } => table[pair_index(*n, x, y)].eval(t),
            CompoundFunctions::LegAndTail { .. } if y == x + 1 => self.arrays.legs[x].eval(t),
            CompoundFunctions::LegAndTail { .. } if y == self.n() => self.tail(x).eval(t),
            CompoundFunctions::LegAndTail { .. } => {
                // Not stored in this layout; chain the legs.
                let mut a = t;
                for k in x..y {
                    a = self.arrays.legs[k].arrival(a);
                }
                a - t
            }
        }
    }

    /// Travel time from stop `k` to the final stop.
    pub fn tail_travel(&self, k: usize, t: f64) -> f64 {
        self.travel(k, self.n(), t)
    }

    pub fn leg_travel(&self, k: usize, t: f64) -> f64 {
        self.arrays.legs[k].eval(t)
    }

    fn tail(&self, k: usize) -> &PwlFunction {
        match &self.compound {
            CompoundFunctions::LegAndTail { tails } if k < tails.len() => &tails[k],
            _ => &self.arrays.legs[k],
        }
    }

    /// Functions held by the compound store.
    pub fn function_count(&self) -> usize {
        match &self.compound {
            CompoundFunctions::LegAndTail { tails } => self.arrays.legs.len() + tails.len(),
            CompoundFunctions::AllPairs { table, .. } => table.len(),
        }
    }

    /// Total breakpoints held by the compound store (memory proxy).
    pub fn breakpoints(&self) -> usize {
        match &self.compound {
            CompoundFunctions::LegAndTail { tails } => {
                self.arrays.legs.iter().chain(tails).map(PwlFunction::len).sum()
            }
            CompoundFunctions::AllPairs { table, .. } => table.iter().map(PwlFunction::len).sum(),
        }
    }
}

/// Derives the compound travel-time functions from the leg profiles.
pub fn build_compound(arrays: &RouteArrays, mode: CompoundMode) -> Result<CompoundFunctions, RouteError> {
    let legs = &arrays.legs;
    let n = legs.len();
    match mode {
        CompoundMode::LegAndTail => {
            let mut tails: Vec<PwlFunction> = Vec::with_capacity(n.saturating_sub(1));
            for k in (0..n.saturating_sub(1)).rev() {
                let next = tails.last().unwrap_or(&legs[n - 1]);
                let t = legs[k].link(next)?;
                tails.push(t);
            }
            tails.reverse();
            Ok(CompoundFunctions::LegAndTail { tails })
        }
        CompoundMode::AllPairs => {
            let mut rows: Vec<Vec<PwlFunction>> = vec![Vec::new(); n];
            for x in (0..n).rev() {
                let mut row = Vec::with_capacity(n - x);
                row.push(legs[x].clone());
                for y in x + 2..=n {
                    let rest = &rows[x + 1][y - x - 2];
                    row.push(legs[x].link(rest)?);
                }
                rows[x] = row;
            }
            Ok(CompoundFunctions::AllPairs {
                n,
                table: rows.into_iter().flatten().collect(),
            })
        }
    }
}

/// Runs [`init_arrays`] and [`build_compound`].
pub fn prepare_route(
    route: &Route,
    g: &TdGraph,
    book: &RequestBook,
    mode: CompoundMode,
    profile_mode: ProfileMode,
    counter: &mut QueryCounter,
) -> Result<PreparedRoute, RouteError> {
    let arrays = init_arrays(route, g, book, profile_mode, counter)?;
    let compound = build_compound(&arrays, mode)?;
    Ok(PreparedRoute {
        route: route.clone(),
        arrays,
        compound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Completion,
    Order,
    Deadline,
    Capacity,
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub stop: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    pub arrivals: Vec<f64>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Rechecks a route from scratch against the completion, order, deadline and capacity
/// constraints. Uses its own uncounted point queries.
pub fn verify_route(route: &Route, g: &TdGraph, book: &RequestBook, worker: &Worker) -> FeasibilityReport {
    let mut violations = Vec::new();
    let mut push = |kind, stop| violations.push(Violation { kind, stop });

    let onboard: HashSet<RequestId> = route.onboard.iter().copied().collect();
    let mut picked: HashMap<RequestId, usize> = HashMap::new();
    let mut dropped: HashSet<RequestId> = HashSet::new();
    let mut arrivals = vec![route.start_time];
    let mut load: i64 = 0;
    for id in &route.onboard {
        match book.get(*id) {
            Ok(r) => load += r.passengers as i64,
            Err(_) => push(ViolationKind::Completion, 0),
        }
    }
    if load > worker.capacity as i64 {
        push(ViolationKind::Capacity, 0);
    }

    let mut reachable = true;
    for (k, stop) in route.stops.iter().enumerate() {
        if k > 0 {
            let prev = arrivals[k - 1];
            match tdsp::earliest_arrival(g, route.stops[k - 1].vertex, stop.vertex, prev) {
                Some(a) if reachable => arrivals.push(a),
                _ => {
                    if reachable {
                        push(ViolationKind::Unreachable, k);
                    }
                    reachable = false;
                    arrivals.push(f64::INFINITY);
                }
            }
        }
        match stop.role {
            StopRole::Start => {
                if k != 0 {
                    push(ViolationKind::Order, k);
                }
            }
            StopRole::Pickup(id) => {
                let Ok(r) = book.get(id) else {
                    push(ViolationKind::Completion, k);
                    continue;
                };
                if onboard.contains(&id) || picked.insert(id, k).is_some() || r.origin != stop.vertex {
                    push(ViolationKind::Completion, k);
                }
                load += r.passengers as i64;
                if load > worker.capacity as i64 {
                    push(ViolationKind::Capacity, k);
                }
            }
            StopRole::Dropoff(id) => {
                let Ok(r) = book.get(id) else {
                    push(ViolationKind::Completion, k);
                    continue;
                };
                if !dropped.insert(id) || r.destination != stop.vertex {
                    push(ViolationKind::Completion, k);
                }
                if !onboard.contains(&id) && !picked.contains_key(&id) {
                    push(ViolationKind::Order, k);
                }
                if reachable && arrivals[k] > r.deadline + EPS {
                    push(ViolationKind::Deadline, k);
                }
                load -= r.passengers as i64;
                if load < 0 {
                    push(ViolationKind::Capacity, k);
                }
            }
        }
    }
    if route.stops.first().map(|s| s.role) != Some(StopRole::Start) {
        push(ViolationKind::Order, 0);
    }
    let last = route.n();
    for id in onboard.iter().chain(picked.keys()) {
        if !dropped.contains(id) {
            let at = picked.get(id).copied().unwrap_or(last);
            push(ViolationKind::Completion, at);
        }
    }
    violations.sort_by_key(|v| (v.stop, v.kind as u8));
    FeasibilityReport { violations, arrivals }
}
