//! Time-dependent shortest travel time queries.
//!
//! [`query`] is a label-setting Dijkstra over arrival times (correct under FIFO).
//! [`profile`] computes the whole travel-time function over a departure window by
//! label-correcting profile search with [`PwlFunction::link`] and
//! [`PwlFunction::merge`]. Both bump a caller-owned [`QueryCounter`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::pwl::{Point, PwlError, PwlFunction, DEFAULT_MAX_POINTS};
use crate::tdgraph::{TdGraph, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdspError {
    #[error("vertex {to} is unreachable from {from}")]
    Unreachable { from: VertexId, to: VertexId },
    #[error("invalid departure window [{lo}, {hi}]")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error(transparent)]
    Pwl(#[from] PwlError),
}

/// Invocation counts; the primary cost metric of the insertion operators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryCounter {
    pub point_queries: u64,
    pub profile_queries: u64,
}

impl QueryCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn absorb(&mut self, other: QueryCounter) {
        self.point_queries += other.point_queries;
        self.profile_queries += other.profile_queries;
    }
}

/// How travel-time profiles between route stops are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ProfileMode {
    /// Exact profile search.
    #[default]
    Exact,
    /// Point queries on a uniform grid, FIFO-repaired. Approximate.
    Sampled { step: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    key: f64,
    vertex: VertexId,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Min-heap on key, ties to the smaller vertex id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Shortest travel time from `from` to `to` when departing at `t`.
pub fn query(
    g: &TdGraph,
    from: VertexId,
    to: VertexId,
    t: f64,
    counter: &mut QueryCounter,
) -> Option<f64> {
    counter.point_queries += 1;
    earliest_arrival(g, from, to, t).map(|a| a - t)
}

/// Earliest arrival at `to`; uncounted building block of [`query`].
pub(crate) fn earliest_arrival(g: &TdGraph, from: VertexId, to: VertexId, t: f64) -> Option<f64> {
    if from == to {
        return Some(t);
    }
    let n = g.vertex_count();
    let mut arrival = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    arrival[from as usize] = t;
    heap.push(Entry { key: t, vertex: from });
    while let Some(Entry { key, vertex }) = heap.pop() {
        let u = vertex as usize;
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if vertex == to {
            return Some(key);
        }
        for e in g.out_edges(vertex) {
            let v = e.head as usize;
            if settled[v] {
                continue;
            }
            let a = e.travel.arrival(key);
            if a < arrival[v] {
                arrival[v] = a;
                heap.push(Entry { key: a, vertex: e.head });
            }
        }
    }
    None
}

/// Earliest arrival at every vertex when leaving `from` at `t` (uncounted; used by
/// generators and tests for reachability).
pub fn earliest_arrivals_from(g: &TdGraph, from: VertexId, t: f64) -> Vec<f64> {
    let n = g.vertex_count();
    let mut arrival = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    arrival[from as usize] = t;
    heap.push(Entry { key: t, vertex: from });
    while let Some(Entry { key, vertex }) = heap.pop() {
        if std::mem::replace(&mut settled[vertex as usize], true) {
            continue;
        }
        for e in g.out_edges(vertex) {
            let a = e.travel.arrival(key);
            if a < arrival[e.head as usize] {
                arrival[e.head as usize] = a;
                heap.push(Entry { key: a, vertex: e.head });
            }
        }
    }
    arrival
}

/// Travel-time profile from `from` to `to` for departures in `[t_lo, t_hi]`.
pub fn profile(
    g: &TdGraph,
    from: VertexId,
    to: VertexId,
    t_lo: f64,
    t_hi: f64,
    counter: &mut QueryCounter,
) -> Result<PwlFunction, TdspError> {
    counter.profile_queries += 1;
    profile_search(g, from, to, t_lo, t_hi, DEFAULT_MAX_POINTS)
}

/// Profile in the requested mode. Sampled mode issues uncounted point queries.
pub fn profile_with_mode(
    g: &TdGraph,
    from: VertexId,
    to: VertexId,
    t_lo: f64,
    t_hi: f64,
    mode: ProfileMode,
    counter: &mut QueryCounter,
) -> Result<PwlFunction, TdspError> {
    match mode {
        ProfileMode::Exact => profile(g, from, to, t_lo, t_hi, counter),
        ProfileMode::Sampled { step } => {
            counter.profile_queries += 1;
            sampled_profile(g, from, to, t_lo, t_hi, step)
        }
    }
}

fn check_window(t_lo: f64, t_hi: f64) -> Result<(), TdspError> {
    if !(t_lo.is_finite() && t_hi.is_finite() && t_lo <= t_hi) {
        return Err(TdspError::InvalidWindow { lo: t_lo, hi: t_hi });
    }
    Ok(())
}

fn profile_search(
    g: &TdGraph,
    from: VertexId,
    to: VertexId,
    t_lo: f64,
    t_hi: f64,
    cap: usize,
) -> Result<PwlFunction, TdspError> {
    check_window(t_lo, t_hi)?;
    if from == to {
        return Ok(PwlFunction::zero(t_lo, t_hi));
    }
    let n = g.vertex_count();
    let mut labels: Vec<Option<PwlFunction>> = vec![None; n];
    // Lower bound used as the heap key of the current label of each vertex.
    let mut keys = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    labels[from as usize] = Some(PwlFunction::zero(t_lo, t_hi));
    keys[from as usize] = 0.0;
    heap.push(Entry { key: 0.0, vertex: from });
    let mut upper = f64::INFINITY;

    while let Some(Entry { key, vertex }) = heap.pop() {
        let u = vertex as usize;
        if key != keys[u] {
            continue;
        }
        // Every remaining label is at least `key` everywhere; nothing can improve the target.
        if key >= upper {
            break;
        }
        keys[u] = f64::NAN;
        if vertex == to {
            continue;
        }
        let label = labels[u].clone().expect("queued vertices carry a label");
        for e in g.out_edges(vertex) {
            let v = e.head as usize;
            let candidate = label.link_with_cap(&e.travel, cap)?;
            if candidate.min_value() >= upper {
                continue;
            }
            let updated = match &labels[v] {
                None => Some(candidate),
                Some(current) => {
                    let (merged, improved) = current.merge_reporting(&candidate, cap)?;
                    improved.then_some(merged)
                }
            };
            if let Some(f) = updated {
                let lower = f.min_value();
                if e.head == to {
                    upper = f.max_value();
                }
                labels[v] = Some(f);
                keys[v] = lower;
                heap.push(Entry { key: lower, vertex: e.head });
            }
        }
    }
    labels[to as usize]
        .take()
        .ok_or(TdspError::Unreachable { from, to })
}

fn sampled_profile(
    g: &TdGraph,
    from: VertexId,
    to: VertexId,
    t_lo: f64,
    t_hi: f64,
    step: f64,
) -> Result<PwlFunction, TdspError> {
    check_window(t_lo, t_hi)?;
    let step = if step > 0.0 { step } else { 60.0 };
    let mut times = Vec::new();
    let mut t = t_lo;
    while t < t_hi {
        times.push(t);
        t += step;
    }
    times.push(t_hi);
    times.dedup();
    let mut points = Vec::with_capacity(times.len());
    for t in times {
        let a = earliest_arrival(g, from, to, t).ok_or(TdspError::Unreachable { from, to })?;
        points.push(Point::new(t, (a - t).max(0.0)));
    }
    Ok(PwlFunction::with_fifo_repair(points)?.compacted())
}
