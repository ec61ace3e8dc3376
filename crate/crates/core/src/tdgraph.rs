//! Time-dependent road network.
//!
//! Text format: a header line `V E`, then `E` edge lines
//! `u v k t1 w1 t2 w2 ... tk wk` (whitespace separated, seconds). Every edge function is
//! normalized to cover `[0, 86400]` by constant extension at both ends.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pwl::{Point, PwlError, PwlFunction};
use crate::DAY;

pub type VertexId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: edge {tail}->{head}: {source}")]
    Function {
        line: usize,
        tail: VertexId,
        head: VertexId,
        source: PwlError,
    },
    #[error("line {line}: edge {tail}->{head} violates FIFO ({source})")]
    Fifo {
        line: usize,
        tail: VertexId,
        head: VertexId,
        source: PwlError,
    },
    #[error("line {line}: vertex id {vertex} out of range (graph has {vertex_count} vertices)")]
    DanglingVertex {
        line: usize,
        vertex: u64,
        vertex_count: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Repair non-FIFO edges instead of rejecting them.
    pub repair_fifo: bool,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub head: VertexId,
    pub travel: PwlFunction,
}

/// Directed graph in adjacency-array layout; edges of vertex `u` are
/// `edges[first_out[u]..first_out[u + 1]]`.
#[derive(Debug, Clone)]
pub struct TdGraph {
    first_out: Vec<usize>,
    edges: Vec<Edge>,
}

impl TdGraph {
    /// Builds a graph from `(tail, head, function)` triples. Edge order per tail is preserved.
    pub fn from_edges(vertex_count: usize, list: Vec<(VertexId, VertexId, PwlFunction)>) -> Self {
        let mut degree = vec![0usize; vertex_count + 1];
        for (u, _, _) in &list {
            degree[*u as usize + 1] += 1;
        }
        for i in 1..degree.len() {
            degree[i] += degree[i - 1];
        }
        let first_out = degree.clone();
        let mut slots: Vec<Option<Edge>> = (0..list.len()).map(|_| None).collect();
        let mut cursor = degree;
        for (u, v, f) in list {
            let at = cursor[u as usize];
            cursor[u as usize] += 1;
            slots[at] = Some(Edge { head: v, travel: f });
        }
        Self {
            first_out,
            edges: slots.into_iter().map(|e| e.expect("slot filled")).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.first_out.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edges(&self, u: VertexId) -> &[Edge] {
        let u = u as usize;
        &self.edges[self.first_out[u]..self.first_out[u + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, &Edge)> + '_ {
        (0..self.vertex_count() as VertexId).flat_map(move |u| self.out_edges(u).iter().map(move |e| (u, e)))
    }

    pub fn total_breakpoints(&self) -> usize {
        self.edges.iter().map(|e| e.travel.len()).sum()
    }

    /// Reverse adjacency as plain lists; used for connectivity checks.
    pub fn reversed_adjacency(&self) -> Vec<Vec<VertexId>> {
        let mut rev = vec![Vec::new(); self.vertex_count()];
        for (u, e) in self.edges() {
            rev[e.head as usize].push(u);
        }
        rev
    }

    /// True iff every vertex reaches and is reached by vertex 0.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.vertex_count();
        if n == 0 {
            return true;
        }
        let forward: Vec<Vec<VertexId>> = (0..n as VertexId)
            .map(|u| self.out_edges(u).iter().map(|e| e.head).collect())
            .collect();
        reaches_all(&forward) && reaches_all(&self.reversed_adjacency())
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.vertex_count(), self.edge_count());
        for (u, e) in self.edges() {
            let _ = write!(s, "{} {} {}", u, e.head, e.travel.len());
            for p in e.travel.points() {
                let _ = write!(s, " {} {}", p.t, p.w);
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn parse(text: &str, options: LoadOptions) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            message: "missing header `V E`".into(),
        })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 2 {
            return Err(GraphError::Parse {
                line: hline,
                message: format!("header must be `V E`, got `{header}`"),
            });
        }
        let vertex_count: usize = parse_num(head[0], hline, "vertex count")?;
        let edge_count: usize = parse_num(head[1], hline, "edge count")?;

        let mut list = Vec::with_capacity(edge_count);
        for (line, text) in lines.by_ref().take(edge_count) {
            list.push(parse_edge(text, line, vertex_count, options)?);
        }
        if list.len() != edge_count {
            return Err(GraphError::Parse {
                line: hline,
                message: format!("header announces {edge_count} edges, found {}", list.len()),
            });
        }
        if let Some((line, _)) = lines.next() {
            return Err(GraphError::Parse {
                line,
                message: format!("more than the {edge_count} announced edges"),
            });
        }
        Ok(Self::from_edges(vertex_count, list))
    }

    pub fn load(path: impl AsRef<Path>, options: LoadOptions) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, options)
    }
}

/// Reads and validates a network file.
pub fn load_network(path: impl AsRef<Path>, options: LoadOptions) -> Result<TdGraph, GraphError> {
    TdGraph::load(path, options)
}

fn reaches_all(adj: &[Vec<VertexId>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0 as VertexId];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u as usize] {
            if !seen[v as usize] {
                seen[v as usize] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, GraphError> {
    tok.parse().map_err(|_| GraphError::Parse {
        line,
        message: format!("invalid {what} `{tok}`"),
    })
}

fn parse_edge(
    text: &str,
    line: usize,
    vertex_count: usize,
    options: LoadOptions,
) -> Result<(VertexId, VertexId, PwlFunction), GraphError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() < 3 {
        return Err(GraphError::Parse {
            line,
            message: "edge line must be `u v k t1 w1 ... tk wk`".into(),
        });
    }
    let vertex = |tok: &str| -> Result<VertexId, GraphError> {
        let id: u64 = parse_num(tok, line, "vertex id")?;
        if id as usize >= vertex_count {
            return Err(GraphError::DanglingVertex {
                line,
                vertex: id,
                vertex_count,
            });
        }
        Ok(id as VertexId)
    };
    let tail = vertex(toks[0])?;
    let head = vertex(toks[1])?;
    let k: usize = parse_num(toks[2], line, "breakpoint count")?;
    if k == 0 {
        return Err(GraphError::Parse {
            line,
            message: "an edge needs at least one breakpoint".into(),
        });
    }
    if toks.len() != 3 + 2 * k {
        return Err(GraphError::Parse {
            line,
            message: format!("expected {} numbers for {k} breakpoints, got {}", 2 * k, toks.len() - 3),
        });
    }
    let mut points = Vec::with_capacity(k);
    for i in 0..k {
        let t: f64 = parse_num(toks[3 + 2 * i], line, "breakpoint time")?;
        let w: f64 = parse_num(toks[4 + 2 * i], line, "breakpoint weight")?;
        if let Some(prev) = points.last().map(|p: &Point| p.t) {
            if t <= prev {
                return Err(GraphError::Parse {
                    line,
                    message: "non-increasing breakpoint times".into(),
                });
            }
        }
        points.push(Point::new(t, w));
    }
    let raw = PwlFunction::new(points).map_err(|source| GraphError::Function {
        line,
        tail,
        head,
        source,
    })?;
    let normalized = normalize_to_day(&raw);
    let travel = if options.repair_fifo {
        PwlFunction::with_fifo_repair(normalized.points().to_vec()).expect("validated above")
    } else {
        if let Some(source) = normalized.fifo_violation() {
            return Err(GraphError::Fifo {
                line,
                tail,
                head,
                source,
            });
        }
        normalized
    };
    Ok((tail, head, travel))
}

/// Restricts a function to `[0, DAY]` and extends it with constant pieces so that both
/// ends of the day are breakpoints.
pub fn normalize_to_day(f: &PwlFunction) -> PwlFunction {
    let (lo, hi) = f.domain();
    if lo == 0.0 && hi == DAY {
        return f.clone();
    }
    let mut pts = Vec::with_capacity(f.len() + 2);
    pts.push(Point::new(0.0, f.eval(0.0)));
    pts.extend(f.points().iter().copied().filter(|p| p.t > 0.0 && p.t < DAY));
    pts.push(Point::new(DAY, f.eval(DAY)));
    PwlFunction::new(pts).expect("normalized breakpoints stay valid")
}

/// Parameters of the synthetic network generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub vertices: usize,
    /// Target edges per vertex; the ring backbone already provides one.
    pub avg_degree: f64,
    pub breakpoints_per_edge: usize,
    pub seed: u64,
    /// Free-flow weights are drawn uniformly from this range (seconds).
    pub base_weight: (f64, f64),
    /// Congestion multiplier range applied over the day.
    pub factor_range: (f64, f64),
}

impl SyntheticConfig {
    pub fn new(vertices: usize, avg_degree: f64, breakpoints_per_edge: usize, seed: u64) -> Self {
        Self {
            vertices,
            avg_degree,
            breakpoints_per_edge,
            seed,
            base_weight: (20.0, 180.0),
            factor_range: (1.0, 3.0),
        }
    }
}

/// Ring backbone plus random chords; each edge's weight is a base free-flow time times a
/// smooth congestion profile with morning and evening peaks.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> TdGraph {
    assert!(cfg.vertices >= 2, "a synthetic network needs at least two vertices");
    let n = cfg.vertices;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs: Vec<(VertexId, VertexId)> = (0..n)
        .map(|u| (u as VertexId, ((u + 1) % n) as VertexId))
        .collect();
    let mut present: std::collections::HashSet<(VertexId, VertexId)> = pairs.iter().copied().collect();

    let target = ((cfg.avg_degree * n as f64).round() as usize).min(n * (n - 1));
    let mut attempts = 0;
    while pairs.len() < target && attempts < 50 * target {
        attempts += 1;
        let u = rng.gen_range(0..n) as VertexId;
        let v = rng.gen_range(0..n) as VertexId;
        if u != v && present.insert((u, v)) {
            pairs.push((u, v));
        }
    }

    let k = cfg.breakpoints_per_edge.max(1);
    let list = pairs
        .into_iter()
        .map(|(u, v)| {
            let base = rng.gen_range(cfg.base_weight.0..=cfg.base_weight.1);
            let intensity: f64 = rng.gen_range(0.0..=1.0);
            let points: Vec<Point> = (0..k)
                .map(|i| {
                    let t = if k == 1 { 0.0 } else { DAY * i as f64 / (k - 1) as f64 };
                    let factor = cfg.factor_range.0
                        + (cfg.factor_range.1 - cfg.factor_range.0) * intensity * rush_hour(t);
                    Point::new(t, base * factor)
                })
                .collect();
            let f = PwlFunction::with_fifo_repair(points).expect("generated breakpoints are valid");
            (u, v, normalize_to_day(&f))
        })
        .collect();
    TdGraph::from_edges(n, list)
}

/// Congestion shape in [0, 1]: Gaussian bumps at 8:00 and 18:00.
fn rush_hour(t: f64) -> f64 {
    let bump = |center: f64| {
        let z = (t - center) / 5_400.0;
        (-z * z).exp()
    };
    bump(8.0 * 3_600.0).max(bump(18.0 * 3_600.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_instance_loads() {
        let g = TdGraph::parse("2 1\n0 1 2 0 10 86400 10\n", LoadOptions::default()).unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let e = &g.out_edges(0)[0];
        assert_eq!(e.head, 1);
        assert_eq!(e.travel.eval(12_345.0), 10.0);
    }

    #[test]
    fn worked_example_edge_evaluates() {
        let g = TdGraph::parse("2 1\n0 1 2 28800 600 29400 1200\n", LoadOptions::default()).unwrap();
        let f = &g.out_edges(0)[0].travel;
        assert_eq!(f.eval(28_800.0), 600.0);
        assert_eq!(f.domain(), (0.0, DAY));
    }

    #[test]
    fn rejects_non_increasing_times() {
        let err = TdGraph::parse("2 1\n0 1 2 50 10 40 10\n", LoadOptions::default()).unwrap_err();
        match err {
            GraphError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("non-increasing breakpoint times"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_dangling_vertex() {
        let err = TdGraph::parse("2 1\n0 7 1 0 10\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, GraphError::DanglingVertex { line: 2, vertex: 7, .. }));
    }

    #[test]
    fn fifo_violation_names_edge_or_gets_repaired() {
        let text = "2 1\n1 0 2 0 100 10 10\n";
        let err = TdGraph::parse(text, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, GraphError::Fifo { tail: 1, head: 0, .. }), "{err}");
        let g = TdGraph::parse(text, LoadOptions { repair_fifo: true }).unwrap();
        assert!(g.out_edges(1)[0].travel.is_fifo());
        assert_eq!(g.out_edges(1)[0].travel.eval(10.0), 90.0);
    }

    #[test]
    fn edge_count_mismatch_is_reported() {
        assert!(TdGraph::parse("2 2\n0 1 1 0 10\n", LoadOptions::default()).is_err());
        assert!(TdGraph::parse("2 1\n0 1 1 0 10\n1 0 1 0 10\n", LoadOptions::default()).is_err());
        assert!(TdGraph::parse("2 1\n0 1 2 0 10\n", LoadOptions::default()).is_err());
    }

    #[test]
    fn two_vertex_ring() {
        let g = generate_synthetic(&SyntheticConfig::new(2, 1.0, 2, 1));
        assert_eq!(g.out_edges(0)[0].head, 1);
        assert_eq!(g.out_edges(1)[0].head, 0);
        assert!(g.is_strongly_connected());
    }

    #[test]
    fn generator_is_deterministic_and_fifo() {
        let cfg = SyntheticConfig::new(100, 2.2, 4, 7);
        let a = generate_synthetic(&cfg);
        let b = generate_synthetic(&cfg);
        assert_eq!(a.serialize(), b.serialize());
        assert_eq!(a.edge_count(), 220);
        assert!(a.edges().all(|(_, e)| e.travel.is_fifo()));
        assert!(a.is_strongly_connected());
        for (_, e) in a.edges() {
            assert_eq!(e.travel.domain(), (0.0, DAY));
            assert!(e.travel.min_value() >= cfg.base_weight.0 - 1e-9);
        }
    }

    #[test]
    fn serialization_round_trips() {
        let g = generate_synthetic(&SyntheticConfig::new(30, 3.0, 5, 11));
        let h = TdGraph::parse(&g.serialize(), LoadOptions::default()).unwrap();
        assert_eq!(g.edge_count(), h.edge_count());
        for ((u1, e1), (u2, e2)) in g.edges().zip(h.edges()) {
            assert_eq!((u1, e1.head), (u2, e2.head));
            assert_eq!(e1.travel.points(), e2.travel.points());
        }
    }
}
