//! CSV input (requests, workers) and output (per-request metrics, sweep aggregates).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimError, SimResult, SweepRow};
use crate::routestate::{Request, Worker};

#[derive(Debug, Deserialize)]
struct RequestRow {
    id: u32,
    origin: u32,
    destination: u32,
    release_time: f64,
    deadline: f64,
    passengers: u32,
}

#[derive(Debug, Deserialize)]
struct WorkerRow {
    id: u32,
    start_vertex: u32,
    capacity: u32,
}

/// One metrics line as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub request_id: u32,
    pub algorithm: String,
    pub assigned_worker: String,
    pub objective_delta: Option<f64>,
    pub point_queries: u64,
    pub insertion_ns: u64,
    pub response_ns: u64,
    pub compound_breakpoints: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads `id,origin,destination,release_time,deadline,passengers`.
pub fn read_requests(path: impl AsRef<Path>) -> Result<Vec<Request>, SimError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: RequestRow = row?;
        out.push(Request::new(
            r.id,
            r.origin,
            r.destination,
            r.release_time,
            r.deadline,
            r.passengers,
        )?);
    }
    Ok(out)
}

/// Reads `id,start_vertex,capacity`; every worker starts idle at `start_time`.
pub fn read_workers(path: impl AsRef<Path>, start_time: f64) -> Result<Vec<Worker>, SimError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let w: WorkerRow = row?;
        out.push(Worker::new(w.id, w.start_vertex, w.capacity, start_time)?);
    }
    Ok(out)
}

/// Writes one row per request followed by `#`-prefixed summary lines.
pub fn write_metrics(path: impl AsRef<Path>, result: &SimResult) -> Result<(), SimError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut wtr = csv::Writer::from_writer(file);
    for r in &result.records {
        wtr.serialize(MetricsRow {
            request_id: r.request_id,
            algorithm: r.algorithm.name().to_string(),
            assigned_worker: r.assigned_worker.map_or_else(|| "NONE".to_string(), |w| w.to_string()),
            objective_delta: r.objective_delta,
            point_queries: r.point_queries,
            insertion_ns: r.insertion_ns,
            response_ns: r.response_ns,
            compound_breakpoints: r.compound_breakpoints,
        })?;
    }
    let mut file = wtr.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    let s = &result.summary;
    let lines = [
        format!("# total={}", s.total),
        format!("# served={}", s.served),
        format!("# rejected={}", s.rejected),
        format!("# served_ratio={:.6}", s.served_ratio),
        format!("# total_point_queries={}", s.total_point_queries),
        format!("# mean_point_queries={:.3}", s.mean_point_queries),
        format!("# mean_insertion_ns={:.1}", s.mean_insertion_ns),
        format!("# mean_response_ns={:.1}", s.mean_response_ns),
        format!("# peak_compound_breakpoints={}", s.peak_compound_breakpoints),
        format!("# profile_queries={}", s.profile_queries),
    ];
    for l in lines {
        writeln!(file, "{l}").map_err(io_err(path))?;
    }
    Ok(())
}

/// Writes sweep aggregates with a header row.
pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<(), SimError> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(io_err(path))?;
    Ok(())
}
