//! Insertion operators for ridesharing over time-dependent road networks.
//!
//! The crate is layered bottom-up:
//!
//! * [`pwl`]: piecewise-linear travel-time functions (evaluation, linking, merging, inversion).
//! * [`tdgraph`]: the time-dependent road network, its text format and a synthetic generator.
//! * [`tdsp`]: time-dependent point queries and travel-time profiles, with invocation counting.
//! * [`routestate`]: workers, requests, routes and the auxiliary arrays used by the fast operators.
//! * [`insertion`]: the cubic, quadratic and linear insertion operators.
//! * [`simbench`]: request-replay simulator, metrics CSV and the benchmark sweeps.

pub mod insertion;
pub mod pwl;
pub mod routestate;
pub mod simbench;
pub mod tdgraph;
pub mod tdsp;

/// Absolute tolerance (seconds) used for every time comparison.
pub const EPS: f64 = 1e-9;

/// Length of the modeled day in seconds.
pub const DAY: f64 = 86_400.0;
