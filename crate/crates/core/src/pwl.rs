//! Piecewise-linear travel-time functions.
//!
//! A [`PwlFunction`] maps a departure time `t` to a non-negative travel time. Between
//! breakpoints it interpolates linearly; outside its domain it is clamped to the first
//! or last breakpoint value. All functions that take part in linking, merging or
//! inversion must satisfy FIFO: departing later never arrives earlier.

use thiserror::Error;

use crate::EPS;

/// Hard cap on breakpoints a derived function may accumulate.
pub const DEFAULT_MAX_POINTS: usize = 100_000;

/// Interior points this close to the line through their neighbours are dropped.
const COLLINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PwlError {
    #[error("a travel-time function needs at least one breakpoint")]
    Empty,
    #[error("non-finite breakpoint at index {index}")]
    NonFinite { index: usize },
    #[error("non-increasing breakpoint times at index {index} ({prev} >= {next})")]
    NonIncreasing { index: usize, prev: f64, next: f64 },
    #[error("negative travel time {w} at t = {t}")]
    Negative { t: f64, w: f64 },
    #[error("FIFO violated on the segment starting at t = {t} (slope {slope})")]
    NotFifo { t: f64, slope: f64 },
    #[error("domains [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}] do not overlap")]
    DisjointDomains {
        a_lo: f64,
        a_hi: f64,
        b_lo: f64,
        b_hi: f64,
    },
    #[error("function grew to {count} breakpoints, above the cap of {cap}")]
    TooManyPoints { count: usize, cap: usize },
}

/// One interpolation point: departing at `t` costs `w` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub t: f64,
    pub w: f64,
}

impl Point {
    pub const fn new(t: f64, w: f64) -> Self {
        Self { t, w }
    }

    #[inline]
    fn arrival(self) -> f64 {
        self.t + self.w
    }
}

impl From<(f64, f64)> for Point {
    fn from((t, w): (f64, f64)) -> Self {
        Self { t, w }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwlFunction {
    points: Vec<Point>,
}

impl PwlFunction {
    /// Builds a function from breakpoints, checking that times strictly increase and
    /// weights are finite and non-negative. FIFO is not enforced here; see
    /// [`PwlFunction::is_fifo`] and [`PwlFunction::with_fifo_repair`].
    pub fn new(points: Vec<Point>) -> Result<Self, PwlError> {
        validate(&points)?;
        Ok(Self { points })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, PwlError> {
        Self::new(pairs.iter().copied().map(Point::from).collect())
    }

    /// Like [`PwlFunction::new`], but every segment steeper than slope -1 is repaired by
    /// raising its right endpoint to `w_i - (t_{i+1} - t_i)`.
    pub fn with_fifo_repair(mut points: Vec<Point>) -> Result<Self, PwlError> {
        validate(&points)?;
        repair_fifo(&mut points);
        Ok(Self { points })
    }

    pub fn constant(w: f64, t_lo: f64, t_hi: f64) -> Self {
        let points = if t_hi > t_lo {
            vec![Point::new(t_lo, w), Point::new(t_hi, w)]
        } else {
            vec![Point::new(t_lo, w)]
        };
        Self { points }
    }

    pub fn zero(t_lo: f64, t_hi: f64) -> Self {
        Self::constant(0.0, t_lo, t_hi)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.points[0].t, self.points[self.points.len() - 1].t)
    }

    pub fn min_value(&self) -> f64 {
        self.points.iter().map(|p| p.w).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.points.iter().map(|p| p.w).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Travel time when departing at `t`, clamped to the boundary values outside the domain.
    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        let first = p[0];
        if t <= first.t {
            return first.w;
        }
        let last = p[p.len() - 1];
        if t >= last.t {
            return last.w;
        }
        let idx = p.partition_point(|q| q.t <= t);
        interpolate(p[idx - 1], p[idx], t)
    }

    /// Arrival time `t + f(t)`.
    #[inline]
    pub fn arrival(&self, t: f64) -> f64 {
        t + self.eval(t)
    }

    /// True iff the arrival function never decreases, i.e. every segment has slope >= -1.
    pub fn is_fifo(&self) -> bool {
        self.fifo_violation().is_none()
    }

    /// The first segment that breaks FIFO, if any.
    pub fn fifo_violation(&self) -> Option<PwlError> {
        self.points.windows(2).find_map(|s| {
            let (a, b) = (s[0], s[1]);
            (b.arrival() - a.arrival() < -EPS).then(|| PwlError::NotFifo {
                t: a.t,
                slope: (b.w - a.w) / (b.t - a.t),
            })
        })
    }

    fn require_fifo(&self) -> Result<(), PwlError> {
        match self.fifo_violation() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Composition: the travel time of traversing `self` and then `next`,
    /// `h(t) = f(t) + g(t + f(t))`, on the domain of `self`.
    pub fn link(&self, next: &PwlFunction) -> Result<PwlFunction, PwlError> {
        self.link_with_cap(next, DEFAULT_MAX_POINTS)
    }

    pub fn link_with_cap(&self, next: &PwlFunction, cap: usize) -> Result<PwlFunction, PwlError> {
        self.require_fifo()?;
        next.require_fifo()?;
        let fp = &self.points;
        let gp = &next.points;
        let mut out: Vec<Point> = Vec::with_capacity(fp.len() + gp.len());

        let mut gi = 0;
        let first = fp[0];
        while gi < gp.len() && gp[gi].t <= first.arrival() {
            gi += 1;
        }
        out.push(Point::new(first.t, first.w + next.eval(first.arrival())));

        for seg in fp.windows(2) {
            let (p, q) = (seg[0], seg[1]);
            let (ap, aq) = (p.arrival(), q.arrival());
            // Breakpoints of `next` hit strictly inside this segment's arrival range.
            while gi < gp.len() && gp[gi].t < aq {
                let s = gp[gi];
                let t = p.t + (s.t - ap) / (aq - ap) * (q.t - p.t);
                if t > out[out.len() - 1].t && t < q.t {
                    out.push(Point::new(t, (s.t - t).max(0.0) + s.w));
                }
                gi += 1;
            }
            while gi < gp.len() && gp[gi].t <= aq {
                gi += 1;
            }
            out.push(Point::new(q.t, q.w + next.eval(aq)));
        }

        finish(out, cap)
    }

    /// Pointwise minimum on the intersection of both domains.
    pub fn merge(&self, other: &PwlFunction) -> Result<PwlFunction, PwlError> {
        self.merge_reporting(other, DEFAULT_MAX_POINTS).map(|(h, _)| h)
    }

    /// Pointwise minimum plus a flag telling whether `other` is below `self` by more
    /// than the time tolerance anywhere on the common domain.
    pub fn merge_reporting(
        &self,
        other: &PwlFunction,
        cap: usize,
    ) -> Result<(PwlFunction, bool), PwlError> {
        let (a_lo, a_hi) = self.domain();
        let (b_lo, b_hi) = other.domain();
        let lo = a_lo.max(b_lo);
        let hi = a_hi.min(b_hi);
        if lo > hi {
            return Err(PwlError::DisjointDomains {
                a_lo,
                a_hi,
                b_lo,
                b_hi,
            });
        }

        let mut times: Vec<f64> = Vec::with_capacity(self.len() + other.len() + 2);
        times.push(lo);
        let (mut i, mut j) = (0, 0);
        let (fp, gp) = (&self.points, &other.points);
        loop {
            let next = match (fp.get(i), gp.get(j)) {
                (Some(a), Some(b)) if a.t <= b.t => {
                    i += 1;
                    a.t
                }
                (Some(_), Some(b)) => {
                    j += 1;
                    b.t
                }
                (Some(a), None) => {
                    i += 1;
                    a.t
                }
                (None, Some(b)) => {
                    j += 1;
                    b.t
                }
                (None, None) => break,
            };
            if next > lo && next < hi && next > times[times.len() - 1] {
                times.push(next);
            }
        }
        if hi > lo {
            times.push(hi);
        }

        let mut improved = false;
        let mut out = Vec::with_capacity(times.len() + 8);
        let mut prev: Option<(f64, f64, f64)> = None;
        for &t in &times {
            let (fv, gv) = (self.eval(t), other.eval(t));
            if gv < fv - EPS {
                improved = true;
            }
            if let Some((pt, pf, pg)) = prev {
                let (d0, d1) = (pf - pg, fv - gv);
                if (d0 > 0.0 && d1 < 0.0) || (d0 < 0.0 && d1 > 0.0) {
                    let tc = pt + (t - pt) * (d0 / (d0 - d1));
                    if tc > pt && tc < t {
                        let w = self.eval(tc).min(other.eval(tc));
                        out.push(Point::new(tc, w));
                    }
                }
            }
            out.push(Point::new(t, fv.min(gv)));
            prev = Some((t, fv, gv));
        }

        Ok((finish(out, cap)?, improved))
    }

    /// Latest departure `t` in the domain with `t + f(t) <= deadline`, or `None` when
    /// even the earliest departure arrives too late.
    pub fn latest_departure(&self, deadline: f64) -> Option<f64> {
        let p = &self.points;
        if p[0].arrival() > deadline {
            return None;
        }
        // Last breakpoint whose arrival still meets the deadline.
        let idx = p.partition_point(|q| q.arrival() <= deadline) - 1;
        if idx + 1 == p.len() {
            return Some(p[idx].t);
        }
        let (a, b) = (p[idx], p[idx + 1]);
        let (aa, ab) = (a.arrival(), b.arrival());
        let t = a.t + (deadline - aa) / (ab - aa) * (b.t - a.t);
        Some(t.clamp(a.t, b.t))
    }

    /// Same function with collinear interior breakpoints removed.
    pub fn compacted(&self) -> PwlFunction {
        PwlFunction {
            points: compact(&self.points),
        }
    }

    /// The same function on `[lo, hi]` intersected with the current domain. Values inside
    /// the new domain are unchanged; an empty intersection keeps the nearest end point.
    pub fn restricted(&self, lo: f64, hi: f64) -> PwlFunction {
        let (a, b) = self.domain();
        let (lo, hi) = (lo.max(a), hi.min(b));
        if lo > hi {
            let t = if hi < a { a } else { b };
            return PwlFunction {
                points: vec![Point::new(t, self.eval(t))],
            };
        }
        let mut points = Vec::with_capacity(self.len());
        points.push(Point::new(lo, self.eval(lo)));
        points.extend(self.points.iter().copied().filter(|p| p.t > lo && p.t < hi));
        if hi > lo {
            points.push(Point::new(hi, self.eval(hi)));
        }
        PwlFunction { points }
    }

    /// Shifts every breakpoint time by `dt`; handy when rebasing test fixtures.
    pub fn shifted(&self, dt: f64) -> PwlFunction {
        PwlFunction {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.t + dt, p.w))
                .collect(),
        }
    }
}

/// FIFO check as a free function, mirroring the other algebra entry points.
pub fn fifo_check(f: &PwlFunction) -> bool {
    f.is_fifo()
}

fn validate(points: &[Point]) -> Result<(), PwlError> {
    if points.is_empty() {
        return Err(PwlError::Empty);
    }
    for (index, p) in points.iter().enumerate() {
        if !p.t.is_finite() || !p.w.is_finite() {
            return Err(PwlError::NonFinite { index });
        }
        if p.w < 0.0 {
            return Err(PwlError::Negative { t: p.t, w: p.w });
        }
        if index > 0 && points[index - 1].t >= p.t {
            return Err(PwlError::NonIncreasing {
                index,
                prev: points[index - 1].t,
                next: p.t,
            });
        }
    }
    Ok(())
}

/// Raises right endpoints of segments steeper than -1, left to right.
pub(crate) fn repair_fifo(points: &mut [Point]) {
    for i in 1..points.len() {
        let floor = points[i - 1].w - (points[i].t - points[i - 1].t);
        if points[i].w < floor {
            points[i].w = floor;
        }
    }
}

#[inline]
fn interpolate(a: Point, b: Point, t: f64) -> f64 {
    a.w + (b.w - a.w) * ((t - a.t) / (b.t - a.t))
}

fn finish(points: Vec<Point>, cap: usize) -> Result<PwlFunction, PwlError> {
    let points = compact(&points);
    if points.len() > cap {
        return Err(PwlError::TooManyPoints {
            count: points.len(),
            cap,
        });
    }
    Ok(PwlFunction { points })
}

fn compact(points: &[Point]) -> Vec<Point> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(points.len());
    out.push(points[0]);
    let mut last_kept = 0;
    for i in 1..points.len() - 1 {
        let (a, c) = (points[last_kept], points[i + 1]);
        let droppable = points[last_kept + 1..=i]
            .iter()
            .all(|m| (interpolate(a, c, m.t) - m.w).abs() <= COLLINEAR_TOL);
        if !droppable {
            out.push(points[i]);
            last_kept = i;
        }
    }
    out.push(points[points.len() - 1]);
    out
}
