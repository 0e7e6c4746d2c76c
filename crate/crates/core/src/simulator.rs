//! Event-driven replay of a trace under a GPU rental policy.
//!
//! Fixed-width policies never queue, so every completion is known at arrival
//! and the rented-GPU curve `K(t)` is assembled from per-job intervals. The
//! dynamic baselines re-divide a fixed pool at every arrival and completion;
//! between events each job's remaining work drains linearly at its current
//! speed, so the next completion is found in closed form.
//!
//! Jobs with equal arrival times are processed in `(type, size)` order, then
//! input order, which makes the aggregate metrics independent of how ties
//! were listed in the trace.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::workload::{Trace, TraceError, TraceEvent, WorkloadSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("policy has {got} widths but the workload has {expected} types")]
    Dimension { expected: usize, got: usize },
    #[error("invalid policy parameter: {0}")]
    Parameter(String),
    #[error("sample step must be positive, got {0}")]
    Step(f64),
    #[error("cannot parse policy `{0}`")]
    Parse(String),
}

/// How GPUs are rented and divided among jobs.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Every type-`i` job gets `ks[i]` GPUs for its whole life.
    FixedWidth(Vec<f64>),
    /// Every job gets the same width.
    UniformWidth(f64),
    /// A cluster of `C` GPUs, rented whenever any job is present, split
    /// equally among present jobs.
    StaticClusterEqualSplit(f64),
    /// A pool of `cluster` GPUs handed out in order of least remaining work,
    /// at most `k_cap` per job. A simplified size-priority proxy, not heSRPT.
    SmallestRemainingFirst { cluster: f64, k_cap: f64 },
}

impl Policy {
    pub fn check(&self, types: usize) -> Result<(), SimError> {
        let at_least_one = |name: &str, v: f64| {
            if v >= 1.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::Parameter(format!(
                    "{name} must be finite and at least 1, got {v}"
                )))
            }
        };
        match self {
            Policy::FixedWidth(ks) => {
                if ks.len() != types {
                    return Err(SimError::Dimension {
                        expected: types,
                        got: ks.len(),
                    });
                }
                ks.iter().try_for_each(|&k| at_least_one("width", k))
            }
            Policy::UniformWidth(k) => at_least_one("width", *k),
            Policy::StaticClusterEqualSplit(c) => at_least_one("cluster size", *c),
            Policy::SmallestRemainingFirst { cluster, k_cap } => {
                at_least_one("cluster size", *cluster)?;
                at_least_one("per-job cap", *k_cap)
            }
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::FixedWidth(ks) => {
                let ks: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
                write!(f, "fixed:{}", ks.join(","))
            }
            Policy::UniformWidth(k) => write!(f, "uniform:{k}"),
            Policy::StaticClusterEqualSplit(c) => write!(f, "cluster:{c}"),
            Policy::SmallestRemainingFirst { cluster, k_cap } => write!(f, "srf:{cluster},{k_cap}"),
        }
    }
}

impl FromStr for Policy {
    type Err = SimError;

    /// `fixed:k1,...,kM`, `uniform:k`, `cluster:C` or `srf:C,kcap`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimError::Parse(s.to_string());
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind.trim(), nums.as_slice()) {
            ("fixed", ks) if !ks.is_empty() => Ok(Policy::FixedWidth(ks.to_vec())),
            ("uniform", &[k]) => Ok(Policy::UniformWidth(k)),
            ("cluster", &[c]) => Ok(Policy::StaticClusterEqualSplit(c)),
            ("srf", &[cluster, k_cap]) => Ok(Policy::SmallestRemainingFirst { cluster, k_cap }),
            _ => Err(bad()),
        }
    }
}

/// Outcome of one job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JobRecord {
    pub type_index: usize,
    pub size: f64,
    pub arrival: f64,
    /// First instant the job held GPUs.
    pub start: f64,
    pub completion: f64,
    pub response_time: f64,
    pub gpu_hours: f64,
    /// Work completed; equals `size` up to rounding.
    pub work_done: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub job_count: usize,
    /// Absent for an empty trace.
    pub mean_response_time: Option<f64>,
    /// `total_gpu_hours / horizon`, zero for an empty trace.
    pub time_avg_budget: f64,
    /// Integral of `K(t)` over the run.
    pub total_gpu_hours: f64,
    /// Last completion time.
    pub horizon: f64,
    #[serde(skip)]
    pub per_job: Vec<JobRecord>,
}

/// A simulated run: per-job outcomes plus the exact step function `K(t)`.
#[derive(Debug, Clone)]
struct Run {
    jobs: Vec<JobRecord>,
    /// `(t, K)` meaning K holds on `[t, next t)`.
    steps: Vec<(f64, f64)>,
}

impl Run {
    fn metrics(self) -> SimMetrics {
        let job_count = self.jobs.len();
        let horizon = self.jobs.iter().map(|j| j.completion).fold(0.0, f64::max);
        let total_gpu_hours: f64 = self
            .steps
            .windows(2)
            .map(|w| w[0].1 * (w[1].0 - w[0].0))
            .sum();
        let mean_response_time = (job_count > 0)
            .then(|| self.jobs.iter().map(|j| j.response_time).sum::<f64>() / job_count as f64);
        let time_avg_budget = if horizon > 0.0 {
            total_gpu_hours / horizon
        } else {
            0.0
        };
        SimMetrics {
            job_count,
            mean_response_time,
            time_avg_budget,
            total_gpu_hours,
            horizon,
            per_job: self.jobs,
        }
    }

    /// Right-continuous `K(t)`.
    fn level_at(&self, t: f64) -> f64 {
        let idx = self.steps.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.steps[idx - 1].1
        }
    }
}

fn canonical_order(events: &[TraceEvent]) -> Vec<TraceEvent> {
    let mut sorted = events.to_vec();
    sorted.sort_by(|a, b| {
        a.arrival_time
            .total_cmp(&b.arrival_time)
            .then(a.type_index.cmp(&b.type_index))
            .then(a.size.total_cmp(&b.size))
    });
    sorted
}

fn run(trace: &Trace, spec: &WorkloadSpec, policy: &Policy) -> Result<Run, SimError> {
    trace.check_against(spec)?;
    policy.check(spec.len())?;
    let events = canonical_order(trace.events());
    Ok(match policy {
        Policy::FixedWidth(ks) => run_fixed(&events, spec, |i| ks[i]),
        Policy::UniformWidth(k) => run_fixed(&events, spec, |_| *k),
        Policy::StaticClusterEqualSplit(c) => run_dynamic(&events, spec, &mut EqualSplit(*c)),
        Policy::SmallestRemainingFirst { cluster, k_cap } => run_dynamic(
            &events,
            spec,
            &mut SmallestFirst {
                cluster: *cluster,
                k_cap: *k_cap,
            },
        ),
    })
}

fn run_fixed(events: &[TraceEvent], spec: &WorkloadSpec, width: impl Fn(usize) -> f64) -> Run {
    let mut jobs = Vec::with_capacity(events.len());
    // (time, +1 start / -1 end, width)
    let mut changes: Vec<(f64, i8, f64)> = Vec::with_capacity(2 * events.len());
    for e in events {
        let k = width(e.type_index);
        let duration = e.size / spec.types()[e.type_index].speedup.speed(k);
        let completion = e.arrival_time + duration;
        jobs.push(JobRecord {
            type_index: e.type_index,
            size: e.size,
            arrival: e.arrival_time,
            start: e.arrival_time,
            completion,
            response_time: duration,
            gpu_hours: k * duration,
            work_done: e.size,
        });
        changes.push((e.arrival_time, 1, k));
        changes.push((completion, -1, k));
    }
    changes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut steps = vec![(0.0, 0.0)];
    let (mut level, mut active) = (0.0f64, 0i64);
    let mut i = 0;
    while i < changes.len() {
        let t = changes[i].0;
        while i < changes.len() && changes[i].0 == t {
            let (_, sign, k) = changes[i];
            level += f64::from(sign) * k;
            active += i64::from(sign);
            i += 1;
        }
        if active == 0 {
            level = 0.0;
        }
        push_step(&mut steps, t, level);
    }
    Run { jobs, steps }
}

fn push_step(steps: &mut Vec<(f64, f64)>, t: f64, level: f64) {
    match steps.last_mut() {
        Some(last) if last.0 == t => last.1 = level,
        Some(last) if last.1 == level => {}
        _ => steps.push((t, level)),
    }
}

struct Active {
    record: usize,
    type_index: usize,
    arrival: f64,
    size: f64,
    remaining: f64,
    alloc: f64,
    speed: f64,
}

trait Divide {
    /// Sets `alloc` on every present job.
    fn divide(&mut self, jobs: &mut [Active]);
}

struct EqualSplit(f64);

impl Divide for EqualSplit {
    fn divide(&mut self, jobs: &mut [Active]) {
        let share = self.0 / jobs.len() as f64;
        for j in jobs {
            j.alloc = share;
        }
    }
}

struct SmallestFirst {
    cluster: f64,
    k_cap: f64,
}

impl Divide for SmallestFirst {
    fn divide(&mut self, jobs: &mut [Active]) {
        jobs.sort_by(|a, b| {
            a.remaining
                .total_cmp(&b.remaining)
                .then(a.arrival.total_cmp(&b.arrival))
                .then(a.type_index.cmp(&b.type_index))
                .then(a.size.total_cmp(&b.size))
                .then(a.record.cmp(&b.record))
        });
        let mut pool = self.cluster;
        for j in jobs {
            let grant = self.k_cap.min(pool).max(0.0);
            j.alloc = grant;
            pool -= grant;
        }
    }
}

fn run_dynamic(events: &[TraceEvent], spec: &WorkloadSpec, divider: &mut dyn Divide) -> Run {
    let mut jobs: Vec<JobRecord> = events
        .iter()
        .map(|e| JobRecord {
            type_index: e.type_index,
            size: e.size,
            arrival: e.arrival_time,
            start: f64::NAN,
            completion: f64::NAN,
            response_time: f64::NAN,
            gpu_hours: 0.0,
            work_done: 0.0,
        })
        .collect();
    let mut steps = vec![(0.0, 0.0)];
    let mut active: Vec<Active> = Vec::new();
    let mut next = 0;
    let mut now = 0.0f64;

    while next < events.len() || !active.is_empty() {
        let next_arrival = events.get(next).map_or(f64::INFINITY, |e| e.arrival_time);
        let until_completion = active
            .iter()
            .filter(|j| j.speed > 0.0)
            .map(|j| j.remaining / j.speed)
            .fold(f64::INFINITY, f64::min);
        let completion_time = now + until_completion;
        let t = next_arrival.min(completion_time);
        let dt = t - now;

        if !active.is_empty() {
            let finishing_by_completion = completion_time <= next_arrival;
            for j in active.iter_mut() {
                let rec = &mut jobs[j.record];
                rec.gpu_hours += j.alloc * dt;
                if j.speed <= 0.0 {
                    continue;
                }
                let finishes = finishing_by_completion
                    && j.remaining / j.speed <= until_completion * (1.0 + 1e-12);
                let work = if finishes {
                    j.remaining
                } else {
                    (j.speed * dt).min(j.remaining)
                };
                rec.work_done += work;
                j.remaining = if finishes { 0.0 } else { j.remaining - work };
            }
        }
        now = t;

        active.retain(|j| {
            if j.remaining > 0.0 {
                return true;
            }
            let rec = &mut jobs[j.record];
            rec.completion = now;
            rec.response_time = now - rec.arrival;
            false
        });
        while next < events.len() && events[next].arrival_time <= now {
            let e = &events[next];
            active.push(Active {
                record: next,
                type_index: e.type_index,
                arrival: e.arrival_time,
                size: e.size,
                remaining: e.size,
                alloc: 0.0,
                speed: 0.0,
            });
            next += 1;
        }

        let mut level = 0.0;
        if !active.is_empty() {
            divider.divide(&mut active);
            for j in active.iter_mut() {
                j.speed = spec.types()[j.type_index].speedup.eval_extended(j.alloc);
                level += j.alloc;
                let rec = &mut jobs[j.record];
                if j.alloc > 0.0 && rec.start.is_nan() {
                    rec.start = now;
                }
            }
        }
        push_step(&mut steps, now, level);
    }
    Run { jobs, steps }
}

/// Replays `trace` under `policy`. Every job runs to completion.
pub fn simulate(
    trace: &Trace,
    spec: &WorkloadSpec,
    policy: &Policy,
) -> Result<SimMetrics, SimError> {
    Ok(run(trace, spec, policy)?.metrics())
}

/// Simulates every policy on the same trace; results keep the input order.
pub fn compare_policies(
    trace: &Trace,
    spec: &WorkloadSpec,
    policies: &[Policy],
) -> Result<Vec<(Policy, SimMetrics)>, SimError> {
    policies
        .par_iter()
        .map(|p| simulate(trace, spec, p).map(|m| (p.clone(), m)))
        .collect()
}

/// Samples the exact `K(t)` at `0, step, 2 step, ...` through the first
/// sample at or after the last completion. At an event instant the value
/// after the event is reported.
pub fn budget_timeseries(
    trace: &Trace,
    spec: &WorkloadSpec,
    policy: &Policy,
    step: f64,
) -> Result<Vec<(f64, f64)>, SimError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(SimError::Step(step));
    }
    let run = run(trace, spec, policy)?;
    let horizon = run.jobs.iter().map(|j| j.completion).fold(0.0, f64::max);
    let samples = (horizon / step).ceil() as usize + 1;
    Ok((0..samples)
        .map(|i| {
            let t = i as f64 * step;
            (t, run.level_at(t))
        })
        .collect())
}

/// Largest parameter in `[lo, hi]` whose simulated time-average budget stays
/// within `budget`, found by bisection on the policy family `make`.
///
/// Returns `None` when even `lo` overspends. The simulated budget need not be
/// exactly monotone in the parameter; the bisection assumes it is.
pub fn calibrate_to_budget(
    trace: &Trace,
    spec: &WorkloadSpec,
    make: impl Fn(f64) -> Policy,
    budget: f64,
    lo: f64,
    hi: f64,
) -> Result<Option<(f64, SimMetrics)>, SimError> {
    let at = |x: f64| simulate(trace, spec, &make(x));
    let low = at(lo)?;
    if low.time_avg_budget > budget {
        return Ok(None);
    }
    let high = at(hi)?;
    if high.time_avg_budget <= budget {
        return Ok(Some((hi, high)));
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut best = (lo, low);
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        let m = at(mid)?;
        match m.time_avg_budget.partial_cmp(&budget) {
            Some(Ordering::Greater) => hi = mid,
            _ => {
                lo = mid;
                best = (mid, m);
            }
        }
    }
    Ok(Some(best))
}
