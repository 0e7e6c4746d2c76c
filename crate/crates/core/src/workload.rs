//! Job-type populations, the workload document, and arrival traces.
//!
//! A [`WorkloadSpec`] is read from JSON:
//!
//! ```json
//! {
//!   "types": [
//!     {"name": "bert", "speedup": {"kind": "amdahl", "p": 0.8},
//!      "arrival_rate": 0.4, "size_dist": {"kind": "exponential", "mean": 1.0}}
//!   ],
//!   "budget": 2.0
//! }
//! ```
//!
//! Traces are CSV files with header `arrival_time,type,size`.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Weibull};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::speedup::SpeedupFunction;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("workload needs at least one job type")]
    NoTypes,
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unstable workload: total load {total_load} must be below budget {budget}")]
    Unstable { total_load: f64, budget: f64 },
    #[error("cannot parse workload document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read workload document: {0}")]
    Io(#[from] io::Error),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> WorkloadError {
    WorkloadError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Job-size distribution, in single-GPU work-hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeDist {
    Deterministic { value: f64 },
    Exponential { mean: f64 },
    BoundedPareto { shape: f64, min: f64, max: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl SizeDist {
    pub fn check(&self) -> Result<(), String> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let ok = match *self {
            SizeDist::Deterministic { value } => pos(value),
            SizeDist::Exponential { mean } => pos(mean),
            SizeDist::BoundedPareto { shape, min, max } => {
                pos(shape) && pos(min) && pos(max) && min < max
            }
            SizeDist::Weibull { shape, scale } => pos(shape) && pos(scale),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid parameters {self:?}"))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SizeDist::Deterministic { value } => value,
            SizeDist::Exponential { mean } => mean,
            SizeDist::BoundedPareto { shape, min, max } => {
                let tail = 1.0 - (min / max).powf(shape);
                if (shape - 1.0).abs() < 1e-12 {
                    min * max / (max - min) * (max / min).ln()
                } else {
                    shape * min.powf(shape) / tail * (max.powf(1.0 - shape) - min.powf(1.0 - shape))
                        / (1.0 - shape)
                }
            }
            SizeDist::Weibull { shape, scale } => {
                scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SizeDist::Deterministic { value } => value,
            SizeDist::Exponential { mean } => {
                Exp::new(1.0 / mean).expect("checked rate").sample(rng)
            }
            SizeDist::BoundedPareto { shape, min, max } => {
                let u: f64 = rng.random();
                let tail = 1.0 - (min / max).powf(shape);
                (min * (1.0 - u * tail).powf(-1.0 / shape)).clamp(min, max)
            }
            SizeDist::Weibull { shape, scale } => Weibull::new(scale, shape)
                .expect("checked parameters")
                .sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobType {
    pub name: String,
    pub speedup: SpeedupFunction,
    /// Jobs per hour.
    pub arrival_rate: f64,
    pub size_dist: SizeDist,
}

impl JobType {
    pub fn new(
        name: impl Into<String>,
        speedup: SpeedupFunction,
        arrival_rate: f64,
        size_dist: SizeDist,
    ) -> Self {
        Self {
            name: name.into(),
            speedup,
            arrival_rate,
            size_dist,
        }
    }

    pub fn mean_size(&self) -> f64 {
        self.size_dist.mean()
    }

    /// Work arriving per hour, `arrival_rate * E[size]`.
    pub fn load(&self) -> f64 {
        self.arrival_rate * self.mean_size()
    }

    fn check(&self, index: usize) -> Result<(), WorkloadError> {
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(invalid(
                format!("types[{index}].arrival_rate"),
                "must be finite and positive",
            ));
        }
        self.size_dist
            .check()
            .map_err(|r| invalid(format!("types[{index}].size_dist"), r))?;
        let mean = self.mean_size();
        if !(mean.is_finite() && mean > 0.0) {
            return Err(invalid(
                format!("types[{index}].size_dist"),
                "mean must be finite and positive",
            ));
        }
        Ok(())
    }
}

/// Job types plus the time-average GPU budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorkloadDoc", into = "WorkloadDoc")]
pub struct WorkloadSpec {
    types: Vec<JobType>,
    budget: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    types: Vec<JobType>,
    budget: f64,
}

impl TryFrom<WorkloadDoc> for WorkloadSpec {
    type Error = WorkloadError;

    fn try_from(doc: WorkloadDoc) -> Result<Self, Self::Error> {
        WorkloadSpec::new(doc.types, doc.budget)
    }
}

impl From<WorkloadSpec> for WorkloadDoc {
    fn from(spec: WorkloadSpec) -> Self {
        WorkloadDoc {
            types: spec.types,
            budget: spec.budget,
        }
    }
}

impl WorkloadSpec {
    /// Checks the structure of every type and the budget. Stability is
    /// checked separately by [`check_stability`](Self::check_stability) so
    /// that sweeps can carry budgets at or below the load.
    pub fn new(types: Vec<JobType>, budget: f64) -> Result<Self, WorkloadError> {
        if types.is_empty() {
            return Err(WorkloadError::NoTypes);
        }
        for (i, t) in types.iter().enumerate() {
            t.check(i)?;
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(invalid("budget", "must be finite and positive"));
        }
        Ok(Self { types, budget })
    }

    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serializes")
    }

    pub fn types(&self) -> &[JobType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn with_budget(&self, budget: f64) -> Result<Self, WorkloadError> {
        Self::new(self.types.clone(), budget)
    }

    /// Total arrival rate over all types.
    pub fn total_arrival_rate(&self) -> f64 {
        self.types.iter().map(|t| t.arrival_rate).sum()
    }

    pub fn loads(&self) -> Vec<f64> {
        self.types.iter().map(JobType::load).collect()
    }

    pub fn total_load(&self) -> f64 {
        self.types.iter().map(JobType::load).sum()
    }

    /// Total load must be strictly below the budget.
    pub fn check_stability(&self) -> Result<(), WorkloadError> {
        let total_load = self.total_load();
        if total_load < self.budget {
            Ok(())
        } else {
            Err(WorkloadError::Unstable {
                total_load,
                budget: self.budget,
            })
        }
    }
}

/// One job arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    /// Hours since the start of the trace.
    pub arrival_time: f64,
    pub type_index: usize,
    /// Single-GPU work-hours.
    pub size: f64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("line {line}: arrival time {time} is earlier than the previous row")]
    Unsorted { line: u64, time: f64 },
    #[error("line {line}: job size must be positive, got {size}")]
    BadSize { line: u64, size: f64 },
    #[error("event {index}: arrival times must be non-decreasing")]
    UnsortedEvent { index: usize },
    #[error("event {index}: invalid arrival time or size")]
    BadEvent { index: usize },
    #[error("event {index}: type index {type_index} is out of range for {types} job types")]
    UnknownType {
        index: usize,
        type_index: usize,
        types: usize,
    },
    #[error("trace is empty")]
    Empty,
    #[error("trace horizon is zero; arrival rates are undefined")]
    ZeroHorizon,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A finite sample path: arrivals sorted by time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    events: Vec<TraceEvent>,
    /// Seed that produced the trace, 0 for traces read from files.
    pub seed: u64,
}

impl Trace {
    pub fn new(events: Vec<TraceEvent>, seed: u64) -> Result<Self, TraceError> {
        for (index, e) in events.iter().enumerate() {
            if !(e.arrival_time.is_finite()
                && e.arrival_time >= 0.0
                && e.size.is_finite()
                && e.size > 0.0)
            {
                return Err(TraceError::BadEvent { index });
            }
            if index > 0 && e.arrival_time < events[index - 1].arrival_time {
                return Err(TraceError::UnsortedEvent { index });
            }
        }
        Ok(Self { events, seed })
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks that every event refers to a type of `spec`.
    pub fn check_against(&self, spec: &WorkloadSpec) -> Result<(), TraceError> {
        for (index, e) in self.events.iter().enumerate() {
            if e.type_index >= spec.len() {
                return Err(TraceError::UnknownType {
                    index,
                    type_index: e.type_index,
                    types: spec.len(),
                });
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["arrival_time", "type", "size"])?;
        for e in &self.events {
            w.write_record([
                e.arrival_time.to_string(),
                e.type_index.to_string(),
                e.size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TraceError> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["arrival_time", "type", "size"] {
            return Err(TraceError::Parse {
                line: 1,
                reason: "expected header `arrival_time,type,size`".into(),
            });
        }
        let mut events = Vec::new();
        let mut previous = f64::NEG_INFINITY;
        for record in r.records() {
            let record = record.map_err(|e| TraceError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<&str, TraceError> {
                record.get(i).ok_or_else(|| TraceError::Parse {
                    line,
                    reason: format!("missing {name}"),
                })
            };
            let parse_f64 = |s: &str, name: &str| -> Result<f64, TraceError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| TraceError::Parse {
                        line,
                        reason: format!("bad {name} `{s}`"),
                    })
            };
            let arrival_time = parse_f64(field(0, "arrival_time")?, "arrival_time")?;
            let type_str = field(1, "type")?;
            let type_index = type_str.parse::<usize>().map_err(|_| TraceError::Parse {
                line,
                reason: format!("bad type `{type_str}`"),
            })?;
            let size = parse_f64(field(2, "size")?, "size")?;
            if arrival_time < 0.0 {
                return Err(TraceError::Parse {
                    line,
                    reason: "negative arrival time".into(),
                });
            }
            if arrival_time < previous {
                return Err(TraceError::Unsorted {
                    line,
                    time: arrival_time,
                });
            }
            if size <= 0.0 {
                return Err(TraceError::BadSize { line, size });
            }
            previous = arrival_time;
            events.push(TraceEvent {
                arrival_time,
                type_index,
                size,
            });
        }
        Ok(Self { events, seed: 0 })
    }
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let file = File::create(path)?;
    trace.write_csv(io::BufWriter::new(file))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    let file = File::open(path)?;
    Trace::read_csv(io::BufReader::new(file))
}

/// How inter-arrival gaps are produced for each type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrivalProcess {
    /// Exponential gaps with mean `1 / arrival_rate`.
    #[default]
    Poisson,
    /// Fixed gaps of exactly `1 / arrival_rate`.
    Deterministic,
}

/// Poisson arrivals per type with i.i.d. sizes, merged by time.
pub fn generate_trace(spec: &WorkloadSpec, job_count: usize, seed: u64) -> Trace {
    generate_trace_with(spec, job_count, seed, ArrivalProcess::Poisson)
}

/// Each type draws from its own ChaCha stream, so a type's arrivals do not
/// depend on how many jobs the other types produced.
pub fn generate_trace_with(
    spec: &WorkloadSpec,
    job_count: usize,
    seed: u64,
    process: ArrivalProcess,
) -> Trace {
    struct Source<'a> {
        job: &'a JobType,
        rng: ChaCha8Rng,
        gap: Exp<f64>,
        next: f64,
    }

    impl Source<'_> {
        fn advance(&mut self, process: ArrivalProcess) {
            self.next += match process {
                ArrivalProcess::Poisson => self.gap.sample(&mut self.rng),
                ArrivalProcess::Deterministic => 1.0 / self.job.arrival_rate,
            };
        }
    }

    let mut sources: Vec<Source> = spec
        .types()
        .iter()
        .enumerate()
        .map(|(i, job)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let gap = Exp::new(job.arrival_rate).expect("arrival rate checked");
            let mut s = Source {
                job,
                rng,
                gap,
                next: 0.0,
            };
            s.advance(process);
            s
        })
        .collect();

    let mut events = Vec::with_capacity(job_count);
    while events.len() < job_count {
        let (type_index, src) = sources
            .iter_mut()
            .enumerate()
            .min_by(|a, b| a.1.next.total_cmp(&b.1.next))
            .expect("at least one type");
        let size = src.job.size_dist.sample(&mut src.rng);
        events.push(TraceEvent {
            arrival_time: src.next,
            type_index,
            size,
        });
        src.advance(process);
    }
    Trace { events, seed }
}

/// Per-type estimates of arrival rate, mean size and load from a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalLoad {
    pub arrival_rate: f64,
    pub mean_size: f64,
    pub load: f64,
}

/// Estimates `n_i(T) / T`, the mean size, and their product for each type,
/// with `T` the last arrival time. Types without arrivals report zeros.
pub fn empirical_loads(
    trace: &Trace,
    spec: &WorkloadSpec,
) -> Result<Vec<EmpiricalLoad>, TraceError> {
    let last = trace.events.last().ok_or(TraceError::Empty)?;
    trace.check_against(spec)?;
    let horizon = last.arrival_time;
    if horizon <= 0.0 {
        return Err(TraceError::ZeroHorizon);
    }
    let mut counts = vec![0usize; spec.len()];
    let mut work = vec![0.0f64; spec.len()];
    for e in &trace.events {
        counts[e.type_index] += 1;
        work[e.type_index] += e.size;
    }
    Ok(counts
        .iter()
        .zip(&work)
        .map(|(&n, &w)| {
            if n == 0 {
                EmpiricalLoad {
                    arrival_rate: 0.0,
                    mean_size: 0.0,
                    load: 0.0,
                }
            } else {
                let arrival_rate = n as f64 / horizon;
                let mean_size = w / n as f64;
                EmpiricalLoad {
                    arrival_rate,
                    mean_size,
                    load: arrival_rate * mean_size,
                }
            }
        })
        .collect())
}
