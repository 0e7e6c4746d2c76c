//! Optimal fixed-width allocation under a time-average GPU budget.
//!
//! A fixed-width policy runs every type-`i` job on `k_i` GPUs from arrival to
//! completion. With `rho_i` the load of type `i`, its mean response time and
//! budget are
//!
//! ```text
//! E[T] = (1 / lambda) * sum_i rho_i / s_i(k_i)
//! B    =               sum_i rho_i * k_i / s_i(k_i)
//! ```
//!
//! and the optimal widths minimize `E[T]` subject to `B <= b`. The program is
//! separable, so [`solve_allocation`] relaxes the budget with a multiplier
//! `mu`, minimizes `(1 + mu k) / s(k)` for each type independently by
//! golden-section search, and bisects on `mu` until the budget binds.
//! [`brute_force_allocation`] solves the same program by exhaustive grid
//! search and exists to check the solver.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::speedup::{Axiom, SpeedupFunction};
use crate::workload::{WorkloadError, WorkloadSpec};

/// Default cap on any single allocation.
pub const DEFAULT_K_MAX: f64 = (1u64 << 20) as f64;

/// Largest number of types the grid oracle accepts.
pub const BRUTE_FORCE_MAX_TYPES: usize = 4;

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_MULTIPLIER: f64 = 1e300;
const TIE_ULPS: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("unstable: total load {total_load} must be below budget {budget}")]
    Unstable { total_load: f64, budget: f64 },
    #[error("speedup of type {index} fails {axioms:?}")]
    InvalidSpeedup { index: usize, axioms: Vec<Axiom> },
    #[error("expected {expected} widths, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("width k[{index}] = {k} is below 1")]
    Width { index: usize, k: f64 },
    #[error("grid search supports at most {BRUTE_FORCE_MAX_TYPES} types, got {0}")]
    TooManyTypes(usize),
    #[error("segment durations must be positive, got {0} and {1}")]
    NonPositiveDuration(f64, f64),
    #[error("invalid solver configuration: {0}")]
    Config(&'static str),
    #[error("budget bisection did not bracket the multiplier")]
    NoBracket,
}

impl From<WorkloadError> for SolveError {
    fn from(e: WorkloadError) -> Self {
        match e {
            WorkloadError::Unstable { total_load, budget } => {
                SolveError::Unstable { total_load, budget }
            }
            // Budgets handed to sweeps are the only other source.
            _ => SolveError::Config("invalid budget"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Upper bound on every `k_i`.
    pub k_max: f64,
    /// Relative slack allowed when matching the budget.
    pub budget_tol: f64,
    /// Relative width of the final multiplier bracket.
    pub bisect_tol: f64,
    /// Relative width of the per-type search bracket.
    pub inner_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            budget_tol: 1e-9,
            bisect_tol: 1e-12,
            inner_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn with_k_max(self, k_max: f64) -> Self {
        Self { k_max, ..self }
    }

    fn check(&self) -> Result<(), SolveError> {
        if !(self.k_max >= 1.0 && self.k_max.is_finite()) {
            return Err(SolveError::Config("k_max must be finite and at least 1"));
        }
        if !(self.budget_tol > 0.0 && self.bisect_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(SolveError::Config("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Per-type widths together with their predicted performance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub ks: Vec<f64>,
    /// Predicted mean response time, hours.
    pub objective: f64,
    /// Predicted time-average number of rented GPUs.
    pub budget_used: f64,
    /// Budget multiplier; zero when the budget does not bind.
    pub multiplier: f64,
    /// Some width sits at the cap.
    pub cap_active: bool,
}

impl Allocation {
    fn from_ks(spec: &WorkloadSpec, ks: Vec<f64>, multiplier: f64, k_max: f64) -> Self {
        let objective = objective_unchecked(spec, &ks);
        let budget_used = budget_unchecked(spec, &ks);
        let cap_active = ks.iter().any(|&k| k >= k_max);
        Self {
            ks,
            objective,
            budget_used,
            multiplier,
            cap_active,
        }
    }
}

fn check_widths(spec: &WorkloadSpec, ks: &[f64]) -> Result<(), SolveError> {
    if ks.len() != spec.len() {
        return Err(SolveError::Dimension {
            expected: spec.len(),
            got: ks.len(),
        });
    }
    for (index, &k) in ks.iter().enumerate() {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(SolveError::Width { index, k });
        }
    }
    Ok(())
}

fn objective_unchecked(spec: &WorkloadSpec, ks: &[f64]) -> f64 {
    let sum: f64 = spec
        .types()
        .iter()
        .zip(ks)
        .map(|(t, &k)| t.load() / t.speedup.speed(k))
        .sum();
    sum / spec.total_arrival_rate()
}

fn budget_unchecked(spec: &WorkloadSpec, ks: &[f64]) -> f64 {
    spec.types()
        .iter()
        .zip(ks)
        .map(|(t, &k)| t.load() * k / t.speedup.speed(k))
        .sum()
}

/// Predicted mean response time of the fixed-width policy `ks`.
pub fn objective(spec: &WorkloadSpec, ks: &[f64]) -> Result<f64, SolveError> {
    check_widths(spec, ks)?;
    Ok(objective_unchecked(spec, ks))
}

/// Predicted time-average GPU count of the fixed-width policy `ks`.
pub fn budget_usage(spec: &WorkloadSpec, ks: &[f64]) -> Result<f64, SolveError> {
    check_widths(spec, ks)?;
    Ok(budget_unchecked(spec, ks))
}

/// Minimizes `(1 + mu k) / s(k)` over `[1, k_max]`.
///
/// The search runs on `ln k`, so `inner_tol` is a relative tolerance on `k`.
/// Among ties the smallest `k` is returned. Exact ties only arise on flat
/// stretches of a tabular curve, where the earliest knot reaching the minimum
/// (within a few ulps) wins; `k = 1` wins any tie with the interior.
pub fn inner_minimize(f: &SpeedupFunction, mu: f64, cfg: &SolverConfig) -> f64 {
    let top = cfg.k_max.ln();
    let width = |u: f64| {
        if u >= top {
            cfg.k_max
        } else {
            u.exp().max(1.0)
        }
    };
    let g = |u: f64| {
        let k = width(u);
        (1.0 + mu * k) / f.speed(k)
    };

    let (mut lo, mut hi) = (0.0, top);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while hi - lo > cfg.inner_tol {
        if g1 <= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - INV_PHI * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + INV_PHI * (hi - lo);
            g2 = g(x2);
        }
    }

    // The endpoints are not probed by the interior iteration.
    let mut best_u = 0.0;
    let mut best = g(0.0);
    for u in [0.5 * (lo + hi), top] {
        let v = g(u);
        if v < best {
            best = v;
            best_u = u;
        }
    }

    let k = width(best_u);
    // Tabular curves are flat past their last knot; prefer the earliest knot
    // that already attains the minimum.
    if let SpeedupFunction::Tabular(t) = f {
        let threshold = best + TIE_ULPS * f64::EPSILON * best.abs();
        if let Some(&(knot, _)) = t
            .points()
            .iter()
            .filter(|&&(kk, _)| kk < k)
            .find(|&&(kk, s)| (1.0 + mu * kk) / s <= threshold)
        {
            return knot;
        }
    }
    k
}

fn minimizers(spec: &WorkloadSpec, mu: f64, cfg: &SolverConfig) -> Vec<f64> {
    spec.types()
        .iter()
        .map(|t| inner_minimize(&t.speedup, mu, cfg))
        .collect()
}

/// Solves for the optimal fixed widths under `spec.budget()`.
///
/// If the uncapped-by-budget solution (`mu = 0`, every width at `k_max`)
/// fits, it is returned with `cap_active` set. Otherwise the multiplier is
/// bisected until the budget binds; when the budget jumps across the bracket
/// (piecewise-linear speedups), widths are blended between the two bracket
/// solutions to spend the remainder.
pub fn solve_allocation(spec: &WorkloadSpec, cfg: &SolverConfig) -> Result<Allocation, SolveError> {
    cfg.check()?;
    spec.check_stability()?;
    for (index, t) in spec.types().iter().enumerate() {
        let report = t.speedup.validate_up_to(cfg.k_max);
        if !report.is_valid() {
            return Err(SolveError::InvalidSpeedup {
                index,
                axioms: report.failed_axioms(),
            });
        }
    }
    let b = spec.budget();

    let free = minimizers(spec, 0.0, cfg);
    if budget_unchecked(spec, &free) <= b {
        return Ok(Allocation::from_ks(spec, free, 0.0, cfg.k_max));
    }

    let (mut lo, mut hi) = (0.0, 1.0);
    let mut ks_lo = free;
    let mut ks_hi = minimizers(spec, hi, cfg);
    while budget_unchecked(spec, &ks_hi) > b {
        lo = hi;
        ks_lo = ks_hi;
        hi *= 2.0;
        if hi > MAX_MULTIPLIER {
            return Err(SolveError::NoBracket);
        }
        ks_hi = minimizers(spec, hi, cfg);
    }
    while hi - lo > cfg.bisect_tol * hi {
        let mid = 0.5 * (lo + hi);
        let ks = minimizers(spec, mid, cfg);
        if budget_unchecked(spec, &ks) > b {
            lo = mid;
            ks_lo = ks;
        } else {
            hi = mid;
            ks_hi = ks;
        }
    }

    let mut ks = ks_hi;
    if budget_unchecked(spec, &ks) < b * (1.0 - cfg.budget_tol) {
        ks = fill_budget(spec, &ks, &ks_lo, b);
    }
    Ok(Allocation::from_ks(spec, ks, hi, cfg.k_max))
}

/// Moves widths from `feasible` toward `over` as far as the budget allows.
fn fill_budget(spec: &WorkloadSpec, feasible: &[f64], over: &[f64], b: f64) -> Vec<f64> {
    let blend = |theta: f64| -> Vec<f64> {
        feasible
            .iter()
            .zip(over)
            .map(|(&a, &z)| a + theta * (z.max(a) - a))
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if budget_unchecked(spec, &blend(mid)) <= b {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    blend(lo)
}

/// Exhaustive search over the geometric grid `k = (1 + step)^j`, capped at
/// `k_max` (which is itself a candidate when affordable).
///
/// The widest affordable width is always best for the final coordinate, so
/// the last two types are scanned with a pair of monotone pointers and the
/// cost is `O(n^(M-1))` grid points per type rather than `O(n^M)`.
pub fn brute_force_allocation(
    spec: &WorkloadSpec,
    grid_step: f64,
    k_max: f64,
) -> Result<Allocation, SolveError> {
    let m = spec.len();
    if m > BRUTE_FORCE_MAX_TYPES {
        return Err(SolveError::TooManyTypes(m));
    }
    if grid_step.is_nan() || grid_step <= 0.0 || !k_max.is_finite() || k_max < 1.0 {
        return Err(SolveError::Config(
            "grid step must be positive and k_max finite",
        ));
    }
    spec.check_stability()?;
    let b = spec.budget();
    let loads = spec.loads();
    let total: f64 = loads.iter().sum();

    let tables: Vec<GridTable> = spec
        .types()
        .iter()
        .zip(&loads)
        .map(|(t, &rho)| {
            // Everyone else at k = 1 spends exactly their load.
            let allowance = b - (total - rho);
            GridTable::build(&t.speedup, rho, allowance, grid_step, k_max)
        })
        .collect();

    let (time, choice) = search(&tables, b).ok_or(SolveError::Unstable {
        total_load: total,
        budget: b,
    })?;
    debug_assert!(time.is_finite());
    let ks = choice.iter().zip(&tables).map(|(&j, t)| t.ks[j]).collect();
    Ok(Allocation::from_ks(spec, ks, 0.0, k_max))
}

struct GridTable {
    ks: Vec<f64>,
    cost: Vec<f64>,
    time: Vec<f64>,
}

impl GridTable {
    fn build(f: &SpeedupFunction, rho: f64, allowance: f64, step: f64, k_max: f64) -> Self {
        let mut table = GridTable {
            ks: Vec::new(),
            cost: Vec::new(),
            time: Vec::new(),
        };
        let ratio = 1.0 + step;
        let mut push = |k: f64| {
            let s = f.speed(k);
            let cost = rho * k / s;
            if cost > allowance && !table.ks.is_empty() {
                return false;
            }
            table.ks.push(k);
            table.cost.push(cost);
            table.time.push(rho / s);
            true
        };
        let mut j = 0i32;
        loop {
            let k = ratio.powi(j);
            if k >= k_max {
                push(k_max);
                break;
            }
            if !push(k) {
                break;
            }
            j += 1;
        }
        table
    }
}

/// Minimum total time over the grid with total cost within `budget`.
fn search(tables: &[GridTable], budget: f64) -> Option<(f64, Vec<usize>)> {
    match tables {
        [] => Some((0.0, Vec::new())),
        [only] => {
            let j = only.cost.partition_point(|&c| c <= budget);
            (j > 0).then(|| (only.time[j - 1], vec![j - 1]))
        }
        [a, b] => {
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut jb = b.cost.partition_point(|&c| c <= budget);
            for ja in 0..a.ks.len() {
                let left = budget - a.cost[ja];
                while jb > 0 && b.cost[jb - 1] > left {
                    jb -= 1;
                }
                if jb == 0 {
                    break;
                }
                let t = a.time[ja] + b.time[jb - 1];
                if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                    best = Some((t, vec![ja, jb - 1]));
                }
            }
            best
        }
        [first, rest @ ..] => {
            let mut best: Option<(f64, Vec<usize>)> = None;
            for j in 0..first.ks.len() {
                let Some((t, mut choice)) = search(rest, budget - first.cost[j]) else {
                    break;
                };
                let t = t + first.time[j];
                if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                    choice.insert(0, j);
                    best = Some((t, choice));
                }
            }
            best
        }
    }
}

/// Width that spreads two allocation segments evenly over their combined
/// duration: the time-weighted average `(k1 t1 + k2 t2) / (t1 + t2)`.
pub fn merge_segments(k1: f64, t1: f64, k2: f64, t2: f64) -> Result<f64, SolveError> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(SolveError::NonPositiveDuration(t1, t2));
    }
    for (index, k) in [k1, k2].into_iter().enumerate() {
        if k.is_nan() || k < 1.0 {
            return Err(SolveError::Width { index, k });
        }
    }
    let total = t1 + t2;
    Ok(k1 * (t1 / total) + k2 * (t2 / total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub budget: f64,
    pub result: Result<Allocation, SolveError>,
}

/// Solves once per budget. Infeasible budgets yield per-point errors; the
/// output order matches `budgets` whatever the execution order.
pub fn pareto_frontier(
    spec: &WorkloadSpec,
    budgets: &[f64],
    cfg: &SolverConfig,
) -> Vec<FrontierPoint> {
    budgets
        .par_iter()
        .map(|&budget| {
            let result = spec
                .with_budget(budget)
                .map_err(SolveError::from)
                .and_then(|s| solve_allocation(&s, cfg));
            FrontierPoint { budget, result }
        })
        .collect()
}

/// `points` budgets evenly spaced over `[lo, hi]`, both ends included.
pub fn budget_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{JobType, SizeDist};

    fn single_power(alpha: f64, rho: f64, b: f64) -> WorkloadSpec {
        WorkloadSpec::new(
            vec![JobType::new(
                "a",
                SpeedupFunction::power_law(alpha).unwrap(),
                rho,
                SizeDist::Deterministic { value: 1.0 },
            )],
            b,
        )
        .unwrap()
    }

    fn two_types(b: f64) -> WorkloadSpec {
        WorkloadSpec::new(
            vec![
                JobType::new(
                    "amdahl",
                    SpeedupFunction::amdahl(0.8).unwrap(),
                    0.4,
                    SizeDist::Exponential { mean: 1.0 },
                ),
                JobType::new(
                    "sqrt",
                    SpeedupFunction::power_law(0.5).unwrap(),
                    0.4,
                    SizeDist::Exponential { mean: 1.0 },
                ),
            ],
            b,
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn objective_and_budget_examples() {
        let spec = two_types(2.0);
        assert!(rel(objective(&spec, &[1.0, 1.0]).unwrap(), 1.0) < 1e-12);
        assert!(rel(objective(&spec, &[4.0, 4.0]).unwrap(), 0.45) < 1e-12);
        assert!(rel(budget_usage(&spec, &[1.0, 1.0]).unwrap(), 0.8) < 1e-12);
        assert!(rel(budget_usage(&spec, &[4.0, 4.0]).unwrap(), 1.44) < 1e-12);
        let single = single_power(0.5, 0.5, 1.0);
        assert!(rel(budget_usage(&single, &[4.0]).unwrap(), 1.0) < 1e-12);
    }

    #[test]
    fn width_errors() {
        let spec = two_types(2.0);
        assert_eq!(
            objective(&spec, &[1.0]),
            Err(SolveError::Dimension {
                expected: 2,
                got: 1
            })
        );
        assert_eq!(
            budget_usage(&spec, &[1.0, 0.5]),
            Err(SolveError::Width { index: 1, k: 0.5 })
        );
    }

    #[test]
    fn inner_minimize_examples() {
        let cfg = SolverConfig::default();
        let f = SpeedupFunction::power_law(0.5).unwrap();
        assert_eq!(inner_minimize(&f, 1.0, &cfg), 1.0);
        // Stationary point at 1/mu; the minimum is flat to second order.
        let k = inner_minimize(&f, 0.25, &cfg);
        assert!(rel(k, 4.0) < 1e-6, "{k}");
        assert_eq!(inner_minimize(&f, 0.0, &cfg), cfg.k_max);
        let a = SpeedupFunction::amdahl(0.8).unwrap();
        assert_eq!(inner_minimize(&a, 0.0, &cfg), cfg.k_max);
        // Above p / (1 - p) the derivative at k = 1 is already non-negative.
        assert_eq!(inner_minimize(&a, 4.5, &cfg), 1.0);
    }

    #[test]
    fn inner_minimize_prefers_smallest_flat_width() {
        let cfg = SolverConfig::default();
        let t = SpeedupFunction::tabular(vec![(1.0, 1.0), (2.0, 1.8), (4.0, 2.4)]).unwrap();
        // With mu = 0 only speed matters, and it is flat after the last knot.
        let k = inner_minimize(&t, 0.0, &cfg);
        assert!(rel(k, 4.0) < 1e-9, "{k}");
    }

    #[test]
    fn closed_form_single_type() {
        let alloc =
            solve_allocation(&single_power(0.5, 0.5, 1.0), &SolverConfig::default()).unwrap();
        assert!((alloc.ks[0] - 4.0).abs() < 1e-6, "{alloc:?}");
        assert!((alloc.objective - 0.5).abs() < 1e-6);
        assert!((alloc.budget_used - 1.0).abs() < 1e-9);
        assert!(alloc.budget_used <= 1.0 * (1.0 + 1e-9));
        assert!(alloc.multiplier > 0.0);
        assert!(!alloc.cap_active);
    }

    #[test]
    fn boundary_budget_forces_unit_widths() {
        let spec = two_types(0.8 + 1e-9);
        let alloc = solve_allocation(&spec, &SolverConfig::default()).unwrap();
        for &k in &alloc.ks {
            assert!((1.0..=1.001).contains(&k), "{alloc:?}");
        }
    }

    #[test]
    fn unstable_is_rejected() {
        let err = solve_allocation(&two_types(0.8), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, SolveError::Unstable { .. }));
        assert!(matches!(
            brute_force_allocation(&two_types(0.5), 1e-3, DEFAULT_K_MAX),
            Err(SolveError::Unstable { .. })
        ));
    }

    #[test]
    fn invalid_speedup_is_rejected() {
        let spec = single_power(2.0, 0.5, 1.0);
        let err = solve_allocation(&spec, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, SolveError::InvalidSpeedup { index: 0, .. }));
    }

    #[test]
    fn linear_speedup_hits_the_cap() {
        let spec = single_power(1.0, 0.5, 1.0);
        let cfg = SolverConfig::default().with_k_max(64.0);
        let alloc = solve_allocation(&spec, &cfg).unwrap();
        assert_eq!(alloc.ks, vec![64.0]);
        assert!(alloc.cap_active);
        assert_eq!(alloc.multiplier, 0.0);
        assert!(rel(alloc.budget_used, 0.5) < 1e-12);
    }

    #[test]
    fn tabular_budget_is_filled_between_knots() {
        let t =
            SpeedupFunction::tabular(vec![(1.0, 1.0), (2.0, 1.8), (4.0, 3.0), (8.0, 4.0)]).unwrap();
        let spec = WorkloadSpec::new(
            vec![JobType::new(
                "t",
                t,
                1.0,
                SizeDist::Deterministic { value: 1.0 },
            )],
            1.2,
        )
        .unwrap();
        let alloc = solve_allocation(&spec, &SolverConfig::default()).unwrap();
        assert!(rel(alloc.budget_used, 1.2) < 1e-9, "{alloc:?}");
        let oracle = brute_force_allocation(&spec, 1e-5, DEFAULT_K_MAX).unwrap();
        assert!(alloc.objective <= oracle.objective * (1.0 + 1e-9));
        assert!(rel(alloc.ks[0], oracle.ks[0]) < 1e-3);
    }

    #[test]
    fn brute_force_examples() {
        let alloc =
            brute_force_allocation(&single_power(0.5, 0.5, 1.0), 1e-3, DEFAULT_K_MAX).unwrap();
        assert!((3.99..=4.01).contains(&alloc.ks[0]), "{alloc:?}");
        let alloc = brute_force_allocation(&two_types(0.8 + 1e-9), 1e-3, DEFAULT_K_MAX).unwrap();
        assert_eq!(alloc.ks, vec![1.0, 1.0]);
        let many = WorkloadSpec::new(
            two_types(2.0).types().iter().cycle().take(5).cloned().collect(),
            10.0,
        )
        .unwrap();
        assert_eq!(
            brute_force_allocation(&many, 1e-3, DEFAULT_K_MAX),
            Err(SolveError::TooManyTypes(5))
        );
    }

    #[test]
    fn brute_force_three_types_matches_nested_scan() {
        // Coarse grid so a plain triple loop stays cheap.
        let types = vec![
            JobType::new(
                "a",
                SpeedupFunction::amdahl(0.9).unwrap(),
                0.3,
                SizeDist::Deterministic { value: 1.0 },
            ),
            JobType::new(
                "b",
                SpeedupFunction::power_law(0.6).unwrap(),
                0.2,
                SizeDist::Deterministic { value: 1.0 },
            ),
            JobType::new(
                "c",
                SpeedupFunction::amdahl(0.5).unwrap(),
                0.4,
                SizeDist::Deterministic { value: 1.0 },
            ),
        ];
        let spec = WorkloadSpec::new(types, 2.0).unwrap();
        let step = 0.05;
        let alloc = brute_force_allocation(&spec, step, 1e3).unwrap();

        let grid: Vec<f64> = (0..)
            .map(|j| (1.0f64 + step).powi(j))
            .take_while(|&k| k < 1e3)
            .collect();
        let mut best = f64::INFINITY;
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let ks = [a, b, c];
                    if budget_usage(&spec, &ks).unwrap() <= 2.0 {
                        best = best.min(objective(&spec, &ks).unwrap());
                    }
                }
            }
        }
        assert!(
            rel(alloc.objective, best) < 1e-12,
            "{} vs {best}",
            alloc.objective
        );
    }

    #[test]
    fn two_types_match_grid_oracle() {
        let spec = two_types(2.0);
        let alloc = solve_allocation(&spec, &SolverConfig::default()).unwrap();
        let oracle = brute_force_allocation(&spec, 1e-5, DEFAULT_K_MAX).unwrap();
        for (k, o) in alloc.ks.iter().zip(&oracle.ks) {
            assert!((k - o).abs() < 1e-3, "{alloc:?} vs {oracle:?}");
        }
        assert!(alloc.objective <= oracle.objective * (1.0 + 1e-12));
    }

    #[test]
    fn merge_examples() {
        assert_eq!(merge_segments(3.0, 0.7, 3.0, 2.0).unwrap(), 3.0);
        assert_eq!(merge_segments(1.0, 1.0, 3.0, 1.0).unwrap(), 2.0);
        assert_eq!(merge_segments(2.0, 1.0, 5.0, 3.0).unwrap(), 4.25);
        assert_eq!(
            merge_segments(2.0, 0.0, 5.0, 3.0),
            Err(SolveError::NonPositiveDuration(0.0, 3.0))
        );
        assert!(merge_segments(0.5, 1.0, 5.0, 3.0).is_err());
    }

    #[test]
    fn frontier_single_type_closed_form() {
        let spec = single_power(0.5, 0.5, 1.0);
        let pts = pareto_frontier(&spec, &[0.4, 1.0, 2.0], &SolverConfig::default());
        assert!(matches!(pts[0].result, Err(SolveError::Unstable { .. })));
        let e1 = pts[1].result.as_ref().unwrap().objective;
        let e2 = pts[2].result.as_ref().unwrap().objective;
        assert!((e1 - 0.5).abs() < 1e-6);
        assert!((e2 - 0.25).abs() < 1e-6);
        assert_eq!(
            pts.iter().map(|p| p.budget).collect::<Vec<_>>(),
            vec![0.4, 1.0, 2.0]
        );
    }

    #[test]
    fn budget_grid_endpoints() {
        assert_eq!(budget_grid(1.0, 2.0, 3), vec![1.0, 1.5, 2.0]);
        assert_eq!(budget_grid(1.0, 2.0, 1), vec![1.0]);
        assert!(budget_grid(1.0, 2.0, 0).is_empty());
    }
}
