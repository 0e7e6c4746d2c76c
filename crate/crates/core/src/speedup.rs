//! Speedup functions `s(k)`: the rate at which a job completes work when it
//! holds `k >= 1` GPUs. A job of size `x` on `k` GPUs finishes in `x / s(k)`.
//!
//! Three families are supported:
//!
//! * Amdahl's law with parallel fraction `p`: `s(k) = 1 / ((1 - p) + p / k)`
//! * power law with exponent `alpha`: `s(k) = k^alpha`
//! * a tabulated curve, linearly interpolated between knots and held constant
//!   after the last knot
//!
//! A usable speedup function is non-decreasing, has a non-increasing average
//! `s(k) / k`, and is concave. [`SpeedupFunction::validate`] checks these
//! properties on a geometric grid and reports the first violation of each.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper end of the validation grid.
pub const DEFAULT_VALIDATION_K_MAX: f64 = (1u64 << 20) as f64;

/// Ratio between consecutive points of the validation grid.
const GRID_RATIO: f64 = 1.1;

/// Relative slack below which an apparent axiom violation is treated as
/// floating-point noise.
pub const AXIOM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedupError {
    #[error("gpu count {0} is outside the domain k >= 1")]
    Domain(f64),
    #[error("amdahl parallel fraction must lie in [0, 1], got {0}")]
    ParallelFraction(f64),
    #[error("power-law exponent must be finite and positive, got {0}")]
    Exponent(f64),
    #[error("tabular speedup needs at least one point")]
    EmptyTable,
    #[error("tabular speedup must start at k = 1, first knot is at k = {0}")]
    FirstKnot(f64),
    #[error("tabular knot {index} is not finite and positive: ({k}, {s})")]
    BadKnot { index: usize, k: f64, s: f64 },
    #[error("tabular knots must be strictly increasing in k; knot {index} at k = {k} is not")]
    UnsortedKnots { index: usize, k: f64 },
}

/// A piecewise-linear speedup curve through `(k, s)` knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabular {
    points: Vec<(f64, f64)>,
}

impl Tabular {
    /// Builds a table. Knots must start at `k = 1`, be strictly increasing in
    /// `k`, and carry finite positive speeds.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SpeedupError> {
        let first = points.first().ok_or(SpeedupError::EmptyTable)?;
        for (index, &(k, s)) in points.iter().enumerate() {
            if !(k.is_finite() && s.is_finite() && k > 0.0 && s > 0.0) {
                return Err(SpeedupError::BadKnot { index, k, s });
            }
        }
        if first.0 != 1.0 {
            return Err(SpeedupError::FirstKnot(first.0));
        }
        for (index, pair) in points.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(SpeedupError::UnsortedKnots {
                    index: index + 1,
                    k: pair[1].0,
                });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn eval(&self, k: f64) -> f64 {
        // Index of the first knot strictly to the right of k.
        let idx = self.points.partition_point(|&(kk, _)| kk <= k);
        if idx == self.points.len() {
            return self.points[idx - 1].1;
        }
        let (k0, s0) = self.points[idx - 1];
        if k == k0 {
            return s0;
        }
        let (k1, s1) = self.points[idx];
        s0 + (k - k0) * (s1 - s0) / (k1 - k0)
    }
}

/// A validated speedup function. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpeedupDef", into = "SpeedupDef")]
pub enum SpeedupFunction {
    Amdahl { p: f64 },
    PowerLaw { alpha: f64 },
    Tabular(Tabular),
}

impl SpeedupFunction {
    pub fn amdahl(p: f64) -> Result<Self, SpeedupError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SpeedupError::ParallelFraction(p));
        }
        Ok(Self::Amdahl { p })
    }

    /// Power-law speedup. Exponents above 1 are accepted so that they can be
    /// reported by [`validate`](Self::validate), but they fail the axioms.
    pub fn power_law(alpha: f64) -> Result<Self, SpeedupError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(SpeedupError::Exponent(alpha));
        }
        Ok(Self::PowerLaw { alpha })
    }

    pub fn tabular(points: Vec<(f64, f64)>) -> Result<Self, SpeedupError> {
        Tabular::new(points).map(Self::Tabular)
    }

    /// `s(k)` for `k >= 1`.
    pub fn eval(&self, k: f64) -> Result<f64, SpeedupError> {
        if k.is_nan() || k < 1.0 || k.is_infinite() {
            return Err(SpeedupError::Domain(k));
        }
        Ok(self.speed(k))
    }

    /// GPU-hours spent per unit of work at width `k`, i.e. `k / s(k)`.
    pub fn cost_rate(&self, k: f64) -> Result<f64, SpeedupError> {
        Ok(k / self.eval(k)?)
    }

    /// Unchecked evaluation; callers guarantee `k >= 1`.
    pub(crate) fn speed(&self, k: f64) -> f64 {
        match self {
            Self::Amdahl { p } => 1.0 / ((1.0 - p) + p / k),
            Self::PowerLaw { alpha } => k.powf(*alpha),
            Self::Tabular(t) => t.eval(k),
        }
    }

    /// Speed at any non-negative allocation. Below one GPU the curve is
    /// continued linearly through the origin, `s(k) = k * s(1)`. Only the
    /// dynamic baseline policies in the simulator use this.
    pub fn eval_extended(&self, k: f64) -> f64 {
        if k >= 1.0 {
            self.speed(k)
        } else if k > 0.0 {
            k * self.speed(1.0)
        } else {
            0.0
        }
    }

    /// Saturation speed `lim s(k)` as `k -> inf`, if finite.
    pub fn saturation(&self) -> Option<f64> {
        match self {
            Self::Amdahl { p } if *p < 1.0 => Some(1.0 / (1.0 - p)),
            Self::Tabular(t) => t.points.last().map(|&(_, s)| s),
            _ => None,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_up_to(DEFAULT_VALIDATION_K_MAX)
    }

    /// Checks the speedup axioms on the geometric grid `1, 1.1, 1.21, ...`
    /// up to `k_max`, merged with any tabular knots.
    pub fn validate_up_to(&self, k_max: f64) -> ValidationReport {
        let grid = self.validation_grid(k_max);
        let speeds: Vec<f64> = grid.iter().map(|&k| self.speed(k)).collect();
        let normalization_error = (speeds[0] - 1.0).abs();

        let mut monotone = None;
        let mut sub_linear = None;
        for i in 1..grid.len() {
            let (k1, k2) = (grid[i - 1], grid[i]);
            let (s1, s2) = (speeds[i - 1], speeds[i]);
            if monotone.is_none() && s1 - s2 > AXIOM_TOLERANCE * s1.abs().max(s2.abs()) {
                monotone = Some(Violation {
                    ks: vec![k1, k2],
                    excess: s1 - s2,
                });
            }
            let (avg1, avg2) = (s1 / k1, s2 / k2);
            if sub_linear.is_none() && avg2 - avg1 > AXIOM_TOLERANCE * avg1.abs() {
                sub_linear = Some(Violation {
                    ks: vec![k1, k2],
                    excess: avg2 - avg1,
                });
            }
        }

        let mut concave = None;
        for i in 2..grid.len() {
            let (a, b, c) = (grid[i - 2], grid[i - 1], grid[i]);
            let (sa, sb, sc) = (speeds[i - 2], speeds[i - 1], speeds[i]);
            let chord = sa + (b - a) * (sc - sa) / (c - a);
            if chord - sb > AXIOM_TOLERANCE * chord.abs() {
                concave = Some(Violation {
                    ks: vec![a, b, c],
                    excess: chord - sb,
                });
                break;
            }
        }

        ValidationReport {
            normalization_error,
            monotone,
            sub_linear,
            concave,
        }
    }

    fn validation_grid(&self, k_max: f64) -> Vec<f64> {
        let k_max = k_max.max(1.0);
        let mut grid = Vec::new();
        let mut k = 1.0;
        while k < k_max {
            grid.push(k);
            k *= GRID_RATIO;
        }
        grid.push(k_max);
        if let Self::Tabular(t) = self {
            grid.extend(t.points.iter().map(|&(k, _)| k).filter(|&k| k <= k_max));
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }
        grid
    }
}

impl fmt::Display for SpeedupFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Amdahl { p } => write!(f, "amdahl(p={p})"),
            Self::PowerLaw { alpha } => write!(f, "power(alpha={alpha})"),
            Self::Tabular(t) => write!(f, "tabular({} knots)", t.points.len()),
        }
    }
}

/// Wire form used in workload documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SpeedupDef {
    Amdahl { p: f64 },
    Power { alpha: f64 },
    Tabular { points: Vec<(f64, f64)> },
}

impl TryFrom<SpeedupDef> for SpeedupFunction {
    type Error = SpeedupError;

    fn try_from(def: SpeedupDef) -> Result<Self, Self::Error> {
        match def {
            SpeedupDef::Amdahl { p } => Self::amdahl(p),
            SpeedupDef::Power { alpha } => Self::power_law(alpha),
            SpeedupDef::Tabular { points } => Self::tabular(points),
        }
    }
}

impl From<SpeedupFunction> for SpeedupDef {
    fn from(f: SpeedupFunction) -> Self {
        match f {
            SpeedupFunction::Amdahl { p } => Self::Amdahl { p },
            SpeedupFunction::PowerLaw { alpha } => Self::Power { alpha },
            SpeedupFunction::Tabular(t) => Self::Tabular { points: t.points },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    Monotone,
    SubLinear,
    Concave,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axiom::Monotone => "monotonicity",
            Axiom::SubLinear => "sub-linear average",
            Axiom::Concave => "concavity",
        })
    }
}

/// First grid points at which an axiom fails. Pairs for monotonicity and
/// the average check, triples for concavity.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub ks: Vec<f64>,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `|s(1) - 1|`.
    pub normalization_error: f64,
    pub monotone: Option<Violation>,
    pub sub_linear: Option<Violation>,
    pub concave: Option<Violation>,
}

impl ValidationReport {
    pub fn violation(&self, axiom: Axiom) -> Option<&Violation> {
        match axiom {
            Axiom::Monotone => self.monotone.as_ref(),
            Axiom::SubLinear => self.sub_linear.as_ref(),
            Axiom::Concave => self.concave.as_ref(),
        }
    }

    /// True when every axiom holds. A normalization mismatch is only a warning.
    pub fn is_valid(&self) -> bool {
        self.monotone.is_none() && self.sub_linear.is_none() && self.concave.is_none()
    }

    pub fn normalization_warning(&self) -> bool {
        self.normalization_error > AXIOM_TOLERANCE
    }

    pub fn failed_axioms(&self) -> Vec<Axiom> {
        [Axiom::Monotone, Axiom::SubLinear, Axiom::Concave]
            .into_iter()
            .filter(|&a| self.violation(a).is_some())
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for axiom in [Axiom::Monotone, Axiom::SubLinear, Axiom::Concave] {
            match self.violation(axiom) {
                None => writeln!(f, "  {axiom}: pass")?,
                Some(v) => writeln!(
                    f,
                    "  {axiom}: FAIL at k = {:?} (excess {:e})",
                    v.ks, v.excess
                )?,
            }
        }
        if self.normalization_warning() {
            writeln!(
                f,
                "  warning: s(1) differs from 1 by {:e}",
                self.normalization_error
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn eval_examples() {
        let amdahl = SpeedupFunction::amdahl(0.8).unwrap();
        let power = SpeedupFunction::power_law(0.5).unwrap();
        assert!(close(amdahl.eval(1.0).unwrap(), 1.0));
        assert!(close(power.eval(4.0).unwrap(), 2.0));
        assert!(close(amdahl.eval(4.0).unwrap(), 2.5));
    }

    #[test]
    fn cost_rate_examples() {
        let amdahl = SpeedupFunction::amdahl(0.8).unwrap();
        let power = SpeedupFunction::power_law(0.5).unwrap();
        assert!(close(power.cost_rate(4.0).unwrap(), 2.0));
        assert!(close(amdahl.cost_rate(4.0).unwrap(), 1.6));
        assert!(close(amdahl.cost_rate(1.0).unwrap(), 1.0));
        assert!(close(power.cost_rate(1.0).unwrap(), 1.0));
    }

    #[test]
    fn domain_errors() {
        let f = SpeedupFunction::amdahl(0.5).unwrap();
        assert_eq!(f.eval(0.5), Err(SpeedupError::Domain(0.5)));
        assert!(f.eval(f64::NAN).is_err());
        assert!(f.cost_rate(0.0).is_err());
    }

    #[test]
    fn construction_errors() {
        assert!(SpeedupFunction::amdahl(1.2).is_err());
        assert!(SpeedupFunction::amdahl(-0.1).is_err());
        assert!(SpeedupFunction::power_law(0.0).is_err());
        assert_eq!(
            SpeedupFunction::tabular(vec![]),
            Err(SpeedupError::EmptyTable)
        );
        assert!(matches!(
            SpeedupFunction::tabular(vec![(1.0, 1.0), (3.0, 2.0), (2.0, 2.5)]),
            Err(SpeedupError::UnsortedKnots { index: 2, .. })
        ));
        assert!(matches!(
            SpeedupFunction::tabular(vec![(1.0, 1.0), (1.0, 2.0)]),
            Err(SpeedupError::UnsortedKnots { index: 1, .. })
        ));
        assert!(matches!(
            SpeedupFunction::tabular(vec![(2.0, 1.0)]),
            Err(SpeedupError::FirstKnot(_))
        ));
        assert!(matches!(
            SpeedupFunction::tabular(vec![(1.0, 1.0), (2.0, -1.0)]),
            Err(SpeedupError::BadKnot { index: 1, .. })
        ));
    }

    #[test]
    fn tabular_interpolates_and_saturates() {
        let f = SpeedupFunction::tabular(vec![(1.0, 1.0), (2.0, 1.8), (4.0, 3.0)]).unwrap();
        assert_eq!(f.eval(1.0).unwrap(), 1.0);
        assert_eq!(f.eval(2.0).unwrap(), 1.8);
        assert_eq!(f.eval(4.0).unwrap(), 3.0);
        assert!(close(f.eval(1.5).unwrap(), 1.4));
        assert!(close(f.eval(3.0).unwrap(), 2.4));
        assert_eq!(f.eval(1e9).unwrap(), 3.0);
        assert_eq!(f.saturation(), Some(3.0));
    }

    #[test]
    fn extended_speed_is_linear_below_one() {
        let f = SpeedupFunction::amdahl(0.8).unwrap();
        assert_eq!(f.eval_extended(0.0), 0.0);
        assert!(close(f.eval_extended(0.25), 0.25));
        assert!(close(f.eval_extended(4.0), 2.5));
    }

    #[test]
    fn amdahl_saturates() {
        let f = SpeedupFunction::amdahl(0.8).unwrap();
        let s = f.eval(1e6).unwrap();
        assert!(s <= 5.0 && s > 4.99);
    }

    #[test]
    fn validate_examples() {
        let r = SpeedupFunction::amdahl(0.8).unwrap().validate();
        assert!(r.is_valid(), "{r}");
        assert!(!r.normalization_warning());

        let r = SpeedupFunction::power_law(2.0).unwrap().validate();
        assert!(r.sub_linear.is_some());
        assert!(r.monotone.is_none());
        assert_eq!(r.failed_axioms(), vec![Axiom::SubLinear, Axiom::Concave]);

        // s(2)/2 = 1.5 > s(1)/1 = 1 fails at the first pair straddling the knot.
        let r = SpeedupFunction::tabular(vec![(1.0, 1.0), (2.0, 3.0), (3.0, 3.5)])
            .unwrap()
            .validate();
        let v = r.sub_linear.as_ref().unwrap();
        assert_eq!(v.ks, vec![1.0, 1.1]);
        assert!(r.monotone.is_none());
        assert!(r.concave.is_none());
    }

    #[test]
    fn validate_flags_convex_table_and_normalization() {
        let r = SpeedupFunction::tabular(vec![(1.0, 1.0), (2.0, 1.2), (3.0, 1.8)])
            .unwrap()
            .validate();
        assert!(r.concave.is_some());
        assert!(r.sub_linear.is_none());

        let r = SpeedupFunction::tabular(vec![(1.0, 2.0), (2.0, 3.0)])
            .unwrap()
            .validate();
        assert!(r.normalization_warning());
        assert!(r.is_valid());

        let r = SpeedupFunction::tabular(vec![(1.0, 1.0), (2.0, 1.5), (3.0, 1.4)])
            .unwrap()
            .validate();
        assert_eq!(r.monotone.as_ref().unwrap().ks[0], 2.0);
    }

    #[test]
    fn config_round_trip() {
        let f: SpeedupFunction =
            serde_json::from_str(r#"{"kind": "power", "alpha": 0.5}"#).unwrap();
        assert_eq!(f, SpeedupFunction::PowerLaw { alpha: 0.5 });
        let f: SpeedupFunction =
            serde_json::from_str(r#"{"kind": "tabular", "points": [[1,1],[2,1.8]]}"#).unwrap();
        assert_eq!(f.eval(2.0).unwrap(), 1.8);
        let json = serde_json::to_string(&SpeedupFunction::amdahl(0.8).unwrap()).unwrap();
        assert_eq!(json, r#"{"kind":"amdahl","p":0.8}"#);
        assert!(serde_json::from_str::<SpeedupFunction>(r#"{"kind": "amdahl", "p": 3}"#).is_err());
    }
}
