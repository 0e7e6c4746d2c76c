//! Report formatting. Every number is rounded to 12 significant digits so
//! that fixtures stay stable across platforms.

use std::fmt::Write;

use rental_core::{FrontierPoint, JobRecord, SimMetrics};
use serde::Serialize;
use serde_json::Value;

pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn fmt_num(x: f64) -> String {
    round12(x).to_string()
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n
                .as_f64()
                .and_then(|x| serde_json::Number::from_f64(round12(x)))
            {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn rounded_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_value(&mut v);
    serde_json::to_string_pretty(&v).expect("json value serializes")
}

pub fn per_job_csv(jobs: &[JobRecord]) -> String {
    let mut out = String::from("arrival,completion,response,gpu_hours\n");
    for j in jobs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_num(j.arrival),
            fmt_num(j.completion),
            fmt_num(j.response_time),
            fmt_num(j.gpu_hours)
        );
    }
    out
}

pub fn timeseries_csv(series: &[(f64, f64)]) -> String {
    let mut out = String::from("t,K\n");
    for &(t, k) in series {
        let _ = writeln!(out, "{},{}", fmt_num(t), fmt_num(k));
    }
    out
}

/// Infeasible budgets keep their row, with `infeasible` in place of the
/// response time and empty widths.
pub fn frontier_csv(points: &[FrontierPoint], types: usize) -> String {
    let mut out = String::from("budget,mean_response_time");
    for i in 1..=types {
        let _ = write!(out, ",k_{i}");
    }
    out.push('\n');
    for p in points {
        out.push_str(&fmt_num(p.budget));
        match &p.result {
            Ok(a) => {
                let _ = write!(out, ",{}", fmt_num(a.objective));
                for &k in &a.ks {
                    let _ = write!(out, ",{}", fmt_num(k));
                }
            }
            Err(_) => {
                out.push_str(",infeasible");
                out.push_str(&",".repeat(types));
            }
        }
        out.push('\n');
    }
    out
}

pub fn comparison_csv(rows: &[(&str, &SimMetrics)]) -> String {
    let mut out =
        String::from("policy,job_count,mean_response_time,time_avg_budget,total_gpu_hours\n");
    for (name, m) in rows {
        let quoted = if name.contains(',') {
            format!("\"{name}\"")
        } else {
            name.to_string()
        };
        let _ = writeln!(
            out,
            "{quoted},{},{},{},{}",
            m.job_count,
            m.mean_response_time.map(fmt_num).unwrap_or_default(),
            fmt_num(m.time_avg_budget),
            fmt_num(m.total_gpu_hours)
        );
    }
    out
}
