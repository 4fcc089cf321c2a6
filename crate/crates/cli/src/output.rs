//! CSV and JSON writers for simulation results.

use std::fmt::Write as _;

use rr_replay::stats::{IdVerdict, OracleValue, SampleCountStats};
use rr_replay::SampleCountMatrix;

/// Real number with 9 significant digits.
pub fn real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return "nan".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exponent) {
        format!("{:.*}", (8 - exponent).max(0) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

pub const STATS_HEADER: &str = "id,mean,std,min,max,oracle_mean,oracle_var,verdict";

/// One row per transition id. Oracle columns are empty and the verdict is
/// `na` where no closed form applies.
pub fn stats_csv(
    stats: &SampleCountStats,
    oracle: &[OracleValue],
    verdicts: &[IdVerdict],
) -> String {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for s in &stats.per_id {
        let o = oracle.iter().find(|o| o.id == s.id);
        let verdict = match verdicts.iter().find(|v| v.id == s.id) {
            None => "na",
            Some(v) if v.passed() => "pass",
            Some(v) if !v.mean_ok && !v.var_ok => "fail",
            Some(v) if !v.mean_ok => "fail-mean",
            Some(_) => "fail-var",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.id,
            real(s.mean),
            opt(s.std),
            s.min,
            s.max,
            opt(o.map(|o| o.mean)),
            opt(o.map(|o| o.var)),
            verdict
        );
    }
    out
}

/// One row per seed, one column per transition id.
pub fn raw_csv(matrix: &SampleCountMatrix) -> String {
    let mut out = String::from("seed");
    for id in 0..matrix.ids() {
        let _ = write!(out, ",{id}");
    }
    out.push('\n');
    for (seed, row) in matrix.seeds.iter().zip(&matrix.rows) {
        out.push_str(&seed.to_string());
        for c in row {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}
