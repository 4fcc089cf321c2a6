//! Per-transition statistics over seed ensembles and the closed-form
//! sample-count oracles for with-replacement sampling.

use crate::error::{ReplayError, Result};
use crate::sim::SampleCountMatrix;

/// Statistics of one transition's final sample count across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct IdStats {
    pub id: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor n - 1); `None` with fewer than two seeds.
    pub std: Option<f64>,
    pub min: u32,
    pub max: u32,
    /// Asymptotic standard error of the sample variance, `sqrt((m4 - m2²) / n)`.
    pub var_se: Option<f64>,
}

impl IdStats {
    pub fn var(&self) -> Option<f64> {
        self.std.map(|s| s * s)
    }

    /// Standard error of the mean.
    pub fn mean_se(&self, n: usize) -> Option<f64> {
        self.std.map(|s| s / (n as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCountStats {
    pub seeds: usize,
    pub per_id: Vec<IdStats>,
}

impl SampleCountStats {
    pub fn get(&self, id: usize) -> Option<&IdStats> {
        self.per_id.get(id)
    }
}

/// Power sums of a column, exact in integer arithmetic so the result does not
/// depend on row order.
fn column_stats(id: usize, column: impl Iterator<Item = u32>) -> IdStats {
    let (mut n, mut s1, mut s2, mut s3, mut s4) = (0i128, 0i128, 0i128, 0i128, 0i128);
    let mut min = u32::MAX;
    let mut max = 0;
    let mut values = Vec::new();
    for x in column {
        let v = x as i128;
        n += 1;
        s1 += v;
        s2 += v * v;
        s3 += v * v * v;
        s4 += v * v * v * v;
        min = min.min(x);
        max = max.max(x);
        values.push(x);
    }
    let nf = n as f64;
    let mean = s1 as f64 / nf;
    if n < 2 {
        return IdStats {
            id,
            mean,
            std: None,
            min,
            max,
            var_se: None,
        };
    }
    // n² m2 and n⁴ m4, where m_k is the k-th central moment with divisor n.
    let exact = || -> Option<(i128, i128)> {
        let m2 = n.checked_mul(s2)?.checked_sub(s1.checked_mul(s1)?)?;
        let n2 = n.checked_mul(n)?;
        let n3 = n2.checked_mul(n)?;
        let s1_2 = s1.checked_mul(s1)?;
        let m4 = n3
            .checked_mul(s4)?
            .checked_sub(n2.checked_mul(s1)?.checked_mul(s3)?.checked_mul(4)?)?
            .checked_add(n.checked_mul(s1_2)?.checked_mul(s2)?.checked_mul(6)?)?
            .checked_sub(s1_2.checked_mul(s1_2)?.checked_mul(3)?)?;
        Some((m2, m4))
    };
    let (m2, m4) = match exact() {
        Some((m2, m4)) => (m2 as f64 / (nf * nf), m4 as f64 / (nf * nf * nf * nf)),
        None => {
            let dev = |p: i32| {
                values
                    .iter()
                    .map(|&x| (x as f64 - mean).powi(p))
                    .sum::<f64>()
                    / nf
            };
            (dev(2), dev(4))
        }
    };
    let var = m2 * nf / (nf - 1.0);
    IdStats {
        id,
        mean,
        std: Some(var.max(0.0).sqrt()),
        min,
        max,
        var_se: Some(((m4 - m2 * m2).max(0.0) / nf).sqrt()),
    }
}

/// Columnwise mean, std (n - 1), min and max.
pub fn aggregate(matrix: &SampleCountMatrix) -> Result<SampleCountStats> {
    if matrix.rows.is_empty() {
        return Err(ReplayError::InvalidConfig("empty count matrix".into()));
    }
    let per_id = (0..matrix.ids())
        .map(|id| column_stats(id, matrix.column(id)))
        .collect();
    Ok(SampleCountStats {
        seeds: matrix.rows.len(),
        per_id,
    })
}

/// Draws made while transition `i` is resident, up to and including timestep
/// `k`: `B · max(0, min(k, i + C - 1) - max(i, R - 1) + 1)`.
pub fn resident_draws(
    capacity: usize,
    replay_start: usize,
    batch: usize,
    i: usize,
    k: usize,
) -> u64 {
    let start = i.max(replay_start.saturating_sub(1));
    let end = k.min(i + capacity - 1);
    if end < start {
        0
    } else {
        (batch * (end - start + 1)) as u64
    }
}

/// Mean and variance of the with-replacement sample count of transition `i`
/// up to timestep `k`, valid once the buffer is full (`i >= C`):
/// `S = B · min(k - i + 1, C)`, mean `S / C`, variance `S (1/C)(1 - 1/C)`.
pub fn uer_oracle(capacity: usize, batch: usize, i: usize, k: usize) -> Result<(f64, f64)> {
    if i < capacity {
        return Err(ReplayError::OracleDomain(format!(
            "id {i} precedes a full buffer (capacity {capacity})"
        )));
    }
    if k < i {
        return Err(ReplayError::OracleDomain(format!(
            "timestep {k} precedes id {i}"
        )));
    }
    let s = (batch * (k - i + 1).min(capacity)) as f64;
    let q = 1.0 / capacity as f64;
    Ok((s * q, s * q * (1.0 - q)))
}

/// Variance of the prioritized with-replacement count for batch size 1 and a
/// fixed sampling probability `p`: `(k - i + 1) p (1 - p)`.
pub fn per_var_oracle(p: f64, i: usize, k: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ReplayError::OracleDomain(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    if k < i {
        return Err(ReplayError::OracleDomain(format!(
            "timestep {k} precedes id {i}"
        )));
    }
    Ok((k - i + 1) as f64 * p * (1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub id: usize,
    pub mean: f64,
    pub var: f64,
}

/// Width of the acceptance bands, in standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub mean_se: f64,
    pub var_se: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            mean_se: 3.0,
            var_se: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdVerdict {
    pub id: usize,
    pub mean_ok: bool,
    pub var_ok: bool,
    pub mean_error: f64,
    pub var_error: f64,
}

impl IdVerdict {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.var_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub verdicts: Vec<IdVerdict>,
}

impl ComparisonReport {
    pub fn failures(&self) -> Vec<&IdVerdict> {
        self.verdicts.iter().filter(|v| !v.passed()).collect()
    }

    pub fn mean_failures(&self) -> usize {
        self.verdicts.iter().filter(|v| !v.mean_ok).count()
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(IdVerdict::passed)
    }
}

/// `|x - y| <= width`, treating a zero-width band as exact equality up to
/// rounding.
fn within(x: f64, y: f64, width: f64) -> bool {
    (x - y).abs() <= width.max(1e-12 * y.abs().max(1.0))
}

/// Checks every oracle id: the mean against a `mean_se`-standard-error band
/// and the sample variance against a `var_se` band of its asymptotic
/// standard error.
pub fn compare(
    stats: &SampleCountStats,
    oracle: &[OracleValue],
    tolerance: Tolerance,
) -> Result<ComparisonReport> {
    if stats.seeds < 2 {
        return Err(ReplayError::OracleDomain("need at least two seeds".into()));
    }
    let verdicts = oracle
        .iter()
        .map(|o| {
            let s = stats.get(o.id).ok_or_else(|| {
                ReplayError::OracleDomain(format!("oracle id {} missing from statistics", o.id))
            })?;
            let se = s.mean_se(stats.seeds).unwrap_or(0.0);
            let var = s.var().unwrap_or(0.0);
            let var_se = s.var_se.unwrap_or(0.0);
            Ok(IdVerdict {
                id: o.id,
                mean_ok: within(s.mean, o.mean, tolerance.mean_se * se),
                var_ok: within(var, o.var, tolerance.var_se * var_se),
                mean_error: s.mean - o.mean,
                var_error: var - o.var,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { verdicts })
}

/// With-replacement oracle values for `ids`, evaluated at the final timestep.
pub fn uer_oracle_values(
    capacity: usize,
    batch: usize,
    timesteps: usize,
    ids: impl IntoIterator<Item = usize>,
) -> Result<Vec<OracleValue>> {
    ids.into_iter()
        .map(|id| {
            let (mean, var) = uer_oracle(capacity, batch, id, timesteps - 1)?;
            Ok(OracleValue { id, mean, var })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use proptest::prelude::*;
    use rand::Rng;

    fn matrix(rows: Vec<Vec<u32>>) -> SampleCountMatrix {
        SampleCountMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_rows() {
        let s = aggregate(&matrix(vec![vec![3, 1]; 5])).unwrap();
        assert_eq!(s.per_id[0].std, Some(0.0));
        assert_eq!(
            (s.per_id[0].min, s.per_id[0].mean, s.per_id[0].max),
            (3, 3.0, 3)
        );
    }

    #[test]
    fn two_rows() {
        let s = aggregate(&matrix(vec![vec![2], vec![4]])).unwrap();
        let id = &s.per_id[0];
        assert_eq!(id.mean, 3.0);
        assert!((id.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((id.min, id.max), (2, 4));
    }

    #[test]
    fn single_row_has_no_std() {
        let s = aggregate(&matrix(vec![vec![7]])).unwrap();
        assert_eq!(s.per_id[0].std, None);
        assert!(aggregate(&SampleCountMatrix {
            seeds: vec![],
            rows: vec![]
        })
        .is_err());
    }

    #[test]
    fn oracle_values() {
        let (m, v) = uer_oracle(20, 4, 30, 49).unwrap();
        assert!((m - 4.0).abs() < 1e-12 && (v - 3.8).abs() < 1e-12);
        let (m, _) = uer_oracle(20, 4, 30, 30).unwrap();
        assert!((m - 0.2).abs() < 1e-12);
        // two draws from two slots: Binomial(2, 1/2)
        assert_eq!(uer_oracle(2, 1, 5, 6).unwrap(), (1.0, 0.5));
        assert!(uer_oracle(20, 4, 19, 40).is_err());
    }

    #[test]
    fn per_variance() {
        assert_eq!(per_var_oracle(0.0, 3, 10).unwrap(), 0.0);
        assert_eq!(per_var_oracle(1.0, 3, 10).unwrap(), 0.0);
        // two Bernoulli(0.6) draws: 2 * 0.6 * 0.4
        assert!((per_var_oracle(0.6, 0, 1).unwrap() - 0.48).abs() < 1e-15);
        assert_eq!(per_var_oracle(0.5, 0, 99).unwrap(), 25.0);
        assert!(per_var_oracle(1.5, 0, 1).is_err());
    }

    #[test]
    fn resident_draw_counts() {
        // fig3: id 30 is resident for timesteps 30..=49
        assert_eq!(resident_draws(20, 10, 4, 30, 99), 80);
        // id 0 is first sampled at t = 9 and evicted at t = 20
        assert_eq!(resident_draws(20, 10, 4, 0, 99), 44);
        assert_eq!(resident_draws(20, 10, 4, 95, 99), 20);
        assert_eq!(resident_draws(20, 10, 4, 50, 40), 0);
    }

    /// Monte Carlo with-replacement replay at C = 5, B = 2 with 10^5 seeds
    /// against the closed-form mean.
    #[test]
    fn uer_oracle_self_test() {
        let (capacity, batch, timesteps) = (5usize, 2usize, 20usize);
        let rows: Vec<Vec<u32>> = (0..100_000u64)
            .map(|seed| {
                let mut rng = SimRng::new(seed);
                let mut counts = vec![0u32; timesteps];
                for t in 0..timesteps {
                    let len = (t + 1).min(capacity);
                    let oldest = t + 1 - len;
                    for _ in 0..batch {
                        counts[oldest + rng.random_range(0..len)] += 1;
                    }
                }
                counts
            })
            .collect();
        let stats = aggregate(&matrix(rows)).unwrap();
        let oracle = uer_oracle_values(capacity, batch, timesteps, capacity..timesteps).unwrap();
        let report = compare(&stats, &oracle, Tolerance::default()).unwrap();
        assert_eq!(report.mean_failures(), 0, "{:?}", report.failures());
    }

    #[test]
    fn negative_control_fails() {
        // fig3 with a sampler that always returns slot 0: every draw goes to the
        // newest id divisible by 20.
        let row: Vec<u32> = (0..100)
            .map(|id| if id % 20 == 0 { 80 } else { 0 })
            .collect();
        let stats = aggregate(&matrix(vec![row; 50])).unwrap();
        let oracle = uer_oracle_values(20, 4, 100, 20..=79).unwrap();
        let report = compare(&stats, &oracle, Tolerance::default()).unwrap();
        assert_eq!(report.mean_failures(), 60);
    }

    #[test]
    fn synthetic_oracle_data_passes() {
        // rows drawn exactly from Binomial(80, 1/20) by summing Bernoulli trials
        let mut rng = SimRng::new(5);
        let rows: Vec<Vec<u32>> = (0..2000)
            .map(|_| {
                (0..100)
                    .map(|_| (0..80).filter(|_| rng.random_range(0..20) == 0).count() as u32)
                    .collect()
            })
            .collect();
        let stats = aggregate(&matrix(rows)).unwrap();
        let oracle = uer_oracle_values(20, 4, 100, 20..=79).unwrap();
        let report = compare(
            &stats,
            &oracle,
            Tolerance {
                mean_se: 4.0,
                var_se: 4.0,
            },
        )
        .unwrap();
        assert!(report.all_passed(), "{:?}", report.failures());
    }

    #[test]
    fn misaligned_oracle_is_rejected() {
        let stats = aggregate(&matrix(vec![vec![1, 2], vec![2, 1]])).unwrap();
        let oracle = [OracleValue {
            id: 5,
            mean: 1.0,
            var: 0.0,
        }];
        assert!(compare(&stats, &oracle, Tolerance::default()).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_ignores_row_order(
            rows in prop::collection::vec(prop::collection::vec(0u32..30, 4), 2..40),
            rotate in 0usize..40,
        ) {
            let a = aggregate(&matrix(rows.clone())).unwrap();
            let mut shuffled = rows;
            shuffled.reverse();
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
            let b = aggregate(&matrix(shuffled)).unwrap();
            prop_assert_eq!(&a, &b);
            for s in &a.per_id {
                prop_assert!(s.min as f64 <= s.mean && s.mean <= s.max as f64);
                prop_assert!(s.std.unwrap() >= 0.0);
            }
        }
    }
}
