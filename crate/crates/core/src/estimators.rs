//! Sample statistics behind the Gini stopping rule.
//!
//! Everything is computed from the order statistics of the sample:
//! with `x[0] <= ... <= x[n-1]` and prefix sums `P[k] = x[0] + ... + x[k-1]`,
//!
//! * `sum_{i<j} |X_i - X_j| = sum_k (k * x[k] - P[k])`,
//! * `R_k = sum_i |x[k] - x[i]|` is read off the prefix sums in O(1),
//! * `tau_hat` is half of Gini's mean difference of the squared sample, since
//!   `(x + y)|x - y| = |x^2 - y^2|` for positive incomes.
//!
//! [`EstimatorState`] keeps the sorted multiset and the prefix sums up to date
//! one observation at a time. The free functions ([`gmd`], [`tau_hat`], ...)
//! re-sort the sample on every call and go through the same kernel, and
//! [`naive`] holds the quadratic-time reference versions used as oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

fn validate(x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::RejectedObservation { value: x })
    }
}

fn require(what: &'static str, needed: usize, got: usize) -> Result<()> {
    if got < needed {
        Err(Error::InsufficientSample { what, needed, got })
    } else {
        Ok(())
    }
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Incomes in arrival order. Every value is finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            validate(v)?;
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        sorted
    }

    fn stats(&self) -> SortedStats {
        let sorted = self.sorted();
        let sums = PrefixSums::of(&sorted);
        SortedStats::compute(&sorted, &sums.prefix, &sums.prefix_sq)
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sample::new(values)
    }
}

impl TryFrom<&[f64]> for Sample {
    type Error = Error;

    fn try_from(values: &[f64]) -> Result<Self> {
        Sample::new(values.to_vec())
    }
}

/// Compensated prefix sums of a sorted sample and of its squares.
#[derive(Debug, Clone)]
struct PrefixSums {
    acc: Vec<CompensatedSum>,
    acc_sq: Vec<CompensatedSum>,
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
}

impl Default for PrefixSums {
    fn default() -> Self {
        Self {
            acc: vec![CompensatedSum::default()],
            acc_sq: vec![CompensatedSum::default()],
            prefix: vec![0.0],
            prefix_sq: vec![0.0],
        }
    }
}

impl PrefixSums {
    fn of(sorted: &[f64]) -> Self {
        let mut sums = Self::default();
        sums.patch(sorted, 0);
        sums
    }

    /// Recomputes entries after position `from`; entries up to `from` are
    /// still valid because the sorted prefix before it did not change.
    fn patch(&mut self, sorted: &[f64], from: usize) {
        let n = sorted.len();
        self.acc.resize(n + 1, CompensatedSum::default());
        self.acc_sq.resize(n + 1, CompensatedSum::default());
        self.prefix.resize(n + 1, 0.0);
        self.prefix_sq.resize(n + 1, 0.0);
        for (k, &x) in sorted.iter().enumerate().skip(from) {
            let mut s = self.acc[k];
            let mut s2 = self.acc_sq[k];
            s.add(x);
            s2.add(x * x);
            self.acc[k + 1] = s;
            self.acc_sq[k + 1] = s2;
            self.prefix[k + 1] = s.value();
            self.prefix_sq[k + 1] = s2.value();
        }
    }
}

/// Every estimator, evaluated from a sorted sample and its prefix sums.
#[derive(Debug, Clone, Copy)]
struct SortedStats {
    n: usize,
    mean: f64,
    variance: f64,
    gmd: f64,
    tau: f64,
    sw2: Option<f64>,
}

impl SortedStats {
    fn compute(sorted: &[f64], prefix: &[f64], prefix_sq: &[f64]) -> Self {
        let n = sorted.len();
        debug_assert!(n >= 1 && prefix.len() == n + 1 && prefix_sq.len() == n + 1);
        let nf = n as f64;
        let total = prefix[n];
        let mean = total / nf;

        let (variance, gmd, tau) = if n < 2 {
            (0.0, 0.0, 0.0)
        } else {
            let variance =
                compensated_sum(sorted.iter().map(|&x| (x - mean) * (x - mean))) / (nf - 1.0);
            let pair_sum = compensated_sum(
                sorted
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| k as f64 * x - prefix[k]),
            );
            let pair_sum_sq = compensated_sum(
                sorted
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| k as f64 * x * x - prefix_sq[k]),
            );
            (variance, pair_sum / pairs(n), 0.5 * pair_sum_sq / pairs(n))
        };

        // W_k = n*gmd - (n-2)*gmd^(k) collapses to 2*R_k/(n-1).
        let sw2 = (n >= 4).then(|| {
            let w: Vec<f64> = sorted
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let below = k as f64 * x - prefix[k];
                    let above = (total - prefix[k + 1]) - (nf - 1.0 - k as f64) * x;
                    2.0 * (below + above) / (nf - 1.0)
                })
                .collect();
            let w_bar = compensated_sum(w.iter().copied()) / nf;
            compensated_sum(w.iter().map(|&v| (v - w_bar) * (v - w_bar))) / (nf - 1.0)
        });

        Self {
            n,
            mean,
            variance,
            gmd,
            tau,
            sw2,
        }
    }

    fn snapshot(&self) -> EstimateSnapshot {
        let v2 = self
            .sw2
            .map(|sw2| VSquared::assemble(self.mean, self.variance, self.gmd, self.tau, sw2));
        EstimateSnapshot {
            n: self.n,
            mean: self.mean,
            variance: self.variance,
            gmd: self.gmd,
            gini: self.gmd / (2.0 * self.mean),
            tau: self.tau,
            sw2: self.sw2,
            v2: v2.map(|v| v.value),
            v2_clamped: v2.is_some_and(|v| v.clamped),
        }
    }
}

/// The plug-in estimate of the asymptotic variance constant of `G_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VSquared {
    /// Clamped at zero.
    pub value: f64,
    /// The unclamped combination, which may be negative in small samples.
    pub raw: f64,
    pub clamped: bool,
}

impl VSquared {
    /// Combines the component estimators into `V^2`.
    pub fn assemble(mean: f64, variance: f64, gmd: f64, tau: f64, sw2: f64) -> Self {
        let m2 = mean * mean;
        let raw = gmd * gmd * variance / (4.0 * m2 * m2) - gmd * tau / (m2 * mean)
            + gmd * gmd / m2
            + sw2 / (4.0 * m2);
        let clamped = raw < 0.0;
        Self {
            value: if clamped { 0.0 } else { raw },
            raw,
            clamped,
        }
    }
}

/// All estimators at one sample size.
///
/// For `n < 2` the pairwise fields are zero (no pairs), and `sw2`/`v2` are
/// `None` until four observations are available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSnapshot {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub gmd: f64,
    pub gini: f64,
    pub tau: f64,
    pub sw2: Option<f64>,
    pub v2: Option<f64>,
    /// True when the raw `V^2` combination was negative and clamped to zero.
    pub v2_clamped: bool,
}

/// Incrementally maintained order statistics of a growing sample.
#[derive(Debug, Clone, Default)]
pub struct EstimatorState {
    sorted: Vec<f64>,
    sums: PrefixSums,
}

impl EstimatorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        let mut state = Self::new();
        state.sorted.reserve(capacity);
        state
    }

    /// Adds one observation. O(n): sorted insertion plus a prefix-sum patch
    /// from the insertion point onwards.
    pub fn push(&mut self, x: f64) -> Result<()> {
        let x = validate(x)?;
        let at = self.sorted.partition_point(|&v| v <= x);
        self.sorted.insert(at, x);
        self.sums.patch(&self.sorted, at);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn snapshot(&self) -> Result<EstimateSnapshot> {
        require("snapshot", 1, self.len())?;
        Ok(SortedStats::compute(&self.sorted, &self.sums.prefix, &self.sums.prefix_sq).snapshot())
    }
}

impl Extend<f64> for EstimatorState {
    /// Panics on an invalid observation; use [`EstimatorState::push`] to handle it.
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x).expect("invalid observation");
        }
    }
}

pub fn mean(sample: &Sample) -> Result<f64> {
    require("mean", 1, sample.len())?;
    Ok(sample.stats().mean)
}

/// Unbiased sample variance `S^2_n`.
pub fn variance(sample: &Sample) -> Result<f64> {
    require("variance", 2, sample.len())?;
    Ok(sample.stats().variance)
}

/// Gini's mean difference: the average of `|X_i - X_j|` over all pairs.
pub fn gmd(sample: &Sample) -> Result<f64> {
    require("gmd", 2, sample.len())?;
    Ok(sample.stats().gmd)
}

/// Sample Gini index `gmd / (2 * mean)`.
pub fn gini(sample: &Sample) -> Result<f64> {
    require("gini", 2, sample.len())?;
    let stats = sample.stats();
    if stats.mean <= 0.0 {
        return Err(Error::InvariantViolation(format!(
            "gini needs a positive mean, got {}",
            stats.mean
        )));
    }
    Ok(stats.gmd / (2.0 * stats.mean))
}

/// U-statistic estimate of `E(X_1 |X_1 - X_2|)`.
pub fn tau_hat(sample: &Sample) -> Result<f64> {
    require("tau_hat", 2, sample.len())?;
    Ok(sample.stats().tau)
}

/// Sample variance of the jackknife pseudo-values of Gini's mean difference.
pub fn s_w_squared(sample: &Sample) -> Result<f64> {
    require("s_w_squared", 4, sample.len())?;
    Ok(sample.stats().sw2.expect("n >= 4"))
}

/// `V^2_n`, clamped at zero.
pub fn v_squared(sample: &Sample) -> Result<f64> {
    Ok(v_squared_detail(sample)?.value)
}

pub fn v_squared_detail(sample: &Sample) -> Result<VSquared> {
    require("v_squared", 4, sample.len())?;
    let s = sample.stats();
    Ok(VSquared::assemble(
        s.mean,
        s.variance,
        s.gmd,
        s.tau,
        s.sw2.expect("n >= 4"),
    ))
}

/// Snapshot of a whole sample via a fresh sort.
pub fn snapshot_of(sample: &Sample) -> Result<EstimateSnapshot> {
    require("snapshot", 1, sample.len())?;
    Ok(sample.stats().snapshot())
}

/// Quadratic-time reference estimators, written straight from the pairwise
/// definitions over the arrival-ordered sample. They share no code with the
/// sorted kernel.
pub mod naive {
    use super::{pairs, VSquared};

    pub fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    pub fn variance(xs: &[f64]) -> f64 {
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
    }

    fn pair_sum_excluding(xs: &[f64], skip: Option<usize>) -> f64 {
        let mut total = 0.0;
        for i in 0..xs.len() {
            if Some(i) == skip {
                continue;
            }
            for j in (i + 1)..xs.len() {
                if Some(j) == skip {
                    continue;
                }
                total += (xs[i] - xs[j]).abs();
            }
        }
        total
    }

    pub fn gmd(xs: &[f64]) -> f64 {
        pair_sum_excluding(xs, None) / pairs(xs.len())
    }

    pub fn gini(xs: &[f64]) -> f64 {
        gmd(xs) / (2.0 * mean(xs))
    }

    /// Literal kernel `(x + y)/2 * |x - y|` averaged over pairs.
    pub fn tau_hat(xs: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                total += 0.5 * (xs[i] + xs[j]) * (xs[i] - xs[j]).abs();
            }
        }
        total / pairs(xs.len())
    }

    /// Leave-one-out GMD recomputed from scratch for each index. O(n^3).
    pub fn leave_one_out_gmd(xs: &[f64], j: usize) -> f64 {
        pair_sum_excluding(xs, Some(j)) / pairs(xs.len() - 1)
    }

    fn pseudo_value_variance(w: &[f64]) -> f64 {
        let n = w.len() as f64;
        let w_bar = w.iter().sum::<f64>() / n;
        w.iter().map(|v| (v - w_bar) * (v - w_bar)).sum::<f64>() / (n - 1.0)
    }

    /// `s^2_w` with every leave-one-out GMD recomputed by a double loop. O(n^3).
    pub fn s_w_squared_cubic(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let full = gmd(xs);
        let w: Vec<f64> = (0..xs.len())
            .map(|j| n * full - (n - 2.0) * leave_one_out_gmd(xs, j))
            .collect();
        pseudo_value_variance(&w)
    }

    /// `s^2_w` with leave-one-out GMDs obtained by subtracting each point's
    /// row of absolute differences from the full pair sum. O(n^2).
    pub fn s_w_squared(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let total = pair_sum_excluding(xs, None);
        let full = total / pairs(xs.len());
        let w: Vec<f64> = xs
            .iter()
            .map(|&xj| {
                let row: f64 = xs.iter().map(|&xi| (xj - xi).abs()).sum();
                let loo = (total - row) / pairs(xs.len() - 1);
                n * full - (n - 2.0) * loo
            })
            .collect();
        pseudo_value_variance(&w)
    }

    pub fn v_squared_detail(xs: &[f64]) -> VSquared {
        VSquared::assemble(
            mean(xs),
            variance(xs),
            gmd(xs),
            tau_hat(xs),
            s_w_squared(xs),
        )
    }

    pub fn v_squared(xs: &[f64]) -> f64 {
        v_squared_detail(xs).value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(xs: &[f64]) -> Sample {
        Sample::try_from(xs).unwrap()
    }

    #[test]
    fn single_observation_snapshot() {
        let mut state = EstimatorState::new();
        state.push(5.0).unwrap();
        let snap = state.snapshot().unwrap();
        assert_eq!(snap.n, 1);
        assert_eq!(snap.mean, 5.0);
        assert_eq!(snap.gmd, 0.0);
        assert_eq!(snap.sw2, None);
        assert_eq!(snap.v2, None);
    }

    #[test]
    fn empty_state_has_no_snapshot() {
        assert!(matches!(
            EstimatorState::new().snapshot(),
            Err(Error::InsufficientSample { .. })
        ));
    }

    #[test]
    fn rejects_bad_observations() {
        let mut state = EstimatorState::new();
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                state.push(bad),
                Err(Error::RejectedObservation { .. })
            ));
        }
        assert!(state.is_empty());
        assert!(Sample::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn hand_values_three_points() {
        let s = sample(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(gmd(&s).unwrap(), 4.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(gini(&s).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(tau_hat(&s).unwrap(), 8.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn hand_values_four_points() {
        let s = sample(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(s_w_squared(&s).unwrap(), 16.0 / 27.0, max_relative = 1e-14);
        assert_relative_eq!(v_squared(&s).unwrap(), 4.0 / 75.0, max_relative = 1e-13);
    }

    #[test]
    fn snapshot_four_points() {
        let mut state = EstimatorState::new();
        state.extend([3.0, 1.0, 4.0, 2.0]);
        let snap = state.snapshot().unwrap();
        assert_relative_eq!(snap.mean, 2.5);
        assert_relative_eq!(snap.variance, 5.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(snap.gmd, 5.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(snap.gini, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(snap.tau, 25.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(snap.sw2.unwrap(), 16.0 / 27.0, max_relative = 1e-14);
        assert_relative_eq!(snap.v2.unwrap(), 4.0 / 75.0, max_relative = 1e-13);
        assert!(!snap.v2_clamped);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let s = sample(&[7.5; 6]);
        assert_eq!(gmd(&s).unwrap(), 0.0);
        assert_eq!(gini(&s).unwrap(), 0.0);
        assert_eq!(tau_hat(&s).unwrap(), 0.0);
        assert_eq!(s_w_squared(&s).unwrap(), 0.0);
        assert_eq!(v_squared(&s).unwrap(), 0.0);

        let mut state = EstimatorState::new();
        state.extend([7.5; 6]);
        let snap = state.snapshot().unwrap();
        assert_eq!(
            (snap.variance, snap.gmd, snap.tau, snap.sw2, snap.v2),
            (0.0, 0.0, 0.0, Some(0.0), Some(0.0))
        );
    }

    #[test]
    fn too_small_samples_are_errors() {
        let one = sample(&[1.0]);
        let three = sample(&[1.0, 2.0, 3.0]);
        assert!(gmd(&one).is_err());
        assert!(gini(&one).is_err());
        assert!(tau_hat(&one).is_err());
        assert!(s_w_squared(&three).is_err());
        assert!(v_squared(&three).is_err());
        assert!(mean(&sample(&[])).is_err());
    }

    #[test]
    fn negative_combination_is_clamped() {
        let v = VSquared::assemble(1.0, 0.0, 1.0, 10.0, 0.0);
        assert!(v.raw < 0.0);
        assert!(v.clamped);
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn arrival_order_does_not_matter() {
        let orders = [[1.0, 2.0, 3.0], [3.0, 1.0, 2.0], [2.0, 3.0, 1.0]];
        let snaps: Vec<_> = orders
            .iter()
            .map(|o| {
                let mut st = EstimatorState::new();
                st.extend(o.iter().copied());
                st.snapshot().unwrap()
            })
            .collect();
        assert!(snaps.iter().all(|s| *s == snaps[0]));
    }

    #[test]
    fn ties_are_handled() {
        let xs = [2.0, 2.0, 5.0, 2.0, 5.0, 1.0];
        let s = sample(&xs);
        assert_relative_eq!(gmd(&s).unwrap(), naive::gmd(&xs), max_relative = 1e-14);
        assert_relative_eq!(
            s_w_squared(&s).unwrap(),
            naive::s_w_squared_cubic(&xs),
            max_relative = 1e-12
        );
    }

    #[test]
    fn incremental_matches_resort_fallback() {
        let xs = [0.3, 12.0, 4.4, 4.4, 0.01, 9.9, 2.5, 100.0, 3.3];
        let mut state = EstimatorState::new();
        for (i, &x) in xs.iter().enumerate() {
            state.push(x).unwrap();
            let fallback = snapshot_of(&sample(&xs[..=i])).unwrap();
            assert_eq!(state.snapshot().unwrap(), fallback);
        }
    }

    #[test]
    fn naive_quadratic_and_cubic_agree() {
        let xs = [0.5, 1.7, 0.2, 3.9, 2.2, 0.8, 1.1];
        assert_relative_eq!(
            naive::s_w_squared(&xs),
            naive::s_w_squared_cubic(&xs),
            max_relative = 1e-12
        );
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let total = compensated_sum([1e16, 1.0, -1e16, 1.0]);
        assert_eq!(total, 2.0);
    }
}
