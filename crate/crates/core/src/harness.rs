//! Test reports and the statistical checks used across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kolmogorov asymptotic critical constant at significance 0.01.
pub const KS_C_001: f64 = 1.628;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    Below(f64),
    AtLeast(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Bound::AtMost(t) => x <= t,
            Bound::Below(t) => x < t,
            Bound::AtLeast(t) => x >= t,
            Bound::Within(lo, hi) => (lo..=hi).contains(&x),
        }
    }

    fn headline(&self) -> f64 {
        match *self {
            Bound::AtMost(t) | Bound::Below(t) | Bound::AtLeast(t) => t,
            Bound::Within(_, hi) => hi,
        }
    }
}

/// Outcome of one check. `pass` is always `bound.holds(statistic)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub n_samples: usize,
    pub seed: u64,
    pub pass: bool,
    pub details: String,
}

impl TestReport {
    pub fn new(name: impl Into<String>, statistic: f64, bound: Bound) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold: bound.headline(),
            bound,
            n_samples: 0,
            seed: 0,
            pass: bound.holds(statistic),
            details: String::new(),
        }
    }

    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self::new(name, statistic, Bound::AtMost(threshold))
    }

    pub fn below(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self::new(name, statistic, Bound::Below(threshold))
    }

    /// A report whose statistic is the number of failed parts.
    pub fn all_of(name: impl Into<String>, parts: &[TestReport]) -> Self {
        let failed = parts.iter().filter(|p| !p.pass).count();
        let details = parts
            .iter()
            .map(|p| p.summary_line())
            .collect::<Vec<_>>()
            .join("; ");
        let n = parts.iter().map(|p| p.n_samples).max().unwrap_or(0);
        let seed = parts.first().map_or(0, |p| p.seed);
        Self::at_most(name, failed as f64, 0.0)
            .with_samples(n)
            .with_seed(seed)
            .with_details(details)
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_details(mut self, details: impl Into<String>) -> Self {
        self.details = details.into();
        self
    }

    pub fn summary_line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let bound = match self.bound {
            Bound::AtMost(t) => format!("<= {t:.4e}"),
            Bound::Below(t) => format!("< {t:.4e}"),
            Bound::AtLeast(t) => format!(">= {t:.4e}"),
            Bound::Within(lo, hi) => format!("in [{lo:.4}, {hi:.4}]"),
        };
        format!("{verdict} {}: {:.6e} {bound}", self.name, self.statistic)
    }
}

/// Streaming mean and variance with an associative merge (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / n as f64;
        Moments { count: n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Per-checkpoint moments of `P(t_j) - P(0)` over a batch of paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeans {
    pub times: Vec<f64>,
    pub moments: Vec<Moments>,
}

impl CheckpointMeans {
    pub fn new(times: Vec<f64>) -> Self {
        let moments = vec![Moments::default(); times.len()];
        Self { times, moments }
    }

    /// Quarter checkpoints `T/4, T/2, 3T/4, T`.
    pub fn quarters(horizon: f64) -> Self {
        Self::new((1..=4).map(|j| horizon * j as f64 / 4.0).collect())
    }

    /// Adds one path, given as its values at the checkpoints and at 0.
    pub fn push(&mut self, at_zero: f64, at_checkpoints: &[f64]) {
        for (m, x) in self.moments.iter_mut().zip(at_checkpoints) {
            m.push(x - at_zero);
        }
    }

    pub fn merge(&self, other: &CheckpointMeans) -> CheckpointMeans {
        CheckpointMeans {
            times: self.times.clone(),
            moments: self
                .moments
                .iter()
                .zip(&other.moments)
                .map(|(a, b)| a.merge(b))
                .collect(),
        }
    }

    /// Passes iff every checkpoint mean lies within `k` standard errors of 0.
    /// The statistic is the largest `|mean| / se` over checkpoints.
    pub fn report(&self, name: &str, k: f64) -> TestReport {
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for (t, m) in self.times.iter().zip(&self.moments) {
            let z = if m.se() > 0.0 {
                m.mean.abs() / m.se()
            } else if m.mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
            parts.push(format!("t={t:.3}: mean={:.3e} se={:.3e}", m.mean, m.se()));
        }
        let n = self.moments.first().map_or(0, |m| m.count as usize);
        TestReport::at_most(name, worst, k)
            .with_samples(n)
            .with_details(parts.join(", "))
    }
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS goodness of fit at significance 0.01: passes iff `D < 1.628 / sqrt(N)`.
pub fn ks_test(name: &str, samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport> {
    if samples.len() < 100 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 100,
        });
    }
    if let Some(step) = samples.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    let d = ks_statistic(samples, cdf);
    let crit = KS_C_001 / (samples.len() as f64).sqrt();
    Ok(TestReport::below(name, d, crit).with_samples(samples.len()))
}

/// `|hits/n - p0| <= 3 sqrt(p0 (1 - p0) / n)`. The statistic is the deviation.
pub fn proportion_test(name: &str, hits: usize, n: usize, p0: f64) -> Result<TestReport> {
    if n < 1000 {
        return Err(Error::TooFewSamples { got: n, need: 1000 });
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(crate::error::param("p0", p0, "must lie in [0, 1]"));
    }
    let dev = (hits as f64 / n as f64 - p0).abs();
    let band = 3.0 * (p0 * (1.0 - p0) / n as f64).sqrt();
    Ok(TestReport::at_most(name, dev, band)
        .with_samples(n)
        .with_details(format!("p_hat = {:.5}, p0 = {p0}", hits as f64 / n as f64)))
}

/// Least-squares fit of `log err = slope * log dt + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits the observed order from `(dt, err)` pairs. `Ok(None)` when every
/// error is exactly zero.
pub fn convergence_order(errors: &[(f64, f64)]) -> Result<Option<ConvergenceFit>> {
    if errors.len() < 3 {
        return Err(Error::TooFewSamples {
            got: errors.len(),
            need: 3,
        });
    }
    if errors.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(Error::InvalidInput("dt must be strictly decreasing".into()));
    }
    if errors.iter().all(|&(_, e)| e == 0.0) {
        return Ok(None);
    }
    if let Some(&(_, e)) = errors.iter().find(|&&(_, e)| !(e > 0.0)) {
        return Err(crate::error::param("err", e, "must be positive"));
    }
    let pts: Vec<(f64, f64)> = errors.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(Some(ConvergenceFit {
        slope,
        intercept: my - slope * mx,
        r2,
    }))
}

/// Convergence-order report: passes iff the slope lies in `[lo, hi]`.
pub fn convergence_report(
    name: &str,
    errors: &[(f64, f64)],
    lo: f64,
    hi: f64,
) -> Result<TestReport> {
    Ok(match convergence_order(errors)? {
        None => TestReport::at_most(name, 0.0, 0.0).with_details("all errors are zero"),
        Some(fit) => TestReport::new(name, fit.slope, Bound::Within(lo, hi))
            .with_details(format!("R^2 = {:.4}", fit.r2)),
    }
    .with_samples(errors.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::norm_cdf;
    use crate::paths::RngStream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, "ks").rng();
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                shift + z
            })
            .collect()
    }

    #[test]
    fn ks_null_coverage() {
        // At significance 0.01 about 99 of 100 seeds pass; require 95.
        let passes = (0..100)
            .filter(|&s| {
                ks_test("null", &normals(s, 20_000, 0.0), norm_cdf)
                    .unwrap()
                    .pass
            })
            .count();
        assert!(passes >= 95, "{passes}");
    }

    #[test]
    fn ks_detects_shift() {
        let r = ks_test("shift", &normals(1, 20_000, 0.5), norm_cdf).unwrap();
        assert!(!r.pass);
        assert!(ks_test("few", &[0.0; 99], norm_cdf).is_err());
    }

    #[test]
    fn ks_statistic_by_hand() {
        // Uniform CDF, samples {0.1, 0.5, 0.9}: gaps 1/3 - 0.1 and 0.9 - 2/3.
        let d = ks_statistic(&[0.5, 0.9, 0.1], |x: f64| x.clamp(0.0, 1.0));
        assert!((d - (1.0 / 3.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn proportion_cases() {
        assert!(proportion_test("p", 750, 1000, 0.75).unwrap().pass);
        assert!(!proportion_test("p", 0, 100_000, 0.5).unwrap().pass);
        assert!(proportion_test("p", 5, 999, 0.5).is_err());
        let passes = (0..100)
            .filter(|&s| {
                let mut rng = RngStream::new(s, "bern").rng();
                let hits = (0..100_000).filter(|_| rng.gen::<f64>() < 0.75).count();
                proportion_test("p", hits, 100_000, 0.75).unwrap().pass
            })
            .count();
        assert!(passes >= 95, "{passes}");
    }

    #[test]
    fn convergence_cases() {
        let lin: Vec<_> = (0..4)
            .map(|k| {
                let h = 2f64.powi(-k);
                (h, h)
            })
            .collect();
        let fit = convergence_order(&lin).unwrap().unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
        let half: Vec<_> = lin.iter().map(|&(h, _)| (h, h.sqrt())).collect();
        assert!((convergence_order(&half).unwrap().unwrap().slope - 0.5).abs() < 1e-12);
        assert!(convergence_order(&lin[..2]).is_err());
        assert!(convergence_order(&[(1.0, 1.0), (0.5, 0.0), (0.25, 1.0)]).is_err());
        assert!(convergence_order(&[(1.0, 0.0), (0.5, 0.0), (0.25, 0.0)])
            .unwrap()
            .is_none());
        let rev: Vec<_> = lin.iter().rev().copied().collect();
        assert!(convergence_order(&rev).is_err());
    }

    #[test]
    fn checkpoint_means() {
        let mut c = CheckpointMeans::quarters(1.0);
        for i in 0..1000 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            c.push(0.0, &[s, -s, s, -s]);
        }
        assert!(c.report("sym", 3.0).pass);
        let mut d = CheckpointMeans::quarters(1.0);
        for i in 0..1000 {
            d.push(0.0, &[1.0 + 0.1 * (i % 3) as f64; 4]);
        }
        assert!(!d.report("drift", 3.0).pass);
    }

    #[test]
    fn report_summary_and_json() {
        let r = TestReport::at_most("x", 0.5, 1.0)
            .with_seed(7)
            .with_samples(3);
        assert!(r.pass);
        assert!(r.summary_line().starts_with("PASS x"));
        let j = serde_json::to_string(&r).unwrap();
        let back: TestReport = serde_json::from_str(&j).unwrap();
        assert_eq!(back, r);
        let all = TestReport::all_of("both", &[r.clone(), TestReport::at_most("y", 2.0, 1.0)]);
        assert!(!all.pass);
        assert_eq!(all.statistic, 1.0);
    }

    proptest! {
        #[test]
        fn moments_merge_matches_serial(xs in prop::collection::vec(-1e3f64..1e3, 1..200), cut in 0usize..200) {
            let cut = cut.min(xs.len());
            let serial: Moments = xs.iter().copied().collect();
            let a: Moments = xs[..cut].iter().copied().collect();
            let b: Moments = xs[cut..].iter().copied().collect();
            let m = a.merge(&b);
            prop_assert_eq!(m.count, serial.count);
            prop_assert!((m.mean - serial.mean).abs() <= 1e-9 * (1.0 + serial.mean.abs()));
            prop_assert!((m.variance() - serial.variance()).abs() <= 1e-7 * (1.0 + serial.variance()));
            let c = b.merge(&a);
            prop_assert!((c.mean - m.mean).abs() <= 1e-9 * (1.0 + m.mean.abs()));
        }
    }
}
