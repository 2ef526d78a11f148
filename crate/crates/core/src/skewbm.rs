//! Skew Brownian motion built by excursion flipping, from the Itô-McKean
//! process or from a time-changed decomposition, and its exact laws.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::excursions::{
    assign_signs_const, assign_signs_piecewise, carry_through_zeros, detect_zero_set,
    extract_excursions, AlphaSchedule,
};
use crate::numeric::{integrate, norm_cdf, norm_pdf};
use crate::paths::{quadratic_variation, streams, RngStream, SamplePath, TimeGrid};
use crate::relmart::{ito_mckean, Decomposition};

/// Skewness parameter: a constant or a piecewise schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSpec {
    Constant(f64),
    Schedule(AlphaSchedule),
}

impl AlphaSpec {
    fn validate(&self, horizon: f64) -> Result<()> {
        match self {
            AlphaSpec::Constant(a) if !(0.0..=1.0).contains(a) => {
                Err(param("alpha", *a, "must lie in [0, 1]"))
            }
            AlphaSpec::Constant(_) => Ok(()),
            AlphaSpec::Schedule(s) => s.check_horizon(horizon),
        }
    }

    /// Alpha used for the first-stage marks over the driver's excursions.
    fn first_stage(&self) -> f64 {
        match self {
            AlphaSpec::Constant(a) => *a,
            AlphaSpec::Schedule(s) => s.values()[0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewParams {
    pub alpha: f64,
    pub delta: f64,
}

/// A constructed skew path with the intermediate objects the checks use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewConstruction {
    /// The weak solution, started at 0.
    pub y: SamplePath,
    /// `Z^D_{g_t} X_t`, the path whose excursions receive the final marks.
    pub source: SamplePath,
    /// Reconstructed driving martingale; empty for the time-changed construction.
    pub driving: Option<SamplePath>,
}

/// Marks `x`'s excursions and returns `mark * |x|` along with the marks
/// carried through zeros (initial value `+1`). A crossing node keeps the mark
/// of the excursion it closes, so the output vanishes only where `x` does.
fn flip(x: &SamplePath, alpha: &AlphaSpec, marks: &RngStream) -> Result<(SamplePath, Vec<f64>)> {
    let mask = detect_zero_set(x, 0.0)?;
    let exc = extract_excursions(x, &mask)?;
    let assignment = match alpha {
        AlphaSpec::Constant(a) => assign_signs_const(&exc, *a, marks)?,
        AlphaSpec::Schedule(s) => assign_signs_piecewise(&exc, s, marks)?,
    };
    let z = carry_through_zeros(assignment.process(x.grid()).values(), 1.0);
    let vals = z.iter().zip(x.values()).map(|(m, v)| m * v.abs()).collect();
    Ok((SamplePath::from_parts(*x.grid(), vals), z))
}

/// `Z^D_{g_t} X_t`: first-stage marks over `D`'s excursions, frozen at the
/// last zero `g_t` of `X`. Returns the product and the carried `Z^D`.
fn frozen_product(
    x: &SamplePath,
    d: &SamplePath,
    alpha: f64,
    marks: &RngStream,
) -> Result<(SamplePath, Vec<f64>)> {
    let exc_d = extract_excursions(d, &detect_zero_set(d, 0.0)?)?;
    let zd = assign_signs_const(&exc_d, alpha, marks)?.process(d.grid());
    let zd = carry_through_zeros(zd.values(), 1.0);
    let g = detect_zero_set(x, 0.0)?.last_zero_map();
    let vals = x
        .values()
        .iter()
        .zip(&g)
        .map(|(v, gk)| zd[gk.unwrap_or(0)] * v)
        .collect();
    Ok((SamplePath::from_parts(*x.grid(), vals), zd))
}

fn y_delta(
    b: &SamplePath,
    d: &SamplePath,
    alpha: &AlphaSpec,
    delta: f64,
    stream: &RngStream,
) -> Result<SkewConstruction> {
    alpha.validate(b.grid().horizon())?;
    if d.initial() != 0.0 || b.initial() != 0.0 {
        return Err(Error::InvalidInput("B and D must start at 0".into()));
    }
    let x = ito_mckean(b, d, delta)?;
    let (source, zd) = frozen_product(
        x.total(),
        d,
        alpha.first_stage(),
        &stream.sibling(streams::EXCURSION_MARKS),
    )?;
    let (y, z1) = flip(&source, alpha, &stream.sibling(streams::PRODUCT_MARKS))?;

    let c = (1.0 - delta * delta).sqrt();
    let mut m = Vec::with_capacity(b.len());
    let mut acc = 0.0;
    m.push(0.0);
    for k in 0..b.grid().n_steps() {
        let s = if d.value(k) < 0.0 { -1.0 } else { 1.0 };
        let dx = c * (b.value(k + 1) - b.value(k)) + delta * s * (d.value(k + 1) - d.value(k));
        acc += z1[k] * zd[k] * dx;
        m.push(acc);
    }
    Ok(SkewConstruction {
        y,
        source,
        driving: Some(SamplePath::from_parts(*b.grid(), m)),
    })
}

/// `Y = Z^1_t Z^D_{g_t} X^delta_t` with constant alpha.
pub fn construct_y_delta_1(
    b: &SamplePath,
    d: &SamplePath,
    params: SkewParams,
    stream: &RngStream,
) -> Result<SkewConstruction> {
    y_delta(
        b,
        d,
        &AlphaSpec::Constant(params.alpha),
        params.delta,
        stream,
    )
}

/// As [`construct_y_delta_1`] with the final marks drawn per schedule cell.
pub fn construct_y_delta_2(
    b: &SamplePath,
    d: &SamplePath,
    sched: &AlphaSchedule,
    delta: f64,
    stream: &RngStream,
) -> Result<SkewConstruction> {
    y_delta(b, d, &AlphaSpec::Schedule(sched.clone()), delta, stream)
}

/// `tau_t = inf{s : QV_s > t}` on an output grid over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChange {
    pub grid: TimeGrid,
    pub tau: Vec<usize>,
}

/// Builds the time change from a running QV path. The output grid has
/// `floor(n * horizon / QV(T))` steps so its spacing matches the source.
pub fn time_change(qv: &SamplePath, horizon: f64) -> Result<TimeChange> {
    let available = qv.terminal();
    if !(horizon > 0.0) || horizon >= available {
        return Err(Error::Truncation {
            requested: horizon,
            available,
        });
    }
    let n = qv.grid().n_steps() as f64;
    let steps = ((n * horizon / available).floor() as usize).max(1);
    let grid = TimeGrid::new(horizon, steps)?;
    let q = qv.values();
    let tau = grid
        .times()
        .map(|t| q.partition_point(|&v| v <= t).min(q.len() - 1))
        .collect();
    Ok(TimeChange { grid, tau })
}

impl TimeChange {
    pub fn apply(&self, path: &SamplePath) -> SamplePath {
        let vals = self.tau.iter().map(|&s| path.value(s)).collect();
        SamplePath::from_parts(self.grid, vals)
    }
}

/// `Y_t = Z^1_t Z^D_{g_{tau_t}} X_{tau_t}` for `t` in `[0, horizon]`.
pub fn construct_from_relmart(
    x: &Decomposition,
    d: &SamplePath,
    alpha: &AlphaSpec,
    horizon: f64,
    stream: &RngStream,
) -> Result<SkewConstruction> {
    alpha.validate(horizon)?;
    if x.grid() != d.grid() {
        return Err(Error::InvalidInput(
            "X and D live on different grids".into(),
        ));
    }
    let tc = time_change(&quadratic_variation(x.total()), horizon)?;
    let (product, _) = frozen_product(
        x.total(),
        d,
        alpha.first_stage(),
        &stream.sibling(streams::EXCURSION_MARKS),
    )?;
    let mut changed = tc.apply(&product).into_values();
    changed[0] = 0.0;
    let source = SamplePath::from_parts(tc.grid, changed);
    let (y, _) = flip(&source, alpha, &stream.sibling(streams::PRODUCT_MARKS))?;
    Ok(SkewConstruction {
        y,
        source,
        driving: None,
    })
}

/// Density and CDF at `x` of skew Brownian motion from 0 at time `t`:
/// `2 alpha phi_t` on `x > 0`, `2 (1 - alpha) phi_t` on `x < 0`.
pub fn skew_density_cdf(alpha: f64, t: f64, x: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(param("t", t, "must be > 0"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(param("alpha", alpha, "must lie in [0, 1]"));
    }
    let s = t.sqrt();
    let phi = norm_pdf(x / s) / s;
    let big = norm_cdf(x / s);
    Ok(if x > 0.0 {
        (2.0 * alpha * phi, (1.0 - alpha) + 2.0 * alpha * (big - 0.5))
    } else if x < 0.0 {
        (2.0 * (1.0 - alpha) * phi, 2.0 * (1.0 - alpha) * big)
    } else {
        (phi, 1.0 - alpha)
    })
}

/// Exact sampler for skew Brownian motion from 0 at time `t`.
pub fn sample_skew_terminal<R: Rng>(alpha: f64, t: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let sign = if rng.gen::<f64>() < alpha { 1.0 } else { -1.0 };
    sign * t.sqrt() * z.abs()
}

/// Skew-normal density `2 phi(u) Phi(lambda u)`.
pub fn azzalini_pdf(lambda: f64, x: f64) -> f64 {
    2.0 * norm_pdf(x) * norm_cdf(lambda * x)
}

/// CDF of the skew-normal law, by adaptive quadrature from -12.
pub fn azzalini_cdf(lambda: f64, x: f64) -> f64 {
    const LO: f64 = -12.0;
    if lambda == 0.0 {
        return norm_cdf(x);
    }
    if x <= LO {
        return 0.0;
    }
    if x >= -LO {
        return 1.0;
    }
    integrate(|u| azzalini_pdf(lambda, u), LO, x, 1e-11).clamp(0.0, 1.0)
}

/// Shape parameter `delta / sqrt(1 - delta^2)` of the law of `X^delta_1`.
pub fn azzalini_lambda(delta: f64) -> f64 {
    delta / (1.0 - delta * delta).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ks_test, proportion_test};
    use crate::local_time::reflected_decomposition;
    use crate::paths::simulate_brownian;

    fn bd(seed: u64, i: u64, n: usize) -> (SamplePath, SamplePath) {
        let g = TimeGrid::new(1.0, n).unwrap();
        (
            simulate_brownian(&g, &RngStream::new(seed, streams::BROWNIAN).child(i)),
            simulate_brownian(&g, &RngStream::new(seed, streams::DRIVER).child(i)),
        )
    }

    #[test]
    fn density_cdf_basics() {
        for &x in &[-2.0, -0.3, 0.4, 1.7] {
            let (p, c) = skew_density_cdf(0.5, 2.0, x).unwrap();
            assert!((p - norm_pdf(x / 2f64.sqrt()) / 2f64.sqrt()).abs() < 1e-15);
            assert!((c - norm_cdf(x / 2f64.sqrt())).abs() < 1e-15);
        }
        for &a in &[0.0, 0.25, 0.9] {
            assert_eq!(skew_density_cdf(a, 1.0, 0.0).unwrap().1, 1.0 - a);
            let mass = integrate(
                |x| skew_density_cdf(a, 1.5, x).unwrap().0,
                -15.0,
                0.0,
                1e-12,
            ) + integrate(|x| skew_density_cdf(a, 1.5, x).unwrap().0, 0.0, 15.0, 1e-12);
            assert!((mass - 1.0).abs() < 1e-8);
            // CDF is the integral of the density.
            let c = integrate(
                |x| skew_density_cdf(a, 1.5, x).unwrap().0,
                -15.0,
                0.8,
                1e-12,
            );
            assert!((c - skew_density_cdf(a, 1.5, 0.8).unwrap().1).abs() < 1e-9);
        }
        assert!(skew_density_cdf(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn azzalini_oracles() {
        for &x in &[-3.0, -0.5, 0.0, 1.2] {
            assert!((azzalini_cdf(0.0, x) - norm_cdf(x)).abs() < 1e-12);
            // lambda = 1: F(x) = Phi(x)^2.
            assert!((azzalini_cdf(1.0, x) - norm_cdf(x).powi(2)).abs() < 1e-9);
        }
        assert!((azzalini_cdf(0.75, 11.99) - 1.0).abs() < 1e-8);
        assert_eq!(azzalini_cdf(0.75, f64::INFINITY), 1.0);
        assert!((azzalini_lambda(0.6) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn azzalini_matches_abs_representation() {
        let mut rng = RngStream::new(31, "azzalini").rng();
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                let g1: f64 = StandardNormal.sample(&mut rng);
                let g2: f64 = StandardNormal.sample(&mut rng);
                0.8 * g1 + 0.6 * g2.abs()
            })
            .collect();
        assert!(ks_test("az", &xs, |x| azzalini_cdf(0.75, x)).unwrap().pass);
    }

    #[test]
    fn construction_starts_at_zero_and_vanishes_with_source() {
        let (b, d) = bd(32, 0, 2000);
        let c = construct_y_delta_1(
            &b,
            &d,
            SkewParams {
                alpha: 0.7,
                delta: 0.6,
            },
            &RngStream::new(32, "skew"),
        )
        .unwrap();
        assert_eq!(c.y.initial(), 0.0);
        for k in 0..c.y.len() {
            assert_eq!(c.y.value(k).abs(), c.source.value(k).abs());
        }
        let again = construct_y_delta_1(
            &b,
            &d,
            SkewParams {
                alpha: 0.7,
                delta: 0.6,
            },
            &RngStream::new(32, "skew"),
        )
        .unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn sign_law_small_batch() {
        // 4000 paths: 3 se of the proportion is ~0.02.
        for &alpha in &[0.25, 0.75] {
            let n = 4000;
            let hits = (0..n)
                .filter(|&i| {
                    let (b, d) = bd(33, i, 1000);
                    let s = RngStream::new(33, "skew").child(i);
                    construct_y_delta_1(&b, &d, SkewParams { alpha, delta: 0.6 }, &s)
                        .unwrap()
                        .y
                        .terminal()
                        > 0.0
                })
                .count();
            assert!(
                proportion_test("sign", hits, n as usize, alpha)
                    .unwrap()
                    .pass,
                "{alpha}: {hits}"
            );
        }
    }

    #[test]
    fn single_cell_schedule_matches_constant() {
        let (b, d) = bd(34, 0, 1000);
        let s = RngStream::new(34, "skew");
        let c1 = construct_y_delta_1(
            &b,
            &d,
            SkewParams {
                alpha: 0.3,
                delta: 0.5,
            },
            &s,
        )
        .unwrap();
        let c2 =
            construct_y_delta_2(&b, &d, &AlphaSchedule::constant(0.3).unwrap(), 0.5, &s).unwrap();
        assert_eq!(c1.y, c2.y);
    }

    #[test]
    fn driving_martingale_qv() {
        let (b, d) = bd(35, 0, 100_000);
        let c = construct_y_delta_1(
            &b,
            &d,
            SkewParams {
                alpha: 0.75,
                delta: 0.6,
            },
            &RngStream::new(35, "skew"),
        )
        .unwrap();
        let qv = quadratic_variation(c.driving.as_ref().unwrap()).terminal();
        assert!((qv - 1.0).abs() < 0.02, "{qv}");
    }

    #[test]
    fn time_change_truncation_and_consistency() {
        let (_, d) = bd(36, 0, 100_000);
        let x = reflected_decomposition(&d);
        let x = Decomposition::martingale_only(d.clone(), x.h_ref().clone());
        assert!(matches!(
            construct_from_relmart(
                &x,
                &d,
                &AlphaSpec::Constant(0.5),
                5.0,
                &RngStream::new(36, "s")
            ),
            Err(Error::Truncation { .. })
        ));
        let c = construct_from_relmart(
            &x,
            &d,
            &AlphaSpec::Constant(0.6),
            0.9,
            &RngStream::new(36, "s"),
        )
        .unwrap();
        assert_eq!(c.y.initial(), 0.0);
        // QV of the output against t: slope-1 fit with high R^2.
        let qv = quadratic_variation(&c.y);
        let pts: Vec<(f64, f64)> =
            c.y.grid()
                .times()
                .zip(qv.values().iter().copied())
                .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
        assert!(sxy * sxy / (sxx * syy) >= 0.99);
    }

    #[test]
    fn sampler_matches_cdf() {
        let mut rng = RngStream::new(37, "sampler").rng();
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_skew_terminal(0.3, 2.0, &mut rng))
            .collect();
        assert!(
            ks_test("sampler", &xs, |x| skew_density_cdf(0.3, 2.0, x).unwrap().1)
                .unwrap()
                .pass
        );
    }
}
