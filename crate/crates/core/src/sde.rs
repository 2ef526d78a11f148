//! SDEs driven by a relative martingale `W = B + v`: Euler-Stieltjes
//! stepping, Picard iteration for the zeta-pinned form, coincidence with the
//! classical equation, and the geometric skew equation.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::excursions::{extract_excursions, HMask};
use crate::harness::TestReport;
use crate::paths::{RngStream, SamplePath, TimeGrid};
use crate::relmart::{carried_by_ratio, Decomposition};

/// `f(t, x, aux)` where `aux` is the driver value `D_t`.
pub type CoeffFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Diffusion and drift coefficients with their growth constant `C` and
/// Lipschitz constant `K`.
#[derive(Clone)]
pub struct CoeffSpec {
    sigma: CoeffFn,
    drift: CoeffFn,
    c: f64,
    k: f64,
    uses_aux: bool,
}

impl fmt::Debug for CoeffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoeffSpec")
            .field("c", &self.c)
            .field("k", &self.k)
            .field("uses_aux", &self.uses_aux)
            .finish_non_exhaustive()
    }
}

const SPOT_CHECKS: usize = 512;

impl CoeffSpec {
    /// Registers coefficients after spot-checking
    /// `|b| + |sigma| <= C (1 + |x|)` and the Lipschitz bound on random
    /// `(t, x, y, aux)` draws.
    pub fn new<S, B>(sigma: S, drift: B, c: f64, k: f64, uses_aux: bool) -> Result<Self>
    where
        S: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(param("C", c, "must be finite and >= 0"));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(param("K", k, "must be finite and >= 0"));
        }
        let spec = Self {
            sigma: Arc::new(sigma),
            drift: Arc::new(drift),
            c,
            k,
            uses_aux,
        };
        spec.spot_check()?;
        Ok(spec)
    }

    fn spot_check(&self) -> Result<()> {
        let mut rng = RngStream::new(0, "coeff-spot-check").rng();
        for i in 0..SPOT_CHECKS {
            let scale = if i % 2 == 0 { 2.0 } else { 50.0 };
            let t = rng.gen_range(0.0..10.0);
            let x = rng.gen_range(-scale..scale);
            let y = rng.gen_range(-scale..scale);
            let aux = if self.uses_aux {
                rng.gen_range(-3.0..3.0)
            } else {
                0.0
            };
            let (sx, bx) = ((self.sigma)(t, x, aux), (self.drift)(t, x, aux));
            let (sy, by) = ((self.sigma)(t, y, aux), (self.drift)(t, y, aux));
            if !(sx.is_finite() && bx.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "coefficient not finite at t={t}, x={x}"
                )));
            }
            let slack = 1e-9 * (1.0 + self.c + self.k) * (1.0 + x.abs() + y.abs());
            if sx.abs() + bx.abs() > self.c * (1.0 + x.abs()) + slack {
                return Err(Error::InvalidInput(format!(
                    "linear growth bound C={} fails at x={x}",
                    self.c
                )));
            }
            if (sx - sy).abs() + (bx - by).abs() > self.k * (x - y).abs() + slack {
                return Err(Error::InvalidInput(format!(
                    "Lipschitz bound K={} fails at x={x}, y={y}",
                    self.k
                )));
            }
        }
        Ok(())
    }

    /// `sigma(x) = s x`, `b(x) = a x`.
    pub fn linear(s: f64, a: f64) -> Self {
        let c = s.abs() + a.abs();
        Self::new(move |_, x, _| s * x, move |_, x, _| a * x, c, c, false)
            .expect("linear coefficients are valid")
    }

    /// `sigma = s`, `b = a`.
    pub fn constant(s: f64, a: f64) -> Self {
        Self::new(
            move |_, _, _| s,
            move |_, _, _| a,
            s.abs() + a.abs(),
            0.0,
            false,
        )
        .expect("constant coefficients are valid")
    }

    /// Piecewise-linear interpolation of `sigma(x)` and `b(x)` on nodes `xs`,
    /// flat outside.
    pub fn table(xs: Vec<f64>, sigma: Vec<f64>, drift: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != sigma.len() || xs.len() != drift.len() {
            return Err(Error::InvalidInput(
                "table columns must be nonempty and of equal length".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "table nodes must be strictly increasing".into(),
            ));
        }
        if xs
            .iter()
            .chain(&sigma)
            .chain(&drift)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("table entries must be finite".into()));
        }
        let slope = |ys: &[f64]| {
            xs.windows(2)
                .zip(ys.windows(2))
                .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max)
        };
        let k = slope(&sigma) + slope(&drift);
        let c = sigma.iter().map(|v| v.abs()).fold(0.0, f64::max)
            + drift.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let xs = Arc::new(xs);
        let interp = move |xs: &[f64], ys: &[f64], x: f64| {
            let i = xs.partition_point(|&v| v <= x);
            if i == 0 {
                ys[0]
            } else if i == xs.len() {
                ys[xs.len() - 1]
            } else {
                let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                ys[i - 1] + w * (ys[i] - ys[i - 1])
            }
        };
        let xs2 = Arc::clone(&xs);
        Self::new(
            move |_, x, _| interp(&xs, &sigma, x),
            move |_, x, _| interp(&xs2, &drift, x),
            c,
            k,
            false,
        )
    }

    /// Multiplies `sigma` by a cutoff in `|D_t|` that is 0 on `|D_t| <= eps`
    /// and 1 on `|D_t| >= 2 eps`, so `sigma` vanishes on the band around H.
    pub fn with_sigma_cutoff(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(param("eps", eps, "must be finite and > 0"));
        }
        let inner = Arc::clone(&self.sigma);
        Self::new(
            move |t, x, aux| inner(t, x, aux) * (aux.abs() / eps - 1.0).clamp(0.0, 1.0),
            {
                let b = Arc::clone(&self.drift);
                move |t, x, aux| b(t, x, aux)
            },
            self.c,
            self.k,
            true,
        )
    }

    pub fn sigma(&self, t: f64, x: f64, aux: f64) -> f64 {
        (self.sigma)(t, x, aux)
    }

    pub fn drift(&self, t: f64, x: f64, aux: f64) -> f64 {
        (self.drift)(t, x, aux)
    }

    pub fn growth_constant(&self) -> f64 {
        self.c
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.k
    }

    pub fn uses_aux(&self) -> bool {
        self.uses_aux
    }
}

/// `dX = sigma dW + b dt`, `X_0 = Z`, with `W` given by its decomposition.
/// With `zeta` set, the zeta-pinned form is solved: `X = zeta` on H.
#[derive(Debug, Clone)]
pub struct SdeProblem {
    pub coeffs: CoeffSpec,
    pub driver: Decomposition,
    pub d_path: SamplePath,
    pub h_mask: HMask,
    pub z0: f64,
    pub zeta: Option<f64>,
}

/// Tolerance on the share of `dv` charged outside H.
pub const CARRIED_TOL: f64 = 0.05;

impl SdeProblem {
    pub fn new(
        coeffs: CoeffSpec,
        driver: Decomposition,
        d_path: SamplePath,
        h_mask: HMask,
        z0: f64,
        zeta: Option<f64>,
    ) -> Result<Self> {
        if driver.grid() != d_path.grid() || driver.grid() != h_mask.grid() {
            return Err(Error::InvalidInput(
                "driver, D and H live on different grids".into(),
            ));
        }
        if !z0.is_finite() || zeta.is_some_and(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("initial values must be finite".into()));
        }
        let ratio = carried_by_ratio(driver.drift(), &h_mask);
        if ratio > CARRIED_TOL {
            return Err(Error::InvalidInput(format!(
                "driver drift is not carried by H (ratio {ratio:.3})"
            )));
        }
        Ok(Self {
            coeffs,
            driver,
            d_path,
            h_mask,
            z0,
            zeta,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.driver.grid()
    }

    pub fn horizon(&self) -> f64 {
        self.grid().horizon()
    }

    /// The same problem driven by the martingale part of `W` alone.
    pub fn classical(&self) -> SdeProblem {
        let grid = *self.grid();
        let driver = Decomposition::from_parts(
            self.driver.initial(),
            self.driver.martingale().clone(),
            SamplePath::zeros(grid),
            self.h_mask.clone(),
        );
        SdeProblem {
            driver,
            ..self.clone()
        }
    }

    pub fn with_z0(&self, z0: f64) -> SdeProblem {
        SdeProblem { z0, ..self.clone() }
    }

    fn aux(&self, k: usize) -> f64 {
        if self.coeffs.uses_aux {
            self.d_path.value(k)
        } else {
            0.0
        }
    }

    /// `sigma(t_k, x) dW_k + b(t_k, x) dt`.
    fn increment(&self, k: usize, x: f64) -> f64 {
        let g = self.grid();
        let t = g.time(k);
        let aux = self.aux(k);
        let w = self.driver.total();
        self.coeffs.sigma(t, x, aux) * (w.value(k + 1) - w.value(k))
            + self.coeffs.drift(t, x, aux) * g.dt()
    }

    fn pinned(&self, k: usize) -> Option<f64> {
        self.zeta.filter(|_| self.h_mask.contains(k))
    }

    /// `X_0`: `zeta` if node 0 is in H and the pinned form is solved.
    pub fn start_value(&self) -> f64 {
        self.pinned(0).unwrap_or(self.z0)
    }

    /// True when the pinned form overrides a different `Z` at `t = 0`.
    pub fn start_overridden(&self) -> bool {
        self.pinned(0).is_some_and(|z| z != self.z0)
    }

    /// `(|Z| + C T) exp(C T + C max|W|)`: a coarse bound on `|X|`.
    pub fn growth_envelope(&self) -> f64 {
        let c = self.coeffs.growth_constant();
        let t = self.horizon();
        let w = self.driver.total();
        let wmax = w
            .values()
            .iter()
            .map(|v| (v - w.initial()).abs())
            .fold(0.0, f64::max);
        let z = self.z0.abs().max(self.zeta.map_or(0.0, f64::abs));
        (z + c * t) * (c * t + c * wmax).exp()
    }
}

/// Euler-Stieltjes: `X_{k+1} = X_k + sigma(t_k, X_k) dW_k + b(t_k, X_k) dt`.
/// In the pinned form `X_k = zeta` on H and
/// `X_k = Z + sum_{j<k} [sigma dW + b dt]` off H.
pub fn euler_solve(prob: &SdeProblem) -> Result<SamplePath> {
    let n = prob.grid().n_steps();
    let mut x = Vec::with_capacity(n + 1);
    x.push(prob.start_value());
    let mut acc = 0.0;
    for k in 0..n {
        let inc = prob.increment(k, x[k]);
        let next = if prob.zeta.is_some() {
            acc += inc;
            prob.pinned(k + 1).unwrap_or(prob.z0 + acc)
        } else {
            x[k] + inc
        };
        if !next.is_finite() {
            return Err(Error::NonFinite { step: k + 1 });
        }
        x.push(next);
    }
    Ok(SamplePath::from_parts(*prob.grid(), x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardOutcome {
    pub solutions: Vec<SamplePath>,
    /// `d_p = ||Y^(p+1) - Y^(p)||` in discrete `L^2(lambda x P)`.
    pub distances: Vec<f64>,
    pub converged: bool,
}

fn picard_step(prob: &SdeProblem, prev: &[f64]) -> Vec<f64> {
    let n = prob.grid().n_steps();
    let mut y = Vec::with_capacity(n + 1);
    y.push(prob.start_value());
    let mut acc = 0.0;
    for (k, &p) in prev.iter().enumerate().take(n) {
        acc += prob.increment(k, p);
        y.push(prob.pinned(k + 1).unwrap_or(prob.z0 + acc));
    }
    y
}

/// Picard iteration from `Y^(0) = X_0` over a batch sharing one grid.
/// Stops once `d_p <= tol`; otherwise returns after `max_iter` iterations
/// with `converged = false`.
pub fn picard_solve(batch: &[SdeProblem], max_iter: usize, tol: f64) -> Result<PicardOutcome> {
    let Some(first) = batch.first() else {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    };
    let grid = *first.grid();
    if batch.iter().any(|p| *p.grid() != grid) {
        return Err(Error::InvalidInput(
            "batch problems live on different grids".into(),
        ));
    }
    let mut current: Vec<Vec<f64>> = batch
        .iter()
        .map(|p| vec![p.start_value(); grid.len()])
        .collect();
    let mut distances = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let next: Vec<Vec<f64>> = batch
            .par_iter()
            .zip(current.par_iter())
            .map(|(p, prev)| picard_step(p, prev))
            .collect();
        let sq: Vec<f64> = next
            .par_iter()
            .zip(current.par_iter())
            .map(|(a, b)| {
                a[1..]
                    .iter()
                    .zip(&b[1..])
                    .map(|(u, v)| (u - v).powi(2))
                    .sum::<f64>()
            })
            .collect();
        let d = (sq.iter().sum::<f64>() * grid.dt() / batch.len() as f64).sqrt();
        if !d.is_finite() {
            return Err(Error::NonFinite {
                step: distances.len(),
            });
        }
        distances.push(d);
        current = next;
        if d <= tol {
            converged = true;
            break;
        }
    }
    Ok(PicardOutcome {
        solutions: current
            .into_iter()
            .map(|v| SamplePath::from_parts(grid, v))
            .collect(),
        distances,
        converged,
    })
}

/// Contraction constant `2 K^2 (2 + T)` of the Picard map on squared distances.
pub fn picard_constant(k: f64, horizon: f64) -> f64 {
    2.0 * k * k * (2.0 + horizon)
}

/// Gronwall rate `A = 3 K^2 (2 + T)` for the uniqueness estimate.
pub fn gronwall_rate(k: f64, horizon: f64) -> f64 {
    3.0 * k * k * (2.0 + horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `sigma` vanishes on H; whole horizon.
    P13,
    /// Before the first zero.
    P14,
    /// Up to the next zero after the first H run.
    P15,
    /// Up to `tau = d_N`.
    P16,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::P13, Variant::P14, Variant::P15, Variant::P16];
}

/// Last node of the variant's window on this path, or `None` when the
/// path does not meet the variant's precondition.
pub fn coincidence_window(prob: &SdeProblem, variant: Variant) -> Result<Option<usize>> {
    let n = prob.grid().n_steps();
    let h = &prob.h_mask;
    Ok(match variant {
        Variant::P13 => {
            if !prob.coeffs.uses_aux() {
                return Err(Error::InvalidInput(
                    "P13 needs sigma that depends on D".into(),
                ));
            }
            Some(n)
        }
        Variant::P14 => h.first(),
        Variant::P15 => h.first().map(|t1| {
            let run_end = (t1..=n).find(|&k| !h.contains(k));
            run_end
                .and_then(|r| (r..=n).find(|&k| h.contains(k)))
                .map_or(n, |t2| t2 - 1)
        }),
        Variant::P16 => {
            let exc = extract_excursions(&prob.d_path, h)?;
            let js: Vec<_> = exc.excursions.iter().filter(|e| !e.left_open).collect();
            let tau = js
                .windows(2)
                .find(|w| w[0].d_idx != w[1].g_idx)
                .map(|w| w[0].d_idx)
                .or_else(|| js.last().map(|e| e.d_idx));
            match (tau, h.first()) {
                (Some(tau), Some(t1)) if t1 < tau => Some(tau),
                _ => None,
            }
        }
    })
}

/// `max |X_cls - X_rel|` over the variant's window, where `X_cls` is driven
/// by the martingale part of `W` only. `None` for excluded paths.
pub fn coincidence_discrepancy(prob: &SdeProblem, variant: Variant) -> Result<Option<f64>> {
    let Some(end) = coincidence_window(prob, variant)? else {
        return Ok(None);
    };
    let rel = euler_solve(prob)?;
    let cls = euler_solve(&prob.classical())?;
    Ok(Some(max_gap(&rel.values()[..=end], &cls.values()[..=end])))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Single-path coincidence check against a discretisation tolerance.
pub fn coincidence_tests(prob: &SdeProblem, variant: Variant, tol: f64) -> Result<TestReport> {
    let name = format!("coincidence_{variant:?}");
    Ok(match coincidence_discrepancy(prob, variant)? {
        Some(d) => TestReport::at_most(name, d, tol).with_samples(1),
        None => TestReport::at_most(name, 0.0, tol)
            .with_samples(0)
            .with_details("precondition unmet; path excluded"),
    })
}

/// `max_k |coarse_k - fine_{r k}|` for `k <= end`, with `r` the grid ratio.
pub fn two_grid_discrepancy(coarse: &SamplePath, fine: &SamplePath, end: usize) -> Result<f64> {
    let (nc, nf) = (coarse.grid().n_steps(), fine.grid().n_steps());
    if nf % nc != 0 || coarse.grid().horizon() != fine.grid().horizon() {
        return Err(Error::InvalidInput(
            "fine grid must refine the coarse grid".into(),
        ));
    }
    let r = nf / nc;
    Ok((0..=end.min(nc))
        .map(|k| (coarse.value(k) - fine.value(r * k)).abs())
        .fold(0.0, f64::max))
}

/// `max_k |X_k - X_{gamma_k} - sum_{gamma_k <= s < k} [sigma dW + b ds]|`
/// relative to `max(1, max|X|)`, for a given last-zero map (`None` reads as
/// 0). The sum starts at `gamma_k + sum_offset`; a nonzero offset is the
/// off-by-one the check must catch.
pub fn eq11_residual_with(
    prob: &SdeProblem,
    sol: &SamplePath,
    gamma: &[Option<usize>],
    sum_offset: usize,
) -> Result<f64> {
    if sol.grid() != prob.grid() || gamma.len() != sol.len() {
        return Err(Error::InvalidInput(
            "solution or gamma map does not match the grid".into(),
        ));
    }
    let x = sol.values();
    let mut prefix = Vec::with_capacity(x.len());
    prefix.push(0.0);
    for k in 0..prob.grid().n_steps() {
        let last = prefix[k];
        prefix.push(last + prob.increment(k, x[k]));
    }
    let scale = sol.max_abs().max(1.0);
    let worst = (0..x.len())
        .map(|k| {
            let g = gamma[k].unwrap_or(0).min(k);
            let s = (g + sum_offset).min(k);
            (x[k] - x[g] - (prefix[k] - prefix[s])).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst / scale)
}

/// Relative residual threshold for [`eq11_residual`].
pub const EQ11_TOL: f64 = 1e-10;

/// Restarted-integral identity from the last zero `gamma_t`, for a solution
/// of the unpinned equation.
pub fn eq11_residual(prob: &SdeProblem, sol: &SamplePath) -> Result<TestReport> {
    if prob.zeta.is_some() {
        return Err(Error::InvalidInput(
            "the restart identity applies to the unpinned equation".into(),
        ));
    }
    let r = eq11_residual_with(prob, sol, &prob.h_mask.last_zero_map(), 0)?;
    Ok(TestReport::at_most("eq11_residual", r, EQ11_TOL).with_samples(1))
}

/// Euler solution of `dS = (mu + sigma^2 / 2) S dt + sigma S dX` and the
/// closed form `S_0 exp(sigma X_t + mu t)`.
pub fn geometric_skew_solve(
    mu: f64,
    sigma_c: f64,
    s0: f64,
    xdelta: &SamplePath,
) -> Result<(SamplePath, SamplePath)> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(param("S0", s0, "must be finite and > 0"));
    }
    let g = xdelta.grid();
    let a = (mu + 0.5 * sigma_c * sigma_c) * g.dt();
    let mut s = Vec::with_capacity(xdelta.len());
    s.push(s0);
    for (k, dx) in xdelta.increments().enumerate() {
        let next = s[k] * (1.0 + a + sigma_c * dx);
        if !next.is_finite() {
            return Err(Error::NonFinite { step: k + 1 });
        }
        s.push(next);
    }
    let x0 = xdelta.initial();
    let closed = g
        .times()
        .zip(xdelta.values())
        .map(|(t, x)| s0 * (sigma_c * (x - x0) + mu * t).exp())
        .collect();
    Ok((
        SamplePath::from_parts(*g, s),
        SamplePath::from_parts(*g, closed),
    ))
}

/// `E[S_T] = S_0 exp(mu T + sigma^2 T / 2) 2 Phi(sigma delta sqrt(T))`
/// for `S` driven by `X^delta`.
pub fn geometric_skew_mean(mu: f64, sigma_c: f64, s0: f64, delta: f64, horizon: f64) -> f64 {
    s0 * (mu * horizon + 0.5 * sigma_c * sigma_c * horizon).exp()
        * 2.0
        * crate::numeric::norm_cdf(sigma_c * delta * horizon.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursions::{default_epsilon, detect_zero_set};
    use crate::local_time::reflected_decomposition;
    use crate::paths::{simulate_brownian, simulate_driver_d, streams};
    use crate::relmart::ito_mckean;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    fn bm(seed: u64, n: usize) -> SamplePath {
        simulate_brownian(&grid(n), &RngStream::new(seed, streams::BROWNIAN))
    }

    fn reflected_problem(
        seed: u64,
        n: usize,
        coeffs: CoeffSpec,
        z0: f64,
        zeta: Option<f64>,
    ) -> SdeProblem {
        let d = simulate_brownian(&grid(n), &RngStream::new(seed, streams::DRIVER));
        let w = reflected_decomposition(&d);
        let h = w.h_ref().clone();
        SdeProblem::new(coeffs, w, d, h, z0, zeta).unwrap()
    }

    fn bm_problem(b: SamplePath, coeffs: CoeffSpec, z0: f64) -> SdeProblem {
        let h = detect_zero_set(&b, default_epsilon(b.grid())).unwrap();
        SdeProblem::new(
            coeffs,
            Decomposition::martingale_only(b.clone(), h.clone()),
            b,
            h,
            z0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn spot_check_rejects_bad_constants() {
        assert!(CoeffSpec::new(|_, x, _| x * x, |_, _, _| 0.0, 10.0, 10.0, false).is_err());
        assert!(CoeffSpec::new(|_, x, _| 2.0 * x, |_, _, _| 0.0, 1.0, 2.0, false).is_err());
        assert!(CoeffSpec::new(|_, x, _| x.sin(), |_, _, _| 1.0, 2.0, 1.0, false).is_ok());
        assert!(CoeffSpec::new(|_, _, _| f64::NAN, |_, _, _| 0.0, 1.0, 1.0, false).is_err());
    }

    #[test]
    fn table_interpolates() {
        let c = CoeffSpec::table(
            vec![-1.0, 0.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(c.sigma(0.0, -5.0, 0.0), 1.0);
        assert_eq!(c.sigma(0.0, -0.5, 0.0), 0.5);
        assert_eq!(c.sigma(0.0, 1.0, 0.0), 0.5);
        assert_eq!(c.sigma(0.0, 9.0, 0.0), 1.0);
        assert_eq!(c.lipschitz_constant(), 1.0);
        assert!(CoeffSpec::table(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn euler_deterministic_ode() {
        let p = bm_problem(bm(40, 100), CoeffSpec::constant(0.0, 1.0), 0.5);
        let x = euler_solve(&p).unwrap();
        for (k, t) in p.grid().times().enumerate() {
            assert!((x.value(k) - 0.5 - t).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_identity_integrand() {
        let b = bm(41, 500);
        let p = bm_problem(b.clone(), CoeffSpec::constant(1.0, 0.0), 2.0);
        let x = euler_solve(&p).unwrap();
        for k in 0..b.len() {
            assert!((x.value(k) - 2.0 - b.value(k)).abs() < 1e-12);
        }
        let p = reflected_problem(41, 500, CoeffSpec::constant(1.0, 0.0), 0.0, None);
        let x = euler_solve(&p).unwrap();
        for k in 0..b.len() {
            assert!((x.value(k) - p.d_path.value(k).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_reports_overflow_step() {
        let c =
            CoeffSpec::new(|_, x, _| 0.0 * x, |_, x, _| 1e300 * x, 1e300, 1e300, false).unwrap();
        let p = bm_problem(bm(42, 10), c, 1.0);
        assert!(matches!(euler_solve(&p), Err(Error::NonFinite { step: 2 })));
    }

    /// Independent pinned-form solver: recomputes each node's integral from 0.
    fn direct_pinned(p: &SdeProblem) -> Vec<f64> {
        let n = p.grid().n_steps();
        let w = p.driver.total().values();
        let mut x = vec![0.0; n + 1];
        for k in 0..=n {
            let zeta = p.zeta.unwrap();
            if p.h_mask.flags()[k] {
                x[k] = zeta;
                continue;
            }
            let mut s = p.z0;
            for j in 0..k {
                let t = j as f64 * p.grid().dt();
                s += p.coeffs.sigma(t, x[j], 0.0) * (w[j + 1] - w[j])
                    + p.coeffs.drift(t, x[j], 0.0) * p.grid().dt();
            }
            x[k] = s;
        }
        x
    }

    #[test]
    fn pinned_euler_matches_direct_solver() {
        let p = reflected_problem(43, 400, CoeffSpec::linear(0.5, 0.3), 1.0, Some(0.2));
        let x = euler_solve(&p).unwrap();
        let y = direct_pinned(&p);
        assert!(p.h_mask.count() > 0);
        for k in 0..y.len() {
            assert!((x.value(k) - y[k]).abs() < 1e-12, "node {k}");
        }
    }

    #[test]
    fn picard_trivial_and_limit() {
        let p = reflected_problem(44, 200, CoeffSpec::constant(0.0, 0.0), 1.5, Some(0.0));
        let out = picard_solve(std::slice::from_ref(&p), 10, 1e-12).unwrap();
        // One step reaches Z 1_{H^c}; the next confirms it.
        assert!(out.converged && out.distances.len() <= 2);
        for k in 0..p.grid().len() {
            let want = if p.h_mask.contains(k) { 0.0 } else { 1.5 };
            assert_eq!(out.solutions[0].value(k), want);
        }

        let batch: Vec<_> = (0..20)
            .map(|i| reflected_problem(45 + i, 500, CoeffSpec::linear(0.5, 0.3), 1.0, Some(0.0)))
            .collect();
        let out = picard_solve(&batch, 40, 1e-12).unwrap();
        assert!(out.converged);
        for (p, y) in batch.iter().zip(&out.solutions) {
            let x = euler_solve(p).unwrap();
            assert!(max_gap(x.values(), y.values()) < 1e-10);
        }
        // Factorial shape on squared distances.
        let b = picard_constant(0.8, 1.0);
        for p in 1..out.distances.len() - 1 {
            let r = (out.distances[p + 1] / out.distances[p]).powi(2);
            assert!(r <= b / (p as f64 + 1.0), "p={p}: {r}");
        }
    }

    #[test]
    fn picard_unpinned_matches_classical_euler() {
        let batch: Vec<_> = (0..10)
            .map(|i| bm_problem(bm(60 + i, 300), CoeffSpec::linear(1.0, 0.0), 1.0))
            .collect();
        let out = picard_solve(&batch, 60, 1e-13).unwrap();
        assert!(out.converged);
        for (p, y) in batch.iter().zip(&out.solutions) {
            assert!(max_gap(euler_solve(p).unwrap().values(), y.values()) < 1e-9);
        }
    }

    #[test]
    fn coincidence_zero_drift_is_exact() {
        let b = bm(70, 1000);
        let d =
            simulate_driver_d(&grid(1000), &RngStream::new(70, streams::DRIVER)).map(|x| x + 0.5);
        let h = detect_zero_set(&d, default_epsilon(d.grid())).unwrap();
        let p = SdeProblem::new(
            CoeffSpec::linear(0.5, 0.3).with_sigma_cutoff(0.1).unwrap(),
            Decomposition::martingale_only(b, h.clone()),
            d,
            h,
            1.0,
            None,
        )
        .unwrap();
        for v in Variant::ALL {
            if let Some(gap) = coincidence_discrepancy(&p, v).unwrap() {
                assert_eq!(gap, 0.0);
            }
        }
    }

    #[test]
    fn coincidence_before_first_zero_is_exact() {
        let g = grid(2000);
        let b = simulate_brownian(&g, &RngStream::new(71, streams::BROWNIAN));
        let d = simulate_driver_d(&g, &RngStream::new(71, streams::DRIVER)).map(|x| x + 0.5);
        let w = ito_mckean(&b, &d, 0.6).unwrap();
        let h = w.h_ref().clone();
        let p = SdeProblem::new(CoeffSpec::linear(0.5, 0.3), w, d, h, 1.0, None).unwrap();
        match coincidence_discrepancy(&p, Variant::P14).unwrap() {
            Some(gap) => assert_eq!(gap, 0.0),
            None => assert_eq!(p.h_mask.count(), 0),
        }
        assert!(coincidence_window(&p, Variant::P13).is_err());
    }

    #[test]
    fn eq11_telescopes_and_detects_shift() {
        let p = reflected_problem(72, 2000, CoeffSpec::linear(0.5, 0.3), 1.0, None);
        let x = euler_solve(&p).unwrap();
        assert!(eq11_residual(&p, &x).unwrap().pass);
        let gamma = p.h_mask.last_zero_map();
        // Any gamma map telescopes; an off-by-one in the sum's start does not.
        let shifted: Vec<_> = gamma
            .iter()
            .map(|g| g.map(|g| g.saturating_sub(1)))
            .collect();
        assert!(eq11_residual_with(&p, &x, &shifted, 0).unwrap() <= EQ11_TOL);
        assert!(eq11_residual_with(&p, &x, &gamma, 1).unwrap() > EQ11_TOL);
        // At H nodes gamma_t = t and the residual is trivially 0.
        let k = p.h_mask.first().unwrap();
        assert_eq!(gamma[k], Some(k));
        let pinned = SdeProblem {
            zeta: Some(0.0),
            ..p
        };
        assert!(eq11_residual(&pinned, &x).is_err());
    }

    #[test]
    fn geometric_trivial_and_qv() {
        let g = grid(100_000);
        let b = simulate_brownian(&g, &RngStream::new(73, streams::BROWNIAN));
        let d = simulate_brownian(&g, &RngStream::new(73, streams::DRIVER));
        let x = ito_mckean(&b, &d, 0.6).unwrap().total().clone();
        let (e, c) = geometric_skew_solve(0.05, 0.0, 2.0, &x).unwrap();
        for (k, t) in g.times().enumerate() {
            let want = 2.0 * (0.05 * t).exp();
            assert!((c.value(k) - want).abs() < 1e-12);
            assert!((e.value(k) - want).abs() < 1e-5);
        }
        let (_, c) = geometric_skew_solve(0.0, 0.2, 1.0, &x).unwrap();
        let qv = crate::paths::quadratic_variation(&c.map(f64::ln)).terminal();
        assert!((qv / 0.04 - 1.0).abs() < 0.02, "{qv}");
        assert!(geometric_skew_solve(0.0, 0.2, 0.0, &x).is_err());
    }

    #[test]
    fn geometric_mean_formula() {
        // delta = 0: lognormal mean S0 exp(mu T + sigma^2 T / 2).
        assert!(
            (geometric_skew_mean(0.1, 0.3, 2.0, 0.0, 1.5) - 2.0 * (0.15f64 + 0.0675).exp()).abs()
                < 1e-12
        );
        // E[exp(s d |G|)] = 2 Phi(s d) exp(s^2 d^2 / 2) by direct quadrature.
        let (s, d) = (0.4, 0.6);
        let c = (1.0f64 - d * d).sqrt();
        let lhs = crate::numeric::integrate(
            |u| (s * d * u.abs()).exp() * crate::numeric::norm_pdf(u),
            -12.0,
            12.0,
            1e-12,
        ) * (0.5 * s * s * c * c).exp();
        assert!((geometric_skew_mean(0.0, s, 1.0, d, 1.0) - lhs).abs() < 1e-9);
    }

    #[test]
    fn growth_envelope_holds() {
        let p = reflected_problem(74, 1000, CoeffSpec::linear(0.5, 0.3), 1.0, None);
        let x = euler_solve(&p).unwrap();
        assert!(x.max_abs() <= p.growth_envelope());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn reruns_are_bit_identical(seed in 0u64..1000, z in -2.0f64..2.0) {
            let a = euler_solve(&reflected_problem(seed, 200, CoeffSpec::linear(0.5, 0.3), z, Some(0.1))).unwrap();
            let b = euler_solve(&reflected_problem(seed, 200, CoeffSpec::linear(0.5, 0.3), z, Some(0.1))).unwrap();
            prop_assert_eq!(a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn pinned_solution_is_zeta_on_h(seed in 0u64..1000, zeta in -1.0f64..1.0) {
            let p = reflected_problem(seed, 200, CoeffSpec::linear(0.5, 0.3), 1.0, Some(zeta));
            let x = euler_solve(&p).unwrap();
            for k in 0..x.len() {
                if p.h_mask.contains(k) {
                    prop_assert_eq!(x.value(k), zeta);
                }
            }
        }
    }
}
