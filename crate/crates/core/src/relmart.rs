//! Decompositions `M = M_0 + m + v` with `dv` carried by a reference set H,
//! the example constructions, balayage identities and last-zero transforms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::excursions::{
    carry_through_zeros, default_epsilon, detect_zero_set, AlphaSchedule, HMask,
};
use crate::harness::{CheckpointMeans, TestReport};
use crate::local_time::{
    default_occupation_epsilon, local_time_occupation_qv, local_time_tanaka,
    reflected_decomposition, sgn,
};
use crate::paths::{covariation, stochastic_integral, SamplePath, TimeGrid};

/// Residual scale for the balayage identities: `C_RES * dt^(1/4)`.
pub const C_RES: f64 = 2.0;

pub fn noise_floor(grid: &TimeGrid) -> f64 {
    C_RES * grid.dt().powf(0.25)
}

/// A path together with its martingale part `m` and drift `v`
/// (`m(0) = v(0) = 0`), and the mask H that should carry `dv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    total: SamplePath,
    martingale: SamplePath,
    drift: SamplePath,
    h_ref: HMask,
}

impl Decomposition {
    /// `total = initial + m + v`.
    pub fn from_parts(initial: f64, m: SamplePath, v: SamplePath, h_ref: HMask) -> Self {
        assert_eq!(m.grid(), v.grid());
        assert_eq!(m.grid(), h_ref.grid());
        let total = m.zip_with(&v, |a, b| initial + a + b);
        Self {
            total,
            martingale: m,
            drift: v,
            h_ref,
        }
    }

    /// Uses `total` as given; it must agree with `total(0) + m + v` to rounding.
    pub fn with_total(
        total: SamplePath,
        m: SamplePath,
        v: SamplePath,
        h_ref: HMask,
    ) -> Result<Self> {
        if m.grid() != total.grid() || v.grid() != total.grid() || h_ref.grid() != total.grid() {
            return Err(Error::InvalidInput(
                "decomposition parts live on different grids".into(),
            ));
        }
        if m.initial() != 0.0 || v.initial() != 0.0 {
            return Err(Error::InvalidInput("m and v must start at 0".into()));
        }
        let x0 = total.initial();
        let scale = 1.0 + total.max_abs() + m.max_abs() + v.max_abs();
        for k in 0..total.len() {
            if (total.value(k) - x0 - m.value(k) - v.value(k)).abs() > 1e-9 * scale {
                return Err(Error::InvalidInput(format!(
                    "total != M_0 + m + v at node {k}"
                )));
            }
        }
        Ok(Self {
            total,
            martingale: m,
            drift: v,
            h_ref,
        })
    }

    /// A martingale path with no drift.
    pub fn martingale_only(path: SamplePath, h_ref: HMask) -> Self {
        let x0 = path.initial();
        let m = path.map(|x| x - x0);
        let v = SamplePath::zeros(*path.grid());
        Self::from_parts(x0, m, v, h_ref)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.total.grid()
    }

    pub fn total(&self) -> &SamplePath {
        &self.total
    }

    pub fn martingale(&self) -> &SamplePath {
        &self.martingale
    }

    pub fn drift(&self) -> &SamplePath {
        &self.drift
    }

    pub fn h_ref(&self) -> &HMask {
        &self.h_ref
    }

    pub fn initial(&self) -> f64 {
        self.total.initial()
    }

    pub fn with_h_ref(mut self, h_ref: HMask) -> Self {
        assert_eq!(h_ref.grid(), self.grid());
        self.h_ref = h_ref;
        self
    }

    /// `a * A + b * B`; the reference mask is the union.
    pub fn linear_combination(
        a: f64,
        x: &Decomposition,
        b: f64,
        y: &Decomposition,
    ) -> Decomposition {
        let m = x.martingale.zip_with(&y.martingale, |p, q| a * p + b * q);
        let v = x.drift.zip_with(&y.drift, |p, q| a * p + b * q);
        Self::from_parts(
            a * x.initial() + b * y.initial(),
            m,
            v,
            x.h_ref.union(&y.h_ref),
        )
    }

    /// Left-point integral `sum h dM`, split as `(sum h dm, sum h dv)`.
    pub fn integral(&self, h: &[f64]) -> Decomposition {
        let m = stochastic_integral(h, &self.martingale);
        let v = stochastic_integral(h, &self.drift);
        Self::from_parts(0.0, m, v, self.h_ref.clone())
    }
}

/// Running covariation `[a, b]` on the grid.
pub type BracketEstimate = SamplePath;

pub fn bracket(a: &SamplePath, b: &SamplePath) -> BracketEstimate {
    covariation(a, b)
}

/// Share of the drift's variation charged outside `mask`:
/// `sum_{k not in H} |dv_k| / max(TV(v), dt)`.
pub fn carried_by_ratio(v: &SamplePath, mask: &HMask) -> f64 {
    let mut outside = 0.0;
    let mut tv = 0.0;
    for (k, d) in v.increments().enumerate() {
        tv += d.abs();
        if !mask.contains(k) {
            outside += d.abs();
        }
    }
    outside / tv.max(v.grid().dt())
}

pub fn carried_by_check(dec: &Decomposition, tol: f64) -> TestReport {
    let r = carried_by_ratio(dec.drift(), dec.h_ref());
    TestReport::at_most("carried_by", r, tol).with_samples(1)
}

/// `X^delta = sqrt(1 - delta^2) B + delta |D|`, with `v = delta L(D)`.
pub fn ito_mckean(b: &SamplePath, d: &SamplePath, delta: f64) -> Result<Decomposition> {
    if !(delta.abs() < 1.0) {
        return Err(param("delta", delta, "must satisfy |delta| < 1"));
    }
    if b.grid() != d.grid() {
        return Err(Error::InvalidInput(
            "B and D live on different grids".into(),
        ));
    }
    let c = (1.0 - delta * delta).sqrt();
    let refl = reflected_decomposition(d);
    let bm = Decomposition::martingale_only(b.clone(), refl.h_ref().clone());
    let x = Decomposition::linear_combination(c, &bm, delta, &refl);
    Ok(x.with_h_ref(refl.h_ref().clone()))
}

/// Coefficients `(a, b)` of `X^j = M + a W + b |W|` for `j = 1..6`.
pub fn minmax_coefficients(which: u8) -> Result<(f64, f64)> {
    Ok(match which {
        1 => (-0.5, -0.5),
        2 => (0.5, -0.5),
        3 => (0.0, -1.0),
        4 => (-0.5, 0.5),
        5 => (0.5, 0.5),
        6 => (0.0, 1.0),
        _ => return Err(param("which", f64::from(which), "must be in 1..=6")),
    })
}

/// Literal value of `X^j` at one node.
pub fn minmax_value(which: u8, m: f64, w: f64) -> f64 {
    match which {
        1 => m.min(m - w),
        2 => m.min(m + w),
        3 => (m - w).min(m + w),
        4 => m.max(m - w),
        5 => m.max(m + w),
        _ => (m - w).max(m + w),
    }
}

/// One member of the min/max family, with the decomposition assembled from
/// the closed form `M + a W + b |W|` and Tanaka's formula for `|W|`. The
/// report checks that the zeros of `W` lie in the reference mask.
pub fn minmax_family(
    m: &Decomposition,
    w: &Decomposition,
    which: u8,
) -> Result<(Decomposition, TestReport)> {
    let (a, b) = minmax_coefficients(which)?;
    if m.grid() != w.grid() {
        return Err(Error::InvalidInput(
            "M and W live on different grids".into(),
        ));
    }
    let wt = w.total();
    let signs: Vec<f64> = wt.values().iter().map(|&x| sgn(x)).collect();
    let abs_m = stochastic_integral(&signs, w.martingale());
    let abs_v = stochastic_integral(&signs, w.drift())
        .zip_with(&local_time_tanaka(wt).into_path(), |p, q| p + q);
    let new_m = m
        .martingale()
        .zip_with(w.martingale(), |p, q| p + a * q)
        .zip_with(&abs_m, |p, q| p + b * q);
    let new_v = m
        .drift()
        .zip_with(w.drift(), |p, q| p + a * q)
        .zip_with(&abs_v, |p, q| p + b * q);
    let total = m.total().zip_with(wt, |p, q| minmax_value(which, p, q));
    let h = m.h_ref().union(w.h_ref());

    let zeros = detect_zero_set(wt, 0.0)?;
    let outside = (0..zeros.flags().len())
        .filter(|&k| zeros.contains(k) && !h.contains(k))
        .count();
    let frac = outside as f64 / zeros.count().max(1) as f64;
    let report = TestReport::at_most(format!("zero_set_containment_X{which}"), frac, 0.05)
        .with_samples(zeros.count());
    Ok((Decomposition::with_total(total, new_m, new_v, h)?, report))
}

/// `k` frozen at the last zero of `mask`; `k(0)` before the first zero.
pub fn freeze_at_last_zero(k: &[f64], mask: &HMask) -> Vec<f64> {
    mask.last_zero_map()
        .iter()
        .map(|g| k[g.unwrap_or(0)])
        .collect()
}

fn balayage_mask(m: &SamplePath) -> HMask {
    let nonneg = m.values().iter().all(|&x| x >= 0.0);
    let eps = if nonneg {
        default_epsilon(m.grid())
    } else {
        0.0
    };
    detect_zero_set(m, eps).expect("nonnegative epsilon")
}

/// `k_{g_t} X_t - k_{g_0} X_0 - sum_{s<t} k_{g_s} dX_s` with `g` the last zero
/// of `X` itself (band `2 sqrt(dt)` for nonnegative `X`, crossings otherwise).
pub fn balayage_predictable_path(k: &SamplePath, x: &SamplePath) -> SamplePath {
    let kg = freeze_at_last_zero(k.values(), &balayage_mask(x));
    let integral = stochastic_integral(&kg, x);
    let xv = x.values();
    let vals = (0..x.len())
        .map(|j| kg[j] * xv[j] - kg[0] * xv[0] - integral.value(j))
        .collect();
    SamplePath::from_parts(*x.grid(), vals)
}

pub fn balayage_predictable(k: &SamplePath, m: &Decomposition) -> TestReport {
    let r = balayage_predictable_path(k, m.total()).max_abs();
    TestReport::at_most("balayage_predictable", r, noise_floor(m.grid())).with_samples(1)
}

/// `k_{g.} M` as a decomposition: martingale part `sum k_g dm`, drift the rest.
/// Its mask is `H` joined with the zero set of `M`; `k_g` jumps on steps that
/// end on a zero, so those steps count as charged by the zero set.
pub fn balayage_decomposition(k: &SamplePath, m: &Decomposition) -> Decomposition {
    let mask = balayage_mask(m.total());
    let kg = freeze_at_last_zero(k.values(), &mask);
    let total = SamplePath::from_parts(
        *m.grid(),
        kg.iter()
            .zip(m.total().values())
            .map(|(a, b)| a * b)
            .collect(),
    );
    let new_m = stochastic_integral(&kg, m.martingale());
    let x0 = total.initial();
    let new_v = total.zip_with(&new_m, |t, q| t - x0 - q);
    Decomposition::from_parts(
        x0,
        new_m,
        new_v,
        m.h_ref().union(&mask.with_left_neighbors()),
    )
}

/// `R(t) = Z(t)|Y(t)| - sum Zp sign(Y) dY - sum (2 alpha(s) - 1) dL(Z|Y|)`,
/// where `Zp` carries the last mark through H, `sum sign(Y) dY` is the
/// martingale part of `|Y|`, and `L` is the occupation estimator at `sqrt(dt)`
/// in quadratic-variation time.
pub fn progressive_residual_path(
    z: &SamplePath,
    y: &SamplePath,
    sched: &AlphaSchedule,
) -> Result<SamplePath> {
    if z.grid() != y.grid() {
        return Err(Error::InvalidInput(
            "Z and Y live on different grids".into(),
        ));
    }
    let grid = *y.grid();
    let x = z.zip_with(y, |a, b| a * b.abs());
    let zp = carry_through_zeros(z.values(), 0.0);
    let ys = y.values();
    let occ = local_time_occupation_qv(&x, default_occupation_epsilon(&grid))?;
    let cells = sched.cells_on(&grid);
    let mut acc_int = 0.0;
    let mut acc_l = 0.0;
    let mut vals = Vec::with_capacity(grid.len());
    vals.push(x.initial());
    for k in 0..grid.n_steps() {
        acc_int += zp[k] * sgn(ys[k]) * (ys[k + 1] - ys[k]);
        let c = 2.0 * sched.values()[cells[k]] - 1.0;
        acc_l += c * (occ.values()[k + 1] - occ.values()[k]);
        vals.push(x.value(k + 1) - acc_int - acc_l);
    }
    Ok(SamplePath::from_parts(grid, vals))
}

/// Cumulative jumps `sum (Z(t) - Z(t-)) |Y(t)|` of `Z|Y|` at nodes where
/// `Z` changes sign inside an excursion. These are exactly the mark redraws
/// of the piecewise sign process at partition boundaries.
pub fn interior_jump_path(z: &SamplePath, y: &SamplePath) -> Result<SamplePath> {
    if z.grid() != y.grid() {
        return Err(Error::InvalidInput(
            "Z and Y live on different grids".into(),
        ));
    }
    let (zs, ys) = (z.values(), y.values());
    let mut acc = 0.0;
    let mut vals = Vec::with_capacity(zs.len());
    vals.push(0.0);
    for k in 1..zs.len() {
        if zs[k] != 0.0 && zs[k - 1] != 0.0 && zs[k] != zs[k - 1] {
            acc += (zs[k] - zs[k - 1]) * ys[k].abs();
        }
        vals.push(acc);
    }
    Ok(SamplePath::from_parts(*y.grid(), vals))
}

pub fn balayage_progressive_residual(
    z: &SamplePath,
    y: &SamplePath,
    sched: &AlphaSchedule,
) -> Result<TestReport> {
    let r = progressive_residual_path(z, y, sched)?.max_abs();
    Ok(TestReport::at_most("balayage_progressive", r, noise_floor(y.grid())).with_samples(1))
}

/// `M W - [M, W]`, decomposed through `sum M dW + sum W dM`.
pub fn product_bracket_decomposition(m: &Decomposition, w: &Decomposition) -> Decomposition {
    let mv: Vec<f64> = m.total().values().to_vec();
    let wv: Vec<f64> = w.total().values().to_vec();
    let mart = stochastic_integral(&mv, w.martingale())
        .zip_with(&stochastic_integral(&wv, m.martingale()), |a, b| a + b);
    let drift = stochastic_integral(&mv, w.drift())
        .zip_with(&stochastic_integral(&wv, m.drift()), |a, b| a + b);
    Decomposition::from_parts(
        m.initial() * w.initial(),
        mart,
        drift,
        m.h_ref().union(w.h_ref()),
    )
}

/// `M W - [M, W]` computed directly.
pub fn product_minus_bracket(m: &SamplePath, w: &SamplePath) -> SamplePath {
    let br = covariation(m, w);
    m.zip_with(w, |a, b| a * b).zip_with(&br, |p, q| p - q)
}

/// Checkpoint mean-stationarity over `n_paths` independent paths: the mean
/// of `P(t_j) - P(0)` must be within 3 standard errors of 0 at
/// `t_j = T/4, T/2, 3T/4, T`. Paths are generated in parallel and reduced in
/// index order, so the result does not depend on the thread count.
pub fn mean_stationarity<F>(name: &str, grid: &TimeGrid, n_paths: usize, path_fn: F) -> TestReport
where
    F: Fn(usize) -> SamplePath + Sync,
{
    let mut acc = CheckpointMeans::quarters(grid.horizon());
    let idx: Vec<usize> = acc
        .times
        .iter()
        .map(|&t| grid.index_at_or_before(t))
        .collect();
    let rows: Vec<(f64, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let p = path_fn(i);
            (p.initial(), idx.iter().map(|&k| p.value(k)).collect())
        })
        .collect();
    for (p0, at) in &rows {
        acc.push(*p0, at);
    }
    acc.report(name, 3.0)
}

/// The pair `(M - M_gamma, M_gamma)` with `gamma_t` the last node of `H_ref`
/// at or before `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastZeroTransform {
    pub excursion_part: SamplePath,
    pub frozen_part: SamplePath,
    /// Nodes with no H node at or before them; there `gamma_t := 0`.
    pub undefined_nodes: usize,
}

pub fn last_zero_transform(m: &Decomposition) -> LastZeroTransform {
    let map = m.h_ref().last_zero_map();
    let x = m.total().values();
    let undefined_nodes = map.iter().filter(|g| g.is_none()).count();
    let frozen: Vec<f64> = map.iter().map(|g| x[g.unwrap_or(0)]).collect();
    let exc: Vec<f64> = x.iter().zip(&frozen).map(|(a, b)| a - b).collect();
    LastZeroTransform {
        excursion_part: SamplePath::from_parts(*m.grid(), exc),
        frozen_part: SamplePath::from_parts(*m.grid(), frozen),
        undefined_nodes,
    }
}

/// Mask of `path`'s zeros in which every step that can charge local time
/// (a sign change, or a step leaving an exact zero) marks both of its
/// nodes. With this mask a drift whose increments sit on such steps is
/// constant after the last marked node.
pub fn closed_crossing_mask(path: &SamplePath) -> HMask {
    let base = detect_zero_set(path, 0.0).expect("zero band");
    let x = path.values();
    let flags = (0..x.len())
        .map(|k| base.contains(k) || (k > 0 && (x[k - 1] * x[k] < 0.0 || x[k - 1] == 0.0)))
        .collect();
    HMask::from_flags(*path.grid(), flags, 0.0).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursions::{extract_excursions, sign_process_const};
    use crate::paths::{simulate_brownian, streams, RngStream};
    use proptest::prelude::*;

    fn bm(seed: u64, tag: &str, n: usize) -> SamplePath {
        simulate_brownian(&TimeGrid::new(1.0, n).unwrap(), &RngStream::new(seed, tag))
    }

    #[test]
    fn carried_by_cases() {
        let d = bm(1, streams::DRIVER, 100_000);
        let refl = reflected_decomposition(&d);
        assert!(carried_by_check(&refl, 0.05).pass);
        assert!(carried_by_check(&refl, 0.05).statistic < 1e-9);

        let g = *d.grid();
        let zero = Decomposition::martingale_only(d.clone(), refl.h_ref().clone());
        let r = carried_by_check(&zero, 0.05);
        assert_eq!(r.statistic, 0.0);
        assert!(r.pass);

        let lebesgue = Decomposition::from_parts(
            0.0,
            SamplePath::zeros(g),
            SamplePath::from_fn(g, |t| t).unwrap(),
            refl.h_ref().clone(),
        );
        let r = carried_by_check(&lebesgue, 0.05);
        assert!(r.statistic > 0.9 && !r.pass);
    }

    #[test]
    fn ito_mckean_cases() {
        let b = bm(2, streams::BROWNIAN, 1000);
        let d = bm(2, streams::DRIVER, 1000);
        let x0 = ito_mckean(&b, &d, 0.0).unwrap();
        assert_eq!(x0.total(), &b);
        assert!(x0.drift().values().iter().all(|v| *v == 0.0));
        assert!(ito_mckean(&b, &d, 1.0).is_err());
        assert!(ito_mckean(&b, &d, -1.0).is_err());
        let x = ito_mckean(&b, &d, 0.6).unwrap();
        for k in 0..b.len() {
            let want = 0.8 * b.value(k) + 0.6 * d.value(k).abs();
            assert!((x.total().value(k) - want).abs() < 1e-12);
        }
        assert!(carried_by_check(&x, 0.05).pass);
    }

    #[test]
    fn minmax_cases() {
        let b = bm(3, streams::BROWNIAN, 5000);
        let d = bm(3, streams::DRIVER, 5000);
        let m = ito_mckean(&b, &d, 0.6).unwrap();
        let zero_w =
            Decomposition::martingale_only(SamplePath::zeros(*b.grid()), m.h_ref().clone());
        for j in 1..=6 {
            let (x, _) = minmax_family(&m, &zero_w, j).unwrap();
            for k in 0..b.len() {
                assert!((x.total().value(k) - m.total().value(k)).abs() < 1e-12);
            }
        }
        let w = reflected_decomposition(&d);
        let (x6, rep) = minmax_family(&m, &w, 6).unwrap();
        assert!(rep.pass);
        for k in 0..b.len() {
            assert_eq!(
                x6.total().value(k),
                m.total().value(k) + w.total().value(k).abs()
            );
        }
        let dm = Decomposition::martingale_only(d.clone(), w.h_ref().clone());
        let (x3, _) = minmax_family(&dm, &dm, 3).unwrap();
        assert!(carried_by_check(&x3, 0.05).pass);
        assert!(minmax_family(&m, &w, 7).is_err());
    }

    #[test]
    fn balayage_predictable_trivial_k() {
        let d = bm(4, streams::DRIVER, 10_000);
        let m = reflected_decomposition(&d);
        let g = *d.grid();
        let one = balayage_predictable_path(&SamplePath::constant(g, 1.0), m.total());
        assert!(one.max_abs() < 1e-12);
        let zero = balayage_predictable_path(&SamplePath::zeros(g), m.total());
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn balayage_predictable_refines() {
        // k = f(v_gamma) with f = tanh and M = |D|; residual <= eps * TV(k_g).
        let fine = TimeGrid::new(1.0, 1 << 16).unwrap();
        let root = RngStream::new(5, streams::DRIVER);
        let mut res = [0.0; 4];
        for i in 0..40 {
            let d = simulate_brownian(&fine, &root.child(i));
            for (lvl, f) in [8usize, 4, 2, 1].iter().enumerate() {
                let dd = d.coarsen(*f).unwrap();
                let m = reflected_decomposition(&dd);
                let k = m.drift().map(f64::tanh);
                res[lvl] += balayage_predictable_path(&k, m.total()).max_abs();
            }
        }
        assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
        assert!(res[3] < res[0] / 2.0, "{res:?}");
    }

    #[test]
    fn progressive_zero_source() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let y = SamplePath::zeros(g);
        let z = SamplePath::zeros(g);
        let s = AlphaSchedule::constant(0.75).unwrap();
        assert_eq!(
            progressive_residual_path(&z, &y, &s).unwrap().max_abs(),
            0.0
        );
    }

    #[test]
    fn progressive_residual_shrinks() {
        let fine = TimeGrid::new(1.0, 16_000).unwrap();
        let root = RngStream::new(6, streams::BROWNIAN);
        let marks = RngStream::new(6, streams::EXCURSION_MARKS);
        let sched = AlphaSchedule::constant(0.75).unwrap();
        let mut res = [0.0; 3];
        for i in 0..60 {
            let b = simulate_brownian(&fine, &root.child(i));
            for (lvl, f) in [16usize, 4, 1].iter().enumerate() {
                let y = b.coarsen(*f).unwrap();
                let e = extract_excursions(&y, &detect_zero_set(&y, 0.0).unwrap()).unwrap();
                let z = sign_process_const(&e, 0.75, &marks.child(i)).unwrap();
                res[lvl] += progressive_residual_path(&z, &y, &sched).unwrap().max_abs() / 60.0;
            }
        }
        assert!(res[2] < res[1] && res[1] < res[0], "{res:?}");
    }

    #[test]
    fn closed_mask_covers_every_charging_step() {
        let g = TimeGrid::new(1.0, 6).unwrap();
        let d = SamplePath::new(g, vec![0.0, 1.0, 2.0, -1.0, -2.0, -1.0, 0.5]).unwrap();
        let h = closed_crossing_mask(&d);
        let flags: Vec<bool> = (0..7).map(|k| h.contains(k)).collect();
        assert_eq!(flags, [true, true, true, true, false, true, true]);
        // Local time is constant after every marked node.
        let l = local_time_tanaka(&d);
        let map = h.last_zero_map();
        for k in 0..7 {
            let gk = map[k].unwrap();
            assert_eq!(l.values()[k], l.values()[gk], "node {k}");
        }
    }

    #[test]
    fn interior_jumps_explain_boundary_redraws() {
        // One excursion over nodes 1..=3, mark +1 then -1 from node 2.
        let g = TimeGrid::new(1.0, 4).unwrap();
        let y = SamplePath::new(g, vec![0.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        let z = SamplePath::new(g, vec![0.0, 1.0, -1.0, -1.0, 0.0]).unwrap();
        let j = interior_jump_path(&z, &y).unwrap();
        assert_eq!(j.values(), &[0.0, 0.0, -4.0, -4.0, -4.0]);
        let same = SamplePath::new(g, vec![0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(interior_jump_path(&same, &y).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn product_bracket_identity_exact() {
        let b = bm(7, streams::BROWNIAN, 2000);
        let d = bm(7, streams::DRIVER, 2000);
        let m = ito_mckean(&b, &d, 0.5).unwrap();
        let w = reflected_decomposition(&d);
        let dec = product_bracket_decomposition(&m, &w);
        let direct = product_minus_bracket(m.total(), w.total());
        for k in 0..direct.len() {
            assert!((dec.total().value(k) - direct.value(k)).abs() < 1e-9);
        }
        assert!(carried_by_check(&dec, 0.05).pass);
        let zero = product_minus_bracket(&SamplePath::zeros(*d.grid()), &d);
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn mean_stationarity_controls() {
        let g = TimeGrid::new(1.0, 200).unwrap();
        let root = RngStream::new(8, streams::DRIVER);
        let pos = mean_stationarity("d2", &g, 20_000, |i| {
            let d = simulate_brownian(&g, &root.child(i as u64));
            product_minus_bracket(&d, &d)
        });
        assert!(pos.pass, "{}", pos.summary_line());
        let neg = mean_stationarity("drift", &g, 20_000, |i| {
            let d = simulate_brownian(&g, &root.child(i as u64));
            let t = SamplePath::from_fn(g, |t| 0.1 * t).unwrap();
            d.zip_with(&t, |a, b| a + b)
        });
        assert!(!neg.pass);
    }

    #[test]
    fn last_zero_transform_cases() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let h = HMask::from_flags(g, vec![true, false, true, false, false], 0.0).unwrap();
        let c = Decomposition::martingale_only(SamplePath::constant(g, 2.5), h.clone());
        let t = last_zero_transform(&c);
        assert!(t.excursion_part.values().iter().all(|v| *v == 0.0));
        assert!(t.frozen_part.values().iter().all(|v| *v == 2.5));

        let p = SamplePath::new(g, vec![0.0, 1.0, 0.5, 2.0, 3.0]).unwrap();
        let t = last_zero_transform(&Decomposition::martingale_only(p, h));
        assert_eq!(t.excursion_part.values(), &[0.0, 1.0, 0.0, 1.5, 2.5]);
        assert_eq!(t.undefined_nodes, 0);
    }

    #[test]
    fn lemma2_integral_vanishing_on_h_has_no_drift() {
        let d = bm(9, streams::DRIVER, 10_000);
        let refl = reflected_decomposition(&d);
        let h: Vec<f64> = (0..d.len())
            .map(|k| {
                if refl.h_ref().contains(k) {
                    0.0
                } else {
                    (k as f64).cos()
                }
            })
            .collect();
        let int = refl.integral(&h);
        assert!(int.drift().values().iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn closures(seed in 0u64..1000, a in -3.0f64..3.0, c in -3.0f64..3.0) {
            let b = bm(seed, streams::BROWNIAN, 500);
            let d = bm(seed, streams::DRIVER, 500);
            let x = ito_mckean(&b, &d, 0.6).unwrap();
            let y = reflected_decomposition(&d);
            let comb = Decomposition::linear_combination(a, &x, c, &y);
            prop_assert!(carried_by_check(&comb, 0.05).pass);
            let h: Vec<f64> = (0..d.len()).map(|k| (k as f64 * 0.1).sin()).collect();
            prop_assert!(carried_by_check(&x.integral(&h), 0.05).pass);
            let bal = balayage_decomposition(&y.drift().map(f64::tanh), &y);
            prop_assert!(carried_by_check(&bal, 0.05).pass);
            for j in 1..=6u8 {
                let (xj, _) = minmax_family(&x, &y, j).unwrap();
                for k in 0..d.len() {
                    prop_assert_eq!(xj.total().value(k), minmax_value(j, x.total().value(k), y.total().value(k)));
                }
                prop_assert!(carried_by_check(&xj, 0.05).pass);
            }
        }
    }
}
