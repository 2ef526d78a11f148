//! Local time at 0: discrete Tanaka and occupation-density estimators, and
//! the reflected decomposition `|D| = |D_0| + int sign(D) dD + L`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::excursions::{default_epsilon, detect_zero_set};
use crate::paths::{SamplePath, TimeGrid};
use crate::relmart::Decomposition;

/// A nondecreasing path starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimePath(SamplePath);

impl LocalTimePath {
    pub fn path(&self) -> &SamplePath {
        &self.0
    }

    pub fn into_path(self) -> SamplePath {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn terminal(&self) -> f64 {
        self.0.terminal()
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-step Tanaka increments `|x_{k+1}| - |x_k| - sign(x_k) (x_{k+1} - x_k)`.
/// Each is `>= 0` by convexity of `|.|`, up to rounding.
pub fn tanaka_increments(path: &SamplePath) -> Vec<f64> {
    path.values()
        .windows(2)
        .map(|w| w[1].abs() - w[0].abs() - sgn(w[0]) * (w[1] - w[0]))
        .collect()
}

/// `L(t) = |x_t| - |x_0| - sum_{s<t} sign(x_s) dx_s`, made nondecreasing by a
/// running maximum.
pub fn local_time_tanaka(path: &SamplePath) -> LocalTimePath {
    let mut values = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    let mut running_max: f64 = 0.0;
    values.push(0.0);
    for inc in tanaka_increments(path) {
        acc += inc;
        running_max = running_max.max(acc);
        values.push(running_max);
    }
    LocalTimePath(SamplePath::from_parts(*path.grid(), values))
}

/// Default occupation bandwidth `sqrt(dt)`.
pub fn default_occupation_epsilon(grid: &TimeGrid) -> f64 {
    grid.dt().sqrt()
}

/// `L(t) = (1 / 2 eps) sum_{s<t} 1{|x_s| <= eps} dt`.
pub fn local_time_occupation(path: &SamplePath, epsilon: f64) -> Result<LocalTimePath> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(param("epsilon", epsilon, "must be finite and > 0"));
    }
    let w = path.grid().dt() / (2.0 * epsilon);
    let mut values = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    values.push(0.0);
    for &x in &path.values()[..path.len() - 1] {
        if x.abs() <= epsilon {
            acc += w;
        }
        values.push(acc);
    }
    Ok(LocalTimePath(SamplePath::from_parts(*path.grid(), values)))
}

/// `L(t) = (1 / 2 eps) sum_{s<t} 1{|x_s| <= eps} (dx_s)^2`: the occupation
/// estimator in the path's own quadratic-variation clock. Agrees with
/// [`local_time_occupation`] in law for Brownian paths, and vanishes for
/// paths with no quadratic variation.
pub fn local_time_occupation_qv(path: &SamplePath, epsilon: f64) -> Result<LocalTimePath> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(param("epsilon", epsilon, "must be finite and > 0"));
    }
    let mut values = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    values.push(0.0);
    for w in path.values().windows(2) {
        if w[0].abs() <= epsilon {
            acc += (w[1] - w[0]).powi(2) / (2.0 * epsilon);
        }
        values.push(acc);
    }
    Ok(LocalTimePath(SamplePath::from_parts(*path.grid(), values)))
}

/// `|D|` split into `m = sum sign(D) dD` and `v = L` (Tanaka), with the
/// reference mask `H(D)` at the default band.
pub fn reflected_decomposition(d: &SamplePath) -> Decomposition {
    reflected_decomposition_with(d, default_epsilon(d.grid()))
}

pub fn reflected_decomposition_with(d: &SamplePath, epsilon: f64) -> Decomposition {
    let signs: Vec<f64> = d.values().iter().map(|&x| sgn(x)).collect();
    let m = crate::paths::stochastic_integral(&signs, d);
    let v = local_time_tanaka(d).into_path();
    let h = detect_zero_set(d, epsilon).expect("epsilon is nonnegative");
    Decomposition::from_parts(d.initial().abs(), m, v, h)
}
