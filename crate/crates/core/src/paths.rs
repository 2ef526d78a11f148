//! Uniform time grids, sample paths, seeded random streams and the base
//! Brownian simulations every other module builds on.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Stream tags used by the simulations in this crate.
pub mod streams {
    pub const BROWNIAN: &str = "brownian";
    pub const DRIVER: &str = "driver";
    pub const EXCURSION_MARKS: &str = "excursion-marks";
    pub const SEGMENT_MARKS: &str = "segment-marks";
    pub const PRODUCT_MARKS: &str = "product-marks";
}

/// Uniform discretization `t_k = k * T / n` of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be positive".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Time of node `k`. Computed as `T * k / n` so that `time(n) == T` exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    /// Largest node index whose time is `<= t` (clamped to the grid).
    pub fn index_at_or_before(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let k = (t / self.dt() + 1e-9).floor() as usize;
        k.min(self.n_steps)
    }

    /// Grid with `n_steps / factor` steps over the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.n_steps
            )));
        }
        Self::new(self.horizon, self.n_steps / factor)
    }
}

/// A real-valued path aligned to a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "path has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(step) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values that are finite by construction.
    pub(crate) fn from_parts(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::from_parts(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self::from_parts(grid, vec![c; grid.len()])
    }

    /// Path `t_k -> f(t_k)`.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    /// Path with `path(0) = start` and the given increments.
    pub fn from_increments(grid: TimeGrid, start: f64, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::InvalidInput(format!(
                "{} increments for a grid of {} steps",
                increments.len(),
                grid.n_steps()
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = start;
        values.push(acc);
        for d in increments {
            acc += d;
            values.push(acc);
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Forward increments `path(k+1) - path(k)`, `n_steps` of them.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.grid, self.values.iter().map(|&x| f(x)).collect())
    }

    /// Pointwise combination of two paths on the same grid.
    pub fn zip_with(&self, other: &SamplePath, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "paths live on different grids");
        Self::from_parts(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Every `factor`-th node; the coarse path shares the fine path's values.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(Self::from_parts(grid, values))
    }

    /// The first `n_steps` steps, on a grid with the same `dt`.
    pub fn truncate(&self, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > self.grid.n_steps() {
            return Err(Error::InvalidGrid(format!(
                "cannot keep {n_steps} of {} steps",
                self.grid.n_steps()
            )));
        }
        let grid = TimeGrid::new(self.grid.time(n_steps), n_steps)?;
        Ok(Self::from_parts(grid, self.values[..=n_steps].to_vec()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV with header `t,value`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.grid.times().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// A named, seeded random stream. Distinct `(master_seed, stream_id)` pairs
/// give independent output; the same pair always gives the same output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: String,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: impl Into<String>) -> Self {
        Self {
            master_seed,
            stream_id: stream_id.into(),
        }
    }

    /// Sub-stream for item `index` of a batch, e.g. path number.
    pub fn child(&self, index: u64) -> Self {
        Self::new(self.master_seed, format!("{}/{index}", self.stream_id))
    }

    /// Sibling stream under a different tag but the same seed.
    pub fn sibling(&self, tag: &str) -> Self {
        Self::new(self.master_seed, format!("{}:{tag}", self.stream_id))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.stream_id.as_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }
}

/// Standard Brownian motion on `grid`, started at 0.
pub fn simulate_brownian(grid: &TimeGrid, stream: &RngStream) -> SamplePath {
    let mut rng = stream.rng();
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = 0.0;
    values.push(x);
    for _ in 0..grid.n_steps() {
        let z: f64 = StandardNormal.sample(&mut rng);
        x += sd * z;
        values.push(x);
    }
    SamplePath::from_parts(*grid, values)
}

/// The reference martingale `D`: a standard Brownian motion drawn from its
/// own stream, independent of any `B` stream with a different id.
pub fn simulate_driver_d(grid: &TimeGrid, stream: &RngStream) -> SamplePath {
    simulate_brownian(grid, stream)
}

/// Running sum of squared increments.
pub fn quadratic_variation(path: &SamplePath) -> SamplePath {
    covariation(path, path)
}

/// Running sum of products of increments, `[a, b]` on the grid.
pub fn covariation(a: &SamplePath, b: &SamplePath) -> SamplePath {
    assert_eq!(a.grid, b.grid, "paths live on different grids");
    let mut values = Vec::with_capacity(a.len());
    let mut acc = 0.0;
    values.push(acc);
    for (da, db) in a.increments().zip(b.increments()) {
        acc += da * db;
        values.push(acc);
    }
    SamplePath::from_parts(a.grid, values)
}

/// Left-point sum `sum_{j<k} h(j) * (x(j+1) - x(j))`.
pub fn stochastic_integral(integrand: &[f64], integrator: &SamplePath) -> SamplePath {
    assert!(integrand.len() + 1 >= integrator.len());
    let mut values = Vec::with_capacity(integrator.len());
    let mut acc = 0.0;
    values.push(acc);
    for (h, dx) in integrand.iter().zip(integrator.increments()) {
        acc += h * dx;
        values.push(acc);
    }
    SamplePath::from_parts(integrator.grid, values)
}
