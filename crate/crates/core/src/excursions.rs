//! Zero-set detection, excursion intervals, last zeros and Bernoulli sign marks.

use std::io::Write;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::paths::{RngStream, SamplePath, TimeGrid};

/// Default detection band `2 sqrt(dt)` for Brownian-scale paths.
pub fn default_epsilon(grid: &TimeGrid) -> f64 {
    2.0 * grid.dt().sqrt()
}

/// Discrete surrogate of a zero set: one flag per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HMask {
    grid: TimeGrid,
    in_h: Vec<bool>,
    epsilon: f64,
}

impl HMask {
    pub fn from_flags(grid: TimeGrid, in_h: Vec<bool>, epsilon: f64) -> Result<Self> {
        if in_h.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "mask has {} flags but the grid has {} nodes",
                in_h.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            in_h,
            epsilon,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn flags(&self) -> &[bool] {
        &self.in_h
    }

    pub fn contains(&self, k: usize) -> bool {
        self.in_h[k]
    }

    pub fn count(&self) -> usize {
        self.in_h.iter().filter(|b| **b).count()
    }

    /// First node in H, if any.
    pub fn first(&self) -> Option<usize> {
        self.in_h.iter().position(|b| *b)
    }

    /// Node-wise union.
    pub fn union(&self, other: &HMask) -> HMask {
        assert_eq!(self.grid, other.grid);
        HMask {
            grid: self.grid,
            in_h: self
                .in_h
                .iter()
                .zip(&other.in_h)
                .map(|(a, b)| *a || *b)
                .collect(),
            epsilon: self.epsilon.max(other.epsilon),
        }
    }

    /// Adds node `k` whenever `k + 1` is in H, so that a step ending on H
    /// counts as charged by H.
    pub fn with_left_neighbors(&self) -> HMask {
        let n = self.in_h.len();
        let in_h = (0..n)
            .map(|k| self.in_h[k] || (k + 1 < n && self.in_h[k + 1]))
            .collect();
        HMask {
            grid: self.grid,
            in_h,
            epsilon: self.epsilon,
        }
    }

    /// Largest H node `<= t_idx`.
    pub fn last_zero(&self, t_idx: usize) -> Option<usize> {
        last_zero(self, t_idx)
    }

    /// `last_zero(k)` for every node, computed in one pass.
    pub fn last_zero_map(&self) -> Vec<Option<usize>> {
        let mut out = Vec::with_capacity(self.in_h.len());
        let mut last = None;
        for (k, &h) in self.in_h.iter().enumerate() {
            if h {
                last = Some(k);
            }
            out.push(last);
        }
        out
    }
}

/// Node `k` is in H iff `|x_k| <= eps` or the path strictly changes sign
/// between `k` and `k + 1` (crossings are attributed to the left node).
pub fn detect_zero_set(path: &SamplePath, epsilon: f64) -> Result<HMask> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(param("epsilon", epsilon, "must be finite and >= 0"));
    }
    let x = path.values();
    let n = x.len();
    let in_h = (0..n)
        .map(|k| x[k].abs() <= epsilon || (k + 1 < n && x[k] * x[k + 1] < 0.0))
        .collect();
    Ok(HMask {
        grid: *path.grid(),
        in_h,
        epsilon,
    })
}

/// Largest H node `<= t_idx`, or `None` when H has no node up to `t_idx`.
pub fn last_zero(mask: &HMask, t_idx: usize) -> Option<usize> {
    let t_idx = t_idx.min(mask.in_h.len() - 1);
    mask.in_h[..=t_idx].iter().rposition(|b| *b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excursion {
    pub g_idx: usize,
    pub d_idx: usize,
    pub sign: i8,
    /// Nodes strictly inside the excursion. For the trailing incomplete
    /// excursion this includes `d_idx = n_steps`; for a leading run that
    /// starts off H it includes node 0.
    pub interior: Range<usize>,
    /// The run starts at node 0 without a preceding H node.
    pub left_open: bool,
}

impl Excursion {
    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSet {
    pub grid: TimeGrid,
    pub excursions: Vec<Excursion>,
    pub includes_final_incomplete: bool,
}

impl ExcursionSet {
    pub fn len(&self) -> usize {
        self.excursions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excursions.is_empty()
    }
}

/// Maximal runs of non-H nodes, each flanked by H nodes (or the grid ends).
pub fn extract_excursions(path: &SamplePath, mask: &HMask) -> Result<ExcursionSet> {
    if path.grid() != mask.grid() {
        return Err(Error::InvalidInput("mask and path grids differ".into()));
    }
    let n = path.grid().n_steps();
    let x = path.values();
    let h = mask.flags();
    let mut excursions = Vec::new();
    let mut k = 0;
    while k <= n {
        if h[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k <= n && !h[k] {
            k += 1;
        }
        let end = k; // exclusive
        let left_open = start == 0;
        let g_idx = if left_open { 0 } else { start - 1 };
        let d_idx = end.min(n);
        let sign = if x[start] > 0.0 { 1 } else { -1 };
        excursions.push(Excursion {
            g_idx,
            d_idx,
            sign,
            interior: start..end,
            left_open,
        });
    }
    let includes_final_incomplete = !h[n];
    Ok(ExcursionSet {
        grid: *path.grid(),
        excursions,
        includes_final_incomplete,
    })
}

/// Piecewise-constant `alpha(t)`: cell `i` is `[partition[i], partition[i+1])`,
/// the last cell extends to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    partition: Vec<f64>,
    values: Vec<f64>,
}

impl AlphaSchedule {
    pub fn new(partition: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if partition.is_empty() || partition.len() != values.len() {
            return Err(Error::InvalidInput(
                "schedule needs one alpha per cell and at least one cell".into(),
            ));
        }
        if partition[0] != 0.0 {
            return Err(param("partition[0]", partition[0], "must be 0"));
        }
        if partition.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "partition must be strictly increasing".into(),
            ));
        }
        if let Some(&a) = values.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(param("alpha", a, "must lie in [0, 1]"));
        }
        Ok(Self { partition, values })
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![alpha])
    }

    /// Equal-width cells over `[0, horizon)`.
    pub fn uniform(horizon: f64, values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        let partition = (0..m).map(|i| horizon * i as f64 / m as f64).collect();
        Self::new(partition, values)
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn check_horizon(&self, horizon: f64) -> Result<()> {
        match self.partition.last() {
            Some(&t) if t > horizon => Err(param("partition", t, "exceeds the horizon")),
            _ => Ok(()),
        }
    }

    /// Cell containing time `t`.
    pub fn cell_at(&self, t: f64) -> usize {
        // Relative slack so grid times that equal a boundary in exact
        // arithmetic land in the right-hand cell.
        let slack = 1e-12 * (1.0 + t.abs());
        self.partition
            .iter()
            .rposition(|&p| p <= t + slack)
            .unwrap_or(0)
    }

    pub fn alpha_at(&self, t: f64) -> f64 {
        self.values[self.cell_at(t)]
    }

    /// Cell index of every grid node.
    pub fn cells_on(&self, grid: &TimeGrid) -> Vec<usize> {
        grid.times().map(|t| self.cell_at(t)).collect()
    }
}

/// A constant-mark stretch of an excursion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkSegment {
    pub cell: usize,
    pub nodes: Range<usize>,
    pub mark: i8,
}

/// Marks for each excursion; one segment per (excursion, schedule cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub segments: Vec<Vec<MarkSegment>>,
}

impl SignAssignment {
    /// Marks per excursion in the constant case (first segment of each).
    pub fn marks(&self) -> Vec<i8> {
        self.segments.iter().map(|s| s[0].mark).collect()
    }

    /// `Z`: the mark on excursion interiors, 0 elsewhere.
    pub fn process(&self, grid: &TimeGrid) -> SamplePath {
        let mut z = vec![0.0; grid.len()];
        for seg in self.segments.iter().flatten() {
            for k in seg.nodes.clone() {
                z[k] = f64::from(seg.mark);
            }
        }
        SamplePath::from_parts(*grid, z)
    }

    /// CSV `g_idx,d_idx,sign,mark`, one row per segment.
    pub fn write_csv<W: Write>(&self, exc: &ExcursionSet, mut w: W) -> Result<()> {
        writeln!(w, "g_idx,d_idx,sign,mark")?;
        for (e, segs) in exc.excursions.iter().zip(&self.segments) {
            for s in segs {
                writeln!(w, "{},{},{},{}", e.g_idx, e.d_idx, e.sign, s.mark)?;
            }
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(param("alpha", alpha, "must lie in [0, 1]"))
    }
}

fn draw<R: Rng>(rng: &mut R, alpha: f64) -> i8 {
    if rng.gen::<f64>() < alpha {
        1
    } else {
        -1
    }
}

/// One mark per excursion, `P(mark = 1) = alpha`, consumed in excursion order.
pub fn assign_signs_const(
    exc: &ExcursionSet,
    alpha: f64,
    stream: &RngStream,
) -> Result<SignAssignment> {
    check_alpha(alpha)?;
    let mut rng = stream.rng();
    let segments = exc
        .excursions
        .iter()
        .map(|e| {
            vec![MarkSegment {
                cell: 0,
                nodes: e.interior.clone(),
                mark: draw(&mut rng, alpha),
            }]
        })
        .collect();
    Ok(SignAssignment { segments })
}

/// One mark per (excursion, cell) pair, consumed in (excursion, cell) order.
/// With a single cell this draws exactly the marks of [`assign_signs_const`].
pub fn assign_signs_piecewise(
    exc: &ExcursionSet,
    sched: &AlphaSchedule,
    stream: &RngStream,
) -> Result<SignAssignment> {
    sched.check_horizon(exc.grid.horizon())?;
    let cells = sched.cells_on(&exc.grid);
    let mut rng = stream.rng();
    let mut segments = Vec::with_capacity(exc.len());
    for e in &exc.excursions {
        let mut segs = Vec::new();
        let mut start = e.interior.start;
        while start < e.interior.end {
            let cell = cells[start];
            let mut end = start + 1;
            while end < e.interior.end && cells[end] == cell {
                end += 1;
            }
            segs.push(MarkSegment {
                cell,
                nodes: start..end,
                mark: draw(&mut rng, sched.values()[cell]),
            });
            start = end;
        }
        segments.push(segs);
    }
    Ok(SignAssignment { segments })
}

/// `Z` of the constant-alpha sign process.
pub fn sign_process_const(
    exc: &ExcursionSet,
    alpha: f64,
    stream: &RngStream,
) -> Result<SamplePath> {
    Ok(assign_signs_const(exc, alpha, stream)?.process(&exc.grid))
}

/// `Z` of the piecewise-alpha sign process.
pub fn sign_process_piecewise(
    exc: &ExcursionSet,
    sched: &AlphaSchedule,
    stream: &RngStream,
) -> Result<SamplePath> {
    Ok(assign_signs_piecewise(exc, sched, stream)?.process(&exc.grid))
}

/// Carries the last nonzero value of `z` through its zeros; nodes before the
/// first nonzero value take `initial`.
pub fn carry_through_zeros(z: &[f64], initial: f64) -> Vec<f64> {
    let mut last = initial;
    z.iter()
        .map(|&v| {
            if v != 0.0 {
                last = v;
            }
            last
        })
        .collect()
}
