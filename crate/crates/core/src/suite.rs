//! The validation suite: twelve acceptance criteria, each a batch of
//! seeded Monte Carlo checks reduced to one pass/fail report.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursions::{
    detect_zero_set, extract_excursions, sign_process_const, sign_process_piecewise, AlphaSchedule,
};
use crate::harness::{
    convergence_report, ks_test, proportion_test, Bound, Moments, TestReport, KS_C_001,
};
use crate::local_time::{
    default_occupation_epsilon, local_time_occupation, local_time_tanaka, reflected_decomposition,
};
use crate::numeric::norm_cdf;
use crate::paths::{
    covariation, quadratic_variation, simulate_brownian, streams, RngStream, SamplePath, TimeGrid,
};
use crate::relmart::{
    balayage_decomposition, balayage_predictable_path, carried_by_ratio, closed_crossing_mask,
    interior_jump_path, ito_mckean, last_zero_transform, mean_stationarity, minmax_family,
    noise_floor, product_minus_bracket, progressive_residual_path, Decomposition,
};
use crate::sde::{
    coincidence_discrepancy, coincidence_window, eq11_residual_with, euler_solve,
    geometric_skew_solve, gronwall_rate, picard_constant, picard_solve, two_grid_discrepancy,
    CoeffSpec, SdeProblem, Variant, EQ11_TOL,
};
use crate::skewbm::{
    azzalini_cdf, azzalini_lambda, construct_from_relmart, construct_y_delta_1, skew_density_cdf,
    AlphaSpec, SkewParams,
};

/// Path counts and grid sizes for each criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    pub c1_paths: usize,
    pub c1_steps: usize,
    pub c2_paths: usize,
    pub c2_steps: usize,
    pub c2_qv_paths: usize,
    pub c2_qv_steps: usize,
    pub c3_paths: usize,
    pub c3_steps: usize,
    pub c4_paths: usize,
    pub c4_steps: usize,
    pub c4_agree_paths: usize,
    pub c5_paths: usize,
    pub c5_fine_steps: usize,
    pub c6_paths: usize,
    pub c6_steps: usize,
    pub c7_paths: usize,
    pub c7_steps: usize,
    pub c7_cor5_steps: usize,
    pub c7_gate_paths: usize,
    pub c8_paths: usize,
    pub c8_steps: usize,
    pub c9_paths: usize,
    pub c9_steps: usize,
    pub c10_paths: usize,
    pub c10_fine_log2: u32,
    pub c10_qv_steps: usize,
    pub c11_paths: usize,
    pub c11_steps: usize,
    pub c12_paths: usize,
    pub c12_steps: usize,
}

impl Sizes {
    pub fn default_suite() -> Self {
        Self {
            c1_paths: 100_000,
            c1_steps: 10_000,
            c2_paths: 20_000,
            c2_steps: 10_000,
            c2_qv_paths: 5,
            c2_qv_steps: 100_000,
            c3_paths: 20_000,
            c3_steps: 100,
            c4_paths: 100_000,
            c4_steps: 100_000,
            c4_agree_paths: 1_000,
            c5_paths: 200,
            c5_fine_steps: 1 << 14,
            c6_paths: 20,
            c6_steps: 10_000,
            c7_paths: 100_000,
            c7_steps: 1_000,
            c7_cor5_steps: 100_000,
            c7_gate_paths: 1_000,
            c8_paths: 200,
            c8_steps: 1_000,
            c9_paths: 1_000,
            c9_steps: 1_000,
            c10_paths: 4_000,
            c10_fine_log2: 14,
            c10_qv_steps: 100_000,
            c11_paths: 2_000,
            c11_steps: 1_000,
            c12_paths: 100,
            c12_steps: 10_000,
        }
    }

    /// Smaller batches for quick runs; statistical bands scale with N.
    pub fn fast_suite() -> Self {
        Self {
            c1_paths: 10_000,
            c1_steps: 2_000,
            c2_paths: 5_000,
            c2_steps: 2_000,
            c2_qv_paths: 2,
            c2_qv_steps: 100_000,
            c3_paths: 5_000,
            c4_paths: 100_000,
            c4_steps: 10_000,
            c4_agree_paths: 200,
            c5_paths: 60,
            c6_paths: 5,
            c7_paths: 20_000,
            c7_cor5_steps: 2_000,
            c7_gate_paths: 500,
            c8_paths: 50,
            c9_paths: 300,
            c10_paths: 1_000,
            c11_paths: 500,
            c12_paths: 20,
            c12_steps: 2_000,
            ..Self::default_suite()
        }
    }
}

/// Tolerances, pinned to the acceptance values by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub ks_c: f64,
    pub qv_abs: f64,
    pub tanaka_abs: f64,
    pub agreement_rel: f64,
    pub noise_multiple: f64,
    pub se_band: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub coincidence_multiple: f64,
    pub coincidence_share: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub log_qv_rel: f64,
    pub eq11_rel: f64,
    pub carried_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ks_c: KS_C_001,
            qv_abs: 0.02,
            tanaka_abs: 0.01,
            agreement_rel: 0.15,
            noise_multiple: 10.0,
            se_band: 3.0,
            picard_tol: 1e-4,
            picard_max_iter: 15,
            coincidence_multiple: 5.0,
            coincidence_share: 0.99,
            slope_lo: 0.35,
            slope_hi: 0.65,
            log_qv_rel: 0.02,
            eq11_rel: EQ11_TOL,
            carried_ratio: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Criterion ids to run, e.g. `"C1"`. Unknown ids are rejected.
    pub tests: Vec<String>,
    pub sizes: Sizes,
    pub tolerances: Tolerances,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl SuiteConfig {
    pub fn default_suite(seed: u64) -> Self {
        Self {
            seed,
            tests: CRITERIA.iter().map(|c| c.id.to_string()).collect(),
            sizes: Sizes::default_suite(),
            tolerances: Tolerances::default(),
            out_dir: None,
        }
    }

    pub fn fast_suite(seed: u64) -> Self {
        Self {
            sizes: Sizes::fast_suite(),
            ..Self::default_suite(seed)
        }
    }

    pub fn empty(seed: u64) -> Self {
        Self {
            tests: Vec::new(),
            ..Self::default_suite(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tests {
            if criterion(t).is_none() {
                return Err(Error::InvalidInput(format!("unknown test {t}")));
            }
        }
        Ok(())
    }
}

type Check = fn(&SuiteConfig) -> Result<Vec<TestReport>>;

pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    run: Check,
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion {
        id: "C1",
        title: "skew sign law",
        run: c1_sign_law,
    },
    Criterion {
        id: "C2",
        title: "driving martingale is Brownian",
        run: c2_driving_martingale,
    },
    Criterion {
        id: "C3",
        title: "skew-normal marginal",
        run: c3_azzalini,
    },
    Criterion {
        id: "C4",
        title: "local time consistency",
        run: c4_tanaka,
    },
    Criterion {
        id: "C5",
        title: "balayage identities",
        run: c5_balayage,
    },
    Criterion {
        id: "C6",
        title: "class membership",
        run: c6_class_membership,
    },
    Criterion {
        id: "C7",
        title: "martingale mean-stationarity",
        run: c7_mean_stationarity,
    },
    Criterion {
        id: "C8",
        title: "Picard convergence",
        run: c8_picard,
    },
    Criterion {
        id: "C9",
        title: "classical coincidence",
        run: c9_coincidence,
    },
    Criterion {
        id: "C10",
        title: "geometric skew SDE",
        run: c10_geometric,
    },
    Criterion {
        id: "C11",
        title: "uniqueness and stability",
        run: c11_uniqueness,
    },
    Criterion {
        id: "C12",
        title: "restart identity",
        run: c12_restart,
    },
];

pub fn criterion(id: &str) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id.eq_ignore_ascii_case(id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: String,
    pub title: String,
    pub report: TestReport,
    pub parts: Vec<TestReport>,
}

impl CriterionOutcome {
    pub fn summary_line(&self) -> String {
        let verdict = if self.report.pass { "PASS" } else { "FAIL" };
        let failed: Vec<&str> = self
            .parts
            .iter()
            .filter(|p| !p.pass)
            .map(|p| p.name.as_str())
            .collect();
        let mut line = format!(
            "{verdict} {} {} ({} checks)",
            self.id,
            self.title,
            self.parts.len()
        );
        if !failed.is_empty() {
            line.push_str(&format!(" failed: {}", failed.join(", ")));
        }
        line
    }
}

/// Runs one criterion; errors and panics become a failing report.
pub fn run_criterion(c: &Criterion, cfg: &SuiteConfig) -> CriterionOutcome {
    let parts =
        match catch_unwind(AssertUnwindSafe(|| (c.run)(cfg))) {
            Ok(Ok(parts)) => parts,
            Ok(Err(e)) => vec![TestReport::at_most(format!("{}_error", c.id), 1.0, 0.0)
                .with_details(e.to_string())],
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                vec![TestReport::at_most(format!("{}_panic", c.id), 1.0, 0.0).with_details(msg)]
            }
        };
    let parts: Vec<TestReport> = parts.into_iter().map(|p| p.with_seed(cfg.seed)).collect();
    let report = TestReport::all_of(c.id, &parts).with_seed(cfg.seed);
    CriterionOutcome {
        id: c.id.to_string(),
        title: c.title.to_string(),
        report,
        parts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub total_seconds: f64,
    pub per_test_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub pass: bool,
    pub outcomes: Vec<CriterionOutcome>,
    /// Timing only; excluded from determinism comparisons.
    pub wall_clock: WallClock,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    id: &'a str,
    title: &'a str,
    pass: bool,
    failed_checks: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    pass: bool,
    results: Vec<SummaryRow<'a>>,
    wall_clock: &'a WallClock,
}

/// Runs the configured criteria in order, calling `on_done` after each, and
/// writes `<id>.json` per criterion plus `summary.json` when `out_dir` is set.
pub fn run_suite_with(
    cfg: &SuiteConfig,
    mut on_done: impl FnMut(&CriterionOutcome),
) -> Result<SuiteReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut outcomes = Vec::new();
    let mut per_test_seconds = BTreeMap::new();
    for id in &cfg.tests {
        let c = criterion(id).expect("validated");
        let t0 = Instant::now();
        let outcome = run_criterion(c, cfg);
        per_test_seconds.insert(c.id.to_string(), t0.elapsed().as_secs_f64());
        on_done(&outcome);
        outcomes.push(outcome);
    }
    let report = SuiteReport {
        seed: cfg.seed,
        pass: outcomes.iter().all(|o| o.report.pass),
        outcomes,
        wall_clock: WallClock {
            total_seconds: start.elapsed().as_secs_f64(),
            per_test_seconds,
        },
    };
    if let Some(dir) = &cfg.out_dir {
        write_bundle(&report, dir)?;
    }
    Ok(report)
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    run_suite_with(cfg, |_| {})
}

pub fn write_bundle(report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for o in &report.outcomes {
        fs::write(
            dir.join(format!("{}.json", o.id)),
            serde_json::to_string_pretty(o)?,
        )?;
    }
    let summary = Summary {
        seed: report.seed,
        pass: report.pass,
        results: report
            .outcomes
            .iter()
            .map(|o| SummaryRow {
                id: &o.id,
                title: &o.title,
                pass: o.report.pass,
                failed_checks: o.report.statistic,
            })
            .collect(),
        wall_clock: &report.wall_clock,
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared fixtures.

const DELTA: f64 = 0.6;
const ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];
/// Start of `D` for the coincidence fixtures, so that `tau_1 > 0`.
const D0_OFFSET: f64 = 0.5;

fn grid(n: usize) -> Result<TimeGrid> {
    TimeGrid::new(1.0, n)
}

/// Independent `(B, D)` for path `i` of a criterion.
fn pair(seed: u64, tag: &str, i: usize, g: &TimeGrid) -> (SamplePath, SamplePath) {
    let b = simulate_brownian(
        g,
        &RngStream::new(seed, format!("{tag}/{}", streams::BROWNIAN)).child(i as u64),
    );
    let d = simulate_brownian(
        g,
        &RngStream::new(seed, format!("{tag}/{}", streams::DRIVER)).child(i as u64),
    );
    (b, d)
}

fn par_collect<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n)
        .into_par_iter()
        .map(f)
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<Moments>().mean
}

fn count_true(xs: impl IntoIterator<Item = bool>) -> usize {
    xs.into_iter().filter(|b| *b).count()
}

// ---------------------------------------------------------------------------
// C1

fn c1_sign_law(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    // The time-changed leg reads its source on [0, 1.5] at the same dt so that
    // the quadratic variation clock reliably passes 1.
    const TC_HORIZON: f64 = 1.0;
    let s = &cfg.sizes;
    let n = s.c1_steps;
    let long = TimeGrid::new(1.5, n + n / 2)?;
    let rows = par_collect(s.c1_paths, |i| {
        let (bl, dl) = pair(cfg.seed, "c1", i, &long);
        let (b, d) = (bl.truncate(n)?, dl.truncate(n)?);
        let x = ito_mckean(&bl, &dl, DELTA)?;
        let mut out = [0.0; 6];
        for (j, &alpha) in ALPHAS.iter().enumerate() {
            let st = RngStream::new(cfg.seed, format!("c1/skew{j}")).child(i as u64);
            out[j] = construct_y_delta_1(
                &b,
                &d,
                SkewParams {
                    alpha,
                    delta: DELTA,
                },
                &st,
            )?
            .y
            .terminal();
            out[3 + j] = construct_from_relmart(
                &x,
                &dl,
                &AlphaSpec::Constant(alpha),
                TC_HORIZON,
                &st.sibling("tc"),
            )?
            .y
            .terminal();
        }
        Ok(out)
    })?;
    let n = rows.len();
    let mut parts = Vec::new();
    for (j, &alpha) in ALPHAS.iter().enumerate() {
        for (off, label, t) in [(0, "ito_mckean", 1.0), (3, "time_changed", TC_HORIZON)] {
            let ys: Vec<f64> = rows.iter().map(|r| r[off + j]).collect();
            let hits = count_true(ys.iter().map(|y| *y > 0.0));
            parts.push(proportion_test(
                &format!("{label}_sign_alpha{alpha}"),
                hits,
                n,
                alpha,
            )?);
            parts.push(ks_test(&format!("{label}_law_alpha{alpha}"), &ys, |x| {
                skew_density_cdf(alpha, t, x).map_or(f64::NAN, |p| p.1)
            })?);
        }
    }
    Ok(parts)
}

// ---------------------------------------------------------------------------
// C2

fn c2_driving_martingale(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    let s = &cfg.sizes;
    let tol = &cfg.tolerances;
    let params = SkewParams {
        alpha: 0.75,
        delta: DELTA,
    };
    let driving = |g: &TimeGrid, tag: &str, i: usize| -> Result<SamplePath> {
        let (b, d) = pair(cfg.seed, tag, i, g);
        let st = RngStream::new(cfg.seed, format!("{tag}/skew")).child(i as u64);
        Ok(construct_y_delta_1(&b, &d, params, &st)?
            .driving
            .expect("driving martingale"))
    };
    let g = grid(s.c2_steps)?;
    let rows = par_collect(s.c2_paths, |i| {
        let m = driving(&g, "c2", i)?;
        Ok((m.terminal(), quadratic_variation(&m).terminal()))
    })?;
    let terminals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mean_qv = mean(rows.iter().map(|r| r.1));
    let fine = grid(s.c2_qv_steps)?;
    let fine_qv = par_collect(s.c2_qv_paths, |i| {
        Ok(quadratic_variation(&driving(&fine, "c2-fine", i)?).terminal())
    })?;
    let worst = fine_qv.iter().map(|q| (q - 1.0).abs()).fold(0.0, f64::max);
    let ks_n = terminals.len() as f64;
    let ks = ks_test("terminal_law_normal", &terminals, norm_cdf)?;
    let ks = TestReport::below(ks.name, ks.statistic, tol.ks_c / ks_n.sqrt())
        .with_samples(terminals.len());
    Ok(vec![
        ks,
        TestReport::at_most("mean_qv_at_1", (mean_qv - 1.0).abs(), tol.qv_abs)
            .with_samples(rows.len()),
        TestReport::at_most("fine_path_qv_at_1", worst, tol.qv_abs)
            .with_samples(fine_qv.len())
            .with_details(format!("QV(1) per path: {fine_qv:?}")),
    ])
}

// ---------------------------------------------------------------------------
// C3

fn c3_azzalini(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    let s = &cfg.sizes;
    let g = grid(s.c3_steps)?;
    let xs = par_collect(s.c3_paths, |i| {
        let (b, d) = pair(cfg.seed, "c3", i, &g);
        Ok(ito_mckean(&b, &d, DELTA)?.total().terminal())
    })?;
    let lambda = azzalini_lambda(DELTA);
    let ks = ks_test("xdelta_skew_normal", &xs, |x| azzalini_cdf(lambda, x))?;
    Ok(vec![TestReport::below(
        ks.name,
        ks.statistic,
        cfg.tolerances.ks_c / (xs.len() as f64).sqrt(),
    )
    .with_samples(xs.len())])
}

// ---------------------------------------------------------------------------
// C4

fn c4_tanaka(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    let s = &cfg.sizes;
    let tol = &cfg.tolerances;
    let g = grid(s.c4_steps)?;
    let root = RngStream::new(cfg.seed, format!("c4/{}", streams::BROWNIAN));
    let ls = par_collect(s.c4_paths, |i| {
        Ok(local_time_tanaka(&simulate_brownian(&g, &root.child(i as u64))).terminal())
    })?;
    let m: Moments = ls.iter().copied().collect();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let eps = default_occupation_epsilon(&g);
    let pairs = par_collect(s.c4_agree_paths, |i| {
        let p = simulate_brownian(&g, &root.child(i as u64));
        Ok((
            local_time_tanaka(&p).terminal(),
            local_time_occupation(&p, eps)?.terminal(),
        ))
    })?;
    let tan = mean(pairs.iter().map(|p| p.0));
    let occ = mean(pairs.iter().map(|p| p.1));
    Ok(vec![
        TestReport::at_most("tanaka_mean", (m.mean - target).abs(), tol.tanaka_abs)
            .with_samples(ls.len())
            .with_details(format!(
                "mean {:.5} se {:.5} target {target:.5}",
                m.mean,
                m.se()
            )),
        TestReport::at_most(
            "tanaka_vs_occupation",
            (tan - occ).abs() / tan,
            tol.agreement_rel,
        )
        .with_samples(pairs.len())
        .with_details(format!("tanaka {tan:.5} occupation {occ:.5}")),
    ])
}

// ---------------------------------------------------------------------------
// C5

fn c5_balayage(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    const FACTORS: [usize; 4] = [8, 4, 2, 1];
    let s = &cfg.sizes;
    let tol = &cfg.tolerances;
    let fine = grid(s.c5_fine_steps)?;
    let floor = noise_floor(&fine);
    let piecewise = AlphaSchedule::uniform(1.0, vec![0.3, 0.8])?;
    let constant = AlphaSchedule::constant(0.75)?;
    let half = AlphaSchedule::constant(0.5)?;
    // Per path: residuals per level for (Prop 2, Prop 5, Prop 6, Prop 6 net of
    // boundary jumps), then the kill case.
    let rows = par_collect(s.c5_paths, |i| {
        let (b, d) = pair(cfg.seed, "c5", i, &fine);
        let marks =
            RngStream::new(cfg.seed, format!("c5/{}", streams::EXCURSION_MARKS)).child(i as u64);
        let mut out = [[0.0; 4]; 4];
        for (lvl, &f) in FACTORS.iter().enumerate() {
            let dd = d.coarsen(f)?;
            let m = reflected_decomposition(&dd);
            let k = m.drift().map(f64::tanh);
            out[0][lvl] = balayage_predictable_path(&k, m.total()).max_abs();
            let y = b.coarsen(f)?;
            let exc = extract_excursions(&y, &detect_zero_set(&y, 0.0)?)?;
            let z = sign_process_const(&exc, 0.75, &marks)?;
            out[1][lvl] = progressive_residual_path(&z, &y, &constant)?.max_abs();
            let z =
                sign_process_piecewise(&exc, &piecewise, &marks.sibling(streams::SEGMENT_MARKS))?;
            let r = progressive_residual_path(&z, &y, &piecewise)?;
            out[2][lvl] = r.max_abs();
            out[3][lvl] = r
                .zip_with(&interior_jump_path(&z, &y)?, |a, j| a - j)
                .max_abs();
        }
        let exc = extract_excursions(&b, &detect_zero_set(&b, 0.0)?)?;
        let z = sign_process_const(&exc, 0.5, &marks.sibling("half"))?;
        let kill = progressive_residual_path(&z, &b, &half)?.max_abs();
        Ok((out, kill))
    })?;
    let n = rows.len() as f64;
    let mut parts = Vec::new();
    let labels = [
        "predictable",
        "progressive_constant",
        "progressive_piecewise",
        "progressive_piecewise_net_of_jumps",
    ];
    for (j, label) in labels.iter().enumerate() {
        let lv: Vec<f64> = (0..4)
            .map(|l| rows.iter().map(|r| r.0[j][l]).sum::<f64>() / n)
            .collect();
        let rises = lv.windows(2).filter(|w| !(w[1] < w[0])).count();
        parts.push(
            TestReport::at_most(format!("{label}_monotone"), rises as f64, 0.0)
                .with_samples(rows.len())
                .with_details(format!("mean max residual by level: {lv:?}")),
        );
        parts.push(
            TestReport::at_most(format!("{label}_final"), lv[3], tol.noise_multiple * floor)
                .with_samples(rows.len()),
        );
    }
    let kill = mean(rows.iter().map(|r| r.1));
    parts.push(TestReport::at_most("half_alpha_kill", kill, floor).with_samples(rows.len()));
    Ok(parts)
}

// ---------------------------------------------------------------------------
// C6

fn c6_class_membership(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    let s = &cfg.sizes;
    let tol = cfg.tolerances.carried_ratio;
    let g = grid(s.c6_steps)?;
    const NAMES: [&str; 11] = [
        "reflected",
        "ito_mckean",
        "minmax_1",
        "minmax_2",
        "minmax_3",
        "minmax_4",
        "minmax_5",
        "minmax_6",
        "linear_combination",
        "stochastic_integral",
        "balayage",
    ];
    let rows = par_collect(s.c6_paths, |i| {
        let (b, d) = pair(cfg.seed, "c6", i, &g);
        let refl = reflected_decomposition(&d);
        let x = ito_mckean(&b, &d, DELTA)?;
        let w = Decomposition::martingale_only(d.clone(), refl.h_ref().clone());
        let ratio = |dec: &Decomposition| carried_by_ratio(dec.drift(), dec.h_ref());
        let mut r = vec![ratio(&refl), ratio(&x)];
        let mut contained = 0.0f64;
        for j in 1..=6u8 {
            let (xj, rep) = minmax_family(&x, &w, j)?;
            r.push(ratio(&xj));
            contained = contained.max(rep.statistic);
        }
        r.push(ratio(&Decomposition::linear_combination(
            1.5, &x, -0.7, &refl,
        )));
        let h: Vec<f64> = (0..g.len()).map(|k| (g.time(k) * 7.0).sin()).collect();
        r.push(ratio(&x.integral(&h)));
        r.push(ratio(&balayage_decomposition(
            &refl.drift().map(f64::tanh),
            &refl,
        )));
        // An integrand vanishing on H gives no drift at all.
        let h0: Vec<f64> = (0..g.len())
            .map(|k| {
                if refl.h_ref().contains(k) {
                    0.0
                } else {
                    1.0 + g.time(k)
                }
            })
            .collect();
        let exact = x.integral(&h0).drift().values().iter().all(|v| *v == 0.0)
            && refl
                .integral(&h0)
                .drift()
                .values()
                .iter()
                .all(|v| *v == 0.0);
        Ok((r, contained, exact))
    })?;
    let n = rows.len();
    let mut parts: Vec<TestReport> = NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let worst = rows.iter().map(|r| r.0[j]).fold(0.0, f64::max);
            TestReport::at_most(format!("carried_by_{name}"), worst, tol).with_samples(n)
        })
        .collect();
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    parts.push(TestReport::at_most("minmax_zero_set_containment", worst, 0.05).with_samples(n));
    let inexact = rows.iter().filter(|r| !r.2).count();
    parts.push(
        TestReport::at_most("vanishing_integrand_no_drift", inexact as f64, 0.0).with_samples(n),
    );
    Ok(parts)
}

// ---------------------------------------------------------------------------
// C7

/// `sqrt(1 - delta^2) B + delta L(D)`, carried by the closed crossing mask of `D`.
fn prop7_martingale(b: &SamplePath, d: &SamplePath) -> Decomposition {
    let c = (1.0 - DELTA * DELTA).sqrt();
    let l = local_time_tanaka(d).into_path().map(|v| DELTA * v);
    Decomposition::from_parts(0.0, b.map(|x| c * x), l, closed_crossing_mask(d))
}

fn c7_mean_stationarity(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    let s = &cfg.sizes;
    let n = s.c7_paths;
    let g = grid(s.c7_steps)?;
    let seed = cfg.seed;
    let mut parts = vec![
        mean_stationarity("product_minus_bracket", &g, n, |i| {
            let (b, d) = pair(seed, "c7-prod", i, &g);
            let x = ito_mckean(&b, &d, DELTA).expect("valid delta");
            product_minus_bracket(x.total(), &d)
        }),
        mean_stationarity("excursion_part", &g, n, |i| {
            let (b, d) = pair(seed, "c7-exc", i, &g);
            last_zero_transform(&prop7_martingale(&b, &d)).excursion_part
        }),
    ];
    let gate_rms = |make: &(dyn Fn(&SamplePath, &SamplePath) -> SamplePath + Sync)| -> Result<f64> {
        let sq = par_collect(s.c7_gate_paths, |i| {
            let (b, d) = pair(seed, "c7-exc", i, &g);
            Ok(covariation(&make(&b, &d), &d).terminal().powi(2))
        })?;
        Ok(mean(sq).sqrt())
    };
    let gate = 3.0 * (g.horizon() * g.dt()).sqrt();
    let m_rms = gate_rms(&|b, d| prop7_martingale(b, d).total().clone())?;
    let x_rms = gate_rms(&|b, d| {
        ito_mckean(b, d, DELTA)
            .expect("valid delta")
            .total()
            .clone()
    })?;
    parts.push(
        TestReport::at_most("bracket_with_d_gate", m_rms, gate).with_samples(s.c7_gate_paths),
    );
    parts.push(
        TestReport::new("bracket_gate_rejects_xdelta", x_rms, Bound::AtLeast(gate))
            .with_samples(s.c7_gate_paths),
    );

    let g5 = grid(s.c7_cor5_steps)?;
    parts.push(mean_stationarity("frozen_drift_form", &g5, n, |i| {
        let d = simulate_brownian(&g5, &RngStream::new(seed, "c7-cor5").child(i as u64));
        let refl = reflected_decomposition(&d);
        let (m, v) = (refl.total().values(), refl.drift().values());
        let f = |x: f64| 1.0 / (1.0 + x);
        let mut acc = 0.0;
        let mut q = Vec::with_capacity(m.len());
        q.push(f(v[0]) * m[0]);
        for k in 0..m.len() - 1 {
            acc += f(v[k]) * (v[k + 1] - v[k]);
            q.push(f(v[k + 1]) * m[k + 1] - acc);
        }
        SamplePath::new(g5, q).expect("finite")
    }));

    let gc = grid(200)?;
    parts.push(mean_stationarity(
        "positive_control_d2_minus_t",
        &gc,
        n,
        |i| {
            let d = simulate_brownian(&gc, &RngStream::new(seed, "c7-control").child(i as u64));
            product_minus_bracket(&d, &d)
        },
    ));
    let neg = mean_stationarity("negative_control_drift", &gc, n, |i| {
        let d = simulate_brownian(&gc, &RngStream::new(seed, "c7-control").child(i as u64));
        d.zip_with(
            &SamplePath::from_fn(gc, |t| 0.1 * t).expect("finite"),
            |a, b| a + b,
        )
    });
    parts.push(
        TestReport::new(
            "negative_control_rejected",
            neg.statistic,
            Bound::AtLeast(neg.threshold),
        )
        .with_samples(neg.n_samples)
        .with_details(neg.details),
    );
    Ok(parts)
}

// ---------------------------------------------------------------------------
// C8

fn reflected_problem(
    seed: u64,
    tag: &str,
    i: usize,
    g: &TimeGrid,
    coeffs: &CoeffSpec,
    z0: f64,
    zeta: Option<f64>,
) -> Result<SdeProblem> {
    let d = simulate_brownian(
        g,
        &RngStream::new(seed, format!("{tag}/{}", streams::DRIVER)).child(i as u64),
    );
    let w = reflected_decomposition(&d);
    let h = w.h_ref().clone();
    SdeProblem::new(coeffs.clone(), w, d, h, z0, zeta)
}

fn c8_picard(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    const K: f64 = 0.8;
    let s = &cfg.sizes;
    let tol = &cfg.tolerances;
    let g = grid(s.c8_steps)?;
    let coeffs = CoeffSpec::linear(0.5, 0.3);
    debug_assert!((coeffs.lipschitz_constant() - K).abs() < 1e-12);
    let batch = par_collect(s.c8_paths, |i| {
        reflected_problem(cfg.seed, "c8", i, &g, &coeffs, 1.0, Some(0.0))
    })?;
    let out = picard_solve(&batch, tol.picard_max_iter, tol.picard_tol)?;
    let d = &out.distances;
    let details = format!("distances {d:?}");
    let last = *d.last().expect("at least one iteration");
    let rises = d.windows(2).skip(2).filter(|w| !(w[1] < w[0])).count();
    let b = picard_constant(K, g.horizon());
    let shape = (1..d.len().saturating_sub(1))
        .map(|p| (d[p + 1] / d[p]).powi(2) * (p as f64 + 1.0) / (b * g.horizon()))
        .fold(0.0, f64::max);
    // Remaining Cauchy tail sum_{q > P} d_q, bounded geometrically from the
    // last observed ratio.
    let rho = if d.len() >= 2 {
        last / d[d.len() - 2]
    } else {
        f64::INFINITY
    };
    let tail = if rho < 1.0 {
        last * rho / (1.0 - rho)
    } else {
        f64::INFINITY
    };
    Ok(vec![
        TestReport::at_most("converged_within_max_iter", last, tol.picard_tol)
            .with_samples(batch.len())
            .with_details(format!(
                "{} iterations, converged = {}",
                d.len(),
                out.converged
            )),
        TestReport::at_most("strictly_decreasing_after_2", rises as f64, 0.0)
            .with_details(details.clone()),
        TestReport::at_most("factorial_ratio_shape", shape, 1.0).with_details(format!(
            "max over p of (d_(p+1)/d_p)^2 (p+1) / (B T), B = {b:.3}"
        )),
        TestReport::at_most("partial_sums_cauchy", tail, tol.picard_tol)
            .with_details(format!("last ratio {rho:.4}; {details}")),
    ])
}

// ---------------------------------------------------------------------------
// C9

struct CoincidenceRow {
    gap: [Option<f64>; 4],
    /// Relative equation, coarse grid against fine grid.
    baseline: [Option<f64>; 4],
    /// Classical equation, coarse grid against fine grid.
    classical_baseline: [Option<f64>; 4],
    control: f64,
    /// Whole horizon without the sigma cutoff: (gap, relative baseline).
    uncut: (f64, f64),
}

fn c9_coincidence(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    let s = &cfg.sizes;
    let tol = &cfg.tolerances;
    let coarse = grid(s.c9_steps)?;
    let fine = grid(2 * s.c9_steps)?;
    let base = CoeffSpec::linear(0.5, 0.3);
    let cutoff = base.with_sigma_cutoff(2.0 * coarse.dt().sqrt())?;
    let rows = par_collect(s.c9_paths, |i| {
        let (bf, df) = pair(cfg.seed, "c9", i, &fine);
        let df = df.map(|x| x + D0_OFFSET);
        let (bc, dc) = (bf.coarsen(2)?, df.coarsen(2)?);
        let wc = ito_mckean(&bc, &dc, DELTA)?;
        let wf = ito_mckean(&bf, &df, DELTA)?;
        let (hc, hf) = (wc.h_ref().clone(), wf.h_ref().clone());
        let relative = |coeffs: &CoeffSpec| -> Result<(SdeProblem, SdeProblem)> {
            Ok((
                SdeProblem::new(
                    coeffs.clone(),
                    wc.clone(),
                    dc.clone(),
                    hc.clone(),
                    1.0,
                    None,
                )?,
                SdeProblem::new(
                    coeffs.clone(),
                    wf.clone(),
                    df.clone(),
                    hf.clone(),
                    1.0,
                    None,
                )?,
            ))
        };
        let mut row = CoincidenceRow {
            gap: [None; 4],
            baseline: [None; 4],
            classical_baseline: [None; 4],
            control: 0.0,
            uncut: (0.0, 0.0),
        };
        for (j, v) in Variant::ALL.into_iter().enumerate() {
            let coeffs = if v == Variant::P13 { &cutoff } else { &base };
            let (prob, prob_f) = relative(coeffs)?;
            let Some(end) = coincidence_window(&prob, v)? else {
                continue;
            };
            row.gap[j] = coincidence_discrepancy(&prob, v)?;
            row.baseline[j] = Some(two_grid_discrepancy(
                &euler_solve(&prob)?,
                &euler_solve(&prob_f)?,
                end,
            )?);
            row.classical_baseline[j] = Some(two_grid_discrepancy(
                &euler_solve(&prob.classical())?,
                &euler_solve(&prob_f.classical())?,
                end,
            )?);
            if let Some(c) = coincidence_discrepancy(&prob.classical(), v)? {
                row.control = row.control.max(c);
            }
        }
        let (prob, prob_f) = relative(&base)?;
        let rel = euler_solve(&prob)?;
        let cls = euler_solve(&prob.classical())?;
        let gap = rel
            .values()
            .iter()
            .zip(cls.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        row.uncut = (
            gap,
            two_grid_discrepancy(&rel, &euler_solve(&prob_f)?, coarse.n_steps())?,
        );
        Ok(row)
    })?;
    let share_within = |pairs: &[(f64, f64)]| {
        let t = tol.coincidence_multiple * mean(pairs.iter().map(|p| p.1));
        let within = count_true(pairs.iter().map(|p| p.0 <= t)) as f64 / pairs.len() as f64;
        let worst = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
        (t, within, worst)
    };
    let mut parts = Vec::new();
    for (j, v) in Variant::ALL.into_iter().enumerate() {
        let included: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| Some((r.gap[j]?, r.baseline[j]?)))
            .collect();
        let excluded = rows.len() - included.len();
        if included.is_empty() {
            parts.push(
                TestReport::at_most(format!("{v:?}_no_eligible_paths"), 1.0, 0.0)
                    .with_details(format!("{excluded} paths excluded")),
            );
            continue;
        }
        let (t, within, worst) = share_within(&included);
        let classical = mean(rows.iter().filter_map(|r| r.classical_baseline[j]));
        parts.push(
            TestReport::new(
                format!("{v:?}_share_within_tolerance"),
                within,
                Bound::AtLeast(tol.coincidence_share),
            )
            .with_samples(included.len())
            .with_details(format!(
                "tolerance {t:.3e}, worst gap {worst:.3e}, {excluded} paths excluded; \
                     classical-equation two-grid baseline mean {classical:.3e}"
            )),
        );
    }
    let control = rows.iter().map(|r| r.control).fold(0.0, f64::max);
    parts.push(
        TestReport::at_most("zero_drift_control_exact", control, 0.0).with_samples(rows.len()),
    );
    // Negative control: sigma does not vanish on H and the window is the whole
    // horizon, so the solutions must separate.
    let uncut: Vec<(f64, f64)> = rows.iter().map(|r| r.uncut).collect();
    let (t, within, worst) = share_within(&uncut);
    parts.push(
        TestReport::new(
            "uncut_whole_horizon_control_fails",
            within,
            Bound::Below(tol.coincidence_share),
        )
        .with_samples(uncut.len())
        .with_details(format!("tolerance {t:.3e}, worst gap {worst:.3e}")),
    );
    Ok(parts)
}

// ---------------------------------------------------------------------------
// C10

fn c10_geometric(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    const MU: f64 = 0.0;
    const SIGMA: f64 = 0.2;
    let s = &cfg.sizes;
    let tol = &cfg.tolerances;
    let levels: Vec<usize> = (10..=s.c10_fine_log2).map(|p| 1usize << p).collect();
    let fine_n = *levels.last().expect("at least one level");
    let fine = grid(fine_n)?;
    let rows = par_collect(s.c10_paths, |i| {
        let (b, d) = pair(cfg.seed, "c10", i, &fine);
        let x = ito_mckean(&b, &d, DELTA)?.total().clone();
        levels
            .iter()
            .map(|&n| {
                let (e, c) = geometric_skew_solve(MU, SIGMA, 1.0, &x.coarsen(fine_n / n)?)?;
                Ok((e.terminal() - c.terminal()).abs())
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let errors: Vec<(f64, f64)> = levels
        .iter()
        .enumerate()
        .map(|(l, &n)| (1.0 / n as f64, mean(rows.iter().map(|r| r[l]))))
        .collect();
    let mut slope = convergence_report("euler_strong_order", &errors, tol.slope_lo, tol.slope_hi)?;
    slope.details = format!("{}; errors {errors:?}", slope.details);

    let gq = grid(s.c10_qv_steps)?;
    let (b, d) = pair(cfg.seed, "c10-qv", 0, &gq);
    let x = ito_mckean(&b, &d, DELTA)?.total().clone();
    let (_, closed) = geometric_skew_solve(MU, SIGMA, 1.0, &x)?;
    let qv = quadratic_variation(&closed.map(f64::ln));
    let worst = [0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&t| {
            let k = gq.index_at_or_before(t);
            (qv.value(k) / (SIGMA * SIGMA * gq.time(k)) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Ok(vec![
        slope.with_samples(rows.len()),
        TestReport::at_most("log_price_qv", worst, tol.log_qv_rel).with_samples(1),
    ])
}

// ---------------------------------------------------------------------------
// C11

fn bits(p: &SamplePath) -> Vec<u64> {
    p.values().iter().map(|v| v.to_bits()).collect()
}

fn c11_uniqueness(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    const H: f64 = 0.1;
    let s = &cfg.sizes;
    let g = grid(s.c11_steps)?;
    let coeffs = CoeffSpec::linear(0.5, 0.3);
    let k = coeffs.lipschitz_constant();

    let run_once = || -> Result<Vec<Vec<u64>>> {
        let mut out = Vec::new();
        let batch = par_collect(20, |i| {
            reflected_problem(cfg.seed, "c11-rerun", i, &g, &coeffs, 1.0, Some(0.0))
        })?;
        for p in &batch {
            out.push(bits(&euler_solve(p)?));
        }
        for sol in picard_solve(&batch, 30, 0.0)?.solutions {
            out.push(bits(&sol));
        }
        for i in 0..5 {
            let (b, d) = pair(cfg.seed, "c11-rerun", i, &g);
            let st = RngStream::new(cfg.seed, "c11-rerun/skew").child(i as u64);
            out.push(bits(
                &construct_y_delta_1(
                    &b,
                    &d,
                    SkewParams {
                        alpha: 0.7,
                        delta: DELTA,
                    },
                    &st,
                )?
                .y,
            ));
        }
        Ok(out)
    };
    let first = run_once()?;
    let second = run_once()?;
    let mismatches = first.iter().zip(&second).filter(|(a, b)| a != b).count()
        + first.len().abs_diff(second.len());

    let rows = par_collect(s.c11_paths, |i| {
        let p = reflected_problem(cfg.seed, "c11", i, &g, &coeffs, 1.0, None)?;
        let plain =
            (euler_solve(&p)?.terminal() - euler_solve(&p.with_z0(1.0 + H))?.terminal()).powi(2);
        let pinned = SdeProblem {
            zeta: Some(0.0),
            ..p
        };
        let pin = (euler_solve(&pinned)?.terminal()
            - euler_solve(&pinned.with_z0(1.0 + H))?.terminal())
        .powi(2);
        Ok((plain, pin))
    })?;
    let a = gronwall_rate(k, g.horizon());
    let envelope = (a * g.horizon()).exp();
    let ms_plain = mean(rows.iter().map(|r| r.0));
    let ms_pin = mean(rows.iter().map(|r| r.1));
    let n = rows.len();
    Ok(vec![
        TestReport::at_most("bit_identical_reruns", mismatches as f64, 0.0)
            .with_samples(first.len()),
        TestReport::at_most("gronwall_mean_square", ms_plain, 3.0 * H * H * envelope)
            .with_samples(n)
            .with_details(format!("A = {a:.3}")),
        TestReport::at_most("gronwall_rms", ms_plain.sqrt(), envelope * H).with_samples(n),
        TestReport::at_most("gronwall_rms_pinned", ms_pin.sqrt(), envelope * H).with_samples(n),
    ])
}

// ---------------------------------------------------------------------------
// C12

fn c12_restart(cfg: &SuiteConfig) -> Result<Vec<TestReport>> {
    let s = &cfg.sizes;
    let g = grid(s.c12_steps)?;
    let coeffs = CoeffSpec::linear(0.5, 0.3);
    let rows = par_collect(s.c12_paths, |i| {
        let p = reflected_problem(cfg.seed, "c12", i, &g, &coeffs, 1.0, None)?;
        let x = euler_solve(&p)?;
        let gamma = p.h_mask.last_zero_map();
        Ok((
            eq11_residual_with(&p, &x, &gamma, 0)?,
            eq11_residual_with(&p, &x, &gamma, 1)?,
        ))
    })?;
    let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let missed = rows
        .iter()
        .filter(|r| r.1 <= cfg.tolerances.eq11_rel)
        .count();
    Ok(vec![
        TestReport::at_most("relative_residual", worst, cfg.tolerances.eq11_rel)
            .with_samples(rows.len()),
        TestReport::at_most("corrupted_gamma_detected_misses", missed as f64, 0.0)
            .with_samples(rows.len()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SuiteConfig {
        let mut cfg = SuiteConfig::fast_suite(7);
        cfg.sizes = Sizes {
            c1_paths: 1_000,
            c1_steps: 200,
            c2_paths: 200,
            c2_steps: 200,
            c2_qv_paths: 1,
            c2_qv_steps: 1_000,
            c3_paths: 200,
            c3_steps: 10,
            c4_paths: 100,
            c4_steps: 100,
            c4_agree_paths: 10,
            c5_paths: 4,
            c5_fine_steps: 256,
            c6_paths: 2,
            c6_steps: 200,
            c7_paths: 200,
            c7_steps: 50,
            c7_cor5_steps: 50,
            c7_gate_paths: 20,
            c8_paths: 4,
            c8_steps: 50,
            c9_paths: 10,
            c9_steps: 50,
            c10_paths: 10,
            c10_fine_log2: 12,
            c10_qv_steps: 1_000,
            c11_paths: 10,
            c11_steps: 50,
            c12_paths: 3,
            c12_steps: 100,
        };
        cfg
    }

    #[test]
    fn empty_config_gives_empty_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SuiteConfig::empty(1);
        cfg.out_dir = Some(dir.path().to_path_buf());
        let r = run_suite(&cfg).unwrap();
        assert!(r.pass && r.outcomes.is_empty());
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn unknown_test_is_rejected() {
        let mut cfg = SuiteConfig::empty(1);
        cfg.tests = vec!["C99".into()];
        assert!(run_suite(&cfg).is_err());
        assert!(criterion("c7").is_some());
    }

    #[test]
    fn every_criterion_runs_and_is_deterministic() {
        let cfg = tiny();
        let a = run_suite(&cfg).unwrap();
        let b = run_suite(&cfg).unwrap();
        assert_eq!(a.outcomes.len(), 12);
        assert_eq!(a.outcomes, b.outcomes);
        for o in &a.outcomes {
            assert!(!o.parts.is_empty(), "{}", o.id);
            assert!(
                o.parts.iter().all(|p| !p.name.ends_with("_panic")),
                "{}",
                o.summary_line()
            );
        }
    }

    #[test]
    fn bundle_files_are_byte_identical_across_runs() {
        let mut cfg = tiny();
        cfg.tests = vec!["C3".into(), "C12".into()];
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        cfg.out_dir = Some(d1.path().to_path_buf());
        run_suite(&cfg).unwrap();
        cfg.out_dir = Some(d2.path().to_path_buf());
        run_suite(&cfg).unwrap();
        for f in ["C3.json", "C12.json"] {
            assert_eq!(
                fs::read(d1.path().join(f)).unwrap(),
                fs::read(d2.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn panics_become_failures() {
        fn boom(_: &SuiteConfig) -> Result<Vec<TestReport>> {
            panic!("injected")
        }
        let c = Criterion {
            id: "X",
            title: "boom",
            run: boom,
        };
        let o = run_criterion(&c, &tiny());
        assert!(!o.report.pass);
        assert!(o.parts[0].details.contains("injected"));
    }
}
