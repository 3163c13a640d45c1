//! Basins of attraction of IHT for two-dimensional, one-sparse problems.
//!
//! IHT is started from every point of a regular grid. Limits are clustered
//! into distinct fixed points, and every start is labeled by the fixed point
//! it reaches. When a setting has exactly two fixed points inside the grid
//! domain, two distances are recorded: from the global minimizer to the
//! nearest start that ends at the local one, and from the local minimizer to
//! the nearest start that ends at the global one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{gen_basin2d_setting, ProblemInstance};
use crate::rng::RngState;
use crate::solvers::{affine_step, residual_sq};

/// Relative objective gap below which two fixed points count as tied.
pub const TIE_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepNorm {
    /// Largest singular value.
    Spectral,
    Frobenius,
}

impl std::str::FromStr for StepNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "frobenius" => Ok(Self::Frobenius),
            other => Err(Error::invalid(format!("unknown step norm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinStudyConfig {
    pub num_settings: usize,
    pub grid_points_per_axis: usize,
    pub lower: f64,
    pub upper: f64,
    /// IHT step is `step_scale / ‖A‖²` with the norm chosen by `step_norm`.
    pub step_scale: f64,
    pub step_norm: StepNorm,
    pub max_iters: usize,
    pub fixed_point_tol: f64,
    pub cluster_tol: f64,
}

impl Default for BasinStudyConfig {
    fn default() -> Self {
        Self {
            num_settings: 1000,
            grid_points_per_axis: 81,
            lower: -1.0,
            upper: 1.0,
            step_scale: 0.05,
            step_norm: StepNorm::Spectral,
            max_iters: 20_000,
            fixed_point_tol: 1e-10,
            cluster_tol: 1e-6,
        }
    }
}

impl BasinStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_axis < 2 {
            return Err(Error::invalid("grid needs at least two points per axis"));
        }
        if !(self.cluster_tol > 0.0) {
            return Err(Error::invalid("cluster tolerance must be positive"));
        }
        if !(self.lower < self.upper) {
            return Err(Error::invalid("grid bounds must satisfy lower < upper"));
        }
        if !(self.step_scale > 0.0) || self.max_iters == 0 {
            return Err(Error::invalid("step scale and iteration budget must be positive"));
        }
        Ok(())
    }

    pub fn grid_coord(&self, i: usize) -> f64 {
        let g = self.grid_points_per_axis;
        if i + 1 == g {
            return self.upper;
        }
        self.lower + (self.upper - self.lower) * i as f64 / (g - 1) as f64
    }

    /// Start point for grid index `k = i · G + j`.
    pub fn start(&self, k: usize) -> [f64; 2] {
        let g = self.grid_points_per_axis;
        [self.grid_coord(k / g), self.grid_coord(k % g)]
    }

    fn in_domain(&self, x: [f64; 2]) -> bool {
        x.iter().all(|v| (self.lower..=self.upper).contains(v))
    }

    pub fn step_size(&self, p: &ProblemInstance) -> Result<f64> {
        let norm_sq = match self.step_norm {
            StepNorm::Spectral => crate::linalg::spectral_norm_sq_default(p.a()),
            StepNorm::Frobenius => p.a().frobenius_norm_sq(),
        };
        if norm_sq <= 0.0 {
            return Err(Error::invalid("step size needs a nonzero matrix"));
        }
        Ok(self.step_scale / norm_sq)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub location: [f64; 2],
    pub objective: f64,
    pub is_global: bool,
    pub in_domain: bool,
    /// Number of grid starts converging here.
    pub basin_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinDistances {
    pub global_index: usize,
    pub local_index: usize,
    pub global_to_local_region: f64,
    pub local_to_global_region: f64,
    /// Grid indices of the starts realizing the two distances.
    pub global_to_local_witness: usize,
    pub local_to_global_witness: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub setting_id: usize,
    pub tau: f64,
    pub grid_points_per_axis: usize,
    pub fixed_points: Vec<FixedPoint>,
    /// Fixed-point index per grid start, `None` when unconverged.
    pub labels: Vec<Option<u32>>,
    pub unconverged: usize,
    /// Exactly two fixed points, both inside the domain.
    pub two_minima: bool,
    /// Present for two-minima settings without an objective tie.
    pub distances: Option<BasinDistances>,
}

impl BasinReport {
    /// Label grid as text: one line per first-coordinate index, labels
    /// comma-separated, `-1` for unconverged starts.
    pub fn label_grid_text(&self) -> String {
        let g = self.grid_points_per_axis;
        let mut out = String::with_capacity(self.labels.len() * 2);
        for row in self.labels.chunks(g) {
            let line: Vec<String> = row
                .iter()
                .map(|l| l.map_or_else(|| "-1".to_string(), |v| v.to_string()))
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn row(&self) -> SettingRow {
        SettingRow {
            setting_id: self.setting_id,
            tau: self.tau,
            num_fixed_points: self.fixed_points.len(),
            num_in_domain: self.fixed_points.iter().filter(|p| p.in_domain).count(),
            two_minima: self.two_minima,
            unconverged: self.unconverged,
            d_global_to_local_region: self.distances.as_ref().map(|d| d.global_to_local_region),
            d_local_to_global_region: self.distances.as_ref().map(|d| d.local_to_global_region),
        }
    }
}

/// One line of the per-setting table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingRow {
    pub setting_id: usize,
    pub tau: f64,
    pub num_fixed_points: usize,
    pub num_in_domain: usize,
    pub two_minima: bool,
    pub unconverged: usize,
    pub d_global_to_local_region: Option<f64>,
    pub d_local_to_global_region: Option<f64>,
}

/// IHT specialized to `n = 2`, `s = 1`. Evaluates the same affine form and
/// tie rule as [`crate::solvers::run_iht`], so limits agree bit for bit.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Iht2 {
    w: [f64; 4],
    b: [f64; 2],
}

impl Iht2 {
    pub(crate) fn new(p: &ProblemInstance, tau: f64) -> Self {
        let (w, b) = affine_step(p.a(), p.f(), tau);
        let w = w.data();
        Self {
            w: [w[0], w[1], w[2], w[3]],
            b: [b[0], b[1]],
        }
    }

    #[inline]
    pub(crate) fn step(&self, u: [f64; 2]) -> [f64; 2] {
        let mut z0 = 0.0;
        z0 += self.w[0] * u[0];
        z0 += self.w[1] * u[1];
        let mut z1 = 0.0;
        z1 += self.w[2] * u[0];
        z1 += self.w[3] * u[1];
        let z0 = z0 + self.b[0];
        let z1 = z1 + self.b[1];
        if z0.abs() >= z1.abs() {
            [z0, 0.0]
        } else {
            [0.0, z1]
        }
    }

    /// Limit from `start`, or `None` if `max_iters` runs out first.
    pub(crate) fn limit(&self, start: [f64; 2], max_iters: usize, tol: f64) -> Option<([f64; 2], usize)> {
        let mut u = start;
        for k in 1..=max_iters {
            let next = self.step(u);
            let moved = (next[0] - u[0]).abs().max((next[1] - u[1]).abs());
            u = next;
            if moved <= tol {
                return Some((u, k));
            }
        }
        None
    }
}

pub fn run_basin_setting(p: &ProblemInstance, cfg: &BasinStudyConfig, setting_id: usize) -> Result<BasinReport> {
    cfg.validate()?;
    if p.n() != 2 || p.m() != 2 || p.s() != 1 {
        return Err(Error::invalid(format!(
            "basin study needs a 2 × 2 problem with s = 1, got {} × {} with s = {}",
            p.m(),
            p.n(),
            p.s()
        )));
    }
    let tau = cfg.step_size(p)?;
    let iht = Iht2::new(p, tau);
    let g = cfg.grid_points_per_axis;

    let limits: Vec<Option<[f64; 2]>> = (0..g * g)
        .into_par_iter()
        .map(|k| iht.limit(cfg.start(k), cfg.max_iters, cfg.fixed_point_tol).map(|(u, _)| u))
        .collect();

    let mut fixed_points: Vec<FixedPoint> = Vec::new();
    let mut labels = Vec::with_capacity(limits.len());
    let mut unconverged = 0;
    for lim in &limits {
        let Some(u) = lim else {
            labels.push(None);
            unconverged += 1;
            continue;
        };
        let found = fixed_points.iter().position(|fp| {
            (fp.location[0] - u[0]).abs().max((fp.location[1] - u[1]).abs()) <= cfg.cluster_tol
        });
        let idx = match found {
            Some(i) => i,
            None => {
                fixed_points.push(FixedPoint {
                    location: *u,
                    objective: residual_sq(p.a(), u, p.f()),
                    is_global: false,
                    in_domain: cfg.in_domain(*u),
                    basin_size: 0,
                });
                fixed_points.len() - 1
            }
        };
        fixed_points[idx].basin_size += 1;
        labels.push(Some(idx as u32));
    }

    let best = fixed_points.iter().map(|fp| fp.objective).fold(f64::INFINITY, f64::min);
    let mut tied = 0;
    for fp in &mut fixed_points {
        if fp.objective - best <= TIE_RTOL * best.abs().max(f64::MIN_POSITIVE) {
            fp.is_global = true;
            tied += 1;
        }
    }

    let two_minima = fixed_points.len() == 2 && fixed_points.iter().all(|fp| fp.in_domain);
    let distances = if two_minima && tied == 1 {
        let gi = fixed_points.iter().position(|fp| fp.is_global).unwrap_or(0);
        let li = 1 - gi;
        let (d_gl, w_gl) = nearest_start(cfg, &labels, li, fixed_points[gi].location);
        let (d_lg, w_lg) = nearest_start(cfg, &labels, gi, fixed_points[li].location);
        Some(BasinDistances {
            global_index: gi,
            local_index: li,
            global_to_local_region: d_gl,
            local_to_global_region: d_lg,
            global_to_local_witness: w_gl,
            local_to_global_witness: w_lg,
        })
    } else {
        None
    };

    Ok(BasinReport {
        setting_id,
        tau,
        grid_points_per_axis: g,
        fixed_points,
        labels,
        unconverged,
        two_minima,
        distances,
    })
}

/// Closest grid start labeled `label` to `point`; first index wins ties.
fn nearest_start(cfg: &BasinStudyConfig, labels: &[Option<u32>], label: usize, point: [f64; 2]) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for (k, l) in labels.iter().enumerate() {
        if *l != Some(label as u32) {
            continue;
        }
        let x = cfg.start(k);
        let d = (x[0] - point[0]).hypot(x[1] - point[1]);
        if d < best.0 {
            best = (d, k);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinSummary {
    pub num_settings: usize,
    pub two_minima_count: usize,
    /// Settings contributing to the mean distances (two minima, no tie).
    pub distance_count: usize,
    pub mean_dist_global_to_local_region: Option<f64>,
    pub mean_dist_local_to_global_region: Option<f64>,
    pub unconverged_starts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinStudy {
    pub summary: BasinSummary,
    pub rows: Vec<SettingRow>,
    /// Fixed points of every setting, aligned with `rows`.
    pub fixed_points: Vec<Vec<FixedPoint>>,
    /// Full reports for the settings requested via `keep`.
    pub reports: Vec<BasinReport>,
}

/// Runs `cfg.num_settings` random settings; setting `i` is drawn from
/// `rng.child(i)`.
pub fn run_basin_study(cfg: &BasinStudyConfig, rng: &RngState, keep: &[usize]) -> Result<BasinStudy> {
    cfg.validate()?;
    type Outcome = (SettingRow, Vec<FixedPoint>, Option<BasinReport>);
    let outcomes: Vec<Result<Outcome>> = (0..cfg.num_settings)
        .into_par_iter()
        .map(|i| {
            let p = gen_basin2d_setting(&rng.child(i as u64))?;
            let report = run_basin_setting(&p, cfg, i)?;
            let row = report.row();
            let fps = report.fixed_points.clone();
            Ok((row, fps, keep.contains(&i).then_some(report)))
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.num_settings);
    let mut fixed_points = Vec::with_capacity(cfg.num_settings);
    let mut reports = Vec::new();
    for o in outcomes {
        let (row, fps, report) = o?;
        rows.push(row);
        fixed_points.push(fps);
        reports.extend(report);
    }
    Ok(BasinStudy {
        summary: summarize(&rows),
        rows,
        fixed_points,
        reports,
    })
}

/// Ordered reduction of per-setting rows.
pub fn summarize(rows: &[SettingRow]) -> BasinSummary {
    let mut sum_gl = 0.0;
    let mut sum_lg = 0.0;
    let mut count = 0;
    for r in rows {
        if let (Some(a), Some(b)) = (r.d_global_to_local_region, r.d_local_to_global_region) {
            sum_gl += a;
            sum_lg += b;
            count += 1;
        }
    }
    let mean = |s: f64| (count > 0).then(|| s / count as f64);
    BasinSummary {
        num_settings: rows.len(),
        two_minima_count: rows.iter().filter(|r| r.two_minima).count(),
        distance_count: count,
        mean_dist_global_to_local_region: mean(sum_gl),
        mean_dist_local_to_global_region: mean(sum_lg),
        unconverged_starts: rows.iter().map(|r| r.unconverged).sum(),
    }
}
