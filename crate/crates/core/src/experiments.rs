//! Grid sweep over the number of measurements `m` and the relative sparsity
//! `mu`, comparing plain IHT, noisy IHT and parametric IHT.
//!
//! Every (m, mu, run) triple owns an independent RNG stream, and results are
//! reduced in a fixed order, so the output does not depend on how many
//! worker threads ran the cells.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::parametric::{train, TrainConfig};
use crate::problems::{make_instance, EnsembleKind, MatrixEnsemble, ProblemInstance};
use crate::rng::RngState;
use crate::solvers::{refine, run_iht, run_noisy_iht, IhtConfig, Method, NoisyIhtConfig, SolverResult, StepSize};

/// Stream consumers below a cell's RNG path.
const STREAM_INSTANCE: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
    pub m_values: Vec<usize>,
    pub mu_values: Vec<f64>,
    pub runs_per_cell: usize,
    pub ensemble: EnsembleKind,
    pub methods: Vec<Method>,
    pub failure_threshold: f64,
    pub seed: u64,
    pub tau: StepSize,
    pub noisy: NoisyIhtConfig,
    pub train: TrainConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 200,
            m_values: vec![50, 60, 70, 80, 90, 100, 110, 120],
            mu_values: vec![0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2],
            runs_per_cell: 20,
            ensemble: EnsembleKind::Gaussian,
            methods: Method::ALL.to_vec(),
            failure_threshold: 0.03,
            seed: 0,
            tau: StepSize::Auto,
            noisy: NoisyIhtConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.mu_values.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("m_values, mu_values and methods must be nonempty"));
        }
        if self.runs_per_cell == 0 {
            return Err(Error::invalid("runs_per_cell must be at least 1"));
        }
        if !(self.failure_threshold > 0.0) {
            return Err(Error::invalid("failure threshold must be positive"));
        }
        if let Some(mu) = self.mu_values.iter().find(|mu| !(**mu > 0.0 && **mu <= 1.0)) {
            return Err(Error::invalid(format!("relative sparsity {mu} must lie in (0, 1]")));
        }
        for &m in &self.m_values {
            MatrixEnsemble::new(self.ensemble, m, self.n)?;
        }
        if let StepSize::Fixed(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("step size {t} must be positive")));
            }
        }
        self.noisy.validate()?;
        self.train.validate()
    }

    /// Plain IHT gets the same total budget as all noisy rounds together.
    pub fn iht_iterations(&self) -> usize {
        self.noisy.total_iterations()
    }

    pub fn cell_stream(&self, m: usize, mu: f64, run: usize) -> RngState {
        RngState::new(self.seed).descend(&[m as u64, mu.to_bits(), run as u64])
    }

    pub fn instance(&self, m: usize, mu: f64, run: usize) -> Result<ProblemInstance> {
        let e = MatrixEnsemble::new(self.ensemble, m, self.n)?;
        make_instance(&e, mu, &self.cell_stream(m, mu, run).child(STREAM_INSTANCE))
    }

    fn wants(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }
}

/// One method on one instance, after refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: Method,
    pub m: usize,
    pub mu: f64,
    pub s: usize,
    pub run: usize,
    pub objective_error: f64,
    pub failure: bool,
    pub rel_recovery_error: f64,
    pub iterations: usize,
    /// Training diverged; the row carries the refined warm start instead.
    pub train_aborted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub m: usize,
    pub mu: f64,
    pub run: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct CellRun {
    pub instance: ProblemInstance,
    /// Refined results in method order.
    pub results: Vec<SolverResult>,
    pub rows: Vec<RunRow>,
    pub timings: Vec<TimingRow>,
}

/// Runs every configured method on instance `(m, mu, run)`.
pub fn run_cell(cfg: &GridConfig, m: usize, mu: f64, run: usize) -> Result<CellRun> {
    let p = cfg.instance(m, mu, run)?;
    let stream = cfg.cell_stream(m, mu, run);
    // One spectral estimate per instance, shared by every method.
    let tau = cfg.tau.resolve(p.a())?;
    let inner = IhtConfig {
        tau: StepSize::Fixed(tau),
        ..cfg.noisy.inner
    };

    let mut raw: Vec<(Method, SolverResult, bool, f64)> = Vec::new();

    if cfg.wants(Method::Iht) {
        let t = Instant::now();
        let iht_cfg = IhtConfig {
            max_iters: cfg.iht_iterations(),
            ..inner
        };
        let r = run_iht(&p, &iht_cfg, &DenseVector::zeros(p.n()))?;
        raw.push((Method::Iht, r, false, elapsed_ms(t)));
    }

    if cfg.wants(Method::Noisy) || cfg.wants(Method::Parametric) {
        let t = Instant::now();
        let noisy_cfg = NoisyIhtConfig { inner, ..cfg.noisy };
        let warm = run_noisy_iht(&p, &noisy_cfg, &stream.child(STREAM_NOISE))?;
        let noisy_ms = elapsed_ms(t);

        if cfg.wants(Method::Parametric) {
            let t = Instant::now();
            match train(&p, &warm.u, &cfg.train, tau, &stream.child(STREAM_DROPOUT)) {
                Ok(out) => raw.push((Method::Parametric, out.result, false, elapsed_ms(t))),
                Err(Error::NonFiniteLoss { .. }) => {
                    let mut fallback = warm.clone();
                    fallback.method = Method::Parametric;
                    raw.push((Method::Parametric, fallback, true, elapsed_ms(t)));
                }
                Err(e) => return Err(e),
            }
        }
        if cfg.wants(Method::Noisy) {
            raw.push((Method::Noisy, warm, false, noisy_ms));
        }
    }
    raw.sort_by_key(|(method, ..)| *method);

    let mut results = Vec::with_capacity(raw.len());
    let mut rows = Vec::with_capacity(raw.len());
    let mut timings = Vec::with_capacity(raw.len());
    for (method, r, aborted, wall_ms) in raw {
        let refined = refine(&p, &r)?;
        rows.push(RunRow {
            method,
            m,
            mu,
            s: p.s(),
            run,
            objective_error: refined.objective,
            failure: refined.objective > cfg.failure_threshold,
            rel_recovery_error: refined.relative_recovery_error(&p).unwrap_or(f64::NAN),
            iterations: refined.iterations_run,
            train_aborted: aborted,
        });
        timings.push(TimingRow {
            method,
            m,
            mu,
            run,
            wall_ms,
        });
        results.push(refined);
    }
    Ok(CellRun {
        instance: p,
        results,
        rows,
        timings,
    })
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub method: Method,
    pub m: usize,
    pub mu: f64,
    pub s: usize,
    pub runs: usize,
    pub mean_objective_error: f64,
    pub failure_count: usize,
    pub mean_relative_recovery_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Equal-weight mean of the per-cell mean objective errors.
    pub avg_objective_error: f64,
    pub avg_failure_count: f64,
    pub avg_relative_recovery_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMetrics {
    pub cells: Vec<CellMetrics>,
    pub overall: Vec<MethodSummary>,
}

impl GridMetrics {
    pub fn cell(&self, method: Method, m: usize, mu: f64) -> Option<&CellMetrics> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.m == m && c.mu == mu)
    }

    pub fn overall(&self, method: Method) -> Option<&MethodSummary> {
        self.overall.iter().find(|o| o.method == method)
    }
}

#[derive(Clone, Debug)]
pub struct GridOutput {
    /// Sorted by (method, m, mu, run) in configuration order.
    pub rows: Vec<RunRow>,
    pub timings: Vec<TimingRow>,
    pub metrics: GridMetrics,
}

/// Runs all cells on the current rayon pool and aggregates them.
pub fn run_grid(cfg: &GridConfig) -> Result<GridOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, f64, usize)> = cfg
        .m_values
        .iter()
        .flat_map(|&m| {
            cfg.mu_values
                .iter()
                .flat_map(move |&mu| (0..cfg.runs_per_cell).map(move |r| (m, mu, r)))
        })
        .collect();
    let cells: Vec<Result<CellRun>> = jobs
        .par_iter()
        .map(|&(m, mu, r)| run_cell(cfg, m, mu, r))
        .collect();

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for c in cells {
        let c = c?;
        rows.extend(c.rows);
        timings.extend(c.timings);
    }
    let key = |method: Method, m: usize, mu: f64, run: usize| {
        (
            method,
            cfg.m_values.iter().position(|x| *x == m),
            cfg.mu_values.iter().position(|x| *x == mu),
            run,
        )
    };
    rows.sort_by_key(|r| key(r.method, r.m, r.mu, r.run));
    timings.sort_by_key(|t| key(t.method, t.m, t.mu, t.run));
    let metrics = aggregate(cfg, &rows);
    Ok(GridOutput {
        rows,
        timings,
        metrics,
    })
}

/// Per-cell means and counts plus equal-weight averages over cells. Pure in
/// the rows, so other thresholds can be re-evaluated from stored rows.
pub fn aggregate(cfg: &GridConfig, rows: &[RunRow]) -> GridMetrics {
    let mut methods: Vec<Method> = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut cells = Vec::new();
    let mut overall = Vec::new();
    for &method in &methods {
        let mut sums = (0.0, 0.0, 0.0);
        let mut count = 0usize;
        for &m in &cfg.m_values {
            for &mu in &cfg.mu_values {
                let runs: Vec<&RunRow> = rows
                    .iter()
                    .filter(|r| r.method == method && r.m == m && r.mu == mu)
                    .collect();
                if runs.is_empty() {
                    continue;
                }
                let k = runs.len() as f64;
                let c = CellMetrics {
                    method,
                    m,
                    mu,
                    s: runs[0].s,
                    runs: runs.len(),
                    mean_objective_error: runs.iter().map(|r| r.objective_error).sum::<f64>() / k,
                    failure_count: runs
                        .iter()
                        .filter(|r| r.objective_error > cfg.failure_threshold)
                        .count(),
                    mean_relative_recovery_error: runs.iter().map(|r| r.rel_recovery_error).sum::<f64>() / k,
                };
                sums.0 += c.mean_objective_error;
                sums.1 += c.failure_count as f64;
                sums.2 += c.mean_relative_recovery_error;
                count += 1;
                cells.push(c);
            }
        }
        if count > 0 {
            let k = count as f64;
            overall.push(MethodSummary {
                method,
                avg_objective_error: sums.0 / k,
                avg_failure_count: sums.1 / k,
                avg_relative_recovery_error: sums.2 / k,
            });
        }
    }
    GridMetrics { cells, overall }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GridConfig {
        GridConfig {
            n: 40,
            m_values: vec![20],
            mu_values: vec![0.1],
            runs_per_cell: 2,
            noisy: NoisyIhtConfig {
                iters_per_round: 60,
                ..NoisyIhtConfig::default()
            },
            train: TrainConfig {
                iterations: 50,
                ..TrainConfig::default()
            },
            seed: 5,
            ..GridConfig::default()
        }
    }

    #[test]
    fn fairness_budget() {
        let cfg = GridConfig::default();
        assert_eq!(cfg.iht_iterations(), 3000);
        let c = run_cell(&tiny(), 20, 0.1, 0).unwrap();
        let iters: Vec<usize> = c.rows.iter().map(|r| r.iterations).collect();
        assert_eq!(iters, vec![300, 300, 50]);
    }

    #[test]
    fn methods_share_the_instance_and_warm_start() {
        let cfg = tiny();
        let c = run_cell(&cfg, 20, 0.1, 1).unwrap();
        assert_eq!(c.instance, cfg.instance(20, 0.1, 1).unwrap());
        assert_eq!(c.rows.iter().map(|r| r.method).collect::<Vec<_>>(), Method::ALL.to_vec());

        // Parametric alone must see the same noisy warm start.
        let only_param = GridConfig {
            methods: vec![Method::Parametric],
            ..cfg.clone()
        };
        let c2 = run_cell(&only_param, 20, 0.1, 1).unwrap();
        assert_eq!(c2.results[0], c.results[2]);
        assert!(c.results.iter().all(|r| r.refined && r.support.len() <= c.instance.s()));
    }

    #[test]
    fn failure_flag_follows_threshold() {
        let c = run_cell(&tiny(), 20, 0.1, 0).unwrap();
        for r in &c.rows {
            assert_eq!(r.failure, r.objective_error > 0.03);
            assert!(r.objective_error >= 0.0);
        }
    }

    #[test]
    fn singleton_grid_equals_its_row() {
        let cfg = GridConfig {
            runs_per_cell: 1,
            ..tiny()
        };
        let out = run_grid(&cfg).unwrap();
        let cell = run_cell(&cfg, 20, 0.1, 0).unwrap();
        assert_eq!(out.rows, cell.rows);
        for r in &cell.rows {
            let c = out.metrics.cell(r.method, 20, 0.1).unwrap();
            assert_eq!(c.mean_objective_error, r.objective_error);
            assert_eq!(c.failure_count, usize::from(r.failure));
            let o = out.metrics.overall(r.method).unwrap();
            assert_eq!(o.avg_objective_error, r.objective_error);
        }
    }

    #[test]
    fn grid_is_reproducible_and_aggregates_consistently() {
        let cfg = GridConfig {
            m_values: vec![20, 30],
            mu_values: vec![0.05, 0.1],
            ..tiny()
        };
        let a = run_grid(&cfg).unwrap();
        let b = run_grid(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.rows.len(), 3 * 2 * 2 * 2);
        for o in &a.metrics.overall {
            let cells: Vec<_> = a.metrics.cells.iter().filter(|c| c.method == o.method).collect();
            let mean = cells.iter().map(|c| c.mean_objective_error).sum::<f64>() / cells.len() as f64;
            assert!((mean - o.avg_objective_error).abs() <= 1e-12);
            for c in cells {
                assert!(c.failure_count <= cfg.runs_per_cell);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = GridConfig {
            m_values: vec![],
            ..tiny()
        };
        assert!(bad.validate().is_err());
        let bad = GridConfig {
            runs_per_cell: 0,
            ..tiny()
        };
        assert!(bad.validate().is_err());
        let bad = GridConfig {
            ensemble: EnsembleKind::SubsampledDct,
            m_values: vec![50],
            ..tiny()
        };
        assert!(bad.validate().is_err());
    }
}
