use std::path::PathBuf;

use perturbed_iht::basin2d::{run_basin_study, BasinStudyConfig, BasinSummary};
use perturbed_iht::experiments::{run_cell, run_grid, GridConfig, MethodSummary};
use perturbed_iht::format::{cells_table, fixed_points_table, runs_table, settings_table, timings_table, Table};
use perturbed_iht::parametric::TrainConfig;
use perturbed_iht::render::{basin_map_svg, heatmap_file_name, heatmap_svg, Metric};
use perturbed_iht::solvers::{NoisyIhtConfig, StepSize};
use perturbed_iht::{EnsembleKind, Method, RngState};
use serde::Serialize;

use crate::config::FileConfig;
use crate::manifest::{OutDir, RunManifest};
use crate::{BasinArgs, CliError, CommonArgs, GridArgs, SolveArgs, SolverArgs};

const DEFAULT_OUT: &str = "piht-out";

fn usage(e: perturbed_iht::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: perturbed_iht::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn resolve_seed(common: &CommonArgs, file: &FileConfig) -> u64 {
    common.seed.or(file.seed).unwrap_or_else(|| {
        let seed = rand::random::<u64>();
        eprintln!("piht: no seed given, using generated seed {seed}");
        seed
    })
}

fn out_dir(common: &CommonArgs, file: &FileConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn pool(common: &CommonArgs, file: &FileConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.or(file.jobs).unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

fn solver_settings(a: &SolverArgs, file: &FileConfig) -> Result<(StepSize, NoisyIhtConfig, TrainConfig), CliError> {
    let tau = match (a.tau, &file.tau) {
        (Some(t), _) => t,
        (None, Some(t)) => t.step()?,
        (None, None) => StepSize::Auto,
    };
    let d = NoisyIhtConfig::default();
    let noisy = NoisyIhtConfig {
        rounds: a.rounds.or(file.rounds).unwrap_or(d.rounds),
        iters_per_round: a.iters_per_round.or(file.iters_per_round).unwrap_or(d.iters_per_round),
        sigma: a.sigma.or(file.sigma).unwrap_or(d.sigma),
        inner: d.inner,
    };
    let d = TrainConfig::default();
    let train = TrainConfig {
        momentum: a.momentum.or(file.momentum).unwrap_or(d.momentum),
        learning_rate: a.learning_rate.or(file.learning_rate).unwrap_or(d.learning_rate),
        iterations: a.train_iterations.or(file.train_iterations).unwrap_or(d.iterations),
        dropout_rate: a.dropout_rate.or(file.dropout_rate).unwrap_or(d.dropout_rate),
        subgradient: a.subgradient.or(file.subgradient).unwrap_or(d.subgradient),
    };
    Ok((tau, noisy, train))
}

#[derive(Serialize)]
struct SolveOutput {
    manifest: RunManifest,
    method: Method,
    ensemble: EnsembleKind,
    m: usize,
    n: usize,
    mu: f64,
    s: usize,
    tau: f64,
    objective: f64,
    support_size: usize,
    support: Vec<usize>,
    rel_recovery_error: f64,
    iterations: usize,
}

pub fn solve(common: &CommonArgs, a: &SolveArgs) -> Result<(), CliError> {
    let file = FileConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common, &file);
    let (tau, noisy, train) = solver_settings(&a.solver, &file)?;
    let m = a.m.or(file.m).unwrap_or(100);
    let mu = a.mu.or(file.mu).unwrap_or(0.05);
    let method = a.method.or(file.method).unwrap_or(Method::Iht);
    let cfg = GridConfig {
        n: a.n.or(file.n).unwrap_or(200),
        m_values: vec![m],
        mu_values: vec![mu],
        runs_per_cell: 1,
        ensemble: a.ensemble.or(file.ensemble).unwrap_or(EnsembleKind::Gaussian),
        methods: vec![method],
        seed,
        tau,
        noisy,
        train,
        ..GridConfig::default()
    };
    cfg.validate().map_err(usage)?;

    let cell = pool(common, &file)?.install(|| run_cell(&cfg, m, mu, 0)).map_err(runtime)?;
    let (row, result) = (&cell.rows[0], &cell.results[0]);
    if row.train_aborted {
        return Err(CliError::Runtime(
            "parametric training diverged (non-finite loss); try a smaller learning rate".into(),
        ));
    }
    let out = SolveOutput {
        manifest: RunManifest::new("solve", seed, &cfg, Vec::new()),
        method,
        ensemble: cfg.ensemble,
        m,
        n: cfg.n,
        mu,
        s: row.s,
        tau: result.tau,
        objective: result.objective,
        support_size: result.support.len(),
        support: result.support.clone(),
        rel_recovery_error: row.rel_recovery_error,
        iterations: row.iterations,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("summary serializes"));
    Ok(())
}

#[derive(Serialize)]
struct GridSummary<'a> {
    manifest: &'a RunManifest,
    cells: usize,
    runs: usize,
    train_aborted_runs: usize,
    /// Equal-weight averages over cells.
    overall: &'a [MethodSummary],
}

pub fn grid(common: &CommonArgs, a: &GridArgs) -> Result<(), CliError> {
    let file = FileConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common, &file);
    let (tau, noisy, train) = solver_settings(&a.solver, &file)?;
    let d = GridConfig::default();
    let cfg = GridConfig {
        n: a.n.or(file.n).unwrap_or(d.n),
        m_values: a.m_values.clone().or(file.m_values.clone()).unwrap_or(d.m_values),
        mu_values: a.mu_values.clone().or(file.mu_values.clone()).unwrap_or(d.mu_values),
        runs_per_cell: a.runs.or(file.runs).unwrap_or(d.runs_per_cell),
        ensemble: a.ensemble.or(file.ensemble).unwrap_or(d.ensemble),
        methods: a.methods.clone().or(file.methods.clone()).unwrap_or(d.methods),
        failure_threshold: a.failure_threshold.or(file.failure_threshold).unwrap_or(d.failure_threshold),
        seed,
        tau,
        noisy,
        train,
    };
    cfg.validate().map_err(usage)?;
    let out = OutDir::prepare(&out_dir(common, &file))?;

    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut outputs: Vec<String> = ["runs.csv", "cells.csv", "timings.csv", "summary.json"]
        .map(String::from)
        .to_vec();
    for &method in &methods {
        for metric in Metric::ALL {
            outputs.push(heatmap_file_name(method, metric));
        }
    }
    let manifest = RunManifest::new("grid", seed, &cfg, outputs);

    let res = pool(common, &file)?.install(|| run_grid(&cfg)).map_err(runtime)?;

    let with_manifest = |mut t: Table| {
        t.comments = manifest.comment_lines();
        t.to_text()
    };
    out.write("runs.csv", &with_manifest(runs_table(&res.rows)))?;
    let cells_text = with_manifest(cells_table(&res.metrics.cells));
    out.write("cells.csv", &cells_text)?;
    out.write("timings.csv", &with_manifest(timings_table(&res.timings)))?;
    let summary = GridSummary {
        manifest: &manifest,
        cells: cfg.m_values.len() * cfg.mu_values.len(),
        runs: res.rows.len(),
        train_aborted_runs: res.rows.iter().filter(|r| r.train_aborted).count(),
        overall: &res.metrics.overall,
    };
    out.write("summary.json", &json(&summary))?;
    for &method in &methods {
        for metric in Metric::ALL {
            let svg = heatmap_svg(&cells_text, method, metric).map_err(runtime)?;
            out.write(&heatmap_file_name(method, metric), &svg)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BasinConfigEcho<'a> {
    study: &'a BasinStudyConfig,
    render: &'a [usize],
}

#[derive(Serialize)]
struct BasinSummaryOut<'a> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    summary: &'a BasinSummary,
}

pub fn basin2d(common: &CommonArgs, a: &BasinArgs) -> Result<(), CliError> {
    let file = FileConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common, &file);
    let d = BasinStudyConfig::default();
    let cfg = BasinStudyConfig {
        num_settings: a.num_settings.or(file.num_settings).unwrap_or(d.num_settings),
        grid_points_per_axis: a.grid_points.or(file.grid_points).unwrap_or(d.grid_points_per_axis),
        lower: a.lower.or(file.lower).unwrap_or(d.lower),
        upper: a.upper.or(file.upper).unwrap_or(d.upper),
        step_scale: a.step_scale.or(file.step_scale).unwrap_or(d.step_scale),
        step_norm: a.step_norm.or(file.step_norm).unwrap_or(d.step_norm),
        max_iters: a.max_iters.or(file.max_iters).unwrap_or(d.max_iters),
        fixed_point_tol: a.fixed_point_tol.or(file.fixed_point_tol).unwrap_or(d.fixed_point_tol),
        cluster_tol: a.cluster_tol.or(file.cluster_tol).unwrap_or(d.cluster_tol),
    };
    cfg.validate().map_err(usage)?;
    let mut render = a.render.clone().or(file.render.clone()).unwrap_or_default();
    render.sort_unstable();
    render.dedup();
    if let Some(bad) = render.iter().find(|&&id| id >= cfg.num_settings) {
        return Err(CliError::Usage(format!(
            "render id {bad} is out of range for {} settings",
            cfg.num_settings
        )));
    }
    let out = OutDir::prepare(&out_dir(common, &file))?;

    let mut outputs: Vec<String> = ["summary.json", "settings.csv", "fixed_points.csv"]
        .map(String::from)
        .to_vec();
    for id in &render {
        outputs.push(format!("labels_{id}.txt"));
        outputs.push(format!("basin_map_{id}.svg"));
    }
    let echo = BasinConfigEcho {
        study: &cfg,
        render: &render,
    };
    let manifest = RunManifest::new("basin2d", seed, &echo, outputs);

    let study = pool(common, &file)?
        .install(|| run_basin_study(&cfg, &RngState::new(seed), &render))
        .map_err(runtime)?;

    let with_manifest = |mut t: Table| {
        t.comments = manifest.comment_lines();
        t.to_text()
    };
    out.write(
        "summary.json",
        &json(&BasinSummaryOut {
            manifest: &manifest,
            summary: &study.summary,
        }),
    )?;
    out.write("settings.csv", &with_manifest(settings_table(&study.rows)))?;
    let fp_text = with_manifest(fixed_points_table(&study.rows, &study.fixed_points));
    out.write("fixed_points.csv", &fp_text)?;
    let preamble: String = manifest.comment_lines().iter().map(|l| format!("# {l}\n")).collect();
    for report in &study.reports {
        let id = report.setting_id;
        let labels = format!("{preamble}{}", report.label_grid_text());
        out.write(&format!("labels_{id}.txt"), &labels)?;
        let svg = basin_map_svg(&labels, &fp_text, id, cfg.lower, cfg.upper).map_err(runtime)?;
        out.write(&format!("basin_map_{id}.svg"), &svg)?;
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary serializes");
    s.push('\n');
    s
}
