//! Hard thresholding, IHT, noisy IHT and least-squares refinement.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, least_squares_on_support, spectral_norm_sq_default, DenseMatrix, DenseVector};
use crate::problems::ProblemInstance;
use crate::rng::RngState;

/// Fraction of `1/‖A‖₂²` used when the step size is left on `auto`.
pub const AUTO_STEP_FACTOR: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iht,
    Noisy,
    Parametric,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Iht, Method::Noisy, Method::Parametric];

    pub fn name(self) -> &'static str {
        match self {
            Method::Iht => "iht",
            Method::Noisy => "noisy",
            Method::Parametric => "parametric",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iht" => Ok(Method::Iht),
            "noisy" | "noisy_iht" => Ok(Method::Noisy),
            "parametric" | "parametric_iht" => Ok(Method::Parametric),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub method: Method,
    pub u: DenseVector,
    /// Ascending indices of the nonzero entries of `u`.
    pub support: Vec<usize>,
    /// `‖A u − f‖²`.
    pub objective: f64,
    pub iterations_run: usize,
    pub tau: f64,
    pub refined: bool,
    /// Objective after each iterate, starting with the initial point; only
    /// filled when [`IhtConfig::record_trace`] is set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

impl SolverResult {
    pub(crate) fn from_iterate(p: &ProblemInstance, method: Method, u: DenseVector, iterations_run: usize, tau: f64) -> Result<Self> {
        let objective = objective(p.a(), &u, p.f())?;
        Ok(Self {
            method,
            support: u.support(),
            u,
            objective,
            iterations_run,
            tau,
            refined: false,
            objective_trace: Vec::new(),
        })
    }

    /// `‖u − u_gen‖² / ‖u_gen‖²`, when the instance carries its generator.
    pub fn relative_recovery_error(&self, p: &ProblemInstance) -> Option<f64> {
        let g = p.u_gen()?;
        let diff: f64 = self.u.iter().zip(g.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        Some(diff / g.norm_sq())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `AUTO_STEP_FACTOR / ‖A‖₂²`.
    Auto,
    Fixed(f64),
}

impl StepSize {
    pub fn resolve(self, a: &DenseMatrix) -> Result<f64> {
        match self {
            StepSize::Fixed(t) if t > 0.0 && t.is_finite() => Ok(t),
            StepSize::Fixed(t) => Err(Error::invalid(format!("step size {t} must be positive"))),
            StepSize::Auto => auto_step(a),
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(StepSize::Auto);
        }
        s.parse::<f64>()
            .map(StepSize::Fixed)
            .map_err(|_| Error::invalid(format!("step size must be `auto` or a number, got `{s}`")))
    }
}

pub fn auto_step(a: &DenseMatrix) -> Result<f64> {
    let l = spectral_norm_sq_default(a);
    if l <= 0.0 {
        return Err(Error::invalid("automatic step size needs a nonzero matrix"));
    }
    Ok(AUTO_STEP_FACTOR / l)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IhtConfig {
    pub tau: StepSize,
    pub max_iters: usize,
    /// Stop once an update moves no entry by more than this; `0` disables.
    pub fixed_point_tol: f64,
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for IhtConfig {
    fn default() -> Self {
        Self {
            tau: StepSize::Auto,
            max_iters: 3000,
            fixed_point_tol: 0.0,
            record_trace: false,
        }
    }
}

impl IhtConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.fixed_point_tol >= 0.0) {
            return Err(Error::invalid("fixed_point_tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyIhtConfig {
    pub rounds: usize,
    pub iters_per_round: usize,
    pub sigma: f64,
    pub inner: IhtConfig,
}

impl Default for NoisyIhtConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            iters_per_round: 600,
            sigma: 0.025,
            inner: IhtConfig::default(),
        }
    }
}

impl NoisyIhtConfig {
    pub fn total_iterations(&self) -> usize {
        self.rounds * self.iters_per_round
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("noisy IHT needs at least one round"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("noise level must be non-negative"));
        }
        if self.iters_per_round == 0 {
            return Err(Error::invalid("iters_per_round must be at least 1"));
        }
        self.inner.validate()
    }
}

/// Reusable scratch for selecting the `s` largest-magnitude entries.
#[derive(Default, Debug, Clone)]
pub struct Thresholder {
    order: Vec<usize>,
}

impl Thresholder {
    /// Ascending indices of the entries `H_s` keeps. Larger magnitude wins;
    /// equal magnitudes go to the smaller index.
    pub fn kept(&mut self, x: &[f64], s: usize) -> &[usize] {
        let n = x.len();
        self.order.clear();
        self.order.extend(0..n);
        if s < n {
            let by_rank = |&a: &usize, &b: &usize| {
                x[b].abs()
                    .partial_cmp(&x[a].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            };
            if s > 0 {
                self.order.select_nth_unstable_by(s - 1, by_rank);
            }
            self.order.truncate(s);
            self.order.sort_unstable();
        }
        &self.order
    }

    /// `out = H_s(x)`.
    pub fn apply(&mut self, x: &[f64], s: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &i in self.kept(x, s) {
            out[i] = x[i];
        }
    }
}

/// Keeps the `s` entries of largest magnitude and zeroes the rest.
pub fn hard_threshold(x: &DenseVector, s: usize) -> DenseVector {
    let mut out = vec![0.0; x.len()];
    Thresholder::default().apply(x, s, &mut out);
    DenseVector::from_vec_unchecked(out)
}

/// `‖A u − f‖²`.
pub fn objective(a: &DenseMatrix, u: &DenseVector, f: &DenseVector) -> Result<f64> {
    check_dim("objective (u)", a.cols(), u.len())?;
    check_dim("objective (f)", a.rows(), f.len())?;
    Ok(residual_sq(a, u, f))
}

pub(crate) fn residual_sq(a: &DenseMatrix, u: &[f64], f: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, fi) in f.iter().enumerate() {
        let r = crate::linalg::dot(a.row(i), u) - fi;
        acc += r * r;
    }
    acc
}

/// One IHT update `u ↦ H_s(u − τAᵀ(Au − f))`, evaluated in the equivalent
/// affine form `H_s(W u + b)` with `W = I − τAᵀA` and `b = τAᵀf`.
#[derive(Clone, Debug)]
pub struct IhtStep {
    pub(crate) w: DenseMatrix,
    pub(crate) b: DenseVector,
    pub(crate) s: usize,
    pub(crate) tau: f64,
}

impl IhtStep {
    pub fn new(p: &ProblemInstance, tau: f64) -> Self {
        let (w, b) = affine_step(p.a(), p.f(), tau);
        Self { w, b, s: p.s(), tau }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub(crate) fn apply_into(&self, u: &[f64], z: &mut [f64], th: &mut Thresholder, out: &mut [f64]) {
        self.w.affine_into(u, &self.b, z);
        th.apply(z, self.s, out);
    }

    pub fn apply(&self, u: &DenseVector) -> DenseVector {
        let n = u.len();
        let mut z = vec![0.0; n];
        let mut out = vec![0.0; n];
        self.apply_into(u, &mut z, &mut Thresholder::default(), &mut out);
        DenseVector::from_vec_unchecked(out)
    }
}

/// `(I − τAᵀA, τAᵀf)`.
pub fn affine_step(a: &DenseMatrix, f: &DenseVector, tau: f64) -> (DenseMatrix, DenseVector) {
    let n = a.cols();
    let mut w = a.gram();
    for (k, x) in w.data_mut().iter_mut().enumerate() {
        let id = if k / n == k % n { 1.0 } else { 0.0 };
        *x = id - tau * *x;
    }
    let mut b = vec![0.0; n];
    a.matvec_transpose_into(f, &mut b);
    b.iter_mut().for_each(|x| *x *= tau);
    (w, DenseVector::from_vec_unchecked(b))
}

pub fn run_iht(p: &ProblemInstance, cfg: &IhtConfig, u0: &DenseVector) -> Result<SolverResult> {
    cfg.validate()?;
    check_dim("run_iht (u0)", p.n(), u0.len())?;
    let tau = cfg.tau.resolve(p.a())?;
    let step = IhtStep::new(p, tau);
    iterate(p, &step, cfg, cfg.max_iters, u0.to_vec(), Method::Iht)
}

fn iterate(
    p: &ProblemInstance,
    step: &IhtStep,
    cfg: &IhtConfig,
    max_iters: usize,
    mut u: Vec<f64>,
    method: Method,
) -> Result<SolverResult> {
    let n = u.len();
    let mut z = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut th = Thresholder::default();
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(residual_sq(p.a(), &u, p.f()));
    }
    let mut iterations = 0;
    for _ in 0..max_iters {
        step.apply_into(&u, &mut z, &mut th, &mut next);
        iterations += 1;
        let moved = u
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut u, &mut next);
        if cfg.record_trace {
            trace.push(residual_sq(p.a(), &u, p.f()));
        }
        if cfg.fixed_point_tol > 0.0 && moved <= cfg.fixed_point_tol {
            break;
        }
    }
    let mut r = SolverResult::from_iterate(p, method, DenseVector::from_vec_unchecked(u), iterations, step.tau)?;
    r.objective_trace = trace;
    Ok(r)
}

/// IHT from zero, then `rounds − 1` restarts from the previous result plus
/// i.i.d. `N(0, σ²)` noise on every coordinate. Returns the last round.
pub fn run_noisy_iht(p: &ProblemInstance, cfg: &NoisyIhtConfig, rng: &RngState) -> Result<SolverResult> {
    cfg.validate()?;
    let tau = cfg.inner.tau.resolve(p.a())?;
    let step = IhtStep::new(p, tau);
    let mut noise = rng.stream();

    let mut res = iterate(p, &step, &cfg.inner, cfg.iters_per_round, vec![0.0; p.n()], Method::Noisy)?;
    let mut total = res.iterations_run;
    let mut trace = std::mem::take(&mut res.objective_trace);
    for _ in 1..cfg.rounds {
        let start: Vec<f64> = res
            .u
            .iter()
            .map(|x| x + cfg.sigma * noise.sample::<f64, _>(StandardNormal))
            .collect();
        res = iterate(p, &step, &cfg.inner, cfg.iters_per_round, start, Method::Noisy)?;
        total += res.iterations_run;
        trace.append(&mut res.objective_trace);
    }
    res.iterations_run = total;
    res.objective_trace = trace;
    Ok(res)
}

/// Least-squares re-fit of `f` on the support of `r`.
pub fn refine(p: &ProblemInstance, r: &SolverResult) -> Result<SolverResult> {
    let u = least_squares_on_support(p.a(), p.f(), &r.support)?;
    let objective = objective(p.a(), &u, p.f())?;
    Ok(SolverResult {
        method: r.method,
        support: u.support(),
        u,
        objective,
        iterations_run: r.iterations_run,
        tau: r.tau,
        refined: true,
        objective_trace: Vec::new(),
    })
}
