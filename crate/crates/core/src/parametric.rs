//! Parametric IHT: two unrolled IHT layers with free weights and biases,
//!
//! ```text
//! N(u0; θ) = H_s(W2 · H_s(drop(W1 u0 + b1)) + b2),
//! ```
//!
//! initialized to plain IHT steps and optimized on `‖A N(u0; θ) − f‖²` by
//! heavy-ball subgradient descent with a fresh dropout mask every step. The
//! dropout layer is only active while training.

use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, DenseMatrix, DenseVector};
use crate::problems::ProblemInstance;
use crate::rng::RngState;
use crate::solvers::{affine_step, residual_sq, Method, SolverResult, Thresholder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnrolledParams {
    pub w1: DenseMatrix,
    pub b1: DenseVector,
    pub w2: DenseMatrix,
    pub b2: DenseVector,
}

/// Gradients share the parameter layout.
pub type Gradients = UnrolledParams;

impl UnrolledParams {
    pub fn zeros(n: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(n, n),
            b1: DenseVector::zeros(n),
            w2: DenseMatrix::zeros(n, n),
            b2: DenseVector::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.b1.len()
    }

    /// Blocks in the order `w1, b1, w2, b2`.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.data_mut(),
            self.b1.as_mut_slice(),
            self.w2.data_mut(),
            self.b2.as_mut_slice(),
        ]
    }

    fn check(&self, n: usize) -> Result<()> {
        for (name, got) in [
            ("w1", self.w1.rows()),
            ("w1", self.w1.cols()),
            ("b1", self.b1.len()),
            ("w2", self.w2.rows()),
            ("w2", self.w2.cols()),
            ("b2", self.b2.len()),
        ] {
            if got != n {
                return Err(Error::invalid(format!(
                    "parameter block {name} has size {got}, expected {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Backward rule for `H_s`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgradientRule {
    /// Pass the incoming gradient through on kept entries.
    #[default]
    Indicator,
    /// Pass it through on kept entries scaled by the pre-threshold value.
    Literal,
}

impl FromStr for SubgradientRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indicator" => Ok(Self::Indicator),
            "literal" => Ok(Self::Literal),
            other => Err(Error::invalid(format!("unknown subgradient rule `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub momentum: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub dropout_rate: f64,
    #[serde(default)]
    pub subgradient: SubgradientRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            learning_rate: 1e-4,
            iterations: 2000,
            dropout_rate: 0.05,
            subgradient: SubgradientRule::Indicator,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Coordinates zeroed by each dropout mask.
    pub fn dropped(&self, n: usize) -> usize {
        (self.dropout_rate * n as f64 + 0.5).floor() as usize
    }
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTape {
    pub u0: Vec<f64>,
    pub z1: Vec<f64>,
    /// 0/1 dropout mask; `None` on the inference path.
    pub dropout_mask: Option<Vec<f64>>,
    /// Input to the inner `H_s`: `z1` after dropout.
    pub d: Vec<f64>,
    /// Indices kept by the inner and outer `H_s`, ascending.
    pub kept1: Vec<usize>,
    pub h1: Vec<f64>,
    pub z2: Vec<f64>,
    pub kept2: Vec<usize>,
    pub u_out: Vec<f64>,
    pub s: usize,
}

impl ForwardTape {
    fn empty(n: usize, s: usize) -> Self {
        Self {
            u0: vec![0.0; n],
            z1: vec![0.0; n],
            dropout_mask: None,
            d: vec![0.0; n],
            kept1: Vec::with_capacity(s),
            h1: vec![0.0; n],
            z2: vec![0.0; n],
            kept2: Vec::with_capacity(s),
            u_out: vec![0.0; n],
            s,
        }
    }

    /// 0/1 vector of the entries kept by the inner threshold.
    pub fn inner_mask(&self) -> Vec<f64> {
        indicator(self.u0.len(), &self.kept1)
    }

    /// 0/1 vector of the entries kept by the outer threshold.
    pub fn outer_mask(&self) -> Vec<f64> {
        indicator(self.u0.len(), &self.kept2)
    }
}

fn indicator(n: usize, kept: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; n];
    kept.iter().for_each(|&i| m[i] = 1.0);
    m
}

/// `w1 = w2 = I − τAᵀA`, `b1 = b2 = τAᵀf`: each layer is one IHT step.
pub fn init_params(p: &ProblemInstance, tau: f64) -> Result<UnrolledParams> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("step size {tau} must be non-negative")));
    }
    let (w, b) = affine_step(p.a(), p.f(), tau);
    Ok(UnrolledParams {
        w1: w.clone(),
        b1: b.clone(),
        w2: w,
        b2: b,
    })
}

pub fn forward(
    params: &UnrolledParams,
    u0: &DenseVector,
    s: usize,
    dropout_mask: Option<&[f64]>,
) -> Result<(DenseVector, ForwardTape)> {
    let n = params.n();
    params.check(n)?;
    check_dim("forward (u0)", n, u0.len())?;
    if let Some(mask) = dropout_mask {
        check_dim("forward (dropout mask)", n, mask.len())?;
        if mask.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::invalid("dropout mask must be 0/1 valued"));
        }
    }
    let mut tape = ForwardTape::empty(n, s);
    tape.u0.copy_from_slice(u0);
    forward_into(params, dropout_mask, &mut tape, &mut Thresholder::default());
    Ok((DenseVector::from_vec_unchecked(tape.u_out.clone()), tape))
}

/// Forward pass on a tape whose `u0` and `s` are already set.
fn forward_into(params: &UnrolledParams, mask: Option<&[f64]>, tape: &mut ForwardTape, th: &mut Thresholder) {
    params.w1.affine_into(&tape.u0, &params.b1, &mut tape.z1);
    match mask {
        Some(m) => {
            for ((d, z), k) in tape.d.iter_mut().zip(&tape.z1).zip(m) {
                *d = z * k;
            }
            match &mut tape.dropout_mask {
                Some(stored) => stored.copy_from_slice(m),
                None => tape.dropout_mask = Some(m.to_vec()),
            }
        }
        None => {
            tape.d.copy_from_slice(&tape.z1);
            tape.dropout_mask = None;
        }
    }
    tape.kept1.clear();
    tape.kept1.extend_from_slice(th.kept(&tape.d, tape.s));
    tape.h1.iter_mut().for_each(|x| *x = 0.0);
    for &i in &tape.kept1 {
        tape.h1[i] = tape.d[i];
    }

    params.w2.affine_into(&tape.h1, &params.b2, &mut tape.z2);
    tape.kept2.clear();
    tape.kept2.extend_from_slice(th.kept(&tape.z2, tape.s));
    tape.u_out.iter_mut().for_each(|x| *x = 0.0);
    for &i in &tape.kept2 {
        tape.u_out[i] = tape.z2[i];
    }
}

/// Reverse-mode gradients of `‖A u_out − f‖²` with respect to all four
/// parameter blocks.
pub fn backward(
    tape: &ForwardTape,
    params: &UnrolledParams,
    a: &DenseMatrix,
    f: &DenseVector,
    rule: SubgradientRule,
) -> Result<Gradients> {
    let n = params.n();
    params.check(n)?;
    check_dim("backward (A cols)", n, a.cols())?;
    check_dim("backward (f)", a.rows(), f.len())?;
    check_dim("backward (tape)", n, tape.u0.len())?;
    let mut grads = UnrolledParams::zeros(n);
    let mut scratch = BackwardScratch::new(a.rows(), n);
    backward_into(tape, params, a, f, rule, &mut scratch, &mut grads);
    Ok(grads)
}

struct BackwardScratch {
    residual: Vec<f64>,
    g_out: Vec<f64>,
    g_h1: Vec<f64>,
}

impl BackwardScratch {
    fn new(m: usize, n: usize) -> Self {
        Self {
            residual: vec![0.0; m],
            g_out: vec![0.0; n],
            g_h1: vec![0.0; n],
        }
    }
}

/// Fills `grads` and returns the loss. Only the rows of `g_w1`/`g_w2` on the
/// kept indices can be nonzero, so only those rows are written after zeroing.
fn backward_into(
    tape: &ForwardTape,
    params: &UnrolledParams,
    a: &DenseMatrix,
    f: &[f64],
    rule: SubgradientRule,
    scratch: &mut BackwardScratch,
    grads: &mut Gradients,
) -> f64 {
    let n = params.n();
    a.matvec_into(&tape.u_out, &mut scratch.residual);
    let mut loss = 0.0;
    for (r, fi) in scratch.residual.iter_mut().zip(f) {
        *r -= fi;
        loss += *r * *r;
    }
    a.matvec_transpose_into(&scratch.residual, &mut scratch.g_out);
    scratch.g_out.iter_mut().for_each(|g| *g *= 2.0);

    for block in grads.blocks_mut() {
        block.iter_mut().for_each(|x| *x = 0.0);
    }

    // Outer threshold, then the second affine layer.
    scratch.g_h1.iter_mut().for_each(|x| *x = 0.0);
    for &i in &tape.kept2 {
        let g = match rule {
            SubgradientRule::Indicator => scratch.g_out[i],
            SubgradientRule::Literal => scratch.g_out[i] * tape.z2[i],
        };
        grads.b2.as_mut_slice()[i] = g;
        let row = &mut grads.w2.data_mut()[i * n..(i + 1) * n];
        for &j in &tape.kept1 {
            row[j] = g * tape.h1[j];
        }
        for (gh, w) in scratch.g_h1.iter_mut().zip(params.w2.row(i)) {
            *gh += w * g;
        }
    }

    // Inner threshold and dropout, then the first affine layer.
    for &j in &tape.kept1 {
        let mut g = scratch.g_h1[j];
        if let SubgradientRule::Literal = rule {
            g *= tape.d[j];
        }
        if let Some(mask) = &tape.dropout_mask {
            g *= mask[j];
        }
        grads.b1.as_mut_slice()[j] = g;
        let row = &mut grads.w1.data_mut()[j * n..(j + 1) * n];
        for (r, u) in row.iter_mut().zip(&tape.u0) {
            *r = g * u;
        }
    }
    loss
}

/// `‖A N(u0; θ) − f‖²` for the given dropout mask (`None` = inference).
pub fn loss(
    params: &UnrolledParams,
    u0: &DenseVector,
    s: usize,
    dropout_mask: Option<&[f64]>,
    a: &DenseMatrix,
    f: &DenseVector,
) -> Result<f64> {
    let (u, _) = forward(params, u0, s, dropout_mask)?;
    crate::solvers::objective(a, &u, f)
}

/// Heavy-ball update `v ← μv − ηg; θ ← θ + v` on every block.
pub fn momentum_step(params: &mut UnrolledParams, velocity: &mut UnrolledParams, grads: &Gradients, momentum: f64, learning_rate: f64) {
    for ((theta, v), g) in params
        .blocks_mut()
        .into_iter()
        .zip(velocity.blocks_mut())
        .zip(grads.blocks())
    {
        for ((t, vi), gi) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = momentum * *vi - learning_rate * gi;
            *t += *vi;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Dropout-free prediction of the trained network.
    pub result: SolverResult,
    /// Dropout-free loss at the initial parameters.
    pub initial_loss: f64,
    /// Dropout-free loss at the trained parameters.
    pub final_loss: f64,
    /// Loss of every training iteration, evaluated with that iteration's mask.
    pub training_losses: Vec<f64>,
    #[serde(skip)]
    pub params: Option<UnrolledParams>,
}

/// Optimizes the unrolled network on a single instance, warm-started at `u0`.
pub fn train(
    p: &ProblemInstance,
    u0: &DenseVector,
    cfg: &TrainConfig,
    tau: f64,
    rng: &RngState,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = p.n();
    check_dim("train (u0)", n, u0.len())?;
    let s = p.s();
    let mut params = init_params(p, tau)?;
    let mut velocity = UnrolledParams::zeros(n);
    let mut grads = UnrolledParams::zeros(n);
    let mut tape = ForwardTape::empty(n, s);
    tape.u0.copy_from_slice(u0);
    let mut th = Thresholder::default();
    let mut scratch = BackwardScratch::new(p.m(), n);

    forward_into(&params, None, &mut tape, &mut th);
    let initial_loss = residual_sq(p.a(), &tape.u_out, p.f());

    let mut r = rng.stream();
    let dropped = cfg.dropped(n);
    let mut mask = vec![1.0; n];
    let mut training_losses = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        mask.iter_mut().for_each(|x| *x = 1.0);
        for i in index::sample(&mut r, n, dropped).into_iter() {
            mask[i] = 0.0;
        }
        forward_into(&params, Some(&mask), &mut tape, &mut th);
        let l = backward_into(&tape, &params, p.a(), p.f(), cfg.subgradient, &mut scratch, &mut grads);
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        training_losses.push(l);
        momentum_step(&mut params, &mut velocity, &grads, cfg.momentum, cfg.learning_rate);
    }

    forward_into(&params, None, &mut tape, &mut th);
    let final_loss = residual_sq(p.a(), &tape.u_out, p.f());
    if !final_loss.is_finite() || tape.u_out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss {
            iteration: cfg.iterations,
        });
    }
    let result = SolverResult::from_iterate(
        p,
        Method::Parametric,
        DenseVector::from_vec_unchecked(tape.u_out.clone()),
        cfg.iterations,
        tau,
    )?;
    Ok(TrainOutcome {
        result,
        initial_loss,
        final_loss,
        training_losses,
        params: Some(params),
    })
}
