//! Random sparse-recovery instances.
//!
//! All draws come from [`RngState`] streams, so an instance is a pure function
//! of its ensemble, parameters and stream path.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, DenseMatrix, DenseVector};
use crate::rng::RngState;
use crate::solvers::objective;

/// Redraws allowed when a draw is degenerate (zero data vector, zero column).
pub const MAX_REDRAWS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    a: DenseMatrix,
    f: DenseVector,
    s: usize,
    u_gen: Option<DenseVector>,
}

impl ProblemInstance {
    pub fn new(a: DenseMatrix, f: DenseVector, s: usize, u_gen: Option<DenseVector>) -> Result<Self> {
        check_dim("ProblemInstance::new (f)", a.rows(), f.len())?;
        if s == 0 || s > a.cols() {
            return Err(Error::invalid(format!(
                "sparsity {s} must lie in 1..={}",
                a.cols()
            )));
        }
        if let Some(u) = &u_gen {
            check_dim("ProblemInstance::new (u_gen)", a.cols(), u.len())?;
            if u.count_nonzero() != s {
                return Err(Error::invalid(format!(
                    "generating signal has {} nonzeros, expected {s}",
                    u.count_nonzero()
                )));
            }
            let r = objective(&a, u, &f)?.sqrt();
            if r > 1e-10 * f.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::invalid(format!(
                    "generating signal does not reproduce the data (residual {r:e})"
                )));
            }
        }
        Ok(Self { a, f, s, u_gen })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn f(&self) -> &DenseVector {
        &self.f
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn u_gen(&self) -> Option<&DenseVector> {
        self.u_gen.as_ref()
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Same data with a different sparsity budget; drops the generating signal.
    pub fn with_sparsity(&self, s: usize) -> Result<Self> {
        Self::new(self.a.clone(), self.f.clone(), s, None)
    }

    /// Plain-text dump: a `m n s` header, `A` row by row, `f`, then `u_gen`
    /// or the word `none`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.m(), self.n(), self.s);
        for i in 0..self.m() {
            out.push_str(&join(self.a.row(i)));
            out.push('\n');
        }
        out.push_str(&join(&self.f));
        out.push('\n');
        match &self.u_gen {
            Some(u) => out.push_str(&join(u)),
            None => out.push_str("none"),
        }
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (ln, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty input".into(),
        })?;
        let dims: Vec<usize> = parse_row(ln, header)?;
        let [m, n, s] = dims[..] else {
            return Err(Error::Parse {
                line: ln,
                msg: "header must be `m n s`".into(),
            });
        };

        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            let (ln, l) = next_line(&mut lines)?;
            let row: Vec<f64> = parse_row(ln, l)?;
            expect_len(ln, n, row.len())?;
            data.extend(row);
        }
        let (ln, l) = next_line(&mut lines)?;
        let f: Vec<f64> = parse_row(ln, l)?;
        expect_len(ln, m, f.len())?;
        let (ln, l) = next_line(&mut lines)?;
        let u_gen = if l == "none" {
            None
        } else {
            let u: Vec<f64> = parse_row(ln, l)?;
            expect_len(ln, n, u.len())?;
            Some(DenseVector::new(u)?)
        };
        Self::new(DenseMatrix::new(m, n, data)?, DenseVector::new(f)?, s, u_gen)
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn next_line<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<(usize, &'a str)> {
    lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "unexpected end of input".into(),
    })
}

fn parse_row<T: FromStr>(line: usize, l: &str) -> Result<Vec<T>> {
    l.split_whitespace()
        .map(|tok| {
            tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("cannot parse `{tok}`"),
            })
        })
        .collect()
}

fn expect_len(line: usize, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Parse {
            line,
            msg: format!("expected {expected} values, found {got}"),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Gaussian,
    Bernoulli,
    SubsampledDct,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Gaussian => "gaussian",
            EnsembleKind::Bernoulli => "bernoulli",
            EnsembleKind::SubsampledDct => "subsampled_dct",
        }
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "bernoulli" => Ok(Self::Bernoulli),
            "subsampled_dct" | "dct" => Ok(Self::SubsampledDct),
            other => Err(Error::invalid(format!("unknown ensemble `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEnsemble {
    pub kind: EnsembleKind,
    pub m: usize,
    pub n: usize,
}

impl MatrixEnsemble {
    pub fn new(kind: EnsembleKind, m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::invalid("ensemble dimensions must be positive"));
        }
        if kind == EnsembleKind::SubsampledDct && m > n {
            return Err(Error::invalid(format!(
                "subsampled DCT needs m <= n (got m = {m}, n = {n})"
            )));
        }
        Ok(Self { kind, m, n })
    }
}

/// Draws a sensing matrix.
///
/// All three ensembles have columns of unit expected squared norm:
/// Gaussian entries are `N(0, 1/m)`, Bernoulli entries are `±1/√m`, and the
/// subsampled DCT keeps `m` distinct rows of the orthonormal `n × n` DCT-II
/// matrix scaled by `√(n/m)`.
pub fn gen_matrix(ensemble: &MatrixEnsemble, rng: &RngState) -> Result<DenseMatrix> {
    let MatrixEnsemble { kind, m, n } = MatrixEnsemble::new(ensemble.kind, ensemble.m, ensemble.n)?;
    let mut r = rng.stream();
    let scale = 1.0 / (m as f64).sqrt();
    let data: Vec<f64> = match kind {
        EnsembleKind::Gaussian => (0..m * n)
            .map(|_| scale * r.sample::<f64, _>(StandardNormal))
            .collect(),
        EnsembleKind::Bernoulli => (0..m * n)
            .map(|_| if r.random::<bool>() { scale } else { -scale })
            .collect(),
        EnsembleKind::SubsampledDct => {
            let mut rows = index::sample(&mut r, n, m).into_vec();
            rows.sort_unstable();
            let gain = (n as f64 / m as f64).sqrt();
            rows.iter()
                .flat_map(|&k| dct_row(n, k).into_iter().map(move |v| gain * v))
                .collect()
        }
    };
    DenseMatrix::new(m, n, data)
}

/// Row `k` of the orthonormal type-II DCT matrix of size `n`.
pub fn dct_row(n: usize, k: usize) -> Vec<f64> {
    let nf = n as f64;
    let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
    (0..n)
        .map(|j| {
            alpha * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos()
        })
        .collect()
}

/// `n`-vector with exactly `s` standard-normal nonzeros at uniformly chosen
/// positions.
pub fn gen_sparse_signal(n: usize, s: usize, rng: &RngState) -> Result<DenseVector> {
    if s == 0 || s > n {
        return Err(Error::invalid(format!("sparsity {s} must lie in 1..={n}")));
    }
    let mut r = rng.stream();
    let mut u = vec![0.0; n];
    for i in index::sample(&mut r, n, s).into_iter() {
        let mut x: f64 = r.sample(StandardNormal);
        while x == 0.0 {
            x = r.sample(StandardNormal);
        }
        u[i] = x;
    }
    DenseVector::new(u)
}

/// `round(mu · n)` with halves rounded up.
pub fn sparsity_for(mu: f64, n: usize) -> usize {
    (mu * n as f64 + 0.5).floor() as usize
}

/// Instance with exact data `f = A u_gen` rescaled to `‖f‖₂ = 1`; the
/// generating signal is rescaled by the same factor.
pub fn make_instance(ensemble: &MatrixEnsemble, mu: f64, rng: &RngState) -> Result<ProblemInstance> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::invalid(format!("relative sparsity {mu} must lie in (0, 1]")));
    }
    let s = sparsity_for(mu, ensemble.n);
    if s == 0 {
        return Err(Error::invalid(format!(
            "relative sparsity {mu} gives an empty support for n = {}",
            ensemble.n
        )));
    }
    for attempt in 0..=MAX_REDRAWS {
        let sub = rng.child(attempt as u64);
        let a = gen_matrix(ensemble, &sub.child(0))?;
        let u = gen_sparse_signal(ensemble.n, s, &sub.child(1))?;
        let f0 = a.matvec(&u)?;
        let norm = f0.norm();
        if norm == 0.0 {
            continue;
        }
        let c = 1.0 / norm;
        let f = DenseVector::from_vec_unchecked(f0.iter().map(|x| x * c).collect());
        let u_gen = DenseVector::from_vec_unchecked(u.iter().map(|x| x * c).collect());
        return ProblemInstance::new(a, f, s, Some(u_gen));
    }
    Err(Error::DegenerateInstance {
        attempts: MAX_REDRAWS + 1,
    })
}

/// 2 × 2 instance with standard-normal columns rescaled to norm 2, a
/// standard-normal data vector rescaled to norm 1, and sparsity 1.
pub fn gen_basin2d_setting(rng: &RngState) -> Result<ProblemInstance> {
    for attempt in 0..=MAX_REDRAWS {
        let mut r = rng.child(attempt as u64).stream();
        let mut g = [0.0f64; 6];
        g.iter_mut().for_each(|x| *x = r.sample(StandardNormal));
        let (c0, c1, fv) = ([g[0], g[1]], [g[2], g[3]], [g[4], g[5]]);
        let n0 = c0[0].hypot(c0[1]);
        let n1 = c1[0].hypot(c1[1]);
        let nf = fv[0].hypot(fv[1]);
        if n0 == 0.0 || n1 == 0.0 || nf == 0.0 {
            continue;
        }
        let (s0, s1) = (2.0 / n0, 2.0 / n1);
        let a = DenseMatrix::new(2, 2, vec![c0[0] * s0, c1[0] * s1, c0[1] * s0, c1[1] * s1])?;
        let f = DenseVector::new(vec![fv[0] / nf, fv[1] / nf])?;
        return ProblemInstance::new(a, f, 1, None);
    }
    Err(Error::DegenerateInstance {
        attempts: MAX_REDRAWS + 1,
    })
}
