//! Plain-text tables for experiment outputs.
//!
//! Tables are comma-separated with a header row and `\n` line endings.
//! Leading lines starting with `#` carry free-form metadata. Floats are
//! written in positional decimal notation with 17 significant digits, which
//! round-trips every finite `f64` exactly.

use crate::basin2d::{FixedPoint, SettingRow};
use crate::error::{Error, Result};
use crate::experiments::{CellMetrics, RunRow, TimingRow};
use crate::solvers::Method;

/// Formats `x` with 17 significant digits and no exponent.
pub fn fmt_sig17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let x = if x == 0.0 { 0.0 } else { x };
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let mut out = String::with_capacity(digits.len() + 8);
    if x < 0.0 {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else if (exp as usize) < digits.len() - 1 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        out.push_str(int);
        out.push('.');
        out.push_str(frac);
    } else {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', exp as usize + 1 - digits.len()));
    }
    out
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig17).unwrap_or_default()
}

/// An in-memory CSV table with its `#` comment preamble.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    /// Comment lines without the leading `# `.
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            for line in c.lines() {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("write to memory");
        for r in &self.rows {
            w.write_record(r).expect("write to memory");
        }
        let body = w.into_inner().expect("flush to memory");
        out.push_str(&String::from_utf8(body).expect("utf-8 fields"));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let comments = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim_start().to_string())
            .collect();
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(csv_error)?.iter().map(str::to_string).collect());
        }
        Ok(Self {
            comments,
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing column `{name}`"),
            })
    }

    /// Typed view of one column, parsing each cell with `FromStr`.
    pub fn parse_column<T: std::str::FromStr>(&self, name: &str) -> Result<Vec<T>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    msg: format!("bad value `{}` in column `{name}`", r[c]),
                })
            })
            .collect()
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

pub const RUN_COLUMNS: [&str; 10] = [
    "method",
    "m",
    "mu",
    "s",
    "run",
    "objective_error",
    "failure",
    "rel_recovery_error",
    "iterations",
    "train_aborted",
];

pub fn runs_table(rows: &[RunRow]) -> Table {
    let mut t = Table::new(&RUN_COLUMNS);
    for r in rows {
        t.push(vec![
            r.method.to_string(),
            r.m.to_string(),
            fmt_sig17(r.mu),
            r.s.to_string(),
            r.run.to_string(),
            fmt_sig17(r.objective_error),
            r.failure.to_string(),
            fmt_sig17(r.rel_recovery_error),
            r.iterations.to_string(),
            r.train_aborted.to_string(),
        ]);
    }
    t
}

pub fn runs_from_table(t: &Table) -> Result<Vec<RunRow>> {
    let method: Vec<Method> = t.parse_column("method")?;
    let m: Vec<usize> = t.parse_column("m")?;
    let mu: Vec<f64> = t.parse_column("mu")?;
    let s: Vec<usize> = t.parse_column("s")?;
    let run: Vec<usize> = t.parse_column("run")?;
    let obj: Vec<f64> = t.parse_column("objective_error")?;
    let failure: Vec<bool> = t.parse_column("failure")?;
    let rel: Vec<f64> = t.parse_column("rel_recovery_error")?;
    let iters: Vec<usize> = t.parse_column("iterations")?;
    let aborted: Vec<bool> = t.parse_column("train_aborted")?;
    Ok((0..t.rows.len())
        .map(|i| RunRow {
            method: method[i],
            m: m[i],
            mu: mu[i],
            s: s[i],
            run: run[i],
            objective_error: obj[i],
            failure: failure[i],
            rel_recovery_error: rel[i],
            iterations: iters[i],
            train_aborted: aborted[i],
        })
        .collect())
}

pub const CELL_COLUMNS: [&str; 8] = [
    "method",
    "m",
    "mu",
    "s",
    "runs",
    "mean_objective_error",
    "failure_count",
    "mean_rel_recovery_error",
];

pub fn cells_table(cells: &[CellMetrics]) -> Table {
    let mut t = Table::new(&CELL_COLUMNS);
    for c in cells {
        t.push(vec![
            c.method.to_string(),
            c.m.to_string(),
            fmt_sig17(c.mu),
            c.s.to_string(),
            c.runs.to_string(),
            fmt_sig17(c.mean_objective_error),
            c.failure_count.to_string(),
            fmt_sig17(c.mean_relative_recovery_error),
        ]);
    }
    t
}

pub fn cells_from_table(t: &Table) -> Result<Vec<CellMetrics>> {
    let method: Vec<Method> = t.parse_column("method")?;
    let m: Vec<usize> = t.parse_column("m")?;
    let mu: Vec<f64> = t.parse_column("mu")?;
    let s: Vec<usize> = t.parse_column("s")?;
    let runs: Vec<usize> = t.parse_column("runs")?;
    let obj: Vec<f64> = t.parse_column("mean_objective_error")?;
    let fails: Vec<usize> = t.parse_column("failure_count")?;
    let rel: Vec<f64> = t.parse_column("mean_rel_recovery_error")?;
    Ok((0..t.rows.len())
        .map(|i| CellMetrics {
            method: method[i],
            m: m[i],
            mu: mu[i],
            s: s[i],
            runs: runs[i],
            mean_objective_error: obj[i],
            failure_count: fails[i],
            mean_relative_recovery_error: rel[i],
        })
        .collect())
}

pub fn timings_table(rows: &[TimingRow]) -> Table {
    let mut t = Table::new(&["method", "m", "mu", "run", "wall_ms"]);
    for r in rows {
        t.push(vec![
            r.method.to_string(),
            r.m.to_string(),
            fmt_sig17(r.mu),
            r.run.to_string(),
            format!("{:.3}", r.wall_ms),
        ]);
    }
    t
}

pub fn settings_table(rows: &[SettingRow]) -> Table {
    let mut t = Table::new(&[
        "setting_id",
        "tau",
        "num_fixed_points",
        "num_in_domain",
        "two_minima",
        "unconverged",
        "d_global_to_local_region",
        "d_local_to_global_region",
    ]);
    for r in rows {
        t.push(vec![
            r.setting_id.to_string(),
            fmt_sig17(r.tau),
            r.num_fixed_points.to_string(),
            r.num_in_domain.to_string(),
            r.two_minima.to_string(),
            r.unconverged.to_string(),
            fmt_opt(r.d_global_to_local_region),
            fmt_opt(r.d_local_to_global_region),
        ]);
    }
    t
}

pub const FIXED_POINT_COLUMNS: [&str; 9] = [
    "setting_id",
    "label",
    "x1",
    "x2",
    "objective",
    "is_global",
    "in_domain",
    "basin_size",
    "two_minima",
];

/// Fixed points per setting, labelled as in the label grids.
pub fn fixed_points_table(rows: &[SettingRow], fixed_points: &[Vec<FixedPoint>]) -> Table {
    let mut t = Table::new(&FIXED_POINT_COLUMNS);
    for (row, fps) in rows.iter().zip(fixed_points) {
        for (k, fp) in fps.iter().enumerate() {
            t.push(vec![
                row.setting_id.to_string(),
                k.to_string(),
                fmt_sig17(fp.location[0]),
                fmt_sig17(fp.location[1]),
                fmt_sig17(fp.objective),
                fp.is_global.to_string(),
                fp.in_domain.to_string(),
                fp.basin_size.to_string(),
                row.two_minima.to_string(),
            ]);
        }
    }
    t
}
