//! Standalone SVG figures rendered from the stored CSV tables.
//!
//! Each renderer takes table text as input, so re-rendering from saved files
//! reproduces the original figure byte for byte.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::format::{cells_from_table, Table};
use crate::solvers::Method;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    ObjectiveError,
    FailureCount,
    RelativeRecoveryError,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::ObjectiveError,
        Metric::FailureCount,
        Metric::RelativeRecoveryError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ObjectiveError => "objective_error",
            Metric::FailureCount => "failure_count",
            Metric::RelativeRecoveryError => "rel_recovery_error",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::ObjectiveError => "mean objective error",
            Metric::FailureCount => "failures",
            Metric::RelativeRecoveryError => "mean relative recovery error",
        }
    }
}

pub fn heatmap_file_name(method: Method, metric: Metric) -> String {
    format!("heatmap_{}_{}.svg", metric.name(), method.name())
}

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

fn color(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn is_dark((r, g, b): (u8, u8, u8)) -> bool {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64 <= 140.0
}

fn short(x: f64, integral: bool) -> String {
    if integral {
        return format!("{x:.0}");
    }
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 0.01 && x.abs() < 1e4 {
        format!("{x:.3}")
    } else {
        format!("{x:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace("--", "- -")
}

fn preamble(out: &mut String, w: usize, h: usize, comments: &[String]) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    if !comments.is_empty() {
        out.push_str("<!--\n");
        for c in comments {
            out.push_str(&escape(c));
            out.push('\n');
        }
        out.push_str("-->\n");
    }
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
}

const CELL_W: usize = 64;
const CELL_H: usize = 40;
const LEFT: usize = 80;
const TOP: usize = 50;
const BAR_W: usize = 18;

/// Heatmap of one metric for one method from the aggregate table text.
///
/// Rows are the measurement counts `m` ascending from top to bottom, columns
/// the relative sparsities ascending from left to right. The color scale is
/// shared by all methods in the table so maps of one metric are comparable.
pub fn heatmap_svg(cells_csv: &str, method: Method, metric: Metric) -> Result<String> {
    let table = Table::parse(cells_csv)?;
    let cells = cells_from_table(&table)?;
    let value = |c: &crate::experiments::CellMetrics| match metric {
        Metric::ObjectiveError => c.mean_objective_error,
        Metric::FailureCount => c.failure_count as f64,
        Metric::RelativeRecoveryError => c.mean_relative_recovery_error,
    };
    let mine: Vec<_> = cells.iter().filter(|c| c.method == method).collect();
    if mine.is_empty() {
        return Err(Error::invalid(format!("no cells for method {method}")));
    }
    let mut ms: Vec<usize> = mine.iter().map(|c| c.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut mus: Vec<f64> = mine.iter().map(|c| c.mu).collect();
    mus.sort_by(f64::total_cmp);
    mus.dedup();

    let finite = cells.iter().map(value).filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let integral = metric == Metric::FailureCount;

    // Small grids get larger cells so the labels still fit.
    let cell_w = CELL_W.max(256 / mus.len());
    let cell_h = CELL_H.max(160 / ms.len());
    let grid_w = cell_w * mus.len();
    let grid_h = cell_h * ms.len();
    let bar_x = LEFT + grid_w + 30;
    let width = bar_x + BAR_W + 90;
    let height = TOP + grid_h + 60;

    let mut out = String::new();
    preamble(&mut out, width, height, &table.comments);
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">{}: {}</text>",
        LEFT + grid_w / 2,
        method.name(),
        metric.title()
    );

    for (r, &m) in ms.iter().enumerate() {
        let y = TOP + r * cell_h;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{m}</text>",
            LEFT - 8,
            y + cell_h / 2 + 4
        );
        for (k, &mu) in mus.iter().enumerate() {
            let x = LEFT + k * cell_w;
            let Some(c) = mine.iter().find(|c| c.m == m && c.mu == mu) else {
                let _ = writeln!(
                    out,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"#dddddd\"/>"
                );
                continue;
            };
            let v = value(c);
            let rgb = color((v - lo) / span);
            let _ = writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"{}\"/>",
                hex(rgb)
            );
            let ink = if is_dark(rgb) { "white" } else { "black" };
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" fill=\"{ink}\">{}</text>",
                x + cell_w / 2,
                y + cell_h / 2 + 4,
                short(v, integral)
            );
        }
    }
    for (k, &mu) in mus.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            LEFT + k * cell_w + cell_w / 2,
            TOP + grid_h + 18,
            mu
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">relative sparsity mu</text>",
        LEFT + grid_w / 2,
        TOP + grid_h + 42
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">measurements m</text>",
        TOP + grid_h / 2,
        TOP + grid_h / 2
    );

    // Color scale: top is the maximum.
    let steps = 32;
    let seg = grid_h as f64 / steps as f64;
    for i in 0..steps {
        let t = 1.0 - (i as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{bar_x}\" y=\"{:.2}\" width=\"{BAR_W}\" height=\"{:.2}\" fill=\"{}\"/>",
            TOP as f64 + i as f64 * seg,
            seg + 0.5,
            hex(color(t))
        );
    }
    let ticks = 5;
    for i in 0..ticks {
        let t = i as f64 / (ticks - 1) as f64;
        let y = TOP as f64 + (1.0 - t) * grid_h as f64;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
            bar_x + BAR_W + 6,
            y + 4.0,
            short(lo + t * (hi - lo), integral && (lo + t * (hi - lo)).fract() == 0.0)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948", "#ff9da7", "#9c755f",
];
const UNCONVERGED: &str = "#bbbbbb";

/// Parses a label grid as written by `BasinReport::label_grid_text`.
pub fn parse_label_grid(text: &str) -> Result<Vec<Vec<i64>>> {
    let rows: Vec<Vec<i64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|v| {
                    v.trim().parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("bad label `{v}`"),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let g = rows.len();
    if g < 2 || rows.iter().any(|r| r.len() != g) {
        return Err(Error::invalid("label grid must be square with at least 2 rows"));
    }
    Ok(rows)
}

/// Basin map of one setting: starts colored by the fixed point they reach,
/// fixed points marked, the global minimizer drawn as a larger ringed dot.
///
/// Row `i` of the label grid is the first coordinate, column `j` the second;
/// the square `[lower, upper]^2` is drawn with the second coordinate upward.
pub fn basin_map_svg(
    label_grid: &str,
    fixed_points_csv: &str,
    setting_id: usize,
    lower: f64,
    upper: f64,
) -> Result<String> {
    if !(lower < upper) {
        return Err(Error::invalid("basin map needs lower < upper"));
    }
    let labels = parse_label_grid(label_grid)?;
    let g = labels.len();
    let fp = Table::parse(fixed_points_csv)?;
    let ids: Vec<usize> = fp.parse_column("setting_id")?;
    let lab: Vec<usize> = fp.parse_column("label")?;
    let x1: Vec<f64> = fp.parse_column("x1")?;
    let x2: Vec<f64> = fp.parse_column("x2")?;
    let obj: Vec<f64> = fp.parse_column("objective")?;
    let global: Vec<bool> = fp.parse_column("is_global")?;
    let rows: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] == setting_id).collect();

    let size = 480.0;
    let (left, top) = (60.0, 50.0);
    let cell = size / g as f64;
    let to_px = |x: f64, y: f64| {
        let u = (x - lower) / (upper - lower);
        let v = (y - lower) / (upper - lower);
        (left + u * size, top + (1.0 - v) * size)
    };
    let legend_x = left + size + 24.0;
    let width = (legend_x + 220.0) as usize;
    let height = (top + size + 50.0) as usize;

    let mut out = String::new();
    preamble(&mut out, width, height, &fp.comments);
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">basins of attraction, setting {setting_id}</text>",
        left + size / 2.0
    );
    let _ = writeln!(out, "<g shape-rendering=\"crispEdges\">");
    for (i, row) in labels.iter().enumerate() {
        for (j, &l) in row.iter().enumerate() {
            let fill = if l < 0 {
                UNCONVERGED
            } else {
                PALETTE[l as usize % PALETTE.len()]
            };
            let _ = writeln!(
                out,
                "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{fill}\"/>",
                left + i as f64 * cell,
                top + (g - 1 - j) as f64 * cell,
                cell,
                cell
            );
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"black\"/>"
    );
    for (v, anchor_x, anchor_y) in [(lower, left, top + size + 16.0), (upper, left + size, top + size + 16.0)] {
        let _ = writeln!(
            out,
            "<text x=\"{anchor_x}\" y=\"{anchor_y}\" font-size=\"11\" text-anchor=\"middle\">{v}</text>"
        );
    }
    for (v, y) in [(lower, top + size), (upper, top)] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{v}</text>",
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">u1</text>",
        left + size / 2.0,
        top + size + 34.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">u2</text>",
        left - 30.0,
        top + size / 2.0
    );

    let mut legend_y = top + 10.0;
    for &r in &rows {
        let color = PALETTE[lab[r] % PALETTE.len()];
        let inside = (lower..=upper).contains(&x1[r]) && (lower..=upper).contains(&x2[r]);
        if inside {
            let (px, py) = to_px(x1[r], x2[r]);
            if global[r] {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"9\" fill=\"white\" stroke=\"black\" stroke-width=\"2\"/>"
                );
                let _ = writeln!(
                    out,
                    "<circle cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"5\" fill=\"black\"/>"
                );
            } else {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"5\" fill=\"white\" stroke=\"black\" stroke-width=\"1.5\"/>"
                );
            }
        }
        let _ = writeln!(
            out,
            "<rect x=\"{legend_x}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>",
            legend_y - 10.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{legend_y:.1}\" font-size=\"11\">({}, {}) f={}{}{}</text>",
            legend_x + 18.0,
            short(x1[r], false),
            short(x2[r], false),
            short(obj[r], false),
            if global[r] { " global" } else { "" },
            if inside { "" } else { " outside" }
        );
        legend_y += 18.0;
    }
    if labels.iter().flatten().any(|&l| l < 0) {
        let _ = writeln!(
            out,
            "<rect x=\"{legend_x}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{UNCONVERGED}\"/>",
            legend_y - 10.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{legend_y:.1}\" font-size=\"11\">not converged</text>",
            legend_x + 18.0
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CELLS: &str = "# seed: 1\n\
method,m,mu,s,runs,mean_objective_error,failure_count,mean_rel_recovery_error\n\
iht,50,0.05,10,2,0.5,1,0.7\n\
iht,50,0.1,20,2,0.25,0,0.5\n\
noisy,50,0.05,10,2,0.0,0,0.1\n\
noisy,50,0.1,20,2,0.125,0,0.2\n";

    #[test]
    fn heatmap_is_deterministic_and_labelled() {
        let a = heatmap_svg(CELLS, Method::Iht, Metric::ObjectiveError).unwrap();
        let b = heatmap_svg(CELLS, Method::Iht, Metric::ObjectiveError).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("seed: 1"));
        assert!(a.contains(">0.500<") && a.contains(">0.250<"));
        assert_eq!(a.matches("<rect x=\"").count(), 2 + 32);
        // The shared scale puts the noisy zero at the bottom color.
        let n = heatmap_svg(CELLS, Method::Noisy, Metric::ObjectiveError).unwrap();
        assert!(n.contains(&hex(color(0.0))));
    }

    #[test]
    fn heatmap_missing_method() {
        assert!(heatmap_svg(CELLS, Method::Parametric, Metric::FailureCount).is_err());
    }

    #[test]
    fn color_ends() {
        assert_eq!(color(0.0), (68, 1, 84));
        assert_eq!(color(1.0), (253, 231, 37));
        assert_eq!(color(f64::NAN), (68, 1, 84));
    }

    #[test]
    fn basin_map_marks_points() {
        let grid = "0,0,1\n0,1,1\n-1,1,1\n";
        let fps = "setting_id,label,x1,x2,objective,is_global,in_domain,basin_size,two_minima\n\
3,0,-0.5,0.0,0.2,false,true,3,true\n\
3,1,0.5,0.0,0.1,true,true,5,true\n\
4,0,0.0,0.0,0.1,true,true,9,false\n";
        let svg = basin_map_svg(grid, fps, 3, -1.0, 1.0).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("global"));
        assert!(svg.contains("not converged"));
        assert!(basin_map_svg("0,1\n", fps, 3, -1.0, 1.0).is_err());
    }
}
