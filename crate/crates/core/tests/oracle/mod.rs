//! Reference implementations used as test oracles. They are written for
//! clarity, not speed, and share no code with the library.

#![allow(dead_code)]

/// `‖A u − f‖²` with `A` given row-major.
pub fn residual_sq(a: &[f64], m: usize, n: usize, u: &[f64], f: &[f64]) -> f64 {
    (0..m)
        .map(|i| {
            let r: f64 = (0..n).map(|j| a[i * n + j] * u[j]).sum::<f64>() - f[i];
            r * r
        })
        .sum()
}

/// Solves `M x = y` for square `M` by Gaussian elimination with partial
/// pivoting. Returns `None` for a numerically singular system.
pub fn solve(mut mat: Vec<Vec<f64>>, mut y: Vec<f64>) -> Option<Vec<f64>> {
    let k = y.len();
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| mat[i][c].abs().total_cmp(&mat[j][c].abs()))?;
        if mat[p][c].abs() < 1e-13 {
            return None;
        }
        mat.swap(c, p);
        y.swap(c, p);
        for r in c + 1..k {
            let factor = mat[r][c] / mat[c][c];
            for cc in c..k {
                mat[r][cc] -= factor * mat[c][cc];
            }
            y[r] -= factor * y[c];
        }
    }
    let mut x = vec![0.0; k];
    for c in (0..k).rev() {
        let tail: f64 = (c + 1..k).map(|cc| mat[c][cc] * x[cc]).sum();
        x[c] = (y[c] - tail) / mat[c][c];
    }
    Some(x)
}

/// Least squares on `support` through the normal equations. Returns the
/// full-length coefficient vector.
pub fn least_squares(a: &[f64], m: usize, n: usize, f: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let col = |j: usize| (0..m).map(move |i| a[i * n + j]);
    let gram: Vec<Vec<f64>> = (0..k)
        .map(|p| {
            (0..k)
                .map(|q| col(support[p]).zip(col(support[q])).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    let rhs: Vec<f64> = (0..k).map(|p| col(support[p]).zip(f).map(|(x, y)| x * y).sum()).collect();
    let coef = solve(gram, rhs)?;
    let mut u = vec![0.0; n];
    for (p, &j) in support.iter().enumerate() {
        u[j] = coef[p];
    }
    Some(u)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Exhaustive optimum of `min ‖A u − f‖²` over `|u|₀ ≤ s`: enumerating the
/// supports of size exactly `s` suffices because adding columns never
/// increases the least-squares residual.
pub fn brute_force(a: &[f64], m: usize, n: usize, f: &[f64], s: usize) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f.iter().map(|x| x * x).sum::<f64>());
    for sup in subsets(n, s.min(n)) {
        if let Some(u) = least_squares(a, m, n, f, &sup) {
            let obj = residual_sq(a, m, n, &u, f);
            if obj < best.1 {
                best = (sup, obj);
            }
        }
    }
    best
}

/// Indices kept by hard thresholding: full sort by decreasing magnitude,
/// ties to the smaller index. Returned ascending.
pub fn top_k(x: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    let mut kept: Vec<usize> = idx.into_iter().take(s).collect();
    kept.sort_unstable();
    kept
}

/// Central differences of `g` at `x` with step `h` in every coordinate.
pub fn central_difference(mut g: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let plus = g(&y);
            y[i] = x[i] - h;
            let minus = g(&y);
            y[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Gap between the `s`-th and `(s+1)`-th largest magnitudes.
pub fn threshold_gap(x: &[f64], s: usize) -> f64 {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    if s >= mags.len() {
        return f64::INFINITY;
    }
    mags[s - 1] - mags[s]
}

#[cfg(test)]
mod self_check {
    use super::*;

    #[test]
    fn subsets_count() {
        assert_eq!(subsets(12, 3).len(), 220);
        assert_eq!(subsets(4, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn solve_small_system() {
        let x = solve(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
        assert!(solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn top_k_ties_prefer_small_index() {
        assert_eq!(top_k(&[1.0, -2.0, 2.0, 0.5], 2), vec![1, 2]);
        assert_eq!(top_k(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
    }
}
