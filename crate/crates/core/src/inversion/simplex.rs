//! Dense primal simplex for L1 projection onto the probability simplex.
//!
//! Solves
//!
//! ```text
//! min  sum_i (u_i + v_i)
//! s.t. sum_j K_ij p_j + u_i - v_i = d_i     i = 0..N
//!      sum_j p_j = 1
//!      p, u, v >= 0
//! ```
//!
//! which is the standard-form expansion of `min_p sum_i |d_i - (K p)_i|`
//! over the simplex, with `eps_i = u_i + v_i`. Starting from the best single
//! vertex `p = e_j` the initial basis is feasible, so no phase one is needed.

use crate::error::{Error, Result};

/// Entering-variable rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PivotRule {
    /// Lowest-index improving column.
    #[default]
    Bland,
    /// Most negative reduced cost, falling back to Bland after a run of
    /// degenerate pivots.
    Dantzig,
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub p: Vec<f64>,
    /// Dual values of the residual rows, each in `[-1, 1]`.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

const TOL: f64 = 1e-11;
/// Pivots between rebuilds of the tableau from the original data.
const REFACTOR_EVERY: usize = 500;
/// Primal infeasibility tolerated by the ratio test.
const FEASIBILITY_TOL: f64 = 1e-9;
/// Pivots below this fraction of the largest entry in their column are refused.
const PIVOT_TOL: f64 = 1e-7;

/// `k` is row-major `rows x cols`.
pub fn solve_l1_simplex(
    k: &[f64],
    d: &[f64],
    rows: usize,
    cols: usize,
    rule: PivotRule,
    max_iterations: usize,
) -> Result<L1Solution> {
    debug_assert_eq!(k.len(), rows * cols);
    debug_assert_eq!(d.len(), rows);
    // column layout: p_0..p_{M-1}, u_0..u_{N-1}, v_0..v_{N-1}, rhs
    let n_vars = cols + 2 * rows;
    let width = n_vars + 1;
    let height = rows + 1;
    let rhs = n_vars;
    let u = |i: usize| cols + i;
    let v = |i: usize| cols + rows + i;

    // best starting vertex
    let j0 = (0..cols)
        .min_by(|&a, &b| {
            let fa: f64 = (0..rows).map(|i| (d[i] - k[i * cols + a]).abs()).sum();
            let fb: f64 = (0..rows).map(|i| (d[i] - k[i * cols + b]).abs()).sum();
            fa.total_cmp(&fb)
        })
        .ok_or(Error::Empty("no input symbols"))?;

    let mut t = vec![0.0; height * width];
    let mut basis = vec![0usize; height];
    for i in 0..rows {
        let r = d[i] - k[i * cols + j0];
        let sign = if r >= 0.0 { 1.0 } else { -1.0 };
        let row = &mut t[i * width..(i + 1) * width];
        for j in 0..cols {
            row[j] = sign * (k[i * cols + j] - k[i * cols + j0]);
        }
        row[u(i)] = sign;
        row[v(i)] = -sign;
        row[rhs] = sign * r;
        basis[i] = if sign > 0.0 { u(i) } else { v(i) };
    }
    {
        let row = &mut t[rows * width..(rows + 1) * width];
        row[..cols].fill(1.0);
        row[rhs] = 1.0;
        basis[rows] = j0;
    }

    // reduced costs: c_j - c_B^T T_j, with c = 1 on u and v
    let mut reduced = vec![0.0; width];
    reduced[cols..n_vars].fill(1.0);
    for (r, &b) in basis.iter().enumerate() {
        if b >= cols {
            let row = &t[r * width..(r + 1) * width];
            for (rc, x) in reduced.iter_mut().zip(row) {
                *rc -= x;
            }
        }
    }

    let mut is_basic = vec![false; n_vars];
    for &b in &basis {
        is_basic[b] = true;
    }

    let mut iterations = 0;
    let mut degenerate_run = 0usize;
    let mut since_refactor = 0usize;
    let mut col_buf = vec![0.0; height];
    loop {
        let use_bland = rule == PivotRule::Bland || degenerate_run > 50;
        let entering = if use_bland {
            (0..n_vars).find(|&j| !is_basic[j] && reduced[j] < -TOL)
        } else {
            (0..n_vars)
                .filter(|&j| !is_basic[j] && reduced[j] < -TOL)
                .min_by(|&a, &b| reduced[a].total_cmp(&reduced[b]))
        };
        let Some(e) = entering else {
            // confirm optimality on a freshly factorised tableau
            if since_refactor > 0 && refactor(k, d, rows, cols, &mut basis, &mut t, &mut reduced) {
                since_refactor = 0;
                continue;
            }
            break;
        };
        if iterations >= max_iterations {
            let objective = -reduced[rhs];
            return Err(Error::SolverNonConvergence {
                iterations,
                detail: format!("objective {objective:.6e}, most negative reduced cost {:.3e}", reduced[e]),
            });
        }

        // ratio test; ties go to the smallest basic variable index
        let col_max = (0..height).map(|r| t[r * width + e].abs()).fold(0.0, f64::max);
        let mut leave = ratio_test(&t, &basis, width, e, rhs, TOL.max(PIVOT_TOL * col_max));
        if leave.is_none() {
            leave = ratio_test(&t, &basis, width, e, rhs, TOL);
        }
        // the objective is bounded below by zero, so a column with no
        // positive entry can only be numerical noise
        let Some((lr, ratio)) = leave else {
            reduced[e] = 0.0;
            continue;
        };
        degenerate_run = if ratio.abs() < 1e-14 { degenerate_run + 1 } else { 0 };
        // a slightly negative basic value would be amplified by the pivot
        if t[lr * width + rhs] < 0.0 {
            t[lr * width + rhs] = 0.0;
        }

        let pivot = t[lr * width + e];
        {
            let prow = &mut t[lr * width..(lr + 1) * width];
            for x in prow.iter_mut() {
                *x /= pivot;
            }
            prow[e] = 1.0;
        }
        for r in 0..height {
            col_buf[r] = t[r * width + e];
        }
        let (before, rest) = t.split_at_mut(lr * width);
        let (prow, after) = rest.split_at_mut(width);
        let prow: &[f64] = prow;
        let eliminate = |row: &mut [f64], f: f64| {
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow) {
                    *x -= f * p;
                }
            }
        };
        for (r, row) in before.chunks_mut(width).enumerate() {
            eliminate(row, col_buf[r]);
            row[e] = 0.0;
        }
        for (r, row) in after.chunks_mut(width).enumerate() {
            eliminate(row, col_buf[lr + 1 + r]);
            row[e] = 0.0;
        }
        let f = reduced[e];
        for (x, p) in reduced.iter_mut().zip(prow) {
            *x -= f * p;
        }
        reduced[e] = 0.0;
        // rounding can push a degenerate basic value slightly negative,
        // which breaks the ratio test
        for row in t.chunks_mut(width) {
            if row[rhs] < 0.0 && row[rhs] > -1e-12 {
                row[rhs] = 0.0;
            }
        }

        is_basic[basis[lr]] = false;
        is_basic[e] = true;
        basis[lr] = e;
        iterations += 1;
        since_refactor += 1;
        if since_refactor >= REFACTOR_EVERY && refactor(k, d, rows, cols, &mut basis, &mut t, &mut reduced) {
            since_refactor = 0;
        }
    }

    let mut p = vec![0.0; cols];
    for (r, &b) in basis.iter().enumerate() {
        if b < cols {
            p[b] = t[r * width + rhs].max(0.0);
        }
    }
    let duals = basis_duals(k, rows, cols, &basis)
        .unwrap_or_else(|| (0..rows).map(|i| 1.0 - reduced[u(i)]).collect())
        .into_iter()
        .map(|y| y.clamp(-1.0, 1.0))
        .collect();
    Ok(L1Solution { p, duals, iterations })
}

/// Harris two-pass ratio test for entering column `e` over pivots above
/// `tol`: the step may overshoot feasibility by [`FEASIBILITY_TOL`], and
/// among the rows that allow it the largest pivot leaves (ties to the
/// smallest basic variable index).
fn ratio_test(t: &[f64], basis: &[usize], width: usize, e: usize, rhs: usize, tol: f64) -> Option<(usize, f64)> {
    let bound = t
        .chunks(width)
        .filter(|row| row[e] > tol)
        .map(|row| (row[rhs].max(0.0) + FEASIBILITY_TOL) / row[e])
        .fold(f64::INFINITY, f64::min);
    if !bound.is_finite() {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (r, row) in t.chunks(width).enumerate() {
        let a = row[e];
        if a > tol && row[rhs].max(0.0) / a <= bound {
            let better = match best {
                None => true,
                Some((br, ba)) => a > ba || (a == ba && basis[r] < basis[br]),
            };
            if better {
                best = Some((r, a));
            }
        }
    }
    best.map(|(r, a)| (r, t[r * width + rhs].max(0.0) / a))
}

/// Rebuilds the tableau and reduced costs for the current basis by
/// Gauss-Jordan elimination on the original constraints, discarding the
/// rounding error accumulated by the pivots. Rows are reassigned to basic
/// variables as the elimination pivots; leaves everything untouched and
/// returns false if the basis is numerically singular.
fn refactor(
    k: &[f64],
    d: &[f64],
    rows: usize,
    cols: usize,
    basis: &mut [usize],
    t: &mut [f64],
    reduced: &mut [f64],
) -> bool {
    let n_vars = cols + 2 * rows;
    let width = n_vars + 1;
    let height = rows + 1;
    let mut g = vec![0.0; height * width];
    for i in 0..rows {
        let row = &mut g[i * width..(i + 1) * width];
        row[..cols].copy_from_slice(&k[i * cols..(i + 1) * cols]);
        row[cols + i] = 1.0;
        row[cols + rows + i] = -1.0;
        row[n_vars] = d[i];
    }
    for x in &mut g[rows * width..rows * width + cols] {
        *x = 1.0;
    }
    g[rows * width + n_vars] = 1.0;

    let mut used = vec![false; height];
    let mut new_basis = vec![usize::MAX; height];
    let mut pivot_row = vec![0.0; width];
    for &b in basis.iter() {
        let Some(r) = (0..height)
            .filter(|&r| !used[r])
            .max_by(|&x, &y| g[x * width + b].abs().total_cmp(&g[y * width + b].abs()))
        else {
            return false;
        };
        let a = g[r * width + b];
        if a.abs() < 1e-12 {
            return false;
        }
        used[r] = true;
        new_basis[r] = b;
        for x in &mut g[r * width..(r + 1) * width] {
            *x /= a;
        }
        pivot_row.copy_from_slice(&g[r * width..(r + 1) * width]);
        for (q, row) in g.chunks_mut(width).enumerate() {
            let f = row[b];
            if q != r && f != 0.0 {
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * p;
                }
                row[b] = 0.0;
            }
        }
    }
    for row in g.chunks_mut(width) {
        if row[n_vars] < 0.0 && row[n_vars] > -1e-9 {
            row[n_vars] = 0.0;
        }
    }
    t.copy_from_slice(&g);
    basis.copy_from_slice(&new_basis);
    reduced.iter_mut().for_each(|x| *x = 0.0);
    for x in &mut reduced[cols..n_vars] {
        *x = 1.0;
    }
    for (r, &b) in basis.iter().enumerate() {
        if b >= cols {
            for (rc, x) in reduced.iter_mut().zip(&t[r * width..(r + 1) * width]) {
                *rc -= x;
            }
        }
    }
    true
}

/// Duals recomputed from the original data and the final basis, which is
/// far more accurate than the running reduced costs. A basic `u_i` (`v_i`)
/// pins `y_i = 1` (`-1`); every basic `p_j` gives `(K^T y)_j + y_0 = 0`.
fn basis_duals(k: &[f64], rows: usize, cols: usize, basis: &[usize]) -> Option<Vec<f64>> {
    let mut y = vec![f64::NAN; rows];
    let mut basic_p = Vec::new();
    for &b in basis {
        if b < cols {
            basic_p.push(b);
        } else if b < cols + rows {
            y[b - cols] = 1.0;
        } else {
            y[b - cols - rows] = -1.0;
        }
    }
    let free: Vec<usize> = (0..rows).filter(|&i| y[i].is_nan()).collect();
    let n = free.len() + 1;
    if n != basic_p.len() {
        return None;
    }
    // unknowns: y_free..., y_0
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (r, &j) in basic_p.iter().enumerate() {
        for (c, &i) in free.iter().enumerate() {
            a[r * n + c] = k[i * cols + j];
        }
        a[r * n + n - 1] = 1.0;
        rhs[r] = -(0..rows)
            .filter(|&i| !y[i].is_nan())
            .map(|i| k[i * cols + j] * y[i])
            .sum::<f64>();
    }
    let sol = solve_square(a, rhs, n)?;
    for (c, &i) in free.iter().enumerate() {
        y[i] = sol[c];
    }
    Some(y)
}

/// Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r * n + c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(k: &[f64], d: &[f64], p: &[f64], cols: usize) -> f64 {
        d.iter()
            .enumerate()
            .map(|(i, di)| (di - (0..cols).map(|j| k[i * cols + j] * p[j]).sum::<f64>()).abs())
            .sum()
    }

    #[test]
    fn recovers_exact_mixture() {
        // three columns, data = 0.2 c0 + 0.8 c2
        let k = [1.0, 0.0, 0.5, 0.0, 1.0, 0.5, 0.5, 0.5, 0.0, 0.2, 0.1, 1.0];
        let (rows, cols) = (4, 3);
        let d: Vec<f64> = (0..rows).map(|i| 0.2 * k[i * cols] + 0.8 * k[i * cols + 2]).collect();
        for rule in [PivotRule::Bland, PivotRule::Dantzig] {
            let s = solve_l1_simplex(&k, &d, rows, cols, rule, 1000).unwrap();
            assert!((s.p[0] - 0.2).abs() < 1e-12 && s.p[1].abs() < 1e-12 && (s.p[2] - 0.8).abs() < 1e-12);
            assert!(objective(&k, &d, &s.p, cols) < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_on_two_columns() {
        // p = (t, 1 - t): scan t finely and compare
        let k = [1.0, 0.0, 0.3, 0.7, 0.0, 1.0, 0.6, 0.2, 0.9, 0.4];
        let (rows, cols) = (5, 2);
        let d = [0.1, 0.9, 0.3, 0.8, 0.5];
        let s = solve_l1_simplex(&k, &d, rows, cols, PivotRule::Bland, 1000).unwrap();
        let best = (0..=100_000)
            .map(|i| {
                let t = i as f64 / 100_000.0;
                objective(&k, &d, &[t, 1.0 - t], cols)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((objective(&k, &d, &s.p, cols) - best).abs() < 1e-4);
        assert!(objective(&k, &d, &s.p, cols) <= best + 1e-12);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let k = [1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        let d = [0.3, 0.7, 0.5];
        let err = solve_l1_simplex(&k, &d, 3, 2, PivotRule::Bland, 0);
        assert!(matches!(err, Err(Error::SolverNonConvergence { .. })));
    }
}
