//! Diagonally preconditioned primal-dual iterations for
//! `min_{p in simplex} ||K p - d||_1`.
//!
//! Used for tuple alphabets, where the operator is a Kronecker power of a
//! one-dimensional kernel matrix and a dense tableau is out of reach. The
//! duality gap `||Kp - d||_1 - (<z, d> - max_j (K^T z)_j)` for any `|z| <= 1`
//! certifies every returned point.

use rayon::prelude::*;

/// A linear map with cheap absolute row and column sums.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64>;
    fn row_abs_sums(&self) -> Vec<f64>;
    fn col_abs_sums(&self) -> Vec<f64>;
}

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .par_chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, yi) in self.data.chunks(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }
    fn row_abs_sums(&self) -> Vec<f64> {
        self.data.chunks(self.cols).map(|r| r.iter().map(|v| v.abs()).sum()).collect()
    }
    fn col_abs_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.abs();
            }
        }
        out
    }
}

/// `A ⊗ A ⊗ ... ⊗ A` (`dim` factors) acting on row-major tensors, with `A`
/// of shape `g x m`.
#[derive(Debug, Clone)]
pub struct KroneckerPower {
    pub factor: DenseOperator,
    pub dim: usize,
}

impl KroneckerPower {
    /// Multiplies mode `axis` of a tensor with `shape` by `mat` (`out x in`).
    fn mode_product(tensor: &[f64], shape: &[usize], axis: usize, mat: &[f64], out_len: usize) -> Vec<f64> {
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let in_len = shape[axis];
        let mut result = vec![0.0; outer * out_len * inner];
        result
            .par_chunks_mut(out_len * inner)
            .enumerate()
            .for_each(|(o, block)| {
                let src = &tensor[o * in_len * inner..(o + 1) * in_len * inner];
                for r in 0..out_len {
                    let dst = &mut block[r * inner..(r + 1) * inner];
                    for c in 0..in_len {
                        let a = mat[r * in_len + c];
                        if a == 0.0 {
                            continue;
                        }
                        let s = &src[c * inner..(c + 1) * inner];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += a * v;
                        }
                    }
                }
            });
        result
    }

    fn transpose_factor(&self) -> Vec<f64> {
        let (g, m) = (self.factor.rows, self.factor.cols);
        let mut t = vec![0.0; g * m];
        for r in 0..g {
            for c in 0..m {
                t[c * g + r] = self.factor.data[r * m + c];
            }
        }
        t
    }

    fn kron_vector(v: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![1.0];
        for _ in 0..dim {
            out = out.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        }
        out
    }
}

impl LinearOperator for KroneckerPower {
    fn rows(&self) -> usize {
        self.factor.rows.pow(self.dim as u32)
    }
    fn cols(&self) -> usize {
        self.factor.cols.pow(self.dim as u32)
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (g, m) = (self.factor.rows, self.factor.cols);
        let mut shape = vec![m; self.dim];
        let mut cur = x.to_vec();
        for axis in 0..self.dim {
            cur = Self::mode_product(&cur, &shape, axis, &self.factor.data, g);
            shape[axis] = g;
        }
        cur
    }
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let (g, m) = (self.factor.rows, self.factor.cols);
        let t = self.transpose_factor();
        let mut shape = vec![g; self.dim];
        let mut cur = y.to_vec();
        for axis in 0..self.dim {
            cur = Self::mode_product(&cur, &shape, axis, &t, m);
            shape[axis] = m;
        }
        cur
    }
    fn row_abs_sums(&self) -> Vec<f64> {
        Self::kron_vector(&self.factor.row_abs_sums(), self.dim)
    }
    fn col_abs_sums(&self) -> Vec<f64> {
        Self::kron_vector(&self.factor.col_abs_sums(), self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrimalDualOptions {
    pub max_iterations: usize,
    /// Stop once `gap <= relative_gap * max(primal, 1e-12)`.
    pub relative_gap: f64,
    pub check_every: usize,
}

impl Default for PrimalDualOptions {
    fn default() -> Self {
        PrimalDualOptions {
            max_iterations: 20_000,
            relative_gap: 1e-4,
            check_every: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrimalDualOutcome {
    pub p: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `||K p - d||_1`.
pub fn l1_objective<O: LinearOperator>(op: &O, d: &[f64], p: &[f64]) -> f64 {
    op.apply(p).iter().zip(d).map(|(a, b)| (a - b).abs()).sum()
}

/// Lower bound `<z, d> - max_j (K^T z)_j` for `|z| <= 1`.
pub fn dual_bound<O: LinearOperator>(op: &O, d: &[f64], z: &[f64]) -> f64 {
    let kz = op.apply_transpose(z);
    let max = kz.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    z.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() - max
}

pub fn solve_l1_primal_dual<O: LinearOperator>(
    op: &O,
    d: &[f64],
    start: Option<&[f64]>,
    opts: &PrimalDualOptions,
) -> PrimalDualOutcome {
    let m = op.cols();
    let n = op.rows();
    let col = op.col_abs_sums();
    let row = op.row_abs_sums();
    let tau_cap = col
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| 1.0 / c)
        .fold(0.0, f64::max)
        .max(1.0);
    let tau: Vec<f64> = col.iter().map(|c| if *c > 0.0 { 1.0 / c } else { tau_cap }).collect();
    let sigma: Vec<f64> = row.iter().map(|r| if *r > 0.0 { 1.0 / r } else { 0.0 }).collect();

    let mut p = match start {
        Some(s) => s.to_vec(),
        None => vec![1.0 / m as f64; m],
    };
    let mut p_bar = p.clone();
    let mut z = vec![0.0; n];
    let mut best_p = p.clone();
    let mut best_primal = l1_objective(op, d, &p);
    let mut best_dual = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut scratch = vec![0.0; m];

    while iterations < opts.max_iterations {
        let kp = op.apply(&p_bar);
        z.par_iter_mut()
            .zip(&kp)
            .zip(d)
            .zip(&sigma)
            .for_each(|(((zi, k), di), s)| *zi = (*zi + s * (k - di)).clamp(-1.0, 1.0));
        let kz = op.apply_transpose(&z);
        for j in 0..m {
            scratch[j] = p[j] - tau[j] * kz[j];
        }
        let next = project_weighted_simplex(&scratch, &tau);
        for j in 0..m {
            p_bar[j] = 2.0 * next[j] - p[j];
        }
        p = next;
        iterations += 1;

        if iterations % opts.check_every == 0 || iterations == opts.max_iterations {
            let primal = l1_objective(op, d, &p);
            if primal < best_primal {
                best_primal = primal;
                best_p.clone_from(&p);
            }
            best_dual = best_dual.max(dual_bound(op, d, &z));
            if best_primal - best_dual <= opts.relative_gap * best_primal.max(1e-12) {
                converged = true;
                break;
            }
        }
    }
    PrimalDualOutcome {
        p: best_p,
        primal: best_primal,
        dual: best_dual,
        iterations,
        converged,
    }
}

/// Projection onto the simplex in the metric `sum_j (p_j - v_j)^2 / tau_j`:
/// `p_j = max(0, v_j - tau_j * lambda)` with `lambda` chosen so the masses sum to one.
pub fn project_weighted_simplex(v: &[f64], tau: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    // breakpoints lambda_j = v_j / tau_j, largest first
    order.sort_unstable_by(|&a, &b| (v[b] / tau[b]).total_cmp(&(v[a] / tau[a])));
    let (mut sv, mut st) = (0.0, 0.0);
    let mut lambda = 0.0;
    for (idx, &j) in order.iter().enumerate() {
        sv += v[j];
        st += tau[j];
        let cand = (sv - 1.0) / st;
        let next_break = order.get(idx + 1).map(|&q| v[q] / tau[q]);
        lambda = cand;
        match next_break {
            Some(b) if cand < b => continue,
            _ => break,
        }
    }
    v.iter().zip(tau).map(|(vi, ti)| (vi - ti * lambda).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        let v = [0.4, -0.2, 1.3, 0.1];
        let tau = [1.0, 2.0, 0.5, 1.0];
        let p = project_weighted_simplex(&v, &tau);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| *x >= 0.0));
        // uniform metric reduces to Euclidean projection
        let p = project_weighted_simplex(&[0.5, 0.5, 0.5], &[1.0; 3]);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kronecker_matches_explicit_product() {
        let a = DenseOperator {
            rows: 3,
            cols: 2,
            data: vec![1.0, 2.0, 0.5, -1.0, 3.0, 0.0],
        };
        let kron = KroneckerPower { factor: a.clone(), dim: 2 };
        let mut full = vec![0.0; 9 * 4];
        for r1 in 0..3 {
            for r2 in 0..3 {
                for c1 in 0..2 {
                    for c2 in 0..2 {
                        full[(r1 * 3 + r2) * 4 + c1 * 2 + c2] = a.data[r1 * 2 + c1] * a.data[r2 * 2 + c2];
                    }
                }
            }
        }
        let dense = DenseOperator { rows: 9, cols: 4, data: full };
        let x = [0.3, -1.0, 2.0, 0.7];
        let y: Vec<f64> = (0..9).map(|i| i as f64 * 0.1 - 0.3).collect();
        for (u, v) in kron.apply(&x).iter().zip(dense.apply(&x)) {
            assert!((u - v).abs() < 1e-12);
        }
        for (u, v) in kron.apply_transpose(&y).iter().zip(dense.apply_transpose(&y)) {
            assert!((u - v).abs() < 1e-12);
        }
        assert_eq!(kron.row_abs_sums(), dense.row_abs_sums());
        assert_eq!(kron.col_abs_sums(), dense.col_abs_sums());
    }

    #[test]
    fn gap_closes_on_exact_mixture() {
        let op = DenseOperator {
            rows: 4,
            cols: 3,
            data: vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.5, 0.5, 0.5, 0.0, 0.2, 0.1, 1.0],
        };
        let truth = [0.2, 0.0, 0.8];
        let d = op.apply(&truth);
        let out = solve_l1_primal_dual(
            &op,
            &d,
            None,
            &PrimalDualOptions {
                relative_gap: 1e-9,
                ..Default::default()
            },
        );
        assert!(out.primal < 1e-6, "{}", out.primal);
        assert!(out.dual <= out.primal + 1e-12);
        for (a, b) in out.p.iter().zip(truth) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
