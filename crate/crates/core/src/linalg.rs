//! Dense kernels: truncated SVD, greedy pivoted-QR column selection, ridge
//! least squares and the pseudo-inverse.
//!
//! The SVD itself comes from `faer`; this module fixes ordering and signs
//! so results are reproducible across runs.

use crate::Matrix;

/// Thin SVD factors with `m ~ u * diag(s) * v^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.transpose()
    }
}

/// Full thin SVD, singular values nonincreasing, each left vector's
/// largest-magnitude entry made positive (first such entry on ties).
pub fn svd(m: &Matrix) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: Matrix::zeros(rows, 0),
            s: Vec::new(),
            v: Matrix::zeros(cols, 0),
        };
    }
    let Some((u, sv, v)) = faer_svd(m) else {
        return nan_svd(rows, cols, k);
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        sv[b]
            .partial_cmp(&sv[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out_u = Matrix::zeros(rows, k);
    let mut out_v = Matrix::zeros(cols, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let ucol = u.column(src);
        let mut pivot = 0;
        for i in 1..rows {
            if ucol[i].abs() > ucol[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if ucol[pivot] < 0.0 { -1.0 } else { 1.0 };
        out_u.set_column(dst, &(ucol * sign));
        out_v.set_column(dst, &(v.column(src) * sign));
        s.push(sv[src]);
    }
    Svd {
        u: out_u,
        s,
        v: out_v,
    }
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn faer_svd(m: &Matrix) -> Option<(Matrix, Vec<f64>, Matrix)> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let dec = to_faer(m).thin_svd().ok()?;
    let k = m.nrows().min(m.ncols());
    let s = (0..k).map(|i| dec.S()[i]).collect();
    Some((from_faer(dec.U()), s, from_faer(dec.V())))
}

fn nan_svd(rows: usize, cols: usize, k: usize) -> Svd {
    Svd {
        u: Matrix::from_element(rows, k, f64::NAN),
        s: vec![f64::NAN; k],
        v: Matrix::from_element(cols, k, f64::NAN),
    }
}

/// Default relative cutoff below which singular values count as zero.
pub fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols).max(1) as f64
}

/// Best rank-`r` approximation. Keeps `min(r, numerical rank)` triplets.
pub fn truncated_svd(m: &Matrix, r: usize) -> Svd {
    let full = svd(m);
    let tol = rank_tolerance(m.nrows(), m.ncols()) * full.s.first().copied().unwrap_or(0.0);
    let keep = full.s.iter().take_while(|&&v| v > tol).count().min(r);
    Svd {
        u: full.u.columns(0, keep).into_owned(),
        s: full.s[..keep].to_vec(),
        v: full.v.columns(0, keep).into_owned(),
    }
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s = svd(m).s;
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

const PIVOT_TIE: f64 = 1e-12;

/// Greedy column-pivoted QR selection of `min(s, ncols)` columns.
///
/// At each step the column with the largest residual norm (after projecting
/// out the columns already chosen) is taken; among columns within a relative
/// `1e-12` of the maximum the lowest index wins. Columns whose residual has
/// vanished are still returned, lowest index first, once the range is spanned.
pub fn rrqr_select(m: &Matrix, s: usize) -> Vec<usize> {
    let ncols = m.ncols();
    let take = s.min(ncols);
    let mut residual = m.clone();
    let mut chosen = vec![false; ncols];
    let mut picks = Vec::with_capacity(take);
    for _ in 0..take {
        let norms: Vec<f64> = (0..ncols)
            .map(|j| {
                if chosen[j] {
                    -1.0
                } else {
                    residual.column(j).norm()
                }
            })
            .collect();
        let max = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pivot = (0..ncols)
            .find(|&j| !chosen[j] && norms[j] >= max - PIVOT_TIE * max.abs())
            .expect("at least one free column");
        chosen[pivot] = true;
        picks.push(pivot);
        let pnorm = norms[pivot];
        let scale = m.column(pivot).norm();
        if pnorm <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) || pnorm == 0.0 {
            continue;
        }
        let q = residual.column(pivot) / pnorm;
        for (j, &taken) in chosen.iter().enumerate() {
            if taken {
                continue;
            }
            let coef = q.dot(&residual.column(j));
            residual.column_mut(j).axpy(-coef, &q, 1.0);
        }
    }
    picks
}

/// Outcome of a ridge least-squares solve.
#[derive(Debug, Clone)]
pub struct RidgeSolve {
    pub solution: Matrix,
    /// Largest eigenvalue of `A^T A`, i.e. `||A||_2^2`.
    pub hessian_top: f64,
    /// Singular values of `A` above the rank cutoff.
    pub rank: usize,
    pub full_rank: bool,
}

/// Minimises `||A h - b||^2 + lambda * sigma * ||h||^2` with `sigma = ||A||_2^2`.
///
/// Each column of `b` is an independent right-hand side. Solved through the
/// SVD of `A`, so `lambda = 0` gives the minimum-norm least-squares solution.
pub fn ridge_ls(a: &Matrix, b: &Matrix, lambda: f64) -> RidgeSolve {
    assert_eq!(a.nrows(), b.nrows(), "row mismatch in ridge_ls");
    let k = a.ncols();
    let dec = svd(a);
    let top = dec.s.first().copied().unwrap_or(0.0);
    let sigma = top * top;
    let shift = lambda * sigma;
    let tol = rank_tolerance(a.nrows(), k) * top;
    let rank = dec.s.iter().filter(|&&v| v > tol).count();
    let utb = dec.u.transpose() * b;
    let mut scaled = utb;
    for (i, &si) in dec.s.iter().enumerate() {
        let factor = if shift > 0.0 {
            si / (si * si + shift)
        } else if si > tol {
            1.0 / si
        } else {
            0.0
        };
        scaled.row_mut(i).scale_mut(factor);
    }
    RidgeSolve {
        solution: &dec.v * scaled,
        hessian_top: sigma,
        rank,
        full_rank: rank == k,
    }
}

/// Moore-Penrose pseudo-inverse, zeroing singular values at or below `tol * sigma_1`.
pub fn pinv(m: &Matrix, tol: f64) -> Matrix {
    let dec = svd(m);
    let top = dec.s.first().copied().unwrap_or(0.0);
    let mut v = dec.v.clone();
    for (j, &sj) in dec.s.iter().enumerate() {
        let inv = if sj > tol * top && sj > 0.0 {
            1.0 / sj
        } else {
            0.0
        };
        v.column_mut(j).scale_mut(inv);
    }
    v * dec.u.transpose()
}
