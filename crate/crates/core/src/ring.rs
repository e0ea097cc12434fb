//! The tensor-ring container, point evaluation, dense contraction for small
//! instances, the relative error metric and a plain-text file format.
//!
//! Core `k` has shape `r_{k-1} x n x r_k` with `r_0 := r_d`. On disk and in
//! [`TrCore::to_flat`] core data is linearised with axis 0 (left bond) fastest,
//! then the physical index, then the right bond.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TrError};
use crate::oracle::Function;
use crate::tensor::{increment, DenseTensor, MultiIndex};
use crate::Matrix;

/// One 3-tensor of the ring, stored as `n` slices of shape `r_left x r_right`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrCore {
    slices: Vec<Matrix>,
}

impl TrCore {
    pub fn new(slices: Vec<Matrix>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| TrError::InvalidArgument("core needs at least one slice".into()))?;
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 || slices.iter().any(|s| s.shape() != shape) {
            return Err(TrError::InvalidArgument(
                "core slices must share a nonempty shape".into(),
            ));
        }
        Ok(Self { slices })
    }

    pub fn zeros(r_left: usize, n: usize, r_right: usize) -> Self {
        Self {
            slices: vec![Matrix::zeros(r_left, r_right); n],
        }
    }

    /// Builds a core from data linearised with axis 0 fastest.
    pub fn from_flat(r_left: usize, n: usize, r_right: usize, data: &[f64]) -> Result<Self> {
        if data.len() != r_left * n * r_right {
            return Err(TrError::ShapeMismatch {
                shape: vec![r_left, n, r_right],
                len: data.len(),
            });
        }
        let slices = (0..n)
            .map(|v| Matrix::from_fn(r_left, r_right, |a, b| data[a + r_left * (v + n * b)]))
            .collect();
        Self::new(slices)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let (rl, n, rr) = self.shape();
        let mut out = vec![0.0; rl * n * rr];
        for (v, s) in self.slices.iter().enumerate() {
            for b in 0..rr {
                for a in 0..rl {
                    out[a + rl * (v + n * b)] = s[(a, b)];
                }
            }
        }
        out
    }

    /// `(r_left, n, r_right)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let (rl, rr) = self.slices[0].shape();
        (rl, self.slices.len(), rr)
    }

    pub fn r_left(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn r_right(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn size(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, v: usize) -> &Matrix {
        &self.slices[v]
    }

    pub fn slice_mut(&mut self, v: usize) -> &mut Matrix {
        &mut self.slices[v]
    }

    pub fn slices(&self) -> &[Matrix] {
        &self.slices
    }

    pub fn get(&self, a: usize, v: usize, b: usize) -> f64 {
        self.slices[v][(a, b)]
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// A cyclic chain of cores with matching bonds and a common physical size.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRing {
    cores: Vec<TrCore>,
}

impl TensorRing {
    pub fn new(cores: Vec<TrCore>) -> Result<Self> {
        if cores.is_empty() {
            return Err(TrError::InvalidArgument(
                "ring needs at least one core".into(),
            ));
        }
        let n = cores[0].size();
        let d = cores.len();
        for k in 0..d {
            if cores[k].size() != n {
                return Err(TrError::InvalidArgument(format!(
                    "core {} has physical size {}, expected {n}",
                    k + 1,
                    cores[k].size()
                )));
            }
            let next = (k + 1) % d;
            if cores[k].r_right() != cores[next].r_left() {
                return Err(TrError::BondMismatch {
                    left: k + 1,
                    right: next + 1,
                    right_rank: cores[k].r_right(),
                    left_rank: cores[next].r_left(),
                });
            }
        }
        Ok(Self { cores })
    }

    /// Every slice filled with the constant `value`.
    pub fn constant(d: usize, n: usize, r: usize, value: f64) -> Self {
        let core = TrCore {
            slices: vec![Matrix::from_element(r, r, value); n],
        };
        Self {
            cores: vec![core; d],
        }
    }

    /// Every slice the `r x r` identity.
    pub fn identity(d: usize, n: usize, r: usize) -> Self {
        let core = TrCore {
            slices: vec![Matrix::identity(r, r); n],
        };
        Self {
            cores: vec![core; d],
        }
    }

    /// I.i.d. Gaussian entries with standard deviation `std`.
    pub fn random_gaussian(d: usize, n: usize, r: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("finite std");
        let cores = (0..d)
            .map(|_| TrCore {
                slices: (0..n)
                    .map(|_| Matrix::from_fn(r, r, |_, _| normal.sample(&mut rng)))
                    .collect(),
            })
            .collect();
        Self { cores }
    }

    /// A strictly positive ring built from a nearest-neighbour Gibbs weight.
    ///
    /// Slice `H^k[x] = a_k(x) b_k(x)^T + (mixing / r) R_k(x)` with `a`, `b`
    /// entries uniform in `[0.5, 1.5)` and `R` entries uniform in `[0, 1)`.
    /// With `mixing = 0` the ring is exactly `prod_k g_k(x_k, x_{k+1})` with
    /// `g_k(x, y) = b_k(x)^T a_{k+1}(y)`, a Markov chain whose segment products
    /// are all rank one; larger `mixing` moves it away from that structure.
    pub fn gibbs_chain(d: usize, n: usize, r: usize, mixing: f64, seed: u64) -> Self {
        assert!(
            mixing >= 0.0 && mixing.is_finite(),
            "mixing must be finite and >= 0"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cores = (0..d)
            .map(|_| {
                let slices = (0..n)
                    .map(|_| {
                        let a = nalgebra::DVector::from_fn(r, |_, _| 0.5 + rng.random::<f64>());
                        let b = nalgebra::DVector::from_fn(r, |_, _| 0.5 + rng.random::<f64>());
                        let noise = Matrix::from_fn(r, r, |_, _| rng.random::<f64>());
                        a * b.transpose() + noise * (mixing / r as f64)
                    })
                    .collect();
                TrCore { slices }
            })
            .collect();
        Self { cores }
    }

    pub fn dims(&self) -> usize {
        self.cores.len()
    }

    pub fn size(&self) -> usize {
        self.cores[0].size()
    }

    /// Right bond dimension of every core, `(r_1, ..., r_d)`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores.iter().map(TrCore::r_right).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.cores
            .iter()
            .map(|c| {
                let (a, n, b) = c.shape();
                a * n * b
            })
            .sum()
    }

    pub fn core(&self, k: usize) -> &TrCore {
        &self.cores[k]
    }

    pub fn cores(&self) -> &[TrCore] {
        &self.cores
    }

    /// Replaces core `k`; the bond dimensions must be unchanged.
    pub fn set_core(&mut self, k: usize, core: TrCore) -> Result<()> {
        let old = &self.cores[k];
        if core.r_left() != old.r_left()
            || core.r_right() != old.r_right()
            || core.size() != old.size()
        {
            return Err(TrError::ShapeMismatch {
                shape: vec![core.r_left(), core.size(), core.r_right()],
                len: old.r_left() * old.size() * old.r_right(),
            });
        }
        self.cores[k] = core;
        Ok(())
    }

    pub(crate) fn cores_mut(&mut self) -> &mut [TrCore] {
        &mut self.cores
    }

    pub fn is_finite(&self) -> bool {
        self.cores.iter().all(TrCore::is_finite)
    }

    /// Ring with core `k` moved to position `k - shift` (cyclically).
    pub fn rotate(&self, shift: usize) -> Self {
        let mut cores = self.cores.clone();
        cores.rotate_left(shift % self.dims());
        Self { cores }
    }

    /// `Tr(H^1[x_1] ... H^d[x_d])` at a 0-based index.
    pub fn eval(&self, x: &[usize]) -> f64 {
        let mut acc = Vec::new();
        let mut tmp = Vec::new();
        self.eval_with(x, &mut acc, &mut tmp)
    }

    fn eval_with(&self, x: &[usize], acc: &mut Vec<f64>, tmp: &mut Vec<f64>) -> f64 {
        let first = self.cores[0].slice(x[0]);
        let rows = first.nrows();
        acc.clear();
        acc.extend_from_slice(first.as_slice());
        let mut inner = first.ncols();
        for (core, &xi) in self.cores.iter().zip(x).skip(1) {
            let s = core.slice(xi);
            let cols = s.ncols();
            let sd = s.as_slice();
            tmp.clear();
            tmp.resize(rows * cols, 0.0);
            for j in 0..cols {
                for l in 0..inner {
                    let w = sd[l + inner * j];
                    if w == 0.0 {
                        continue;
                    }
                    let src = &acc[rows * l..rows * (l + 1)];
                    let dst = &mut tmp[rows * j..rows * (j + 1)];
                    for (o, &a) in dst.iter_mut().zip(src) {
                        *o += a * w;
                    }
                }
            }
            std::mem::swap(acc, tmp);
            inner = cols;
        }
        (0..rows).map(|i| acc[i + rows * i]).sum()
    }

    /// Point evaluation at a validated 1-based multi-index.
    pub fn eval_tr(&self, x: &MultiIndex) -> Result<f64> {
        x.validate(self.dims(), self.size())?;
        Ok(self.eval(&x.to_zero_based()))
    }

    /// Evaluates many 0-based points; order of results matches `points`.
    pub fn eval_many(&self, points: &[Vec<usize>]) -> Vec<f64> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if points.len() >= 512 {
                return points
                    .par_chunks(256)
                    .flat_map_iter(|chunk| {
                        let mut acc = Vec::new();
                        let mut tmp = Vec::new();
                        chunk
                            .iter()
                            .map(|x| self.eval_with(x, &mut acc, &mut tmp))
                            .collect::<Vec<_>>()
                    })
                    .collect();
            }
        }
        let mut acc = Vec::new();
        let mut tmp = Vec::new();
        points
            .iter()
            .map(|x| self.eval_with(x, &mut acc, &mut tmp))
            .collect()
    }

    /// Materialises every entry. Fails when `n^d` exceeds `budget`.
    pub fn full_contract(&self, budget: u128) -> Result<DenseTensor> {
        let d = self.dims();
        let n = self.size();
        let entries = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
        if entries > budget {
            return Err(TrError::BudgetExceeded { entries, budget });
        }
        let shape = vec![n; d];
        let mut idx = vec![0usize; d];
        let mut data = Vec::with_capacity(entries as usize);
        let mut acc = Vec::new();
        let mut tmp = Vec::new();
        for _ in 0..entries {
            data.push(self.eval_with(&idx, &mut acc, &mut tmp));
            increment(&mut idx, &shape);
        }
        DenseTensor::new(shape, data)
    }

    /// Plain-text serialisation; floats use the shortest exact representation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# tensor ring: core k is r_{k-1} x n x r_k, data with left bond fastest\n");
        let _ = writeln!(out, "d {}", self.dims());
        let _ = writeln!(out, "n {}", self.size());
        let ranks: Vec<String> = self.ranks().iter().map(|r| r.to_string()).collect();
        let _ = writeln!(out, "ranks {}", ranks.join(" "));
        for (k, core) in self.cores.iter().enumerate() {
            let _ = writeln!(out, "core {}", k + 1);
            let vals: Vec<String> = core.to_flat().iter().map(|v| format!("{v:e}")).collect();
            for chunk in vals.chunks(8) {
                out.push_str(&chunk.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<(usize, Vec<usize>)> {
            let (line, l) = lines.next().ok_or(TrError::Parse {
                line: 0,
                message: format!("missing '{key}' header"),
            })?;
            let mut parts = l.split_whitespace();
            if parts.next() != Some(key) {
                return Err(TrError::Parse {
                    line,
                    message: format!("expected '{key}'"),
                });
            }
            let vals = parts
                .map(|p| p.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| TrError::Parse {
                    line,
                    message: e.to_string(),
                })?;
            Ok((line, vals))
        };
        let (_, d) = header("d")?;
        let (_, n) = header("n")?;
        let (rline, ranks) = header("ranks")?;
        let (d, n) = match (d.as_slice(), n.as_slice()) {
            ([d], [n]) if *d > 0 && *n > 0 => (*d, *n),
            _ => {
                return Err(TrError::Parse {
                    line: rline,
                    message: "d and n must be single positive integers".into(),
                })
            }
        };
        if ranks.len() != d || ranks.contains(&0) {
            return Err(TrError::Parse {
                line: rline,
                message: format!("expected {d} positive ranks"),
            });
        }
        let mut cores = Vec::with_capacity(d);
        let mut values: Vec<f64> = Vec::new();
        let mut current: Option<usize> = None;
        let mut last_line = rline;
        let flush = |k: usize, values: &[f64], line: usize| -> Result<TrCore> {
            let rl = ranks[(k + d - 1) % d];
            let rr = ranks[k];
            TrCore::from_flat(rl, n, rr, values).map_err(|_| TrError::Parse {
                line,
                message: format!(
                    "core {} has {} values, expected {}",
                    k + 1,
                    values.len(),
                    rl * n * rr
                ),
            })
        };
        for (line, l) in lines {
            last_line = line;
            if let Some(rest) = l.strip_prefix("core") {
                let k: usize = rest.trim().parse().map_err(|_| TrError::Parse {
                    line,
                    message: "bad core header".into(),
                })?;
                if let Some(prev) = current {
                    cores.push(flush(prev, &values, line)?);
                    values.clear();
                }
                if k != cores.len() + 1 {
                    return Err(TrError::Parse {
                        line,
                        message: format!("expected core {}", cores.len() + 1),
                    });
                }
                current = Some(k - 1);
                continue;
            }
            if current.is_none() {
                return Err(TrError::Parse {
                    line,
                    message: "data before first core header".into(),
                });
            }
            for tok in l.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|e| TrError::Parse {
                    line,
                    message: e.to_string(),
                })?);
            }
        }
        match current {
            Some(prev) => cores.push(flush(prev, &values, last_line)?),
            None => {
                return Err(TrError::Parse {
                    line: last_line,
                    message: "no cores".into(),
                })
            }
        }
        if cores.len() != d {
            return Err(TrError::Parse {
                line: last_line,
                message: format!("found {} cores, expected {d}", cores.len()),
            });
        }
        Self::new(cores)
    }
}

/// Relative error `sqrt(sum (ring - f)^2 / sum f^2)` over `points` (0-based).
pub fn error_e<F: Function + ?Sized>(
    ring: &TensorRing,
    f: &F,
    points: &[Vec<usize>],
) -> Result<f64> {
    if points.is_empty() {
        return Err(TrError::InvalidArgument("empty evaluation set".into()));
    }
    let approx = ring.eval_many(points);
    let exact = function_values(f, points);
    relative_error(&approx, &exact)
}

pub(crate) fn function_values<F: Function + ?Sized>(f: &F, points: &[Vec<usize>]) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if points.len() >= 512 {
            return points.par_iter().map(|x| f.eval(x)).collect();
        }
    }
    points.iter().map(|x| f.eval(x)).collect()
}

/// `||approx - exact|| / ||exact||`, summed in order.
pub fn relative_error(approx: &[f64], exact: &[f64]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &e) in approx.iter().zip(exact) {
        num += (a - e) * (a - e);
        den += e * e;
    }
    if den == 0.0 {
        return Err(TrError::ZeroReference);
    }
    let err = (num / den).sqrt();
    if !err.is_finite() {
        return Err(TrError::NonFinite("relative error".into()));
    }
    Ok(err)
}

/// Evaluation points: the full grid when `n^d <= count`, else `count` points
/// with i.i.d. uniform coordinates. Deterministic in `seed`.
pub fn sample_eval_set(d: usize, n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let total = (n as u128).checked_pow(d as u32);
    if let Some(total) = total.filter(|&t| t <= count as u128) {
        let shape = vec![n; d];
        let mut idx = vec![0usize; d];
        let mut out = Vec::with_capacity(total as usize);
        for _ in 0..total {
            out.push(idx.clone());
            increment(&mut idx, &shape);
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..d).map(|_| rng.random_range(0..n)).collect())
        .collect()
}
