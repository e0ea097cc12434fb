//! Initial cores from local three-axis samples.
//!
//! For every axis `k` the block `f(x_{k-1}, x_k, x_{k+1}; z)` with the other
//! axes frozen is split by two truncated SVDs into a left factor, a centre
//! core and a right factor. The centre cores agree with the true cores only up
//! to an unknown change of basis on each bond; a small least-squares fit on a
//! four-axis block recovers the matrix that glues neighbouring centres.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrError};
use crate::linalg::{ridge_ls, singular_values, truncated_svd};
use crate::oracle::BlackBox;
use crate::ring::{TensorRing, TrCore};
use crate::skeleton::SkeletonSet;
use crate::Matrix;

/// Two-SVD factorisation of one sampled `n x n x n` block.
#[derive(Debug, Clone)]
pub struct LocalTriple {
    /// Centre axis `k` of the block.
    pub axis: usize,
    /// Full index whose other coordinates froze the block.
    pub base: Vec<usize>,
    /// Sampled block, `a + n (b + n c)` for `(x_{k-1}, x_k, x_{k+1}) = (a, b, c)`.
    pub block: Vec<f64>,
    /// `n x r`.
    pub left: Matrix,
    /// `r x n x r`.
    pub center: TrCore,
    /// `r x n`.
    pub right: Matrix,
    /// All singular values of the first unfolding.
    pub sigma_left: Vec<f64>,
    /// All singular values of the second unfolding.
    pub sigma_right: Vec<f64>,
    /// Bond dimensions kept before zero padding.
    pub retained: (usize, usize),
}

impl LocalTriple {
    /// `left * center[b] * right` for every `b`, in block order.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.left.nrows();
        let mut out = vec![0.0; n * n * n];
        for b in 0..n {
            let m = &self.left * self.center.slice(b) * &self.right;
            for c in 0..n {
                for a in 0..n {
                    out[a + n * (b + n * c)] = m[(a, c)];
                }
            }
        }
        out
    }

    /// Factors an `n^3` block (first axis fastest) at bond dimension `r`.
    pub fn from_block(
        axis: usize,
        base: Vec<usize>,
        block: Vec<f64>,
        n: usize,
        r: usize,
    ) -> Result<Self> {
        if block.len() != n * n * n {
            return Err(TrError::LengthMismatch {
                expected: n * n * n,
                got: block.len(),
            });
        }
        if r == 0 {
            return Err(TrError::InvalidArgument("rank must be positive".into()));
        }
        if let Some(bad) = block.iter().find(|v| !v.is_finite()) {
            return Err(TrError::NonFinite(format!("sampled block entry {bad}")));
        }
        let first = Matrix::from_column_slice(n, n * n, &block);
        let sigma_left = singular_values(&first);
        let dec_l = truncated_svd(&first, r);
        let r1 = dec_l.rank();

        // C(i, b, c) = (Sigma_L V_L^T)[i, b + n c], regrouped with rows i + r1 b.
        let c_flat = Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(&dec_l.s))
            * dec_l.v.transpose();
        let second = Matrix::from_fn(r1 * n, n, |row, c| {
            let i = row % r1.max(1);
            let b = row / r1.max(1);
            c_flat[(i, b + n * c)]
        });
        let sigma_right = if r1 == 0 {
            Vec::new()
        } else {
            singular_values(&second)
        };
        let dec_r = if r1 == 0 {
            None
        } else {
            Some(truncated_svd(&second, r))
        };
        let r2 = dec_r.as_ref().map_or(0, |d| d.rank());
        if r1 < r || r2 < r {
            log::warn!(
                "sampled block has rank ({r1}, {r2}) below requested {r}; padding with zeros"
            );
        }

        let mut left = Matrix::zeros(n, r);
        for i in 0..r1 {
            let w = dec_l.s[i].sqrt();
            for a in 0..n {
                left[(a, i)] = dec_l.u[(a, i)] * w;
            }
        }
        let mut right = Matrix::zeros(r, n);
        let mut center = TrCore::zeros(r, n, r);
        if let Some(dec_r) = dec_r {
            for j in 0..r2 {
                let w = dec_r.s[j].sqrt();
                for c in 0..n {
                    right[(j, c)] = w * dec_r.v[(c, j)];
                }
            }
            for b in 0..n {
                let slice = center.slice_mut(b);
                for i in 0..r1 {
                    for j in 0..r2 {
                        slice[(i, j)] =
                            dec_r.u[(i + r1 * b, j)] * dec_r.s[j].sqrt() / dec_l.s[i].sqrt();
                    }
                }
            }
        }
        Ok(Self {
            axis,
            base,
            block,
            left,
            center,
            right,
            sigma_left,
            sigma_right,
            retained: (r1, r2),
        })
    }
}

/// Samples the block around axis `k` with the other axes taken from `base`
/// and factors it at bond dimension `r`.
pub fn local_tt_svd(oracle: &BlackBox, k: usize, r: usize, base: &[usize]) -> Result<LocalTriple> {
    let d = oracle.dims();
    let n = oracle.size();
    if d < 3 || k >= d || base.len() != d {
        return Err(TrError::InvalidArgument(format!(
            "cannot sample around axis {k} with d = {d}"
        )));
    }
    if r > n {
        return Err(TrError::InvalidArgument(format!(
            "rank {r} exceeds n = {n}"
        )));
    }
    let axes = [(k + d - 1) % d, k, (k + 1) % d];
    let points = block_points(base, &axes, n);
    let block = oracle.eval_many(&points);
    LocalTriple::from_block(k, base.to_vec(), block, n, r)
}

/// Full grid over `axes` (first fastest) with the rest taken from `base`.
fn block_points(base: &[usize], axes: &[usize], n: usize) -> Vec<Vec<usize>> {
    let total = n.pow(axes.len() as u32);
    (0..total)
        .map(|mut lin| {
            let mut x = base.to_vec();
            for &ax in axes {
                x[ax] = lin % n;
                lin /= n;
            }
            x
        })
        .collect()
}

/// Bond matrix glueing two neighbouring centre cores.
#[derive(Debug, Clone)]
pub struct Gauge {
    pub matrix: Matrix,
    /// `sigma_max / sigma_min`; infinite when singular.
    pub condition: f64,
    /// `||left * G * right - target|| / ||target||`.
    pub residual: f64,
}

/// Minimum-norm least-squares solution of `left * G * right = target`.
///
/// Equivalent to solving `vec(target) = (right^T kron left) vec(G)` but
/// computed through the two factors, since the pseudo-inverse of a Kronecker
/// product is the Kronecker product of pseudo-inverses.
pub fn solve_gauge(left: &Matrix, right: &Matrix, target: &Matrix) -> Gauge {
    let inner = ridge_ls(left, target, 0.0);
    let outer = ridge_ls(&right.transpose(), &inner.solution.transpose(), 0.0);
    if !inner.full_rank || !outer.full_rank {
        log::warn!("gauge least squares is rank deficient; using the minimum-norm solution");
    }
    let matrix = outer.solution.transpose();
    let fit = left * &matrix * right;
    let tn = target.norm();
    let residual = if tn > 0.0 {
        (fit - target).norm() / tn
    } else {
        0.0
    };
    let sv = singular_values(&matrix);
    let condition = match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };
    Gauge {
        matrix,
        condition,
        residual,
    }
}

/// Result of [`gauge_fix`].
#[derive(Debug, Clone)]
pub struct GaugedRing {
    pub ring: TensorRing,
    pub gauges: Vec<Gauge>,
}

/// Glues the centre cores into a ring. `bases[k]` freezes the axes outside
/// `k-1..=k+2` for the four-axis block of bond `k`.
pub fn gauge_fix(
    oracle: &BlackBox,
    triples: &[LocalTriple],
    bases: &[Vec<usize>],
) -> Result<GaugedRing> {
    let d = triples.len();
    if d < 4 || d != oracle.dims() || bases.len() != d {
        return Err(TrError::InvalidArgument(format!(
            "gauge fixing needs d >= 4, got {d}"
        )));
    }
    let n = oracle.size();
    let (r, _, _) = triples[0].center.shape();
    if triples.iter().any(|t| t.center.shape() != (r, n, r)) {
        return Err(TrError::InvalidArgument(
            "triples disagree on rank or size".into(),
        ));
    }
    let mut gauges = Vec::with_capacity(d);
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let here = &triples[k];
        let next = &triples[(k + 1) % d];
        let mut left = Matrix::zeros(n * n, r);
        for b in 0..n {
            let blk = &here.left * here.center.slice(b);
            left.view_mut((n * b, 0), (n, r)).copy_from(&blk);
        }
        let mut right = Matrix::zeros(r, n * n);
        for c in 0..n {
            let blk = next.center.slice(c) * &next.right;
            for e in 0..n {
                right.column_mut(c + n * e).copy_from(&blk.column(e));
            }
        }
        let axes: Vec<usize> = (0..4).map(|j| (k + d - 1 + j) % d).collect();
        let values = oracle.eval_many(&block_points(&bases[k], &axes, n));
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(TrError::NonFinite(format!("gauge sample {bad}")));
        }
        // values are ordered a + n (b + n (c + n e)), i.e. row a + n b, column c + n e
        let target = Matrix::from_column_slice(n * n, n * n, &values);
        let gauge = solve_gauge(&left, &right, &target);
        let slices = here
            .center
            .slices()
            .iter()
            .map(|s| s * &gauge.matrix)
            .collect();
        cores.push(TrCore::new(slices)?);
        gauges.push(gauge);
    }
    Ok(GaugedRing {
        ring: TensorRing::new(cores)?,
        gauges,
    })
}

/// Where the frozen coordinates of the local blocks come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrozenSource {
    /// Uniformly random, one draw per block.
    Random,
    /// One uniformly random point shared by every block.
    #[default]
    Shared,
    /// The first element of each axis' environment set.
    Envs,
}

/// Result of [`initialize_ring`].
#[derive(Debug, Clone)]
pub struct Initialization {
    pub ring: TensorRing,
    pub triples: Vec<LocalTriple>,
    pub gauges: Vec<Gauge>,
    /// Global factor applied after gauge fixing.
    pub scale: f64,
}

/// Builds an initial ring of bond dimension `r` from local samples.
///
/// `envs` is consulted only with [`FrozenSource::Envs`].
pub fn initialize_ring(
    oracle: &BlackBox,
    r: usize,
    seed: u64,
    source: FrozenSource,
    envs: Option<&[SkeletonSet]>,
) -> Result<Initialization> {
    let d = oracle.dims();
    let n = oracle.size();
    if d < 4 {
        return Err(TrError::UnsupportedDimension(d));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared: Vec<usize> = (0..d).map(|_| rng.random_range(0..n)).collect();
    let draw = |k: usize, rng: &mut ChaCha8Rng| -> Result<Vec<usize>> {
        match (source, envs) {
            (FrozenSource::Random, _) => Ok((0..d).map(|_| rng.random_range(0..n)).collect()),
            (FrozenSource::Shared, _) => Ok(shared.clone()),
            (FrozenSource::Envs, Some(envs)) => {
                let env = envs.get(k).filter(|e| !e.is_empty()).ok_or_else(|| {
                    TrError::InvalidArgument(format!("no environment for axis {}", k + 1))
                })?;
                let mut x = vec![0; d];
                env.fill(0, &mut x);
                Ok(x)
            }
            (FrozenSource::Envs, None) => Err(TrError::InvalidArgument(
                "environment-based freezing needs environment sets".into(),
            )),
        }
    };
    let mut triples = Vec::with_capacity(d);
    for k in 0..d {
        let base = draw(k, &mut rng)?;
        triples.push(local_tt_svd(oracle, k, r, &base)?);
    }
    let mut bases = Vec::with_capacity(d);
    for k in 0..d {
        bases.push(draw(k, &mut rng)?);
    }
    let GaugedRing { mut ring, gauges } = gauge_fix(oracle, &triples, &bases)?;
    let scale = fit_scale(&mut ring, &triples)?;
    Ok(Initialization {
        ring,
        triples,
        gauges,
        scale,
    })
}

/// Rescales `ring` by the least-squares optimal scalar on the three-axis
/// blocks and returns that scalar.
///
/// Each bond gauge is fitted on its own block, so the product of their
/// scales is not pinned down by any single fit.
fn fit_scale(ring: &mut TensorRing, triples: &[LocalTriple]) -> Result<f64> {
    let d = ring.dims();
    let n = ring.size();
    let mut points = Vec::new();
    let mut exact = Vec::new();
    for t in triples {
        let axes = [(t.axis + d - 1) % d, t.axis, (t.axis + 1) % d];
        points.extend(block_points(&t.base, &axes, n));
        exact.extend_from_slice(&t.block);
    }
    let approx = ring.eval_many(&points);
    let num: f64 = approx.iter().zip(&exact).map(|(a, e)| a * e).sum();
    let den: f64 = approx.iter().map(|a| a * a).sum();
    if den == 0.0 || !num.is_finite() || !den.is_finite() {
        if !ring.is_finite() {
            return Err(TrError::NonFinite("initial cores".into()));
        }
        return Ok(1.0);
    }
    let scale = num / den;
    let per_core = scale.abs().powf(1.0 / d as f64);
    let cores = ring.cores_mut();
    for (k, core) in cores.iter_mut().enumerate() {
        let factor = if k == 0 {
            per_core * scale.signum()
        } else {
            per_core
        };
        for v in 0..n {
            core.slice_mut(v).scale_mut(factor);
        }
    }
    Ok(scale)
}
