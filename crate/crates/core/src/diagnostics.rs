//! Measurements behind the initialisation argument: how close segment
//! products and frozen-slice unfoldings are to rank one, and how well
//! conditioned ring segments are.

use crate::error::{Result, TrError};
use crate::linalg::singular_values;
use crate::oracle::Function;
use crate::ring::TensorRing;
use crate::tensor::increment;
use crate::Matrix;

/// Largest number of entries materialised by [`alpha_ratio`].
pub const ALPHA_BUDGET: u128 = 10_000_000;

fn check_contiguous(dims: &[usize], d: usize) -> Result<()> {
    if dims.is_empty() || dims.len() > d {
        return Err(TrError::InvalidSplit(format!(
            "segment of length {} in a ring of {d}",
            dims.len()
        )));
    }
    if dims.iter().any(|&x| x >= d) {
        return Err(TrError::InvalidSplit("segment axis out of range".into()));
    }
    if dims.windows(2).any(|w| w[1] != (w[0] + 1) % d) {
        return Err(TrError::InvalidSplit(format!(
            "axes {:?} are not a contiguous ring segment",
            dims.iter().map(|x| x + 1).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// Ordered slice product `H^{j_1}[v_1] ... H^{j_m}[v_m]` over a contiguous segment.
pub fn segment_product(ring: &TensorRing, dims: &[usize], values: &[usize]) -> Result<Matrix> {
    check_contiguous(dims, ring.dims())?;
    if values.len() != dims.len() {
        return Err(TrError::LengthMismatch {
            expected: dims.len(),
            got: values.len(),
        });
    }
    let n = ring.size();
    if let Some((p, &v)) = values.iter().enumerate().find(|(_, &v)| v >= n) {
        return Err(TrError::IndexOutOfRange {
            position: dims[p] + 1,
            value: v + 1,
            n,
        });
    }
    let mut m = ring.core(dims[0]).slice(values[0]).clone();
    for (&j, &v) in dims.iter().zip(values).skip(1) {
        m *= ring.core(j).slice(v);
    }
    Ok(m)
}

/// `sigma_1(B)^2 / ||B||_F^2`, in `(0, 1]` and equal to 1 exactly for rank one.
pub fn rank1_ratio(b: &Matrix) -> Result<f64> {
    let fro = b.norm_squared();
    if fro == 0.0 {
        return Err(TrError::ZeroReference);
    }
    if !fro.is_finite() {
        return Err(TrError::NonFinite("matrix entries".into()));
    }
    let top = singular_values(b)[0];
    Ok((top * top / fro).min(1.0))
}

/// Rank-one ratio of `f` as a matrix over the axes `c1` (rows) and `c2`
/// (columns), every other axis frozen at its value in `z`.
pub fn alpha_ratio<F: Function + ?Sized>(
    f: &F,
    c1: &[usize],
    c2: &[usize],
    z: &[usize],
) -> Result<f64> {
    let d = f.dims();
    let n = f.size();
    if z.len() != d {
        return Err(TrError::LengthMismatch {
            expected: d,
            got: z.len(),
        });
    }
    if c1.is_empty()
        || c2.is_empty()
        || c1.iter().chain(c2).any(|&x| x >= d)
        || c1.iter().any(|x| c2.contains(x))
    {
        return Err(TrError::InvalidSplit(
            "row and column regions must be nonempty and disjoint".into(),
        ));
    }
    let entries = (n as u128)
        .checked_pow((c1.len() + c2.len()) as u32)
        .unwrap_or(u128::MAX);
    if entries > ALPHA_BUDGET {
        return Err(TrError::BudgetExceeded {
            entries,
            budget: ALPHA_BUDGET,
        });
    }
    let rows = n.pow(c1.len() as u32);
    let cols = n.pow(c2.len() as u32);
    let mut m = Matrix::zeros(rows, cols);
    let mut x = z.to_vec();
    let mut ci = vec![0; c2.len()];
    let shape2 = vec![n; c2.len()];
    let shape1 = vec![n; c1.len()];
    for j in 0..cols {
        for (&ax, &v) in c2.iter().zip(&ci) {
            x[ax] = v;
        }
        let mut ri = vec![0; c1.len()];
        for i in 0..rows {
            for (&ax, &v) in c1.iter().zip(&ri) {
                x[ax] = v;
            }
            m[(i, j)] = f.eval(&x);
            increment(&mut ri, &shape1);
        }
        increment(&mut ci, &shape2);
    }
    rank1_ratio(&m)
}

/// Condition number `sigma_1 / sigma_{r_l r_r}` of a segment viewed as a map
/// from its physical indices to the pair of open bonds.
pub fn condition_kappa(ring: &TensorRing, dims: &[usize]) -> Result<f64> {
    check_contiguous(dims, ring.dims())?;
    let n = ring.size();
    let rl = ring.core(dims[0]).r_left();
    let rr = ring.core(*dims.last().expect("nonempty")).r_right();
    let bonds = rl * rr;
    let cols = (n as u128)
        .checked_pow(dims.len() as u32)
        .unwrap_or(u128::MAX);
    if cols < bonds as u128 {
        return Err(TrError::InvalidArgument(format!(
            "segment of {} axes has {cols} configurations, fewer than {bonds} bond pairs",
            dims.len()
        )));
    }
    if cols > ALPHA_BUDGET {
        return Err(TrError::BudgetExceeded {
            entries: cols,
            budget: ALPHA_BUDGET,
        });
    }
    let cols = cols as usize;
    let mut m = Matrix::zeros(bonds, cols);
    let mut v = vec![0; dims.len()];
    let shape = vec![n; dims.len()];
    for j in 0..cols {
        let p = segment_product(ring, dims, &v)?;
        m.column_mut(j).copy_from_slice(p.as_slice());
        increment(&mut v, &shape);
    }
    let sv = singular_values(&m);
    let low = sv[bonds - 1];
    Ok(if low > 0.0 {
        sv[0] / low
    } else {
        f64::INFINITY
    })
}

/// Four consecutive ring regions in the order `c1, a, c2, b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub c1: Vec<usize>,
    pub a: Vec<usize>,
    pub c2: Vec<usize>,
    pub b: Vec<usize>,
}

impl Partition {
    /// Regions of the given lengths laid out from axis `start`.
    pub fn consecutive(lengths: [usize; 4], start: usize, d: usize) -> Result<Self> {
        if lengths.iter().sum::<usize>() != d || lengths.contains(&0) {
            return Err(TrError::InvalidSplit(format!(
                "region lengths {lengths:?} must be positive and sum to {d}"
            )));
        }
        let mut next = start % d;
        let mut take = |len: usize| {
            let out: Vec<usize> = (0..len).map(|i| (next + i) % d).collect();
            next = (next + len) % d;
            out
        };
        Ok(Self {
            c1: take(lengths[0]),
            a: take(lengths[1]),
            c2: take(lengths[2]),
            b: take(lengths[3]),
        })
    }
}

/// Everything measured for one partition and one frozen configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneCheck {
    pub alpha: f64,
    pub kappa_c1: f64,
    pub kappa_c2: f64,
    pub ratio_a: f64,
    pub ratio_b: f64,
}

impl RankOneCheck {
    /// `alpha / kappa^4` with `kappa` the larger segment condition number.
    pub fn bound(&self) -> f64 {
        let kappa = self.kappa_c1.max(self.kappa_c2);
        self.alpha / kappa.powi(4)
    }

    pub fn holds(&self) -> bool {
        let b = self.bound();
        self.ratio_a >= b && self.ratio_b >= b
    }
}

/// Rank-one measurements for `ring` with regions `a` and `b` frozen at the
/// values `z` takes there.
pub fn rank_one_check(ring: &TensorRing, part: &Partition, z: &[usize]) -> Result<RankOneCheck> {
    let pick = |dims: &[usize]| dims.iter().map(|&j| z[j]).collect::<Vec<_>>();
    let b1 = segment_product(ring, &part.a, &pick(&part.a))?;
    let b2 = segment_product(ring, &part.b, &pick(&part.b))?;
    let f = crate::oracle::SyntheticFunction::new(ring.clone());
    Ok(RankOneCheck {
        alpha: alpha_ratio(&f, &part.c1, &part.c2, z)?,
        kappa_c1: condition_kappa(ring, &part.c1)?,
        kappa_c2: condition_kappa(ring, &part.c2)?,
        ratio_a: rank1_ratio(&b1)?,
        ratio_b: rank1_ratio(&b2)?,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(TrError::LengthMismatch {
            expected: x.len().max(2),
            got: y.len(),
        });
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(TrError::InvalidArgument(
            "constant sample has no rank correlation".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{pde_oracle, SeparableFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn segment_examples() {
        let ring = TensorRing::random_gaussian(6, 3, 2, 1.0, 1);
        assert_eq!(
            segment_product(&ring, &[4], &[2]).unwrap(),
            ring.core(4).slice(2).clone()
        );
        let two = segment_product(&ring, &[1, 2], &[0, 1]).unwrap();
        assert_eq!(two, ring.core(1).slice(0) * ring.core(2).slice(1));
        let wrap = segment_product(&ring, &[5, 0], &[1, 1]).unwrap();
        assert_eq!(wrap, ring.core(5).slice(1) * ring.core(0).slice(1));
        assert!(segment_product(&ring, &[1, 3], &[0, 0]).is_err());
        let scalar = TensorRing::random_gaussian(4, 2, 1, 1.0, 2);
        let p = segment_product(&scalar, &[0, 1, 2], &[1, 0, 1]).unwrap();
        let want =
            scalar.core(0).get(0, 1, 0) * scalar.core(1).get(0, 0, 0) * scalar.core(2).get(0, 1, 0);
        assert!((p[(0, 0)] - want).abs() < 1e-15);
    }

    #[test]
    fn rank1_examples() {
        let u = Matrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let v = Matrix::from_column_slice(2, 1, &[3.0, 1.0]);
        assert!((rank1_ratio(&(&u * v.transpose())).unwrap() - 1.0).abs() < 1e-14);
        assert!((rank1_ratio(&Matrix::identity(2, 2)).unwrap() - 0.5).abs() < 1e-15);
        let d = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((rank1_ratio(&d).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(
            rank1_ratio(&Matrix::zeros(2, 2)),
            Err(TrError::ZeroReference)
        );
    }

    #[test]
    fn separable_alpha_is_one() {
        let factors = (0..6)
            .map(|k| (0..3).map(|v| 1.0 + (k * v) as f64 * 0.1).collect())
            .collect();
        let f = SeparableFunction::new(factors).unwrap();
        for z in [[0; 6], [1, 2, 0, 1, 2, 0]] {
            let a = alpha_ratio(&f, &[0, 1], &[3, 4], &z).unwrap();
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pde_alpha_below_one() {
        let f = pde_oracle(6, &[1.0, 2.0, 3.0]).unwrap();
        let a = alpha_ratio(f.function(), &[0, 1], &[3, 4], &[0; 6]).unwrap();
        assert!(a < 1.0 && a > 0.0);
    }

    #[test]
    fn gibbs_chain_alpha_near_one() {
        let ring = TensorRing::gibbs_chain(8, 3, 2, 0.0, 3);
        let f = crate::oracle::SyntheticFunction::new(ring);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let z: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
            assert!(alpha_ratio(&f, &[0, 1], &[4, 5], &z).unwrap() >= 0.999);
        }
    }

    #[test]
    fn alpha_budget_enforced() {
        let f = SeparableFunction::new(vec![vec![1.0; 20]; 8]).unwrap();
        let r = alpha_ratio(&f, &[0, 1, 2], &[4, 5, 6], &[0; 8]);
        assert!(matches!(r, Err(TrError::BudgetExceeded { .. })));
    }

    #[test]
    fn kappa_examples() {
        let scalar = TensorRing::random_gaussian(4, 3, 1, 1.0, 2);
        assert!((condition_kappa(&scalar, &[1]).unwrap() - 1.0).abs() < 1e-12);

        // slices of a single core form an orthonormal basis of 2 x 2 matrices
        let q = crate::linalg::svd(&Matrix::from_fn(4, 4, |i, j| {
            ((i * 5 + j * 3) % 7) as f64 + 0.5
        }))
        .u;
        let slices: Vec<Matrix> = (0..4)
            .map(|v| Matrix::from_column_slice(2, 2, q.column(v).as_slice()))
            .collect();
        let core = crate::ring::TrCore::new(slices).unwrap();
        let ring = TensorRing::new(vec![core.clone(), core.clone(), core]).unwrap();
        assert!((condition_kappa(&ring, &[0]).unwrap() - 1.0).abs() < 1e-10);

        let pos = TensorRing::gibbs_chain(6, 4, 2, 1.0, 8);
        let k = condition_kappa(&pos, &[1, 2]).unwrap();
        assert!(k.is_finite() && k >= 1.0);
        assert!(condition_kappa(&TensorRing::random_gaussian(6, 2, 3, 1.0, 1), &[0, 1]).is_err());
    }

    #[test]
    fn gibbs_segments_are_rank_one() {
        let ring = TensorRing::gibbs_chain(6, 3, 3, 0.0, 4);
        let part = Partition::consecutive([2, 1, 2, 1], 0, 6).unwrap();
        for z in [[0; 6], [2, 1, 0, 2, 1, 0]] {
            let check = rank_one_check(&ring, &part, &z).unwrap();
            assert!(check.ratio_a >= 1.0 - 1e-6);
            assert!(check.ratio_b >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn partition_layout() {
        let p = Partition::consecutive([2, 1, 2, 1], 5, 6).unwrap();
        assert_eq!(p.c1, vec![5, 0]);
        assert_eq!(p.a, vec![1]);
        assert_eq!(p.c2, vec![2, 3]);
        assert_eq!(p.b, vec![4]);
        assert!(Partition::consecutive([2, 0, 2, 2], 0, 6).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4)
        let r = spearman(&[1.0, 2.0, 2.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
    }
}
