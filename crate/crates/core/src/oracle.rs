//! Black-box functions on `[n]^d` with call counting and memoisation, plus the
//! benchmark functions used in the experiments.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::{Result, TrError};
use crate::ring::TensorRing;
use crate::tensor::MultiIndex;

/// A deterministic real function on the grid `[n]^d`, addressed with 0-based indices.
pub trait Function: Send + Sync {
    fn dims(&self) -> usize;
    fn size(&self) -> usize;
    fn eval(&self, x: &[usize]) -> f64;
    fn name(&self) -> &str {
        "custom"
    }
}

impl<F: Function + ?Sized> Function for Arc<F> {
    fn dims(&self) -> usize {
        (**self).dims()
    }
    fn size(&self) -> usize {
        (**self).size()
    }
    fn eval(&self, x: &[usize]) -> f64 {
        (**self).eval(x)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

struct Cache {
    map: HashMap<Box<[u16]>, f64>,
    order: VecDeque<Box<[u16]>>,
    limit: Option<usize>,
}

/// A [`Function`] wrapped with a value cache and a counter of distinct evaluations.
///
/// The counter increments only when a value is computed and stored; repeated
/// lookups of a cached entry are free. With a cache limit, the oldest entries
/// are evicted first and a later lookup of an evicted entry counts again.
pub struct BlackBox {
    func: Arc<dyn Function>,
    cache: RwLock<Cache>,
    calls: AtomicU64,
}

impl std::fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlackBox")
            .field("name", &self.func.name())
            .field("d", &self.func.dims())
            .field("n", &self.func.size())
            .field("calls", &self.calls())
            .finish()
    }
}

fn key(x: &[usize]) -> Box<[u16]> {
    x.iter().map(|&v| v as u16).collect()
}

impl BlackBox {
    pub fn new(func: impl Function + 'static) -> Self {
        Self::from_arc(Arc::new(func))
    }

    pub fn from_arc(func: Arc<dyn Function>) -> Self {
        Self {
            func,
            cache: RwLock::new(Cache {
                map: HashMap::new(),
                order: VecDeque::new(),
                limit: None,
            }),
            calls: AtomicU64::new(0),
        }
    }

    /// Bounds the cache to `limit` entries with first-in-first-out eviction.
    pub fn with_cache_limit(self, limit: usize) -> Self {
        self.cache.write().expect("cache lock").limit = Some(limit.max(1));
        self
    }

    pub fn dims(&self) -> usize {
        self.func.dims()
    }

    pub fn size(&self) -> usize {
        self.func.size()
    }

    pub fn name(&self) -> &str {
        self.func.name()
    }

    /// The underlying function, bypassing cache and counter.
    pub fn function(&self) -> &dyn Function {
        &*self.func
    }

    pub fn shared_function(&self) -> Arc<dyn Function> {
        Arc::clone(&self.func)
    }

    /// Number of distinct entries computed so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Cached, counted evaluation at a 0-based index.
    pub fn eval(&self, x: &[usize]) -> f64 {
        let k = key(x);
        if let Some(&v) = self.cache.read().expect("cache lock").map.get(&k) {
            return v;
        }
        let v = self.func.eval(x);
        let mut cache = self.cache.write().expect("cache lock");
        if !cache.map.contains_key(&k) {
            if let Some(limit) = cache.limit {
                while cache.map.len() >= limit {
                    match cache.order.pop_front() {
                        Some(old) => {
                            cache.map.remove(&old);
                        }
                        None => break,
                    }
                }
                cache.order.push_back(k.clone());
            }
            cache.map.insert(k, v);
            self.calls.fetch_add(1, Ordering::SeqCst);
        }
        v
    }

    /// Evaluation at a validated 1-based multi-index.
    pub fn value(&self, x: &MultiIndex) -> Result<f64> {
        x.validate(self.dims(), self.size())?;
        Ok(self.eval(&x.to_zero_based()))
    }

    /// Evaluates a batch of 0-based points, in parallel when available.
    pub fn eval_many(&self, points: &[Vec<usize>]) -> Vec<f64> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if points.len() >= 256 {
                return points.par_iter().map(|x| self.eval(x)).collect();
            }
        }
        points.iter().map(|x| self.eval(x)).collect()
    }
}

impl Function for BlackBox {
    fn dims(&self) -> usize {
        self.func.dims()
    }
    fn size(&self) -> usize {
        self.func.size()
    }
    fn eval(&self, x: &[usize]) -> f64 {
        BlackBox::eval(self, x)
    }
    fn name(&self) -> &str {
        self.func.name()
    }
}

/// Grid value of a 0-based index on the endpoint-inclusive uniform grid of `[0, 1]`.
pub fn unit_grid(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// `1 / sqrt(1 + x_1^2 + ... + x_d^2)` on a uniform grid of `[0, 1]^d`.
#[derive(Debug, Clone)]
pub struct ToyFunction {
    d: usize,
    n: usize,
}

impl Function for ToyFunction {
    fn dims(&self) -> usize {
        self.d
    }
    fn size(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[usize]) -> f64 {
        let sq: f64 = x
            .iter()
            .map(|&i| {
                let t = unit_grid(i, self.n);
                t * t
            })
            .sum();
        1.0 / (1.0 + sq).sqrt()
    }
    fn name(&self) -> &str {
        "toy"
    }
}

pub fn toy_oracle(d: usize, n: usize) -> Result<BlackBox> {
    if d == 0 || n == 0 {
        return Err(TrError::InvalidArgument(
            "toy oracle needs d, n >= 1".into(),
        ));
    }
    Ok(BlackBox::new(ToyFunction { d, n }))
}

/// Coupling levels and inverse temperature of the ring Ising benchmark.
pub const ISING_LEVELS: [f64; 4] = [-2.5, -1.5, 1.0, 2.0];
pub const ISING_BETA: f64 = 10.0;
/// Conductivity levels of the layered-medium benchmark.
pub const PDE_LEVELS: [f64; 3] = [1.0, 2.0, 3.0];

/// Free energy `-(1/beta) log Tr prod_i T(J_i)` of a periodic Ising chain with
/// bond couplings `J_i` chosen from `levels`.
#[derive(Debug, Clone)]
pub struct IsingFunction {
    d: usize,
    beta: f64,
    levels: Vec<f64>,
}

impl IsingFunction {
    /// Log-domain trace of the transfer-matrix product. Each factor is scaled
    /// by `e^{-beta |J|}` and the running product renormalised by its largest
    /// entry, accumulating the logarithms of both.
    pub fn log_trace(&self, x: &[usize]) -> f64 {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        let mut log_scale = 0.0;
        for &i in x {
            let j = self.levels[i];
            let bj = self.beta * j;
            let ba = self.beta * j.abs();
            let same = (bj - ba).exp();
            let flip = (-bj - ba).exp();
            let t = [[same, flip], [flip, same]];
            let mut next = [[0.0; 2]; 2];
            for (r, row) in next.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = m[r][0] * t[0][c] + m[r][1] * t[1][c];
                }
            }
            let peak = next.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
            for v in next.iter_mut().flatten() {
                *v /= peak;
            }
            m = next;
            log_scale += ba + peak.ln();
        }
        (m[0][0] + m[1][1]).ln() + log_scale
    }
}

impl Function for IsingFunction {
    fn dims(&self) -> usize {
        self.d
    }
    fn size(&self) -> usize {
        self.levels.len()
    }
    fn eval(&self, x: &[usize]) -> f64 {
        -self.log_trace(x) / self.beta
    }
    fn name(&self) -> &str {
        "ising"
    }
}

pub fn ising_oracle(d: usize, beta: f64, levels: &[f64]) -> Result<BlackBox> {
    if d == 0 || beta.is_nan() || beta <= 0.0 || levels.is_empty() {
        return Err(TrError::InvalidArgument(
            "ising oracle needs d >= 1, beta > 0 and at least one level".into(),
        ));
    }
    Ok(BlackBox::new(IsingFunction {
        d,
        beta,
        levels: levels.to_vec(),
    }))
}

/// Effective conductance of a periodic 1D layered medium: the inverse of the
/// arithmetic mean of the layer coefficients.
#[derive(Debug, Clone)]
pub struct PdeFunction {
    d: usize,
    levels: Vec<f64>,
}

impl Function for PdeFunction {
    fn dims(&self) -> usize {
        self.d
    }
    fn size(&self) -> usize {
        self.levels.len()
    }
    fn eval(&self, x: &[usize]) -> f64 {
        let sum: f64 = x.iter().map(|&i| self.levels[i]).sum();
        self.d as f64 / sum
    }
    fn name(&self) -> &str {
        "pde"
    }
}

pub fn pde_oracle(d: usize, levels: &[f64]) -> Result<BlackBox> {
    if d == 0 || levels.is_empty() || levels.iter().any(|&a| a.is_nan() || a <= 0.0) {
        return Err(TrError::InvalidArgument(
            "pde oracle needs d >= 1 and positive levels".into(),
        ));
    }
    Ok(BlackBox::new(PdeFunction {
        d,
        levels: levels.to_vec(),
    }))
}

/// A function defined by a tensor ring.
#[derive(Debug, Clone)]
pub struct SyntheticFunction {
    ring: TensorRing,
}

impl SyntheticFunction {
    pub fn new(ring: TensorRing) -> Self {
        Self { ring }
    }

    pub fn ring(&self) -> &TensorRing {
        &self.ring
    }
}

impl Function for SyntheticFunction {
    fn dims(&self) -> usize {
        self.ring.dims()
    }
    fn size(&self) -> usize {
        self.ring.size()
    }
    fn eval(&self, x: &[usize]) -> f64 {
        self.ring.eval(x)
    }
    fn name(&self) -> &str {
        "synthetic"
    }
}

pub fn synthetic_tr_oracle(ring: TensorRing) -> BlackBox {
    BlackBox::new(SyntheticFunction { ring })
}

/// A product of per-dimension factors, `f(x) = prod_k g_k(x_k)`.
#[derive(Debug, Clone)]
pub struct SeparableFunction {
    factors: Vec<Vec<f64>>,
}

impl SeparableFunction {
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        let n = factors.first().map(Vec::len).unwrap_or(0);
        if n == 0 || factors.iter().any(|g| g.len() != n) {
            return Err(TrError::InvalidArgument(
                "separable factors must be nonempty and equally sized".into(),
            ));
        }
        Ok(Self { factors })
    }
}

impl Function for SeparableFunction {
    fn dims(&self) -> usize {
        self.factors.len()
    }
    fn size(&self) -> usize {
        self.factors[0].len()
    }
    fn eval(&self, x: &[usize]) -> f64 {
        x.iter().zip(&self.factors).map(|(&i, g)| g[i]).product()
    }
    fn name(&self) -> &str {
        "separable"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::TensorRing;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_examples() {
        let f = toy_oracle(6, 5).unwrap();
        assert_eq!(f.eval(&[0; 6]), 1.0);
        assert!((f.eval(&[4; 6]) - 1.0 / 7f64.sqrt()).abs() < 1e-15);
        assert!((f.eval(&[4; 6]) - 0.3779645).abs() < 1e-7);
        let g = toy_oracle(1, 2).unwrap();
        assert!((g.eval(&[1]) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let h = toy_oracle(3, 1).unwrap();
        assert_eq!(h.eval(&[0, 0, 0]), 1.0);
    }

    #[test]
    fn ising_examples() {
        let f = ising_oracle(1, 1.0, &[0.0]).unwrap();
        assert!((f.eval(&[0]) + 2f64.ln()).abs() < 1e-14);

        let f = ising_oracle(4, 10.0, &[1.0]).unwrap();
        let lp = 10f64.exp() + (-10f64).exp();
        let lm = 10f64.exp() - (-10f64).exp();
        let expected = -(lp.powi(4) + lm.powi(4)).ln() / 10.0;
        assert!((f.eval(&[0; 4]) - expected).abs() < 1e-12);
        assert!((f.eval(&[0; 4]) + 4.06931).abs() < 1e-5);

        let f = ising_oracle(12, 10.0, &[2.0]).unwrap();
        let v = f.eval(&[0; 12]);
        assert!((v + (240.0 + 2f64.ln()) / 10.0).abs() < 1e-9);
        assert!((v + 24.0693).abs() < 1e-4);
    }

    #[test]
    fn ising_does_not_overflow_at_benchmark_scale() {
        let f = ising_oracle(24, 10.0, &ISING_LEVELS).unwrap();
        for i in 0..4 {
            let v = f.eval(&[i; 24]);
            assert!(v.is_finite());
        }
    }

    fn naive_ising(beta: f64, js: &[f64]) -> f64 {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for &j in js {
            let t = [
                [(beta * j).exp(), (-beta * j).exp()],
                [(-beta * j).exp(), (beta * j).exp()],
            ];
            let mut next = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    next[r][c] = m[r][0] * t[0][c] + m[r][1] * t[1][c];
                }
            }
            m = next;
        }
        -(m[0][0] + m[1][1]).ln() / beta
    }

    #[test]
    fn ising_log_domain_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let d = rng.random_range(1..=6);
            let beta = rng.random_range(0.05..2.0);
            let f = ising_oracle(d, beta, &ISING_LEVELS).unwrap();
            let x: Vec<usize> = (0..d).map(|_| rng.random_range(0..4)).collect();
            let js: Vec<f64> = x.iter().map(|&i| ISING_LEVELS[i]).collect();
            let naive = naive_ising(beta, &js);
            assert!((f.eval(&x) - naive).abs() <= 1e-10 * naive.abs().max(1e-300));
        }
    }

    #[test]
    fn pde_examples() {
        let f = pde_oracle(12, &PDE_LEVELS).unwrap();
        assert_eq!(f.eval(&[0; 12]), 1.0);
        assert_eq!(f.eval(&[1; 12]), 0.5);
        let mut x = vec![0; 12];
        x[6..].fill(2);
        assert!((f.eval(&x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pde_is_permutation_symmetric() {
        let f = pde_oracle(6, &PDE_LEVELS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let mut x: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
            let v = f.eval(&x);
            x.reverse();
            x.rotate_left(2);
            assert_eq!(f.function().eval(&x), v);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(pde_oracle(3, &[1.0, 0.0]).is_err());
        assert!(ising_oracle(3, 0.0, &ISING_LEVELS).is_err());
        assert!(ising_oracle(3, 1.0, &[]).is_err());
        assert!(toy_oracle(0, 3).is_err());
    }

    #[test]
    fn counter_counts_distinct_entries() {
        let f = pde_oracle(3, &PDE_LEVELS).unwrap();
        let a = f.eval(&[0, 1, 2]);
        let b = f.eval(&[0, 1, 2]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(f.calls(), 1);
        f.eval(&[2, 1, 0]);
        assert_eq!(f.calls(), 2);
        let batch = vec![vec![0, 0, 0], vec![0, 1, 2], vec![0, 0, 0]];
        f.eval_many(&batch);
        assert_eq!(f.calls(), 3);
    }

    #[test]
    fn cache_is_transparent() {
        let f = toy_oracle(4, 7).unwrap();
        let limited = toy_oracle(4, 7).unwrap().with_cache_limit(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x: Vec<usize> = (0..4).map(|_| rng.random_range(0..7)).collect();
            let direct = f.function().eval(&x);
            assert_eq!(f.eval(&x).to_bits(), direct.to_bits());
            assert_eq!(limited.eval(&x).to_bits(), direct.to_bits());
        }
    }

    #[test]
    fn value_validates_one_based_input() {
        let f = pde_oracle(3, &PDE_LEVELS).unwrap();
        let x = MultiIndex::new(vec![1, 1, 1], 3).unwrap();
        assert_eq!(f.value(&x).unwrap(), 1.0);
        let bad = MultiIndex::new(vec![1, 1], 3).unwrap();
        assert!(f.value(&bad).is_err());
    }

    #[test]
    fn synthetic_examples() {
        let ones = TensorRing::constant(5, 3, 1, 1.0);
        let f = synthetic_tr_oracle(ones);
        assert_eq!(f.eval(&[0, 1, 2, 0, 1]), 1.0);

        let ring = TensorRing::random_gaussian(3, 2, 2, 1.0, 17);
        let f = synthetic_tr_oracle(ring.clone());
        for x in [[0, 0, 0], [1, 0, 1], [1, 1, 1], [0, 1, 0]] {
            let mut brute = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        brute += ring.core(0).get(a, x[0], b)
                            * ring.core(1).get(b, x[1], c)
                            * ring.core(2).get(c, x[2], a);
                    }
                }
            }
            assert!((f.eval(&x) - brute).abs() < 1e-12);
        }
    }
}
