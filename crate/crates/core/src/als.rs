//! Sample-restricted alternating least squares.
//!
//! Core `k` is refit on its own sample set `[n]^3 x env_k`. Because axis `k`
//! is fully enumerated there, the fit splits into `n` independent slice
//! problems that share one batch of coefficient matrices.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TrError};
use crate::init::{initialize_ring, FrozenSource};
use crate::linalg::ridge_ls;
use crate::oracle::BlackBox;
use crate::ring::{error_e, relative_error, sample_eval_set, TensorRing, TrCore};
use crate::skeleton::{assemble_all, build_all_envs, SampleSet, SkeletonConfig, SkeletonSet};
use crate::Matrix;

/// `C = H^{k+1}[c] P(e) H^{k-1}[a]` for every boundary pair `(a, c)` and
/// environment element `e`, where `P(e)` is the slice product from axis `k+2`
/// around to `k-2`.
#[derive(Debug, Clone)]
pub struct CoefficientBatch {
    k: usize,
    n: usize,
    env_len: usize,
    coefs: Vec<Matrix>,
    /// Number of small matrix products spent building the batch.
    pub mults: u64,
}

impl CoefficientBatch {
    pub fn axis(&self) -> usize {
        self.k
    }

    pub fn env_len(&self) -> usize {
        self.env_len
    }

    /// Coefficient for `x_{k-1} = a`, `x_{k+1} = c`, environment element `e`.
    pub fn get(&self, a: usize, c: usize, e: usize) -> &Matrix {
        &self.coefs[a + self.n * (c + self.n * e)]
    }
}

fn check_set(ring: &TensorRing, k: usize, set: &SampleSet) -> Result<()> {
    let d = ring.dims();
    if set.center() != k || k >= d || set.size() != ring.size() {
        return Err(TrError::InvalidArgument(format!(
            "sample set for axis {} does not match axis {} of the ring",
            set.center() + 1,
            k + 1
        )));
    }
    if let Some(&dim) = set.env().dims().iter().find(|&&x| x >= d) {
        return Err(TrError::IndexOutOfRange {
            position: dim,
            value: dim + 1,
            n: d,
        });
    }
    if d < 3 {
        return Err(TrError::UnsupportedDimension(d));
    }
    Ok(())
}

pub fn coefficient_batch(ring: &TensorRing, k: usize, set: &SampleSet) -> Result<CoefficientBatch> {
    check_set(ring, k, set)?;
    let d = ring.dims();
    let n = ring.size();
    let env = set.env();
    let m = env.len();
    let prev = (k + d - 1) % d;
    let next = (k + 1) % d;
    let mut mults = 0u64;
    let mut x = vec![0usize; d];
    let mut coefs = Vec::with_capacity(n * n * m);
    for e in 0..m {
        env.fill(e, &mut x);
        let mut p: Option<Matrix> = None;
        for t in 0..d - 3 {
            let j = (k + 2 + t) % d;
            let s = ring.core(j).slice(x[j]);
            p = Some(match p {
                None => s.clone(),
                Some(acc) => {
                    mults += 1;
                    acc * s
                }
            });
        }
        let left: Vec<Matrix> = (0..n)
            .map(|c| {
                let h = ring.core(next).slice(c);
                match &p {
                    Some(p) => {
                        mults += 1;
                        h * p
                    }
                    None => h.clone(),
                }
            })
            .collect();
        for q in &left {
            for a in 0..n {
                mults += 1;
                coefs.push(q * ring.core(prev).slice(a));
            }
        }
    }
    Ok(CoefficientBatch {
        k,
        n,
        env_len: m,
        coefs,
        mults,
    })
}

/// Outcome of refitting one core.
#[derive(Debug, Clone)]
pub struct CoreUpdate {
    pub core: TrCore,
    /// Squared residual on the sample set before and after the update.
    pub objective_before: f64,
    pub objective_after: f64,
    pub mults: u64,
    /// Whether every slice problem had a full-rank design.
    pub full_rank: bool,
}

/// Refits core `k` by ridge least squares on its sample set.
pub fn solve_core(ring: &TensorRing, k: usize, set: &SampleSet, lambda: f64) -> Result<CoreUpdate> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(TrError::InvalidArgument(format!(
            "ridge weight {lambda} must be >= 0"
        )));
    }
    let batch = coefficient_batch(ring, k, set)?;
    let n = ring.size();
    let m = batch.env_len;
    let core = ring.core(k);
    let (rl, _, rr) = core.shape();
    let rows = n * n * m;

    let fit_slice = |b: usize| -> (Matrix, f64, f64, bool) {
        let mut design = Matrix::zeros(rows, rl * rr);
        let mut target = Matrix::zeros(rows, 1);
        for e in 0..m {
            for c in 0..n {
                for a in 0..n {
                    let row = a + n * (c + n * e);
                    let cm = batch.get(a, c, e);
                    for l in 0..rr {
                        for i in 0..rl {
                            design[(row, i + rl * l)] = cm[(l, i)];
                        }
                    }
                    target[row] = set.value(a, b, c, e);
                }
            }
        }
        let old = Matrix::from_column_slice(rl * rr, 1, core.slice(b).as_slice());
        let before = (&design * &old - &target).norm_squared();
        let solve = ridge_ls(&design, &target, lambda);
        let after = (&design * &solve.solution - &target).norm_squared();
        let slice = Matrix::from_column_slice(rl, rr, solve.solution.as_slice());
        (slice, before, after, solve.full_rank)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<(Matrix, f64, f64, bool)> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(fit_slice).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(Matrix, f64, f64, bool)> = (0..n).map(fit_slice).collect();

    let full_rank = results.iter().all(|r| r.3);
    if !full_rank && lambda == 0.0 {
        log::warn!(
            "core {} design is rank deficient; using the minimum-norm fit",
            k + 1
        );
    }
    let objective_before = results.iter().map(|r| r.1).sum();
    let objective_after = results.iter().map(|r| r.2).sum();
    let slices = results.into_iter().map(|r| r.0).collect();
    Ok(CoreUpdate {
        core: TrCore::new(slices)?,
        objective_before,
        objective_after,
        mults: batch.mults,
        full_rank,
    })
}

/// Deduplicated union of all sample sets, for the training error.
#[derive(Debug, Clone)]
pub struct SampleUnion {
    points: Vec<Vec<usize>>,
    values: Vec<f64>,
}

impl SampleUnion {
    pub fn new(sets: &[SampleSet]) -> Self {
        let mut seen = HashSet::new();
        let mut points = Vec::new();
        let mut values = Vec::new();
        for set in sets {
            for (x, &v) in set.points().into_iter().zip(set.values()) {
                if seen.insert(x.clone()) {
                    points.push(x);
                    values.push(v);
                }
            }
        }
        Self { points, values }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<usize>] {
        &self.points
    }

    /// Relative error of `ring` on the union.
    pub fn error(&self, ring: &TensorRing) -> Result<f64> {
        relative_error(&ring.eval_many(&self.points), &self.values)
    }
}

/// Statistics of one sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepStats {
    pub e_skeleton: f64,
    pub mults: u64,
    /// Largest relative increase of a core's own objective; 0 when none rose.
    pub worst_increase: f64,
}

/// Refits every core once, in axis order, each fit seeing the latest neighbours.
pub fn als_sweep(
    ring: &mut TensorRing,
    sets: &[SampleSet],
    lambda: f64,
    union: &SampleUnion,
) -> Result<SweepStats> {
    if sets.len() != ring.dims() {
        return Err(TrError::LengthMismatch {
            expected: ring.dims(),
            got: sets.len(),
        });
    }
    let mut mults = 0;
    let mut worst: f64 = 0.0;
    for (k, set) in sets.iter().enumerate() {
        let upd = solve_core(ring, k, set, lambda)?;
        if !upd.core.is_finite() {
            return Err(TrError::NonFinite(format!("core {} after update", k + 1)));
        }
        let rise = (upd.objective_after - upd.objective_before)
            / upd.objective_before.max(f64::MIN_POSITIVE);
        worst = worst.max(rise);
        mults += upd.mults;
        ring.set_core(k, upd.core)?;
    }
    Ok(SweepStats {
        e_skeleton: union.error(ring)?,
        mults,
        worst_increase: worst,
    })
}

/// Grows every bond by one: each slice `H` becomes `[[H, u], [v, 1]]` with
/// `u`, `v` i.i.d. Gaussian of the given variance.
pub fn rank_increase(ring: &TensorRing, variance: f64, seed: u64) -> Result<TensorRing> {
    if !variance.is_finite() || variance <= 0.0 {
        return Err(TrError::InvalidArgument(format!(
            "variance {variance} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    let cores = ring
        .cores()
        .iter()
        .map(|core| {
            let (rl, _, rr) = core.shape();
            let slices = core
                .slices()
                .iter()
                .map(|h| {
                    let mut g = Matrix::zeros(rl + 1, rr + 1);
                    g.view_mut((0, 0), (rl, rr)).copy_from(h);
                    for i in 0..rl {
                        g[(i, rr)] = normal.sample(&mut rng);
                    }
                    for j in 0..rr {
                        g[(rl, j)] = normal.sample(&mut rng);
                    }
                    g[(rl, rr)] = 1.0;
                    g
                })
                .collect();
            TrCore::new(slices)
        })
        .collect::<Result<Vec<_>>>()?;
    TensorRing::new(cores)
}

/// How the first cores are produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InitMethod {
    /// Local SVDs glued by bond gauges.
    #[default]
    Proposed,
    /// I.i.d. Gaussian entries of standard deviation `1/sqrt(r)`.
    RandomGaussian,
}

/// Rank growth after the first convergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankGrowth {
    pub target_r: usize,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlsConfig {
    pub r: usize,
    pub s: usize,
    pub lambda: f64,
    pub passes: usize,
    /// Sweep cap per rank stage.
    pub max_sweeps: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub eval_count: usize,
    /// Random environments per skeleton element.
    pub extra_factor: usize,
    pub rank_growth: Option<RankGrowth>,
    pub init: InitMethod,
    pub frozen: FrozenSource,
    /// Also compute the held-out error after every sweep.
    pub track_heldout: bool,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            r: 3,
            s: 4,
            lambda: 1e-9,
            passes: 1,
            max_sweeps: 30,
            rel_tol: 1e-3,
            seed: 0,
            eval_count: 100_000,
            extra_factor: 5,
            rank_growth: None,
            init: InitMethod::Proposed,
            frozen: FrozenSource::Shared,
            track_heldout: false,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrError::InvalidArgument(m.into()));
        if self.r == 0 {
            return bad("r must be positive");
        }
        if self.s == 0 {
            return bad("s must be positive");
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad("lambda must be finite and >= 0");
        }
        if self.passes == 0 {
            return bad("passes must be at least 1");
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be at least 1");
        }
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return bad("rel_tol must be >= 0");
        }
        if self.eval_count == 0 {
            return bad("eval_count must be positive");
        }
        if let Some(g) = self.rank_growth {
            if g.target_r < self.r {
                return bad("rank growth target below r");
            }
            if g.variance.is_nan() || g.variance <= 0.0 {
                return bad("rank growth variance must be positive");
            }
        }
        Ok(())
    }
}

/// Per-sweep log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub rank: usize,
    pub e_skeleton: f64,
    pub e_heldout: Option<f64>,
    pub mults: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseTimes {
    pub sampling: f64,
    pub init: f64,
    pub als: f64,
    pub evaluation: f64,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        self.sampling + self.init + self.als + self.evaluation
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    /// Held-out relative error.
    pub e: Option<f64>,
    /// Relative error on the union of sample sets after the last sweep.
    pub e_skeleton: Option<f64>,
    /// Same, for the initial ring.
    pub e_skeleton_init: Option<f64>,
    /// Distinct oracle evaluations used for fitting.
    pub calls: u64,
    /// Calls spent building environments and sample sets.
    pub calls_sampling: u64,
    /// `calls / n^d`.
    pub fraction: f64,
    pub sweeps: usize,
    pub ranks: Vec<usize>,
    pub sample_points: usize,
    pub times: PhaseTimes,
    pub history: Vec<SweepRecord>,
}

/// Fitted ring with its report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ring: TensorRing,
    pub report: Report,
    /// Environment set of every axis, as used for the sample sets.
    pub envs: Vec<SkeletonSet>,
}

/// A failed run with everything measured before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: TrError,
    pub report: Report,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

fn fraction(calls: u64, n: usize, d: usize) -> f64 {
    calls as f64 / (n as f64).powi(d as i32)
}

/// The full pipeline: sample sets, initial ring, sweeps to convergence and a
/// final held-out error.
pub fn run(
    oracle: &BlackBox,
    config: &AlsConfig,
) -> std::result::Result<RunOutcome, Box<RunFailure>> {
    let mut report = Report::default();
    match run_inner(oracle, config, &mut report) {
        Ok((ring, envs)) => Ok(RunOutcome { ring, report, envs }),
        Err(error) => {
            report.calls = oracle.calls();
            report.fraction = fraction(report.calls, oracle.size(), oracle.dims());
            Err(Box::new(RunFailure { error, report }))
        }
    }
}

fn run_inner(
    oracle: &BlackBox,
    config: &AlsConfig,
    report: &mut Report,
) -> Result<(TensorRing, Vec<SkeletonSet>)> {
    config.validate()?;
    let d = oracle.dims();
    let n = oracle.size();
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let seed_skeleton: u64 = seeds.random();
    let seed_init: u64 = seeds.random();
    let seed_eval: u64 = seeds.random();
    let seed_growth: u64 = seeds.random();

    let clock = Stopwatch::start();
    let skeleton = SkeletonConfig {
        s: config.s,
        passes: config.passes,
        extra_factor: config.extra_factor,
    };
    let envs = build_all_envs(oracle, skeleton, seed_skeleton)?;
    let sets = assemble_all(oracle, &envs)?;
    let union = SampleUnion::new(&sets);
    report.calls_sampling = oracle.calls();
    report.sample_points = union.len();
    report.times.sampling = clock.seconds();

    let clock = Stopwatch::start();
    let mut ring = match config.init {
        InitMethod::Proposed => {
            initialize_ring(oracle, config.r, seed_init, config.frozen, Some(&envs))?.ring
        }
        InitMethod::RandomGaussian => {
            TensorRing::random_gaussian(d, n, config.r, 1.0 / (config.r as f64).sqrt(), seed_init)
        }
    };
    report.times.init = clock.seconds();
    report.ranks = ring.ranks();
    let mut prev = union.error(&ring)?;
    report.e_skeleton_init = Some(prev);

    let heldout = if config.track_heldout {
        Some(sample_eval_set(d, n, config.eval_count, seed_eval))
    } else {
        None
    };

    let clock = Stopwatch::start();
    let mut stage_sweeps = 0;
    let mut growth_round = 0u64;
    loop {
        let sweep_clock = Stopwatch::start();
        let stats = als_sweep(&mut ring, &sets, config.lambda, &union)?;
        stage_sweeps += 1;
        report.sweeps += 1;
        report.e_skeleton = Some(stats.e_skeleton);
        report.ranks = ring.ranks();
        let e_heldout = match &heldout {
            Some(pts) => Some(error_e(&ring, oracle.function(), pts)?),
            None => None,
        };
        report.history.push(SweepRecord {
            sweep: report.sweeps,
            rank: ring.max_rank(),
            e_skeleton: stats.e_skeleton,
            e_heldout,
            mults: stats.mults,
            seconds: sweep_clock.seconds(),
        });
        log::debug!(
            "sweep {} rank {} E_skeleton {:.3e}",
            report.sweeps,
            ring.max_rank(),
            stats.e_skeleton
        );
        let improvement = (prev - stats.e_skeleton) / prev.max(f64::MIN_POSITIVE);
        prev = stats.e_skeleton;
        let converged = improvement < config.rel_tol || stage_sweeps >= config.max_sweeps;
        if !converged {
            continue;
        }
        match config.rank_growth {
            Some(g) if ring.max_rank() < g.target_r => {
                ring = rank_increase(&ring, g.variance, seed_growth.wrapping_add(growth_round))?;
                growth_round += 1;
                stage_sweeps = 0;
                prev = union.error(&ring)?;
            }
            _ => break,
        }
    }
    report.times.als = clock.seconds();
    report.calls = oracle.calls();
    report.fraction = fraction(report.calls, n, d);

    let clock = Stopwatch::start();
    let points = match heldout {
        Some(p) => p,
        None => sample_eval_set(d, n, config.eval_count, seed_eval),
    };
    report.e = Some(error_e(&ring, oracle.function(), &points)?);
    report.times.evaluation = clock.seconds();
    Ok((ring, envs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::synthetic_tr_oracle;
    use crate::skeleton::{assemble_all, assemble_sample_set, random_envs, SkeletonSet};

    fn direct(ring: &TensorRing, x: &[usize], k: usize) -> Matrix {
        let d = ring.dims();
        let mut m = ring.core((k + 1) % d).slice(x[(k + 1) % d]).clone();
        for t in 2..d {
            let j = (k + t) % d;
            m *= ring.core(j).slice(x[j]);
        }
        m
    }

    #[test]
    fn batch_matches_direct_products() {
        let ring = TensorRing::random_gaussian(6, 2, 2, 1.0, 3);
        let f = synthetic_tr_oracle(ring.clone());
        let envs = random_envs(6, 2, 5, 1);
        for (k, env) in envs.iter().enumerate() {
            let set = assemble_sample_set(&f, k, env).unwrap();
            let batch = coefficient_batch(&ring, k, &set).unwrap();
            for e in 0..set.env().len() {
                for a in 0..2 {
                    for c in 0..2 {
                        let x = set.point(a, 0, c, e);
                        let want = direct(&ring, &x, k);
                        assert!(
                            (batch.get(a, c, e) - &want).norm() <= 1e-12 * want.norm().max(1.0)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn batch_counts_products() {
        let ring = TensorRing::random_gaussian(12, 3, 2, 1.0, 3);
        let f = synthetic_tr_oracle(ring.clone());
        let envs = random_envs(12, 3, 4, 1);
        let set = assemble_sample_set(&f, 5, &envs[5]).unwrap();
        let batch = coefficient_batch(&ring, 5, &set).unwrap();
        assert_eq!(batch.mults, 4 * (8 + 3 + 9));
        assert!(batch.mults <= 4 * 8 + 2 * 4 * 9);
    }

    #[test]
    fn sweep_cost_within_quadratic_bound() {
        let (n, s) = (3, 4);
        for d in [6, 12, 24] {
            let mut ring = TensorRing::random_gaussian(d, n, 2, 0.7, d as u64);
            let f = synthetic_tr_oracle(ring.clone());
            let sets = assemble_all(&f, &random_envs(d, n, s, 3)).unwrap();
            let union = SampleUnion::new(&sets);
            let stats = als_sweep(&mut ring, &sets, 1e-9, &union).unwrap();
            assert!(
                stats.mults <= (4 * s * (d + n * n) * d) as u64,
                "d = {d}: {}",
                stats.mults
            );
        }
    }

    #[test]
    fn four_axes_coefficient_has_one_env_slice() {
        let ring = TensorRing::random_gaussian(4, 2, 2, 1.0, 5);
        let f = synthetic_tr_oracle(ring.clone());
        let env = SkeletonSet::new(vec![3], vec![vec![1]]).unwrap();
        let set = assemble_sample_set(&f, 1, &env).unwrap();
        let batch = coefficient_batch(&ring, 1, &set).unwrap();
        let want = ring.core(2).slice(1) * ring.core(3).slice(1) * ring.core(0).slice(0);
        assert!((batch.get(0, 1, 0) - want).norm() < 1e-12);
    }

    #[test]
    fn three_axes_coefficient_is_neighbour_product() {
        let ring = TensorRing::random_gaussian(3, 2, 2, 1.0, 5);
        let f = synthetic_tr_oracle(ring.clone());
        let env = SkeletonSet::new(vec![], vec![vec![]]).unwrap();
        let set = assemble_sample_set(&f, 0, &env).unwrap();
        let batch = coefficient_batch(&ring, 0, &set).unwrap();
        let want = ring.core(1).slice(1) * ring.core(2).slice(0);
        assert!((batch.get(0, 1, 0) - want).norm() < 1e-12);
    }

    #[test]
    fn rank_one_coefficient_is_scalar_product() {
        let ring = TensorRing::random_gaussian(5, 2, 1, 1.0, 8);
        let f = synthetic_tr_oracle(ring.clone());
        let envs = random_envs(5, 2, 2, 0);
        let set = assemble_sample_set(&f, 2, &envs[2]).unwrap();
        let batch = coefficient_batch(&ring, 2, &set).unwrap();
        let x = set.point(1, 0, 0, 1);
        let want: f64 = (0..5)
            .filter(|&j| j != 2)
            .map(|j| ring.core(j).get(0, x[j], 0))
            .product();
        assert!((batch.get(1, 0, 1)[(0, 0)] - want).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_keeps_zero_residual() {
        let ring = TensorRing::gibbs_chain(6, 3, 2, 1.0, 2);
        let f = synthetic_tr_oracle(ring.clone());
        let sets = assemble_all(&f, &random_envs(6, 3, 6, 3)).unwrap();
        let union = SampleUnion::new(&sets);
        let mut fit = ring.clone();
        let stats = als_sweep(&mut fit, &sets, 0.0, &union).unwrap();
        assert!(stats.e_skeleton <= 1e-10, "{}", stats.e_skeleton);
    }

    #[test]
    fn scalar_normal_equations_by_hand() {
        // d = 4, n = 2, r = 1: every other core is the constant 2, so the
        // coefficient is 8 and each slice fits the mean of its targets / 8.
        let ring = TensorRing::constant(4, 2, 1, 2.0);
        struct Targets;
        impl crate::oracle::Function for Targets {
            fn dims(&self) -> usize {
                4
            }
            fn size(&self) -> usize {
                2
            }
            fn eval(&self, x: &[usize]) -> f64 {
                (1 + x[0] + 2 * x[1] + x[2] * x[3]) as f64
            }
        }
        let f = BlackBox::new(Targets);
        let env = SkeletonSet::new(vec![2], vec![vec![0], vec![1]]).unwrap();
        let set = assemble_sample_set(&f, 0, &env).unwrap();
        let upd = solve_core(&ring, 0, &set, 0.0).unwrap();
        for b in 0..2 {
            let mut sum = 0.0;
            let mut count = 0.0;
            for x3 in 0..2 {
                for x1 in 0..2 {
                    for x2 in 0..2 {
                        sum += (1 + b + 2 * x1 + x2 * x3) as f64;
                        count += 1.0;
                    }
                }
            }
            // minimise sum (8 h - y)^2 => h = mean(y) / 8
            let want = sum / count / 8.0;
            assert!((upd.core.get(0, b, 0) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_core_is_identified() {
        let truth = TensorRing::gibbs_chain(6, 3, 2, 1.0, 12);
        let f = synthetic_tr_oracle(truth.clone());
        let envs = random_envs(6, 3, 12, 4);
        let set = assemble_sample_set(&f, 2, &envs[2]).unwrap();
        let mut start = truth.clone();
        start.set_core(2, TrCore::zeros(2, 3, 2)).unwrap();
        let upd = solve_core(&start, 2, &set, 0.0).unwrap();
        assert!(
            upd.objective_after.sqrt()
                <= 1e-8 * set.values().iter().map(|v| v * v).sum::<f64>().sqrt()
        );
        let mut fit = truth.clone();
        fit.set_core(2, upd.core).unwrap();
        for x in sample_eval_set(6, 3, 50, 1) {
            assert!((fit.eval(&x) - truth.eval(&x)).abs() <= 1e-8 * truth.eval(&x).abs());
        }
    }

    #[test]
    fn own_objective_never_rises() {
        let truth = TensorRing::random_gaussian(6, 3, 3, 1.0, 1);
        let f = synthetic_tr_oracle(truth);
        let sets = assemble_all(&f, &random_envs(6, 3, 6, 2)).unwrap();
        let mut ring = TensorRing::random_gaussian(6, 3, 2, 0.7, 9);
        for (k, set) in sets.iter().enumerate() {
            let upd = solve_core(&ring, k, set, 0.0).unwrap();
            assert!(upd.objective_after <= upd.objective_before * (1.0 + 1e-10) + 1e-20);
            ring.set_core(k, upd.core).unwrap();
        }
    }

    #[test]
    fn rank_increase_shapes_and_offset() {
        let ring = TensorRing::random_gaussian(5, 3, 3, 1.0, 2);
        let grown = rank_increase(&ring, 1e-8, 4).unwrap();
        assert_eq!(grown.ranks(), vec![4; 5]);
        assert_eq!(grown, rank_increase(&ring, 1e-8, 4).unwrap());
        assert!(rank_increase(&ring, 0.0, 4).is_err());
        for x in sample_eval_set(5, 3, 30, 3) {
            let gap = grown.eval(&x) - ring.eval(&x) - 1.0;
            assert!(gap.abs() <= 1e-2, "{gap}");
        }
    }

    #[test]
    fn rank_increase_vanishing_variance_limit() {
        let ring = TensorRing::random_gaussian(4, 2, 2, 1.0, 2);
        let grown = rank_increase(&ring, 1e-300, 1).unwrap();
        for x in sample_eval_set(4, 2, 16, 0) {
            assert!((grown.eval(&x) - ring.eval(&x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn run_is_deterministic_and_accurate_on_exact_model() {
        let truth = TensorRing::gibbs_chain(6, 3, 2, 1.0, 5);
        let cfg = AlsConfig {
            r: 2,
            s: 3,
            eval_count: 500,
            ..AlsConfig::default()
        };
        let a = run(&synthetic_tr_oracle(truth.clone()), &cfg).unwrap();
        let b = run(&synthetic_tr_oracle(truth), &cfg).unwrap();
        assert_eq!(a.ring, b.ring);
        assert_eq!(a.report.e, b.report.e);
        assert_eq!(a.report.calls, b.report.calls);
        assert!(a.report.e.unwrap() < 1e-6, "{:?}", a.report.e);
        assert!(a.report.sweeps >= 1 && a.report.sweeps <= 30);
        assert_eq!(a.report.history.len(), a.report.sweeps);
    }

    #[test]
    fn run_grows_rank() {
        let truth = TensorRing::gibbs_chain(6, 3, 3, 1.0, 5);
        let cfg = AlsConfig {
            r: 2,
            s: 3,
            eval_count: 200,
            rank_growth: Some(RankGrowth {
                target_r: 3,
                variance: 1e-8,
            }),
            ..AlsConfig::default()
        };
        let out = run(&synthetic_tr_oracle(truth), &cfg).unwrap();
        assert_eq!(out.ring.ranks(), vec![3; 6]);
        assert!(out.report.history.iter().any(|h| h.rank == 2));
    }

    #[test]
    fn invalid_config_reports_failure() {
        let f = synthetic_tr_oracle(TensorRing::gibbs_chain(6, 3, 2, 1.0, 5));
        let cfg = AlsConfig {
            max_sweeps: 0,
            ..AlsConfig::default()
        };
        let err = run(&f, &cfg).unwrap_err();
        assert!(matches!(err.error, TrError::InvalidArgument(_)));
        let bad_d = synthetic_tr_oracle(TensorRing::gibbs_chain(9, 3, 2, 1.0, 5));
        let err = run(&bad_d, &AlsConfig::default()).unwrap_err();
        assert!(matches!(err.error, TrError::UnsupportedDimension(9)));
    }
}
