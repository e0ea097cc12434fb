//! Hierarchical skeleton sampling: environment sets for every core and the
//! per-core sample sets `[n]^3 x env` built from them.
//!
//! Dimensions are grouped into consecutive triples, and the triples are paired
//! into a binary tree. An upward pass picks representative index tuples
//! ("in-skeletons") for each group with column-pivoted QR. A downward pass then
//! picks representative complements ("environments"). Three cyclic shifts of
//! the grouping give every dimension a turn as the centre of a triple.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrError};
use crate::linalg::rrqr_select;
use crate::oracle::BlackBox;
use crate::tensor::{increment, subsample};
use crate::Matrix;

/// Partial multi-indices over a fixed list of axis labels.
///
/// Element values are 0-based and positional with respect to `dims`, so
/// element `e` assigns `e[p]` to axis `dims[p]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonSet {
    dims: Vec<usize>,
    elements: Vec<Vec<usize>>,
}

impl SkeletonSet {
    pub fn new(dims: Vec<usize>, elements: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = HashSet::new();
        if !dims.iter().all(|d| seen.insert(*d)) {
            return Err(TrError::InvalidArgument("repeated axis label".into()));
        }
        let mut seen = HashSet::new();
        for e in &elements {
            if e.len() != dims.len() {
                return Err(TrError::LengthMismatch {
                    expected: dims.len(),
                    got: e.len(),
                });
            }
            if !seen.insert(e.as_slice()) {
                return Err(TrError::InvalidArgument(
                    "duplicate skeleton element".into(),
                ));
            }
        }
        Ok(Self { dims, elements })
    }

    /// All `n^|dims|` tuples, first axis fastest.
    pub fn full_grid(dims: Vec<usize>, n: usize) -> Self {
        let shape = vec![n; dims.len()];
        let total = n.pow(dims.len() as u32);
        let mut idx = vec![0; dims.len()];
        let mut elements = Vec::with_capacity(total);
        for _ in 0..total {
            elements.push(idx.clone());
            increment(&mut idx, &shape);
        }
        Self { dims, elements }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Writes element `i` into the matching positions of a full index.
    pub fn fill(&self, i: usize, x: &mut [usize]) {
        for (&d, &v) in self.dims.iter().zip(&self.elements[i]) {
            x[d] = v;
        }
    }

    /// Value of element `i` on axis `dim`, if the set covers it.
    pub fn value(&self, i: usize, dim: usize) -> Option<usize> {
        self.dims
            .iter()
            .position(|&d| d == dim)
            .map(|p| self.elements[i][p])
    }

    /// Cartesian product over the union of axes; `self` varies fastest.
    pub fn product(&self, other: &SkeletonSet) -> Result<SkeletonSet> {
        if self.dims.iter().any(|d| other.dims.contains(d)) {
            return Err(TrError::InvalidSplit(
                "product of overlapping skeleton sets".into(),
            ));
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut elements = Vec::with_capacity(self.len() * other.len());
        for b in &other.elements {
            for a in &self.elements {
                let mut e = a.clone();
                e.extend_from_slice(b);
                elements.push(e);
            }
        }
        Ok(SkeletonSet { dims, elements })
    }

    pub fn select(&self, picks: &[usize]) -> SkeletonSet {
        SkeletonSet {
            dims: self.dims.clone(),
            elements: picks.iter().map(|&i| self.elements[i].clone()).collect(),
        }
    }

    /// Same set with axes listed in increasing order.
    pub fn sorted_dims(&self) -> SkeletonSet {
        let mut order: Vec<usize> = (0..self.dims.len()).collect();
        order.sort_by_key(|&p| self.dims[p]);
        SkeletonSet {
            dims: order.iter().map(|&p| self.dims[p]).collect(),
            elements: self
                .elements
                .iter()
                .map(|e| order.iter().map(|&p| e[p]).collect())
                .collect(),
        }
    }

    /// Appends up to `count` new uniformly random elements not already present.
    pub fn extend_random(&mut self, n: usize, count: usize, rng: &mut impl Rng) {
        let existing: HashSet<Vec<usize>> = self.elements.iter().cloned().collect();
        let extra = random_distinct(self.dims.len(), n, count, &existing, rng);
        self.elements.extend(extra);
    }
}

/// `count` distinct uniform tuples in `[n]^len` avoiding `exclude`; fewer if
/// the space runs out.
fn random_distinct(
    len: usize,
    n: usize,
    count: usize,
    exclude: &HashSet<Vec<usize>>,
    rng: &mut impl Rng,
) -> Vec<Vec<usize>> {
    let space = (n as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if space <= (4 * (count + exclude.len())) as u128 {
        let mut all: Vec<Vec<usize>> = SkeletonSet::full_grid((0..len).collect(), n)
            .elements
            .into_iter()
            .filter(|e| !exclude.contains(e))
            .collect();
        all.shuffle(rng);
        all.truncate(count);
        return all;
    }
    let mut seen = exclude.clone();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let e: Vec<usize> = (0..len).map(|_| rng.random_range(0..n)).collect();
        if seen.insert(e.clone()) {
            out.push(e);
        }
    }
    out
}

/// Number of tree levels for `d = 3 * 2^L`, `L >= 1`.
pub fn tree_levels(d: usize) -> Result<usize> {
    if d < 6 || !d.is_multiple_of(3) || !(d / 3).is_power_of_two() {
        return Err(TrError::UnsupportedDimension(d));
    }
    Ok((d / 3).trailing_zeros() as usize)
}

/// Binary grouping of the axes for one cyclic offset.
///
/// `group(l, k)` for `l` in `1..=L` holds `2^l` groups of `3 * 2^(L-l)` axes.
/// Leaf group `k` is `(3k + offset + j) mod d` for `j = 0, 1, 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTree {
    d: usize,
    levels: usize,
    offset: usize,
    groups: Vec<Vec<Vec<usize>>>,
}

impl GroupTree {
    pub fn new(d: usize, offset: usize) -> Result<Self> {
        let levels = tree_levels(d)?;
        if offset > 2 {
            return Err(TrError::InvalidArgument(format!(
                "grouping offset {offset} not in 0..3"
            )));
        }
        let mut groups = vec![Vec::new(); levels + 1];
        groups[levels] = (0..d / 3)
            .map(|k| (0..3).map(|j| (3 * k + offset + j) % d).collect())
            .collect();
        for l in (0..levels).rev() {
            groups[l] = groups[l + 1].chunks(2).map(|pair| pair.concat()).collect();
        }
        Ok(Self {
            d,
            levels,
            offset,
            groups,
        })
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn groups_at(&self, level: usize) -> &[Vec<usize>] {
        &self.groups[level]
    }

    pub fn group(&self, level: usize, k: usize) -> &[usize] {
        &self.groups[level][k]
    }

    /// Middle axis of leaf group `k`.
    pub fn center(&self, k: usize) -> usize {
        self.groups[self.levels][k][1]
    }

    /// Axes outside group `(level, k)`, ascending.
    pub fn complement(&self, level: usize, k: usize) -> Vec<usize> {
        let g = &self.groups[level][k];
        (0..self.d).filter(|x| !g.contains(x)).collect()
    }
}

/// Skeleton sets indexed `[level][group]`; index 0 is unused.
pub type LevelSets = Vec<Vec<SkeletonSet>>;

fn check_tree(oracle: &BlackBox, tree: &GroupTree) -> Result<()> {
    if oracle.dims() != tree.dims() {
        return Err(TrError::LengthMismatch {
            expected: tree.dims(),
            got: oracle.dims(),
        });
    }
    Ok(())
}

fn finite_subsample(oracle: &BlackBox, rows: &SkeletonSet, cols: &SkeletonSet) -> Result<Matrix> {
    let m = subsample(oracle, rows, cols)?;
    if m.iter().all(|v| v.is_finite()) {
        Ok(m)
    } else {
        Err(TrError::NonFinite(format!(
            "oracle returned a non-finite value while selecting over axes {:?}",
            cols.dims()
        )))
    }
}

/// Bottom-up selection of `s` representative tuples per group.
///
/// With `prior` the environments of an earlier downward pass serve as rows of
/// the selection matrices; otherwise rows are drawn at random.
pub fn upward_pass(
    oracle: &BlackBox,
    tree: &GroupTree,
    s: usize,
    prior: Option<&LevelSets>,
    seed: u64,
) -> Result<LevelSets> {
    check_tree(oracle, tree)?;
    if s == 0 {
        return Err(TrError::InvalidArgument(
            "skeleton size must be positive".into(),
        ));
    }
    let n = oracle.size();
    let big_l = tree.levels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ins: LevelSets = vec![Vec::new(); big_l + 1];

    for k in 0..tree.groups_at(big_l).len() {
        let cand = SkeletonSet::full_grid(tree.group(big_l, k).to_vec(), n);
        let env = match prior {
            Some(p) => p[big_l][k].clone(),
            None => {
                let dims = tree.complement(big_l, k);
                let elems = random_distinct(dims.len(), n, s, &HashSet::new(), &mut rng);
                SkeletonSet {
                    dims,
                    elements: elems,
                }
            }
        };
        let m = finite_subsample(oracle, &env, &cand)?;
        ins[big_l].push(cand.select(&rrqr_select(&m, s)));
    }

    for l in (2..=big_l).rev() {
        let parents = tree.groups_at(l - 1).len();
        let mut level = Vec::with_capacity(parents);
        for p in 0..parents {
            let cand = ins[l][2 * p].product(&ins[l][2 * p + 1])?;
            let env = match prior {
                Some(pr) => pr[l - 1][p].clone(),
                None => random_from_product(&ins[l], &[2 * p, 2 * p + 1], s, &mut rng)?,
            };
            let m = finite_subsample(oracle, &env, &cand)?;
            level.push(cand.select(&rrqr_select(&m, s)));
        }
        ins[l - 1] = level;
    }
    Ok(ins)
}

/// Up to `count` distinct random picks from the product of all sets except `skip`.
fn random_from_product(
    sets: &[SkeletonSet],
    skip: &[usize],
    count: usize,
    rng: &mut impl Rng,
) -> Result<SkeletonSet> {
    let others: Vec<&SkeletonSet> = sets
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, s)| s)
        .collect();
    let dims: Vec<usize> = others.iter().flat_map(|s| s.dims.iter().copied()).collect();
    let space = others
        .iter()
        .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128))
        .unwrap_or(u128::MAX);
    let target = (count as u128).min(space) as usize;
    let mut seen = HashSet::new();
    let mut elements = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while elements.len() < target && attempts < 1000 * count.max(1) {
        attempts += 1;
        let e: Vec<usize> = others
            .iter()
            .flat_map(|s| s.elements[rng.random_range(0..s.len())].iter().copied())
            .collect();
        if seen.insert(e.clone()) {
            elements.push(e);
        }
    }
    SkeletonSet::new(dims, elements)
}

/// Top-down selection of `s` environments per group from the in-skeletons.
pub fn downward_pass(
    oracle: &BlackBox,
    tree: &GroupTree,
    ins: &LevelSets,
    s: usize,
) -> Result<LevelSets> {
    check_tree(oracle, tree)?;
    let big_l = tree.levels();
    if ins.len() != big_l + 1 || (1..=big_l).any(|l| ins[l].len() != tree.groups_at(l).len()) {
        return Err(TrError::InvalidArgument(
            "in-skeletons do not match the tree".into(),
        ));
    }
    let mut envs: LevelSets = vec![Vec::new(); big_l + 1];
    envs[1] = vec![ins[1][1].clone(), ins[1][0].clone()];
    for l in 2..=big_l {
        let count = tree.groups_at(l).len();
        let mut level = Vec::with_capacity(count);
        for k in 0..count {
            let cols = ins[l][k ^ 1].product(&envs[l - 1][k / 2])?;
            let m = finite_subsample(oracle, &ins[l][k], &cols)?;
            level.push(cols.select(&rrqr_select(&m, s)));
        }
        envs[l] = level;
    }
    Ok(envs)
}

/// Settings for [`build_all_envs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkeletonConfig {
    /// Skeleton size per group.
    pub s: usize,
    /// Upward/downward rounds per grouping.
    pub passes: usize,
    /// Random environments appended per skeleton element.
    pub extra_factor: usize,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            s: 5,
            passes: 1,
            extra_factor: 5,
        }
    }
}

/// Environment set for every axis `k`, over the axes outside `{k-1, k, k+1}`
/// listed in increasing order.
pub fn build_all_envs(
    oracle: &BlackBox,
    config: SkeletonConfig,
    seed: u64,
) -> Result<Vec<SkeletonSet>> {
    let d = oracle.dims();
    let n = oracle.size();
    tree_levels(d)?;
    if config.passes == 0 {
        return Err(TrError::InvalidArgument("passes must be at least 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Option<SkeletonSet>> = vec![None; d];
    for offset in 0..3 {
        let tree = GroupTree::new(d, offset)?;
        let mut prior: Option<LevelSets> = None;
        for _ in 0..config.passes {
            let ins = upward_pass(oracle, &tree, config.s, prior.as_ref(), master.random())?;
            prior = Some(downward_pass(oracle, &tree, &ins, config.s)?);
        }
        let envs = prior.expect("at least one pass");
        let big_l = tree.levels();
        for (k, env) in envs[big_l].iter().enumerate() {
            out[tree.center(k)] = Some(env.sorted_dims());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master.random());
    Ok(out
        .into_iter()
        .map(|env| {
            let mut env = env.expect("three offsets cover every axis");
            let extra = config.extra_factor * env.len();
            env.extend_random(n, extra, &mut rng);
            env
        })
        .collect())
}

/// Axes `(k-1, k, k+1)` modulo `d`.
pub fn neighbourhood(k: usize, d: usize) -> [usize; 3] {
    [(k + d - 1) % d, k, (k + 1) % d]
}

/// Oracle values on `[n]^3 x env` around centre axis `k`.
///
/// Entry `(a, b, c, e)` stores `f` with `x_{k-1} = a`, `x_k = b`,
/// `x_{k+1} = c` and the remaining axes from environment element `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    center: usize,
    d: usize,
    n: usize,
    env: SkeletonSet,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn env(&self) -> &SkeletonSet {
        &self.env
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, a: usize, b: usize, c: usize, e: usize) -> f64 {
        let n = self.n;
        self.values[a + n * (b + n * (c + n * e))]
    }

    /// Full index of entry `(a, b, c, e)`.
    pub fn point(&self, a: usize, b: usize, c: usize, e: usize) -> Vec<usize> {
        let mut x = vec![0; self.d];
        self.env.fill(e, &mut x);
        let [l, m, r] = neighbourhood(self.center, self.d);
        x[l] = a;
        x[m] = b;
        x[r] = c;
        x
    }

    /// Every sample point, in storage order.
    pub fn points(&self) -> Vec<Vec<usize>> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.len());
        for e in 0..self.env.len() {
            for c in 0..n {
                for b in 0..n {
                    for a in 0..n {
                        out.push(self.point(a, b, c, e));
                    }
                }
            }
        }
        out
    }

    /// Unfolding with `x_k` on the rows and `(x_{k-1}, x_{k+1}, env)` on the
    /// columns, column index `a + n (c + n e)`.
    pub fn matrix(&self) -> Matrix {
        let n = self.n;
        let cols = n * n * self.env.len();
        Matrix::from_fn(n, cols, |b, j| {
            let a = j % n;
            let c = (j / n) % n;
            let e = j / (n * n);
            self.value(a, b, c, e)
        })
    }
}

pub fn assemble_sample_set(oracle: &BlackBox, k: usize, env: &SkeletonSet) -> Result<SampleSet> {
    let d = oracle.dims();
    let n = oracle.size();
    if d < 3 || k >= d {
        return Err(TrError::InvalidArgument(format!(
            "centre axis {k} invalid for d = {d}"
        )));
    }
    let hood = neighbourhood(k, d);
    let mut expected: Vec<usize> = (0..d).filter(|x| !hood.contains(x)).collect();
    let mut got = env.dims().to_vec();
    expected.sort_unstable();
    got.sort_unstable();
    if expected != got {
        return Err(TrError::InvalidSplit(format!(
            "environment for axis {} must cover {:?}, got {:?}",
            k + 1,
            expected.iter().map(|x| x + 1).collect::<Vec<_>>(),
            got.iter().map(|x| x + 1).collect::<Vec<_>>()
        )));
    }
    if let Some(v) = env.elements().iter().flatten().find(|&&v| v >= n) {
        return Err(TrError::IndexOutOfRange {
            position: 0,
            value: v + 1,
            n,
        });
    }
    let mut set = SampleSet {
        center: k,
        d,
        n,
        env: env.clone(),
        values: Vec::new(),
    };
    set.values = oracle.eval_many(&set.points());
    Ok(set)
}

/// Sample sets for every axis.
pub fn assemble_all(oracle: &BlackBox, envs: &[SkeletonSet]) -> Result<Vec<SampleSet>> {
    envs.iter()
        .enumerate()
        .map(|(k, env)| assemble_sample_set(oracle, k, env))
        .collect()
}

/// Uniformly random environments of `count` elements for every axis.
pub fn random_envs(d: usize, n: usize, count: usize, seed: u64) -> Vec<SkeletonSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d)
        .map(|k| {
            let hood = neighbourhood(k, d);
            let dims: Vec<usize> = (0..d).filter(|x| !hood.contains(x)).collect();
            let elements = random_distinct(dims.len(), n, count, &HashSet::new(), &mut rng);
            SkeletonSet { dims, elements }
        })
        .collect()
}

/// Text dump of environment sets: a header per axis, then one element per
/// line as `axis=value` pairs, both 1-based.
pub fn dump_envs(envs: &[SkeletonSet]) -> String {
    let mut out = String::new();
    for (k, env) in envs.iter().enumerate() {
        let dims: Vec<String> = env.dims().iter().map(|d| (d + 1).to_string()).collect();
        let _ = writeln!(
            out,
            "env {} size {} dims {}",
            k + 1,
            env.len(),
            dims.join(" ")
        );
        for e in env.elements() {
            let pairs: Vec<String> = env
                .dims()
                .iter()
                .zip(e)
                .map(|(d, v)| format!("{}={}", d + 1, v + 1))
                .collect();
            out.push_str(&pairs.join(" "));
            out.push('\n');
        }
    }
    out
}
