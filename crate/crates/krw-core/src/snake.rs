//! Critical Galton-Watson machinery, the spine construction, tree-indexed
//! walks, the bush-hitting killing estimate, and the snake / killed-walk
//! reduction with the conditioned-snake sampler.

use crate::error::{KrwError, Result};
use crate::exhaust::Exhaustion;
use crate::lattice::Point;
use crate::ratio::{conditioned_kernel_fn, ConditionedKernel};
use crate::rng::RandomStream;
use crate::stats::Estimate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Critical offspring distribution with finite variance, plus its
/// size-biased companion `mu*(i) = i mu(i)` used for spine bushes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum OffspringLaw {
    /// `mu(i) = 2^-(i+1)`; mean 1, variance 2.
    GeometricHalf,
    /// Finite-support pmf over {0, 1, ..}.
    Finite {
        pmf: Vec<f64>,
        #[serde(skip)]
        cdf: Vec<f64>,
        /// cdf of the root law `mu* - 1`
        #[serde(skip)]
        root_cdf: Vec<f64>,
    },
}

impl OffspringLaw {
    pub fn geometric_half() -> Self {
        OffspringLaw::GeometricHalf
    }

    pub fn finite(pmf: Vec<f64>) -> Result<Self> {
        let total: f64 = pmf.iter().sum();
        if pmf.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(KrwError::InvalidParameter(format!(
                "offspring pmf sums to {total}, not 1"
            )));
        }
        let mean: f64 = pmf.iter().enumerate().map(|(i, &p)| i as f64 * p).sum();
        if (mean - 1.0).abs() > 1e-9 {
            return Err(KrwError::InvalidParameter(format!(
                "offspring mean {mean} is not critical"
            )));
        }
        if pmf.len() > 1 && (pmf[1] - 1.0).abs() < 1e-12 {
            return Err(KrwError::InvalidParameter(
                "mu(1) = 1 yields the infinite path tree".into(),
            ));
        }
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        // root law mu* - 1: P[j] = (j+1) mu(j+1)
        let mut root_cdf = Vec::new();
        let mut racc = 0.0;
        for j in 0..pmf.len().saturating_sub(1) {
            racc += (j as f64 + 1.0) * pmf[j + 1];
            root_cdf.push(racc);
        }
        Ok(OffspringLaw::Finite { pmf, cdf, root_cdf })
    }

    pub fn pmf(&self, i: usize) -> f64 {
        match self {
            OffspringLaw::GeometricHalf => 0.5f64.powi(i as i32 + 1),
            OffspringLaw::Finite { pmf, .. } => pmf.get(i).copied().unwrap_or(0.0),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            OffspringLaw::GeometricHalf => 2.0,
            OffspringLaw::Finite { pmf, .. } => {
                let m2: f64 = pmf
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (i * i) as f64 * p)
                    .sum();
                m2 - 1.0
            }
        }
    }

    /// Draw from `mu`.
    #[inline]
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        match self {
            OffspringLaw::GeometricHalf => geometric_half(rng),
            OffspringLaw::Finite { cdf, .. } => sample_cdf(cdf, rng),
        }
    }

    /// Draw the root offspring count, distributed as `mu* - 1`.
    #[inline]
    pub fn sample_root(&self, rng: &mut ChaCha8Rng) -> u32 {
        match self {
            // mu*-1 for Geometric(1/2) is the sum of two independent copies
            OffspringLaw::GeometricHalf => geometric_half(rng) + geometric_half(rng),
            OffspringLaw::Finite { root_cdf, .. } => sample_cdf(root_cdf, rng),
        }
    }
}

#[inline]
fn geometric_half(rng: &mut ChaCha8Rng) -> u32 {
    // trailing-zero count of uniform bits: P[i] = 2^-(i+1)
    let u: u64 = rng.gen();
    if u == 0 {
        64
    } else {
        u.trailing_zeros()
    }
}

#[inline]
fn sample_cdf(cdf: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let t: f64 = rng.gen();
    for (i, &c) in cdf.iter().enumerate() {
        if t < c {
            return i as u32;
        }
    }
    cdf.len().saturating_sub(1) as u32
}

#[inline]
fn random_step(x: &Point, dim: usize, rng: &mut ChaCha8Rng) -> Point {
    let r = rng.gen_range(0..2 * dim as u32);
    x.translated((r / 2) as usize, if r & 1 == 0 { -1 } else { 1 })
}

/// Rooted tree shape: `parent[v] < v` for `v > 0`, root at index 0.
#[derive(Clone, Debug)]
pub struct TreeShape {
    pub parent: Vec<u32>,
}

impl TreeShape {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Tree with a spatial label per node.
#[derive(Clone, Debug)]
pub struct LabeledTree {
    pub shape: TreeShape,
    pub labels: Vec<Point>,
}

pub struct TreeSample {
    pub shape: TreeShape,
    /// The node cap was hit; the shape is the BFS prefix.
    pub capped: bool,
}

fn sample_tree_impl(
    law: &OffspringLaw,
    node_cap: usize,
    multitype: bool,
    rng: &mut ChaCha8Rng,
) -> TreeSample {
    let mut parent = vec![0u32];
    let mut frontier = 0usize;
    let mut capped = false;
    while frontier < parent.len() {
        let c = if frontier == 0 && multitype {
            law.sample_root(rng)
        } else {
            law.sample(rng)
        };
        for _ in 0..c {
            if parent.len() >= node_cap {
                capped = true;
                break;
            }
            parent.push(frontier as u32);
        }
        if capped {
            break;
        }
        frontier += 1;
    }
    TreeSample {
        shape: TreeShape { parent },
        capped,
    }
}

/// Critical GW tree sampled breadth-first; the flag reports a hit node cap
/// (not an error).
pub fn sample_gw_tree(law: &OffspringLaw, node_cap: usize, stream: RandomStream) -> TreeSample {
    assert!(node_cap >= 1);
    sample_tree_impl(law, node_cap, false, &mut stream.rng())
}

/// As `sample_gw_tree` with the root offspring law `mu* - 1`.
pub fn sample_multitype_tree(
    law: &OffspringLaw,
    node_cap: usize,
    stream: RandomStream,
) -> TreeSample {
    assert!(node_cap >= 1);
    sample_tree_impl(law, node_cap, true, &mut stream.rng())
}

/// Assign the root label `start` and an independent uniform unit step to
/// every edge.
pub fn index_walk(shape: &TreeShape, start: &Point, dim: usize, stream: RandomStream) -> LabeledTree {
    let mut rng = stream.rng();
    let mut labels = Vec::with_capacity(shape.len());
    labels.push(*start);
    for v in 1..shape.len() {
        let p = labels[shape.parent[v] as usize];
        labels.push(random_step(&p, dim, &mut rng));
    }
    LabeledTree {
        shape: shape.clone(),
        labels,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BushOutcome {
    HitsZero,
    Avoids,
    /// node cap reached with no zero found among generated labels
    Capped,
}

/// Does the walk indexed by a multitype tree from `x` reach the origin?
/// Streaming depth-first check with early exit; at most `node_cap` labels
/// are generated.
fn bush_hits_zero(
    law: &OffspringLaw,
    x: &Point,
    dim: usize,
    node_cap: usize,
    rng: &mut ChaCha8Rng,
    stack: &mut Vec<Point>,
) -> BushOutcome {
    if x.is_origin() {
        return BushOutcome::HitsZero;
    }
    stack.clear();
    stack.push(*x);
    let mut produced = 1usize;
    let mut root = true;
    while let Some(p) = stack.pop() {
        let c = if root {
            root = false;
            law.sample_root(rng)
        } else {
            law.sample(rng)
        };
        for _ in 0..c {
            if produced >= node_cap {
                return BushOutcome::Capped;
            }
            let q = random_step(&p, dim, rng);
            produced += 1;
            if q.is_origin() {
                return BushOutcome::HitsZero;
            }
            stack.push(q);
        }
    }
    BushOutcome::Avoids
}

/// Monte Carlo estimate of `k(x) = P_x[multitype-tree walk reaches 0]` with
/// two-sided cap accounting.
#[derive(Clone, Copy, Debug)]
pub struct KHatEstimate {
    pub hits: u64,
    pub capped: u64,
    pub n: u64,
    pub stream: RandomStream,
}

impl KHatEstimate {
    /// Every capped sample counted as a miss.
    pub fn lower(&self) -> f64 {
        self.hits as f64 / self.n as f64
    }

    /// Every capped sample counted as a hit.
    pub fn upper(&self) -> f64 {
        (self.hits + self.capped) as f64 / self.n as f64
    }

    pub fn capped_fraction(&self) -> f64 {
        self.capped as f64 / self.n as f64
    }

    /// Midpoint estimate; the stderr folds the binomial error together with
    /// the half-width of the cap interval.
    pub fn estimate(&self) -> Estimate {
        let mid = 0.5 * (self.lower() + self.upper());
        let base = Estimate::bernoulli(self.hits + self.capped / 2, self.n, self.stream);
        let half_gap = 0.5 * (self.upper() - self.lower());
        Estimate {
            mean: mid,
            stderr: (base.stderr * base.stderr + half_gap * half_gap).sqrt(),
            n: self.n,
            stream: self.stream,
        }
    }

    /// The cap ambiguity exceeds the binomial error, so the interval is the
    /// honest report.
    pub fn interval_dominates(&self) -> bool {
        let base = Estimate::bernoulli(self.hits + self.capped / 2, self.n, self.stream);
        self.upper() - self.lower() > base.stderr
    }
}

/// Fraction of multitype-tree-indexed walks from `x` containing the label 0.
pub fn estimate_k(
    x: &Point,
    law: &OffspringLaw,
    dim: usize,
    samples: u64,
    node_cap: usize,
    stream: RandomStream,
) -> KHatEstimate {
    if x.is_origin() {
        // root labeled 0
        return KHatEstimate {
            hits: samples,
            capped: 0,
            n: samples,
            stream,
        };
    }
    let chunk = 2048u64;
    let chunks = samples.div_ceil(chunk);
    let (hits, capped) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.fork(c).rng();
            let mut stack = Vec::with_capacity(1024);
            let m = chunk.min(samples - c * chunk);
            let mut h = 0u64;
            let mut cap = 0u64;
            for _ in 0..m {
                match bush_hits_zero(law, x, dim, node_cap, &mut rng, &mut stack) {
                    BushOutcome::HitsZero => h += 1,
                    BushOutcome::Capped => cap += 1,
                    BushOutcome::Avoids => {}
                }
            }
            (h, cap)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    KHatEstimate {
        hits,
        capped,
        n: samples,
        stream,
    }
}

/// Radial table of `k-hat` with linear interpolation between shells and
/// constant extrapolation beyond the last one.
#[derive(Clone, Debug)]
pub struct KTable {
    pub dim: usize,
    /// `(shell radius, k-hat midpoint, stderr, samples, capped fraction)`
    pub entries: Vec<(f64, f64, f64, u64, f64)>,
}

impl KTable {
    pub fn eval(&self, x: &Point) -> f64 {
        self.eval_radius(x.norm())
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let first = &self.entries[0];
        if r <= first.0 {
            // interpolate down toward k(0) = 1
            let t = (r / first.0).clamp(0.0, 1.0);
            return 1.0 + t * (first.1 - 1.0);
        }
        let last = self.entries.last().unwrap();
        if r >= last.0 {
            return last.1;
        }
        for w in self.entries.windows(2) {
            if r >= w[0].0 && r <= w[1].0 {
                let t = (r - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        last.1
    }
}

/// Build the radial table on shells `1..=max_radius` with per-shell budgets
/// proportional to shell population (`~ s^{d-1}`), sampling random lattice
/// points of each shell.
pub fn build_k_table(
    law: &OffspringLaw,
    dim: usize,
    max_radius: u32,
    total_samples: u64,
    node_cap: usize,
    stream: RandomStream,
) -> KTable {
    let weights: Vec<f64> = (1..=max_radius)
        .map(|s| (s as f64).powi(dim as i32 - 1))
        .collect();
    let wsum: f64 = weights.iter().sum();
    let entries: Vec<(f64, f64, f64, u64, f64)> = (1..=max_radius)
        .into_par_iter()
        .map(|s| {
            let budget =
                ((total_samples as f64) * weights[(s - 1) as usize] / wsum).ceil() as u64;
            let budget = budget.max(2000);
            let sub = stream.fork(1_000_000 + s as u64);
            let mut rng = sub.rng();
            let mut stack = Vec::with_capacity(1024);
            let mut hits = 0u64;
            let mut capped = 0u64;
            for _ in 0..budget {
                let x = random_shell_point(dim, s, &mut rng);
                match bush_hits_zero(law, &x, dim, node_cap, &mut rng, &mut stack) {
                    BushOutcome::HitsZero => hits += 1,
                    BushOutcome::Capped => capped += 1,
                    BushOutcome::Avoids => {}
                }
            }
            let kh = KHatEstimate {
                hits,
                capped,
                n: budget,
                stream: sub,
            };
            let e = kh.estimate();
            (s as f64, e.mean, e.stderr, budget, kh.capped_fraction())
        })
        .collect();
    KTable { dim, entries }
}

/// Uniform-direction lattice point whose norm rounds to shell `s`.
fn random_shell_point(dim: usize, s: u32, rng: &mut ChaCha8Rng) -> Point {
    loop {
        let mut c = [0i32; crate::lattice::MAX_DIM];
        let mut n2 = 0.0;
        let dir: Vec<f64> = (0..dim)
            .map(|_| {
                // Box-Muller pair folded to one draw
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        for a in 0..dim {
            c[a] = (s as f64 * dir[a] / norm).round() as i32;
            n2 += (c[a] as f64) * (c[a] as f64);
        }
        let r = n2.sqrt();
        if (r - s as f64).abs() <= 0.5 && r > 0.0 {
            return Point::new(&c[..dim]);
        }
    }
}

/// Outcome tallies of snake or killed-walk escape trials.
#[derive(Clone, Copy, Debug, Default)]
pub struct EscapeTrials {
    pub escaped: u64,
    pub died: u64,
    pub inconclusive: u64,
    /// bushes that hit the node cap without finding the origin (snake side)
    pub capped_bushes: u64,
    pub n: u64,
}

impl EscapeTrials {
    pub fn estimate(&self, stream: RandomStream) -> Estimate {
        Estimate::bernoulli(self.escaped, self.n, stream)
    }
}

/// Direct simulation of the snake escape event: the spine walks step by
/// step; at each spine vertex inside the domain a full multitype bush is
/// grafted and its labels checked for 0 before the spine advances; the event
/// is decided at the first spine exit of `Lambda_R` with no prior bush hit.
#[allow(clippy::too_many_arguments)]
pub fn snake_escape_probability(
    x: &Point,
    law: &OffspringLaw,
    dim: usize,
    exhaustion: &Exhaustion,
    r_index: u32,
    samples: u64,
    spine_cap: usize,
    bush_node_cap: usize,
    stream: RandomStream,
) -> Result<EscapeTrials> {
    if x.is_origin() {
        return Err(KrwError::InvalidParameter(
            "snake escape requires x != 0".into(),
        ));
    }
    exhaustion.validate(dim)?;
    let chunk = 512u64;
    let chunks = samples.div_ceil(chunk);
    let total = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.fork(c).rng();
            let mut stack = Vec::with_capacity(1024);
            let m = chunk.min(samples - c * chunk);
            let mut t = EscapeTrials {
                n: m,
                ..Default::default()
            };
            'trial: for _ in 0..m {
                let mut s = *x;
                for _ in 0..spine_cap {
                    if !exhaustion.contains(r_index, &s) {
                        t.escaped += 1;
                        continue 'trial;
                    }
                    match bush_hits_zero(law, &s, dim, bush_node_cap, &mut rng, &mut stack) {
                        BushOutcome::HitsZero => {
                            t.died += 1;
                            continue 'trial;
                        }
                        BushOutcome::Capped => t.capped_bushes += 1,
                        BushOutcome::Avoids => {}
                    }
                    s = random_step(&s, dim, &mut rng);
                }
                t.inconclusive += 1;
            }
            t
        })
        .reduce(EscapeTrials::default, |a, b| EscapeTrials {
            escaped: a.escaped + b.escaped,
            died: a.died + b.died,
            inconclusive: a.inconclusive + b.inconclusive,
            capped_bushes: a.capped_bushes + b.capped_bushes,
            n: a.n + b.n,
        });
    Ok(total)
}

/// Killed-walk escape trials with an arbitrary killing evaluation; the same
/// trial structure as the snake estimator with the bush check replaced by a
/// Bernoulli kill.
pub fn krw_escape_probability(
    kill: impl Fn(&Point) -> f64 + Sync,
    x: &Point,
    dim: usize,
    exhaustion: &Exhaustion,
    r_index: u32,
    samples: u64,
    step_cap: usize,
    stream: RandomStream,
) -> Result<EscapeTrials> {
    exhaustion.validate(dim)?;
    let chunk = 4096u64;
    let chunks = samples.div_ceil(chunk);
    let total = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.fork(c).rng();
            let m = chunk.min(samples - c * chunk);
            let mut t = EscapeTrials {
                n: m,
                ..Default::default()
            };
            'trial: for _ in 0..m {
                let mut s = *x;
                for _ in 0..step_cap {
                    if !exhaustion.contains(r_index, &s) {
                        t.escaped += 1;
                        continue 'trial;
                    }
                    let kv = kill(&s);
                    if kv > 0.0 && rng.gen::<f64>() < kv {
                        t.died += 1;
                        continue 'trial;
                    }
                    s = random_step(&s, dim, &mut rng);
                }
                t.inconclusive += 1;
            }
            t
        })
        .reduce(EscapeTrials::default, |a, b| EscapeTrials {
            escaped: a.escaped + b.escaped,
            died: a.died + b.died,
            inconclusive: a.inconclusive + b.inconclusive,
            capped_bushes: 0,
            n: a.n + b.n,
        });
    Ok(total)
}

/// A sampled prefix of the conditioned snake: spine labels and the grafted
/// bushes, all avoiding the origin.
pub struct ConditionedSnakePrefix {
    pub spine: Vec<Point>,
    pub bushes: Vec<LabeledTree>,
}

/// Sample the conditioned snake: the spine follows the Doob kernel built
/// from `(k-hat, weight)` and each bush is drawn by rejection until its
/// labels avoid the origin.
#[allow(clippy::too_many_arguments)]
pub fn sample_conditioned_snake<W: Fn(&Point) -> f64>(
    x: &Point,
    law: &OffspringLaw,
    dim: usize,
    weight: W,
    ktable: &KTable,
    prefix_len: usize,
    bush_node_cap: usize,
    stream: RandomStream,
) -> Result<ConditionedSnakePrefix> {
    if !(weight(x) > 0.0) {
        return Err(KrwError::NonpositiveWeight(*x));
    }
    let kernel: ConditionedKernel<_, _> =
        conditioned_kernel_fn(|p: &Point| ktable.eval(p), dim, weight);
    let mut rng = stream.rng();
    let mut spine = Vec::with_capacity(prefix_len + 1);
    let mut bushes = Vec::with_capacity(prefix_len);
    let mut s = *x;
    spine.push(s);
    for i in 0..prefix_len {
        // bush at s by rejection against hitting 0
        let mut attempts = 0u64;
        let bush = loop {
            attempts += 1;
            if attempts > 1_000_000 {
                return Err(KrwError::RejectionStall(s));
            }
            let shape = sample_tree_impl(law, bush_node_cap, true, &mut rng);
            let labeled = {
                let mut labels = Vec::with_capacity(shape.shape.len());
                labels.push(s);
                let mut ok = true;
                for v in 1..shape.shape.len() {
                    let p = labels[shape.shape.parent[v] as usize];
                    let q = random_step(&p, dim, &mut rng);
                    if q.is_origin() {
                        ok = false;
                        break;
                    }
                    labels.push(q);
                }
                if ok {
                    Some(LabeledTree {
                        shape: shape.shape,
                        labels,
                    })
                } else {
                    None
                }
            };
            if let Some(t) = labeled {
                break t;
            }
        };
        bushes.push(bush);
        let _ = i;
        s = kernel.step(&s, &mut rng)?;
        spine.push(s);
    }
    Ok(ConditionedSnakePrefix { spine, bushes })
}
