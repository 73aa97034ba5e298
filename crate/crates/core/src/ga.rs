//! The four-parameter (1+(λ,λ)) GA: operators, one iteration, whole episodes.
//!
//! Evaluation accounting: the initial uniform sample is *not* counted. Every
//! mutant costs one evaluation; a crossover offspring costs one evaluation
//! only when it differs from both the parent and the mutation winner.
//!
//! Internally offspring are represented sparsely as the list of positions in
//! which they differ from the parent. Mutants differ in exactly `ℓ` positions
//! and crossover offspring in a subset of the winner's positions, so each
//! evaluation costs `O(ℓ)` instead of `O(n)`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bitstring::{fitness, BitVector, RngStream, Target};
use crate::error::{Error, Result};
use crate::policy::Policy;

/// One iteration's parameters `⟨λ_m, α, λ_c, β⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub lambda_m: u32,
    pub alpha: f64,
    pub lambda_c: u32,
    pub beta: f64,
}

impl ParameterSet {
    pub fn new(lambda_m: u32, alpha: f64, lambda_c: u32, beta: f64) -> Result<Self> {
        let ps = Self { lambda_m, alpha, lambda_c, beta };
        ps.validate()?;
        Ok(ps)
    }

    /// `λ_m = λ_c = λ`, `α = β = 1`.
    pub fn standard(lambda: u32) -> Self {
        Self { lambda_m: lambda.max(1), alpha: 1.0, lambda_c: lambda.max(1), beta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_m == 0 || self.lambda_c == 0 {
            return Err(Error::contract(format!(
                "population sizes must be >= 1 (lambda_m={}, lambda_c={})",
                self.lambda_m, self.lambda_c
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) || !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::contract(format!(
                "alpha and beta must be positive and finite (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// `p = α·λ_m/n`, capped at 1.
    pub fn mutation_rate(&self, n: usize) -> f64 {
        (self.alpha * f64::from(self.lambda_m) / n as f64).min(1.0)
    }

    /// `c = β/λ_c`, clamped into `[1/n, 1]`.
    pub fn crossover_bias(&self, n: usize) -> f64 {
        (self.beta / f64::from(self.lambda_c)).clamp(1.0 / n as f64, 1.0)
    }
}

/// Round a real-valued population size to the nearest integer, minimum 1.
pub fn round_lambda(x: f64) -> u32 {
    if !x.is_finite() || x < 1.0 {
        1
    } else {
        x.round().min(f64::from(u32::MAX)) as u32
    }
}

/// Cutoff budget of `⌈0.8·n²⌉` evaluations.
pub fn default_cutoff(n: usize) -> u64 {
    (0.8 * (n as f64) * (n as f64)).ceil() as u64
}

/// Draw `ℓ ~ Bin(n, p)` conditioned on `ℓ > 0`.
///
/// When `P(ℓ > 0)` is reasonably large the binomial is redrawn until positive.
/// For tiny `n·p` (e.g. `α = 0.001`) rejection would need thousands of redraws,
/// so the zero-truncated pmf is inverted directly; both paths have the same
/// distribution.
pub fn sample_conditional_binomial(n: usize, p: f64, rng: &mut RngStream) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::contract(format!("mutation rate must lie in (0, 1], got {p}")));
    }
    if n == 0 {
        return Err(Error::contract("problem size must be >= 1"));
    }
    if p == 1.0 {
        return Ok(n);
    }
    let nf = n as f64;
    // P(ℓ > 0) = 1 - (1-p)^n
    let positive = -(nf * (-p).ln_1p()).exp_m1();
    if positive >= 0.25 {
        let bin = Binomial::new(n as u64, p).map_err(|e| Error::contract(e.to_string()))?;
        loop {
            let l = bin.sample(rng) as usize;
            if l > 0 {
                return Ok(l);
            }
        }
    }
    // pmf(1)/P(ℓ>0), then pmf(k+1) = pmf(k)·(n-k)/(k+1)·p/(1-p)
    let ratio = p / (1.0 - p);
    let mut pmf = nf * p * ((nf - 1.0) * (-p).ln_1p()).exp() / positive;
    let u: f64 = rng.random();
    let mut cdf = pmf;
    let mut k = 1usize;
    while u >= cdf && k < n {
        pmf *= (nf - k as f64) / (k as f64 + 1.0) * ratio;
        k += 1;
        cdf += pmf;
        if pmf == 0.0 {
            break;
        }
    }
    Ok(k)
}

/// Flip exactly `ℓ` distinct positions chosen uniformly at random.
pub fn flip_exact(x: &BitVector, ell: usize, rng: &mut RngStream) -> Result<BitVector> {
    if ell > x.len() {
        return Err(Error::contract(format!("cannot flip {ell} bits of a length-{} vector", x.len())));
    }
    let mut y = x.clone();
    for i in index::sample(rng, x.len(), ell) {
        y.flip(i);
    }
    Ok(y)
}

/// Each position independently takes `x_prime`'s entry with probability `c`.
pub fn biased_crossover(x: &BitVector, x_prime: &BitVector, c: f64, rng: &mut RngStream) -> Result<BitVector> {
    if x.len() != x_prime.len() {
        return Err(Error::contract(format!("length mismatch: {} vs {}", x.len(), x_prime.len())));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::contract(format!("crossover bias must lie in [0, 1], got {c}")));
    }
    let mut y = x.clone();
    for i in 0..x.len() {
        if rng.bernoulli(c) && x.get(i) != x_prime.get(i) {
            y.flip(i);
        }
    }
    Ok(y)
}

/// How the best offspring `y` compared to the parent before the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Improved,
    Equal,
    Worse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationOutcome {
    /// `f(x_{t+1}) - f(x_t)`; never negative since the parent is only replaced by an offspring at least as good.
    pub delta_f: i64,
    /// `E_t = λ_m + |Y|`.
    pub evals_used: u64,
    pub comparison: Comparison,
    /// Mutation strength drawn this iteration.
    pub ell: usize,
    /// Fitness of the selected offspring `y`.
    pub best_offspring_fitness: usize,
    /// Problem size.
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct GaState {
    x: BitVector,
    fx: usize,
    evaluations: u64,
    iterations: u64,
}

impl GaState {
    /// Start from `x`. Its fitness is taken as known and costs no evaluation.
    pub fn new(x: BitVector, z: &Target) -> Result<Self> {
        let fx = fitness(&x, z)?;
        Ok(Self { x, fx, evaluations: 0, iterations: 0 })
    }

    pub fn x(&self) -> &BitVector {
        &self.x
    }

    pub fn fx(&self) -> usize {
        self.fx
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn is_optimal(&self) -> bool {
        self.fx == self.x.len()
    }
}

/// Reusable scratch buffers for [`run_iteration`].
#[derive(Default)]
struct Scratch {
    mutant: Vec<usize>,
    winner: Vec<usize>,
    gains: Vec<i64>,
    child: Vec<usize>,
    best: Vec<usize>,
}

/// Reservoir tie-breaking: returns true when the `count`-th maximal candidate
/// should replace the current choice.
#[inline]
fn replace_tie(count: u64, rng: &mut RngStream) -> bool {
    rng.random_range(0..count) == 0
}

fn iterate(
    state: &mut GaState,
    params: &ParameterSet,
    z: &Target,
    rng: &mut RngStream,
    s: &mut Scratch,
) -> Result<IterationOutcome> {
    params.validate()?;
    let n = state.n();
    if z.len() != n {
        return Err(Error::contract(format!("target length {} != problem size {n}", z.len())));
    }
    if state.is_optimal() {
        return Err(Error::contract("run_iteration called at the optimum"));
    }
    let fx = state.fx as i64;
    let ell = sample_conditional_binomial(n, params.mutation_rate(n), rng)?;

    // Mutation phase.
    let mut best_f = i64::MIN;
    let mut ties = 0u64;
    for _ in 0..params.lambda_m {
        s.mutant.clear();
        s.mutant.extend(index::sample(rng, n, ell));
        let f = fx + s.mutant.iter().map(|&i| if z.agrees(&state.x, i) { -1 } else { 1 }).sum::<i64>();
        if f > best_f {
            best_f = f;
            ties = 1;
            std::mem::swap(&mut s.winner, &mut s.mutant);
        } else if f == best_f {
            ties += 1;
            if replace_tie(ties, rng) {
                std::mem::swap(&mut s.winner, &mut s.mutant);
            }
        }
    }
    let mut evals = u64::from(params.lambda_m);

    // Crossover phase: offspring take a subset of the winner's flips.
    s.gains.clear();
    s.gains.extend(s.winner.iter().map(|&i| if z.agrees(&state.x, i) { -1 } else { 1 }));
    let c = params.crossover_bias(n);
    s.best.clear();
    s.best.extend_from_slice(&s.winner);
    let mut y_f = best_f;
    let mut y_ties = 1u64;
    for _ in 0..params.lambda_c {
        s.child.clear();
        let mut f = fx;
        for (k, &i) in s.winner.iter().enumerate() {
            if rng.bernoulli(c) {
                s.child.push(i);
                f += s.gains[k];
            }
        }
        if s.child.is_empty() || s.child.len() == ell {
            continue;
        }
        evals += 1;
        if f > y_f {
            y_f = f;
            y_ties = 1;
            std::mem::swap(&mut s.best, &mut s.child);
        } else if f == y_f {
            y_ties += 1;
            if replace_tie(y_ties, rng) {
                std::mem::swap(&mut s.best, &mut s.child);
            }
        }
    }

    // Selection.
    let comparison = match y_f.cmp(&fx) {
        std::cmp::Ordering::Greater => Comparison::Improved,
        std::cmp::Ordering::Equal => Comparison::Equal,
        std::cmp::Ordering::Less => Comparison::Worse,
    };
    let before = state.fx;
    if y_f >= fx {
        for &i in &s.best {
            state.x.flip(i);
        }
        state.fx = y_f as usize;
    }
    state.evaluations += evals;
    state.iterations += 1;
    debug_assert_eq!(Some(state.fx), fitness(&state.x, z).ok());
    Ok(IterationOutcome {
        delta_f: state.fx as i64 - before as i64,
        evals_used: evals,
        comparison,
        ell,
        best_offspring_fitness: y_f as usize,
        n,
    })
}

/// One mutation + crossover + selection round.
pub fn run_iteration(
    state: &mut GaState,
    params: &ParameterSet,
    z: &Target,
    rng: &mut RngStream,
) -> Result<IterationOutcome> {
    iterate(state, params, z, rng, &mut Scratch::default())
}

/// A GA run driven step by step from outside, e.g. by an RL agent choosing
/// the parameters of every iteration.
pub struct Episode {
    state: GaState,
    target: Target,
    cutoff: u64,
    scratch: Scratch,
}

impl Episode {
    pub fn new(x0: BitVector, target: Target, cutoff: u64) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::contract("cutoff must be > 0"));
        }
        let state = GaState::new(x0, &target)?;
        Ok(Self { state, target, cutoff, scratch: Scratch::default() })
    }

    /// Continue a run whose parent `x` has already used `evaluations`
    /// evaluations over `iterations` iterations.
    pub fn resume(x: BitVector, target: Target, cutoff: u64, evaluations: u64, iterations: u64) -> Result<Self> {
        let mut e = Self::new(x, target, cutoff)?;
        e.state.evaluations = evaluations;
        e.state.iterations = iterations;
        Ok(e)
    }

    /// Uniformly random initial point.
    pub fn uniform(target: Target, cutoff: u64, rng: &mut RngStream) -> Result<Self> {
        let x0 = BitVector::sample_uniform(target.len(), rng);
        Self::new(x0, target, cutoff)
    }

    pub fn state(&self) -> &GaState {
        &self.state
    }

    pub fn step(&mut self, params: &ParameterSet, rng: &mut RngStream) -> Result<IterationOutcome> {
        iterate(&mut self.state, params, &self.target, rng, &mut self.scratch)
    }

    pub fn is_solved(&self) -> bool {
        self.state.is_optimal()
    }

    /// Budget exhausted without reaching the optimum. The iteration that
    /// crosses the cutoff is always completed first.
    pub fn is_truncated(&self) -> bool {
        !self.is_solved() && self.state.evaluations >= self.cutoff
    }

    pub fn is_done(&self) -> bool {
        self.is_solved() || self.is_truncated()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub fx: usize,
    pub params: ParameterSet,
    pub evals_cum: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub evaluations_total: u64,
    pub success: bool,
    pub iterations: u64,
    pub final_fitness: usize,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

/// Run a full episode from a uniformly random initial point.
pub fn run_episode(
    policy: &mut dyn Policy,
    z: &Target,
    cutoff: u64,
    rng: &mut RngStream,
    record_trajectory: bool,
) -> Result<RunResult> {
    let x0 = BitVector::sample_uniform(z.len(), rng);
    run_episode_from(policy, x0, z, cutoff, rng, record_trajectory)
}

/// Run a full episode from an injected initial point.
pub fn run_episode_from(
    policy: &mut dyn Policy,
    x0: BitVector,
    z: &Target,
    cutoff: u64,
    rng: &mut RngStream,
    record_trajectory: bool,
) -> Result<RunResult> {
    policy.reset();
    let mut episode = Episode::new(x0, z.clone(), cutoff)?;
    let n = z.len();
    let mut trajectory = record_trajectory.then(Vec::new);
    while !episode.is_done() {
        let fx = episode.state.fx;
        let params = policy.select(fx, n)?;
        let outcome = episode.step(&params, rng)?;
        policy.observe(&outcome);
        if let Some(t) = trajectory.as_mut() {
            t.push(TrajectoryPoint {
                iteration: episode.state.iterations,
                fx,
                params,
                evals_cum: episode.state.evaluations,
            });
        }
    }
    Ok(RunResult {
        evaluations_total: episode.state.evaluations,
        success: episode.is_solved(),
        iterations: episode.state.iterations,
        final_fitness: episode.state.fx,
        trajectory,
    })
}

/// Write a trajectory as CSV: `iteration,fx,lambda_m,alpha,lambda_c,beta,evals_cum`.
pub fn write_trajectory_csv<W: std::io::Write>(points: &[TrajectoryPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "fx", "lambda_m", "alpha", "lambda_c", "beta", "evals_cum"])?;
    for p in points {
        w.write_record(&[
            p.iteration.to_string(),
            p.fx.to_string(),
            p.params.lambda_m.to_string(),
            p.params.alpha.to_string(),
            p.params.lambda_c.to_string(),
            p.params.beta.to_string(),
            p.evals_cum.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
