//! Double deep Q-learning for choosing GA parameters per iteration.
//!
//! The state is the normalized fitness `f(x)/n`. Actions pick values for the
//! controlled parameters from fixed grids, either jointly (one head over the
//! Cartesian product) or per parameter (one head per branch, each trained
//! against its own double-Q target).
//!
//! Since the state takes only `n + 1` distinct values, minibatches are
//! collapsed to their distinct states before the network is run; the
//! per-sample loss gradients are summed per state, which gives exactly the
//! gradient of the full minibatch loss.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitstring::{derive_seed, BitVector, RngStream, Target};
use crate::error::{Error, Result};
use crate::ga::{round_lambda, Episode, ParameterSet};
use crate::neural_net::{huber, huber_grad, AdamState, ForwardCache, NetworkParams, NetworkSpec};
use crate::policy::{theory_params, Policy, PolicyTable, TablePolicy};
use crate::stats::{evaluate_policy, seed_range, ErtSummary};

pub const LAMBDA_GRID: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
pub const COEF_GRID: [f64; 7] = [0.25, 0.542, 0.833, 1.125, 1.417, 1.708, 2.0];

const ENV_STREAM: u64 = 0;
const EXPLORE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;
const EVAL_TAG: u64 = 0xE7A1;
const FINAL_TAG: u64 = 0xF17A;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    LambdaM,
    Alpha,
    LambdaC,
    Beta,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::LambdaM, Param::Alpha, Param::LambdaC, Param::Beta];

    pub fn grid(self) -> &'static [f64; 7] {
        match self {
            Param::LambdaM | Param::LambdaC => &LAMBDA_GRID,
            Param::Alpha | Param::Beta => &COEF_GRID,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Param::LambdaM => "lambda_m",
            Param::Alpha => "alpha",
            Param::LambdaC => "lambda_c",
            Param::Beta => "beta",
        }
    }

    fn value(self, p: &ParameterSet) -> f64 {
        match self {
            Param::LambdaM => f64::from(p.lambda_m),
            Param::Alpha => p.alpha,
            Param::LambdaC => f64::from(p.lambda_c),
            Param::Beta => p.beta,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::validation(format!("unknown parameter {s:?} (expected lambda_m, alpha, lambda_c, beta)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Combinatorial,
    Factored,
}

/// Maps between network outputs and parameter settings.
///
/// Controlled parameters are kept in the order `λ_m, α, λ_c, β`; joint
/// indices are mixed-radix with the first controlled parameter most
/// significant. Uncontrolled parameters fall back to `λ_m = √(n/(n−f))`,
/// `λ_c = λ_m`, `α = β = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCodec {
    mode: ActionMode,
    controlled: Vec<Param>,
}

impl ActionCodec {
    pub fn new(mode: ActionMode, controlled: &[Param]) -> Result<Self> {
        let mut controlled = controlled.to_vec();
        controlled.sort();
        controlled.dedup();
        if controlled.is_empty() {
            return Err(Error::validation("at least one parameter must be controlled"));
        }
        Ok(Self { mode, controlled })
    }

    pub fn full(mode: ActionMode) -> Self {
        Self { mode, controlled: Param::ALL.to_vec() }
    }

    pub fn mode(&self) -> ActionMode {
        self.mode
    }

    pub fn controlled(&self) -> &[Param] {
        &self.controlled
    }

    /// Number of joint actions, `7^k`.
    pub fn joint_size(&self) -> usize {
        self.controlled.iter().map(|p| p.grid().len()).product()
    }

    pub fn head_sizes(&self) -> Vec<usize> {
        match self.mode {
            ActionMode::Combinatorial => vec![self.joint_size()],
            ActionMode::Factored => self.controlled.iter().map(|p| p.grid().len()).collect(),
        }
    }

    /// Grid position of every controlled parameter.
    pub fn branches(&self, action: &[usize]) -> Result<Vec<usize>> {
        match self.mode {
            ActionMode::Factored => {
                if action.len() != self.controlled.len() {
                    return Err(Error::contract(format!("expected {} branch indices", self.controlled.len())));
                }
                for (&a, p) in action.iter().zip(&self.controlled) {
                    if a >= p.grid().len() {
                        return Err(Error::contract(format!("index {a} out of range for {p}")));
                    }
                }
                Ok(action.to_vec())
            }
            ActionMode::Combinatorial => {
                let [idx] = action else {
                    return Err(Error::contract("combinatorial actions carry one index"));
                };
                if *idx >= self.joint_size() {
                    return Err(Error::contract(format!("joint index {idx} >= {}", self.joint_size())));
                }
                let mut rest = *idx;
                let mut out = vec![0; self.controlled.len()];
                for (slot, p) in out.iter_mut().zip(&self.controlled).rev() {
                    let k = p.grid().len();
                    *slot = rest % k;
                    rest /= k;
                }
                Ok(out)
            }
        }
    }

    fn from_branches(&self, branches: &[usize]) -> Vec<usize> {
        match self.mode {
            ActionMode::Factored => branches.to_vec(),
            ActionMode::Combinatorial => {
                let idx = branches.iter().zip(&self.controlled).fold(0, |acc, (&b, p)| acc * p.grid().len() + b);
                vec![idx]
            }
        }
    }

    /// Action indices for a setting whose controlled values lie on the grids.
    pub fn encode(&self, params: &ParameterSet) -> Result<Vec<usize>> {
        let branches = self
            .controlled
            .iter()
            .map(|p| {
                let v = p.value(params);
                p.grid()
                    .iter()
                    .position(|g| (g - v).abs() <= 1e-9)
                    .ok_or_else(|| Error::contract(format!("{p}={v} is not on the action grid")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.from_branches(&branches))
    }

    pub fn decode(&self, action: &[usize], fx: usize, n: usize) -> Result<ParameterSet> {
        let branches = self.branches(action)?;
        let chosen = |param: Param| {
            self.controlled.iter().position(|p| *p == param).map(|i| param.grid()[branches[i]])
        };
        let lambda_m = match chosen(Param::LambdaM) {
            Some(v) => round_lambda(v),
            None => theory_params(fx, n)?.lambda_m,
        };
        let lambda_c = chosen(Param::LambdaC).map_or(lambda_m, round_lambda);
        let alpha = chosen(Param::Alpha).unwrap_or(1.0);
        let beta = chosen(Param::Beta).unwrap_or(1.0);
        ParameterSet::new(lambda_m, alpha, lambda_c, beta)
    }

    pub fn network_spec(&self, hidden: &[usize]) -> Result<NetworkSpec> {
        NetworkSpec::new(1, hidden.to_vec(), self.head_sizes())
    }
}

pub fn encode_state(fx: usize, n: usize) -> Vec<f64> {
    vec![fx as f64 / n as f64]
}

/// `−E_t + Δf_t`
pub fn reward_naive(evals: u64, delta_f: i64) -> f64 {
    -(evals as f64) + delta_f as f64
}

pub fn reward_shifted(evals: u64, delta_f: i64, bias: f64) -> f64 {
    reward_naive(evals, delta_f) + bias
}

/// `max(0, −mean)` of the warm-up rewards.
pub fn compute_adaptive_bias(naive_rewards: &[f64]) -> Result<f64> {
    if naive_rewards.is_empty() {
        return Err(Error::contract("adaptive shift needs at least one warm-up transition"));
    }
    let mean = naive_rewards.iter().sum::<f64>() / naive_rewards.len() as f64;
    Ok((-mean).max(0.0))
}

/// One environment step. States are stored as fitness values and encoded on use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub fx: u32,
    /// Per-head indices; only the first `head count` entries are used.
    pub action: [u16; 4],
    pub reward: f64,
    pub next_fx: u32,
    pub terminal: bool,
}

impl Transition {
    pub fn new(fx: usize, action: &[usize], reward: f64, next_fx: usize, terminal: bool) -> Result<Self> {
        if action.is_empty() || action.len() > 4 || action.iter().any(|&a| a > u16::MAX as usize) {
            return Err(Error::contract("action must have 1 to 4 indices below 65536"));
        }
        if !reward.is_finite() {
            return Err(Error::contract("reward must be finite"));
        }
        let mut a = [0u16; 4];
        for (dst, &src) in a.iter_mut().zip(action) {
            *dst = src as u16;
        }
        Ok(Self { fx: fx as u32, action: a, reward, next_fx: next_fx as u32, terminal })
    }
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::contract("replay capacity must be positive"));
        }
        Ok(Self { capacity, data: Vec::with_capacity(capacity.min(1 << 20)), head: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.data[self.head..].iter().chain(&self.data[..self.head])
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Transition> + '_ {
        self.data.iter_mut()
    }

    /// `count` draws with replacement.
    pub fn sample(&self, count: usize, rng: &mut RngStream) -> Vec<Transition> {
        if self.data.is_empty() {
            return Vec::new();
        }
        (0..count).map(|_| self.data[rng.random_range(0..self.data.len())]).collect()
    }
}

/// Index of the largest value, the lowest index among ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy: with probability ε a uniformly random action (every branch
/// independently uniform in factored mode), otherwise the greedy one.
pub fn select_action(
    net: &NetworkParams,
    state: &[f64],
    epsilon: f64,
    codec: &ActionCodec,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::contract(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if epsilon > 0.0 && rng.bernoulli(epsilon) {
        return Ok(random_action(codec, rng));
    }
    Ok(net.forward(state)?.iter().map(|q| argmax(q)).collect())
}

pub fn random_action(codec: &ActionCodec, rng: &mut RngStream) -> Vec<usize> {
    codec.head_sizes().into_iter().map(|k| rng.random_range(0..k)).collect()
}

/// Network outputs for a set of fitness values, each computed once.
struct StateBatch {
    slot: Vec<usize>,
    cache: ForwardCache,
}

impl StateBatch {
    fn new(net: &NetworkParams, n: usize, states: impl Iterator<Item = usize>) -> Self {
        let mut slot = vec![usize::MAX; n + 1];
        let mut inputs = Vec::new();
        for fx in states {
            if slot[fx] == usize::MAX {
                slot[fx] = inputs.len();
                inputs.push(fx as f64 / n as f64);
            }
        }
        let cache = net.forward_batch(&inputs, inputs.len());
        Self { slot, cache }
    }

    fn q(&self, head: usize, fx: usize) -> &[f64] {
        self.cache.head_row(head, self.slot[fx])
    }
}

/// Double-Q targets, one per head: `r + γ·Q_target(s', argmax Q_online(s', ·))`,
/// or `r` for terminal transitions.
pub fn td_targets(
    online: &NetworkParams,
    target: &NetworkParams,
    batch: &[Transition],
    gamma: f64,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    if online.spec() != target.spec() {
        return Err(Error::contract("online and target networks differ in shape"));
    }
    if batch.iter().any(|t| t.next_fx as usize > n || t.fx as usize > n) {
        return Err(Error::contract("transition fitness exceeds problem size"));
    }
    let on = StateBatch::new(online, n, batch.iter().map(|t| t.next_fx as usize));
    let tg = StateBatch::new(target, n, batch.iter().map(|t| t.next_fx as usize));
    let heads = online.spec().heads.len();
    Ok(batch
        .iter()
        .map(|t| {
            (0..heads)
                .map(|h| {
                    if t.terminal || gamma == 0.0 {
                        t.reward
                    } else {
                        let a = argmax(on.q(h, t.next_fx as usize));
                        t.reward + gamma * tg.q(h, t.next_fx as usize)[a]
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Naive,
    AdaptiveShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub warmup: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub budget: u64,
    pub cutoff_factor: f64,
    pub eval_interval: u64,
    pub eval_runs: usize,
    pub final_eval_runs: usize,
    pub top_k: usize,
    pub repetitions: usize,
    pub reward_mode: RewardMode,
    /// Gradient steps between hard target-network copies.
    pub target_update: u64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub mode: ActionMode,
    pub controlled: Vec<Param>,
    /// Threads for policy evaluation; 0 uses every core. Results do not depend on it.
    pub parallel: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n: 100,
            gamma: 0.9998,
            epsilon: 0.2,
            warmup: 10_000,
            batch_size: 2048,
            lr: 0.001,
            budget: 200_000,
            cutoff_factor: 0.8,
            eval_interval: 2000,
            eval_runs: 100,
            final_eval_runs: 1000,
            top_k: 5,
            repetitions: 5,
            reward_mode: RewardMode::AdaptiveShift,
            target_update: 1000,
            buffer_capacity: 1_000_000,
            hidden: vec![50, 50],
            mode: ActionMode::Factored,
            controlled: Param::ALL.to_vec(),
            parallel: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, field: &str| {
            if !ok {
                bad.push(field.to_string());
            }
        };
        check(self.n >= 2, "n");
        check(self.gamma > 0.0 && self.gamma < 1.0, "gamma");
        check((0.0..=1.0).contains(&self.epsilon), "epsilon");
        check(self.warmup >= 1, "warmup");
        check(self.batch_size >= 1, "batch_size");
        check(self.lr > 0.0 && self.lr.is_finite(), "lr");
        check(self.cutoff_factor > 0.0 && self.cutoff_factor.is_finite(), "cutoff_factor");
        check(self.eval_interval >= 1, "eval_interval");
        check(self.eval_runs >= 1, "eval_runs");
        check(self.final_eval_runs >= 1, "final_eval_runs");
        check(self.top_k >= 1, "top_k");
        check(self.repetitions >= 1, "repetitions");
        check(self.target_update >= 1, "target_update");
        check(self.buffer_capacity >= 1, "buffer_capacity");
        check(!self.hidden.contains(&0), "hidden");
        check(!self.controlled.is_empty(), "controlled");
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid training config fields: {}", bad.join(", "))))
        }
    }

    pub fn codec(&self) -> Result<ActionCodec> {
        ActionCodec::new(self.mode, &self.controlled)
    }

    pub fn cutoff(&self) -> u64 {
        (self.cutoff_factor * (self.n * self.n) as f64).ceil() as u64
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Greedy policy of a Q-network.
#[derive(Clone, Debug)]
pub struct NeuralPolicy {
    net: Arc<NetworkParams>,
    codec: ActionCodec,
    name: String,
}

pub const CODEC_FILE: &str = "codec.json";

impl NeuralPolicy {
    pub fn new(net: NetworkParams, codec: ActionCodec) -> Result<Self> {
        if net.spec().input != 1 || net.spec().heads != codec.head_sizes() {
            return Err(Error::load(format!("network shape {} does not fit the action codec", net.spec())));
        }
        Ok(Self { net: Arc::new(net), codec, name: "neural".into() })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Model file plus the `codec.json` stored next to it.
    pub fn load(model: impl AsRef<Path>) -> Result<Self> {
        let model = model.as_ref();
        let codec_path = model.parent().unwrap_or(Path::new(".")).join(CODEC_FILE);
        let codec: ActionCodec = serde_json::from_reader(std::fs::File::open(&codec_path).map_err(|e| {
            Error::load(format!("{}: {e}", codec_path.display()))
        })?)?;
        let net = NetworkParams::load(model)?;
        Ok(Self::new(net, codec)?.with_name(format!("model:{}", model.display())))
    }

    pub fn net(&self) -> &NetworkParams {
        &self.net
    }

    pub fn codec(&self) -> &ActionCodec {
        &self.codec
    }

    pub fn greedy_action(&self, fx: usize, n: usize) -> Result<Vec<usize>> {
        Ok(self.net.forward(&encode_state(fx, n))?.iter().map(|q| argmax(q)).collect())
    }

    /// Greedy setting for every `fx ∈ [0, n)`, computed in one batch.
    pub fn table(&self, n: usize) -> Result<PolicyTable> {
        let inputs: Vec<f64> = (0..n).map(|fx| fx as f64 / n as f64).collect();
        let cache = self.net.forward_batch(&inputs, n);
        let heads = self.net.spec().heads.len();
        let rows = (0..n)
            .map(|fx| {
                let action: Vec<usize> = (0..heads).map(|h| argmax(cache.head_row(h, fx))).collect();
                self.codec.decode(&action, fx, n)
            })
            .collect::<Result<Vec<_>>>()?;
        PolicyTable::new(rows)
    }
}

impl Policy for NeuralPolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        if fx >= n {
            return Err(Error::contract(format!("policy queried with fx={fx}, n={n}")));
        }
        self.codec.decode(&self.greedy_action(fx, n)?, fx, n)
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    /// Normalized ERT of the greedy policy (infinite if no run succeeded).
    pub eval_ert_mean: f64,
    pub eval_ert_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub eval: ErtSummary,
    pub final_eval: Option<ErtSummary>,
    pub params: NetworkParams,
}

#[derive(Clone, Debug)]
pub struct TrainingArtifact {
    pub config: TrainConfig,
    pub codec: ActionCodec,
    pub master_seed: u64,
    pub bias: f64,
    pub curve: Vec<CurvePoint>,
    /// The top-k checkpoints by scheduled evaluation, re-evaluated.
    pub checkpoints: Vec<Checkpoint>,
    pub best: usize,
}

#[derive(Serialize)]
struct ArtifactSummary<'a> {
    config: &'a TrainConfig,
    codec: &'a ActionCodec,
    master_seed: u64,
    bias: f64,
    best_step: u64,
    best_normalized_ert: Option<f64>,
    checkpoints: Vec<CheckpointSummary<'a>>,
}

#[derive(Serialize)]
struct CheckpointSummary<'a> {
    step: u64,
    file: String,
    eval: &'a ErtSummary,
    final_eval: Option<&'a ErtSummary>,
}

impl TrainingArtifact {
    pub fn best_checkpoint(&self) -> &Checkpoint {
        &self.checkpoints[self.best]
    }

    pub fn best_policy(&self) -> Result<NeuralPolicy> {
        Ok(NeuralPolicy::new(self.best_checkpoint().params.clone(), self.codec.clone())?.with_name("ddqn"))
    }

    /// Final re-evaluation of the selected checkpoint.
    pub fn best_ert(&self) -> Option<&ErtSummary> {
        self.best_checkpoint().final_eval.as_ref()
    }

    pub fn write_curve_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        write_curve(&self.curve, out)
    }

    /// Writes `summary.json`, `learning_curve.csv`, `codec.json`,
    /// `best_model.bin`, `best_policy.csv` and `checkpoints/step_<k>.bin`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        let mut files = Vec::new();
        for c in &self.checkpoints {
            let file = format!("checkpoints/step_{}.bin", c.step);
            c.params.save(dir.join(&file))?;
            files.push(file);
        }
        let best = self.best_checkpoint();
        best.params.save(dir.join("best_model.bin"))?;
        serde_json::to_writer_pretty(std::fs::File::create(dir.join(CODEC_FILE))?, &self.codec)?;
        std::fs::write(dir.join("checkpoints").join(CODEC_FILE), serde_json::to_vec_pretty(&self.codec)?)?;
        self.best_policy()?.table(self.config.n)?.save(dir.join("best_policy.csv"))?;
        self.write_curve_csv(std::fs::File::create(dir.join("learning_curve.csv"))?)?;
        let summary = ArtifactSummary {
            config: &self.config,
            codec: &self.codec,
            master_seed: self.master_seed,
            bias: self.bias,
            best_step: best.step,
            best_normalized_ert: best.final_eval.as_ref().map(|s| s.normalized_ert),
            checkpoints: self
                .checkpoints
                .iter()
                .zip(files)
                .map(|(c, file)| CheckpointSummary { step: c.step, file, eval: &c.eval, final_eval: c.final_eval.as_ref() })
                .collect(),
        };
        std::fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
        Ok(dir.join("best_model.bin"))
    }
}

pub fn write_curve<W: std::io::Write>(curve: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "eval_ert_mean", "eval_ert_std"])?;
    for p in curve {
        w.write_record([p.step.to_string(), format!("{:.6}", p.eval_ert_mean), format!("{:.6}", p.eval_ert_std)])?;
    }
    w.flush()?;
    Ok(())
}

/// Export the greedy policy of the selected checkpoint as a policy table.
pub fn export_learned_policy(artifact: &TrainingArtifact, n: usize, path: impl AsRef<Path>) -> Result<PolicyTable> {
    let table = artifact.best_policy()?.table(n)?;
    table.save(path)?;
    Ok(table)
}

/// Training loop state. Single-threaded and a pure function of
/// `(config, codec, master_seed)`.
pub struct Trainer {
    config: TrainConfig,
    codec: ActionCodec,
    master_seed: u64,
    online: NetworkParams,
    target: NetworkParams,
    target_q: Vec<Vec<f64>>,
    adam: AdamState,
    buffer: ReplayBuffer,
    bias: f64,
    env_rng: RngStream,
    explore_rng: RngStream,
    sample_rng: RngStream,
    episode: Episode,
    step: u64,
    grad_steps: u64,
    curve: Vec<CurvePoint>,
    candidates: Vec<Checkpoint>,
}

/// Uniform start, redrawn while it is already optimal (only likely for tiny n).
fn fresh_episode(config: &TrainConfig, rng: &mut RngStream) -> Result<Episode> {
    loop {
        let e = Episode::uniform(Target::all_ones(config.n), config.cutoff(), rng)?;
        if !e.is_done() {
            return Ok(e);
        }
    }
}

impl Trainer {
    /// Build networks and fill the replay buffer with random-action warm-up
    /// transitions (relabelled with the adaptive shift if configured).
    pub fn new(config: &TrainConfig, codec: &ActionCodec, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = codec.network_spec(&config.hidden)?;
        let mut init_rng = RngStream::new(master_seed, INIT_STREAM);
        let online = NetworkParams::init(&spec, &mut init_rng)?;
        let mut env_rng = RngStream::new(master_seed, ENV_STREAM);
        let episode = fresh_episode(config, &mut env_rng)?;
        let mut t = Self {
            config: config.clone(),
            codec: codec.clone(),
            master_seed,
            target: online.clone(),
            target_q: Vec::new(),
            adam: AdamState::new(&spec, config.lr),
            online,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            bias: 0.0,
            env_rng,
            explore_rng: RngStream::new(master_seed, EXPLORE_STREAM),
            sample_rng: RngStream::new(master_seed, SAMPLE_STREAM),
            episode,
            step: 0,
            grad_steps: 0,
            curve: Vec::new(),
            candidates: Vec::new(),
        };
        t.refresh_target_q();
        let mut naive = Vec::with_capacity(config.warmup);
        for _ in 0..config.warmup {
            let action = random_action(&t.codec, &mut t.explore_rng);
            let tr = t.env_step(&action, 0.0)?;
            naive.push(tr.reward);
            t.buffer.push(tr);
        }
        if config.reward_mode == RewardMode::AdaptiveShift {
            t.bias = compute_adaptive_bias(&naive)?;
            let b = t.bias;
            t.buffer.iter_mut().for_each(|tr| tr.reward += b);
        }
        Ok(t)
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn online(&self) -> &NetworkParams {
        &self.online
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    fn env_step(&mut self, action: &[usize], bias: f64) -> Result<Transition> {
        let n = self.config.n;
        let fx = self.episode.state().fx();
        let params = self.codec.decode(action, fx, n)?;
        let out = self.episode.step(&params, &mut self.env_rng)?;
        let reward = reward_shifted(out.evals_used, out.delta_f, bias);
        let next_fx = self.episode.state().fx();
        let terminal = self.episode.is_solved();
        if self.episode.is_done() {
            self.episode = fresh_episode(&self.config, &mut self.env_rng)?;
        }
        Transition::new(fx, action, reward, next_fx, terminal)
    }

    fn refresh_target_q(&mut self) {
        let n = self.config.n;
        let inputs: Vec<f64> = (0..=n).map(|fx| fx as f64 / n as f64).collect();
        self.target_q = self.target.forward_batch(&inputs, n + 1).heads;
    }

    fn target_row(&self, head: usize, fx: usize) -> &[f64] {
        let k = self.target_q[head].len() / (self.config.n + 1);
        &self.target_q[head][fx * k..(fx + 1) * k]
    }

    /// One minibatch update; returns the loss.
    fn learn(&mut self) -> Result<f64> {
        let n = self.config.n;
        let batch = self.buffer.sample(self.config.batch_size, &mut self.sample_rng);
        let states = batch.iter().flat_map(|t| [t.fx as usize, t.next_fx as usize]);
        let on = StateBatch::new(&self.online, n, states);
        let heads = self.codec.head_sizes();
        let rows = on.cache.batch;
        let mut grads: Vec<Vec<f64>> = heads.iter().map(|&k| vec![0.0; k * rows]).collect();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for t in &batch {
            let (s, s2) = (t.fx as usize, t.next_fx as usize);
            for (h, &k) in heads.iter().enumerate() {
                let y = if t.terminal {
                    t.reward
                } else {
                    let a = argmax(on.q(h, s2));
                    t.reward + self.config.gamma * self.target_row(h, s2)[a]
                };
                let a = t.action[h] as usize;
                let e = on.q(h, s)[a] - y;
                loss += huber(e) * scale;
                grads[h][on.slot[s] * k + a] += huber_grad(e) * scale;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at step {}", self.step)));
        }
        let g = self.online.backward_outputs(&on.cache, &grads);
        self.adam.step(&mut self.online, &g)?;
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_update == 0 {
            self.target = self.online.clone();
            self.refresh_target_q();
        }
        Ok(loss)
    }

    /// Greedy-policy ERT on the fixed evaluation seeds.
    pub fn evaluate(&self, params: &NetworkParams, runs: usize, tag: u64) -> Result<ErtSummary> {
        if !params.is_finite() {
            return Err(Error::Diverged(format!("non-finite network parameters at step {}", self.step)));
        }
        let n = self.config.n;
        let table = NeuralPolicy::new(params.clone(), self.codec.clone())?.table(n)?;
        let policy = TablePolicy::new(table, "ddqn");
        let seeds = seed_range(runs);
        let eval = evaluate_policy(&policy, n, derive_seed(self.master_seed, tag), &seeds, self.config.cutoff(), self.config.parallel)?;
        Ok(eval.summary)
    }

    fn record_eval(&mut self) -> Result<()> {
        let summary = self.evaluate(&self.online, self.config.eval_runs, EVAL_TAG)?;
        self.curve.push(CurvePoint {
            step: self.step,
            eval_ert_mean: summary.normalized_ert,
            eval_ert_std: summary.normalized_std,
        });
        self.candidates.push(Checkpoint { step: self.step, eval: summary, final_eval: None, params: self.online.clone() });
        // stable sort keeps earlier checkpoints first among equal ERTs
        self.candidates.sort_by(|a, b| a.eval.ert.total_cmp(&b.eval.ert));
        self.candidates.truncate(self.config.top_k);
        Ok(())
    }

    /// Advance training up to `until` environment steps (capped at the budget).
    pub fn run_until(&mut self, until: u64) -> Result<()> {
        let until = until.min(self.config.budget);
        while self.step < until {
            let state = encode_state(self.episode.state().fx(), self.config.n);
            let action = select_action(&self.online, &state, self.config.epsilon, &self.codec, &mut self.explore_rng)?;
            let tr = self.env_step(&action, self.bias)?;
            self.buffer.push(tr);
            self.learn()?;
            self.step += 1;
            if self.step % self.config.eval_interval == 0 {
                self.record_eval()?;
            }
        }
        Ok(())
    }

    /// Run the remaining budget, re-evaluate the top checkpoints and pick the best.
    pub fn finish(mut self) -> Result<TrainingArtifact> {
        self.run_until(self.config.budget)?;
        if self.curve.is_empty() {
            self.record_eval()?;
        }
        let mut checkpoints = std::mem::take(&mut self.candidates);
        for c in &mut checkpoints {
            c.final_eval = Some(self.evaluate(&c.params, self.config.final_eval_runs, FINAL_TAG)?);
        }
        let best = checkpoints
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let ea = a.1.final_eval.as_ref().map_or(f64::INFINITY, |s| s.ert);
                let eb = b.1.final_eval.as_ref().map_or(f64::INFINITY, |s| s.ert);
                ea.total_cmp(&eb)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(TrainingArtifact {
            config: self.config,
            codec: self.codec,
            master_seed: self.master_seed,
            bias: self.bias,
            curve: self.curve,
            checkpoints,
            best,
        })
    }

    /// Complete training state, sufficient to continue bit-for-bit.
    pub fn snapshot(&self) -> TrainerSnapshot {
        let state = self.episode.state();
        let (m, v) = self.adam.moments();
        TrainerSnapshot {
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            codec: self.codec.clone(),
            master_seed: self.master_seed,
            online: self.online.values().collect(),
            target: self.target.values().collect(),
            adam_step: self.adam.step,
            adam_m: m,
            adam_v: v,
            buffer: self.buffer.clone(),
            bias: self.bias,
            rng_pos: [self.env_rng.word_pos(), self.explore_rng.word_pos(), self.sample_rng.word_pos()],
            episode_x: state.x().to_string(),
            episode_evals: state.evaluations(),
            episode_iterations: state.iterations(),
            step: self.step,
            grad_steps: self.grad_steps,
            curve: self.curve.clone(),
            candidates: self
                .candidates
                .iter()
                .map(|c| (c.step, c.eval.clone(), c.params.values().collect()))
                .collect(),
        }
    }

    pub fn restore(s: TrainerSnapshot) -> Result<Self> {
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::load(format!("snapshot version {}, expected {SNAPSHOT_VERSION}", s.version)));
        }
        s.config.validate()?;
        let spec = s.codec.network_spec(&s.config.hidden)?;
        let x: BitVector = s.episode_x.parse().map_err(|e: Error| Error::load(e.to_string()))?;
        if x.len() != s.config.n {
            return Err(Error::load("snapshot episode length differs from n"));
        }
        let episode = Episode::resume(x, Target::all_ones(s.config.n), s.config.cutoff(), s.episode_evals, s.episode_iterations)?;
        let candidates = s
            .candidates
            .into_iter()
            .map(|(step, eval, values)| {
                Ok(Checkpoint { step, eval, final_eval: None, params: NetworkParams::from_values(&spec, &values)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Self {
            online: NetworkParams::from_values(&spec, &s.online)?,
            target: NetworkParams::from_values(&spec, &s.target)?,
            target_q: Vec::new(),
            adam: AdamState::from_moments(&spec, s.config.lr, s.adam_step, &s.adam_m, &s.adam_v)?,
            buffer: s.buffer,
            bias: s.bias,
            env_rng: RngStream::resume(s.master_seed, ENV_STREAM, s.rng_pos[0]),
            explore_rng: RngStream::resume(s.master_seed, EXPLORE_STREAM, s.rng_pos[1]),
            sample_rng: RngStream::resume(s.master_seed, SAMPLE_STREAM, s.rng_pos[2]),
            episode,
            step: s.step,
            grad_steps: s.grad_steps,
            curve: s.curve,
            candidates,
            config: s.config,
            codec: s.codec,
            master_seed: s.master_seed,
        };
        t.refresh_target_q();
        Ok(t)
    }
}

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerSnapshot {
    pub version: u32,
    pub config: TrainConfig,
    pub codec: ActionCodec,
    pub master_seed: u64,
    online: Vec<f64>,
    target: Vec<f64>,
    adam_step: u64,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    buffer: ReplayBuffer,
    bias: f64,
    rng_pos: [u128; 3],
    episode_x: String,
    episode_evals: u64,
    episode_iterations: u64,
    pub step: u64,
    grad_steps: u64,
    curve: Vec<CurvePoint>,
    candidates: Vec<(u64, ErtSummary, Vec<f64>)>,
}

impl TrainerSnapshot {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        serde_json::from_reader(r).map_err(|e| Error::load(format!("training snapshot: {e}")))
    }
}

/// One full training run.
pub fn train(config: &TrainConfig, codec: &ActionCodec, master_seed: u64) -> Result<TrainingArtifact> {
    Trainer::new(config, codec, master_seed)?.finish()
}

/// `config.repetitions` independent runs with seeds derived from
/// `master_seed`; returns all artifacts and the index of the best one.
pub fn train_repetitions(config: &TrainConfig, codec: &ActionCodec, master_seed: u64) -> Result<(Vec<TrainingArtifact>, usize)> {
    let runs = (0..config.repetitions as u64)
        .map(|r| train(config, codec, derive_seed(master_seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let ea = a.1.best_ert().map_or(f64::INFINITY, |s| s.ert);
            let eb = b.1.best_ert().map_or(f64::INFINITY, |s| s.ert);
            ea.total_cmp(&eb)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok((runs, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn full(mode: ActionMode) -> ActionCodec {
        ActionCodec::full(mode)
    }

    #[test]
    fn combinatorial_extremes() {
        let c = full(ActionMode::Combinatorial);
        assert_eq!(c.joint_size(), 2401);
        let first = c.decode(&[0], 10, 100).unwrap();
        assert_eq!((first.lambda_m, first.alpha, first.lambda_c, first.beta), (1, 0.25, 1, 0.25));
        let last = c.decode(&[2400], 10, 100).unwrap();
        assert_eq!((last.lambda_m, last.alpha, last.lambda_c, last.beta), (64, 2.0, 64, 2.0));
        assert!(c.decode(&[2401], 10, 100).is_err());
    }

    #[test]
    fn lambda_m_is_most_significant() {
        let c = full(ActionMode::Combinatorial);
        let p = c.decode(&[343], 10, 100).unwrap();
        assert_eq!((p.lambda_m, p.alpha, p.lambda_c, p.beta), (2, 0.25, 1, 0.25));
        let p = c.decode(&[1], 10, 100).unwrap();
        assert_eq!(p.beta, 0.542);
    }

    #[test]
    fn mask_uses_theory_defaults() {
        let c = ActionCodec::new(ActionMode::Factored, &[Param::LambdaM]).unwrap();
        let p = c.decode(&[3], 50, 100).unwrap();
        assert_eq!((p.lambda_m, p.alpha, p.lambda_c, p.beta), (8, 1.0, 8, 1.0));
        let c = ActionCodec::new(ActionMode::Factored, &[Param::Alpha]).unwrap();
        let p = c.decode(&[0], 96, 100).unwrap();
        assert_eq!((p.lambda_m, p.alpha, p.lambda_c, p.beta), (5, 0.25, 5, 1.0));
    }

    #[test]
    fn codec_bijective_everywhere() {
        for mode in [ActionMode::Combinatorial, ActionMode::Factored] {
            let c = full(mode);
            let actions: Vec<Vec<usize>> = match mode {
                ActionMode::Combinatorial => (0..2401).map(|i| vec![i]).collect(),
                ActionMode::Factored => (0..2401).map(|i| vec![i / 343, i / 49 % 7, i / 7 % 7, i % 7]).collect(),
            };
            for a in actions {
                let p = c.decode(&a, 0, 100).unwrap();
                assert_eq!(c.encode(&p).unwrap(), a);
            }
        }
    }

    #[test]
    fn off_grid_value_rejected() {
        let c = full(ActionMode::Factored);
        let p = ParameterSet::new(3, 1.0, 1, 1.0).unwrap();
        assert!(matches!(c.encode(&p), Err(Error::Contract(_))));
    }

    #[test]
    fn state_encoding() {
        assert_eq!(encode_state(0, 40), vec![0.0]);
        assert_eq!(encode_state(40, 40), vec![1.0]);
        assert_eq!(encode_state(20, 40), vec![0.5]);
    }

    #[test]
    fn rewards() {
        assert_eq!(reward_naive(10, 2), -8.0);
        assert_eq!(reward_naive(1, 0), -1.0);
        assert_eq!(reward_naive(5, 5), 0.0);
        assert_eq!(reward_shifted(10, 2, 5.0), -3.0);
        assert_eq!(reward_shifted(7, 1, 0.0), reward_naive(7, 1));
        assert_eq!(reward_shifted(1, 1, 1.0), 1.0);
    }

    #[test]
    fn adaptive_bias() {
        assert_eq!(compute_adaptive_bias(&[-10.0, -30.0]).unwrap(), 20.0);
        assert_eq!(compute_adaptive_bias(&[5.0]).unwrap(), 0.0);
        assert_eq!(compute_adaptive_bias(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(compute_adaptive_bias(&[]).is_err());
    }

    #[test]
    fn ring_buffer_drops_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(Transition::new(i, &[0], -1.0, i + 1, false).unwrap());
        }
        assert_eq!(b.len(), 3);
        let kept: Vec<u32> = b.iter().map(|t| t.fx).collect();
        assert_eq!(kept, vec![2, 3, 4]);
    }

    fn small_net(codec: &ActionCodec, seed: u64) -> NetworkParams {
        NetworkParams::init(&codec.network_spec(&[8]).unwrap(), &mut RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn greedy_ties_pick_lowest_index() {
        let codec = full(ActionMode::Factored);
        let zero = NetworkParams::zeros(&codec.network_spec(&[4]).unwrap());
        let a = select_action(&zero, &[0.3], 0.0, &codec, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(a, vec![0, 0, 0, 0]);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn epsilon_one_uniform_branches() {
        let codec = full(ActionMode::Factored);
        let net = small_net(&codec, 1);
        let mut rng = RngStream::new(2, 0);
        let draws = 100_000;
        let mut counts = [[0usize; 7]; 4];
        for _ in 0..draws {
            let a = select_action(&net, &[0.5], 1.0, &codec, &mut rng).unwrap();
            for (h, &i) in a.iter().enumerate() {
                counts[h][i] += 1;
            }
        }
        for row in counts {
            for c in row {
                assert!((c as f64 / draws as f64 - 1.0 / 7.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn td_target_cases() {
        let codec = ActionCodec::new(ActionMode::Factored, &[Param::LambdaM]).unwrap();
        let online = small_net(&codec, 3);
        let target = small_net(&codec, 4);
        let term = Transition::new(5, &[2], -3.0, 10, true).unwrap();
        let live = Transition::new(5, &[2], -3.0, 6, false).unwrap();
        let y = td_targets(&online, &target, &[term, live], 0.99, 10).unwrap();
        assert_eq!(y[0], vec![-3.0]);
        let a = argmax(&online.forward(&encode_state(6, 10)).unwrap()[0]);
        let qt = target.forward(&encode_state(6, 10)).unwrap()[0][a];
        assert_relative_eq!(y[1][0], -3.0 + 0.99 * qt, epsilon = 1e-12);
        let y0 = td_targets(&online, &target, &[live], 0.0, 10).unwrap();
        assert_eq!(y0[0], vec![-3.0]);
    }

    #[test]
    fn td_target_arithmetic() {
        // head bias 10 everywhere, zero weights: Q_target(s', a*) = 10
        let codec = ActionCodec::new(ActionMode::Factored, &[Param::Beta]).unwrap();
        let spec = codec.network_spec(&[2]).unwrap();
        let count = spec.param_count();
        let mut values = vec![0.0; count];
        for v in &mut values[count - 7..] {
            *v = 10.0;
        }
        let net = NetworkParams::from_values(&spec, &values).unwrap();
        let t = Transition::new(1, &[0], -3.0, 2, false).unwrap();
        let y = td_targets(&net, &net, &[t], 0.99, 10).unwrap();
        assert_relative_eq!(y[0][0], 6.9, epsilon = 1e-12);
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            n: 20,
            warmup: 200,
            batch_size: 32,
            budget: 300,
            eval_interval: 100,
            eval_runs: 10,
            final_eval_runs: 20,
            top_k: 2,
            repetitions: 1,
            target_update: 50,
            buffer_capacity: 1000,
            hidden: vec![16, 16],
            parallel: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_config();
        let codec = cfg.codec().unwrap();
        let a = train(&cfg, &codec, 9).unwrap();
        let b = train(&cfg, &codec, 9).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.checkpoints, b.checkpoints);
        assert_eq!(a.curve.len(), 3);
        assert_eq!(a.checkpoints.len(), 2);
        assert!(a.bias > 0.0);
    }

    #[test]
    fn zero_budget_evaluates_initial_policy() {
        let cfg = TrainConfig { budget: 0, ..tiny_config() };
        let art = train(&cfg, &cfg.codec().unwrap(), 1).unwrap();
        assert_eq!(art.curve.len(), 1);
        assert_eq!(art.curve[0].step, 0);
        assert!(art.best_ert().is_some());
    }

    #[test]
    fn snapshot_resume_matches_uninterrupted() {
        let cfg = tiny_config();
        let codec = cfg.codec().unwrap();
        let straight = train(&cfg, &codec, 5).unwrap();
        let mut t = Trainer::new(&cfg, &codec, 5).unwrap();
        t.run_until(150).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        t.snapshot().save(&path).unwrap();
        drop(t);
        let resumed = Trainer::restore(TrainerSnapshot::load(&path).unwrap()).unwrap().finish().unwrap();
        assert_eq!(resumed.curve, straight.curve);
        assert_eq!(resumed.checkpoints, straight.checkpoints);
    }

    #[test]
    fn export_round_trip_matches_network() {
        let cfg = tiny_config();
        let art = train(&cfg, &cfg.codec().unwrap(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let table = export_learned_policy(&art, cfg.n, dir.path().join("p.csv")).unwrap();
        assert_eq!(table.n(), cfg.n);
        let back = PolicyTable::load(dir.path().join("p.csv")).unwrap();
        let net = art.best_policy().unwrap();
        for fx in 0..cfg.n {
            assert_eq!(back.select(fx, cfg.n).unwrap(), net.select(fx, cfg.n).unwrap());
        }
    }

    #[test]
    fn masked_export_uses_defaults() {
        let cfg = TrainConfig { controlled: vec![Param::LambdaM], ..tiny_config() };
        let art = train(&cfg, &cfg.codec().unwrap(), 4).unwrap();
        let table = art.best_policy().unwrap().table(cfg.n).unwrap();
        for row in table.rows() {
            assert_eq!((row.alpha, row.beta, row.lambda_c), (1.0, 1.0, row.lambda_m));
        }
    }

    #[test]
    fn config_validation_lists_fields() {
        let cfg = TrainConfig { gamma: 1.0, batch_size: 0, ..TrainConfig::default() };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("gamma") && msg.contains("batch_size"), "{msg}");
        let parsed: std::result::Result<TrainConfig, _> = serde_json::from_str(r#"{"n": 50, "bogus": 1}"#);
        assert!(parsed.is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"n": 50, "controlled": ["alpha", "lambda_m"]}"#).unwrap();
        assert_eq!(parsed.n, 50);
        assert_eq!(parsed.codec().unwrap().controlled(), &[Param::LambdaM, Param::Alpha]);
    }

    #[test]
    fn shift_is_constant_within_run() {
        let cfg = tiny_config();
        let codec = cfg.codec().unwrap();
        let t = Trainer::new(&cfg, &codec, 2).unwrap();
        let mut naive = Trainer::new(&TrainConfig { reward_mode: RewardMode::Naive, ..cfg }, &codec, 2).unwrap();
        naive.run_until(0).unwrap();
        let diffs: Vec<f64> = t.buffer().iter().zip(naive.buffer().iter()).map(|(a, b)| a.reward - b.reward).collect();
        assert!(diffs.iter().all(|d| (d - t.bias()).abs() < 1e-9));
    }
}
