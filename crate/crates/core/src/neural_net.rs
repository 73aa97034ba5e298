//! Small dense Q-network: ReLU trunk shared by one or more linear heads,
//! masked Huber loss, backpropagation and Adam.
//!
//! Model files are little-endian binary:
//!
//! ```text
//! magic   8 bytes  "ONLLNET\0"
//! version u32      currently 1
//! input   u32
//! hidden  u32 count, then u32 widths
//! heads   u32 count, then u32 sizes
//! params  u64 count, then f64 values layer by layer (weights row-major, then biases)
//! ```
//!
//! Layers are stored trunk first, then heads in order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitstring::RngStream;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"ONLLNET\0";
pub const MODEL_VERSION: u32 = 1;
pub const HUBER_DELTA: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub heads: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(input: usize, hidden: Vec<usize>, heads: Vec<usize>) -> Result<Self> {
        let spec = Self { input, hidden, heads };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden.contains(&0) || self.heads.is_empty() || self.heads.contains(&0) {
            return Err(Error::contract(format!("invalid network shape {self}")));
        }
        Ok(())
    }

    fn trunk_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = self.input;
        for &h in &self.hidden {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.extend(self.heads.iter().map(|&k| (prev, k)));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

impl std::fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "input={} hidden={:?} heads={:?}", self.input, self.hidden, self.heads)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, w: vec![0.0; inputs * outputs], b: vec![0.0; outputs] }
    }

    /// `out[s] = W·x[s] + b` for a row-major batch.
    fn apply(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(batch * self.outputs);
        for s in 0..batch {
            let row = &x[s * self.inputs..(s + 1) * self.inputs];
            for o in 0..self.outputs {
                let w = &self.w[o * self.inputs..(o + 1) * self.inputs];
                out.push(self.b[o] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        out
    }

    /// Accumulate parameter gradients into `grad` and return the input gradient.
    fn backprop(&self, x: &[f64], dz: &[f64], batch: usize, grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; batch * self.inputs];
        for s in 0..batch {
            let row = &x[s * self.inputs..(s + 1) * self.inputs];
            let dxr = &mut dx[s * self.inputs..(s + 1) * self.inputs];
            for o in 0..self.outputs {
                let g = dz[s * self.outputs + o];
                if g == 0.0 {
                    continue;
                }
                grad.b[o] += g;
                let gw = &mut grad.w[o * self.inputs..(o + 1) * self.inputs];
                let w = &self.w[o * self.inputs..(o + 1) * self.inputs];
                for i in 0..self.inputs {
                    gw[i] += g * row[i];
                    dxr[i] += g * w[i];
                }
            }
        }
        dx
    }
}

/// Parameters (or gradients, or Adam moments) of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    spec: NetworkSpec,
    layers: Vec<Dense>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec.layer_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        Self { spec: spec.clone(), layers }
    }

    /// He-uniform weights (bound `√(6/fan_in)`), zero biases.
    pub fn init(spec: &NetworkSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let mut p = Self::zeros(spec);
        for layer in &mut p.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    /// Rebuild from the flat layout produced by [`NetworkParams::values`].
    pub fn from_values(spec: &NetworkSpec, values: &[f64]) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.param_count() {
            return Err(Error::load(format!("{} values for shape {spec} ({} expected)", values.len(), spec.param_count())));
        }
        let mut p = Self::zeros(spec);
        for (dst, src) in p.values_mut().zip(values) {
            *dst = *src;
        }
        Ok(p)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn check_spec(&self, expected: &NetworkSpec) -> Result<()> {
        if &self.spec != expected {
            return Err(Error::load(format!("network shape mismatch: found {}, expected {}", self.spec, expected)));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Per-head outputs for a single input.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        if input.len() != self.spec.input {
            return Err(Error::contract(format!("input has {} features, network expects {}", input.len(), self.spec.input)));
        }
        let cache = self.forward_batch(input, 1);
        Ok(cache.heads)
    }

    /// Forward a row-major batch, keeping what backprop needs.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> ForwardCache {
        assert_eq!(inputs.len(), batch * self.spec.input, "batch shape");
        let trunk = self.spec.hidden.len();
        let mut acts = vec![inputs.to_vec()];
        for layer in &self.layers[..trunk] {
            let mut z = layer.apply(acts.last().unwrap(), batch);
            for v in &mut z {
                *v = v.max(0.0);
            }
            acts.push(z);
        }
        let top = acts.last().unwrap();
        let heads = self.layers[trunk..].iter().map(|l| l.apply(top, batch)).collect();
        ForwardCache { batch, acts, heads }
    }

    /// Gradients of `Σ_s Σ_h ⟨head_grads[h][s], out_h(s)⟩` w.r.t. all parameters.
    pub fn backward_outputs(&self, cache: &ForwardCache, head_grads: &[Vec<f64>]) -> NetworkParams {
        let batch = cache.batch;
        let trunk = self.spec.hidden.len();
        let mut grad = Self::zeros(&self.spec);
        let top = cache.acts.last().unwrap();
        let mut d_top = vec![0.0; batch * self.spec.trunk_width()];
        for (h, g) in head_grads.iter().enumerate() {
            let dx = self.layers[trunk + h].backprop(top, g, batch, &mut grad.layers[trunk + h]);
            for (a, b) in d_top.iter_mut().zip(dx) {
                *a += b;
            }
        }
        let mut d = d_top;
        for l in (0..trunk).rev() {
            for (g, a) in d.iter_mut().zip(&cache.acts[l + 1]) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
            d = self.layers[l].backprop(&cache.acts[l], &d, batch, &mut grad.layers[l]);
        }
        grad
    }

    /// Mean masked Huber loss over the samples and its gradient.
    pub fn huber_backward(&self, samples: &[TrainingSample]) -> Result<(f64, NetworkParams)> {
        if samples.is_empty() {
            return Err(Error::contract("empty training batch"));
        }
        let batch = samples.len();
        let mut inputs = Vec::with_capacity(batch * self.spec.input);
        for s in samples {
            if s.input.len() != self.spec.input || s.targets.len() != self.spec.heads.len() {
                return Err(Error::contract("training sample does not match the network shape"));
            }
            inputs.extend_from_slice(&s.input);
        }
        let cache = self.forward_batch(&inputs, batch);
        let scale = 1.0 / batch as f64;
        let mut loss = 0.0;
        let mut grads: Vec<Vec<f64>> = self.spec.heads.iter().map(|&k| vec![0.0; k * batch]).collect();
        for (si, s) in samples.iter().enumerate() {
            for (h, &k) in self.spec.heads.iter().enumerate() {
                for o in 0..k {
                    if !s.masks[h][o] {
                        continue;
                    }
                    let e = cache.heads[h][si * k + o] - s.targets[h][o];
                    loss += huber(e) * scale;
                    grads[h][si * k + o] = huber_grad(e) * scale;
                }
            }
        }
        Ok((loss, self.backward_outputs(&cache, &grads)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.spec.param_count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.spec.input as u32).to_le_bytes());
        for list in [&self.spec.hidden, &self.spec.heads] {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for &v in list {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.spec.param_count() as u64).to_le_bytes());
        for v in self.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::load("not a model file (bad magic)"));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::load(format!("model format version {version}, expected {MODEL_VERSION}")));
        }
        let input = r.u32()? as usize;
        let mut lists = [Vec::new(), Vec::new()];
        for list in &mut lists {
            let len = r.u32()? as usize;
            if len > 1 << 16 {
                return Err(Error::load("implausible layer count"));
            }
            for _ in 0..len {
                list.push(r.u32()? as usize);
            }
        }
        let [hidden, heads] = lists;
        let spec = NetworkSpec { input, hidden, heads };
        spec.validate().map_err(|e| Error::load(e.to_string()))?;
        let count = r.u64()? as usize;
        if count != spec.param_count() {
            return Err(Error::load(format!("parameter count {count} does not match shape {spec}")));
        }
        let mut p = Self::zeros(&spec);
        for v in p.values_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
        if r.pos != bytes.len() {
            return Err(Error::load("trailing bytes after model parameters"));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Load and insist on a particular shape.
    pub fn load_expecting(path: impl AsRef<std::path::Path>, spec: &NetworkSpec) -> Result<Self> {
        let p = Self::load(path)?;
        p.check_spec(spec)?;
        Ok(p)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < k {
            return Err(Error::load(format!("model file truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Activations from `forward_batch`: `acts[0]` is the input, then each trunk
/// layer after ReLU; `heads[h]` is row-major `batch × heads[h]`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub batch: usize,
    pub acts: Vec<Vec<f64>>,
    pub heads: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn head_row(&self, head: usize, sample: usize) -> &[f64] {
        let k = self.heads[head].len() / self.batch;
        &self.heads[head][sample * k..(sample + 1) * k]
    }
}

/// One row for the masked loss: only outputs with `masks[h][o]` contribute.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub input: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
}

pub fn huber(e: f64) -> f64 {
    if e.abs() <= HUBER_DELTA {
        0.5 * e * e
    } else {
        HUBER_DELTA * (e.abs() - 0.5 * HUBER_DELTA)
    }
}

pub fn huber_grad(e: f64) -> f64 {
    e.clamp(-HUBER_DELTA, HUBER_DELTA)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: NetworkParams,
    v: NetworkParams,
}

impl AdamState {
    pub fn new(spec: &NetworkSpec, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: NetworkParams::zeros(spec),
            v: NetworkParams::zeros(spec),
        }
    }

    /// First and second moment estimates in flat layout.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        (self.m.values().collect(), self.v.values().collect())
    }

    pub fn from_moments(spec: &NetworkSpec, lr: f64, step: u64, m: &[f64], v: &[f64]) -> Result<Self> {
        let mut a = Self::new(spec, lr);
        a.step = step;
        a.m = NetworkParams::from_values(spec, m)?;
        a.v = NetworkParams::from_values(spec, v)?;
        Ok(a)
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams) -> Result<()> {
        if params.spec != self.m.spec || grads.spec != self.m.spec {
            return Err(Error::contract("optimizer, parameters and gradients differ in shape"));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.values_mut().zip(grads.values()).zip(self.m.values_mut()).zip(self.v.values_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_samples(spec: &NetworkSpec, count: usize, rng: &mut RngStream) -> Vec<TrainingSample> {
        (0..count)
            .map(|_| TrainingSample {
                input: (0..spec.input).map(|_| rng.random_range(-1.0..1.0)).collect(),
                targets: spec.heads.iter().map(|&k| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
                masks: spec.heads.iter().map(|&k| (0..k).map(|_| rng.random_bool(0.7)).collect()).collect(),
            })
            .collect()
    }

    fn loss(p: &NetworkParams, samples: &[TrainingSample]) -> f64 {
        p.huber_backward(samples).unwrap().0
    }

    /// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
    fn gradient_error(spec: &NetworkSpec, seed: u64) -> f64 {
        let mut rng = RngStream::new(seed, 0);
        let mut p = NetworkParams::init(spec, &mut rng).unwrap();
        for b in p.layers.iter_mut().flat_map(|l| l.b.iter_mut()) {
            *b = rng.random_range(-0.1..0.1);
        }
        let samples = random_samples(spec, 6, &mut rng);
        let (_, g) = p.huber_backward(&samples).unwrap();
        let analytic: Vec<f64> = g.values().collect();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..analytic.len() {
            let mut plus = p.clone();
            *plus.values_mut().nth(i).unwrap() += h;
            let mut minus = p.clone();
            *minus.values_mut().nth(i).unwrap() -= h;
            let numeric = (loss(&plus, &samples) - loss(&minus, &samples)) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = NetworkSpec::new(3, vec![8, 6, 5], vec![4, 3]).unwrap();
        let err = gradient_error(&spec, 1);
        assert!(err < 1e-4, "relative error {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn gradient_check_random_shapes(
            input in 1usize..4,
            hidden in proptest::collection::vec(1usize..64, 0..3),
            heads in proptest::collection::vec(1usize..8, 1..3),
            seed in 0u64..1000,
        ) {
            let spec = NetworkSpec::new(input, hidden, heads).unwrap();
            let err = gradient_error(&spec, seed);
            prop_assert!(err < 1e-4, "relative error {}", err);
        }
    }

    #[test]
    fn zero_loss_zero_gradient() {
        let spec = NetworkSpec::new(2, vec![5], vec![3]).unwrap();
        let mut rng = RngStream::new(2, 0);
        let p = NetworkParams::init(&spec, &mut rng).unwrap();
        let input = vec![0.3, -0.7];
        let out = p.forward(&input).unwrap();
        let sample = TrainingSample { input, targets: out, masks: vec![vec![true; 3]] };
        let (l, g) = p.huber_backward(&[sample]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.values().all(|v| v == 0.0));
    }

    #[test]
    fn masked_outputs_do_not_contribute() {
        let spec = NetworkSpec::new(1, vec![4], vec![3, 2]).unwrap();
        let mut rng = RngStream::new(3, 0);
        let p = NetworkParams::init(&spec, &mut rng).unwrap();
        let mut s = TrainingSample {
            input: vec![0.5],
            targets: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0]],
            masks: vec![vec![true, false, false], vec![false, false]],
        };
        let (l1, g1) = p.huber_backward(std::slice::from_ref(&s)).unwrap();
        s.targets[0][1] = 100.0;
        s.targets[1] = vec![-50.0, 50.0];
        let (l2, g2) = p.huber_backward(&[s]).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
        // second head's parameters untouched
        assert!(g1.layers[2].w.iter().chain(&g1.layers[2].b).all(|v| *v == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let spec = NetworkSpec::new(1, vec![2], vec![1]).unwrap();
        let mut p = NetworkParams::zeros(&spec);
        let mut g = NetworkParams::zeros(&spec);
        g.values_mut().for_each(|v| *v = 1.0);
        let mut adam = AdamState::new(&spec, 0.001);
        adam.step(&mut p, &g).unwrap();
        for v in p.values() {
            assert!((v + 0.001).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn adam_zero_gradient_and_zero_lr_identity() {
        let spec = NetworkSpec::new(2, vec![3], vec![2]).unwrap();
        let mut rng = RngStream::new(4, 0);
        let p0 = NetworkParams::init(&spec, &mut rng).unwrap();
        let mut p = p0.clone();
        let mut adam = AdamState::new(&spec, 0.001);
        adam.step(&mut p, &NetworkParams::zeros(&spec)).unwrap();
        assert_eq!(p, p0);
        assert_eq!(adam.step, 1);

        let mut g = NetworkParams::zeros(&spec);
        g.values_mut().enumerate().for_each(|(i, v)| *v = i as f64 - 3.0);
        let mut frozen = AdamState::new(&spec, 0.0);
        frozen.step(&mut p, &g).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn adam_deterministic() {
        let spec = NetworkSpec::new(2, vec![3], vec![2]).unwrap();
        let mut rng = RngStream::new(5, 0);
        let p0 = NetworkParams::init(&spec, &mut rng).unwrap();
        let mut g = NetworkParams::zeros(&spec);
        g.values_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sin());
        let run = || {
            let mut p = p0.clone();
            let mut adam = AdamState::new(&spec, 0.01);
            adam.step(&mut p, &g).unwrap();
            adam.step(&mut p, &g).unwrap();
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn init_variance_band_and_zero_biases() {
        let spec = NetworkSpec::new(4, vec![50, 50], vec![7]).unwrap();
        let mut rng = RngStream::new(6, 0);
        let p = NetworkParams::init(&spec, &mut rng).unwrap();
        assert!(p.layers.iter().all(|l| l.b.iter().all(|b| *b == 0.0)));
        let normal = rand_distr::StandardNormal;
        let batch = 4000;
        let inputs: Vec<f64> = (0..batch * 4).map(|_| rng.sample::<f64, _>(normal)).collect();
        let cache = p.forward_batch(&inputs, batch);
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        for layer in cache.acts.iter().skip(1).chain(&cache.heads) {
            let vv = var(layer);
            assert!((0.1..=10.0).contains(&vv), "variance {vv}");
        }
        let again = NetworkParams::init(&spec, &mut RngStream::new(6, 0)).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn serialization_round_trip() {
        let spec = NetworkSpec::new(1, vec![50, 50], vec![7, 7, 7, 7]).unwrap();
        let p = NetworkParams::init(&spec, &mut RngStream::new(7, 0)).unwrap();
        let bytes = p.to_bytes();
        let q = NetworkParams::from_bytes(&bytes).unwrap();
        assert!(p.values().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_file_rejected() {
        let spec = NetworkSpec::new(1, vec![4], vec![2]).unwrap();
        let bytes = NetworkParams::init(&spec, &mut RngStream::new(8, 0)).unwrap().to_bytes();
        for cut in [0, 5, 12, bytes.len() - 1] {
            let err = NetworkParams::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Load(_)), "cut {cut}: {err}");
        }
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(NetworkParams::from_bytes(&bad).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn spec_mismatch_names_dimensions() {
        let spec = NetworkSpec::new(1, vec![4], vec![2]).unwrap();
        let other = NetworkSpec::new(1, vec![5], vec![2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        NetworkParams::init(&spec, &mut RngStream::new(9, 0)).unwrap().save(&path).unwrap();
        let msg = NetworkParams::load_expecting(&path, &other).unwrap_err().to_string();
        assert!(msg.contains("[4]") && msg.contains("[5]"), "{msg}");
    }

    #[test]
    fn forward_is_pure() {
        let spec = NetworkSpec::new(1, vec![6], vec![3]).unwrap();
        let p = NetworkParams::init(&spec, &mut RngStream::new(10, 0)).unwrap();
        assert_eq!(p.forward(&[0.4]).unwrap(), p.forward(&[0.4]).unwrap());
        assert!(p.forward(&[0.4, 0.1]).is_err());
    }
}
