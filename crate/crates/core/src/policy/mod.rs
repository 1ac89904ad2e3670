//! A tiny autoregressive categorical policy with a separate value network.
//!
//! Both networks read the same sparse context: the prompt encoding, a
//! positional one-hot of the last `window` tokens (with a "none" slot for
//! positions before the start) and a bag of those tokens scaled by
//! `1/window`. Each network is one tanh hidden layer.
//!
//! Parameters live in one flat vector, in this order:
//!
//! | block   | shape            | role                         |
//! |---------|------------------|------------------------------|
//! | `w_in`  | `input × hidden` | policy input weights         |
//! | `b_in`  | `hidden`         | policy hidden bias           |
//! | `w_out` | `alphabet × hidden` | policy output weights     |
//! | `b_out` | `alphabet`       | policy output bias           |
//! | `v_in`  | `input × hidden` | value input weights          |
//! | `v_b`   | `hidden`         | value hidden bias            |
//! | `v_out` | `hidden`         | value output weights         |
//! | `v_bias`| `1`              | value output bias            |
//!
//! Matrices are row-major; `w_in[i * hidden + j]` connects input `i` to hidden unit `j`.

pub mod gradcheck;

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, UniformStream};
use crate::scalar::{log_softmax_masked, Scalar};
use crate::trajectory::{Prompt, Trajectory};
use crate::vocab::{Token, EOS};

pub const MAX_ALPHABET: usize = 64;
pub const MAX_HIDDEN: usize = 64;
pub const DEFAULT_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyShape {
    pub alphabet: usize,
    pub hidden: usize,
    pub window: usize,
    pub prompt_dim: usize,
}

impl PolicyShape {
    pub fn new(alphabet: usize, hidden: usize, window: usize, prompt_dim: usize) -> Result<Self> {
        let s = Self { alphabet, hidden, window, prompt_dim };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_ALPHABET).contains(&self.alphabet) {
            return Err(Error::invalid(format!("alphabet must be 2..=64, got {}", self.alphabet)));
        }
        if !(1..=MAX_HIDDEN).contains(&self.hidden) {
            return Err(Error::invalid(format!("hidden width must be 1..=64, got {}", self.hidden)));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.prompt_dim + self.window * (self.alphabet + 1) + self.alphabet
    }

    fn policy_len(&self) -> usize {
        let (d, h, a) = (self.input_dim(), self.hidden, self.alphabet);
        d * h + h + a * h + a
    }

    fn value_len(&self) -> usize {
        let (d, h) = (self.input_dim(), self.hidden);
        d * h + 2 * h + 1
    }

    pub fn param_count(&self) -> usize {
        self.policy_len() + self.value_len()
    }

    fn alphabet_mask(&self) -> u64 {
        if self.alphabet == 64 {
            u64::MAX
        } else {
            (1u64 << self.alphabet) - 1
        }
    }
}

/// Sparse context vector: `(input index, value)` pairs. Indices may repeat;
/// repeated entries add.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEncoding<T = f64> {
    pub dim: usize,
    pub entries: Vec<(u32, T)>,
}

impl<T: Scalar> ContextEncoding<T> {
    pub fn dense(&self) -> Vec<T> {
        let mut v = vec![T::zero(); self.dim];
        for &(i, x) in &self.entries {
            v[i as usize] += x;
        }
        v
    }

    pub fn one_hot(dim: usize, index: usize) -> Self {
        Self { dim, entries: vec![(index as u32, T::one())] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    /// Temperature-1 sampling.
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<T = f64> {
    shape: PolicyShape,
    data: Vec<T>,
}

struct Offsets {
    w_in: usize,
    b_in: usize,
    w_out: usize,
    b_out: usize,
    v_in: usize,
    v_b: usize,
    v_out: usize,
    v_bias: usize,
}

impl Offsets {
    fn of(s: &PolicyShape) -> Self {
        let (d, h, a) = (s.input_dim(), s.hidden, s.alphabet);
        let w_in = 0;
        let b_in = w_in + d * h;
        let w_out = b_in + h;
        let b_out = w_out + a * h;
        let v_in = b_out + a;
        let v_b = v_in + d * h;
        let v_out = v_b + h;
        let v_bias = v_out + h;
        Self { w_in, b_in, w_out, b_out, v_in, v_b, v_out, v_bias }
    }
}

struct PolicyForward<T> {
    hidden: Vec<T>,
    logp: Vec<T>,
}

struct ValueForward<T> {
    hidden: Vec<T>,
    value: T,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn zeros(shape: PolicyShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self { shape, data: vec![T::zero(); shape.param_count()] })
    }

    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn init(shape: PolicyShape, scale: f64, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(shape)?;
        let o = Offsets::of(&shape);
        let mut rng = rng::keyed(&[0x1417, seed]);
        let weight_blocks = [
            o.w_in..o.b_in,
            o.w_out..o.b_out,
            o.v_in..o.v_b,
            o.v_out..o.v_bias,
        ];
        for block in weight_blocks {
            for w in &mut p.data[block] {
                *w = T::of(rng.gen_range(-scale..=scale));
            }
        }
        Ok(p)
    }

    pub fn from_flat(shape: PolicyShape, data: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat index range of the policy network.
    pub fn policy_range(&self) -> Range<usize> {
        0..self.shape.policy_len()
    }

    /// Flat index range of the value network.
    pub fn value_range(&self) -> Range<usize> {
        self.shape.policy_len()..self.data.len()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Encodes `prompt` plus the last `window` tokens of `prefix`.
    pub fn encode(&self, prompt: &Prompt, prefix: &[Token]) -> Result<ContextEncoding<T>> {
        let s = &self.shape;
        let mut entries = Vec::with_capacity(prompt.features.len() + 2 * s.window);
        for &(i, x) in &prompt.features {
            if (i as usize) < s.prompt_dim {
                entries.push((i, T::of(x)));
            }
        }
        let pos_base = s.prompt_dim;
        let bag_base = pos_base + s.window * (s.alphabet + 1);
        let bag_weight = T::one() / T::of(s.window as f64);
        for k in 0..s.window {
            let slot = pos_base + k * (s.alphabet + 1);
            match prefix.len().checked_sub(k + 1).map(|i| prefix[i] as usize) {
                Some(tok) if tok >= s.alphabet => {
                    return Err(Error::invalid(format!("token {tok} outside alphabet of {}", s.alphabet)))
                }
                Some(tok) => {
                    entries.push(((slot + tok) as u32, T::one()));
                    entries.push(((bag_base + tok) as u32, bag_weight));
                }
                None => entries.push(((slot + s.alphabet) as u32, T::one())),
            }
        }
        Ok(ContextEncoding { dim: s.input_dim(), entries })
    }

    fn check_ctx(&self, ctx: &ContextEncoding<T>) -> Result<()> {
        let d = self.shape.input_dim();
        if ctx.dim != d || ctx.entries.iter().any(|&(i, _)| i as usize >= d) {
            return Err(Error::invalid(format!("context of width {} does not match input width {d}", ctx.dim)));
        }
        Ok(())
    }

    fn hidden_layer(&self, ctx: &ContextEncoding<T>, w: usize, b: usize) -> Vec<T> {
        let h = self.shape.hidden;
        let mut pre = self.data[b..b + h].to_vec();
        for &(i, x) in &ctx.entries {
            let row = &self.data[w + i as usize * h..w + (i as usize + 1) * h];
            for (p, &wij) in pre.iter_mut().zip(row) {
                *p += x * wij;
            }
        }
        pre.into_iter().map(|x| x.tanh()).collect()
    }

    fn raw_logits(&self, hidden: &[T]) -> Vec<T> {
        let (h, a) = (self.shape.hidden, self.shape.alphabet);
        let o = Offsets::of(&self.shape);
        (0..a)
            .map(|k| {
                let row = &self.data[o.w_out + k * h..o.w_out + (k + 1) * h];
                row.iter().zip(hidden).fold(self.data[o.b_out + k], |acc, (&w, &x)| acc + w * x)
            })
            .collect()
    }

    pub fn logits(&self, ctx: &ContextEncoding<T>) -> Result<Vec<T>> {
        self.check_ctx(ctx)?;
        let o = Offsets::of(&self.shape);
        Ok(self.raw_logits(&self.hidden_layer(ctx, o.w_in, o.b_in)))
    }

    fn policy_forward(&self, ctx: &ContextEncoding<T>, mask: u64) -> PolicyForward<T> {
        let o = Offsets::of(&self.shape);
        let hidden = self.hidden_layer(ctx, o.w_in, o.b_in);
        let logits = self.raw_logits(&hidden);
        let logp = log_softmax_masked(&logits, mask & self.shape.alphabet_mask());
        PolicyForward { hidden, logp }
    }

    fn value_forward(&self, ctx: &ContextEncoding<T>) -> ValueForward<T> {
        let o = Offsets::of(&self.shape);
        let hidden = self.hidden_layer(ctx, o.v_in, o.v_b);
        let out = &self.data[o.v_out..o.v_out + self.shape.hidden];
        let value = out.iter().zip(&hidden).fold(self.data[o.v_bias], |acc, (&w, &x)| acc + w * x);
        ValueForward { hidden, value }
    }

    pub fn value_predict(&self, ctx: &ContextEncoding<T>) -> Result<T> {
        self.check_ctx(ctx)?;
        Ok(self.value_forward(ctx).value)
    }

    /// Value and its gradient with respect to every parameter (policy block zero).
    pub fn value_grad(&self, ctx: &ContextEncoding<T>) -> Result<(T, Self)> {
        self.check_ctx(ctx)?;
        let mut grad = Self::zeros(self.shape)?;
        let fwd = self.value_forward(ctx);
        self.value_backward(ctx, &fwd, T::one(), &mut grad);
        Ok((fwd.value, grad))
    }

    fn value_backward(&self, ctx: &ContextEncoding<T>, fwd: &ValueForward<T>, upstream: T, grad: &mut Self) {
        let h = self.shape.hidden;
        let o = Offsets::of(&self.shape);
        grad.data[o.v_bias] += upstream;
        let mut dpre = vec![T::zero(); h];
        for j in 0..h {
            grad.data[o.v_out + j] += upstream * fwd.hidden[j];
            let dg = upstream * self.data[o.v_out + j];
            dpre[j] = dg * (T::one() - fwd.hidden[j] * fwd.hidden[j]);
            grad.data[o.v_b + j] += dpre[j];
        }
        for &(i, x) in &ctx.entries {
            let row = &mut grad.data[o.v_in + i as usize * h..o.v_in + (i as usize + 1) * h];
            for (g, &d) in row.iter_mut().zip(&dpre) {
                *g += x * d;
            }
        }
    }

    /// Backprop of `upstream * log p(token)` through the policy network.
    fn policy_backward(&self, ctx: &ContextEncoding<T>, fwd: &PolicyForward<T>, token: usize, upstream: T, grad: &mut Self) {
        let (h, a) = (self.shape.hidden, self.shape.alphabet);
        let o = Offsets::of(&self.shape);
        let mut dh = vec![T::zero(); h];
        for k in 0..a {
            let p = fwd.logp[k].exp();
            let indicator = if k == token { T::one() } else { T::zero() };
            let dz = upstream * (indicator - p);
            if dz == T::zero() {
                continue;
            }
            grad.data[o.b_out + k] += dz;
            let w_row = &self.data[o.w_out + k * h..o.w_out + (k + 1) * h];
            let g_row = &mut grad.data[o.w_out + k * h..o.w_out + (k + 1) * h];
            for j in 0..h {
                g_row[j] += dz * fwd.hidden[j];
                dh[j] += dz * w_row[j];
            }
        }
        let dpre: Vec<T> = dh
            .iter()
            .zip(&fwd.hidden)
            .map(|(&d, &y)| d * (T::one() - y * y))
            .collect();
        for j in 0..h {
            grad.data[o.b_in + j] += dpre[j];
        }
        for &(i, x) in &ctx.entries {
            let row = &mut grad.data[o.w_in + i as usize * h..o.w_in + (i as usize + 1) * h];
            for (g, &d) in row.iter_mut().zip(&dpre) {
                *g += x * d;
            }
        }
    }

    /// Samples a fresh response.
    pub fn rollout(&self, snapshot_version: u64, prompt: &Arc<Prompt>, max_len: usize, rng_seed: u64) -> Result<Trajectory<T>> {
        let mut t = Trajectory::empty(Arc::clone(prompt), 0);
        self.extend(snapshot_version, &mut t, max_len, rng_seed, None, Decoding::Sample)?;
        Ok(t)
    }

    /// Continues `traj` from its current prefix, stamping new tokens with
    /// `snapshot_version`. Stops at EOS, at `max_len` (marking the trajectory
    /// truncated) or after `budget` new tokens. Token `i` uses uniform draw
    /// `i` of the stream keyed by `rng_seed`, so how a response is split into
    /// segments does not change which draws it sees.
    pub fn extend(
        &self,
        snapshot_version: u64,
        traj: &mut Trajectory<T>,
        max_len: usize,
        rng_seed: u64,
        budget: Option<usize>,
        decoding: Decoding,
    ) -> Result<()> {
        if max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        let mask = traj.prompt.mask & self.shape.alphabet_mask();
        if mask & 1 << EOS == 0 {
            return Err(Error::invalid("prompt mask must allow EOS"));
        }
        let mut stream = UniformStream::new(&[rng_seed]);
        let mut emitted = 0;
        while !traj.is_finished() && traj.len() < max_len && budget.is_none_or(|b| emitted < b) {
            let ctx = self.encode(&traj.prompt, &traj.tokens)?;
            let fwd = self.policy_forward(&ctx, mask);
            let token = match decoding {
                Decoding::Sample => sample(&fwd.logp, stream.at(traj.len() as u64)),
                Decoding::Greedy => argmax(&fwd.logp),
            };
            traj.tokens.push(token as Token);
            traj.behavior_logprobs.push(fwd.logp[token]);
            traj.versions.push(snapshot_version);
            emitted += 1;
            if traj.len() == max_len && token != EOS as usize {
                traj.truncated = true;
            }
        }
        Ok(())
    }

    fn contexts(&self, traj: &Trajectory<T>) -> Result<Vec<ContextEncoding<T>>> {
        (0..traj.len()).map(|t| self.encode(&traj.prompt, &traj.tokens[..t])).collect()
    }

    fn check_tokens(&self, traj: &Trajectory<T>) -> Result<()> {
        let mask = traj.prompt.mask & self.shape.alphabet_mask();
        match traj.tokens.iter().find(|&&t| t as usize >= self.shape.alphabet || mask >> t & 1 == 0) {
            Some(t) => Err(Error::invalid(format!("token {t} not in the policy's alphabet for this prompt"))),
            None => Ok(()),
        }
    }

    /// Current per-token log-probs and value predictions.
    pub fn forward(&self, traj: &Trajectory<T>) -> Result<(Vec<T>, Vec<T>)> {
        self.check_tokens(traj)?;
        let mask = traj.prompt.mask;
        let mut logps = Vec::with_capacity(traj.len());
        let mut values = Vec::with_capacity(traj.len());
        for (t, ctx) in self.contexts(traj)?.iter().enumerate() {
            logps.push(self.policy_forward(ctx, mask).logp[traj.tokens[t] as usize]);
            values.push(self.value_forward(ctx).value);
        }
        Ok((logps, values))
    }

    /// Accumulates into `grad` the gradient of
    /// `Σ_t logp_weights[t]·log π(token_t) + value_weights[t]·V(ctx_t)`.
    pub fn backward(&self, traj: &Trajectory<T>, logp_weights: &[T], value_weights: &[T], grad: &mut Self) -> Result<()> {
        self.check_tokens(traj)?;
        if logp_weights.len() != traj.len() || value_weights.len() != traj.len() {
            return Err(Error::invalid("weight arrays must match trajectory length"));
        }
        let mask = traj.prompt.mask;
        for (t, ctx) in self.contexts(traj)?.iter().enumerate() {
            if logp_weights[t] != T::zero() {
                let fwd = self.policy_forward(ctx, mask);
                self.policy_backward(ctx, &fwd, traj.tokens[t] as usize, logp_weights[t], grad);
            }
            if value_weights[t] != T::zero() {
                let fwd = self.value_forward(ctx);
                self.value_backward(ctx, &fwd, value_weights[t], grad);
            }
        }
        Ok(())
    }

    /// Per-token log-probs and the gradient of their sum.
    pub fn logprob_grad(&self, traj: &Trajectory<T>) -> Result<(Vec<T>, Self)> {
        let (logps, _) = self.forward(traj)?;
        let mut grad = Self::zeros(self.shape)?;
        let ones = vec![T::one(); traj.len()];
        let zeros = vec![T::zero(); traj.len()];
        self.backward(traj, &ones, &zeros, &mut grad)?;
        Ok((logps, grad))
    }

    /// Writes current log-probs and values into the trajectory.
    pub fn refresh(&self, traj: &mut Trajectory<T>) -> Result<()> {
        let (logps, values) = self.forward(traj)?;
        traj.current_logprobs = logps;
        traj.values = values;
        Ok(())
    }
}

fn sample<T: Scalar>(logp: &[T], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &lp) in logp.iter().enumerate() {
        if lp == T::neg_infinity() {
            continue;
        }
        acc += lp.exp().as_f64();
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

fn argmax<T: Scalar>(logp: &[T]) -> usize {
    let mut best = 0;
    for (k, &lp) in logp.iter().enumerate() {
        if lp > logp[best] {
            best = k;
        }
    }
    best
}
