//! History-to-action-chunk transformer policy trained with an L1 loss.
//!
//! Each step's camera embeddings and proprioception are concatenated into
//! one vector, projected by a two-layer MLP, offset by a sinusoidal encoding
//! of the step index, and run through non-causal transformer blocks. A linear
//! head on the last token emits `K * d_a` values.

use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::params::join;
use crate::nn::{sinusoidal_1d, AdamW, AdamWConfig, Linear, Mlp, Parameters, TensorError, TensorTable, TransformerStack};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch for {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { what: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("failed to write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T, E = PolicyError> = std::result::Result<T, E>;

fn mismatch(what: &'static str, expected: &[usize], found: &[usize]) -> PolicyError {
    PolicyError::ShapeMismatch { what, expected: expected.to_vec(), found: found.to_vec() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// History length C.
    pub history: usize,
    /// Chunk length K.
    pub chunk: usize,
    pub action_dim: usize,
    pub proprio_dim: usize,
    pub cameras: usize,
    pub embed_dim: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            history: 4,
            chunk: 4,
            action_dim: 8,
            proprio_dim: 8,
            cameras: 2,
            embed_dim: 16,
            width: 32,
            layers: 2,
            heads: 2,
            mlp_ratio: 2,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.to_string()));
        if [self.history, self.chunk, self.action_dim, self.proprio_dim, self.cameras].contains(&0) {
            return bad("history, chunk, action_dim, proprio_dim and cameras must be at least 1");
        }
        if self.embed_dim == 0 || self.mlp_ratio == 0 {
            return bad("embed_dim and mlp_ratio must be positive");
        }
        if self.width == 0 || self.width % 2 != 0 {
            return bad("width must be positive and even");
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            return bad("width must be divisible by heads");
        }
        Ok(())
    }

    /// Length of the concatenated per-step vector, `N * d_e + d_s`.
    pub fn token_input_dim(&self) -> usize {
        self.cameras * self.embed_dim + self.proprio_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepObservation {
    pub embeddings: Vec<Array1<f64>>,
    pub proprio: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk(pub Array2<f64>);

/// Learnable tensors of the policy. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub proj: Mlp,
    pub stack: TransformerStack,
    pub head: Linear,
}

impl Parameters for PolicyParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.proj.visit(&join(prefix, "proj"), f);
        self.stack.visit(&join(prefix, "stack"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.proj.visit_mut(&join(prefix, "proj"), f);
        self.stack.visit_mut(&join(prefix, "stack"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub config: PolicyConfig,
    pub seed: u64,
    pub params: PolicyParams,
    pub optimizer: AdamW,
    pos: Array2<f64>,
}

impl PolicyState {
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed);
        let w = config.width;
        let proj = Mlp::new(config.token_input_dim(), w, w, &mut rng);
        let stack = TransformerStack::new(w, config.layers, config.heads, config.mlp_ratio, &mut rng);
        let head = Linear::new(w, config.chunk * config.action_dim, &mut rng);
        let params = PolicyParams { proj, stack, head };
        let optimizer = AdamW::new(params.num_params());
        let pos = sinusoidal_1d(config.history, w);
        Ok(Self { config, seed, params, optimizer, pos })
    }

    /// Parameters followed by `optim.step`, `optim.m` and `optim.v`.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut t = self.params.to_table();
        let n = self.optimizer.m.len();
        t.push("optim.step", &[1], &[self.optimizer.step as f64]);
        t.push("optim.m", &[n], &self.optimizer.m);
        t.push("optim.v", &[n], &self.optimizer.v);
        t.to_bytes()
    }

    pub fn from_blob(config: PolicyConfig, bytes: &[u8]) -> Result<Self> {
        let mut table = TensorTable::from_bytes(bytes)?;
        let mut state = Self::init(config, 0)?;
        let n = state.optimizer.m.len();
        let mut take = |name: &str, len: usize| -> Result<Vec<f64>> {
            let idx = table.tensors.iter().position(|t| t.name == name).ok_or_else(|| TensorError::Missing(name.into()))?;
            let t = table.tensors.remove(idx);
            if t.shape != [len] {
                return Err(TensorError::ShapeMismatch { name: name.into(), expected: vec![len], found: t.shape }.into());
            }
            Ok(t.data)
        };
        let step = take("optim.step", 1)?[0];
        let m = take("optim.m", n)?;
        let v = take("optim.v", n)?;
        state.optimizer = AdamW { step: step as u64, m, v };
        state.params.load_table(&table)?;
        Ok(state)
    }
}

/// `(e^1, ..., e^N, s)` as one vector.
pub fn concat_observation(obs: &StepObservation, cfg: &PolicyConfig) -> Result<Array1<f64>> {
    if obs.embeddings.len() != cfg.cameras {
        return Err(mismatch("camera count", &[cfg.cameras], &[obs.embeddings.len()]));
    }
    let mut v: Vec<f64> = Vec::with_capacity(cfg.token_input_dim());
    for e in &obs.embeddings {
        if e.len() != cfg.embed_dim {
            return Err(mismatch("camera embedding", &[cfg.embed_dim], &[e.len()]));
        }
        v.extend(e.iter());
    }
    if obs.proprio.len() != cfg.proprio_dim {
        return Err(mismatch("proprioception", &[cfg.proprio_dim], &[obs.proprio.len()]));
    }
    v.extend(obs.proprio.iter());
    if !v.iter().all(|x| x.is_finite()) {
        return Err(PolicyError::NonFiniteActivation("observation"));
    }
    Ok(Array1::from(v))
}

/// Per-step token in the backbone width.
pub fn assemble_token(obs: &StepObservation, state: &PolicyState) -> Result<Array1<f64>> {
    let x = concat_observation(obs, &state.config)?.insert_axis(Axis(0));
    Ok(state.params.proj.forward(&x).0.row(0).to_owned())
}

fn history_matrix(history: &[StepObservation], cfg: &PolicyConfig) -> Result<Array2<f64>> {
    if history.len() != cfg.history {
        return Err(mismatch("history length", &[cfg.history], &[history.len()]));
    }
    let mut x = Array2::zeros((cfg.history, cfg.token_input_dim()));
    for (mut row, obs) in x.axis_iter_mut(Axis(0)).zip(history) {
        row.assign(&concat_observation(obs, cfg)?);
    }
    Ok(x)
}

struct Forward {
    proj: crate::nn::block::MlpCache,
    stack: crate::nn::StackCache,
    last: Array2<f64>,
    out: Array2<f64>,
}

fn forward(history: &[StepObservation], params: &PolicyParams, state: &PolicyState) -> Result<Forward> {
    let cfg = &state.config;
    let x = history_matrix(history, cfg)?;
    let (tokens, proj) = params.proj.forward(&x);
    let (z, stack) = params.stack.forward(&(tokens + &state.pos), None);
    let last = z.slice(s![cfg.history - 1..cfg.history, ..]).to_owned();
    let flat = params.head.forward(&last);
    if !flat.iter().all(|v| v.is_finite()) {
        return Err(PolicyError::NonFiniteActivation("policy head"));
    }
    let out = flat.into_shape_with_order((cfg.chunk, cfg.action_dim)).expect("chunk shape");
    Ok(Forward { proj, stack, last, out })
}

pub fn policy_forward(history: &[StepObservation], state: &PolicyState) -> Result<ActionChunk> {
    Ok(ActionChunk(forward(history, &state.params, state)?.out))
}

/// Mean absolute difference over all chunk entries.
pub fn bc_l1_loss(pred: &ActionChunk, target: &ActionChunk) -> Result<f64> {
    if pred.0.shape() != target.0.shape() {
        return Err(mismatch("action chunk", target.0.shape(), pred.0.shape()));
    }
    Ok((&pred.0 - &target.0).mapv(f64::abs).sum() / pred.0.len() as f64)
}

/// Subgradient of [`bc_l1_loss`] with respect to `pred`, using `sign(0) = 0`.
pub fn bc_l1_grad(pred: &ActionChunk, target: &ActionChunk) -> Result<Array2<f64>> {
    if pred.0.shape() != target.0.shape() {
        return Err(mismatch("action chunk", target.0.shape(), pred.0.shape()));
    }
    let n = pred.0.len() as f64;
    Ok((&pred.0 - &target.0).mapv(|d| if d > 0.0 { 1.0 / n } else if d < 0.0 { -1.0 / n } else { 0.0 }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub history: Vec<StepObservation>,
    pub target: ActionChunk,
}

/// Mean batch loss evaluated with `params` in place of the state's own.
pub fn batch_loss_with(batch: &[Sample], params: &PolicyParams, state: &PolicyState) -> Result<f64> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        total += bc_l1_loss(&ActionChunk(forward(&s.history, params, state)?.out), &s.target)?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean batch loss and its exact gradient.
pub fn batch_loss_grad(batch: &[Sample], state: &PolicyState) -> Result<(f64, PolicyParams)> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let cfg = &state.config;
    let p = &state.params;
    let mut grad = p.zeroed();
    let mut total = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for s in batch {
        let fw = forward(&s.history, p, state)?;
        let pred = ActionChunk(fw.out);
        total += bc_l1_loss(&pred, &s.target)?;
        let dout = bc_l1_grad(&pred, &s.target)? * inv;
        let dflat = dout.into_shape_with_order((1, cfg.chunk * cfg.action_dim)).expect("flat");
        let dlast = p.head.backward(&fw.last, &dflat, &mut grad.head);
        let mut dz = Array2::zeros((cfg.history, cfg.width));
        dz.row_mut(cfg.history - 1).assign(&dlast.row(0));
        let dtokens = p.stack.backward(&fw.stack, &dz, &mut grad.stack);
        p.proj.backward(&fw.proj, &dtokens, &mut grad.proj);
    }
    Ok((total * inv, grad))
}

/// One optimizer update on the mean batch loss. Returns the pre-update loss.
pub fn train_step(batch: &[Sample], state: &mut PolicyState, opt: &AdamWConfig) -> Result<f64> {
    let (loss, grad) = batch_loss_grad(batch, state)?;
    let mut flat = state.params.flatten();
    state.optimizer.update(opt, &mut flat, &grad.flatten());
    state.params.assign_flat(&flat);
    if !state.params.all_finite() {
        return Err(PolicyError::NonFiniteActivation("parameters"));
    }
    Ok(loss)
}

/// Runs `steps` updates cycling through `data` in fixed minibatches.
pub fn train(data: &[Sample], batch_size: usize, steps: usize, state: &mut PolicyState, opt: &AdamWConfig) -> Result<Vec<f64>> {
    if data.is_empty() || batch_size == 0 {
        return Err(PolicyError::EmptyBatch);
    }
    let per_epoch = data.len().div_ceil(batch_size);
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let b = step % per_epoch;
        let batch = &data[b * batch_size..((b + 1) * batch_size).min(data.len())];
        curve.push(train_step(batch, state, opt)?);
    }
    Ok(curve)
}

/// Training curve as `step,loss` CSV.
pub fn write_training_curve(curve: &[f64], path: &Path) -> Result<()> {
    let io = |source: std::io::Error| PolicyError::Io { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(["step", "loss"]).map_err(|e| io(e.into()))?;
    for (i, l) in curve.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Synthetic behavior-cloning data whose targets are a fixed linear function
/// of the last step's proprioception.
pub fn synthetic_dataset<R: Rng + ?Sized>(cfg: &PolicyConfig, samples: usize, rng: &mut R) -> Vec<Sample> {
    let out = cfg.chunk * cfg.action_dim;
    let map = Array2::from_shape_fn((cfg.proprio_dim, out), |_| (rng.random::<f64>() * 2.0 - 1.0) / (cfg.proprio_dim as f64).sqrt());
    (0..samples)
        .map(|_| {
            let history: Vec<StepObservation> = (0..cfg.history)
                .map(|_| StepObservation {
                    embeddings: (0..cfg.cameras)
                        .map(|_| Array1::from_shape_fn(cfg.embed_dim, |_| rng.random::<f64>() * 2.0 - 1.0))
                        .collect(),
                    proprio: Array1::from_shape_fn(cfg.proprio_dim, |_| rng.random::<f64>() * 2.0 - 1.0),
                })
                .collect();
            let last = &history[cfg.history - 1].proprio;
            let target = last.dot(&map).into_shape_with_order((cfg.chunk, cfg.action_dim)).expect("chunk");
            Sample { history, target: ActionChunk(target) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PolicyState {
        PolicyState::init(PolicyConfig::default(), 11).unwrap()
    }

    #[test]
    fn concat_order() {
        let cfg = PolicyConfig { cameras: 2, embed_dim: 3, proprio_dim: 2, ..Default::default() };
        let obs = StepObservation {
            embeddings: vec![Array1::from(vec![1.0, 2.0, 3.0]), Array1::from(vec![4.0, 5.0, 6.0])],
            proprio: Array1::from(vec![7.0, 8.0]),
        };
        assert_eq!(concat_observation(&obs, &cfg).unwrap().to_vec(), (1..=8).map(f64::from).collect::<Vec<_>>());
        let short = StepObservation { embeddings: vec![obs.embeddings[0].clone()], proprio: obs.proprio.clone() };
        assert!(matches!(concat_observation(&short, &cfg), Err(PolicyError::ShapeMismatch { .. })));
    }

    #[test]
    fn zero_observation_with_zero_bias_gives_bias_output() {
        let mut s = tiny();
        let cfg = s.config.clone();
        s.params.proj.fc2.bias.fill(0.25);
        let obs = StepObservation {
            embeddings: vec![Array1::zeros(cfg.embed_dim); cfg.cameras],
            proprio: Array1::zeros(cfg.proprio_dim),
        };
        let t = assemble_token(&obs, &s).unwrap();
        assert!(t.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn l1_examples() {
        let a = ActionChunk(Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1));
        assert_eq!(bc_l1_loss(&a, &a).unwrap(), 0.0);
        let b = ActionChunk(&a.0 + 0.3);
        assert!((bc_l1_loss(&b, &a).unwrap() - 0.3).abs() < 1e-15);
        let c = ActionChunk(Array2::zeros((3, 4)));
        assert!(bc_l1_loss(&a, &c).is_err());
        assert!(bc_l1_grad(&a, &a).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn forward_shape_and_determinism() {
        let s = tiny();
        let data = synthetic_dataset(&s.config, 1, &mut stream(1));
        let a = policy_forward(&data[0].history, &s).unwrap();
        assert_eq!(a.0.dim(), (4, 8));
        assert_eq!(a, policy_forward(&data[0].history, &s).unwrap());
        assert!(policy_forward(&data[0].history[..3], &s).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut s = tiny();
        let data = synthetic_dataset(&s.config, 4, &mut stream(2));
        let before = s.params.clone();
        let opt = AdamWConfig { lr: 0.0, ..Default::default() };
        let l1 = train_step(&data, &mut s, &opt).unwrap();
        let l2 = train_step(&data, &mut s, &opt).unwrap();
        assert_eq!(s.params, before);
        assert_eq!(l1, l2);
        assert_eq!(s.optimizer.step, 2);
    }

    #[test]
    fn blob_round_trip_includes_moments() {
        let mut s = tiny();
        let data = synthetic_dataset(&s.config, 2, &mut stream(3));
        train_step(&data, &mut s, &AdamWConfig::default()).unwrap();
        let back = PolicyState::from_blob(s.config.clone(), &s.to_blob()).unwrap();
        assert_eq!(back.params, s.params);
        assert_eq!(back.optimizer, s.optimizer);
    }
}
