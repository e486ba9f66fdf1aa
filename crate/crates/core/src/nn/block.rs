use ndarray::Array2;
use rand::Rng;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::layers::{gelu, gelu_grad, LayerNorm, LayerNormCache, Linear};
use super::params::{join, Parameters};

/// Two-layer perceptron with a GELU between the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        Self { fc1: Linear::new(inputs, hidden, rng), fc2: Linear::new(hidden, outputs, rng) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let pre = self.fc1.forward(x);
        let act = pre.mapv(gelu);
        let y = self.fc2.forward(&act);
        (y, MlpCache { x: x.clone(), pre, act })
    }

    pub fn backward(&self, cache: &MlpCache, dy: &Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let dact = self.fc2.backward(&cache.act, dy, &mut grad.fc2);
        let dpre = dact * &cache.pre.mapv(gelu_grad);
        self.fc1.backward(&cache.x, &dpre, &mut grad.fc1)
    }
}

impl Parameters for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}

/// Pre-norm transformer block: `h = x + attn(ln1(x))`, `y = h + mlp(ln2(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    mlp: MlpCache,
}

impl BlockCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attn
    }
}

impl Block {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, mlp_ratio: usize, rng: &mut R) -> Self {
        Self {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng),
            ln2: LayerNorm::new(dim),
            mlp: Mlp::new(dim, dim * mlp_ratio, dim, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, mask: Option<&Array2<bool>>) -> (Array2<f64>, BlockCache) {
        let (n1, ln1) = self.ln1.forward(x);
        let (a, attn) = self.attn.forward(&n1, mask);
        let h = x + &a;
        let (n2, ln2) = self.ln2.forward(&h);
        let (m, mlp) = self.mlp.forward(&n2);
        (h + &m, BlockCache { ln1, attn, ln2, mlp })
    }

    pub fn backward(&self, cache: &BlockCache, dy: &Array2<f64>, grad: &mut Block) -> Array2<f64> {
        let dn2 = self.mlp.backward(&cache.mlp, dy, &mut grad.mlp);
        let dh = dy + &self.ln2.backward(&cache.ln2, &dn2, &mut grad.ln2);
        let dn1 = self.attn.backward(&cache.attn, &dh, &mut grad.attn);
        &dh + &self.ln1.backward(&cache.ln1, &dn1, &mut grad.ln1)
    }
}

impl Parameters for Block {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.ln1.visit(&join(prefix, "ln1"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.ln2.visit(&join(prefix, "ln2"), f);
        self.mlp.visit(&join(prefix, "mlp"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.ln1.visit_mut(&join(prefix, "ln1"), f);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.ln2.visit_mut(&join(prefix, "ln2"), f);
        self.mlp.visit_mut(&join(prefix, "mlp"), f);
    }
}

/// Blocks followed by a final layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerStack {
    pub blocks: Vec<Block>,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct StackCache {
    pub blocks: Vec<BlockCache>,
    norm: LayerNormCache,
}

impl TransformerStack {
    pub fn new<R: Rng + ?Sized>(dim: usize, layers: usize, heads: usize, mlp_ratio: usize, rng: &mut R) -> Self {
        Self {
            blocks: (0..layers).map(|_| Block::new(dim, heads, mlp_ratio, rng)).collect(),
            norm: LayerNorm::new(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, mask: Option<&Array2<bool>>) -> (Array2<f64>, StackCache) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (next, c) = b.forward(&h, mask);
            caches.push(c);
            h = next;
        }
        let (y, norm) = self.norm.forward(&h);
        (y, StackCache { blocks: caches, norm })
    }

    pub fn backward(&self, cache: &StackCache, dy: &Array2<f64>, grad: &mut TransformerStack) -> Array2<f64> {
        let mut d = self.norm.backward(&cache.norm, dy, &mut grad.norm);
        for ((b, c), g) in self.blocks.iter().zip(&cache.blocks).zip(grad.blocks.iter_mut()).rev() {
            d = b.backward(c, &d, g);
        }
        d
    }
}

impl Parameters for TransformerStack {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.norm.visit(&join(prefix, "norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.norm.visit_mut(&join(prefix, "norm"), f);
    }
}
