use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::layers::Linear;
use super::params::{join, Parameters};

/// Softmax of each row restricted to allowed entries.
///
/// Disallowed logits are replaced by `f64::MIN` and their weights are set to
/// exactly zero. Every row must allow at least one entry.
pub fn masked_softmax_rows(logits: &Array2<f64>, allowed: Option<ArrayView2<bool>>) -> Array2<f64> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (i, (row, mut dst)) in logits.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))).enumerate() {
        let ok = |j: usize| allowed.as_ref().map_or(true, |m| m[[i, j]]);
        let mut max = f64::MIN;
        for (j, &v) in row.iter().enumerate() {
            let v = if ok(j) { v } else { f64::MIN };
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for (j, (&v, d)) in row.iter().zip(dst.iter_mut()).enumerate() {
            if ok(j) {
                *d = (v - max).exp();
                sum += *d;
            }
        }
        dst /= sum;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl AttentionCache {
    /// Attention weights of head `h`, rows are queries.
    pub fn probs(&self, h: usize) -> &Array2<f64> {
        &self.probs[h]
    }
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim must be divisible by heads");
        Self {
            heads,
            query: Linear::new(dim, dim, rng),
            key: Linear::new(dim, dim, rng),
            value: Linear::new(dim, dim, rng),
            output: Linear::new(dim, dim, rng),
        }
    }

    fn head_dim(&self) -> usize {
        self.query.outputs() / self.heads
    }

    pub fn forward(&self, x: &Array2<f64>, mask: Option<&Array2<bool>>) -> (Array2<f64>, AttentionCache) {
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Array2::zeros(q.raw_dim());
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let logits = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let p = masked_softmax_rows(&logits, mask.map(|m| m.view()));
            concat.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let y = self.output.forward(&concat);
        (y, AttentionCache { x: x.clone(), q, k, v, probs, concat })
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &Array2<f64>, grad: &mut MultiHeadAttention) -> Array2<f64> {
        let dconcat = self.output.backward(&cache.concat, dy, &mut grad.output);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dout = dconcat.slice(cols);
            let dp = dout.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&dout));
            let mut ds = dp;
            for (mut drow, prow) in ds.axis_iter_mut(Axis(0)).zip(p.axis_iter(Axis(0))) {
                let c = drow.dot(&prow);
                drow.zip_mut_with(&prow, |d, &pi| *d = pi * (*d - c));
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let mut dx = self.query.backward(&cache.x, &dq, &mut grad.query);
        dx += &self.key.backward(&cache.x, &dk, &mut grad.key);
        dx += &self.value.backward(&cache.x, &dv, &mut grad.value);
        dx
    }
}

impl Parameters for MultiHeadAttention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn masked_rows_sum_to_one_and_zero_disallowed() {
        let mut rng = stream(3);
        let logits = Array2::from_shape_fn((5, 5), |_| rng.random::<f64>() * 10.0 - 5.0);
        let flags = [true, false, true, true, false];
        let mask = Array2::from_shape_fn((5, 5), |(i, j)| flags[i] == flags[j]);
        let p = masked_softmax_rows(&logits, Some(mask.view()));
        for i in 0..5 {
            assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
            for j in 0..5 {
                if !mask[[i, j]] {
                    assert_eq!(p[[i, j]], 0.0);
                }
            }
        }
        let full = Array2::from_elem((5, 5), true);
        assert_eq!(masked_softmax_rows(&logits, Some(full.view())), masked_softmax_rows(&logits, None));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Array2::from_shape_vec((1, 3), vec![1e300, -1e300, 0.0]).unwrap();
        let p = masked_softmax_rows(&logits, None);
        assert_eq!(p[[0, 0]], 1.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream(4);
        let mha = MultiHeadAttention::new(8, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 8), |_| rng.random::<f64>() - 0.5);
        let w = Array2::from_shape_fn((4, 8), |_| rng.random::<f64>() - 0.5);
        let flags = [true, false, true, false];
        let mask = Array2::from_shape_fn((4, 4), |(i, j)| flags[i] == flags[j]);
        let loss = |x: &Array2<f64>| (&mha.forward(x, Some(&mask)).0 * &w).sum();
        let (_, cache) = mha.forward(&x, Some(&mask));
        let mut g = mha.zeroed();
        let dx = mha.backward(&cache, &w, &mut g);
        let h = 1e-6;
        for idx in [(0, 0), (1, 3), (3, 7)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-7, "{idx:?}: {fd} vs {}", dx[idx]);
        }
    }
}
