use serde::{Deserialize, Serialize};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warm-up length in steps; 0 disables warm-up.
    pub warmup_steps: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 5e-4, weight_decay: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, warmup_steps: 0 }
    }
}

impl AdamWConfig {
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.lr
        } else {
            self.lr * step as f64 / self.warmup_steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(n: usize) -> Self {
        Self { step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn update(&mut self, cfg: &AdamWConfig, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let lr = cfg.lr_at(self.step);
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            if lr == 0.0 {
                continue;
            }
            *p -= lr * cfg.weight_decay * *p;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(2);
        let mut p = vec![1.0, -1.0];
        opt.update(&cfg, &mut p, &[3.0, -0.5]);
        assert!((p[0] - (1.0 - 5e-4)).abs() < 1e-10);
        assert!((p[1] - (-1.0 + 5e-4)).abs() < 1e-10);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let cfg = AdamWConfig { lr: 0.0, ..Default::default() };
        let mut opt = AdamW::new(1);
        let mut p = vec![0.7];
        opt.update(&cfg, &mut p, &[2.0]);
        assert_eq!(p, vec![0.7]);
        assert_ne!(opt.m[0], 0.0);
    }

    #[test]
    fn warmup_ramps_linearly() {
        let cfg = AdamWConfig { warmup_steps: 4, ..Default::default() };
        assert_eq!(cfg.lr_at(1), 5e-4 / 4.0);
        assert_eq!(cfg.lr_at(4), 5e-4);
    }
}
