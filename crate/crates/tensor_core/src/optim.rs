//! Adam/AdamW, global gradient clipping and polyak target updates.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdamVariant {
    Adam,
    /// Decoupled weight decay: params shrink by lr * weight_decay * param
    /// alongside the moment update.
    AdamW,
}

pub struct Adam {
    params: Vec<Tensor>,
    pub lr: f32,
    pub betas: (f32, f32),
    pub eps: f32,
    pub weight_decay: f32,
    pub variant: AdamVariant,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: Vec<Tensor>, lr: f32) -> Adam {
        Adam::with_options(params, lr, (0.9, 0.999), 0.0, AdamVariant::Adam)
    }

    pub fn with_options(
        params: Vec<Tensor>,
        lr: f32,
        betas: (f32, f32),
        weight_decay: f32,
        variant: AdamVariant,
    ) -> Adam {
        assert!(lr > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&betas.0) && (0.0..1.0).contains(&betas.1));
        assert!(weight_decay >= 0.0);
        let m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Adam { params, lr, betas, eps: 1e-8, weight_decay, variant, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// One Adam update with bias correction. Missing grads count as zero.
    pub fn step(&mut self) {
        self.step += 1;
        let (b1, b2) = self.betas;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for (i, p) in self.params.iter().enumerate() {
            let grad = p.grad();
            let g = match grad.as_deref() {
                Some(g) => g,
                None => continue,
            };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let lr = self.lr;
            let eps = self.eps;
            let wd = self.weight_decay;
            let variant = self.variant;
            p.update_data(|data| {
                for j in 0..data.len() {
                    let gj = match variant {
                        // classic L2: decay folded into the gradient
                        AdamVariant::Adam if wd > 0.0 => g[j] + wd * data[j],
                        _ => g[j],
                    };
                    m[j] = b1 * m[j] + (1.0 - b1) * gj;
                    v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    if variant == AdamVariant::AdamW && wd > 0.0 {
                        data[j] -= lr * wd * data[j];
                    }
                    data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
        }
    }

    /// Moment arrays exposed for checkpointing, aligned with `params()`.
    pub fn state(&self) -> (u64, &[Vec<f32>], &[Vec<f32>]) {
        (self.step, &self.m, &self.v)
    }

    pub fn restore_state(&mut self, step: u64, m: Vec<Vec<f32>>, v: Vec<Vec<f32>>) {
        assert_eq!(m.len(), self.params.len());
        assert_eq!(v.len(), self.params.len());
        for (i, p) in self.params.iter().enumerate() {
            assert_eq!(m[i].len(), p.numel(), "moment shape mismatch at param {i}");
            assert_eq!(v[i].len(), p.numel(), "moment shape mismatch at param {i}");
        }
        self.step = step;
        self.m = m;
        self.v = v;
    }
}

/// Scales all grads so the global L2 norm is at most `max_norm`.
/// Returns the applied scale factor (1.0 when already under the limit).
pub fn clip_grad_norm(params: &[Tensor], max_norm: f32) -> f32 {
    assert!(max_norm > 0.0);
    let mut sq = 0.0f64;
    for p in params {
        if let Some(g) = p.grad() {
            for v in g {
                sq += (v as f64) * (v as f64);
            }
        }
    }
    let norm = sq.sqrt() as f32;
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    for p in params {
        if let Some(mut g) = p.grad() {
            for v in &mut g {
                *v *= scale;
            }
            p.set_grad(g);
        }
    }
    scale
}

/// target <- (1 - tau) * target + tau * online, elementwise over the tree.
pub fn polyak_update(target: &[Tensor], online: &[Tensor], tau: f32) {
    assert!(tau > 0.0 && tau <= 1.0);
    assert_eq!(target.len(), online.len(), "parameter trees differ in length");
    for (t, o) in target.iter().zip(online) {
        assert_eq!(t.shape(), o.shape(), "parameter trees differ in shape");
        let od = o.to_vec();
        t.update_data(|td| {
            for (tv, ov) in td.iter_mut().zip(&od) {
                *tv = (1.0 - tau) * *tv + tau * ov;
            }
        });
    }
}

/// Hard copy online params into targets (polyak with tau = 1).
pub fn hard_update(target: &[Tensor], online: &[Tensor]) {
    polyak_update(target, online, 1.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f32]) -> Tensor {
        Tensor::param(values.to_vec(), &[values.len()])
    }

    fn set_grad(p: &Tensor, g: &[f32]) {
        p.set_grad(g.to_vec());
    }

    #[test]
    fn zero_grad_zero_decay_is_fixed_point() {
        let p = param(&[1.0, -2.0]);
        let mut opt = Adam::new(vec![p.clone()], 1e-3);
        set_grad(&p, &[0.0, 0.0]);
        opt.step();
        assert_eq!(p.to_vec(), vec![1.0, -2.0]);
        assert_eq!(opt.step_count(), 1);
        let (_, m, v) = opt.state();
        assert!(m[0].iter().all(|&x| x == 0.0));
        assert!(v[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // From zero moments, one step gives |update| = lr * |g| / (|g| + eps')
        for &g in &[0.5f32, -3.0, 1e-3] {
            let p = param(&[0.0]);
            let mut opt = Adam::new(vec![p.clone()], 0.01);
            set_grad(&p, &[g]);
            opt.step();
            let update = p.to_vec()[0];
            assert!((update.abs() - 0.01).abs() < 1e-4, "update {update} for grad {g}");
            assert_eq!(update.signum(), -g.signum());
        }
    }

    #[test]
    fn adamw_zero_grad_shrinks_params() {
        let p = param(&[2.0]);
        let mut opt = Adam::with_options(vec![p.clone()], 0.1, (0.9, 0.999), 0.01, AdamVariant::AdamW);
        set_grad(&p, &[0.0]);
        opt.step();
        let expected = 2.0 * (1.0 - 0.1 * 0.01);
        assert!((p.to_vec()[0] - expected).abs() < 1e-7);
    }

    #[test]
    fn clip_under_threshold_is_identity() {
        let p = param(&[0.06, 0.08]); // grad norm 0.1
        set_grad(&p, &[0.06, 0.08]);
        assert_eq!(clip_grad_norm(&[p.clone()], 0.25), 1.0);
        assert_eq!(p.grad().unwrap(), vec![0.06, 0.08]);
    }

    #[test]
    fn clip_three_four_five() {
        let p = param(&[0.0, 0.0]);
        set_grad(&p, &[3.0, 4.0]);
        let scale = clip_grad_norm(&[p.clone()], 0.25);
        assert!((scale - 0.05).abs() < 1e-7);
        let g = p.grad().unwrap();
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((norm - 0.25).abs() < 1e-6);
    }

    #[test]
    fn polyak_small_tau() {
        let t = param(&[0.0]);
        let o = param(&[1.0]);
        polyak_update(&[t.clone()], &[o.clone()], 5e-3);
        assert!((t.to_vec()[0] - 0.005).abs() < 1e-9);
    }

    #[test]
    fn polyak_tau_one_copies() {
        let t = param(&[0.3, -0.7]);
        let o = param(&[1.0, 2.0]);
        polyak_update(&[t.clone()], &[o.clone()], 1.0);
        assert_eq!(t.to_vec(), o.to_vec());
    }

    #[test]
    fn polyak_contracts_distance_monotonically() {
        let t = param(&[0.0]);
        let o = param(&[1.0]);
        let mut last = 1.0f32;
        for _ in 0..20 {
            polyak_update(&[t.clone()], &[o.clone()], 0.1);
            let d = (t.to_vec()[0] - 1.0).abs();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    #[should_panic(expected = "trees differ")]
    fn polyak_rejects_mismatched_trees() {
        let t = param(&[0.0]);
        polyak_update(&[t.clone()], &[], 0.5);
    }
}
