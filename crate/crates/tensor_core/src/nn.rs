//! Network building blocks: linear layers, MLPs, layer norm, embeddings,
//! causal self-attention and the diagonal-Gaussian policy head.

use std::f32::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

pub const LOG_STD_MIN: f32 = -5.0;
pub const LOG_STD_MAX: f32 = 2.0;
const LOG_SQRT_2PI: f32 = 0.918_938_5; // 0.5 * ln(2*pi)
const TANH_EPS: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Gelu,
}

impl Activation {
    pub fn apply(&self, x: &Tensor) -> Tensor {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => x.gelu(),
        }
    }
}

/// Uniform(-bound, bound) init, bound = 1/sqrt(fan_in); the usual MLP default.
fn uniform_init(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f32> {
    let bound = 1.0 / (fan_in as f32).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

pub fn normal_noise(rng: &mut impl Rng, shape: &[usize], std: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f32, _>(StandardNormal) * std).collect();
    Tensor::from_vec(data, shape)
}

pub struct Linear {
    pub weight: Tensor, // [in, out]
    pub bias: Tensor,   // [out]
}

impl Linear {
    pub fn new(rng: &mut impl Rng, in_dim: usize, out_dim: usize) -> Linear {
        Linear {
            weight: Tensor::param(uniform_init(rng, in_dim * out_dim, in_dim), &[in_dim, out_dim]),
            bias: Tensor::param(uniform_init(rng, out_dim, in_dim), &[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(
            *x.shape().last().expect("linear input needs >= 1 dim"),
            self.in_dim(),
            "linear layer width mismatch: input {:?}, weight {:?}",
            x.shape(),
            self.weight.shape()
        );
        x.matmul(&self.weight).add(&self.bias)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.weight"), self.weight.clone()),
            (format!("{prefix}.bias"), self.bias.clone()),
        ]
    }
}

/// Plain feed-forward net: `hidden_layers` hidden blocks of width
/// `hidden_dim` with the given activation, then a linear output layer.
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(
        rng: &mut impl Rng,
        in_dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Mlp {
        assert!(hidden_layers >= 1, "use Linear directly for 0 hidden layers");
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        layers.push(Linear::new(rng, in_dim, hidden_dim));
        for _ in 1..hidden_layers {
            layers.push(Linear::new(rng, hidden_dim, hidden_dim));
        }
        layers.push(Linear::new(rng, hidden_dim, out_dim));
        Mlp { layers, activation }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                h = self.activation.apply(&h);
            }
        }
        h
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.named_params(&format!("{prefix}.l{i}")))
            .collect()
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.named_params("m").into_iter().map(|(_, t)| t).collect()
    }

    /// Gradient of the summed scalar outputs w.r.t. the network input,
    /// built as part of the forward graph so the result stays differentiable
    /// in the parameters. Only valid for relu activations, whose masks are
    /// piecewise constant.
    pub fn input_gradient(&self, x: &Tensor) -> Tensor {
        assert_eq!(self.activation, Activation::Relu, "input_gradient assumes relu masks");
        assert_eq!(self.layers.last().unwrap().out_dim(), 1, "input_gradient expects a scalar head");
        let mut h = x.clone();
        let mut masks: Vec<Tensor> = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                let mask: Vec<f32> = h.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                masks.push(Tensor::from_vec(mask, h.shape()));
                h = self.activation.apply(&h);
            }
        }
        // Backward chain: g = (((1 * W_L^T) .* m_{L-1}) W_{L-1}^T ...) W_0^T
        let batch = x.numel() / x.shape().last().unwrap();
        let mut g = Tensor::full(&[batch, 1], 1.0);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = g.matmul_nt(&layer.weight);
            if i > 0 {
                let mask = &masks[i - 1];
                let flat = g.reshape(mask.shape());
                g = flat.mul(mask);
            }
        }
        g.reshape(x.shape())
    }
}

pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f32,
}

impl LayerNorm {
    pub fn new(width: usize, eps: f32) -> LayerNorm {
        LayerNorm {
            gamma: Tensor::param(vec![1.0; width], &[width]),
            beta: Tensor::param(vec![0.0; width], &[width]),
            eps,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.layer_norm(&self.gamma, &self.beta, self.eps)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.gamma"), self.gamma.clone()),
            (format!("{prefix}.beta"), self.beta.clone()),
        ]
    }
}

pub struct Embedding {
    pub weight: Tensor, // [vocab, dim]
}

impl Embedding {
    pub fn new(rng: &mut impl Rng, vocab: usize, dim: usize) -> Embedding {
        let data = (0..vocab * dim).map(|_| rng.sample::<f32, _>(StandardNormal) * 0.02).collect();
        Embedding { weight: Tensor::param(data, &[vocab, dim]) }
    }

    pub fn forward(&self, indices: &[usize]) -> Tensor {
        self.weight.gather_rows(indices)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![(format!("{prefix}.weight"), self.weight.clone())]
    }
}

/// Multi-head causal self-attention over [batch, seq, dim] tokens.
pub struct CausalSelfAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl CausalSelfAttention {
    pub fn new(rng: &mut impl Rng, dim: usize, heads: usize) -> CausalSelfAttention {
        assert!(heads >= 1 && dim % heads == 0, "dim {dim} not divisible by heads {heads}");
        CausalSelfAttention {
            wq: Linear::new(rng, dim, dim),
            wk: Linear::new(rng, dim, dim),
            wv: Linear::new(rng, dim, dim),
            wo: Linear::new(rng, dim, dim),
            heads,
        }
    }

    pub fn forward(&self, tokens: &Tensor) -> Tensor {
        causal_attention(tokens, self.heads, &self.wq, &self.wk, &self.wv, &self.wo)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = self.wq.named_params(&format!("{prefix}.wq"));
        out.extend(self.wk.named_params(&format!("{prefix}.wk")));
        out.extend(self.wv.named_params(&format!("{prefix}.wv")));
        out.extend(self.wo.named_params(&format!("{prefix}.wo")));
        out
    }
}

/// Scaled-dot-product attention with a strict lower-triangular visibility
/// mask: the output at position t depends only on tokens at positions <= t.
pub fn causal_attention(
    tokens: &Tensor,
    heads: usize,
    wq: &Linear,
    wk: &Linear,
    wv: &Linear,
    wo: &Linear,
) -> Tensor {
    let shape = tokens.shape();
    assert_eq!(shape.len(), 3, "attention input must be [batch, seq, dim]");
    let (batch, seq, dim) = (shape[0], shape[1], shape[2]);
    assert!(dim % heads == 0, "dim {dim} not divisible by heads {heads}");
    let head_dim = dim / heads;

    let split = |t: &Tensor| t.reshape(&[batch, seq, heads, head_dim]).swap_axes_12();
    let q = split(&wq.forward(tokens));
    let k = split(&wk.forward(tokens));
    let v = split(&wv.forward(tokens));

    let scale = 1.0 / (head_dim as f32).sqrt();
    let scores = q.matmul_nt(&k).scale(scale); // [batch, heads, seq, seq]

    let mut mask = vec![0.0f32; seq * seq];
    for t in 0..seq {
        for s in (t + 1)..seq {
            mask[t * seq + s] = -1e9;
        }
    }
    let mask = Tensor::from_vec(mask, &[seq, seq]);
    let attn = scores.add(&mask).softmax_last();

    let ctx = attn.matmul(&v); // [batch, heads, seq, head_dim]
    let merged = ctx.swap_axes_12().reshape(&[batch, seq, dim]);
    wo.forward(&merged)
}

/// Diagonal-Gaussian log-density of `action` under N(mean, exp(log_std)^2),
/// summed over the action dimension. `log_std` is clamped to the stable
/// range before use.
pub fn gaussian_log_prob(mean: &Tensor, log_std: &Tensor, action: &Tensor) -> Tensor {
    let log_std = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
    let std = log_std.exp();
    let z = action.sub(mean).div(&std);
    let per_dim = z.square().scale(-0.5).sub(&log_std).affine(1.0, -LOG_SQRT_2PI);
    let axis = per_dim.shape().len() - 1;
    per_dim.sum_axis(axis)
}

/// Log-density of a tanh-squashed Gaussian given the pre-squash value `u`:
/// the unsquashed density minus the change-of-variables term
/// sum(log(1 - tanh(u)^2 + eps)).
pub fn squashed_log_prob_from_pre_tanh(mean: &Tensor, log_std: &Tensor, pre_tanh: &Tensor) -> Tensor {
    let base = gaussian_log_prob(mean, log_std, pre_tanh);
    let correction = pre_tanh.tanh().square().affine(-1.0, 1.0 + TANH_EPS).log();
    let axis = correction.shape().len() - 1;
    base.sub(&correction.sum_axis(axis))
}

/// Squashed log-density evaluated at an action in (-1, 1).
pub fn squashed_log_prob(mean: &Tensor, log_std: &Tensor, action: &Tensor) -> Tensor {
    assert!(
        action.data().iter().all(|a| a.abs() < 1.0),
        "squashed log-prob requires actions strictly inside (-1, 1)"
    );
    let u: Vec<f32> = action.data().iter().map(|&a| atanh(a)).collect();
    let pre_tanh = Tensor::from_vec(u, action.shape());
    squashed_log_prob_from_pre_tanh(mean, log_std, &pre_tanh)
}

fn atanh(x: f32) -> f32 {
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}

/// Reparameterized sample u = mean + std * eps with eps drawn from `rng`.
/// Returns (pre_tanh, squashed action, squashed log-prob).
pub fn squashed_sample(
    mean: &Tensor,
    log_std: &Tensor,
    rng: &mut impl Rng,
) -> (Tensor, Tensor, Tensor) {
    let eps = normal_noise(rng, mean.shape(), 1.0);
    let std = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
    let pre_tanh = mean.add(&std.mul(&eps));
    let action = pre_tanh.tanh();
    let log_prob = squashed_log_prob_from_pre_tanh(mean, log_std, &pre_tanh);
    (pre_tanh, action, log_prob)
}

/// Reparameterized sample from the unsquashed Gaussian head.
pub fn gaussian_sample(mean: &Tensor, log_std: &Tensor, rng: &mut impl Rng) -> Tensor {
    let eps = normal_noise(rng, mean.shape(), 1.0);
    let std = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
    mean.add(&std.mul(&eps))
}

/// Entropy of the unsquashed diagonal Gaussian, summed over dims.
pub fn gaussian_entropy(log_std: &Tensor) -> Tensor {
    let log_std = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
    let per_dim = log_std.affine(1.0, 0.5 * (1.0 + (2.0 * PI).ln()));
    let axis = per_dim.shape().len() - 1;
    per_dim.sum_axis(axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_weight_relu_layer() {
        let mut r = rng(0);
        let mut layer = Linear::new(&mut r, 2, 2);
        layer.weight.set_data(&[1.0, 0.0, 0.0, 1.0]);
        layer.bias.set_data(&[0.0, 0.0]);
        let x = Tensor::from_vec(vec![-1.0, 2.0], &[1, 2]);
        let y = layer.forward(&x).relu();
        assert_eq!(y.to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn zero_weight_net_outputs_bias() {
        let mut r = rng(1);
        let mlp = Mlp::new(&mut r, 3, 4, 1, 2, Activation::Relu);
        for l in &mlp.layers {
            l.weight.update_data(|w| w.fill(0.0));
        }
        mlp.layers[0].bias.update_data(|b| b.fill(0.0));
        mlp.layers[1].bias.set_data(&[0.5, -0.25]);
        for trial in 0..3 {
            let x = Tensor::from_vec(vec![trial as f32, 1.0, -2.0], &[1, 3]);
            assert_eq!(mlp.forward(&x).to_vec(), vec![0.5, -0.25]);
        }
    }

    #[test]
    fn mlp_output_shape_contract() {
        let mut r = rng(2);
        let mlp = Mlp::new(&mut r, 17, 256, 2, 5, Activation::Relu);
        let x = Tensor::from_vec(vec![0.1; 32 * 17], &[32, 17]);
        assert_eq!(mlp.forward(&x).shape(), &[32, 5]);
    }

    #[test]
    #[should_panic(expected = "width mismatch")]
    fn mlp_rejects_wrong_input_width() {
        let mut r = rng(3);
        let mlp = Mlp::new(&mut r, 4, 8, 1, 2, Activation::Tanh);
        let x = Tensor::from_vec(vec![0.0; 6], &[2, 3]);
        mlp.forward(&x);
    }

    #[test]
    fn attention_single_token_is_value_projection() {
        let mut r = rng(4);
        let attn = CausalSelfAttention::new(&mut r, 8, 2);
        let x = Tensor::from_vec((0..8).map(|i| 0.1 * i as f32).collect(), &[1, 1, 8]);
        let y = attn.forward(&x);
        let v = attn.wo.forward(&attn.wv.forward(&x));
        let (yd, vd) = (y.to_vec(), v.to_vec());
        for (a, b) in yd.iter().zip(&vd) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn attention_is_causal_bitwise() {
        let mut r = rng(5);
        let attn = CausalSelfAttention::new(&mut r, 8, 2);
        let base: Vec<f32> = (0..4 * 8).map(|i| (i as f32 * 0.37).sin()).collect();
        let x = Tensor::from_vec(base.clone(), &[1, 4, 8]);
        let y0 = attn.forward(&x).to_vec();
        let mut perturbed = base;
        for v in &mut perturbed[2 * 8..] {
            *v += 3.0;
        }
        let y1 = attn.forward(&Tensor::from_vec(perturbed, &[1, 4, 8])).to_vec();
        // positions 0 and 1 must be bit-identical
        assert_eq!(y0[..2 * 8], y1[..2 * 8]);
    }

    #[test]
    #[should_panic(expected = "not divisible")]
    fn attention_rejects_bad_head_count() {
        let mut r = rng(6);
        CausalSelfAttention::new(&mut r, 6, 4);
    }

    #[test]
    fn standard_normal_log_prob_at_zero() {
        let mean = Tensor::from_vec(vec![0.0], &[1, 1]);
        let log_std = Tensor::from_vec(vec![0.0], &[1, 1]);
        let action = Tensor::from_vec(vec![0.0], &[1, 1]);
        let lp = gaussian_log_prob(&mean, &log_std, &action).item();
        let expected = -0.5 * (2.0 * PI).ln();
        assert!((lp - expected).abs() < 1e-6);
    }

    #[test]
    fn squashed_equals_unsquashed_minus_correction() {
        let mut r = rng(7);
        let mean = normal_noise(&mut r, &[4, 3], 0.5);
        let log_std = normal_noise(&mut r, &[4, 3], 0.3);
        let pre = normal_noise(&mut r, &[4, 3], 1.0);
        let squashed = squashed_log_prob_from_pre_tanh(&mean, &log_std, &pre).to_vec();
        let base = gaussian_log_prob(&mean, &log_std, &pre).to_vec();
        let pd = pre.to_vec();
        for row in 0..4 {
            let mut corr = 0.0f32;
            for c in 0..3 {
                let t = pd[row * 3 + c].tanh();
                corr += (1.0 - t * t + TANH_EPS).ln();
            }
            assert!((squashed[row] - (base[row] - corr)).abs() < 1e-5);
        }
    }

    #[test]
    #[should_panic(expected = "inside (-1, 1)")]
    fn squashed_log_prob_rejects_out_of_range_action() {
        let mean = Tensor::from_vec(vec![0.0], &[1, 1]);
        let log_std = Tensor::from_vec(vec![0.0], &[1, 1]);
        let action = Tensor::from_vec(vec![1.5], &[1, 1]);
        squashed_log_prob(&mean, &log_std, &action);
    }

    #[test]
    fn input_gradient_matches_backward_pass() {
        let mut r = rng(8);
        let mlp = Mlp::new(&mut r, 3, 5, 2, 1, Activation::Relu);
        let x = Tensor::param(vec![0.3, -0.7, 1.1, 0.2, 0.9, -0.4], &[2, 3]);
        mlp.forward(&x).sum_all().backward();
        let via_backward = x.grad().unwrap();
        let via_forward = mlp.input_gradient(&x).to_vec();
        for (a, b) in via_backward.iter().zip(&via_forward) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}
