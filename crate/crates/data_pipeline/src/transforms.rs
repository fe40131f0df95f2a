//! Pure dataset transforms.

use task_suite::OfflineDataset;

use crate::DataError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardScheme {
    None,
    /// r <- r - 1 (sparse tasks, most algorithms).
    MinusOne,
    /// r <- scale * r + shift; (10, -5) maps {0,1} onto {-5,5}.
    ScaleShift { scale: f32, shift: f32 },
}

impl RewardScheme {
    /// The conservative-critic preset for sparse tasks.
    pub fn sparse_scale_shift() -> RewardScheme {
        RewardScheme::ScaleShift { scale: 10.0, shift: -5.0 }
    }

    pub fn apply(&self, r: f32) -> f32 {
        match *self {
            RewardScheme::None => r,
            RewardScheme::MinusOne => r - 1.0,
            RewardScheme::ScaleShift { scale, shift } => scale * r + shift,
        }
    }

    pub fn invert(&self, r: f32) -> f32 {
        match *self {
            RewardScheme::None => r,
            RewardScheme::MinusOne => r + 1.0,
            RewardScheme::ScaleShift { scale, shift } => (r - shift) / scale,
        }
    }
}

/// Applies the reward scheme, leaving everything else untouched.
pub fn remap_rewards(dataset: &OfflineDataset, scheme: RewardScheme) -> OfflineDataset {
    let mut out = dataset.clone();
    for r in &mut out.rewards {
        *r = scheme.apply(*r);
    }
    out
}

/// Episodes split both at terminal|timeout flags and at `max_len`.
fn capped_episodes(dataset: &OfflineDataset, max_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (start, end) in dataset.episode_bounds() {
        let mut s = start;
        while end - s > max_len {
            out.push((s, s + max_len));
            s += max_len;
        }
        out.push((s, end));
    }
    out
}

/// Keeps the ceil(ratio * episodes) trajectories with the highest discounted
/// return (at least one), ties broken toward earlier episodes. Kept episodes
/// are re-flattened in their original order.
pub fn filter_top_fraction(
    dataset: &OfflineDataset,
    ratio: f64,
    discount: f64,
    max_len: usize,
) -> Result<OfflineDataset, DataError> {
    assert!(ratio > 0.0 && ratio <= 1.0, "ratio must be in (0, 1]");
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let episodes = capped_episodes(dataset, max_len);
    let mut returns: Vec<(usize, f64)> = episodes
        .iter()
        .enumerate()
        .map(|(i, &(s, e))| {
            let mut acc = 0.0f64;
            let mut w = 1.0f64;
            for r in &dataset.rewards[s..e] {
                acc += w * (*r as f64);
                w *= discount;
            }
            (i, acc)
        })
        .collect();
    returns.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let keep = ((ratio * episodes.len() as f64).ceil() as usize).clamp(1, episodes.len());
    let mut kept_idx: Vec<usize> = returns[..keep].iter().map(|&(i, _)| i).collect();
    kept_idx.sort_unstable();

    let mut out = OfflineDataset::empty(dataset.meta.clone());
    for i in kept_idx {
        let (s, e) = episodes[i];
        for t in s..e {
            out.push(&dataset.transition(t));
        }
    }
    out.meta.num_transitions = out.len();
    Ok(out)
}

/// RTG over one episode's rewards: RTG[t] = scale * sum_{k>=t} r_k.
pub fn rtg_for_episode(rewards: &[f32], scale: f32) -> Vec<f32> {
    let mut out = vec![0.0f32; rewards.len()];
    let mut acc = 0.0f32;
    for t in (0..rewards.len()).rev() {
        acc += rewards[t];
        out[t] = scale * acc;
    }
    out
}

/// Dataset-aligned returns-to-go, episode by episode.
pub fn returns_to_go(dataset: &OfflineDataset, scale: f32) -> Vec<f32> {
    let mut out = vec![0.0f32; dataset.len()];
    for (s, e) in dataset.episode_bounds() {
        let rtg = rtg_for_episode(&dataset.rewards[s..e], scale);
        out[s..e].copy_from_slice(&rtg);
    }
    out
}

/// Per-transition discounted return to the end of its episode:
/// G[t] = sum_{k>=t} discount^(k-t) r_k.
pub fn mc_returns(dataset: &OfflineDataset, discount: f64) -> Vec<f32> {
    let mut out = vec![0.0f32; dataset.len()];
    for (s, e) in dataset.episode_bounds() {
        let mut acc = 0.0f64;
        for t in (s..e).rev() {
            acc = dataset.rewards[t] as f64 + discount * acc;
            out[t] = acc as f32;
        }
    }
    out
}

/// Per-dimension observation mean/std, frozen from the offline dataset.
/// Stds are floored at 1e-3 so constant dimensions normalize to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormalizationStats {
    pub fn identity(dim: usize) -> NormalizationStats {
        NormalizationStats { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn from_dataset(dataset: &OfflineDataset) -> NormalizationStats {
        let dim = dataset.obs_dim();
        let n = dataset.len().max(1) as f64;
        let mut mean = vec![0.0f64; dim];
        for i in 0..dataset.len() {
            for (m, &o) in mean.iter_mut().zip(dataset.observation(i)) {
                *m += o as f64;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0f64; dim];
        for i in 0..dataset.len() {
            for (d, &o) in dataset.observation(i).iter().enumerate() {
                let c = o as f64 - mean[d];
                var[d] += c * c;
            }
        }
        let std = var.iter().map(|v| ((v / n).sqrt() as f32).max(1e-3)).collect();
        NormalizationStats { mean: mean.iter().map(|&m| m as f32).collect(), std }
    }

    pub fn normalize(&self, obs: &[f32]) -> Vec<f32> {
        obs.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&o, (&m, &s))| (o - m) / s)
            .collect()
    }

    /// In-place over a flat [n, dim] buffer.
    pub fn normalize_flat(&self, flat: &mut [f32]) {
        let dim = self.mean.len();
        for row in flat.chunks_exact_mut(dim) {
            for (o, (&m, &s)) in row.iter_mut().zip(self.mean.iter().zip(&self.std)) {
                *o = (*o - m) / s;
            }
        }
    }
}

/// Returns a copy with both observation arrays normalized.
pub fn normalize_dataset(dataset: &OfflineDataset, stats: &NormalizationStats) -> OfflineDataset {
    let mut out = dataset.clone();
    stats.normalize_flat(&mut out.observations);
    stats.normalize_flat(&mut out.next_observations);
    out
}
