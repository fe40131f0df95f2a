//! Weighted uniform sampling of transition batches from datasets and replay
//! buffers, the mixing mechanism behind offline/online finetuning.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use task_suite::OfflineDataset;

use crate::{DataError, ReplayBuffer};

pub enum BatchSource<'a> {
    Dataset { data: &'a OfflineDataset, mc: Option<&'a [f32]> },
    Buffer(&'a ReplayBuffer),
}

impl BatchSource<'_> {
    fn len(&self) -> usize {
        match self {
            BatchSource::Dataset { data, .. } => data.len(),
            BatchSource::Buffer(b) => b.len(),
        }
    }
}

/// Column-major transition batch; terminals already mask timeouts out.
#[derive(Debug, Clone)]
pub struct TransitionBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub observations: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_observations: Vec<f32>,
    pub terminals: Vec<f32>,
    pub mc_returns: Vec<f32>,
    /// Which source each element came from (diagnostics, tests).
    pub source_ids: Vec<usize>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Draws `batch` transitions; element i comes from source j with probability
/// weight_j, then uniformly within the source.
pub fn sample_batch(
    sources: &[(BatchSource<'_>, f64)],
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TransitionBatch, DataError> {
    assert!(!sources.is_empty());
    let total: f64 = sources.iter().map(|(_, w)| w).sum();
    if sources.iter().any(|(_, w)| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(DataError::BadWeights(total));
    }
    for (i, (source, w)) in sources.iter().enumerate() {
        if *w > 0.0 && source.len() == 0 {
            return Err(DataError::EmptySource(i));
        }
    }
    let (obs_dim, act_dim) = match &sources[0].0 {
        BatchSource::Dataset { data, .. } => (data.obs_dim(), data.act_dim()),
        BatchSource::Buffer(b) => (b.obs_dim(), b.act_dim()),
    };

    let mut out = TransitionBatch {
        obs_dim,
        act_dim,
        observations: Vec::with_capacity(batch * obs_dim),
        actions: Vec::with_capacity(batch * act_dim),
        rewards: Vec::with_capacity(batch),
        next_observations: Vec::with_capacity(batch * obs_dim),
        terminals: Vec::with_capacity(batch),
        mc_returns: Vec::with_capacity(batch),
        source_ids: Vec::with_capacity(batch),
    };

    for _ in 0..batch {
        let mut pick = rng.gen::<f64>();
        let mut chosen = sources.len() - 1;
        for (i, (_, w)) in sources.iter().enumerate() {
            if pick < *w {
                chosen = i;
                break;
            }
            pick -= w;
        }
        let (source, _) = &sources[chosen];
        let idx = rng.gen_range(0..source.len());
        match source {
            BatchSource::Dataset { data, mc } => {
                out.observations.extend_from_slice(data.observation(idx));
                out.actions.extend_from_slice(data.action(idx));
                out.rewards.push(data.rewards[idx]);
                out.next_observations.extend_from_slice(data.next_observation(idx));
                // timeouts bootstrap: only true terminals mask the target
                out.terminals.push(if data.terminals[idx] != 0 { 1.0 } else { 0.0 });
                out.mc_returns.push(mc.map_or(0.0, |m| m[idx]));
            }
            BatchSource::Buffer(b) => {
                out.observations.extend_from_slice(b.observation(idx));
                out.actions.extend_from_slice(b.action(idx));
                out.rewards.push(b.reward(idx));
                out.next_observations.extend_from_slice(b.next_observation(idx));
                out.terminals.push(b.terminal(idx));
                out.mc_returns.push(b.mc_return(idx));
            }
        }
        out.source_ids.push(chosen);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn degenerate_weights_use_first_source_only() {
        let a = task_suite::make_dataset("swing", "random", 50, 0).unwrap();
        let b = task_suite::make_dataset("swing", "random", 50, 1).unwrap();
        let batch = sample_batch(
            &[
                (BatchSource::Dataset { data: &a, mc: None }, 1.0),
                (BatchSource::Dataset { data: &b, mc: None }, 0.0),
            ],
            64,
            &mut rng(0),
        )
        .unwrap();
        assert!(batch.source_ids.iter().all(|&s| s == 0));
    }

    #[test]
    fn half_half_mix_converges() {
        let a = task_suite::make_dataset("swing", "random", 100, 0).unwrap();
        let b = task_suite::make_dataset("swing", "random", 100, 1).unwrap();
        let batch = sample_batch(
            &[
                (BatchSource::Dataset { data: &a, mc: None }, 0.5),
                (BatchSource::Dataset { data: &b, mc: None }, 0.5),
            ],
            100_000,
            &mut rng(1),
        )
        .unwrap();
        let first = batch.source_ids.iter().filter(|&&s| s == 0).count() as f64 / 100_000.0;
        assert!((first - 0.5).abs() < 0.01, "first-source fraction {first}");

        // chi-square sanity with 1 dof: (o - e)^2/e summed over two bins
        let o0 = first * 100_000.0;
        let o1 = 100_000.0 - o0;
        let chi2 = (o0 - 50_000.0f64).powi(2) / 50_000.0 + (o1 - 50_000.0f64).powi(2) / 50_000.0;
        assert!(chi2 < 10.83, "chi-square {chi2} (p < 0.001 would exceed 10.83)");
    }

    #[test]
    fn single_element_batch_has_all_fields() {
        let a = task_suite::make_dataset("pointmaze-u", "random", 30, 0).unwrap();
        let batch =
            sample_batch(&[(BatchSource::Dataset { data: &a, mc: None }, 1.0)], 1, &mut rng(2)).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch.observations.len(), batch.obs_dim);
        assert_eq!(batch.actions.len(), batch.act_dim);
        assert_eq!(batch.next_observations.len(), batch.obs_dim);
        assert_eq!(batch.rewards.len(), 1);
        assert_eq!(batch.terminals.len(), 1);
        assert_eq!(batch.mc_returns.len(), 1);
    }

    #[test]
    fn empty_source_with_weight_errors() {
        let a = task_suite::make_dataset("swing", "random", 10, 0).unwrap();
        let empty = ReplayBuffer::new(8, 3, 1);
        let result = sample_batch(
            &[
                (BatchSource::Dataset { data: &a, mc: None }, 0.5),
                (BatchSource::Buffer(&empty), 0.5),
            ],
            16,
            &mut rng(3),
        );
        assert!(matches!(result, Err(DataError::EmptySource(1))));
    }

    #[test]
    fn bad_weights_error() {
        let a = task_suite::make_dataset("swing", "random", 10, 0).unwrap();
        let result =
            sample_batch(&[(BatchSource::Dataset { data: &a, mc: None }, 0.7)], 4, &mut rng(4));
        assert!(matches!(result, Err(DataError::BadWeights(_))));
    }

    #[test]
    fn buffer_and_dataset_mix_carries_mc_labels() {
        let ds = task_suite::make_dataset("pointmaze-u", "random", 40, 0).unwrap();
        let mc = crate::mc_returns(&ds, 0.99);
        let mut buf = ReplayBuffer::new(64, ds.obs_dim(), ds.act_dim());
        buf.preload(&ds, Some(&mc));
        let batch = sample_batch(
            &[
                (BatchSource::Dataset { data: &ds, mc: Some(&mc) }, 0.5),
                (BatchSource::Buffer(&buf), 0.5),
            ],
            256,
            &mut rng(5),
        )
        .unwrap();
        assert_eq!(batch.mc_returns.len(), 256);
    }
}
