//! Toy control tasks standing in for the usual physics benchmarks: a
//! pendulum swing-up with dense rewards (`swing`) and two sparse-success
//! point mazes (`pointmaze-u`, `pointmaze-medium`), each with a scripted
//! expert, seeded dataset generation in the familiar flavors, and frozen
//! random/expert reference scores for normalization.

mod dataset;
mod pointmaze;
mod registry;
mod swing;
mod types;

pub use dataset::{generate_dataset, DatasetMeta, Flavor, OfflineDataset};
pub use pointmaze::PointMazeEnv;
pub use registry::{
    estimate_reference_scores, make_dataset, make_env, reference_scores, task_names, task_spec,
    REFERENCE_ESTIMATION_EPISODES, REFERENCE_ESTIMATION_SEED,
};
pub use swing::SwingEnv;
pub use types::{Environment, RewardKind, StepResult, TaskError, TaskSpec, Transition};

/// Mean episode return of a policy over `episodes` rollouts; the estimator
/// behind the frozen reference scores.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    mut policy: impl FnMut(&mut dyn Environment, &[f32]) -> Vec<f32>,
    episodes: usize,
    seed: u64,
) -> f64 {
    let mut total = 0.0f64;
    for ep in 0..episodes {
        let mut obs = env.reset(seed.wrapping_add(ep as u64));
        loop {
            let action = policy(env, &obs);
            let step = env.step(&action).expect("rollout stepped a finished episode");
            total += step.reward as f64;
            if step.terminal || step.timeout {
                break;
            }
            obs = step.obs;
        }
    }
    total / episodes as f64
}

/// Uniform random policy over the action box.
pub fn random_policy(rng: &mut impl rand::Rng, act_dim: usize) -> Vec<f32> {
    (0..act_dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}
