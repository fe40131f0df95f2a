//! Reference-score audits: re-estimating the frozen registry constants with
//! fresh seeds must keep the normalized anchors where they belong.

use task_suite::*;

fn normalized(raw: f64, refs: (f64, f64)) -> f64 {
    100.0 * (raw - refs.0) / (refs.1 - refs.0)
}

#[test]
fn rerolled_random_policy_normalizes_near_zero() {
    for task in task_names() {
        let refs = reference_scores(task).unwrap();
        let (random, _) = estimate_reference_scores(task, 100, 20_260_101).unwrap();
        let score = normalized(random, refs);
        assert!(score.abs() < 2.0, "{task}: re-rolled random normalized to {score}");
    }
}

#[test]
fn rerolled_expert_normalizes_near_hundred() {
    for task in task_names() {
        let refs = reference_scores(task).unwrap();
        let (_, expert) = estimate_reference_scores(task, 100, 20_260_102).unwrap();
        let score = normalized(expert, refs);
        assert!((score - 100.0).abs() < 5.0, "{task}: re-rolled expert normalized to {score}");
    }
}

#[test]
fn frozen_constants_match_documented_estimation_run() {
    // The registry constants must reproduce from the documented seed.
    let (random, expert) =
        estimate_reference_scores("swing", REFERENCE_ESTIMATION_EPISODES, REFERENCE_ESTIMATION_SEED)
            .unwrap();
    let refs = reference_scores("swing").unwrap();
    assert!((random - refs.0).abs() < 1e-3, "random drifted: {random} vs {}", refs.0);
    assert!((expert - refs.1).abs() < 1e-3, "expert drifted: {expert} vs {}", refs.1);
}

#[test]
fn expert_dataset_return_close_to_reference() {
    let ds = make_dataset("swing", "expert", 5_000, 11).unwrap();
    let bounds = ds.episode_bounds();
    // ignore the trailing truncated episode, if any
    let full: Vec<_> = bounds.iter().filter(|(s, e)| e - s == 200).collect();
    assert!(!full.is_empty());
    let mean: f64 = full
        .iter()
        .map(|(s, e)| ds.rewards[*s..*e].iter().map(|&r| r as f64).sum::<f64>())
        .sum::<f64>()
        / full.len() as f64;
    let (_, expert) = reference_scores("swing").unwrap();
    assert!(
        (mean - expert).abs() / expert.abs() < 0.05,
        "expert dataset return {mean} deviates from reference {expert}"
    );
}
