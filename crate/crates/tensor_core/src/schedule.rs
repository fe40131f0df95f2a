//! Learning-rate schedules: constant, cosine decay, linear warmup.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant { base: f32 },
    /// base * 0.5 * (1 + cos(pi * step / total))
    CosineDecay { base: f32, total_steps: u64 },
    /// base * min(1, (step + 1) / warmup), then constant.
    LinearWarmup { base: f32, warmup_steps: u64, total_steps: u64 },
}

impl Schedule {
    /// Rate at `step`. Steps at or beyond the configured total clamp to the
    /// final value so eval hooks can query one step past the end.
    pub fn rate(&self, step: u64) -> f32 {
        match *self {
            Schedule::Constant { base } => base,
            Schedule::CosineDecay { base, total_steps } => {
                let s = step.min(total_steps) as f64;
                let t = total_steps.max(1) as f64;
                (base as f64 * 0.5 * (1.0 + (std::f64::consts::PI * s / t).cos())) as f32
            }
            Schedule::LinearWarmup { base, warmup_steps, total_steps } => {
                let _ = total_steps;
                if warmup_steps == 0 {
                    return base;
                }
                let frac = ((step + 1) as f64 / warmup_steps as f64).min(1.0);
                (base as f64 * frac) as f32
            }
        }
    }

    pub fn base(&self) -> f32 {
        match *self {
            Schedule::Constant { base }
            | Schedule::CosineDecay { base, .. }
            | Schedule::LinearWarmup { base, .. } => base,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_at_zero_is_base() {
        let s = Schedule::CosineDecay { base: 3e-4, total_steps: 1000 };
        assert_eq!(s.rate(0), 3e-4);
    }

    #[test]
    fn cosine_at_half_is_half_base() {
        let s = Schedule::CosineDecay { base: 1.0, total_steps: 1000 };
        assert!((s.rate(500) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn warmup_paper_value() {
        let s = Schedule::LinearWarmup { base: 8e-4, warmup_steps: 10_000, total_steps: 100_000 };
        assert!((s.rate(4999) - 8e-4 * 0.5).abs() < 1e-9);
        assert_eq!(s.rate(10_000), 8e-4);
        assert_eq!(s.rate(99_999), 8e-4);
    }

    #[test]
    fn cosine_is_non_increasing_and_positive() {
        let s = Schedule::CosineDecay { base: 1.0, total_steps: 333 };
        let mut last = f32::INFINITY;
        for step in 0..333 {
            let r = s.rate(step);
            assert!(r > 0.0, "rate must stay positive at step {step}");
            assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn warmup_is_non_decreasing_then_constant() {
        let s = Schedule::LinearWarmup { base: 1.0, warmup_steps: 50, total_steps: 100 };
        let mut last = 0.0f32;
        for step in 0..100 {
            let r = s.rate(step);
            assert!(r >= last);
            last = r;
        }
        assert_eq!(s.rate(99), 1.0);
    }

    #[test]
    fn beyond_total_clamps_to_final_value() {
        let s = Schedule::CosineDecay { base: 1.0, total_steps: 10 };
        assert_eq!(s.rate(10), s.rate(10_000));
    }
}
