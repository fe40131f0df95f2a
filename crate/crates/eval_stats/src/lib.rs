//! Evaluation statistics and reporting: normalized scores, last/best
//! aggregation tables, performance profiles, probability of improvement,
//! cumulative regret, bootstrap confidence intervals and CSV/SVG/JSON
//! report emission.

mod curves;
mod matrix;
mod report;

pub use curves::{bootstrap_ci, cumulative_regret, performance_profile, prob_improvement};
pub use matrix::{aggregate, AggregateMode, Cell, ReportTable, ScoreMatrix, TableRow};
pub use report::{emit_report, svg_line_chart, ReportInputs, SeriesPlot};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("degenerate reference scores: expert must exceed random")]
    DegenerateReferences,
    #[error("empty score set")]
    EmptyScores,
    #[error("empty series")]
    EmptySeries,
    #[error("task sets do not match: {0}")]
    TaskMismatch(String),
    #[error("need at least {needed} values, got {got}")]
    NotEnoughValues { needed: usize, got: usize },
    #[error("seeds disagree on checkpoint count for ({0}, {1})")]
    NonRectangular(String, String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// 100 * (raw - random) / (expert - random); unbounded on both sides.
pub fn normalized_score(raw: f64, s_random: f64, s_expert: f64) -> Result<f64, StatsError> {
    if s_expert <= s_random {
        return Err(StatsError::DegenerateReferences);
    }
    Ok(100.0 * (raw - s_random) / (s_expert - s_random))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_anchors() {
        assert_eq!(normalized_score(-100.0, -100.0, 0.0).unwrap(), 0.0);
        assert_eq!(normalized_score(0.0, -100.0, 0.0).unwrap(), 100.0);
        assert_eq!(normalized_score(-50.0, -100.0, 0.0).unwrap(), 50.0);
        // scores may leave [0, 100]
        assert!(normalized_score(50.0, -100.0, 0.0).unwrap() > 100.0);
        assert!(normalized_score(-150.0, -100.0, 0.0).unwrap() < 0.0);
    }

    #[test]
    fn degenerate_references_rejected() {
        assert!(normalized_score(1.0, 5.0, 5.0).is_err());
        assert!(normalized_score(1.0, 5.0, 4.0).is_err());
    }
}
