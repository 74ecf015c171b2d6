//! Cast-prediction metrics, versatility scoring and agreement, heuristic
//! baselines, significance tests, and nearest-neighbor queries.

mod nmf;
mod ranking;
mod stats;
mod versatility;

pub use nmf::{dominant_topics, nmf_topics, reconstruction_error};
pub use ranking::{
    evaluate_cast, known_true_actors, mean_rank_hits, rank_candidates, rank_from_scores,
    CastScorer, RankResult,
};
pub use stats::{binomial_test_greater, one_tailed_p, welch_t_test};
pub use versatility::{
    entropy, entropy_baseline, pairwise_accuracy, rank_correlation, spearman, versatility_score,
    versatility_scores,
};

use crate::data::EntityId;
use crate::error::Result;
use crate::invalid;
use crate::params::ModelParams;
use crate::similarity::log_overlap;

/// Rank every other actor by persona-free actor-to-actor similarity,
/// descending; ties break on the lower index. Rankings are not symmetric
/// between two actors in general.
pub fn nearest_neighbors(
    params: &ModelParams,
    a: EntityId,
    top_n: usize,
) -> Result<Vec<(EntityId, usize)>> {
    let idx = a.expect_kind(crate::data::EntityKind::Actor)?;
    let me = params
        .actors
        .get(idx)
        .ok_or_else(|| invalid!("actor index {idx} out of range"))?;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(params.actors.len().saturating_sub(1));
    for (b, other) in params.actors.iter().enumerate() {
        if b == idx {
            continue;
        }
        scored.push((b, log_overlap(&me.mean, &me.var, &other.mean, &other.var)?));
    }
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite").then(x.0.cmp(&y.0)));
    Ok(scored
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, (b, _))| (EntityId::actor(b), i + 1))
        .collect())
}
