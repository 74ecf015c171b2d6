//! Cast-prediction ranking: score every actor for a (movie, persona) query
//! and locate the ground truth.

use std::collections::{HashMap, HashSet};

use crate::data::{Dataset, PersonaDescriptor};
use crate::error::Result;
use crate::invalid;
use crate::params::ModelParams;
use crate::similarity::cast_similarity;
use crate::transe::TransEParams;

/// Anything that can score a (movie, descriptor, actor) query. Higher is
/// better for all implementations.
pub trait CastScorer {
    fn score(&self, movie: usize, desc: &PersonaDescriptor, actor: usize) -> f64;
    fn n_actors(&self) -> usize;
}

impl CastScorer for ModelParams {
    fn score(&self, movie: usize, desc: &PersonaDescriptor, actor: usize) -> f64 {
        cast_similarity(
            self,
            crate::data::EntityId::movie(movie),
            desc,
            crate::data::EntityId::actor(actor),
        )
        .expect("valid ids")
    }

    fn n_actors(&self) -> usize {
        self.actors.len()
    }
}

impl CastScorer for TransEParams {
    fn score(&self, movie: usize, desc: &PersonaDescriptor, actor: usize) -> f64 {
        self.score_triple(movie, desc, actor)
    }

    fn n_actors(&self) -> usize {
        self.actors.len()
    }
}

/// Rank of the truth among scored candidates: one plus the number of
/// candidates scoring strictly higher, so ties never penalize the truth.
pub fn rank_from_scores(scores: &[f64], truth: usize) -> usize {
    let s = scores[truth];
    1 + scores.iter().filter(|&&x| x > s).count()
}

/// Known-true actors per (movie, descriptor) query, for filtered ranking.
pub fn known_true_actors(d: &Dataset) -> HashMap<(usize, PersonaDescriptor), HashSet<usize>> {
    let mut map: HashMap<(usize, PersonaDescriptor), HashSet<usize>> = HashMap::new();
    for t in &d.triples {
        map.entry((t.movie.index, t.persona)).or_default().insert(t.actor.index);
    }
    map
}

/// Rank all actors for the query and return the truth's position. In
/// filtered mode, `exclude` lists other known-true actors for the query;
/// they are removed from the candidate list before ranking.
pub fn rank_candidates<S: CastScorer + ?Sized>(
    scorer: &S,
    movie: usize,
    desc: &PersonaDescriptor,
    truth: usize,
    exclude: Option<&HashSet<usize>>,
) -> usize {
    let s_truth = scorer.score(movie, desc, truth);
    let mut higher = 0usize;
    for a in 0..scorer.n_actors() {
        if a == truth {
            continue;
        }
        if let Some(ex) = exclude {
            if ex.contains(&a) {
                continue;
            }
        }
        if scorer.score(movie, desc, a) > s_truth {
            higher += 1;
        }
    }
    1 + higher
}

/// Mean rank plus the percentage of ranks at or under `k`.
pub fn mean_rank_hits(ranks: &[usize], k: usize) -> Result<(f64, f64)> {
    if ranks.is_empty() {
        return Err(invalid!("no ranks to aggregate"));
    }
    let mean = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
    let hits = ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64 * 100.0;
    Ok((mean, hits))
}

/// Cast-prediction evaluation over a query list.
#[derive(Debug, Clone)]
pub struct RankResult {
    pub ranks: Vec<usize>,
    pub mean_rank: f64,
    pub hits_at_k: f64,
    pub k: usize,
}

pub fn evaluate_cast<S: CastScorer>(
    scorer: &S,
    queries: &[(usize, PersonaDescriptor, usize)],
    filtered: Option<&HashMap<(usize, PersonaDescriptor), HashSet<usize>>>,
    k: usize,
) -> Result<RankResult> {
    let mut ranks = Vec::with_capacity(queries.len());
    for (movie, desc, truth) in queries {
        let exclude = filtered.and_then(|m| m.get(&(*movie, *desc)));
        ranks.push(rank_candidates(scorer, *movie, desc, *truth, exclude));
    }
    let (mean_rank, hits_at_k) = mean_rank_hits(&ranks, k)?;
    Ok(RankResult { ranks, mean_rank, hits_at_k, k })
}
