//! Planted-structure data generator: a ground-truth world of cluster
//! centers, movies, actors with known versatility, and persona translations,
//! emitting relation data consistent with the planted similarities. Serves
//! as the oracle for end-to-end checks.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    discretize_age, Dataset, EntityId, Gender, Pair, PersonaDescriptor, Split, Triple, Vocab,
};
use crate::error::Result;
use crate::invalid;
use crate::params::{
    GaussianParam, ModelConfig, ModelParams, PersonaMode, PersonaVector,
};
use crate::similarity::{movie_keyword_similarity, persona_similarity};

/// Generation settings beyond the headline sizes.
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub n_movies: usize,
    pub n_actors: usize,
    pub n_keywords: usize,
    pub n_personae: usize,
    pub dim: usize,
    /// Number of role clusters the most versatile actors span. Half the
    /// actors are typecast (one cluster); the rest span this many.
    pub versatility_spread: usize,
    pub seed: u64,
    /// Cast slots sampled per movie.
    pub roles_per_movie: usize,
    /// Keywords sampled per movie.
    pub keywords_per_movie: usize,
    /// Softmax temperature for sampling casts and keywords from planted
    /// scores; lower concentrates on the top-scoring candidates.
    pub temperature: f64,
    pub split_ratios: (f64, f64, f64),
}

impl PlantedConfig {
    pub fn new(
        n_movies: usize,
        n_actors: usize,
        n_keywords: usize,
        n_personae: usize,
        dim: usize,
        versatility_spread: usize,
        seed: u64,
    ) -> Self {
        PlantedConfig {
            n_movies,
            n_actors,
            n_keywords,
            n_personae,
            dim,
            versatility_spread,
            seed,
            roles_per_movie: 3,
            keywords_per_movie: 3,
            temperature: 0.2,
            split_ratios: (0.70, 0.15, 0.15),
        }
    }
}

/// The ground truth: planted parameters, each actor's role-cluster spread,
/// and the emitted dataset (already split).
#[derive(Debug, Clone)]
pub struct PlantedWorld {
    pub truth: ModelParams,
    /// Distinct role clusters per actor; larger is more versatile.
    pub spreads: Vec<usize>,
    pub dataset: Dataset,
    pub config: PlantedConfig,
}

fn softmax_sample(rng: &mut ChaCha8Rng, scores: &[f64], temperature: f64) -> usize {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    scores.len() - 1
}

/// Build a planted world. Same arguments, same world.
pub fn generate_planted(cfg: &PlantedConfig) -> Result<PlantedWorld> {
    if cfg.n_movies < 2 || cfg.n_actors < 2 || cfg.n_keywords < 2 || cfg.n_personae < 2 {
        return Err(invalid!("all entity counts must be >= 2"));
    }
    if cfg.n_personae > crate::data::TOPIC_GROUPS {
        return Err(invalid!(
            "n_personae {} exceeds the topic-group vocabulary ({})",
            cfg.n_personae,
            crate::data::TOPIC_GROUPS
        ));
    }
    if cfg.versatility_spread == 0 {
        return Err(invalid!("versatility_spread must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.dim;
    let n_centers = cfg.versatility_spread.max(2);

    // Well-separated cluster centers.
    let centers: Vec<Vec<f64>> = (0..n_centers)
        .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();

    let model_cfg = ModelConfig {
        dim,
        spherical: false,
        persona_mode: PersonaMode::T,
        ..ModelConfig::default()
    };

    // Movies sit near their home center with a tight variance.
    let mut movies = Vec::with_capacity(cfg.n_movies);
    let mut movie_center = Vec::with_capacity(cfg.n_movies);
    for i in 0..cfg.n_movies {
        let c = i % n_centers;
        movie_center.push(c);
        let mean: Vec<f64> =
            centers[c].iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
        movies.push(GaussianParam { mean, var: vec![0.4; dim] });
    }

    // Typecast actors live at one center; versatile actors at the centroid
    // of `spread` centers, with variance grown by the centers' dispersion.
    let mut actors = Vec::with_capacity(cfg.n_actors);
    let mut spreads = Vec::with_capacity(cfg.n_actors);
    for i in 0..cfg.n_actors {
        let spread = if i < cfg.n_actors / 2 { 1 } else { cfg.versatility_spread };
        spreads.push(spread);
        let mut choices: Vec<usize> = (0..n_centers).collect();
        // Partial shuffle: pick `spread` distinct clusters.
        for j in 0..spread.min(n_centers) {
            let k = rng.random_range(j..n_centers);
            choices.swap(j, k);
        }
        let mine = &choices[..spread.min(n_centers)];
        let mut mean = vec![0.0; dim];
        for &c in mine {
            for (m, x) in mean.iter_mut().zip(&centers[c]) {
                *m += x / mine.len() as f64;
            }
        }
        for m in mean.iter_mut() {
            *m += rng.random_range(-0.2..0.2);
        }
        let mut dispersion = 0.0;
        for &c in mine {
            for (x, m) in centers[c].iter().zip(&mean) {
                dispersion += (x - m) * (x - m);
            }
        }
        dispersion /= (mine.len() * dim) as f64;
        let var = 0.4 + dispersion;
        actors.push(GaussianParam { mean, var: vec![var; dim] });
    }

    // Keywords tag centers, tightly.
    let mut keywords = Vec::with_capacity(cfg.n_keywords);
    for i in 0..cfg.n_keywords {
        let c = i % n_centers;
        let mean: Vec<f64> =
            centers[c].iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
        keywords.push(GaussianParam { mean, var: vec![0.4; dim] });
    }

    // Persona translations: meaningful offsets applied to movie means.
    let mut persona = PersonaVector::zeros(&model_cfg);
    for s in 0..cfg.n_personae {
        persona.topic_vecs[s] = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    }

    let truth = ModelParams { movies, actors, keywords, persona, config: model_cfg };

    // Emit casts: persona drawn per role, actor sampled by planted score.
    let movie_vocab = Vocab::from_names((0..cfg.n_movies).map(|i| format!("m{i:04}")));
    let actor_vocab = Vocab::from_names((0..cfg.n_actors).map(|i| format!("a{i:03}")));
    let keyword_vocab = Vocab::from_names((0..cfg.n_keywords).map(|i| format!("k{i:03}")));

    let mut triples = Vec::new();
    let mut seen_triples = HashSet::new();
    let mut pairs = Vec::new();
    let mut seen_pairs = HashSet::new();
    for m in 0..cfg.n_movies {
        for slot in 0..cfg.roles_per_movie {
            let topic = rng.random_range(0..cfg.n_personae);
            let desc = PersonaDescriptor::with_topic(topic);
            let scores: Vec<f64> = (0..cfg.n_actors)
                .map(|a| {
                    persona_similarity(&truth, EntityId::movie(m), &desc, EntityId::actor(a))
                        .expect("planted ids")
                })
                .collect();
            let actor = softmax_sample(&mut rng, &scores, cfg.temperature);
            // Structured but uninformative age/gender noise.
            let age_years = 20.0 + ((7 * m + 13 * actor + slot) % 80) as f64;
            let persona = PersonaDescriptor {
                topic_group: Some(topic),
                age_bucket: Some(discretize_age(age_years).expect("in range")),
                gender: Some(match actor % 3 {
                    0 => Gender::Female,
                    1 => Gender::Male,
                    _ => Gender::Other,
                }),
            };
            let triple = Triple {
                movie: EntityId::movie(m),
                actor: EntityId::actor(actor),
                persona,
                cast_rank: slot as u32 + 1,
            };
            if seen_triples.insert(triple) {
                triples.push(triple);
            }
        }
        for _ in 0..cfg.keywords_per_movie {
            let scores: Vec<f64> = (0..cfg.n_keywords)
                .map(|k| {
                    movie_keyword_similarity(&truth, EntityId::movie(m), EntityId::keyword(k))
                        .expect("planted ids")
                })
                .collect();
            let keyword = softmax_sample(&mut rng, &scores, cfg.temperature);
            let pair = Pair { movie: EntityId::movie(m), keyword: EntityId::keyword(keyword) };
            if seen_pairs.insert(pair) {
                pairs.push(pair);
            }
        }
    }

    let splits = vec![Split::Train; triples.len()];
    let dataset = Dataset {
        movies: movie_vocab,
        actors: actor_vocab,
        keywords: keyword_vocab,
        triples,
        pairs,
        splits,
    };
    let dataset = crate::data::split_triples(&dataset, cfg.split_ratios, cfg.seed ^ 0x5157)?;

    Ok(PlantedWorld { truth, spreads, dataset, config: cfg.clone() })
}

/// Expert-style pairs from the planted order: every actor pair with distinct
/// spreads, the wider spread winning, unanimous majority.
pub fn planted_expert_pairs(world: &PlantedWorld) -> Vec<crate::data::ExpertPair> {
    let mut out = Vec::new();
    for a in 0..world.spreads.len() {
        for b in (a + 1)..world.spreads.len() {
            if world.spreads[a] == world.spreads[b] {
                continue;
            }
            let (winner, loser) =
                if world.spreads[a] > world.spreads[b] { (a, b) } else { (b, a) };
            out.push(crate::data::ExpertPair { winner, loser, majority_count: 4 });
        }
    }
    out
}

/// End-to-end metrics of a trained model against the planted world:
/// cast-prediction mean rank on the held-out test triples and pairwise
/// versatility accuracy against the planted spread order.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub mean_rank: f64,
    pub hits_at_10: f64,
    pub versatility_accuracy: f64,
    pub test_queries: usize,
}

pub fn oracle_metrics<S: crate::eval::CastScorer>(
    world: &PlantedWorld,
    scorer: &S,
    versatility: Option<&std::collections::HashMap<usize, f64>>,
) -> Result<OracleReport> {
    let queries: Vec<(usize, PersonaDescriptor, usize)> = world
        .dataset
        .triples_with_split(Split::Test)
        .map(|t| (t.movie.index, t.persona, t.actor.index))
        .collect();
    if queries.is_empty() {
        return Err(invalid!("planted world has no test triples"));
    }
    let result = crate::eval::evaluate_cast(scorer, &queries, None, 10)?;

    let versatility_accuracy = match versatility {
        Some(scores) => {
            let pairs = planted_expert_pairs(world);
            if pairs.is_empty() {
                100.0
            } else {
                crate::eval::pairwise_accuracy(scores, &pairs)?
            }
        }
        None => f64::NAN,
    };

    Ok(OracleReport {
        mean_rank: result.mean_rank,
        hits_at_10: result.hits_at_k,
        versatility_accuracy,
        test_queries: queries.len(),
    })
}
