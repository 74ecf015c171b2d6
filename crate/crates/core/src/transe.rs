//! Point-vector translation baseline for cast prediction, trained with the
//! same hinge, sampling, and schedule machinery as the Gaussian model.
//!
//! Entities are unit-norm vectors. Every distinct persona descriptor
//! combination seen in training gets one relation vector; unseen
//! combinations back off to a shared default relation, and movie-keyword
//! pairs use a dedicated has-keyword relation. Scores are negated distances
//! so that higher is better.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, PersonaDescriptor};
use crate::error::Result;
use crate::invalid;
use crate::train::{
    cosine_lr, hinge, sample_negative_actor, sample_negative_keyword, TrainConfig, TrainData,
    TrainItem, TrainReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// Negated translation distance `-|h + r - t|`; zero iff the translation is
/// exact.
pub fn transe_score(h: &[f64], r: &[f64], t: &[f64], norm: Norm) -> f64 {
    let mut acc = 0.0;
    for d in 0..h.len() {
        let delta = h[d] + r[d] - t[d];
        match norm {
            Norm::L1 => acc += delta.abs(),
            Norm::L2 => acc += delta * delta,
        }
    }
    match norm {
        Norm::L1 => -acc,
        Norm::L2 => -acc.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransEParams {
    pub dim: usize,
    pub norm: Norm,
    pub movies: Vec<Vec<f64>>,
    pub actors: Vec<Vec<f64>>,
    pub keywords: Vec<Vec<f64>>,
    /// Relation vectors for descriptor combinations, in first-seen order.
    pub persona_relations: Vec<(PersonaDescriptor, Vec<f64>)>,
    /// Fallback for descriptor combinations unseen in training.
    pub default_relation: Vec<f64>,
    /// Relation for movie-keyword pairs.
    pub keyword_relation: Vec<f64>,
    relation_index: HashMap<PersonaDescriptor, usize>,
}

impl TransEParams {
    pub fn relation_for(&self, desc: &PersonaDescriptor) -> &[f64] {
        match self.relation_index.get(desc) {
            Some(&i) => &self.persona_relations[i].1,
            None => &self.default_relation,
        }
    }

    /// Score a (movie, descriptor, actor) query.
    pub fn score_triple(&self, movie: usize, desc: &PersonaDescriptor, actor: usize) -> f64 {
        transe_score(&self.movies[movie], self.relation_for(desc), &self.actors[actor], self.norm)
    }

    pub fn score_pair(&self, movie: usize, keyword: usize) -> f64 {
        transe_score(&self.movies[movie], &self.keyword_relation, &self.keywords[keyword], self.norm)
    }

    pub fn rebuild_relation_index(relations: &[(PersonaDescriptor, Vec<f64>)]) -> HashMap<PersonaDescriptor, usize> {
        relations.iter().enumerate().map(|(i, (d, _))| (*d, i)).collect()
    }

    pub fn from_parts(
        dim: usize,
        norm: Norm,
        movies: Vec<Vec<f64>>,
        actors: Vec<Vec<f64>>,
        keywords: Vec<Vec<f64>>,
        persona_relations: Vec<(PersonaDescriptor, Vec<f64>)>,
        default_relation: Vec<f64>,
        keyword_relation: Vec<f64>,
    ) -> Self {
        let relation_index = Self::rebuild_relation_index(&persona_relations);
        TransEParams {
            dim,
            norm,
            movies,
            actors,
            keywords,
            persona_relations,
            default_relation,
            keyword_relation,
            relation_index,
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Gradient of `-|h + r - t|` with respect to (h, r, t): returns d/dh per
/// component; d/dr equals d/dh and d/dt is its negation.
fn score_grad_h(h: &[f64], r: &[f64], t: &[f64], norm: Norm) -> Vec<f64> {
    let dim = h.len();
    let delta: Vec<f64> = (0..dim).map(|d| h[d] + r[d] - t[d]).collect();
    match norm {
        Norm::L1 => delta.iter().map(|&x| -x.signum()).collect(),
        Norm::L2 => {
            let n = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                vec![0.0; dim]
            } else {
                delta.iter().map(|&x| -x / n).collect()
            }
        }
    }
}

struct SgdBuffers {
    movies: HashMap<usize, Vec<f64>>,
    actors: HashMap<usize, Vec<f64>>,
    keywords: HashMap<usize, Vec<f64>>,
    relations: HashMap<usize, Vec<f64>>, // persona_relations index
    default_rel: Option<Vec<f64>>,
    keyword_rel: Option<Vec<f64>>,
}

impl SgdBuffers {
    fn new() -> Self {
        SgdBuffers {
            movies: HashMap::new(),
            actors: HashMap::new(),
            keywords: HashMap::new(),
            relations: HashMap::new(),
            default_rel: None,
            keyword_rel: None,
        }
    }

    fn add(map: &mut HashMap<usize, Vec<f64>>, idx: usize, grad: &[f64], w: f64) {
        let entry = map.entry(idx).or_insert_with(|| vec![0.0; grad.len()]);
        for (a, g) in entry.iter_mut().zip(grad) {
            *a += w * g;
        }
    }

    fn add_opt(slot: &mut Option<Vec<f64>>, grad: &[f64], w: f64) {
        let entry = slot.get_or_insert_with(|| vec![0.0; grad.len()]);
        for (a, g) in entry.iter_mut().zip(grad) {
            *a += w * g;
        }
    }
}

/// Train the TransE baseline. Entities are renormalized to unit L2 norm
/// after every update. The report's variance extremes are NaN: the baseline
/// has no variances.
pub fn transe_train(
    dataset: &Dataset,
    dim: usize,
    tcfg: &TrainConfig,
) -> Result<(TransEParams, TrainReport)> {
    transe_train_with_norm(dataset, dim, tcfg, Norm::L2)
}

pub fn transe_train_with_norm(
    dataset: &Dataset,
    dim: usize,
    tcfg: &TrainConfig,
    norm: Norm,
) -> Result<(TransEParams, TrainReport)> {
    tcfg.validate()?;
    if dim == 0 {
        return Err(invalid!("dim must be positive"));
    }
    let data = TrainData::from_dataset(dataset);
    if data.items.is_empty() {
        return Err(invalid!("no training examples"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let scale = 6.0 / (dim as f64).sqrt();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> =
            (0..dim).map(|_| rng.random_range(-scale..=scale)).collect();
        normalize(&mut v);
        v
    };

    let mut movies: Vec<Vec<f64>> = (0..dataset.movies.len()).map(|_| draw(&mut rng)).collect();
    let mut actors: Vec<Vec<f64>> = (0..dataset.actors.len()).map(|_| draw(&mut rng)).collect();
    let mut keywords: Vec<Vec<f64>> =
        (0..dataset.keywords.len()).map(|_| draw(&mut rng)).collect();

    // One relation per descriptor combination seen in training.
    let mut relation_index: HashMap<PersonaDescriptor, usize> = HashMap::new();
    let mut persona_relations: Vec<(PersonaDescriptor, Vec<f64>)> = Vec::new();
    for item in &data.items {
        if let TrainItem::Triple(t) = item {
            if !relation_index.contains_key(&t.persona) {
                relation_index.insert(t.persona, persona_relations.len());
                persona_relations.push((t.persona, draw(&mut rng)));
            }
        }
    }
    let mut default_relation = draw(&mut rng);
    let mut keyword_relation = draw(&mut rng);

    let batches_per_epoch = data.items.len().div_ceil(tcfg.batch_size);
    let t_max = tcfg.epochs * batches_per_epoch;
    let mut items = data.items.clone();
    let mut loop_rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let w = 1.0 / tcfg.negatives_per_positive as f64;

    let mut report = TrainReport {
        loss_history: Vec::with_capacity(tcfg.epochs),
        eta_history: Vec::with_capacity(tcfg.epochs),
        epoch_ms: Vec::with_capacity(tcfg.epochs),
        skipped_examples: 0,
        var_min_seen: f64::NAN,
        var_max_seen: f64::NAN,
    };

    let mut t = 0usize;
    for _ in 0..tcfg.epochs {
        let started = std::time::Instant::now();
        items.shuffle(&mut loop_rng);
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        let mut eta = tcfg.eta0;
        for batch in items.chunks(tcfg.batch_size) {
            let mut buf = SgdBuffers::new();
            for item in batch {
                match item {
                    TrainItem::Pair(pair) => {
                        let m = pair.movie.index;
                        let k = pair.keyword.index;
                        let positives = match data.keyword_positives.get(&m) {
                            Some(p) if p.len() < data.n_keywords => p,
                            _ => {
                                report.skipped_examples += 1;
                                continue;
                            }
                        };
                        counted += 1;
                        let s_pos = transe_score(&movies[m], &keyword_relation, &keywords[k], norm);
                        for _ in 0..tcfg.negatives_per_positive {
                            let kn = sample_negative_keyword(positives, data.n_keywords, &mut loop_rng)
                                .expect("checked");
                            let s_neg =
                                transe_score(&movies[m], &keyword_relation, &keywords[kn], norm);
                            epoch_loss += w * hinge(s_pos, s_neg, tcfg.margin);
                            if hinge(s_pos, s_neg, tcfg.margin) > 0.0 {
                                // d loss = -dS_pos + dS_neg; dS/dr = dS/dh
                                // and dS/dt = -dS/dh.
                                let gp = score_grad_h(&movies[m], &keyword_relation, &keywords[k], norm);
                                let gn = score_grad_h(&movies[m], &keyword_relation, &keywords[kn], norm);
                                let head: Vec<f64> =
                                    gp.iter().zip(&gn).map(|(p, n)| -p + n).collect();
                                SgdBuffers::add(&mut buf.movies, m, &head, w);
                                SgdBuffers::add_opt(&mut buf.keyword_rel, &head, w);
                                SgdBuffers::add(&mut buf.keywords, k, &gp, w);
                                let neg_tail: Vec<f64> = gn.iter().map(|x| -x).collect();
                                SgdBuffers::add(&mut buf.keywords, kn, &neg_tail, w);
                            }
                        }
                    }
                    TrainItem::Triple(triple) => {
                        let m = triple.movie.index;
                        let a = triple.actor.index;
                        let positives = match data.actor_positives.get(&m) {
                            Some(p) if p.len() < data.n_actors => p,
                            _ => {
                                report.skipped_examples += 1;
                                continue;
                            }
                        };
                        counted += 1;
                        let rel_idx = relation_index[&triple.persona];
                        let rel = persona_relations[rel_idx].1.clone();
                        let s_pos = transe_score(&movies[m], &rel, &actors[a], norm);
                        for _ in 0..tcfg.negatives_per_positive {
                            let an = sample_negative_actor(positives, data.n_actors, &mut loop_rng)
                                .expect("checked");
                            let s_neg = transe_score(&movies[m], &rel, &actors[an], norm);
                            epoch_loss += w * hinge(s_pos, s_neg, tcfg.margin);
                            if hinge(s_pos, s_neg, tcfg.margin) > 0.0 {
                                let gp = score_grad_h(&movies[m], &rel, &actors[a], norm);
                                let gn = score_grad_h(&movies[m], &rel, &actors[an], norm);
                                let head: Vec<f64> =
                                    gp.iter().zip(&gn).map(|(p, n)| -p + n).collect();
                                SgdBuffers::add(&mut buf.movies, m, &head, w);
                                SgdBuffers::add(&mut buf.relations, rel_idx, &head, w);
                                SgdBuffers::add(&mut buf.actors, a, &gp, w);
                                let neg_tail: Vec<f64> = gn.iter().map(|x| -x).collect();
                                SgdBuffers::add(&mut buf.actors, an, &neg_tail, w);
                            }
                        }
                    }
                }
            }

            eta = cosine_lr(t, t_max, tcfg.eta0, tcfg.eta_min, tcfg.cosine_pi_variant);
            let apply = |v: &mut [f64], g: &[f64]| {
                for (x, gg) in v.iter_mut().zip(g) {
                    *x -= eta * gg;
                }
            };
            for (&i, g) in &buf.movies {
                apply(&mut movies[i], g);
                normalize(&mut movies[i]);
            }
            for (&i, g) in &buf.actors {
                apply(&mut actors[i], g);
                normalize(&mut actors[i]);
            }
            for (&i, g) in &buf.keywords {
                apply(&mut keywords[i], g);
                normalize(&mut keywords[i]);
            }
            for (&i, g) in &buf.relations {
                apply(&mut persona_relations[i].1, g);
            }
            if let Some(g) = &buf.default_rel {
                apply(&mut default_relation, g);
            }
            if let Some(g) = &buf.keyword_rel {
                apply(&mut keyword_relation, g);
            }
            t += 1;
        }
        report
            .loss_history
            .push(if counted > 0 { epoch_loss / counted as f64 } else { 0.0 });
        report.eta_history.push(eta);
        report.epoch_ms.push(started.elapsed().as_millis());
    }

    // Unseen descriptor combinations back off to the centroid of the
    // trained relations; the random init remains only when no triple
    // carried a persona at all.
    if !persona_relations.is_empty() {
        let mut mean = vec![0.0; dim];
        for (_, r) in &persona_relations {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= persona_relations.len() as f64;
        }
        default_relation = mean;
    }

    let params = TransEParams {
        dim,
        norm,
        movies,
        actors,
        keywords,
        persona_relations,
        default_relation,
        keyword_relation,
        relation_index,
    };
    Ok((params, report))
}

/// Sets of entity vectors that should stay unit-norm; exposed for tests.
pub fn entity_norms(params: &TransEParams) -> impl Iterator<Item = f64> + '_ {
    params
        .movies
        .iter()
        .chain(&params.actors)
        .chain(&params.keywords)
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
}
