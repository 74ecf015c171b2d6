//! Margin losses with negative sampling, dropout masks, RMSProp updates,
//! the cosine learning-rate schedule, and the epoch loop.
//!
//! Each positive pair or triple is matched against sampled negatives under a
//! hinge of margin `phi`; one dropout mask per example multiplies all mean
//! vectors (and the composed persona vector) on both sides of the hinge.
//! Negatives and masks are redrawn every epoch.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Pair, PersonaDescriptor, Split, Triple};
use crate::error::Result;
use crate::invalid;
use crate::params::{
    clip_variances, init_params, Family, GaussianParam, ModelConfig, ModelParams,
    PretrainedTable, VocabSizes,
};
use crate::similarity::{overlap_terms, reduce_var_grad};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta0: f64,
    pub eta_min: f64,
    pub margin: f64,
    pub dropout_keep: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
    /// Scale the cosine argument by pi so the schedule reaches `eta_min`
    /// exactly at the final mini-batch; the literal schedule stops at
    /// cos(1) of the range.
    pub cosine_pi_variant: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 600,
            batch_size: 128,
            eta0: 0.15,
            eta_min: 1e-4,
            margin: 4.0,
            dropout_keep: 0.6,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-8,
            negatives_per_positive: 1,
            seed: 42,
            cosine_pi_variant: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid!("batch_size must be >= 1"));
        }
        if !(self.eta0 > self.eta_min && self.eta_min >= 0.0) {
            return Err(invalid!(
                "need eta0 > eta_min >= 0, got eta0={} eta_min={}",
                self.eta0,
                self.eta_min
            ));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(invalid!("dropout_keep must lie in (0, 1], got {}", self.dropout_keep));
        }
        if self.negatives_per_positive == 0 {
            return Err(invalid!("negatives_per_positive must be >= 1"));
        }
        Ok(())
    }
}

/// Inverted-dropout mask: each component is `1/p0` with probability `p0`,
/// else 0, so masked means keep their expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub q: Vec<f64>,
}

pub fn draw_dropout_mask(p0: f64, dim: usize, rng: &mut ChaCha8Rng) -> DropoutMask {
    let q = (0..dim)
        .map(|_| if rng.random_bool(p0) { 1.0 / p0 } else { 0.0 })
        .collect();
    DropoutMask { q }
}

/// Hinge of the similarity gap: `max(0, phi - s_pos + s_neg)`.
#[inline]
pub fn hinge(s_pos: f64, s_neg: f64, phi: f64) -> f64 {
    (phi - s_pos + s_neg).max(0.0)
}

/// Cosine learning-rate schedule. The literal form evaluates `cos(t/T_max)`;
/// the pi variant evaluates `cos(pi t/T_max)` and ends at `eta_min`.
pub fn cosine_lr(t: usize, t_max: usize, eta0: f64, eta_min: f64, pi_variant: bool) -> f64 {
    if t_max == 0 {
        return eta0;
    }
    let mut x = t as f64 / t_max as f64;
    if pi_variant {
        x *= std::f64::consts::PI;
    }
    eta_min + 0.5 * (x.cos() + 1.0) * (eta0 - eta_min)
}

/// Uniform draw over ids in `[0, n)` that are not in `positives`, or `None`
/// when no valid candidate exists.
fn sample_excluding(
    n: usize,
    positives: &HashSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    if positives.len() >= n {
        return None;
    }
    loop {
        let c = rng.random_range(0..n);
        if !positives.contains(&c) {
            return Some(c);
        }
    }
}

/// Sample a keyword that does not co-occur with the movie in training data.
pub fn sample_negative_keyword(
    movie_positives: &HashSet<usize>,
    n_keywords: usize,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    sample_excluding(n_keywords, movie_positives, rng)
}

/// Sample an actor that appears in no training triple with the movie,
/// regardless of persona.
pub fn sample_negative_actor(
    movie_positives: &HashSet<usize>,
    n_actors: usize,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    sample_excluding(n_actors, movie_positives, rng)
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub enum TrainItem {
    Pair(Pair),
    Triple(Triple),
}

/// Training-set view of a dataset: the examples plus the per-movie positive
/// sets that constrain negative sampling.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub items: Vec<TrainItem>,
    pub keyword_positives: HashMap<usize, HashSet<usize>>,
    pub actor_positives: HashMap<usize, HashSet<usize>>,
    pub n_keywords: usize,
    pub n_actors: usize,
}

impl TrainData {
    /// All pairs (always training data) plus the Train-tagged triples.
    pub fn from_dataset(d: &Dataset) -> Self {
        let mut items: Vec<TrainItem> = d.pairs.iter().map(|p| TrainItem::Pair(*p)).collect();
        items.extend(d.triples_with_split(Split::Train).map(|t| TrainItem::Triple(*t)));
        TrainData {
            items,
            keyword_positives: d.keyword_positives(),
            actor_positives: d.actor_positives(),
            n_keywords: d.keywords.len(),
            n_actors: d.actors.len(),
        }
    }
}

/// Sparse gradient of one mini-batch: only parameters of entities that
/// appear in the batch carry entries.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub movies: HashMap<usize, GaussGrad>,
    pub actors: HashMap<usize, GaussGrad>,
    pub keywords: HashMap<usize, GaussGrad>,
    pub topic: HashMap<usize, Vec<f64>>,
    pub age: HashMap<usize, Vec<f64>>,
    pub gender: HashMap<usize, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GaussGrad {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussGrad {
    fn zeros_like(g: &GaussianParam) -> Self {
        GaussGrad { mean: vec![0.0; g.mean.len()], var: vec![0.0; g.var.len()] }
    }
}

impl Gradients {
    pub fn is_empty(&self) -> bool {
        self.movies.is_empty()
            && self.actors.is_empty()
            && self.keywords.is_empty()
            && self.topic.is_empty()
            && self.age.is_empty()
            && self.gender.is_empty()
    }

    fn family_table(&mut self, family: Family) -> &mut HashMap<usize, Vec<f64>> {
        match family {
            Family::Topic => &mut self.topic,
            Family::Age => &mut self.age,
            Family::Gender => &mut self.gender,
        }
    }
}

/// Adds `w * (sign contributions)` of one similarity's gradients into the
/// buffers. `d_gap`/`d_s` come from `overlap_terms` on the masked gap;
/// the chain rule through the mask multiplies mean gradients by `q`.
struct TermSide<'a> {
    movie: usize,
    other: usize,
    other_is_actor: bool,
    desc: Option<&'a PersonaDescriptor>,
}

#[allow(clippy::too_many_arguments)]
fn accumulate_term(
    grads: &mut Gradients,
    params: &ModelParams,
    side: &TermSide,
    q: &[f64],
    d_gap: &[f64],
    d_s: &[f64],
    sign: f64,
    w: f64,
) {
    let dim = params.dim();
    let movie_param = &params.movies[side.movie];
    let other_param = if side.other_is_actor {
        &params.actors[side.other]
    } else {
        &params.keywords[side.other]
    };

    let movie = grads
        .movies
        .entry(side.movie)
        .or_insert_with(|| GaussGrad::zeros_like(movie_param));
    for d in 0..dim {
        movie.mean[d] += sign * w * d_gap[d] * q[d];
    }
    for (acc, g) in movie.var.iter_mut().zip(reduce_var_grad(d_s, movie_param.is_spherical())) {
        *acc += sign * w * g;
    }

    let table = if side.other_is_actor { &mut grads.actors } else { &mut grads.keywords };
    let other = table
        .entry(side.other)
        .or_insert_with(|| GaussGrad::zeros_like(other_param));
    for d in 0..dim {
        other.mean[d] -= sign * w * d_gap[d] * q[d];
    }
    for (acc, g) in other.var.iter_mut().zip(reduce_var_grad(d_s, other_param.is_spherical())) {
        *acc += sign * w * g;
    }

    if let Some(desc) = side.desc {
        // The composed persona vector is masked with the movie mean, so its
        // gradient carries the same mask factor.
        let d_nu: Vec<f64> = (0..dim).map(|d| sign * w * d_gap[d] * q[d]).collect();
        params.persona.route_grad(desc, &d_nu, |family, index, piece| {
            let entry = grads
                .family_table(family)
                .entry(index)
                .or_insert_with(|| vec![0.0; piece.len()]);
            for (acc, g) in entry.iter_mut().zip(piece) {
                *acc += g;
            }
        });
    }
}

fn masked_gap(
    q: &[f64],
    left: &GaussianParam,
    nu: Option<&[f64]>,
    right: &GaussianParam,
) -> (Vec<f64>, Vec<f64>) {
    let dim = left.mean.len();
    let mut gap = Vec::with_capacity(dim);
    let mut s = Vec::with_capacity(dim);
    for d in 0..dim {
        let translate = nu.map_or(0.0, |v| v[d]);
        gap.push(q[d] * (left.mean[d] + translate - right.mean[d]));
        s.push(left.var_at(d) + right.var_at(d));
    }
    (gap, s)
}

static EMPTY_POSITIVES: std::sync::OnceLock<HashSet<usize>> = std::sync::OnceLock::new();

fn empty_positives() -> &'static HashSet<usize> {
    EMPTY_POSITIVES.get_or_init(HashSet::new)
}

/// Hinge loss of one mini-batch plus its sparse gradients. Per example, the
/// expectation over negatives is approximated by `negatives_per_positive`
/// draws (each weighted `1/k`); gradients flow only through terms with a
/// positive hinge. Returns the summed example losses and the count of
/// examples skipped for lack of a valid negative.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    data: &TrainData,
    batch: &[TrainItem],
    masks: &[DropoutMask],
    tcfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Gradients, usize)> {
    if batch.is_empty() {
        return Err(invalid!("empty batch"));
    }
    if batch.len() != masks.len() {
        return Err(invalid!("batch has {} items but {} masks", batch.len(), masks.len()));
    }

    let mut grads = Gradients::default();
    let mut loss = 0.0;
    let mut skipped = 0usize;
    let w = 1.0 / tcfg.negatives_per_positive as f64;

    for (item, mask) in batch.iter().zip(masks) {
        let q = &mask.q;
        match item {
            TrainItem::Pair(pair) => {
                let m = pair.movie.index;
                let kpos = pair.keyword.index;
                let positives = data.keyword_positives.get(&m).unwrap_or_else(|| empty_positives());
                if positives.len() >= data.n_keywords {
                    skipped += 1;
                    continue;
                }
                let movie = &params.movies[m];
                let (gap_p, s_p) = masked_gap(q, movie, None, &params.keywords[kpos]);
                let (s_pos, d_gap_p, d_s_p) = overlap_terms(&gap_p, &s_p);
                for _ in 0..tcfg.negatives_per_positive {
                    let kneg = sample_negative_keyword(positives, data.n_keywords, rng)
                        .expect("validity checked above");
                    let (gap_n, s_n) = masked_gap(q, movie, None, &params.keywords[kneg]);
                    let (s_neg, d_gap_n, d_s_n) = overlap_terms(&gap_n, &s_n);
                    let h = hinge(s_pos, s_neg, tcfg.margin);
                    loss += w * h;
                    if h > 0.0 {
                        let pos_side =
                            TermSide { movie: m, other: kpos, other_is_actor: false, desc: None };
                        let neg_side =
                            TermSide { movie: m, other: kneg, other_is_actor: false, desc: None };
                        accumulate_term(&mut grads, params, &pos_side, q, &d_gap_p, &d_s_p, -1.0, w);
                        accumulate_term(&mut grads, params, &neg_side, q, &d_gap_n, &d_s_n, 1.0, w);
                    }
                }
            }
            TrainItem::Triple(triple) => {
                let m = triple.movie.index;
                let apos = triple.actor.index;
                let positives = data.actor_positives.get(&m).unwrap_or_else(|| empty_positives());
                if positives.len() >= data.n_actors {
                    skipped += 1;
                    continue;
                }
                let movie = &params.movies[m];
                let nu = params.persona_vector(&triple.persona);
                let desc = Some(&triple.persona);
                let (gap_p, s_p) = masked_gap(q, movie, Some(&nu), &params.actors[apos]);
                let (s_pos, d_gap_p, d_s_p) = overlap_terms(&gap_p, &s_p);
                for _ in 0..tcfg.negatives_per_positive {
                    let aneg = sample_negative_actor(positives, data.n_actors, rng)
                        .expect("validity checked above");
                    let (gap_n, s_n) = masked_gap(q, movie, Some(&nu), &params.actors[aneg]);
                    let (s_neg, d_gap_n, d_s_n) = overlap_terms(&gap_n, &s_n);
                    let h = hinge(s_pos, s_neg, tcfg.margin);
                    loss += w * h;
                    if h > 0.0 {
                        let pos_side =
                            TermSide { movie: m, other: apos, other_is_actor: true, desc };
                        let neg_side =
                            TermSide { movie: m, other: aneg, other_is_actor: true, desc };
                        accumulate_term(&mut grads, params, &pos_side, q, &d_gap_p, &d_s_p, -1.0, w);
                        accumulate_term(&mut grads, params, &neg_side, q, &d_gap_n, &d_s_n, 1.0, w);
                    }
                }
            }
        }
    }

    Ok((loss, grads, skipped))
}

/// Running mean-square accumulators, one per parameter component.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    movies: Vec<GaussGrad>,
    actors: Vec<GaussGrad>,
    keywords: Vec<GaussGrad>,
    topic: Vec<Vec<f64>>,
    age: Vec<Vec<f64>>,
    gender: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = |table: &[GaussianParam]| table.iter().map(GaussGrad::zeros_like).collect();
        let vec_zeros =
            |table: &[Vec<f64>]| table.iter().map(|v| vec![0.0; v.len()]).collect();
        OptimizerState {
            movies: zeros(&params.movies),
            actors: zeros(&params.actors),
            keywords: zeros(&params.keywords),
            topic: vec_zeros(&params.persona.topic_vecs),
            age: vec_zeros(&params.persona.age_vecs),
            gender: vec_zeros(&params.persona.gender_vecs),
        }
    }
}

#[inline]
fn rmsprop_update(theta: &mut [f64], acc: &mut [f64], grad: &[f64], eta: f64, rho: f64, eps: f64) {
    for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(grad) {
        *a = rho * *a + (1.0 - rho) * g * g;
        *t -= eta * g / (*a + eps).sqrt();
    }
}

/// Apply one RMSProp step for every parameter with a gradient entry, then
/// clip variances back into the configured range. Untouched parameters (and
/// their accumulators) are left as they are.
pub fn rmsprop_step(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    grads: &Gradients,
    eta: f64,
    rho: f64,
    eps: f64,
) {
    for (&i, g) in &grads.movies {
        rmsprop_update(&mut params.movies[i].mean, &mut opt.movies[i].mean, &g.mean, eta, rho, eps);
        rmsprop_update(&mut params.movies[i].var, &mut opt.movies[i].var, &g.var, eta, rho, eps);
    }
    for (&i, g) in &grads.actors {
        rmsprop_update(&mut params.actors[i].mean, &mut opt.actors[i].mean, &g.mean, eta, rho, eps);
        rmsprop_update(&mut params.actors[i].var, &mut opt.actors[i].var, &g.var, eta, rho, eps);
    }
    for (&i, g) in &grads.keywords {
        rmsprop_update(
            &mut params.keywords[i].mean,
            &mut opt.keywords[i].mean,
            &g.mean,
            eta,
            rho,
            eps,
        );
        rmsprop_update(&mut params.keywords[i].var, &mut opt.keywords[i].var, &g.var, eta, rho, eps);
    }
    for (&i, g) in &grads.topic {
        rmsprop_update(&mut params.persona.topic_vecs[i], &mut opt.topic[i], g, eta, rho, eps);
    }
    for (&i, g) in &grads.age {
        rmsprop_update(&mut params.persona.age_vecs[i], &mut opt.age[i], g, eta, rho, eps);
    }
    for (&i, g) in &grads.gender {
        rmsprop_update(&mut params.persona.gender_vecs[i], &mut opt.gender[i], g, eta, rho, eps);
    }
    clip_variances(params);
}

/// Per-epoch training record.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean example loss per epoch.
    pub loss_history: Vec<f64>,
    /// Learning rate at the last mini-batch of each epoch.
    pub eta_history: Vec<f64>,
    /// Wall-clock milliseconds per epoch.
    pub epoch_ms: Vec<u128>,
    pub skipped_examples: usize,
    /// Extremes over all variance components observed after every step.
    pub var_min_seen: f64,
    pub var_max_seen: f64,
}

fn scan_var_bounds(params: &ModelParams, lo: &mut f64, hi: &mut f64) {
    for g in params.gaussians() {
        for &v in &g.var {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
}

fn scan_touched_var_bounds(params: &ModelParams, grads: &Gradients, lo: &mut f64, hi: &mut f64) {
    let tables = [
        (&grads.movies, &params.movies),
        (&grads.actors, &params.actors),
        (&grads.keywords, &params.keywords),
    ];
    for (touched, table) in tables {
        for &i in touched.keys() {
            for &v in &table[i].var {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
    }
}

/// Train a fresh Gaussian model on the dataset's training split.
///
/// The schedule horizon is the total mini-batch count over all epochs. Same
/// seed, same data: identical loss history and parameters.
pub fn train(
    dataset: &Dataset,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    pretrained: Option<&PretrainedTable>,
) -> Result<(ModelParams, TrainReport)> {
    let vocab = VocabSizes {
        movies: dataset.movies.len(),
        actors: dataset.actors.len(),
        keywords: dataset.keywords.len(),
    };
    let params = init_params(
        cfg,
        vocab,
        pretrained,
        Some(dataset.keywords.names()),
        tcfg.seed,
    )?;
    train_from(params, dataset, tcfg)
}

/// Run the epoch loop from existing parameters.
pub fn train_from(
    mut params: ModelParams,
    dataset: &Dataset,
    tcfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    tcfg.validate()?;
    let data = TrainData::from_dataset(dataset);
    if data.items.is_empty() {
        return Err(invalid!("no training examples"));
    }

    let dim = params.dim();
    let batches_per_epoch = data.items.len().div_ceil(tcfg.batch_size);
    let t_max = tcfg.epochs * batches_per_epoch;

    let mut opt = OptimizerState::new(&params);
    // The loop RNG stream is distinct from the init stream.
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut items = data.items.clone();

    let mut report = TrainReport {
        loss_history: Vec::with_capacity(tcfg.epochs),
        eta_history: Vec::with_capacity(tcfg.epochs),
        epoch_ms: Vec::with_capacity(tcfg.epochs),
        skipped_examples: 0,
        var_min_seen: f64::INFINITY,
        var_max_seen: f64::NEG_INFINITY,
    };
    scan_var_bounds(&params, &mut report.var_min_seen, &mut report.var_max_seen);

    let mut t = 0usize;
    for epoch in 0..tcfg.epochs {
        let started = Instant::now();
        items.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        let mut eta = tcfg.eta0;
        for batch in items.chunks(tcfg.batch_size) {
            let masks: Vec<DropoutMask> = batch
                .iter()
                .map(|_| draw_dropout_mask(tcfg.dropout_keep, dim, &mut rng))
                .collect();
            let (loss, grads, skipped) =
                batch_loss_and_grads(&params, &data, batch, &masks, tcfg, &mut rng)?;
            if !loss.is_finite() {
                return Err(invalid!(
                    "non-finite loss {loss} at epoch {epoch}, mini-batch {t}; \
                     try a smaller learning rate"
                ));
            }
            epoch_loss += loss;
            counted += batch.len() - skipped;
            report.skipped_examples += skipped;

            eta = cosine_lr(t, t_max, tcfg.eta0, tcfg.eta_min, tcfg.cosine_pi_variant);
            rmsprop_step(&mut params, &mut opt, &grads, eta, tcfg.rmsprop_decay, tcfg.rmsprop_eps);
            scan_touched_var_bounds(
                &params,
                &grads,
                &mut report.var_min_seen,
                &mut report.var_max_seen,
            );
            t += 1;
        }
        report.loss_history.push(if counted > 0 { epoch_loss / counted as f64 } else { 0.0 });
        report.eta_history.push(eta);
        report.epoch_ms.push(started.elapsed().as_millis());
    }

    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EntityId, Gender};
    use crate::params::{Composition, PersonaMode};
    use crate::similarity::persona_similarity;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(-1.0, -10.0, 4.0), 0.0);
        assert_eq!(hinge(-3.0, -3.0, 4.0), 4.0);
        assert_eq!(hinge(-5.0, -3.0, 4.0), 6.0);
    }

    #[test]
    fn negative_keyword_forced_choice() {
        let positives: HashSet<usize> = [0].into_iter().collect();
        let mut r = rng(1);
        for _ in 0..50 {
            assert_eq!(sample_negative_keyword(&positives, 2, &mut r), Some(1));
        }
    }

    #[test]
    fn negative_sampler_respects_positives() {
        let positives: HashSet<usize> = [1, 3, 5].into_iter().collect();
        let mut r = rng(2);
        for _ in 0..100_000 {
            let k = sample_negative_keyword(&positives, 8, &mut r).unwrap();
            assert!(!positives.contains(&k));
        }
    }

    #[test]
    fn negative_sampler_exhausted() {
        let positives: HashSet<usize> = [0, 1].into_iter().collect();
        let mut r = rng(3);
        assert_eq!(sample_negative_actor(&positives, 2, &mut r), None);
    }

    #[test]
    fn negative_sampler_uniform_chi_squared() {
        // 5 valid candidates out of 8; chi-squared goodness of fit at
        // alpha = 0.01 over 50k draws.
        let positives: HashSet<usize> = [2, 4, 6].into_iter().collect();
        let n = 8usize;
        let draws = 50_000usize;
        let mut counts = vec![0usize; n];
        let mut r = rng(4);
        for _ in 0..draws {
            counts[sample_negative_keyword(&positives, n, &mut r).unwrap()] += 1;
        }
        let valid: Vec<usize> = (0..n).filter(|i| !positives.contains(i)).collect();
        let expected = draws as f64 / valid.len() as f64;
        let stat: f64 = valid
            .iter()
            .map(|&i| {
                let d = counts[i] as f64 - expected;
                d * d / expected
            })
            .sum();
        let critical = ChiSquared::new((valid.len() - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(stat < critical, "chi2 {stat} >= {critical}");
    }

    #[test]
    fn dropout_mask_no_dropout() {
        let m = draw_dropout_mask(1.0, 6, &mut rng(5));
        assert_eq!(m.q, vec![1.0; 6]);
    }

    #[test]
    fn dropout_mask_values_and_mean() {
        let mut r = rng(6);
        let mut sum = 0.0;
        let draws = 1_000_000usize;
        for _ in 0..draws {
            let m = draw_dropout_mask(0.5, 1, &mut r);
            assert!(m.q[0] == 0.0 || m.q[0] == 2.0);
            sum += m.q[0];
        }
        let mean = sum / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "inverted dropout mean {mean}");
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 0.15, 1e-4, false), 0.15);
        assert_eq!(cosine_lr(0, 100, 0.15, 1e-4, true), 0.15);
        // Literal form at t = T_max: eta_min + (cos(1)+1)/2 * range.
        let expected = 1e-4 + 0.5 * (1.0f64.cos() + 1.0) * (0.15 - 1e-4);
        let got = cosine_lr(100, 100, 0.15, 1e-4, false);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.115_545_66).abs() < 1e-6);
        // Pi variant ends exactly at eta_min.
        let end = cosine_lr(100, 100, 0.15, 1e-4, true);
        assert!((end - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn cosine_schedule_monotone() {
        for pi in [false, true] {
            let mut prev = f64::INFINITY;
            for t in 0..=200 {
                let eta = cosine_lr(t, 200, 0.3, 0.001, pi);
                assert!(eta <= prev + 1e-15);
                prev = eta;
            }
        }
    }

    fn toy_dataset() -> Dataset {
        // Two movies with opposite roles: a0 plays persona 0 in m0, a1 plays
        // persona 1 in m1, so each movie has exactly one valid negative
        // actor.
        let movies = crate::data::Vocab::from_names(["m0".into(), "m1".into()]);
        let actors = crate::data::Vocab::from_names(["a0".into(), "a1".into()]);
        let keywords = crate::data::Vocab::from_names(["k0".into(), "k1".into()]);
        let triples = vec![
            Triple {
                movie: EntityId::movie(0),
                actor: EntityId::actor(0),
                persona: PersonaDescriptor::with_topic(0),
                cast_rank: 1,
            },
            Triple {
                movie: EntityId::movie(1),
                actor: EntityId::actor(1),
                persona: PersonaDescriptor::with_topic(1),
                cast_rank: 1,
            },
        ];
        let pairs = vec![
            Pair { movie: EntityId::movie(0), keyword: EntityId::keyword(0) },
            Pair { movie: EntityId::movie(1), keyword: EntityId::keyword(1) },
        ];
        let splits = vec![Split::Train; triples.len()];
        Dataset { movies, actors, keywords, triples, pairs, splits }
    }

    fn toy_cfg(dim: usize) -> (ModelConfig, TrainConfig) {
        let cfg = ModelConfig { dim, persona_mode: PersonaMode::T, ..ModelConfig::default() };
        let tcfg = TrainConfig {
            epochs: 80,
            batch_size: 8,
            eta0: 0.05,
            eta_min: 1e-4,
            dropout_keep: 1.0,
            seed: 11,
            ..TrainConfig::default()
        };
        (cfg, tcfg)
    }

    #[test]
    fn satisfied_margins_give_zero_loss_and_grads() {
        let d = toy_dataset();
        let (cfg, tcfg) = toy_cfg(2);
        let tcfg = TrainConfig { margin: 0.0, ..tcfg };
        let mut params = init_params(
            &cfg,
            VocabSizes { movies: 2, actors: 2, keywords: 2 },
            None,
            None,
            1,
        )
        .unwrap();
        // Distinct, far-apart clusters: positives overlap tightly, any
        // negative is far, so even margin 0 is satisfied... except margin 0
        // with equal scores is still loss 0. Use strongly separated means.
        params.movies[0].mean = vec![10.0, 0.0];
        params.keywords[0].mean = vec![10.0, 0.0];
        params.actors[0].mean = vec![10.0, 1.0];
        params.movies[1].mean = vec![-10.0, 0.0];
        params.keywords[1].mean = vec![-10.0, 0.0];
        params.actors[1].mean = vec![-10.0, 1.0];
        params.persona.topic_vecs[0] = vec![0.0, 1.0];
        params.persona.topic_vecs[1] = vec![0.0, 1.0];
        let data = TrainData::from_dataset(&d);
        let masks: Vec<DropoutMask> =
            data.items.iter().map(|_| DropoutMask { q: vec![1.0, 1.0] }).collect();
        let (loss, grads, skipped) =
            batch_loss_and_grads(&params, &data, &data.items, &masks, &tcfg, &mut rng(7)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.is_empty());
        assert_eq!(skipped, 0);
    }

    #[test]
    fn violated_pair_gradient_matches_chain_rule() {
        // One movie, one positive keyword, one possible negative; check the
        // accumulated gradient against finite differences of the hinge.
        let movies = crate::data::Vocab::from_names(["m".into()]);
        let actors = crate::data::Vocab::from_names(["a".into()]);
        let keywords = crate::data::Vocab::from_names(["kp".into(), "kn".into()]);
        let pairs = vec![Pair { movie: EntityId::movie(0), keyword: EntityId::keyword(0) }];
        let d = Dataset {
            movies,
            actors,
            keywords,
            triples: vec![],
            pairs,
            splits: vec![],
        };
        let cfg = ModelConfig { dim: 2, spherical: false, ..ModelConfig::default() };
        let tcfg = TrainConfig { margin: 4.0, dropout_keep: 1.0, ..TrainConfig::default() };
        let params = init_params(
            &cfg,
            VocabSizes { movies: 1, actors: 1, keywords: 2 },
            None,
            None,
            9,
        )
        .unwrap();
        let data = TrainData::from_dataset(&d);
        let mask = DropoutMask { q: vec![1.0, 1.0] };

        let loss_at = |params: &ModelParams| -> f64 {
            let (loss, _, _) = batch_loss_and_grads(
                params,
                &data,
                &data.items,
                std::slice::from_ref(&mask),
                &tcfg,
                &mut rng(10),
            )
            .unwrap();
            loss
        };
        let (loss, grads, _) = batch_loss_and_grads(
            &params,
            &data,
            &data.items,
            std::slice::from_ref(&mask),
            &tcfg,
            &mut rng(10),
        )
        .unwrap();
        assert!(loss > 0.0);

        let h = 1e-6;
        let g = &grads.movies[&0];
        for dmn in 0..2 {
            let mut plus = params.clone();
            plus.movies[0].mean[dmn] += h;
            let mut minus = params.clone();
            minus.movies[0].mean[dmn] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            assert!((g.mean[dmn] - numeric).abs() < 1e-5, "{} vs {numeric}", g.mean[dmn]);
        }
        let gk = &grads.keywords[&0];
        for dmn in 0..2 {
            let mut plus = params.clone();
            plus.keywords[0].mean[dmn] += h;
            let mut minus = params.clone();
            minus.keywords[0].mean[dmn] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            assert!((gk.mean[dmn] - numeric).abs() < 1e-5);
        }
    }

    #[test]
    fn loss_decomposes_into_pair_and_triple_parts() {
        let d = toy_dataset();
        let (cfg, tcfg) = toy_cfg(3);
        let params = init_params(
            &cfg,
            VocabSizes { movies: 2, actors: 2, keywords: 2 },
            None,
            None,
            2,
        )
        .unwrap();
        let data = TrainData::from_dataset(&d);
        let pairs_only: Vec<TrainItem> = data
            .items
            .iter()
            .filter(|i| matches!(i, TrainItem::Pair(_)))
            .copied()
            .collect();
        let triples_only: Vec<TrainItem> = data
            .items
            .iter()
            .filter(|i| matches!(i, TrainItem::Triple(_)))
            .copied()
            .collect();
        let ordered: Vec<TrainItem> =
            pairs_only.iter().chain(&triples_only).copied().collect();
        let mut r = rng(12);
        let masks: Vec<DropoutMask> = ordered
            .iter()
            .map(|_| draw_dropout_mask(0.6, 3, &mut r))
            .collect();

        let mut r_all = rng(13);
        let (l_all, _, _) =
            batch_loss_and_grads(&params, &data, &ordered, &masks, &tcfg, &mut r_all).unwrap();

        // Sequential processing means the combined run equals the pair run
        // followed by the triple run on the continued RNG stream.
        let mut r_split = rng(13);
        let (l_mk, _, _) = batch_loss_and_grads(
            &params,
            &data,
            &pairs_only,
            &masks[..pairs_only.len()],
            &tcfg,
            &mut r_split,
        )
        .unwrap();
        let (l_mpa, _, _) = batch_loss_and_grads(
            &params,
            &data,
            &triples_only,
            &masks[pairs_only.len()..],
            &tcfg,
            &mut r_split,
        )
        .unwrap();
        assert!((l_all - (l_mk + l_mpa)).abs() < 1e-12);
    }

    #[test]
    fn rmsprop_zero_gradient_is_identity() {
        let (cfg, _) = toy_cfg(2);
        let mut params = init_params(
            &cfg,
            VocabSizes { movies: 1, actors: 1, keywords: 1 },
            None,
            None,
            3,
        )
        .unwrap();
        let snapshot = params.clone();
        let mut opt = OptimizerState::new(&params);
        rmsprop_step(&mut params, &mut opt, &Gradients::default(), 0.1, 0.9, 1e-8);
        assert_eq!(params, snapshot);
    }

    #[test]
    fn rmsprop_first_step_magnitude() {
        // With acc = 0 and decay rho, the first step is
        // eta * g / sqrt((1-rho) g^2 + eps), about eta/sqrt(1-rho) for large g.
        let cfg = ModelConfig { dim: 1, ..ModelConfig::default() };
        let mut params = init_params(
            &cfg,
            VocabSizes { movies: 1, actors: 1, keywords: 1 },
            None,
            None,
            4,
        )
        .unwrap();
        let before = params.movies[0].mean[0];
        let mut opt = OptimizerState::new(&params);
        let mut grads = Gradients::default();
        let g = 1000.0;
        grads.movies.insert(0, GaussGrad { mean: vec![g], var: vec![0.0] });
        rmsprop_step(&mut params, &mut opt, &grads, 0.1, 0.9, 1e-8);
        let step = before - params.movies[0].mean[0];
        let expected = 0.1 * g / (0.1 * g * g + 1e-8).sqrt();
        assert!((step - expected).abs() < 1e-12);
        assert!((step - 0.1 / 0.1f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn rmsprop_clips_variances() {
        let cfg = ModelConfig { dim: 1, var_max: 10.0, ..ModelConfig::default() };
        let mut params = init_params(
            &cfg,
            VocabSizes { movies: 1, actors: 1, keywords: 1 },
            None,
            None,
            5,
        )
        .unwrap();
        params.movies[0].var[0] = 9.9;
        let mut opt = OptimizerState::new(&params);
        let mut grads = Gradients::default();
        // A negative variance gradient pushes the variance up.
        grads.movies.insert(0, GaussGrad { mean: vec![0.0], var: vec![-1000.0] });
        rmsprop_step(&mut params, &mut opt, &grads, 5.0, 0.9, 1e-8);
        assert_eq!(params.movies[0].var[0], 10.0);
    }

    #[test]
    fn training_is_deterministic() {
        let d = toy_dataset();
        let (cfg, tcfg) = toy_cfg(4);
        let tcfg = TrainConfig { epochs: 12, ..tcfg };
        let (p1, r1) = train(&d, &cfg, &tcfg, None).unwrap();
        let (p2, r2) = train(&d, &cfg, &tcfg, None).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.loss_history, r2.loss_history);
    }

    #[test]
    fn training_separates_opposite_roles() {
        // Brute force over all four movie-persona-actor similarities: each
        // triple's own actor must outscore the swapped-in actor.
        let d = toy_dataset();
        let (cfg, tcfg) = toy_cfg(4);
        let (params, report) = train(&d, &cfg, &tcfg, None).unwrap();
        assert!(report.loss_history.last().unwrap() < &report.loss_history[0]);
        let sim = |m: usize, topic: usize, a: usize| {
            persona_similarity(
                &params,
                EntityId::movie(m),
                &PersonaDescriptor::with_topic(topic),
                EntityId::actor(a),
            )
            .unwrap()
        };
        let own0 = sim(0, 0, 0);
        let swapped0 = sim(0, 0, 1);
        let own1 = sim(1, 1, 1);
        let swapped1 = sim(1, 1, 0);
        assert!(own0 > swapped0, "{own0} <= {swapped0}");
        assert!(own1 > swapped1, "{own1} <= {swapped1}");
    }

    #[test]
    fn variances_stay_clipped_throughout() {
        let d = toy_dataset();
        let (cfg, tcfg) = toy_cfg(3);
        let cfg = ModelConfig { var_min: 0.5, var_max: 2.0, ..cfg };
        let tcfg = TrainConfig { epochs: 30, eta0: 1.0, eta_min: 0.5, ..tcfg };
        let (_, report) = train(&d, &cfg, &tcfg, None).unwrap();
        assert!(report.var_min_seen >= 0.5);
        assert!(report.var_max_seen <= 2.0);
    }

    #[test]
    fn concat_composition_trains() {
        let cfg = ModelConfig {
            dim: 6,
            persona_mode: PersonaMode::Agt,
            composition: Composition::Concat,
            ..ModelConfig::default()
        };
        // Give the triples age/gender fields so all three families engage.
        let mut d = toy_dataset();
        for (i, t) in d.triples.iter_mut().enumerate() {
            t.persona.age_bucket = Some(3 + i % 2);
            t.persona.gender = Some(if i % 2 == 0 { Gender::Female } else { Gender::Male });
        }
        let tcfg = TrainConfig { epochs: 10, batch_size: 4, seed: 21, ..TrainConfig::default() };
        let (params, report) = train(&d, &cfg, &tcfg, None).unwrap();
        assert_eq!(params.persona.topic_vecs[0].len(), 2); // dim / 3 families
        assert!(report.loss_history.iter().all(|l| l.is_finite()));
    }
}
