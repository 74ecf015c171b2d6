//! Closed-form log-Gaussian-overlap similarities and their analytic
//! gradients.
//!
//! The similarity between two entities with diagonal Gaussians is the log of
//! the integral of the product of their densities, which collapses to a
//! single Gaussian evaluation:
//!
//! `S = log N(0; mu_a - mu_b, diag(var_a + var_b))
//!    = -1/2 sum_d [ log(2 pi s_d) + g_d^2 / s_d ]`
//!
//! with `g = mu_a - mu_b` and `s = var_a + var_b`. The additive constant is
//! kept so values match hand-computed densities exactly; it cancels in hinge
//! differences. The movie-persona-actor similarity translates the movie mean
//! by the composed persona vector before the overlap.

use std::f64::consts::PI;

use crate::data::{EntityId, EntityKind, PersonaDescriptor};
use crate::error::Result;
use crate::invalid;
use crate::params::{GaussianParam, ModelParams, PersonaMode};

/// Gradients of one similarity value with respect to every participating
/// parameter. Variance gradients match the parameter storage: one component
/// per dimension for diagonal variances, a single summed component for
/// spherical ones. `d_persona` is zero when the similarity has no persona
/// term.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGradients {
    pub d_mean_left: Vec<f64>,
    pub d_mean_right: Vec<f64>,
    pub d_var_left: Vec<f64>,
    pub d_var_right: Vec<f64>,
    pub d_persona: Vec<f64>,
}

/// Which similarity a gradient request refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimKind {
    /// Movie-keyword overlap.
    Mk,
    /// Movie-persona-actor overlap (persona translation on the movie mean).
    Mpa,
}

#[inline]
fn broadcast(var: &[f64], d: usize) -> f64 {
    if var.len() == 1 {
        var[0]
    } else {
        var[d]
    }
}

fn check_vars(dim: usize, var: &[f64], side: &str) -> Result<()> {
    if var.len() != dim && var.len() != 1 {
        return Err(invalid!(
            "{side} variance has {} components, expected {dim} or a shared scalar",
            var.len()
        ));
    }
    if var.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid!("{side} variance has a nonpositive component"));
    }
    Ok(())
}

/// Per-dimension similarity value plus the partials with respect to the mean
/// gap and the variance sum. Shared by the forward ops, the public gradient
/// op, and the masked training path.
pub(crate) fn overlap_terms(gap: &[f64], s: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let mut value = 0.0;
    let mut d_gap = Vec::with_capacity(gap.len());
    let mut d_s = Vec::with_capacity(gap.len());
    for (&g, &sd) in gap.iter().zip(s) {
        value += -0.5 * ((2.0 * PI * sd).ln() + g * g / sd);
        d_gap.push(-g / sd);
        d_s.push(-0.5 * (1.0 / sd - g * g / (sd * sd)));
    }
    (value, d_gap, d_s)
}

/// Log of the integral of the product of two diagonal-Gaussian densities.
/// Variance slices may hold one shared component (spherical) or one per
/// dimension. Symmetric in its two arguments.
pub fn log_overlap(mu_a: &[f64], var_a: &[f64], mu_b: &[f64], var_b: &[f64]) -> Result<f64> {
    let dim = mu_a.len();
    if mu_b.len() != dim {
        return Err(invalid!("mean lengths differ: {dim} vs {}", mu_b.len()));
    }
    check_vars(dim, var_a, "left")?;
    check_vars(dim, var_b, "right")?;

    let mut value = 0.0;
    for d in 0..dim {
        let g = mu_a[d] - mu_b[d];
        let s = broadcast(var_a, d) + broadcast(var_b, d);
        value += -0.5 * ((2.0 * PI * s).ln() + g * g / s);
    }
    Ok(value)
}

fn gaussian<'a>(params: &'a ModelParams, id: EntityId, kind: EntityKind) -> Result<&'a GaussianParam> {
    let idx = id.expect_kind(kind)?;
    let table = match kind {
        EntityKind::Movie => &params.movies,
        EntityKind::Actor => &params.actors,
        EntityKind::Keyword => &params.keywords,
    };
    table
        .get(idx)
        .ok_or_else(|| invalid!("{kind} index {idx} out of range ({} entries)", table.len()))
}

/// Movie-keyword similarity: the log overlap of the two entity Gaussians.
pub fn movie_keyword_similarity(params: &ModelParams, m: EntityId, k: EntityId) -> Result<f64> {
    let mg = gaussian(params, m, EntityKind::Movie)?;
    let kg = gaussian(params, k, EntityKind::Keyword)?;
    log_overlap(&mg.mean, &mg.var, &kg.mean, &kg.var)
}

/// Persona-free movie-actor similarity.
pub fn persona_free_similarity(params: &ModelParams, m: EntityId, a: EntityId) -> Result<f64> {
    let mg = gaussian(params, m, EntityKind::Movie)?;
    let ag = gaussian(params, a, EntityKind::Actor)?;
    log_overlap(&mg.mean, &mg.var, &ag.mean, &ag.var)
}

/// Movie-persona-actor similarity: the movie mean is translated by the
/// composed persona vector, then overlapped with the actor Gaussian.
pub fn persona_similarity(
    params: &ModelParams,
    m: EntityId,
    desc: &PersonaDescriptor,
    a: EntityId,
) -> Result<f64> {
    let mg = gaussian(params, m, EntityKind::Movie)?;
    let ag = gaussian(params, a, EntityKind::Actor)?;
    let nu = params.persona_vector(desc);
    let translated: Vec<f64> = mg.mean.iter().zip(&nu).map(|(m, n)| m + n).collect();
    log_overlap(&translated, &mg.var, &ag.mean, &ag.var)
}

/// Score a (movie, descriptor, actor) query under the model's persona mode:
/// the persona-free form when the mode is `None`, the translated form
/// otherwise.
pub fn cast_similarity(
    params: &ModelParams,
    m: EntityId,
    desc: &PersonaDescriptor,
    a: EntityId,
) -> Result<f64> {
    if params.config.persona_mode == PersonaMode::None {
        persona_free_similarity(params, m, a)
    } else {
        persona_similarity(params, m, desc, a)
    }
}

/// Collapse per-dimension variance partials to the storage shape: summed
/// into one component for a spherical parameter, unchanged otherwise.
pub(crate) fn reduce_var_grad(per_dim: &[f64], spherical: bool) -> Vec<f64> {
    if spherical {
        vec![per_dim.iter().sum()]
    } else {
        per_dim.to_vec()
    }
}

/// Analytic gradients of `movie_keyword_similarity` (kind `Mk`, ids =
/// (movie, keyword)) or `persona_similarity` (kind `Mpa`, ids = (movie,
/// actor), descriptor applied). Left is always the movie side.
pub fn similarity_gradients(
    params: &ModelParams,
    kind: SimKind,
    ids: (EntityId, EntityId),
    desc: &PersonaDescriptor,
) -> Result<SimilarityGradients> {
    let left = gaussian(params, ids.0, EntityKind::Movie)?;
    let (right, nu) = match kind {
        SimKind::Mk => (gaussian(params, ids.1, EntityKind::Keyword)?, None),
        SimKind::Mpa => (
            gaussian(params, ids.1, EntityKind::Actor)?,
            Some(params.persona_vector(desc)),
        ),
    };

    let dim = params.dim();
    let mut gap = Vec::with_capacity(dim);
    let mut s = Vec::with_capacity(dim);
    for d in 0..dim {
        let translate = nu.as_ref().map_or(0.0, |v| v[d]);
        gap.push(left.mean[d] + translate - right.mean[d]);
        s.push(left.var_at(d) + right.var_at(d));
    }
    if s.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid!("variance sum has a nonpositive component"));
    }

    let (_, d_gap, d_s) = overlap_terms(&gap, &s);
    let d_mean_right: Vec<f64> = d_gap.iter().map(|g| -g).collect();
    let d_persona = if nu.is_some() { d_gap.clone() } else { vec![0.0; dim] };

    Ok(SimilarityGradients {
        d_mean_left: d_gap,
        d_mean_right,
        d_var_left: reduce_var_grad(&d_s, left.is_spherical()),
        d_var_right: reduce_var_grad(&d_s, right.is_spherical()),
        d_persona,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_params, Composition, ModelConfig, VocabSizes};
    use proptest::prelude::*;

    fn toy_params(dim: usize, spherical: bool) -> ModelParams {
        let cfg = ModelConfig {
            dim,
            spherical,
            persona_mode: PersonaMode::T,
            ..ModelConfig::default()
        };
        init_params(
            &cfg,
            VocabSizes { movies: 2, actors: 2, keywords: 2 },
            None,
            None,
            5,
        )
        .unwrap()
    }

    #[test]
    fn scalar_standard_density() {
        // Two unit-area Gaussians at the same point with variance 1/2 each
        // overlap like N(0; 0, 1): -0.5 ln(2 pi).
        let expected = -0.5 * (2.0 * PI).ln();
        let got = log_overlap(&[0.0], &[0.5], &[0.0], &[0.5]).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        assert!((got + 0.9189385332046727).abs() < 1e-10);
    }

    #[test]
    fn scalar_density_with_gap() {
        // Mean gap 2 with variance sum 1 adds a Mahalanobis term of 2.
        let expected = -0.5 * (2.0 * PI).ln() - 2.0;
        let got = log_overlap(&[0.0], &[0.5], &[2.0], &[0.5]).unwrap();
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn identical_gaussians_two_dims() {
        // D=2, unit variances: -sum log(2 pi * 2) / 2 = -ln(2 pi) - ln 2.
        let expected = -(2.0 * PI).ln() - 2.0f64.ln();
        let got = log_overlap(&[0.3, -0.7], &[1.0, 1.0], &[0.3, -0.7], &[1.0, 1.0]).unwrap();
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive_variance() {
        assert!(log_overlap(&[0.0], &[0.0], &[0.0], &[1.0]).is_err());
        assert!(log_overlap(&[0.0], &[1.0], &[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn movie_keyword_delegates_to_log_overlap() {
        let p = toy_params(4, false);
        let m = EntityId::movie(0);
        let k = EntityId::keyword(1);
        let direct = log_overlap(
            &p.movies[0].mean,
            &p.movies[0].var,
            &p.keywords[1].mean,
            &p.keywords[1].var,
        )
        .unwrap();
        assert_eq!(movie_keyword_similarity(&p, m, k).unwrap(), direct);
        assert!(movie_keyword_similarity(&p, k, m).is_err());
    }

    #[test]
    fn growing_variance_lowers_similarity_at_zero_gap() {
        let mut p = toy_params(2, false);
        p.movies[0].mean = vec![0.1, 0.2];
        p.keywords[0].mean = vec![0.1, 0.2];
        p.keywords[0].var = vec![1.0, 1.0];
        let tight = movie_keyword_similarity(&p, EntityId::movie(0), EntityId::keyword(0)).unwrap();
        p.keywords[0].var = vec![50.0, 50.0];
        let wide = movie_keyword_similarity(&p, EntityId::movie(0), EntityId::keyword(0)).unwrap();
        assert!(wide < tight);
    }

    #[test]
    fn persona_translation_scalar_case() {
        // Movie at 0 translated by +1 meets an actor at 1: N(1; 1, 1).
        let mut p = toy_params(1, false);
        p.movies[0].mean = vec![0.0];
        p.movies[0].var = vec![0.5];
        p.actors[0].mean = vec![1.0];
        p.actors[0].var = vec![0.5];
        p.persona.topic_vecs[0] = vec![1.0];
        let desc = PersonaDescriptor::with_topic(0);
        let got = persona_similarity(&p, EntityId::movie(0), &desc, EntityId::actor(0)).unwrap();
        assert!((got + 0.5 * (2.0 * PI).ln()).abs() < 1e-10);
    }

    #[test]
    fn empty_descriptor_reduces_to_persona_free() {
        let p = toy_params(3, true);
        let desc = PersonaDescriptor::empty();
        let with = persona_similarity(&p, EntityId::movie(1), &desc, EntityId::actor(0)).unwrap();
        let without = persona_free_similarity(&p, EntityId::movie(1), EntityId::actor(0)).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn translation_separates_opposite_roles() {
        // Two actors at +1 and -1 around a movie at 0; translations +1/-1
        // raise each actor's own-role similarity above the swapped one.
        let mut p = toy_params(1, false);
        p.movies[0].mean = vec![0.0];
        p.actors[0].mean = vec![1.0];
        p.actors[1].mean = vec![-1.0];
        p.persona.topic_vecs[0] = vec![1.0];
        p.persona.topic_vecs[1] = vec![-1.0];
        let m = EntityId::movie(0);
        let hero = PersonaDescriptor::with_topic(0);
        let villain = PersonaDescriptor::with_topic(1);
        let own_a = persona_similarity(&p, m, &hero, EntityId::actor(0)).unwrap();
        let own_b = persona_similarity(&p, m, &villain, EntityId::actor(1)).unwrap();
        let swapped_a = persona_similarity(&p, m, &villain, EntityId::actor(0)).unwrap();
        let swapped_b = persona_similarity(&p, m, &hero, EntityId::actor(1)).unwrap();
        assert!(own_a > swapped_a);
        assert!(own_b > swapped_b);
    }

    #[test]
    fn coincident_means_zero_mean_gradients() {
        let mut p = toy_params(2, false);
        p.movies[0].mean = vec![0.4, -0.2];
        p.keywords[0].mean = vec![0.4, -0.2];
        let g = similarity_gradients(
            &p,
            SimKind::Mk,
            (EntityId::movie(0), EntityId::keyword(0)),
            &PersonaDescriptor::empty(),
        )
        .unwrap();
        assert!(g.d_mean_left.iter().all(|&x| x == 0.0));
        assert!(g.d_mean_right.iter().all(|&x| x == 0.0));
        assert!(g.d_persona.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn variance_gradient_stationary_at_gap_squared_equals_s() {
        // d/ds of -(log s + g^2/s)/2 vanishes when g^2 = s.
        let (_, _, d_s) = overlap_terms(&[2.0], &[4.0]);
        assert!(d_s[0].abs() < 1e-15);
    }

    #[test]
    fn variance_gradient_negative_at_zero_gap() {
        let (_, _, d_s) = overlap_terms(&[0.0, 0.0], &[0.3, 7.0]);
        assert!(d_s.iter().all(|&x| x < 0.0));
    }

    /// Central finite difference of a scalar function.
    fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let h = 1e-5;
        for case in 0..40 {
            let dim = [1, 3, 8][case % 3];
            let spherical = case % 2 == 0;
            let mut p = toy_params(dim, spherical);
            for g in [&mut p.movies[0], &mut p.actors[0], &mut p.keywords[0]] {
                g.mean = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                for v in g.var.iter_mut() {
                    *v = rng.random_range(0.01..10.0);
                }
            }
            p.persona.topic_vecs[0] =
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let desc = PersonaDescriptor::with_topic(0);
            let ids = (EntityId::movie(0), EntityId::actor(0));
            let grads = similarity_gradients(&p, SimKind::Mpa, ids, &desc).unwrap();

            for d in 0..dim {
                let num = central_diff(
                    |x| {
                        let mut q = p.clone();
                        q.movies[0].mean[d] = x;
                        persona_similarity(&q, ids.0, &desc, ids.1).unwrap()
                    },
                    p.movies[0].mean[d],
                    h,
                );
                assert!(rel_err(grads.d_mean_left[d], num) < 1e-4);

                let num = central_diff(
                    |x| {
                        let mut q = p.clone();
                        q.actors[0].mean[d] = x;
                        persona_similarity(&q, ids.0, &desc, ids.1).unwrap()
                    },
                    p.actors[0].mean[d],
                    h,
                );
                assert!(rel_err(grads.d_mean_right[d], num) < 1e-4);

                let num = central_diff(
                    |x| {
                        let mut q = p.clone();
                        q.persona.topic_vecs[0][d] = x;
                        persona_similarity(&q, ids.0, &desc, ids.1).unwrap()
                    },
                    p.persona.topic_vecs[0][d],
                    h,
                );
                assert!(rel_err(grads.d_persona[d], num) < 1e-4);
            }
            for c in 0..p.movies[0].var.len() {
                let num = central_diff(
                    |x| {
                        let mut q = p.clone();
                        q.movies[0].var[c] = x;
                        persona_similarity(&q, ids.0, &desc, ids.1).unwrap()
                    },
                    p.movies[0].var[c],
                    h,
                );
                assert!(rel_err(grads.d_var_left[c], num) < 1e-4);
            }
        }
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric(
            mu_a in proptest::collection::vec(-5.0..5.0f64, 1..6),
            shift in proptest::collection::vec(-5.0..5.0f64, 6),
            va in proptest::collection::vec(1e-3..50.0f64, 6),
            vb in proptest::collection::vec(1e-3..50.0f64, 6),
        ) {
            let n = mu_a.len();
            let mu_b: Vec<f64> = mu_a.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let va = &va[..n];
            let vb = &vb[..n];
            let ab = log_overlap(&mu_a, va, &mu_b, vb).unwrap();
            let ba = log_overlap(&mu_b, vb, &mu_a, va).unwrap();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn mean_gap_monotone_at_fixed_variance(
            gap in 0.0..4.0f64,
            extra in 0.01..4.0f64,
            var in 0.05..10.0f64,
        ) {
            let near = log_overlap(&[0.0], &[var], &[gap], &[var]).unwrap();
            let far = log_overlap(&[0.0], &[var], &[gap + extra], &[var]).unwrap();
            prop_assert!(far < near);
        }
    }
}
