//! Learnable parameters: entity Gaussians, persona descriptor vectors,
//! initialization, and variance clipping.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Gender, PersonaDescriptor, AGE_BUCKETS, GENDERS, TOPIC_GROUPS};
use crate::error::{Error, Result};
use crate::invalid;

/// Which persona descriptor families the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PersonaMode {
    /// Persona-free model: movie-actor similarity ignores the descriptor.
    None,
    /// Topic groups only.
    T,
    /// Age and gender only.
    Ag,
    /// All three descriptor families.
    Agt,
}

impl PersonaMode {
    pub fn uses_topic(self) -> bool {
        matches!(self, PersonaMode::T | PersonaMode::Agt)
    }
    pub fn uses_age_gender(self) -> bool {
        matches!(self, PersonaMode::Ag | PersonaMode::Agt)
    }
    /// Number of active descriptor families.
    pub fn families(self) -> usize {
        match self {
            PersonaMode::None => 0,
            PersonaMode::T => 1,
            PersonaMode::Ag => 2,
            PersonaMode::Agt => 3,
        }
    }
}

/// How the per-descriptor vectors combine into one persona translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    /// Each family vector has length D; the translation is their sum.
    Sum,
    /// Each family vector has length D/Z; the translation is their
    /// concatenation, with zero blocks for absent descriptors.
    Concat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Embedding dimension D.
    pub dim: usize,
    /// Margin of separation in the hinge loss.
    pub margin: f64,
    /// Variance clip bounds.
    pub var_min: f64,
    pub var_max: f64,
    /// One shared variance scalar per entity instead of a diagonal.
    pub spherical: bool,
    /// Keep-probability for the training-time dropout mask.
    pub dropout_keep: f64,
    pub persona_mode: PersonaMode,
    pub composition: Composition,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 40,
            margin: 4.0,
            var_min: 1e-4,
            var_max: 100.0,
            spherical: true,
            dropout_keep: 0.6,
            persona_mode: PersonaMode::Agt,
            composition: Composition::Sum,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid!("dim must be positive"));
        }
        if !(self.var_min < self.var_max) {
            return Err(invalid!(
                "var_min must be below var_max, got [{}, {}]",
                self.var_min,
                self.var_max
            ));
        }
        if self.var_min <= 0.0 {
            return Err(invalid!("var_min must be positive, got {}", self.var_min));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(invalid!("dropout_keep must lie in (0, 1], got {}", self.dropout_keep));
        }
        if self.composition == Composition::Concat {
            let z = self.persona_mode.families();
            if z == 0 {
                return Err(invalid!("concat composition requires a persona mode"));
            }
            if self.dim % z != 0 {
                return Err(invalid!(
                    "concat composition needs dim divisible by {z}, got dim {}",
                    self.dim
                ));
            }
        }
        Ok(())
    }

    /// Length of one descriptor-family vector under this config.
    pub fn family_len(&self) -> usize {
        match self.composition {
            Composition::Sum => self.dim,
            Composition::Concat => self.dim / self.persona_mode.families().max(1),
        }
    }
}

/// Mean vector plus diagonal variance for one entity. In spherical mode the
/// variance holds a single shared component; `var_at` broadcasts it.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParam {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianParam {
    #[inline]
    pub fn var_at(&self, d: usize) -> f64 {
        if self.var.len() == 1 {
            self.var[0]
        } else {
            self.var[d]
        }
    }

    pub fn is_spherical(&self) -> bool {
        self.var.len() == 1
    }
}

/// Per-descriptor translation vectors. Table sizes are fixed by the
/// descriptor domains (50 topic groups, 24 age buckets, 3 genders).
#[derive(Debug, Clone, PartialEq)]
pub struct PersonaVector {
    pub topic_vecs: Vec<Vec<f64>>,
    pub age_vecs: Vec<Vec<f64>>,
    pub gender_vecs: Vec<Vec<f64>>,
    pub mode: PersonaMode,
    pub composition: Composition,
    dim: usize,
}

impl PersonaVector {
    pub(crate) fn zeros(cfg: &ModelConfig) -> Self {
        let len = cfg.family_len();
        PersonaVector {
            topic_vecs: vec![vec![0.0; len]; TOPIC_GROUPS],
            age_vecs: vec![vec![0.0; len]; AGE_BUCKETS],
            gender_vecs: vec![vec![0.0; len]; GENDERS],
            mode: cfg.persona_mode,
            composition: cfg.composition,
            dim: cfg.dim,
        }
    }

    /// Descriptor families active under the current mode, in concat order
    /// (topic, age, gender), with the descriptor's table index when the
    /// field is present.
    pub(crate) fn slots(&self, desc: &PersonaDescriptor) -> Vec<(Family, Option<usize>)> {
        let mut slots = Vec::with_capacity(3);
        if self.mode.uses_topic() {
            slots.push((Family::Topic, desc.topic_group));
        }
        if self.mode.uses_age_gender() {
            slots.push((Family::Age, desc.age_bucket));
            slots.push((Family::Gender, desc.gender.map(Gender::index)));
        }
        slots
    }

    pub(crate) fn family_vec(&self, family: Family, index: usize) -> &[f64] {
        match family {
            Family::Topic => &self.topic_vecs[index],
            Family::Age => &self.age_vecs[index],
            Family::Gender => &self.gender_vecs[index],
        }
    }

    /// Distribute a gradient on the composed translation vector back onto
    /// the present, active descriptor vectors: the full gradient for each
    /// summed family, the family's block for concatenation.
    pub(crate) fn route_grad<'a>(
        &self,
        desc: &PersonaDescriptor,
        d_nu: &'a [f64],
        mut sink: impl FnMut(Family, usize, &'a [f64]),
    ) {
        let slots = self.slots(desc);
        if slots.is_empty() {
            return;
        }
        let block = match self.composition {
            Composition::Sum => d_nu.len(),
            Composition::Concat => d_nu.len() / slots.len(),
        };
        for (slot, (family, index)) in slots.into_iter().enumerate() {
            if let Some(index) = index {
                let piece = match self.composition {
                    Composition::Sum => d_nu,
                    Composition::Concat => &d_nu[slot * block..(slot + 1) * block],
                };
                sink(family, index, piece);
            }
        }
    }
}

/// One descriptor family of the persona vector tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Topic,
    Age,
    Gender,
}

/// Composes the persona translation vector for one descriptor. Absent or
/// inactive descriptor fields contribute zero, so a fully absent descriptor
/// yields the zero vector and the similarity degrades to the persona-free
/// form.
pub fn compose_persona_vector(pv: &PersonaVector, desc: &PersonaDescriptor) -> Vec<f64> {
    let mut out = vec![0.0; pv.dim];
    let slots = pv.slots(desc);
    match pv.composition {
        Composition::Sum => {
            for (family, index) in slots {
                if let Some(index) = index {
                    for (o, x) in out.iter_mut().zip(pv.family_vec(family, index)) {
                        *o += x;
                    }
                }
            }
        }
        Composition::Concat => {
            if slots.is_empty() {
                return out;
            }
            let block = pv.dim / slots.len();
            for (slot, (family, index)) in slots.into_iter().enumerate() {
                if let Some(index) = index {
                    out[slot * block..(slot + 1) * block]
                        .copy_from_slice(pv.family_vec(family, index));
                }
            }
        }
    }
    out
}

/// All learnable state for the Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub movies: Vec<GaussianParam>,
    pub actors: Vec<GaussianParam>,
    pub keywords: Vec<GaussianParam>,
    pub persona: PersonaVector,
    pub config: ModelConfig,
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn persona_vector(&self, desc: &PersonaDescriptor) -> Vec<f64> {
        compose_persona_vector(&self.persona, desc)
    }

    /// Iterate every Gaussian in the model.
    pub fn gaussians(&self) -> impl Iterator<Item = &GaussianParam> {
        self.movies.iter().chain(&self.actors).chain(&self.keywords)
    }

    fn gaussians_mut(&mut self) -> impl Iterator<Item = &mut GaussianParam> {
        self.movies.iter_mut().chain(&mut self.actors).chain(&mut self.keywords)
    }
}

/// Vocabulary sizes for parameter allocation.
#[derive(Debug, Clone, Copy)]
pub struct VocabSizes {
    pub movies: usize,
    pub actors: usize,
    pub keywords: usize,
}

/// Pretrained word vectors keyed by token.
pub type PretrainedTable = HashMap<String, Vec<f64>>;

/// Read a pretrained vector file: one `token v1 v2 ... vD` record per line,
/// space separated.
pub fn load_pretrained_vectors(path: &Path) -> Result<PretrainedTable> {
    let file = File::open(path)
        .map_err(|e| invalid!("cannot open {}: {e}", path.display()))?;
    let mut table = HashMap::new();
    let mut dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default().to_string();
        let vec: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("bad float: {e}"),
            })?;
        if let Some(d) = dim {
            if vec.len() != d {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("expected {d} components, found {}", vec.len()),
                });
            }
        } else {
            dim = Some(vec.len());
        }
        table.insert(token, vec);
    }
    Ok(table)
}

/// Mean for a keyword name: an exact pretrained token if present, otherwise
/// the sum of per-word vectors when every word of a multiword name is
/// covered, otherwise `None` (random init applies).
fn pretrained_mean(name: &str, table: &PretrainedTable, dim: usize) -> Option<Vec<f64>> {
    if let Some(v) = table.get(name) {
        return Some(v.clone());
    }
    let words: Vec<&str> = name
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    if words.len() < 2 {
        return None;
    }
    let mut sum = vec![0.0; dim];
    for w in &words {
        let v = table.get(*w)?;
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    Some(sum)
}

fn draw_mean(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Allocate and initialize all parameters. Means are uniform in
/// [-0.5/D, 0.5/D]; keyword means found in the pretrained table are copied
/// exactly (multiword names as the sum of their word vectors); variances
/// start at 1.0 and are clipped into the configured range. The same seed
/// yields bitwise-identical parameters.
pub fn init_params(
    cfg: &ModelConfig,
    vocab: VocabSizes,
    pretrained: Option<&PretrainedTable>,
    keyword_names: Option<&[String]>,
    seed: u64,
) -> Result<ModelParams> {
    cfg.validate()?;
    if let Some(table) = pretrained {
        if let Some(bad) = table.values().find(|v| v.len() != cfg.dim) {
            return Err(invalid!(
                "pretrained vectors have length {}, model dimension is {}",
                bad.len(),
                cfg.dim
            ));
        }
        if keyword_names.is_none() {
            return Err(invalid!("pretrained init requires the keyword name list"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.5 / cfg.dim as f64;
    let var_len = if cfg.spherical { 1 } else { cfg.dim };

    let mut gaussian_block = |n: usize| -> Vec<GaussianParam> {
        (0..n)
            .map(|_| GaussianParam {
                mean: draw_mean(&mut rng, cfg.dim, scale),
                var: vec![1.0; var_len],
            })
            .collect()
    };

    let movies = gaussian_block(vocab.movies);
    let actors = gaussian_block(vocab.actors);
    let mut keywords = gaussian_block(vocab.keywords);
    if let (Some(table), Some(names)) = (pretrained, keyword_names) {
        for (k, name) in names.iter().enumerate().take(vocab.keywords) {
            if let Some(mean) = pretrained_mean(name, table, cfg.dim) {
                keywords[k].mean = mean;
            }
        }
    }

    let mut persona = PersonaVector::zeros(cfg);
    let family_len = cfg.family_len();
    for table in [&mut persona.topic_vecs, &mut persona.age_vecs, &mut persona.gender_vecs] {
        for v in table.iter_mut() {
            *v = draw_mean(&mut rng, family_len, scale);
        }
    }

    let mut params = ModelParams { movies, actors, keywords, persona, config: cfg.clone() };
    clip_variances(&mut params);
    Ok(params)
}

/// Clamp every variance component into `[var_min, var_max]`.
pub fn clip_variances(params: &mut ModelParams) {
    let (lo, hi) = (params.config.var_min, params.config.var_max);
    for g in params.gaussians_mut() {
        for v in g.var.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Gender;

    fn cfg(dim: usize) -> ModelConfig {
        ModelConfig { dim, persona_mode: PersonaMode::Agt, ..ModelConfig::default() }
    }

    fn sizes() -> VocabSizes {
        VocabSizes { movies: 3, actors: 2, keywords: 4 }
    }

    #[test]
    fn init_is_deterministic() {
        let c = cfg(8);
        let a = init_params(&c, sizes(), None, None, 7).unwrap();
        let b = init_params(&c, sizes(), None, None, 7).unwrap();
        assert_eq!(a, b);
        let c2 = init_params(&c, sizes(), None, None, 8).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn init_mean_scale_and_variances() {
        let c = cfg(10);
        let p = init_params(&c, sizes(), None, None, 1).unwrap();
        let bound = 0.5 / 10.0 + 1e-12;
        for g in p.gaussians() {
            assert!(g.mean.iter().all(|x| x.abs() <= bound));
            assert_eq!(g.var, vec![1.0]); // spherical default, in range
        }
    }

    #[test]
    fn pretrained_exact_and_multiword() {
        let c = cfg(2);
        let mut table = PretrainedTable::new();
        table.insert("war".into(), vec![1.0, 2.0]);
        table.insert("cold".into(), vec![0.5, -1.0]);
        let names = vec!["war".to_string(), "cold-war".to_string(), "peace".to_string()];
        let p = init_params(
            &c,
            VocabSizes { movies: 1, actors: 1, keywords: 3 },
            Some(&table),
            Some(&names),
            3,
        )
        .unwrap();
        assert_eq!(p.keywords[0].mean, vec![1.0, 2.0]);
        assert_eq!(p.keywords[1].mean, vec![1.5, 1.0]);
        // "peace" is uncovered: random init within the uniform bound.
        assert!(p.keywords[2].mean.iter().all(|x| x.abs() <= 0.25 + 1e-12));
    }

    #[test]
    fn pretrained_wrong_length_is_error() {
        let c = cfg(3);
        let mut table = PretrainedTable::new();
        table.insert("war".into(), vec![1.0, 2.0]);
        let names = vec!["war".to_string()];
        let err = init_params(
            &c,
            VocabSizes { movies: 1, actors: 1, keywords: 1 },
            Some(&table),
            Some(&names),
            3,
        );
        assert!(err.is_err());
    }

    #[test]
    fn clip_bounds() {
        let c = ModelConfig { dim: 2, spherical: false, ..cfg(2) };
        let mut p = init_params(&c, sizes(), None, None, 1).unwrap();
        p.movies[0].var = vec![200.0, 0.00005];
        p.actors[0].var = vec![1.0, 1.0];
        clip_variances(&mut p);
        assert_eq!(p.movies[0].var, vec![100.0, 0.0001]);
        assert_eq!(p.actors[0].var, vec![1.0, 1.0]);
    }

    #[test]
    fn spherical_variances_stay_scalar() {
        let c = cfg(6);
        let p = init_params(&c, sizes(), None, None, 2).unwrap();
        for g in p.gaussians() {
            assert!(g.is_spherical());
            for d in 0..6 {
                assert_eq!(g.var_at(d), g.var[0]);
            }
        }
    }

    #[test]
    fn compose_sum_and_absent() {
        let c = cfg(2);
        let mut p = init_params(&c, sizes(), None, None, 1).unwrap();
        p.persona.topic_vecs[3] = vec![1.0, 0.0];
        p.persona.age_vecs[2] = vec![0.0, 2.0];
        let desc = PersonaDescriptor {
            topic_group: Some(3),
            age_bucket: Some(2),
            gender: None,
        };
        assert_eq!(compose_persona_vector(&p.persona, &desc), vec![1.0, 2.0]);
        assert_eq!(
            compose_persona_vector(&p.persona, &PersonaDescriptor::empty()),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn compose_mode_ignores_inactive_families() {
        let c = ModelConfig { persona_mode: PersonaMode::T, ..cfg(2) };
        let mut p = init_params(&c, sizes(), None, None, 1).unwrap();
        p.persona.topic_vecs[0] = vec![1.0, 1.0];
        p.persona.age_vecs[0] = vec![5.0, 5.0];
        let desc = PersonaDescriptor {
            topic_group: Some(0),
            age_bucket: Some(0),
            gender: Some(Gender::Female),
        };
        assert_eq!(compose_persona_vector(&p.persona, &desc), vec![1.0, 1.0]);

        let none_cfg = ModelConfig { persona_mode: PersonaMode::None, ..cfg(2) };
        let p0 = init_params(&none_cfg, sizes(), None, None, 1).unwrap();
        assert_eq!(compose_persona_vector(&p0.persona, &desc), vec![0.0, 0.0]);
    }

    #[test]
    fn compose_concat_blocks() {
        let c = ModelConfig {
            composition: Composition::Concat,
            persona_mode: PersonaMode::Ag,
            ..cfg(4)
        };
        let mut p = init_params(&c, sizes(), None, None, 1).unwrap();
        p.persona.age_vecs[1] = vec![1.0, 2.0];
        p.persona.gender_vecs[Gender::Male.index()] = vec![3.0, 4.0];
        let desc = PersonaDescriptor {
            topic_group: None,
            age_bucket: Some(1),
            gender: Some(Gender::Male),
        };
        assert_eq!(compose_persona_vector(&p.persona, &desc), vec![1.0, 2.0, 3.0, 4.0]);
        let partial = PersonaDescriptor { age_bucket: Some(1), ..PersonaDescriptor::empty() };
        assert_eq!(compose_persona_vector(&p.persona, &partial), vec![1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_requires_divisible_dim() {
        let c = ModelConfig {
            composition: Composition::Concat,
            persona_mode: PersonaMode::Agt,
            ..cfg(4)
        };
        assert!(c.validate().is_err()); // 4 % 3 != 0
    }

    #[test]
    fn compose_is_additive_in_sum_mode() {
        let c = cfg(3);
        let p = init_params(&c, sizes(), None, None, 11).unwrap();
        let topic_only = PersonaDescriptor::with_topic(7);
        let age_only = PersonaDescriptor { age_bucket: Some(4), ..PersonaDescriptor::empty() };
        let both = PersonaDescriptor {
            topic_group: Some(7),
            age_bucket: Some(4),
            gender: None,
        };
        let t = compose_persona_vector(&p.persona, &topic_only);
        let a = compose_persona_vector(&p.persona, &age_only);
        let ta = compose_persona_vector(&p.persona, &both);
        for d in 0..3 {
            assert!((ta[d] - (t[d] + a[d])).abs() < 1e-15);
        }
    }
}
