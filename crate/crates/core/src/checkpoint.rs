//! Flat binary model checkpoints.
//!
//! Layout (all integers little-endian, floats as IEEE 754 little-endian
//! bytes, so a round trip is bit-exact):
//!
//! ```text
//! magic  b"GCKP0001"
//! family u8            0 = gaussian, 1 = translation baseline
//! dim    u32
//! n_movies n_actors n_keywords  u32 each
//! split_seed u64
//! vocab blocks         movies, actors, keywords: per name u32 len + UTF-8
//! family payload       see below
//! ```
//!
//! Gaussian payload: spherical/persona-mode/composition bytes, margin,
//! variance bounds and dropout as f64, then per entity the mean and variance
//! components, then the three descriptor tables. Baseline payload: norm
//! byte, entity vectors, then the persona relation table as (topic, age,
//! gender) keys (-1 when absent) with vectors, the default relation, and
//! the keyword relation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Gender, PersonaDescriptor, AGE_BUCKETS, GENDERS, TOPIC_GROUPS};
use crate::error::{Error, Result};
use crate::params::{
    Composition, GaussianParam, ModelConfig, ModelParams, PersonaMode, PersonaVector,
};
use crate::transe::{Norm, TransEParams};

const MAGIC: &[u8; 8] = b"GCKP0001";

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFamily {
    Gaussian(ModelParams),
    TransE(TransEParams),
}

/// Names in id order for each vocabulary; evaluation maps external files
/// onto checkpoint ids through these.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointVocab {
    pub movies: Vec<String>,
    pub actors: Vec<String>,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: CheckpointVocab,
    /// Seed that produced the train/val/test split this model was trained
    /// under; evaluation replays it.
    pub split_seed: u64,
    pub model: ModelFamily,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Writer<W: Write> {
    w: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, x: u8) -> Result<()> {
        self.w.write_all(&[x])?;
        Ok(())
    }
    fn u32(&mut self, x: u32) -> Result<()> {
        self.w.write_all(&x.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, x: u64) -> Result<()> {
        self.w.write_all(&x.to_le_bytes())?;
        Ok(())
    }
    fn i32(&mut self, x: i32) -> Result<()> {
        self.w.write_all(&x.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, x: f64) -> Result<()> {
        self.w.write_all(&x.to_le_bytes())?;
        Ok(())
    }
    fn floats(&mut self, xs: &[f64]) -> Result<()> {
        for &x in xs {
            self.f64(x)?;
        }
        Ok(())
    }
    fn string(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.w.write_all(s.as_bytes())?;
        Ok(())
    }
}

struct Reader<R: Read> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.r.read_exact(&mut buf).map_err(|e| bad(format!("truncated file: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 1 << 20 {
            return Err(bad(format!("implausible string length {len}")));
        }
        let mut buf = vec![0u8; len];
        self.r.read_exact(&mut buf).map_err(|e| bad(format!("truncated string: {e}")))?;
        String::from_utf8(buf).map_err(|e| bad(format!("bad UTF-8: {e}")))
    }
}

fn persona_mode_code(m: PersonaMode) -> u8 {
    match m {
        PersonaMode::None => 0,
        PersonaMode::T => 1,
        PersonaMode::Ag => 2,
        PersonaMode::Agt => 3,
    }
}

fn persona_mode_from(code: u8) -> Result<PersonaMode> {
    match code {
        0 => Ok(PersonaMode::None),
        1 => Ok(PersonaMode::T),
        2 => Ok(PersonaMode::Ag),
        3 => Ok(PersonaMode::Agt),
        _ => Err(bad(format!("bad persona mode byte {code}"))),
    }
}

fn desc_key(desc: &PersonaDescriptor) -> (i32, i32, i32) {
    (
        desc.topic_group.map_or(-1, |t| t as i32),
        desc.age_bucket.map_or(-1, |a| a as i32),
        desc.gender.map_or(-1, |g| g.index() as i32),
    )
}

fn desc_from_key(topic: i32, age: i32, gender: i32) -> Result<PersonaDescriptor> {
    let gender = match gender {
        -1 => None,
        0 => Some(Gender::Female),
        1 => Some(Gender::Male),
        2 => Some(Gender::Other),
        _ => return Err(bad(format!("bad gender code {gender}"))),
    };
    Ok(PersonaDescriptor {
        topic_group: (topic >= 0).then_some(topic as usize),
        age_bucket: (age >= 0).then_some(age as usize),
        gender,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = File::create(path)?;
    let mut w = Writer { w: BufWriter::new(file) };
    w.w.write_all(MAGIC)?;
    let family = match &ckpt.model {
        ModelFamily::Gaussian(_) => 0u8,
        ModelFamily::TransE(_) => 1u8,
    };
    w.u8(family)?;

    let (dim, nm, na, nk) = match &ckpt.model {
        ModelFamily::Gaussian(p) => (p.dim(), p.movies.len(), p.actors.len(), p.keywords.len()),
        ModelFamily::TransE(p) => (p.dim, p.movies.len(), p.actors.len(), p.keywords.len()),
    };
    w.u32(dim as u32)?;
    w.u32(nm as u32)?;
    w.u32(na as u32)?;
    w.u32(nk as u32)?;
    w.u64(ckpt.split_seed)?;
    for block in [&ckpt.vocab.movies, &ckpt.vocab.actors, &ckpt.vocab.keywords] {
        for name in block {
            w.string(name)?;
        }
    }

    match &ckpt.model {
        ModelFamily::Gaussian(p) => {
            w.u8(p.config.spherical as u8)?;
            w.u8(persona_mode_code(p.config.persona_mode))?;
            w.u8(matches!(p.config.composition, Composition::Concat) as u8)?;
            w.f64(p.config.margin)?;
            w.f64(p.config.var_min)?;
            w.f64(p.config.var_max)?;
            w.f64(p.config.dropout_keep)?;
            for table in [&p.movies, &p.actors, &p.keywords] {
                for g in table {
                    w.floats(&g.mean)?;
                    w.floats(&g.var)?;
                }
            }
            w.u32(p.persona.topic_vecs[0].len() as u32)?;
            for table in [&p.persona.topic_vecs, &p.persona.age_vecs, &p.persona.gender_vecs] {
                for v in table {
                    w.floats(v)?;
                }
            }
        }
        ModelFamily::TransE(p) => {
            w.u8(matches!(p.norm, Norm::L2) as u8)?;
            for table in [&p.movies, &p.actors, &p.keywords] {
                for v in table {
                    w.floats(v)?;
                }
            }
            w.u32(p.persona_relations.len() as u32)?;
            for (desc, vec) in &p.persona_relations {
                let (t, a, g) = desc_key(desc);
                w.i32(t)?;
                w.i32(a)?;
                w.i32(g)?;
                w.floats(vec)?;
            }
            w.floats(&p.default_relation)?;
            w.floats(&p.keyword_relation)?;
        }
    }
    w.w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| bad(format!("cannot open {}: {e}", path.display())))?;
    let mut r = Reader { r: BufReader::new(file) };
    let magic: [u8; 8] = r.bytes()?;
    if &magic != MAGIC {
        return Err(bad("not a model checkpoint (bad magic)"));
    }
    let family = r.u8()?;
    let dim = r.u32()? as usize;
    let nm = r.u32()? as usize;
    let na = r.u32()? as usize;
    let nk = r.u32()? as usize;
    let split_seed = r.u64()?;
    let read_block = |r: &mut Reader<BufReader<File>>, n: usize| -> Result<Vec<String>> {
        (0..n).map(|_| r.string()).collect()
    };
    let vocab = CheckpointVocab {
        movies: read_block(&mut r, nm)?,
        actors: read_block(&mut r, na)?,
        keywords: read_block(&mut r, nk)?,
    };

    let model = match family {
        0 => {
            let spherical = r.u8()? != 0;
            let persona_mode = persona_mode_from(r.u8()?)?;
            let composition = if r.u8()? != 0 { Composition::Concat } else { Composition::Sum };
            let margin = r.f64()?;
            let var_min = r.f64()?;
            let var_max = r.f64()?;
            let dropout_keep = r.f64()?;
            let config = ModelConfig {
                dim,
                margin,
                var_min,
                var_max,
                spherical,
                dropout_keep,
                persona_mode,
                composition,
            };
            let var_len = if spherical { 1 } else { dim };
            let mut read_table = |n: usize| -> Result<Vec<GaussianParam>> {
                (0..n)
                    .map(|_| {
                        Ok(GaussianParam { mean: r.floats(dim)?, var: r.floats(var_len)? })
                    })
                    .collect()
            };
            let movies = read_table(nm)?;
            let actors = read_table(na)?;
            let keywords = read_table(nk)?;
            let family_len = r.u32()? as usize;
            let mut persona = PersonaVector::zeros(&config);
            if persona.topic_vecs[0].len() != family_len {
                return Err(bad(format!(
                    "descriptor vector length {family_len} does not match config"
                )));
            }
            for table in
                [&mut persona.topic_vecs, &mut persona.age_vecs, &mut persona.gender_vecs]
            {
                for v in table.iter_mut() {
                    *v = r.floats(family_len)?;
                }
            }
            debug_assert_eq!(persona.topic_vecs.len(), TOPIC_GROUPS);
            debug_assert_eq!(persona.age_vecs.len(), AGE_BUCKETS);
            debug_assert_eq!(persona.gender_vecs.len(), GENDERS);
            ModelFamily::Gaussian(ModelParams { movies, actors, keywords, persona, config })
        }
        1 => {
            let norm = if r.u8()? != 0 { Norm::L2 } else { Norm::L1 };
            let mut read_table = |n: usize| -> Result<Vec<Vec<f64>>> {
                (0..n).map(|_| r.floats(dim)).collect()
            };
            let movies = read_table(nm)?;
            let actors = read_table(na)?;
            let keywords = read_table(nk)?;
            let n_rel = r.u32()? as usize;
            let mut persona_relations = Vec::with_capacity(n_rel);
            for _ in 0..n_rel {
                let t = r.i32()?;
                let a = r.i32()?;
                let g = r.i32()?;
                persona_relations.push((desc_from_key(t, a, g)?, r.floats(dim)?));
            }
            let default_relation = r.floats(dim)?;
            let keyword_relation = r.floats(dim)?;
            ModelFamily::TransE(TransEParams::from_parts(
                dim,
                norm,
                movies,
                actors,
                keywords,
                persona_relations,
                default_relation,
                keyword_relation,
            ))
        }
        other => return Err(bad(format!("unknown model family byte {other}"))),
    };

    Ok(Checkpoint { vocab, split_seed, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EntityId, Pair, Split, Triple, Vocab};
    use crate::params::{init_params, VocabSizes};
    use crate::train::TrainConfig;
    use crate::transe::transe_train;

    fn vocab() -> CheckpointVocab {
        CheckpointVocab {
            movies: vec!["m0".into(), "m1".into()],
            actors: vec!["a0".into(), "a1".into(), "a2".into()],
            keywords: vec!["k0".into()],
        }
    }

    #[test]
    fn gaussian_round_trip_is_bit_exact() {
        let cfg = ModelConfig { dim: 5, spherical: false, ..ModelConfig::default() };
        let params = init_params(
            &cfg,
            VocabSizes { movies: 2, actors: 3, keywords: 1 },
            None,
            None,
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = Checkpoint {
            vocab: vocab(),
            split_seed: 99,
            model: ModelFamily::Gaussian(params),
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ckpt);

        // Saving the loaded model again produces identical bytes.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn transe_round_trip_is_bit_exact() {
        let movies = Vocab::from_names(["m0".into(), "m1".into()]);
        let actors = Vocab::from_names(["a0".into(), "a1".into(), "a2".into()]);
        let keywords = Vocab::from_names(["k0".into()]);
        let triples = vec![
            Triple {
                movie: EntityId::movie(0),
                actor: EntityId::actor(0),
                persona: PersonaDescriptor::with_topic(2),
                cast_rank: 1,
            },
            Triple {
                movie: EntityId::movie(1),
                actor: EntityId::actor(1),
                persona: PersonaDescriptor::empty(),
                cast_rank: 1,
            },
        ];
        let pairs = vec![Pair { movie: EntityId::movie(0), keyword: EntityId::keyword(0) }];
        let d = crate::data::Dataset {
            movies,
            actors,
            keywords,
            triples,
            pairs,
            splits: vec![Split::Train; 2],
        };
        let tcfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
        let (trained, _) = transe_train(&d, 4, &tcfg).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.ckpt");
        let ckpt =
            Checkpoint { vocab: vocab(), split_seed: 7, model: ModelFamily::TransE(trained) };
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ckpt);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
