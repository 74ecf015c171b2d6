//! Shared command plumbing: model selection, config resolution, dataset
//! round-tripping, training dispatch, and checkpoint-id mapping.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use gausscast::{
    config::{apply_config_text, apply_key, parse_composition},
    load_pretrained_vectors, train, transe_train, Checkpoint, CheckpointVocab, Dataset,
    ModelFamily, PersonaDescriptor, PersonaMode, RunConfig, TrainReport, Vocab,
};

use crate::io::write_atomic;

/// Model variants exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Persona-free Gaussian model.
    Jge,
    /// Gaussian model with persona topic groups.
    JgeT,
    /// Gaussian model with age and gender descriptors.
    JgeAg,
    /// Gaussian model with all persona descriptors.
    JgeAgt,
    /// Point-vector translation baseline.
    Transe,
}

impl ModelArg {
    pub fn persona_mode(self) -> PersonaMode {
        match self {
            ModelArg::Jge | ModelArg::Transe => PersonaMode::None,
            ModelArg::JgeT => PersonaMode::T,
            ModelArg::JgeAg => PersonaMode::Ag,
            ModelArg::JgeAgt => PersonaMode::Agt,
        }
    }

    pub fn is_gaussian(self) -> bool {
        !matches!(self, ModelArg::Transe)
    }

    pub fn takes_persona_options(self) -> bool {
        !matches!(self, ModelArg::Jge | ModelArg::Transe)
    }
}

/// Flags that tune a run on top of the config file.
#[derive(Debug, Clone, clap::Args)]
pub struct RunFlags {
    /// key = value config file; unknown keys are rejected
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Inline config overrides, repeatable (key=value)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Base random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// One shared variance per entity (default)
    #[arg(long)]
    pub spherical: bool,
    /// Full diagonal variances
    #[arg(long, conflicts_with = "spherical")]
    pub diagonal: bool,
    /// Use the pi-scaled cosine schedule that ends exactly at eta_min
    #[arg(long = "pi-schedule")]
    pub pi_schedule: bool,
    /// Persona composition (persona models only)
    #[arg(long)]
    pub composition: Option<String>,
}

/// Resolve the effective configuration for a model: variant defaults, then
/// the config file, then --set overrides, then dedicated flags.
pub fn resolve_config(model: ModelArg, flags: &RunFlags) -> Result<RunConfig> {
    let mut rc = RunConfig::for_mode(model.persona_mode());
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        apply_config_text(&mut rc, &text, &path.display().to_string())?;
    }
    for kv in &flags.sets {
        let (key, value) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {kv:?}"))?;
        let key = key.trim();
        if key == "persona_mode" {
            bail!("persona_mode is fixed by --model; drop the persona_mode override");
        }
        if (key == "composition") && !model.takes_persona_options() {
            bail!("model {model:?} has no persona; composition does not apply");
        }
        apply_key(&mut rc, key, value.trim())?;
    }
    if let Some(c) = &flags.composition {
        if !model.takes_persona_options() {
            bail!("--composition requires a persona model (jge-t, jge-ag, jge-agt)");
        }
        rc.model.composition = parse_composition(c)?;
    }
    // --model owns the persona mode even when a config file set one.
    rc.model.persona_mode = model.persona_mode();
    if flags.diagonal {
        rc.model.spherical = false;
    } else if flags.spherical {
        rc.model.spherical = true;
    }
    if flags.pi_schedule {
        rc.train.cosine_pi_variant = true;
    }
    if let Some(seed) = flags.seed {
        rc.train.seed = seed;
    }
    rc.validate()?;
    Ok(rc)
}

/// Load the two relation files and replay the train/val/test split.
pub fn load_split_dataset(
    triples: &Path,
    pairs: &Path,
    split_seed: u64,
) -> Result<Dataset> {
    let d = gausscast::ingest_catalog(triples, pairs)?;
    Ok(gausscast::split_triples(&d, (0.70, 0.15, 0.15), split_seed)?)
}

/// Train one model of the requested family. Returns the checkpoint payload
/// and the epoch report.
pub fn train_model(
    model: ModelArg,
    dataset: &Dataset,
    rc: &RunConfig,
    pretrained: Option<&Path>,
) -> Result<(ModelFamily, TrainReport)> {
    if model.is_gaussian() {
        let table = match pretrained {
            Some(path) => Some(load_pretrained_vectors(path)?),
            None => None,
        };
        let (params, report) = train(dataset, &rc.model, &rc.train, table.as_ref())?;
        Ok((ModelFamily::Gaussian(params), report))
    } else {
        if pretrained.is_some() {
            bail!("--pretrained-vectors applies to keyword Gaussians; the baseline has none");
        }
        let (params, report) = transe_train(dataset, rc.model.dim, &rc.train)?;
        Ok((ModelFamily::TransE(params), report))
    }
}

pub fn checkpoint_vocab(d: &Dataset) -> CheckpointVocab {
    CheckpointVocab {
        movies: d.movies.names().to_vec(),
        actors: d.actors.names().to_vec(),
        keywords: d.keywords.names().to_vec(),
    }
}

/// Translate a dataset's ids into checkpoint ids by name; every referenced
/// name must exist in the checkpoint vocabulary.
pub struct IdMap {
    movies: Vec<usize>,
    actors: Vec<usize>,
}

impl IdMap {
    pub fn build(d: &Dataset, ckpt: &Checkpoint) -> Result<IdMap> {
        let movie_vocab = Vocab::from_names(ckpt.vocab.movies.iter().cloned());
        let actor_vocab = Vocab::from_names(ckpt.vocab.actors.iter().cloned());
        let map = |vocab: &Vocab, names: &Vocab, kind: &str| -> Result<Vec<usize>> {
            names
                .names()
                .iter()
                .map(|n| {
                    vocab
                        .get(n)
                        .with_context(|| format!("{kind} {n:?} is not in the checkpoint"))
                })
                .collect()
        };
        Ok(IdMap {
            movies: map(&movie_vocab, &d.movies, "movie")?,
            actors: map(&actor_vocab, &d.actors, "actor")?,
        })
    }

    pub fn movie(&self, dataset_id: usize) -> usize {
        self.movies[dataset_id]
    }

    pub fn actor(&self, dataset_id: usize) -> usize {
        self.actors[dataset_id]
    }
}

/// Cast-prediction queries in checkpoint-id space from a split's triples.
pub fn queries_for_split(
    d: &Dataset,
    ids: &IdMap,
    split: gausscast::Split,
) -> Vec<(usize, PersonaDescriptor, usize)> {
    d.triples_with_split(split)
        .map(|t| (ids.movie(t.movie.index), t.persona, ids.actor(t.actor.index)))
        .collect()
}

fn gender_code(g: Option<gausscast::Gender>) -> &'static str {
    match g {
        Some(g) => g.code(),
        None => "-",
    }
}

/// Write a dataset back out in the standard TSV formats. Ages are emitted as
/// bucket floors (multiples of five years), which re-ingest to the same
/// buckets.
pub fn write_dataset_tsv(d: &Dataset, triples_path: &Path, pairs_path: &Path) -> Result<()> {
    write_atomic(triples_path, |w| {
        for t in &d.triples {
            let topic = t
                .persona
                .topic_group
                .map_or("-".to_string(), |x| x.to_string());
            let age = t
                .persona
                .age_bucket
                .map_or("-".to_string(), |b| (b * 5).to_string());
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                d.movies.name(t.movie.index),
                d.actors.name(t.actor.index),
                t.cast_rank,
                topic,
                age,
                gender_code(t.persona.gender),
            )?;
        }
        Ok(())
    })?;
    write_atomic(pairs_path, |w| {
        for p in &d.pairs {
            writeln!(w, "{}\t{}", d.movies.name(p.movie.index), d.keywords.name(p.keyword.index))?;
        }
        Ok(())
    })
}
