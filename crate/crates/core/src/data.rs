//! Entity vocabularies, relation-file ingestion, filtering, age
//! discretization, and deterministic dataset splits.
//!
//! Two relation files feed the model: movie-persona-actor triples and
//! movie-keyword pairs. Genres and keywords share one vocabulary; a record's
//! persona descriptor may have any subset of its fields absent.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::invalid;

/// Number of latent persona topic groups.
pub const TOPIC_GROUPS: usize = 50;
/// Number of 5-year age buckets covering ages 0..=120.
pub const AGE_BUCKETS: usize = 24;
/// Number of gender categories.
pub const GENDERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Movie,
    Actor,
    Keyword,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityKind::Movie => write!(f, "movie"),
            EntityKind::Actor => write!(f, "actor"),
            EntityKind::Keyword => write!(f, "keyword"),
        }
    }
}

/// Index into one kind's vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntityId {
    pub kind: EntityKind,
    pub index: usize,
}

impl EntityId {
    pub fn movie(index: usize) -> Self {
        EntityId { kind: EntityKind::Movie, index }
    }
    pub fn actor(index: usize) -> Self {
        EntityId { kind: EntityKind::Actor, index }
    }
    pub fn keyword(index: usize) -> Self {
        EntityId { kind: EntityKind::Keyword, index }
    }

    pub(crate) fn expect_kind(&self, kind: EntityKind) -> Result<usize> {
        if self.kind != kind {
            return Err(invalid!("expected a {kind} id, got a {} id", self.kind));
        }
        Ok(self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Female,
    Male,
    Other,
}

impl Gender {
    pub fn index(self) -> usize {
        match self {
            Gender::Female => 0,
            Gender::Male => 1,
            Gender::Other => 2,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
            Gender::Other => "O",
        }
    }
}

/// Persona descriptor for one movie-actor relation. Any field may be absent
/// (most relations carry no topic group); absent fields contribute a zero
/// vector when the persona translation is composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PersonaDescriptor {
    pub topic_group: Option<usize>,
    pub age_bucket: Option<usize>,
    pub gender: Option<Gender>,
}

impl PersonaDescriptor {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_topic(topic_group: usize) -> Self {
        PersonaDescriptor { topic_group: Some(topic_group), ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.topic_group.is_none() && self.age_bucket.is_none() && self.gender.is_none()
    }
}

/// A movie-persona-actor relation, plus the cast rank of the actor in the
/// movie's billing order (used by entity filtering).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub movie: EntityId,
    pub actor: EntityId,
    pub persona: PersonaDescriptor,
    pub cast_rank: u32,
}

/// A movie-keyword relation. Genres and keywords share the keyword vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub movie: EntityId,
    pub keyword: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A string-name vocabulary with stable first-appearance ordering.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let mut v = Vocab::new();
        for n in names {
            v.intern(&n);
        }
        v
    }
}

/// Vocabularies plus the relation lists and the per-triple split tags.
/// Immutable after construction; all movie-keyword pairs are training data.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub movies: Vocab,
    pub actors: Vocab,
    pub keywords: Vocab,
    pub triples: Vec<Triple>,
    pub pairs: Vec<Pair>,
    /// Parallel to `triples`. Freshly ingested datasets tag everything Train.
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn triples_with_split(&self, split: Split) -> impl Iterator<Item = &Triple> {
        self.triples
            .iter()
            .zip(self.splits.iter())
            .filter(move |(_, s)| **s == split)
            .map(|(t, _)| t)
    }

    /// Per-movie keyword positives over training pairs (all pairs are Train).
    pub fn keyword_positives(&self) -> HashMap<usize, HashSet<usize>> {
        let mut map: HashMap<usize, HashSet<usize>> = HashMap::new();
        for p in &self.pairs {
            map.entry(p.movie.index).or_default().insert(p.keyword.index);
        }
        map
    }

    /// Per-movie actor positives over training triples, ignoring persona:
    /// an actor that appears with a movie in any training triple is never a
    /// valid negative for that movie.
    pub fn actor_positives(&self) -> HashMap<usize, HashSet<usize>> {
        let mut map: HashMap<usize, HashSet<usize>> = HashMap::new();
        for t in self.triples_with_split(Split::Train) {
            map.entry(t.movie.index).or_default().insert(t.actor.index);
        }
        map
    }
}

/// One expert judgment: `winner` was ranked more versatile than `loser` by a
/// majority of `majority_count` judges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertPair {
    pub winner: usize,
    pub loser: usize,
    pub majority_count: u32,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| {
        invalid!("cannot open {}: {e}", path.display())
    })?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        out.push(line?);
    }
    Ok(out)
}

fn parse_optional<T, F>(field: &str, parse: F) -> std::result::Result<Option<T>, String>
where
    F: FnOnce(&str) -> std::result::Result<T, String>,
{
    if field == "-" {
        Ok(None)
    } else {
        parse(field).map(Some)
    }
}

/// Discretize an age in years into one of 24 five-year buckets.
/// The final bucket is closed: 120 maps to bucket 23.
pub fn discretize_age(age_years: f64) -> Result<usize> {
    if !(0.0..=120.0).contains(&age_years) {
        return Err(invalid!("age {age_years} outside [0, 120]"));
    }
    Ok(((age_years / 5.0).floor() as usize).min(AGE_BUCKETS - 1))
}

/// Read the triples and pairs files into a `Dataset`.
///
/// Triples file: `movie TAB actor TAB cast_rank TAB topic_group|- TAB
/// age_years|- TAB gender(F|M|O)|-`. Pairs file: `movie TAB keyword`.
/// Duplicate records are dropped; every malformed line is a hard error that
/// names the line.
pub fn ingest_catalog(triples_file: &Path, pairs_file: &Path) -> Result<Dataset> {
    let mut movies = Vocab::new();
    let mut actors = Vocab::new();
    let mut keywords = Vocab::new();

    let mut triples = Vec::new();
    let mut seen_triples = HashSet::new();
    for (i, line) in read_lines(triples_file)?.iter().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(parse_err(
                triples_file,
                lineno,
                format!("expected 6 tab-separated fields, found {}", cols.len()),
            ));
        }
        let cast_rank: u32 = cols[2]
            .parse()
            .map_err(|_| parse_err(triples_file, lineno, format!("bad cast rank {:?}", cols[2])))?;
        let topic_group = parse_optional(cols[3], |s| {
            let t: usize = s.parse().map_err(|_| format!("bad topic group {s:?}"))?;
            if t >= TOPIC_GROUPS {
                return Err(format!("topic group {t} outside [0, {TOPIC_GROUPS})"));
            }
            Ok(t)
        })
        .map_err(|msg| parse_err(triples_file, lineno, msg))?;
        let age_bucket = parse_optional(cols[4], |s| {
            let age: f64 = s.parse().map_err(|_| format!("bad age {s:?}"))?;
            discretize_age(age).map_err(|e| e.to_string())
        })
        .map_err(|msg| parse_err(triples_file, lineno, msg))?;
        let gender = parse_optional(cols[5], |s| match s {
            "F" => Ok(Gender::Female),
            "M" => Ok(Gender::Male),
            "O" => Ok(Gender::Other),
            _ => Err(format!("bad gender {s:?} (expected F, M, O, or -)")),
        })
        .map_err(|msg| parse_err(triples_file, lineno, msg))?;

        let triple = Triple {
            movie: EntityId::movie(movies.intern(cols[0])),
            actor: EntityId::actor(actors.intern(cols[1])),
            persona: PersonaDescriptor { topic_group, age_bucket, gender },
            cast_rank,
        };
        if seen_triples.insert(triple) {
            triples.push(triple);
        }
    }

    let mut pairs = Vec::new();
    let mut seen_pairs = HashSet::new();
    for (i, line) in read_lines(pairs_file)?.iter().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(parse_err(
                pairs_file,
                lineno,
                format!("expected 2 tab-separated fields, found {}", cols.len()),
            ));
        }
        let pair = Pair {
            movie: EntityId::movie(movies.intern(cols[0])),
            keyword: EntityId::keyword(keywords.intern(cols[1])),
        };
        if seen_pairs.insert(pair) {
            pairs.push(pair);
        }
    }

    let splits = vec![Split::Train; triples.len()];
    Ok(Dataset { movies, actors, keywords, triples, pairs, splits })
}

/// Read an expert pairs file (`winner TAB loser TAB majority_count`) and map
/// the names through the dataset's actor vocabulary.
pub fn read_expert_pairs(path: &Path, actors: &Vocab) -> Result<Vec<ExpertPair>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 3 tab-separated fields, found {}", cols.len()),
            ));
        }
        let winner = actors
            .get(cols[0])
            .ok_or_else(|| parse_err(path, lineno, format!("unknown actor {:?}", cols[0])))?;
        let loser = actors
            .get(cols[1])
            .ok_or_else(|| parse_err(path, lineno, format!("unknown actor {:?}", cols[1])))?;
        let majority_count: u32 = cols[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad majority count {:?}", cols[2])))?;
        out.push(ExpertPair { winner, loser, majority_count });
    }
    Ok(out)
}

/// Drop triples beyond `max_cast_rank`, then iteratively remove entities with
/// fewer than `min_relations` remaining relations until a fixpoint: removing
/// one entity can drop another below the threshold. Vocabularies are rebuilt
/// over the survivors (original order preserved).
pub fn filter_entities(
    d: &Dataset,
    min_relations: usize,
    max_cast_rank: Option<u32>,
) -> Result<Dataset> {
    if min_relations < 1 {
        return Err(invalid!("min_relations must be >= 1, got {min_relations}"));
    }

    let mut triples: Vec<(Triple, Split)> = d
        .triples
        .iter()
        .zip(d.splits.iter())
        .filter(|(t, _)| max_cast_rank.is_none_or(|r| t.cast_rank <= r))
        .map(|(t, s)| (*t, *s))
        .collect();
    let mut pairs: Vec<Pair> = d.pairs.clone();

    loop {
        let mut movie_deg = vec![0usize; d.movies.len()];
        let mut actor_deg = vec![0usize; d.actors.len()];
        let mut keyword_deg = vec![0usize; d.keywords.len()];
        for (t, _) in &triples {
            movie_deg[t.movie.index] += 1;
            actor_deg[t.actor.index] += 1;
        }
        for p in &pairs {
            movie_deg[p.movie.index] += 1;
            keyword_deg[p.keyword.index] += 1;
        }

        let movie_ok = |i: usize| movie_deg[i] >= min_relations;
        let actor_ok = |i: usize| actor_deg[i] >= min_relations;
        let keyword_ok = |i: usize| keyword_deg[i] >= min_relations;

        let before = triples.len() + pairs.len();
        triples.retain(|(t, _)| movie_ok(t.movie.index) && actor_ok(t.actor.index));
        pairs.retain(|p| movie_ok(p.movie.index) && keyword_ok(p.keyword.index));
        if triples.len() + pairs.len() == before {
            break;
        }
    }

    if triples.is_empty() {
        return Err(invalid!(
            "no triples survive filtering (min_relations={min_relations}, max_cast_rank={max_cast_rank:?})"
        ));
    }

    // Rebuild vocabularies over the survivors.
    let mut movies = Vocab::new();
    let mut actors = Vocab::new();
    let mut keywords = Vocab::new();
    for i in 0..d.movies.len() {
        if triples.iter().any(|(t, _)| t.movie.index == i) || pairs.iter().any(|p| p.movie.index == i)
        {
            movies.intern(d.movies.name(i));
        }
    }
    for i in 0..d.actors.len() {
        if triples.iter().any(|(t, _)| t.actor.index == i) {
            actors.intern(d.actors.name(i));
        }
    }
    for i in 0..d.keywords.len() {
        if pairs.iter().any(|p| p.keyword.index == i) {
            keywords.intern(d.keywords.name(i));
        }
    }

    let remap = |old: &Vocab, new: &Vocab, id: usize| new.get(old.name(id)).expect("survivor");
    let (triples, splits): (Vec<Triple>, Vec<Split>) = triples
        .into_iter()
        .map(|(t, s)| {
            (
                Triple {
                    movie: EntityId::movie(remap(&d.movies, &movies, t.movie.index)),
                    actor: EntityId::actor(remap(&d.actors, &actors, t.actor.index)),
                    persona: t.persona,
                    cast_rank: t.cast_rank,
                },
                s,
            )
        })
        .unzip();
    let pairs = pairs
        .into_iter()
        .map(|p| Pair {
            movie: EntityId::movie(remap(&d.movies, &movies, p.movie.index)),
            keyword: EntityId::keyword(remap(&d.keywords, &keywords, p.keyword.index)),
        })
        .collect();

    Ok(Dataset { movies, actors, keywords, triples, pairs, splits })
}

/// Tag every triple Train/Val/Test by a seeded uniform shuffle. Realized
/// split sizes match the ratios within one element; pairs always stay Train.
pub fn split_triples(d: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (tr, va, te) = ratios;
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(invalid!("split ratios must sum to 1, got {ratios:?}"));
    }
    if tr < 0.0 || va < 0.0 || te < 0.0 {
        return Err(invalid!("split ratios must be nonnegative, got {ratios:?}"));
    }
    let n = d.triples.len();
    if n < 3 {
        return Err(invalid!("need at least 3 triples to split, got {n}"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // Largest-remainder apportionment keeps every realized size within one
    // element of n * ratio.
    let n_train = (n as f64 * tr).round() as usize;
    let n_val = (n as f64 * va).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);

    let mut splits = vec![Split::Test; n];
    for &i in order.iter().take(n_train) {
        splits[i] = Split::Train;
    }
    for &i in order.iter().skip(n_train).take(n_val) {
        splits[i] = Split::Val;
    }

    Ok(Dataset { splits, ..d.clone() })
}

/// Partition `actors` into two disjoint halves and split the expert pairs:
/// pairs with both endpoints in the validation half are validation pairs,
/// everything else is a test pair, so every test pair has at least one
/// endpoint outside the validation actor set.
pub fn split_versatility_actors(
    actors: &[usize],
    expert_pairs: &[ExpertPair],
    seed: u64,
) -> Result<(Vec<ExpertPair>, Vec<ExpertPair>)> {
    if expert_pairs.is_empty() {
        return Err(invalid!("expert pair list is empty"));
    }
    let actor_set: HashSet<usize> = actors.iter().copied().collect();
    for p in expert_pairs {
        if !actor_set.contains(&p.winner) || !actor_set.contains(&p.loser) {
            return Err(invalid!(
                "expert pair ({}, {}) references an actor outside the given set",
                p.winner,
                p.loser
            ));
        }
    }

    let mut ordered: Vec<usize> = actor_set.into_iter().collect();
    ordered.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ordered.shuffle(&mut rng);
    let val: HashSet<usize> = ordered.iter().take(ordered.len().div_ceil(2)).copied().collect();

    let (val_pairs, test_pairs) = expert_pairs
        .iter()
        .cloned()
        .partition(|p| val.contains(&p.winner) && val.contains(&p.loser));
    Ok((val_pairs, test_pairs))
}
