//! Joint Gaussian embeddings of movies, actors, and keywords with persona
//! translation vectors.
//!
//! Every movie, actor, and keyword is a diagonal Gaussian; personae are
//! translation vectors composed from topic-group, age, and gender
//! descriptors. Training contrasts observed movie-keyword pairs and
//! movie-persona-actor triples against sampled negatives under a margin
//! loss. Two evaluation tasks come built in: cast prediction (rank all
//! actors for a movie-persona query) and unsupervised actor versatility
//! ranking read off the learned variances. A point-vector translation
//! baseline, entropy heuristics, a planted-world generator, and the
//! significance machinery round out the experiment kit.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod params;
pub mod similarity;
pub mod synth;
pub mod train;
pub mod transe;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointVocab, ModelFamily};
pub use config::RunConfig;
pub use data::{
    discretize_age, filter_entities, ingest_catalog, read_expert_pairs, split_triples,
    split_versatility_actors, Dataset, EntityId, EntityKind, ExpertPair, Gender, Pair,
    PersonaDescriptor, Split, Triple, Vocab, AGE_BUCKETS, GENDERS, TOPIC_GROUPS,
};
pub use error::{Error, Result};
pub use params::{
    clip_variances, compose_persona_vector, init_params, load_pretrained_vectors, Composition,
    GaussianParam, ModelConfig, ModelParams, PersonaMode, PersonaVector, PretrainedTable,
    VocabSizes,
};
pub use similarity::{
    cast_similarity, log_overlap, movie_keyword_similarity, persona_free_similarity,
    persona_similarity, similarity_gradients, SimKind, SimilarityGradients,
};
pub use synth::{
    generate_planted, oracle_metrics, planted_expert_pairs, OracleReport, PlantedConfig,
    PlantedWorld,
};
pub use train::{
    batch_loss_and_grads, cosine_lr, draw_dropout_mask, hinge, rmsprop_step,
    sample_negative_actor, sample_negative_keyword, train, train_from, DropoutMask, Gradients,
    OptimizerState, TrainConfig, TrainData, TrainItem, TrainReport,
};
pub use transe::{transe_score, transe_train, transe_train_with_norm, Norm, TransEParams};
