//! Skill-importance ranking for job titles.
//!
//! The pipeline turns a corpus of `(title, skills)` records into a ranker:
//!
//! 1. [`corpus`] cleans, deduplicates and splits the records.
//! 2. [`embedding`] maps titles to unit vectors and finds similar-title
//!    neighborhoods by exact cosine scan.
//! 3. [`weaklabel`] turns each neighborhood into soft targets: the fraction
//!    of neighbors that carry each skill.
//! 4. [`model`] fits a linear layer with a sigmoid output per skill on top of
//!    frozen title embeddings.
//! 5. [`idf`] demotes skills that appear in almost every title.
//! 6. [`rankeval`] orders skills and scores rankings with MAP@k.
//!
//! [`service`] wraps a trained head for request/response style ranking.

pub mod corpus;
pub mod embedding;
mod error;
pub mod idf;
pub mod model;
pub mod rankeval;
pub mod rng;
pub mod service;
pub mod weaklabel;

pub use corpus::{
    generate_synthetic_corpus, normalize_title, parse_corpus, split_dataset, DatasetSplit,
    ParseSummary, SkillId, SyntheticConfig, TitleRecord,
};
pub use embedding::{
    cosine_similarity, fallback_embed, find_similar, EmbeddingStore, EmbeddingVector,
    FallbackEmbedder, NeighborhoodConfig, TitleEncoder,
};
pub use error::{Error, Result};
pub use idf::{boost_scores, compute_idf, IdfConfig, IdfTable, LogBase};
pub use model::{
    bce_loss, forward, gradient, train_head, Gradients, ImportanceVector, LinearHead, Loss,
    SparseTarget, TrainConfig, TrainHistory,
};
pub use rankeval::{average_precision_at_k, mean_average_precision, rank_skills, EvalReport, RankedSkillList};
pub use weaklabel::{build_weak_labels, relative_skill_frequencies, WeakLabelSet};
