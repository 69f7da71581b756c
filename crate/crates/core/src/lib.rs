//! Curriculum-learning knowledge distillation for dense retrieval.
//!
//! A hashed-bag-of-words bi-encoder student is trained to mimic a teacher's
//! ranking of its own top retrieved documents, in iterations that move from
//! fine-grained to coarse-grained labels.

pub mod config;
pub mod curriculum;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod loss;
pub mod synth;
pub mod teacher;
pub mod trainer;

pub use curriculum::{CurriculumSchedule, IterationConfig, TrainingDataset};
pub use data::{Corpus, Document, Qrels, Query, QuerySet, RankedEntry, RankedList};
pub use encoder::{EncoderParams, FeaturizerConfig, Gradients};
pub use error::{Error, Result};
pub use index::DenseIndex;
pub use teacher::TeacherAdapter;
pub use trainer::{run_curriculum, TrainOptions, Validation};
