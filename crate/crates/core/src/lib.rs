//! Cross-lingual teacher-student text classification.
//!
//! A sparse L1 logistic regression trained on labeled source-language
//! documents yields a handful of indicative seed words per class. Their
//! translations, carrying the full weight columns, form a teacher over the
//! target vocabulary; the teacher pseudo-labels unlabeled target documents
//! and a student trained on those labels is then used to relabel the whole
//! corpus over further rounds.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the precision for common use.

pub mod corpus_io;
pub mod cotrain;
mod error;
pub mod evaluation;
pub mod noise;
pub mod pipeline;
pub mod scalar;
pub mod seed_transfer;
pub mod sparse_logreg;
pub mod student;
pub mod synth;
pub mod teacher;
pub mod vectorizer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type WeightMatrixF64 = sparse_logreg::WeightMatrix<f64>;
pub type WeightMatrixF32 = sparse_logreg::WeightMatrix<f32>;
pub type TeacherF64 = teacher::Teacher<f64>;
pub type TeacherF32 = teacher::Teacher<f32>;
pub type StudentModelF64 = student::StudentModel<f64>;
pub type StudentModelF32 = student::StudentModel<f32>;
pub type DocTermMatrixF64 = vectorizer::DocTermMatrix<f64>;
pub type DocTermMatrixF32 = vectorizer::DocTermMatrix<f32>;
pub type SeedSetF64 = seed_transfer::SeedSet<f64>;
pub type TeacherMatrixF64 = seed_transfer::TeacherMatrix<f64>;
pub type PipelineOutputsF64 = pipeline::PipelineOutputs<f64>;
