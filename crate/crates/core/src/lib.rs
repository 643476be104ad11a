//! Recovery and prediction of link labels between issue-tracker issues.

pub mod cli;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod experiments;
pub mod ingestion;
pub mod learners;
pub mod link_types;
pub mod matrix;
pub mod scalar;
pub mod synth;
pub mod textprep;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar of the concrete aliases below.
pub type Real = f64;

pub type Matrix = matrix::Matrix<Real>;
pub type EmbeddingModel = encoders::embedding::EmbeddingModel<Real>;
pub type FittedEncoders = encoders::FittedEncoders<Real>;
pub type LogisticRegression = learners::LogisticRegression<Real>;
pub type RandomForest = learners::RandomForest<Real>;
pub type NeuralNetwork = learners::NeuralNetwork<Real>;
pub type TrainedClassifier = learners::TrainedClassifier<Real>;
pub type ModelBundle = experiments::ModelBundle<Real>;
