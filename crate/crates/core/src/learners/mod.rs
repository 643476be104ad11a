//! Classifiers, the majority baseline and SMOTE oversampling.

pub mod classifier;
pub mod forest;
pub mod logistic;
pub mod neural;
pub mod smote;

pub use classifier::{
    prepare_training_rows, ClassifierKind, ClassifierSpec, HyperKey, HyperValue, ModelParams, TrainedClassifier,
    TrainingRows,
};
pub use forest::{ForestOptions, MaxFeatures, RandomForest, Voting};
pub use logistic::{LogisticOptions, LogisticRegression};
pub use neural::{NeuralNetwork, NeuralOptions};
pub use smote::{smote_oversample, Oversampled, RowOrigin};
