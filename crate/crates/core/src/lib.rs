//! Stroke prediction pipeline: CSV ingest, preprocessing, SMOTE balancing,
//! five classifiers, grid search with stratified cross-validation, and
//! imbalance-aware metrics.

pub mod bayes;
pub mod cli;
pub mod ingest;
pub mod logreg;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod select;
pub mod smote;
pub mod svm;
pub mod tree;

pub use model::{Classifier, Dataset, Label, Learner, ModelError, RngStream};
