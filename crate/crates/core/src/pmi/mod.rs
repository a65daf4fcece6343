//! Positive-only multiple-instance learning.
//!
//! Every bag is collapsed into a virtual instance by convex weights that
//! minimise the variance of the virtual instances; a one-class SVM is trained
//! on them; bags whose virtual instance is inside the boundary but whose real
//! instances are not trigger a retraining that adds one representative per
//! bag. An optional oracle then confirms or rejects the captured cluster.

mod fit;
mod io;
mod lambda;
mod model;
mod query;

pub use fit::{
    fit_pmi, max_query_bound, query_count_formula, PassSummary, PmiConfig, PmiModel, TerminationReason,
    train_with_representatives,
};
pub use io::SavedModel;
pub use lambda::{build_lambda_q, fit_lambda, variance_objective, LambdaSolution};
pub use model::{
    bag_and_virtual_labels_agree, needs_retrain, outlier_bag_fraction, retrain, select_representatives, train_one_class,
    train_once, BagDecision, BagRole, DecisionFunction, OneClassModel, RetrainBound, TrainOptions, TrainingSet,
};
pub use query::{
    remove_positive_labeled, select_query, AlwaysNegative, GroundTruthOracle, LabelOracle, NoOracle, QueryLog,
    QueryRecord, Removal,
};
