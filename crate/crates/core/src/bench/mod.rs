//! Evaluation harness: dataset construction, augmentation strategies,
//! downstream classifiers and G-mean reporting.

mod experiment;
mod features;
mod metrics;
mod mlp;
mod pca;
mod smote;
mod split;
mod synthetic;
mod tree;

pub use experiment::{
    derive_seed, fit_classifier_predict, metrics_csv, mix, run_experiment, synthetic_count, tail_mean_abs_loss_d,
    train_gan, Cell, ClassifierKind, Dataset, ExperimentConfig, ExperimentReport, GanRun, MixPolicy, Projection,
    Strategy,
};
pub use features::Featurizer;
pub use metrics::{g_mean, ConfusionMatrix};
pub use mlp::{Mlp, MlpConfig};
pub use pca::{covariance, jacobi_eigen, project_2d, projections_csv, Origin, Pca, ProjectedPoint};
pub use smote::{nearest_neighbours, smote, smote_matrix, SmoteDraw};
pub use split::{build_dataset, format_ratio, parse_ratio, Split, SplitCounts, SplitSpec};
pub use synthetic::{
    make_synthetic_benchmark, FeatureTruth, GroundTruth, SyntheticData, SyntheticSpec, SYNTHETIC_CHANNEL,
    SYNTHETIC_FAILURE, SYNTHETIC_NORMAL, SYNTHETIC_TARGET,
};
pub use tree::{DecisionTree, ForestConfig, RandomForest};
