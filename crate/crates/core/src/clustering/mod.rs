//! Clustering of representations into `k` recurring states.

mod admm;
mod dp;
mod gmm;
mod kmeans;
mod model;
mod sampler;
mod ticc;

pub use admm::{
    glasso_objective, soft_threshold, toeplitz_glasso_admm, AdmmConfig, AdmmSolution, ToeplitzGroups,
};
pub use dp::{assign_dp, path_cost};
pub use kmeans::{kmeans_fit, KMeansFit, KMeansModel, DEFAULT_RESTARTS};
pub use sampler::BlockToeplitzGaussian;
pub use ticc::{ticc_fit, TiccCluster, TiccConfig, TiccFit, TiccModel};
pub use model::{
    export_assignments_csv, fit_clusters, import_assignments_csv, write_assignments_csv, Algorithm, Assignment,
    ClusterModel, ClusteringConfig,
};
