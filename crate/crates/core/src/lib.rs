//! Fiedler (spectral-gap) regularization for feedforward neural networks.
//!
//! A network is viewed as a weighted undirected graph whose vertices are its
//! units and whose edge weights are the absolute values of its weights. The
//! crate builds that graph and its Laplacian `L = D - |W|`, computes the
//! algebraic connectivity `lambda2` and its eigenvector, penalizes
//! connectivity during SGD training through the variational bound
//! `u^T L u >= lambda2`, and evaluates Rademacher-complexity generalization
//! bounds for the resulting weighted-L1 constrained networks.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`graph`] | weighted graph of a network, cuts, components, brute-force edge expansion |
//! | [`laplacian`] | sparse Laplacian, quadratic forms, incremental updates |
//! | [`spectral`] | Fiedler pair, test-vector bound, eigenvalue gradients, Cheeger and Weyl bounds |
//! | [`network`] | MLP forward pass, cross-entropy backprop, checkpoints |
//! | [`regularization`] | Fiedler, L1, weight decay penalties and dropout |
//! | [`trainer`] | SGD with momentum and periodic test-vector refresh |
//! | [`bounds`] | Rademacher and generalization bound calculators |
//! | [`data`] | IDX, CSV and synthetic datasets |
//! | [`experiment`] | multi-seed regularizer comparison and reports |

// `!(x >= 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod laplacian;
pub mod network;
pub mod regularization;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{build_graph, WeightedGraph};
pub use laplacian::{laplacian, LaplacianMatrix};
pub use network::{init_model, Activation, Batch, MlpModel};
pub use spectral::{fiedler_pair, FiedlerPair};

