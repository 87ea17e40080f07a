//! Spatial networks, boundary factors and the adaptive-basis solution.

pub mod boundary;
pub mod checkpoint;
pub mod mlp;
pub mod solution;

pub use boundary::{boundary_bundle, product_bundle, BoundaryFactor, BoundaryKind};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use mlp::{
    init_params, mlp_bundle, mlp_bundles, param_apply_update, param_flatten, param_unflatten,
    Activation, Channels, Cotangent, EvalBundle, MlpParams, MlpShape, Tape,
};
pub use solution::{eval_solution, spatial_net_bundle, AdaptiveBasisSolution};
