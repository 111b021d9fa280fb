//! Variable transformations and the seven basic functions.

mod functions;
mod transforms;

pub use functions::{
    eval_basic, eval_subproblem, BasicFunction, Cost, Rotation, TransformChain, COST_CEILING,
};
pub use transforms::{
    apply_asy, apply_lambda, apply_osz, asy_in_place, lambda_in_place, osz_in_place,
    DEFAULT_ASY_BETA, DEFAULT_LAMBDA_ALPHA,
};
