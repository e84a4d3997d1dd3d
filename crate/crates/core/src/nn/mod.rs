//! Small reverse-mode autodiff engine, layers, Adam and gradient checking.

mod gradcheck;
mod graph;
mod layers;
mod params;
mod tensor;

pub use gradcheck::{grad_check, op_suite, GradCheckReport, OP_EPS, OP_TOL, REL_FLOOR};
pub use graph::{Graph, Var};
pub use layers::{multi_head_attention, LayerNorm, Linear, Mlp, TransformerLayer};
pub use params::{
    adam_step, config_hash, load_checkpoint, save_checkpoint, Binder, Param, ParamStore, WeightDecay,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use tensor::Tensor;
