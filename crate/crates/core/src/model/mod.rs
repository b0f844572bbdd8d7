//! The segmentation network: architecture description, flat parameters,
//! forward/reverse passes, optimizer and checkpoint files.

mod checkpoint;
mod network;
mod optim;
mod params;
mod spec;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, MAGIC};
pub use network::{backward, data_loss_and_grad, forward, forward_traced, loss_and_grad, ForwardTrace};
pub(crate) use network::add_weight_penalty;
pub use optim::{sgd_step, SgdState};
pub use params::{init_model, BlockKind, ModelParams, ParamBlock, ParamLayout};
pub use spec::{Layer, ModelSpec, Shape};
