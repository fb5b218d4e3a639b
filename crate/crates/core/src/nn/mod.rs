//! Hand-written forward/backward passes, losses and the SGD update.

mod layer;
mod loss;
mod optim;

pub use layer::{sigmoid, ForwardCache, Grads, Layer, LayerKind, Mode};
pub use loss::{bce_loss, l2_penalty, sigmoid_bce_logit_grad, BceOutput, BCE_EPS};
pub use optim::{sgd_step, Sgd};
