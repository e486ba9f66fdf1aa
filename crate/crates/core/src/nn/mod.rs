//! Small dense building blocks with hand-written reverse passes.

pub mod attention;
pub mod block;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod posenc;
pub mod tensor;

pub use attention::{masked_softmax_rows, AttentionCache, MultiHeadAttention};
pub use block::{Block, BlockCache, Mlp, StackCache, TransformerStack};
pub use gradcheck::{check_gradient, gradients_agree, GradCheckReport};
pub use layers::{gelu, gelu_grad, LayerNorm, Linear, LAYER_NORM_EPS};
pub use optim::{AdamW, AdamWConfig};
pub use params::Parameters;
pub use posenc::{sinusoidal_1d, sinusoidal_2d};
pub use tensor::{NamedTensor, TensorError, TensorTable};
