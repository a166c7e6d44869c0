//! Numeric kernels, reverse-mode autodiff and the micro encoder-decoder.

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod model;
pub mod optim;
pub mod rope;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use attention::{key_biased_attention, AttnParams, Mask};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{loss_mtp, loss_prior, loss_seq, total_loss};
pub use model::{EncodedImage, KvCache, MicroModel, ModelConfig};
pub use optim::{Adam, Decay, LrSchedule};
pub use rope::rope_2d;
pub use scalar::Scalar;
pub use tape::{Grads, Graph, ParamId, ParamStore, Var};
pub use tensor::Tensor;
pub use train::{train, write_curve_csv, StepMetrics, TrainConfig, TrainSample, Trainer};
