//! The CNN classifier over dynamic images, its optimizer, and training.

mod network;
mod optim;
mod train;
mod weights;

pub use network::{
    backward, forward, logit_gradient, loss, predict_proba, tensor_shapes, Forward, ForwardCache,
    Gradients, InputShape, Mode, ModelParams, Tensor, CLASSES, CONV1_CHANNELS, CONV2_CHANNELS,
    HIDDEN, LOG_CLAMP, TENSOR_NAMES,
};
pub use optim::{adam_step, lr_schedule, AdamState};
pub use train::{
    accuracy_of, evaluate, frame_to_input, input_shape_of, predicted_class, train, EpochRecord,
    Sample, ScheduleUnit, TrainConfig, TrainTrace,
};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights};
