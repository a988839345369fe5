//! Ternary hash codes learned by continuation.
//!
//! A dense feature network ends in a hash layer whose squashed outputs pass
//! through `tanh((x/α)^k)`. Training sharpens `k` on a schedule so the
//! activation approaches the hard ternary threshold used at test time. The
//! resulting `{-1, 0, +1}` codes are packed into two bitplanes and searched
//! by popcount Hamming distance; retrieval quality is measured with mAP.

pub mod activation;
pub mod codes;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod network;
pub mod retrieval;

pub use activation::{
    hard_ternary, quantization_error, schedule_k, smooth_ternary, smooth_ternary_grad, ActivationConfig,
    ContinuationSchedule, Trit,
};
pub use codes::{encode_binary, hamming, pack, ternarize, unpack, PackedCode, TernaryCode};
pub use error::{Error, Result};
pub use network::{
    cosine_lr, cross_entropy, sgd_momentum_step, train, train_with, Arm, HashActivation, Network, NetworkConfig,
    TrainConfig, TrainLog, TrainOptions, TrainState,
};
pub use retrieval::{
    average_precision, mean_ap, query_topk, ApNormalization, Cutoff, EvalReport, LabelSet, RetrievalIndex,
};

pub use config::{DataSource, ExperimentConfig};
pub use dataset::{gen_synthetic, Dataset, SplitSpec, Splits, SyntheticSpec};
pub use experiment::{run_experiment, two_step_baseline, ExperimentReport};
