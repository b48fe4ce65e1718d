//! The trainable network, its configuration, the synthetic dataset, the
//! trainer/evaluator and checkpoints.

mod check;
mod checkpoint;
mod config;
mod data;
mod dvt;
mod train;

pub use check::{gradcheck_model, perturb_zero_init, probe_clip, tiny_config};
pub use checkpoint::{load_checkpoint, restore_params, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::{parse_kv, KeyValue, ModelConfig, RunConfig, TrainConfig};
pub use data::{
    gen_dataset, generate_clip, load_manifest, read_manifest, write_dataset, Direction, SyntheticDatasetSpec,
    Trajectory, MANIFEST_NAME,
};
pub use dvt::{
    build_model, Block, Classifier, Dvt, ForwardOptions, ForwardOutput, LayerNormParams, Mlp, ModelInput, LN_EPS,
};
pub use train::{
    evaluate, evaluate_with_workers, prepare_examples, train, EpochMetrics, EvalMetrics, Example, TrainState,
};
