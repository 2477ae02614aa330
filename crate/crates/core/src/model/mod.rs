//! Encoder–decoder translation model with speaker-conditioned output layers.

mod accounting;
mod checkpoint;
mod config;
mod seq2seq;

pub use accounting::{count_params, factored_reduction, format_counts, ParamCounts, TensorCount};
pub use checkpoint::{
    load_checkpoint, load_verified, read_header, save_checkpoint, CheckpointHeader, FORMAT_VERSION,
    MAGIC,
};
pub use config::{AdaptationMode, ModelConfig, UnknownSpeakerPolicy};
pub use seq2seq::{
    DecodeContext, DecoderState, ModelLayout, ResolvedSpeaker, Seq2Seq, SpeakerBiasParams,
    StepOutput,
};
