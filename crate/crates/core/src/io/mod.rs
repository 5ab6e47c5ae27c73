//! Images, sequences, synthetic data, patch cropping, checkpoints and
//! output formats.

mod checkpoint;
mod crop;
mod formats;
mod image;
mod sequence;
mod synth;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use crop::crop_resize_patch;
pub use formats::{
    config_hash, read_json, write_json, write_text, ArtifactVersions, RunManifest, TrajectoryDocument,
};
pub use image::Image;
pub use sequence::{format_groundtruth, load_sequence, parse_groundtruth, save_sequence, Sequence, GROUNDTRUTH_FILE};
pub use synth::{synth_sequence, SynthSpec, SynthTrack};
