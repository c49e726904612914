//! File formats, dataset pairing, synthetic data, and checkpointing.

pub mod checkpoint;
pub mod container;
pub mod manifest;
pub mod png;
pub mod posefile;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, load_extractor_weights, save_checkpoint, Checkpoint};
pub use container::{ContainerEntry, TensorContainer, TensorData};
pub use manifest::{read_manifest, write_manifest, PairPaths, MANIFEST_HEADER};
pub use png::{read_png, write_png};
pub use posefile::{read_pose, write_pose, PoseFile};
pub use synthetic::{generate_pair, generate_pair_indexed, SynthPair, SyntheticFigureSpec};
