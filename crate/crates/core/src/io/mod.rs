//! Serialization: the weight codec, model container, INQ checkpoints,
//! IDX ingestion and synthetic data.

pub mod codec;
mod checkpoint;
mod container;
mod idx;
mod metrics;
mod model;
mod synth;

pub use checkpoint::{InqCheckpoint, CHECKPOINT_VERSION};
pub use codec::{decode_layer, encode_layer, encoded_bits, Bitstream, Codeword};
pub use container::{
    decode_model, encode_network, encode_quantized, load_model, save_network, save_quantized,
    LoadedModel, StoredModel, MAGIC, VERSION,
};
pub use idx::{encode_idx, load_idx, parse_idx, write_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use metrics::to_csv;
pub use model::{QuantizedLayer, QuantizedModel};
pub use synth::{gen_synthetic, rasterize, SynthKind};
