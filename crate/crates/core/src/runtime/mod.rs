//! Shift-add inference over quantized models and the analysis reports.

mod analysis;
mod shift;

pub use analysis::{
    compression_report, distribution, effective_bitwidth, format_percent, layer_names,
    level_counts, level_label, CompressionReport, DistributionTable, LayerCompression,
};
pub use shift::{
    reconstruct, scale_pow2, shift_forward, to_shift_form, ShiftLayer, ShiftModel, ShiftWeight,
};
