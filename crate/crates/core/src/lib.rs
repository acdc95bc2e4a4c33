//! Randomized-rounding quantization for heatmap-based landmark localization.
//!
//! A landmark at sub-pixel position `x` is stored in a heatmap with stride
//! `s` by spreading one unit of activation over the four cells around `x / s`
//! with bilinear weights. Decoding takes the weighted mean of the strongest
//! cells, which reconstructs `x` exactly when the heatmap is exact.
//!
//! Modules:
//! - [`quantizer`]: fractional decomposition, threshold and randomized rounding.
//! - [`encode`] / [`decode`]: heatmap codecs (binary, Gaussian, expected,
//!   sampled; argmax, bias-corrected, quarter-shift, expectation).
//! - [`predict`]: synthetic predictors and annotator models.
//! - [`metrics`]: NME, PCK, coordinate and heatmap losses.
//! - [`oracle`]: brute-force and Monte Carlo checks of the codec guarantees.

pub mod decode;
pub mod encode;
pub mod error;
pub mod heatmap;
pub mod metrics;
pub mod oracle;
pub mod predict;
pub mod quantizer;
pub mod rng;

pub use decode::{
    decode_argmax, decode_argmax_bias_corrected, decode_expectation, decode_quarter_shift,
    select_activation_set, ActivationSet, ActivationStrategy,
};
pub use encode::{
    encode_binary, encode_expected, encode_gaussian, encode_sampled, CenterMode, GaussianConfig,
};
pub use error::{Error, Result};
pub use heatmap::{Dims, HeatmapGrid};
pub use quantizer::{
    decompose, quantize_random_round, quantize_threshold, threshold_bias, ContinuousPoint,
    FractionalDecomposition, GridPoint, Stride, Threshold,
};
pub use rng::RngStream;
