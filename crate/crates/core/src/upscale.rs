//! Depth-upscaling analysis: find saturated layers and plan their duplication.
//!
//! A transformer layer that barely rotates its input has stopped doing much
//! work; duplicating exactly those layers grows the model's depth while
//! disturbing its function as little as possible. The saturation score of a
//! layer is the mean cosine similarity between its per-token input and
//! output activations — near 1 for pass-through layers — and the upscale
//! plan replays the original layer sequence with each selected layer
//! appearing twice in a row.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::matrix_io::read_matrix_csv;
use crate::num::{pairwise_mean, pairwise_sum, Real};

/// Row norm below which a token is treated as degenerate and excluded.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Errors from activation validation, selection, and planning.
#[derive(Debug, Error)]
pub enum UpscaleError {
    /// Input/output shapes disagree within or across layers.
    #[error("activation shape mismatch at layer {layer}: {detail}")]
    ShapeMismatch {
        /// Offending layer index.
        layer: usize,
        /// What disagreed.
        detail: String,
    },
    /// An activation entry was NaN or infinite.
    #[error("non-finite activation in layer {layer}")]
    NonFinite {
        /// Offending layer index.
        layer: usize,
    },
    /// Every token of a layer had (near-)zero input or output, so no cosine
    /// is defined anywhere.
    #[error("layer {layer}: all tokens degenerate, saturation undefined")]
    AllTokensDegenerate {
        /// Offending layer index.
        layer: usize,
    },
    /// A duplication index does not name a layer.
    #[error("layer index {index} out of range for {layers} layers")]
    IndexOutOfRange {
        /// The bad index.
        index: usize,
        /// Number of layers available.
        layers: usize,
    },
    /// The selection parameters cannot produce a meaningful plan.
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    /// The activation manifest or a file it references failed to load.
    #[error("activation manifest: {0}")]
    Manifest(String),
}

/// Per-layer (input, output) activation matrices, token rows by hidden
/// columns, shape-checked on construction.
#[derive(Clone, Debug)]
pub struct LayerActivations<T: Real> {
    layers: Vec<(Array2<T>, Array2<T>)>,
}

impl<T: Real> LayerActivations<T> {
    /// Validates that every layer's input and output share one shape, that
    /// all layers agree on that shape, and that every entry is finite.
    pub fn new(layers: Vec<(Array2<T>, Array2<T>)>) -> Result<Self, UpscaleError> {
        if layers.is_empty() {
            return Err(UpscaleError::InvalidSelection("no layers supplied".into()));
        }
        let reference = layers[0].0.dim();
        if reference.0 == 0 || reference.1 == 0 {
            return Err(UpscaleError::ShapeMismatch {
                layer: 0,
                detail: format!("empty activation matrix {}x{}", reference.0, reference.1),
            });
        }
        for (index, (input, output)) in layers.iter().enumerate() {
            if input.dim() != output.dim() {
                return Err(UpscaleError::ShapeMismatch {
                    layer: index,
                    detail: format!("input {:?} vs output {:?}", input.dim(), output.dim()),
                });
            }
            if input.dim() != reference {
                return Err(UpscaleError::ShapeMismatch {
                    layer: index,
                    detail: format!("layer shape {:?} vs layer 0 shape {:?}", input.dim(), reference),
                });
            }
            if input.iter().chain(output.iter()).any(|v| !v.is_finite()) {
                return Err(UpscaleError::NonFinite { layer: index });
            }
        }
        Ok(LayerActivations { layers })
    }

    /// Number of layers.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// One layer's (input, output) pair.
    pub fn layer(&self, index: usize) -> (&Array2<T>, &Array2<T>) {
        (&self.layers[index].0, &self.layers[index].1)
    }
}

/// Mean per-token cosine similarity between input and output rows.
///
/// Tokens whose input or output norm falls below [`DEGENERATE_NORM`] carry
/// no direction and are excluded. Returns the mean over surviving tokens and
/// how many were excluded, or `None` when nothing survives.
pub fn layer_cosine<T: Real>(input: &Array2<T>, output: &Array2<T>) -> Option<(T, usize)> {
    let floor = T::from_f64(DEGENERATE_NORM);
    let mut cosines = Vec::with_capacity(input.nrows());
    let mut excluded = 0usize;
    for (row_in, row_out) in input.rows().into_iter().zip(output.rows()) {
        let dot_terms: Vec<T> = row_in.iter().zip(row_out.iter()).map(|(&a, &b)| a * b).collect();
        let in_sq: Vec<T> = row_in.iter().map(|&a| a * a).collect();
        let out_sq: Vec<T> = row_out.iter().map(|&b| b * b).collect();
        let norm_in = pairwise_sum(&in_sq).sqrt();
        let norm_out = pairwise_sum(&out_sq).sqrt();
        if norm_in < floor || norm_out < floor {
            excluded += 1;
            continue;
        }
        cosines.push(pairwise_sum(&dot_terms) / (norm_in * norm_out));
    }
    if cosines.is_empty() {
        return None;
    }
    Some((pairwise_mean(&cosines), excluded))
}

/// Saturation scores for every layer of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    /// Mean input/output cosine per layer, in layer order.
    pub scores: Vec<f64>,
    /// Degenerate tokens excluded from each layer's mean.
    pub excluded_token_counts: Vec<usize>,
}

/// Scores every layer; errors if any layer has no usable token.
pub fn build_saturation_report<T: Real>(
    activations: &LayerActivations<T>,
) -> Result<SaturationReport, UpscaleError> {
    let mut scores = Vec::with_capacity(activations.num_layers());
    let mut excluded_token_counts = Vec::with_capacity(activations.num_layers());
    for index in 0..activations.num_layers() {
        let (input, output) = activations.layer(index);
        let (score, excluded) =
            layer_cosine(input, output).ok_or(UpscaleError::AllTokensDegenerate { layer: index })?;
        scores.push(score.to_f64());
        excluded_token_counts.push(excluded);
    }
    Ok(SaturationReport { scores, excluded_token_counts })
}

/// How to pick layers for duplication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// The highest-scoring `fraction` of layers, count rounded up.
    Fraction(f64),
    /// Every layer whose score is at least the threshold.
    Threshold(f64),
}

/// Picks the layers to duplicate, returned in ascending layer order.
///
/// Fraction mode selects `ceil(fraction * layers)` layers (computed with a
/// small epsilon so exact products don't round up); score ties are broken
/// toward the deeper layer.
pub fn select_saturated(scores: &[f64], mode: SelectionMode) -> Result<Vec<usize>, UpscaleError> {
    if scores.is_empty() {
        return Err(UpscaleError::InvalidSelection("no scores to select from".into()));
    }
    match mode {
        SelectionMode::Fraction(f) => {
            if !(f.is_finite() && f > 0.0 && f <= 1.0) {
                return Err(UpscaleError::InvalidSelection(format!("fraction {f} outside (0, 1]")));
            }
            let count = ((f * scores.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            let count = count.min(scores.len());
            let mut order: Vec<usize> = (0..scores.len()).collect();
            // Highest score first; equal scores prefer the deeper layer.
            order.sort_by(|&a, &b| {
                scores[b].partial_cmp(&scores[a]).expect("finite scores").then(b.cmp(&a))
            });
            let mut selected: Vec<usize> = order.into_iter().take(count).collect();
            selected.sort_unstable();
            Ok(selected)
        }
        SelectionMode::Threshold(t) => {
            if !t.is_finite() {
                return Err(UpscaleError::InvalidSelection(format!("threshold {t} not finite")));
            }
            Ok((0..scores.len()).filter(|&i| scores[i] >= t).collect())
        }
    }
}

/// A depth-upscaled layer arrangement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpscalePlan {
    /// Layer count of the source model.
    pub source_layers: usize,
    /// Layers that appear twice, ascending.
    pub duplicated: Vec<usize>,
    /// Source-layer index executed at each new-model position; duplicated
    /// layers occur twice consecutively.
    pub sequence: Vec<usize>,
}

/// Expands a duplication set into the full execution sequence.
pub fn build_upscale_plan(num_layers: usize, duplicated: &[usize]) -> Result<UpscalePlan, UpscaleError> {
    if num_layers == 0 {
        return Err(UpscaleError::InvalidSelection("model has no layers".into()));
    }
    let mut chosen = duplicated.to_vec();
    chosen.sort_unstable();
    for window in chosen.windows(2) {
        if window[0] == window[1] {
            return Err(UpscaleError::InvalidSelection(format!(
                "layer {} listed twice for duplication",
                window[0]
            )));
        }
    }
    if let Some(&bad) = chosen.iter().find(|&&i| i >= num_layers) {
        return Err(UpscaleError::IndexOutOfRange { index: bad, layers: num_layers });
    }
    let mut sequence = Vec::with_capacity(num_layers + chosen.len());
    let mut next_dup = chosen.iter().peekable();
    for layer in 0..num_layers {
        sequence.push(layer);
        if next_dup.peek() == Some(&&layer) {
            sequence.push(layer);
            next_dup.next();
        }
    }
    Ok(UpscalePlan { source_layers: num_layers, duplicated: chosen, sequence })
}

#[derive(Deserialize)]
struct ManifestLayer {
    input: String,
    output: String,
}

#[derive(Deserialize)]
struct ManifestFile {
    layers: Vec<ManifestLayer>,
}

/// Loads activations from a JSON manifest listing per-layer CSV files:
/// `{"layers": [{"input": "l0_in.csv", "output": "l0_out.csv"}, ...]}`.
/// Relative paths resolve against the manifest's directory.
pub fn load_layer_activations(path: &Path) -> Result<LayerActivations<f64>, UpscaleError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UpscaleError::Manifest(format!("read {}: {e}", path.display())))?;
    let manifest: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| UpscaleError::Manifest(format!("parse {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (index, layer) in manifest.layers.iter().enumerate() {
        let input = read_matrix_csv::<f64>(&base.join(&layer.input))
            .map_err(|e| UpscaleError::Manifest(format!("layer {index} input: {e}")))?;
        let output = read_matrix_csv::<f64>(&base.join(&layer.output))
            .map_err(|e| UpscaleError::Manifest(format!("layer {index} output: {e}")))?;
        layers.push((input, output));
    }
    LayerActivations::new(layers)
}
