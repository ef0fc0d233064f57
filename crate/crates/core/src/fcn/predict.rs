//! Counting by blobs: argmax per pixel, connected components per class.

use super::layers::Tensor;
use super::net::{forward, FcnParams};
use crate::blob::{assign_points, connected_components_of_class, BlobLabeling};
use crate::error::Result;
use crate::grid::{argmax_class, softmax, PointAnnotations, ProbMap};
use crate::metrics::EvalRecord;

/// Per-class counts of one image. Entry `k` of `counts` and `blobs` is class `k + 1`.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub probs: ProbMap,
    pub counts: Vec<usize>,
    pub blobs: Vec<BlobLabeling>,
}

impl Prediction {
    /// Blobs of the prediction counted as-is. Nothing is split or removed.
    pub fn from_probs(probs: ProbMap) -> Self {
        let classes = argmax_class(&probs);
        let blobs: Vec<BlobLabeling> = (1..probs.classes())
            .map(|c| connected_components_of_class(&classes.mask_of(c), c))
            .collect();
        let counts = blobs.iter().map(BlobLabeling::num_blobs).collect();
        Self { probs, counts, blobs }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Evaluation record against ground-truth points.
    pub fn record(&self, t: &PointAnnotations) -> EvalRecord {
        let blobs: Vec<BlobLabeling> = self
            .blobs
            .iter()
            .map(|b| assign_points(b.clone(), t.of_class(b.class())))
            .collect();
        EvalRecord::from_labelings(&blobs, t)
    }
}

pub fn predict_counts(params: &FcnParams, image: &Tensor) -> Result<Prediction> {
    let logits = forward(params, image)?;
    Ok(Prediction::from_probs(softmax(&logits)?))
}
