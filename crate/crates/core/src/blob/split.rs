use std::collections::BTreeSet;

use super::distance::distance_transform;
use super::labeling::BlobLabeling;
use super::watershed::{ridge_pixels, ridge_pixels_8, seeded_watershed};
use crate::error::Result;
use crate::grid::{BinaryMask, PointAnnotations};

/// One boundary pixel and its weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BoundaryPixel {
    pub row: usize,
    pub col: usize,
    /// Number of annotations in the multi-annotation blob holding the pixel, 1 elsewhere.
    pub alpha: u32,
}

/// Pixels that a split method wants pushed to the background, with weights.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitBoundary {
    pixels: Vec<BoundaryPixel>,
}

impl SplitBoundary {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Weights each flat pixel index by the tally of its blob when that blob
    /// holds two or more annotations, and by 1 otherwise.
    pub fn weighted(indices: BTreeSet<usize>, blobs: &BlobLabeling) -> Self {
        let w = blobs.width();
        let pixels = indices
            .into_iter()
            .map(|i| {
                let tally = match blobs.labels()[i] {
                    0 => 0,
                    b => blobs.tally(b),
                };
                BoundaryPixel {
                    row: i / w,
                    col: i % w,
                    alpha: if tally >= 2 { tally as u32 } else { 1 },
                }
            })
            .collect();
        Self { pixels }
    }

    pub fn pixels(&self) -> &[BoundaryPixel] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.pixels
            .binary_search_by(|p| (p.row, p.col).cmp(&(row, col)))
            .is_ok()
    }
}

/// Which passes of the watershed split produced a boundary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WatershedRidges {
    pub global: BTreeSet<usize>,
    pub local: BTreeSet<usize>,
}

/// Ridge pixels of the global pass (whole image, every annotation a seed) and of
/// the local pass (inside each multi-annotation blob, its own annotations as seeds),
/// both flooding the distance transform of `mask`.
pub fn watershed_ridges(mask: &BinaryMask, blobs: &BlobLabeling, t: &PointAnnotations) -> Result<WatershedRidges> {
    let mut out = WatershedRidges::default();
    if t.is_empty() {
        return Ok(out);
    }
    let (h, w) = (mask.height(), mask.width());
    let relief = distance_transform(mask);

    let seeds: Vec<_> = t.points().iter().map(|p| (p.row, p.col)).collect();
    let everywhere = BinaryMask::filled(h, w, true);
    let labels = seeded_watershed(&relief, &seeds, &everywhere)?;
    out.global.extend(ridge_pixels(&labels, h, w));

    for blob in blobs.multi_blobs() {
        let seeds: Vec<_> = blobs.points_in(blob).iter().map(|p| (p.row, p.col)).collect();
        let labels = seeded_watershed(&relief, &seeds, &blobs.blob_mask(blob))?;
        let mut ridges = ridge_pixels(&labels, h, w);
        if ridges.is_empty() {
            // basins that only touch diagonally
            ridges = ridge_pixels_8(&labels, h, w);
        }
        out.local.extend(ridges);
    }
    Ok(out)
}

/// Union of global and local watershed ridges, weighted per [`SplitBoundary`].
/// `blobs` must be the labelling of `mask` with `t` assigned.
pub fn watershed_split(mask: &BinaryMask, blobs: &BlobLabeling, t: &PointAnnotations) -> Result<SplitBoundary> {
    crate::probe::record_split();
    let ridges = watershed_ridges(mask, blobs, t)?;
    let mut all = ridges.global;
    all.extend(ridges.local);
    Ok(SplitBoundary::weighted(all, blobs))
}
