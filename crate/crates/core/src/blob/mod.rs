//! Blob structure: connected components, annotation bookkeeping and the two
//! boundary generators used by the split loss.

pub mod distance;
pub mod labeling;
pub mod line;
pub mod split;
pub mod watershed;

pub use distance::{distance_transform, RealGrid};
pub use labeling::{
    assign_points, blob_centers, connected_components, connected_components_of_class, label_classes, BlobLabeling,
};
pub use line::{best_segment, line_split, line_split_segments, pair_points, segment_candidates, PointPairing, Segment};
pub use split::{watershed_ridges, watershed_split, BoundaryPixel, SplitBoundary, WatershedRidges};
pub use watershed::{ridge_pixels, ridge_pixels_8, seeded_watershed};
