//! Datasets on disk: manifests, PNG images, the synthetic dot generator and
//! overlay rendering.

mod image_io;
mod manifest;
mod overlay;
mod synthetic;

pub use image_io::{load_image, load_image_as, save_gray, tensor_from_gray, to_channels};
pub use manifest::{
    format_manifest, load_manifest, parse_manifest, save_manifest, DatasetManifest, ManifestEntry, Split,
};
pub use overlay::{render_overlay, BOUNDARY, FALSE_POSITIVE, MARKER, MATCHED, MERGED};
pub use synthetic::{generate_synthetic, overlap_audit, synthesize, SyntheticImage, SyntheticSpec};

use crate::fcn::Tensor;
use crate::grid::{Point, PointAnnotations};

/// Mirrors an image left to right together with its annotations.
pub fn flip_horizontal(image: &Tensor, points: &PointAnnotations) -> (Tensor, PointAnnotations) {
    let w = points.width();
    let flipped = points
        .points()
        .iter()
        .map(|p| Point::new(p.row, w - 1 - p.col, p.class))
        .collect();
    let points = PointAnnotations::new(points.height(), w, flipped).expect("mirrored points stay valid");
    (image.flip_horizontal(), points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_examples() {
        let img = Tensor::from_vec(1, 2, 10, (0..20).map(f64::from).collect());
        let t = PointAnnotations::new(2, 10, vec![Point::new(1, 0, 1), Point::new(0, 4, 2)]).unwrap();
        let (fi, ft) = flip_horizontal(&img, &t);
        assert_eq!(ft.points()[0], Point::new(1, 9, 1));
        assert_eq!(ft.counts(3), t.counts(3));
        assert_eq!(fi.get(0, 0, 0), 9.0);
        let (ii, it) = flip_horizontal(&fi, &ft);
        assert_eq!((ii, it), (img, t));
    }
}
