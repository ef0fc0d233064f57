use image::{Rgb, RgbImage};

use crate::blob::{BlobLabeling, SplitBoundary};
use crate::fcn::Tensor;
use crate::grid::Point;

/// Blob holding exactly one annotation.
pub const MATCHED: Rgb<u8> = Rgb([0, 200, 0]);
/// Blob holding two or more annotations.
pub const MERGED: Rgb<u8> = Rgb([230, 200, 0]);
/// Blob holding none.
pub const FALSE_POSITIVE: Rgb<u8> = Rgb([220, 0, 0]);
pub const BOUNDARY: Rgb<u8> = Rgb([255, 255, 0]);
pub const MARKER: Rgb<u8> = Rgb([0, 80, 255]);

fn base_pixel(image: &Tensor, i: usize) -> [u8; 3] {
    let n = image.height * image.width;
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if image.channels >= 3 {
        [q(image.data[i]), q(image.data[n + i]), q(image.data[2 * n + i])]
    } else {
        [q(image.data[i]); 3]
    }
}

fn blend(a: [u8; 3], b: Rgb<u8>) -> Rgb<u8> {
    Rgb(std::array::from_fn(|k| {
        ((u16::from(a[k]) + u16::from(b.0[k])) / 2) as u8
    }))
}

/// Colours each blob by its annotation tally, draws boundary pixels and
/// marks every point with a 3x3 square.
pub fn render_overlay(
    image: &Tensor,
    blobs: &[BlobLabeling],
    points: &[Point],
    boundary: Option<&SplitBoundary>,
) -> RgbImage {
    let (h, w) = (image.height, image.width);
    let mut out = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        Rgb(base_pixel(image, y as usize * w + x as usize))
    });
    for b in blobs {
        assert_eq!((b.height(), b.width()), (h, w), "blob labeling dims");
        let colour: Vec<Rgb<u8>> = (1..=b.num_blobs() as u32)
            .map(|id| match b.tally(id) {
                0 => FALSE_POSITIVE,
                1 => MATCHED,
                _ => MERGED,
            })
            .collect();
        for (i, &l) in b.labels().iter().enumerate() {
            if l != 0 {
                let (x, y) = ((i % w) as u32, (i / w) as u32);
                out.put_pixel(x, y, blend(base_pixel(image, i), colour[l as usize - 1]));
            }
        }
    }
    if let Some(boundary) = boundary {
        for p in boundary.pixels() {
            out.put_pixel(p.col as u32, p.row as u32, BOUNDARY);
        }
    }
    for p in points {
        for r in p.row.saturating_sub(1)..=(p.row + 1).min(h - 1) {
            for c in p.col.saturating_sub(1)..=(p.col + 1).min(w - 1) {
                out.put_pixel(c as u32, r as u32, MARKER);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blob::{assign_points, connected_components, watershed_split};
    use crate::grid::{BinaryMask, PointAnnotations};

    fn gray(h: usize, w: usize) -> Tensor {
        Tensor::from_vec(1, h, w, (0..h * w).map(|i| (i % 7) as f64 / 7.0).collect())
    }

    fn colours(img: &RgbImage) -> Vec<Rgb<u8>> {
        img.pixels().copied().collect()
    }

    #[test]
    fn nothing_to_draw_keeps_the_image() {
        let t = gray(4, 5);
        let out = render_overlay(&t, &[], &[], None);
        for (i, p) in out.pixels().enumerate() {
            assert_eq!(p.0, base_pixel(&t, i));
        }
    }

    #[test]
    fn matched_blob_is_green_only() {
        let t = Tensor::zeros(1, 5, 5);
        let mask = BinaryMask::from_ascii(&["##...", "##...", ".....", ".....", "....."]).unwrap();
        let pts = [Point::new(0, 0, 1)];
        let blobs = assign_points(connected_components(&mask), &pts);
        let out = render_overlay(&t, &[blobs], &[], None);
        let c = colours(&out);
        assert!(c.contains(&blend([0; 3], MATCHED)));
        assert!(!c.contains(&blend([0; 3], MERGED)) && !c.contains(&blend([0; 3], FALSE_POSITIVE)));
    }

    #[test]
    fn merged_blob_with_boundary() {
        let t = Tensor::zeros(1, 3, 9);
        let mask = BinaryMask::from_ascii(&[".........", "#########", "........."]).unwrap();
        let pts = vec![Point::new(1, 0, 1), Point::new(1, 8, 1)];
        let ann = PointAnnotations::new(3, 9, pts.clone()).unwrap();
        let blobs = assign_points(connected_components(&mask), &pts);
        let boundary = watershed_split(&mask, &blobs, &ann).unwrap();
        let out = render_overlay(&t, &[blobs], &pts, Some(&boundary));
        let c = colours(&out);
        assert!(c.contains(&blend([0; 3], MERGED)));
        assert!(c.contains(&BOUNDARY));
        assert_eq!(*out.get_pixel(0, 1), MARKER);
    }
}
