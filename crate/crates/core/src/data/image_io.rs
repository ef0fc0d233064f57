use std::path::Path;

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};
use crate::fcn::Tensor;

fn image_error(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn to_tensor(img: DynamicImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(img.color().channel_count(), 1 | 2);
    if gray {
        tensor_from_gray(h, w, img.to_luma8().as_raw())
    } else {
        let rgb = img.to_rgb8();
        let raw = rgb.as_raw();
        let mut data = vec![0.0; 3 * h * w];
        for i in 0..h * w {
            for c in 0..3 {
                data[c * h * w + i] = f64::from(raw[i * 3 + c]) / 255.0;
            }
        }
        Tensor::from_vec(3, h, w, data)
    }
}

/// 8-bit grayscale pixels scaled to [0, 1].
pub fn tensor_from_gray(height: usize, width: usize, pixels: &[u8]) -> Tensor {
    assert_eq!(pixels.len(), height * width);
    Tensor::from_vec(1, height, width, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())
}

/// Decodes an image file: one channel for grayscale, three for colour,
/// values in [0, 1].
pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(image_error(path))?;
    Ok(to_tensor(img))
}

/// Converts between grayscale and RGB.
pub fn to_channels(t: &Tensor, channels: usize) -> Result<Tensor> {
    let n = t.height * t.width;
    match (t.channels, channels) {
        (a, b) if a == b => Ok(t.clone()),
        (3, 1) => {
            let data = (0..n)
                .map(|i| 0.299 * t.data[i] + 0.587 * t.data[n + i] + 0.114 * t.data[2 * n + i])
                .collect();
            Ok(Tensor::from_vec(1, t.height, t.width, data))
        }
        (1, 3) => Ok(Tensor::from_vec(3, t.height, t.width, t.data.repeat(3))),
        (a, b) => Err(Error::Shape(format!("cannot convert {a} channels to {b}"))),
    }
}

pub fn load_image_as(path: &Path, channels: usize) -> Result<Tensor> {
    to_channels(&load_image(path)?, channels)
}

pub fn save_gray(path: &Path, height: usize, width: usize, pixels: Vec<u8>) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| Error::Shape("pixel buffer does not match image size".into()))?;
    img.save(path).map_err(image_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let pixels: Vec<u8> = (0..12).map(|i| i * 20).collect();
        save_gray(&path, 3, 4, pixels.clone()).unwrap();
        let t = load_image(&path).unwrap();
        assert_eq!((t.channels, t.height, t.width), (1, 3, 4));
        assert_eq!(t, tensor_from_gray(3, 4, &pixels));
        let rgb = to_channels(&t, 3).unwrap();
        let back = to_channels(&rgb, 1).unwrap();
        for (a, b) in back.data.iter().zip(&t.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn undecodable_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Image { .. })));
    }
}
