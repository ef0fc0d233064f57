//! Bright anti-aliased dots on textured noise.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image_io::{save_gray, tensor_from_gray};
use super::manifest::{save_manifest, DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::fcn::Sample;
use crate::grid::{Point, PointAnnotations};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub images: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of dots per image.
    pub min_count: usize,
    pub max_count: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Standard deviation of the pixel noise, in [0, 1] intensity units.
    pub noise: f64,
    /// Probability that a dot is placed touching an earlier one.
    pub overlap: f64,
    pub seed: u64,
    /// Object classes; each gets its own brightness.
    pub classes: usize,
    /// Relative sizes of the train, val and test splits.
    pub split_ratio: [usize; 3],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            images: 280,
            height: 64,
            width: 64,
            min_count: 1,
            max_count: 8,
            min_radius: 2.5,
            max_radius: 3.5,
            noise: 0.04,
            overlap: 0.5,
            seed: 7,
            classes: 1,
            split_ratio: [5, 1, 1],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.min_count > self.max_count {
            return bad("min_count exceeds max_count");
        }
        if !(self.min_radius >= 1.0 && self.min_radius <= self.max_radius && self.max_radius.is_finite()) {
            return bad("radii must satisfy 1 <= min <= max");
        }
        if self.height == 0 || self.width == 0 {
            return bad("image size must be positive");
        }
        if self.max_count > self.height * self.width {
            return bad("more dots than pixels");
        }
        if !(0.0..=1.0).contains(&self.overlap) || !(0.0..=1.0).contains(&self.noise) {
            return bad("overlap and noise must lie in [0, 1]");
        }
        if self.classes == 0 {
            return bad("need at least one class");
        }
        if self.split_ratio.iter().sum::<usize>() == 0 {
            return bad("split ratio is all zero");
        }
        Ok(())
    }

    /// Split of image `index`: contiguous blocks sized by `split_ratio`.
    pub fn split_of(&self, index: usize) -> Split {
        let total: usize = self.split_ratio.iter().sum();
        let train = self.images * self.split_ratio[0] / total;
        let val = self.images * self.split_ratio[1] / total;
        if index < train {
            Split::Train
        } else if index < train + val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub points: PointAnnotations,
    /// Radius of the dot at each point, in the same order.
    pub radii: Vec<f64>,
    pub split: Split,
}

impl SyntheticImage {
    pub fn sample(&self) -> Sample {
        Sample::new(
            tensor_from_gray(self.height, self.width, &self.pixels),
            self.points.clone(),
        )
        .expect("generator keeps dims consistent")
    }
}

fn place(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, dots: &[(usize, usize, f64)], r: f64) -> (usize, usize) {
    let (h, w) = (spec.height, spec.width);
    let margin = |extent: usize| (r.ceil() as usize).min((extent - 1) / 2);
    let (mr, mc) = (margin(h), margin(w));
    let inside = |row: f64, col: f64| {
        row >= mr as f64 && col >= mc as f64 && row <= (h - 1 - mr) as f64 && col <= (w - 1 - mc) as f64
    };
    let free = |row: usize, col: usize| dots.iter().all(|&(dr, dc, _)| (dr, dc) != (row, col));
    let touching = !dots.is_empty() && rng.random::<f64>() < spec.overlap;

    for _ in 0..200 {
        let (row, col) = if touching {
            let &(dr, dc, dr_radius) = &dots[rng.random_range(0..dots.len())];
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let dist = (dr_radius + r) * rng.random_range(0.75..0.95);
            let (row, col) = (dr as f64 + dist * angle.sin(), dc as f64 + dist * angle.cos());
            if !inside(row, col) {
                continue;
            }
            (row.round() as usize, col.round() as usize)
        } else {
            (rng.random_range(mr..h - mr), rng.random_range(mc..w - mc))
        };
        let separated = touching
            || dots.iter().all(|&(dr, dc, dr_radius)| {
                let d2 = (dr as f64 - row as f64).powi(2) + (dc as f64 - col as f64).powi(2);
                d2.sqrt() >= dr_radius + r + 2.0
            });
        if separated && free(row, col) {
            return (row, col);
        }
    }
    // crowded image: any free pixel
    loop {
        let (row, col) = (rng.random_range(0..h), rng.random_range(0..w));
        if free(row, col) {
            return (row, col);
        }
    }
}

fn render(index: usize, spec: &SyntheticSpec) -> SyntheticImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let (h, w) = (spec.height, spec.width);

    // low-frequency texture: a few random plane waves
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let freq = rng.random_range(0.05..0.25);
            (
                freq * angle.cos(),
                freq * angle.sin(),
                rng.random::<f64>() * std::f64::consts::TAU,
                rng.random_range(0.02..0.06),
            )
        })
        .collect();
    let base = rng.random_range(0.15..0.3);
    let mut canvas: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            base + waves
                .iter()
                .map(|&(fr, fc, ph, amp)| amp * (fr * r + fc * c + ph).sin())
                .sum::<f64>()
        })
        .collect();

    let count = rng.random_range(spec.min_count..=spec.max_count);
    let mut dots: Vec<(usize, usize, f64)> = Vec::with_capacity(count);
    let mut classes = Vec::with_capacity(count);
    for _ in 0..count {
        let r = if spec.max_radius > spec.min_radius {
            rng.random_range(spec.min_radius..=spec.max_radius)
        } else {
            spec.min_radius
        };
        let (row, col) = place(&mut rng, spec, &dots, r);
        dots.push((row, col, r));
        classes.push(rng.random_range(1..=spec.classes));
    }

    for (&(row, col, r), &k) in dots.iter().zip(&classes) {
        let level = 0.95 - 0.5 * (k - 1) as f64 / spec.classes as f64;
        let reach = r.ceil() as isize + 1;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (y, x) = (row as isize + dr, col as isize + dc);
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    continue;
                }
                let d = ((dr * dr + dc * dc) as f64).sqrt();
                let coverage = (r + 0.5 - d).clamp(0.0, 1.0);
                let px = &mut canvas[y as usize * w + x as usize];
                *px = px.max(*px * (1.0 - coverage) + level * coverage);
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid deviation");
    let pixels = canvas
        .iter()
        .map(|&v| {
            let n = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            ((v + n).clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect();

    let points = dots
        .iter()
        .zip(&classes)
        .map(|(&(r, c, _), &k)| Point::new(r, c, k))
        .collect();
    SyntheticImage {
        height: h,
        width: w,
        pixels,
        points: PointAnnotations::new(h, w, points).expect("placement keeps points distinct and in bounds"),
        radii: dots.iter().map(|d| d.2).collect(),
        split: spec.split_of(index),
    }
}

/// The images of `spec`, in memory. Image `i` depends only on the seed and `i`.
pub fn synthesize(spec: &SyntheticSpec) -> Result<Vec<SyntheticImage>> {
    spec.validate()?;
    Ok((0..spec.images).map(|i| render(i, spec)).collect())
}

/// Fraction of images with two or more dots in which some pair touches
/// (center distance below the radius sum). `None` without such images.
pub fn overlap_audit(images: &[SyntheticImage]) -> Option<f64> {
    let multi: Vec<&SyntheticImage> = images.iter().filter(|im| im.points.len() >= 2).collect();
    if multi.is_empty() {
        return None;
    }
    let touching = multi
        .iter()
        .filter(|im| {
            let p = im.points.points();
            (0..p.len()).any(|i| {
                (i + 1..p.len()).any(|j| (p[i].squared_distance(&p[j]) as f64).sqrt() < im.radii[i] + im.radii[j])
            })
        })
        .count();
    Some(touching as f64 / multi.len() as f64)
}

/// Writes `images/NNNN.png` and `manifest.txt` under `out_dir`. Nothing is
/// left behind on failure unless `out_dir` already existed.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let images = synthesize(spec)?;
    let existed = out_dir.exists();
    let result = write_dataset(spec, &images, out_dir);
    if result.is_err() && !existed {
        let _ = fs::remove_dir_all(out_dir);
    }
    result
}

fn write_dataset(spec: &SyntheticSpec, images: &[SyntheticImage], out_dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir.join("images"))?;
    let digits = images.len().max(1).to_string().len().max(4);
    let mut entries = Vec::with_capacity(images.len());
    for (i, im) in images.iter().enumerate() {
        let rel = Path::new("images").join(format!("{i:0digits$}.png"));
        save_gray(&out_dir.join(&rel), im.height, im.width, im.pixels.clone())?;
        entries.push(ManifestEntry {
            image: rel,
            split: im.split,
            points: im.points.clone(),
        });
    }
    let class_names = if spec.classes == 1 {
        vec!["dot".to_string()]
    } else {
        (1..=spec.classes).map(|k| format!("dot{k}")).collect()
    };
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        class_names,
        entries,
    };
    save_manifest(&out_dir.join("manifest.txt"), &manifest)?;
    Ok(manifest)
}
