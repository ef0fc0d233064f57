//! `inspect-splits`: blobs coloured by annotation tally plus the boundary each
//! split method would push to background.

use std::path::Path;

use anyhow::{Context, Result};
use image::{imageops, Rgb, RgbImage};
use lccount::blob::{assign_points, connected_components, label_classes, line_split, watershed_split, SplitBoundary};
use lccount::data::{load_image_as, load_manifest, render_overlay};
use lccount::fcn::{forward, load_checkpoint, Tensor};
use lccount::{foreground_mask, softmax, Error, Point, PointAnnotations, ProbMap};

use crate::{InspectArgs, Panels};

const GAP: u32 = 2;

pub fn parse_points(s: &str, height: usize, width: usize) -> Result<PointAnnotations> {
    let mut points = Vec::new();
    for item in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let v: Vec<usize> = item
            .split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad point {item:?}")))?;
        match v[..] {
            [r, c] => points.push(Point::new(r, c, 1)),
            [r, c, k] => points.push(Point::new(r, c, k)),
            _ => return Err(Error::Config(format!("point {item:?} needs row,col[,class]")).into()),
        }
    }
    Ok(PointAnnotations::new(height, width, points)?)
}

fn load_probmap(path: &Path) -> Result<(ProbMap, Tensor)> {
    let t = load_image_as(path, 1)?;
    Ok((ProbMap::from_foreground(t.height, t.width, &t.data)?, t))
}

fn boundary(method: Panels, s: &ProbMap, t: &PointAnnotations) -> Result<SplitBoundary> {
    let mask = foreground_mask(s);
    let blobs = assign_points(connected_components(&mask), t.points());
    Ok(match method {
        Panels::Line => line_split(s, &blobs),
        _ => watershed_split(&mask, &blobs, t)?,
    })
}

pub fn inspect_splits(a: &InspectArgs) -> Result<()> {
    let mut image_path = a.image.clone();
    let mut points = None;
    if let (Some(m), Some(i)) = (&a.manifest, a.index) {
        let manifest = load_manifest(m)?;
        let entry = manifest.entries.get(i).ok_or_else(|| {
            Error::Config(format!(
                "manifest has {} entries, asked for {i}",
                manifest.entries.len()
            ))
        })?;
        image_path.get_or_insert_with(|| manifest.image_path(entry));
        points = Some(entry.points.clone());
    }

    let (probs, base) = match (&a.probmap, &a.checkpoint) {
        (Some(p), _) => {
            let (probs, fallback) = load_probmap(p)?;
            let base = match &image_path {
                Some(path) => load_image_as(path, 1)?,
                None => fallback,
            };
            (probs, base)
        }
        (None, Some(c)) => {
            let params = load_checkpoint(c)?;
            let path = image_path
                .as_ref()
                .ok_or_else(|| Error::Config("--image is required with --checkpoint".into()))?;
            let image = load_image_as(path, params.in_channels)?;
            (softmax(&forward(&params, &image)?)?, image)
        }
        (None, None) => return Err(Error::Config("need --checkpoint or --probmap".into()).into()),
    };
    if (base.height, base.width) != (probs.height(), probs.width()) {
        return Err(Error::Shape(format!(
            "image is {}x{}, probability map is {}x{}",
            base.height,
            base.width,
            probs.height(),
            probs.width()
        ))
        .into());
    }
    let t = match (points, &a.points) {
        (Some(p), _) => p,
        (None, Some(s)) => parse_points(s, probs.height(), probs.width())?,
        (None, None) => PointAnnotations::empty(probs.height(), probs.width()),
    };

    let methods: &[Panels] = match a.method {
        Panels::Both => &[Panels::Watershed, Panels::Line],
        Panels::Watershed => &[Panels::Watershed],
        Panels::Line => &[Panels::Line],
    };
    let blobs = label_classes(&probs, &t);
    let merged: usize = blobs.iter().map(|b| b.multi_blobs().len()).sum();
    let empty: usize = blobs.iter().map(|b| b.false_positive_blobs().len()).sum();
    let mut panels = Vec::new();
    for &m in methods {
        let b = boundary(m, &probs, &t)?;
        let name = if m == Panels::Line { "line" } else { "watershed" };
        println!(
            "method={name} blobs={} merged={merged} false_positive={empty} boundary_pixels={}",
            blobs.iter().map(|b| b.num_blobs()).sum::<usize>(),
            b.len()
        );
        panels.push(render_overlay(&base, &blobs, t.points(), Some(&b)));
    }
    let (w, h) = (panels[0].width(), panels[0].height());
    let n = panels.len() as u32;
    let mut out = RgbImage::from_pixel(n * w + (n - 1) * GAP, h, Rgb([255, 255, 255]));
    for (i, p) in panels.iter().enumerate() {
        imageops::replace(&mut out, p, i64::from(i as u32 * (w + GAP)), 0);
    }
    out.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_with_and_without_class() {
        let t = parse_points("1,2; 3,4,1;", 8, 8).unwrap();
        assert_eq!(t.points(), &[Point::new(1, 2, 1), Point::new(3, 4, 1)]);
        assert!(parse_points("1", 8, 8).is_err());
        assert!(parse_points("9,9", 8, 8).is_err());
    }
}
