//! Line split: cut each nearest-neighbour annotation pair with the
//! perpendicular segment that looks most like background.

use std::collections::BTreeSet;

use super::labeling::BlobLabeling;
use super::split::SplitBoundary;
use crate::error::{Error, Result};
use crate::grid::{Point, ProbMap};

/// Nearest-neighbour pairs among the annotations of one blob.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PointPairing {
    pub pairs: Vec<(Point, Point)>,
}

/// Pairs every point with its closest other point. Distance ties go to the
/// partner with the smallest `(row, col)`; unordered duplicates are dropped,
/// keeping the first orientation seen.
pub fn pair_points(points: &[Point]) -> Result<PointPairing> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let partner = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .min_by_key(|(_, q)| (p.squared_distance(q), q.row, q.col))
            .map(|(_, q)| *q)
            .expect("at least two points");
        let key = if (p.row, p.col) <= (partner.row, partner.col) {
            ((p.row, p.col), (partner.row, partner.col))
        } else {
            ((partner.row, partner.col), (p.row, p.col))
        };
        if seen.insert(key) {
            pairs.push((*p, partner));
        }
    }
    Ok(PointPairing { pairs })
}

/// A rasterised straight segment and its mean background probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// Flat pixel indices, ordered from one end to the other.
    pub pixels: Vec<usize>,
    pub score: f64,
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Real-valued anchor positions strictly between `p` and `q`, one per integer
/// step along the dominant axis. Adjacent points fall back to their midpoint.
fn anchors(p: &Point, q: &Point) -> Vec<(f64, f64)> {
    let (dr, dc) = (q.row as f64 - p.row as f64, q.col as f64 - p.col as f64);
    let steps = p.row.abs_diff(q.row).max(p.col.abs_diff(q.col));
    if steps < 2 {
        return vec![(p.row as f64 + dr / 2.0, p.col as f64 + dc / 2.0)];
    }
    (1..steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            (p.row as f64 + t * dr, p.col as f64 + t * dc)
        })
        .collect()
}

/// Candidate segments perpendicular to `p -> q` that stay inside `blob`.
///
/// Each candidate starts at an anchor pixel on the connecting line and grows
/// one unit step along the dominant axis of the perpendicular in both
/// directions until each side leaves the blob. Anchors off the blob yield no
/// candidate; when every anchor is off the blob, the blob pixel nearest the
/// midpoint of the pair becomes the only anchor.
pub fn segment_candidates(blobs: &BlobLabeling, blob: u32, p: &Point, q: &Point) -> Vec<Vec<usize>> {
    let (h, w) = (blobs.height() as f64, blobs.width() as f64);
    let (dr, dc) = (q.row as f64 - p.row as f64, q.col as f64 - p.col as f64);
    let scale = dr.abs().max(dc.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    let (ur, uc) = (-dc / scale, dr / scale);
    let pixel_at = |r: f64, c: f64| -> Option<usize> {
        let (r, c) = (round_half_up(r), round_half_up(c));
        if r < 0.0 || c < 0.0 || r >= h || c >= w {
            return None;
        }
        let i = r as usize * blobs.width() + c as usize;
        (blobs.labels()[i] == blob).then_some(i)
    };

    let mut anchored: Vec<((f64, f64), usize)> = anchors(p, q)
        .into_iter()
        .filter_map(|(ar, ac)| Some(((ar, ac), pixel_at(ar, ac)?)))
        .collect();
    if anchored.is_empty() {
        // the connecting line leaves the blob everywhere: anchor at the blob
        // pixel nearest the midpoint, avoiding annotated pixels when possible
        let (mr, mc) = ((p.row + q.row) as f64 / 2.0, (p.col + q.col) as f64 / 2.0);
        let annotated: Vec<usize> = blobs
            .points_in(blob)
            .iter()
            .map(|a| a.row * blobs.width() + a.col)
            .collect();
        let fallback = blobs.pixels_of(blob).into_iter().min_by(|&a, &b| {
            let key = |i: usize| {
                let (r, c) = ((i / blobs.width()) as f64, (i % blobs.width()) as f64);
                (annotated.contains(&i), (r - mr).powi(2) + (c - mc).powi(2))
            };
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
        if let Some(i) = fallback {
            anchored.push((((i / blobs.width()) as f64, (i % blobs.width()) as f64), i));
        }
    }

    anchored
        .into_iter()
        .map(|((ar, ac), centre)| {
            let walk = |sign: f64| {
                let mut out = Vec::new();
                let mut s = 1.0;
                while let Some(i) = pixel_at(ar + sign * s * ur, ac + sign * s * uc) {
                    out.push(i);
                    s += 1.0;
                }
                out
            };
            let mut pixels = walk(-1.0);
            pixels.reverse();
            pixels.push(centre);
            pixels.extend(walk(1.0));
            pixels
        })
        .collect()
}

/// Mean background probability over a segment.
pub fn segment_score(s: &ProbMap, pixels: &[usize]) -> f64 {
    pixels.iter().map(|&i| s.background(i)).sum::<f64>() / pixels.len() as f64
}

/// Highest-scoring candidate; the first one in enumeration order wins ties.
pub fn best_segment(s: &ProbMap, blobs: &BlobLabeling, blob: u32, p: &Point, q: &Point) -> Option<Segment> {
    let mut best: Option<Segment> = None;
    for pixels in segment_candidates(blobs, blob, p, q) {
        let score = segment_score(s, &pixels);
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(Segment { pixels, score });
        }
    }
    best
}

/// Best segment for every pair of every multi-annotation blob.
pub fn line_split_segments(s: &ProbMap, blobs: &BlobLabeling) -> Vec<(u32, Segment)> {
    let mut out = Vec::new();
    for blob in blobs.multi_blobs() {
        let pairing = pair_points(blobs.points_in(blob)).expect("multi blobs hold at least two points");
        for (p, q) in &pairing.pairs {
            if (p.row, p.col) == (q.row, q.col) {
                log::warn!("skipping degenerate pair at ({}, {})", p.row, p.col);
                continue;
            }
            if let Some(seg) = best_segment(s, blobs, blob, p, q) {
                out.push((blob, seg));
            }
        }
    }
    out
}

/// Union of the best perpendicular segments, each pixel weighted by its blob's tally.
/// `blobs` must be the labelling of the foreground of `s` with annotations assigned.
pub fn line_split(s: &ProbMap, blobs: &BlobLabeling) -> SplitBoundary {
    crate::probe::record_split();
    let pixels: BTreeSet<usize> = line_split_segments(s, blobs)
        .into_iter()
        .flat_map(|(_, seg)| seg.pixels)
        .collect();
    SplitBoundary::weighted(pixels, blobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blob::labeling::{assign_points, connected_components};
    use crate::grid::{foreground_mask, BinaryMask};

    fn pts(coords: &[(usize, usize)]) -> Vec<Point> {
        coords.iter().map(|&(r, c)| Point::new(r, c, 1)).collect()
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair_points(&pts(&[(0, 0), (3, 4)])).unwrap().pairs.len(), 1);

        let p = pair_points(&pts(&[(0, 0), (0, 2), (0, 10)])).unwrap();
        let cols: Vec<_> = p.pairs.iter().map(|(a, b)| (a.col, b.col)).collect();
        assert_eq!(cols, vec![(0, 2), (10, 2)]);

        let corners = pts(&[(0, 0), (0, 4), (4, 0), (4, 4)]);
        let p = pair_points(&corners).unwrap();
        assert!(p.pairs.len() <= 4);
        for (a, b) in &p.pairs {
            // side-adjacent, never diagonal
            assert!(a.row == b.row || a.col == b.col);
        }
        // (0,0) -> (0,4) [tie with (4,0), smaller partner], (0,4) -> (0,0) dup,
        // (4,0) -> (0,0), (4,4) -> (0,4)
        assert_eq!(p.pairs.len(), 3);

        assert!(matches!(pair_points(&pts(&[(1, 1)])), Err(Error::TooFewPoints(1))));
    }

    fn setup(rows: &[&str], bg: &dyn Fn(usize, usize) -> f64, points: &[(usize, usize)]) -> (ProbMap, BlobLabeling) {
        let mask = BinaryMask::from_ascii(rows).unwrap();
        let (h, w) = (mask.height(), mask.width());
        let fg: Vec<f64> = (0..h * w)
            .map(|i| if mask.values()[i] { 1.0 - bg(i / w, i % w) } else { 0.0 })
            .collect();
        let s = ProbMap::from_foreground(h, w, &fg).unwrap();
        assert_eq!(foreground_mask(&s), mask);
        let blobs = assign_points(connected_components(&mask), &pts(points));
        (s, blobs)
    }

    #[test]
    fn picks_the_background_valley() {
        // 5x9 blob, points at cols 1 and 7, valley at col 5
        let rows = ["#########"; 5];
        let (s, blobs) = setup(&rows, &|_, c| if c == 5 { 0.45 } else { 0.1 }, &[(2, 1), (2, 7)]);
        let segs = line_split_segments(&s, &blobs);
        assert_eq!(segs.len(), 1);
        let cols: BTreeSet<_> = segs[0].1.pixels.iter().map(|i| i % 9).collect();
        assert_eq!(cols, BTreeSet::from([5]));
        assert_eq!(segs[0].1.pixels.len(), 5);
        assert!((segs[0].1.score - 0.45).abs() < 1e-12);
    }

    #[test]
    fn uniform_background_takes_first_candidate() {
        let rows = ["#######"; 3];
        let (s, blobs) = setup(&rows, &|_, _| 0.2, &[(1, 0), (1, 6)]);
        let segs = line_split_segments(&s, &blobs);
        let cols: BTreeSet<_> = segs[0].1.pixels.iter().map(|i| i % 7).collect();
        assert_eq!(cols, BTreeSet::from([1]));
    }

    #[test]
    fn two_point_blob_weights_are_two() {
        let rows = [".....", ".###.", ".###.", ".###.", "....."];
        let (s, blobs) = setup(&rows, &|_, _| 0.3, &[(1, 1), (3, 3)]);
        let b = line_split(&s, &blobs);
        assert!(!b.is_empty());
        assert!(b.pixels().iter().all(|p| p.alpha == 2));
    }

    #[test]
    fn thin_blob_yields_single_pixel_segments() {
        let (s, blobs) = setup(&["#####"], &|_, _| 0.3, &[(0, 0), (0, 4)]);
        let cands = segment_candidates(&blobs, 1, &Point::new(0, 0, 1), &Point::new(0, 4, 1));
        assert_eq!(cands.len(), 3);
        assert!(cands.iter().all(|c| c.len() == 1));
        assert_eq!(line_split(&s, &blobs).len(), 1);
    }

    #[test]
    fn u_shaped_blob_falls_back_to_a_blob_anchor() {
        let rows = ["#...#", "#...#", "#####"];
        let (s, blobs) = setup(&rows, &|_, _| 0.3, &[(0, 0), (0, 4)]);
        let cands = segment_candidates(&blobs, 1, &Point::new(0, 0, 1), &Point::new(0, 4, 1));
        assert_eq!(cands.len(), 1);
        // nearest blob pixel to the midpoint (0, 2) is (2, 2); the vertical cut is one pixel
        assert_eq!(cands[0], vec![2 * 5 + 2]);
        assert!(!line_split(&s, &blobs).is_empty());
    }

    #[test]
    fn singleton_blobs_produce_nothing() {
        let (s, blobs) = setup(&["##..##"], &|_, _| 0.3, &[(0, 0), (0, 5)]);
        assert!(line_split(&s, &blobs).is_empty());
    }
}
