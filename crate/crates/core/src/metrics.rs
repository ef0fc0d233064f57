//! Counting and localization metrics over per-image evaluation records.

use crate::blob::{blob_centers, BlobLabeling};
use crate::error::{Error, Result};
use crate::grid::{ClassId, Point, PointAnnotations};

/// A predicted blob and how many annotations of its class it contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlobHit {
    pub class: ClassId,
    pub points: usize,
}

/// Where the predicted objects and the ground-truth points are.
#[derive(Clone, Debug, PartialEq)]
pub struct Localization {
    pub height: usize,
    pub width: usize,
    pub centers: Vec<Point>,
    pub points: Vec<Point>,
    pub blobs: Vec<BlobHit>,
}

/// One image's ground truth and prediction. Counts are indexed by object
/// class minus one.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub true_counts: Vec<usize>,
    pub pred_counts: Vec<usize>,
    pub localization: Option<Localization>,
}

impl EvalRecord {
    /// Count-only record, as produced by a regression baseline.
    pub fn counts(true_counts: Vec<usize>, pred_counts: Vec<usize>) -> Result<Self> {
        let r = Self {
            true_counts,
            pred_counts,
            localization: None,
        };
        r.validate()?;
        Ok(r)
    }

    /// Record from per-class blob labelings (entry `k` is class `k + 1`, as
    /// returned by [`crate::blob::label_classes`]) and the image's annotations.
    pub fn from_labelings(blobs: &[BlobLabeling], t: &PointAnnotations) -> Self {
        let mut centers = Vec::new();
        let mut hits = Vec::new();
        for b in blobs {
            centers.extend(blob_centers(b));
            hits.extend(b.blob_ids().map(|id| BlobHit {
                class: b.class(),
                points: b.tally(id),
            }));
        }
        Self {
            true_counts: t.counts(blobs.len() + 1)[1..].to_vec(),
            pred_counts: blobs.iter().map(BlobLabeling::num_blobs).collect(),
            localization: Some(Localization {
                height: t.height(),
                width: t.width(),
                centers,
                points: t.points().to_vec(),
                blobs: hits,
            }),
        }
    }

    pub fn classes(&self) -> usize {
        self.true_counts.len()
    }

    /// Checks that counts agree in length and with the localization, if any.
    pub fn validate(&self) -> Result<()> {
        let c = self.true_counts.len();
        if c == 0 || self.pred_counts.len() != c {
            return Err(Error::Shape(format!(
                "record has {} true and {} predicted class counts",
                c,
                self.pred_counts.len()
            )));
        }
        let Some(loc) = &self.localization else {
            return Ok(());
        };
        let tally = |pts: &[Point]| {
            let mut n = vec![0; c];
            for p in pts {
                if p.class >= 1 && p.class <= c {
                    n[p.class - 1] += 1;
                }
            }
            n
        };
        for p in loc.centers.iter().chain(&loc.points) {
            if p.row >= loc.height || p.col >= loc.width || p.class == 0 || p.class > c {
                return Err(Error::Annotation(format!(
                    "({}, {}, class {}) out of range",
                    p.row, p.col, p.class
                )));
            }
        }
        if tally(&loc.centers) != self.pred_counts {
            return Err(Error::Shape("predicted counts disagree with blob centers".into()));
        }
        if tally(&loc.points) != self.true_counts {
            return Err(Error::Shape("true counts disagree with annotated points".into()));
        }
        let mut per_class = vec![0; c];
        for b in &loc.blobs {
            if b.class == 0 || b.class > c {
                return Err(Error::Annotation(format!("blob of class {}", b.class)));
            }
            per_class[b.class - 1] += 1;
        }
        if per_class != self.pred_counts {
            return Err(Error::Shape("predicted counts disagree with blob list".into()));
        }
        Ok(())
    }
}

fn check_records(records: &[EvalRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyRecords)?;
    for r in records {
        r.validate()?;
        if r.classes() != first.classes() {
            return Err(Error::Shape("records disagree on the number of classes".into()));
        }
    }
    Ok(first.classes())
}

fn single_class(records: &[EvalRecord]) -> Result<()> {
    match check_records(records)? {
        1 => Ok(()),
        c => Err(Error::MultiClass(c)),
    }
}

/// Mean absolute count error.
pub fn mae(records: &[EvalRecord]) -> Result<f64> {
    single_class(records)?;
    let sum: f64 = records
        .iter()
        .map(|r| r.pred_counts[0].abs_diff(r.true_counts[0]) as f64)
        .sum();
    Ok(sum / records.len() as f64)
}

/// Mean absolute count error over images and classes. Equals [`mae`] on
/// single-class records.
pub fn count_mae(records: &[EvalRecord]) -> Result<f64> {
    let classes = check_records(records)?;
    let sum: f64 = records
        .iter()
        .flat_map(|r| r.pred_counts.iter().zip(&r.true_counts))
        .map(|(p, t)| p.abs_diff(*t) as f64)
        .sum();
    Ok(sum / (records.len() * classes) as f64)
}

/// Index of the grid cell holding coordinate `x` when `extent` is cut into
/// `n` cells with edges at `floor(i * extent / n)`.
fn cell_of(x: usize, extent: usize, n: usize) -> usize {
    ((x + 1) * n - 1) / extent
}

/// Grid average mean absolute error: each image is cut into `2^level` by
/// `2^level` cells and the per-cell center/point count differences are summed.
///
/// Cell edges sit at `floor(i * H / n)`, so every level refines the previous
/// one and the metric never decreases with `level`.
pub fn game(records: &[EvalRecord], level: u32) -> Result<f64> {
    single_class(records)?;
    if level > 16 {
        return Err(Error::Config(format!("GAME level {level} is too large")));
    }
    let n = 1usize << level;
    let mut total = 0.0;
    for r in records {
        let loc = r
            .localization
            .as_ref()
            .ok_or_else(|| Error::Config("GAME needs blob centers and points".into()))?;
        let mut diff = vec![0i64; n * n];
        let cell = |p: &Point| cell_of(p.row, loc.height, n) * n + cell_of(p.col, loc.width, n);
        for p in &loc.centers {
            diff[cell(p)] += 1;
        }
        for p in &loc.points {
            diff[cell(p)] -= 1;
        }
        total += diff.iter().map(|d| d.unsigned_abs() as f64).sum::<f64>();
    }
    Ok(total / records.len() as f64)
}

/// `2TP / (2TP + FP + FN)`, or 1 when all three are zero.
pub fn f_score_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Localization F-score. A blob holding at least one point of its class is one
/// true positive, an empty blob a false positive, and the false negatives are
/// the number of points minus the true positives. Counts are pooled over images per
/// class and the per-class scores averaged.
pub fn fscore(records: &[EvalRecord]) -> Result<f64> {
    let classes = check_records(records)?;
    let mut tp = vec![0; classes];
    let mut fp = vec![0; classes];
    let mut points = vec![0; classes];
    for r in records {
        let loc = r
            .localization
            .as_ref()
            .ok_or_else(|| Error::Config("F-score needs blob membership".into()))?;
        for b in &loc.blobs {
            if b.points > 0 {
                tp[b.class - 1] += 1;
            } else {
                fp[b.class - 1] += 1;
            }
        }
        for (p, t) in points.iter_mut().zip(&r.true_counts) {
            *p += t;
        }
    }
    let sum: f64 = (0..classes)
        .map(|k| f_score_from(tp[k], fp[k], points[k].saturating_sub(tp[k])))
        .sum();
    Ok(sum / classes as f64)
}

/// Root-mean-square count errors averaged over classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MrmseFamily {
    pub mrmse: f64,
    /// Only images where the class is present; `None` if no class ever is.
    pub mrmse_nz: Option<f64>,
    /// Squared errors divided by `true + 1`.
    pub rel_mrmse: f64,
    pub rel_mrmse_nz: Option<f64>,
}

/// mRMSE and its variants. A class with no nonzero image is left out of the
/// `-nz` averages.
pub fn mrmse_family(records: &[EvalRecord]) -> Result<MrmseFamily> {
    let classes = check_records(records)?;
    let mut all = (0.0, 0.0);
    let mut nz = (0.0, 0.0, 0usize);
    for k in 0..classes {
        let (mut sq, mut rel, mut sq_nz, mut rel_nz, mut count_nz) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for r in records {
            let c = r.true_counts[k] as f64;
            let e = (r.pred_counts[k] as f64 - c).powi(2);
            sq += e;
            rel += e / (c + 1.0);
            if r.true_counts[k] > 0 {
                sq_nz += e;
                rel_nz += e / (c + 1.0);
                count_nz += 1;
            }
        }
        let n = records.len() as f64;
        all.0 += (sq / n).sqrt();
        all.1 += (rel / n).sqrt();
        if count_nz > 0 {
            nz.0 += (sq_nz / count_nz as f64).sqrt();
            nz.1 += (rel_nz / count_nz as f64).sqrt();
            nz.2 += 1;
        }
    }
    let c = classes as f64;
    let avg = |v: f64| (nz.2 > 0).then(|| v / nz.2 as f64);
    Ok(MrmseFamily {
        mrmse: all.0 / c,
        mrmse_nz: avg(nz.0),
        rel_mrmse: all.1 / c,
        rel_mrmse_nz: avg(nz.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blob::{assign_points, connected_components};
    use crate::grid::BinaryMask;

    fn located(h: usize, w: usize, centers: &[(usize, usize)], points: &[(usize, usize)]) -> EvalRecord {
        let centers: Vec<Point> = centers.iter().map(|&(r, c)| Point::new(r, c, 1)).collect();
        let points: Vec<Point> = points.iter().map(|&(r, c)| Point::new(r, c, 1)).collect();
        EvalRecord {
            true_counts: vec![points.len()],
            pred_counts: vec![centers.len()],
            localization: Some(Localization {
                height: h,
                width: w,
                blobs: vec![BlobHit { class: 1, points: 0 }; centers.len()],
                centers,
                points,
            }),
        }
    }

    #[test]
    fn mae_examples() {
        let r = [
            EvalRecord::counts(vec![3], vec![4]).unwrap(),
            EvalRecord::counts(vec![5], vec![5]).unwrap(),
        ];
        assert_eq!(mae(&r).unwrap(), 0.5);
        let perfect = [EvalRecord::counts(vec![2], vec![2]).unwrap()];
        assert_eq!(mae(&perfect).unwrap(), 0.0);
        assert!(matches!(mae(&[]), Err(Error::EmptyRecords)));
        let multi = [EvalRecord::counts(vec![1, 2], vec![1, 2]).unwrap()];
        assert!(matches!(mae(&multi), Err(Error::MultiClass(2))));
    }

    #[test]
    fn game_quadrant_example() {
        let r = [located(8, 8, &[(6, 6), (7, 5)], &[(1, 1), (2, 0)])];
        assert_eq!(mae(&r).unwrap(), 0.0);
        assert_eq!(game(&r, 0).unwrap(), 0.0);
        assert_eq!(game(&r, 1).unwrap(), 4.0);
    }

    #[test]
    fn game_cells_nest_on_awkward_sizes() {
        for extent in 1..40 {
            for level in 0..5 {
                let n = 1 << level;
                for x in 0..extent {
                    if n > 1 {
                        assert_eq!(cell_of(x, extent, n) / 2, cell_of(x, extent, n / 2));
                    }
                    let i = cell_of(x, extent, n);
                    assert!(i * extent / n <= x && x < (i + 1) * extent / n);
                }
            }
        }
    }

    #[test]
    fn game_needs_localization() {
        let r = [EvalRecord::counts(vec![1], vec![1]).unwrap()];
        assert!(game(&r, 1).is_err());
    }

    #[test]
    fn fscore_examples() {
        assert!((f_score_from(3, 1, 2) - 6.0 / 9.0).abs() < 1e-12);
        assert!((f_score_from(1, 0, 9) - 2.0 / 11.0).abs() < 1e-12);
        assert_eq!(f_score_from(0, 0, 0), 1.0);
        assert_eq!(f_score_from(0, 2, 0), 0.0);
    }

    #[test]
    fn fscore_from_blobs() {
        // one blob holding both points, one empty blob
        let mask = BinaryMask::from_ascii(&["###..#", "......"]).unwrap();
        let points = vec![Point::new(0, 0, 1), Point::new(0, 2, 1)];
        let t = PointAnnotations::new(2, 6, points.clone()).unwrap();
        let blobs = assign_points(connected_components(&mask), &points);
        let r = EvalRecord::from_labelings(&[blobs], &t);
        r.validate().unwrap();
        assert_eq!((r.true_counts[0], r.pred_counts[0]), (2, 2));
        // TP = 1, FP = 1, FN = 1
        assert!((fscore(&[r]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mrmse_examples() {
        let r = [
            EvalRecord::counts(vec![2], vec![3]).unwrap(),
            EvalRecord::counts(vec![1], vec![1]).unwrap(),
        ];
        let m = mrmse_family(&r).unwrap();
        assert!((m.mrmse - 0.5f64.sqrt()).abs() < 1e-12);

        let r = [EvalRecord::counts(vec![0], vec![1]).unwrap()];
        let m = mrmse_family(&r).unwrap();
        assert_eq!(m.rel_mrmse, 1.0);
        assert_eq!(m.mrmse_nz, None);

        let perfect = [EvalRecord::counts(vec![1, 4], vec![1, 4]).unwrap()];
        let m = mrmse_family(&perfect).unwrap();
        assert_eq!(
            (m.mrmse, m.mrmse_nz, m.rel_mrmse, m.rel_mrmse_nz),
            (0.0, Some(0.0), 0.0, Some(0.0))
        );
    }

    #[test]
    fn inconsistent_records_are_rejected() {
        let mut r = located(4, 4, &[(0, 0)], &[(1, 1)]);
        r.pred_counts[0] = 2;
        assert!(r.validate().is_err());
        assert!(EvalRecord::counts(vec![1], vec![1, 2]).is_err());
    }
}
