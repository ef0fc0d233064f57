//! Dense per-pixel grids shared by every stage of the pipeline.
//!
//! All grids are row-major with the origin at the top-left corner and are
//! addressed as `(row, col)`. Multi-class grids store the class values of a
//! pixel contiguously, so `values[(row * width + col) * classes + k]`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Class index; 0 is always the background.
pub type ClassId = usize;

pub const BACKGROUND: ClassId = 0;

/// A single point annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub row: usize,
    pub col: usize,
    pub class: ClassId,
}

impl Point {
    pub fn new(row: usize, col: usize, class: ClassId) -> Self {
        Self { row, col, class }
    }

    pub fn squared_distance(&self, other: &Point) -> u64 {
        let dr = self.row.abs_diff(other.row) as u64;
        let dc = self.col.abs_diff(other.col) as u64;
        dr * dr + dc * dc
    }
}

fn check_dims(height: usize, width: usize, classes: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Shape(format!("empty grid {height}x{width}")));
    }
    if classes < 2 {
        return Err(Error::Shape(format!(
            "need background plus at least one class, got {classes} classes"
        )));
    }
    if len != height * width * classes {
        return Err(Error::Shape(format!(
            "{height}x{width}x{classes} grid needs {} values, got {len}",
            height * width * classes
        )));
    }
    Ok(())
}

/// Pre-softmax class scores.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap {
    height: usize,
    width: usize,
    classes: usize,
    values: Vec<f64>,
}

impl LogitMap {
    pub fn new(height: usize, width: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width, classes, values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "logits", index });
        }
        Ok(Self {
            height,
            width,
            classes,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize, classes: usize) -> Result<Self> {
        Self::new(height, width, classes, vec![0.0; height * width * classes])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize, class: ClassId) -> f64 {
        self.values[(row * self.width + col) * self.classes + class]
    }

    /// Scores of one pixel, indexed by class.
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.classes..(index + 1) * self.classes]
    }
}

/// Per-pixel class probabilities; every pixel row sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    classes: usize,
    values: Vec<f64>,
}

impl ProbMap {
    /// Validates that every entry lies in `[0, 1]` and rows sum to one within 1e-6.
    pub fn new(height: usize, width: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width, classes, values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "probabilities",
                index,
            });
        }
        for (pixel, row) in values.chunks_exact(classes).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Shape(format!("pixel {pixel} has a probability outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Shape(format!("pixel {pixel} probabilities sum to {sum}")));
            }
        }
        Ok(Self {
            height,
            width,
            classes,
            values,
        })
    }

    /// Two-class map from a foreground probability per pixel.
    pub fn from_foreground(height: usize, width: usize, foreground: &[f64]) -> Result<Self> {
        let values = foreground.iter().flat_map(|&p| [1.0 - p, p]).collect();
        Self::new(height, width, 2, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize, class: ClassId) -> f64 {
        self.values[(row * self.width + col) * self.classes + class]
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.classes..(index + 1) * self.classes]
    }

    /// Background probability of a pixel given its flat index.
    pub fn background(&self, index: usize) -> f64 {
        self.values[index * self.classes]
    }
}

/// Boolean per-pixel grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    /// Builds a mask from rows of `'#'` (true) and `'.'` (false).
    pub fn from_ascii(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(height * width);
        for row in rows {
            if row.len() != width {
                return Err(Error::Shape("ragged ascii mask".into()));
            }
            values.extend(row.bytes().map(|b| b == b'#'));
        }
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.values[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

/// Per-pixel class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassGrid {
    height: usize,
    width: usize,
    values: Vec<ClassId>,
}

impl ClassGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[ClassId] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> ClassId {
        self.values[row * self.width + col]
    }

    /// Mask of the pixels labelled `class`.
    pub fn mask_of(&self, class: ClassId) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&c| c == class).collect(),
        }
    }
}

/// Ground-truth point annotations for one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointAnnotations {
    height: usize,
    width: usize,
    points: Vec<Point>,
}

impl PointAnnotations {
    /// Rejects out-of-bounds points, background-class points and duplicate pixels.
    pub fn new(height: usize, width: usize, points: Vec<Point>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in &points {
            if p.row >= height || p.col >= width {
                return Err(Error::Annotation(format!(
                    "point ({}, {}) outside {height}x{width} image",
                    p.row, p.col
                )));
            }
            if p.class == BACKGROUND {
                return Err(Error::Annotation(format!(
                    "point ({}, {}) has background class",
                    p.row, p.col
                )));
            }
            if !seen.insert((p.row, p.col)) {
                return Err(Error::Annotation(format!(
                    "two points share pixel ({}, {})",
                    p.row, p.col
                )));
            }
        }
        Ok(Self { height, width, points })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            points: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn of_class(&self, class: ClassId) -> impl Iterator<Item = &Point> {
        self.points.iter().filter(move |p| p.class == class)
    }

    /// Number of points per class, indexed by class id (index 0 is always 0).
    pub fn counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for p in &self.points {
            if p.class < num_classes {
                counts[p.class] += 1;
            }
        }
        counts
    }
}

/// Classes present in an image (background included) and the remaining ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPresence {
    pub present: Vec<ClassId>,
    pub absent: Vec<ClassId>,
}

/// Row-wise softmax of a logit map.
pub fn softmax(logits: &LogitMap) -> Result<ProbMap> {
    if let Some(index) = logits.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "logits", index });
    }
    let classes = logits.classes;
    let mut values = Vec::with_capacity(logits.values.len());
    for row in logits.values.chunks_exact(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = values.len();
        let mut sum = 0.0;
        for &z in row {
            let e = (z - max).exp();
            sum += e;
            values.push(e);
        }
        for v in &mut values[start..] {
            *v /= sum;
        }
    }
    Ok(ProbMap {
        height: logits.height,
        width: logits.width,
        classes,
        values,
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> ClassId {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Per-pixel most probable class, ties broken toward the lowest class index.
pub fn argmax_class(s: &ProbMap) -> ClassGrid {
    ClassGrid {
        height: s.height,
        width: s.width,
        values: s.values.chunks_exact(s.classes).map(argmax).collect(),
    }
}

/// Pixels whose most probable class is not the background.
pub fn foreground_mask(s: &ProbMap) -> BinaryMask {
    BinaryMask {
        height: s.height,
        width: s.width,
        values: s
            .values
            .chunks_exact(s.classes)
            .map(|row| argmax(row) != BACKGROUND)
            .collect(),
    }
}

pub fn present_classes(t: &PointAnnotations, num_classes: usize) -> Result<ClassPresence> {
    if num_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
    }
    let mut seen = vec![false; num_classes];
    seen[BACKGROUND] = true;
    for p in &t.points {
        if p.class >= num_classes {
            return Err(Error::Annotation(format!(
                "point class {} but the model has {num_classes} classes",
                p.class
            )));
        }
        seen[p.class] = true;
    }
    let (present, absent): (Vec<_>, Vec<_>) = (0..num_classes).partition(|&c| seen[c]);
    Ok(ClassPresence { present, absent })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[&[f64]]) -> LogitMap {
        let classes = rows[0].len();
        LogitMap::new(1, rows.len(), classes, rows.concat()).unwrap()
    }

    fn probs(rows: &[&[f64]]) -> ProbMap {
        let classes = rows[0].len();
        ProbMap::new(1, rows.len(), classes, rows.concat()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let s = softmax(&LogitMap::zeros(3, 4, 2).unwrap()).unwrap();
        assert!(s.values().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn softmax_hand_value() {
        let s = softmax(&logits(&[&[0.0, 3f64.ln()]])).unwrap();
        assert!((s.get(0, 0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&logits(&[&[0.3, -1.2, 2.0]])).unwrap();
        let b = softmax(&logits(&[&[10.3, 8.8, 12.0]])).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_logits() {
        let err = LogitMap::new(1, 1, 2, vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }

    #[test]
    fn foreground_and_argmax_ties() {
        let s = probs(&[&[0.7, 0.3], &[0.2, 0.8], &[0.5, 0.5]]);
        assert_eq!(foreground_mask(&s).values(), &[false, true, false]);
        let s = probs(&[&[0.1, 0.6, 0.3], &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]);
        assert_eq!(argmax_class(&s).values(), &[1, 0]);
    }

    #[test]
    fn argmax_of_one_hot_is_identity() {
        let s = probs(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(argmax_class(&s).values(), &[2, 0, 1]);
    }

    #[test]
    fn present_classes_examples() {
        let t = PointAnnotations::new(
            4,
            4,
            vec![Point::new(0, 0, 1), Point::new(1, 1, 1), Point::new(2, 2, 3)],
        )
        .unwrap();
        let p = present_classes(&t, 4).unwrap();
        assert_eq!(p.present, vec![0, 1, 3]);
        assert_eq!(p.absent, vec![2]);

        let p = present_classes(&PointAnnotations::empty(2, 2), 2).unwrap();
        assert_eq!(p.present, vec![0]);
        assert_eq!(p.absent, vec![1]);

        let t = PointAnnotations::new(2, 2, vec![Point::new(0, 0, 1)]).unwrap();
        assert!(present_classes(&t, 2).unwrap().absent.is_empty());
        assert!(present_classes(&t, 1).is_err());

        let t = PointAnnotations::new(2, 2, vec![Point::new(0, 0, 5)]).unwrap();
        assert!(matches!(present_classes(&t, 3), Err(Error::Annotation(_))));
    }

    #[test]
    fn annotation_invariants() {
        assert!(PointAnnotations::new(2, 2, vec![Point::new(2, 0, 1)]).is_err());
        assert!(PointAnnotations::new(2, 2, vec![Point::new(0, 0, 0)]).is_err());
        assert!(PointAnnotations::new(2, 2, vec![Point::new(0, 0, 1), Point::new(0, 0, 2)]).is_err());
    }

    #[test]
    fn probmap_rejects_bad_rows() {
        assert!(ProbMap::new(1, 1, 2, vec![0.6, 0.6]).is_err());
        assert!(ProbMap::new(1, 1, 2, vec![1.5, -0.5]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_rows_sum_to_one(
                (h, w, c, vals) in (1usize..5, 1usize..5, 2usize..5).prop_flat_map(|(h, w, c)| {
                    (Just(h), Just(w), Just(c), proptest::collection::vec(-50.0f64..50.0, h * w * c))
                })
            ) {
                let s = softmax(&LogitMap::new(h, w, c, vals).unwrap()).unwrap();
                for row in s.values().chunks(c) {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }

            #[test]
            fn foreground_matches_argmax(vals in proptest::collection::vec(-3i32..3, 36)) {
                let l = LogitMap::new(3, 4, 3, vals.into_iter().map(f64::from).collect()).unwrap();
                let s = softmax(&l).unwrap();
                let fg = foreground_mask(&s);
                let cls = argmax_class(&s);
                for (f, c) in fg.values().iter().zip(cls.values()) {
                    prop_assert_eq!(*f, *c > 0);
                }
            }

            #[test]
            fn presence_partitions_classes(
                classes in proptest::collection::vec(1usize..6, 0..10),
                num_classes in 2usize..6,
            ) {
                let points: Vec<_> = classes.iter().enumerate()
                    .map(|(i, &c)| Point::new(i, 0, c.min(num_classes - 1).max(1)))
                    .collect();
                let t = PointAnnotations::new(10, 1, points).unwrap();
                let p = present_classes(&t, num_classes).unwrap();
                let mut all: Vec<_> = p.present.iter().chain(&p.absent).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..num_classes).collect::<Vec<_>>());
                prop_assert!(p.present.contains(&0));
            }
        }
    }
}
