//! The four-term localization-counting loss and its gradient.
//!
//! The loss is built in two steps. [`LossPlan::derive`] inspects a prediction
//! and fixes every discrete set the terms need: the peak pixel of each class,
//! the split boundary with its weights, and the pixels of unmatched blobs.
//! [`LossPlan::evaluate`] and [`LossPlan::gradient`] then treat those sets as
//! constants, so the gradient is exact for the frozen sets.

use std::fmt;
use std::str::FromStr;

use crate::blob::{
    assign_points, connected_components, label_classes, line_split, watershed_split, BlobLabeling, SplitBoundary,
};
use crate::error::{Error, Result};
use crate::grid::{
    foreground_mask, present_classes, softmax, ClassId, ClassPresence, LogitMap, PointAnnotations, ProbMap,
};

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Boundary generator used by the split term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SplitMethod {
    #[default]
    Watershed,
    Line,
}

impl fmt::Display for SplitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMethod::Watershed => "watershed",
            SplitMethod::Line => "line",
        })
    }
}

impl FromStr for SplitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "watershed" => Ok(SplitMethod::Watershed),
            "line" => Ok(SplitMethod::Line),
            other => Err(Error::Config(format!("unknown split method {other:?}"))),
        }
    }
}

/// Which loss terms are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LossTerms {
    pub image: bool,
    pub point: bool,
    pub split: bool,
    pub false_positive: bool,
}

impl LossTerms {
    pub const FULL: Self = Self {
        image: true,
        point: true,
        split: true,
        false_positive: true,
    };
    pub const NONE: Self = Self {
        image: false,
        point: false,
        split: false,
        false_positive: false,
    };
    pub const IMAGE_POINT: Self = Self {
        image: true,
        point: true,
        split: false,
        false_positive: false,
    };
    pub const IMAGE_POINT_SPLIT: Self = Self {
        split: true,
        ..Self::IMAGE_POINT
    };
    pub const IMAGE_POINT_FP: Self = Self {
        false_positive: true,
        ..Self::IMAGE_POINT
    };

    /// The ablation ladder, weakest first.
    pub const ABLATIONS: [Self; 4] = [
        Self::IMAGE_POINT,
        Self::IMAGE_POINT_SPLIT,
        Self::IMAGE_POINT_FP,
        Self::FULL,
    ];

    fn needs_blobs(&self) -> bool {
        self.split || self.false_positive
    }
}

impl Default for LossTerms {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for LossTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::FULL {
            return f.write_str("full");
        }
        let names: Vec<&str> = [
            (self.image, "li"),
            (self.point, "lp"),
            (self.split, "ls"),
            (self.false_positive, "lf"),
        ]
        .iter()
        .filter_map(|&(on, n)| on.then_some(n))
        .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

impl FromStr for LossTerms {
    type Err = Error;

    /// Accepts `full`, `none`, or a `+`-separated subset of `li`, `lp`, `ls`, `lf`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => return Ok(Self::FULL),
            "none" => return Ok(Self::NONE),
            _ => {}
        }
        let mut terms = Self::NONE;
        for part in s.split('+') {
            match part.trim() {
                "li" => terms.image = true,
                "lp" => terms.point = true,
                "ls" => terms.split = true,
                "lf" => terms.false_positive = true,
                other => return Err(Error::Config(format!("unknown loss term {other:?} in {s:?}"))),
            }
        }
        Ok(terms)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub split_method: SplitMethod,
    /// Floor applied inside every logarithm.
    pub epsilon: f64,
    pub terms: LossTerms,
    /// Divide the point, split and false-positive sums by their total weight.
    pub normalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            split_method: SplitMethod::Watershed,
            epsilon: DEFAULT_EPSILON,
            terms: LossTerms::FULL,
            normalize: false,
        }
    }
}

impl LossConfig {
    pub fn with_terms(terms: LossTerms) -> Self {
        Self {
            terms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1e-6]", self.epsilon)));
        }
        Ok(())
    }
}

/// Values of the four terms and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub image_level: f64,
    pub point_level: f64,
    pub split_level: f64,
    pub false_positive: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Breakdown whose total is the sum of the four terms.
    pub fn new(image_level: f64, point_level: f64, split_level: f64, false_positive: f64) -> Self {
        Self {
            image_level,
            point_level,
            split_level,
            false_positive,
            total: image_level + point_level + split_level + false_positive,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

fn neg_log(p: f64, eps: f64) -> f64 {
    -p.max(eps).ln()
}

/// d/dp of `-ln(max(p, eps))`.
fn d_neg_log(p: f64, eps: f64) -> f64 {
    if p > eps {
        -1.0 / p
    } else {
        0.0
    }
}

/// Pixel index holding the largest probability of `class`; ties go to the first pixel.
fn peak_pixel(s: &ProbMap, class: ClassId) -> usize {
    let c = s.classes();
    let mut best = 0;
    for i in 1..s.len() {
        if s.values()[i * c + class] > s.values()[best * c + class] {
            best = i;
        }
    }
    best
}

fn image_level_with(s: &ProbMap, presence: &ClassPresence, peaks: &[usize], eps: f64) -> f64 {
    let c = s.classes();
    let present: f64 = presence
        .present
        .iter()
        .map(|&k| neg_log(s.values()[peaks[k] * c + k], eps))
        .sum();
    let mut loss = present / presence.present.len() as f64;
    if !presence.absent.is_empty() {
        let absent: f64 = presence
            .absent
            .iter()
            .map(|&k| neg_log(1.0 - s.values()[peaks[k] * c + k], eps))
            .sum();
        loss += absent / presence.absent.len() as f64;
    }
    loss
}

/// Image-level term: confident peaks for present classes, none for absent ones.
/// The absent-class average is dropped when every class is present.
pub fn image_level_loss(s: &ProbMap, t: &PointAnnotations) -> Result<f64> {
    let presence = present_classes(t, s.classes())?;
    let peaks: Vec<usize> = (0..s.classes()).map(|k| peak_pixel(s, k)).collect();
    Ok(image_level_with(s, &presence, &peaks, DEFAULT_EPSILON))
}

/// Point-level term: cross-entropy on the annotated pixels only.
pub fn point_level_loss(s: &ProbMap, t: &PointAnnotations) -> f64 {
    t.points()
        .iter()
        .map(|p| neg_log(s.get(p.row, p.col, p.class), DEFAULT_EPSILON))
        .sum()
}

/// Split-level term: weighted background cross-entropy on the boundary.
pub fn split_level_loss(s: &ProbMap, boundary: &SplitBoundary) -> f64 {
    boundary
        .pixels()
        .iter()
        .map(|p| f64::from(p.alpha) * neg_log(s.get(p.row, p.col, 0), DEFAULT_EPSILON))
        .sum()
}

/// Flat indices of every pixel in a blob that holds no annotation of its class.
pub fn false_positive_pixels(blobs: &[BlobLabeling]) -> Vec<usize> {
    crate::probe::record_false_positive();
    let mut out: Vec<usize> = blobs
        .iter()
        .flat_map(|b| {
            let empty: Vec<u32> = b.false_positive_blobs();
            b.labels()
                .iter()
                .enumerate()
                .filter(move |&(_, l)| *l != 0 && empty.contains(l))
                .map(|(i, _)| i)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// False-positive term: background cross-entropy over blobs without annotations.
/// `blobs` holds one labelling per object class with annotations assigned.
pub fn false_positive_loss(s: &ProbMap, blobs: &[BlobLabeling]) -> f64 {
    false_positive_pixels(blobs)
        .iter()
        .map(|&i| neg_log(s.background(i), DEFAULT_EPSILON))
        .sum()
}

/// Every discrete set the loss reads, fixed from one prediction.
#[derive(Clone, Debug)]
pub struct LossPlan {
    config: LossConfig,
    classes: usize,
    pixels: usize,
    presence: ClassPresence,
    peaks: Vec<usize>,
    points: Vec<(usize, ClassId)>,
    boundary: SplitBoundary,
    boundary_index: Vec<(usize, f64)>,
    fp_pixels: Vec<usize>,
}

impl LossPlan {
    pub fn derive(s: &ProbMap, t: &PointAnnotations, config: &LossConfig) -> Result<Self> {
        config.validate()?;
        if t.height() != s.height() || t.width() != s.width() {
            return Err(Error::Shape(format!(
                "annotations are {}x{}, prediction is {}x{}",
                t.height(),
                t.width(),
                s.height(),
                s.width()
            )));
        }
        let presence = present_classes(t, s.classes())?;
        let peaks = (0..s.classes()).map(|k| peak_pixel(s, k)).collect();
        let points = t
            .points()
            .iter()
            .map(|p| (p.row * s.width() + p.col, p.class))
            .collect();

        let mut boundary = SplitBoundary::empty();
        let mut fp_pixels = Vec::new();
        if config.terms.needs_blobs() {
            if config.terms.split {
                let mask = foreground_mask(s);
                let blobs = assign_points(connected_components(&mask), t.points());
                boundary = match config.split_method {
                    SplitMethod::Watershed => watershed_split(&mask, &blobs, t)?,
                    SplitMethod::Line => line_split(s, &blobs),
                };
            }
            if config.terms.false_positive {
                fp_pixels = false_positive_pixels(&label_classes(s, t));
            }
        }
        let boundary_index = boundary
            .pixels()
            .iter()
            .map(|p| (p.row * s.width() + p.col, f64::from(p.alpha)))
            .collect();

        Ok(Self {
            config: *config,
            classes: s.classes(),
            pixels: s.len(),
            presence,
            peaks,
            points,
            boundary,
            boundary_index,
            fp_pixels,
        })
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    pub fn boundary(&self) -> &SplitBoundary {
        &self.boundary
    }

    pub fn false_positive_pixels(&self) -> &[usize] {
        &self.fp_pixels
    }

    /// Peak pixel per class used by the image-level term.
    pub fn peaks(&self) -> &[usize] {
        &self.peaks
    }

    fn scales(&self) -> (f64, f64, f64) {
        if !self.config.normalize {
            return (1.0, 1.0, 1.0);
        }
        let inv = |n: f64| if n > 0.0 { 1.0 / n } else { 1.0 };
        (
            inv(self.points.len() as f64),
            inv(self.boundary_index.iter().map(|&(_, a)| a).sum()),
            inv(self.fp_pixels.len() as f64),
        )
    }

    fn check(&self, s: &ProbMap) {
        assert_eq!(
            (s.len(), s.classes()),
            (self.pixels, self.classes),
            "plan and prediction differ in shape"
        );
    }

    /// Loss of `s` under the frozen sets.
    pub fn evaluate(&self, s: &ProbMap) -> LossBreakdown {
        self.check(s);
        let eps = self.config.epsilon;
        let terms = self.config.terms;
        let (point_scale, split_scale, fp_scale) = self.scales();
        let c = self.classes;
        let v = s.values();

        let image = if terms.image {
            image_level_with(s, &self.presence, &self.peaks, eps)
        } else {
            0.0
        };
        let point = if terms.point {
            point_scale
                * self
                    .points
                    .iter()
                    .map(|&(i, k)| neg_log(v[i * c + k], eps))
                    .sum::<f64>()
        } else {
            0.0
        };
        let split = if terms.split {
            split_scale
                * self
                    .boundary_index
                    .iter()
                    .map(|&(i, a)| a * neg_log(v[i * c], eps))
                    .sum::<f64>()
        } else {
            0.0
        };
        let fp = if terms.false_positive {
            fp_scale * self.fp_pixels.iter().map(|&i| neg_log(v[i * c], eps)).sum::<f64>()
        } else {
            0.0
        };
        LossBreakdown::new(image, point, split, fp)
    }

    /// Gradient of the total loss with respect to the logits behind `s`,
    /// laid out like the logit map.
    pub fn gradient(&self, s: &ProbMap) -> Vec<f64> {
        self.check(s);
        let eps = self.config.epsilon;
        let terms = self.config.terms;
        let (point_scale, split_scale, fp_scale) = self.scales();
        let c = self.classes;
        let v = s.values();

        // dL/dS, accumulated sparsely then pushed through the softmax Jacobian
        let mut d_prob = vec![0.0; v.len()];
        let mut touched = vec![false; self.pixels];
        let mut add = |i: usize, k: usize, g: f64| {
            d_prob[i * c + k] += g;
            touched[i] = true;
        };

        if terms.image {
            let w = 1.0 / self.presence.present.len() as f64;
            for &k in &self.presence.present {
                let i = self.peaks[k];
                add(i, k, w * d_neg_log(v[i * c + k], eps));
            }
            if !self.presence.absent.is_empty() {
                let w = 1.0 / self.presence.absent.len() as f64;
                for &k in &self.presence.absent {
                    let i = self.peaks[k];
                    // d/dS of -ln(max(1 - S, eps))
                    add(i, k, -w * d_neg_log(1.0 - v[i * c + k], eps));
                }
            }
        }
        if terms.point {
            for &(i, k) in &self.points {
                add(i, k, point_scale * d_neg_log(v[i * c + k], eps));
            }
        }
        if terms.split {
            for &(i, a) in &self.boundary_index {
                add(i, 0, split_scale * a * d_neg_log(v[i * c], eps));
            }
        }
        if terms.false_positive {
            for &i in &self.fp_pixels {
                add(i, 0, fp_scale * d_neg_log(v[i * c], eps));
            }
        }

        let mut grad = vec![0.0; v.len()];
        for (i, _) in touched.iter().enumerate().filter(|(_, &t)| t) {
            let p = &v[i * c..(i + 1) * c];
            let g = &d_prob[i * c..(i + 1) * c];
            let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
            for k in 0..c {
                grad[i * c + k] = p[k] * (g[k] - dot);
            }
        }
        grad
    }
}

/// Softmax, set derivation and evaluation in one call.
pub fn total_loss(logits: &LogitMap, t: &PointAnnotations, cfg: &LossConfig) -> Result<LossBreakdown> {
    let s = softmax(logits)?;
    Ok(LossPlan::derive(&s, t, cfg)?.evaluate(&s))
}

/// Exact gradient of [`total_loss`] with respect to the logits, holding the
/// derived pixel sets fixed.
pub fn loss_gradient(logits: &LogitMap, t: &PointAnnotations, cfg: &LossConfig) -> Result<Vec<f64>> {
    Ok(loss_and_gradient(logits, t, cfg)?.1)
}

/// Loss value and gradient sharing one set derivation.
pub fn loss_and_gradient(
    logits: &LogitMap,
    t: &PointAnnotations,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<f64>, LossPlan)> {
    let s = softmax(logits)?;
    let plan = LossPlan::derive(&s, t, cfg)?;
    Ok((plan.evaluate(&s), plan.gradient(&s), plan))
}
