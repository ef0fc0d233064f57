//! Object counting by localization from point annotations.
//!
//! A fully-convolutional network predicts a per-pixel class distribution;
//! the count of a class is the number of connected blobs in its argmax mask.
//! Training uses a four-term loss that only needs one annotated pixel per
//! object:
//!
//! - [`loss::image_level_loss`]: some pixel is confident for every present class,
//!   none for absent classes;
//! - [`loss::point_level_loss`]: annotated pixels get their class;
//! - [`loss::split_level_loss`]: boundaries between annotations inside one blob
//!   become background ([`blob::watershed_split`] or [`blob::line_split`]);
//! - [`loss::false_positive_loss`]: blobs holding no annotation become background.
//!
//! [`fcn`] holds a small encoder-decoder trained from scratch, [`metrics`] the
//! counting and localization scores, and [`data`] dataset plumbing including a
//! synthetic dot generator.

pub mod blob;
pub mod data;
pub mod error;
pub mod fcn;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod probe;

pub use error::{Error, Result};
pub use grid::{
    argmax_class, foreground_mask, present_classes, softmax, BinaryMask, ClassGrid, ClassId, ClassPresence, LogitMap,
    Point, PointAnnotations, ProbMap, BACKGROUND,
};
pub use loss::{LossBreakdown, LossConfig, LossPlan, LossTerms, SplitMethod};
