//! Per-thread call counters for the training-only machinery.
//!
//! Inference must not split blobs or drop false positives; tests read these
//! counters around a prediction to check that.

use std::cell::Cell;

thread_local! {
    static SPLITS: Cell<u64> = const { Cell::new(0) };
    static FALSE_POSITIVES: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn record_split() {
    SPLITS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_false_positive() {
    FALSE_POSITIVES.with(|c| c.set(c.get() + 1));
}

/// Split-method invocations (watershed or line) on this thread so far.
pub fn split_calls() -> u64 {
    SPLITS.with(Cell::get)
}

/// False-positive set derivations on this thread so far.
pub fn false_positive_calls() -> u64 {
    FALSE_POSITIVES.with(Cell::get)
}
