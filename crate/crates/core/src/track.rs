//! Per-thread record of the largest single numeric buffer created by this crate.
//!
//! Every [`NdArray`](crate::NdArray) and [`DenseMatrix`](crate::DenseMatrix)
//! buffer is registered here on construction, which lets the benchmark report
//! the peak allocation of each estimation path.

use std::cell::Cell;

thread_local! {
    static PEAK: Cell<usize> = const { Cell::new(0) };
}

pub(crate) fn note(elements: usize) {
    PEAK.with(|p| {
        if elements > p.get() {
            p.set(elements);
        }
    });
}

/// Clear the peak for the current thread.
pub fn reset_peak() {
    PEAK.with(|p| p.set(0));
}

/// Largest element count of any single buffer created on this thread since the last reset.
pub fn peak_elements() -> usize {
    PEAK.with(|p| p.get())
}
