//! Fixtures shared by the benchmarks: the built-in test system at its
//! congested peak hour and the day-ahead schedule for that hour.

use relief_core::market::clear_day_ahead;
use relief_core::{build_rts24, ClearingResult, OfferSet, SystemCase};

/// Zero-based peak hour, the most congested of the day.
pub const PEAK: usize = 17;

pub fn peak_case() -> (SystemCase, ClearingResult) {
    let case = build_rts24();
    let s1 = clear_day_ahead(&OfferSet::from_case(&case, PEAK, None)).expect("peak hour clears");
    (case, s1)
}
