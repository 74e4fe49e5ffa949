//! Extended reals `[-inf, +inf]` with a total order.
//!
//! Limits of log-probability ratios are allowed to be infinite (`ln 0 = -inf`,
//! `1/0 = inf`, `1/inf = 0`). IEEE doubles already carry the infinities; this
//! wrapper rules out NaN so the values can be ordered and compared freely.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal(0.0);
    pub const ONE: ExtReal = ExtReal(1.0);
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const NEG_INFINITY: ExtReal = ExtReal(f64::NEG_INFINITY);

    /// `None` for NaN.
    pub fn new(value: f64) -> Option<Self> {
        if value.is_nan() {
            None
        } else {
            Some(ExtReal(value))
        }
    }

    /// Logarithm of a probability with `ln 0 = -inf`.
    pub fn ln_prob(p: f64) -> Self {
        debug_assert!((0.0..=1.0 + 1e-12).contains(&p));
        if p <= 0.0 {
            ExtReal::NEG_INFINITY
        } else {
            ExtReal(p.ln())
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// `1/0 = inf`, `1/inf = 0`.
    pub fn recip(self) -> Self {
        if self.0 == 0.0 {
            ExtReal::INFINITY
        } else if self.0.is_infinite() {
            ExtReal::ZERO
        } else {
            ExtReal(1.0 / self.0)
        }
    }

    /// Ratio of two log-probabilities (both in `[-inf, 0]`).
    ///
    /// Returns `None` when the ratio is undefined (`0/0` or `inf/inf`).
    pub fn log_ratio(num: ExtReal, den: ExtReal) -> Option<Self> {
        let (a, b) = (num.0, den.0);
        match (a.is_infinite(), b.is_infinite()) {
            (true, true) => None,
            (true, false) => {
                if b == 0.0 {
                    None
                } else {
                    Some(ExtReal::INFINITY)
                }
            }
            (false, true) => Some(ExtReal::ZERO),
            (false, false) => {
                if b == 0.0 {
                    if a == 0.0 {
                        None
                    } else {
                        Some(ExtReal::INFINITY)
                    }
                } else {
                    Some(ExtReal((a / b).abs()))
                }
            }
        }
    }

    /// Product with the measure-theoretic convention `0 * inf = 0`.
    pub fn mul(self, other: ExtReal) -> Self {
        if self.0 == 0.0 || other.0 == 0.0 {
            ExtReal::ZERO
        } else {
            ExtReal(self.0 * other.0)
        }
    }

    pub fn min(self, other: ExtReal) -> Self {
        std::cmp::min(self, other)
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            write!(f, "inf")
        } else if self.0 == f64::NEG_INFINITY {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// JSON has no infinities: finite values are numbers, infinite ones the
/// strings `"inf"` / `"-inf"`.
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str(&self.to_string())
        }
    }
}
