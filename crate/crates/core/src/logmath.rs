//! Log-domain arithmetic for clock residuals and consumed times.

use std::f64::consts::LN_2;

/// `ln(1 - e^x)` for `x <= 0`, accurate near both ends.
#[inline]
pub fn log1mexp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Non-negative accumulator stored as its logarithm; `ln 0 = -inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogSum(pub f64);

impl Default for LogSum {
    fn default() -> Self {
        LogSum(f64::NEG_INFINITY)
    }
}

impl LogSum {
    #[inline]
    pub fn add_log(&mut self, x: f64) {
        self.0 = logaddexp(self.0, x);
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}
