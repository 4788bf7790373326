//! Floating-point formats and their roundoff model constants.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FloatFormat {
    #[default]
    Binary64,
    Binary32,
}

impl FloatFormat {
    /// Relative error bound of one correctly rounded operation.
    pub fn eps(self) -> f64 {
        match self {
            FloatFormat::Binary64 => f64::EPSILON / 2.0,
            FloatFormat::Binary32 => (f32::EPSILON / 2.0) as f64,
        }
    }

    /// Absolute error bound covering gradual underflow.
    pub fn delta(self) -> f64 {
        match self {
            // 2^-1075 is not representable; the smallest subnormal bounds it.
            FloatFormat::Binary64 => f64::from_bits(1),
            FloatFormat::Binary32 => 2f64.powi(-150),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FloatFormat::Binary64 => "binary64",
            FloatFormat::Binary32 => "binary32",
        }
    }

    pub fn is_single(self) -> bool {
        self == FloatFormat::Binary32
    }

    /// Rounds a binary64 value to this format.
    pub fn round(self, v: f64) -> f64 {
        match self {
            FloatFormat::Binary64 => v,
            FloatFormat::Binary32 => v as f32 as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_constants() {
        assert_eq!(FloatFormat::Binary64.eps(), 2f64.powi(-53));
        assert_eq!(FloatFormat::Binary32.eps(), 2f64.powi(-24));
        assert_eq!(FloatFormat::Binary32.delta(), 2f64.powi(-150));
        assert_eq!(FloatFormat::Binary64.delta(), 2f64.powi(-1074));
    }
}
