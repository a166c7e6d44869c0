//! Coordinate grid quantization shared by markup and token sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest coordinate token index per axis.
pub const MAX_INDEX: u32 = 999;

/// Pixels per grid step for coordinate tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub unit: u32,
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec { unit: 5 }
    }
}

impl QuantSpec {
    pub fn new(unit: u32) -> Result<Self> {
        if unit == 0 {
            return Err(Error::InvalidConfig("grid unit must be >= 1".into()));
        }
        Ok(QuantSpec { unit })
    }

    pub fn max_index(&self) -> u32 {
        MAX_INDEX
    }

    /// Round-half-up `coord / unit`, clamped to the last index.
    pub fn quantize(&self, coord: f64) -> Result<u32> {
        if coord.is_nan() {
            return Err(Error::NonFiniteInput("coordinate is NaN".into()));
        }
        if coord < 0.0 {
            return Err(Error::NegativeCoord(coord));
        }
        let idx = (coord / self.unit as f64 + 0.5).floor();
        Ok(if idx >= MAX_INDEX as f64 { MAX_INDEX } else { idx as u32 })
    }

    /// Integer fast path of [`QuantSpec::quantize`].
    pub fn quantize_px(&self, coord: u32) -> u32 {
        let u = self.unit as u64;
        let idx = (2 * coord as u64 + u) / (2 * u);
        idx.min(MAX_INDEX as u64) as u32
    }

    pub fn dequantize(&self, index: u32) -> u32 {
        index * self.unit
    }

    /// Largest coordinate that quantizes without clamping.
    pub fn max_coord(&self) -> u32 {
        MAX_INDEX * self.unit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        let q = QuantSpec::default();
        assert_eq!(q.quantize(0.0).unwrap(), 0);
        assert_eq!(q.quantize(12.0).unwrap(), 2);
        assert_eq!(q.quantize(9999.0).unwrap(), 999);
        assert_eq!(q.quantize(12.5).unwrap(), 3);
        assert!(matches!(q.quantize(-1.0), Err(Error::NegativeCoord(_))));
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(QuantSpec::new(5).unwrap().dequantize(2), 10);
        assert_eq!(QuantSpec::new(2).unwrap().dequantize(999), 1998);
        assert!(QuantSpec::new(0).is_err());
    }

    #[test]
    fn error_bound_exhaustive() {
        for unit in [1u32, 2, 5, 8] {
            let q = QuantSpec::new(unit).unwrap();
            for c in 0..=q.max_coord() {
                let back = q.dequantize(q.quantize_px(c)) as f64;
                assert!((back - c as f64).abs() <= unit as f64 / 2.0, "u={unit} c={c}");
                assert_eq!(q.quantize_px(c), q.quantize(c as f64).unwrap());
            }
        }
    }
}
