//! Number formatting shared by every persisted artifact.

/// Scientific notation with 9 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds `x` to what [`sci`] would print.
pub fn quantize(x: f64) -> f64 {
    sci(x).parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sci(1.0), "1.00000000e0");
        assert_eq!(sci(-3.0e-9), "-3.00000000e-9");
        assert_eq!(sci(1591.549430918953), "1.59154943e3");
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [0.1, 1.0 / 3.0, -2.718281828459045e-7, 0.0] {
            let q = quantize(x);
            assert_eq!(quantize(q), q);
            assert_eq!(sci(q), sci(x));
        }
    }
}
