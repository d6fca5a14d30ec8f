//! Text formatting shared by every exporter.

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn f17(v: f64) -> String {
    if v == 0.0 {
        // keeps `-0` and `0` distinct without scientific noise
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::f17;

    #[test]
    fn round_trips() {
        for v in [0.1, -2.5e-300, 1.0 / 3.0, 123456789.12345679, f64::MAX, 5e-324] {
            assert_eq!(f17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(f17(0.0), "0");
        assert_eq!(f17(0.5), "5.0000000000000000e-1");
    }
}
