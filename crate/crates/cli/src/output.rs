//! Numeric formatting shared by the text and CSV outputs.

/// Formats with 12 significant digits; parses back to within one ulp of
/// the printed precision.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    format!("{x:.11e}")
}

/// Optional field for CSV rows: empty when absent.
pub fn fmt12_opt(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits_round_trip() {
        for x in [0.146446609407, -6.648874191533e-3, 1e6, 1.0 / 3.0] {
            let printed = fmt12(x);
            let parsed: f64 = printed.parse().unwrap();
            assert!(
                (parsed - x).abs() <= 1e-11 * x.abs(),
                "{x} -> {printed} -> {parsed}"
            );
        }
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12_opt(None), "");
    }
}
