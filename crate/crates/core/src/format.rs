//! Locale-independent number formatting shared by every text output.

/// Formats `x` with 6 significant digits in the style of C's `%g`: fixed
/// notation for exponents in `[-4, 6)`, scientific otherwise, trailing zeros
/// removed.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fmt6;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (127.5, "127.5"),
            (254.00000000001, "254"),
            (0.001, "0.001"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (123456.7, "123457"),
            (999999.7, "1e+06"),
            (-2.5, "-2.5"),
            (0.1107466, "0.110747"),
            (0.0, "0"),
            (1e10, "1e+10"),
            (f64::NAN, "nan"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt6(x), s, "{x}");
        }
    }
}
