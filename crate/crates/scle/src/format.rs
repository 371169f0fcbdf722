//! Number formatting for text outputs.

/// `x` with 17 significant digits in the style of C's `%.17g`, which
/// round-trips every finite `f64`.
pub fn real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::real;

    #[test]
    fn g_style() {
        assert_eq!(real(1.0), "1");
        assert_eq!(real(0.5), "0.5");
        assert_eq!(real(-2.25), "-2.25");
        assert_eq!(real(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(real(1e-7), "9.9999999999999995e-08");
        assert_eq!(real(1e20), "1e+20");
        assert_eq!(real(123456.0), "123456");
        assert_eq!(real(0.0), "0");
    }

    #[test]
    fn round_trips() {
        for x in [0.1, 2.0 / 3.0, 1e-300, 6.02214076e23, -1.0e-5, 12345.678901234567] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
    }
}
