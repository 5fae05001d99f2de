//! Hexadecimal floating-point text (`0x1.8p-2`), used for bit-exact environment files.

/// Formats a finite `f64` as a normalized hex float, e.g. `0x1.0000000000000p-1` for 0.5.
pub fn format_hex(x: f64) -> String {
    assert!(x.is_finite(), "hex float of non-finite value");
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && frac == 0 {
        return format!("{sign}0x0.0p+0");
    }
    let (lead, exp) = if exp_bits == 0 {
        (0, -1022)
    } else {
        (1, exp_bits - 1023)
    };
    format!("{sign}0x{lead}.{frac:013x}p{exp:+}")
}

/// Parses a hex float (as written by [`format_hex`] or C's `%a`), or a plain decimal literal.
pub fn parse_float(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) else {
        return s.parse::<f64>().ok();
    };
    let (digits, exp) = match hex.find(['p', 'P']) {
        Some(i) => (&hex[..i], hex[i + 1..].parse::<i64>().ok()?),
        None => (hex, 0),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(i) => (&digits[..i], &digits[i + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all: String = int_part.chars().chain(frac_part.chars()).collect();
    let trimmed = all.trim_start_matches('0');
    if trimmed.len() > 15 {
        // More than 60 significant bits cannot come from an f64 writer.
        return None;
    }
    let mantissa = if trimmed.is_empty() {
        0
    } else {
        u64::from_str_radix(trimmed, 16).ok()?
    };
    let scale = exp - 4 * frac_part.len() as i64;
    let v = scale_by_pow2(mantissa as f64, scale);
    Some(if neg { -v } else { v })
}

fn scale_by_pow2(mut v: f64, mut e: i64) -> f64 {
    // Step in chunks that keep every factor a normal power of two.
    while e > 1000 {
        v *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        v *= 2f64.powi(-1000);
        e += 1000;
    }
    v * 2f64.powi(e as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(format_hex(0.5), "0x1.0000000000000p-1");
        assert_eq!(format_hex(0.25), "0x1.0000000000000p-2");
        assert_eq!(format_hex(-3.0), "-0x1.8000000000000p+1");
        assert_eq!(parse_float("0x1.8p-2"), Some(0.375));
        assert_eq!(parse_float("0.1"), Some(0.1));
        assert_eq!(parse_float("0x"), None);
        assert_eq!(parse_float("zzz"), None);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse_float(&format_hex(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
