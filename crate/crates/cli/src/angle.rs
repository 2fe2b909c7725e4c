//! Angle arguments: plain radians or multiples of pi such as `pi/8`, `3pi/8`,
//! `3*pi/8` or `0.5pi`.

use std::f64::consts::PI;

pub fn parse_angle(text: &str) -> Result<f64, String> {
    let s: String = text
        .trim()
        .to_ascii_lowercase()
        .replace('π', "pi")
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let value = match s.find("pi") {
        None => s.parse::<f64>().map_err(|_| format!("'{text}' is not an angle"))?,
        Some(at) => {
            let coeff = match s[..at].trim_end_matches('*') {
                "" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().map_err(|_| format!("bad coefficient in '{text}'"))?,
            };
            let rest = &s[at + 2..];
            let denom = match rest {
                "" => 1.0,
                r if r.starts_with('/') => r[1..]
                    .parse::<f64>()
                    .map_err(|_| format!("bad denominator in '{text}'"))?,
                _ => return Err(format!("'{text}' is not an angle")),
            };
            if denom == 0.0 {
                return Err(format!("zero denominator in '{text}'"));
            }
            coeff * PI / denom
        }
    };
    if !value.is_finite() {
        return Err(format!("'{text}' is not finite"));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

    #[test]
    fn forms() {
        assert_eq!(parse_angle("pi/8").unwrap(), FRAC_PI_8);
        assert_eq!(parse_angle("3pi/8").unwrap(), 3.0 * PI / 8.0);
        assert_eq!(parse_angle("3*pi/8").unwrap(), 3.0 * PI / 8.0);
        assert_eq!(parse_angle(" PI/2 ").unwrap(), FRAC_PI_2);
        assert_eq!(parse_angle("π/8").unwrap(), FRAC_PI_8);
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
        assert_eq!(parse_angle("pi").unwrap(), PI);
        for bad in ["", "pie", "pi/", "pi/0", "x", "2pi8", "nan"] {
            assert!(parse_angle(bad).is_err(), "{bad}");
        }
    }
}
