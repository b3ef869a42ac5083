//! Exact rational helpers, decimal parsing/rendering and compensated summation.

use std::ops::AddAssign;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational; the ground-truth numeric type.
pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Exact value of a finite double. Non-finite input has no rational value.
pub fn rational_from_f64(value: f64) -> Result<Rational> {
    Rational::from_float(value).ok_or(Error::NotRational(value))
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or_else(|| {
        if value.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

pub fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * k)
}

/// Least common multiple of the denominators of `values`.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Parses `12`, `-0.25`, `1.5e-3` or `3/7` into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(Rational::new(num, den));
    }

    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(idx) => (&text[..idx], text[idx + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole
        .bytes()
        .chain(frac.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let joined = format!("{whole}{frac}");
    let mut value = Rational::from_integer(joined.parse::<BigInt>().ok()?);
    let scale = exponent - frac.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Some(if negative { -value } else { value })
}

/// `num/den`, or just `num` for integers.
pub fn format_fraction(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Rounds to `places` decimals, ties to even, and renders without exponent.
pub fn format_decimal(value: &Rational, places: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), places);
    let scaled = value.abs() * Rational::from_integer(scale.clone());
    let floor = scaled.floor().to_integer();
    let frac = &scaled - Rational::from_integer(floor.clone());
    let half = rat(1, 2);
    let rounded = if frac > half || (frac == half && floor.is_odd()) {
        floor + 1
    } else {
        floor
    };
    let negative = value.is_negative() && !rounded.is_zero();
    let (whole, part) = rounded.div_rem(&scale);
    let sign = if negative { "-" } else { "" };
    if places == 0 {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{part:0>places$}")
    }
}

/// Exact decimal rendering when the value terminates in base ten, else `num/den`.
pub fn format_exact(value: &Rational) -> String {
    let mut den = value.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut twos = 0usize;
    let mut fives = 0usize;
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format_fraction(value);
    }
    format_decimal(value, twos.max(fives))
}

/// Kahan–Babuška (Neumaier) running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new(value: f64) -> Self {
        Self {
            sum: value,
            compensation: 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, rhs: f64) {
        let t = self.sum + rhs;
        if self.sum.abs() >= rhs.abs() {
            self.compensation += (self.sum - t) + rhs;
        } else {
            self.compensation += (rhs - t) + self.sum;
        }
        self.sum = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_and_fraction_forms() {
        assert_eq!(parse_rational("0.5"), Some(rat(1, 2)));
        assert_eq!(parse_rational("-2"), Some(int(-2)));
        assert_eq!(parse_rational("1/3"), Some(rat(1, 3)));
        assert_eq!(parse_rational("-6/4"), Some(rat(-3, 2)));
        assert_eq!(parse_rational("1.5e-3"), Some(rat(3, 2000)));
        assert_eq!(parse_rational("2E2"), Some(int(200)));
        assert_eq!(parse_rational(".25"), Some(rat(1, 4)));
        assert_eq!(parse_rational("+3."), Some(int(3)));
    }

    #[test]
    fn rejects_malformed_numbers() {
        for bad in [
            "", "abc", "1/0", "1.2.3", "-", ".", "1e", "0x10", "nan", "1/2/3",
        ] {
            assert_eq!(parse_rational(bad), None, "{bad:?}");
        }
    }

    #[test]
    fn decimal_rounding_is_half_even() {
        assert_eq!(format_decimal(&rat(1, 8), 2), "0.12");
        assert_eq!(format_decimal(&rat(3, 8), 2), "0.38");
        assert_eq!(format_decimal(&rat(7, 8), 5), "0.87500");
        assert_eq!(format_decimal(&rat(1, 3), 6), "0.333333");
        assert_eq!(format_decimal(&rat(2, 3), 6), "0.666667");
        assert_eq!(format_decimal(&rat(-1, 3), 2), "-0.33");
        assert_eq!(format_decimal(&rat(-1, 1000), 2), "0.00");
        assert_eq!(format_decimal(&int(1), 5), "1.00000");
        assert_eq!(format_decimal(&rat(5, 2), 0), "2");
    }

    #[test]
    fn exact_rendering() {
        assert_eq!(format_exact(&rat(1, 4)), "0.25");
        assert_eq!(format_exact(&rat(-5, 2)), "-2.5");
        assert_eq!(format_exact(&int(3)), "3");
        assert_eq!(format_exact(&rat(1, 3)), "1/3");
        assert_eq!(format_fraction(&rat(3, 9)), "1/3");
    }

    #[test]
    fn f64_conversion_is_exact() {
        assert_eq!(rational_from_f64(0.5).unwrap(), rat(1, 2));
        assert_eq!(to_f64(&rational_from_f64(0.1).unwrap()), 0.1);
        assert!(rational_from_f64(f64::NAN).is_err());
        assert!(rational_from_f64(f64::INFINITY).is_err());
    }

    #[test]
    fn neumaier_recovers_small_addends() {
        let mut s = NeumaierSum::default();
        for v in [1e100, 1.0, -1e100] {
            s += v;
        }
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn factorials_and_lcm() {
        assert_eq!(factorial(0), BigInt::one());
        assert_eq!(factorial(10), BigInt::from(3_628_800));
        let vals = [rat(1, 4), rat(5, 6), int(7)];
        assert_eq!(common_denominator(vals.iter()), BigInt::from(12));
    }
}
