//! Exact rational helpers shared by the geometry and measure code.
//!
//! All coordinates in play have denominators of the form `3 * 2^j`, so a
//! 64-bit numerator/denominator pair is ample for desk-scale grids.

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

pub type Rational = Rational64;

/// `2^e` for any integer exponent.
pub fn pow2(e: i32) -> Rational {
    if e >= 0 {
        Rational::from_integer(1i64 << e)
    } else {
        Rational::new(1, 1i64 << (-e))
    }
}

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn floor_int(r: Rational) -> i64 {
    Integer::div_floor(r.numer(), r.denom())
}

pub fn ceil_int(r: Rational) -> i64 {
    -Integer::div_floor(&-*r.numer(), r.denom())
}

/// Formats as `"p/q"`, always with an explicit denominator.
pub fn format(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `"p/q"` or a bare integer `"p"`.
pub fn parse(s: &str) -> crate::Result<Rational> {
    let bad = || crate::Error::Rational(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => s.parse::<i64>().map(Rational::from_integer).map_err(|_| bad()),
    }
}

/// Serde adapter writing a single rational as a `"p/q"` string.
pub mod serde_rational {
    use super::Rational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse(&s).map_err(D::Error::custom)
    }
}

/// Serde adapter for a vector of rationals.
pub mod serde_rational_vec {
    use super::Rational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(super::format).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| super::parse(s).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_and_ceil_handle_negatives() {
        assert_eq!(floor_int(Rational::new(-1, 3)), -1);
        assert_eq!(ceil_int(Rational::new(-1, 3)), 0);
        assert_eq!(floor_int(Rational::new(7, 2)), 3);
        assert_eq!(ceil_int(Rational::new(7, 2)), 4);
        assert_eq!(ceil_int(Rational::from_integer(-2)), -2);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["1/3", "-2/3", "0/1", "5/1"] {
            assert_eq!(format(&parse(s).unwrap()), s);
        }
        assert_eq!(parse("4").unwrap(), Rational::from_integer(4));
        assert!(parse("1/0").is_err());
        assert!(parse("x").is_err());
    }

    #[test]
    fn powers_of_two() {
        assert_eq!(pow2(3), Rational::from_integer(8));
        assert_eq!(pow2(-2), Rational::new(1, 4));
        assert_eq!(pow2(0), Rational::from_integer(1));
    }
}
