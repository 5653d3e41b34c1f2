//! Scalar abstraction for the analytical model.
//!
//! Cycle counts are integers; everything derived from them (latency, GOP,
//! GOPS) is computed in a generic scalar so the same code yields exact
//! rationals for identity checks and floats for quick reporting.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};

pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    /// The value `numer / denom`. `denom` must be nonzero.
    fn from_ratio(numer: i128, denom: i128) -> Self;

    fn to_f64(&self) -> f64;

    fn from_int(n: i128) -> Self {
        Self::from_ratio(n, 1)
    }
}

impl Scalar for f64 {
    fn from_ratio(numer: i128, denom: i128) -> Self {
        numer as f64 / denom as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_ratio(numer: i128, denom: i128) -> Self {
        (numer as f64 / denom as f64) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for Ratio<i128> {
    fn from_ratio(numer: i128, denom: i128) -> Self {
        Ratio::new(numer, denom)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for Ratio<i64> {
    fn from_ratio(numer: i128, denom: i128) -> Self {
        let r = Ratio::new(numer, denom);
        let n = i64::try_from(*r.numer()).expect("numerator exceeds i64");
        let d = i64::try_from(*r.denom()).expect("denominator exceeds i64");
        Ratio::new(n, d)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Parse a plain decimal literal (`"400"`, `"0.597"`, `"-1.5"`) exactly.
pub fn parse_decimal(s: &str) -> Option<Ratio<i128>> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let denom = 10i128.checked_pow(frac_part.len() as u32)?;
    let r = Ratio::new(numer, denom);
    Some(if neg { -r } else { r })
}

/// Render a rational as a decimal with `places` digits, rounding half away from zero.
pub fn format_decimal(r: &Ratio<i128>, places: u32) -> String {
    let scale = 10i128.pow(places);
    let scaled = r * Ratio::from_integer(scale);
    let rounded = scaled.round().to_integer();
    let neg = rounded < 0;
    let abs = rounded.unsigned_abs();
    let int = abs / scale as u128;
    let frac = abs % scale as u128;
    let sign = if neg { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = places as usize)
    }
}
