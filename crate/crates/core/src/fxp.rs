//! Fixed-point arithmetic for the 8-bit datapath.
//!
//! Values are carried as raw two's-complement integers plus a [`QFormat`].
//! The real value of a raw integer is `raw * 2^-frac_bits`. Quantization and
//! requantization round half to even and saturate; they never wrap.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FxpError {
    #[error("invalid Q-format: {0}")]
    InvalidFormat(String),
    #[error("cannot quantize NaN")]
    NotANumber,
    #[error("format mismatch: expected {expected}, found {found}")]
    FormatMismatch { expected: QFormat, found: QFormat },
    #[error("raw value {raw} is not representable in {format}")]
    OutOfRange { raw: i64, format: QFormat },
    #[error("tensor data length {len} does not match {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },
}

/// Bit layout of a fixed-point number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    word_bits: u32,
    frac_bits: u32,
    signed: bool,
}

impl QFormat {
    /// Signed 8-bit, 7 fractional bits: the datapath format, range [-1, 1).
    pub const Q0_7: QFormat = QFormat { word_bits: 8, frac_bits: 7, signed: true };

    /// Signed 32-bit accumulator holding products of two [`QFormat::Q0_7`] values.
    pub const ACC: QFormat = QFormat { word_bits: 32, frac_bits: 14, signed: true };

    pub fn new(word_bits: u32, frac_bits: u32, signed: bool) -> Result<Self, FxpError> {
        if !matches!(word_bits, 8 | 16 | 32) {
            return Err(FxpError::InvalidFormat(format!("word_bits {word_bits} not in {{8, 16, 32}}")));
        }
        let max_frac = word_bits - u32::from(signed);
        if frac_bits > max_frac {
            return Err(FxpError::InvalidFormat(format!(
                "frac_bits {frac_bits} exceeds {max_frac} for a {word_bits}-bit word"
            )));
        }
        Ok(QFormat { word_bits, frac_bits, signed })
    }

    pub fn word_bits(self) -> u32 {
        self.word_bits
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn signed(self) -> bool {
        self.signed
    }

    /// Accumulator format for products of two values in `self`: 32-bit signed, twice the fraction.
    pub fn accumulator(self) -> Result<QFormat, FxpError> {
        QFormat::new(32, 2 * self.frac_bits, true)
    }

    pub fn min_raw(self) -> i64 {
        if self.signed {
            -(1i64 << (self.word_bits - 1))
        } else {
            0
        }
    }

    pub fn max_raw(self) -> i64 {
        if self.signed {
            (1i64 << (self.word_bits - 1)) - 1
        } else {
            (1i64 << self.word_bits) - 1
        }
    }

    pub fn contains(self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    /// Clamp to the representable range; the flag is set when clamping happened.
    pub fn saturate(self, raw: i128) -> (i64, bool) {
        let lo = i128::from(self.min_raw());
        let hi = i128::from(self.max_raw());
        if raw < lo {
            (self.min_raw(), true)
        } else if raw > hi {
            (self.max_raw(), true)
        } else {
            (raw as i64, false)
        }
    }

    /// Weight of one raw unit.
    pub fn lsb(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn to_real(self, raw: i64) -> f64 {
        raw as f64 * self.lsb()
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int_bits = self.word_bits - self.frac_bits - u32::from(self.signed);
        let sign = if self.signed { "s" } else { "u" };
        write!(f, "{sign}Q{int_bits}.{}", self.frac_bits)
    }
}

/// A single fixed-point scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FxpValue {
    raw: i64,
    format: QFormat,
}

impl FxpValue {
    pub fn from_raw(raw: i64, format: QFormat) -> Result<Self, FxpError> {
        if !format.contains(raw) {
            return Err(FxpError::OutOfRange { raw, format });
        }
        Ok(FxpValue { raw, format })
    }

    pub fn zero(format: QFormat) -> Self {
        FxpValue { raw: 0, format }
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.format
    }

    pub fn to_real(self) -> f64 {
        self.format.to_real(self.raw)
    }
}

/// Round a real to the nearest raw code of `fmt` (ties to even), saturating.
pub fn quantize(x: f64, fmt: QFormat) -> Result<FxpValue, FxpError> {
    Ok(FxpValue { raw: quantize_raw(x, fmt)?, format: fmt })
}

pub fn quantize_raw(x: f64, fmt: QFormat) -> Result<i64, FxpError> {
    if x.is_nan() {
        return Err(FxpError::NotANumber);
    }
    // Scaling by a power of two is exact until overflow to infinity, which clamps anyway.
    let scaled = (x * (fmt.frac_bits as f64).exp2()).round_ties_even();
    let raw = scaled.clamp(fmt.min_raw() as f64, fmt.max_raw() as f64);
    Ok(raw as i64)
}

pub fn dequantize(v: FxpValue) -> f64 {
    v.to_real()
}

/// Arithmetic shift by `shift` bits with round-half-to-even. Negative shifts move left.
pub fn shift_round_half_even(raw: i128, shift: i32) -> i128 {
    if shift <= 0 {
        return raw << (-shift) as u32;
    }
    let shift = shift as u32;
    let floor = raw >> shift;
    let rem = raw - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Narrow a raw value carrying `from_frac` fractional bits into `out`, ties to even, saturating.
pub fn narrow_raw(raw: i128, from_frac: u32, out: QFormat) -> (i64, bool) {
    let shifted = shift_round_half_even(raw, from_frac as i32 - out.frac_bits as i32);
    out.saturate(shifted)
}

/// Multiply-accumulate `acc + a * b`, exact unless the accumulator saturates.
///
/// Returns the new accumulator and whether it saturated.
pub fn mac(acc: FxpValue, a: FxpValue, b: FxpValue) -> Result<(FxpValue, bool), FxpError> {
    if a.format != b.format {
        return Err(FxpError::FormatMismatch { expected: a.format, found: b.format });
    }
    let acc_fmt = a.format.accumulator()?;
    if acc.format != acc_fmt {
        return Err(FxpError::FormatMismatch { expected: acc_fmt, found: acc.format });
    }
    let mut wide = Accumulator::with_raw(acc.raw, acc_fmt);
    wide.mac(a.raw, b.raw);
    Ok((FxpValue { raw: wide.raw(), format: acc_fmt }, wide.saturated()))
}

pub fn requantize(acc: FxpValue, out_fmt: QFormat) -> FxpValue {
    let (raw, _) = narrow_raw(i128::from(acc.raw), acc.format.frac_bits, out_fmt);
    FxpValue { raw, format: out_fmt }
}

/// Wide running sum with a sticky saturation flag, one per output element.
#[derive(Debug, Clone, Copy)]
pub struct Accumulator {
    raw: i64,
    format: QFormat,
    saturated: bool,
}

impl Accumulator {
    pub fn new(format: QFormat) -> Self {
        Accumulator { raw: 0, format, saturated: false }
    }

    pub fn with_raw(raw: i64, format: QFormat) -> Self {
        Accumulator { raw, format, saturated: false }
    }

    #[inline]
    pub fn mac(&mut self, a: i64, b: i64) {
        self.add(i128::from(a) * i128::from(b));
    }

    #[inline]
    pub fn add(&mut self, term: i128) {
        let (raw, sat) = self.format.saturate(i128::from(self.raw) + term);
        self.raw = raw;
        self.saturated |= sat;
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn narrow(&self, out: QFormat) -> i64 {
        narrow_raw(i128::from(self.raw), self.format.frac_bits, out).0
    }
}

/// Row-major 2-D fixed-point matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    rows: usize,
    cols: usize,
    format: QFormat,
    data: Vec<i64>,
}

impl QTensor {
    pub fn new(rows: usize, cols: usize, format: QFormat, data: Vec<i64>) -> Result<Self, FxpError> {
        if data.len() != rows * cols {
            return Err(FxpError::BadLength { rows, cols, len: data.len() });
        }
        if let Some(&raw) = data.iter().find(|&&r| !format.contains(r)) {
            return Err(FxpError::OutOfRange { raw, format });
        }
        Ok(QTensor { rows, cols, format, data })
    }

    pub fn zeros(rows: usize, cols: usize, format: QFormat) -> Self {
        QTensor { rows, cols, format, data: vec![0; rows * cols] }
    }

    /// Build from a closure producing raw codes; out-of-range codes saturate.
    pub fn from_fn(rows: usize, cols: usize, format: QFormat, mut f: impl FnMut(usize, usize) -> i64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(format.saturate(i128::from(f(r, c))).0);
            }
        }
        QTensor { rows, cols, format, data }
    }

    pub fn quantize_from(rows: usize, cols: usize, format: QFormat, reals: &[f64]) -> Result<Self, FxpError> {
        if reals.len() != rows * cols {
            return Err(FxpError::BadLength { rows, cols, len: reals.len() });
        }
        let data = reals.iter().map(|&x| quantize_raw(x, format)).collect::<Result<Vec<_>, _>>()?;
        Ok(QTensor { rows, cols, format, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn value(&self, r: usize, c: usize) -> FxpValue {
        FxpValue { raw: self.get(r, c), format: self.format }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data.iter().map(|&r| self.format.to_real(r)).collect()
    }

    /// Copy of columns `[lo, hi)`.
    pub fn columns(&self, lo: usize, hi: usize) -> QTensor {
        assert!(lo <= hi && hi <= self.cols, "column range {lo}..{hi} outside 0..{}", self.cols);
        let width = hi - lo;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[lo..hi]);
        }
        QTensor { rows: self.rows, cols: width, format: self.format, data }
    }

    /// Column-wise concatenation. All parts must agree on row count and format.
    pub fn hconcat(parts: &[QTensor]) -> Result<QTensor, FxpError> {
        let first = parts.first().ok_or(FxpError::BadLength { rows: 0, cols: 0, len: 0 })?;
        let rows = first.rows;
        let format = first.format;
        if let Some(p) = parts.iter().find(|p| p.format != format) {
            return Err(FxpError::FormatMismatch { expected: format, found: p.format });
        }
        if let Some(p) = parts.iter().find(|p| p.rows != rows) {
            return Err(FxpError::BadLength { rows, cols: p.cols, len: p.data.len() });
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(QTensor { rows, cols, format, data })
    }
}
