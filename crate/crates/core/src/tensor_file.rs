//! `FAMT1` tensor files.
//!
//! A single ASCII header line
//!
//! ```text
//! FAMT1 <rows> <cols> <word_bits> <frac_bits> <signed:0|1>\n
//! ```
//!
//! followed by `rows * cols` little-endian raw words of `word_bits / 8` bytes each, row-major.

use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::fxp::{QFormat, QTensor};

pub const MAGIC: &str = "FAMT1";

#[derive(Debug, Error)]
pub enum TensorFileError {
    #[error("bad magic {0:?}, expected {MAGIC}")]
    BadMagic(String),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("payload has {found} bytes, expected {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("raw value {raw} does not fit {format}")]
    OutOfRange { raw: i64, format: QFormat },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn header_line(t: &QTensor) -> String {
    let f = t.format();
    format!("{MAGIC} {} {} {} {} {}\n", t.rows(), t.cols(), f.word_bits(), f.frac_bits(), u8::from(f.signed()))
}

pub fn write_tensor<W: Write>(mut w: W, t: &QTensor) -> io::Result<()> {
    w.write_all(header_line(t).as_bytes())?;
    let bytes = (t.format().word_bits() / 8) as usize;
    let mut payload = Vec::with_capacity(t.data().len() * bytes);
    for &raw in t.data() {
        payload.extend_from_slice(&raw.to_le_bytes()[..bytes]);
    }
    w.write_all(&payload)
}

pub fn read_tensor<R: Read>(r: R) -> Result<QTensor, TensorFileError> {
    let mut reader = io::BufReader::new(r);
    let mut header = Vec::new();
    (&mut reader).take(256).read_until(b'\n', &mut header)?;
    let header = String::from_utf8_lossy(&header);
    let mut fields = header.trim_end_matches('\n').split(' ');
    let magic = fields.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(TensorFileError::BadMagic(magic.chars().take(16).collect()));
    }
    let mut next = |name: &str| -> Result<u64, TensorFileError> {
        let field = fields.next().ok_or_else(|| TensorFileError::BadHeader(format!("missing {name}")))?;
        field.parse().map_err(|_| TensorFileError::BadHeader(format!("{name} is not a number: {field:?}")))
    };
    let rows = next("rows")? as usize;
    let cols = next("cols")? as usize;
    let word_bits = next("word_bits")? as u32;
    let frac_bits = next("frac_bits")? as u32;
    let signed = match next("signed")? {
        0 => false,
        1 => true,
        other => return Err(TensorFileError::BadHeader(format!("signed flag must be 0 or 1, got {other}"))),
    };
    let format = QFormat::new(word_bits, frac_bits, signed).map_err(|e| TensorFileError::BadHeader(e.to_string()))?;

    let width = (word_bits / 8) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| TensorFileError::BadHeader("shape overflows".into()))?;
    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(TensorFileError::Truncated { expected, found: payload.len() });
    }
    let data = payload
        .chunks_exact(width)
        .map(|c| {
            let mut buf = [0u8; 8];
            buf[..width].copy_from_slice(c);
            let u = u64::from_le_bytes(buf);
            if signed {
                let shift = 64 - word_bits;
                ((u << shift) as i64) >> shift
            } else {
                u as i64
            }
        })
        .collect();
    QTensor::new(rows, cols, format, data)
        .map_err(|_| TensorFileError::BadHeader("payload does not match header".into()))
}

pub fn save(path: &Path, t: &QTensor) -> io::Result<()> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, t)?;
    fs::write(path, buf)
}

pub fn load(path: &Path) -> Result<QTensor, TensorFileError> {
    read_tensor(fs::File::open(path)?)
}
