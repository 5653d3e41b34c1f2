//! Design-time envelope, runtime parameters, and the reconfiguration command stream.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::perf::Calibration;
use crate::scalar::{format_decimal, parse_decimal};
use crate::Rational;

/// Resource counts, in the units reported by the FPGA tools.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceVector {
    pub dsp: u64,
    pub bram18k: u64,
    pub lut: u64,
    pub ff: u64,
}

impl ResourceVector {
    pub const fn new(dsp: u64, bram18k: u64, lut: u64, ff: u64) -> Self {
        ResourceVector { dsp, bram18k, lut, ff }
    }

    /// Alveo U55C capacities.
    pub const U55C: ResourceVector = ResourceVector::new(9024, 4032, 1_303_680, 2_607_360);

    pub fn fits_within(&self, budget: &ResourceVector) -> bool {
        self.dsp <= budget.dsp && self.bram18k <= budget.bram18k && self.lut <= budget.lut && self.ff <= budget.ff
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DSP {} / BRAM18k {} / LUT {} / FF {}", self.dsp, self.bram18k, self.lut, self.ff)
    }
}

/// Parameters fixed when the bitstream is built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignParams {
    pub max_heads: u32,
    pub max_d_model: u32,
    pub max_seq_len: u32,
    pub tile_size: u32,
    #[serde(serialize_with = "ser_rational", deserialize_with = "de_rational")]
    pub clock_mhz: Rational,
    pub mem_bytes_per_cycle: u32,
    pub pipeline_depth: u32,
    pub softmax_cycles_per_row: u32,
    pub overlap_load_compute: bool,
    pub resource_budget: ResourceVector,
}

impl Default for DesignParams {
    /// The U55C build: 8 heads, d_model 768, SL up to 128, 64-wide tiles at 400 MHz,
    /// with cycle constants from the frozen calibration.
    fn default() -> Self {
        let cal = Calibration::frozen();
        DesignParams {
            max_heads: 8,
            max_d_model: 768,
            max_seq_len: 128,
            tile_size: 64,
            clock_mhz: Ratio::from_integer(400),
            mem_bytes_per_cycle: cal.mem_bytes_per_cycle,
            pipeline_depth: cal.pipeline_depth,
            softmax_cycles_per_row: cal.softmax_cycles_per_row,
            overlap_load_compute: false,
            resource_budget: ResourceVector::U55C,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("cannot parse design file: {0}")]
    Parse(String),
}

impl DesignParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_heads", self.max_heads),
            ("max_d_model", self.max_d_model),
            ("max_seq_len", self.max_seq_len),
            ("tile_size", self.tile_size),
            ("mem_bytes_per_cycle", self.mem_bytes_per_cycle),
            ("softmax_cycles_per_row", self.softmax_cycles_per_row),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::InvalidDesign(format!("{name} must be positive")));
        }
        if self.clock_mhz <= Ratio::from_integer(0) {
            return Err(ConfigError::InvalidDesign("clock_mhz must be positive".into()));
        }
        if !self.max_d_model.is_multiple_of(self.tile_size) {
            return Err(ConfigError::InvalidDesign(format!(
                "max_d_model {} is not a multiple of tile_size {}",
                self.max_d_model, self.tile_size
            )));
        }
        if !self.max_d_model.is_multiple_of(self.max_heads) {
            return Err(ConfigError::InvalidDesign(format!(
                "max_d_model {} is not a multiple of max_heads {}",
                self.max_d_model, self.max_heads
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let design: DesignParams = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        design.validate()?;
        Ok(design)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("design params serialize")
    }

    /// Copy the cycle-model constants of a calibration into this design.
    pub fn with_calibration(mut self, cal: &Calibration) -> Self {
        self.mem_bytes_per_cycle = cal.mem_bytes_per_cycle;
        self.pipeline_depth = cal.pipeline_depth;
        self.softmax_cycles_per_row = cal.softmax_cycles_per_row;
        self
    }

    /// The working configuration before any reconfiguration command.
    pub fn max_run(&self) -> RunParams {
        RunParams { h: self.max_heads, d_model: self.max_d_model, seq_len: self.max_seq_len, causal_mask: false }
    }
}

fn ser_rational<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    if r.is_integer() {
        s.serialize_i64(r.to_integer() as i64)
    } else {
        s.serialize_str(&format_decimal(r, 6))
    }
}

fn de_rational<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Float(f64),
        Text(String),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Int(i) => return Ok(Ratio::from_integer(i128::from(i))),
        Raw::Float(f) => f.to_string(),
        Raw::Text(s) => s,
    };
    parse_decimal(&text).ok_or_else(|| serde::de::Error::custom(format!("not a decimal number: {text}")))
}

/// The runtime-programmable configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunParams {
    pub h: u32,
    pub d_model: u32,
    pub seq_len: u32,
    #[serde(default)]
    pub causal_mask: bool,
}

impl RunParams {
    pub fn new(h: u32, d_model: u32, seq_len: u32) -> Self {
        RunParams { h, d_model, seq_len, causal_mask: false }
    }

    pub fn with_mask(mut self, causal_mask: bool) -> Self {
        self.causal_mask = causal_mask;
        self
    }

    /// Per-head dimension. Only meaningful once `d_model mod h == 0`.
    pub fn d_k(&self) -> usize {
        (self.d_model / self.h) as usize
    }

    pub fn seq(&self) -> usize {
        self.seq_len as usize
    }

    pub fn width(&self) -> usize {
        self.d_model as usize
    }
}

impl fmt::Display for RunParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h={} d_model={} seq_len={} causal_mask={}", self.h, self.d_model, self.seq_len, self.causal_mask)
    }
}

/// One broken runtime constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Violation {
    ZeroHeads,
    ZeroDModel,
    ZeroSeqLen,
    HeadsDoNotDivide { d_model: u32, h: u32 },
    TileDoesNotDivide { d_model: u32, tile_size: u32 },
    TooManyHeads { h: u32, max: u32 },
    DModelTooLarge { d_model: u32, max: u32 },
    SeqLenTooLarge { seq_len: u32, max: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroHeads => write!(f, "h must be positive"),
            Violation::ZeroDModel => write!(f, "d_model must be positive"),
            Violation::ZeroSeqLen => write!(f, "seq_len must be positive"),
            Violation::HeadsDoNotDivide { d_model, h } => {
                write!(f, "d_model mod h != 0 ({d_model} mod {h} = {})", d_model % h)
            }
            Violation::TileDoesNotDivide { d_model, tile_size } => {
                write!(f, "d_model mod TS != 0 ({d_model} mod {tile_size} = {})", d_model % tile_size)
            }
            Violation::TooManyHeads { h, max } => write!(f, "h > max_heads ({h} > {max})"),
            Violation::DModelTooLarge { d_model, max } => write!(f, "d_model > max_d_model ({d_model} > {max})"),
            Violation::SeqLenTooLarge { seq_len, max } => write!(f, "seq_len > max_seq_len ({seq_len} > {max})"),
        }
    }
}

/// Outcome of [`validate_run_params`]: every violated constraint, in a fixed order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), Vec<Violation>> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(self.violations)
        }
    }
}

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_run_params(design: &DesignParams, run: &RunParams) -> Validation {
    let mut violations = Vec::new();
    if run.h == 0 {
        violations.push(Violation::ZeroHeads);
    }
    if run.d_model == 0 {
        violations.push(Violation::ZeroDModel);
    }
    if run.seq_len == 0 {
        violations.push(Violation::ZeroSeqLen);
    }
    if run.h != 0 && !run.d_model.is_multiple_of(run.h) {
        violations.push(Violation::HeadsDoNotDivide { d_model: run.d_model, h: run.h });
    }
    if design.tile_size != 0 && !run.d_model.is_multiple_of(design.tile_size) {
        violations.push(Violation::TileDoesNotDivide { d_model: run.d_model, tile_size: design.tile_size });
    }
    if run.h > design.max_heads {
        violations.push(Violation::TooManyHeads { h: run.h, max: design.max_heads });
    }
    if run.d_model > design.max_d_model {
        violations.push(Violation::DModelTooLarge { d_model: run.d_model, max: design.max_d_model });
    }
    if run.seq_len > design.max_seq_len {
        violations.push(Violation::SeqLenTooLarge { seq_len: run.seq_len, max: design.max_seq_len });
    }
    Validation { violations }
}

/// Number of column tiles loaded per projection: `d_model / TS`.
pub fn num_tiles(run: &RunParams, design: &DesignParams) -> usize {
    (run.d_model / design.tile_size) as usize
}

// ---------------------------------------------------------------------------
// Command stream
// ---------------------------------------------------------------------------

pub const OPERAND_LIMIT: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    SetHeads = 0x01,
    SetDModel = 0x02,
    SetSeqLen = 0x03,
    SetMask = 0x04,
    Start = 0xFF,
}

impl Opcode {
    pub fn from_byte(b: u8) -> Option<Opcode> {
        match b {
            0x01 => Some(Opcode::SetHeads),
            0x02 => Some(Opcode::SetDModel),
            0x03 => Some(Opcode::SetSeqLen),
            0x04 => Some(Opcode::SetMask),
            0xFF => Some(Opcode::Start),
            _ => None,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::SetHeads => "set-heads",
            Opcode::SetDModel => "set-dmodel",
            Opcode::SetSeqLen => "set-seqlen",
            Opcode::SetMask => "set-mask",
            Opcode::Start => "start",
        }
    }

    fn from_mnemonic(s: &str) -> Option<Opcode> {
        [Opcode::SetHeads, Opcode::SetDModel, Opcode::SetSeqLen, Opcode::SetMask, Opcode::Start]
            .into_iter()
            .find(|op| op.mnemonic() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed command: {0}")]
    MalformedCommand(String),
    #[error("command stream ended without START")]
    NoStart,
    #[error("invalid configuration at START: {}", join_violations(.0))]
    InvalidConfiguration(Vec<Violation>),
}

pub(crate) fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A single host-to-accelerator register write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Command {
    opcode: Opcode,
    operand: u32,
}

impl Command {
    pub fn new(opcode: Opcode, operand: u32) -> Result<Self, ProtocolError> {
        if operand >= OPERAND_LIMIT {
            return Err(ProtocolError::MalformedCommand(format!("operand {operand} exceeds 24 bits")));
        }
        match opcode {
            Opcode::SetMask if operand > 1 => {
                Err(ProtocolError::MalformedCommand(format!("set-mask operand must be 0 or 1, got {operand}")))
            }
            Opcode::Start if operand != 0 => {
                Err(ProtocolError::MalformedCommand(format!("start operand must be 0, got {operand}")))
            }
            _ => Ok(Command { opcode, operand }),
        }
    }

    pub fn set_heads(h: u32) -> Result<Self, ProtocolError> {
        Command::new(Opcode::SetHeads, h)
    }

    pub fn set_d_model(d: u32) -> Result<Self, ProtocolError> {
        Command::new(Opcode::SetDModel, d)
    }

    pub fn set_seq_len(sl: u32) -> Result<Self, ProtocolError> {
        Command::new(Opcode::SetSeqLen, sl)
    }

    pub fn set_mask(on: bool) -> Self {
        Command { opcode: Opcode::SetMask, operand: u32::from(on) }
    }

    pub fn start() -> Self {
        Command { opcode: Opcode::Start, operand: 0 }
    }

    pub fn opcode(&self) -> Opcode {
        self.opcode
    }

    pub fn operand(&self) -> u32 {
        self.operand
    }

    /// Opcode in the low byte, operand in the upper 24 bits.
    pub fn to_word(&self) -> u32 {
        self.opcode as u32 | (self.operand << 8)
    }

    pub fn from_word(word: u32) -> Result<Self, ProtocolError> {
        let byte = (word & 0xFF) as u8;
        let opcode = Opcode::from_byte(byte)
            .ok_or_else(|| ProtocolError::MalformedCommand(format!("unknown opcode 0x{byte:02X}")))?;
        Command::new(opcode, word >> 8)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.opcode {
            Opcode::Start => write!(f, "start"),
            op => write!(f, "{} {}", op.mnemonic(), self.operand),
        }
    }
}

pub fn encode_binary(commands: &[Command]) -> Vec<u8> {
    commands.iter().flat_map(|c| c.to_word().to_le_bytes()).collect()
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<Command>, ProtocolError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(ProtocolError::MalformedCommand(format!(
            "binary stream length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    bytes.chunks_exact(4).map(|w| Command::from_word(u32::from_le_bytes([w[0], w[1], w[2], w[3]]))).collect()
}

pub fn encode_text(commands: &[Command]) -> String {
    commands.iter().map(|c| format!("{c}\n")).collect()
}

/// One command per line; blank lines and `#` comments are skipped.
pub fn decode_text(text: &str) -> Result<Vec<Command>, ProtocolError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |why: String| ProtocolError::MalformedCommand(format!("line {}: {why}", lineno + 1));
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or_default().to_ascii_lowercase();
        let opcode = Opcode::from_mnemonic(&word).ok_or_else(|| bad(format!("unknown command `{word}`")))?;
        let operand = match (opcode, parts.next()) {
            (Opcode::Start, None) => 0,
            (Opcode::Start, Some(extra)) => extra.parse().map_err(|_| bad(format!("bad operand `{extra}`")))?,
            (_, None) => return Err(bad(format!("`{word}` needs an operand"))),
            (_, Some(arg)) => arg.parse().map_err(|_| bad(format!("bad operand `{arg}`")))?,
        };
        if let Some(extra) = parts.next() {
            return Err(bad(format!("unexpected token `{extra}`")));
        }
        out.push(Command::new(opcode, operand).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

/// Text if the bytes are printable ASCII, the 32-bit binary encoding otherwise.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<Command>, ProtocolError> {
    let looks_textual = bytes.iter().all(|&b| b == b'\n' || b == b'\r' || b == b'\t' || (0x20..0x7F).contains(&b));
    if looks_textual && !bytes.is_empty() {
        decode_text(std::str::from_utf8(bytes).expect("ascii is utf-8"))
    } else {
        decode_binary(bytes)
    }
}

/// Replay register writes starting from the design maxima; validate and return at the first START.
pub fn apply_command_stream(design: &DesignParams, commands: &[Command]) -> Result<RunParams, ProtocolError> {
    let mut run = design.max_run();
    for cmd in commands {
        match cmd.opcode {
            Opcode::SetHeads => run.h = cmd.operand,
            Opcode::SetDModel => run.d_model = cmd.operand,
            Opcode::SetSeqLen => run.seq_len = cmd.operand,
            Opcode::SetMask => run.causal_mask = cmd.operand == 1,
            Opcode::Start => {
                return validate_run_params(design, &run)
                    .into_result()
                    .map(|()| run)
                    .map_err(ProtocolError::InvalidConfiguration);
            }
        }
    }
    Err(ProtocolError::NoStart)
}
