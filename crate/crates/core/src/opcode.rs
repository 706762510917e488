//! Pickle opcode table, decoder, encoder and disassembler for protocols 0-5.

use std::fmt::{self, Write as _};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use sha2::{Digest, Sha256};

use crate::text;

/// How an opcode's argument is laid out in the byte stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    None,
    U8,
    U16,
    I32,
    U32,
    U64,
    Float8,
    /// `INT`: decimal line, `01`/`00` mean True/False.
    DecimalShort,
    /// `LONG`: decimal line with optional trailing `L`.
    DecimalLong,
    FloatLine,
    /// `STRING`: quoted, backslash-escaped line.
    QuotedLine,
    /// `UNICODE`: raw-unicode-escape line.
    UnicodeLine,
    /// `PERSID`: plain ASCII line.
    PlainLine,
    /// `GLOBAL` / `INST`: two plain lines.
    LinePair,
    Long1,
    Long4,
    String1,
    String4,
    Bytes1,
    Bytes4,
    Bytes8,
    Unicode1,
    Unicode4,
    Unicode8,
}

/// Policy-relevant grouping of opcodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpcodeClass {
    Importing,
    Allocating,
    Invoking,
    Building,
    MemoRead,
    MemoWrite,
    Data,
    Control,
    Forbidden,
}

macro_rules! opcodes {
    ($( $name:ident = $byte:literal, $arg:ident, $proto:literal, $class:ident; )*) => {
        /// Every opcode of pickle protocols 0 through 5.
        #[allow(non_camel_case_types, clippy::upper_case_acronyms)]
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Op {
            $( $name, )*
        }

        impl Op {
            pub const ALL: &'static [Op] = &[ $( Op::$name, )* ];

            pub fn from_byte(b: u8) -> Option<Op> {
                match b {
                    $( $byte => Some(Op::$name), )*
                    _ => None,
                }
            }

            pub fn byte(self) -> u8 {
                match self { $( Op::$name => $byte, )* }
            }

            pub fn mnemonic(self) -> &'static str {
                match self { $( Op::$name => stringify!($name), )* }
            }

            pub fn arg_kind(self) -> ArgKind {
                match self { $( Op::$name => ArgKind::$arg, )* }
            }

            /// Protocol version that introduced the opcode.
            pub fn protocol(self) -> u8 {
                match self { $( Op::$name => $proto, )* }
            }

            pub fn class(self) -> OpcodeClass {
                match self { $( Op::$name => OpcodeClass::$class, )* }
            }
        }
    };
}

opcodes! {
    MARK = b'(', None, 0, Control;
    STOP = b'.', None, 0, Control;
    POP = b'0', None, 0, Control;
    POP_MARK = b'1', None, 1, Control;
    DUP = b'2', None, 0, Control;
    FLOAT = b'F', FloatLine, 0, Data;
    INT = b'I', DecimalShort, 0, Data;
    BININT = b'J', I32, 1, Data;
    BININT1 = b'K', U8, 1, Data;
    LONG = b'L', DecimalLong, 0, Data;
    BININT2 = b'M', U16, 1, Data;
    NONE = b'N', None, 0, Data;
    PERSID = b'P', PlainLine, 0, Data;
    BINPERSID = b'Q', None, 1, Data;
    REDUCE = b'R', None, 0, Invoking;
    STRING = b'S', QuotedLine, 0, Data;
    BINSTRING = b'T', String4, 1, Data;
    SHORT_BINSTRING = b'U', String1, 1, Data;
    UNICODE = b'V', UnicodeLine, 0, Data;
    BINUNICODE = b'X', Unicode4, 1, Data;
    APPEND = b'a', None, 0, Data;
    BUILD = b'b', None, 0, Building;
    GLOBAL = b'c', LinePair, 0, Importing;
    DICT = b'd', None, 0, Data;
    EMPTY_DICT = b'}', None, 1, Data;
    APPENDS = b'e', None, 1, Data;
    GET = b'g', DecimalShort, 0, MemoRead;
    BINGET = b'h', U8, 1, MemoRead;
    INST = b'i', LinePair, 0, Forbidden;
    LONG_BINGET = b'j', U32, 1, MemoRead;
    LIST = b'l', None, 0, Data;
    EMPTY_LIST = b']', None, 1, Data;
    OBJ = b'o', None, 1, Forbidden;
    PUT = b'p', DecimalShort, 0, MemoWrite;
    BINPUT = b'q', U8, 1, MemoWrite;
    LONG_BINPUT = b'r', U32, 1, MemoWrite;
    SETITEM = b's', None, 0, Data;
    TUPLE = b't', None, 0, Data;
    EMPTY_TUPLE = b')', None, 1, Data;
    SETITEMS = b'u', None, 1, Data;
    BINFLOAT = b'G', Float8, 1, Data;
    PROTO = 0x80, U8, 2, Control;
    NEWOBJ = 0x81, None, 2, Allocating;
    EXT1 = 0x82, U8, 2, Forbidden;
    EXT2 = 0x83, U16, 2, Forbidden;
    EXT4 = 0x84, I32, 2, Forbidden;
    TUPLE1 = 0x85, None, 2, Data;
    TUPLE2 = 0x86, None, 2, Data;
    TUPLE3 = 0x87, None, 2, Data;
    NEWTRUE = 0x88, None, 2, Data;
    NEWFALSE = 0x89, None, 2, Data;
    LONG1 = 0x8a, Long1, 2, Data;
    LONG4 = 0x8b, Long4, 2, Data;
    BINBYTES = b'B', Bytes4, 3, Data;
    SHORT_BINBYTES = b'C', Bytes1, 3, Data;
    SHORT_BINUNICODE = 0x8c, Unicode1, 4, Data;
    BINUNICODE8 = 0x8d, Unicode8, 4, Data;
    BINBYTES8 = 0x8e, Bytes8, 4, Data;
    EMPTY_SET = 0x8f, None, 4, Data;
    ADDITEMS = 0x90, None, 4, Data;
    FROZENSET = 0x91, None, 4, Data;
    NEWOBJ_EX = 0x92, None, 4, Allocating;
    STACK_GLOBAL = 0x93, None, 4, Importing;
    MEMOIZE = 0x94, None, 4, MemoWrite;
    FRAME = 0x95, U64, 4, Control;
    BYTEARRAY8 = 0x96, Bytes8, 5, Data;
    NEXT_BUFFER = 0x97, None, 5, Data;
    READONLY_BUFFER = 0x98, None, 5, Data;
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Highest protocol version this crate understands.
pub const HIGHEST_PROTOCOL: u8 = 5;

/// Decoded opcode argument.
#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    None,
    Int(i64),
    Long(BigInt),
    Bool(bool),
    Float(f64),
    Bytes(Vec<u8>),
    Str(String),
    /// A text argument that is not valid UTF-8 (or holds lone surrogates);
    /// kept as raw bytes so hostile files can still be inspected.
    BadStr(Vec<u8>),
    Global { module: String, name: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Opcode {
    pub op: Op,
    pub arg: Arg,
    pub offset: usize,
    pub length: usize,
    /// Argument bytes as they appeared in the input, kept only when they are
    /// not the canonical encoding of `arg` (text forms, padded longs).
    raw_arg: Option<Box<[u8]>>,
}

impl Opcode {
    pub fn new(op: Op, arg: Arg) -> Opcode {
        let length = 1 + encode_arg(op, &arg).len();
        Opcode { op, arg, offset: 0, length, raw_arg: None }
    }

    pub fn class(&self) -> OpcodeClass {
        self.op.class()
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.op.byte());
        match &self.raw_arg {
            Some(raw) => out.extend_from_slice(raw),
            None => out.extend_from_slice(&encode_arg(self.op, &self.arg)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("input ends inside {op} at offset {offset}")]
    TruncatedInput { offset: usize, op: String },
    #[error("unknown opcode byte 0x{byte:02x} at offset {offset}")]
    UnknownOpcode { offset: usize, byte: u8 },
    #[error("bad frame at offset {offset}: {reason}")]
    BadFrame { offset: usize, reason: String },
    #[error("no STOP opcode")]
    MissingStop,
    #[error("bad argument for {op} at offset {offset}: {reason}")]
    BadArgument { offset: usize, op: Op, reason: String },
    #[error("unsupported protocol {version} at offset {offset}")]
    UnsupportedProtocol { offset: usize, version: u8 },
}

/// A fully decoded pickle program.
///
/// `opcodes` covers the bytes up to and including the first STOP; anything
/// after it is kept verbatim in `trailing`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpcodeStream {
    pub opcodes: Vec<Opcode>,
    pub protocol: u8,
    pub source_digest: String,
    pub trailing: Vec<u8>,
}

impl OpcodeStream {
    /// Byte length of the program proper (excluding trailing bytes).
    pub fn program_len(&self) -> usize {
        self.opcodes.last().map_or(0, |o| o.end())
    }

    pub fn has_trailing(&self) -> bool {
        !self.trailing.is_empty()
    }

    /// Parses the trailing bytes as further pickle programs, as a loader that
    /// keeps reading after STOP would. Stops at the first unparseable program;
    /// the second element holds the bytes that could not be parsed.
    pub fn trailing_programs(&self) -> (Vec<OpcodeStream>, Vec<u8>) {
        let mut out = Vec::new();
        let mut base = self.program_len();
        let mut rest: &[u8] = &self.trailing;
        while !rest.is_empty() {
            match parse_at(rest, base) {
                Ok(s) => {
                    let used = s.program_len() - base;
                    base += used;
                    rest = &rest[used..];
                    out.push(OpcodeStream { trailing: Vec::new(), ..s });
                }
                Err(_) => return (out, rest.to_vec()),
            }
        }
        (out, Vec::new())
    }
}

/// Decodes a pickle program.
pub fn parse(raw: &[u8]) -> Result<OpcodeStream, ParseError> {
    let mut s = parse_at(raw, 0)?;
    s.source_digest = hex::encode(Sha256::digest(raw));
    Ok(s)
}

/// Re-encodes a stream; the inverse of [`parse`].
pub fn serialize(stream: &OpcodeStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(stream.program_len() + stream.trailing.len());
    for op in &stream.opcodes {
        op.encode_into(&mut out);
    }
    out.extend_from_slice(&stream.trailing);
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
    op_start: usize,
    op: Op,
    frame_end: Option<usize>,
}

impl<'a> Reader<'a> {
    fn truncated(&self) -> ParseError {
        ParseError::TruncatedInput { offset: self.base + self.op_start, op: self.op.mnemonic().to_string() }
    }

    fn bad(&self, reason: impl Into<String>) -> ParseError {
        ParseError::BadArgument { offset: self.base + self.op_start, op: self.op, reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        if n > self.data.len() - self.pos {
            return Err(self.truncated());
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_len(&mut self, n: u64) -> Result<&'a [u8], ParseError> {
        let n = usize::try_from(n).map_err(|_| self.truncated())?;
        self.take(n)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ParseError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn line(&mut self) -> Result<&'a [u8], ParseError> {
        let rest = &self.data[self.pos..];
        match rest.iter().position(|&b| b == b'\n') {
            Some(i) => {
                self.pos += i + 1;
                Ok(&rest[..i])
            }
            None => Err(self.truncated()),
        }
    }
}

fn utf8_or_raw(bytes: &[u8]) -> Arg {
    match std::str::from_utf8(bytes) {
        Ok(s) => Arg::Str(s.to_string()),
        Err(_) => Arg::BadStr(bytes.to_vec()),
    }
}

pub(crate) fn parse_at(raw: &[u8], base: usize) -> Result<OpcodeStream, ParseError> {
    let mut r = Reader { data: raw, pos: 0, base, op_start: 0, op: Op::STOP, frame_end: None };
    let mut opcodes = Vec::new();
    let mut max_proto = 0u8;
    loop {
        if let Some(end) = r.frame_end {
            if r.pos == end {
                r.frame_end = None;
            }
        }
        if r.pos >= raw.len() {
            if let Some(end) = r.frame_end {
                if end > r.pos {
                    return Err(ParseError::BadFrame { offset: base + r.pos, reason: "frame extends past end of input".into() });
                }
            }
            return Err(ParseError::MissingStop);
        }
        r.op_start = r.pos;
        let byte = raw[r.pos];
        let op = Op::from_byte(byte).ok_or(ParseError::UnknownOpcode { offset: base + r.pos, byte })?;
        r.op = op;
        r.pos += 1;
        let (arg, raw_arg) = decode_arg(&mut r)?;
        if let Some(end) = r.frame_end {
            if r.pos > end {
                return Err(ParseError::BadFrame {
                    offset: base + r.op_start,
                    reason: format!("{op} crosses the end of its frame at offset {}", base + end),
                });
            }
        }
        max_proto = max_proto.max(op.protocol());
        match (op, &arg) {
            (Op::PROTO, Arg::Int(v)) if *v as u64 > HIGHEST_PROTOCOL as u64 => {
                return Err(ParseError::UnsupportedProtocol { offset: base + r.op_start, version: *v as u8 });
            }
            (Op::FRAME, Arg::Int(len)) => {
                if let Some(end) = r.frame_end {
                    if end > r.pos {
                        return Err(ParseError::BadFrame {
                            offset: base + r.op_start,
                            reason: "new frame begins before the current one ends".into(),
                        });
                    }
                }
                let len = *len as u64;
                if len > (raw.len() - r.pos) as u64 {
                    return Err(ParseError::BadFrame {
                        offset: base + r.op_start,
                        reason: format!("frame length {len} exceeds the {} remaining bytes", raw.len() - r.pos),
                    });
                }
                r.frame_end = Some(r.pos + len as usize);
            }
            _ => {}
        }
        opcodes.push(Opcode { op, arg, offset: base + r.op_start, length: r.pos - r.op_start, raw_arg });
        if op == Op::STOP {
            break;
        }
    }
    let protocol = match opcodes.first() {
        Some(Opcode { op: Op::PROTO, arg: Arg::Int(v), .. }) => *v as u8,
        _ => max_proto.min(1),
    };
    Ok(OpcodeStream { opcodes, protocol, source_digest: String::new(), trailing: raw[r.pos..].to_vec() })
}

fn int_arg(v: i64) -> Arg {
    Arg::Int(v)
}

fn big_or_small(v: BigInt) -> Arg {
    match v.to_i64() {
        Some(i) => Arg::Int(i),
        None => Arg::Long(v),
    }
}

/// A decoded argument and its original bytes when re-encoding would differ.
type Decoded = (Arg, Option<Box<[u8]>>);

fn decode_arg(r: &mut Reader<'_>) -> Result<Decoded, ParseError> {
    let start = r.pos;
    let arg = match r.op.arg_kind() {
        ArgKind::None => Arg::None,
        ArgKind::U8 => int_arg(r.take(1)?[0] as i64),
        ArgKind::U16 => int_arg(u16::from_le_bytes(r.array()?) as i64),
        ArgKind::I32 => int_arg(i32::from_le_bytes(r.array()?) as i64),
        ArgKind::U32 => int_arg(u32::from_le_bytes(r.array()?) as i64),
        ArgKind::U64 => {
            let v = u64::from_le_bytes(r.array()?);
            match i64::try_from(v) {
                Ok(v) => Arg::Int(v),
                Err(_) => Arg::Long(BigInt::from(v)),
            }
        }
        ArgKind::Float8 => Arg::Float(f64::from_be_bytes(r.array()?)),
        ArgKind::DecimalShort => {
            let line = r.line()?;
            match (r.op, line) {
                (Op::INT, b"01") => Arg::Bool(true),
                (Op::INT, b"00") => Arg::Bool(false),
                (Op::INT, _) => big_or_small(text::parse_py_int(line, true).ok_or_else(|| r.bad("not an integer"))?),
                _ => big_or_small(text::parse_py_int(line, false).ok_or_else(|| r.bad("not an integer"))?),
            }
        }
        ArgKind::DecimalLong => {
            let line = r.line()?;
            let digits = line.strip_suffix(b"L").unwrap_or(line);
            big_or_small(text::parse_py_int(digits, true).ok_or_else(|| r.bad("not an integer"))?)
        }
        ArgKind::FloatLine => {
            let line = r.line()?;
            Arg::Float(text::parse_py_float(line).ok_or_else(|| r.bad("not a float"))?)
        }
        ArgKind::QuotedLine => {
            let line = r.line()?;
            let quoted = line.len() >= 2 && line[0] == line[line.len() - 1] && (line[0] == b'\'' || line[0] == b'"');
            if !quoted {
                return Err(r.bad("STRING argument must be quoted"));
            }
            Arg::Bytes(text::escape_decode(&line[1..line.len() - 1]).map_err(|e| r.bad(e))?)
        }
        ArgKind::UnicodeLine => {
            let line = r.line()?;
            match text::raw_unicode_escape_decode(line).map_err(|e| r.bad(e))? {
                Some(s) => Arg::Str(s),
                None => Arg::BadStr(line.to_vec()),
            }
        }
        ArgKind::PlainLine => utf8_or_raw(r.line()?),
        ArgKind::LinePair => {
            let module = r.line()?;
            let name = r.line()?;
            match (std::str::from_utf8(module), std::str::from_utf8(name)) {
                (Ok(m), Ok(n)) => Arg::Global { module: m.to_string(), name: n.to_string() },
                _ => {
                    let mut b = module.to_vec();
                    b.push(b'\n');
                    b.extend_from_slice(name);
                    Arg::BadStr(b)
                }
            }
        }
        ArgKind::Long1 => {
            let n = r.take(1)?[0] as u64;
            big_or_small(decode_long(r.take_len(n)?))
        }
        ArgKind::Long4 => {
            let n = i32::from_le_bytes(r.array()?);
            if n < 0 {
                return Err(r.bad("negative byte count"));
            }
            big_or_small(decode_long(r.take_len(n as u64)?))
        }
        ArgKind::String1 => {
            let n = r.take(1)?[0] as u64;
            Arg::Bytes(r.take_len(n)?.to_vec())
        }
        ArgKind::String4 => {
            let n = i32::from_le_bytes(r.array()?);
            if n < 0 {
                return Err(r.bad("negative byte count"));
            }
            Arg::Bytes(r.take_len(n as u64)?.to_vec())
        }
        ArgKind::Bytes1 => {
            let n = r.take(1)?[0] as u64;
            Arg::Bytes(r.take_len(n)?.to_vec())
        }
        ArgKind::Bytes4 => {
            let n = u32::from_le_bytes(r.array()?) as u64;
            Arg::Bytes(r.take_len(n)?.to_vec())
        }
        ArgKind::Bytes8 => {
            let n = u64::from_le_bytes(r.array()?);
            Arg::Bytes(r.take_len(n)?.to_vec())
        }
        ArgKind::Unicode1 => {
            let n = r.take(1)?[0] as u64;
            utf8_or_raw(r.take_len(n)?)
        }
        ArgKind::Unicode4 => {
            let n = u32::from_le_bytes(r.array()?) as u64;
            utf8_or_raw(r.take_len(n)?)
        }
        ArgKind::Unicode8 => {
            let n = u64::from_le_bytes(r.array()?);
            utf8_or_raw(r.take_len(n)?)
        }
    };
    let consumed = &r.data[start..r.pos];
    let raw = if needs_raw(r.op.arg_kind()) && encode_arg(r.op, &arg) != consumed {
        Some(consumed.to_vec().into_boxed_slice())
    } else {
        None
    };
    Ok((arg, raw))
}

fn needs_raw(kind: ArgKind) -> bool {
    matches!(
        kind,
        ArgKind::DecimalShort
            | ArgKind::DecimalLong
            | ArgKind::FloatLine
            | ArgKind::QuotedLine
            | ArgKind::UnicodeLine
            | ArgKind::PlainLine
            | ArgKind::LinePair
            | ArgKind::Long1
            | ArgKind::Long4
    )
}

/// Little-endian two's-complement integer, as LONG1/LONG4 store it.
pub fn decode_long(bytes: &[u8]) -> BigInt {
    if bytes.is_empty() {
        return BigInt::zero();
    }
    BigInt::from_signed_bytes_le(bytes)
}

/// Minimal little-endian two's-complement encoding (empty for zero).
pub fn encode_long(v: &BigInt) -> Vec<u8> {
    if v.is_zero() {
        return Vec::new();
    }
    v.to_signed_bytes_le()
}

fn arg_i64(arg: &Arg) -> i64 {
    match arg {
        Arg::Int(v) => *v,
        Arg::Bool(b) => *b as i64,
        Arg::Long(v) => v.to_i64().unwrap_or(0),
        _ => 0,
    }
}

fn arg_u64(arg: &Arg) -> u64 {
    match arg {
        Arg::Int(v) => *v as u64,
        Arg::Long(v) => v.to_u64().unwrap_or(0),
        _ => 0,
    }
}

fn arg_big(arg: &Arg) -> BigInt {
    match arg {
        Arg::Int(v) => BigInt::from(*v),
        Arg::Long(v) => v.clone(),
        Arg::Bool(b) => BigInt::from(*b as i64),
        _ => BigInt::zero(),
    }
}

fn arg_bytes(arg: &Arg) -> &[u8] {
    match arg {
        Arg::Bytes(b) | Arg::BadStr(b) => b,
        Arg::Str(s) => s.as_bytes(),
        _ => &[],
    }
}

/// Canonical argument encoding for an opcode.
pub fn encode_arg(op: Op, arg: &Arg) -> Vec<u8> {
    let mut out = Vec::new();
    match op.arg_kind() {
        ArgKind::None => {}
        ArgKind::U8 => out.push(arg_i64(arg) as u8),
        ArgKind::U16 => out.extend_from_slice(&(arg_i64(arg) as u16).to_le_bytes()),
        ArgKind::I32 => out.extend_from_slice(&(arg_i64(arg) as i32).to_le_bytes()),
        ArgKind::U32 => out.extend_from_slice(&(arg_i64(arg) as u32).to_le_bytes()),
        ArgKind::U64 => out.extend_from_slice(&arg_u64(arg).to_le_bytes()),
        ArgKind::Float8 => {
            let v = if let Arg::Float(f) = arg { *f } else { 0.0 };
            out.extend_from_slice(&v.to_be_bytes());
        }
        ArgKind::DecimalShort => {
            match arg {
                Arg::Bool(true) => out.extend_from_slice(b"01"),
                Arg::Bool(false) => out.extend_from_slice(b"00"),
                _ => out.extend_from_slice(arg_big(arg).to_string().as_bytes()),
            }
            out.push(b'\n');
        }
        ArgKind::DecimalLong => {
            out.extend_from_slice(arg_big(arg).to_string().as_bytes());
            out.extend_from_slice(b"L\n");
        }
        ArgKind::FloatLine => {
            let v = if let Arg::Float(f) = arg { *f } else { 0.0 };
            out.extend_from_slice(text::python_float_repr(v).as_bytes());
            out.push(b'\n');
        }
        ArgKind::QuotedLine => {
            out.extend_from_slice(text::python_bytes_literal_body(arg_bytes(arg)).as_bytes());
            out.push(b'\n');
        }
        ArgKind::UnicodeLine => {
            match arg {
                Arg::Str(s) => out.extend_from_slice(&text::raw_unicode_escape_encode(s)),
                other => out.extend_from_slice(arg_bytes(other)),
            }
            out.push(b'\n');
        }
        ArgKind::PlainLine => {
            out.extend_from_slice(arg_bytes(arg));
            out.push(b'\n');
        }
        ArgKind::LinePair => {
            match arg {
                Arg::Global { module, name } => {
                    out.extend_from_slice(module.as_bytes());
                    out.push(b'\n');
                    out.extend_from_slice(name.as_bytes());
                }
                other => out.extend_from_slice(arg_bytes(other)),
            }
            out.push(b'\n');
        }
        ArgKind::Long1 => {
            let b = encode_long(&arg_big(arg));
            out.push(b.len() as u8);
            out.extend_from_slice(&b);
        }
        ArgKind::Long4 => {
            let b = encode_long(&arg_big(arg));
            out.extend_from_slice(&(b.len() as i32).to_le_bytes());
            out.extend_from_slice(&b);
        }
        ArgKind::String1 | ArgKind::Bytes1 | ArgKind::Unicode1 => {
            let b = arg_bytes(arg);
            out.push(b.len() as u8);
            out.extend_from_slice(b);
        }
        ArgKind::String4 => {
            let b = arg_bytes(arg);
            out.extend_from_slice(&(b.len() as i32).to_le_bytes());
            out.extend_from_slice(b);
        }
        ArgKind::Bytes4 | ArgKind::Unicode4 => {
            let b = arg_bytes(arg);
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(b);
        }
        ArgKind::Bytes8 | ArgKind::Unicode8 => {
            let b = arg_bytes(arg);
            out.extend_from_slice(&(b.len() as u64).to_le_bytes());
            out.extend_from_slice(b);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// disassembly

/// Renders an argument the way the disassembler shows it.
pub fn render_arg(arg: &Arg) -> Option<String> {
    Some(match arg {
        Arg::None => return None,
        Arg::Int(v) => v.to_string(),
        Arg::Long(v) => v.to_string(),
        Arg::Bool(b) => if *b { "True" } else { "False" }.to_string(),
        Arg::Float(f) => text::float_text(*f),
        Arg::Bytes(b) => format!("b{}", text::quote_bytes(b)),
        Arg::BadStr(b) => format!("b{} (not valid text)", text::quote_bytes(b)),
        Arg::Str(s) => text::quote_str(s),
        Arg::Global { module, name } => text::quote_str(&format!("{module} {name}")),
    })
}

fn listing_into(out: &mut String, opcodes: &[Opcode]) {
    for op in opcodes {
        match render_arg(&op.arg) {
            Some(a) => writeln!(out, "{}: {} {}", op.offset, op.op, a),
            None => writeln!(out, "{}: {}", op.offset, op.op),
        }
        .expect("writing to a String cannot fail");
    }
}

/// One line per opcode (`offset: MNEMONIC arg`), then any trailing programs.
pub fn disassemble(stream: &OpcodeStream) -> String {
    let mut out = String::new();
    listing_into(&mut out, &stream.opcodes);
    if stream.has_trailing() {
        let (programs, rest) = stream.trailing_programs();
        let _ = writeln!(
            out,
            "-- {} trailing bytes after STOP at offset {} --",
            stream.trailing.len(),
            stream.program_len()
        );
        for p in &programs {
            listing_into(&mut out, &p.opcodes);
        }
        if !rest.is_empty() {
            let _ = writeln!(out, "-- {} bytes not parseable as a pickle program --", rest.len());
        }
    }
    if out.ends_with('\n') {
        out.pop();
    }
    out
}

/// Checks the offset tiling invariant: each opcode starts where the previous ended.
pub fn is_contiguous(stream: &OpcodeStream) -> bool {
    let mut expected = stream.opcodes.first().map_or(0, |o| o.offset);
    for o in &stream.opcodes {
        if o.offset != expected {
            return false;
        }
        expected = o.end();
    }
    true
}
