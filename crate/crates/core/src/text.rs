//! Python text-literal conventions used by protocol-0 opcodes and by the
//! disassembler and dump renderers.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::Num;

/// Parses an integer the way CPython's `int(text)` (`base0 == false`) or
/// `int(text, 0)` (`base0 == true`) does for ASCII input.
pub fn parse_py_int(raw: &[u8], base0: bool) -> Option<BigInt> {
    let s = std::str::from_utf8(raw).ok()?.trim_matches(|c: char| c.is_ascii_whitespace());
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let lower = body.to_ascii_lowercase();
    let (radix, digits, after_prefix) = if base0 && lower.len() > 1 && lower.starts_with('0') {
        match &lower[1..2] {
            "x" => (16, &body[2..], true),
            "o" => (8, &body[2..], true),
            "b" => (2, &body[2..], true),
            _ => (10, body, false),
        }
    } else {
        (10, body, false)
    };
    let digits = if after_prefix { digits.strip_prefix('_').unwrap_or(digits) } else { digits };
    if digits.is_empty() || digits.starts_with('_') || digits.ends_with('_') || digits.contains("__") {
        return None;
    }
    let clean: String = digits.chars().filter(|&c| c != '_').collect();
    if !clean.chars().all(|c| c.is_digit(radix)) {
        return None;
    }
    if base0 && radix == 10 && clean.len() > 1 && clean.starts_with('0') && clean.chars().any(|c| c != '0') {
        return None;
    }
    let v = BigInt::from_str_radix(&clean, radix).ok()?;
    Some(if neg { -v } else { v })
}

/// Parses a float the way CPython's `float(text)` does for ASCII input.
pub fn parse_py_float(raw: &[u8]) -> Option<f64> {
    let s = std::str::from_utf8(raw).ok()?.trim_matches(|c: char| c.is_ascii_whitespace());
    let lower = s.to_ascii_lowercase();
    let (sign, body) = match lower.as_bytes().first()? {
        b'-' => (-1.0, &lower[1..]),
        b'+' => (1.0, &lower[1..]),
        _ => (1.0, &lower[..]),
    };
    match body {
        "nan" => return Some(f64::NAN),
        "inf" | "infinity" => return Some(sign * f64::INFINITY),
        _ => {}
    }
    if body.contains("__") || body.starts_with('_') || body.ends_with('_') {
        return None;
    }
    let bytes = body.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'_' && !(bytes[i - 1].is_ascii_digit() && bytes[i + 1].is_ascii_digit()) {
            return None;
        }
        if !(b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'+' | b'-' | b'_')) {
            return None;
        }
    }
    let clean: String = body.chars().filter(|&c| c != '_').collect();
    clean.parse::<f64>().ok().map(|v| sign * v)
}

/// `codecs.escape_decode`: the backslash escapes of a Python bytes literal.
pub fn escape_decode(s: &[u8]) -> Result<Vec<u8>, String> {
    let mut out = Vec::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        let c = s[i];
        i += 1;
        if c != b'\\' {
            out.push(c);
            continue;
        }
        let Some(&e) = s.get(i) else {
            return Err("trailing backslash".into());
        };
        i += 1;
        match e {
            b'\n' => {}
            b'\\' | b'\'' | b'"' => out.push(e),
            b'a' => out.push(7),
            b'b' => out.push(8),
            b'f' => out.push(12),
            b't' => out.push(b'\t'),
            b'n' => out.push(b'\n'),
            b'r' => out.push(b'\r'),
            b'v' => out.push(11),
            b'0'..=b'7' => {
                let mut v = (e - b'0') as u32;
                for _ in 0..2 {
                    match s.get(i) {
                        Some(&d @ b'0'..=b'7') => {
                            v = v * 8 + (d - b'0') as u32;
                            i += 1;
                        }
                        _ => break,
                    }
                }
                out.push(v as u8);
            }
            b'x' => {
                let hex = s.get(i..i + 2).ok_or("invalid \\x escape")?;
                let v = std::str::from_utf8(hex)
                    .ok()
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .filter(|_| hex.iter().all(|b| b.is_ascii_hexdigit()))
                    .ok_or("invalid \\x escape")?;
                out.push(v);
                i += 2;
            }
            other => {
                out.push(b'\\');
                out.push(other);
            }
        }
    }
    Ok(out)
}

/// `raw_unicode_escape` decoding. `Ok(None)` means the text decodes to lone
/// surrogates, which Python strings allow but Rust strings cannot hold.
pub fn raw_unicode_escape_decode(s: &[u8]) -> Result<Option<String>, String> {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        let c = s[i];
        if c != b'\\' {
            out.push(c as char);
            i += 1;
            continue;
        }
        let run_start = i;
        while i < s.len() && s[i] == b'\\' {
            i += 1;
        }
        let run = i - run_start;
        let width = match s.get(i) {
            Some(b'u') if run % 2 == 1 => 4,
            Some(b'U') if run % 2 == 1 => 8,
            _ => {
                out.extend(std::iter::repeat_n('\\', run));
                continue;
            }
        };
        out.extend(std::iter::repeat_n('\\', run - 1));
        let hex = s.get(i + 1..i + 1 + width).ok_or("truncated \\uXXXX escape")?;
        if !hex.iter().all(|b| b.is_ascii_hexdigit()) {
            return Err("truncated \\uXXXX escape".into());
        }
        let v = u32::from_str_radix(std::str::from_utf8(hex).expect("hex digits are ASCII"), 16)
            .map_err(|e| e.to_string())?;
        if v > 0x10FFFF {
            return Err("\\Uxxxxxxxx out of range".into());
        }
        match char::from_u32(v) {
            Some(ch) => out.push(ch),
            None => return Ok(None),
        }
        i += 1 + width;
    }
    Ok(Some(out))
}

/// The UNICODE argument encoding CPython's protocol-0 pickler writes.
pub fn raw_unicode_escape_encode(s: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len());
    for ch in s.chars() {
        let v = ch as u32;
        match ch {
            '\\' | '\0' | '\n' | '\r' | '\x1a' => out.extend_from_slice(format!("\\u{v:04x}").as_bytes()),
            _ if v < 0x100 => out.push(v as u8),
            _ if v < 0x10000 => out.extend_from_slice(format!("\\u{v:04x}").as_bytes()),
            _ => out.extend_from_slice(format!("\\U{v:08x}").as_bytes()),
        }
    }
    out
}

/// Shortest round-trip decimal form: `0.1`, `1e16`, `1e-5`, `-0.0`, `NaN`, `inf`.
pub fn float_text(v: f64) -> String {
    format!("{v:?}")
}

/// CPython's `repr(float)`: `1e+16`, `1e-05`, `nan`, `inf`.
pub fn python_float_repr(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    let s = float_text(v);
    match s.split_once('e') {
        Some((m, e)) => {
            let (sign, digits) = match e.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', e),
            };
            format!("{m}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

fn push_escaped(out: &mut String, c: u32, quote: char) {
    match char::from_u32(c) {
        Some('\\') => out.push_str("\\\\"),
        Some('\n') => out.push_str("\\n"),
        Some('\r') => out.push_str("\\r"),
        Some('\t') => out.push_str("\\t"),
        Some(ch) if ch == quote => {
            out.push('\\');
            out.push(ch);
        }
        Some(ch) if (ch as u32) < 0x20 || ch as u32 == 0x7f => {
            let _ = write!(out, "\\x{:02x}", ch as u32);
        }
        Some(ch) => out.push(ch),
        None => {
            let _ = write!(out, "\\x{c:02x}");
        }
    }
}

/// Single-quoted string with backslash escapes for quotes and control characters.
pub fn quote_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for ch in s.chars() {
        push_escaped(&mut out, ch as u32, '\'');
    }
    out.push('\'');
    out
}

/// Single-quoted bytes: printable ASCII as-is, everything else as `\xNN`.
pub fn quote_bytes(b: &[u8]) -> String {
    let mut out = String::with_capacity(b.len() + 2);
    out.push('\'');
    for &c in b {
        if c >= 0x80 {
            let _ = write!(out, "\\x{c:02x}");
        } else {
            push_escaped(&mut out, c as u32, '\'');
        }
    }
    out.push('\'');
    out
}

/// Quoted STRING argument whose `escape_decode` yields `b`.
pub fn python_bytes_literal_body(b: &[u8]) -> String {
    quote_bytes(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ints_follow_python_rules() {
        let p = |s: &str, b0| parse_py_int(s.as_bytes(), b0).map(|v| v.to_string());
        assert_eq!(p("42", true).as_deref(), Some("42"));
        assert_eq!(p(" -7 ", true).as_deref(), Some("-7"));
        assert_eq!(p("0x1f", true).as_deref(), Some("31"));
        assert_eq!(p("0x_1f", true).as_deref(), Some("31"));
        assert_eq!(p("1_000", false).as_deref(), Some("1000"));
        assert_eq!(p("000", true).as_deref(), Some("0"));
        assert_eq!(p("007", true), None);
        assert_eq!(p("007", false).as_deref(), Some("7"));
        assert_eq!(p("0x1f", false), None);
        assert_eq!(p("1__0", false), None);
        assert_eq!(p("", false), None);
        assert_eq!(p("12345678901234567890123", false).as_deref(), Some("12345678901234567890123"));
    }

    #[test]
    fn floats_follow_python_rules() {
        assert_eq!(parse_py_float(b"1e+16"), Some(1e16));
        assert_eq!(parse_py_float(b" -0.5 "), Some(-0.5));
        assert_eq!(parse_py_float(b"1_0.5"), Some(10.5));
        assert!(parse_py_float(b"nan").unwrap().is_nan());
        assert_eq!(parse_py_float(b"-Infinity"), Some(f64::NEG_INFINITY));
        assert_eq!(parse_py_float(b"1._5"), None);
        assert_eq!(parse_py_float(b"abc"), None);
    }

    #[test]
    fn escape_decode_matches_codecs() {
        assert_eq!(escape_decode(br"a\x41\n\\\'\101\8").unwrap(), b"aA\n\\'A\\8");
        assert_eq!(escape_decode(b"a\\\nb").unwrap(), b"ab");
        assert!(escape_decode(br"\x4").is_err());
        assert!(escape_decode(b"a\\").is_err());
    }

    #[test]
    fn raw_unicode_escape_round_trip() {
        assert_eq!(raw_unicode_escape_decode(b"caf\xe9").unwrap().unwrap(), "café");
        assert_eq!(raw_unicode_escape_decode(br"\\u0041").unwrap().unwrap(), "\\\\u0041");
        assert_eq!(raw_unicode_escape_decode(br"\\A").unwrap().unwrap(), "\\\\A");
        assert_eq!(raw_unicode_escape_decode(br"\U0001f600").unwrap().unwrap(), "\u{1f600}");
        assert_eq!(raw_unicode_escape_decode(br"\ud800").unwrap(), None);
        assert!(raw_unicode_escape_decode(br"\u00").is_err());
        assert_eq!(raw_unicode_escape_decode(b"\xe9").unwrap().unwrap(), "é");
        for s in ["plain", "back\\slash", "nl\n", "日本", "\u{1f600}", "é"] {
            let enc = raw_unicode_escape_encode(s);
            assert_eq!(raw_unicode_escape_decode(&enc).unwrap().unwrap(), s);
        }
    }

    #[test]
    fn float_forms() {
        let cases = [
            (0.1, "0.1", "0.1"),
            (1e16, "1e16", "1e+16"),
            (1e15, "1000000000000000.0", "1000000000000000.0"),
            (1e-5, "1e-5", "1e-05"),
            (1e-4, "0.0001", "0.0001"),
            (-0.0, "-0.0", "-0.0"),
            (1.5e300, "1.5e300", "1.5e+300"),
            (2.0, "2.0", "2.0"),
            (f64::INFINITY, "inf", "inf"),
        ];
        for (v, dump, py) in cases {
            assert_eq!(float_text(v), dump);
            assert_eq!(python_float_repr(v), py);
        }
        assert_eq!(float_text(f64::NAN), "NaN");
    }

    #[test]
    fn quoting() {
        assert_eq!(quote_str("it's\n"), "'it\\'s\\n'");
        assert_eq!(quote_str("café"), "'café'");
        assert_eq!(quote_bytes(b"\x00a\xff"), "'\\x00a\\xff'");
    }
}
