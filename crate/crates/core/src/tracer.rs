//! Static callable tracing and a denylist scanner baseline.
//!
//! Pickle programs have no control flow, so an abstract interpreter that
//! tracks only string literals, imported names, marks and the memo resolves
//! every import and call exactly. Anything it cannot resolve (a callee that is
//! the result of an earlier call, an extension-registry code) is reported as
//! dynamic instead of guessed.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compat;
use crate::name::QualifiedName;
use crate::opcode::{Arg, Op, Opcode, OpcodeStream};

pub const TRACE_SCHEMA: &str = "pickleward-trace/1";
pub const DENYLIST_SCHEMA: &str = "pickleward-denylist/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicKind {
    Import,
    Invocation,
    Allocation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DynamicSite {
    pub kind: DynamicKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ForbiddenSite {
    pub mnemonic: String,
    pub offset: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TraceReport {
    pub imports: BTreeSet<QualifiedName>,
    pub invocations: BTreeSet<QualifiedName>,
    pub allocations: BTreeSet<QualifiedName>,
    /// Sites whose callee is not a literal name.
    pub dynamic: Vec<DynamicSite>,
    pub has_trailing_programs: bool,
    pub forbidden_opcodes: Vec<ForbiddenSite>,
}

impl TraceReport {
    pub fn has_dynamic(&self) -> bool {
        !self.dynamic.is_empty()
    }

    /// Every name the program imports, calls or allocates.
    pub fn all_names(&self) -> BTreeSet<&QualifiedName> {
        self.imports.iter().chain(&self.invocations).chain(&self.allocations).collect()
    }

    fn merge(&mut self, other: TraceReport) {
        self.imports.extend(other.imports);
        self.invocations.extend(other.invocations);
        self.allocations.extend(other.allocations);
        self.dynamic.extend(other.dynamic);
        self.forbidden_opcodes.extend(other.forbidden_opcodes);
    }

    /// One section per set, names sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (title, set) in [("imports", &self.imports), ("invocations", &self.invocations), ("allocations", &self.allocations)] {
            let _ = writeln!(out, "{title}:");
            for n in set {
                let _ = writeln!(out, "  {n}");
            }
        }
        out.push_str("dynamic:\n");
        for d in &self.dynamic {
            let kind = match d.kind {
                DynamicKind::Import => "import",
                DynamicKind::Invocation => "invocation",
                DynamicKind::Allocation => "allocation",
            };
            let _ = writeln!(out, "  {kind} at offset {}", d.offset);
        }
        out.push_str("forbidden_opcodes:\n");
        for f in &self.forbidden_opcodes {
            let _ = writeln!(out, "  {} at offset {}", f.mnemonic, f.offset);
        }
        let _ = writeln!(out, "has_trailing_programs: {}", self.has_trailing_programs);
        out
    }

    /// Versioned JSON form.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema: &'static str,
            #[serde(flatten)]
            report: &'a TraceReport,
        }
        let mut s = serde_json::to_string_pretty(&Doc { schema: TRACE_SCHEMA, report: self }).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Abs {
    Str(String),
    Name(QualifiedName),
    Opaque,
}

struct Tracer {
    stack: Vec<Abs>,
    marks: Vec<usize>,
    memo: HashMap<i64, Abs>,
    proto: u8,
    report: TraceReport,
}

impl Tracer {
    fn new() -> Tracer {
        Tracer { stack: Vec::new(), marks: Vec::new(), memo: HashMap::new(), proto: 0, report: TraceReport::default() }
    }

    fn floor(&self) -> usize {
        self.marks.last().copied().unwrap_or(0)
    }

    fn pop(&mut self) -> Abs {
        if self.stack.len() > self.floor() {
            self.stack.pop().unwrap_or(Abs::Opaque)
        } else {
            Abs::Opaque
        }
    }

    fn top(&self) -> Abs {
        if self.stack.len() > self.floor() {
            self.stack.last().cloned().unwrap_or(Abs::Opaque)
        } else {
            Abs::Opaque
        }
    }

    fn pop_mark(&mut self) -> Vec<Abs> {
        match self.marks.pop() {
            Some(at) => self.stack.split_off(at),
            None => Vec::new(),
        }
    }

    fn resolve(&mut self, module: &str, name: &str, offset: usize) -> Abs {
        let (module, name) = if self.proto < 3 { compat::fix_import(module, name) } else { (module, name) };
        match QualifiedName::new(module, name) {
            Ok(qn) => {
                self.report.imports.insert(qn.clone());
                Abs::Name(qn)
            }
            Err(_) => {
                self.report.dynamic.push(DynamicSite { kind: DynamicKind::Import, offset });
                Abs::Opaque
            }
        }
    }

    fn callee(&mut self, callee: Abs, kind: DynamicKind, offset: usize) {
        match (callee, kind) {
            (Abs::Name(n), DynamicKind::Invocation) => {
                self.report.invocations.insert(n);
            }
            (Abs::Name(n), _) => {
                self.report.allocations.insert(n);
            }
            _ => self.report.dynamic.push(DynamicSite { kind, offset }),
        }
    }

    fn forbidden(&mut self, o: &Opcode) {
        self.report.forbidden_opcodes.push(ForbiddenSite { mnemonic: o.op.mnemonic().to_string(), offset: o.offset });
    }

    fn step(&mut self, o: &Opcode) {
        match o.op {
            Op::PROTO => {
                if let Arg::Int(v) = o.arg {
                    self.proto = v as u8;
                }
            }
            Op::FRAME | Op::STOP | Op::READONLY_BUFFER => {}
            Op::MARK => self.marks.push(self.stack.len()),
            Op::POP => {
                if self.stack.len() > self.floor() {
                    self.stack.pop();
                } else {
                    self.pop_mark();
                }
            }
            Op::POP_MARK => {
                self.pop_mark();
            }
            Op::DUP => {
                let t = self.top();
                self.stack.push(t);
            }
            Op::STRING | Op::BINSTRING | Op::SHORT_BINSTRING => {
                let v = match &o.arg {
                    Arg::Bytes(b) if b.is_ascii() => Abs::Str(String::from_utf8_lossy(b).into_owned()),
                    _ => Abs::Opaque,
                };
                self.stack.push(v);
            }
            Op::UNICODE | Op::BINUNICODE | Op::SHORT_BINUNICODE | Op::BINUNICODE8 => {
                let v = match &o.arg {
                    Arg::Str(s) => Abs::Str(s.clone()),
                    _ => Abs::Opaque,
                };
                self.stack.push(v);
            }
            Op::NONE
            | Op::NEWTRUE
            | Op::NEWFALSE
            | Op::INT
            | Op::BININT
            | Op::BININT1
            | Op::BININT2
            | Op::LONG
            | Op::LONG1
            | Op::LONG4
            | Op::FLOAT
            | Op::BINFLOAT
            | Op::BINBYTES
            | Op::SHORT_BINBYTES
            | Op::BINBYTES8
            | Op::BYTEARRAY8
            | Op::NEXT_BUFFER
            | Op::EMPTY_TUPLE
            | Op::EMPTY_LIST
            | Op::EMPTY_DICT
            | Op::EMPTY_SET
            | Op::PERSID => self.stack.push(Abs::Opaque),
            Op::TUPLE1 | Op::TUPLE2 | Op::TUPLE3 => {
                let n = match o.op {
                    Op::TUPLE1 => 1,
                    Op::TUPLE2 => 2,
                    _ => 3,
                };
                for _ in 0..n {
                    self.pop();
                }
                self.stack.push(Abs::Opaque);
            }
            Op::TUPLE | Op::LIST | Op::DICT | Op::FROZENSET => {
                self.pop_mark();
                self.stack.push(Abs::Opaque);
            }
            Op::APPEND => {
                self.pop();
            }
            Op::SETITEM => {
                self.pop();
                self.pop();
            }
            Op::APPENDS | Op::SETITEMS | Op::ADDITEMS => {
                self.pop_mark();
            }
            Op::BINPERSID => {
                self.pop();
                self.stack.push(Abs::Opaque);
            }
            Op::PUT | Op::BINPUT | Op::LONG_BINPUT => {
                if let Arg::Int(k) = o.arg {
                    let t = self.top();
                    self.memo.insert(k, t);
                }
            }
            Op::MEMOIZE => {
                let t = self.top();
                let k = self.memo.len() as i64;
                self.memo.insert(k, t);
            }
            Op::GET | Op::BINGET | Op::LONG_BINGET => {
                let v = match o.arg {
                    Arg::Int(k) => self.memo.get(&k).cloned().unwrap_or(Abs::Opaque),
                    _ => Abs::Opaque,
                };
                self.stack.push(v);
            }
            Op::GLOBAL => {
                let v = match &o.arg {
                    Arg::Global { module, name } => self.resolve(module, name, o.offset),
                    _ => {
                        self.report.dynamic.push(DynamicSite { kind: DynamicKind::Import, offset: o.offset });
                        Abs::Opaque
                    }
                };
                self.stack.push(v);
            }
            Op::STACK_GLOBAL => {
                let name = self.pop();
                let module = self.pop();
                let v = match (module, name) {
                    (Abs::Str(m), Abs::Str(n)) => self.resolve(&m, &n, o.offset),
                    _ => {
                        self.report.dynamic.push(DynamicSite { kind: DynamicKind::Import, offset: o.offset });
                        Abs::Opaque
                    }
                };
                self.stack.push(v);
            }
            Op::REDUCE => {
                self.pop();
                let callee = self.pop();
                self.callee(callee, DynamicKind::Invocation, o.offset);
                self.stack.push(Abs::Opaque);
            }
            Op::NEWOBJ => {
                self.pop();
                let cls = self.pop();
                self.callee(cls, DynamicKind::Allocation, o.offset);
                self.stack.push(Abs::Opaque);
            }
            Op::NEWOBJ_EX => {
                self.pop();
                self.pop();
                let cls = self.pop();
                self.callee(cls, DynamicKind::Allocation, o.offset);
                self.stack.push(Abs::Opaque);
            }
            Op::BUILD => {
                self.pop();
            }
            Op::INST => {
                // Imports and calls `module.name(*args)` in one step.
                self.forbidden(o);
                self.pop_mark();
                let callee = match &o.arg {
                    Arg::Global { module, name } => self.resolve(module, name, o.offset),
                    _ => Abs::Opaque,
                };
                self.callee(callee, DynamicKind::Invocation, o.offset);
                self.stack.push(Abs::Opaque);
            }
            Op::OBJ => {
                // Calls the first item of the marked segment with the rest.
                self.forbidden(o);
                let items = self.pop_mark();
                let callee = items.into_iter().next().unwrap_or(Abs::Opaque);
                self.callee(callee, DynamicKind::Invocation, o.offset);
                self.stack.push(Abs::Opaque);
            }
            Op::EXT1 | Op::EXT2 | Op::EXT4 => {
                // The extension registry is runtime state; the name is unknown.
                self.forbidden(o);
                self.report.dynamic.push(DynamicSite { kind: DynamicKind::Import, offset: o.offset });
                self.stack.push(Abs::Opaque);
            }
        }
    }

    fn run(mut self, program: &[Opcode]) -> TraceReport {
        for o in program {
            self.step(o);
        }
        self.report
    }
}

/// Statically extracts the callables a stream imports, calls and allocates,
/// including those of programs hidden after the first STOP.
pub fn trace(stream: &OpcodeStream) -> TraceReport {
    let mut report = Tracer::new().run(&stream.opcodes);
    if stream.has_trailing() {
        let (programs, _) = stream.trailing_programs();
        report.has_trailing_programs = !programs.is_empty();
        for p in &programs {
            report.merge(Tracer::new().run(&p.opcodes));
        }
    }
    report.dynamic.sort();
    report.forbidden_opcodes.sort();
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// A name matches only an identical denied name.
    Exact,
    /// A name matches when its module is a denied name's module or a
    /// submodule of it.
    ModulePrefix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Denylist {
    denied: BTreeSet<QualifiedName>,
    pub match_mode: MatchMode,
}

#[derive(Debug, thiserror::Error)]
pub enum DenylistError {
    #[error("a denylist needs at least one name")]
    Empty,
    #[error("cannot read denylist {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad denylist: {0}")]
    Parse(String),
}

#[derive(Deserialize, Serialize)]
struct DenylistFile {
    schema: String,
    match_mode: MatchMode,
    denied: Vec<QualifiedName>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    note: String,
}

const BASELINE_DENYLIST: &str = include_str!("../data/denylist-baseline.json");

impl Denylist {
    pub fn new(denied: impl IntoIterator<Item = QualifiedName>, match_mode: MatchMode) -> Result<Denylist, DenylistError> {
        let denied: BTreeSet<_> = denied.into_iter().collect();
        if denied.is_empty() {
            return Err(DenylistError::Empty);
        }
        Ok(Denylist { denied, match_mode })
    }

    /// The small shipped denylist (process spawning and eval family). It is
    /// a deliberately incomplete foil, not a recommendation.
    pub fn baseline() -> Denylist {
        Denylist::from_json(BASELINE_DENYLIST).expect("shipped denylist is valid")
    }

    pub fn from_json(text: &str) -> Result<Denylist, DenylistError> {
        let file: DenylistFile = serde_json::from_str(text).map_err(|e| DenylistError::Parse(e.to_string()))?;
        if file.schema != DENYLIST_SCHEMA {
            return Err(DenylistError::Parse(format!("unsupported schema {:?}", file.schema)));
        }
        Denylist::new(file.denied, file.match_mode)
    }

    pub fn read(path: &Path) -> Result<Denylist, DenylistError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DenylistError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Denylist::from_json(&text)
    }

    pub fn denied(&self) -> &BTreeSet<QualifiedName> {
        &self.denied
    }

    pub fn matches(&self, name: &QualifiedName) -> bool {
        match self.match_mode {
            MatchMode::Exact => self.denied.contains(name.as_str()),
            MatchMode::ModulePrefix => self.denied.iter().any(|d| {
                let m = name.module();
                let dm = d.module();
                m == dm || (m.starts_with(dm) && m.as_bytes().get(dm.len()) == Some(&b'.'))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Flagged(Vec<QualifiedName>),
    Clean,
}

impl Verdict {
    pub fn is_flagged(&self) -> bool {
        matches!(self, Verdict::Flagged(_))
    }
}

/// Flags a stream iff any name it imports, calls or allocates is denied.
pub fn scan(stream: &OpcodeStream, denylist: &Denylist) -> Verdict {
    scan_report(&trace(stream), denylist)
}

pub fn scan_report(report: &TraceReport, denylist: &Denylist) -> Verdict {
    let hits: Vec<QualifiedName> = report.all_names().into_iter().filter(|n| denylist.matches(n)).cloned().collect();
    if hits.is_empty() {
        Verdict::Clean
    } else {
        Verdict::Flagged(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name::qn;
    use crate::opcode::parse;

    #[test]
    fn none_pickle_has_empty_sets() {
        let r = trace(&parse(b"N.").unwrap());
        assert_eq!(r, TraceReport::default());
    }

    #[test]
    fn stack_global_operands_resolve_through_memo() {
        // module and name strings are memoized and fetched back.
        let raw = b"\x80\x04\x8c\x02os\x94\x8c\x06system\x94h\x00h\x01\x93\x8c\x02hi\x85R.";
        let r = trace(&parse(raw).unwrap());
        assert_eq!(r.imports, [qn("os.system")].into());
        assert_eq!(r.invocations, [qn("os.system")].into());
        assert!(!r.has_dynamic());
    }

    #[test]
    fn computed_callees_are_dynamic() {
        // Call the result of a call.
        let raw = b"\x80\x02cpkg\nf\n)R)R.";
        let r = trace(&parse(raw).unwrap());
        assert_eq!(r.invocations, [qn("pkg.f")].into());
        assert_eq!(r.dynamic, vec![DynamicSite { kind: DynamicKind::Invocation, offset: 12 }]);
    }

    #[test]
    fn trailing_programs_are_traced() {
        let raw = b"\x80\x02N.cos\nsystem\n(S'x'\ntR.";
        let r = trace(&parse(raw).unwrap());
        assert!(r.has_trailing_programs);
        assert!(r.invocations.contains("os.system"));
    }

    #[test]
    fn forbidden_opcodes_are_listed() {
        let r = trace(&parse(b"(S'x'\nios\nsystem\n.").unwrap());
        assert_eq!(r.forbidden_opcodes, vec![ForbiddenSite { mnemonic: "INST".into(), offset: 6 }]);
        assert!(r.invocations.contains("os.system"));
    }

    #[test]
    fn denylist_modes() {
        let exact = Denylist::new([qn("os.system")], MatchMode::Exact).unwrap();
        let prefix = Denylist::new([qn("os.system")], MatchMode::ModulePrefix).unwrap();
        let smuggled = QualifiedName::new("torch.serialization", "os.system").unwrap();
        assert!(exact.matches(&qn("os.system")));
        assert!(!exact.matches(&qn("os.popen")));
        assert!(prefix.matches(&qn("os.popen")));
        assert!(prefix.matches(&qn("os.path.join")));
        assert!(!prefix.matches(&qn("oscar.x")));
        assert!(!exact.matches(&smuggled));
        assert!(!prefix.matches(&smuggled));
        assert!(Denylist::new([], MatchMode::Exact).is_err());
        assert!(Denylist::baseline().matches(&qn("subprocess.Popen")));
    }

    #[test]
    fn text_report_sections() {
        let r = trace(&parse(b"cos\nsystem\n(S'x'\ntR.").unwrap());
        let text = r.to_text();
        assert!(text.starts_with("imports:\n  os.system\ninvocations:\n  os.system\nallocations:\n"));
        assert!(text.ends_with("has_trailing_programs: false\n"));
        assert!(r.to_json().contains("\"schema\": \"pickleward-trace/1\""));
    }
}
