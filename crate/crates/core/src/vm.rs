//! The pickle machine: executes an [`OpcodeStream`] into an [`ObjectGraph`]
//! without running any callable.
//!
//! In restricted mode every importing opcode is checked against a
//! [`Policy`]. Names outside `allowed_imports` become inert stubs, and the
//! violation is only raised if the stub is later called, allocated from or
//! built into (lazy enforcement). Calls need `allowed_invocations`. In
//! unrestricted mode every name resolves, which gives the reference result
//! the restricted mode is compared against.

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use serde::Serialize;

use crate::compat;
use crate::graph::{
    CallableRef, Construction, Dict, Instance, NodeId, ObjectGraph, SetValue, Stub, Unhashable, Value,
};
use crate::name::QualifiedName;
use crate::opcode::{Arg, Op, Opcode, OpcodeClass, OpcodeStream};
use crate::policy::Policy;

pub const DEFAULT_MAX_DEPTH: usize = 4096;
pub const DEFAULT_MAX_MEMO: usize = 1_000_000;

/// Attribute writes refused when the BUILD target is a callable reference.
pub const PROTECTED_ATTRIBUTES: [&str; 2] = ["__name__", "__module__"];

#[derive(Debug, Clone, Copy)]
pub enum Mode<'p> {
    Restricted(&'p Policy),
    Unrestricted,
}

#[derive(Debug, Clone, Copy)]
pub struct VmConfig<'p> {
    pub mode: Mode<'p>,
    /// Bound on stack entries plus open marks.
    pub max_depth: usize,
    /// Bound on memo entries.
    pub max_memo: usize,
    /// Also run the programs that follow the first STOP and fail on any
    /// security violation they contain. Their values are discarded.
    pub vet_trailing: bool,
}

impl<'p> VmConfig<'p> {
    pub fn restricted(policy: &'p Policy) -> VmConfig<'p> {
        VmConfig { mode: Mode::Restricted(policy), ..VmConfig::unrestricted() }
    }

    pub fn unrestricted() -> VmConfig<'static> {
        VmConfig {
            mode: Mode::Unrestricted,
            max_depth: DEFAULT_MAX_DEPTH,
            max_memo: DEFAULT_MAX_MEMO,
            vet_trailing: true,
        }
    }
}

/// A name observed at an opcode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub name: QualifiedName,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaintedBuild {
    pub target: QualifiedName,
    pub attribute: String,
    pub offset: usize,
}

/// What a run did, in program order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecutionTrace {
    /// Names resolved to callable references.
    pub imports: Vec<Event>,
    pub invocations: Vec<Event>,
    pub allocations: Vec<Event>,
    /// Names replaced by stubs.
    pub stubs: Vec<Event>,
    pub tainted_builds: Vec<TaintedBuild>,
}

impl ExecutionTrace {
    fn extend(&mut self, other: ExecutionTrace) {
        self.imports.extend(other.imports);
        self.invocations.extend(other.invocations);
        self.allocations.extend(other.allocations);
        self.stubs.extend(other.stubs);
        self.tainted_builds.extend(other.tainted_builds);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub opcodes_executed: usize,
    /// Programs run: the main one plus vetted trailing programs.
    pub programs: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct VmOutcome {
    pub graph: ObjectGraph,
    pub trace: ExecutionTrace,
    pub stats: Stats,
}

impl VmOutcome {
    pub fn root(&self) -> NodeId {
        self.graph.root()
    }

    pub fn canonical_dump(&self) -> String {
        self.graph.canonical_dump()
    }

    pub fn list_stubs(&self) -> Vec<(String, QualifiedName)> {
        self.graph.list_stubs()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VmError {
    #[error("invocation of {name} denied at offset {offset}")]
    InvocationDenied { name: String, offset: usize },
    #[error("stub for {name} used at offset {offset}")]
    StubInvocation { name: QualifiedName, offset: usize },
    #[error("forbidden opcode {op} at offset {offset}")]
    ForbiddenOpcode { op: Op, offset: usize },
    #[error("stack underflow at {op} (offset {offset})")]
    StackUnderflow { op: Op, offset: usize },
    #[error("memo key {key} not found at offset {offset}")]
    MemoMiss { key: String, offset: usize },
    #[error("stack depth exceeds {limit} at offset {offset}")]
    DepthExceeded { limit: usize, offset: usize },
    #[error("memo size exceeds {limit} at offset {offset}")]
    MemoExceeded { limit: usize, offset: usize },
    #[error("malformed program at {op} (offset {offset}): {reason}")]
    Malformed { op: Op, offset: usize, reason: String },
}

impl VmError {
    /// Errors that mean the program tried to do something the policy forbids.
    pub fn is_security_violation(&self) -> bool {
        matches!(
            self,
            VmError::InvocationDenied { .. } | VmError::StubInvocation { .. } | VmError::ForbiddenOpcode { .. }
        )
    }

    /// Stable error class name, as used in corpus manifests and reports.
    pub fn class_name(&self) -> &'static str {
        match self {
            VmError::InvocationDenied { .. } => "InvocationDenied",
            VmError::StubInvocation { .. } => "StubInvocation",
            VmError::ForbiddenOpcode { .. } => "ForbiddenOpcode",
            VmError::StackUnderflow { .. } => "StackUnderflow",
            VmError::MemoMiss { .. } => "MemoMiss",
            VmError::DepthExceeded { .. } => "DepthExceeded",
            VmError::MemoExceeded { .. } => "MemoExceeded",
            VmError::Malformed { .. } => "Malformed",
        }
    }

    pub fn offset(&self) -> usize {
        match self {
            VmError::InvocationDenied { offset, .. }
            | VmError::StubInvocation { offset, .. }
            | VmError::ForbiddenOpcode { offset, .. }
            | VmError::StackUnderflow { offset, .. }
            | VmError::MemoMiss { offset, .. }
            | VmError::DepthExceeded { offset, .. }
            | VmError::MemoExceeded { offset, .. }
            | VmError::Malformed { offset, .. } => *offset,
        }
    }
}

/// A failed run together with everything it recorded before failing.
#[derive(Debug, Clone)]
pub struct VmFailure {
    pub error: VmError,
    pub trace: ExecutionTrace,
}

impl fmt::Display for VmFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for VmFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} stub(s) present: {}", .0.len(), .0.iter().map(|(p, n)| format!("{p} -> {n}")).collect::<Vec<_>>().join(", "))]
pub struct StubsPresent(pub Vec<(String, QualifiedName)>);

/// Strict-mode check: fails if the loaded graph contains any stub.
pub fn assert_no_stubs(outcome: &VmOutcome) -> Result<(), StubsPresent> {
    let stubs = outcome.list_stubs();
    if stubs.is_empty() {
        Ok(())
    } else {
        Err(StubsPresent(stubs))
    }
}

/// Runs `stream` under `config`.
pub fn execute(stream: &OpcodeStream, config: &VmConfig<'_>) -> Result<VmOutcome, VmFailure> {
    let start = Instant::now();
    let mut machine = Machine::new(config);
    let result = machine.run(&stream.opcodes);
    let mut trace = std::mem::take(&mut machine.trace);
    let mut stats = Stats { opcodes_executed: machine.executed, programs: 1, wall_time: Duration::ZERO };
    let root = match result {
        Ok(root) => root,
        Err(error) => return Err(VmFailure { error, trace }),
    };
    let mut graph = machine.graph;
    graph.set_root(root);

    if config.vet_trailing && stream.has_trailing() {
        let (programs, _unparsed) = stream.trailing_programs();
        for program in &programs {
            let mut m = Machine::new(config);
            let r = m.run(&program.opcodes);
            stats.opcodes_executed += m.executed;
            stats.programs += 1;
            trace.extend(std::mem::take(&mut m.trace));
            if let Err(error) = r {
                if error.is_security_violation() {
                    return Err(VmFailure { error, trace });
                }
            }
        }
    }
    stats.wall_time = start.elapsed();
    Ok(VmOutcome { graph, trace, stats })
}

/// Parses and runs raw pickle bytes.
pub fn execute_bytes(raw: &[u8], config: &VmConfig<'_>) -> Result<VmOutcome, LoadError> {
    let stream = crate::opcode::parse(raw)?;
    Ok(execute(&stream, config)?)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] crate::opcode::ParseError),
    #[error(transparent)]
    Vm(#[from] VmFailure),
}

struct Machine<'c, 'p> {
    config: &'c VmConfig<'p>,
    graph: ObjectGraph,
    stack: Vec<NodeId>,
    marks: Vec<usize>,
    memo: HashMap<i64, NodeId>,
    proto: u8,
    trace: ExecutionTrace,
    executed: usize,
}

enum Callee {
    Ref(QualifiedName),
    Stub(QualifiedName),
    Other(&'static str),
}

impl<'c, 'p> Machine<'c, 'p> {
    fn new(config: &'c VmConfig<'p>) -> Machine<'c, 'p> {
        Machine {
            config,
            graph: ObjectGraph::new(),
            stack: Vec::new(),
            marks: Vec::new(),
            memo: HashMap::new(),
            proto: 0,
            trace: ExecutionTrace::default(),
            executed: 0,
        }
    }

    fn run(&mut self, program: &[Opcode]) -> Result<NodeId, VmError> {
        for o in program {
            self.executed += 1;
            if let Some(root) = self.step(o)? {
                return Ok(root);
            }
        }
        // The parser guarantees a final STOP.
        Err(VmError::Malformed { op: Op::STOP, offset: 0, reason: "program has no STOP".into() })
    }

    fn floor(&self) -> usize {
        self.marks.last().copied().unwrap_or(0)
    }

    fn push(&mut self, o: &Opcode, id: NodeId) -> Result<(), VmError> {
        if self.stack.len() + self.marks.len() >= self.config.max_depth {
            return Err(VmError::DepthExceeded { limit: self.config.max_depth, offset: o.offset });
        }
        self.stack.push(id);
        Ok(())
    }

    fn push_value(&mut self, o: &Opcode, v: Value) -> Result<(), VmError> {
        let id = self.graph.add(v);
        self.push(o, id)
    }

    fn pop(&mut self, o: &Opcode) -> Result<NodeId, VmError> {
        if self.stack.len() > self.floor() {
            Ok(self.stack.pop().expect("non-empty above floor"))
        } else {
            Err(VmError::StackUnderflow { op: o.op, offset: o.offset })
        }
    }

    fn top(&self, o: &Opcode) -> Result<NodeId, VmError> {
        if self.stack.len() > self.floor() {
            Ok(*self.stack.last().expect("non-empty above floor"))
        } else {
            Err(VmError::StackUnderflow { op: o.op, offset: o.offset })
        }
    }

    fn pop_mark(&mut self, o: &Opcode) -> Result<Vec<NodeId>, VmError> {
        let at = self.marks.pop().ok_or(VmError::StackUnderflow { op: o.op, offset: o.offset })?;
        Ok(self.stack.split_off(at))
    }

    fn malformed(o: &Opcode, reason: impl Into<String>) -> VmError {
        VmError::Malformed { op: o.op, offset: o.offset, reason: reason.into() }
    }

    fn unhashable(o: &Opcode, e: Unhashable) -> VmError {
        Machine::malformed(o, e.to_string())
    }

    fn memo_put(&mut self, o: &Opcode, key: i64, id: NodeId) -> Result<(), VmError> {
        if key < 0 {
            return Err(Machine::malformed(o, "negative memo index"));
        }
        self.memo.insert(key, id);
        if self.memo.len() > self.config.max_memo {
            return Err(VmError::MemoExceeded { limit: self.config.max_memo, offset: o.offset });
        }
        Ok(())
    }

    fn restricted(&self) -> Option<&'p Policy> {
        match self.config.mode {
            Mode::Restricted(p) => Some(p),
            Mode::Unrestricted => None,
        }
    }

    fn import(&mut self, o: &Opcode, module: &str, name: &str) -> Result<(), VmError> {
        let (module, name) = if self.proto < 3 { compat::fix_import(module, name) } else { (module, name) };
        let qn = QualifiedName::new(module, name).map_err(|e| Machine::malformed(o, e.to_string()))?;
        let allowed = self.restricted().is_none_or(|p| p.allows_import(qn.as_str()));
        let event = Event { name: qn.clone(), offset: o.offset };
        let v = if allowed {
            self.trace.imports.push(event);
            Value::CallableRef(CallableRef { name: qn, state: None, owned_state: false, tainted: Vec::new() })
        } else {
            self.trace.stubs.push(event);
            Value::Stub(Stub { requested_name: qn, origin_offset: o.offset, touched: false })
        };
        self.push_value(o, v)
    }

    fn classify(&mut self, id: NodeId) -> Callee {
        match self.graph.get_mut(id) {
            Value::CallableRef(r) => Callee::Ref(r.name.clone()),
            Value::Stub(s) => {
                s.touched = true;
                Callee::Stub(s.requested_name.clone())
            }
            other => Callee::Other(other.kind()),
        }
    }

    fn call(&mut self, o: &Opcode, callee: NodeId, args: NodeId, kwargs: Option<NodeId>) -> Result<NodeId, VmError> {
        let invoking = o.op == Op::REDUCE;
        let name = match self.classify(callee) {
            Callee::Ref(n) => n,
            Callee::Stub(name) => return Err(VmError::StubInvocation { name, offset: o.offset }),
            Callee::Other(kind) => {
                return Err(match self.restricted() {
                    Some(_) => VmError::InvocationDenied { name: format!("<{kind}>"), offset: o.offset },
                    None => Machine::malformed(o, format!("{} on a {kind} value", o.op)),
                })
            }
        };
        if let Some(p) = self.restricted() {
            let ok = if invoking { p.allows_invocation(name.as_str()) } else { p.allows_import(name.as_str()) };
            if !ok {
                return Err(VmError::InvocationDenied { name: name.to_string(), offset: o.offset });
            }
        }
        let event = Event { name: name.clone(), offset: o.offset };
        if invoking {
            self.trace.invocations.push(event);
        } else {
            self.trace.allocations.push(event);
        }
        Ok(self.graph.add(Value::Instance(Instance {
            class_name: name,
            construction: if invoking { Construction::Reduced } else { Construction::Allocated },
            args,
            kwargs,
            state: None,
            owned_state: false,
            listitems: Vec::new(),
            dictitems: Vec::new(),
            tainted: Vec::new(),
        })))
    }

    fn build(&mut self, o: &Opcode, target: NodeId, state: NodeId) -> Result<(), VmError> {
        let is_ref = match self.classify(target) {
            Callee::Ref(_) => true,
            Callee::Stub(name) => return Err(VmError::StubInvocation { name, offset: o.offset }),
            Callee::Other(_) => {
                if !matches!(self.graph.get(target), Value::Instance(_)) {
                    return Err(Machine::malformed(o, format!("BUILD on a {} value", self.graph.get(target).kind())));
                }
                false
            }
        };
        let parts: Vec<NodeId> = match self.graph.get(state) {
            Value::None => return Ok(()),
            Value::Dict(_) => vec![state],
            Value::Tuple(items)
                if items.len() == 2 && items.iter().all(|&p| matches!(self.graph.get(p), Value::None | Value::Dict(_))) =>
            {
                items.iter().copied().filter(|&p| matches!(self.graph.get(p), Value::Dict(_))).collect()
            }
            _ => {
                let (slot, owned) = self.state_slot(target);
                *slot = Some(state);
                *owned = false;
                return Ok(());
            }
        };
        if parts.is_empty() {
            return Ok(());
        }
        let protect = is_ref && self.restricted().is_some();
        let mut entries = Vec::new();
        let mut tainted = Vec::new();
        for part in parts {
            let Value::Dict(d) = self.graph.get(part) else { unreachable!() };
            for (k, v) in d.iter() {
                let blocked = protect
                    && matches!(self.graph.get(k), Value::Str(s) if PROTECTED_ATTRIBUTES.contains(&s.as_str()));
                if blocked {
                    let Value::Str(s) = self.graph.get(k) else { unreachable!() };
                    tainted.push(s.clone());
                } else {
                    entries.push((k, v));
                }
            }
        }
        let existing = {
            let (slot, owned) = self.state_slot(target);
            if *owned {
                *slot
            } else {
                None
            }
        };
        let dict = match existing {
            Some(d) => d,
            None => {
                let fresh = self.graph.add(Value::Dict(Dict::default()));
                let (slot, owned) = self.state_slot(target);
                *slot = Some(fresh);
                *owned = true;
                fresh
            }
        };
        for (k, v) in entries {
            self.graph.dict_insert(dict, k, v).map_err(|e| Machine::unhashable(o, e))?;
        }
        if !tainted.is_empty() {
            let name = match self.graph.get(target) {
                Value::CallableRef(r) => r.name.clone(),
                _ => unreachable!(),
            };
            for attr in &tainted {
                self.trace.tainted_builds.push(TaintedBuild {
                    target: name.clone(),
                    attribute: attr.clone(),
                    offset: o.offset,
                });
            }
            if let Value::CallableRef(r) = self.graph.get_mut(target) {
                for attr in tainted {
                    if !r.tainted.contains(&attr) {
                        r.tainted.push(attr);
                    }
                }
            }
        }
        Ok(())
    }

    fn state_slot(&mut self, target: NodeId) -> (&mut Option<NodeId>, &mut bool) {
        match self.graph.get_mut(target) {
            Value::CallableRef(r) => (&mut r.state, &mut r.owned_state),
            Value::Instance(i) => (&mut i.state, &mut i.owned_state),
            _ => unreachable!("BUILD target checked"),
        }
    }

    fn stub_target(&mut self, o: &Opcode, target: NodeId) -> Result<(), VmError> {
        if let Callee::Stub(name) = self.classify(target) {
            return Err(VmError::StubInvocation { name, offset: o.offset });
        }
        Ok(())
    }

    fn extend(&mut self, o: &Opcode, target: NodeId, items: Vec<NodeId>) -> Result<(), VmError> {
        self.stub_target(o, target)?;
        match self.graph.get_mut(target) {
            Value::List(l) => l.extend(items),
            Value::Instance(i) => i.listitems.extend(items),
            other => return Err(Machine::malformed(o, format!("{} on a {} value", o.op, other.kind()))),
        }
        Ok(())
    }

    fn set_items(&mut self, o: &Opcode, target: NodeId, pairs: Vec<(NodeId, NodeId)>) -> Result<(), VmError> {
        self.stub_target(o, target)?;
        match self.graph.get_mut(target) {
            Value::Dict(_) => {
                for (k, v) in pairs {
                    self.graph.dict_insert(target, k, v).map_err(|e| Machine::unhashable(o, e))?;
                }
            }
            Value::Instance(i) => i.dictitems.extend(pairs),
            other => return Err(Machine::malformed(o, format!("{} on a {} value", o.op, other.kind()))),
        }
        Ok(())
    }

    fn text_arg(o: &Opcode) -> Result<&str, VmError> {
        match &o.arg {
            Arg::Str(s) => Ok(s),
            _ => Err(Machine::malformed(o, "argument is not valid text")),
        }
    }

    fn int_arg(o: &Opcode) -> Result<i64, VmError> {
        match &o.arg {
            Arg::Int(i) => Ok(*i),
            Arg::Bool(b) => Ok(*b as i64),
            _ => Err(Machine::malformed(o, "memo index out of range")),
        }
    }

    fn step(&mut self, o: &Opcode) -> Result<Option<NodeId>, VmError> {
        match o.op {
            Op::PROTO => {
                if let Arg::Int(v) = o.arg {
                    self.proto = v as u8;
                }
            }
            Op::FRAME => {}
            Op::STOP => return self.pop(o).map(Some),
            Op::MARK => {
                if self.stack.len() + self.marks.len() >= self.config.max_depth {
                    return Err(VmError::DepthExceeded { limit: self.config.max_depth, offset: o.offset });
                }
                self.marks.push(self.stack.len());
            }
            Op::POP => {
                if self.stack.len() > self.floor() {
                    self.stack.pop();
                } else {
                    self.pop_mark(o)?;
                }
            }
            Op::POP_MARK => {
                self.pop_mark(o)?;
            }
            Op::DUP => {
                let t = self.top(o)?;
                self.push(o, t)?;
            }

            Op::NONE => self.push_value(o, Value::None)?,
            Op::NEWTRUE => self.push_value(o, Value::Bool(true))?,
            Op::NEWFALSE => self.push_value(o, Value::Bool(false))?,
            Op::INT | Op::BININT | Op::BININT1 | Op::BININT2 | Op::LONG | Op::LONG1 | Op::LONG4 => {
                let v = match &o.arg {
                    Arg::Int(i) => Value::Int(*i),
                    Arg::Long(b) => Value::BigInt(b.clone()),
                    Arg::Bool(b) => Value::Bool(*b),
                    _ => return Err(Machine::malformed(o, "integer argument expected")),
                };
                self.push_value(o, v)?;
            }
            Op::FLOAT | Op::BINFLOAT => {
                let Arg::Float(f) = o.arg else { return Err(Machine::malformed(o, "float argument expected")) };
                self.push_value(o, Value::Float(f))?;
            }
            Op::STRING | Op::BINSTRING | Op::SHORT_BINSTRING => {
                // Python 2 str objects decode as ASCII text.
                let raw = match &o.arg {
                    Arg::Bytes(b) => b,
                    _ => return Err(Machine::malformed(o, "string argument expected")),
                };
                if !raw.is_ascii() {
                    return Err(Machine::malformed(o, "non-ASCII byte in a protocol 0-2 string"));
                }
                let s = String::from_utf8(raw.clone()).expect("ascii is utf-8");
                self.push_value(o, Value::Str(s))?;
            }
            Op::UNICODE | Op::BINUNICODE | Op::SHORT_BINUNICODE | Op::BINUNICODE8 => {
                let s = Machine::text_arg(o)?.to_string();
                self.push_value(o, Value::Str(s))?;
            }
            Op::BINBYTES | Op::SHORT_BINBYTES | Op::BINBYTES8 => {
                let Arg::Bytes(b) = &o.arg else { return Err(Machine::malformed(o, "bytes argument expected")) };
                self.push_value(o, Value::Bytes(b.clone()))?;
            }
            Op::BYTEARRAY8 => {
                let Arg::Bytes(b) = &o.arg else { return Err(Machine::malformed(o, "bytes argument expected")) };
                self.push_value(o, Value::ByteArray(b.clone()))?;
            }
            Op::NEXT_BUFFER => return Err(Machine::malformed(o, "out-of-band buffers are not supported")),
            Op::READONLY_BUFFER => {
                let t = self.top(o)?;
                if !matches!(self.graph.get(t), Value::Bytes(_)) {
                    return Err(Machine::malformed(o, "READONLY_BUFFER only supported on bytes"));
                }
            }

            Op::EMPTY_TUPLE => self.push_value(o, Value::Tuple(Vec::new()))?,
            Op::TUPLE1 | Op::TUPLE2 | Op::TUPLE3 => {
                let n = match o.op {
                    Op::TUPLE1 => 1,
                    Op::TUPLE2 => 2,
                    _ => 3,
                };
                if self.stack.len() < self.floor() + n {
                    return Err(VmError::StackUnderflow { op: o.op, offset: o.offset });
                }
                let items = self.stack.split_off(self.stack.len() - n);
                self.push_value(o, Value::Tuple(items))?;
            }
            Op::TUPLE => {
                let items = self.pop_mark(o)?;
                self.push_value(o, Value::Tuple(items))?;
            }
            Op::EMPTY_LIST => self.push_value(o, Value::List(Vec::new()))?,
            Op::LIST => {
                let items = self.pop_mark(o)?;
                self.push_value(o, Value::List(items))?;
            }
            Op::EMPTY_DICT => self.push_value(o, Value::Dict(Dict::default()))?,
            Op::DICT => {
                let items = self.pop_mark(o)?;
                if items.len() % 2 != 0 {
                    return Err(Machine::malformed(o, "odd number of items for DICT"));
                }
                let d = self.graph.add(Value::Dict(Dict::default()));
                for pair in items.chunks(2) {
                    self.graph.dict_insert(d, pair[0], pair[1]).map_err(|e| Machine::unhashable(o, e))?;
                }
                self.push(o, d)?;
            }
            Op::EMPTY_SET => self.push_value(o, Value::Set(SetValue::default()))?,
            Op::FROZENSET => {
                let items = self.pop_mark(o)?;
                let s = self.graph.add(Value::FrozenSet(SetValue::default()));
                for e in items {
                    self.graph.set_add(s, e).map_err(|e| Machine::unhashable(o, e))?;
                }
                self.push(o, s)?;
            }
            Op::APPEND => {
                let v = self.pop(o)?;
                let t = self.top(o)?;
                self.extend(o, t, vec![v])?;
            }
            Op::APPENDS => {
                let items = self.pop_mark(o)?;
                let t = self.top(o)?;
                self.extend(o, t, items)?;
            }
            Op::SETITEM => {
                let v = self.pop(o)?;
                let k = self.pop(o)?;
                let t = self.top(o)?;
                self.set_items(o, t, vec![(k, v)])?;
            }
            Op::SETITEMS => {
                let items = self.pop_mark(o)?;
                if items.len() % 2 != 0 {
                    return Err(Machine::malformed(o, "odd number of items for SETITEMS"));
                }
                let t = self.top(o)?;
                let pairs = items.chunks(2).map(|p| (p[0], p[1])).collect();
                self.set_items(o, t, pairs)?;
            }
            Op::ADDITEMS => {
                let items = self.pop_mark(o)?;
                let t = self.top(o)?;
                self.stub_target(o, t)?;
                if !matches!(self.graph.get(t), Value::Set(_)) {
                    return Err(Machine::malformed(o, format!("ADDITEMS on a {} value", self.graph.get(t).kind())));
                }
                for e in items {
                    self.graph.set_add(t, e).map_err(|e| Machine::unhashable(o, e))?;
                }
            }

            Op::PUT | Op::BINPUT | Op::LONG_BINPUT => {
                let key = Machine::int_arg(o)?;
                let t = self.top(o)?;
                self.memo_put(o, key, t)?;
            }
            Op::MEMOIZE => {
                let t = self.top(o)?;
                let key = self.memo.len() as i64;
                self.memo_put(o, key, t)?;
            }
            Op::GET | Op::BINGET | Op::LONG_BINGET => {
                let key = match &o.arg {
                    Arg::Int(i) => Some(*i),
                    Arg::Bool(b) => Some(*b as i64),
                    _ => None,
                };
                match key.and_then(|k| self.memo.get(&k).copied()) {
                    Some(id) => self.push(o, id)?,
                    None => {
                        let key = match &o.arg {
                            Arg::Long(b) => b.to_string(),
                            _ => key.map(|k| k.to_string()).unwrap_or_default(),
                        };
                        return Err(VmError::MemoMiss { key, offset: o.offset });
                    }
                }
            }

            Op::PERSID => {
                let pid = Machine::text_arg(o)?;
                if !pid.is_ascii() {
                    return Err(Machine::malformed(o, "persistent id is not ASCII"));
                }
                let pid = self.graph.add(Value::Str(pid.to_string()));
                self.push_value(o, Value::PersistentRef(pid))?;
            }
            Op::BINPERSID => {
                let pid = self.pop(o)?;
                self.push_value(o, Value::PersistentRef(pid))?;
            }

            Op::GLOBAL => {
                let Arg::Global { module, name } = &o.arg else {
                    return Err(Machine::malformed(o, "GLOBAL operands are not valid UTF-8"));
                };
                self.import(o, module, name)?;
            }
            Op::STACK_GLOBAL => {
                let name = self.pop(o)?;
                let module = self.pop(o)?;
                let (Value::Str(m), Value::Str(n)) = (self.graph.get(module), self.graph.get(name)) else {
                    return Err(Machine::malformed(o, "STACK_GLOBAL requires str operands"));
                };
                let (m, n) = (m.clone(), n.clone());
                self.import(o, &m, &n)?;
            }
            Op::REDUCE => {
                let args = self.pop(o)?;
                let callee = self.top(o)?;
                let inst = self.call(o, callee, args, None)?;
                *self.stack.last_mut().expect("top exists") = inst;
            }
            Op::NEWOBJ => {
                let args = self.pop(o)?;
                let cls = self.pop(o)?;
                let inst = self.call(o, cls, args, None)?;
                self.push(o, inst)?;
            }
            Op::NEWOBJ_EX => {
                let kwargs = self.pop(o)?;
                let args = self.pop(o)?;
                let cls = self.pop(o)?;
                let inst = self.call(o, cls, args, Some(kwargs))?;
                self.push(o, inst)?;
            }
            Op::BUILD => {
                let state = self.pop(o)?;
                let target = self.top(o)?;
                self.build(o, target, state)?;
            }

            Op::INST | Op::OBJ | Op::EXT1 | Op::EXT2 | Op::EXT4 => {
                debug_assert_eq!(o.class(), OpcodeClass::Forbidden);
                return Err(VmError::ForbiddenOpcode { op: o.op, offset: o.offset });
            }
        }
        Ok(None)
    }
}

/// Checks the graph-level enforcement invariant: every allocated instance's
/// class is importable and every reduced instance's callable is invocable.
pub fn graph_respects_policy(graph: &ObjectGraph, policy: &Policy) -> bool {
    graph.nodes().all(|(_, v)| match v {
        Value::Instance(i) => match i.construction {
            Construction::Allocated => policy.allows_import(i.class_name.as_str()),
            Construction::Reduced => policy.allows_invocation(i.class_name.as_str()),
        },
        Value::CallableRef(r) => policy.allows_import(r.name.as_str()),
        _ => true,
    })
}

/// Convenience for small integer values in tests and reports.
pub fn int_value(v: &Value) -> Option<BigInt> {
    match v {
        Value::Int(i) => Some(BigInt::from(*i)),
        Value::BigInt(b) => Some(b.clone()),
        Value::Bool(b) => Some(BigInt::from(*b as u8)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name::qn;
    use crate::opcode::parse;

    fn run(raw: &[u8], config: &VmConfig<'_>) -> Result<VmOutcome, VmFailure> {
        execute(&parse(raw).unwrap(), config)
    }

    fn body(o: &VmOutcome) -> String {
        o.canonical_dump().lines().nth(1).unwrap().to_string()
    }

    #[test]
    fn data_values() {
        let out = run(b"\x80\x04\x95\x0b\x00\x00\x00\x00\x00\x00\x00(K\x01\x8c\x01a\x94h\x00t.", &VmConfig::unrestricted()).unwrap();
        assert_eq!(body(&out), r#"["tuple",[1,"a","a"]]"#);
    }

    #[test]
    fn global_reduce_is_recorded_not_run() {
        let raw = b"cos\nsystem\n(S'echo hi'\ntR.";
        let out = run(raw, &VmConfig::unrestricted()).unwrap();
        assert_eq!(body(&out), r#"["obj","reduce","os.system",["tuple",["echo hi"]],{}]"#);
        assert_eq!(out.trace.invocations, vec![Event { name: qn("os.system"), offset: 24 }]);

        let empty = Policy::empty();
        let err = run(raw, &VmConfig::restricted(&empty)).unwrap_err();
        assert_eq!(err.error, VmError::StubInvocation { name: qn("os.system"), offset: 24 });
        assert!(err.trace.invocations.is_empty());
    }

    #[test]
    fn unused_stub_loads() {
        let raw = b"\x80\x02]q\x00cos\nsystem\nq\x01a.";
        let empty = Policy::empty();
        let out = run(raw, &VmConfig::restricted(&empty)).unwrap();
        assert_eq!(out.list_stubs(), vec![("[0]".to_string(), qn("os.system"))]);
        assert!(assert_no_stubs(&out).is_err());
    }

    #[test]
    fn python2_names_are_mapped() {
        let raw = b"\x80\x02c__builtin__\nset\n]\x85R.";
        let out = run(raw, &VmConfig::unrestricted()).unwrap();
        assert_eq!(out.trace.imports[0].name, qn("builtins.set"));
        let raw3 = b"\x80\x03c__builtin__\nset\n]\x85R.";
        let out = run(raw3, &VmConfig::unrestricted()).unwrap();
        assert_eq!(out.trace.imports[0].name, qn("__builtin__.set"));
    }

    #[test]
    fn import_only_names_cannot_be_called() {
        let p = Policy::from_sets([qn("pkg.C")], []).unwrap();
        let raw = b"\x80\x02cpkg\nC\n)R.";
        let err = run(raw, &VmConfig::restricted(&p)).unwrap_err();
        assert_eq!(err.error, VmError::InvocationDenied { name: "pkg.C".into(), offset: 10 });
        let newobj = b"\x80\x02cpkg\nC\n)\x81.";
        assert!(run(newobj, &VmConfig::restricted(&p)).is_ok());
    }

    #[test]
    fn renaming_a_callable_is_refused() {
        // pkg.C with state {'__name__': 'system', '__module__': 'os', 'x': 1}
        let raw = b"\x80\x02cpkg\nC\n}(X\x08\x00\x00\x00__name__X\x06\x00\x00\x00systemX\n\x00\x00\x00__module__X\x02\x00\x00\x00osX\x01\x00\x00\x00xK\x01ub.";
        let p = Policy::from_sets([qn("pkg.C")], []).unwrap();
        let out = run(raw, &VmConfig::restricted(&p)).unwrap();
        assert_eq!(body(&out), r#"["ref","pkg.C",{"state":["dict",[["x",1]]],"tainted":["__module__","__name__"]}]"#);
        assert_eq!(out.trace.tainted_builds.len(), 2);
        let open = run(raw, &VmConfig::unrestricted()).unwrap();
        assert!(body(&open).contains("__name__"));
    }

    #[test]
    fn build_merges_dict_states() {
        let raw = b"\x80\x02cpkg\nC\n)\x81}X\x01\x00\x00\x00aK\x01sbN}X\x01\x00\x00\x00bK\x02s\x86b.";
        let out = run(raw, &VmConfig::unrestricted()).unwrap();
        assert_eq!(body(&out), r#"["obj","new","pkg.C",["tuple",[]],{"state":["dict",[["a",1],["b",2]]]}]"#);
    }

    #[test]
    fn forbidden_opcodes_fail_in_both_modes() {
        let raw = b"(ios\nsystem\n.";
        let empty = Policy::empty();
        for cfg in [VmConfig::unrestricted(), VmConfig::restricted(&empty)] {
            let err = run(raw, &cfg).unwrap_err();
            assert_eq!(err.error.class_name(), "ForbiddenOpcode");
            assert!(err.error.is_security_violation());
        }
    }

    #[test]
    fn trailing_programs_are_vetted() {
        let raw = b"\x80\x02N.cos\nsystem\n(S'x'\ntR.";
        let empty = Policy::empty();
        let err = run(raw, &VmConfig::restricted(&empty)).unwrap_err();
        assert_eq!(err.error.class_name(), "StubInvocation");
        assert_eq!(err.error.offset(), 22);
        let mut lax = VmConfig::restricted(&empty);
        lax.vet_trailing = false;
        assert!(run(raw, &lax).is_ok());
    }

    #[test]
    fn machine_errors() {
        let u = VmConfig::unrestricted();
        assert_eq!(run(b"0N.", &u).unwrap_err().error.class_name(), "StackUnderflow");
        assert_eq!(run(b"(N0t.", &u).unwrap().canonical_dump().lines().nth(1), Some(r#"["tuple",[]]"#));
        assert_eq!(run(b"g5\n.", &u).unwrap_err().error.class_name(), "MemoMiss");
        assert_eq!(run(b"(]]d.", &u).unwrap_err().error.class_name(), "Malformed");
        let mut tight = VmConfig::unrestricted();
        tight.max_depth = 3;
        assert_eq!(run(b"NNNN0000N.", &tight).unwrap_err().error.class_name(), "DepthExceeded");
        tight.max_depth = 100;
        tight.max_memo = 1;
        assert_eq!(run(b"Np0\np1\n.", &tight).unwrap_err().error.class_name(), "MemoExceeded");
    }

    #[test]
    fn mark_hides_lower_stack() {
        // APPEND inside a MARK segment cannot see the list below the mark.
        let raw = b"](Na.";
        assert_eq!(run(raw, &VmConfig::unrestricted()).unwrap_err().error.class_name(), "StackUnderflow");
    }
}
