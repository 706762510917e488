//! Language-neutral value graph built by the VM, its canonical dump, and
//! stub enumeration.
//!
//! Nodes live in an arena and refer to each other by [`NodeId`]; node
//! identity stands in for Python object identity, so memoized values are
//! shared and cycles are plain back-edges.
//!
//! Dump grammar (one document = header line, body, newline):
//!
//! ```text
//! value  := null | true | false | <int> | <json string>
//!         | ["float","<shortest repr>"] | ["bytes","<hex>"] | ["bytearray","<hex>"]
//!         | ["tuple",[value,..]] | ["list",[value,..]] | ["dict",[[value,value],..]]
//!         | ["set",[value,..]] | ["frozenset",[value,..]]        (elements sorted by dump text)
//!         | ["ref","<name>"] | ["ref","<name>",{"state":value,"tainted":[..]}]
//!         | ["obj","new"|"reduce","<class>",value,{"kwargs":..,"state":..,"listitems":[..],"dictitems":[[k,v],..],"tainted":[..]}]
//!         | ["persid",value] | ["stub","<name>"]
//!         | ["def",N,value] | ["use",N]
//! ```
//!
//! `def`/`use` label shared containers and instances: a node gets a label
//! when it has two or more incoming edges (the root counts one extra), and
//! labels are numbered in rendering order.

use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use num_bigint::BigInt;
use num_traits::{FromPrimitive, ToPrimitive, Zero};

use crate::name::QualifiedName;
use crate::text::float_text;

pub const DUMP_HEADER: &str = "pickleward-dump v1";

/// Tuple keys nested deeper than this are rejected instead of hashed.
const MAX_KEY_DEPTH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// Made by `cls.__new__(cls, *args)` (NEWOBJ, NEWOBJ_EX).
    Allocated,
    /// Made by calling a callable with an argument tuple (REDUCE).
    Reduced,
}

impl Construction {
    fn tag(self) -> &'static str {
        match self {
            Construction::Allocated => "new",
            Construction::Reduced => "reduce",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallableRef {
    pub name: QualifiedName,
    pub state: Option<NodeId>,
    pub owned_state: bool,
    /// Attribute names whose BUILD writes were refused.
    pub tainted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub class_name: QualifiedName,
    pub construction: Construction,
    pub args: NodeId,
    pub kwargs: Option<NodeId>,
    pub state: Option<NodeId>,
    pub owned_state: bool,
    pub listitems: Vec<NodeId>,
    pub dictitems: Vec<(NodeId, NodeId)>,
    pub tainted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stub {
    pub requested_name: QualifiedName,
    pub origin_offset: usize,
    pub touched: bool,
}

/// Hash identity of a dict key or set element under Python equality:
/// `1 == 1.0 == True`, tuples and frozensets compare by content, callables by
/// name, everything else by object identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyRepr {
    None,
    Int(BigInt),
    Float(u64),
    Bytes(Vec<u8>),
    Str(String),
    Tuple(Vec<KeyRepr>),
    FrozenSet(Vec<KeyRepr>),
    Ref(String),
    Identity(NodeId),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dict {
    entries: IndexMap<KeyRepr, (NodeId, NodeId)>,
}

impl Dict {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.entries.values().copied()
    }

    pub fn get_by_repr(&self, key: &KeyRepr) -> Option<NodeId> {
        self.entries.get(key).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SetValue {
    elements: IndexMap<KeyRepr, NodeId>,
}

impl SetValue {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.elements.values().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    BigInt(BigInt),
    Float(f64),
    Bytes(Vec<u8>),
    ByteArray(Vec<u8>),
    Str(String),
    Tuple(Vec<NodeId>),
    List(Vec<NodeId>),
    Dict(Dict),
    Set(SetValue),
    FrozenSet(SetValue),
    CallableRef(CallableRef),
    Instance(Instance),
    PersistentRef(NodeId),
    Stub(Stub),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::None => "None",
            Value::Bool(_) => "Bool",
            Value::Int(_) | Value::BigInt(_) => "Int",
            Value::Float(_) => "Float",
            Value::Bytes(_) | Value::ByteArray(_) => "Bytes",
            Value::Str(_) => "String",
            Value::Tuple(_) => "Tuple",
            Value::List(_) => "List",
            Value::Dict(_) => "Dict",
            Value::Set(_) => "Set",
            Value::FrozenSet(_) => "FrozenSet",
            Value::CallableRef(_) => "CallableRef",
            Value::Instance(_) => "OpaqueInstance",
            Value::PersistentRef(_) => "PersistentRef",
            Value::Stub(_) => "Stub",
        }
    }

    fn labelable(&self) -> bool {
        match self {
            Value::List(_) | Value::Dict(_) | Value::Set(_) | Value::Instance(_) => true,
            Value::Tuple(t) => !t.is_empty(),
            Value::FrozenSet(s) => !s.is_empty(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unhashable {kind} used as a dict key or set element")]
pub struct Unhashable {
    pub kind: &'static str,
}

/// Arena of values with a distinguished root.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectGraph {
    nodes: Vec<Value>,
    root: Option<NodeId>,
}

impl ObjectGraph {
    pub fn new() -> ObjectGraph {
        ObjectGraph::default()
    }

    pub fn add(&mut self, v: Value) -> NodeId {
        let id = NodeId(u32::try_from(self.nodes.len()).expect("graph exceeds u32 nodes"));
        self.nodes.push(v);
        id
    }

    pub fn get(&self, id: NodeId) -> &Value {
        &self.nodes[id.index()]
    }

    pub fn get_mut(&mut self, id: NodeId) -> &mut Value {
        &mut self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn set_root(&mut self, id: NodeId) {
        self.root = Some(id);
    }

    /// The root value. Panics on a graph that never had one set.
    pub fn root(&self) -> NodeId {
        self.root.expect("graph has no root")
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Value)> {
        self.nodes.iter().enumerate().map(|(i, v)| (NodeId(i as u32), v))
    }

    pub fn key_repr(&self, id: NodeId) -> Result<KeyRepr, Unhashable> {
        self.key_repr_at(id, 0)
    }

    fn key_repr_at(&self, id: NodeId, depth: usize) -> Result<KeyRepr, Unhashable> {
        if depth > MAX_KEY_DEPTH {
            return Err(Unhashable { kind: "deeply nested Tuple" });
        }
        Ok(match self.get(id) {
            Value::None => KeyRepr::None,
            Value::Bool(b) => KeyRepr::Int(BigInt::from(*b as u8)),
            Value::Int(i) => KeyRepr::Int(BigInt::from(*i)),
            Value::BigInt(i) => KeyRepr::Int(i.clone()),
            Value::Float(f) => {
                if f.is_nan() {
                    KeyRepr::Identity(id)
                } else if f.is_finite() && f.fract() == 0.0 {
                    KeyRepr::Int(BigInt::from_f64(*f).unwrap_or_else(BigInt::zero))
                } else {
                    KeyRepr::Float(f.to_bits())
                }
            }
            Value::Bytes(b) => KeyRepr::Bytes(b.clone()),
            Value::Str(s) => KeyRepr::Str(s.clone()),
            Value::Tuple(items) => {
                KeyRepr::Tuple(items.iter().map(|&c| self.key_repr_at(c, depth + 1)).collect::<Result<_, _>>()?)
            }
            Value::FrozenSet(s) => {
                let mut keys: Vec<KeyRepr> = s.elements.keys().cloned().collect();
                keys.sort();
                KeyRepr::FrozenSet(keys)
            }
            Value::CallableRef(r) => KeyRepr::Ref(r.name.as_str().to_string()),
            Value::Instance(_) | Value::PersistentRef(_) | Value::Stub(_) => KeyRepr::Identity(id),
            other @ (Value::List(_) | Value::Dict(_) | Value::Set(_) | Value::ByteArray(_)) => {
                return Err(Unhashable { kind: other.kind() })
            }
        })
    }

    /// `d[key] = value` with Python semantics: an equal existing key keeps its
    /// position and its original key object; only the value changes.
    pub fn dict_insert(&mut self, dict: NodeId, key: NodeId, value: NodeId) -> Result<(), Unhashable> {
        let repr = self.key_repr(key)?;
        let Value::Dict(d) = self.get_mut(dict) else {
            panic!("dict_insert on a non-dict node");
        };
        d.entries.entry(repr).and_modify(|e| e.1 = value).or_insert((key, value));
        Ok(())
    }

    pub fn set_add(&mut self, set: NodeId, elem: NodeId) -> Result<(), Unhashable> {
        let repr = self.key_repr(elem)?;
        match self.get_mut(set) {
            Value::Set(s) | Value::FrozenSet(s) => {
                s.elements.entry(repr).or_insert(elem);
            }
            _ => panic!("set_add on a non-set node"),
        }
        Ok(())
    }

    /// Looks up a string key in a dict node.
    pub fn dict_get_str(&self, dict: NodeId, key: &str) -> Option<NodeId> {
        match self.get(dict) {
            Value::Dict(d) => d.get_by_repr(&KeyRepr::Str(key.to_string())),
            _ => None,
        }
    }

    /// Outgoing edges, in rendering order.
    pub fn children(&self, id: NodeId, out: &mut Vec<NodeId>) {
        match self.get(id) {
            Value::Tuple(items) | Value::List(items) => out.extend_from_slice(items),
            Value::Dict(d) => {
                for (k, v) in d.iter() {
                    out.push(k);
                    out.push(v);
                }
            }
            Value::Set(s) | Value::FrozenSet(s) => out.extend(s.iter()),
            Value::CallableRef(r) => out.extend(r.state),
            Value::Instance(inst) => {
                out.push(inst.args);
                out.extend(inst.kwargs);
                out.extend(inst.state);
                out.extend_from_slice(&inst.listitems);
                for &(k, v) in &inst.dictitems {
                    out.push(k);
                    out.push(v);
                }
            }
            Value::PersistentRef(pid) => out.push(*pid),
            _ => {}
        }
    }

    fn indegrees(&self, root: NodeId) -> Vec<u32> {
        let mut counts = vec![0u32; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        counts[root.index()] += 1;
        seen[root.index()] = true;
        let mut stack = vec![root];
        let mut kids = Vec::new();
        while let Some(n) = stack.pop() {
            kids.clear();
            self.children(n, &mut kids);
            for &c in &kids {
                counts[c.index()] += 1;
                if !seen[c.index()] {
                    seen[c.index()] = true;
                    stack.push(c);
                }
            }
        }
        counts
    }

    /// Canonical dump document of the whole graph.
    pub fn canonical_dump(&self) -> String {
        self.dump_from(self.root())
    }

    /// Canonical dump document rooted at `root`.
    pub fn dump_from(&self, root: NodeId) -> String {
        let counts = self.indegrees(root);
        let mut out = String::with_capacity(64);
        out.push_str(DUMP_HEADER);
        out.push('\n');
        Renderer::new(self, &counts).render(root, &mut out);
        out.push('\n');
        out
    }

    /// Dump body (no header) of a single node, labelled as if it were a root.
    pub fn dump_value(&self, id: NodeId) -> String {
        let counts = self.indegrees(id);
        let mut out = String::new();
        Renderer::new(self, &counts).render(id, &mut out);
        out
    }

    /// Set elements in canonical (dump-text) order.
    fn sorted_elements(&self, set: &SetValue, counts: &[u32]) -> Vec<NodeId> {
        let mut keyed: Vec<(String, NodeId)> = set
            .iter()
            .map(|e| {
                let mut s = String::new();
                Renderer::new(self, counts).render(e, &mut s);
                (s, e)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.into_iter().map(|(_, e)| e).collect()
    }

    /// Every distinct stub reachable from the root, with the first path that
    /// reaches it in rendering order.
    pub fn list_stubs(&self) -> Vec<(String, QualifiedName)> {
        match self.root {
            Some(root) => self.list_stubs_from(root),
            None => Vec::new(),
        }
    }

    pub fn list_stubs_from(&self, root: NodeId) -> Vec<(String, QualifiedName)> {
        if !self.nodes.iter().any(|v| matches!(v, Value::Stub(_))) {
            return Vec::new();
        }
        let counts = self.indegrees(root);
        let mut crumbs: Vec<(usize, Segment)> = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut found = Vec::new();
        let mut stack: Vec<(NodeId, usize)> = vec![(root, usize::MAX)];
        while let Some((n, crumb)) = stack.pop() {
            if seen[n.index()] {
                continue;
            }
            seen[n.index()] = true;
            let mut children: Vec<(NodeId, Segment)> = Vec::new();
            match self.get(n) {
                Value::Stub(s) => {
                    found.push((self.path_text(&crumbs, crumb, &counts), s.requested_name.clone()));
                }
                Value::Tuple(items) | Value::List(items) => {
                    children.extend(items.iter().enumerate().map(|(i, &c)| (c, Segment::Index(i))));
                }
                Value::Dict(d) => {
                    for (i, (k, v)) in d.iter().enumerate() {
                        children.push((k, Segment::KeyOf(i)));
                        children.push((v, Segment::Key(k)));
                    }
                }
                Value::Set(s) | Value::FrozenSet(s) => {
                    let sorted = self.sorted_elements(s, &counts);
                    children.extend(sorted.into_iter().enumerate().map(|(i, c)| (c, Segment::Element(i))));
                }
                Value::CallableRef(r) => children.extend(r.state.map(|s| (s, Segment::Field("state")))),
                Value::Instance(inst) => {
                    children.push((inst.args, Segment::Field("args")));
                    children.extend(inst.kwargs.map(|c| (c, Segment::Field("kwargs"))));
                    children.extend(inst.state.map(|c| (c, Segment::Field("state"))));
                    for (i, &c) in inst.listitems.iter().enumerate() {
                        children.push((c, Segment::ListItem(i)));
                    }
                    for (i, &(k, v)) in inst.dictitems.iter().enumerate() {
                        children.push((k, Segment::DictItemKeyOf(i)));
                        children.push((v, Segment::DictItem(k)));
                    }
                }
                Value::PersistentRef(pid) => children.push((*pid, Segment::Field("pid"))),
                _ => {}
            }
            for (c, seg) in children.into_iter().rev() {
                crumbs.push((crumb, seg));
                stack.push((c, crumbs.len() - 1));
            }
        }
        found
    }

    fn path_text(&self, crumbs: &[(usize, Segment)], mut at: usize, counts: &[u32]) -> String {
        let mut parts = Vec::new();
        while at != usize::MAX {
            let (parent, seg) = &crumbs[at];
            parts.push(seg);
            at = *parent;
        }
        let mut out = String::new();
        for seg in parts.into_iter().rev() {
            match seg {
                Segment::Index(i) => {
                    let _ = write!(out, "[{i}]");
                }
                Segment::KeyOf(i) => {
                    let _ = write!(out, ".key({i})");
                }
                Segment::Key(k) => out.push_str(&self.key_path(*k, counts)),
                Segment::Element(i) => {
                    let _ = write!(out, "{{{i}}}");
                }
                Segment::Field(f) => {
                    out.push('.');
                    out.push_str(f);
                }
                Segment::ListItem(i) => {
                    let _ = write!(out, ".listitems[{i}]");
                }
                Segment::DictItemKeyOf(i) => {
                    let _ = write!(out, ".dictitems.key({i})");
                }
                Segment::DictItem(k) => {
                    out.push_str(".dictitems");
                    out.push_str(&self.key_path(*k, counts));
                }
            }
        }
        if out.is_empty() {
            out.push_str("<root>");
        }
        out
    }

    fn key_path(&self, k: NodeId, counts: &[u32]) -> String {
        match self.get(k) {
            Value::Str(s) => format!("['{}']", s.replace('\\', "\\\\").replace('\'', "\\'")),
            Value::Int(i) => format!("[{i}]"),
            Value::BigInt(i) => format!("[{i}]"),
            _ => {
                let mut s = String::from("[");
                Renderer::new(self, counts).render(k, &mut s);
                s.push(']');
                s
            }
        }
    }

    /// Number of reachable stub nodes.
    pub fn stub_count(&self) -> usize {
        self.list_stubs().len()
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Index(usize),
    KeyOf(usize),
    Key(NodeId),
    Element(usize),
    Field(&'static str),
    ListItem(usize),
    DictItemKeyOf(usize),
    DictItem(NodeId),
}

enum Task {
    Node(NodeId),
    Text(&'static str),
    Owned(String),
}

struct Renderer<'g> {
    graph: &'g ObjectGraph,
    counts: &'g [u32],
    labels: HashMap<NodeId, usize>,
}

fn json_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

impl<'g> Renderer<'g> {
    fn new(graph: &'g ObjectGraph, counts: &'g [u32]) -> Renderer<'g> {
        Renderer { graph, counts, labels: HashMap::new() }
    }

    fn render(&mut self, root: NodeId, out: &mut String) {
        let mut stack = vec![Task::Node(root)];
        while let Some(task) = stack.pop() {
            match task {
                Task::Text(t) => out.push_str(t),
                Task::Owned(t) => out.push_str(&t),
                Task::Node(id) => self.node(id, out, &mut stack),
            }
        }
    }

    fn node(&mut self, id: NodeId, out: &mut String, stack: &mut Vec<Task>) {
        let v = self.graph.get(id);
        if v.labelable() && self.counts.get(id.index()).copied().unwrap_or(0) >= 2 {
            if let Some(n) = self.labels.get(&id) {
                let _ = write!(out, "[\"use\",{n}]");
                return;
            }
            let n = self.labels.len();
            self.labels.insert(id, n);
            let _ = write!(out, "[\"def\",{n},");
            stack.push(Task::Text("]"));
        }
        // Tasks are pushed in reverse so they pop in output order.
        let mut tasks: Vec<Task> = Vec::new();
        match v {
            Value::None => out.push_str("null"),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Value::BigInt(i) => {
                let _ = write!(out, "{i}");
            }
            Value::Float(f) => {
                let _ = write!(out, "[\"float\",\"{}\"]", float_text(*f));
            }
            Value::Str(s) => json_str(out, s),
            Value::Bytes(b) => {
                let _ = write!(out, "[\"bytes\",\"{}\"]", hex::encode(b));
            }
            Value::ByteArray(b) => {
                let _ = write!(out, "[\"bytearray\",\"{}\"]", hex::encode(b));
            }
            Value::Tuple(items) | Value::List(items) => {
                out.push_str(if matches!(v, Value::Tuple(_)) { "[\"tuple\",[" } else { "[\"list\",[" });
                seq(&mut tasks, items.iter().copied());
                tasks.push(Task::Text("]]"));
            }
            Value::Dict(d) => {
                out.push_str("[\"dict\",[");
                pairs(&mut tasks, d.iter());
                tasks.push(Task::Text("]]"));
            }
            Value::Set(s) | Value::FrozenSet(s) => {
                out.push_str(if matches!(v, Value::Set(_)) { "[\"set\",[" } else { "[\"frozenset\",[" });
                let sorted = self.graph.sorted_elements(s, self.counts);
                seq(&mut tasks, sorted.into_iter());
                tasks.push(Task::Text("]]"));
            }
            Value::CallableRef(r) => {
                out.push_str("[\"ref\",");
                json_str(out, r.name.as_str());
                if r.state.is_none() && r.tainted.is_empty() {
                    out.push(']');
                } else {
                    out.push_str(",{");
                    let mut first = true;
                    if let Some(s) = r.state {
                        out.push_str("\"state\":");
                        tasks.push(Task::Node(s));
                        first = false;
                    }
                    if !r.tainted.is_empty() {
                        let text = tainted_text(&r.tainted, first);
                        tasks.push(Task::Owned(text));
                    }
                    tasks.push(Task::Text("}]"));
                }
            }
            Value::Instance(inst) => {
                out.push_str("[\"obj\",\"");
                out.push_str(inst.construction.tag());
                out.push_str("\",");
                json_str(out, inst.class_name.as_str());
                out.push(',');
                tasks.push(Task::Node(inst.args));
                tasks.push(Task::Text(",{"));
                let mut first = true;
                let mut sep = |tasks: &mut Vec<Task>, key: &'static str| {
                    if !first {
                        tasks.push(Task::Text(","));
                    }
                    first = false;
                    tasks.push(Task::Text(key));
                };
                if let Some(k) = inst.kwargs {
                    sep(&mut tasks, "\"kwargs\":");
                    tasks.push(Task::Node(k));
                }
                if let Some(s) = inst.state {
                    sep(&mut tasks, "\"state\":");
                    tasks.push(Task::Node(s));
                }
                if !inst.listitems.is_empty() {
                    sep(&mut tasks, "\"listitems\":[");
                    seq(&mut tasks, inst.listitems.iter().copied());
                    tasks.push(Task::Text("]"));
                }
                if !inst.dictitems.is_empty() {
                    sep(&mut tasks, "\"dictitems\":[");
                    pairs(&mut tasks, inst.dictitems.iter().copied());
                    tasks.push(Task::Text("]"));
                }
                if !inst.tainted.is_empty() {
                    sep(&mut tasks, "\"tainted\":");
                    let text = tainted_list(&inst.tainted);
                    tasks.push(Task::Owned(text));
                }
                tasks.push(Task::Text("}]"));
            }
            Value::PersistentRef(pid) => {
                out.push_str("[\"persid\",");
                tasks.push(Task::Node(*pid));
                tasks.push(Task::Text("]"));
            }
            Value::Stub(s) => {
                out.push_str("[\"stub\",");
                json_str(out, s.requested_name.as_str());
                out.push(']');
            }
        }
        stack.extend(tasks.into_iter().rev());
    }
}

fn seq(tasks: &mut Vec<Task>, items: impl Iterator<Item = NodeId>) {
    for (i, c) in items.enumerate() {
        if i > 0 {
            tasks.push(Task::Text(","));
        }
        tasks.push(Task::Node(c));
    }
}

fn pairs(tasks: &mut Vec<Task>, items: impl Iterator<Item = (NodeId, NodeId)>) {
    for (i, (k, v)) in items.enumerate() {
        tasks.push(Task::Text(if i > 0 { ",[" } else { "[" }));
        tasks.push(Task::Node(k));
        tasks.push(Task::Text(","));
        tasks.push(Task::Node(v));
        tasks.push(Task::Text("]"));
    }
}

fn tainted_list(names: &[String]) -> String {
    let mut sorted: Vec<&String> = names.iter().collect();
    sorted.sort();
    sorted.dedup();
    serde_json::to_string(&sorted).expect("strings always serialize")
}

fn tainted_text(names: &[String], first: bool) -> String {
    format!("{}\"tainted\":{}", if first { "" } else { "," }, tainted_list(names))
}

/// Converts an integer node to `i64` if it holds a small integer.
pub fn as_small_int(v: &Value) -> Option<i64> {
    match v {
        Value::Int(i) => Some(*i),
        Value::Bool(b) => Some(*b as i64),
        Value::BigInt(b) => b.to_i64(),
        _ => None,
    }
}
