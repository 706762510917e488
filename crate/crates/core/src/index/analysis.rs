//! Per-class analysis: bases, attribute types and `__reduce__` summaries,
//! using the type evidence ladder (annotation, annotated parameter,
//! constructor call, literal, else unknown).

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use rustpython_parser::ast;
use rustpython_parser::Parse;

use super::types::TypeExpr;
use super::{dotted, import_bindings, Binding, Callee, ClassInfo, Module, ModuleIndex, ReduceSummary};
use crate::name::QualifiedName;

/// Builtin functions whose result type is fixed.
const BUILTIN_RESULTS: &[(&str, &str)] = &[
    ("len", "int"),
    ("hash", "int"),
    ("id", "int"),
    ("ord", "int"),
    ("round", "int"),
    ("chr", "str"),
    ("repr", "str"),
    ("format", "str"),
    ("ascii", "str"),
    ("hex", "str"),
    ("oct", "str"),
    ("bin", "str"),
    ("isinstance", "bool"),
    ("issubclass", "bool"),
    ("callable", "bool"),
    ("hasattr", "bool"),
    ("all", "bool"),
    ("any", "bool"),
    ("sorted", "list"),
];

/// Builtin classes: calling one constructs an instance of it.
const BUILTIN_TYPES: &[&str] = &[
    "bool", "bytearray", "bytes", "complex", "dict", "float", "frozenset", "int", "list", "object", "range", "set",
    "slice", "str", "tuple", "memoryview",
];

/// External classes whose names do not start with a capital letter.
const LOWERCASE_CLASSES: &[&str] = &[
    "collections.defaultdict",
    "collections.deque",
    "datetime.date",
    "datetime.datetime",
    "datetime.time",
    "datetime.timedelta",
    "datetime.timezone",
    "array.array",
];

/// Bases that contribute nothing to the pickled form.
const IGNORED_BASES: &[&str] = &["builtins.object", "typing.Generic", "typing.Protocol"];

enum Container {
    Seq(Option<&'static str>),
    Map(Option<&'static str>),
    Counter,
    Tuple,
}

fn container_kind(name: &str) -> Option<Container> {
    let kind = match name {
        "builtins.list" | "builtins.set" | "typing.List" | "typing.Set" | "typing.Sequence"
        | "typing.MutableSequence" | "typing.Iterable" | "typing.Iterator" | "typing.Collection"
        | "typing.AbstractSet" | "typing.MutableSet" | "collections.abc.Sequence"
        | "collections.abc.MutableSequence" | "collections.abc.Iterable" | "collections.abc.Iterator"
        | "collections.abc.Collection" | "collections.abc.Set" | "collections.abc.MutableSet" => Container::Seq(None),
        "builtins.frozenset" | "typing.FrozenSet" => Container::Seq(Some("builtins.frozenset")),
        "collections.deque" | "typing.Deque" => Container::Seq(Some("collections.deque")),
        "builtins.dict" | "typing.Dict" | "typing.Mapping" | "typing.MutableMapping" | "collections.abc.Mapping"
        | "collections.abc.MutableMapping" => Container::Map(None),
        "collections.OrderedDict" | "typing.OrderedDict" => Container::Map(Some("collections.OrderedDict")),
        "collections.defaultdict" | "typing.DefaultDict" => Container::Map(Some("collections.defaultdict")),
        "collections.Counter" | "typing.Counter" => Container::Counter,
        "builtins.tuple" | "typing.Tuple" => Container::Tuple,
        _ => return None,
    };
    Some(kind)
}

/// Unparameterized typing aliases stand for their runtime class.
fn bare_alias(name: &str) -> Option<&'static str> {
    Some(match name {
        "typing.List" | "typing.Sequence" | "typing.MutableSequence" | "typing.Iterable" | "typing.Collection" => {
            "builtins.list"
        }
        "typing.Dict" | "typing.Mapping" | "typing.MutableMapping" => "builtins.dict",
        "typing.Set" | "typing.AbstractSet" | "typing.MutableSet" => "builtins.set",
        "typing.FrozenSet" => "builtins.frozenset",
        "typing.Tuple" => "builtins.tuple",
        "typing.Deque" => "collections.deque",
        "typing.OrderedDict" => "collections.OrderedDict",
        "typing.DefaultDict" => "collections.defaultdict",
        "typing.Counter" => "collections.Counter",
        "typing.Type" => "builtins.type",
        _ => return None,
    })
}

fn normalize_typing(name: String) -> String {
    match name.strip_prefix("typing_extensions.") {
        Some(rest) => format!("typing.{rest}"),
        None => name,
    }
}

fn named(name: &str) -> TypeExpr {
    match QualifiedName::parse(name) {
        Ok(q) => TypeExpr::named(q),
        Err(_) => TypeExpr::unknown(format!("module object `{name}`")),
    }
}

fn constant_type(c: &ast::Constant) -> TypeExpr {
    match c {
        ast::Constant::None => TypeExpr::builtin("NoneType"),
        ast::Constant::Bool(_) => TypeExpr::builtin("bool"),
        ast::Constant::Str(_) => TypeExpr::builtin("str"),
        ast::Constant::Bytes(_) => TypeExpr::builtin("bytes"),
        ast::Constant::Int(_) => TypeExpr::builtin("int"),
        ast::Constant::Float(_) => TypeExpr::builtin("float"),
        ast::Constant::Complex { .. } => TypeExpr::builtin("complex"),
        ast::Constant::Tuple(items) => TypeExpr::Tuple { elems: items.iter().map(constant_type).collect() },
        ast::Constant::Ellipsis => TypeExpr::unknown("Ellipsis literal"),
    }
}

fn is_none(e: &ast::Expr) -> bool {
    matches!(e, ast::Expr::Constant(c) if matches!(c.value, ast::Constant::None))
}

fn is_ellipsis(e: &ast::Expr) -> bool {
    matches!(e, ast::Expr::Constant(c) if matches!(c.value, ast::Constant::Ellipsis))
}

fn short(e: &ast::Expr) -> String {
    dotted(e).map(|p| p.join(".")).unwrap_or_else(|| "<expression>".to_string())
}

/// Name-resolution and typing context of one function (or a class body).
pub(crate) struct Scope<'a> {
    index: &'a ModuleIndex,
    module: &'a Module,
    class_name: &'a str,
    locals: BTreeMap<String, String>,
    params: BTreeMap<String, TypeExpr>,
    assigned: BTreeSet<String>,
    self_name: Option<String>,
    attrs: Option<&'a BTreeMap<String, TypeExpr>>,
    bound: RefCell<Vec<String>>,
}

impl<'a> Scope<'a> {
    fn class_body(index: &'a ModuleIndex, module: &'a Module, class_name: &'a str) -> Scope<'a> {
        Scope {
            index,
            module,
            class_name,
            locals: BTreeMap::new(),
            params: BTreeMap::new(),
            assigned: BTreeSet::new(),
            self_name: None,
            attrs: None,
            bound: RefCell::new(Vec::new()),
        }
    }

    fn is_local(&self, name: &str) -> bool {
        self.self_name.as_deref() == Some(name)
            || self.params.contains_key(name)
            || self.assigned.contains(name)
            || self.bound.borrow().iter().any(|b| b == name)
    }

    fn is_self(&self, e: &ast::Expr) -> bool {
        matches!(e, ast::Expr::Name(n) if Some(n.id.as_str()) == self.self_name.as_deref())
    }

    /// Global name denoted by a `Name`/`Attribute` chain, unless its head is
    /// a local variable.
    fn global(&self, e: &ast::Expr) -> Option<String> {
        let parts = dotted(e)?;
        if self.is_local(&parts[0]) {
            return None;
        }
        self.index.resolve_in(self.module, &self.locals, &parts).map(normalize_typing)
    }

    pub(crate) fn annotation(&self, e: &ast::Expr) -> TypeExpr {
        match e {
            ast::Expr::Constant(c) => match &c.value {
                ast::Constant::Str(s) => match ast::Expr::parse(s, "<annotation>") {
                    Ok(inner) => self.annotation(&inner),
                    Err(_) => TypeExpr::unknown(format!("unparsable annotation {s:?}")),
                },
                ast::Constant::None => TypeExpr::builtin("NoneType"),
                _ => TypeExpr::unknown("literal used as an annotation"),
            },
            ast::Expr::Name(_) | ast::Expr::Attribute(_) => match self.global(e) {
                Some(name) => self.bare_annotation(&name),
                None => TypeExpr::unknown(format!("unresolved annotation `{}`", short(e))),
            },
            ast::Expr::Subscript(s) => {
                let args: Vec<&ast::Expr> = match &*s.slice {
                    ast::Expr::Tuple(t) => t.elts.iter().collect(),
                    other => vec![other],
                };
                match self.global(&s.value) {
                    Some(base) => self.generic(&base, &args),
                    None => TypeExpr::unknown(format!("unresolved annotation `{}`", short(&s.value))),
                }
            }
            ast::Expr::BinOp(b) if matches!(b.op, ast::Operator::BitOr) => {
                TypeExpr::union([self.annotation(&b.left), self.annotation(&b.right)])
            }
            _ => TypeExpr::unknown("unsupported annotation syntax"),
        }
    }

    fn bare_annotation(&self, name: &str) -> TypeExpr {
        match name {
            "typing.Any" => TypeExpr::unknown("annotated as Any"),
            "typing.Optional" | "typing.Union" | "typing.Callable" | "collections.abc.Callable" => {
                TypeExpr::unknown(format!("bare {name}"))
            }
            _ => named(bare_alias(name).unwrap_or(name)),
        }
    }

    fn generic(&self, base: &str, args: &[&ast::Expr]) -> TypeExpr {
        let arg = |i: usize| match args.get(i) {
            Some(e) => self.annotation(e),
            None => TypeExpr::unknown(format!("missing type argument of {base}")),
        };
        let container = |c: Option<&str>| c.map(crate::name::qn);
        if let Some(kind) = container_kind(base) {
            return match kind {
                Container::Seq(c) => TypeExpr::sequence(container(c), arg(0)),
                Container::Map(c) => TypeExpr::mapping(container(c), arg(0), arg(1)),
                Container::Counter => {
                    TypeExpr::mapping(container(Some("collections.Counter")), arg(0), TypeExpr::builtin("int"))
                }
                Container::Tuple if args.len() == 2 && is_ellipsis(args[1]) => TypeExpr::sequence(None, arg(0)),
                Container::Tuple => TypeExpr::Tuple { elems: args.iter().map(|a| self.annotation(a)).collect() },
            };
        }
        match base {
            "typing.Optional" => TypeExpr::optional(arg(0)),
            "typing.Union" => TypeExpr::union(args.iter().map(|a| self.annotation(a))),
            "typing.Type" | "builtins.type" | "typing.Annotated" | "typing.Final" | "typing.ClassVar"
            | "typing.Required" | "typing.NotRequired" | "typing.ReadOnly" => arg(0),
            "typing.Literal" => TypeExpr::union(args.iter().map(|a| match a {
                ast::Expr::Constant(c) => constant_type(&c.value),
                _ => TypeExpr::unknown("non-constant Literal argument"),
            })),
            "typing.Callable" | "collections.abc.Callable" => TypeExpr::unknown("annotated as a callable"),
            _ => named(base),
        }
    }

    fn is_classvar(&self, e: &ast::Expr) -> bool {
        if let ast::Expr::Constant(ast::ExprConstant { value: ast::Constant::Str(s), .. }) = e {
            return ast::Expr::parse(s, "<annotation>").is_ok_and(|inner| self.is_classvar(&inner));
        }
        let base = match e {
            ast::Expr::Subscript(s) => &*s.value,
            other => other,
        };
        self.global(base).is_some_and(|n| n == "typing.ClassVar")
    }

    /// Type of a value expression, by the evidence ladder.
    pub(crate) fn infer(&self, e: &ast::Expr) -> TypeExpr {
        match e {
            ast::Expr::Constant(c) => constant_type(&c.value),
            ast::Expr::JoinedStr(_) => TypeExpr::builtin("str"),
            ast::Expr::Name(n) => {
                let id = n.id.as_str();
                if self.bound.borrow().iter().any(|b| b == id) {
                    TypeExpr::unknown(format!("comprehension variable `{id}`"))
                } else if self.self_name.as_deref() == Some(id) {
                    TypeExpr::unknown("the instance itself")
                } else if let Some(t) = self.params.get(id) {
                    t.clone()
                } else if self.assigned.contains(id) {
                    TypeExpr::unknown(format!("local variable `{id}`"))
                } else {
                    match self.global(e) {
                        Some(g) => named(&g),
                        None => TypeExpr::unknown(format!("unresolved name `{id}`")),
                    }
                }
            }
            ast::Expr::Attribute(a) => {
                if self.is_self(&a.value) {
                    return match self.attrs {
                        Some(attrs) => attrs
                            .get(a.attr.as_str())
                            .cloned()
                            .unwrap_or_else(|| TypeExpr::unknown(format!("attribute `{}` has no known type", a.attr))),
                        None => TypeExpr::unknown(format!("copy of self.{}", a.attr)),
                    };
                }
                match self.global(e) {
                    Some(g) => named(&g),
                    None => TypeExpr::unknown(format!("attribute access `{}`", short(e))),
                }
            }
            ast::Expr::Call(c) => self.call(c),
            ast::Expr::List(l) => self.display(&l.elts, "list"),
            ast::Expr::Set(s) => self.display(&s.elts, "set"),
            ast::Expr::Tuple(t) => TypeExpr::Tuple { elems: t.elts.iter().map(|x| self.infer(x)).collect() },
            ast::Expr::Dict(d) => {
                if d.values.is_empty() {
                    return TypeExpr::builtin("dict");
                }
                let keys = d.keys.iter().map(|k| match k {
                    Some(k) => self.infer(k),
                    None => TypeExpr::unknown("dict unpacking"),
                });
                TypeExpr::mapping(None, TypeExpr::union(keys), TypeExpr::union(d.values.iter().map(|v| self.infer(v))))
            }
            ast::Expr::ListComp(c) => self.comprehension(&c.generators, |s| TypeExpr::sequence(None, s.infer(&c.elt))),
            ast::Expr::SetComp(c) => self.comprehension(&c.generators, |s| TypeExpr::sequence(None, s.infer(&c.elt))),
            ast::Expr::DictComp(c) => {
                self.comprehension(&c.generators, |s| TypeExpr::mapping(None, s.infer(&c.key), s.infer(&c.value)))
            }
            ast::Expr::Compare(_) => TypeExpr::builtin("bool"),
            ast::Expr::UnaryOp(u) if matches!(u.op, ast::UnaryOp::Not) => TypeExpr::builtin("bool"),
            ast::Expr::UnaryOp(u) => self.infer(&u.operand),
            ast::Expr::BoolOp(b) => TypeExpr::union(b.values.iter().map(|v| self.infer(v))),
            ast::Expr::IfExp(i) => TypeExpr::union([self.infer(&i.body), self.infer(&i.orelse)]),
            ast::Expr::NamedExpr(n) => self.infer(&n.value),
            ast::Expr::BinOp(b) => {
                let (l, r) = (self.infer(&b.left), self.infer(&b.right));
                if l == r && !l.is_unknown() {
                    l
                } else {
                    TypeExpr::unknown("result of an operator expression")
                }
            }
            ast::Expr::Lambda(_) => TypeExpr::unknown("lambda"),
            ast::Expr::GeneratorExp(_) => TypeExpr::unknown("generator expression"),
            ast::Expr::Subscript(s) => TypeExpr::unknown(format!("item of `{}`", short(&s.value))),
            _ => TypeExpr::unknown("unsupported expression"),
        }
    }

    fn display(&self, elts: &[ast::Expr], builtin: &str) -> TypeExpr {
        if elts.is_empty() {
            TypeExpr::builtin(builtin)
        } else {
            TypeExpr::sequence(None, TypeExpr::union(elts.iter().map(|x| self.infer(x))))
        }
    }

    fn comprehension(&self, generators: &[ast::Comprehension], f: impl FnOnce(&Self) -> TypeExpr) -> TypeExpr {
        let mut names = Vec::new();
        for g in generators {
            target_names(&g.target, &mut names);
        }
        let n = names.len();
        self.bound.borrow_mut().extend(names);
        let t = f(self);
        let mut bound = self.bound.borrow_mut();
        let keep = bound.len() - n;
        bound.truncate(keep);
        t
    }

    fn call(&self, c: &ast::ExprCall) -> TypeExpr {
        let Some(g) = self.global(&c.func) else {
            return TypeExpr::unknown(format!("result of calling `{}`", short(&c.func)));
        };
        if let Some(b) = g.strip_prefix("builtins.") {
            if BUILTIN_TYPES.contains(&b) {
                return TypeExpr::builtin(b);
            }
            if let Some((_, r)) = BUILTIN_RESULTS.iter().find(|(f, _)| *f == b) {
                return TypeExpr::builtin(r);
            }
            return TypeExpr::unknown(format!("result of {g}"));
        }
        if self.index.is_class(&g) {
            return named(&g);
        }
        if self.index.is_function(&g) {
            return TypeExpr::unknown(format!("result of function {g}"));
        }
        if self.index.is_internal(&g) {
            return TypeExpr::unknown(format!("result of {g}"));
        }
        let last = g.rsplit('.').next().unwrap_or(&g);
        if LOWERCASE_CLASSES.contains(&g.as_str()) || last.starts_with(|ch: char| ch.is_ascii_uppercase()) {
            named(&g)
        } else {
            TypeExpr::unknown(format!("result of external call {g}"))
        }
    }

    /// A global passed by reference (`Tensor`, `self.__class__`).
    fn reference(&self, e: &ast::Expr) -> Option<String> {
        if self.is_class_of_self(e) {
            return Some(self.class_name.to_string());
        }
        match e {
            ast::Expr::Name(_) | ast::Expr::Attribute(_) => {
                let parts = dotted(e)?;
                if self.is_local(&parts[0]) {
                    return None;
                }
                self.global(e)
            }
            _ => None,
        }
    }

    fn is_class_of_self(&self, e: &ast::Expr) -> bool {
        match e {
            ast::Expr::Attribute(a) => a.attr.as_str() == "__class__" && self.is_self(&a.value),
            ast::Expr::Call(c) => {
                c.args.len() == 1 && self.is_self(&c.args[0]) && self.global(&c.func).is_some_and(|g| g == "builtins.type")
            }
            _ => false,
        }
    }

    fn callee(&self, e: &ast::Expr) -> Callee {
        match self.reference(e).map(|g| QualifiedName::parse(&g)) {
            Some(Ok(q)) => Callee::Name(q),
            _ => Callee::Unknown(format!("callable `{}` cannot be resolved", short(e))),
        }
    }
}

fn target_names(t: &ast::Expr, out: &mut Vec<String>) {
    match t {
        ast::Expr::Name(n) => out.push(n.id.to_string()),
        ast::Expr::Tuple(x) => x.elts.iter().for_each(|e| target_names(e, out)),
        ast::Expr::List(x) => x.elts.iter().for_each(|e| target_names(e, out)),
        ast::Expr::Starred(s) => target_names(&s.value, out),
        _ => {}
    }
}

/// Calls `f` on every statement of `body`, descending into compound
/// statements but not into nested functions or classes.
fn each_stmt<'s>(body: &'s [ast::Stmt], f: &mut dyn FnMut(&'s ast::Stmt)) {
    for s in body {
        f(s);
        match s {
            ast::Stmt::If(x) => {
                each_stmt(&x.body, f);
                each_stmt(&x.orelse, f);
            }
            ast::Stmt::For(x) => {
                each_stmt(&x.body, f);
                each_stmt(&x.orelse, f);
            }
            ast::Stmt::AsyncFor(x) => {
                each_stmt(&x.body, f);
                each_stmt(&x.orelse, f);
            }
            ast::Stmt::While(x) => {
                each_stmt(&x.body, f);
                each_stmt(&x.orelse, f);
            }
            ast::Stmt::With(x) => each_stmt(&x.body, f),
            ast::Stmt::AsyncWith(x) => each_stmt(&x.body, f),
            ast::Stmt::Try(x) => {
                each_stmt(&x.body, f);
                for h in &x.handlers {
                    let ast::ExceptHandler::ExceptHandler(h) = h;
                    each_stmt(&h.body, f);
                }
                each_stmt(&x.orelse, f);
                each_stmt(&x.finalbody, f);
            }
            ast::Stmt::TryStar(x) => {
                each_stmt(&x.body, f);
                for h in &x.handlers {
                    let ast::ExceptHandler::ExceptHandler(h) = h;
                    each_stmt(&h.body, f);
                }
                each_stmt(&x.orelse, f);
                each_stmt(&x.finalbody, f);
            }
            ast::Stmt::Match(x) => {
                for case in &x.cases {
                    each_stmt(&case.body, f);
                }
            }
            _ => {}
        }
    }
}

/// Evidence gathered for one attribute.
#[derive(Default)]
struct Evidence {
    annotated: Option<TypeExpr>,
    inferred: Vec<TypeExpr>,
}

#[derive(Default)]
struct Attributes {
    order: Vec<String>,
    evidence: BTreeMap<String, Evidence>,
}

impl Attributes {
    fn entry(&mut self, attr: &str) -> &mut Evidence {
        if !self.evidence.contains_key(attr) {
            self.order.push(attr.to_string());
        }
        self.evidence.entry(attr.to_string()).or_default()
    }

    fn annotate(&mut self, attr: &str, t: TypeExpr) {
        let e = self.entry(attr);
        if e.annotated.is_none() {
            e.annotated = Some(t);
        }
    }

    fn infer(&mut self, attr: &str, t: TypeExpr) {
        self.entry(attr).inferred.push(t);
    }

    /// An annotation beats any inferred evidence; otherwise the union of
    /// everything assigned.
    fn finish(self) -> BTreeMap<String, TypeExpr> {
        self.evidence
            .into_iter()
            .map(|(k, e)| {
                let t = match e.annotated {
                    Some(t) => t,
                    None => TypeExpr::union(e.inferred),
                };
                (k, t)
            })
            .collect()
    }
}

/// A `__reduce__`/`__reduce_ex__` method, kept unevaluated until the
/// class's full attribute table is known.
#[derive(Debug, Clone)]
pub(crate) struct RawReduce {
    method: String,
    self_name: Option<String>,
    params: BTreeMap<String, TypeExpr>,
    locals: BTreeMap<String, String>,
    assigned: BTreeSet<String>,
    returns: Vec<ast::Expr>,
}

fn decorator_names(index: &ModuleIndex, module: &Module, f: &[ast::Expr]) -> Vec<String> {
    f.iter()
        .filter_map(|d| {
            let parts = dotted(d)?;
            index.resolve_in(module, &BTreeMap::new(), &parts)
        })
        .collect()
}

struct Method<'s> {
    name: &'s str,
    args: &'s ast::Arguments,
    body: &'s [ast::Stmt],
    decorators: &'s [ast::Expr],
}

fn methods(class: &ast::StmtClassDef) -> Vec<Method<'_>> {
    class
        .body
        .iter()
        .filter_map(|s| match s {
            ast::Stmt::FunctionDef(f) => {
                Some(Method { name: f.name.as_str(), args: &f.args, body: &f.body, decorators: &f.decorator_list })
            }
            ast::Stmt::AsyncFunctionDef(f) => {
                Some(Method { name: f.name.as_str(), args: &f.args, body: &f.body, decorators: &f.decorator_list })
            }
            _ => None,
        })
        .collect()
}

fn method_scope<'a>(
    index: &'a ModuleIndex,
    module: &'a Module,
    class_name: &'a str,
    m: &Method<'_>,
) -> Scope<'a> {
    let base = Scope::class_body(index, module, class_name);
    let positional: Vec<&ast::ArgWithDefault> = m.args.posonlyargs.iter().chain(&m.args.args).collect();
    let self_name = positional.first().map(|a| a.def.arg.to_string());
    let mut params = BTreeMap::new();
    let ann = |a: &ast::Arg| match &a.annotation {
        Some(e) => base.annotation(e),
        None => TypeExpr::unknown(format!("unannotated parameter `{}`", a.arg)),
    };
    for a in positional.iter().skip(1).chain(m.args.kwonlyargs.iter().collect::<Vec<_>>().iter()) {
        params.insert(a.def.arg.to_string(), ann(&a.def));
    }
    if let Some(v) = &m.args.vararg {
        params.insert(v.arg.to_string(), TypeExpr::sequence(None, ann(v)));
    }
    if let Some(k) = &m.args.kwarg {
        params.insert(k.arg.to_string(), TypeExpr::mapping(None, TypeExpr::builtin("str"), ann(k)));
    }
    let mut locals = BTreeMap::new();
    let mut assigned = BTreeSet::new();
    each_stmt(m.body, &mut |s| {
        let mut bound = Vec::new();
        let mut stars = Vec::new();
        import_bindings(s, &module.name, module.is_package, &mut bound, &mut stars);
        for (k, b) in bound {
            if let Binding::Import(t) = b {
                locals.insert(k, t);
            }
        }
        let mut names = Vec::new();
        match s {
            ast::Stmt::Assign(a) => a.targets.iter().for_each(|t| target_names(t, &mut names)),
            ast::Stmt::AnnAssign(a) => target_names(&a.target, &mut names),
            ast::Stmt::AugAssign(a) => target_names(&a.target, &mut names),
            ast::Stmt::For(f) => target_names(&f.target, &mut names),
            ast::Stmt::AsyncFor(f) => target_names(&f.target, &mut names),
            ast::Stmt::With(w) => w.items.iter().flat_map(|i| &i.optional_vars).for_each(|v| target_names(v, &mut names)),
            ast::Stmt::FunctionDef(f) => names.push(f.name.to_string()),
            ast::Stmt::ClassDef(c) => names.push(c.name.to_string()),
            _ => {}
        }
        assigned.extend(names);
    });
    Scope { locals, params, assigned, self_name, ..base }
}

impl Scope<'_> {
    fn self_attr<'e>(&self, e: &'e ast::Expr) -> Option<&'e str> {
        match e {
            ast::Expr::Attribute(a) if self.is_self(&a.value) => Some(a.attr.as_str()),
            _ => None,
        }
    }

    fn assign(&self, target: &ast::Expr, value: Option<&ast::Expr>, out: &mut Attributes) {
        if let Some(attr) = self.self_attr(target) {
            let t = match value {
                Some(v) => self.infer(v),
                None => TypeExpr::unknown("unpacked from an iterable"),
            };
            out.infer(attr, t);
            return;
        }
        let elts = match target {
            ast::Expr::Tuple(t) => &t.elts,
            ast::Expr::List(l) => &l.elts,
            ast::Expr::Starred(s) => return self.assign(&s.value, None, out),
            _ => return,
        };
        let values = match value {
            Some(ast::Expr::Tuple(t)) => Some(&t.elts),
            Some(ast::Expr::List(l)) => Some(&l.elts),
            _ => None,
        };
        match values {
            Some(vs) if vs.len() == elts.len() && !vs.iter().any(|v| matches!(v, ast::Expr::Starred(_))) => {
                for (t, v) in elts.iter().zip(vs) {
                    self.assign(t, Some(v), out);
                }
            }
            _ => {
                for t in elts {
                    self.assign(t, None, out);
                }
            }
        }
    }

    fn collect_attributes(&self, body: &[ast::Stmt], out: &mut Attributes) {
        each_stmt(body, &mut |s| match s {
            ast::Stmt::Assign(a) => {
                for t in &a.targets {
                    self.assign(t, Some(&a.value), out);
                }
            }
            ast::Stmt::AnnAssign(a) => {
                if let Some(attr) = self.self_attr(&a.target) {
                    out.annotate(attr, self.annotation(&a.annotation));
                }
            }
            ast::Stmt::AugAssign(a) => {
                if let Some(attr) = self.self_attr(&a.target) {
                    out.infer(attr, self.infer(&a.value));
                }
            }
            ast::Stmt::For(f) => self.assign(&f.target, None, out),
            ast::Stmt::AsyncFor(f) => self.assign(&f.target, None, out),
            ast::Stmt::With(w) => {
                for v in w.items.iter().flat_map(|i| &i.optional_vars) {
                    self.assign(v, None, out);
                }
            }
            ast::Stmt::Expr(x) => {
                // setattr(self, "name", value)
                if let ast::Expr::Call(c) = &*x.value {
                    if c.args.len() == 3
                        && self.is_self(&c.args[0])
                        && self.global(&c.func).is_some_and(|g| g == "builtins.setattr")
                    {
                        if let ast::Expr::Constant(ast::ExprConstant { value: ast::Constant::Str(attr), .. }) = &c.args[1] {
                            out.infer(attr, self.infer(&c.args[2]));
                        }
                    }
                }
            }
            _ => {}
        });
    }
}

pub(super) fn analyse_class(
    index: &ModuleIndex,
    module: &Module,
    name: &str,
    line: u32,
    class: &ast::StmtClassDef,
) -> ClassInfo {
    let body_scope = Scope::class_body(index, module, name);
    let mut warnings = Vec::new();
    let mut bases = Vec::new();
    for b in &class.bases {
        let target = match b {
            ast::Expr::Subscript(s) => &*s.value,
            other => other,
        };
        match body_scope.global(target) {
            Some(g) if IGNORED_BASES.contains(&g.as_str()) => {}
            Some(g) => bases.push(g),
            None => warnings.push(format!("{name}: base `{}` cannot be resolved", short(target))),
        }
    }

    let mut attrs = Attributes::default();
    for s in &class.body {
        if let ast::Stmt::AnnAssign(a) = s {
            if let ast::Expr::Name(n) = &*a.target {
                if !body_scope.is_classvar(&a.annotation) {
                    attrs.annotate(n.id.as_str(), body_scope.annotation(&a.annotation));
                }
            }
        }
    }

    let mut reduce: Option<RawReduce> = None;
    for m in methods(class) {
        let decorators = decorator_names(index, module, m.decorators);
        if decorators.iter().any(|d| d == "builtins.staticmethod" || d == "builtins.classmethod") {
            continue;
        }
        let scope = method_scope(index, module, name, &m);
        if scope.self_name.is_none() {
            continue;
        }
        scope.collect_attributes(m.body, &mut attrs);
        let is_reduce = m.name == "__reduce_ex__" || m.name == "__reduce__";
        let preferred = reduce.as_ref().is_none_or(|r| r.method != "__reduce_ex__");
        if is_reduce && preferred {
            let mut returns = Vec::new();
            each_stmt(m.body, &mut |s| {
                if let ast::Stmt::Return(r) = s {
                    if let Some(v) = &r.value {
                        returns.push((**v).clone());
                    }
                }
            });
            reduce = Some(RawReduce {
                method: m.name.to_string(),
                self_name: scope.self_name.clone(),
                params: scope.params.clone(),
                locals: scope.locals.clone(),
                assigned: scope.assigned.clone(),
                returns,
            });
        }
    }

    ClassInfo {
        name: name.to_string(),
        module: module.name.clone(),
        line,
        bases,
        attributes: attrs.finish(),
        reduce,
        warnings,
    }
}

/// Evaluates a reduce method against the resolved class `class_name`
/// (whose merged attribute table is `attrs`).
pub(super) fn summarize_reduce(
    index: &ModuleIndex,
    module: &Module,
    class_name: &str,
    owner: &str,
    raw: &RawReduce,
    attrs: &BTreeMap<String, TypeExpr>,
    warnings: &mut Vec<String>,
) -> ReduceSummary {
    let scope = Scope {
        locals: raw.locals.clone(),
        params: raw.params.clone(),
        assigned: raw.assigned.clone(),
        self_name: raw.self_name.clone(),
        attrs: Some(attrs),
        ..Scope::class_body(index, module, class_name)
    };
    let mut callable: Option<Callee> = None;
    let mut arg_types = Vec::new();
    let mut state_types = Vec::new();
    let mut references: Vec<String> = Vec::new();
    let mut note = |c: Callee, warnings: &mut Vec<String>| match &callable {
        None => callable = Some(c),
        Some(prev) if *prev != c => {
            warnings.push(format!("{class_name}: {} returns several callables; only the first is used", raw.method))
        }
        Some(_) => {}
    };
    for ret in &raw.returns {
        match ret {
            ast::Expr::Tuple(t) if t.elts.len() >= 2 => {
                note(scope.callee(&t.elts[0]), warnings);
                match &t.elts[1] {
                    ast::Expr::Tuple(args) => {
                        for a in &args.elts {
                            match scope.reference(a) {
                                Some(r) => references.push(r),
                                None => arg_types.push(scope.infer(a)),
                            }
                        }
                    }
                    other => arg_types.push(scope.infer(other)),
                }
                if let Some(state) = t.elts.get(2) {
                    scope.state(state, &mut state_types);
                }
                for (i, extra) in t.elts.iter().enumerate().skip(3) {
                    if is_none(extra) {
                        continue;
                    }
                    state_types.push(match i {
                        3 => TypeExpr::sequence(None, TypeExpr::unknown("items of the listitems iterator")),
                        4 => TypeExpr::mapping(
                            None,
                            TypeExpr::unknown("keys of the dictitems iterator"),
                            TypeExpr::unknown("values of the dictitems iterator"),
                        ),
                        _ => TypeExpr::unknown("state setter callable"),
                    });
                }
            }
            ast::Expr::Constant(ast::ExprConstant { value: ast::Constant::Str(s), .. }) => {
                references.push(format!("{}.{s}", module.name));
                note(Callee::Unknown("returns a global name, nothing is called".into()), warnings);
            }
            _ => note(Callee::Unknown(format!("{} does not return a tuple literal", raw.method)), warnings),
        }
    }
    let callable = callable.unwrap_or_else(|| Callee::Unknown(format!("{} has no return statement", raw.method)));
    let mut seen = BTreeSet::new();
    ReduceSummary {
        defined_in: crate::name::qn(owner),
        method: raw.method.clone(),
        callable,
        arg_types,
        state_types,
        references: references
            .into_iter()
            .filter(|r| seen.insert(r.clone()))
            .filter_map(|r| QualifiedName::parse(&r).ok())
            .collect(),
    }
}

impl Scope<'_> {
    fn state(&self, e: &ast::Expr, out: &mut Vec<TypeExpr>) {
        if is_none(e) {
            return;
        }
        if self.is_instance_dict(e) {
            out.extend(self.attrs.into_iter().flat_map(|a| a.values().cloned()));
            return;
        }
        if let ast::Expr::Dict(d) = e {
            for (k, v) in d.keys.iter().zip(&d.values) {
                match k {
                    None => self.state(v, out),
                    Some(_) => out.push(self.infer(v)),
                }
            }
            return;
        }
        out.push(self.infer(e));
    }

    /// `self.__dict__`, `vars(self)`, `self.__getstate__()` or a copy of one.
    fn is_instance_dict(&self, e: &ast::Expr) -> bool {
        match e {
            ast::Expr::Attribute(a) => a.attr.as_str() == "__dict__" && self.is_self(&a.value),
            ast::Expr::Call(c) => match &*c.func {
                ast::Expr::Attribute(f) if f.attr.as_str() == "__getstate__" => self.is_self(&f.value),
                ast::Expr::Attribute(f) if f.attr.as_str() == "copy" => self.is_instance_dict(&f.value),
                other => {
                    c.args.len() == 1
                        && self.is_self(&c.args[0])
                        && self.global(other).is_some_and(|g| g == "builtins.vars")
                }
            },
            _ => false,
        }
    }
}
