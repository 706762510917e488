//! Source index: a Python library parsed into modules, import tables and
//! class records (bases, attribute types, `__reduce__` summaries).

mod analysis;
mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rustpython_parser::ast::{self, Ranged};
use rustpython_parser::Parse;
use serde::Serialize;

use crate::name::QualifiedName;

pub use types::TypeExpr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("no Python sources for package {package} under {root}")]
    NoSources { root: String, package: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("class {0} is not defined in the indexed sources")]
    ClassNotFound(String),
}

/// A file that could not be parsed. Indexing continues without it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceError {
    pub path: String,
    pub line: u32,
    pub message: String,
}

/// What a module-level name is bound to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    /// `import` / `from ... import`: absolute dotted target.
    Import(String),
    /// `X = a.b`: a dotted path resolved in the same module.
    Alias(Vec<String>),
    Class,
    Function,
    Variable,
}

#[derive(Debug)]
pub struct Module {
    pub name: String,
    pub path: PathBuf,
    pub is_package: bool,
    pub body: ast::Suite,
    pub bindings: BTreeMap<String, Binding>,
    pub star_imports: Vec<String>,
    /// `__version__` when assigned a string literal.
    pub version: Option<String>,
    line_starts: Vec<usize>,
}

impl Module {
    pub fn line_of(&self, offset: usize) -> u32 {
        self.line_starts.partition_point(|&s| s <= offset) as u32
    }

    /// The import table: local alias to absolute dotted target.
    pub fn import_table(&self) -> BTreeMap<&str, &str> {
        self.bindings
            .iter()
            .filter_map(|(k, b)| match b {
                Binding::Import(t) => Some((k.as_str(), t.as_str())),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Location {
    pub module: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Callee {
    Name(QualifiedName),
    Unknown(String),
}

/// What a class's `__reduce__` (or `__reduce_ex__`) returns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReduceSummary {
    /// Class whose method was summarized (may be an ancestor).
    pub defined_in: QualifiedName,
    pub method: String,
    pub callable: Callee,
    pub arg_types: Vec<TypeExpr>,
    pub state_types: Vec<TypeExpr>,
    /// Globals passed by reference among the arguments (classes or
    /// functions pickled as imports, not as values).
    pub references: Vec<QualifiedName>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassRecord {
    pub name: QualifiedName,
    pub bases: Vec<QualifiedName>,
    /// Bases of the class or its indexed ancestors that are not defined in
    /// the indexed sources.
    pub external_ancestors: Vec<QualifiedName>,
    pub attributes: BTreeMap<String, TypeExpr>,
    pub reduce_summary: Option<ReduceSummary>,
    pub defined_at: Location,
    pub warnings: Vec<String>,
}

/// Per-class facts gathered from the class's own body.
#[derive(Debug, Clone)]
struct ClassInfo {
    name: String,
    module: String,
    line: u32,
    bases: Vec<String>,
    attributes: BTreeMap<String, TypeExpr>,
    reduce: Option<analysis::RawReduce>,
    warnings: Vec<String>,
}

#[derive(Debug)]
pub struct ModuleIndex {
    pub package: String,
    pub root: PathBuf,
    pub modules: BTreeMap<String, Module>,
    pub errors: Vec<SourceError>,
    classes: BTreeMap<String, ClassInfo>,
    functions: BTreeSet<String>,
}

const BUILTIN_NAMES: &[&str] = &[
    "bool", "bytearray", "bytes", "complex", "dict", "float", "frozenset", "int", "list", "object", "range", "set",
    "slice", "str", "tuple", "type", "memoryview", "NoneType", "Exception", "ValueError", "TypeError", "len", "hash",
    "id", "ord", "chr", "repr", "format", "ascii", "hex", "oct", "bin", "isinstance", "issubclass", "callable", "all",
    "any", "sorted", "reversed", "enumerate", "zip", "map", "filter", "abs", "round", "min", "max", "sum", "getattr",
    "setattr", "hasattr", "vars", "iter", "next", "open", "print", "super", "property", "staticmethod", "classmethod",
];

pub(crate) fn is_builtin_name(name: &str) -> bool {
    BUILTIN_NAMES.contains(&name)
}

/// Finds the package sources: `<root>/<package>/`, `<root>/<package>.py`,
/// or `root` itself when it is the package directory.
fn package_dir(root: &Path, package: &str) -> Option<(PathBuf, PathBuf)> {
    let sub = root.join(package);
    if sub.is_dir() {
        return Some((root.to_path_buf(), sub));
    }
    let file = root.join(format!("{package}.py"));
    if file.is_file() {
        return Some((root.to_path_buf(), file));
    }
    if root.file_name().is_some_and(|n| n == package) && root.is_dir() {
        let parent = root.parent().map(Path::to_path_buf).unwrap_or_default();
        return Some((parent, root.to_path_buf()));
    }
    None
}

fn module_name(rel: &Path) -> (String, bool) {
    let mut parts: Vec<String> = rel.iter().map(|p| p.to_string_lossy().into_owned()).collect();
    if let Some(last) = parts.last_mut() {
        if let Some(stem) = last.strip_suffix(".py") {
            *last = stem.to_string();
        }
    }
    let is_package = parts.last().is_some_and(|p| p == "__init__");
    if is_package {
        parts.pop();
    }
    (parts.join("."), is_package)
}

fn line_starts(source: &str) -> Vec<usize> {
    std::iter::once(0).chain(source.match_indices('\n').map(|(i, _)| i + 1)).collect()
}

/// Absolute target of a `from <level dots><module> import ...` statement.
fn relative_base(current: &str, is_package: bool, level: usize, module: Option<&str>) -> Option<String> {
    let mut parts: Vec<&str> = Vec::new();
    if level > 0 {
        parts.extend(current.split('.').filter(|p| !p.is_empty()));
        if !is_package {
            parts.pop()?;
        }
        for _ in 1..level {
            parts.pop()?;
        }
    }
    if let Some(m) = module {
        parts.extend(m.split('.'));
    }
    if parts.is_empty() {
        None
    } else {
        Some(parts.join("."))
    }
}

/// Records the names bound by an import statement into `out`.
pub(crate) fn import_bindings(stmt: &ast::Stmt, current: &str, is_package: bool, out: &mut Vec<(String, Binding)>, stars: &mut Vec<String>) {
    match stmt {
        ast::Stmt::Import(imp) => {
            for alias in &imp.names {
                let full = alias.name.as_str();
                match &alias.asname {
                    Some(a) => out.push((a.to_string(), Binding::Import(full.to_string()))),
                    None => {
                        let head = full.split('.').next().unwrap_or(full);
                        out.push((head.to_string(), Binding::Import(head.to_string())));
                    }
                }
            }
        }
        ast::Stmt::ImportFrom(imp) => {
            let level = imp.level.as_ref().map_or(0, |l| l.to_usize());
            let Some(base) = relative_base(current, is_package, level, imp.module.as_ref().map(|m| m.as_str())) else {
                return;
            };
            for alias in &imp.names {
                if alias.name.as_str() == "*" {
                    stars.push(base.clone());
                    continue;
                }
                let local = alias.asname.as_ref().unwrap_or(&alias.name).to_string();
                out.push((local, Binding::Import(format!("{base}.{}", alias.name))));
            }
        }
        _ => {}
    }
}

/// Dotted path of a `Name` or `Attribute` chain (`a.b.c` gives `[a, b, c]`).
pub(crate) fn dotted(expr: &ast::Expr) -> Option<Vec<String>> {
    match expr {
        ast::Expr::Name(n) => Some(vec![n.id.to_string()]),
        ast::Expr::Attribute(a) => {
            let mut v = dotted(&a.value)?;
            v.push(a.attr.to_string());
            Some(v)
        }
        _ => None,
    }
}

/// Module-level statements, looking inside `if` and `try` blocks (guarded
/// imports such as `if TYPE_CHECKING:`).
fn top_level(body: &[ast::Stmt]) -> Vec<&ast::Stmt> {
    let mut out = Vec::new();
    let mut stack: Vec<&[ast::Stmt]> = vec![body];
    while let Some(block) = stack.pop() {
        for stmt in block {
            match stmt {
                ast::Stmt::If(s) => {
                    stack.push(&s.body);
                    stack.push(&s.orelse);
                }
                ast::Stmt::Try(s) => {
                    stack.push(&s.body);
                    stack.push(&s.orelse);
                    stack.push(&s.finalbody);
                    for h in &s.handlers {
                        let ast::ExceptHandler::ExceptHandler(h) = h;
                        stack.push(&h.body);
                    }
                }
                _ => out.push(stmt),
            }
        }
    }
    // Restore file order, so later bindings override earlier ones.
    out.sort_by_key(|s| s.range().start());
    out
}

fn parse_module(
    root: &Path,
    path: &Path,
    errors: &mut Vec<SourceError>,
) -> Result<Option<Module>, IndexError> {
    let rel = path.strip_prefix(root).unwrap_or(path).to_path_buf();
    let source = std::fs::read_to_string(path)
        .map_err(|e| IndexError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let starts = line_starts(&source);
    let body = match ast::Suite::parse(&source, &rel.to_string_lossy()) {
        Ok(body) => body,
        Err(e) => {
            let offset = e.offset.to_usize();
            errors.push(SourceError {
                path: rel.to_string_lossy().into_owned(),
                line: starts.partition_point(|&s| s <= offset) as u32,
                message: e.error.to_string(),
            });
            return Ok(None);
        }
    };
    let (name, is_package) = module_name(&rel);
    let mut bindings = BTreeMap::new();
    let mut star_imports = Vec::new();
    let mut version = None;
    for stmt in top_level(&body) {
        let mut bound = Vec::new();
        import_bindings(stmt, &name, is_package, &mut bound, &mut star_imports);
        match stmt {
            ast::Stmt::ClassDef(c) => bound.push((c.name.to_string(), Binding::Class)),
            ast::Stmt::FunctionDef(f) => bound.push((f.name.to_string(), Binding::Function)),
            ast::Stmt::AsyncFunctionDef(f) => bound.push((f.name.to_string(), Binding::Function)),
            ast::Stmt::Assign(a) => {
                for t in &a.targets {
                    if let ast::Expr::Name(n) = t {
                        if n.id.as_str() == "__version__" {
                            if let ast::Expr::Constant(ast::ExprConstant { value: ast::Constant::Str(s), .. }) = &*a.value {
                                version = Some(s.clone());
                            }
                        }
                        let b = match dotted(&a.value) {
                            Some(path) => Binding::Alias(path),
                            None => Binding::Variable,
                        };
                        bound.push((n.id.to_string(), b));
                    }
                }
            }
            ast::Stmt::AnnAssign(a) => {
                if let ast::Expr::Name(n) = &*a.target {
                    bound.push((n.id.to_string(), Binding::Variable));
                }
            }
            _ => {}
        }
        for (k, b) in bound {
            bindings.insert(k, b);
        }
    }
    Ok(Some(Module { name, path: rel, is_package, body, bindings, star_imports, version, line_starts: starts }))
}

/// Parses every `.py` file of `package` under `root`. Files that fail to
/// parse are listed in `errors` and skipped.
pub fn index_library(root: &Path, package: &str) -> Result<ModuleIndex, IndexError> {
    let no_sources = || IndexError::NoSources { root: root.display().to_string(), package: package.to_string() };
    let (base, pkg) = package_dir(root, package).ok_or_else(no_sources)?;
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(&pkg)
        .into_iter()
        .filter_entry(|e| e.file_name() != "__pycache__")
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "py"))
        .map(|e| e.into_path())
        .collect();
    if files.is_empty() {
        return Err(no_sources());
    }
    files.sort();
    let mut errors = Vec::new();
    let mut modules = BTreeMap::new();
    for path in &files {
        if let Some(m) = parse_module(&base, path, &mut errors)? {
            modules.insert(m.name.clone(), m);
        }
    }
    let mut index = ModuleIndex {
        package: package.to_string(),
        root: root.to_path_buf(),
        modules,
        errors,
        classes: BTreeMap::new(),
        functions: BTreeSet::new(),
    };
    index.collect_definitions();
    index.analyse_classes();
    Ok(index)
}

impl ModuleIndex {
    fn collect_definitions(&mut self) {
        let mut classes = BTreeMap::new();
        let mut functions = BTreeSet::new();
        for m in self.modules.values() {
            for stmt in top_level(&m.body) {
                match stmt {
                    ast::Stmt::ClassDef(c) => collect_class(m, &m.name, c, &mut classes),
                    ast::Stmt::FunctionDef(f) => {
                        functions.insert(format!("{}.{}", m.name, f.name));
                    }
                    ast::Stmt::AsyncFunctionDef(f) => {
                        functions.insert(format!("{}.{}", m.name, f.name));
                    }
                    _ => {}
                }
            }
        }
        self.classes = classes;
        self.functions = functions;
    }

    fn analyse_classes(&mut self) {
        let mut infos = BTreeMap::new();
        for m in self.modules.values() {
            let mut stack: Vec<(String, &ast::StmtClassDef)> = top_level(&m.body)
                .into_iter()
                .filter_map(|s| match s {
                    ast::Stmt::ClassDef(c) => Some((format!("{}.{}", m.name, c.name), c)),
                    _ => None,
                })
                .collect();
            while let Some((name, class)) = stack.pop() {
                for stmt in &class.body {
                    if let ast::Stmt::ClassDef(inner) = stmt {
                        stack.push((format!("{name}.{}", inner.name), inner));
                    }
                }
                let line = self.classes[&name].line;
                infos.insert(name.clone(), analysis::analyse_class(self, m, &name, line, class));
            }
        }
        self.classes = infos;
    }

    /// Resolves a dotted path as seen from `module`. `locals` holds
    /// function-scoped import bindings, which take precedence.
    pub(crate) fn resolve_in(
        &self,
        module: &Module,
        locals: &BTreeMap<String, String>,
        parts: &[String],
    ) -> Option<String> {
        self.resolve_guarded(module, locals, parts, 0)
    }

    fn resolve_guarded(
        &self,
        module: &Module,
        locals: &BTreeMap<String, String>,
        parts: &[String],
        depth: usize,
    ) -> Option<String> {
        if depth > 32 {
            return None;
        }
        let (head, rest) = parts.split_first()?;
        let base = if let Some(t) = locals.get(head) {
            t.clone()
        } else {
            match module.bindings.get(head) {
                Some(Binding::Import(t)) => t.clone(),
                Some(Binding::Alias(path)) => self.resolve_guarded(module, &BTreeMap::new(), path, depth + 1)?,
                Some(_) => format!("{}.{head}", module.name),
                None => match self.star_lookup(module, head) {
                    Some(t) => t,
                    None if is_builtin_name(head) => format!("builtins.{head}"),
                    None => return None,
                },
            }
        };
        let full = if rest.is_empty() { base } else { format!("{base}.{}", rest.join(".")) };
        Some(self.canonical_guarded(&full, depth + 1))
    }

    fn star_lookup(&self, module: &Module, head: &str) -> Option<String> {
        module.star_imports.iter().rev().find_map(|star| {
            let m = self.modules.get(star)?;
            m.bindings.contains_key(head).then(|| format!("{star}.{head}"))
        })
    }

    /// Follows re-exports: `pkg.Name` bound in `pkg/__init__.py` by an
    /// import becomes the name of the definition it imports.
    pub fn canonical(&self, name: &str) -> String {
        self.canonical_guarded(name, 0)
    }

    fn canonical_guarded(&self, name: &str, depth: usize) -> String {
        let mut full = name.to_string();
        for _ in depth..32 {
            let parts: Vec<String> = full.split('.').map(str::to_string).collect();
            let Some(k) = (1..=parts.len()).rev().find(|&k| self.modules.contains_key(&parts[..k].join("."))) else {
                return full;
            };
            if k == parts.len() {
                return full;
            }
            let module = &self.modules[&parts[..k].join(".")];
            let head = &parts[k];
            let rest = &parts[k + 1..];
            let target = match module.bindings.get(head) {
                Some(Binding::Import(t)) => t.clone(),
                Some(Binding::Alias(path)) => match self.resolve_guarded(module, &BTreeMap::new(), path, depth + 1) {
                    Some(t) => t,
                    None => return full,
                },
                Some(_) => return full,
                None => match self.star_lookup(module, head) {
                    Some(t) => t,
                    None => return full,
                },
            };
            let next = if rest.is_empty() { target } else { format!("{target}.{}", rest.join(".")) };
            if next == full {
                return full;
            }
            full = next;
        }
        full
    }

    pub fn is_class(&self, name: &str) -> bool {
        self.classes.contains_key(name)
    }

    pub fn is_function(&self, name: &str) -> bool {
        self.functions.contains(name)
    }

    /// True when `name` lies inside an indexed module (as opposed to an
    /// external library).
    pub fn is_internal(&self, name: &str) -> bool {
        let mut cur = name;
        loop {
            if self.modules.contains_key(cur) {
                return true;
            }
            match cur.rsplit_once('.') {
                Some((head, _)) => cur = head,
                None => return false,
            }
        }
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn version(&self) -> Option<&str> {
        self.modules.get(&self.package).and_then(|m| m.version.as_deref())
    }

    /// Depth-first, first-occurrence linearization of `name`'s indexed
    /// ancestors (including `name`), and the external bases met on the way.
    fn linearize(&self, name: &str) -> (Vec<&ClassInfo>, Vec<String>) {
        let mut order = Vec::new();
        let mut external = Vec::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![name.to_string()];
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            match self.classes.get(&n) {
                Some(info) => {
                    order.push(info);
                    for b in info.bases.iter().rev() {
                        stack.push(b.clone());
                    }
                }
                None => external.push(n),
            }
        }
        (order, external)
    }

    /// The class's record with inherited attributes merged in (nearer
    /// definitions win; conflicting types are reported as warnings).
    pub fn resolve_class(&self, name: &str) -> Result<ClassRecord, IndexError> {
        let info = self.classes.get(name).ok_or_else(|| IndexError::ClassNotFound(name.to_string()))?;
        let (order, external) = self.linearize(name);
        let mut warnings = info.warnings.clone();
        let mut attributes: BTreeMap<String, TypeExpr> = BTreeMap::new();
        let mut owner: BTreeMap<String, &str> = BTreeMap::new();
        for anc in &order {
            for (attr, t) in &anc.attributes {
                match attributes.get(attr) {
                    None => {
                        attributes.insert(attr.clone(), t.clone());
                        owner.insert(attr.clone(), &anc.name);
                    }
                    Some(existing) if existing != t => warnings.push(format!(
                        "{name}.{attr}: {} (from {}) shadows {t} (from {})",
                        existing, owner[attr], anc.name
                    )),
                    Some(_) => {}
                }
            }
        }
        for anc in order.iter().skip(1) {
            for w in &anc.warnings {
                if !warnings.contains(w) {
                    warnings.push(w.clone());
                }
            }
        }
        let reduce_owner = order.iter().find(|c| c.reduce.is_some());
        let reduce_summary = reduce_owner.map(|owner| {
            let raw = owner.reduce.as_ref().expect("has reduce");
            let module = &self.modules[&owner.module];
            analysis::summarize_reduce(self, module, name, &owner.name, raw, &attributes, &mut warnings)
        });
        let to_qn = |n: &String| QualifiedName::parse(n).ok();
        Ok(ClassRecord {
            name: QualifiedName::parse(name).map_err(|_| IndexError::ClassNotFound(name.to_string()))?,
            bases: info.bases.iter().filter_map(to_qn).collect(),
            external_ancestors: external.iter().filter_map(to_qn).collect(),
            attributes,
            reduce_summary,
            defined_at: Location { module: info.module.clone(), line: info.line },
            warnings,
        })
    }

    /// Every indexed class that has `name` among its (transitive) bases.
    pub fn subclasses_of(&self, name: &str) -> BTreeSet<QualifiedName> {
        let mut out = BTreeSet::new();
        for cls in self.classes.keys() {
            if cls == name {
                continue;
            }
            let mut seen = BTreeSet::new();
            let mut stack: Vec<&str> = vec![cls];
            let mut found = false;
            while let Some(n) = stack.pop() {
                if !seen.insert(n) {
                    continue;
                }
                if let Some(info) = self.classes.get(n) {
                    for b in &info.bases {
                        if b == name {
                            found = true;
                        }
                        stack.push(b);
                    }
                }
            }
            if found {
                if let Ok(q) = QualifiedName::parse(cls) {
                    out.insert(q);
                }
            }
        }
        out
    }

    /// Deterministic text listing of modules, import tables and class
    /// records, for golden tests and debugging.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "package {}", self.package);
        for e in &self.errors {
            let _ = writeln!(s, "error {}:{}: {}", e.path, e.line, e.message);
        }
        for m in self.modules.values() {
            let _ = writeln!(s, "module {} ({})", m.name, m.path.display());
            for (alias, target) in m.import_table() {
                let _ = writeln!(s, "  import {alias} -> {target}");
            }
        }
        for name in self.classes.keys() {
            let Ok(rec) = self.resolve_class(name) else { continue };
            let _ = writeln!(s, "class {} at {}:{}", rec.name, rec.defined_at.module, rec.defined_at.line);
            for b in &rec.bases {
                let _ = writeln!(s, "  base {b}");
            }
            for (attr, t) in &rec.attributes {
                let _ = writeln!(s, "  attr {attr}: {t}");
            }
            if let Some(r) = &rec.reduce_summary {
                let callable = match &r.callable {
                    Callee::Name(n) => n.to_string(),
                    Callee::Unknown(why) => format!("? ({why})"),
                };
                let _ = writeln!(s, "  reduce {} -> {callable}", r.method);
                for t in &r.arg_types {
                    let _ = writeln!(s, "    arg {t}");
                }
                for t in &r.state_types {
                    let _ = writeln!(s, "    state {t}");
                }
                for n in &r.references {
                    let _ = writeln!(s, "    ref {n}");
                }
            }
            for w in &rec.warnings {
                let _ = writeln!(s, "  warning {w}");
            }
        }
        s
    }
}

fn collect_class(m: &Module, prefix: &str, class: &ast::StmtClassDef, out: &mut BTreeMap<String, ClassInfo>) {
    let name = format!("{prefix}.{}", class.name);
    for stmt in &class.body {
        if let ast::Stmt::ClassDef(inner) = stmt {
            collect_class(m, &name, inner, out);
        }
    }
    out.insert(
        name.clone(),
        ClassInfo {
            name,
            module: m.name.clone(),
            line: m.line_of(class.range.start().to_usize()),
            bases: Vec::new(),
            attributes: BTreeMap::new(),
            reduce: None,
            warnings: Vec::new(),
        },
    );
}

/// Flattens every attribute type of `record` into class names. Unknown
/// parts produce one warning each.
pub fn extract_attribute_types(record: &ClassRecord) -> (BTreeSet<QualifiedName>, Vec<String>) {
    let mut names = BTreeSet::new();
    let mut warnings = Vec::new();
    for (attr, t) in &record.attributes {
        let mut unknowns = Vec::new();
        t.collect_names(&mut names, &mut unknowns);
        warnings.extend(unknowns.into_iter().map(|why| format!("{}.{attr}: {why}", record.name)));
    }
    (names, warnings)
}
