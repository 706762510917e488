//! Independent closure oracle for policy generation.

use std::collections::BTreeSet;

use pickleward::cache::ClassCache;
use pickleward::index::{Callee, ModuleIndex, TypeExpr};
use pickleward::name::{qn, QualifiedName};

pub type Names = BTreeSet<QualifiedName>;

/// Types whose values need no import. Kept apart from the generator's list
/// so that the oracle restates the rule rather than reusing it.
const DATA_TYPES: [&str; 8] = [
    "builtins.NoneType",
    "builtins.bool",
    "builtins.dict",
    "builtins.float",
    "builtins.int",
    "builtins.list",
    "builtins.str",
    "builtins.tuple",
];

fn mentioned(t: &TypeExpr, out: &mut Vec<QualifiedName>) {
    match t {
        TypeExpr::Named { name } => out.push(name.clone()),
        TypeExpr::Optional { inner } => mentioned(inner, out),
        TypeExpr::Union { members } => members.iter().for_each(|m| mentioned(m, out)),
        TypeExpr::Tuple { elems } => elems.iter().for_each(|m| mentioned(m, out)),
        TypeExpr::Sequence { container, elem } => {
            out.extend(container.clone());
            mentioned(elem, out);
        }
        TypeExpr::Mapping { container, key, value } => {
            out.extend(container.clone());
            mentioned(key, out);
            mentioned(value, out);
        }
        TypeExpr::Unknown { .. } => {}
    }
}

/// Brute-force closure: plain recursion with a visited set, subclasses found
/// by scanning every class's bases.
struct Oracle<'a> {
    index: &'a ModuleIndex,
    cache: &'a ClassCache,
    visited: Names,
    imports: Names,
    invocations: Names,
}

impl Oracle<'_> {
    fn subclasses(&self, name: &QualifiedName) -> Names {
        let mut found: Names = BTreeSet::new();
        loop {
            let before = found.len();
            for c in self.index.class_names() {
                let rec = self.index.resolve_class(c).expect("indexed class resolves");
                if rec.bases.iter().any(|b| b == name || found.contains(b)) {
                    found.insert(qn(c));
                }
            }
            if found.len() == before {
                return found;
            }
        }
    }

    fn visit(&mut self, name: QualifiedName) {
        if DATA_TYPES.contains(&name.as_str()) || !self.visited.insert(name.clone()) {
            return;
        }
        if let Some(entry) = self.cache.get(name.as_str()) {
            self.imports.extend(entry.imports.iter().cloned());
            self.invocations.extend(entry.invocations.iter().cloned());
            return;
        }
        if self.index.is_function(name.as_str()) {
            self.imports.insert(name);
            return;
        }
        let Ok(rec) = self.index.resolve_class(name.as_str()) else { return };
        let mut next = Vec::new();
        match &rec.reduce_summary {
            Some(r) => {
                if let Callee::Name(f) = &r.callable {
                    self.imports.insert(f.clone());
                    self.invocations.insert(f.clone());
                }
                self.imports.extend(r.references.iter().cloned());
                for t in r.arg_types.iter().chain(&r.state_types) {
                    mentioned(t, &mut next);
                }
            }
            None => {
                self.imports.insert(name.clone());
                next.extend(self.subclasses(&name));
                for t in rec.attributes.values() {
                    mentioned(t, &mut next);
                }
                next.extend(rec.external_ancestors.iter().cloned());
            }
        }
        for n in next {
            self.visit(n);
        }
    }
}

pub fn oracle(index: &ModuleIndex, cache: &ClassCache, root: &QualifiedName) -> (Names, Names) {
    let mut o = Oracle { index, cache, visited: Names::new(), imports: Names::new(), invocations: Names::new() };
    o.imports.insert(root.clone());
    o.visit(root.clone());
    (o.imports, o.invocations)
}

