use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{CastOp, Function, Module, Op, OpKind, Type};

/// A broken IR invariant, tagged with the offending op and the rule name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub function: String,
    pub op: String,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}: {}: {}: {}", self.function, self.op, self.rule, self.detail)
    }
}

#[derive(Clone, Copy)]
enum IndexInfo {
    Const(i64),
    /// Inclusive range of a loop induction variable.
    Range(i64, i64),
}

struct Checker<'a> {
    func: &'a Function,
    violations: Vec<Violation>,
    defined: HashSet<String>,
    scopes: Vec<HashMap<String, Type>>,
    index_info: HashMap<String, IndexInfo>,
}

impl<'a> Checker<'a> {
    fn report(&mut self, op: &Op, rule: &'static str, detail: impl Into<String>) {
        self.violations.push(Violation {
            function: self.func.name.clone(),
            op: op.identity(),
            rule,
            detail: detail.into(),
        });
    }

    fn lookup(&self, name: &str) -> Option<&Type> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn define(&mut self, op: &Op, name: &str, ty: Type) {
        if !self.defined.insert(name.to_string()) {
            self.report(op, "redefined value", format!("`%{name}` is defined more than once"));
        }
        if !ty.is_valid() {
            self.report(op, "invalid type", format!("`%{name}` has invalid type {ty}"));
        }
        self.scopes.last_mut().expect("scope").insert(name.to_string(), ty);
    }

    fn operand_types(&mut self, op: &Op) -> Option<Vec<Type>> {
        let mut types = Vec::with_capacity(op.operands.len());
        let mut ok = true;
        for name in &op.operands {
            match self.lookup(name).cloned() {
                Some(t) => types.push(t),
                None => {
                    self.report(op, "undefined value", format!("use of undefined value `%{name}`"));
                    ok = false;
                }
            }
        }
        ok.then_some(types)
    }

    fn expect_arity(&mut self, op: &Op, operands: usize, results: usize) -> bool {
        if op.operands.len() != operands || op.results.len() != results {
            self.report(
                op,
                "operand count",
                format!(
                    "`{}` takes {operands} operand(s) and {results} result(s)",
                    op.kind.mnemonic()
                ),
            );
            return false;
        }
        true
    }

    fn check_block(&mut self, ops: &[Op], terminator: Terminator) {
        for (i, op) in ops.iter().enumerate() {
            let last = i + 1 == ops.len();
            if op.kind.is_terminator() && !last {
                self.report(op, "misplaced terminator", "terminator must be the last op of its region");
            }
            self.check_op(op, &terminator, last);
        }
        let ends_with = |k: fn(&OpKind) -> bool| ops.last().is_some_and(|op| k(&op.kind));
        match terminator {
            Terminator::Return => {
                if !ends_with(|k| *k == OpKind::Return) {
                    self.violations.push(Violation {
                        function: self.func.name.clone(),
                        op: "body".into(),
                        rule: "missing return",
                        detail: "function body must end with `return`".into(),
                    });
                }
            }
            Terminator::Yield(ref types) => {
                if !ends_with(|k| *k == OpKind::Yield) && !types.is_empty() {
                    self.violations.push(Violation {
                        function: self.func.name.clone(),
                        op: "region".into(),
                        rule: "missing yield",
                        detail: "region producing values must end with `scf.yield`".into(),
                    });
                }
            }
            Terminator::LoopYield(_) => {
                if !ends_with(|k| *k == OpKind::Yield) {
                    self.violations.push(Violation {
                        function: self.func.name.clone(),
                        op: "loop".into(),
                        rule: "loop-carried arity",
                        detail: "loop body must end with `scf.yield`".into(),
                    });
                }
            }
        }
    }

    fn check_index(&mut self, op: &Op, name: &str, extent: u64) {
        match self.lookup(name) {
            Some(Type::Index) => {}
            Some(_) => {
                self.report(op, "bad index", format!("index `%{name}` is not index-typed"));
                return;
            }
            None => return,
        }
        let extent = extent as i64;
        match self.index_info.get(name).copied() {
            Some(IndexInfo::Const(v)) => {
                if v < 0 || v >= extent {
                    self.report(
                        op,
                        "index out of bounds",
                        format!("constant index {v} outside extent {extent}"),
                    );
                }
            }
            Some(IndexInfo::Range(lo, hi)) => {
                if lo < 0 || hi >= extent {
                    self.report(
                        op,
                        "index out of bounds",
                        format!("induction range [{lo}, {hi}] outside extent {extent}"),
                    );
                }
            }
            None => self.report(
                op,
                "bad index",
                format!("index `%{name}` is neither a constant nor an induction variable"),
            ),
        }
    }

    fn check_op(&mut self, op: &Op, terminator: &Terminator, last: bool) {
        for r in &op.results {
            if !r.ty.is_valid() {
                self.report(op, "invalid type", format!("result type {} is invalid", r.ty));
            }
        }
        let Some(types) = self.operand_types(op) else {
            for r in &op.results {
                self.define(op, &r.name, r.ty.clone());
            }
            return;
        };
        match &op.kind {
            OpKind::Const(bits) => {
                if self.expect_arity(op, 0, 1) {
                    match &op.results[0].ty {
                        Type::Int(w) => {
                            if *bits & !super::mask(*w) != 0 {
                                self.report(op, "constant range", "constant exceeds its width");
                            }
                        }
                        Type::Index => {
                            let v = super::to_signed(*bits, 64) as i64;
                            self.index_info
                                .insert(op.results[0].name.clone(), IndexInfo::Const(v));
                        }
                        t => self.report(op, "type mismatch", format!("constant of type {t}")),
                    }
                }
            }
            OpKind::Cast(c) => {
                if self.expect_arity(op, 1, 1) {
                    match (&types[0], &op.results[0].ty) {
                        (Type::Int(from), Type::Int(to)) => match c {
                            CastOp::ExtS | CastOp::ExtU if to <= from => self.report(
                                op,
                                "ext must widen",
                                format!("i{from} to i{to} does not widen"),
                            ),
                            CastOp::Trunc if to >= from => self.report(
                                op,
                                "trunc must narrow",
                                format!("i{from} to i{to} does not narrow"),
                            ),
                            _ => {}
                        },
                        (a, b) => self.report(op, "type mismatch", format!("cast from {a} to {b}")),
                    }
                }
            }
            OpKind::Binary(_) => {
                if self.expect_arity(op, 2, 1) {
                    match (&types[0], &types[1], &op.results[0].ty) {
                        (Type::Int(a), Type::Int(b), Type::Int(r)) => {
                            if a != b || a != r {
                                self.report(
                                    op,
                                    "width mismatch",
                                    format!("operands i{a}, i{b} with result i{r}"),
                                );
                            }
                        }
                        _ => self.report(op, "type mismatch", "arithmetic requires integers"),
                    }
                }
            }
            OpKind::Cmp(_) => {
                if self.expect_arity(op, 2, 1) {
                    match (&types[0], &types[1]) {
                        (Type::Int(a), Type::Int(b)) if a != b => self.report(
                            op,
                            "width mismatch",
                            format!("comparison of i{a} with i{b}"),
                        ),
                        (Type::Int(_), Type::Int(_)) => {}
                        _ => self.report(op, "type mismatch", "comparison requires integers"),
                    }
                    if op.results[0].ty != Type::Int(1) {
                        self.report(op, "type mismatch", "cmpi must produce i1");
                    }
                }
            }
            OpKind::Select => {
                if self.expect_arity(op, 3, 1) {
                    if types[0] != Type::Int(1) {
                        self.report(op, "type mismatch", "select condition must be i1");
                    }
                    if types[1] != types[2] || types[1] != op.results[0].ty {
                        self.report(op, "type mismatch", "select arms and result must share a type");
                    }
                }
            }
            OpKind::Load => {
                if op.results.len() != 1 || op.operands.is_empty() {
                    self.expect_arity(op, 1, 1);
                } else if let Type::MemRef { shape, elem } = &types[0] {
                    if op.operands.len() - 1 != shape.len() {
                        self.report(op, "index count", "number of indices must equal memref rank");
                    } else {
                        for (idx, extent) in op.operands[1..].iter().zip(shape) {
                            self.check_index(op, idx, *extent);
                        }
                    }
                    if op.results[0].ty != Type::Int(*elem) {
                        self.report(op, "type mismatch", "load result must be the element type");
                    }
                } else {
                    self.report(op, "type mismatch", "load source must be a memref");
                }
            }
            OpKind::Store => {
                if op.results.len() != 1 || op.operands.len() < 2 {
                    self.expect_arity(op, 2, 1);
                } else if let Type::MemRef { shape, elem } = &types[1] {
                    if op.operands.len() - 2 != shape.len() {
                        self.report(op, "index count", "number of indices must equal memref rank");
                    } else {
                        for (idx, extent) in op.operands[2..].iter().zip(shape) {
                            self.check_index(op, idx, *extent);
                        }
                    }
                    if types[0] != Type::Int(*elem) {
                        self.report(op, "type mismatch", "stored value must be the element type");
                    }
                    if op.results[0].ty != types[1] {
                        self.report(op, "type mismatch", "store yields a memref of the same type");
                    }
                } else {
                    self.report(op, "type mismatch", "store target must be a memref");
                }
            }
            OpKind::If => {
                if op.operands.len() != 1 {
                    self.report(op, "operand count", "scf.if takes one condition");
                } else if types[0] != Type::Int(1) {
                    self.report(op, "type mismatch", "scf.if condition must be i1");
                }
                if op.regions.is_empty() || op.regions.len() > 2 {
                    self.report(op, "region count", "scf.if has a then and an optional else region");
                } else if !op.results.is_empty() && op.regions.len() != 2 {
                    self.report(op, "region count", "scf.if with results needs an else region");
                }
                let result_types: Vec<Type> = op.results.iter().map(|v| v.ty.clone()).collect();
                for region in &op.regions {
                    self.scopes.push(HashMap::new());
                    self.check_block(region, Terminator::Yield(result_types.clone()));
                    self.scopes.pop();
                    self.check_yield(op, region, &result_types, "type mismatch");
                }
            }
            OpKind::For(l) => {
                if l.step <= 0 || l.lower > l.upper || l.lower < 0 {
                    self.report(op, "loop bounds", "loop needs 0 <= lower <= upper and step > 0");
                }
                if l.iter_args.len() != op.operands.len() || l.iter_args.len() != op.results.len() {
                    self.report(
                        op,
                        "loop-carried arity",
                        format!(
                            "{} iter_args, {} initial values, {} results",
                            l.iter_args.len(),
                            op.operands.len(),
                            op.results.len()
                        ),
                    );
                }
                if op.regions.len() != 1 {
                    self.report(op, "region count", "scf.for has exactly one body region");
                }
                self.scopes.push(HashMap::new());
                self.define(op, &l.iv, Type::Index);
                let hi = if l.upper > l.lower {
                    l.lower + ((l.upper - l.lower - 1) / l.step.max(1)) * l.step.max(1)
                } else {
                    l.lower
                };
                self.index_info
                    .insert(l.iv.clone(), IndexInfo::Range(l.lower, hi.max(l.lower)));
                for (name, t) in l.iter_args.iter().zip(&types) {
                    self.define(op, name, t.clone());
                }
                for (r, t) in op.results.iter().zip(&types) {
                    if r.ty != *t {
                        self.report(op, "type mismatch", "loop result types must match iter_args");
                    }
                }
                if let Some(body) = op.regions.first() {
                    self.check_block(body, Terminator::LoopYield(types.len()));
                    if let Some(y) = body.last().filter(|o| o.kind == OpKind::Yield) {
                        if y.operands.len() != l.iter_args.len() {
                            self.report(
                                op,
                                "loop-carried arity",
                                format!(
                                    "yield carries {} values for {} iter_args",
                                    y.operands.len(),
                                    l.iter_args.len()
                                ),
                            );
                        } else {
                            let yielded: Vec<Option<Type>> =
                                y.operands.iter().map(|n| self.lookup(n).cloned()).collect();
                            if yielded.iter().zip(&types).any(|(y, t)| y.as_ref().is_some_and(|y| y != t)) {
                                self.report(op, "type mismatch", "yielded types must match iter_args");
                            }
                        }
                    }
                }
                self.scopes.pop();
            }
            OpKind::Yield => {
                if !matches!(terminator, Terminator::Yield(_) | Terminator::LoopYield(_)) || !last {
                    self.report(op, "misplaced terminator", "scf.yield outside a region");
                }
            }
            OpKind::Return => {
                if !matches!(terminator, Terminator::Return) {
                    self.report(op, "misplaced terminator", "return inside a nested region");
                }
                if op.operands.len() != 1 {
                    self.report(op, "return arity", "a function returns exactly one value");
                }
            }
        }
        for r in &op.results {
            self.define(op, &r.name, r.ty.clone());
        }
    }

    fn check_yield(&mut self, op: &Op, region: &[Op], expected: &[Type], rule: &'static str) {
        let Some(y) = region.last().filter(|o| o.kind == OpKind::Yield) else {
            return;
        };
        if y.operands.len() != expected.len() {
            self.report(
                op,
                rule,
                format!("region yields {} values, expected {}", y.operands.len(), expected.len()),
            );
        }
    }
}

enum Terminator {
    Return,
    Yield(Vec<Type>),
    LoopYield(#[allow(dead_code)] usize),
}

/// Checks every IR invariant of a function.
pub fn verify(f: &Function) -> Result<(), Vec<Violation>> {
    let mut c = Checker {
        func: f,
        violations: Vec::new(),
        defined: HashSet::new(),
        scopes: vec![HashMap::new()],
        index_info: HashMap::new(),
    };
    for a in &f.args {
        let arg_op = format!("%{}", a.name);
        if a.signal.is_empty() {
            c.violations.push(Violation {
                function: f.name.clone(),
                op: arg_op.clone(),
                rule: "missing signal name",
                detail: "every argument carries its hardware signal name".into(),
            });
        }
        if !a.ty.is_valid() {
            c.violations.push(Violation {
                function: f.name.clone(),
                op: arg_op.clone(),
                rule: "invalid type",
                detail: format!("argument type {} is invalid", a.ty),
            });
        }
        if !c.defined.insert(a.name.clone()) {
            c.violations.push(Violation {
                function: f.name.clone(),
                op: arg_op,
                rule: "redefined value",
                detail: format!("argument `%{}` is declared twice", a.name),
            });
        }
        c.scopes[0].insert(a.name.clone(), a.ty.clone());
    }
    c.check_block(&f.body, Terminator::Return);
    if c.violations.is_empty() {
        Ok(())
    } else {
        Err(c.violations)
    }
}

/// Verifies every function and checks function names are unique.
pub fn verify_module(m: &Module) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut names = HashSet::new();
    for f in &m.functions {
        if !names.insert(f.name.as_str()) {
            out.push(Violation {
                function: f.name.clone(),
                op: "func".into(),
                rule: "duplicate function",
                detail: "function names must be unique".into(),
            });
        }
        if let Err(v) = verify(f) {
            out.extend(v);
        }
    }
    out
}
