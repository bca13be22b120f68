use std::collections::HashMap;
use std::fmt::Write;

use super::equiv::{check_signatures, Domain, EquivError};
use crate::ir::{to_signed, BinOp, CastOp, Function, Op, OpKind, Pred, Type};

fn sort(t: &Type) -> String {
    match t {
        Type::Int(w) => format!("(_ BitVec {w})"),
        Type::Index => "(_ BitVec 64)".into(),
        Type::MemRef { elem, .. } => format!("(Array (_ BitVec 64) (_ BitVec {elem}))"),
    }
}

fn bv(bits: u128, width: u32) -> String {
    format!("(_ bv{bits} {width})")
}

fn binop(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "bvadd",
        BinOp::Sub => "bvsub",
        BinOp::Mul => "bvmul",
        BinOp::And => "bvand",
        BinOp::Or => "bvor",
        BinOp::Xor => "bvxor",
        BinOp::Shl => "bvshl",
        BinOp::ShrS => "bvashr",
        BinOp::ShrU => "bvlshr",
    }
}

fn cmp(pred: Pred, a: &str, b: &str) -> String {
    let test = match pred {
        Pred::Eq => format!("(= {a} {b})"),
        Pred::Ne => format!("(not (= {a} {b}))"),
        Pred::Slt => format!("(bvslt {a} {b})"),
        Pred::Sle => format!("(bvsle {a} {b})"),
        Pred::Sgt => format!("(bvsgt {a} {b})"),
        Pred::Sge => format!("(bvsge {a} {b})"),
        Pred::Ult => format!("(bvult {a} {b})"),
        Pred::Ule => format!("(bvule {a} {b})"),
        Pred::Ugt => format!("(bvugt {a} {b})"),
        Pred::Uge => format!("(bvuge {a} {b})"),
    };
    format!("(ite {test} #b1 #b0)")
}

struct Emitter<'a> {
    out: &'a mut String,
    prefix: &'static str,
    /// Value name to SMT term.
    terms: HashMap<String, String>,
    types: HashMap<String, Type>,
    /// Statically known index values (constants and unrolled induction
    /// variables).
    indices: HashMap<String, i64>,
    suffix: String,
}

impl Emitter<'_> {
    fn term(&self, name: &str) -> String {
        self.terms
            .get(name)
            .cloned()
            .unwrap_or_else(|| format!("|undefined {name}|"))
    }

    fn define(&mut self, name: &str, ty: &Type, expr: String) {
        let sym = format!("{}_{}{}", self.prefix, name, self.suffix);
        let _ = writeln!(self.out, "(define-fun {sym} () {} {expr})", sort(ty));
        self.terms.insert(name.to_string(), sym);
        self.types.insert(name.to_string(), ty.clone());
    }

    fn width(&self, name: &str) -> u32 {
        self.types.get(name).and_then(Type::width).unwrap_or(64)
    }

    fn offset(&self, mem: &str, idx: &[String]) -> u128 {
        let shape = match self.types.get(mem) {
            Some(Type::MemRef { shape, .. }) => shape.clone(),
            _ => vec![1],
        };
        let mut off: i64 = 0;
        for (i, name) in idx.iter().enumerate() {
            let stride: u64 = shape[i + 1..].iter().product();
            off += self.indices.get(name).copied().unwrap_or(0) * stride as i64;
        }
        off as u128
    }

    fn block(&mut self, ops: &[Op]) -> Vec<String> {
        let mut yields = Vec::new();
        for op in ops {
            if matches!(op.kind, OpKind::Yield | OpKind::Return) {
                yields = op.operands.iter().map(|n| self.term(n)).collect();
            } else {
                self.op(op);
            }
        }
        yields
    }

    fn op(&mut self, op: &Op) {
        let arg = |e: &Self, i: usize| e.term(&op.operands[i]);
        let (name, ty) = match op.result() {
            Some(v) => (v.name.clone(), v.ty.clone()),
            None => (String::new(), Type::Int(1)),
        };
        match &op.kind {
            OpKind::Const(bits) => {
                if ty == Type::Index {
                    self.indices
                        .insert(name.clone(), to_signed(*bits, 64) as i64);
                }
                let w = ty.width().unwrap_or(64);
                self.define(&name, &ty, bv(*bits, w));
            }
            OpKind::Cast(c) => {
                let from = self.width(&op.operands[0]);
                let to = ty.width().unwrap_or(64);
                let x = arg(self, 0);
                let expr = match c {
                    CastOp::ExtS => format!("((_ sign_extend {}) {x})", to - from),
                    CastOp::ExtU => format!("((_ zero_extend {}) {x})", to - from),
                    CastOp::Trunc => format!("((_ extract {} 0) {x})", to - 1),
                };
                self.define(&name, &ty, expr);
            }
            OpKind::Binary(b) => {
                let expr = format!("({} {} {})", binop(*b), arg(self, 0), arg(self, 1));
                self.define(&name, &ty, expr);
            }
            OpKind::Cmp(p) => {
                let expr = cmp(*p, &arg(self, 0), &arg(self, 1));
                self.define(&name, &ty, expr);
            }
            OpKind::Select => {
                let expr = format!(
                    "(ite (= {} #b1) {} {})",
                    arg(self, 0),
                    arg(self, 1),
                    arg(self, 2)
                );
                self.define(&name, &ty, expr);
            }
            OpKind::Load => {
                let off = self.offset(&op.operands[0], &op.operands[1..]);
                let expr = format!("(select {} {})", arg(self, 0), bv(off, 64));
                self.define(&name, &ty, expr);
            }
            OpKind::Store => {
                let off = self.offset(&op.operands[1], &op.operands[2..]);
                let expr = format!("(store {} {} {})", arg(self, 1), bv(off, 64), arg(self, 0));
                self.define(&name, &ty, expr);
            }
            OpKind::If => {
                let cond = arg(self, 0);
                let then = self.block(&op.regions[0]);
                let els = match op.regions.get(1) {
                    Some(r) => self.block(r),
                    None => Vec::new(),
                };
                for (i, r) in op.results.iter().enumerate() {
                    let (Some(t), Some(e)) = (then.get(i), els.get(i)) else {
                        continue;
                    };
                    let expr = format!("(ite (= {cond} #b1) {t} {e})");
                    self.define(&r.name, &r.ty, expr);
                }
            }
            OpKind::For(l) => {
                let mut carried: Vec<String> = (0..op.operands.len()).map(|i| arg(self, i)).collect();
                let init_types: Vec<Type> = op
                    .operands
                    .iter()
                    .map(|n| self.types.get(n).cloned().unwrap_or(Type::Int(1)))
                    .collect();
                let outer = self.suffix.clone();
                let mut i = l.lower;
                while i < l.upper {
                    self.suffix = format!("{outer}!{i}");
                    self.indices.insert(l.iv.clone(), i);
                    self.define(&l.iv, &Type::Index, bv(i as u128, 64));
                    for ((name, term), t) in l.iter_args.iter().zip(&carried).zip(&init_types) {
                        self.terms.insert(name.clone(), term.clone());
                        self.types.insert(name.clone(), t.clone());
                    }
                    carried = self.block(&op.regions[0]);
                    i += l.step;
                }
                self.suffix = outer;
                for (r, term) in op.results.iter().zip(carried) {
                    self.define(&r.name, &r.ty, term);
                }
            }
            OpKind::Yield | OpKind::Return => {}
        }
    }
}

fn emit_function(out: &mut String, f: &Function, prefix: &'static str) -> String {
    let mut e = Emitter {
        out,
        prefix,
        terms: HashMap::new(),
        types: HashMap::new(),
        indices: HashMap::new(),
        suffix: String::new(),
    };
    for (i, a) in f.args.iter().enumerate() {
        e.terms.insert(a.name.clone(), format!("arg{i}"));
        e.types.insert(a.name.clone(), a.ty.clone());
    }
    let _ = writeln!(e.out, "; @{}", f.name);
    let yields = e.block(&f.body);
    yields.into_iter().next().unwrap_or_default()
}

/// SMT-LIB2 (QF_ABV) script asserting some input makes `f` and `g` differ;
/// `unsat` proves equivalence over `domain`. Loops are unrolled.
pub fn emit_smt(f: &Function, g: &Function, domain: &Domain) -> Result<String, EquivError> {
    check_signatures(f, g)?;
    let mut out = String::new();
    out.push_str("(set-option :produce-models true)\n(set-logic QF_ABV)\n");
    for (i, a) in f.args.iter().enumerate() {
        let _ = writeln!(out, "; arg{i} = %{} ({})", a.name, a.signal);
        let _ = writeln!(out, "(declare-const arg{i} {})", sort(&a.ty));
    }
    for pin in domain.pins() {
        let base = format!("arg{}", pin.arg);
        let target = match pin.element {
            Some(e) => format!("(select {base} {})", bv(e as u128, 64)),
            None => base,
        };
        let hi = pin.lo_bit + pin.width - 1;
        let _ = writeln!(
            out,
            "(assert (= ((_ extract {hi} {}) {target}) {}))",
            pin.lo_bit,
            bv(pin.value, pin.width)
        );
    }
    let left = emit_function(&mut out, f, "f");
    let right = emit_function(&mut out, g, "g");
    let ret_type = f
        .returned()
        .and_then(|r| f.value_types().get(r).cloned())
        .unwrap_or(Type::Int(1));
    match &ret_type {
        Type::MemRef { .. } => {
            let n = ret_type.num_elements();
            let diffs: Vec<String> = (0..n)
                .map(|i| {
                    let idx = bv(u128::from(i), 64);
                    format!("(distinct (select {left} {idx}) (select {right} {idx}))")
                })
                .collect();
            if diffs.len() == 1 {
                let _ = writeln!(out, "(assert {})", diffs[0]);
            } else {
                let _ = writeln!(out, "(assert (or {}))", diffs.join(" "));
            }
        }
        _ => {
            let _ = writeln!(out, "(assert (distinct {left} {right}))");
        }
    }
    out.push_str("(check-sat)\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_function;

    #[test]
    fn identical_one_op_functions() {
        let f = parse_function("func @k__o(%a: i8 {signal = \"a\"}) {\n %x = const 0 : i8\n return %x\n}")
            .unwrap();
        let smt = emit_smt(&f, &f, &Domain::Full).unwrap();
        assert!(smt.contains("(set-logic QF_ABV)"));
        assert!(smt.contains("(define-fun f_x () (_ BitVec 8) (_ bv0 8))"));
        assert!(smt.contains("(assert (distinct f_x g_x))"));
        assert!(smt.ends_with("(check-sat)\n"));
    }

    #[test]
    fn loops_unroll_and_memrefs_are_arrays() {
        let f = parse_function(
            "func @d__o(%m: memref<2xi8> {signal = \"m\"}, %c: i8 {signal = \"c\"}) {\n\
             %r = scf.for %i = 0 to 2 step 1 iter_args(%s = %c) -> i8 {\n\
               %v = memref.load %m[%i] : i8\n %n = addi %s, %v : i8\n scf.yield %n\n }\n return %r\n}",
        )
        .unwrap();
        let smt = emit_smt(&f, &f, &Domain::Full).unwrap();
        assert!(smt.contains("(declare-const arg0 (Array (_ BitVec 64) (_ BitVec 8)))"));
        assert!(smt.contains("(define-fun f_v!1 () (_ BitVec 8) (select arg0 (_ bv1 64)))"));
        assert!(smt.contains("(define-fun f_n!1 () (_ BitVec 8) (bvadd f_n!0 f_v!1))"));
    }
}
