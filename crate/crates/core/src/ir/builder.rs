use std::collections::{HashMap, HashSet};

use super::{
    from_signed, Arg, BinOp, CastOp, ForLoop, Function, Op, OpKind, Pred, Type, Value,
};

/// Hands out value names that are unused anywhere in a function.
#[derive(Debug, Clone, Default)]
pub struct NameGen {
    used: HashSet<String>,
}

impl NameGen {
    pub fn new() -> Self {
        NameGen::default()
    }

    /// Seeds the generator with every name `f` already defines.
    pub fn for_function(f: &Function) -> Self {
        NameGen {
            used: f.value_types().into_keys().collect(),
        }
    }

    pub fn fresh(&mut self, hint: &str) -> String {
        if self.used.insert(hint.to_string()) {
            return hint.to_string();
        }
        let mut n = 1;
        loop {
            let name = format!("{hint}_{n}");
            if self.used.insert(name.clone()) {
                return name;
            }
            n += 1;
        }
    }

    pub fn reserve(&mut self, name: &str) -> bool {
        self.used.insert(name.to_string())
    }
}

/// Incremental function builder. Constants are shared per region nesting
/// level.
#[derive(Debug)]
pub struct Builder {
    func: Function,
    blocks: Vec<Vec<Op>>,
    types: HashMap<String, Type>,
    consts: Vec<HashMap<(u128, Type), String>>,
    names: NameGen,
    emitted: usize,
}

impl Builder {
    pub fn new(instruction: &str, asv: &str) -> Self {
        Builder {
            func: Function::new(instruction, asv),
            blocks: vec![Vec::new()],
            types: HashMap::new(),
            consts: vec![HashMap::new()],
            names: NameGen::new(),
            emitted: 0,
        }
    }

    pub fn arg(&mut self, name: &str, ty: Type, signal: &str) -> String {
        let name = self.names.fresh(name);
        self.types.insert(name.clone(), ty.clone());
        self.func.args.push(Arg::new(name.clone(), ty, signal));
        name
    }

    pub fn fresh(&mut self, hint: &str) -> String {
        self.names.fresh(hint)
    }

    /// Reserves a fresh name with a known type, for region arguments.
    pub fn declare(&mut self, hint: &str, ty: Type) -> String {
        let name = self.names.fresh(hint);
        self.types.insert(name.clone(), ty);
        name
    }

    pub fn ty(&self, v: &str) -> Type {
        self.types
            .get(v)
            .cloned()
            .unwrap_or_else(|| panic!("builder: unknown value %{v}"))
    }

    pub fn width(&self, v: &str) -> u32 {
        self.ty(v).width().expect("scalar value")
    }

    /// Number of ops pushed so far, counted one by one as they are emitted.
    pub fn ops_emitted(&self) -> usize {
        self.emitted
    }

    pub fn push(&mut self, op: Op) {
        self.emitted += 1;
        for r in &op.results {
            self.types.insert(r.name.clone(), r.ty.clone());
        }
        self.blocks.last_mut().expect("block").push(op);
    }

    fn emit(&mut self, hint: &str, kind: OpKind, ty: Type, operands: Vec<String>) -> String {
        let name = self.names.fresh(hint);
        self.push(Op::new(kind, vec![Value::new(name.clone(), ty)], operands));
        name
    }

    /// Emits (or reuses) a constant; `v` is taken modulo the width.
    pub fn constant(&mut self, v: i128, ty: Type) -> String {
        let bits = from_signed(v, ty.width().expect("scalar constant"));
        let key = (bits, ty.clone());
        if let Some(name) = self.consts.last().and_then(|c| c.get(&key)) {
            return name.clone();
        }
        let hint = match &ty {
            Type::Index => format!("c{v}"),
            Type::Int(w) if v < 0 => format!("cm{}_i{w}", v.unsigned_abs()),
            Type::Int(w) => format!("c{v}_i{w}"),
            Type::MemRef { .. } => unreachable!(),
        };
        let name = self.emit(&hint, OpKind::Const(bits), ty, Vec::new());
        self.consts.last_mut().expect("scope").insert(key, name.clone());
        name
    }

    pub fn index(&mut self, v: u64) -> String {
        self.constant(v as i128, Type::Index)
    }

    pub fn cast(&mut self, op: CastOp, x: &str, to: u32) -> String {
        let hint = match op {
            CastOp::ExtS => "sx",
            CastOp::ExtU => "zx",
            CastOp::Trunc => "tr",
        };
        self.emit(hint, OpKind::Cast(op), Type::Int(to), vec![x.into()])
    }

    pub fn cast_named(&mut self, hint: &str, op: CastOp, x: &str, to: u32) -> String {
        self.emit(hint, OpKind::Cast(op), Type::Int(to), vec![x.into()])
    }

    pub fn binary(&mut self, op: BinOp, a: &str, b: &str) -> String {
        let hint = super::binop_mnemonic(op).trim_end_matches('i').to_string();
        self.binary_named(&hint, op, a, b)
    }

    pub fn binary_named(&mut self, hint: &str, op: BinOp, a: &str, b: &str) -> String {
        let ty = self.ty(a);
        self.emit(hint, OpKind::Binary(op), ty, vec![a.into(), b.into()])
    }

    pub fn cmp(&mut self, pred: Pred, a: &str, b: &str) -> String {
        self.emit(
            pred.mnemonic(),
            OpKind::Cmp(pred),
            Type::Int(1),
            vec![a.into(), b.into()],
        )
    }

    pub fn select(&mut self, cond: &str, a: &str, b: &str) -> String {
        self.select_named("sel", cond, a, b)
    }

    pub fn select_named(&mut self, hint: &str, cond: &str, a: &str, b: &str) -> String {
        let ty = self.ty(a);
        self.emit(hint, OpKind::Select, ty, vec![cond.into(), a.into(), b.into()])
    }

    pub fn load(&mut self, hint: &str, mem: &str, idx: &[String]) -> String {
        let elem = match self.ty(mem) {
            Type::MemRef { elem, .. } => elem,
            t => panic!("builder: load from non-memref {t}"),
        };
        let mut operands = vec![mem.to_string()];
        operands.extend(idx.iter().cloned());
        self.emit(hint, OpKind::Load, Type::Int(elem), operands)
    }

    pub fn load_at(&mut self, hint: &str, mem: &str, idx: &[u64]) -> String {
        let idx: Vec<String> = idx.iter().map(|i| self.index(*i)).collect();
        self.load(hint, mem, &idx)
    }

    pub fn store(&mut self, hint: &str, v: &str, mem: &str, idx: &[String]) -> String {
        let ty = self.ty(mem);
        let mut operands = vec![v.to_string(), mem.to_string()];
        operands.extend(idx.iter().cloned());
        self.emit(hint, OpKind::Store, ty, operands)
    }

    pub fn store_at(&mut self, hint: &str, v: &str, mem: &str, idx: &[u64]) -> String {
        let idx: Vec<String> = idx.iter().map(|i| self.index(*i)).collect();
        self.store(hint, v, mem, &idx)
    }

    pub fn begin_region(&mut self) {
        self.blocks.push(Vec::new());
        self.consts.push(HashMap::new());
    }

    /// Closes the innermost region, terminating it with `scf.yield`.
    pub fn end_region(&mut self, yields: &[String]) -> Vec<Op> {
        self.push(Op::new(OpKind::Yield, Vec::new(), yields.to_vec()));
        self.consts.pop();
        self.blocks.pop().expect("open region")
    }

    pub fn if_op(
        &mut self,
        hint: &str,
        cond: &str,
        then: Vec<Op>,
        els: Vec<Op>,
        result_types: &[Type],
    ) -> Vec<String> {
        let results: Vec<Value> = result_types
            .iter()
            .map(|t| Value::new(self.names.fresh(hint), t.clone()))
            .collect();
        let names = results.iter().map(|v| v.name.clone()).collect();
        self.push(Op::new(OpKind::If, results, vec![cond.into()]).with_regions(vec![then, els]));
        names
    }

    /// Emits an `scf.for` whose iv and iter args were reserved with
    /// [`Builder::declare`]; `inits` are the initial values.
    #[allow(clippy::too_many_arguments)]
    pub fn for_op(
        &mut self,
        hint: &str,
        (lower, upper, step): (i64, i64, i64),
        iv: &str,
        iter_args: &[String],
        inits: &[String],
        body: Vec<Op>,
    ) -> Vec<String> {
        let results: Vec<Value> = inits
            .iter()
            .map(|i| Value::new(self.names.fresh(hint), self.ty(i)))
            .collect();
        let names = results.iter().map(|v| v.name.clone()).collect();
        let l = ForLoop {
            lower,
            upper,
            step,
            iv: iv.to_string(),
            iter_args: iter_args.to_vec(),
        };
        self.push(Op::new(OpKind::For(l), results, inits.to_vec()).with_regions(vec![body]));
        names
    }

    pub fn set_attr(&mut self, key: &str, value: super::AttrValue) {
        self.func.attrs.insert(key.to_string(), value);
    }

    pub fn finish(mut self, ret: &str) -> Function {
        self.push(Op::new(OpKind::Return, Vec::new(), vec![ret.into()]));
        assert_eq!(self.blocks.len(), 1, "builder: unclosed region");
        self.func.body = self.blocks.pop().expect("body");
        self.func
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::verify;

    #[test]
    fn builds_verifying_loop() {
        let mut b = Builder::new("dot", "acc");
        let a = b.arg("a", Type::memref(&[4], 8), "in_a");
        let c = b.arg("c", Type::Int(8), "in_c");
        let iv = b.declare("i", Type::Index);
        let acc = b.declare("acc", Type::Int(8));
        b.begin_region();
        let x = b.load("x", &a, std::slice::from_ref(&iv));
        let s = b.binary(BinOp::Add, &acc, &x);
        let body = b.end_region(&[s]);
        let r = b.for_op("r", (0, 4, 1), &iv, &[acc], &[c], body);
        let f = b.finish(&r[0]);
        verify(&f).unwrap();
        assert_eq!(f.op_count(), 5);
    }

    #[test]
    fn constants_are_shared_per_level() {
        let mut b = Builder::new("k", "o");
        let x = b.constant(3, Type::Int(8));
        let y = b.constant(3, Type::Int(8));
        let z = b.constant(-1, Type::Int(8));
        assert_eq!(x, y);
        assert_ne!(x, z);
        let f = b.finish(&z);
        assert_eq!(f.op_count(), 3);
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let mut n = NameGen::new();
        assert_eq!(n.fresh("x"), "x");
        assert_eq!(n.fresh("x"), "x_1");
        assert_eq!(n.fresh("x"), "x_2");
    }
}
