use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::ir::{from_signed, mask, to_signed, BinOp, CastOp, Function, Op, OpKind, Pred, Type};

/// Value bound to one function argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArgValue {
    Scalar(u128),
    Array(Vec<u128>),
}

/// One assignment per function argument, in argument order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Environment {
    pub values: Vec<ArgValue>,
}

/// Result of evaluating a function: the returned scalar or memref snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Output {
    Int { bits: u128, width: u32 },
    Mem { elems: Vec<u128>, width: u32 },
}

impl Output {
    /// Signed interpretation of a scalar result.
    pub fn as_signed(&self) -> Option<i128> {
        match self {
            Output::Int { bits, width } => Some(to_signed(*bits, *width)),
            Output::Mem { .. } => None,
        }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Output::Int { bits, width } => write!(f, "{}", to_signed(*bits, *width)),
            Output::Mem { elems, width } => {
                let items: Vec<String> = elems
                    .iter()
                    .map(|e| to_signed(*e, *width).to_string())
                    .collect();
                write!(f, "[{}]", items.join(", "))
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("environment has {got} values for {expected} arguments")]
    Arity { expected: usize, got: usize },
    #[error("argument `%{arg}`: {message}")]
    BadArgument { arg: String, message: String },
    #[error("internal evaluation error: {0}")]
    Internal(String),
}

impl Environment {
    pub fn new(values: Vec<ArgValue>) -> Self {
        Environment { values }
    }

    /// All-zero assignment for `f`'s arguments.
    pub fn zeros(f: &Function) -> Self {
        let values = f
            .args
            .iter()
            .map(|a| match &a.ty {
                Type::MemRef { .. } => ArgValue::Array(vec![0; a.ty.num_elements() as usize]),
                _ => ArgValue::Scalar(0),
            })
            .collect();
        Environment { values }
    }

    /// Builds an environment from signed integers, one slice per argument
    /// (scalars take a one-element slice).
    pub fn from_signed(f: &Function, values: &[&[i128]]) -> Result<Self, EvalError> {
        if values.len() != f.args.len() {
            return Err(EvalError::Arity {
                expected: f.args.len(),
                got: values.len(),
            });
        }
        let mut out = Vec::with_capacity(values.len());
        for (a, vals) in f.args.iter().zip(values) {
            match &a.ty {
                Type::MemRef { elem, .. } => {
                    out.push(ArgValue::Array(vals.iter().map(|v| from_signed(*v, *elem)).collect()))
                }
                t => {
                    let w = t.width().unwrap_or(64);
                    let v = vals.first().copied().unwrap_or(0);
                    out.push(ArgValue::Scalar(from_signed(v, w)));
                }
            }
        }
        let env = Environment { values: out };
        env.check(f)?;
        Ok(env)
    }

    /// Checks the environment is complete and every value fits its width.
    pub fn check(&self, f: &Function) -> Result<(), EvalError> {
        if self.values.len() != f.args.len() {
            return Err(EvalError::Arity {
                expected: f.args.len(),
                got: self.values.len(),
            });
        }
        for (a, v) in f.args.iter().zip(&self.values) {
            let bad = |message: String| EvalError::BadArgument {
                arg: a.name.clone(),
                message,
            };
            match (&a.ty, v) {
                (Type::MemRef { elem, .. }, ArgValue::Array(xs)) => {
                    if xs.len() as u64 != a.ty.num_elements() {
                        return Err(bad(format!(
                            "{} elements for {}",
                            xs.len(),
                            a.ty
                        )));
                    }
                    if xs.iter().any(|x| x & !mask(*elem) != 0) {
                        return Err(bad(format!("element exceeds i{elem}")));
                    }
                }
                (Type::MemRef { .. }, ArgValue::Scalar(_)) => {
                    return Err(bad("scalar bound to a memref".into()))
                }
                (t, ArgValue::Scalar(x)) => {
                    if x & !mask(t.width().unwrap_or(64)) != 0 {
                        return Err(bad(format!("value exceeds {t}")));
                    }
                }
                (_, ArgValue::Array(_)) => return Err(bad("array bound to a scalar".into())),
            }
        }
        Ok(())
    }

    /// Line-oriented text: `%name = v` or `%name = [v, ...]`, signed decimal.
    pub fn to_text(&self, f: &Function) -> String {
        let mut out = String::new();
        for (a, v) in f.args.iter().zip(&self.values) {
            let w = match &a.ty {
                Type::MemRef { elem, .. } => *elem,
                t => t.width().unwrap_or(64),
            };
            match v {
                ArgValue::Scalar(x) => out.push_str(&format!("%{} = {}\n", a.name, to_signed(*x, w))),
                ArgValue::Array(xs) => {
                    let items: Vec<String> = xs.iter().map(|x| to_signed(*x, w).to_string()).collect();
                    out.push_str(&format!("%{} = [{}]\n", a.name, items.join(", ")));
                }
            }
        }
        out
    }

    /// Parses the format written by [`Environment::to_text`]; lines that do
    /// not start with `%` are ignored.
    pub fn from_text(f: &Function, text: &str) -> Result<Self, EvalError> {
        let mut found: HashMap<&str, Vec<i128>> = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            let Some(rest) = line.strip_prefix('%') else {
                continue;
            };
            let Some((name, value)) = rest.split_once('=') else {
                continue;
            };
            let value = value.trim().trim_start_matches('[').trim_end_matches(']');
            let nums: Result<Vec<i128>, _> = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse::<i128>)
                .collect();
            let nums = nums.map_err(|e| EvalError::BadArgument {
                arg: name.trim().to_string(),
                message: e.to_string(),
            })?;
            found.insert(name.trim(), nums);
        }
        let mut slices: Vec<Vec<i128>> = Vec::new();
        for a in &f.args {
            match found.get(a.name.as_str()) {
                Some(v) => slices.push(v.clone()),
                None => {
                    return Err(EvalError::BadArgument {
                        arg: a.name.clone(),
                        message: "missing from environment text".into(),
                    })
                }
            }
        }
        let refs: Vec<&[i128]> = slices.iter().map(Vec::as_slice).collect();
        Environment::from_signed(f, &refs)
    }
}

pub fn eval_binary(op: BinOp, a: u128, b: u128, width: u32) -> u128 {
    let m = mask(width);
    let (a, b) = (a & m, b & m);
    let r = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => {
            if b >= u128::from(width) {
                0
            } else {
                a << b
            }
        }
        BinOp::ShrU => {
            if b >= u128::from(width) {
                0
            } else {
                a >> b
            }
        }
        BinOp::ShrS => {
            let s = to_signed(a, width);
            let amount = b.min(u128::from(width - 1)) as u32;
            (s >> amount) as u128
        }
    };
    r & m
}

pub fn eval_cast(op: CastOp, x: u128, from: u32, to: u32) -> u128 {
    match op {
        CastOp::ExtS => from_signed(to_signed(x, from), to),
        CastOp::ExtU => x & mask(from),
        CastOp::Trunc => x & mask(to),
    }
}

pub fn eval_cmp(pred: Pred, a: u128, b: u128, width: u32) -> bool {
    let (ua, ub) = (a & mask(width), b & mask(width));
    let (sa, sb) = (to_signed(a, width), to_signed(b, width));
    match pred {
        Pred::Eq => ua == ub,
        Pred::Ne => ua != ub,
        Pred::Slt => sa < sb,
        Pred::Sle => sa <= sb,
        Pred::Sgt => sa > sb,
        Pred::Sge => sa >= sb,
        Pred::Ult => ua < ub,
        Pred::Ule => ua <= ub,
        Pred::Ugt => ua > ub,
        Pred::Uge => ua >= ub,
    }
}

type Slot = usize;

#[derive(Debug, Clone)]
struct Block {
    insts: Vec<Inst>,
    yields: Vec<Slot>,
}

#[derive(Debug, Clone)]
enum Inst {
    Const {
        dst: Slot,
        bits: u128,
    },
    Cast {
        dst: Slot,
        src: Slot,
        op: CastOp,
        from: u32,
        to: u32,
    },
    Binary {
        dst: Slot,
        a: Slot,
        b: Slot,
        op: BinOp,
        width: u32,
    },
    Cmp {
        dst: Slot,
        a: Slot,
        b: Slot,
        pred: Pred,
        width: u32,
    },
    Select {
        dst: Slot,
        cond: Slot,
        a: Slot,
        b: Slot,
    },
    Load {
        dst: Slot,
        mem: Slot,
        idx: Vec<Slot>,
        strides: Vec<u64>,
    },
    Store {
        dst: Slot,
        val: Slot,
        mem: Slot,
        idx: Vec<Slot>,
        strides: Vec<u64>,
    },
    If {
        dsts: Vec<Slot>,
        cond: Slot,
        then: Block,
        els: Option<Block>,
    },
    For {
        dsts: Vec<Slot>,
        inits: Vec<Slot>,
        lower: i64,
        upper: i64,
        step: i64,
        iv: Slot,
        iters: Vec<Slot>,
        body: Block,
    },
}

#[derive(Debug, Clone)]
enum Val {
    Int(u128),
    Mem(Rc<Vec<u128>>),
}

/// A function compiled to slot-indexed instructions for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Program {
    slots: usize,
    args: Vec<(Slot, Type)>,
    body: Block,
    ret: Slot,
    ret_type: Type,
}

struct Compiler {
    slots: HashMap<String, Slot>,
    types: HashMap<String, Type>,
}

impl Compiler {
    fn slot(&mut self, name: &str) -> Slot {
        let n = self.slots.len();
        *self.slots.entry(name.to_string()).or_insert(n)
    }

    fn use_slot(&self, name: &str) -> Result<Slot, EvalError> {
        self.slots
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::Internal(format!("undefined value `%{name}`")))
    }

    fn width_of(&self, name: &str) -> Result<u32, EvalError> {
        self.types
            .get(name)
            .and_then(Type::width)
            .ok_or_else(|| EvalError::Internal(format!("`%{name}` is not a scalar")))
    }

    fn strides(&self, name: &str) -> Result<Vec<u64>, EvalError> {
        match self.types.get(name) {
            Some(Type::MemRef { shape, .. }) => {
                let mut strides = vec![1u64; shape.len()];
                for i in (0..shape.len().saturating_sub(1)).rev() {
                    strides[i] = strides[i + 1] * shape[i + 1];
                }
                Ok(strides)
            }
            _ => Err(EvalError::Internal(format!("`%{name}` is not a memref"))),
        }
    }

    fn block(&mut self, ops: &[Op]) -> Result<Block, EvalError> {
        let mut insts = Vec::new();
        let mut yields = Vec::new();
        for op in ops {
            match &op.kind {
                OpKind::Yield | OpKind::Return => {
                    yields = op
                        .operands
                        .iter()
                        .map(|n| self.use_slot(n))
                        .collect::<Result<_, _>>()?;
                }
                _ => insts.push(self.op(op)?),
            }
        }
        Ok(Block { insts, yields })
    }

    fn op(&mut self, op: &Op) -> Result<Inst, EvalError> {
        let operand = |c: &Self, i: usize| -> Result<Slot, EvalError> {
            let name = op
                .operands
                .get(i)
                .ok_or_else(|| EvalError::Internal(format!("{} lacks operand {i}", op.identity())))?;
            c.use_slot(name)
        };
        let inst = match &op.kind {
            OpKind::Const(bits) => Inst::Const {
                dst: 0,
                bits: *bits,
            },
            OpKind::Cast(c) => Inst::Cast {
                dst: 0,
                src: operand(self, 0)?,
                op: *c,
                from: self.width_of(&op.operands[0])?,
                to: op.result_type().and_then(Type::width).unwrap_or(1),
            },
            OpKind::Binary(b) => Inst::Binary {
                dst: 0,
                a: operand(self, 0)?,
                b: operand(self, 1)?,
                op: *b,
                width: self.width_of(&op.operands[0])?,
            },
            OpKind::Cmp(p) => Inst::Cmp {
                dst: 0,
                a: operand(self, 0)?,
                b: operand(self, 1)?,
                pred: *p,
                width: self.width_of(&op.operands[0])?,
            },
            OpKind::Select => Inst::Select {
                dst: 0,
                cond: operand(self, 0)?,
                a: operand(self, 1)?,
                b: operand(self, 2)?,
            },
            OpKind::Load => Inst::Load {
                dst: 0,
                mem: operand(self, 0)?,
                idx: (1..op.operands.len())
                    .map(|i| operand(self, i))
                    .collect::<Result<_, _>>()?,
                strides: self.strides(&op.operands[0])?,
            },
            OpKind::Store => Inst::Store {
                dst: 0,
                val: operand(self, 0)?,
                mem: operand(self, 1)?,
                idx: (2..op.operands.len())
                    .map(|i| operand(self, i))
                    .collect::<Result<_, _>>()?,
                strides: self.strides(&op.operands[1])?,
            },
            OpKind::If => {
                let cond = operand(self, 0)?;
                let then = self.block(op.regions.first().map(Vec::as_slice).unwrap_or(&[]))?;
                let els = match op.regions.get(1) {
                    Some(r) => Some(self.block(r)?),
                    None => None,
                };
                Inst::If {
                    dsts: Vec::new(),
                    cond,
                    then,
                    els,
                }
            }
            OpKind::For(l) => {
                let inits = (0..op.operands.len())
                    .map(|i| operand(self, i))
                    .collect::<Result<Vec<_>, _>>()?;
                let iv = self.slot(&l.iv);
                self.types.insert(l.iv.clone(), Type::Index);
                let mut iters = Vec::new();
                for (name, init) in l.iter_args.iter().zip(&op.operands) {
                    iters.push(self.slot(name));
                    if let Some(t) = self.types.get(init).cloned() {
                        self.types.insert(name.clone(), t);
                    }
                }
                let body = self.block(op.regions.first().map(Vec::as_slice).unwrap_or(&[]))?;
                Inst::For {
                    dsts: Vec::new(),
                    inits,
                    lower: l.lower,
                    upper: l.upper,
                    step: l.step,
                    iv,
                    iters,
                    body,
                }
            }
            OpKind::Yield | OpKind::Return => unreachable!("terminators handled by block"),
        };
        let dsts: Vec<Slot> = op
            .results
            .iter()
            .map(|r| {
                self.types.insert(r.name.clone(), r.ty.clone());
                self.slot(&r.name)
            })
            .collect();
        Ok(set_dsts(inst, dsts))
    }
}

fn set_dsts(mut inst: Inst, dsts: Vec<Slot>) -> Inst {
    match &mut inst {
        Inst::If { dsts: d, .. } | Inst::For { dsts: d, .. } => *d = dsts,
        Inst::Const { dst, .. }
        | Inst::Cast { dst, .. }
        | Inst::Binary { dst, .. }
        | Inst::Cmp { dst, .. }
        | Inst::Select { dst, .. }
        | Inst::Load { dst, .. }
        | Inst::Store { dst, .. } => *dst = dsts.first().copied().unwrap_or(usize::MAX),
    }
    inst
}

impl Program {
    pub fn compile(f: &Function) -> Result<Program, EvalError> {
        let mut c = Compiler {
            slots: HashMap::new(),
            types: HashMap::new(),
        };
        let mut args = Vec::new();
        for a in &f.args {
            let s = c.slot(&a.name);
            c.types.insert(a.name.clone(), a.ty.clone());
            args.push((s, a.ty.clone()));
        }
        let body = c.block(&f.body)?;
        let ret_name = f
            .returned()
            .ok_or_else(|| EvalError::Internal("function has no return".into()))?;
        let ret = c.use_slot(ret_name)?;
        let ret_type = c
            .types
            .get(ret_name)
            .cloned()
            .ok_or_else(|| EvalError::Internal("return type unknown".into()))?;
        Ok(Program {
            slots: c.slots.len(),
            args,
            body,
            ret,
            ret_type,
        })
    }

    pub fn run(&self, env: &Environment) -> Result<Output, EvalError> {
        if env.values.len() != self.args.len() {
            return Err(EvalError::Arity {
                expected: self.args.len(),
                got: env.values.len(),
            });
        }
        let mut frame: Vec<Val> = vec![Val::Int(0); self.slots];
        for ((slot, ty), v) in self.args.iter().zip(&env.values) {
            frame[*slot] = match (ty, v) {
                (Type::MemRef { .. }, ArgValue::Array(xs)) => Val::Mem(Rc::new(xs.clone())),
                (_, ArgValue::Scalar(x)) => Val::Int(*x),
                _ => return Err(EvalError::Internal("argument kind mismatch".into())),
            };
        }
        run_block(&self.body, &mut frame)?;
        Ok(match (&frame[self.ret], &self.ret_type) {
            (Val::Int(bits), t) => Output::Int {
                bits: *bits,
                width: t.width().unwrap_or(64),
            },
            (Val::Mem(xs), Type::MemRef { elem, .. }) => Output::Mem {
                elems: xs.as_ref().clone(),
                width: *elem,
            },
            _ => return Err(EvalError::Internal("return kind mismatch".into())),
        })
    }
}

fn int(frame: &[Val], s: Slot) -> Result<u128, EvalError> {
    match &frame[s] {
        Val::Int(x) => Ok(*x),
        Val::Mem(_) => Err(EvalError::Internal("memref used as scalar".into())),
    }
}

fn mem(frame: &[Val], s: Slot) -> Result<Rc<Vec<u128>>, EvalError> {
    match &frame[s] {
        Val::Mem(m) => Ok(Rc::clone(m)),
        Val::Int(_) => Err(EvalError::Internal("scalar used as memref".into())),
    }
}

fn offset(frame: &[Val], idx: &[Slot], strides: &[u64], len: usize) -> Result<usize, EvalError> {
    let mut off: u64 = 0;
    for (s, stride) in idx.iter().zip(strides) {
        off += (int(frame, *s)? as u64) * stride;
    }
    let off = off as usize;
    if off >= len {
        return Err(EvalError::Internal(format!("memref access {off} out of bounds")));
    }
    Ok(off)
}

fn run_block(b: &Block, frame: &mut [Val]) -> Result<(), EvalError> {
    for inst in &b.insts {
        match inst {
            Inst::Const { dst, bits } => frame[*dst] = Val::Int(*bits),
            Inst::Cast {
                dst,
                src,
                op,
                from,
                to,
            } => frame[*dst] = Val::Int(eval_cast(*op, int(frame, *src)?, *from, *to)),
            Inst::Binary {
                dst,
                a,
                b,
                op,
                width,
            } => {
                frame[*dst] = Val::Int(eval_binary(*op, int(frame, *a)?, int(frame, *b)?, *width))
            }
            Inst::Cmp {
                dst,
                a,
                b,
                pred,
                width,
            } => {
                let r = eval_cmp(*pred, int(frame, *a)?, int(frame, *b)?, *width);
                frame[*dst] = Val::Int(u128::from(r));
            }
            Inst::Select { dst, cond, a, b } => {
                let pick = if int(frame, *cond)? & 1 == 1 { *a } else { *b };
                frame[*dst] = frame[pick].clone();
            }
            Inst::Load {
                dst,
                mem: m,
                idx,
                strides,
            } => {
                let data = mem(frame, *m)?;
                let off = offset(frame, idx, strides, data.len())?;
                frame[*dst] = Val::Int(data[off]);
            }
            Inst::Store {
                dst,
                val,
                mem: m,
                idx,
                strides,
            } => {
                let v = int(frame, *val)?;
                let mut data = mem(frame, *m)?;
                let off = offset(frame, idx, strides, data.len())?;
                Rc::make_mut(&mut data)[off] = v;
                frame[*dst] = Val::Mem(data);
            }
            Inst::If {
                dsts,
                cond,
                then,
                els,
            } => {
                let taken = if int(frame, *cond)? & 1 == 1 {
                    Some(then)
                } else {
                    els.as_ref()
                };
                if let Some(block) = taken {
                    run_block(block, frame)?;
                    let vals: Vec<Val> = block.yields.iter().map(|s| frame[*s].clone()).collect();
                    for (d, v) in dsts.iter().zip(vals) {
                        frame[*d] = v;
                    }
                }
            }
            Inst::For {
                dsts,
                inits,
                lower,
                upper,
                step,
                iv,
                iters,
                body,
            } => {
                let mut carried: Vec<Val> = inits.iter().map(|s| frame[*s].clone()).collect();
                let mut i = *lower;
                while i < *upper {
                    frame[*iv] = Val::Int(i as u64 as u128);
                    for (s, v) in iters.iter().zip(carried.drain(..)) {
                        frame[*s] = v;
                    }
                    run_block(body, frame)?;
                    carried = body.yields.iter().map(|s| frame[*s].clone()).collect();
                    i += *step;
                }
                for (d, v) in dsts.iter().zip(carried) {
                    frame[*d] = v;
                }
            }
        }
    }
    Ok(())
}

/// Evaluates `f` on `env`.
pub fn evaluate(f: &Function, env: &Environment) -> Result<Output, EvalError> {
    env.check(f)?;
    Program::compile(f)?.run(env)
}
