//! Bit-level SSA intermediate representation.
//!
//! A [`Module`] holds instruction descriptors and one [`Function`] per
//! (instruction, architectural state variable) pair. Values are named
//! (`%name`) and every name is defined exactly once per function, including
//! names defined inside nested `scf.if` / `scf.for` regions. Memrefs are value
//! snapshots: `memref.store` yields a new memref version instead of mutating.

mod builder;
mod parse;
mod print;
mod verify;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

pub use builder::{Builder, NameGen};
pub use parse::{parse_descriptors, parse_function, parse_module, ParseError};
pub use print::{print_attr_value, print_descriptor, print_function, print_module, HEADER};
pub use verify::{verify, verify_module, Violation};

pub const MAX_WIDTH: u32 = 128;
pub const INDEX_WIDTH: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Int(u32),
    Index,
    MemRef { shape: Vec<u64>, elem: u32 },
}

impl Type {
    pub fn int(width: u32) -> Self {
        Type::Int(width)
    }

    pub fn memref(shape: &[u64], elem: u32) -> Self {
        Type::MemRef {
            shape: shape.to_vec(),
            elem,
        }
    }

    /// Bit width of a scalar value; `None` for memrefs.
    pub fn width(&self) -> Option<u32> {
        match self {
            Type::Int(w) => Some(*w),
            Type::Index => Some(INDEX_WIDTH),
            Type::MemRef { .. } => None,
        }
    }

    pub fn is_int(&self) -> bool {
        matches!(self, Type::Int(_))
    }

    pub fn is_memref(&self) -> bool {
        matches!(self, Type::MemRef { .. })
    }

    /// Number of scalar elements in a memref (1 for scalars).
    pub fn num_elements(&self) -> u64 {
        match self {
            Type::MemRef { shape, .. } => shape.iter().product(),
            _ => 1,
        }
    }

    /// Total number of input bits a value of this type carries.
    pub fn total_bits(&self) -> u64 {
        match self {
            Type::Int(w) => u64::from(*w),
            Type::Index => u64::from(INDEX_WIDTH),
            Type::MemRef { shape, elem } => shape.iter().product::<u64>() * u64::from(*elem),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Type::Int(w) => (1..=MAX_WIDTH).contains(w),
            Type::Index => true,
            Type::MemRef { shape, elem } => {
                !shape.is_empty() && shape.iter().all(|&e| e >= 1) && (1..=MAX_WIDTH).contains(elem)
            }
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int(w) => write!(f, "i{w}"),
            Type::Index => f.write_str("index"),
            Type::MemRef { shape, elem } => {
                f.write_str("memref<")?;
                for extent in shape {
                    write!(f, "{extent}x")?;
                }
                write!(f, "i{elem}>")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CastOp {
    ExtS,
    ExtU,
    Trunc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    ShrS,
    ShrU,
}

impl BinOp {
    pub const ALL: [BinOp; 9] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::ShrS,
        BinOp::ShrU,
    ];

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
    Ult,
    Ule,
    Ugt,
    Uge,
}

impl Pred {
    pub const ALL: [Pred; 10] = [
        Pred::Eq,
        Pred::Ne,
        Pred::Slt,
        Pred::Sle,
        Pred::Sgt,
        Pred::Sge,
        Pred::Ult,
        Pred::Ule,
        Pred::Ugt,
        Pred::Uge,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Slt => "slt",
            Pred::Sle => "sle",
            Pred::Sgt => "sgt",
            Pred::Sge => "sge",
            Pred::Ult => "ult",
            Pred::Ule => "ule",
            Pred::Ugt => "ugt",
            Pred::Uge => "uge",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Pred::ALL.into_iter().find(|p| p.mnemonic() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForLoop {
    pub lower: i64,
    pub upper: i64,
    pub step: i64,
    /// Induction variable name (index-typed block argument).
    pub iv: String,
    /// Names of the loop-carried block arguments, matched 1:1 with the op's
    /// operands (initial values) and results.
    pub iter_args: Vec<String>,
}

impl ForLoop {
    pub fn trip_count(&self) -> u64 {
        if self.step <= 0 || self.upper <= self.lower {
            return 0;
        }
        ((self.upper - self.lower + self.step - 1) / self.step) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    /// Width-exact bit pattern; the result type gives the width.
    Const(u128),
    Cast(CastOp),
    Binary(BinOp),
    Cmp(Pred),
    Select,
    /// operands: memref, indices...
    Load,
    /// operands: value, memref, indices...; result: the new memref version.
    Store,
    /// operands: condition; regions: then, optional else.
    If,
    /// operands: initial iter values; regions: body.
    For(ForLoop),
    Yield,
    Return,
}

impl OpKind {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            OpKind::Const(_) => "const",
            OpKind::Cast(CastOp::ExtS) => "extsi",
            OpKind::Cast(CastOp::ExtU) => "extui",
            OpKind::Cast(CastOp::Trunc) => "trunci",
            OpKind::Binary(op) => binop_mnemonic(*op),
            OpKind::Cmp(_) => "cmpi",
            OpKind::Select => "select",
            OpKind::Load => "memref.load",
            OpKind::Store => "memref.store",
            OpKind::If => "scf.if",
            OpKind::For(_) => "scf.for",
            OpKind::Yield => "scf.yield",
            OpKind::Return => "return",
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, OpKind::Yield | OpKind::Return)
    }
}

pub fn binop_mnemonic(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "addi",
        BinOp::Sub => "subi",
        BinOp::Mul => "muli",
        BinOp::And => "andi",
        BinOp::Or => "ori",
        BinOp::Xor => "xori",
        BinOp::Shl => "shli",
        BinOp::ShrS => "shrsi",
        BinOp::ShrU => "shrui",
    }
}

pub fn binop_from_mnemonic(s: &str) -> Option<BinOp> {
    BinOp::ALL.into_iter().find(|op| binop_mnemonic(*op) == s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Value {
    pub name: String,
    pub ty: Type,
}

impl Value {
    pub fn new(name: impl Into<String>, ty: Type) -> Self {
        Value {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttrValue {
    Int(i128),
    Str(String),
    List(Vec<i128>),
}

impl AttrValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[i128]> {
        match self {
            AttrValue::List(l) => Some(l),
            _ => None,
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Str(s.to_string())
    }
}

impl From<String> for AttrValue {
    fn from(s: String) -> Self {
        AttrValue::Str(s)
    }
}

impl From<i128> for AttrValue {
    fn from(v: i128) -> Self {
        AttrValue::Int(v)
    }
}

impl From<Vec<i128>> for AttrValue {
    fn from(v: Vec<i128>) -> Self {
        AttrValue::List(v)
    }
}

/// Annotation map. Sorted by key so printing is deterministic.
pub type Attrs = BTreeMap<String, AttrValue>;

/// Annotation keys a fully lifted function may carry.
pub mod keys {
    pub const MAC: &str = "atlaas.mac";
    pub const CLAMP: &str = "atlaas.clamp";
    pub const DEAD_MODE: &str = "atlaas.dead_mode";
    pub const LINALG_OP: &str = "linalg_op";
    pub const ROLE: &str = "taidl.role";
    pub const COORD: &str = "taidl.coord";
    pub const GRID: &str = "taidl.grid";
    pub const COMPUTE: &str = "taidl.compute";
    pub const ACTIVATION: &str = "taidl.activation";
    pub const PORT_CLASS: &str = "taidl.port_class";

    pub const VOCABULARY: [&str; 10] = [
        MAC, CLAMP, DEAD_MODE, LINALG_OP, ROLE, COORD, GRID, COMPUTE, ACTIVATION, PORT_CLASS,
    ];

    pub fn is_known(key: &str) -> bool {
        VOCABULARY.contains(&key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Op {
    pub kind: OpKind,
    pub results: Vec<Value>,
    pub operands: Vec<String>,
    pub regions: Vec<Vec<Op>>,
    pub attrs: Attrs,
}

impl Op {
    pub fn new(kind: OpKind, results: Vec<Value>, operands: Vec<String>) -> Self {
        Op {
            kind,
            results,
            operands,
            regions: Vec::new(),
            attrs: Attrs::new(),
        }
    }

    pub fn with_regions(mut self, regions: Vec<Vec<Op>>) -> Self {
        self.regions = regions;
        self
    }

    pub fn result(&self) -> Option<&Value> {
        self.results.first()
    }

    pub fn result_name(&self) -> Option<&str> {
        self.results.first().map(|v| v.name.as_str())
    }

    pub fn result_type(&self) -> Option<&Type> {
        self.results.first().map(|v| &v.ty)
    }

    /// Total number of ops in this op, counting nested regions.
    pub fn count(&self) -> usize {
        1 + self
            .regions
            .iter()
            .map(|r| r.iter().map(Op::count).sum::<usize>())
            .sum::<usize>()
    }

    /// Names this op binds inside its regions (induction variable and
    /// loop-carried arguments).
    pub fn region_args(&self) -> Vec<&str> {
        match &self.kind {
            OpKind::For(l) => std::iter::once(l.iv.as_str())
                .chain(l.iter_args.iter().map(String::as_str))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Identity used in diagnostics: the first result name or the mnemonic.
    pub fn identity(&self) -> String {
        match self.result_name() {
            Some(n) => format!("%{n}"),
            None => self.kind.mnemonic().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arg {
    pub name: String,
    pub ty: Type,
    /// Original hardware signal name.
    pub signal: String,
    pub attrs: Attrs,
}

impl Arg {
    pub fn new(name: impl Into<String>, ty: Type, signal: impl Into<String>) -> Self {
        Arg {
            name: name.into(),
            ty,
            signal: signal.into(),
            attrs: Attrs::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    /// `<instruction>__<asv>`.
    pub name: String,
    pub args: Vec<Arg>,
    pub body: Vec<Op>,
    pub target_asv: String,
    pub attrs: Attrs,
}

impl Function {
    pub fn new(instruction: &str, asv: &str) -> Self {
        Function {
            name: format!("{instruction}__{asv}"),
            args: Vec::new(),
            body: Vec::new(),
            target_asv: asv.to_string(),
            attrs: Attrs::new(),
        }
    }

    /// Instruction part of the function name.
    pub fn instruction(&self) -> &str {
        match self.name.find("__") {
            Some(i) => &self.name[..i],
            None => &self.name,
        }
    }

    pub fn op_count(&self) -> usize {
        self.body.iter().map(Op::count).sum()
    }

    pub fn arg(&self, name: &str) -> Option<&Arg> {
        self.args.iter().find(|a| a.name == name)
    }

    pub fn arg_by_signal(&self, signal: &str) -> Option<&Arg> {
        self.args.iter().find(|a| a.signal == signal)
    }

    /// Value returned by the top-level `return`.
    pub fn returned(&self) -> Option<&str> {
        self.body
            .iter()
            .rev()
            .find(|op| op.kind == OpKind::Return)
            .and_then(|op| op.operands.first())
            .map(String::as_str)
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Op)) {
        fn go<'a>(ops: &'a [Op], f: &mut impl FnMut(&'a Op)) {
            for op in ops {
                f(op);
                for r in &op.regions {
                    go(r, f);
                }
            }
        }
        go(&self.body, f);
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Op)) {
        fn go(ops: &mut [Op], f: &mut impl FnMut(&mut Op)) {
            for op in ops {
                f(op);
                for r in &mut op.regions {
                    go(r, f);
                }
            }
        }
        go(&mut self.body, f);
    }

    /// Map from every defined value name to its type, including arguments and
    /// region arguments.
    pub fn value_types(&self) -> HashMap<String, Type> {
        let mut types: HashMap<String, Type> = self
            .args
            .iter()
            .map(|a| (a.name.clone(), a.ty.clone()))
            .collect();
        self.walk(&mut |op| {
            for v in &op.results {
                types.insert(v.name.clone(), v.ty.clone());
            }
            if let OpKind::For(l) = &op.kind {
                types.insert(l.iv.clone(), Type::Index);
                for (name, init) in l.iter_args.iter().zip(&op.operands) {
                    if let Some(t) = types.get(init).cloned() {
                        types.insert(name.clone(), t);
                    }
                }
            }
        });
        types
    }

    /// Removes every annotation (function, argument and op level).
    pub fn strip_annotations(&self) -> Function {
        let mut f = self.clone();
        f.attrs.clear();
        for a in &mut f.args {
            a.attrs.clear();
        }
        f.walk_mut(&mut |op| op.attrs.clear());
        f
    }
}

/// An encoding field of an instruction register operand, e.g. `rs1[4:3]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingField {
    pub register: String,
    pub hi: u32,
    pub lo: u32,
}

impl EncodingField {
    pub fn width(&self) -> u32 {
        self.hi - self.lo + 1
    }
}

impl fmt::Display for EncodingField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}:{}]", self.register, self.hi, self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroSpec {
    pub primitive: String,
    pub bounds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InstructionDescriptor {
    pub name: String,
    /// Control signal (or encoding field) name to one value per time step.
    pub fixed_controls: BTreeMap<String, Vec<i128>>,
    pub asvs: Vec<String>,
    pub encoding: BTreeMap<String, EncodingField>,
    pub macro_spec: Option<MacroSpec>,
    /// Explicit compute template hint (only `im2col_matmul` is recognised).
    pub hint: Option<String>,
}

impl InstructionDescriptor {
    pub fn new(name: impl Into<String>) -> Self {
        InstructionDescriptor {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Every control key must name an argument signal or an encoding field
    /// of at least one function in the instruction's group.
    pub fn check_against<'a>(
        &self,
        functions: impl IntoIterator<Item = &'a Function>,
    ) -> Result<(), String> {
        let funcs: Vec<&Function> = functions
            .into_iter()
            .filter(|f| f.instruction() == self.name)
            .collect();
        for key in self.fixed_controls.keys() {
            let found = match self.encoding.get(key) {
                Some(field) => funcs.iter().any(|f| f.arg_by_signal(&field.register).is_some()),
                None => funcs.iter().any(|f| f.arg_by_signal(key).is_some()),
            };
            if !found {
                return Err(format!(
                    "descriptor `{}` fixes control `{key}` which no function of the instruction reads",
                    self.name
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Module {
    pub descriptors: Vec<InstructionDescriptor>,
    pub functions: Vec<Function>,
}

impl Module {
    pub fn descriptor(&self, instruction: &str) -> Option<&InstructionDescriptor> {
        self.descriptors.iter().find(|d| d.name == instruction)
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn op_count(&self) -> usize {
        self.functions.iter().map(Function::op_count).sum()
    }

    /// Appends another module's descriptors and functions.
    pub fn merge(&mut self, other: Module) {
        self.descriptors.extend(other.descriptors);
        self.functions.extend(other.functions);
    }
}

/// Mask with the low `width` bits set.
pub fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// Sign-extends a `width`-bit pattern to i128.
pub fn to_signed(bits: u128, width: u32) -> i128 {
    if width >= 128 {
        return bits as i128;
    }
    let bits = bits & mask(width);
    if bits >> (width - 1) & 1 == 1 {
        (bits | !mask(width)) as i128
    } else {
        bits as i128
    }
}

/// Two's-complement bit pattern of `v` truncated to `width` bits.
pub fn from_signed(v: i128, width: u32) -> u128 {
    (v as u128) & mask(width)
}

/// Whether `v` is representable at `width` bits as either a signed or an
/// unsigned integer.
pub fn fits(v: i128, width: u32) -> bool {
    if width >= 128 {
        return true;
    }
    let min = -(1i128 << (width - 1));
    let max = (1i128 << width) - 1;
    v >= min && v <= max
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_conversions() {
        assert_eq!(to_signed(0xff, 8), -1);
        assert_eq!(to_signed(0x7f, 8), 127);
        assert_eq!(from_signed(-128, 8), 0x80);
        assert_eq!(to_signed(1, 1), -1);
        assert_eq!(to_signed(u128::MAX, 128), -1);
        assert!(fits(255, 8));
        assert!(fits(-128, 8));
        assert!(!fits(256, 8));
        assert!(!fits(-129, 8));
    }

    #[test]
    fn type_validity() {
        assert!(Type::Int(1).is_valid());
        assert!(Type::Int(128).is_valid());
        assert!(!Type::Int(0).is_valid());
        assert!(!Type::Int(129).is_valid());
        assert!(!Type::memref(&[], 8).is_valid());
        assert!(!Type::memref(&[4, 0], 8).is_valid());
        assert_eq!(Type::memref(&[4, 16], 8).to_string(), "memref<4x16xi8>");
        assert_eq!(Type::memref(&[4, 16], 8).total_bits(), 512);
    }

    #[test]
    fn function_instruction_name() {
        let f = Function::new("mvin2", "spad_row");
        assert_eq!(f.name, "mvin2__spad_row");
        assert_eq!(f.instruction(), "mvin2");
    }
}
