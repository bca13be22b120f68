//! Merges lifted per-ASV functions back into instructions and emits a TAIDL
//! specification for them.
//!
//! Each instruction group is routed to exactly one emitter: compute,
//! loop macro, DMA, config-register update, or an opaque stub. Emitter errors
//! never abort assembly; the group falls back to the opaque stub and a
//! warning is recorded.

mod text;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::ir::{keys, AttrValue, BinOp, Function, InstructionDescriptor, Module, Op, OpKind, Pred, Type};
use crate::passes::{port_class, DOT_PRODUCT, MAX_REDUCE, ROLE_INPUT};

pub use text::{
    parse_taidl, BankedRegister, DataModel, Instruction, Ordering, Statement, TaidlParseError,
    TaidlSpec,
};

/// Compute template reachable only through a descriptor hint.
pub const IM2COL_HINT: &str = "im2col_matmul";

/// Largest number of distinct constants a register may take and still be
/// treated as FSM state.
pub const MAX_FSM_STATES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssembleError {
    #[error("no descriptor for instruction `{0}`")]
    MissingDescriptor(String),
    #[error("`{instruction}`: {message}")]
    Unsupported { instruction: String, message: String },
    #[error("macro `{instruction}` names primitive `{primitive}` which was not emitted as a compute instruction")]
    MissingPrimitive { instruction: String, primitive: String },
}

fn unsupported(instruction: &str, message: impl Into<String>) -> AssembleError {
    AssembleError::Unsupported {
        instruction: instruction.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
pub struct InstructionGroup<'a> {
    pub name: String,
    pub members: Vec<&'a Function>,
    pub descriptor: Option<&'a InstructionDescriptor>,
    /// `[rows, cols]` from the largest `taidl.coord` plus one.
    pub grid: Option<(i128, i128)>,
}

/// Splits an indexed register name such as `strides_2` into `("strides", 2)`.
pub fn bank_index(name: &str) -> Option<(&str, u32)> {
    let (base, idx) = name.rsplit_once('_')?;
    if base.is_empty() || idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((base, idx.parse().ok()?))
}

/// ASV name with its `_R_C` coordinate segments removed: `pe_1_2_out`
/// becomes `pe_out`.
pub fn grid_base(asv: &str) -> Option<String> {
    let parts: Vec<&str> = asv.split('_').collect();
    let numeric = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let at = (0..parts.len().saturating_sub(1))
        .rev()
        .find(|&i| numeric(parts[i]) && numeric(parts[i + 1]))?;
    let rest: Vec<&str> = parts[..at].iter().chain(&parts[at + 2..]).copied().collect();
    (!rest.is_empty()).then(|| rest.join("_"))
}

/// Name a group's compute result is written to: the shared grid register
/// for PE arrays, else the member's own ASV.
fn result_name(g: &InstructionGroup, f: &Function) -> String {
    match g.grid {
        Some(_) => grid_base(&f.target_asv).unwrap_or_else(|| f.target_asv.clone()),
        None => f.target_asv.clone(),
    }
}

/// Partitions functions by instruction name, in order of first appearance.
pub fn group(m: &Module) -> Vec<InstructionGroup<'_>> {
    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<&Function>> = HashMap::new();
    for f in &m.functions {
        let name = f.instruction();
        if !members.contains_key(name) {
            order.push(name);
        }
        members.entry(name).or_default().push(f);
    }
    order
        .into_iter()
        .map(|name| {
            let members = members.remove(name).unwrap_or_default();
            let coords: Vec<(i128, i128)> = members
                .iter()
                .filter_map(|f| match f.attrs.get(keys::COORD).and_then(AttrValue::as_list) {
                    Some([r, c]) => Some((*r, *c)),
                    _ => None,
                })
                .collect();
            let grid = (!coords.is_empty()).then(|| {
                let rows = coords.iter().map(|c| c.0).max().unwrap_or(0) + 1;
                let cols = coords.iter().map(|c| c.1).max().unwrap_or(0) + 1;
                (rows, cols)
            });
            InstructionGroup {
                name: name.to_string(),
                members,
                descriptor: m.descriptor(name),
                grid,
            }
        })
        .collect()
}

/// Indexed ASVs of one group sharing a base name, with at least two banks.
pub fn banked_registers(g: &InstructionGroup) -> Vec<BankedRegister> {
    let mut bases: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for f in &g.members {
        if let Some((base, i)) = bank_index(&f.target_asv) {
            bases.entry(base).or_default().insert(i);
        }
    }
    let select = g
        .descriptor
        .and_then(|d| d.encoding.values().next())
        .map(|e| e.to_string())
        .unwrap_or_else(|| "none".into());
    bases
        .into_iter()
        .filter(|(_, idx)| idx.len() >= 2)
        .map(|(base, idx)| BankedRegister {
            base: base.to_string(),
            count: idx.len(),
            select: select.clone(),
        })
        .collect()
}

fn uses_of(f: &Function) -> HashMap<&str, usize> {
    let mut uses = HashMap::new();
    f.walk(&mut |op| {
        for o in &op.operands {
            *uses.entry(o.as_str()).or_default() += 1;
        }
    });
    uses
}

fn defs_of(f: &Function) -> HashMap<&str, &Op> {
    let mut defs = HashMap::new();
    f.walk(&mut |op| {
        for v in &op.results {
            defs.insert(v.name.as_str(), op);
        }
    });
    defs
}

/// Register operands: signals of used scalar arguments, first appearance
/// order, excluding the group's own ASVs.
fn register_operands(g: &InstructionGroup) -> Vec<String> {
    let asvs: HashSet<&str> = g.members.iter().map(|f| f.target_asv.as_str()).collect();
    let mut out: Vec<String> = Vec::new();
    for f in &g.members {
        let uses = uses_of(f);
        for a in &f.args {
            let used = uses.get(a.name.as_str()).copied().unwrap_or(0) > 0;
            if used && !a.ty.is_memref() && !asvs.contains(a.signal.as_str()) && !out.contains(&a.signal) {
                out.push(a.signal.clone());
            }
        }
    }
    out
}

fn data_model_for(signal: &str, ty: &Type) -> Option<DataModel> {
    let Type::MemRef { shape, elem } = ty else {
        return None;
    };
    let (last, rows) = shape.split_last()?;
    Some(DataModel {
        name: signal.to_string(),
        dims: rows.iter().product::<u64>().to_string(),
        shape: format!("{last}xs{elem}"),
    })
}

/// Declarations seen for one signal: the largest wins, the rest are
/// reported.
struct ModelEntry {
    model: DataModel,
    elements: u64,
    variants: BTreeSet<(String, String)>,
}

fn merge_model(models: &mut BTreeMap<String, ModelEntry>, dm: DataModel, elements: u64) {
    let variant = (dm.dims.clone(), dm.shape.clone());
    match models.get_mut(&dm.name) {
        None => {
            models.insert(
                dm.name.clone(),
                ModelEntry {
                    model: dm,
                    elements,
                    variants: BTreeSet::from([variant]),
                },
            );
        }
        Some(e) => {
            e.variants.insert(variant);
            if elements > e.elements {
                e.model = dm;
                e.elements = elements;
            }
        }
    }
}

/// Signal of the argument `name` is read from, through loads, casts and
/// stored versions.
fn source_signal(f: &Function, defs: &HashMap<&str, &Op>, name: &str) -> Option<String> {
    if let Some(a) = f.arg(name) {
        return Some(a.signal.clone());
    }
    let op = defs.get(name)?;
    match op.kind {
        OpKind::Load | OpKind::Cast(_) => source_signal(f, defs, &op.operands[0]),
        OpKind::Store => source_signal(f, defs, &op.operands[1]),
        _ => None,
    }
}

fn tagged_op<'a>(f: &'a Function, tag: &str) -> Option<&'a Op> {
    let mut found = None;
    f.walk(&mut |op| {
        if found.is_none() && op.attrs.get(keys::LINALG_OP).and_then(AttrValue::as_str) == Some(tag) {
            found = Some(op);
        }
    });
    found
}

fn skip_casts<'a>(defs: &HashMap<&str, &'a Op>, mut name: &'a str) -> &'a str {
    while let Some(op) = defs.get(name) {
        match op.kind {
            OpKind::Cast(_) => name = &op.operands[0],
            _ => break,
        }
    }
    name
}

struct DotOperands {
    lhs: String,
    rhs: String,
    bias: Option<String>,
    /// Accumulation type, e.g. `s32`.
    acc_type: String,
}

fn dot_operands(f: &Function) -> Option<DotOperands> {
    let op = tagged_op(f, DOT_PRODUCT)?;
    let mut defs = defs_of(f);
    let (add, init) = match &op.kind {
        OpKind::For(l) => {
            let body = &op.regions[0];
            for inner in body {
                for v in &inner.results {
                    defs.insert(&v.name, inner);
                }
            }
            let add = body.iter().find(|o| o.kind == OpKind::Binary(BinOp::Add))?;
            (add, Some((l.iter_args[0].as_str(), op.operands[0].as_str())))
        }
        _ => (op, None),
    };
    let (mul, acc) = [(0, 1), (1, 0)].into_iter().find_map(|(p, a)| {
        let m = defs.get(skip_casts(&defs, &add.operands[p]))?;
        (m.kind == OpKind::Binary(BinOp::Mul)).then_some((*m, add.operands[a].as_str()))
    })?;
    let acc = match init {
        Some((iter_arg, init)) if acc == iter_arg => init,
        _ => acc,
    };
    let width = mul.results[0].ty.width()?;
    Some(DotOperands {
        lhs: source_signal(f, &defs, &mul.operands[0])?,
        rhs: source_signal(f, &defs, &mul.operands[1])?,
        bias: source_signal(f, &defs, acc),
        acc_type: format!("s{width}"),
    })
}

fn max_operand(f: &Function) -> Option<String> {
    let op = tagged_op(f, MAX_REDUCE)?;
    let defs = defs_of(f);
    match &op.kind {
        OpKind::For(_) => {
            let load = op.regions[0].iter().find(|o| o.kind == OpKind::Load)?;
            source_signal(f, &defs, &load.operands[0])
        }
        _ => source_signal(f, &defs, &op.operands[1]),
    }
}

/// Appends statements, naming temporaries `t0, t1, ...`; the last one takes
/// the result name.
struct BodyBuilder {
    stmts: Vec<(String, Vec<String>)>,
}

impl BodyBuilder {
    fn new() -> Self {
        BodyBuilder { stmts: Vec::new() }
    }

    fn push(&mut self, op: &str, args: Vec<String>) -> String {
        let name = format!("t{}", self.stmts.len());
        self.stmts.push((op.to_string(), args));
        format!("%{name}")
    }

    fn finish(self, result: &str) -> Vec<Statement> {
        let n = self.stmts.len();
        self.stmts
            .into_iter()
            .enumerate()
            .map(|(i, (op, args))| {
                let name = if i + 1 == n { result.to_string() } else { format!("t{i}") };
                Statement::new(name, &op, args)
            })
            .collect()
    }
}

fn clamp_bounds(f: &Function) -> Option<(i128, i128)> {
    match f.attrs.get(keys::CLAMP).and_then(AttrValue::as_list) {
        Some([lo, hi, ..]) => Some((*lo, *hi)),
        _ => None,
    }
}

fn is_relu(f: &Function) -> bool {
    f.attrs.get(keys::ACTIVATION).and_then(AttrValue::as_str) == Some("relu")
}

/// Clamp and activation epilogue shared by the compute templates.
fn epilogue(b: &mut BodyBuilder, f: &Function, mut x: String) {
    if let Some((lo, hi)) = clamp_bounds(f) {
        x = b.push("clamp", vec![lo.to_string(), x, hi.to_string()]);
    }
    if is_relu(f) {
        b.push("maximum", vec![x, "0".into()]);
    }
}

/// Contracting dims `(lhs, rhs)` for operands of the given ranks.
fn dot_args(lhs: String, rhs: String, lhs_rank: usize) -> Vec<String> {
    let lhs_dim = if lhs_rank >= 2 { 1 } else { 0 };
    vec![
        lhs,
        rhs,
        format!("lhs_contracting_dims={{{lhs_dim}}}"),
        "rhs_contracting_dims={0}".into(),
    ]
}

fn dot_body(ops: &DotOperands, refs: (&str, &str, Option<&str>), lhs_rank: usize, f: &Function) -> BodyBuilder {
    let mut b = BodyBuilder::new();
    let l = b.push("convert", vec![format!("%{}", refs.0), ops.acc_type.clone()]);
    let r = b.push("convert", vec![format!("%{}", refs.1), ops.acc_type.clone()]);
    let mut x = b.push("dot", dot_args(l, r, lhs_rank));
    if let Some(bias) = refs.2 {
        x = b.push("add", vec![x, format!("%{bias}")]);
    }
    epilogue(&mut b, f, x);
    b
}

/// Compute body for a group with a `dot_product` or `max_reduce` member, or
/// an `im2col_matmul` hint.
pub fn emit_compute(g: &InstructionGroup) -> Result<Vec<Statement>, AssembleError> {
    let hint = g.descriptor.and_then(|d| d.hint.as_deref());
    if hint == Some(IM2COL_HINT) {
        let f = g.members.first().ok_or_else(|| unsupported(&g.name, "empty group"))?;
        let inputs: Vec<&str> = f
            .args
            .iter()
            .filter(|a| a.ty.is_memref() && a.attrs.get(keys::ROLE).and_then(AttrValue::as_str) == Some(ROLE_INPUT))
            .map(|a| a.signal.as_str())
            .collect();
        let [a, w, rest @ ..] = inputs.as_slice() else {
            return Err(unsupported(&g.name, "im2col needs an input and a weight buffer"));
        };
        let mut b = BodyBuilder::new();
        let cols = b.push("reshape", vec![format!("%{a}"), "im2col".into()]);
        let mut x = b.push("dot", dot_args(cols, format!("%{w}"), 2));
        if let Some(bias) = rest.first() {
            x = b.push("add", vec![x, format!("%{bias}")]);
        }
        epilogue(&mut b, f, x);
        return Ok(b.finish(&result_name(g, f)));
    }
    for f in &g.members {
        match f.attrs.get(keys::COMPUTE).and_then(AttrValue::as_str) {
            Some(DOT_PRODUCT) => {
                let ops = dot_operands(f)
                    .ok_or_else(|| unsupported(&g.name, "dot product operands are not buffers"))?;
                let body = dot_body(&ops, (&ops.lhs, &ops.rhs, ops.bias.as_deref()), 2, f);
                return Ok(body.finish(&result_name(g, f)));
            }
            Some(MAX_REDUCE) => {
                let input = max_operand(f)
                    .ok_or_else(|| unsupported(&g.name, "reduction input is not a buffer"))?;
                let mut b = BodyBuilder::new();
                let x = b.push("reduce", vec![format!("%{input}"), "max".into(), "dims={0}".into()]);
                epilogue(&mut b, f, x);
                return Ok(b.finish(&result_name(g, f)));
            }
            _ => {}
        }
    }
    Err(unsupported(&g.name, "no compute-tagged member"))
}

fn is_compute(g: &InstructionGroup) -> bool {
    g.descriptor.and_then(|d| d.hint.as_deref()) == Some(IM2COL_HINT)
        || g.members.iter().any(|f| {
            matches!(
                f.attrs.get(keys::COMPUTE).and_then(AttrValue::as_str),
                Some(DOT_PRODUCT | MAX_REDUCE)
            )
        })
}

/// `(source, destination)` signals when `f` only copies loaded elements of
/// one memref argument into another.
fn copy_ports(f: &Function) -> Option<(&str, &str)> {
    let defs = defs_of(f);
    let mut src = None;
    let mut dst = None;
    let root = |mem: &str| -> Option<String> {
        let mut cur = mem;
        loop {
            if let Some(a) = f.arg(cur) {
                return Some(a.name.clone());
            }
            let op = defs.get(cur)?;
            if op.kind != OpKind::Store {
                return None;
            }
            cur = &op.operands[1];
        }
    };
    for op in &f.body {
        match op.kind {
            OpKind::Const(_) | OpKind::Return => {}
            OpKind::Load => {
                let r = root(&op.operands[0])?;
                if *src.get_or_insert(r.clone()) != r {
                    return None;
                }
            }
            OpKind::Store => {
                let v = defs.get(op.operands[0].as_str())?;
                if v.kind != OpKind::Load {
                    return None;
                }
                let r = root(&op.operands[1])?;
                if *dst.get_or_insert(r.clone()) != r {
                    return None;
                }
            }
            _ => return None,
        }
    }
    let (src, dst) = (f.arg(&src?)?, f.arg(&dst?)?);
    (src.name != dst.name).then_some((src.signal.as_str(), dst.signal.as_str()))
}

fn is_dma(g: &InstructionGroup) -> bool {
    g.members.iter().any(|f| copy_ports(f).is_some())
}

/// Load or store body for a copy group. The stride is the indexed register
/// the address function reads, or the banked file indexed by its select
/// field when several are read.
pub fn emit_dma(g: &InstructionGroup, banked: &[BankedRegister]) -> Result<Vec<Statement>, AssembleError> {
    let mut copies = g.members.iter().filter_map(|f| copy_ports(f).map(|p| (f, p)));
    let (f, (src, dst)) = copies.next().ok_or_else(|| unsupported(&g.name, "no copy member"))?;
    if copies.next().is_some() {
        return Err(unsupported(&g.name, "more than one copy member"));
    }
    let op = match (port_class(src), port_class(dst)) {
        ("dram_addr", "spad_addr") => "load",
        ("spad_addr", "dram_addr") => "store",
        (a, b) => return Err(unsupported(&g.name, format!("ambiguous port classes {a} -> {b}"))),
    };
    let mut args = vec![format!("%{src}")];
    let mut strides: Vec<(&str, u32, &str)> = Vec::new();
    for m in &g.members {
        let uses = uses_of(m);
        for a in &m.args {
            let Some((base, i)) = bank_index(&a.signal) else {
                continue;
            };
            if !a.ty.is_memref() && uses.get(a.name.as_str()).copied().unwrap_or(0) > 0 {
                strides.push((base, i, a.signal.as_str()));
            }
        }
    }
    match strides.as_slice() {
        [] => {}
        [(_, _, signal)] => args.push(format!("stride=%{signal}")),
        [(base, ..), ..] => {
            let select = banked
                .iter()
                .find(|b| b.base == *base)
                .map(|b| b.select.clone())
                .unwrap_or_default();
            args.push(format!("stride=%{base}[{select}]"));
        }
    }
    Ok(vec![Statement::new(f.target_asv.clone(), op, args)])
}

/// Scalar-only group writing a register that another instruction reads.
fn is_config(g: &InstructionGroup, readers: &HashMap<&str, HashSet<&str>>) -> bool {
    let scalar = g.members.iter().all(|f| f.args.iter().all(|a| !a.ty.is_memref()));
    scalar
        && g.members.iter().any(|f| {
            readers
                .get(f.target_asv.as_str())
                .is_some_and(|r| r.iter().any(|n| *n != g.name))
        })
}

fn returned_const(f: &Function) -> Option<i128> {
    let ret = f.returned()?;
    let defs = defs_of(f);
    match defs.get(ret).map(|o| (&o.kind, o.results[0].ty.width())) {
        Some((OpKind::Const(v), Some(w))) => Some(crate::ir::to_signed(*v, w)),
        _ => None,
    }
}

/// Register assignment list: each ASV becomes `config(sources...)`.
pub fn emit_config(g: &InstructionGroup) -> Vec<Statement> {
    let field = g.descriptor.and_then(|d| d.encoding.values().next());
    g.members
        .iter()
        .map(|f| {
            let mut args: Vec<String> = match returned_const(f) {
                Some(c) => vec![c.to_string()],
                None => {
                    let uses = uses_of(f);
                    f.args
                        .iter()
                        .filter(|a| a.signal != f.target_asv && uses.get(a.name.as_str()).copied().unwrap_or(0) > 0)
                        .map(|a| format!("%{}", a.signal))
                        .collect()
                }
            };
            if let Some(field) = field {
                args.push(format!("bank={field}"));
            }
            Statement::new(f.target_asv.clone(), "config", args)
        })
        .collect()
}

/// Whole-kernel body for a loop macro over a dot-product primitive. Bound
/// registers become symbolic dims of the macro's data models.
pub fn compose_macro(
    g: &InstructionGroup,
    primitive: &InstructionGroup,
    models: &[DataModel],
) -> Result<(Vec<Statement>, Vec<DataModel>), AssembleError> {
    let spec = g
        .descriptor
        .and_then(|d| d.macro_spec.as_ref())
        .ok_or_else(|| unsupported(&g.name, "no macro entry"))?;
    let (f, ops) = primitive
        .members
        .iter()
        .find_map(|f| dot_operands(f).map(|o| (*f, o)))
        .ok_or_else(|| AssembleError::MissingPrimitive {
            instruction: g.name.clone(),
            primitive: spec.primitive.clone(),
        })?;
    let (lhs_dims, rhs_dims, out_dims, lhs_rank) = match spec.bounds.as_slice() {
        [k] => (k.clone(), k.clone(), "1".to_string(), 1),
        [i, k] => (format!("{i}*{k}"), k.clone(), i.clone(), 2),
        [i, j, k] => (format!("{i}*{k}"), format!("{k}*{j}"), format!("{i}*{j}"), 2),
        _ => return Err(unsupported(&g.name, "macro needs one to three bound registers")),
    };
    let shape_of = |signal: &str, fallback: &str| {
        models
            .iter()
            .find(|m| m.name == signal)
            .map(|m| m.shape.clone())
            .unwrap_or_else(|| fallback.to_string())
    };
    let names = [
        format!("{}_lhs", g.name),
        format!("{}_rhs", g.name),
        format!("{}_out", g.name),
    ];
    let new_models = vec![
        DataModel {
            name: names[0].clone(),
            dims: lhs_dims,
            shape: shape_of(&ops.lhs, "1xs8"),
        },
        DataModel {
            name: names[1].clone(),
            dims: rhs_dims,
            shape: shape_of(&ops.rhs, "1xs8"),
        },
        DataModel {
            name: names[2].clone(),
            dims: out_dims,
            shape: ops
                .bias
                .as_deref()
                .map(|b| shape_of(b, "1xs32"))
                .unwrap_or_else(|| format!("1x{}", ops.acc_type)),
        },
    ];
    let body = dot_body(&ops, (&names[0], &names[1], Some(&names[2])), lhs_rank, f);
    Ok((body.finish(&names[2]), new_models))
}

/// Opaque stub: one statement per ASV over the arguments it reads.
pub fn emit_opaque(g: &InstructionGroup) -> Vec<Statement> {
    g.members
        .iter()
        .map(|f| {
            let uses = uses_of(f);
            let args = f
                .args
                .iter()
                .filter(|a| uses.get(a.name.as_str()).copied().unwrap_or(0) > 0)
                .map(|a| format!("%{}", a.signal))
                .collect();
            Statement::new(f.target_asv.clone(), "opaque", args)
        })
        .collect()
}

/// `state == value` guard of an `scf.if`, as `(state signal, value)`.
fn guards(f: &Function) -> Vec<(String, i128)> {
    let defs = defs_of(f);
    let mut out = Vec::new();
    f.walk(&mut |op| {
        if op.kind != OpKind::If {
            return;
        }
        let Some(cmp) = defs.get(op.operands[0].as_str()) else {
            return;
        };
        if cmp.kind != OpKind::Cmp(Pred::Eq) {
            return;
        }
        for (s, c) in [(0, 1), (1, 0)] {
            let (Some(arg), Some(k)) = (f.arg(&cmp.operands[s]), defs.get(cmp.operands[c].as_str())) else {
                continue;
            };
            if let (OpKind::Const(v), Some(w)) = (&k.kind, arg.ty.width()) {
                out.push((arg.signal.clone(), crate::ir::to_signed(*v, w)));
            }
        }
    });
    out
}

/// Ordering constraints from FSM registers: `A` unconditionally sets the
/// state to `s` and `B` guards an update on `state == s`.
pub fn recover_fsm_order(groups: &[InstructionGroup]) -> Vec<Ordering> {
    let mut setters: Vec<(&str, &str, i128)> = Vec::new();
    let mut guarded: Vec<(&str, String, i128)> = Vec::new();
    let mut values: HashMap<String, BTreeSet<i128>> = HashMap::new();
    for g in groups {
        for f in &g.members {
            if let Some(c) = returned_const(f) {
                setters.push((&g.name, &f.target_asv, c));
                values.entry(f.target_asv.clone()).or_default().insert(c);
            }
            for (signal, c) in guards(f) {
                values.entry(signal.clone()).or_default().insert(c);
                guarded.push((&g.name, signal, c));
            }
        }
    }
    let mut out: Vec<Ordering> = Vec::new();
    for (a, state, s) in &setters {
        if values.get(*state).is_some_and(|v| v.len() > MAX_FSM_STATES) {
            continue;
        }
        for (b, signal, c) in &guarded {
            if a != b && signal == state && c == s {
                let o = Ordering {
                    before: a.to_string(),
                    after: b.to_string(),
                    via: state.to_string(),
                };
                if !out.contains(&o) {
                    out.push(o);
                }
            }
        }
    }
    out.sort_by(|x, y| (&x.before, &x.after, &x.via).cmp(&(&y.before, &y.after, &y.via)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Compute,
    Macro,
    Dma,
    Config,
    Opaque,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Compute => "compute",
            Route::Macro => "macro",
            Route::Dma => "dma",
            Route::Config => "config",
            Route::Opaque => "opaque",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    pub spec: TaidlSpec,
    /// Route taken by each instruction, sorted by instruction name.
    pub routes: Vec<(String, Route)>,
    /// Errors that downgraded an instruction to an opaque stub.
    pub warnings: Vec<String>,
}

impl Assembly {
    pub fn text(&self) -> String {
        self.spec.to_text()
    }

    pub fn route(&self, instruction: &str) -> Option<Route> {
        self.routes.iter().find(|(n, _)| n == instruction).map(|(_, r)| *r)
    }
}

struct Emitted {
    name: String,
    operands: Vec<String>,
    body: Vec<Statement>,
    route: Route,
    warning: Option<String>,
}

fn downgrade(g: &InstructionGroup, operands: Vec<String>, e: AssembleError) -> Emitted {
    Emitted {
        name: g.name.clone(),
        operands,
        body: emit_opaque(g),
        route: Route::Opaque,
        warning: Some(e.to_string()),
    }
}

/// Assembles a lifted module into a TAIDL spec. Never fails: emitter errors
/// become opaque stubs plus warnings.
pub fn assemble(m: &Module) -> Assembly {
    let groups = group(m);
    let banked: Vec<BankedRegister> = groups.iter().flat_map(banked_registers).collect();

    let mut readers: HashMap<&str, HashSet<&str>> = HashMap::new();
    for g in &groups {
        for f in &g.members {
            for a in &f.args {
                readers.entry(a.signal.as_str()).or_default().insert(g.name.as_str());
            }
        }
    }

    // PE-array cells share one data model named after the grid base
    let mut grid_cells: HashMap<&str, (String, (i128, i128))> = HashMap::new();
    for g in &groups {
        let Some(grid) = g.grid else { continue };
        for f in &g.members {
            if let Some(base) = grid_base(&f.target_asv) {
                grid_cells.insert(f.target_asv.as_str(), (base, grid));
            }
        }
    }
    let mut models: BTreeMap<String, ModelEntry> = BTreeMap::new();
    let group_asvs: HashSet<&str> = m.functions.iter().map(|f| f.target_asv.as_str()).collect();
    for f in &m.functions {
        let uses = uses_of(f);
        for a in &f.args {
            let used = uses.get(a.name.as_str()).copied().unwrap_or(0) > 0;
            if used || group_asvs.contains(a.signal.as_str()) {
                if let Some(mut dm) = data_model_for(&a.signal, &a.ty) {
                    let mut elements = a.ty.num_elements();
                    if let Some((base, (rows, cols))) = grid_cells.get(a.signal.as_str()) {
                        dm.name = base.clone();
                        dm.dims = match dm.dims.as_str() {
                            "1" => format!("{rows}*{cols}"),
                            d => format!("{rows}*{cols}*{d}"),
                        };
                        elements *= (rows * cols) as u64;
                    }
                    merge_model(&mut models, dm, elements);
                }
            }
        }
    }

    let emit_one = |g: &InstructionGroup| -> Emitted {
        let operands = register_operands(g);
        if g.descriptor.is_none() {
            return downgrade(g, operands, AssembleError::MissingDescriptor(g.name.clone()));
        }
        let (route, body) = if is_compute(g) {
            (Route::Compute, emit_compute(g))
        } else if g.descriptor.is_some_and(|d| d.macro_spec.is_some()) {
            return Emitted {
                name: g.name.clone(),
                operands,
                body: Vec::new(),
                route: Route::Macro,
                warning: None,
            };
        } else if is_dma(g) {
            (Route::Dma, emit_dma(g, &banked))
        } else if is_config(g, &readers) {
            (Route::Config, Ok(emit_config(g)))
        } else {
            (Route::Opaque, Ok(emit_opaque(g)))
        };
        match body {
            Ok(body) => Emitted {
                name: g.name.clone(),
                operands,
                body,
                route,
                warning: None,
            },
            Err(e) => downgrade(g, operands, e),
        }
    };
    let mut emitted: Vec<Emitted> = groups.par_iter().map(emit_one).collect();

    let mut warnings: Vec<String> = models
        .values()
        .filter(|e| e.variants.len() > 1)
        .map(|e| {
            format!(
                "data model `{}` has {} conflicting declarations; kept {}x{}",
                e.model.name,
                e.variants.len(),
                e.model.dims,
                e.model.shape
            )
        })
        .collect();
    let model_list: Vec<DataModel> = models.values().map(|e| e.model.clone()).collect();
    let first_routes: Vec<Route> = emitted.iter().map(|e| e.route).collect();
    for (i, e) in emitted.iter_mut().enumerate() {
        if e.route != Route::Macro {
            continue;
        }
        let g = &groups[i];
        let primitive = g
            .descriptor
            .and_then(|d| d.macro_spec.as_ref())
            .map(|s| s.primitive.clone())
            .unwrap_or_default();
        let prim_group = groups
            .iter()
            .zip(&first_routes)
            .find(|(p, r)| p.name == primitive && **r == Route::Compute)
            .map(|(p, _)| p);
        let result = match prim_group {
            Some(p) => compose_macro(g, p, &model_list),
            None => Err(AssembleError::MissingPrimitive {
                instruction: g.name.clone(),
                primitive,
            }),
        };
        match result {
            Ok((body, new_models)) => {
                e.body = body;
                for dm in new_models {
                    merge_model(&mut models, dm, 0);
                }
            }
            Err(err) => *e = downgrade(g, e.operands.clone(), err),
        }
    }

    emitted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut routes = Vec::new();
    let mut instructions = Vec::new();
    for e in emitted {
        if let Some(w) = e.warning {
            warnings.push(w);
        }
        routes.push((e.name.clone(), e.route));
        instructions.push(Instruction {
            name: e.name,
            operands: e.operands,
            body: e.body,
        });
    }
    Assembly {
        spec: TaidlSpec {
            data_models: models.into_values().map(|e| e.model).collect(),
            banked,
            instructions,
            orderings: recover_fsm_order(&groups),
        },
        routes,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{full_corpus, generate, DesignSpec};
    use crate::ir::{parse_function, MacroSpec};
    use crate::passes::{run_pipeline, PassConfig};

    fn lifted(spec: &DesignSpec) -> Module {
        let (m, _) = generate(spec).unwrap();
        run_pipeline(&m, &PassConfig::default()).unwrap().0
    }

    fn body_text(a: &Assembly, instr: &str) -> String {
        a.spec
            .instruction(instr)
            .unwrap()
            .body
            .iter()
            .map(|s| s.to_string() + "\n")
            .collect()
    }

    fn module_of(sources: &[&str]) -> Module {
        let functions: Vec<Function> = sources.iter().map(|s| parse_function(s).unwrap()).collect();
        let mut names: Vec<String> = functions.iter().map(|f| f.instruction().to_string()).collect();
        names.dedup();
        Module {
            descriptors: names.into_iter().map(InstructionDescriptor::new).collect(),
            functions,
        }
    }

    #[test]
    fn bank_names_and_grid_bases() {
        assert_eq!(bank_index("strides_2"), Some(("strides", 2)));
        assert_eq!(bank_index("strides_"), None);
        assert_eq!(bank_index("rs2"), None);
        assert_eq!(grid_base("pe_1_2_out").as_deref(), Some("pe_out"));
        assert_eq!(grid_base("acc_3_4").as_deref(), Some("acc"));
        assert_eq!(grid_base("strides_2"), None);
    }

    #[test]
    fn dma_banks_form_one_register_file() {
        let m = lifted(&DesignSpec::dma_copy(3));
        let groups = group(&m);
        let banked: Vec<BankedRegister> = groups.iter().flat_map(banked_registers).collect();
        assert_eq!(
            banked,
            [BankedRegister {
                base: "strides".into(),
                count: 3,
                select: "rs1[4:3]".into()
            }]
        );
        let a = assemble(&m);
        assert!(a.text().contains("# banked: strides x 3 select rs1[4:3]\n"));
        for (k, instr) in ["mvin", "mvin2", "mvin3"].into_iter().enumerate() {
            assert_eq!(a.route(instr), Some(Route::Dma));
            assert_eq!(body_text(&a, instr), format!("%spad_row = load(%dram_rdata, stride=%strides_{k})\n"));
        }
        assert_eq!(body_text(&a, "mvout"), "%dram_wdata = store(%spad_row)\n");
        assert_eq!(a.route("config_ld"), Some(Route::Config));
        assert!(body_text(&a, "config_ld").starts_with("%strides_0 = config(%rs1, %rs2, bank=rs1[4:3])"));
    }

    #[test]
    fn single_bank_uses_its_stride_register() {
        let a = assemble(&lifted(&DesignSpec::dma_copy(1)));
        assert!(a.spec.banked.is_empty());
        assert_eq!(body_text(&a, "mvin"), "%spad_row = load(%dram_rdata, stride=%strides_0)\n");
    }

    #[test]
    fn groups_follow_instruction_names_and_coordinates() {
        let (m, _) = full_corpus(0);
        let groups = group(&m);
        let mut names: Vec<&str> = m.functions.iter().map(Function::instruction).collect();
        names.dedup();
        assert_eq!(groups.iter().map(|g| g.name.as_str()).collect::<Vec<_>>(), names);
        assert!(groups.iter().all(|g| g.members.iter().all(|f| f.instruction() == g.name)));
        assert_eq!(group(&lifted(&DesignSpec::pe(8, 32, 8)))[0].grid, None);

        let mut spec = DesignSpec::pe(8, 32, 8);
        spec.params.grid = Some((2, 3));
        let m = lifted(&spec);
        assert_eq!(group(&m)[0].grid, Some((2, 3)));
        let a = assemble(&m);
        assert!(a.text().contains("acc.add_data_model(\"pe_out\", \"2*3\", \"1xs32\")"));
        assert!(body_text(&a, "pe_mac").ends_with("%pe_out = clamp(-128, %t3, 127)\n"));
    }

    #[test]
    fn pe_compute_body() {
        let a = assemble(&lifted(&DesignSpec::pe(8, 32, 8)));
        assert_eq!(
            body_text(&a, "pe_mac"),
            "%t0 = convert(%in_a, s32)\n\
             %t1 = convert(%in_b, s32)\n\
             %t2 = dot(%t0, %t1, lhs_contracting_dims={1}, rhs_contracting_dims={0})\n\
             %t3 = add(%t2, %in_d)\n\
             %pe_out = clamp(-128, %t3, 127)\n"
        );
        let mut spec = DesignSpec::pe(8, 32, 8);
        spec.params.activation = true;
        let a = assemble(&lifted(&spec));
        assert!(body_text(&a, "pe_mac").ends_with("%t4 = clamp(-128, %t3, 127)\n%pe_out = maximum(%t4, 0)\n"));
    }

    #[test]
    fn pooling_reduces_with_max() {
        for w in [2, 4] {
            let a = assemble(&lifted(&DesignSpec::pool(w)));
            let name = format!("pool{w}");
            assert_eq!(a.route(&name), Some(Route::Compute));
            assert_eq!(body_text(&a, &name), "%pool_out = reduce(%pool_in, max, dims={0})\n");
        }
    }

    #[test]
    fn ambiguous_copy_falls_back_to_opaque() {
        let m = module_of(&[
            "func @cp__dst(%a: memref<2xi8> {signal = \"buf_a\"}, %b: memref<2xi8> {signal = \"buf_b\"}) {\n\
             %i = const 0 : index\n\
             %v = memref.load %a[%i] : i8\n\
             %b1 = memref.store %v, %b[%i] : memref<2xi8>\n\
             return %b1\n}",
        ]);
        let g = &group(&m)[0];
        assert!(matches!(emit_dma(g, &[]), Err(AssembleError::Unsupported { .. })));
        let a = assemble(&m);
        assert_eq!(a.route("cp"), Some(Route::Opaque));
        assert_eq!(a.warnings.len(), 1);
        assert_eq!(body_text(&a, "cp"), "%dst = opaque(%buf_a, %buf_b)\n");
    }

    #[test]
    fn macro_composes_whole_kernel_dot() {
        let mut spec = DesignSpec::pe(8, 32, 8);
        spec.params.macro_loop = true;
        let m = lifted(&spec);
        let macro_name = m
            .descriptors
            .iter()
            .find(|d| d.macro_spec.is_some())
            .map(|d| d.name.clone())
            .unwrap();
        let a = assemble(&m);
        assert_eq!(a.route(&macro_name), Some(Route::Macro));
        let body = body_text(&a, &macro_name);
        assert_eq!(body.matches("= dot(").count(), 1);
        assert!(body.contains("dot(%t0, %t1, lhs_contracting_dims={1}"));
        let dims: Vec<&str> = a
            .spec
            .data_models
            .iter()
            .filter(|d| d.name.starts_with(&macro_name))
            .map(|d| d.dims.as_str())
            .collect();
        let bounds = &m.descriptor(&macro_name).unwrap().macro_spec.as_ref().unwrap().bounds;
        let (i, j, k) = (&bounds[0], &bounds[1], &bounds[2]);
        assert_eq!(dims, [format!("{i}*{k}"), format!("{i}*{j}"), format!("{k}*{j}")]);

        let mut one = m.clone();
        let d = one.descriptors.iter_mut().find(|d| d.name == macro_name).unwrap();
        d.macro_spec.as_mut().unwrap().bounds.truncate(1);
        let a = assemble(&one);
        assert!(body_text(&a, &macro_name).contains("lhs_contracting_dims={0}"));

        let mut missing = m.clone();
        let d = missing.descriptors.iter_mut().find(|d| d.name == macro_name).unwrap();
        d.macro_spec = Some(MacroSpec {
            primitive: "nope".into(),
            bounds: vec!["n".into()],
        });
        let a = assemble(&missing);
        assert_eq!(a.route(&macro_name), Some(Route::Opaque));
        assert!(a.warnings.iter().any(|w| w.contains("nope")));
    }

    #[test]
    fn fsm_order_from_guarded_updates() {
        let m = lifted(&DesignSpec::fsm_pair());
        assert_eq!(
            recover_fsm_order(&group(&m)),
            [Ordering {
                before: "preload".into(),
                after: "compute".into(),
                via: "state".into()
            }]
        );
        assert!(recover_fsm_order(&group(&lifted(&DesignSpec::pe(8, 32, 8)))).is_empty());
        let disjoint = module_of(&[
            "func @a__s(%s: i2 {signal = \"s\"}) {\n%c = const 1 : i2\nreturn %c\n}",
            "func @b__r(%t: i2 {signal = \"t\"}, %r: i8 {signal = \"r\"}) {\n\
             %one = const 1 : i2\n\
             %g = cmpi eq %t, %one : i1\n\
             %n = scf.if %g -> i8 {\n\
               %z = const 0 : i8\n\
               scf.yield %z\n\
             } else {\n\
               scf.yield %r\n\
             }\n\
             return %n\n}",
        ]);
        assert!(recover_fsm_order(&group(&disjoint)).is_empty());
    }

    #[test]
    fn full_corpus_assembles_without_aborts() {
        let (m, _) = full_corpus(0);
        let (out, _) = run_pipeline(&m, &PassConfig::default()).unwrap();
        let a = assemble(&out);
        assert!(a.spec.instructions.len() >= 5);
        assert_eq!(a.spec.banked.len(), 1);
        assert_eq!(a.spec.orderings.len(), 1);
        assert!(a.routes.iter().all(|(n, r)| *r != Route::Opaque || n == "compute"));
        assert!(a.spec.check().is_empty(), "{:?}", a.spec.check());
        assert_eq!(parse_taidl(&a.text()).unwrap(), a.spec);
        let names: Vec<&str> = a.spec.instructions.iter().map(|i| i.name.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names.len(), group(&out).len());
    }

    #[test]
    fn unliftable_function_becomes_one_opaque_stub() {
        let m = module_of(&[
            "func @ctl__mode(%x: i8 {signal = \"x\"}, %y: i8 {signal = \"y\"}) {\n\
             %z = xori %x, %y : i8\n\
             return %z\n}",
        ]);
        let (out, _) = run_pipeline(&m, &PassConfig::default()).unwrap();
        assert_eq!(
            out.functions[0].attrs.get(keys::COMPUTE).and_then(AttrValue::as_str),
            Some("opaque")
        );
        let a = assemble(&out);
        assert_eq!(a.routes, [("ctl".to_string(), Route::Opaque)]);
        assert_eq!(body_text(&a, "ctl"), "%mode = opaque(%x, %y)\n");
        assert!(a.spec.check().is_empty());
    }

    #[test]
    fn missing_descriptor_downgrades_with_warning() {
        let (mut m, _) = generate(&DesignSpec::pe(8, 32, 8)).unwrap();
        m.descriptors.clear();
        let a = assemble(&m);
        assert_eq!(a.route("pe_mac"), Some(Route::Opaque));
        assert_eq!(a.warnings, ["no descriptor for instruction `pe_mac`"]);
    }

    #[test]
    fn empty_module_gives_empty_spec() {
        let a = assemble(&Module::default());
        assert_eq!(a.spec, TaidlSpec::default());
        assert_eq!(a.text(), "");
    }
}
