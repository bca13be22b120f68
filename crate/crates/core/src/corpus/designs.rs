use super::{Expectations, Params};
use crate::ir::{
    BinOp, Builder, CastOp, EncodingField, Function, InstructionDescriptor, MacroSpec, Module,
    Pred, Type,
};

const GEN: &str = "generate";
const A1: &str = "canon-bitmanip";
const B3: &str = "detect-mac";
const B4: &str = "specialize-control";
const B5: &str = "detect-clamp";
const C6: &str = "reconstruct-loops";
const C7: &str = "lift-to-linalg";
const D8: &str = "emit-taidl-metadata";

fn finish(b: Builder, ret: &str, exp: &mut Expectations) -> Function {
    // `finish` pushes the return op.
    let emitted = b.ops_emitted() + 1;
    let f = b.finish(ret);
    exp.push(GEN, &f.name, "ops", emitted);
    f
}

fn quoted(s: &str) -> String {
    format!("\"{s}\"")
}

fn bank_field() -> EncodingField {
    EncodingField {
        register: "rs1".into(),
        hi: 4,
        lo: 3,
    }
}

/// Widens `x: iW` to `iV` as either the per-bit OR/SHL/SELECT chain or the
/// shift-pair form.
fn widen_signed(b: &mut Builder, x: &str, w: u32, v: u32, arithmetic: bool) -> String {
    if arithmetic {
        let z = b.cast_named(&format!("{x}_zx"), CastOp::ExtU, x, v);
        let k = b.constant(i128::from(v - w), Type::Int(v));
        let up = b.binary_named(&format!("{x}_up"), BinOp::Shl, &z, &k);
        return b.binary_named(&format!("{x}_sx"), BinOp::ShrS, &up, &k);
    }
    let mut acc = b.cast_named(&format!("{x}_zx"), CastOp::ExtU, x, v);
    let top = b.constant(i128::from(w - 1), Type::Int(w));
    let shifted = b.binary_named(&format!("{x}_top"), BinOp::ShrU, x, &top);
    let msb = b.cast_named(&format!("{x}_msb"), CastOp::Trunc, &shifted, 1);
    let one = b.constant(1, Type::Int(1));
    let zero = b.constant(0, Type::Int(1));
    for k in w..v {
        let bit = b.select_named(&format!("{x}_b{k}"), &msb, &one, &zero);
        let wide = b.cast_named(&format!("{x}_w{k}"), CastOp::ExtU, &bit, v);
        let amount = b.constant(i128::from(k), Type::Int(v));
        let placed = b.binary_named(&format!("{x}_s{k}"), BinOp::Shl, &wide, &amount);
        acc = b.binary_named(&format!("{x}_e{k}"), BinOp::Or, &acc, &placed);
    }
    acc
}

fn pe_function(p: &Params, seed: u64, asv: &str, exp: &mut Expectations) -> Function {
    let (w_in, v, w_out) = (p.input_width, p.acc_width, p.output_width);
    let arithmetic_ext = seed & 1 == 1;
    let select_clamp = seed & 2 == 2;

    let mut b = Builder::new("pe_mac", asv);
    let in_a = b.arg("in_a", Type::memref(&[1], w_in), "in_a");
    let in_b = b.arg("in_b", Type::memref(&[1], w_in), "in_b");
    let in_d = b.arg("in_d", Type::memref(&[1], v), "in_d");
    let cur = b.arg("acc", Type::memref(&[1], v), asv);
    let df = b.arg("df", Type::memref(&[1], 1), "in_control_dataflow");
    let act = p
        .activation
        .then(|| b.arg("act", Type::memref(&[1], 1), "in_control_act"));

    let a = b.load_at("a", &in_a, &[0]);
    let bv = b.load_at("b", &in_b, &[0]);
    let d = b.load_at("d", &in_d, &[0]);
    let c = b.load_at("c", &cur, &[0]);
    let dataflow = b.load_at("ws", &df, &[0]);

    let ae = widen_signed(&mut b, &a, w_in, v, arithmetic_ext);
    let be = widen_signed(&mut b, &bv, w_in, v, arithmetic_ext);
    let prod = b.binary_named("prod", BinOp::Mul, &ae, &be);
    let addend = b.select_named("addend", &dataflow, &d, &c);
    let sum = b.binary_named("sum", BinOp::Add, &prod, &addend);

    let (lo, hi) = (-(1i128 << (w_out - 1)), (1i128 << (w_out - 1)) - 1);
    let mut out = if select_clamp {
        let hi_c = b.constant(hi, Type::Int(v));
        let lo_c = b.constant(lo, Type::Int(v));
        let over = b.cmp(Pred::Sgt, &sum, &hi_c);
        let under = b.cmp(Pred::Slt, &sum, &lo_c);
        let inner = b.select_named("floor", &under, &lo_c, &sum);
        b.select_named("sat", &over, &hi_c, &inner)
    } else {
        let narrow = b.cast_named("narrow", CastOp::Trunc, &sum, w_out);
        b.cast_named("wb", CastOp::ExtS, &narrow, v)
    };
    if let Some(act) = &act {
        let on = b.load_at("relu_on", act, &[0]);
        let zero = b.constant(0, Type::Int(v));
        let neg = b.cmp(Pred::Slt, &out, &zero);
        let relu = b.select_named("relu", &neg, &zero, &out);
        out = b.select_named("act_out", &on, &relu, &out);
    }
    let f = finish(b, &out, exp);
    let name = f.name.clone();

    let chain_steps = 2 * (v - w_in);
    exp.push(GEN, &name, "count.ori", if arithmetic_ext { 0 } else { chain_steps });
    exp.push(GEN, &name, "count.shrsi", if arithmetic_ext { 2 } else { 0 });
    exp.push(A1, &name, "count.ori", 0);
    exp.push(A1, &name, "count.shrsi", 0);
    exp.push(A1, &name, "count.shli", 0);
    exp.push(A1, &name, "count.extsi", if select_clamp { 2 } else { 3 });
    exp.push(B3, &name, "annot.atlaas.mac", 1);
    exp.push(B4, &name, "uses.in_control_dataflow", 0);
    exp.push(B4, &name, &format!("uses.{asv}"), 0);
    let selects = if select_clamp { 2 } else { 0 } + usize::from(p.activation);
    exp.push(B4, &name, "count.select", selects);
    if p.activation {
        exp.push(B4, &name, "uses.in_control_act", 0);
    }
    exp.push(B5, &name, "annot.atlaas.clamp", 1);
    exp.push(C6, &name, "count.scf.for", 0);
    exp.push(C7, &name, "annot.linalg_op", 1);
    exp.push(D8, &name, "attr.taidl.compute", quoted("dot_product"));
    exp.push(D8, &name, "attr.taidl.role", quoted("output"));
    exp.push(D8, &name, "attr.atlaas.clamp", format!("[{lo}, {hi}, 1, {w_out}]"));
    exp.push(D8, &name, "arg.in_a.taidl.role", quoted("input"));
    exp.push(D8, &name, "arg.in_b.taidl.role", quoted("input"));
    exp.push(D8, &name, "arg.in_a.taidl.port_class", quoted("data"));
    // index constant, three loads, two extsi, muli, addi, then the clamp
    let clamp_ops = if select_clamp { 6 } else { 2 };
    let relu_ops = if p.activation { 3 } else { 0 };
    let core = 8 + clamp_ops + relu_ops;
    exp.push(D8, &name, "core_ops", core);
    exp.push(D8, &name, "ops", core + 1);
    if p.activation {
        exp.push(D8, &name, "attr.taidl.activation", quoted("relu"));
    }
    f
}

fn loop_macro(exp: &mut Expectations) -> (InstructionDescriptor, Vec<Function>) {
    let mut d = InstructionDescriptor::new("loop_ws");
    let mut funcs = Vec::new();
    for (asv, reg, shift) in [("bound_i", "rs1", 0), ("bound_j", "rs1", 16), ("bound_k", "rs2", 0)] {
        let mut b = Builder::new("loop_ws", asv);
        let rs1 = b.arg("rs1", Type::Int(64), "rs1");
        let rs2 = b.arg("rs2", Type::Int(64), "rs2");
        let src = if reg == "rs1" { rs1 } else { rs2 };
        let src = if shift > 0 {
            let k = b.constant(shift, Type::Int(64));
            b.binary(BinOp::ShrU, &src, &k)
        } else {
            src
        };
        let bound = b.cast_named(asv, CastOp::Trunc, &src, 16);
        let f = finish(b, &bound, exp);
        exp.push(D8, &f.name, "attr.taidl.compute", quoted("opaque"));
        d.asvs.push(asv.to_string());
        funcs.push(f);
    }
    d.macro_spec = Some(MacroSpec {
        primitive: "pe_mac".into(),
        bounds: d.asvs.clone(),
    });
    (d, funcs)
}

pub(super) fn pe(p: &Params, seed: u64, exp: &mut Expectations) -> Module {
    let asvs: Vec<String> = match p.grid {
        Some((rows, cols)) => (0..rows)
            .flat_map(|r| (0..cols).map(move |c| format!("pe_{r}_{c}_out")))
            .collect(),
        None => vec!["pe_out".into()],
    };
    let mut d = InstructionDescriptor::new("pe_mac");
    d.fixed_controls.insert("in_control_dataflow".into(), vec![1]);
    if p.activation {
        d.fixed_controls.insert("in_control_act".into(), vec![1]);
    }
    let mut m = Module::default();
    for asv in &asvs {
        m.functions.push(pe_function(p, seed, asv, exp));
        if let Some((r, c)) = asv
            .strip_prefix("pe_")
            .and_then(|s| s.strip_suffix("_out"))
            .and_then(|s| s.split_once('_'))
        {
            exp.push(D8, &format!("pe_mac__{asv}"), "attr.taidl.coord", format!("[{r}, {c}]"));
        }
    }
    d.asvs = asvs;
    m.descriptors.push(d);
    if p.macro_loop {
        let (d, funcs) = loop_macro(exp);
        m.descriptors.push(d);
        m.functions.extend(funcs);
    }
    m
}

pub(super) fn mac_chain(p: &Params, seed: u64, exp: &mut Expectations) -> Module {
    let n = u64::from(p.chain_length);
    let instr = format!("dot{n}");
    let mut b = Builder::new(&instr, "acc");
    let in_a = b.arg("in_a", Type::memref(&[n], 8), "in_a");
    let in_b = b.arg("in_b", Type::memref(&[n], 8), "in_b");
    let in_c = b.arg("in_c", Type::memref(&[1], 32), "in_c");
    let mut acc = b.load_at("bias", &in_c, &[0]);
    for k in 0..n {
        let a = b.load_at(&format!("a{k}"), &in_a, &[k]);
        let bk = b.load_at(&format!("b{k}"), &in_b, &[k]);
        let ae = b.cast_named(&format!("a{k}_sx"), CastOp::ExtS, &a, 32);
        let be = b.cast_named(&format!("b{k}_sx"), CastOp::ExtS, &bk, 32);
        let p = b.binary_named(&format!("p{k}"), BinOp::Mul, &ae, &be);
        let hint = format!("acc{}", k + 1);
        acc = if seed & 1 == 1 {
            b.binary_named(&hint, BinOp::Add, &p, &acc)
        } else {
            b.binary_named(&hint, BinOp::Add, &acc, &p)
        };
    }
    let f = finish(b, &acc, exp);
    let name = f.name.clone();
    let looped = n >= 2;
    exp.push(GEN, &name, "count.muli", n);
    exp.push(B3, &name, "annot.atlaas.mac", n);
    exp.push(C6, &name, "count.scf.for", usize::from(looped));
    exp.push(C6, &name, "loops.iter_args", usize::from(looped));
    exp.push(C6, &name, "loops.trip", if looped { n } else { 0 });
    exp.push(C6, &name, "count.muli", 1);
    exp.push(C7, &name, "annot.linalg_op", 1);
    exp.push(D8, &name, "attr.taidl.compute", quoted("dot_product"));
    exp.push(D8, &name, "arg.in_a.taidl.role", quoted("input"));
    // index constant, bias load, then either the loop with its seven-op body
    // or the single unrolled MAC, plus the return
    exp.push(D8, &name, "ops", if looped { 11 } else { 9 });

    let mut d = InstructionDescriptor::new(&instr);
    d.asvs.push("acc".into());
    Module {
        descriptors: vec![d],
        functions: vec![f],
    }
}

fn bank_of(b: &mut Builder, rs1: &str) -> String {
    let three = b.constant(3, Type::Int(64));
    let shifted = b.binary_named("rs1_hi", BinOp::ShrU, rs1, &three);
    b.cast_named("bank", CastOp::Trunc, &shifted, 2)
}

fn copy_row(b: &mut Builder, src: &str, dst: &str, len: u64) -> String {
    let mut cur = dst.to_string();
    for j in 0..len {
        let v = b.load_at(&format!("v{j}"), src, &[j]);
        cur = b.store_at(&format!("row{j}"), &v, &cur, &[j]);
    }
    cur
}

pub(super) fn dma_copy(p: &Params, exp: &mut Expectations) -> Module {
    let banks = p.banks;
    let len = u64::from(p.vector_length);
    let banked = banks > 1;
    let strides: Vec<String> = (0..banks).map(|k| format!("strides_{k}")).collect();
    let mut m = Module::default();

    let mut cfg = InstructionDescriptor::new("config_ld");
    for (k, asv) in strides.iter().enumerate() {
        let mut b = Builder::new("config_ld", asv);
        let rs1 = b.arg("rs1", Type::Int(64), "rs1");
        let rs2 = b.arg("rs2", Type::Int(64), "rs2");
        let cur = b.arg(asv, Type::Int(32), asv);
        let value = b.cast_named("stride", CastOp::Trunc, &rs2, 32);
        let next = if banked {
            let bank = bank_of(&mut b, &rs1);
            let kc = b.constant(k as i128, Type::Int(2));
            let hit = b.cmp(Pred::Eq, &bank, &kc);
            b.select_named("next", &hit, &value, &cur)
        } else {
            value
        };
        let f = finish(b, &next, exp);
        exp.push(D8, &f.name, "arg.rs1.taidl.role", quoted("attribute"));
        exp.push(D8, &f.name, "attr.taidl.compute", quoted("opaque"));
        m.functions.push(f);
    }
    cfg.asvs = strides.clone();
    if banked {
        cfg.encoding.insert("bank".into(), bank_field());
    }
    m.descriptors.push(cfg);

    for k in 0..banks {
        let instr = if k == 0 { "mvin".to_string() } else { format!("mvin{}", k + 1) };
        let mut d = InstructionDescriptor::new(&instr);

        let mut b = Builder::new(&instr, "spad_row");
        let src = b.arg("dram_rdata", Type::memref(&[len], 8), "dram_rdata");
        let dst = b.arg("spad_row", Type::memref(&[len], 8), "spad_row");
        let row = copy_row(&mut b, &src, &dst, len);
        let f = finish(b, &row, exp);
        exp.push(D8, &f.name, "arg.dram_rdata.taidl.port_class", quoted("dram_addr"));
        exp.push(D8, &f.name, "arg.spad_row.taidl.port_class", quoted("spad_addr"));
        exp.push(D8, &f.name, "arg.dram_rdata.taidl.role", quoted("input"));
        exp.push(D8, &f.name, "arg.spad_row.taidl.role", quoted("output"));
        exp.push(D8, &f.name, "attr.taidl.compute", quoted("opaque"));
        m.functions.push(f);

        let mut b = Builder::new(&instr, "dram_req_addr");
        let rs1 = b.arg("rs1", Type::Int(64), "rs1");
        let rs2 = b.arg("rs2", Type::Int(64), "rs2");
        let regs: Vec<String> = strides
            .iter()
            .map(|s| b.arg(s, Type::Int(32), s))
            .collect();
        let mut stride = regs[0].clone();
        if banked {
            let bank = bank_of(&mut b, &rs1);
            for (j, reg) in regs.iter().enumerate().skip(1) {
                let kc = b.constant(j as i128, Type::Int(2));
                let hit = b.cmp(Pred::Eq, &bank, &kc);
                stride = b.select_named("stride", &hit, reg, &stride);
            }
        }
        let wide = b.cast_named("stride64", CastOp::ExtU, &stride, 64);
        let addr = b.binary_named("addr", BinOp::Add, &rs2, &wide);
        let f = finish(b, &addr, exp);
        if banked {
            for j in 0..banks {
                exp.push(B4, &f.name, &format!("uses.strides_{j}"), usize::from(j == k));
            }
            exp.push(B4, &f.name, "count.select", 0);
            exp.push(B4, &f.name, "count.cmpi", 0);
        } else {
            exp.push(B4, &f.name, "uses.strides_0", 1);
        }
        m.functions.push(f);

        d.asvs = vec!["spad_row".into(), "dram_req_addr".into()];
        if banked {
            d.fixed_controls.insert("bank".into(), vec![i128::from(k)]);
            d.encoding.insert("bank".into(), bank_field());
        }
        m.descriptors.push(d);
    }

    let mut b = Builder::new("mvout", "dram_wdata");
    let src = b.arg("spad_row", Type::memref(&[len], 8), "spad_row");
    let dst = b.arg("dram_wdata", Type::memref(&[len], 8), "dram_wdata");
    let row = copy_row(&mut b, &src, &dst, len);
    let f = finish(b, &row, exp);
    exp.push(D8, &f.name, "arg.spad_row.taidl.role", quoted("input"));
    exp.push(D8, &f.name, "arg.dram_wdata.taidl.role", quoted("output"));
    m.functions.push(f);
    let mut d = InstructionDescriptor::new("mvout");
    d.asvs.push("dram_wdata".into());
    m.descriptors.push(d);
    m
}

pub(super) fn pool(p: &Params, exp: &mut Expectations) -> Module {
    let w = u64::from(p.window);
    let instr = format!("pool{w}");
    let mut b = Builder::new(&instr, "pool_out");
    let input = b.arg("pool_in", Type::memref(&[w], 8), "pool_in");
    let mut best = b.load_at("v0", &input, &[0]);
    for k in 1..w {
        let v = b.load_at(&format!("v{k}"), &input, &[k]);
        let gt = b.cmp(Pred::Sgt, &v, &best);
        best = b.select_named(&format!("m{k}"), &gt, &v, &best);
    }
    let f = finish(b, &best, exp);
    let name = f.name.clone();
    exp.push(GEN, &name, "count.select", w - 1);
    exp.push(C6, &name, "count.scf.for", usize::from(w >= 3));
    exp.push(C7, &name, "annot.linalg_op", 1);
    exp.push(D8, &name, "attr.taidl.compute", quoted("max_reduce"));
    let mut d = InstructionDescriptor::new(&instr);
    d.asvs.push("pool_out".into());
    Module {
        descriptors: vec![d],
        functions: vec![f],
    }
}

pub(super) fn fsm_pair(exp: &mut Expectations) -> Module {
    let state_ty = Type::Int(2);

    let mut b = Builder::new("preload", "state");
    b.arg("state", state_ty.clone(), "state");
    b.arg("rs1", Type::Int(64), "rs1");
    let one = b.constant(1, state_ty.clone());
    let preload = finish(b, &one, exp);

    let mut b = Builder::new("compute", "state");
    let state = b.arg("state", state_ty.clone(), "state");
    let one = b.constant(1, state_ty.clone());
    let ready = b.cmp(Pred::Eq, &state, &one);
    b.begin_region();
    let zero = b.constant(0, state_ty.clone());
    let then = b.end_region(&[zero]);
    b.begin_region();
    let els = b.end_region(std::slice::from_ref(&state));
    let next = b.if_op("next", &ready, then, els, std::slice::from_ref(&state_ty));
    let compute_state = finish(b, &next[0], exp);

    let mut b = Builder::new("compute", "result");
    let state = b.arg("state", state_ty.clone(), "state");
    let data = b.arg("data", Type::memref(&[1], 8), "in_data");
    let result = b.arg("result", Type::Int(32), "result");
    let scale = b.arg("scale", Type::Int(32), "rs2");
    let one = b.constant(1, state_ty);
    let ready = b.cmp(Pred::Eq, &state, &one);
    b.begin_region();
    let x = b.load_at("x", &data, &[0]);
    let xe = b.cast_named("x_sx", CastOp::ExtS, &x, 32);
    // accumulates the input arithmetically scaled down by rs2
    let scaled = b.binary_named("x_scaled", BinOp::ShrS, &xe, &scale);
    let sum = b.binary_named("sum", BinOp::Add, &result, &scaled);
    let then = b.end_region(&[sum]);
    b.begin_region();
    let els = b.end_region(std::slice::from_ref(&result));
    let next = b.if_op("next", &ready, then, els, &[Type::Int(32)]);
    let compute_result = finish(b, &next[0], exp);

    for f in [&preload, &compute_state, &compute_result] {
        exp.push(D8, &f.name, "attr.taidl.compute", quoted("opaque"));
    }
    exp.push(D8, &compute_state.name, "count.scf.if", 1);
    exp.push(D8, &compute_result.name, "count.scf.if", 1);

    let mut pd = InstructionDescriptor::new("preload");
    pd.asvs.push("state".into());
    let mut cd = InstructionDescriptor::new("compute");
    cd.asvs = vec!["state".into(), "result".into()];
    Module {
        descriptors: vec![pd, cd],
        functions: vec![preload, compute_state, compute_result],
    }
}
