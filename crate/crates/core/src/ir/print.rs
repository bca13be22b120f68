use std::fmt::Write;

use super::{to_signed, AttrValue, Attrs, Function, InstructionDescriptor, Module, Op, OpKind, Type};

pub const HEADER: &str = "// tensorlift ir v1";

pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for d in &m.descriptors {
        out.push('\n');
        out.push_str(&print_descriptor(d));
    }
    for f in &m.functions {
        out.push('\n');
        out.push_str(&print_function(f));
    }
    out
}

pub fn print_descriptor(d: &InstructionDescriptor) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "descriptor {} {{", quote(&d.name));
    if !d.fixed_controls.is_empty() {
        out.push_str("  controls:");
        for (k, vals) in &d.fixed_controls {
            let vals: Vec<String> = vals.iter().map(i128::to_string).collect();
            let _ = write!(out, " {} = [{}]", quote(k), vals.join(", "));
        }
        out.push('\n');
    }
    if !d.asvs.is_empty() {
        out.push_str("  asvs:");
        for a in &d.asvs {
            let _ = write!(out, " {}", quote(a));
        }
        out.push('\n');
    }
    if !d.encoding.is_empty() {
        out.push_str("  encoding:");
        for (k, field) in &d.encoding {
            let _ = write!(
                out,
                " {} = {}[{}:{}]",
                quote(k),
                quote(&field.register),
                field.hi,
                field.lo
            );
        }
        out.push('\n');
    }
    if let Some(m) = &d.macro_spec {
        let _ = write!(out, "  macro: {} bounds", quote(&m.primitive));
        for b in &m.bounds {
            let _ = write!(out, " {}", quote(b));
        }
        out.push('\n');
    }
    if let Some(h) = &d.hint {
        let _ = writeln!(out, "  hint: {}", quote(h));
    }
    out.push_str("}\n");
    out
}

pub fn print_function(f: &Function) -> String {
    let mut out = String::new();
    let _ = write!(out, "func @{}(", f.name);
    for (i, a) in f.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "%{}: {} {{signal = {}", a.name, a.ty, quote(&a.signal));
        for (k, v) in &a.attrs {
            let _ = write!(out, " {k} = {}", print_attr_value(v));
        }
        out.push('}');
    }
    let _ = write!(out, ") attributes {{asv = {}", quote(&f.target_asv));
    for (k, v) in &f.attrs {
        let _ = write!(out, " {k} = {}", print_attr_value(v));
    }
    out.push_str("} {\n");
    print_block(&mut out, &f.body, 1);
    out.push_str("}\n");
    out
}

fn print_block(out: &mut String, ops: &[Op], depth: usize) {
    for op in ops {
        print_op(out, op, depth);
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn results_prefix(op: &Op) -> String {
    if op.results.is_empty() {
        return String::new();
    }
    let names: Vec<String> = op.results.iter().map(|v| format!("%{}", v.name)).collect();
    format!("{} = ", names.join(", "))
}

fn operand_list(names: &[String]) -> String {
    names
        .iter()
        .map(|n| format!("%{n}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn result_types(op: &Op) -> String {
    op.results
        .iter()
        .map(|v| v.ty.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn print_op(out: &mut String, op: &Op, depth: usize) {
    indent(out, depth);
    out.push_str(&results_prefix(op));
    let ty = op.result_type().map(Type::to_string).unwrap_or_default();
    match &op.kind {
        OpKind::Const(bits) => {
            let rty = op.result_type();
            let text = match rty {
                Some(Type::Int(1)) => bits.to_string(),
                Some(t) => to_signed(*bits, t.width().unwrap_or(128)).to_string(),
                None => bits.to_string(),
            };
            let _ = write!(out, "const {text} : {ty}");
        }
        OpKind::Cast(_) | OpKind::Binary(_) | OpKind::Select => {
            let _ = write!(
                out,
                "{} {} : {ty}",
                op.kind.mnemonic(),
                operand_list(&op.operands)
            );
        }
        OpKind::Cmp(p) => {
            let _ = write!(
                out,
                "cmpi {} {} : {ty}",
                p.mnemonic(),
                operand_list(&op.operands)
            );
        }
        OpKind::Load => {
            let _ = write!(
                out,
                "memref.load %{}[{}] : {ty}",
                op.operands[0],
                operand_list(&op.operands[1..])
            );
        }
        OpKind::Store => {
            let _ = write!(
                out,
                "memref.store %{}, %{}[{}] : {ty}",
                op.operands[0],
                op.operands[1],
                operand_list(&op.operands[2..])
            );
        }
        OpKind::Yield | OpKind::Return => {
            out.push_str(op.kind.mnemonic());
            if !op.operands.is_empty() {
                out.push(' ');
                out.push_str(&operand_list(&op.operands));
            }
        }
        OpKind::If => {
            let _ = write!(out, "scf.if %{}", op.operands[0]);
            if !op.results.is_empty() {
                let _ = write!(out, " -> {}", result_types(op));
            }
            out.push_str(" {\n");
            print_block(out, &op.regions[0], depth + 1);
            indent(out, depth);
            out.push('}');
            if let Some(els) = op.regions.get(1) {
                out.push_str(" else {\n");
                print_block(out, els, depth + 1);
                indent(out, depth);
                out.push('}');
            }
        }
        OpKind::For(l) => {
            let _ = write!(
                out,
                "scf.for %{} = {} to {} step {}",
                l.iv, l.lower, l.upper, l.step
            );
            if !l.iter_args.is_empty() {
                let binds: Vec<String> = l
                    .iter_args
                    .iter()
                    .zip(&op.operands)
                    .map(|(a, init)| format!("%{a} = %{init}"))
                    .collect();
                let _ = write!(out, " iter_args({})", binds.join(", "));
            }
            if !op.results.is_empty() {
                let _ = write!(out, " -> {}", result_types(op));
            }
            out.push_str(" {\n");
            print_block(out, &op.regions[0], depth + 1);
            indent(out, depth);
            out.push('}');
        }
    }
    print_attrs(out, &op.attrs);
    out.push('\n');
}

fn print_attrs(out: &mut String, attrs: &Attrs) {
    if attrs.is_empty() {
        return;
    }
    let parts: Vec<String> = attrs
        .iter()
        .map(|(k, v)| format!("{k} = {}", print_attr_value(v)))
        .collect();
    let _ = write!(out, " {{{}}}", parts.join(" "));
}

pub fn print_attr_value(v: &AttrValue) -> String {
    match v {
        AttrValue::Int(i) => i.to_string(),
        AttrValue::Str(s) => quote(s),
        AttrValue::List(l) => {
            let items: Vec<String> = l.iter().map(i128::to_string).collect();
            format!("[{}]", items.join(", "))
        }
    }
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
