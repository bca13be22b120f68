//! Tags accumulate-of-product additions.

use std::collections::HashMap;

use super::util::{def_map, strip_ext};
use crate::ir::{keys, AttrValue, BinOp, Function, Op, OpKind, Type};

fn skip_casts<'a>(defs: &HashMap<&str, &'a Op>, mut name: &'a str) -> &'a str {
    while let Some(op) = defs.get(name) {
        match op.kind {
            OpKind::Cast(_) => name = op.operands[0].as_str(),
            _ => break,
        }
    }
    name
}

/// The `atlaas.mac` text for `add`, if it accumulates a narrow product.
pub(crate) fn mac_annotation(
    defs: &HashMap<&str, &Op>,
    types: &HashMap<String, Type>,
    add: &Op,
    bound: u32,
) -> Option<String> {
    if add.kind != OpKind::Binary(BinOp::Add) {
        return None;
    }
    for (p, acc) in [(0, 1), (1, 0)] {
        let Some(mul) = defs.get(skip_casts(defs, &add.operands[p])) else {
            continue;
        };
        if mul.kind != OpKind::Binary(BinOp::Mul) {
            continue;
        }
        let lhs = strip_ext(defs, &mul.operands[0]);
        let rhs = strip_ext(defs, &mul.operands[1]);
        let is_const = |n: &str| matches!(defs.get(n).map(|o| &o.kind), Some(OpKind::Const(_)));
        let (Some(wl), Some(wr)) = (
            types.get(lhs).and_then(Type::width),
            types.get(rhs).and_then(Type::width),
        ) else {
            continue;
        };
        if is_const(lhs) || is_const(rhs) || wl > bound || wr > bound {
            continue;
        }
        return Some(format!(
            "lhs=%{lhs}:{wl} rhs=%{rhs}:{wr} acc=%{}",
            add.operands[acc]
        ));
    }
    None
}

/// Returns the number of annotations added or changed.
pub fn detect_mac(f: &mut Function, bound: u32) -> usize {
    let found: Vec<(String, String)> = {
        let defs = def_map(f);
        let types = f.value_types();
        let mut out = Vec::new();
        f.walk(&mut |op| {
            if let Some(text) = mac_annotation(&defs, &types, op, bound) {
                if op.attrs.get(keys::MAC).and_then(AttrValue::as_str) != Some(text.as_str()) {
                    out.push((op.results[0].name.clone(), text));
                }
            }
        });
        out
    };
    for (name, text) in &found {
        super::util::edit_def(f, name, |op| {
            op.attrs.insert(keys::MAC.into(), AttrValue::Str(text.clone()));
        });
    }
    found.len()
}
