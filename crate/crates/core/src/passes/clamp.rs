//! Tags saturation idioms and ReLU selects.

use std::collections::{HashMap, HashSet};

use super::util::{const_value, def_map, edit_def};
use crate::ir::{keys, to_signed, AttrValue, CastOp, Function, Op, OpKind, Pred, Type};

fn signed_range(w: u32) -> (i128, i128) {
    (-(1i128 << (w - 1)), (1i128 << (w - 1)) - 1)
}

fn clamp_attr(lo: i128, hi: i128, signed: bool, w: u32) -> AttrValue {
    AttrValue::List(vec![lo, hi, i128::from(signed), i128::from(w)])
}

/// `ext(trunci(x: iV to iw))` with `w < V`.
fn cast_clamp(defs: &HashMap<&str, &Op>, types: &HashMap<String, Type>, op: &Op) -> Option<AttrValue> {
    let signed = match op.kind {
        OpKind::Cast(CastOp::ExtS) => true,
        OpKind::Cast(CastOp::ExtU) => false,
        _ => return None,
    };
    let t = defs.get(op.operands[0].as_str())?;
    if t.kind != OpKind::Cast(CastOp::Trunc) {
        return None;
    }
    let w = t.results[0].ty.width()?;
    let v = types.get(&t.operands[0]).and_then(Type::width)?;
    if w >= v {
        return None;
    }
    Some(if signed {
        let (lo, hi) = signed_range(w);
        clamp_attr(lo, hi, true, w)
    } else {
        clamp_attr(0, (1i128 << w) - 1, false, w)
    })
}

/// `select(cmpi pred x, K; K; other)` returning `(pred, x, K, other)`.
fn bound_select<'a>(
    defs: &HashMap<&str, &'a Op>,
    op: &'a Op,
) -> Option<(Pred, &'a str, i128, &'a str)> {
    if op.kind != OpKind::Select {
        return None;
    }
    let cmp = defs.get(op.operands[0].as_str())?;
    let OpKind::Cmp(pred) = cmp.kind else {
        return None;
    };
    let w = op.results[0].ty.width()?;
    let k = const_value(defs, &cmp.operands[1])?;
    if const_value(defs, &op.operands[1])? != k {
        return None;
    }
    let k = to_signed(k, w);
    Some((pred, cmp.operands[0].as_str(), k, op.operands[2].as_str()))
}

/// Nested upper/lower bound selects on the same value.
fn select_clamp(defs: &HashMap<&str, &Op>, op: &Op) -> Option<(AttrValue, String)> {
    let (p_out, x_out, k_out, inner_name) = bound_select(defs, op)?;
    let inner = defs.get(inner_name)?;
    let (p_in, x_in, k_in, x) = bound_select(defs, inner)?;
    if x_out != x || x_in != x {
        return None;
    }
    let (lo, hi) = match (p_out, p_in) {
        (Pred::Sgt, Pred::Slt) => (k_in, k_out),
        (Pred::Slt, Pred::Sgt) => (k_out, k_in),
        _ => return None,
    };
    let v = op.results[0].ty.width()?;
    for w in 1..v {
        if (lo, hi) == signed_range(w) {
            return Some((clamp_attr(lo, hi, true, w), inner_name.to_string()));
        }
        if lo == 0 && hi == (1i128 << w) - 1 {
            return Some((clamp_attr(lo, hi, false, w), inner_name.to_string()));
        }
    }
    None
}

fn is_relu(defs: &HashMap<&str, &Op>, op: &Op) -> bool {
    matches!(bound_select(defs, op), Some((Pred::Slt, x, 0, other)) if x == other)
}

/// Returns the number of annotations added or changed.
pub fn detect_clamp(f: &mut Function) -> usize {
    let found: Vec<(String, &'static str, AttrValue)> = {
        let defs = def_map(f);
        let types = f.value_types();
        let mut out = Vec::new();
        let mut clamp_inners = HashSet::new();
        f.walk(&mut |op| {
            if let Some((attr, inner)) = select_clamp(&defs, op) {
                clamp_inners.insert(inner);
                out.push((op.results[0].name.clone(), keys::CLAMP, attr));
            } else if let Some(attr) = cast_clamp(&defs, &types, op) {
                out.push((op.results[0].name.clone(), keys::CLAMP, attr));
            }
        });
        f.walk(&mut |op| {
            if is_relu(&defs, op) && !clamp_inners.contains(&op.results[0].name) {
                out.push((op.results[0].name.clone(), keys::ACTIVATION, "relu".into()));
            }
        });
        out
    };
    let mut changed = 0;
    for (name, key, value) in found {
        edit_def(f, &name, |op| {
            if op.attrs.get(key) != Some(&value) {
                op.attrs.insert(key.to_string(), value);
                changed += 1;
            }
        });
    }
    changed
}
