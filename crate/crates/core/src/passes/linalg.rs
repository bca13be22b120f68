//! Tags reduction loops with the named tensor operation they compute.

use std::collections::HashMap;

use super::util::{const_value, def_map, edit_def, strip_ext};
use crate::ir::{keys, AttrValue, BinOp, Function, Op, OpKind, Pred, Type};

pub const DOT_PRODUCT: &str = "dot_product";
pub const MAX_REDUCE: &str = "max_reduce";

fn body_defs(body: &[Op]) -> HashMap<&str, &Op> {
    body.iter()
        .flat_map(|op| op.results.iter().map(move |v| (v.name.as_str(), op)))
        .collect()
}

fn loads_at_iv(defs: &HashMap<&str, &Op>, name: &str, iv: &str) -> bool {
    defs.get(strip_ext(defs, name))
        .is_some_and(|op| op.kind == OpKind::Load && op.operands[1..] == [iv.to_string()])
}

/// `acc' = acc + ext(A[i]) * ext(B[i])` with nothing else in the body.
fn is_dot_body(l: &crate::ir::ForLoop, body: &[Op]) -> bool {
    let defs = body_defs(body);
    let Some(Op { kind: OpKind::Yield, operands, .. }) = body.last() else {
        return false;
    };
    let Some(add) = defs.get(operands[0].as_str()) else {
        return false;
    };
    if add.kind != OpKind::Binary(BinOp::Add) {
        return false;
    }
    let acc = &l.iter_args[0];
    let prod = match (&add.operands[0], &add.operands[1]) {
        (a, p) if a == acc => p,
        (p, a) if a == acc => p,
        _ => return false,
    };
    let Some(mul) = defs.get(prod.as_str()) else {
        return false;
    };
    mul.kind == OpKind::Binary(BinOp::Mul)
        && mul.operands.iter().all(|o| loads_at_iv(&defs, o, &l.iv))
        && body.iter().all(|op| {
            matches!(
                op.kind,
                OpKind::Load | OpKind::Cast(_) | OpKind::Binary(BinOp::Mul | BinOp::Add) | OpKind::Yield
            )
        })
}

fn max_pred(p: Pred, v_first: bool) -> bool {
    match p {
        Pred::Sgt | Pred::Sge | Pred::Ugt | Pred::Uge => v_first,
        Pred::Slt | Pred::Sle | Pred::Ult | Pred::Ule => !v_first,
        _ => false,
    }
}

/// `best' = select(v > best, v, best)` over `v = A[i]`.
fn is_max_body(l: &crate::ir::ForLoop, body: &[Op]) -> bool {
    let defs = body_defs(body);
    let Some(Op { kind: OpKind::Yield, operands, .. }) = body.last() else {
        return false;
    };
    let Some(sel) = defs.get(operands[0].as_str()) else {
        return false;
    };
    let best = &l.iter_args[0];
    if sel.kind != OpKind::Select || &sel.operands[2] != best || body.len() != 4 {
        return false;
    }
    let v = &sel.operands[1];
    let Some(cmp) = defs.get(sel.operands[0].as_str()) else {
        return false;
    };
    let OpKind::Cmp(p) = cmp.kind else {
        return false;
    };
    let ordered = if cmp.operands == [v.clone(), best.clone()] {
        max_pred(p, true)
    } else if cmp.operands == [best.clone(), v.clone()] {
        max_pred(p, false)
    } else {
        false
    };
    ordered && loads_at_iv(&defs, v, &l.iv)
}

/// A lone max step over both elements of a two-element memref.
fn is_pair_max(defs: &HashMap<&str, &Op>, types: &HashMap<String, Type>, op: &Op) -> bool {
    if op.kind != OpKind::Select {
        return false;
    }
    let Some(cmp) = defs.get(op.operands[0].as_str()) else {
        return false;
    };
    let (v, best) = (&op.operands[1], &op.operands[2]);
    let ordered = match cmp.kind {
        OpKind::Cmp(p) if cmp.operands == [v.clone(), best.clone()] => max_pred(p, true),
        OpKind::Cmp(p) if cmp.operands == [best.clone(), v.clone()] => max_pred(p, false),
        _ => false,
    };
    let element = |n: &str| {
        defs.get(n)
            .filter(|l| l.kind == OpKind::Load && l.operands.len() == 2)
            .and_then(|l| Some((l.operands[0].clone(), const_value(defs, &l.operands[1])?)))
    };
    let (Some((m1, i1)), Some((m0, i0))) = (element(v), element(best)) else {
        return false;
    };
    let pair = matches!(types.get(&m0), Some(Type::MemRef { shape, .. }) if shape == &[2]);
    ordered && pair && m0 == m1 && i0 == 0 && i1 == 1
}

/// Returns the number of annotations added or changed.
pub fn lift_to_linalg(f: &mut Function) -> usize {
    let found: Vec<(String, &'static str)> = {
        let defs = def_map(f);
        let types = f.value_types();
        let mut loops = Vec::new();
        let mut macs = Vec::new();
        let mut pair_maxes = Vec::new();
        f.walk(&mut |op| match &op.kind {
            OpKind::For(l) if l.iter_args.len() == 1 && op.results.len() == 1 => {
                let body = &op.regions[0];
                if is_dot_body(l, body) {
                    loops.push((op.results[0].name.clone(), DOT_PRODUCT));
                } else if is_max_body(l, body) {
                    loops.push((op.results[0].name.clone(), MAX_REDUCE));
                }
            }
            OpKind::Binary(BinOp::Add) if op.attrs.contains_key(keys::MAC) => macs.push(op),
            OpKind::Select if is_pair_max(&defs, &types, op) => pair_maxes.push(op),
            _ => {}
        });
        let mut has_loop = false;
        f.walk(&mut |op| has_loop |= matches!(op.kind, OpKind::For(_)));
        if has_loop {
            loops
        } else {
            // loop-free functions: a single tagged MAC over loaded operands
            // is a length-one dot product
            let lone_mac = match macs.as_slice() {
                [add] => add.operands.iter().any(|o| {
                    defs.get(o.as_str()).is_some_and(|m| {
                        m.kind == OpKind::Binary(BinOp::Mul)
                            && m.operands.iter().all(|x| {
                                defs.get(strip_ext(&defs, x))
                                    .is_some_and(|l| l.kind == OpKind::Load)
                            })
                    })
                }),
                _ => false,
            };
            if lone_mac {
                loops.push((macs[0].results[0].name.clone(), DOT_PRODUCT));
            }
            if let [sel] = pair_maxes.as_slice() {
                loops.push((sel.results[0].name.clone(), MAX_REDUCE));
            }
            loops
        }
    };
    let mut changed = 0;
    for (name, tag) in found {
        edit_def(f, &name, |op| {
            let value = AttrValue::Str(tag.into());
            if op.attrs.get(keys::LINALG_OP) != Some(&value) {
                op.attrs.insert(keys::LINALG_OP.into(), value);
                changed += 1;
            }
        });
    }
    changed
}
