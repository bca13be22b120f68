//! Folds redundant extension/truncation pairs.

use std::collections::HashMap;

use super::util::{def_map, remove_dead, rename_uses};
use crate::ir::{CastOp, Function, OpKind};

enum Fold {
    /// The result equals an existing value.
    Forward(String),
    /// The op becomes a single cast of `source`.
    Recast(CastOp, String),
}

/// Returns the number of folds applied.
pub fn narrow_types(f: &mut Function) -> usize {
    let mut total = 0;
    let mut seeds = Vec::new();
    loop {
        let folds: Vec<(String, Fold)> = {
            let defs = def_map(f);
            let types = f.value_types();
            let width = |n: &str| types.get(n).and_then(|t| t.width());
            let mut out = Vec::new();
            f.walk(&mut |op| {
                let OpKind::Cast(outer) = op.kind else {
                    return;
                };
                let Some(inner) = defs.get(op.operands[0].as_str()) else {
                    return;
                };
                let OpKind::Cast(inner_kind) = inner.kind else {
                    return;
                };
                let x = &inner.operands[0];
                let (Some(wx), Some(wr)) = (width(x), op.results[0].ty.width()) else {
                    return;
                };
                let fold = match (inner_kind, outer) {
                    (CastOp::ExtS | CastOp::ExtU, CastOp::Trunc) if wx == wr => {
                        Fold::Forward(x.clone())
                    }
                    (CastOp::ExtS | CastOp::ExtU, CastOp::Trunc) if wx > wr => {
                        Fold::Recast(CastOp::Trunc, x.clone())
                    }
                    (ext @ (CastOp::ExtS | CastOp::ExtU), CastOp::Trunc) => {
                        Fold::Recast(ext, x.clone())
                    }
                    (CastOp::Trunc, CastOp::Trunc) => Fold::Recast(CastOp::Trunc, x.clone()),
                    (a, b) if a == b => Fold::Recast(a, x.clone()),
                    // the zero-extended value has a clear sign bit
                    (CastOp::ExtU, CastOp::ExtS) => Fold::Recast(CastOp::ExtU, x.clone()),
                    _ => return,
                };
                out.push((op.results[0].name.clone(), fold));
            });
            out
        };
        if folds.is_empty() {
            break;
        }
        total += folds.len();
        let mut forward = HashMap::new();
        for (name, fold) in folds {
            match fold {
                Fold::Forward(x) => {
                    forward.insert(name.clone(), x);
                    seeds.push(name);
                }
                Fold::Recast(kind, x) => {
                    super::util::edit_def(f, &name, |op| {
                        seeds.append(&mut op.operands);
                        op.kind = OpKind::Cast(kind);
                        op.operands = vec![x];
                    });
                }
            }
        }
        rename_uses(f, &forward);
        remove_dead(f, Some(&seeds));
        seeds.clear();
    }
    total
}
