//! Substitutes fixed control values and folds what becomes constant.

use std::collections::HashMap;

use super::util::{const_value, def_map, edit_def, remove_dead, rename_uses};
use crate::ir::{
    from_signed, mask, BinOp, Function, InstructionDescriptor, NameGen, Op, OpKind, Type, Value,
};
use crate::oracle::{eval_binary, eval_cast, eval_cmp};

const MAX_ROUNDS: usize = 100;

fn linear_offset(shape: &[u64], idx: &[u128]) -> Option<usize> {
    if shape.len() != idx.len() {
        return None;
    }
    let mut off: u128 = 0;
    for (&extent, &i) in shape.iter().zip(idx) {
        if i >= u128::from(extent) {
            return None;
        }
        off = off * u128::from(extent) + i;
    }
    usize::try_from(off).ok()
}

/// Replaces reads of fixed controls by constants. Returns the number of
/// substitutions.
fn substitute(f: &mut Function, d: &InstructionDescriptor) -> usize {
    let mut consts: Vec<(String, u128)> = Vec::new();
    let mut scalar_args: Vec<(String, u128, Type)> = Vec::new();
    {
        let defs = def_map(f);
        for (key, vals) in &d.fixed_controls {
            let value_at =
                |i: usize| vals.get(i).or(vals.last()).copied().unwrap_or(0);
            if let Some(field) = d.encoding.get(key) {
                let Some(reg) = f.arg_by_signal(&field.register) else {
                    continue;
                };
                if !reg.ty.is_int() {
                    continue;
                }
                let field_bits = from_signed(value_at(0), field.width());
                f.walk(&mut |op| {
                    if op.kind != OpKind::Cast(crate::ir::CastOp::Trunc) {
                        return;
                    }
                    let Some(tw) = op.results[0].ty.width() else {
                        return;
                    };
                    let src = op.operands[0].as_str();
                    let lo = if src == reg.name {
                        Some(0)
                    } else {
                        defs.get(src)
                            .filter(|s| {
                                s.kind == OpKind::Binary(BinOp::ShrU) && s.operands[0] == reg.name
                            })
                            .and_then(|s| const_value(&defs, &s.operands[1]))
                    };
                    if lo == Some(u128::from(field.lo)) && tw <= field.width() {
                        consts.push((op.results[0].name.clone(), field_bits & mask(tw)));
                    }
                });
            } else if let Some(arg) = f.arg_by_signal(key) {
                match &arg.ty {
                    Type::MemRef { shape, elem } => f.walk(&mut |op| {
                        if op.kind != OpKind::Load || op.operands[0] != arg.name {
                            return;
                        }
                        let idx: Option<Vec<u128>> = op.operands[1..]
                            .iter()
                            .map(|i| const_value(&defs, i))
                            .collect();
                        if let Some(off) = idx.and_then(|i| linear_offset(shape, &i)) {
                            consts.push((
                                op.results[0].name.clone(),
                                from_signed(value_at(off), *elem),
                            ));
                        }
                    }),
                    ty => {
                        let w = ty.width().unwrap_or(64);
                        scalar_args.push((arg.name.clone(), from_signed(value_at(0), w), ty.clone()));
                    }
                }
            }
        }
    }
    let count = consts.len() + scalar_args.len();
    for (name, bits) in consts {
        edit_def(f, &name, |op| {
            op.kind = OpKind::Const(bits);
            op.operands.clear();
            op.regions.clear();
        });
    }
    let mut names = NameGen::for_function(f);
    let mut renames = HashMap::new();
    for (arg, bits, ty) in scalar_args.into_iter().rev() {
        let name = names.fresh(&format!("{arg}_fixed"));
        f.body
            .insert(0, Op::new(OpKind::Const(bits), vec![Value::new(name.clone(), ty)], vec![]));
        renames.insert(arg, name);
    }
    rename_uses(f, &renames);
    count
}

/// Evaluates casts, arithmetic and comparisons whose operands are constant.
fn fold_constants(f: &mut Function) -> usize {
    let folded: Vec<(String, u128)> = {
        let defs = def_map(f);
        let types = f.value_types();
        let width = |n: &str| types.get(n).and_then(Type::width);
        let mut out = Vec::new();
        f.walk(&mut |op| {
            if op.operands.is_empty() {
                return;
            }
            let Some(vals) = op
                .operands
                .iter()
                .map(|o| const_value(&defs, o))
                .collect::<Option<Vec<u128>>>()
            else {
                return;
            };
            let Some(rw) = op.results.first().and_then(|v| v.ty.width()) else {
                return;
            };
            let bits = match &op.kind {
                OpKind::Cast(c) => match width(&op.operands[0]) {
                    Some(from) => eval_cast(*c, vals[0], from, rw),
                    None => return,
                },
                OpKind::Binary(b) => eval_binary(*b, vals[0], vals[1], rw),
                OpKind::Cmp(p) => match width(&op.operands[0]) {
                    Some(w) => u128::from(eval_cmp(*p, vals[0], vals[1], w)),
                    None => return,
                },
                _ => return,
            };
            out.push((op.results[0].name.clone(), bits));
        });
        out
    };
    for (name, bits) in &folded {
        edit_def(f, name, |op| {
            op.kind = OpKind::Const(*bits);
            op.operands.clear();
        });
    }
    folded.len()
}

/// Forwards selects with a constant condition or identical arms.
fn fold_selects(f: &mut Function) -> usize {
    let forward: HashMap<String, String> = {
        let defs = def_map(f);
        let mut out = HashMap::new();
        f.walk(&mut |op| {
            if op.kind != OpKind::Select {
                return;
            }
            let pick = if op.operands[1] == op.operands[2] {
                Some(1)
            } else {
                const_value(&defs, &op.operands[0]).map(|c| if c != 0 { 1 } else { 2 })
            };
            if let Some(i) = pick {
                out.insert(op.results[0].name.clone(), op.operands[i].clone());
            }
        });
        out
    };
    let n = forward.len();
    rename_uses(f, &forward);
    let seeds: Vec<String> = forward.into_keys().collect();
    remove_dead(f, Some(&seeds));
    n
}

/// Inlines the taken branch of every `scf.if` on a constant.
fn fold_ifs(f: &mut Function) -> usize {
    let consts: HashMap<String, u128> = {
        let mut m = HashMap::new();
        f.walk(&mut |op| {
            if let OpKind::Const(v) = op.kind {
                m.insert(op.results[0].name.clone(), v);
            }
        });
        m
    };
    fn go(block: &mut Vec<Op>, consts: &HashMap<String, u128>, fwd: &mut HashMap<String, String>) -> usize {
        let mut n = 0;
        let mut i = 0;
        while i < block.len() {
            for r in &mut block[i].regions {
                n += go(r, consts, fwd);
            }
            let cond = match block[i].kind {
                OpKind::If => consts.get(&block[i].operands[0]).copied(),
                _ => None,
            };
            let Some(c) = cond else {
                i += 1;
                continue;
            };
            let mut op = block.remove(i);
            let mut taken = if c != 0 {
                op.regions.swap_remove(0)
            } else if op.regions.len() > 1 {
                op.regions.swap_remove(1)
            } else {
                Vec::new()
            };
            if let Some(y) = taken.pop_if(|t| t.kind == OpKind::Yield) {
                for (res, v) in op.results.iter().zip(y.operands) {
                    fwd.insert(res.name.clone(), v);
                }
            }
            let len = taken.len();
            block.splice(i..i, taken);
            i += len;
            n += 1;
        }
        n
    }
    let mut fwd = HashMap::new();
    let n = go(&mut f.body, &consts, &mut fwd);
    rename_uses(f, &fwd);
    n
}

/// Specializes `f` for the descriptor's fixed controls. Returns the number
/// of substitutions and folds; zero means `f` is unchanged. A result that
/// would be larger than the input is discarded.
pub fn specialize_control(f: &mut Function, d: &InstructionDescriptor) -> usize {
    let original = f.clone();
    let subs = substitute(f, d);
    if subs == 0 {
        return 0;
    }
    let mut total = subs;
    for _ in 0..MAX_ROUNDS {
        let n = fold_constants(f) + fold_selects(f) + fold_ifs(f) + remove_dead(f, None);
        if n == 0 {
            break;
        }
        total += n;
    }
    if f.op_count() > original.op_count() {
        *f = original;
        return 0;
    }
    total
}
