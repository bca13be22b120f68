//! Collapses hand-rolled sign extensions back into `extsi`.

use std::collections::HashMap;

use super::util::{const_value, def_map, edit_def, remove_dead};
use crate::ir::{BinOp, CastOp, Function, Op, OpKind, Type};

fn width_of(defs: &HashMap<&str, &Op>, f: &Function, name: &str) -> Option<u32> {
    if let Some(op) = defs.get(name) {
        let ty = op.results.iter().find(|v| v.name == name)?.ty.clone();
        return ty.width();
    }
    f.arg(name).and_then(|a| a.ty.width())
}

fn op_is<'a>(defs: &HashMap<&str, &'a Op>, name: &str, kind: &OpKind) -> Option<&'a Op> {
    defs.get(name).copied().filter(|op| &op.kind == kind)
}

/// `msb = trunci(shrui(x, W-1)) : i1`; returns `x`.
fn match_msb<'a>(defs: &HashMap<&str, &'a Op>, f: &Function, name: &str) -> Option<&'a str> {
    let t = op_is(defs, name, &OpKind::Cast(CastOp::Trunc))?;
    if t.results[0].ty != Type::Int(1) {
        return None;
    }
    let s = op_is(defs, &t.operands[0], &OpKind::Binary(BinOp::ShrU))?;
    let x = s.operands[0].as_str();
    let w = width_of(defs, f, x)?;
    (const_value(defs, &s.operands[1])? == u128::from(w - 1)).then_some(x)
}

/// `shli(extui(select(msb, 1, 0)), k)`; returns `(x, k)`.
fn match_step<'a>(
    defs: &HashMap<&str, &'a Op>,
    f: &Function,
    name: &str,
) -> Option<(&'a str, u128)> {
    let shl = op_is(defs, name, &OpKind::Binary(BinOp::Shl))?;
    let k = const_value(defs, &shl.operands[1])?;
    let wide = op_is(defs, &shl.operands[0], &OpKind::Cast(CastOp::ExtU))?;
    let sel = op_is(defs, &wide.operands[0], &OpKind::Select)?;
    if sel.results[0].ty != Type::Int(1)
        || const_value(defs, &sel.operands[1])? != 1
        || const_value(defs, &sel.operands[2])? != 0
    {
        return None;
    }
    Some((match_msb(defs, f, &sel.operands[0])?, k))
}

/// Matches the per-bit OR chain rooted at `root`; returns the narrow source.
fn match_bit_chain<'a>(
    defs: &HashMap<&str, &'a Op>,
    f: &Function,
    root: &'a Op,
) -> Option<&'a str> {
    let v = root.results[0].ty.width()?;
    let mut ks = Vec::new();
    let mut source: Option<&str> = None;
    let mut cur = root;
    let base = loop {
        match cur.kind {
            OpKind::Cast(CastOp::ExtU) => break cur.operands[0].as_str(),
            OpKind::Binary(BinOp::Or) => {
                let (acc, (x, k)) = match match_step(defs, f, &cur.operands[1]) {
                    Some(s) => (&cur.operands[0], s),
                    None => (&cur.operands[1], match_step(defs, f, &cur.operands[0])?),
                };
                if *source.get_or_insert(x) != x {
                    return None;
                }
                ks.push(k);
                cur = defs.get(acc.as_str())?;
            }
            _ => return None,
        }
    };
    let x = source?;
    if base != x {
        return None;
    }
    let w = width_of(defs, f, x)?;
    ks.sort_unstable();
    let expected: Vec<u128> = (u128::from(w)..u128::from(v)).collect();
    (w < v && ks == expected).then_some(x)
}

/// `shrsi(shli(extui x, V-W), V-W)`.
fn match_shift_pair<'a>(
    defs: &HashMap<&str, &'a Op>,
    f: &Function,
    root: &'a Op,
) -> Option<&'a str> {
    let v = root.results[0].ty.width()?;
    let up = op_is(defs, &root.operands[0], &OpKind::Binary(BinOp::Shl))?;
    let z = op_is(defs, &up.operands[0], &OpKind::Cast(CastOp::ExtU))?;
    let x = z.operands[0].as_str();
    let w = width_of(defs, f, x)?;
    let k = u128::from(v.checked_sub(w)?);
    let ok = w < v
        && const_value(defs, &up.operands[1])? == k
        && const_value(defs, &root.operands[1])? == k;
    ok.then_some(x)
}

/// Returns the number of idioms replaced.
pub fn canon_bitmanip(f: &mut Function) -> usize {
    let matches: Vec<(String, String)> = {
        let defs = def_map(f);
        let mut found = Vec::new();
        f.walk(&mut |op| {
            let x = match op.kind {
                OpKind::Binary(BinOp::Or) => match_bit_chain(&defs, f, op),
                OpKind::Binary(BinOp::ShrS) => match_shift_pair(&defs, f, op),
                _ => None,
            };
            if let Some(x) = x {
                found.push((op.results[0].name.clone(), x.to_string()));
            }
        });
        found
    };
    let mut seeds = Vec::new();
    for (root, x) in &matches {
        edit_def(f, root, |op| {
            seeds.append(&mut op.operands);
            op.kind = OpKind::Cast(CastOp::ExtS);
            op.operands = vec![x.clone()];
            op.attrs.clear();
        });
    }
    if !seeds.is_empty() {
        remove_dead(f, Some(&seeds));
    }
    matches.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, DesignSpec};
    use crate::ir::{parse_function, verify};
    use crate::oracle::{check_equivalence, Budget, Domain};

    #[test]
    fn pe_widenings_collapse() {
        for seed in [0, 1] {
            let (m, _) = generate(&DesignSpec::pe(8, 32, 8).with_seed(seed)).unwrap();
            let mut f = m.functions[0].clone();
            assert_eq!(canon_bitmanip(&mut f), 2);
            verify(&f).unwrap();
            let mut n = 0;
            f.walk(&mut |op| n += usize::from(matches!(op.kind, OpKind::Binary(BinOp::Or))));
            assert_eq!(n, 0);
            let report =
                check_equivalence(&m.functions[0], &f, &Domain::Full, &Budget::default()).unwrap();
            assert!(report.is_equivalent());
        }
    }

    #[test]
    fn missing_bit_is_left_alone() {
        let f = parse_function(
            "func @k__o(%x: i4 {signal = \"x\"}) {\n\
             %z = extui %x : i6\n\
             %c3 = const 3 : i4\n\
             %t = shrui %x, %c3 : i4\n\
             %m = trunci %t : i1\n\
             %one = const 1 : i1\n\
             %zero = const 0 : i1\n\
             %b = select %m, %one, %zero : i1\n\
             %w = extui %b : i6\n\
             %k = const 4 : i6\n\
             %s = shli %w, %k : i6\n\
             %e = ori %z, %s : i6\n\
             return %e\n}",
        )
        .unwrap();
        let mut g = f.clone();
        assert_eq!(canon_bitmanip(&mut g), 0);
        assert_eq!(g, f);
    }

    #[test]
    fn shift_pair_needs_matching_amounts() {
        let f = parse_function(
            "func @k__o(%x: i8 {signal = \"x\"}) {\n\
             %z = extui %x : i32\n\
             %k = const 24 : i32\n\
             %j = const 23 : i32\n\
             %u = shli %z, %k : i32\n\
             %s = shrsi %u, %j : i32\n\
             return %s\n}",
        )
        .unwrap();
        let mut g = f.clone();
        assert_eq!(canon_bitmanip(&mut g), 0);
    }
}
