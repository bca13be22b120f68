//! Rolls unrolled multiply-accumulate and running-maximum chains back into
//! `scf.for` loops with one loop-carried value.

use std::collections::{HashMap, HashSet};

use super::util::{const_value, def_map, remove_dead, use_counts};
use crate::ir::{
    keys, AttrValue, BinOp, CastOp, ForLoop, Function, NameGen, Op, OpKind, Pred, Type, Value,
};

struct Ctx<'a> {
    defs: HashMap<&'a str, &'a Op>,
    uses: HashMap<String, usize>,
    types: HashMap<String, Type>,
}

impl Ctx<'_> {
    fn uses(&self, name: &str) -> usize {
        self.uses.get(name).copied().unwrap_or(0)
    }

    fn rank1(&self, mem: &str) -> bool {
        matches!(self.types.get(mem), Some(Type::MemRef { shape, .. }) if shape.len() == 1)
    }
}

/// A `memref.load %mem[const]`, optionally widened.
#[derive(Clone)]
struct Side<'a> {
    load: &'a Op,
    cast: Option<&'a Op>,
    index: u128,
}

impl Side<'_> {
    fn mem(&self) -> &str {
        &self.load.operands[0]
    }

    fn shape(&self) -> (String, Option<(CastOp, Type)>, Type) {
        let cast = self.cast.map(|c| match c.kind {
            OpKind::Cast(k) => (k, c.results[0].ty.clone()),
            _ => unreachable!(),
        });
        (self.mem().to_string(), cast, self.load.results[0].ty.clone())
    }
}

fn parse_side<'a>(ctx: &Ctx<'a>, local: &HashSet<&str>, name: &str) -> Option<Side<'a>> {
    let mut op = *ctx.defs.get(name).filter(|_| local.contains(name))?;
    let mut cast = None;
    if matches!(op.kind, OpKind::Cast(CastOp::ExtS | CastOp::ExtU)) {
        if ctx.uses(name) != 1 {
            return None;
        }
        cast = Some(op);
        let inner = op.operands[0].as_str();
        op = *ctx.defs.get(inner).filter(|_| local.contains(inner))?;
    }
    let load_name = op.results.first()?.name.as_str();
    let ok = op.kind == OpKind::Load
        && op.operands.len() == 2
        && ctx.rank1(&op.operands[0])
        && ctx.uses(load_name) == 1;
    if !ok {
        return None;
    }
    let index = const_value(&ctx.defs, &op.operands[1])?;
    Some(Side { load: op, cast, index })
}

struct MacStep<'a> {
    add: &'a Op,
    acc: &'a str,
    mul: &'a Op,
    sides: [Side<'a>; 2],
}

type MacShape = ((String, Option<(CastOp, Type)>, Type), (String, Option<(CastOp, Type)>, Type), Type);

impl MacStep<'_> {
    fn shape(&self) -> MacShape {
        (self.sides[0].shape(), self.sides[1].shape(), self.add.results[0].ty.clone())
    }
}

fn parse_mac<'a>(ctx: &Ctx<'a>, local: &HashSet<&str>, add: &'a Op) -> Option<MacStep<'a>> {
    if add.kind != OpKind::Binary(BinOp::Add) || !add.attrs.contains_key(keys::MAC) {
        return None;
    }
    let mut found = Vec::new();
    for (p, a) in [(1, 0), (0, 1)] {
        let pname = add.operands[p].as_str();
        let Some(mul) = ctx.defs.get(pname).filter(|_| local.contains(pname)) else {
            continue;
        };
        if mul.kind != OpKind::Binary(BinOp::Mul) || ctx.uses(pname) != 1 {
            continue;
        }
        let (Some(l), Some(r)) = (
            parse_side(ctx, local, &mul.operands[0]),
            parse_side(ctx, local, &mul.operands[1]),
        ) else {
            continue;
        };
        if l.index != r.index || l.load.results[0].name == r.load.results[0].name {
            continue;
        }
        found.push(MacStep {
            add,
            acc: add.operands[a].as_str(),
            mul,
            sides: [l, r],
        });
    }
    // with two candidate products, prefer the one whose accumulator is
    // itself a tagged addition
    let chained = |s: &MacStep| {
        ctx.defs
            .get(s.acc)
            .is_some_and(|d| d.attrs.contains_key(keys::MAC))
    };
    let pick = found.iter().position(chained).unwrap_or(0);
    (!found.is_empty()).then(|| found.swap_remove(pick))
}

struct MaxStep<'a> {
    select: &'a Op,
    cmp: &'a Op,
    load: &'a Op,
    best: &'a str,
    index: u128,
}

fn parse_max<'a>(ctx: &Ctx<'a>, local: &HashSet<&str>, sel: &'a Op) -> Option<MaxStep<'a>> {
    if sel.kind != OpKind::Select {
        return None;
    }
    let (c, v, best) = (&sel.operands[0], &sel.operands[1], &sel.operands[2]);
    let cmp = *ctx.defs.get(c.as_str()).filter(|_| local.contains(c.as_str()))?;
    let OpKind::Cmp(Pred::Sgt | Pred::Sge | Pred::Ugt | Pred::Uge) = cmp.kind else {
        return None;
    };
    if cmp.operands[0] != *v || cmp.operands[1] != *best || ctx.uses(c) != 1 || ctx.uses(v) != 2 {
        return None;
    }
    let load = *ctx.defs.get(v.as_str()).filter(|_| local.contains(v.as_str()))?;
    if load.kind != OpKind::Load || load.operands.len() != 2 || !ctx.rank1(&load.operands[0]) {
        return None;
    }
    let index = const_value(&ctx.defs, &load.operands[1])?;
    Some(MaxStep {
        select: sel,
        cmp,
        load,
        best,
        index,
    })
}

/// One rewrite: drop `remove`, put `replacement` where `anchor` was.
struct Plan {
    anchor: String,
    remove: HashSet<String>,
    replacement: Op,
}

/// Links steps into maximal chains: `next[i] = j` when step `j` consumes the
/// single use of step `i`'s result.
fn chains(results: &[&str], accs: &[&str], ctx: &Ctx, link_uses: usize) -> Vec<Vec<usize>> {
    let by_acc: HashMap<&str, usize> = accs.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut next = vec![None; results.len()];
    let mut has_prev = vec![false; results.len()];
    for (i, r) in results.iter().enumerate() {
        if let Some(&j) = by_acc.get(r) {
            if ctx.uses(r) == link_uses && i != j {
                next[i] = Some(j);
                has_prev[j] = true;
            }
        }
    }
    let mut out = Vec::new();
    for head in (0..results.len()).filter(|&i| !has_prev[i]) {
        let mut chain = vec![head];
        let mut cur = head;
        while let Some(n) = next[cur] {
            chain.push(n);
            cur = n;
        }
        out.push(chain);
    }
    out
}

fn plan_mac(steps: &[MacStep], chain: &[usize], names: &mut NameGen) -> Option<Plan> {
    let shape = steps[chain[0]].shape();
    let n = chain
        .iter()
        .enumerate()
        .take_while(|(j, &s)| {
            let st = &steps[s];
            st.sides[0].index == *j as u128 && st.shape() == shape
        })
        .count();
    if n < 2 {
        return None;
    }
    let chain = &chain[..n];
    let first = &steps[chain[0]];
    let last = &steps[chain[n - 1]];
    let mut remove = HashSet::new();
    for &s in chain {
        let st = &steps[s];
        for op in [st.add, st.mul] {
            remove.insert(op.results[0].name.clone());
        }
        for side in &st.sides {
            remove.insert(side.load.results[0].name.clone());
            if let Some(c) = side.cast {
                remove.insert(c.results[0].name.clone());
            }
        }
    }

    let iv = names.fresh("i");
    let acc = names.fresh("acc");
    let mut body = Vec::new();
    let mut operands = Vec::new();
    let mut roots = Vec::new();
    for (side, hint) in first.sides.iter().zip(["x", "y"]) {
        let x = names.fresh(hint);
        body.push(Op::new(
            OpKind::Load,
            vec![Value::new(x.clone(), side.load.results[0].ty.clone())],
            vec![side.mem().to_string(), iv.clone()],
        ));
        roots.push((x.clone(), side.load.results[0].ty.width().unwrap_or(0)));
        let wide = match side.cast {
            Some(c) => {
                let xe = names.fresh(&format!("{hint}_ext"));
                body.push(Op::new(
                    c.kind.clone(),
                    vec![Value::new(xe.clone(), c.results[0].ty.clone())],
                    vec![x],
                ));
                xe
            }
            None => x,
        };
        operands.push(wide);
    }
    let p = names.fresh("prod");
    body.push(Op::new(
        OpKind::Binary(BinOp::Mul),
        vec![Value::new(p.clone(), first.mul.results[0].ty.clone())],
        operands,
    ));
    let next = names.fresh("acc_next");
    let ty = last.add.results[0].ty.clone();
    let mut add = Op::new(
        OpKind::Binary(BinOp::Add),
        vec![Value::new(next.clone(), ty.clone())],
        vec![acc.clone(), p],
    );
    let text = format!(
        "lhs=%{}:{} rhs=%{}:{} acc=%{acc}",
        roots[0].0, roots[0].1, roots[1].0, roots[1].1
    );
    add.attrs.insert(keys::MAC.into(), AttrValue::Str(text));
    body.push(add);
    body.push(Op::new(OpKind::Yield, vec![], vec![next]));

    let anchor = last.add.results[0].name.clone();
    let replacement = Op::new(
        OpKind::For(ForLoop {
            lower: 0,
            upper: n as i64,
            step: 1,
            iv,
            iter_args: vec![acc],
        }),
        vec![Value::new(anchor.clone(), ty)],
        vec![first.acc.to_string()],
    )
    .with_regions(vec![body]);
    Some(Plan {
        anchor,
        remove,
        replacement,
    })
}

fn plan_max(steps: &[MaxStep], chain: &[usize], names: &mut NameGen) -> Option<Plan> {
    let head = &steps[chain[0]];
    let mem = &head.load.operands[0];
    let ty = head.select.results[0].ty.clone();
    let n = chain
        .iter()
        .enumerate()
        .take_while(|(j, &s)| {
            let st = &steps[s];
            &st.load.operands[0] == mem
                && st.cmp.kind == head.cmp.kind
                && st.index == head.index + *j as u128
        })
        .count();
    if n < 2 {
        return None;
    }
    let chain = &chain[..n];
    let mut remove = HashSet::new();
    for &s in chain {
        let st = &steps[s];
        for op in [st.select, st.cmp, st.load] {
            remove.insert(op.results[0].name.clone());
        }
    }
    let last = &steps[chain[n - 1]];
    let iv = names.fresh("i");
    let best = names.fresh("best");
    let v = names.fresh("v");
    let gt = names.fresh("gt");
    let next = names.fresh("best_next");
    let body = vec![
        Op::new(
            OpKind::Load,
            vec![Value::new(v.clone(), head.load.results[0].ty.clone())],
            vec![mem.clone(), iv.clone()],
        ),
        Op::new(
            head.cmp.kind.clone(),
            vec![Value::new(gt.clone(), Type::Int(1))],
            vec![v.clone(), best.clone()],
        ),
        Op::new(
            OpKind::Select,
            vec![Value::new(next.clone(), ty.clone())],
            vec![gt, v, best.clone()],
        ),
        Op::new(OpKind::Yield, vec![], vec![next]),
    ];
    let anchor = last.select.results[0].name.clone();
    let lower = head.index as i64;
    let replacement = Op::new(
        OpKind::For(ForLoop {
            lower,
            upper: lower + n as i64,
            step: 1,
            iv,
            iter_args: vec![best],
        }),
        vec![Value::new(anchor.clone(), ty)],
        vec![head.best.to_string()],
    )
    .with_regions(vec![body]);
    Some(Plan {
        anchor,
        remove,
        replacement,
    })
}

fn plan_block(block: &[Op], ctx: &Ctx, names: &mut NameGen, plans: &mut Vec<Plan>) {
    let local: HashSet<&str> = block
        .iter()
        .flat_map(|op| op.results.iter().map(|v| v.name.as_str()))
        .collect();

    let macs: Vec<MacStep> = block.iter().filter_map(|op| parse_mac(ctx, &local, op)).collect();
    let results: Vec<&str> = macs.iter().map(|s| s.add.results[0].name.as_str()).collect();
    let accs: Vec<&str> = macs.iter().map(|s| s.acc).collect();
    for chain in chains(&results, &accs, ctx, 1) {
        plans.extend(plan_mac(&macs, &chain, names));
    }

    let maxes: Vec<MaxStep> = block.iter().filter_map(|op| parse_max(ctx, &local, op)).collect();
    let results: Vec<&str> = maxes.iter().map(|s| s.select.results[0].name.as_str()).collect();
    let bests: Vec<&str> = maxes.iter().map(|s| s.best).collect();
    for chain in chains(&results, &bests, ctx, 2) {
        plans.extend(plan_max(&maxes, &chain, names));
    }

    for op in block {
        for r in &op.regions {
            plan_block(r, ctx, names, plans);
        }
    }
}

fn apply(block: &mut Vec<Op>, plans: &mut HashMap<String, Op>, remove: &HashSet<String>) {
    let old = std::mem::take(block);
    for mut op in old {
        let name = op.result_name().map(str::to_string);
        if let Some(rep) = name.as_ref().and_then(|n| plans.remove(n)) {
            block.push(rep);
            continue;
        }
        if name.is_some_and(|n| remove.contains(&n)) {
            continue;
        }
        for r in &mut op.regions {
            apply(r, plans, remove);
        }
        block.push(op);
    }
}

/// Returns the number of loops created.
pub fn reconstruct_loops(f: &mut Function) -> usize {
    let mut total = 0;
    loop {
        let plans = {
            let ctx = Ctx {
                defs: def_map(f),
                uses: use_counts(f),
                types: f.value_types(),
            };
            let mut names = NameGen::for_function(f);
            let mut plans = Vec::new();
            plan_block(&f.body, &ctx, &mut names, &mut plans);
            plans
        };
        if plans.is_empty() {
            return total;
        }
        total += plans.len();
        let mut remove = HashSet::new();
        let mut anchors = HashMap::new();
        let mut seeds = Vec::new();
        for p in plans {
            remove.extend(p.remove);
            anchors.insert(p.anchor, p.replacement);
        }
        f.walk(&mut |op| {
            if op.result_name().is_some_and(|n| remove.contains(n)) {
                seeds.extend(op.operands.iter().cloned());
            }
        });
        apply(&mut f.body, &mut anchors, &remove);
        remove_dead(f, Some(&seeds));
    }
}
