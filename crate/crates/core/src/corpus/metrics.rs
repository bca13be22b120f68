use std::collections::{HashMap, HashSet};

use crate::ir::{print_attr_value, Function, Op, OpKind};

/// Names an op reads, including free names used inside its regions.
fn free_uses(op: &Op) -> Vec<String> {
    let mut defined: HashSet<&str> = HashSet::new();
    let mut uses = Vec::new();
    fn go<'a>(op: &'a Op, defined: &mut HashSet<&'a str>, uses: &mut Vec<String>) {
        for n in op.region_args() {
            defined.insert(n);
        }
        for r in &op.regions {
            for inner in r {
                go(inner, defined, uses);
                for v in &inner.results {
                    defined.insert(&v.name);
                }
            }
        }
        for n in &op.operands {
            if !defined.contains(n.as_str()) {
                uses.push(n.clone());
            }
        }
    }
    go(op, &mut defined, &mut uses);
    uses
}

/// Number of ops the returned value depends on (region ops count with
/// their bodies; the `return` itself is excluded).
pub fn compute_core(f: &Function) -> usize {
    let defs: HashMap<&str, usize> = f
        .body
        .iter()
        .enumerate()
        .flat_map(|(i, op)| op.results.iter().map(move |v| (v.name.as_str(), i)))
        .collect();
    let mut seen = HashSet::new();
    let mut work: Vec<String> = f.returned().map(str::to_string).into_iter().collect();
    let mut total = 0;
    while let Some(name) = work.pop() {
        let Some(&i) = defs.get(name.as_str()) else {
            continue;
        };
        if !seen.insert(i) {
            continue;
        }
        total += f.body[i].count();
        work.extend(free_uses(&f.body[i]));
    }
    total
}

fn uses_of(f: &Function, name: &str) -> usize {
    let mut n = 0;
    f.walk(&mut |op| n += op.operands.iter().filter(|o| o.as_str() == name).count());
    n
}

/// Evaluates one expectation metric on `f`:
///
/// * `ops`, `core_ops`
/// * `count.<mnemonic>`: ops with that mnemonic
/// * `annot.<key>`: ops carrying the annotation
/// * `attr.<key>`: function annotation value, or `none`
/// * `arg.<signal>.<key>`: argument annotation value, or `none`
/// * `uses.<signal>`: operand uses of the argument with that signal
/// * `loops.iter_args`, `loops.trip`: summed over every `scf.for`
pub fn measure(f: &Function, metric: &str) -> Option<String> {
    let count = |pred: &dyn Fn(&Op) -> bool| {
        let mut n = 0usize;
        f.walk(&mut |op| {
            if pred(op) {
                n += 1;
            }
        });
        n
    };
    let value = if metric == "ops" {
        f.op_count().to_string()
    } else if metric == "core_ops" {
        compute_core(f).to_string()
    } else if let Some(m) = metric.strip_prefix("count.") {
        count(&|op| op.kind.mnemonic() == m).to_string()
    } else if let Some(k) = metric.strip_prefix("annot.") {
        count(&|op| op.attrs.contains_key(k)).to_string()
    } else if let Some(k) = metric.strip_prefix("attr.") {
        f.attrs
            .get(k)
            .map(print_attr_value)
            .unwrap_or_else(|| "none".into())
    } else if let Some(rest) = metric.strip_prefix("arg.") {
        let (signal, key) = rest.split_once('.')?;
        let arg = f.arg_by_signal(signal)?;
        arg.attrs
            .get(key)
            .map(print_attr_value)
            .unwrap_or_else(|| "none".into())
    } else if let Some(signal) = metric.strip_prefix("uses.") {
        let arg = f.arg_by_signal(signal)?;
        uses_of(f, &arg.name).to_string()
    } else if metric == "loops.iter_args" {
        let mut n = 0;
        f.walk(&mut |op| {
            if let OpKind::For(l) = &op.kind {
                n += l.iter_args.len();
            }
        });
        n.to_string()
    } else if metric == "loops.trip" {
        let mut n = 0;
        f.walk(&mut |op| {
            if let OpKind::For(l) = &op.kind {
                n += l.trip_count();
            }
        });
        n.to_string()
    } else {
        return None;
    };
    Some(value)
}
