use std::collections::{HashMap, HashSet};

use crate::ir::{AttrValue, CastOp, Function, Op, OpKind};

/// Result name to defining op, across every region.
pub(crate) fn def_map(f: &Function) -> HashMap<&str, &Op> {
    let mut defs = HashMap::new();
    f.walk(&mut |op| {
        for v in &op.results {
            defs.insert(v.name.as_str(), op);
        }
    });
    defs
}

/// Number of operand uses of every name, across every region.
pub(crate) fn use_counts(f: &Function) -> HashMap<String, usize> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    f.walk(&mut |op| {
        for o in &op.operands {
            *counts.entry(o.clone()).or_default() += 1;
        }
    });
    counts
}

/// Every operand read by `op` or by anything nested in it.
pub(crate) fn nested_operands(op: &Op) -> Vec<String> {
    let mut out = op.operands.clone();
    for r in &op.regions {
        for inner in r {
            out.extend(nested_operands(inner));
        }
    }
    out
}

pub(crate) fn const_value(defs: &HashMap<&str, &Op>, name: &str) -> Option<u128> {
    match defs.get(name).map(|op| &op.kind) {
        Some(OpKind::Const(v)) => Some(*v),
        _ => None,
    }
}

/// Follows sign/zero extensions down to the pre-extension value.
pub(crate) fn strip_ext<'a>(defs: &HashMap<&str, &'a Op>, mut name: &'a str) -> &'a str {
    while let Some(op) = defs.get(name) {
        match op.kind {
            OpKind::Cast(CastOp::ExtS | CastOp::ExtU) => name = op.operands[0].as_str(),
            _ => break,
        }
    }
    name
}

/// Replaces `%old` tokens inside string annotations.
fn rename_in_text(text: &str, map: &HashMap<String, String>) -> String {
    let is_name = |c: char| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$');
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('%') {
        out.push_str(&rest[..=i]);
        rest = &rest[i + 1..];
        let end = rest.find(|c: char| !is_name(c)).unwrap_or(rest.len());
        let name = &rest[..end];
        out.push_str(map.get(name).map(String::as_str).unwrap_or(name));
        rest = &rest[end..];
    }
    out.push_str(rest);
    out
}

fn resolve<'a>(map: &'a HashMap<String, String>, mut name: &'a str) -> &'a str {
    let mut hops = 0;
    while let Some(next) = map.get(name) {
        name = next;
        hops += 1;
        if hops > map.len() {
            break;
        }
    }
    name
}

/// Rewrites every use of a key of `map` to its (transitively resolved) value,
/// including `%name` references inside string annotations.
pub(crate) fn rename_uses(f: &mut Function, map: &HashMap<String, String>) {
    if map.is_empty() {
        return;
    }
    let resolved: HashMap<String, String> = map
        .keys()
        .map(|k| (k.clone(), resolve(map, k).to_string()))
        .collect();
    f.walk_mut(&mut |op| {
        for o in &mut op.operands {
            if let Some(n) = resolved.get(o) {
                *o = n.clone();
            }
        }
        for v in op.attrs.values_mut() {
            if let AttrValue::Str(s) = v {
                if s.contains('%') {
                    *s = rename_in_text(s, &resolved);
                }
            }
        }
    });
}

/// Removes ops whose results are all unused. With `seeds`, only ops that
/// become dead by following uses back from those names are considered, so
/// unrelated dead code is left alone. Returns the number of ops removed.
pub(crate) fn remove_dead(f: &mut Function, seeds: Option<&[String]>) -> usize {
    let mut counts = use_counts(f);
    let mut uses: HashMap<String, Vec<String>> = HashMap::new();
    let mut all_results: Vec<String> = Vec::new();
    f.walk(&mut |op| {
        if op.kind.is_terminator() || op.results.is_empty() {
            return;
        }
        let key = op.results[0].name.clone();
        uses.insert(key.clone(), nested_operands(op));
        all_results.push(key);
    });
    let results_of: HashMap<String, Vec<String>> = {
        let mut m = HashMap::new();
        f.walk(&mut |op| {
            if let Some(first) = op.results.first() {
                m.insert(
                    first.name.clone(),
                    op.results.iter().map(|v| v.name.clone()).collect::<Vec<_>>(),
                );
            }
        });
        m
    };
    // every result name maps to the key (first result) of its op
    let key_of: HashMap<String, String> = results_of
        .iter()
        .flat_map(|(k, rs)| rs.iter().map(move |r| (r.clone(), k.clone())))
        .collect();

    let mut work: Vec<String> = match seeds {
        Some(s) => s.to_vec(),
        None => all_results.clone(),
    };
    let mut dead: HashSet<String> = HashSet::new();
    while let Some(name) = work.pop() {
        let Some(key) = key_of.get(&name) else {
            continue;
        };
        if dead.contains(key) || !uses.contains_key(key) {
            continue;
        }
        let unused = results_of[key]
            .iter()
            .all(|r| counts.get(r).copied().unwrap_or(0) == 0);
        if !unused {
            continue;
        }
        dead.insert(key.clone());
        for u in &uses[key] {
            if let Some(c) = counts.get_mut(u) {
                *c = c.saturating_sub(1);
            }
            work.push(u.clone());
        }
    }

    let general = seeds.is_none();
    fn sweep(ops: &mut Vec<Op>, dead: &HashSet<String>, general: bool) -> usize {
        let mut removed = 0;
        ops.retain(|op| {
            let kill = match op.results.first() {
                Some(v) => dead.contains(&v.name),
                None => general && matches!(op.kind, OpKind::If | OpKind::For(_)),
            };
            if kill {
                removed += op.count();
            }
            !kill
        });
        for op in ops.iter_mut() {
            for r in &mut op.regions {
                removed += sweep(r, dead, general);
            }
        }
        removed
    }
    sweep(&mut f.body, &dead, general)
}

/// Finds the op defining `name` and applies `edit` to it.
pub(crate) fn edit_def(f: &mut Function, name: &str, edit: impl FnOnce(&mut Op)) -> bool {
    let mut edit = Some(edit);
    let mut done = false;
    f.walk_mut(&mut |op| {
        if !done && op.results.iter().any(|v| v.name == name) {
            if let Some(e) = edit.take() {
                e(op);
                done = true;
            }
        }
    });
    done
}

/// Ops the returned value depends on, in any region.
pub(crate) fn returned_slice(f: &Function) -> HashSet<String> {
    let mut defs: HashMap<&str, &Op> = HashMap::new();
    f.walk(&mut |op| {
        for v in &op.results {
            defs.insert(&v.name, op);
        }
    });
    let mut seen = HashSet::new();
    let mut work: Vec<&str> = f.returned().into_iter().collect();
    while let Some(n) = work.pop() {
        if !seen.insert(n.to_string()) {
            continue;
        }
        if let Some(op) = defs.get(n) {
            work.extend(op.operands.iter().map(String::as_str));
            for r in &op.regions {
                for inner in r {
                    work.extend(inner.results.iter().map(|v| v.name.as_str()));
                    if inner.kind == OpKind::Yield {
                        work.extend(inner.operands.iter().map(String::as_str));
                    }
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_function, verify};

    #[test]
    fn targeted_dce_keeps_unrelated_dead_code() {
        let mut f = parse_function(
            "func @k__o(%a: i8 {signal = \"a\"}) {\n\
             %junk = addi %a, %a : i8\n\
             %x = xori %a, %a : i8\n\
             %y = ori %x, %a : i8\n\
             return %a\n}",
        )
        .unwrap();
        let removed = remove_dead(&mut f, Some(&["y".to_string()]));
        assert_eq!(removed, 2);
        assert_eq!(f.op_count(), 2);
        let removed = remove_dead(&mut f, None);
        assert_eq!(removed, 1);
        verify(&f).unwrap();
    }

    #[test]
    fn rename_patches_annotations() {
        let mut f = parse_function(
            "func @k__o(%a: i8 {signal = \"a\"}, %b: i8 {signal = \"b\"}) {\n\
             %x = addi %a, %b : i8 {atlaas.mac = \"lhs=%a:8 rhs=%b:8 acc=%bb\"}\n\
             return %x\n}",
        )
        .unwrap();
        let map = HashMap::from([("b".to_string(), "a".to_string())]);
        rename_uses(&mut f, &map);
        assert_eq!(f.body[0].operands, ["a", "a"]);
        assert_eq!(
            f.body[0].attrs["atlaas.mac"].as_str().unwrap(),
            "lhs=%a:8 rhs=%a:8 acc=%bb"
        );
    }
}
