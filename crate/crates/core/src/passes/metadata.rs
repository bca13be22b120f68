//! Attaches the annotations the assembler consumes and drops everything
//! outside the annotation vocabulary.

use std::collections::{HashMap, HashSet};

use super::util::returned_slice;
use crate::ir::{keys, AttrValue, Attrs, Function, OpKind};

pub const ROLE_INPUT: &str = "input";
pub const ROLE_OUTPUT: &str = "output";
pub const ROLE_STATE: &str = "state";
pub const ROLE_ATTRIBUTE: &str = "attribute";

pub fn port_class(signal: &str) -> &'static str {
    if signal.contains("dram") {
        "dram_addr"
    } else if signal.contains("spad") || signal.contains("acc") {
        "spad_addr"
    } else {
        "data"
    }
}

/// Last pair of adjacent numeric `_` segments of an ASV name.
pub fn coordinates(asv: &str) -> Option<(i128, i128)> {
    let parts: Vec<&str> = asv.split('_').collect();
    parts.windows(2).rev().find_map(|w| {
        let numeric = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        if numeric(w[0]) && numeric(w[1]) {
            Some((w[0].parse().ok()?, w[1].parse().ok()?))
        } else {
            None
        }
    })
}

/// Memref argument each memref value is a version of.
fn version_roots(f: &Function) -> HashMap<String, String> {
    let mut root: HashMap<String, String> = f
        .args
        .iter()
        .filter(|a| a.ty.is_memref())
        .map(|a| (a.name.clone(), a.name.clone()))
        .collect();
    f.walk(&mut |op| {
        let inherited = match &op.kind {
            OpKind::Store => root.get(&op.operands[1]).cloned(),
            OpKind::Select => match (root.get(&op.operands[1]), root.get(&op.operands[2])) {
                (Some(a), Some(b)) if a == b => Some(a.clone()),
                _ => None,
            },
            _ => None,
        };
        if let Some(r) = inherited {
            root.insert(op.results[0].name.clone(), r);
        }
        if let OpKind::For(l) = &op.kind {
            for (arg, init) in l.iter_args.iter().zip(&op.operands) {
                if let Some(r) = root.get(init).cloned() {
                    root.insert(arg.clone(), r);
                }
            }
        }
    });
    root
}

fn memref_roles(f: &Function) -> HashMap<String, &'static str> {
    let root = version_roots(f);
    let mut read = HashSet::new();
    let mut written = HashSet::new();
    f.walk(&mut |op| match op.kind {
        OpKind::Load => read.extend(root.get(&op.operands[0]).cloned()),
        OpKind::Store => written.extend(root.get(&op.operands[1]).cloned()),
        _ => {}
    });
    f.args
        .iter()
        .filter(|a| a.ty.is_memref())
        .map(|a| {
            let role = match (read.contains(&a.name), written.contains(&a.name)) {
                (true, true) => ROLE_STATE,
                (false, true) => ROLE_OUTPUT,
                _ => ROLE_INPUT,
            };
            (a.name.clone(), role)
        })
        .collect()
}

fn set(attrs: &mut Attrs, key: &str, value: AttrValue, changed: &mut usize) {
    if attrs.get(key) != Some(&value) {
        attrs.insert(key.to_string(), value);
        *changed += 1;
    }
}

/// Returns the number of annotations added or changed.
pub fn emit_taidl_metadata(f: &mut Function) -> usize {
    let mut changed = 0;
    f.walk_mut(&mut |op| op.attrs.retain(|k, _| keys::is_known(k)));
    f.attrs.retain(|k, _| keys::is_known(k));

    let roles = memref_roles(f);
    for a in &mut f.args {
        a.attrs.retain(|k, _| keys::is_known(k));
        let role = roles.get(&a.name).copied().unwrap_or(ROLE_ATTRIBUTE);
        set(&mut a.attrs, keys::ROLE, role.into(), &mut changed);
        let class = port_class(&a.signal);
        set(&mut a.attrs, keys::PORT_CLASS, class.into(), &mut changed);
    }

    let slice = returned_slice(f);
    let mut compute = None;
    let mut clamp = None;
    let mut activation = None;
    f.walk(&mut |op| {
        if op.result_name().is_some_and(|n| slice.contains(n)) {
            if compute.is_none() {
                compute = op.attrs.get(keys::LINALG_OP).cloned();
            }
            if clamp.is_none() {
                clamp = op.attrs.get(keys::CLAMP).cloned();
            }
            if activation.is_none() {
                activation = op.attrs.get(keys::ACTIVATION).cloned();
            }
        }
    });
    let compute = compute.unwrap_or_else(|| "opaque".into());
    set(&mut f.attrs, keys::COMPUTE, compute, &mut changed);
    set(&mut f.attrs, keys::ROLE, ROLE_OUTPUT.into(), &mut changed);
    if let Some((r, c)) = coordinates(&f.target_asv) {
        set(&mut f.attrs, keys::COORD, AttrValue::List(vec![r, c]), &mut changed);
    }
    for (key, value) in [(keys::CLAMP, clamp), (keys::ACTIVATION, activation)] {
        match value {
            Some(v) => set(&mut f.attrs, key, v, &mut changed),
            None => {
                f.attrs.remove(key);
            }
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_function;

    #[test]
    fn coordinates_from_asv_names() {
        assert_eq!(coordinates("pe_3_5_acc"), Some((3, 5)));
        assert_eq!(coordinates("pe_0_1_out"), Some((0, 1)));
        assert_eq!(coordinates("strides_0"), None);
        assert_eq!(coordinates("a_1_2_3"), Some((2, 3)));
    }

    #[test]
    fn port_classes() {
        assert_eq!(port_class("dram_rdata"), "dram_addr");
        assert_eq!(port_class("spad_row"), "spad_addr");
        assert_eq!(port_class("acc_mem"), "spad_addr");
        assert_eq!(port_class("in_a"), "data");
    }

    #[test]
    fn roles_and_stripping() {
        let mut f = parse_function(
            "func @k__o(%s: memref<2xi8> {signal = \"spad\" junk = 1}, %d: memref<2xi8> {signal = \"out\"}, %x: i8 {signal = \"x\"}) attributes {asv = \"o\" bogus = \"y\"} {\n\
             %c0 = const 0 : index\n\
             %v = memref.load %s[%c0] : i8\n\
             %s2 = memref.store %v, %s[%c0] : memref<2xi8>\n\
             %d2 = memref.store %x, %d[%c0] : memref<2xi8> {weird = 3}\n\
             return %d2\n}",
        )
        .unwrap();
        assert!(emit_taidl_metadata(&mut f) > 0);
        let role = |i: usize| f.args[i].attrs[keys::ROLE].as_str().unwrap().to_string();
        assert_eq!(role(0), "state");
        assert_eq!(role(1), "output");
        assert_eq!(role(2), "attribute");
        assert!(!f.attrs.contains_key("bogus"));
        assert!(!f.args[0].attrs.contains_key("junk"));
        assert!(f.body[3].attrs.is_empty());
        assert_eq!(f.attrs[keys::COMPUTE].as_str(), Some("opaque"));
        assert_eq!(emit_taidl_metadata(&mut f), 0);
    }

    #[test]
    fn compute_tag_follows_the_returned_value() {
        let src = |ret: &str| {
            format!(
                "func @k__o(%m: memref<2xi8> {{signal = \"in\"}}, %x: i8 {{signal = \"x\"}}) {{\n\
                 %c0 = const 0 : index\n\
                 %v = memref.load %m[%c0] : i8\n\
                 %r = scf.for %i = 1 to 2 step 1 iter_args(%b = %v) -> i8 {{\n\
                   %e = memref.load %m[%i] : i8\n\
                   %g = cmpi sgt %e, %b : i1\n\
                   %n = select %g, %e, %b : i8\n\
                   scf.yield %n\n\
                 }} {{linalg_op = \"max_reduce\"}}\n\
                 return %{ret}\n}}"
            )
        };
        let mut live = parse_function(&src("r")).unwrap();
        emit_taidl_metadata(&mut live);
        assert_eq!(live.attrs[keys::COMPUTE].as_str(), Some("max_reduce"));
        let mut dead = parse_function(&src("x")).unwrap();
        emit_taidl_metadata(&mut dead);
        assert_eq!(dead.attrs[keys::COMPUTE].as_str(), Some("opaque"));
    }
}
