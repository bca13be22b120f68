//! Seeded single-op mutations, for checking that the oracle notices a
//! semantic change.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{mask, BinOp, Function, OpKind, Type};
use crate::passes::util::returned_slice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationKind {
    /// `addi` becomes `subi` and vice versa.
    AddSub,
    /// Swaps the operands of an `shrsi`.
    ShiftSwap,
    /// Flips the lowest bit of an integer constant.
    ConstFlip,
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MutationKind::AddSub => "add-sub",
            MutationKind::ShiftSwap => "shift-swap",
            MutationKind::ConstFlip => "const-flip",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutation {
    pub kind: MutationKind,
    /// Result name of the mutated op.
    pub site: String,
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at %{}", self.kind, self.site)
    }
}

/// Ops a mutation would change, in walk order. Sites that cannot change
/// the result (ops the returned value does not depend on, subtracting a
/// zero constant, swapping equal operands) are left out.
pub fn mutation_sites(f: &Function) -> Vec<Mutation> {
    let live = returned_slice(f);
    let mut consts: HashMap<&str, u128> = HashMap::new();
    f.walk(&mut |op| {
        if let OpKind::Const(v) = op.kind {
            consts.insert(&op.results[0].name, v);
        }
    });
    let mut sites = Vec::new();
    f.walk(&mut |op| {
        let Some(site) = op.results.first().map(|v| v.name.clone()) else {
            return;
        };
        if !live.contains(&site) {
            return;
        }
        let kind = match &op.kind {
            OpKind::Binary(BinOp::Add | BinOp::Sub) if consts.get(op.operands[1].as_str()) != Some(&0) => {
                MutationKind::AddSub
            }
            OpKind::Binary(BinOp::ShrS) if op.operands[0] != op.operands[1] => MutationKind::ShiftSwap,
            OpKind::Const(_) if matches!(op.results[0].ty, Type::Int(_)) => MutationKind::ConstFlip,
            _ => return,
        };
        sites.push(Mutation { kind, site });
    });
    sites
}

/// Applies `m` to a copy of `f`; `None` when the site does not exist.
pub fn apply_mutation(f: &Function, m: &Mutation) -> Option<Function> {
    let mut g = f.clone();
    let mut hit = false;
    g.walk_mut(&mut |op| {
        if hit || op.results.first().map(|v| v.name.as_str()) != Some(m.site.as_str()) {
            return;
        }
        match (&mut op.kind, m.kind) {
            (OpKind::Binary(b @ BinOp::Add), MutationKind::AddSub) => *b = BinOp::Sub,
            (OpKind::Binary(b @ BinOp::Sub), MutationKind::AddSub) => *b = BinOp::Add,
            (OpKind::Binary(BinOp::ShrS), MutationKind::ShiftSwap) => op.operands.swap(0, 1),
            (OpKind::Const(v), MutationKind::ConstFlip) => {
                let w = op.results[0].ty.width().unwrap_or(1);
                *v = (*v ^ 1) & mask(w);
            }
            _ => return,
        }
        hit = true;
    });
    hit.then_some(g)
}

/// One mutation of `f` chosen by `seed`.
pub fn mutate(f: &Function, seed: u64) -> Option<(Function, Mutation)> {
    let sites = mutation_sites(f);
    if sites.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = sites[rng.gen_range(0..sites.len())].clone();
    apply_mutation(f, &m).map(|g| (g, m))
}
