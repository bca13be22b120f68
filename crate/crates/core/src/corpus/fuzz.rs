//! Random verifying functions for fallback-totality testing.
//!
//! Functions mix arbitrary arithmetic, casts, selects, memref traffic,
//! `scf.if` / `scf.for` regions and, now and then, one of the idioms the
//! passes look for, so that both matching and non-matching shapes reach the
//! pipeline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{
    BinOp, Builder, CastOp, Function, InstructionDescriptor, Module, Pred, Type,
};

const WIDTHS: [u32; 6] = [1, 4, 8, 16, 32, 64];

struct Gen {
    rng: ChaCha8Rng,
    b: Builder,
    ints: Vec<String>,
    mems: Vec<String>,
}

impl Gen {
    fn width(&self, v: &str) -> u32 {
        self.b.width(v)
    }

    fn random_const(&mut self, w: u32) -> String {
        let v: u128 = self.rng.gen::<u128>() & crate::ir::mask(w);
        let v = if self.rng.gen_bool(0.5) {
            crate::ir::to_signed(v, w) % 300
        } else {
            crate::ir::to_signed(v, w)
        };
        self.b.constant(v, Type::Int(w))
    }

    fn pick_int(&mut self) -> String {
        if self.ints.is_empty() || self.rng.gen_ratio(1, 8) {
            let w = *WIDTHS.choose(&mut self.rng).expect("widths");
            let c = self.random_const(w);
            self.ints.push(c.clone());
            return c;
        }
        self.ints.choose(&mut self.rng).expect("ints").clone()
    }

    fn pick_of_width(&mut self, w: u32) -> String {
        let same: Vec<String> = self
            .ints
            .iter()
            .filter(|v| self.b.width(v) == w)
            .cloned()
            .collect();
        match same.choose(&mut self.rng) {
            Some(v) if self.rng.gen_ratio(3, 4) => v.clone(),
            _ => self.random_const(w),
        }
    }

    fn pick_bool(&mut self) -> String {
        let a = self.pick_int();
        let w = self.width(&a);
        if w == 1 && self.rng.gen_bool(0.5) {
            return a;
        }
        let b = self.pick_of_width(w);
        let p = *Pred::ALL.choose(&mut self.rng).expect("preds");
        self.b.cmp(p, &a, &b)
    }

    fn cast(&mut self) -> String {
        let x = self.pick_int();
        let w = self.width(&x);
        let wider: Vec<u32> = WIDTHS.iter().copied().filter(|&t| t > w).collect();
        let narrower: Vec<u32> = WIDTHS.iter().copied().filter(|&t| t < w).collect();
        if !wider.is_empty() && (narrower.is_empty() || self.rng.gen_bool(0.6)) {
            let to = *wider.choose(&mut self.rng).expect("wider");
            let op = if self.rng.gen_bool(0.5) { CastOp::ExtS } else { CastOp::ExtU };
            self.b.cast(op, &x, to)
        } else if let Some(&to) = narrower.choose(&mut self.rng) {
            self.b.cast(CastOp::Trunc, &x, to)
        } else {
            x
        }
    }

    fn binary(&mut self) -> String {
        let a = self.pick_int();
        let b = self.pick_of_width(self.width(&a));
        let op = *BinOp::ALL.choose(&mut self.rng).expect("ops");
        self.b.binary(op, &a, &b)
    }

    fn select(&mut self) -> String {
        let c = self.pick_bool();
        let a = self.pick_int();
        let b = self.pick_of_width(self.width(&a));
        self.b.select(&c, &a, &b)
    }

    fn mem_shape(&self, m: &str) -> (Vec<u64>, u32) {
        match self.b.ty(m) {
            Type::MemRef { shape, elem } => (shape, elem),
            _ => unreachable!("memref pool holds memrefs"),
        }
    }

    fn random_index(&mut self, shape: &[u64]) -> Vec<u64> {
        shape.iter().map(|&e| self.rng.gen_range(0..e)).collect()
    }

    fn load(&mut self) -> Option<String> {
        let m = self.mems.choose(&mut self.rng)?.clone();
        let (shape, _) = self.mem_shape(&m);
        let idx = self.random_index(&shape);
        Some(self.b.load_at("ld", &m, &idx))
    }

    fn store(&mut self) -> Option<()> {
        let i = self.rng.gen_range(0..self.mems.len().max(1));
        let m = self.mems.get(i)?.clone();
        let (shape, elem) = self.mem_shape(&m);
        let v = self.pick_of_width(elem);
        let idx = self.random_index(&shape);
        let next = self.b.store_at("st", &v, &m, &idx);
        self.mems[i] = next;
        Some(())
    }

    fn if_region(&mut self) -> String {
        let c = self.pick_bool();
        let x = self.pick_int();
        let w = self.width(&x);
        self.b.begin_region();
        let k = self.random_const(w);
        let op = *BinOp::ALL.choose(&mut self.rng).expect("ops");
        let y = self.b.binary(op, &x, &k);
        let then = self.b.end_region(&[y]);
        self.b.begin_region();
        let other = self.pick_of_width(w);
        let els = self.b.end_region(&[other]);
        self.b.if_op("cond", &c, then, els, &[Type::Int(w)]).remove(0)
    }

    fn for_region(&mut self) -> Option<String> {
        let m = self.mems.choose(&mut self.rng)?.clone();
        let (shape, elem) = self.mem_shape(&m);
        if shape.len() != 1 {
            return None;
        }
        let init = self.pick_of_width(elem);
        let step = if shape[0] > 2 && self.rng.gen_bool(0.3) { 2 } else { 1 };
        let iv = self.b.declare("i", Type::Index);
        let acc = self.b.declare("acc", Type::Int(elem));
        self.b.begin_region();
        let v = self.b.load("x", &m, std::slice::from_ref(&iv));
        let op = *[BinOp::Add, BinOp::Xor, BinOp::Or, BinOp::Mul]
            .choose(&mut self.rng)
            .expect("ops");
        let next = self.b.binary(op, &acc, &v);
        let body = self.b.end_region(&[next]);
        Some(
            self.b
                .for_op("loop", (0, shape[0] as i64, step), &iv, &[acc], &[init], body)
                .remove(0),
        )
    }

    fn bit_chain(&mut self) -> String {
        let (w, v) = *[(4u32, 8u32), (8, 16), (8, 32)].choose(&mut self.rng).expect("pairs");
        let x = self.pick_of_width(w);
        if self.rng.gen_bool(0.5) {
            let z = self.b.cast(CastOp::ExtU, &x, v);
            let k = self.b.constant(i128::from(v - w), Type::Int(v));
            let up = self.b.binary(BinOp::Shl, &z, &k);
            return self.b.binary(BinOp::ShrS, &up, &k);
        }
        let mut acc = self.b.cast(CastOp::ExtU, &x, v);
        let top = self.b.constant(i128::from(w - 1), Type::Int(w));
        let s = self.b.binary(BinOp::ShrU, &x, &top);
        let msb = self.b.cast(CastOp::Trunc, &s, 1);
        let one = self.b.constant(1, Type::Int(1));
        let zero = self.b.constant(0, Type::Int(1));
        // occasionally drop a step so the chain no longer matches
        let skip = if self.rng.gen_ratio(1, 4) { Some(v - 1) } else { None };
        for k in w..v {
            if Some(k) == skip {
                continue;
            }
            let bit = self.b.select(&msb, &one, &zero);
            let wide = self.b.cast(CastOp::ExtU, &bit, v);
            let amount = self.b.constant(i128::from(k), Type::Int(v));
            let placed = self.b.binary(BinOp::Shl, &wide, &amount);
            acc = self.b.binary(BinOp::Or, &acc, &placed);
        }
        acc
    }

    fn clamp(&mut self) -> String {
        let x = self.pick_of_width(32);
        let narrow = *[8u32, 16].choose(&mut self.rng).expect("widths");
        let t = self.b.cast(CastOp::Trunc, &x, narrow);
        let op = if self.rng.gen_bool(0.5) { CastOp::ExtS } else { CastOp::ExtU };
        self.b.cast(op, &t, 32)
    }

    fn mac_chain(&mut self) -> Option<String> {
        let rank1: Vec<String> = self
            .mems
            .iter()
            .filter(|m| matches!(self.b.ty(m), Type::MemRef { ref shape, elem } if shape.len() == 1 && elem <= 16))
            .cloned()
            .collect();
        let a = rank1.choose(&mut self.rng)?.clone();
        let b = rank1.choose(&mut self.rng)?.clone();
        let (sa, ea) = self.mem_shape(&a);
        let (sb, eb) = self.mem_shape(&b);
        let n = sa[0].min(sb[0]);
        let mut acc = self.pick_of_width(32);
        let stride = if self.rng.gen_ratio(1, 5) { 2 } else { 1 };
        let mut k = 0;
        while k < n {
            let x = self.b.load_at("a", &a, &[k]);
            let y = self.b.load_at("b", &b, &[k]);
            let xe = self.b.cast(CastOp::ExtS, &x, 32);
            let ye = if eb == ea && self.rng.gen_ratio(1, 6) {
                self.b.cast(CastOp::ExtU, &y, 32)
            } else {
                self.b.cast(CastOp::ExtS, &y, 32)
            };
            let p = self.b.binary(BinOp::Mul, &xe, &ye);
            acc = self.b.binary(BinOp::Add, &acc, &p);
            k += stride;
        }
        Some(acc)
    }

    fn max_chain(&mut self) -> Option<String> {
        let m = self.mems.choose(&mut self.rng)?.clone();
        let (shape, _) = self.mem_shape(&m);
        if shape.len() != 1 {
            return None;
        }
        let mut best = self.b.load_at("v", &m, &[0]);
        for k in 1..shape[0] {
            let v = self.b.load_at("v", &m, &[k]);
            let gt = self.b.cmp(Pred::Sgt, &v, &best);
            best = self.b.select(&gt, &v, &best);
        }
        Some(best)
    }

    fn step(&mut self) {
        let produced = match self.rng.gen_range(0..16) {
            0 => Some(self.pick_int()),
            1 | 2 => Some(self.cast()),
            3..=5 => Some(self.binary()),
            6 => Some(self.pick_bool()),
            7 => Some(self.select()),
            8 => self.load(),
            9 => {
                self.store();
                None
            }
            10 => Some(self.if_region()),
            11 => self.for_region(),
            12 => Some(self.bit_chain()),
            13 => Some(self.clamp()),
            14 => self.mac_chain(),
            _ => self.max_chain(),
        };
        if let Some(v) = produced {
            if !self.ints.contains(&v) {
                self.ints.push(v);
            }
        }
    }
}

/// A random function that verifies; deterministic in `seed`.
pub fn random_function(seed: u64) -> Function {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::new(&format!("fuzz{seed}"), "out");
    let mut ints = Vec::new();
    let mut mems = Vec::new();
    for i in 0..rng.gen_range(1..=3) {
        let w = *WIDTHS.choose(&mut rng).expect("widths");
        ints.push(b.arg(&format!("x{i}"), Type::Int(w), &format!("in_x{i}")));
    }
    for i in 0..rng.gen_range(0..=2) {
        let elem = *[4u32, 8, 16, 32].choose(&mut rng).expect("widths");
        let shape: Vec<u64> = if rng.gen_ratio(1, 5) {
            vec![2, rng.gen_range(1..=3)]
        } else {
            vec![rng.gen_range(1..=5)]
        };
        let signal = *["dram_in", "spad_buf", "acc_mem", "data"]
            .choose(&mut rng)
            .expect("signals");
        mems.push(b.arg(&format!("m{i}"), Type::memref(&shape, elem), &format!("{signal}{i}")));
    }
    let mut g = Gen { rng, b, ints, mems };
    for _ in 0..g.rng.gen_range(3..24) {
        g.step();
    }
    let ret = if !g.mems.is_empty() && g.rng.gen_ratio(1, 8) {
        g.mems.choose(&mut g.rng).expect("mems").clone()
    } else {
        g.ints.last().expect("at least one scalar argument").clone()
    };
    g.b.finish(&ret)
}

/// `count` random functions (seeds `seed..seed+count`), each its own
/// instruction with an empty descriptor.
pub fn fuzz_module(seed: u64, count: u64) -> Module {
    let mut m = Module::default();
    for s in seed..seed + count {
        let f = random_function(s);
        let mut d = InstructionDescriptor::new(f.instruction());
        d.asvs.push(f.target_asv.clone());
        m.descriptors.push(d);
        m.functions.push(f);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_module, print_module, verify};
    use crate::oracle::{evaluate, Environment};

    #[test]
    fn fuzz_functions_verify_and_evaluate() {
        for seed in 0..300 {
            let f = random_function(seed);
            if let Err(v) = verify(&f) {
                panic!("seed {seed}: {v:?}\n{}", crate::ir::print_function(&f));
            }
            evaluate(&f, &Environment::zeros(&f)).unwrap();
        }
    }

    #[test]
    fn fuzz_is_deterministic_and_round_trips() {
        let a = fuzz_module(10, 20);
        let b = fuzz_module(10, 20);
        let text = print_module(&a);
        assert_eq!(text, print_module(&b));
        assert_eq!(parse_module(&text).unwrap(), a);
    }
}
