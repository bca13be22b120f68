use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::eval::{ArgValue, Environment, EvalError, Output, Program};
use crate::ir::{mask, Function, InstructionDescriptor, Type};

/// Exhaustive/random split and sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub exhaustive_bits: u32,
    pub samples: u64,
    pub seed: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            exhaustive_bits: 20,
            samples: 10_000,
            seed: 0,
        }
    }
}

/// A fixed bit range of one argument (or one memref element).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pin {
    pub arg: usize,
    pub element: Option<usize>,
    pub lo_bit: u32,
    pub width: u32,
    pub value: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Domain {
    #[default]
    Full,
    Restricted(Vec<Pin>),
}

impl Domain {
    /// Pins every control the descriptor fixes and `f` reads. Memref-packed
    /// controls take one value per element; the last value repeats.
    pub fn from_descriptor(f: &Function, d: &InstructionDescriptor) -> Domain {
        let mut pins = Vec::new();
        for (key, vals) in &d.fixed_controls {
            let (signal, lo_bit, field_width) = match d.encoding.get(key) {
                Some(field) => (field.register.as_str(), field.lo, Some(field.width())),
                None => (key.as_str(), 0, None),
            };
            let Some(arg) = f.args.iter().position(|a| a.signal == signal) else {
                continue;
            };
            let value_at = |i: usize| -> i128 {
                vals.get(i).or(vals.last()).copied().unwrap_or(0)
            };
            match &f.args[arg].ty {
                Type::MemRef { elem, .. } => {
                    let width = field_width.unwrap_or(*elem);
                    for i in 0..f.args[arg].ty.num_elements() as usize {
                        pins.push(Pin {
                            arg,
                            element: Some(i),
                            lo_bit,
                            width,
                            value: (value_at(i) as u128) & mask(width),
                        });
                    }
                }
                t => {
                    let width = field_width.unwrap_or(t.width().unwrap_or(64));
                    pins.push(Pin {
                        arg,
                        element: None,
                        lo_bit,
                        width,
                        value: (value_at(0) as u128) & mask(width),
                    });
                }
            }
        }
        if pins.is_empty() {
            Domain::Full
        } else {
            Domain::Restricted(pins)
        }
    }

    pub fn pins(&self) -> &[Pin] {
        match self {
            Domain::Full => &[],
            Domain::Restricted(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    Exhaustive { inputs: u64 },
    Random { seed: u64, samples: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Equivalent,
    Sampled { samples: u64 },
    Counterexample {
        env: Environment,
        left: Output,
        right: Output,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub verdict: Verdict,
    pub strategy: Strategy,
    pub free_bits: u64,
}

impl EquivalenceReport {
    /// True for exhaustive equivalence and for sampling with no mismatch.
    pub fn is_equivalent(&self) -> bool {
        !matches!(self.verdict, Verdict::Counterexample { .. })
    }

    pub fn is_exhaustive(&self) -> bool {
        matches!(self.strategy, Strategy::Exhaustive { .. })
    }

    /// Line-oriented `key = value` text; a counterexample lists the
    /// environment using `f`'s argument names.
    pub fn to_text(&self, f: &Function) -> String {
        let mut out = String::new();
        let verdict = match &self.verdict {
            Verdict::Equivalent => "equivalent",
            Verdict::Sampled { .. } => "sampled",
            Verdict::Counterexample { .. } => "counterexample",
        };
        let _ = writeln!(out, "verdict = {verdict}");
        match &self.strategy {
            Strategy::Exhaustive { inputs } => {
                let _ = writeln!(out, "strategy = exhaustive");
                let _ = writeln!(out, "inputs = {inputs}");
            }
            Strategy::Random { seed, samples } => {
                let _ = writeln!(out, "strategy = random");
                let _ = writeln!(out, "seed = {seed}");
                let _ = writeln!(out, "samples = {samples}");
            }
        }
        let _ = writeln!(out, "free_bits = {}", self.free_bits);
        match &self.verdict {
            Verdict::Sampled { .. } => {
                let _ = writeln!(out, "mismatches = 0");
            }
            Verdict::Counterexample { env, left, right } => {
                let _ = writeln!(out, "left = {left}");
                let _ = writeln!(out, "right = {right}");
                out.push_str(&env.to_text(f));
            }
            Verdict::Equivalent => {}
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquivError {
    #[error("signature mismatch: {0}")]
    Signature(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Checks `f` and `g` take the same argument types.
pub fn check_signatures(f: &Function, g: &Function) -> Result<(), EquivError> {
    if f.args.len() != g.args.len() {
        return Err(EquivError::Signature(format!(
            "@{} takes {} arguments, @{} takes {}",
            f.name,
            f.args.len(),
            g.name,
            g.args.len()
        )));
    }
    for (i, (a, b)) in f.args.iter().zip(&g.args).enumerate() {
        if a.ty != b.ty {
            return Err(EquivError::Signature(format!(
                "argument {i} is {} in @{} but {} in @{}",
                a.ty, f.name, b.ty, g.name
            )));
        }
    }
    Ok(())
}

/// One scalar input slot: an argument or one memref element.
struct Field {
    arg: usize,
    element: Option<usize>,
    width: u32,
    pinned_mask: u128,
    pinned_value: u128,
}

impl Field {
    fn free_mask(&self) -> u128 {
        mask(self.width) & !self.pinned_mask
    }
}

fn fields(f: &Function, domain: &Domain) -> Vec<Field> {
    let mut out = Vec::new();
    for (i, a) in f.args.iter().enumerate() {
        match &a.ty {
            Type::MemRef { elem, .. } => {
                for e in 0..a.ty.num_elements() as usize {
                    out.push(Field {
                        arg: i,
                        element: Some(e),
                        width: *elem,
                        pinned_mask: 0,
                        pinned_value: 0,
                    });
                }
            }
            t => out.push(Field {
                arg: i,
                element: None,
                width: t.width().unwrap_or(64),
                pinned_mask: 0,
                pinned_value: 0,
            }),
        }
    }
    for pin in domain.pins() {
        if let Some(field) = out
            .iter_mut()
            .find(|x| x.arg == pin.arg && x.element == pin.element)
        {
            let m = (mask(pin.width) << pin.lo_bit) & mask(field.width);
            field.pinned_mask |= m;
            field.pinned_value = (field.pinned_value & !m) | ((pin.value << pin.lo_bit) & m);
        }
    }
    out
}

fn build_env(f: &Function, fields: &[Field], values: impl Iterator<Item = u128>) -> Environment {
    let mut env = Environment::zeros(f);
    for (field, v) in fields.iter().zip(values) {
        let v = (v & field.free_mask()) | field.pinned_value;
        match (&mut env.values[field.arg], field.element) {
            (ArgValue::Array(xs), Some(e)) => xs[e] = v,
            (ArgValue::Scalar(x), None) => *x = v,
            _ => {}
        }
    }
    env
}

/// Scatters the low bits of `k` into the free bits of each field in order.
fn exhaustive_values(fields: &[Field], mut k: u64) -> Vec<u128> {
    let mut out = Vec::with_capacity(fields.len());
    for field in fields {
        let free = field.free_mask();
        let mut v = 0u128;
        for bit in 0..field.width {
            if free >> bit & 1 == 1 {
                v |= u128::from(k as u8 & 1) << bit;
                k >>= 1;
            }
        }
        out.push(v);
    }
    out
}

fn edge_value(width: u32, which: u64) -> u128 {
    match which % 5 {
        0 => 0,
        1 => mask(width),
        2 => 1,
        3 => 1u128 << (width - 1),
        _ => mask(width) >> 1,
    }
}

fn random_values(fields: &[Field], seed: u64, index: u64) -> Vec<u128> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    fields
        .iter()
        .map(|field| {
            if index < 5 {
                edge_value(field.width, index)
            } else if rng.gen_range(0..4) == 0 {
                edge_value(field.width, rng.gen_range(0..5))
            } else {
                rng.gen::<u128>() & mask(field.width)
            }
        })
        .collect()
}

/// Compares `f` and `g` bit-exactly over `domain`: exhaustively when the
/// free input bits fit the budget, otherwise on seeded random samples. The
/// reported counterexample is the lowest-indexed mismatching input.
pub fn check_equivalence(
    f: &Function,
    g: &Function,
    domain: &Domain,
    budget: &Budget,
) -> Result<EquivalenceReport, EquivError> {
    check_signatures(f, g)?;
    let pf = Program::compile(f)?;
    let pg = Program::compile(g)?;
    let fields = fields(f, domain);
    let free_bits: u64 = fields
        .iter()
        .map(|x| u64::from(x.free_mask().count_ones()))
        .sum();

    let exhaustive = free_bits <= u64::from(budget.exhaustive_bits);
    let (count, strategy) = if exhaustive {
        let inputs = 1u64 << free_bits;
        (inputs, Strategy::Exhaustive { inputs })
    } else {
        (
            budget.samples,
            Strategy::Random {
                seed: budget.seed,
                samples: budget.samples,
            },
        )
    };

    let make_env = |k: u64| {
        let values = if exhaustive {
            exhaustive_values(&fields, k)
        } else {
            random_values(&fields, budget.seed, k)
        };
        build_env(f, &fields, values.into_iter())
    };

    let found = (0..count).into_par_iter().find_map_first(|k| {
        let env = make_env(k);
        let left = match pf.run(&env) {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let right = match pg.run(&env) {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        (left != right).then_some(Ok((env, left, right)))
    });

    let verdict = match found {
        Some(Err(e)) => return Err(e.into()),
        Some(Ok((env, left, right))) => Verdict::Counterexample { env, left, right },
        None if exhaustive => Verdict::Equivalent,
        None => Verdict::Sampled {
            samples: budget.samples,
        },
    };
    Ok(EquivalenceReport {
        verdict,
        strategy,
        free_bits,
    })
}
