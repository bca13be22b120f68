use std::io::Write;
use std::process::{Command, Stdio};

use proptest::prelude::*;

use tensorlift_core::corpus::fuzz::random_function;
use tensorlift_core::corpus::full_corpus;
use tensorlift_core::corpus::mutate::{apply_mutation, mutate, mutation_sites};
use tensorlift_core::ir::{mask, BinOp, CastOp, Pred};
use tensorlift_core::oracle::{
    check_equivalence, emit_smt, eval_binary, eval_cast, eval_cmp, evaluate, Budget, Domain,
    Strategy, Verdict,
};
use tensorlift_core::passes::{run_pipeline, PassConfig};

/// Little-endian bit vector; the reference model works one bit at a time.
fn bits(x: u128, w: u32) -> Vec<bool> {
    (0..w).map(|i| x >> i & 1 == 1).collect()
}

fn value(v: &[bool]) -> u128 {
    v.iter().enumerate().fold(0, |acc, (i, &b)| acc | (u128::from(b) << i))
}

fn ripple_add(a: &[bool], b: &[bool], mut carry: bool) -> Vec<bool> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let s = x ^ y ^ carry;
            carry = (x && y) || (carry && (x ^ y));
            s
        })
        .collect()
}

fn negate_bits(a: &[bool]) -> Vec<bool> {
    a.iter().map(|b| !b).collect()
}

fn amount(b: &[bool], w: usize) -> usize {
    // any set bit at or above position 8 means the shift exceeds 255 >= w
    if b.iter().skip(8).any(|&x| x) {
        return usize::MAX;
    }
    let n = value(&b[..b.len().min(8)]) as usize;
    if n >= w { usize::MAX } else { n }
}

fn reference_binary(op: BinOp, a: u128, b: u128, w: u32) -> u128 {
    let (a, b) = (bits(a, w), bits(b, w));
    let n = w as usize;
    let r: Vec<bool> = match op {
        BinOp::Add => ripple_add(&a, &b, false),
        BinOp::Sub => ripple_add(&a, &negate_bits(&b), true),
        BinOp::Mul => {
            let mut acc = vec![false; n];
            for i in 0..n {
                if b[i] {
                    let shifted: Vec<bool> = (0..n).map(|k| k >= i && a[k - i]).collect();
                    acc = ripple_add(&acc, &shifted, false);
                }
            }
            acc
        }
        BinOp::And => a.iter().zip(&b).map(|(x, y)| x & y).collect(),
        BinOp::Or => a.iter().zip(&b).map(|(x, y)| x | y).collect(),
        BinOp::Xor => a.iter().zip(&b).map(|(x, y)| x ^ y).collect(),
        BinOp::Shl => {
            let s = amount(&b, n);
            (0..n).map(|k| s != usize::MAX && k >= s && a[k - s]).collect()
        }
        BinOp::ShrU => {
            let s = amount(&b, n);
            (0..n).map(|k| s != usize::MAX && k + s < n && a[k + s]).collect()
        }
        BinOp::ShrS => {
            let s = amount(&b, n).min(n - 1);
            let sign = a[n - 1];
            (0..n).map(|k| if k + s < n { a[k + s] } else { sign }).collect()
        }
    };
    value(&r)
}

fn reference_cmp(p: Pred, a: u128, b: u128, w: u32) -> bool {
    let (x, y) = (bits(a, w), bits(b, w));
    let n = w as usize;
    // unsigned a < b iff a - b borrows
    let ult = |x: &[bool], y: &[bool]| {
        let mut borrow = false;
        for i in 0..x.len() {
            let (xi, yi) = (x[i], y[i]);
            borrow = (!xi && (yi || borrow)) || (xi && yi && borrow);
        }
        borrow
    };
    let flip = |v: &[bool]| {
        let mut v = v.to_vec();
        v[n - 1] = !v[n - 1];
        v
    };
    let slt = ult(&flip(&x), &flip(&y));
    let eq = x == y;
    match p {
        Pred::Eq => eq,
        Pred::Ne => !eq,
        Pred::Ult => ult(&x, &y),
        Pred::Ule => ult(&x, &y) || eq,
        Pred::Ugt => !(ult(&x, &y) || eq),
        Pred::Uge => !ult(&x, &y),
        Pred::Slt => slt,
        Pred::Sle => slt || eq,
        Pred::Sgt => !(slt || eq),
        Pred::Sge => !slt,
    }
}

fn reference_cast(op: CastOp, x: u128, from: u32, to: u32) -> u128 {
    let v = bits(x, from);
    let out: Vec<bool> = (0..to as usize)
        .map(|k| match op {
            CastOp::Trunc => v[k],
            CastOp::ExtU => k < v.len() && v[k],
            CastOp::ExtS => {
                if k < v.len() {
                    v[k]
                } else {
                    v[v.len() - 1]
                }
            }
        })
        .collect();
    value(&out)
}

fn width() -> impl proptest::strategy::Strategy<Value = u32> {
    prop_oneof![1u32..=16, Just(32u32), Just(64u32), 65u32..=128]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn binary_ops_match_bit_level_reference(op in 0usize..9, a in any::<u128>(), b in any::<u128>(), w in width(), small in any::<bool>()) {
        let op = BinOp::ALL[op];
        let b = if small { b % 160 } else { b };
        let (am, bm) = (a & mask(w), b & mask(w));
        prop_assert_eq!(eval_binary(op, am, bm, w), reference_binary(op, am, bm, w));
    }

    #[test]
    fn comparisons_match_bit_level_reference(p in 0usize..10, a in any::<u128>(), b in any::<u128>(), w in width()) {
        let p = Pred::ALL[p];
        let (a, b) = (a & mask(w), b & mask(w));
        prop_assert_eq!(eval_cmp(p, a, b, w), reference_cmp(p, a, b, w));
        prop_assert_eq!(eval_cmp(p, a, a, w), reference_cmp(p, a, a, w));
    }

    #[test]
    fn casts_match_bit_level_reference(x in any::<u128>(), from in width(), to in width()) {
        let x = x & mask(from);
        let (lo, hi) = (from.min(to), from.max(to));
        prop_assert_eq!(eval_cast(CastOp::Trunc, x, from, lo), reference_cast(CastOp::Trunc, x, from, lo));
        prop_assert_eq!(eval_cast(CastOp::ExtU, x, from, hi), reference_cast(CastOp::ExtU, x, from, hi));
        prop_assert_eq!(eval_cast(CastOp::ExtS, x, from, hi), reference_cast(CastOp::ExtS, x, from, hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counterexamples_replay(seed in any::<u64>()) {
        let f = random_function(seed);
        let budget = Budget { exhaustive_bits: 16, samples: 2000, ..Budget::default() };
        for m in mutation_sites(&f).into_iter().take(4) {
            let g = apply_mutation(&f, &m).unwrap();
            let r = check_equivalence(&f, &g, &Domain::Full, &budget).unwrap();
            if let Verdict::Counterexample { env, left, right } = &r.verdict {
                prop_assert_eq!(&evaluate(&f, env).unwrap(), left);
                prop_assert_eq!(&evaluate(&g, env).unwrap(), right);
                prop_assert_ne!(left, right);
            }
        }
    }

    #[test]
    fn self_equivalence_and_strategy_choice(seed in any::<u64>()) {
        let f = random_function(seed);
        let budget = Budget { exhaustive_bits: 12, samples: 500, seed: 5 };
        let r = check_equivalence(&f, &f, &Domain::Full, &budget).unwrap();
        prop_assert!(r.is_equivalent());
        match r.strategy {
            Strategy::Exhaustive { inputs } => {
                prop_assert!(r.free_bits <= 12);
                prop_assert_eq!(inputs, 1u64 << r.free_bits);
            }
            Strategy::Random { seed, samples } => {
                prop_assert!(r.free_bits > 12);
                prop_assert_eq!((seed, samples), (5, 500));
            }
        }
    }
}

#[test]
fn sampled_reports_record_seed() {
    let (m, _) = full_corpus(0);
    let f = m.function("pe_mac__pe_out").unwrap();
    let budget = Budget { seed: 42, samples: 100, ..Budget::default() };
    let r = check_equivalence(f, f, &Domain::Full, &budget).unwrap();
    let text = r.to_text(f);
    assert!(text.contains("strategy = random\nseed = 42\nsamples = 100\n"), "{text}");
}

fn solver() -> Option<&'static str> {
    ["z3", "cvc5"].into_iter().find(|s| {
        Command::new(s)
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|st| st.success())
    })
}

fn solve(solver: &str, script: &str) -> String {
    let mut child = Command::new(solver)
        .arg(if solver == "z3" { "-in" } else { "--lang=smt2" })
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    String::from_utf8_lossy(&out.stdout).lines().next().unwrap_or("").to_string()
}

/// Needs an SMT solver on PATH; reports and passes when none is installed.
#[test]
fn smt_agrees_with_exhaustive_oracle() {
    let Some(solver) = solver() else {
        eprintln!("smt_agrees_with_exhaustive_oracle: no z3 or cvc5 on PATH, skipped");
        return;
    };
    let (m, _) = full_corpus(0);
    let (lifted, _) = run_pipeline(&m, &PassConfig::default()).unwrap();
    let mut checked = 0;
    let pairs = m.functions.iter().zip(&lifted.functions).map(|(f, g)| (f.clone(), g.clone()));
    let mutants = (0..40).filter_map(|s| {
        let f = random_function(s);
        mutate(&f, s).map(|(g, _)| (f, g))
    });
    for (f, g) in pairs.chain(mutants) {
        let r = check_equivalence(&f, &g, &Domain::Full, &Budget::default()).unwrap();
        if !r.is_exhaustive() {
            continue;
        }
        let answer = solve(solver, &emit_smt(&f, &g, &Domain::Full).unwrap());
        assert_eq!(answer == "unsat", r.is_equivalent(), "@{}: solver said {answer}", f.name);
        checked += 1;
    }
    assert!(checked > 0);
}
