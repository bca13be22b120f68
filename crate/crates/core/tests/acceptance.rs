//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tensorlift_core::assembler::{assemble, parse_taidl, Ordering, Route};
use tensorlift_core::corpus::fuzz::fuzz_module;
use tensorlift_core::corpus::mutate::{apply_mutation, mutation_sites, Mutation, MutationKind};
use tensorlift_core::corpus::{full_corpus, generate, DesignSpec};
use tensorlift_core::ir::{
    keys, parse_function, print_function, print_module, verify, AttrValue, Function, Module, Op,
    OpKind,
};
use tensorlift_core::oracle::{check_equivalence, Budget, Domain, Strategy, Verdict};
use tensorlift_core::passes::{run_pass, run_passes, run_pipeline, DescriptorState, Pass, PassConfig};

/// Free input bits up to which the oracle must enumerate exhaustively.
const EXHAUSTIVE_BITS: u32 = 20;
/// Seeded samples above that bound.
const SAMPLES: u64 = 10_000;
const ORACLE_SEED: u64 = 0;
/// Wall-clock bound for the oracle preservation suite.
const AC1_TIME_LIMIT: Duration = Duration::from_secs(60);
/// Post/pre op ratio bound on pe(8,32,8).
const AC2_MAX_RATIO: f64 = 0.15;
const AC2_MAX_CORE: usize = 20;
/// Frozen pe(8,32,8) seed 0 counts.
const AC2_PRE_OPS: usize = 237;
const AC2_POST_OPS: usize = 11;
const AC2_CORE_OPS: usize = 10;
const FUZZ_FUNCTIONS: u64 = 200;
const MUTANTS: usize = 20;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn budget() -> Budget {
    Budget {
        exhaustive_bits: EXHAUSTIVE_BITS,
        samples: SAMPLES,
        seed: ORACLE_SEED,
    }
}

fn lift(m: &Module) -> Module {
    run_pipeline(m, &PassConfig::default()).expect("pipeline").0
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn tensorlift(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tensorlift"))
        .args(args)
        .env_remove("TENSORLIFT_SEED")
        .output()
        .expect("run tensorlift")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// The designs the preservation suite covers.
fn designs() -> Vec<(String, DesignSpec)> {
    let mut out = Vec::new();
    // seed bits 0 and 1 select the extension and clamp idiom variants
    for seed in 0..4 {
        out.push((format!("pe(8,32,8) seed {seed}"), DesignSpec::pe(8, 32, 8).with_seed(seed)));
    }
    for n in [1, 2, 16] {
        out.push((format!("mac_chain({n})"), DesignSpec::mac_chain(n)));
    }
    for banks in [1, 3] {
        out.push((format!("dma_copy({banks})"), DesignSpec::dma_copy(banks)));
    }
    for w in [2, 4] {
        out.push((format!("pool({w})"), DesignSpec::pool(w)));
    }
    out.push(("fsm_pair".into(), DesignSpec::fsm_pair()));
    out
}

fn ac1_oracle_preservation() -> Outcome {
    let start = Instant::now();
    let mut checks = 0;
    let (mut exhaustive, mut sampled) = (0, 0);
    for (label, spec) in designs() {
        let (m, _) = generate(&spec).map_err(|e| e.to_string())?;
        let mut cur = m.clone();
        for (i, pass) in Pass::ALL.into_iter().enumerate() {
            let (next, _) = run_passes(&cur, &[pass], &PassConfig::default()).map_err(|e| e.to_string())?;
            let checked = matches!(
                pass,
                Pass::CanonBitmanip | Pass::NarrowTypes | Pass::ReconstructLoops | Pass::SpecializeControl
            );
            if checked {
                for (f, g) in cur.functions.iter().zip(&next.functions) {
                    let domain = match (pass, m.descriptor(f.instruction())) {
                        (Pass::SpecializeControl, Some(d)) => Domain::from_descriptor(f, d),
                        _ => Domain::Full,
                    };
                    let r = check_equivalence(f, g, &domain, &budget()).map_err(|e| e.to_string())?;
                    ensure(r.is_equivalent(), || format!("{label}: {pass} changed @{} (stage {i})", f.name))?;
                    match r.strategy {
                        Strategy::Exhaustive { .. } => {
                            ensure(r.free_bits <= u64::from(EXHAUSTIVE_BITS), || format!("{label}: exhaustive above bound"))?;
                            exhaustive += 1;
                        }
                        Strategy::Random { samples, seed } => {
                            ensure(r.free_bits > u64::from(EXHAUSTIVE_BITS) && samples == SAMPLES && seed == ORACLE_SEED, || {
                                format!("{label}: sampled {samples} at {} free bits", r.free_bits)
                            })?;
                            sampled += 1;
                        }
                    }
                    checks += 1;
                }
            }
            cur = next;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < AC1_TIME_LIMIT, || format!("took {elapsed:.1?}, limit {AC1_TIME_LIMIT:?}"))?;
    Ok(format!(
        "{checks} checks equivalent ({exhaustive} exhaustive, {sampled} sampled x {SAMPLES}) in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

/// Op count read off the printed text: one op per statement line.
fn printed_ops(f: &Function) -> usize {
    print_function(f)
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with('%') || l.starts_with("return") || l.starts_with("scf.yield") || l.starts_with("memref.store"))
        .count()
}

/// Every name an op reads, including from inside its regions.
fn reads(op: &Op, out: &mut Vec<String>) {
    out.extend(op.operands.iter().cloned());
    for r in &op.regions {
        for inner in r {
            reads(inner, out);
        }
    }
}

/// Top-level ops the returned value depends on, counted with their bodies.
fn core_ops(f: &Function) -> usize {
    let mut def: HashMap<&str, &Op> = HashMap::new();
    for op in &f.body {
        for v in &op.results {
            def.insert(&v.name, op);
        }
    }
    let ret = f.body.iter().find(|op| op.kind == OpKind::Return).expect("return");
    let mut stack = ret.operands.clone();
    let mut seen: HashSet<*const Op> = HashSet::new();
    let mut total = 0;
    while let Some(name) = stack.pop() {
        let Some(&op) = def.get(name.as_str()) else { continue };
        if !seen.insert(op) {
            continue;
        }
        let mut n = 0;
        let mut nested = vec![op];
        while let Some(o) = nested.pop() {
            n += 1;
            nested.extend(o.regions.iter().flatten());
        }
        total += n;
        reads(op, &mut stack);
    }
    total
}

fn ac2_reduction() -> Outcome {
    let mut detail = String::new();
    for seed in 0..4 {
        let (m, _) = generate(&DesignSpec::pe(8, 32, 8).with_seed(seed)).map_err(|e| e.to_string())?;
        let lifted = lift(&m);
        let (pre, post) = (printed_ops(&m.functions[0]), printed_ops(&lifted.functions[0]));
        let core = core_ops(&lifted.functions[0]);
        ensure(pre == m.functions[0].op_count() && post == lifted.functions[0].op_count(), || {
            format!("seed {seed}: printed count disagrees with op_count")
        })?;
        let ratio = post as f64 / pre as f64;
        // the ratio bound is derived from the per-bit extension idiom; seeds
        // with bit 0 set emit the compact shift form instead
        if seed & 1 == 0 {
            ensure(ratio <= AC2_MAX_RATIO, || format!("seed {seed}: ratio {ratio:.3} > {AC2_MAX_RATIO}"))?;
        }
        ensure(core <= AC2_MAX_CORE, || format!("seed {seed}: core {core} > {AC2_MAX_CORE}"))?;
        if seed == 0 {
            ensure((pre, post, core) == (AC2_PRE_OPS, AC2_POST_OPS, AC2_CORE_OPS), || {
                format!("golden ({AC2_PRE_OPS}, {AC2_POST_OPS}, {AC2_CORE_OPS}), got ({pre}, {post}, {core})")
            })?;
            detail = format!("ops {pre} -> {post} (ratio {ratio:.3}), core {core}");
        }
    }
    Ok(format!("{detail}; core within bound on all four idiom variants"))
}

fn loops(f: &Function) -> Vec<&Op> {
    let mut out = Vec::new();
    f.walk(&mut |op| {
        if matches!(op.kind, OpKind::For(_)) {
            out.push(op);
        }
    });
    out
}

fn ac3_structural_lifts() -> Outcome {
    let (m16, _) = generate(&DesignSpec::mac_chain(16)).map_err(|e| e.to_string())?;
    let l16 = lift(&m16);
    let f = &l16.functions[0];
    let found = loops(f);
    let [l] = found.as_slice() else {
        return Err(format!("mac_chain(16): {} loops", found.len()));
    };
    let OpKind::For(info) = &l.kind else { unreachable!() };
    ensure(info.iter_args.len() == 1, || format!("{} iter_args", info.iter_args.len()))?;
    ensure(l.attrs.get(keys::LINALG_OP).and_then(AttrValue::as_str) == Some("dot_product"), || {
        format!("loop tag {:?}", l.attrs.get(keys::LINALG_OP))
    })?;
    ensure(info.trip_count() == 16, || format!("trip {}", info.trip_count()))?;
    let (m1, _) = generate(&DesignSpec::mac_chain(1)).map_err(|e| e.to_string())?;
    let n1 = loops(&lift(&m1).functions[0]).len();
    ensure(n1 == 0, || format!("mac_chain(1): {n1} loops"))?;
    Ok("mac_chain(16): 1 loop, 1 iter_arg, dot_product, trip 16; mac_chain(1): 0 loops".into())
}

fn clamps(f: &Function) -> Vec<Vec<i128>> {
    let mut out = Vec::new();
    f.walk(&mut |op| {
        if let Some(AttrValue::List(v)) = op.attrs.get(keys::CLAMP) {
            out.push(v.clone());
        }
    });
    out
}

const UNSIGNED_CLAMP: &str = "func @relu8__out(%v: i32 {signal = \"in_v\"}) {\n\
    %n = trunci %v : i8\n\
    %r = extui %n : i32\n\
    return %r\n}";

fn ac4_clamp_recovery() -> Outcome {
    // [lo, hi, signed, narrow width]
    let signed = vec![-128, 127, 1, 8];
    for seed in 0..4 {
        let (m, _) = generate(&DesignSpec::pe(8, 32, 8).with_seed(seed)).map_err(|e| e.to_string())?;
        let found = clamps(&lift(&m).functions[0]);
        ensure(found == [signed.clone()], || format!("pe seed {seed}: {found:?}"))?;
    }
    let f = parse_function(UNSIGNED_CLAMP).map_err(|e| e.to_string())?;
    let m = Module { descriptors: vec![], functions: vec![f] };
    let found = clamps(&lift(&m).functions[0]);
    ensure(found == [vec![0, 255, 0, 8]], || format!("unsigned: {found:?}"))?;
    Ok("signed i32->i8 [-128, 127] on both idiom variants; unsigned [0, 255]".into())
}

/// Selects and ifs whose condition depends on the argument with `signal`.
fn tainted_branches(f: &Function, signal: &str) -> usize {
    let Some(arg) = f.arg_by_signal(signal) else { return 0 };
    let mut tainted: HashSet<String> = HashSet::from([arg.name.clone()]);
    loop {
        let before = tainted.len();
        f.walk(&mut |op| {
            let mut used = Vec::new();
            reads(op, &mut used);
            if used.iter().any(|u| tainted.contains(u)) {
                tainted.extend(op.results.iter().map(|v| v.name.clone()));
            }
        });
        if tainted.len() == before {
            break;
        }
    }
    let mut n = 0;
    f.walk(&mut |op| {
        if matches!(op.kind, OpKind::Select | OpKind::If) && tainted.contains(&op.operands[0]) {
            n += 1;
        }
    });
    n
}

fn ac5_control_specialization() -> Outcome {
    let control = "in_control_dataflow";
    let mut detail = Vec::new();
    for seed in 0..4 {
        let (m, _) = generate(&DesignSpec::pe(8, 32, 8).with_seed(seed)).map_err(|e| e.to_string())?;
        let d = m.descriptor("pe_mac").ok_or("no pe_mac descriptor")?;
        ensure(d.fixed_controls.contains_key(control), || "descriptor does not fix the dataflow".into())?;
        let before_b4 = run_passes(&m, &[Pass::CanonBitmanip, Pass::NarrowTypes, Pass::DetectMac], &PassConfig::default())
            .map_err(|e| e.to_string())?
            .0;
        let f = &before_b4.functions[0];
        let mut g = f.clone();
        run_pass(Pass::SpecializeControl, &mut g, &DescriptorState::Valid(d), &PassConfig::default());
        let (pre, post) = (tainted_branches(f, control), tainted_branches(&g, control));
        ensure(pre > 0, || format!("seed {seed}: nothing to specialize"))?;
        ensure(post == 0, || format!("seed {seed}: {post} dataflow-guarded branches remain"))?;
        let r = check_equivalence(f, &g, &Domain::from_descriptor(f, d), &budget()).map_err(|e| e.to_string())?;
        ensure(r.is_equivalent(), || format!("seed {seed}: not equivalent on restricted domain"))?;
        detail.push(format!("{pre}->0"));
    }
    Ok(format!("dataflow-guarded branches {} (seeds 0-3); restricted equivalence holds", detail.join(", ")))
}

fn ac6_bank_grouping() -> Outcome {
    let (m, _) = generate(&DesignSpec::dma_copy(3)).map_err(|e| e.to_string())?;
    let text = assemble(&lift(&m)).text();
    let banked: Vec<&str> = text.lines().filter(|l| l.starts_with("# banked:")).collect();
    ensure(banked == ["# banked: strides x 3 select rs1[4:3]"], || format!("{banked:?}"))?;
    Ok(banked[0].to_string())
}

const GOLDEN_PE: [&str; 5] = [
    "%t0 = convert(%in_a, s32)",
    "%t1 = convert(%in_b, s32)",
    "%t2 = dot(%t0, %t1, lhs_contracting_dims={1}, rhs_contracting_dims={0})",
    "%t3 = add(%t2, %in_d)",
    "%pe_out = clamp(-128, %t3, 127)",
];

fn ac7_taidl_emission() -> Outcome {
    for seed in 0..4 {
        let (m, _) = generate(&DesignSpec::pe(8, 32, 8).with_seed(seed)).map_err(|e| e.to_string())?;
        let a = assemble(&lift(&m));
        let body: Vec<String> = a
            .spec
            .instruction("pe_mac")
            .ok_or("no pe_mac instruction")?
            .body
            .iter()
            .map(ToString::to_string)
            .collect();
        ensure(body == GOLDEN_PE, || format!("seed {seed}: {body:#?}"))?;
        let text = a.text();
        let back = parse_taidl(&text).map_err(|e| format!("re-parse: {e}"))?;
        ensure(back == a.spec && back.to_text() == text, || "re-parse differs".into())?;
        ensure(a.spec.check().is_empty(), || format!("{:?}", a.spec.check()))?;
    }
    Ok("golden 5-statement body on all idiom variants; spec re-parses".into())
}

fn ac8_fsm_ordering() -> Outcome {
    let (m, _) = generate(&DesignSpec::fsm_pair()).map_err(|e| e.to_string())?;
    let a = assemble(&lift(&m));
    let expected = [Ordering { before: "preload".into(), after: "compute".into(), via: "state".into() }];
    ensure(a.spec.orderings == expected, || format!("{:?}", a.spec.orderings))?;
    let text = a.text();
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("# order:")).collect();
    ensure(lines == ["# order: preload before compute via state"], || format!("{lines:?}"))?;
    Ok(lines[0].to_string())
}

fn ac9_fallback_safety() -> Outcome {
    let m = fuzz_module(0, FUZZ_FUNCTIONS);
    ensure(m.functions.len() as u64 == FUZZ_FUNCTIONS, || format!("{} functions", m.functions.len()))?;
    for f in &m.functions {
        verify(f).map_err(|e| format!("@{} does not verify: {e:?}", f.name))?;
    }
    let (lifted, reports) = run_pipeline(&m, &PassConfig::default()).map_err(|e| e.to_string())?;
    if let Some(r) = reports.iter().find(|r| r.error.is_some()) {
        return Err(r.to_string());
    }
    let a = assemble(&lifted);
    let mut opaque = 0;
    let mut routes: BTreeMap<String, usize> = BTreeMap::new();
    for f in &lifted.functions {
        let tag = f.attrs.get(keys::COMPUTE).and_then(AttrValue::as_str).unwrap_or("none");
        let route = a.route(f.instruction()).ok_or_else(|| format!("{} unrouted", f.instruction()))?;
        *routes.entry(format!("{tag}->{route}")).or_default() += 1;
        if tag == "opaque" {
            opaque += 1;
            ensure(route == Route::Opaque, || format!("@{} routed {route}", f.name))?;
            let instr = a.spec.instruction(f.instruction()).ok_or("missing instruction")?;
            ensure(instr.body.iter().all(|s| s.op == "opaque"), || format!("@{} body not opaque", f.name))?;
        }
    }
    ensure(opaque > 0, || "fuzzer produced no unmatched functions".into())?;
    ensure(parse_taidl(&a.text()).is_ok() && a.spec.check().is_empty(), || "fuzz spec invalid".into())?;
    let summary: Vec<String> = routes.iter().map(|(k, v)| format!("{k} {v}")).collect();
    Ok(format!("{FUZZ_FUNCTIONS} functions, 0 failures; {}", summary.join(", ")))
}

fn ac10_determinism() -> Outcome {
    let (m, _) = full_corpus(0);
    let once = lift(&m);
    ensure(print_module(&once) == print_module(&lift(&m)), || "two runs differ".into())?;
    let twice = lift(&once);
    ensure(print_module(&twice) == print_module(&once), || "pipeline not idempotent".into())?;
    let by_workers: Vec<String> = [1, 2, 8]
        .into_iter()
        .map(|w| {
            let config = PassConfig { workers: Some(w), ..PassConfig::default() };
            print_module(&run_pipeline(&m, &config).unwrap().0)
        })
        .collect();
    ensure(by_workers.iter().all(|t| *t == by_workers[0]), || "worker count changes output".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let mut artifacts: Vec<Vec<u8>> = Vec::new();
    for (run, workers) in ["1", "2", "8"].into_iter().enumerate() {
        let sub = path(d, &format!("run{run}"));
        let out = Command::new(env!("CARGO_BIN_EXE_tensorlift"))
            .args(["gen", "--design", "all", "-o", &sub])
            .env("TENSORLIFT_SEED", "11")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let sub = Path::new(&sub);
        let steps: [&[&str]; 2] = [
            &["opt", &path(sub, "corpus.ir"), "--workers", workers, "-o", &path(sub, "lifted.ir")],
            &["assemble", &path(sub, "lifted.ir"), "-o", &path(sub, "spec.taidl")],
        ];
        for args in steps {
            let out = tensorlift(args);
            ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
        }
        let mut bytes = Vec::new();
        for name in ["corpus.ir", "corpus.desc", "corpus.expect", "lifted.ir", "spec.taidl"] {
            bytes.extend(fs::read(sub.join(name)).map_err(|e| e.to_string())?);
        }
        artifacts.push(bytes);
    }
    ensure(artifacts.iter().all(|a| *a == artifacts[0]), || "CLI artifacts differ across runs".into())?;
    Ok("pipeline idempotent; library and CLI output byte-identical at 1/2/8 workers".into())
}

/// Corpus designs whose lifted outputs supply the mutants.
fn mutation_designs() -> Vec<DesignSpec> {
    let mut out = Vec::new();
    for seed in 0..4 {
        out.push(DesignSpec::pe(8, 32, 8).with_seed(seed));
        out.push(DesignSpec::pe(4, 16, 4).with_seed(seed));
        let mut act = DesignSpec::pe(8, 32, 8).with_seed(seed);
        act.params.activation = true;
        out.push(act);
    }
    for n in [1, 2, 3, 16] {
        out.push(DesignSpec::mac_chain(n));
    }
    for banks in [1, 2, 3] {
        out.push(DesignSpec::dma_copy(banks));
    }
    for w in [2, 3, 4] {
        out.push(DesignSpec::pool(w));
    }
    out.push(DesignSpec::fsm_pair());
    out
}

/// Distinct single-op mutants of lifted corpus outputs, in a fixed order.
fn mutation_pool() -> Result<Vec<(Function, Mutation)>, String> {
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for spec in mutation_designs() {
        let (m, _) = generate(&spec).map_err(|e| e.to_string())?;
        for f in lift(&m).functions {
            let text = print_function(&f);
            for mutation in mutation_sites(&f) {
                if seen.insert((text.clone(), mutation.to_string())) {
                    pool.push((f.clone(), mutation));
                }
            }
        }
    }
    Ok(pool)
}

fn ac11_mutation_sensitivity() -> Outcome {
    let pool = mutation_pool()?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // one of each kind, then the rest from the whole pool
    let mut picked: Vec<usize> = Vec::new();
    for kind in [MutationKind::AddSub, MutationKind::ShiftSwap, MutationKind::ConstFlip] {
        let of_kind: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].1.kind == kind).collect();
        picked.push(*of_kind.choose(&mut rng).ok_or_else(|| format!("no {kind} site in the pool"))?);
    }
    let rest: Vec<usize> = (0..pool.len()).filter(|i| !picked.contains(i)).collect();
    ensure(rest.len() + picked.len() >= MUTANTS, || format!("pool has {} mutants", pool.len()))?;
    picked.extend(rest.choose_multiple(&mut rng, MUTANTS - picked.len()));

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (i, &k) in picked.iter().enumerate() {
        let (f, m) = &pool[k];
        let g = apply_mutation(f, m).ok_or_else(|| format!("{m} does not apply"))?;
        let r = check_equivalence(f, &g, &Domain::Full, &budget()).map_err(|e| e.to_string())?;
        ensure(matches!(r.verdict, Verdict::Counterexample { .. }), || format!("{m} in @{} not caught", f.name))?;
        let (left, right) = (path(d, &format!("l{i}.ir")), path(d, &format!("r{i}.ir")));
        let write = |p: &str, f: &Function| {
            fs::write(p, print_module(&Module { descriptors: vec![], functions: vec![f.clone()] }))
        };
        write(&left, f).map_err(|e| e.to_string())?;
        write(&right, &g).map_err(|e| e.to_string())?;
        let code = tensorlift(&["verify", &left, &right]).status.code();
        ensure(code == Some(3), || format!("{m} in @{}: verify exited {code:?}", f.name))?;
        *counts.entry(m.kind.to_string()).or_default() += 1;
    }
    ensure(picked.len() == MUTANTS, || format!("{} mutants", picked.len()))?;
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    Ok(format!(
        "{MUTANTS}/{MUTANTS} caught, verify exit 3 ({}; pool {})",
        summary.join(", "),
        pool.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("oracle preservation", ac1_oracle_preservation),
        ("pe reduction", ac2_reduction),
        ("structural lifts", ac3_structural_lifts),
        ("clamp recovery", ac4_clamp_recovery),
        ("control specialization", ac5_control_specialization),
        ("bank grouping", ac6_bank_grouping),
        ("taidl emission", ac7_taidl_emission),
        ("fsm ordering", ac8_fsm_ordering),
        ("fallback safety", ac9_fallback_safety),
        ("idempotence and determinism", ac10_determinism),
        ("mutation sensitivity", ac11_mutation_sensitivity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS AC{} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL AC{} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
