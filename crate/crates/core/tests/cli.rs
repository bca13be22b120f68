use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tensorlift_core::corpus::mutate::mutate;
use tensorlift_core::ir::{parse_module, print_module};

fn tensorlift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorlift"))
        .args(args)
        .env_remove("TENSORLIFT_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn files(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn gen_opt_verify_assemble() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = tensorlift(&["gen", "--design", "pe", "--W", "8", "--V", "32", "--w", "8", "-o", d.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files(d), BTreeSet::from(["pe.desc".into(), "pe.expect".into(), "pe.ir".into()]));

    let out = tensorlift(&["opt", "--pipeline=full", &p(d, "pe.ir"), "-o", &p(d, "out.ir"), "--report", &p(d, "report.txt")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(d.join("report.txt")).unwrap();
    assert_eq!(report.lines().count(), 8);
    assert!(report.starts_with("canon-bitmanip @pe_mac__pe_out: ops "));

    let out = tensorlift(&["verify", &p(d, "pe.ir"), &p(d, "out.ir"), "--restrict", &p(d, "pe.desc"), "--emit-smt", &p(d, "pe.smt2")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("function = @pe_mac__pe_out\nverdict = sampled\n"), "{text}");
    assert!(fs::read_to_string(d.join("pe.smt2")).unwrap().contains("(check-sat)"));

    let out = tensorlift(&["assemble", &p(d, "out.ir"), "--descriptors", &p(d, "pe.desc"), "-o", &p(d, "pe.taidl")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let spec = fs::read_to_string(d.join("pe.taidl")).unwrap();
    assert!(spec.contains("%pe_out = clamp(-128, %t3, 127)"));
    assert_eq!(
        files(d),
        ["out.ir", "pe.desc", "pe.expect", "pe.ir", "pe.smt2", "pe.taidl", "report.txt"]
            .map(String::from)
            .into()
    );
}

#[test]
fn mutated_pair_exits_three_with_replayable_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&tensorlift(&["gen", "--design", "mac_chain", "--n", "4", "-o", d.to_str().unwrap()])), 0);
    assert_eq!(code(&tensorlift(&["opt", &p(d, "mac_chain.ir"), "-o", &p(d, "lifted.ir")])), 0);
    let lifted = parse_module(&fs::read_to_string(d.join("lifted.ir")).unwrap()).unwrap();
    let mut mutant = lifted.clone();
    let (g, _) = mutate(&lifted.functions[0], 3).unwrap();
    mutant.functions[0] = g;
    fs::write(d.join("mutant.ir"), print_module(&mutant)).unwrap();
    let out = tensorlift(&["verify", &p(d, "lifted.ir"), &p(d, "mutant.ir"), "-o", &p(d, "report.txt")]);
    assert_eq!(code(&out), 3);
    let report = fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(report.contains("verdict = counterexample"));
    assert!(report.contains("left = ") && report.contains("right = "));
    assert!(String::from_utf8_lossy(&out.stderr).contains("counterexample"));
}

#[test]
fn exit_codes_for_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&tensorlift(&["gen", "--design", "pe", "-o", d.to_str().unwrap()])), 0);
    let unknown = tensorlift(&["opt", "--passes", "canon-bitmanip,bogus", &p(d, "pe.ir")]);
    assert_eq!(code(&unknown), 1);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("bogus"));
    assert_eq!(code(&tensorlift(&["opt", "--pipeline=half", &p(d, "pe.ir")])), 1);
    assert_eq!(code(&tensorlift(&["gen", "--design", "nope", "-o", d.to_str().unwrap()])), 1);
    assert_eq!(code(&tensorlift(&["gen", "--design", "pe", "--W", "40", "-o", d.to_str().unwrap()])), 1);

    fs::write(d.join("broken.ir"), "func @a__b(%x: i8 {signal = \"x\"}) {\n  return %y\n}\n").unwrap();
    assert_eq!(code(&tensorlift(&["opt", &p(d, "broken.ir")])), 2);
    fs::write(d.join("garbage.ir"), "this is not ir").unwrap();
    assert_eq!(code(&tensorlift(&["assemble", &p(d, "garbage.ir")])), 2);
    assert_eq!(code(&tensorlift(&["verify", &p(d, "pe.ir"), &p(d, "garbage.ir")])), 2);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for sub in ["a", "b"] {
        let out = Command::new(env!("CARGO_BIN_EXE_tensorlift"))
            .args(["gen", "--design", "all", "-o", &p(d, sub)])
            .env("TENSORLIFT_SEED", "7")
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
    }
    for name in ["corpus.ir", "corpus.desc", "corpus.expect"] {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap());
    }
    let input = p(&d.join("a"), "corpus.ir");
    let mut lifted = Vec::new();
    for workers in ["1", "4", "1"] {
        let out = tensorlift(&["opt", &input, "--workers", workers]);
        assert_eq!(code(&out), 0);
        lifted.push(out.stdout);
    }
    assert!(lifted.windows(2).all(|w| w[0] == w[1]));
    fs::write(d.join("lifted.ir"), &lifted[0]).unwrap();
    let specs: Vec<Vec<u8>> = (0..2)
        .map(|_| tensorlift(&["assemble", &p(d, "lifted.ir")]).stdout)
        .collect();
    assert_eq!(specs[0], specs[1]);
    assert!(String::from_utf8_lossy(&specs[0]).contains("# order: preload before compute via state"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |seed: &str, sub: &str| {
        Command::new(env!("CARGO_BIN_EXE_tensorlift"))
            .args(["gen", "--design", "pe", "-o", &p(d, sub)])
            .env("TENSORLIFT_SEED", seed)
            .status()
            .unwrap()
    };
    assert!(run("0", "s0").success());
    assert!(run("1", "s1").success());
    let a = fs::read_to_string(d.join("s0/pe.ir")).unwrap();
    let b = fs::read_to_string(d.join("s1/pe.ir")).unwrap();
    assert_ne!(a, b);
    assert_eq!(run("zero", "bad").code(), Some(1));
}
