//! `tensorlift` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 input fails to parse or
//! verify, 3 equivalence counterexample, 4 internal invariant violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::assembler::{assemble, parse_taidl};
use crate::corpus::{full_corpus, generate, DesignKind, DesignSpec};
use crate::ir::{parse_descriptors, parse_module, print_descriptor, print_module, InstructionDescriptor, Module};
use crate::oracle::{check_equivalence, emit_smt, Budget, Domain, EquivError};
use crate::passes::{parse_pass_list, run_passes, Pass, PassConfig, PipelineError, DEFAULT_MAC_BOUND};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COUNTEREXAMPLE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Environment variable holding the default seed for `gen` and `verify`.
pub const SEED_ENV: &str = "TENSORLIFT_SEED";

#[derive(Debug, Parser)]
#[command(name = "tensorlift", version, about = "Lift bit-level accelerator IR to tensor-level TAIDL specifications")]
pub struct RunConfig {
    /// Print per-pass reports and assembly routes on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic design: IR, descriptors and expectations.
    Gen(GenArgs),
    /// Run lifting passes over an IR module.
    Opt(OptArgs),
    /// Check two IR modules for bit-exact equivalence, function by function.
    Verify(VerifyArgs),
    /// Assemble a lifted module into TAIDL text.
    Assemble(AssembleArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// pe, mac_chain, dma_copy, pool, fsm_pair, or `all` for the full corpus.
    #[arg(long)]
    pub design: String,
    /// Multiplier input width.
    #[arg(long = "W", default_value_t = 8)]
    pub input_width: u32,
    /// Accumulator width.
    #[arg(long = "V", default_value_t = 32)]
    pub acc_width: u32,
    /// Write-back width.
    #[arg(long = "w", default_value_t = 8)]
    pub output_width: u32,
    /// MAC chain length.
    #[arg(long, default_value_t = 16)]
    pub n: u32,
    #[arg(long, default_value_t = 3)]
    pub banks: u32,
    /// Pooling window.
    #[arg(long, default_value_t = 4)]
    pub window: u32,
    /// Elements per DMA row.
    #[arg(long, default_value_t = 4)]
    pub vector_length: u32,
    /// Add a ReLU stage to the PE.
    #[arg(long)]
    pub relu: bool,
    /// PE array as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(u32, u32)>,
    /// Add a loop macro instruction over the PE.
    #[arg(long)]
    pub macro_loop: bool,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// `full` runs all eight passes in order.
    #[arg(long, conflicts_with = "passes")]
    pub pipeline: Option<String>,
    /// Comma-separated pass flags, e.g. `canon-bitmanip,narrow-types`.
    #[arg(long)]
    pub passes: Option<String>,
    /// Write pass reports here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Widest multiplier operand accepted as a MAC.
    #[arg(long, default_value_t = DEFAULT_MAC_BOUND)]
    pub mac_bound: u32,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    /// Restrict inputs to the fixed controls of these descriptors.
    #[arg(long)]
    pub restrict: Option<PathBuf>,
    /// Also write an SMT-LIB2 script per function pair.
    #[arg(long)]
    pub emit_smt: Option<PathBuf>,
    /// Only check this function.
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub exhaustive_bits: u32,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Write the equivalence report here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    pub input: PathBuf,
    /// Descriptor file; its entries replace same-named ones in the input.
    #[arg(long)]
    pub descriptors: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (r, c) = s.split_once('x').ok_or("expected ROWSxCOLS")?;
    let num = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(r)?, num(c)?))
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_module(path: &Path) -> Result<Module, Failure> {
    parse_module(&read(path)?).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn load_descriptors(path: &Path) -> Result<Vec<InstructionDescriptor>, Failure> {
    parse_descriptors(&read(path)?).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn cmd_gen(a: &GenArgs) -> Outcome {
    let (module, expectations, stem) = if a.design == "all" {
        let (m, e) = full_corpus(a.seed);
        (m, e, "corpus".to_string())
    } else {
        let kind: DesignKind = a.design.parse().map_err(|e: crate::corpus::SpecError| Failure::new(EXIT_USAGE, e.to_string()))?;
        let mut spec = DesignSpec::new(kind).with_seed(a.seed);
        let p = &mut spec.params;
        p.input_width = a.input_width;
        p.acc_width = a.acc_width;
        p.output_width = a.output_width;
        p.chain_length = a.n;
        p.banks = a.banks;
        p.window = a.window;
        p.vector_length = a.vector_length;
        p.activation = a.relu;
        p.grid = a.grid;
        p.macro_loop = a.macro_loop;
        let (m, e) = generate(&spec).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
        (m, e, kind.name().to_string())
    };
    fs::create_dir_all(&a.output)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", a.output.display())))?;
    let descriptors: String = module
        .descriptors
        .iter()
        .map(print_descriptor)
        .collect::<Vec<_>>()
        .join("\n");
    write(&a.output.join(format!("{stem}.ir")), &print_module(&module))?;
    write(&a.output.join(format!("{stem}.desc")), &descriptors)?;
    write(&a.output.join(format!("{stem}.expect")), &expectations.to_text())
}

fn cmd_opt(a: &OptArgs, verbose: bool) -> Outcome {
    let passes: Vec<Pass> = match (&a.pipeline, &a.passes) {
        (Some(p), _) if p == "full" => Pass::ALL.to_vec(),
        (Some(p), _) => return Err(Failure::new(EXIT_USAGE, format!("unknown pipeline `{p}` (expected `full`)"))),
        (None, Some(list)) => parse_pass_list(list).map_err(|e| Failure::new(EXIT_USAGE, e))?,
        (None, None) => Pass::ALL.to_vec(),
    };
    let m = load_module(&a.input)?;
    let config = PassConfig {
        mac_bound: a.mac_bound,
        workers: a.workers,
    };
    let (out, reports) = run_passes(&m, &passes, &config).map_err(|e| match e {
        PipelineError::InvalidResult { .. } | PipelineError::Pool(_) => Failure::new(EXIT_INTERNAL, e.to_string()),
    })?;
    let report_text: String = reports.iter().map(|r| format!("{r}\n")).collect();
    if verbose {
        eprint!("{report_text}");
    }
    for r in reports.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: {r}");
    }
    if let Some(p) = &a.report {
        write(p, &report_text)?;
    }
    emit(a.output.as_deref(), &print_module(&out))
}

/// Joins per-function SMT scripts into one file, each in its own scope.
fn join_smt(scripts: &[(String, String)]) -> String {
    let mut out = String::new();
    for (i, (name, script)) in scripts.iter().enumerate() {
        let mut lines = script.lines();
        if i == 0 {
            for l in lines.by_ref().take(2) {
                out.push_str(l);
                out.push('\n');
            }
        } else {
            lines.nth(1);
        }
        let _ = writeln!(out, "; function @{name}\n(push 1)");
        for l in lines {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str("(pop 1)\n");
    }
    out
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    let left = load_module(&a.left)?;
    let right = load_module(&a.right)?;
    let descriptors = match &a.restrict {
        Some(p) => Some(load_descriptors(p)?),
        None => None,
    };
    let budget = Budget {
        exhaustive_bits: a.exhaustive_bits,
        samples: a.samples,
        seed: a.seed,
    };
    let selected: Vec<_> = left
        .functions
        .iter()
        .filter(|f| a.function.as_deref().is_none_or(|n| n == f.name))
        .collect();
    if selected.is_empty() {
        return Err(Failure::new(EXIT_USAGE, "no function selected"));
    }
    let mut report = String::new();
    let mut scripts = Vec::new();
    let mut mismatches = Vec::new();
    for f in selected {
        let g = right
            .function(&f.name)
            .ok_or_else(|| Failure::new(EXIT_INPUT, format!("@{} missing from {}", f.name, a.right.display())))?;
        let domain = descriptors
            .as_ref()
            .and_then(|ds| ds.iter().find(|d| d.name == f.instruction()))
            .map(|d| Domain::from_descriptor(f, d))
            .unwrap_or_default();
        let input_error = |e: EquivError| Failure::new(EXIT_INPUT, format!("@{}: {e}", f.name));
        if a.emit_smt.is_some() {
            scripts.push((f.name.clone(), emit_smt(f, g, &domain).map_err(input_error)?));
        }
        let r = check_equivalence(f, g, &domain, &budget).map_err(input_error)?;
        if !report.is_empty() {
            report.push('\n');
        }
        let _ = writeln!(report, "function = @{}", f.name);
        report.push_str(&r.to_text(f));
        if !r.is_equivalent() {
            mismatches.push(f.name.clone());
        }
    }
    if let Some(p) = &a.emit_smt {
        write(p, &join_smt(&scripts))?;
    }
    emit(a.output.as_deref(), &report)?;
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_COUNTEREXAMPLE,
            format!("counterexample for @{}", mismatches.join(", @")),
        ))
    }
}

fn cmd_assemble(a: &AssembleArgs, verbose: bool) -> Outcome {
    let mut m = load_module(&a.input)?;
    if let Some(p) = &a.descriptors {
        for d in load_descriptors(p)? {
            match m.descriptors.iter_mut().find(|e| e.name == d.name) {
                Some(e) => *e = d,
                None => m.descriptors.push(d),
            }
        }
    }
    let assembly = assemble(&m);
    for w in &assembly.warnings {
        eprintln!("warning: {w}");
    }
    if verbose {
        for (name, route) in &assembly.routes {
            eprintln!("{name}: {route}");
        }
    }
    let text = assembly.text();
    let problems = assembly.spec.check();
    if !problems.is_empty() {
        return Err(Failure::new(EXIT_INTERNAL, format!("emitted spec is malformed: {}", problems.join("; "))));
    }
    match parse_taidl(&text) {
        Ok(spec) if spec == assembly.spec => {}
        Ok(_) => return Err(Failure::new(EXIT_INTERNAL, "emitted spec does not round-trip")),
        Err(e) => return Err(Failure::new(EXIT_INTERNAL, format!("emitted spec does not re-parse: {e}"))),
    }
    emit(a.output.as_deref(), &text)
}

/// Runs the driver on `argv` (program name first) and returns the exit code.
/// Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let verbose = config.verbose > 0;
    let outcome = match &config.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Opt(a) => cmd_opt(a, verbose),
        Command::Verify(a) => cmd_verify(a),
        Command::Assemble(a) => cmd_assemble(a, verbose),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("tensorlift: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_argument() {
        assert_eq!(parse_grid("2x3"), Ok((2, 3)));
        assert!(parse_grid("2by3").is_err());
        assert!(parse_grid("ax3").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["tensorlift"]), EXIT_USAGE);
        assert_eq!(run(["tensorlift", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["tensorlift", "opt", "x.ir", "--passes", "no-such-pass"]), EXIT_USAGE);
        assert_eq!(run(["tensorlift", "opt", "/nonexistent/x.ir"]), EXIT_USAGE);
        assert_eq!(run(["tensorlift", "--help"]), EXIT_OK);
    }

    #[test]
    fn smt_scripts_share_one_header() {
        let s = "(set-option :produce-models true)\n(set-logic QF_ABV)\n(check-sat)\n".to_string();
        let joined = join_smt(&[("a".into(), s.clone()), ("b".into(), s)]);
        assert_eq!(joined.matches("set-logic").count(), 1);
        assert_eq!(joined.matches("(push 1)").count(), 2);
        assert_eq!(joined.matches("(check-sat)").count(), 2);
    }
}
