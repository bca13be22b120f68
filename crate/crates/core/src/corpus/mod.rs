//! Synthetic bit-level corpus.
//!
//! Each [`DesignSpec`] expands to a [`Module`] shaped like per-instruction
//! RTL extraction output (memref-packed inputs, signal names, `scf.if`
//! guarded updates) plus [`Expectations`]: structural facts the lifting
//! pipeline must establish after each pass.

mod designs;
pub mod fuzz;
pub mod mutate;
mod metrics;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ir::Module;

pub use metrics::{compute_core, measure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignKind {
    Pe,
    MacChain,
    DmaCopy,
    Pool,
    FsmPair,
}

impl DesignKind {
    pub const ALL: [DesignKind; 5] = [
        DesignKind::Pe,
        DesignKind::MacChain,
        DesignKind::DmaCopy,
        DesignKind::Pool,
        DesignKind::FsmPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Pe => "pe",
            DesignKind::MacChain => "mac_chain",
            DesignKind::DmaCopy => "dma_copy",
            DesignKind::Pool => "pool",
            DesignKind::FsmPair => "fsm_pair",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        DesignKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SpecError(format!("unknown design `{s}`")))
    }
}

/// Kind-specific parameters. Fields irrelevant to a kind are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Params {
    /// Multiplier input width `W`.
    pub input_width: u32,
    /// Accumulator width `V`.
    pub acc_width: u32,
    /// Write-back width `w`.
    pub output_width: u32,
    pub chain_length: u32,
    /// Elements moved per DMA row.
    pub vector_length: u32,
    pub banks: u32,
    pub window: u32,
    /// Adds a ReLU stage gated by an `in_control_act` control bit.
    pub activation: bool,
    /// Emits one PE function per grid cell with `_R_C` coordinate suffixes.
    pub grid: Option<(u32, u32)>,
    /// Adds a `loop_ws` macro instruction over the PE.
    pub macro_loop: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            input_width: 8,
            acc_width: 32,
            output_width: 8,
            chain_length: 16,
            vector_length: 4,
            banks: 3,
            window: 4,
            activation: false,
            grid: None,
            macro_loop: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub params: Params,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid design spec: {0}")]
pub struct SpecError(pub String);

impl DesignSpec {
    pub fn new(kind: DesignKind) -> Self {
        DesignSpec {
            kind,
            params: Params::default(),
            seed: 0,
        }
    }

    pub fn pe(input_width: u32, acc_width: u32, output_width: u32) -> Self {
        let mut s = DesignSpec::new(DesignKind::Pe);
        s.params.input_width = input_width;
        s.params.acc_width = acc_width;
        s.params.output_width = output_width;
        s
    }

    pub fn mac_chain(n: u32) -> Self {
        let mut s = DesignSpec::new(DesignKind::MacChain);
        s.params.chain_length = n;
        s
    }

    pub fn dma_copy(banks: u32) -> Self {
        let mut s = DesignSpec::new(DesignKind::DmaCopy);
        s.params.banks = banks;
        s
    }

    pub fn pool(window: u32) -> Self {
        let mut s = DesignSpec::new(DesignKind::Pool);
        s.params.window = window;
        s
    }

    pub fn fsm_pair() -> Self {
        DesignSpec::new(DesignKind::FsmPair)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let p = &self.params;
        let fail = |m: &str| Err(SpecError(format!("{}: {m}", self.kind)));
        match self.kind {
            DesignKind::Pe => {
                if p.input_width == 0 || p.output_width == 0 {
                    return fail("widths must be positive");
                }
                if p.input_width >= p.acc_width || p.output_width >= p.acc_width {
                    return fail("requires W < V and w < V");
                }
                if p.acc_width > crate::ir::MAX_WIDTH {
                    return fail("accumulator wider than 128 bits");
                }
                if let Some((r, c)) = p.grid {
                    if r == 0 || c == 0 {
                        return fail("grid dimensions must be positive");
                    }
                }
            }
            DesignKind::MacChain => {
                if p.chain_length == 0 {
                    return fail("requires n >= 1");
                }
            }
            DesignKind::DmaCopy => {
                if !(1..=3).contains(&p.banks) {
                    return fail("banks must be 1, 2 or 3");
                }
                if p.vector_length == 0 {
                    return fail("vector length must be positive");
                }
            }
            DesignKind::Pool => {
                if p.window < 2 {
                    return fail("requires window >= 2");
                }
            }
            DesignKind::FsmPair => {}
        }
        Ok(())
    }
}

/// Generates the module and expectations for `spec`.
pub fn generate(spec: &DesignSpec) -> Result<(Module, Expectations), SpecError> {
    spec.validate()?;
    let mut exp = Expectations::default();
    let module = match spec.kind {
        DesignKind::Pe => designs::pe(&spec.params, spec.seed, &mut exp),
        DesignKind::MacChain => designs::mac_chain(&spec.params, spec.seed, &mut exp),
        DesignKind::DmaCopy => designs::dma_copy(&spec.params, &mut exp),
        DesignKind::Pool => designs::pool(&spec.params, &mut exp),
        DesignKind::FsmPair => designs::fsm_pair(&mut exp),
    };
    Ok((module, exp))
}

/// pe(8,32,8), mac_chain(16), dma_copy(3), pool(4) and fsm_pair in one
/// module.
pub fn full_corpus(seed: u64) -> (Module, Expectations) {
    let specs = [
        DesignSpec::pe(8, 32, 8),
        DesignSpec::mac_chain(16),
        DesignSpec::dma_copy(3),
        DesignSpec::pool(4),
        DesignSpec::fsm_pair(),
    ];
    let mut module = Module::default();
    let mut exp = Expectations::default();
    for s in specs {
        let (m, e) = generate(&s.with_seed(seed)).expect("corpus specs are valid");
        module.merge(m);
        exp.entries.extend(e.entries);
    }
    (module, exp)
}

/// `generate` followed by the eight pass flags, in pipeline order.
pub const STAGES: [&str; 9] = [
    "generate",
    "canon-bitmanip",
    "narrow-types",
    "detect-mac",
    "specialize-control",
    "detect-clamp",
    "reconstruct-loops",
    "lift-to-linalg",
    "emit-taidl-metadata",
];

/// `<stage>:<function>:<metric> = <value>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub stage: String,
    pub function: String,
    pub metric: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expectations {
    pub entries: Vec<Expectation>,
}

impl Expectations {
    pub fn push(&mut self, stage: &str, function: &str, metric: &str, value: impl ToString) {
        self.entries.push(Expectation {
            stage: stage.to_string(),
            function: function.to_string(),
            metric: metric.to_string(),
            value: value.to_string(),
        });
    }

    pub fn for_stage<'a>(&'a self, stage: &'a str) -> impl Iterator<Item = &'a Expectation> + 'a {
        self.entries.iter().filter(move |e| e.stage == stage)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}:{}:{} = {}\n", e.stage, e.function, e.metric, e.value))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self, SpecError> {
        let mut out = Expectations::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || SpecError(format!("expectations line {}: `{line}`", n + 1));
            let (key, value) = line.split_once(" = ").ok_or_else(bad)?;
            let mut parts = key.splitn(3, ':');
            let (Some(stage), Some(function), Some(metric)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad());
            };
            out.push(stage, function, metric, value);
        }
        Ok(out)
    }

    /// Checks every expectation of `stage` against `m`; returns one message
    /// per mismatch.
    pub fn check(&self, stage: &str, m: &Module) -> Vec<String> {
        let mut failures = Vec::new();
        for e in self.for_stage(stage) {
            let Some(f) = m.function(&e.function) else {
                failures.push(format!("{stage}: function @{} missing", e.function));
                continue;
            };
            match measure(f, &e.metric) {
                Some(v) if v == e.value => {}
                Some(v) => failures.push(format!(
                    "{stage}: @{} {} = {v}, expected {}",
                    e.function, e.metric, e.value
                )),
                None => failures.push(format!("{stage}: unknown metric `{}`", e.metric)),
            }
        }
        failures
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_module, print_module, verify_module};
    use crate::oracle::{evaluate, Environment};

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&DesignSpec::pe(32, 32, 8)).is_err());
        assert!(generate(&DesignSpec::pe(8, 32, 32)).is_err());
        assert!(generate(&DesignSpec::mac_chain(0)).is_err());
        assert!(generate(&DesignSpec::dma_copy(4)).is_err());
        assert!(generate(&DesignSpec::dma_copy(0)).is_err());
        assert!(generate(&DesignSpec::pool(1)).is_err());
        assert!("systolic".parse::<DesignKind>().is_err());
    }

    #[test]
    fn generated_modules_verify_and_evaluate_on_zeros() {
        let mut specs = Vec::new();
        for seed in 0..4 {
            specs.push(DesignSpec::pe(8, 32, 8).with_seed(seed));
        }
        let mut relu = DesignSpec::pe(8, 32, 8);
        relu.params.activation = true;
        relu.params.grid = Some((2, 2));
        relu.params.macro_loop = true;
        specs.push(relu);
        specs.extend([1, 2, 16].map(DesignSpec::mac_chain));
        specs.extend([1, 2, 3].map(DesignSpec::dma_copy));
        specs.extend([2, 4].map(DesignSpec::pool));
        specs.push(DesignSpec::fsm_pair());
        for s in specs {
            let (m, exp) = generate(&s).unwrap();
            assert!(verify_module(&m).is_empty(), "{s:?}: {:?}", verify_module(&m));
            for d in &m.descriptors {
                d.check_against(&m.functions).unwrap();
            }
            for f in &m.functions {
                evaluate(f, &Environment::zeros(f)).unwrap();
            }
            assert!(exp.check("generate", &m).is_empty(), "{:?}", exp.check("generate", &m));
            let text = print_module(&m);
            assert_eq!(parse_module(&text).unwrap(), m);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = full_corpus(3);
        let b = full_corpus(3);
        assert_eq!(print_module(&a.0), print_module(&b.0));
        assert_eq!(a.1.to_text(), b.1.to_text());
    }

    #[test]
    fn pe_has_48_bit_steps() {
        let (m, _) = generate(&DesignSpec::pe(8, 32, 8)).unwrap();
        let f = &m.functions[0];
        for mnemonic in ["select", "extui", "shli", "ori"] {
            let n = measure(f, &format!("count.{mnemonic}")).unwrap();
            let n: usize = n.parse().unwrap();
            assert!(n >= 48, "{mnemonic}: {n}");
        }
        assert_eq!(measure(f, "count.ori").unwrap(), "48");
    }

    #[test]
    fn dma_three_banks_names_registers() {
        let (m, _) = generate(&DesignSpec::dma_copy(3)).unwrap();
        let cfg = m.descriptor("config_ld").unwrap();
        assert_eq!(cfg.asvs, ["strides_0", "strides_1", "strides_2"]);
        assert_eq!(cfg.encoding["bank"].to_string(), "rs1[4:3]");
    }

    #[test]
    fn expectations_text_round_trip() {
        let (_, exp) = full_corpus(0);
        let text = exp.to_text();
        assert_eq!(Expectations::from_text(&text).unwrap(), exp);
    }
}
