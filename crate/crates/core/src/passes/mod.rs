//! The eight lifting passes and the pipeline that runs them.
//!
//! Rewriting passes (`canon-bitmanip`, `narrow-types`, `specialize-control`,
//! `reconstruct-loops`) change ops; the rest only add annotations. Every pass
//! works on one function at a time, so the pipeline fans functions out over
//! a thread pool.

mod canon;
mod clamp;
mod linalg;
mod mac;
mod metadata;
mod narrow;
mod reroll;
mod specialize;
pub(crate) mod util;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::ir::{verify, Function, InstructionDescriptor, Module, Violation};

pub use canon::canon_bitmanip;
pub use clamp::detect_clamp;
pub use linalg::{lift_to_linalg, DOT_PRODUCT, MAX_REDUCE};
pub use mac::detect_mac;
pub use metadata::{
    coordinates, emit_taidl_metadata, port_class, ROLE_ATTRIBUTE, ROLE_INPUT, ROLE_OUTPUT,
    ROLE_STATE,
};
pub use narrow::narrow_types;
pub use reroll::reconstruct_loops;
pub use specialize::specialize_control;

pub const DEFAULT_MAC_BOUND: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pass {
    CanonBitmanip,
    NarrowTypes,
    DetectMac,
    SpecializeControl,
    DetectClamp,
    ReconstructLoops,
    LiftToLinalg,
    EmitTaidlMetadata,
}

impl Pass {
    /// Pipeline order.
    pub const ALL: [Pass; 8] = [
        Pass::CanonBitmanip,
        Pass::NarrowTypes,
        Pass::DetectMac,
        Pass::SpecializeControl,
        Pass::DetectClamp,
        Pass::ReconstructLoops,
        Pass::LiftToLinalg,
        Pass::EmitTaidlMetadata,
    ];

    pub fn flag(self) -> &'static str {
        match self {
            Pass::CanonBitmanip => "canon-bitmanip",
            Pass::NarrowTypes => "narrow-types",
            Pass::DetectMac => "detect-mac",
            Pass::SpecializeControl => "specialize-control",
            Pass::DetectClamp => "detect-clamp",
            Pass::ReconstructLoops => "reconstruct-loops",
            Pass::LiftToLinalg => "lift-to-linalg",
            Pass::EmitTaidlMetadata => "emit-taidl-metadata",
        }
    }

    pub fn rewrites_ops(self) -> bool {
        matches!(
            self,
            Pass::CanonBitmanip
                | Pass::NarrowTypes
                | Pass::SpecializeControl
                | Pass::ReconstructLoops
        )
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for Pass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pass::ALL
            .into_iter()
            .find(|p| p.flag() == s)
            .ok_or_else(|| format!("unknown pass `{s}`"))
    }
}

/// Parses a comma-separated pass list such as `canon-bitmanip,detect-mac`.
pub fn parse_pass_list(s: &str) -> Result<Vec<Pass>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(Pass::from_str)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassReport {
    pub pass: Pass,
    pub function: String,
    pub ops_before: usize,
    pub ops_after: usize,
    pub rewrites: usize,
    pub annotations_added: usize,
    /// Set when the pass rejected the function and passed it through.
    pub error: Option<String>,
}

impl fmt::Display for PassReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} @{}: ops {} -> {}, rewrites {}, annotations {}",
            self.pass,
            self.function,
            self.ops_before,
            self.ops_after,
            self.rewrites,
            self.annotations_added
        )?;
        if let Some(e) = &self.error {
            write!(f, ", error: {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassConfig {
    /// Widest operand `detect-mac` accepts.
    pub mac_bound: u32,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for PassConfig {
    fn default() -> Self {
        PassConfig {
            mac_bound: DEFAULT_MAC_BOUND,
            workers: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{pass} produced invalid IR in @{function}: {}", .violations.iter().map(Violation::to_string).collect::<Vec<_>>().join("; "))]
    InvalidResult {
        pass: Pass,
        function: String,
        violations: Vec<Violation>,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// How the pipeline may use an instruction's descriptor.
#[derive(Debug, Clone)]
pub enum DescriptorState<'a> {
    Missing,
    Valid(&'a InstructionDescriptor),
    Invalid(String),
}

/// Runs one pass over one function.
pub fn run_pass(
    pass: Pass,
    f: &mut Function,
    descriptor: &DescriptorState,
    config: &PassConfig,
) -> PassReport {
    let ops_before = f.op_count();
    let mut rewrites = 0;
    let mut annotations_added = 0;
    let mut error = None;
    match pass {
        Pass::CanonBitmanip => rewrites = canon_bitmanip(f),
        Pass::NarrowTypes => rewrites = narrow_types(f),
        Pass::DetectMac => annotations_added = detect_mac(f, config.mac_bound),
        Pass::SpecializeControl => match descriptor {
            DescriptorState::Valid(d) => rewrites = specialize_control(f, d),
            DescriptorState::Invalid(e) => error = Some(e.clone()),
            DescriptorState::Missing => {}
        },
        Pass::DetectClamp => annotations_added = detect_clamp(f),
        Pass::ReconstructLoops => rewrites = reconstruct_loops(f),
        Pass::LiftToLinalg => annotations_added = lift_to_linalg(f),
        Pass::EmitTaidlMetadata => annotations_added = emit_taidl_metadata(f),
    }
    PassReport {
        pass,
        function: f.name.clone(),
        ops_before,
        ops_after: f.op_count(),
        rewrites,
        annotations_added,
        error,
    }
}

fn descriptor_states(m: &Module) -> HashMap<&str, DescriptorState<'_>> {
    let mut out = HashMap::new();
    for f in &m.functions {
        let instr = f.instruction();
        if out.contains_key(instr) {
            continue;
        }
        let state = match m.descriptor(instr) {
            None => DescriptorState::Missing,
            Some(d) => match d.check_against(&m.functions) {
                Ok(()) => DescriptorState::Valid(d),
                Err(e) => DescriptorState::Invalid(e),
            },
        };
        out.insert(instr, state);
    }
    out
}

/// Runs `passes` in order over every function. Reports come back grouped
/// by pass, in function order within each pass.
pub fn run_passes(
    m: &Module,
    passes: &[Pass],
    config: &PassConfig,
) -> Result<(Module, Vec<PassReport>), PipelineError> {
    let states = descriptor_states(m);
    let work = |f: &Function| -> Result<(Function, Vec<PassReport>), PipelineError> {
        let mut f = f.clone();
        let state = &states[f.instruction()];
        let mut reports = Vec::with_capacity(passes.len());
        for &pass in passes {
            reports.push(run_pass(pass, &mut f, state, config));
            if let Err(violations) = verify(&f) {
                return Err(PipelineError::InvalidResult {
                    pass,
                    function: f.name.clone(),
                    violations,
                });
            }
        }
        Ok((f, reports))
    };
    let results: Vec<Result<(Function, Vec<PassReport>), PipelineError>> = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?
            .install(|| m.functions.par_iter().map(work).collect()),
        None => m.functions.par_iter().map(work).collect(),
    };
    let mut functions = Vec::with_capacity(results.len());
    let mut per_function = Vec::with_capacity(results.len());
    for r in results {
        let (f, reports) = r?;
        functions.push(f);
        per_function.push(reports);
    }
    let mut reports = Vec::new();
    for i in 0..passes.len() {
        reports.extend(per_function.iter().map(|r| r[i].clone()));
    }
    Ok((
        Module {
            descriptors: m.descriptors.clone(),
            functions,
        },
        reports,
    ))
}

/// Runs all eight passes in pipeline order.
pub fn run_pipeline(
    m: &Module,
    config: &PassConfig,
) -> Result<(Module, Vec<PassReport>), PipelineError> {
    run_passes(m, &Pass::ALL, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{full_corpus, generate, DesignSpec, STAGES};

    #[test]
    fn pass_flags_round_trip() {
        for p in Pass::ALL {
            assert_eq!(p.flag().parse::<Pass>().unwrap(), p);
        }
        assert_eq!(&STAGES[1..], Pass::ALL.map(Pass::flag));
        assert!(parse_pass_list("detect-mac,nope").is_err());
        assert_eq!(
            parse_pass_list("canon-bitmanip, detect-mac").unwrap(),
            [Pass::CanonBitmanip, Pass::DetectMac]
        );
    }

    #[test]
    fn corpus_meets_every_stage_expectation() {
        for seed in 0..4 {
            let (m, exp) = full_corpus(seed);
            assert!(exp.check("generate", &m).is_empty());
            let mut cur = m;
            for pass in Pass::ALL {
                let (next, _) = run_passes(&cur, &[pass], &PassConfig::default()).unwrap();
                let failures = exp.check(pass.flag(), &next);
                assert!(failures.is_empty(), "seed {seed}: {failures:#?}");
                cur = next;
            }
        }
    }

    #[test]
    fn pipeline_is_idempotent_and_worker_independent() {
        let (m, _) = full_corpus(3);
        let (once, _) = run_pipeline(&m, &PassConfig::default()).unwrap();
        let (twice, _) = run_pipeline(&once, &PassConfig::default()).unwrap();
        assert_eq!(once, twice);
        let single = PassConfig {
            workers: Some(1),
            ..PassConfig::default()
        };
        let (serial, _) = run_pipeline(&m, &single).unwrap();
        assert_eq!(serial, once);
    }

    #[test]
    fn invalid_descriptor_is_reported_and_passed_through() {
        let (mut m, _) = generate(&DesignSpec::pe(8, 32, 8)).unwrap();
        m.descriptors[0]
            .fixed_controls
            .insert("in_control_missing".into(), vec![1]);
        let (out, reports) = run_passes(&m, &[Pass::SpecializeControl], &PassConfig::default())
            .unwrap();
        assert_eq!(out.functions, m.functions);
        assert!(reports[0].error.as_deref().unwrap().contains("in_control_missing"));
    }
}
