//! Python bindings: generate designs, lift, check equivalence and assemble.

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tensorlift_core::assembler;
use tensorlift_core::corpus::{self, DesignKind, DesignSpec};
use tensorlift_core::ir::{self, print_function, print_module};
use tensorlift_core::oracle::{self, Budget, Domain};
use tensorlift_core::passes::{self, parse_pass_list, PassConfig};

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed, verified module of per-(instruction, ASV) functions.
#[pyclass(frozen, skip_from_py_object, module = "tensorlift")]
#[derive(Clone)]
struct Module {
    inner: ir::Module,
}

#[pymethods]
impl Module {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        ir::parse_module(text).map(|inner| Module { inner }).map_err(value_error)
    }

    #[getter]
    fn functions(&self) -> Vec<String> {
        self.inner.functions.iter().map(|f| f.name.clone()).collect()
    }

    #[getter]
    fn instructions(&self) -> Vec<String> {
        self.inner.descriptors.iter().map(|d| d.name.clone()).collect()
    }

    fn function_text(&self, name: &str) -> PyResult<String> {
        self.function(name).map(print_function)
    }

    fn op_count(&self) -> usize {
        self.inner.op_count()
    }

    fn __len__(&self) -> usize {
        self.inner.functions.len()
    }

    fn __str__(&self) -> String {
        print_module(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("<Module functions={} ops={}>", self.inner.functions.len(), self.inner.op_count())
    }

    fn __eq__(&self, other: &Module) -> bool {
        self.inner == other.inner
    }
}

impl Module {
    fn function(&self, name: &str) -> PyResult<&ir::Function> {
        self.inner
            .function(name)
            .ok_or_else(|| PyKeyError::new_err(format!("no function @{name}")))
    }
}

/// Result of comparing one function pair.
#[pyclass(frozen, module = "tensorlift")]
struct EquivalenceReport {
    #[pyo3(get)]
    function: String,
    #[pyo3(get)]
    verdict: String,
    #[pyo3(get)]
    equivalent: bool,
    #[pyo3(get)]
    exhaustive: bool,
    #[pyo3(get)]
    free_bits: u64,
    #[pyo3(get)]
    text: String,
}

#[pymethods]
impl EquivalenceReport {
    fn __bool__(&self) -> bool {
        self.equivalent
    }

    fn __repr__(&self) -> String {
        format!("<EquivalenceReport @{} {}>", self.function, self.verdict)
    }
}

/// Assembled specification plus routing decisions.
#[pyclass(frozen, module = "tensorlift")]
struct Assembly {
    #[pyo3(get)]
    text: String,
    #[pyo3(get)]
    warnings: Vec<String>,
    #[pyo3(get)]
    routes: Vec<(String, String)>,
    #[pyo3(get)]
    orderings: Vec<String>,
}

#[pymethods]
impl Assembly {
    fn __str__(&self) -> String {
        self.text.clone()
    }
}

/// Generates a corpus design; returns the module and its expectations text.
#[pyfunction]
#[pyo3(signature = (design, seed=0, input_width=None, acc_width=None, output_width=None, n=None, banks=None, window=None, activation=false))]
#[allow(clippy::too_many_arguments)]
fn generate(
    design: &str,
    seed: u64,
    input_width: Option<u32>,
    acc_width: Option<u32>,
    output_width: Option<u32>,
    n: Option<u32>,
    banks: Option<u32>,
    window: Option<u32>,
    activation: bool,
) -> PyResult<(Module, String)> {
    let kind: DesignKind = design.parse().map_err(value_error)?;
    let mut spec = DesignSpec::new(kind).with_seed(seed);
    let p = &mut spec.params;
    p.input_width = input_width.unwrap_or(p.input_width);
    p.acc_width = acc_width.unwrap_or(p.acc_width);
    p.output_width = output_width.unwrap_or(p.output_width);
    p.chain_length = n.unwrap_or(p.chain_length);
    p.banks = banks.unwrap_or(p.banks);
    p.window = window.unwrap_or(p.window);
    p.activation = activation;
    let (inner, exp) = corpus::generate(&spec).map_err(value_error)?;
    Ok((Module { inner }, exp.to_text()))
}

#[pyfunction]
#[pyo3(signature = (seed=0))]
fn full_corpus(seed: u64) -> (Module, String) {
    let (inner, exp) = corpus::full_corpus(seed);
    (Module { inner }, exp.to_text())
}

/// Runs the named passes (all eight when `passes` is None); returns the
/// result and one report line per pass and function.
#[pyfunction]
#[pyo3(signature = (module, passes=None, workers=None, mac_bound=passes::DEFAULT_MAC_BOUND))]
fn lift(
    py: Python<'_>,
    module: &Module,
    passes: Option<Vec<String>>,
    workers: Option<usize>,
    mac_bound: u32,
) -> PyResult<(Module, Vec<String>)> {
    let list = match passes {
        Some(names) => parse_pass_list(&names.join(",")).map_err(value_error)?,
        None => passes::Pass::ALL.to_vec(),
    };
    let config = PassConfig { mac_bound, workers };
    let m = &module.inner;
    let (inner, reports) = py
        .detach(|| passes::run_passes(m, &list, &config))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((Module { inner }, reports.iter().map(ToString::to_string).collect()))
}

/// Compares same-named functions of `left` and `right`. With `restrict`,
/// inputs fixed by each instruction's descriptor in `left` are pinned.
#[pyfunction]
#[pyo3(signature = (left, right, function=None, restrict=false, exhaustive_bits=20, samples=10_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn check_equivalence(
    py: Python<'_>,
    left: &Module,
    right: &Module,
    function: Option<&str>,
    restrict: bool,
    exhaustive_bits: u32,
    samples: u64,
    seed: u64,
) -> PyResult<Vec<EquivalenceReport>> {
    let budget = Budget { exhaustive_bits, samples, seed };
    let mut out = Vec::new();
    for f in &left.inner.functions {
        if function.is_some_and(|n| n != f.name) {
            continue;
        }
        let g = right.function(&f.name)?;
        let domain = match left.inner.descriptor(f.instruction()) {
            Some(d) if restrict => Domain::from_descriptor(f, d),
            _ => Domain::Full,
        };
        let r = py
            .detach(|| oracle::check_equivalence(f, g, &domain, &budget))
            .map_err(value_error)?;
        out.push(EquivalenceReport {
            function: f.name.clone(),
            verdict: r.to_text(f).lines().next().unwrap_or_default().trim_start_matches("verdict = ").to_string(),
            equivalent: r.is_equivalent(),
            exhaustive: r.is_exhaustive(),
            free_bits: r.free_bits,
            text: r.to_text(f),
        });
    }
    if out.is_empty() {
        return Err(PyKeyError::new_err("no function selected"));
    }
    Ok(out)
}

/// SMT-LIB2 query that is unsat iff the two functions agree.
#[pyfunction]
fn emit_smt(left: &Module, right: &Module, function: &str) -> PyResult<String> {
    let (f, g) = (left.function(function)?, right.function(function)?);
    oracle::emit_smt(f, g, &Domain::Full).map_err(value_error)
}

#[pyfunction]
fn assemble(module: &Module) -> Assembly {
    let a = assembler::assemble(&module.inner);
    Assembly {
        text: a.text(),
        warnings: a.warnings.clone(),
        routes: a.routes.iter().map(|(n, r)| (n.clone(), r.to_string())).collect(),
        orderings: a.spec.orderings.iter().map(ToString::to_string).collect(),
    }
}

/// Applies one seeded mutation to `function`; returns the mutated module
/// and a description, or None when the function has no mutation site.
#[pyfunction]
fn mutate(module: &Module, function: &str, seed: u64) -> PyResult<Option<(Module, String)>> {
    let f = module.function(function)?;
    Ok(corpus::mutate::mutate(f, seed).map(|(g, m)| {
        let mut inner = module.inner.clone();
        if let Some(slot) = inner.functions.iter_mut().find(|h| h.name == function) {
            *slot = g;
        }
        (Module { inner }, m.to_string())
    }))
}

#[pymodule]
fn tensorlift(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Module>()?;
    m.add_class::<EquivalenceReport>()?;
    m.add_class::<Assembly>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(full_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(lift, m)?)?;
    m.add_function(wrap_pyfunction!(check_equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(emit_smt, m)?)?;
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(mutate, m)?)?;
    Ok(())
}
