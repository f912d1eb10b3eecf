//! Python bindings for the market-simulation engine: case loading and
//! validation, single-step clearing, expansion-cost evaluation, design
//! distributions, and the stage-wise planning LP.

use gridco::config;
use gridco::dcopf::{self, ClearingInput};
use gridco::design_policy::{self, DesignPolicy};
use gridco::grid_model::{self, DesignMode, NetworkCase};
use gridco::harness;
use gridco::market_env;
use gridco::rng;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::{Path, PathBuf};

fn parse_mode(mode: &str) -> PyResult<DesignMode> {
    match mode {
        "continuous" => Ok(DesignMode::Continuous),
        "discrete" => Ok(DesignMode::Discrete),
        other => Err(PyValueError::new_err(format!(
            "mode must be \"continuous\" or \"discrete\", got {other:?}"
        ))),
    }
}

/// A loaded network case: buses, lines, generators, and the demand profile.
#[pyclass(name = "Case")]
struct PyCase {
    inner: NetworkCase,
}

#[pymethods]
impl PyCase {
    #[getter]
    fn num_buses(&self) -> usize {
        self.inner.buses.len()
    }

    #[getter]
    fn num_lines(&self) -> usize {
        self.inner.lines.len()
    }

    #[getter]
    fn num_generators(&self) -> usize {
        self.inner.generators.len()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.profile.horizon()
    }

    #[getter]
    fn peak_total_demand(&self) -> f64 {
        self.inner.peak_total_demand()
    }

    /// Indices of the expandable lines, in design order.
    #[getter]
    fn candidate_lines(&self) -> Vec<usize> {
        self.inner.candidate_lines()
    }

    /// Names of the expandable lines, in design order.
    #[getter]
    fn candidate_names(&self) -> Vec<String> {
        self.inner
            .candidate_lines()
            .iter()
            .map(|&l| {
                let line = &self.inner.lines[l];
                line.name
                    .clone()
                    .unwrap_or_else(|| format!("{}-{}", line.from_bus, line.to_bus))
            })
            .collect()
    }

    /// Indices of the strategic generators, in agent order.
    #[getter]
    fn strategic_generators(&self) -> Vec<usize> {
        self.inner.strategic_generators()
    }

    #[getter]
    fn marginal_costs(&self) -> Vec<f64> {
        self.inner.generators.iter().map(|g| g.marginal_cost).collect()
    }

    fn total_demand_at(&self, t: usize) -> PyResult<f64> {
        self.check_t(t)?;
        Ok(self.inner.total_demand_at(t))
    }

    fn demand_at(&self, t: usize) -> PyResult<Vec<f64>> {
        self.check_t(t)?;
        Ok(self.inner.demand_at(t))
    }

    /// Diagnostics from the structural checks, one string per finding.
    fn validate(&self) -> Vec<String> {
        grid_model::validate(&self.inner)
            .into_iter()
            .map(|d| format!("{:?}: {}", d.severity, d.message))
            .collect()
    }

    /// Per-line capacities after applying a design to the candidates.
    fn effective_capacities(
        &self,
        design: Vec<f64>,
        mode: &str,
        fixed_increment: f64,
    ) -> PyResult<Vec<f64>> {
        self.inner
            .effective_capacities(&design, parse_mode(mode)?, fixed_increment)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Case(buses={}, lines={}, generators={}, horizon={})",
            self.inner.buses.len(),
            self.inner.lines.len(),
            self.inner.generators.len(),
            self.inner.profile.horizon()
        )
    }
}

impl PyCase {
    fn check_t(&self, t: usize) -> PyResult<()> {
        let horizon = self.inner.profile.horizon();
        if t >= horizon {
            return Err(PyValueError::new_err(format!(
                "time step {t} out of range (horizon {horizon})"
            )));
        }
        Ok(())
    }
}

#[pyfunction]
fn load_case(path: PathBuf) -> PyResult<PyCase> {
    grid_model::load_case(Path::new(&path))
        .map(|inner| PyCase { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Clears one market snapshot and returns a dict with dispatch, prices,
/// flows, shedding, and cost totals.
#[pyfunction]
#[pyo3(signature = (case, bids, t=0, design=None, mode="continuous", fixed_increment=0.0, shed_penalty=None))]
#[allow(clippy::too_many_arguments)]
fn clear_market<'py>(
    py: Python<'py>,
    case: &PyCase,
    bids: Vec<f64>,
    t: usize,
    design: Option<Vec<f64>>,
    mode: &str,
    fixed_increment: f64,
    shed_penalty: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    case.check_t(t)?;
    let capacities = match design {
        Some(d) => case
            .inner
            .effective_capacities(&d, parse_mode(mode)?, fixed_increment)
            .map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => case.inner.lines.iter().map(|l| l.base_capacity).collect(),
    };
    let input = ClearingInput {
        bids,
        demands: case.inner.demand_at(t),
        capacities,
        shed_penalty,
    };
    let r = dcopf::clear_market(&case.inner, &input)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("dispatch", r.dispatch)?;
    out.set_item("lmp", r.lmp)?;
    out.set_item("flows", r.flows)?;
    out.set_item("shed", r.shed)?;
    out.set_item("line_congestion", r.line_congestion)?;
    out.set_item("operational_cost", r.operational_cost)?;
    out.set_item("bid_cost", r.bid_cost)?;
    out.set_item("shed_cost", r.shed_cost)?;
    Ok(out)
}

/// Offer price for an action in [0, 1]: cost * (1 + alpha * action).
#[pyfunction]
fn bid_price(action: f64, marginal_cost: f64, alpha: f64) -> f64 {
    market_env::bid_price(action, marginal_cost, alpha)
}

/// Yearly expansion cost of a design over the case's candidate lines.
#[pyfunction]
#[pyo3(signature = (case, design, mode="continuous", fixed_increment=0.0))]
fn expansion_cost(
    case: &PyCase,
    design: Vec<f64>,
    mode: &str,
    fixed_increment: f64,
) -> PyResult<f64> {
    let m = parse_mode(mode)?;
    if design.len() != case.inner.candidate_lines().len() {
        return Err(PyValueError::new_err(format!(
            "design has {} entries for {} candidate lines",
            design.len(),
            case.inner.candidate_lines().len()
        )));
    }
    Ok(design_policy::expansion_cost(&design, &case.inner, m, fixed_increment))
}

/// Plans capacity additions against fixed bids by cutting planes; returns
/// (design, yearly_total_cost, iterations).
#[pyfunction]
#[pyo3(signature = (case, bids, w_anu, shed_penalty=1e4))]
fn plan_expansion(
    case: &PyCase,
    bids: Vec<f64>,
    w_anu: f64,
    shed_penalty: f64,
) -> PyResult<(Vec<f64>, f64, usize)> {
    let r = harness::stage1_expansion_lp(&case.inner, &bids, w_anu, shed_penalty)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((r.design, r.total_cost, r.iterations))
}

/// Trainable distribution over expansion designs (Gaussian per line in
/// continuous mode, Bernoulli in discrete mode).
#[pyclass(name = "DesignPolicy")]
struct PyDesignPolicy {
    inner: DesignPolicy,
}

#[pymethods]
impl PyDesignPolicy {
    #[new]
    #[pyo3(signature = (n, mode="continuous", mu0=0.0, sigma=5.0))]
    fn new(n: usize, mode: &str, mu0: f64, sigma: f64) -> PyResult<Self> {
        let inner = match parse_mode(mode)? {
            DesignMode::Continuous => DesignPolicy::gaussian(n, mu0, sigma),
            DesignMode::Discrete => {
                let mu0 = if mu0 > 0.0 { mu0 } else { 0.5 };
                DesignPolicy::bernoulli(n, mu0)
            }
        };
        Ok(PyDesignPolicy { inner })
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().to_vec()
    }

    /// Draws (raw, applied) design vectors from a named deterministic
    /// stream.
    #[pyo3(signature = (seed, stream="design-sample"))]
    fn sample(&self, seed: u64, stream: &str) -> (Vec<f64>, Vec<f64>) {
        let mut r = rng::stream(seed, stream);
        let s = self.inner.sample(&mut r);
        (s.raw, s.applied)
    }

    /// Deterministic point design from the current parameters.
    fn finalize(&self) -> Vec<f64> {
        self.inner.finalize_design()
    }
}

/// Runs a full training study from a TOML configuration text; returns the
/// summary as a dict. Artifacts land in `out_dir`.
#[pyfunction]
#[pyo3(signature = (case_path, out_dir, config_toml="", overrides=vec![]))]
fn run_study<'py>(
    py: Python<'py>,
    case_path: PathBuf,
    out_dir: PathBuf,
    config_toml: &str,
    overrides: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config::parse_config(config_toml, &overrides)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let case = grid_model::load_case(&case_path)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let label = case_path.display().to_string();
    let summary = harness::run(&case, &cfg, &out_dir, &label)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("episodes", summary.episodes)?;
    out.set_item("final_design", summary.final_design.clone())?;
    out.set_item("c_exp", summary.c_exp)?;
    out.set_item("mean_c_oper", summary.mean_c_oper)?;
    out.set_item("mean_g_total", summary.mean_g_total)?;
    out.set_item("mean_returns", summary.mean_returns.clone())?;
    out.set_item("mean_bid_ratio", summary.mean_bid_ratio.clone())?;
    out.set_item("eval_shed", summary.eval_shed)?;
    out.set_item("converged", summary.converged)?;
    out.set_item("planned_total_cost", summary.planned_total_cost)?;
    out.set_item("realized_total_cost", summary.realized_total_cost())?;
    Ok(out)
}

#[pymodule]
fn gridco_py(m: &Bound<PyModule>) -> PyResult<()> {
    m.add_class::<PyCase>()?;
    m.add_class::<PyDesignPolicy>()?;
    m.add_function(wrap_pyfunction!(load_case, m)?)?;
    m.add_function(wrap_pyfunction!(clear_market, m)?)?;
    m.add_function(wrap_pyfunction!(bid_price, m)?)?;
    m.add_function(wrap_pyfunction!(expansion_cost, m)?)?;
    m.add_function(wrap_pyfunction!(plan_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
