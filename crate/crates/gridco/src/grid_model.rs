//! Network data model, case-file ingestion and validation.
//!
//! Case files are TOML documents with sections `buses`, `lines`,
//! `generators`, `profile`, and a top-level `slack_bus`. Units are MW,
//! $/MWh, and $/MW/year; susceptances are per-unit on a 100 MVA base.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub demand_base: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Per-unit susceptance (B > 0).
    pub susceptance: f64,
    pub base_capacity: f64,
    /// $/MW/year.
    #[serde(default)]
    pub expansion_cost: f64,
    /// Eligible for expansion.
    #[serde(default)]
    pub candidate: bool,
    /// Human-readable label, e.g. "4-12" in the bus numbering of the source data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    pub p_max: f64,
    pub marginal_cost: f64,
    #[serde(default)]
    pub strategic: bool,
    /// Bid-cap scale: max bid = marginal_cost * (1 + alpha).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DemandProfile {
    /// Per-unit multipliers, one per time step; D_n(t) = demand_base(n) * shape(t).
    pub shape: Vec<f64>,
}

impl DemandProfile {
    pub fn horizon(&self) -> usize {
        self.shape.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    pub slack_bus: usize,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub profile: DemandProfile,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse case file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid case: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: String) -> Self {
        Diagnostic { severity: Severity::Error, message }
    }
    fn warning(message: String) -> Self {
        Diagnostic { severity: Severity::Warning, message }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMode {
    Continuous,
    Discrete,
}

pub fn load_case(path: &Path) -> Result<NetworkCase, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let case: NetworkCase = toml::from_str(&text).map_err(|e| CaseError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let diags = validate(&case);
    if let Some(d) = diags.iter().find(|d| d.severity == Severity::Error) {
        return Err(CaseError::Invalid(d.message.clone()));
    }
    Ok(case)
}

pub fn save_case(case: &NetworkCase, path: &Path) -> Result<(), CaseError> {
    let text = toml::to_string_pretty(case).map_err(|e| CaseError::Invalid(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Checks every type invariant plus connectivity; adequacy shortfall is a
/// warning, everything else an error. Returns an empty list for a valid case.
pub fn validate(case: &NetworkCase) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let nb = case.buses.len();

    for (i, bus) in case.buses.iter().enumerate() {
        if bus.id != i {
            diags.push(Diagnostic::error(format!(
                "bus ids must be dense 0..{}: position {} has id {}",
                nb - 1,
                i,
                bus.id
            )));
        }
        if bus.demand_base < 0.0 {
            diags.push(Diagnostic::error(format!(
                "bus {}: negative demand_base {}",
                bus.id, bus.demand_base
            )));
        }
    }
    if case.slack_bus >= nb {
        diags.push(Diagnostic::error(format!(
            "slack_bus {} does not exist",
            case.slack_bus
        )));
    }

    for (l, line) in case.lines.iter().enumerate() {
        let label = line
            .name
            .clone()
            .unwrap_or_else(|| format!("#{l} ({}-{})", line.from_bus, line.to_bus));
        if line.from_bus >= nb || line.to_bus >= nb {
            diags.push(Diagnostic::error(format!(
                "line {label}: references nonexistent bus {}",
                if line.from_bus >= nb { line.from_bus } else { line.to_bus }
            )));
            continue;
        }
        if line.from_bus == line.to_bus {
            diags.push(Diagnostic::error(format!("line {label}: from_bus equals to_bus")));
        }
        if line.susceptance <= 0.0 {
            diags.push(Diagnostic::error(format!(
                "line {label}: susceptance must be positive, got {}",
                line.susceptance
            )));
        }
        if line.base_capacity < 0.0 {
            diags.push(Diagnostic::error(format!(
                "line {label}: negative base_capacity {}",
                line.base_capacity
            )));
        }
        if line.expansion_cost < 0.0 {
            diags.push(Diagnostic::error(format!(
                "line {label}: negative expansion_cost {}",
                line.expansion_cost
            )));
        }
    }

    for (g, gen) in case.generators.iter().enumerate() {
        if gen.bus >= nb {
            diags.push(Diagnostic::error(format!(
                "generator {g}: references nonexistent bus {}",
                gen.bus
            )));
        }
        if gen.p_max <= 0.0 {
            diags.push(Diagnostic::error(format!("generator {g}: p_max must be positive")));
        }
        if gen.marginal_cost <= 0.0 {
            diags.push(Diagnostic::error(format!(
                "generator {g}: marginal_cost must be positive"
            )));
        }
        if gen.alpha <= 0.0 {
            diags.push(Diagnostic::error(format!("generator {g}: alpha must be positive")));
        }
    }

    if case.profile.shape.is_empty() {
        diags.push(Diagnostic::error("demand profile is empty".to_string()));
    }
    for (t, &s) in case.profile.shape.iter().enumerate() {
        if s <= 0.0 {
            diags.push(Diagnostic::error(format!(
                "profile shape[{t}] must be positive, got {s}"
            )));
        }
    }

    if nb > 0 && !is_connected(case) {
        diags.push(Diagnostic::error("network not connected".to_string()));
    }

    let peak_shape = case.profile.shape.iter().cloned().fold(0.0f64, f64::max);
    let peak_demand: f64 =
        case.buses.iter().map(|b| b.demand_base).sum::<f64>() * peak_shape;
    let capacity: f64 = case.generators.iter().map(|g| g.p_max).sum();
    if capacity < peak_demand {
        diags.push(Diagnostic::warning(format!(
            "adequacy: total generation capacity {capacity:.1} MW below peak demand {peak_demand:.1} MW"
        )));
    }

    diags
}

fn is_connected(case: &NetworkCase) -> bool {
    let nb = case.buses.len();
    if nb == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); nb];
    for line in &case.lines {
        if line.from_bus < nb && line.to_bus < nb {
            adj[line.from_bus].push(line.to_bus);
            adj[line.to_bus].push(line.from_bus);
        }
    }
    let mut seen = vec![false; nb];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(n) = stack.pop() {
        for &m in &adj[n] {
            if !seen[m] {
                seen[m] = true;
                stack.push(m);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

impl NetworkCase {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    /// Indices (into `lines`) of the candidate lines, in file order.
    pub fn candidate_lines(&self) -> Vec<usize> {
        self.lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.candidate)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices (into `generators`) of the strategic agents, in file order.
    pub fn strategic_generators(&self) -> Vec<usize> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.strategic)
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-bus demand at time step `t`.
    pub fn demand_at(&self, t: usize) -> Vec<f64> {
        let s = self.profile.shape[t];
        self.buses.iter().map(|b| b.demand_base * s).collect()
    }

    pub fn total_demand_at(&self, t: usize) -> f64 {
        self.demand_at(t).iter().sum()
    }

    pub fn peak_total_demand(&self) -> f64 {
        let base: f64 = self.buses.iter().map(|b| b.demand_base).sum();
        base * self.profile.shape.iter().cloned().fold(0.0f64, f64::max)
    }

    /// Effective capacity of every line under a per-candidate design vector.
    /// Non-candidate lines keep their base capacity.
    pub fn effective_capacities(
        &self,
        design: &[f64],
        mode: DesignMode,
        fixed_increment: f64,
    ) -> Result<Vec<f64>, CaseError> {
        let cands = self.candidate_lines();
        if design.len() != cands.len() {
            return Err(CaseError::Invalid(format!(
                "design has {} entries but the case has {} candidate lines",
                design.len(),
                cands.len()
            )));
        }
        let mut caps: Vec<f64> = self.lines.iter().map(|l| l.base_capacity).collect();
        for (k, &li) in cands.iter().enumerate() {
            caps[li] = effective_capacity(&self.lines[li], design[k], mode, fixed_increment)?;
        }
        Ok(caps)
    }
}

/// Effective line capacity `base + z * delta` under one sampled design value.
///
/// Continuous mode fixes z = 1 and reads the value as the increment delta-L;
/// discrete mode reads the value as z in {0, 1} with a fixed increment.
pub fn effective_capacity(
    line: &Line,
    design: f64,
    mode: DesignMode,
    fixed_increment: f64,
) -> Result<f64, CaseError> {
    match mode {
        DesignMode::Continuous => {
            if design < 0.0 {
                return Err(CaseError::Invalid(format!(
                    "continuous design value must be nonnegative, got {design}"
                )));
            }
            Ok(line.base_capacity + design)
        }
        DesignMode::Discrete => {
            let z = if design > 0.5 { 1.0 } else { 0.0 };
            Ok(line.base_capacity + z * fixed_increment)
        }
    }
}
