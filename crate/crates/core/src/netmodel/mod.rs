//! Network data model.
//!
//! Everything is stored in per-unit on the case MVA base. Buses are indexed
//! internally by their position (0-based, contiguous); the original MATPOWER
//! bus number is kept in [`Bus::id`] for reporting.

mod admittance;
mod parse;
mod validate;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admittance::{
    build_admittance, build_dc_susceptance, series_admittance, AdmittanceMatrix,
};
pub use parse::parse_case;
pub use validate::{validate_assumptions, Assumption, AssumptionCheck};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number from the case file.
    pub id: usize,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    /// Shunt conductance at V = 1 p.u.
    pub g_shunt: f64,
    /// Shunt susceptance at V = 1 p.u.
    pub b_shunt: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Voltage magnitude setpoint, taken from the first generator at the bus
    /// when there is one.
    pub v_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Internal index of the from bus.
    pub from: usize,
    /// Internal index of the to bus.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance.
    pub b_shunt: f64,
    /// Off-nominal tap ratio on the from side; 1.0 when absent.
    pub tap: f64,
    pub flow_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Internal index of the host bus.
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Scheduled active output from the case file.
    pub p_set: f64,
    pub v_set: f64,
    /// Cost is `cost_a * pg^2 + cost_b * pg + cost_c` with `pg` in p.u.
    pub cost_a: f64,
    pub cost_b: f64,
    pub cost_c: f64,
}

impl Generator {
    pub fn cost(&self, pg: f64) -> f64 {
        self.cost_a * pg * pg + self.cost_b * pg + self.cost_c
    }

    pub fn marginal_cost(&self, pg: f64) -> f64 {
        2.0 * self.cost_a * pg + self.cost_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("missing table `mpc.{0}`")]
    MissingTable(&'static str),

    #[error("{context}: {violation}")]
    Invalid { context: String, violation: Violation },

    #[error("{0}")]
    Unsupported(String),

    #[error("load factor vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// The data invariant a case violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Series resistance and reactance must be strictly positive.
    NonPositiveImpedance,
    SelfLoop,
    NonPositiveFlowLimit,
    VoltageBounds,
    GeneratorBounds,
    NonConvexCost,
    SlackCount,
    NoBranches,
    UnknownBus,
    Disconnected,
    NegativeFactor,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            Violation::NonPositiveImpedance => {
                "series resistance and reactance must be positive (positive line impedance)"
            }
            Violation::SelfLoop => "branch connects a bus to itself",
            Violation::NonPositiveFlowLimit => "flow limit must be positive",
            Violation::VoltageBounds => "voltage bounds must satisfy 0 < v_min <= v_max",
            Violation::GeneratorBounds => "generator bounds must satisfy min <= max",
            Violation::NonConvexCost => "quadratic cost coefficient must be nonnegative",
            Violation::SlackCount => "exactly one slack bus is required",
            Violation::NoBranches => "at least one branch is required (no line can carry flow)",
            Violation::UnknownBus => "reference to a bus that does not exist",
            Violation::Disconnected => "bus graph is not connected",
            Violation::NegativeFactor => "load factors must be nonnegative",
        };
        f.write_str(text)
    }
}

fn invalid(context: impl Into<String>, violation: Violation) -> CaseError {
    CaseError::Invalid { context: context.into(), violation }
}

/// Reads and parses a MATPOWER case file.
pub fn read_case(path: &Path) -> crate::Result<NetworkCase> {
    let text = std::fs::read_to_string(path)?;
    let mut case = parse_case(&text)?;
    if case.name.is_empty() {
        if let Some(stem) = path.file_stem() {
            case.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(case)
}

impl NetworkCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Internal index of the slack bus. Panics on an unvalidated case without one.
    pub fn slack_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("case has no slack bus")
    }

    pub fn total_p_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    pub fn total_q_load(&self) -> f64 {
        self.buses.iter().map(|b| b.q_load).sum()
    }

    pub fn total_p_max(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    pub fn total_p_min(&self) -> f64 {
        self.generators.iter().map(|g| g.p_min).sum()
    }

    /// Generators attached to each bus.
    pub fn generators_by_bus(&self) -> Vec<Vec<usize>> {
        let mut map = vec![Vec::new(); self.buses.len()];
        for (k, g) in self.generators.iter().enumerate() {
            map[g.bus].push(k);
        }
        map
    }

    /// Internal index of the bus with the given external id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_ids(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

    /// Total generation cost of a dispatch.
    pub fn cost(&self, pg: &[f64]) -> f64 {
        self.generators.iter().zip(pg).map(|(g, &p)| g.cost(p)).sum()
    }

    /// Per-bus sum of a per-generator quantity.
    pub fn bus_sum(&self, per_gen: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.buses.len()];
        for (g, v) in self.generators.iter().zip(per_gen) {
            out[g.bus] += v;
        }
        out
    }

    /// Checks every structural invariant of the data model.
    pub fn validate(&self) -> Result<(), CaseError> {
        let n = self.buses.len();
        let slack_count = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack_count != 1 {
            return Err(invalid(format!("{slack_count} slack buses"), Violation::SlackCount));
        }
        for bus in &self.buses {
            if !(bus.v_min > 0.0 && bus.v_min <= bus.v_max) {
                return Err(invalid(format!("bus {}", bus.id), Violation::VoltageBounds));
            }
        }
        if self.branches.is_empty() {
            return Err(invalid("case", Violation::NoBranches));
        }
        for (k, br) in self.branches.iter().enumerate() {
            let context = format!("branch {}", k + 1);
            if br.from >= n || br.to >= n {
                return Err(invalid(context, Violation::UnknownBus));
            }
            if br.from == br.to {
                return Err(invalid(context, Violation::SelfLoop));
            }
            if !(br.r > 0.0 && br.x > 0.0) {
                return Err(invalid(context, Violation::NonPositiveImpedance));
            }
            if let Some(limit) = br.flow_limit {
                if limit.is_nan() || limit <= 0.0 {
                    return Err(invalid(context, Violation::NonPositiveFlowLimit));
                }
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            let context = format!("generator {}", k + 1);
            if g.bus >= n {
                return Err(invalid(context, Violation::UnknownBus));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(invalid(context, Violation::GeneratorBounds));
            }
            if g.cost_a < 0.0 {
                return Err(invalid(context, Violation::NonConvexCost));
            }
        }
        if !self.is_connected() {
            return Err(invalid("case", Violation::Disconnected));
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let n = self.buses.len();
        if n == 0 {
            return false;
        }
        let mut adjacency = vec![Vec::new(); n];
        for br in &self.branches {
            if br.from < n && br.to < n {
                adjacency[br.from].push(br.to);
                adjacency[br.to].push(br.from);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &m in &adjacency[i] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Returns a copy with per-bus active and reactive loads multiplied by
    /// `factors`.
    pub fn scale_loads(&self, factors: &[f64]) -> Result<NetworkCase, CaseError> {
        if factors.len() != self.buses.len() {
            return Err(CaseError::LengthMismatch {
                expected: self.buses.len(),
                got: factors.len(),
            });
        }
        if let Some(pos) = factors.iter().position(|f| f.is_nan() || *f < 0.0) {
            return Err(invalid(format!("factor {pos}"), Violation::NegativeFactor));
        }
        let mut scaled = self.clone();
        for (bus, f) in scaled.buses.iter_mut().zip(factors) {
            bus.p_load *= f;
            bus.q_load *= f;
        }
        Ok(scaled)
    }
}

/// Free-function form of [`NetworkCase::scale_loads`].
pub fn scale_loads(case: &NetworkCase, factors: &[f64]) -> Result<NetworkCase, CaseError> {
    case.scale_loads(factors)
}
