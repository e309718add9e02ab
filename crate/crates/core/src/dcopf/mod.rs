//! Economic dispatch and DC optimal power flow.

mod dc;
mod ed;
pub mod qp;

use serde::{Deserialize, Serialize};

pub use dc::{dc_flow, dc_power_flow, solve_dcopf, ConstraintId};
pub use ed::solve_economic_dispatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchKind {
    ED,
    DC,
    AC,
}

/// Result record shared by the ED, DC OPF and AC OPF solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub kind: DispatchKind,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub v_mag: Vec<f64>,
    /// Bus angles in radians, slack at zero. Absent for ED.
    pub theta: Option<Vec<f64>>,
    /// Active flow per branch, from-end. Absent for ED.
    pub branch_flows: Option<Vec<f64>>,
    pub objective: f64,
    pub total_gen: f64,
    pub total_load: f64,
}

impl DispatchSolution {
    /// `Σ pg − Σ p_load`.
    pub fn balance_gap(&self) -> f64 {
        self.total_gen - self.total_load
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpDiagnostics {
    pub kkt_stationarity_norm: f64,
    pub primal_feasibility_norm: f64,
    pub complementarity_norm: f64,
    pub iterations: usize,
    /// Constraints binding at the solution, e.g. `pg_max[2]`, `flow_min[7]`.
    pub active_set: Vec<String>,
    /// System incremental cost, reported by economic dispatch only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}
