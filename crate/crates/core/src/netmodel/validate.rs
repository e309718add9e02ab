use serde::{Deserialize, Serialize};

use super::{build_admittance, NetworkCase};

/// Preconditions under which a lossless DC dispatch is provably not AC feasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// Loads are constant (P, Q) injections.
    ConstantPowerLoads,
    /// At least one line exists to carry (and lose) power.
    LineFlowPresent,
    /// The bus admittance matrix is symmetric.
    SymmetricAdmittance,
    /// Every branch has positive series resistance and reactance.
    PositiveImpedance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    pub detail: String,
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Reports each precondition as pass/fail. Never errors: failures are data.
pub fn validate_assumptions(case: &NetworkCase) -> Vec<AssumptionCheck> {
    let mut out = Vec::with_capacity(4);

    // The data model has no voltage-dependent load representation.
    out.push(AssumptionCheck {
        assumption: Assumption::ConstantPowerLoads,
        passed: true,
        detail: "loads are stored as fixed (P, Q) demands".into(),
    });

    out.push(AssumptionCheck {
        assumption: Assumption::LineFlowPresent,
        passed: !case.branches.is_empty(),
        detail: format!("{} branches", case.branches.len()),
    });

    let asymmetry = if case.buses.is_empty() {
        0.0
    } else {
        build_admittance(case).max_asymmetry()
    };
    out.push(AssumptionCheck {
        assumption: Assumption::SymmetricAdmittance,
        passed: asymmetry < SYMMETRY_TOL,
        detail: format!("max |Y_im - Y_mi| = {asymmetry:.3e}"),
    });

    let bad: Vec<usize> = case
        .branches
        .iter()
        .enumerate()
        .filter(|(_, br)| !(br.r > 0.0 && br.x > 0.0))
        .map(|(k, _)| k + 1)
        .collect();
    out.push(AssumptionCheck {
        assumption: Assumption::PositiveImpedance,
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            "all branches have r > 0 and x > 0".into()
        } else {
            format!("branches with r <= 0 or x <= 0: {bad:?}")
        },
    });
    out
}
