//! AC power flow and AC balance residuals.

mod derivatives;
mod newton;
#[cfg(test)]
pub(crate) mod oracle;

use serde::{Deserialize, Serialize};

use crate::netmodel::{AdmittanceMatrix, NetworkCase};
use crate::{Error, Result};

pub use derivatives::{injection_jacobian, injections, weighted_injection_hessian, InjectionJacobian};
pub use newton::{solve_newton_pf, PfOptions, PfSetpoints};

/// Per-bus AC balance mismatch, `P_i(V, θ) − (Σ pg − p_load)` and the
/// reactive analogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector {
    pub bus_ids: Vec<usize>,
    pub p_residual: Vec<f64>,
    pub q_residual: Vec<f64>,
}

impl ResidualVector {
    pub fn max_abs_p(&self) -> f64 {
        self.p_residual.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    pub fn max_abs_q(&self) -> f64 {
        self.q_residual.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Infinity norm over both parts.
    pub fn max_abs(&self) -> f64 {
        self.max_abs_p().max(self.max_abs_q())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub bus_ids: Vec<usize>,
    pub v_mag: Vec<f64>,
    pub theta: Vec<f64>,
    /// Final per-generator active output, slack generator included.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// Active generation at the slack bus.
    pub slack_p: f64,
    /// Reactive generation at the slack bus.
    pub slack_q: f64,
    /// `Σ pg − Σ p_load`.
    pub losses_p: f64,
    pub converged: bool,
    /// Newton iterations over all outer Q-limit passes.
    pub iterations: usize,
    pub final_residual_norm: f64,
    /// Mismatch infinity norm before each Newton step and at the end.
    pub residual_history: Vec<f64>,
    /// External ids of PV buses that finished at a reactive limit.
    pub q_limited_buses: Vec<usize>,
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::InvalidArgument(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}

/// AC balance mismatch at an arbitrary point.
pub fn ac_residual(
    case: &NetworkCase,
    adm: &AdmittanceMatrix,
    v_mag: &[f64],
    theta: &[f64],
    pg: &[f64],
    qg: &[f64],
) -> Result<ResidualVector> {
    let n = case.n_buses();
    check_len("v_mag", v_mag.len(), n)?;
    check_len("theta", theta.len(), n)?;
    check_len("pg", pg.len(), case.n_generators())?;
    check_len("qg", qg.len(), case.n_generators())?;
    let (p, q) = injections(adm, v_mag, theta);
    let pgen = case.bus_sum(pg);
    let qgen = case.bus_sum(qg);
    Ok(ResidualVector {
        bus_ids: case.bus_ids(),
        p_residual: (0..n).map(|i| p[i] - (pgen[i] - case.buses[i].p_load)).collect(),
        q_residual: (0..n).map(|i| q[i] - (qgen[i] - case.buses[i].q_load)).collect(),
    })
}

/// Reactive completion of a DC point.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum QgChoice {
    /// At generator buses, the reactive output that zeroes the Q mismatch,
    /// clipped to the aggregate bounds and split in proportion to range.
    #[default]
    Charitable,
    Zero,
    Given(Vec<f64>),
}

/// Splits a bus total among its generators in proportion to reactive range.
pub(crate) fn split_reactive(case: &NetworkCase, gens: &[usize], total: f64, qg: &mut [f64]) {
    let lo: f64 = gens.iter().map(|&k| case.generators[k].q_min).sum();
    let range: f64 = gens
        .iter()
        .map(|&k| case.generators[k].q_max - case.generators[k].q_min)
        .sum();
    for &k in gens {
        let g = &case.generators[k];
        qg[k] = if range > 0.0 {
            g.q_min + (total - lo) * (g.q_max - g.q_min) / range
        } else {
            total / gens.len() as f64
        };
    }
}

/// AC residual at `|v| ≡ 1` and the given angles and active dispatch.
pub fn evaluate_dc_point(
    case: &NetworkCase,
    adm: &AdmittanceMatrix,
    theta: &[f64],
    pg: &[f64],
    qg_choice: &QgChoice,
) -> Result<ResidualVector> {
    let n = case.n_buses();
    let ones = vec![1.0; n];
    let qg = match qg_choice {
        QgChoice::Zero => vec![0.0; case.n_generators()],
        QgChoice::Given(q) => q.clone(),
        QgChoice::Charitable => {
            check_len("theta", theta.len(), n)?;
            let (_, q) = injections(adm, &ones, theta);
            let mut qg = vec![0.0; case.n_generators()];
            for (i, gens) in case.generators_by_bus().iter().enumerate() {
                if gens.is_empty() {
                    continue;
                }
                let lo: f64 = gens.iter().map(|&k| case.generators[k].q_min).sum();
                let hi: f64 = gens.iter().map(|&k| case.generators[k].q_max).sum();
                let need = (q[i] + case.buses[i].q_load).clamp(lo, hi);
                split_reactive(case, gens, need, &mut qg);
            }
            qg
        }
    };
    ac_residual(case, adm, &ones, theta, pg, &qg)
}

/// Active loss dissipated in series resistances and shunt conductances,
/// `Σ g_s |V_f / t − V_t|² + Σ g_sh V²`, computed branch by branch.
pub fn branch_losses(case: &NetworkCase, v_mag: &[f64], theta: &[f64]) -> f64 {
    let series: f64 = case
        .branches
        .iter()
        .map(|br| {
            let (g, _) = crate::netmodel::series_admittance(br);
            let (vf, vt) = (v_mag[br.from] / br.tap, v_mag[br.to]);
            let d = theta[br.from] - theta[br.to];
            g * (vf * vf + vt * vt - 2.0 * vf * vt * d.cos())
        })
        .sum();
    let shunt: f64 = case
        .buses
        .iter()
        .zip(v_mag)
        .map(|(b, v)| b.g_shunt * v * v)
        .sum();
    series + shunt
}

/// `Σ pg − Σ p_load` of a converged power flow.
pub fn total_losses(pf: &PfSolution, case: &NetworkCase) -> Result<f64> {
    if !pf.converged {
        return Err(Error::NotConverged {
            iterations: pf.iterations,
            residual: pf.final_residual_norm,
        });
    }
    Ok(pf.pg.iter().sum::<f64>() - case.total_p_load())
}
