//! Checks that a lossless dispatch cannot satisfy the AC balance equations:
//! conservation identities, flat-voltage residuals of loss-adjusted DC points,
//! sign certificates and the randomized generation-gap experiment.

mod certificate;
mod experiment;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::acopf::{solve_acopf, AcOpfOptions};
use crate::acpf::{evaluate_dc_point, injections, solve_newton_pf, PfOptions, PfSetpoints, QgChoice, ResidualVector};
use crate::dcopf::{dc_power_flow, solve_dcopf, solve_economic_dispatch, DispatchKind, DispatchSolution};
use crate::netmodel::{build_admittance, build_dc_susceptance, validate_assumptions, AssumptionCheck, NetworkCase};
use crate::{Error, Result};

pub use certificate::{sign_certificate, small_angle_certificate, CaseTag, CertificateEntry};
pub use experiment::{
    generation_gap_experiment, generation_gap_experiment_with, load_factors, spearman, ExperimentConfig,
    GapExperimentRow,
};

/// Mismatch (p.u.) above which a point is declared AC infeasible.
pub const RESIDUAL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    AcInfeasible,
    Inconclusive,
}

/// How the DC dispatch is adjusted to cover AC losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LossMode {
    /// The slack generator picks up the losses of a power flow run at the
    /// DC dispatch.
    #[default]
    SlackAbsorbs,
    /// Every load is inflated by the same factor so the loads grow by the
    /// estimated losses, and the DC OPF is re-solved.
    FictitiousDemand,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "slackabsorbs" | "slack" => Ok(LossMode::SlackAbsorbs),
            "fictitiousdemand" | "fictitious" => Ok(LossMode::FictitiousDemand),
            _ => Err(Error::InvalidArgument(format!("unknown loss mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossAdjustment {
    pub mode: LossMode,
    /// Active losses of the power flow at the original DC dispatch.
    pub estimated_losses: f64,
    pub adjusted_pg: Vec<f64>,
    pub total_generation: f64,
    /// Original load plus estimated losses.
    pub total_ac_demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `Σ pg − Σ p_load` of the lossless dispatch.
    pub dc_balance_gap: f64,
    /// `Σ pg − Σ p_load` of the AC solution, when one was obtained.
    pub ac_loss_gap: Option<f64>,
    /// Mismatch at `|v| ≡ 1` and the DC angles. The active part equals the
    /// AC injection minus the DC injection at every bus.
    pub dc_point_residual: Option<ResidualVector>,
    pub certificate: Vec<CertificateEntry>,
    pub verdict: Verdict,
    /// Largest absolute active mismatch used for the verdict.
    pub max_residual: f64,
    pub loss_adjustment: Option<LossAdjustment>,
    pub assumptions: Vec<AssumptionCheck>,
}

fn verdict(max_residual: f64, certificate: &[CertificateEntry], assumptions: &[AssumptionCheck]) -> Verdict {
    let separated = certificate.iter().any(|e| e.strictly_separated() && e.margin > 0.0);
    if max_residual > RESIDUAL_THRESHOLD && separated && assumptions.iter().all(|a| a.passed) {
        Verdict::AcInfeasible
    } else {
        Verdict::Inconclusive
    }
}

/// `Σ_i Σ_m M_im (θ_i − θ_m)` over all ordered pairs.
pub fn angle_double_sum(matrix: &DMatrix<f64>, theta: &[f64]) -> Result<f64> {
    if matrix.nrows() != theta.len() || matrix.ncols() != theta.len() {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{} but theta has length {}",
            matrix.nrows(),
            matrix.ncols(),
            theta.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..theta.len() {
        for m in 0..theta.len() {
            total += matrix[(i, m)] * (theta[i] - theta[m]);
        }
    }
    Ok(total)
}

/// Absolute double sum of the DC susceptance matrix against the solution's
/// angles. Zero up to rounding whenever the matrix is symmetric.
pub fn dc_balance_identity(dc: &DispatchSolution, case: &NetworkCase) -> Result<f64> {
    let theta = dc
        .theta
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("dispatch has no bus angles".into()))?;
    Ok(angle_double_sum(&build_dc_susceptance(case), theta)?.abs())
}

/// `P_i(|v| ≡ 1, θ) − (B θ)_i`: AC minus DC injection at every bus.
pub fn flat_voltage_residual(case: &NetworkCase, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != case.n_buses() {
        return Err(Error::InvalidArgument(format!(
            "theta has length {}, expected {}",
            theta.len(),
            case.n_buses()
        )));
    }
    let (p, _) = injections(&build_admittance(case), &vec![1.0; case.n_buses()], theta);
    let lap = build_dc_susceptance(case);
    Ok((0..case.n_buses())
        .map(|i| p[i] - (0..case.n_buses()).map(|m| lap[(i, m)] * theta[m]).sum::<f64>())
        .collect())
}

/// Runs a power flow with every generator except the slack pinned to `pg`.
/// Returns the slack's extra output, which is the irreducible mismatch.
fn pinned_losses(case: &NetworkCase, pg: &[f64]) -> Result<f64> {
    let pf = solve_newton_pf(case, &PfSetpoints::from_dispatch(case, pg.to_vec()), &PfOptions::default())?;
    if !pf.converged {
        return Err(Error::NotConverged { iterations: pf.iterations, residual: pf.final_residual_norm });
    }
    Ok(pf.pg.iter().sum::<f64>() - pg.iter().sum::<f64>())
}

/// Economic dispatch against the AC network.
///
/// The dispatch balances load exactly, so a power flow with all outputs held
/// at the ED values must leave the network losses unserved. That mismatch is
/// the reported residual; the certificate uses the DC power flow angles of
/// the ED dispatch.
pub fn check_ed_infeasibility(case: &NetworkCase, ac_options: &AcOpfOptions) -> Result<FeasibilityReport> {
    let (ed, _) = solve_economic_dispatch(case)?;
    let ac = solve_acopf(case, ac_options)?;
    let assumptions = validate_assumptions(case);
    let mismatch = pinned_losses(case, &ed.pg)?;
    let theta = dc_power_flow(case, &ed.pg)?;
    let certificate = sign_certificate(case, &theta)?;
    Ok(FeasibilityReport {
        dc_balance_gap: ed.balance_gap(),
        ac_loss_gap: ac.converged.then(|| ac.solution.balance_gap()),
        dc_point_residual: None,
        verdict: verdict(mismatch.abs(), &certificate, &assumptions),
        max_residual: mismatch.abs(),
        certificate,
        loss_adjustment: None,
        assumptions,
    })
}

/// Adjusts a DC OPF dispatch for AC losses and evaluates the AC balance at
/// flat voltage magnitudes and the DC angles.
pub fn loss_adjusted_residual(case: &NetworkCase, dc: &DispatchSolution, mode: LossMode) -> Result<FeasibilityReport> {
    if dc.kind != DispatchKind::DC {
        return Err(Error::InvalidArgument("loss adjustment needs a DC OPF solution".into()));
    }
    let theta = dc
        .theta
        .clone()
        .ok_or_else(|| Error::InvalidArgument("dispatch has no bus angles".into()))?;
    let losses = pinned_losses(case, &dc.pg)?;
    let load = case.total_p_load();

    // the case, dispatch and angles the residual is evaluated at
    let (eval_case, pg, theta, adjusted_pg) = match mode {
        LossMode::SlackAbsorbs => {
            let mut adjusted = dc.pg.clone();
            let slack = case.slack_bus();
            let k = case
                .generators
                .iter()
                .position(|g| g.bus == slack)
                .ok_or_else(|| Error::InvalidArgument("no generator at the slack bus".into()))?;
            adjusted[k] += losses;
            (case.clone(), dc.pg.clone(), theta, adjusted)
        }
        LossMode::FictitiousDemand => {
            let factor = if load > 0.0 { 1.0 + losses / load } else { 1.0 };
            let mut inflated = case.clone();
            for b in &mut inflated.buses {
                b.p_load *= factor;
            }
            let (re, _) = solve_dcopf(&inflated)?;
            let theta = re.theta.clone().expect("DC OPF returns angles");
            (inflated, re.pg.clone(), theta, re.pg)
        }
    };

    let adm = build_admittance(&eval_case);
    let residual = evaluate_dc_point(&eval_case, &adm, &theta, &pg, &QgChoice::Charitable)?;
    let max_residual = residual.max_abs_p();
    let certificate = sign_certificate(case, &theta)?;
    let assumptions = validate_assumptions(case);
    Ok(FeasibilityReport {
        dc_balance_gap: dc.balance_gap(),
        ac_loss_gap: Some(losses),
        dc_point_residual: Some(residual),
        verdict: verdict(max_residual, &certificate, &assumptions),
        max_residual,
        certificate,
        loss_adjustment: Some(LossAdjustment {
            mode,
            estimated_losses: losses,
            total_generation: adjusted_pg.iter().sum(),
            total_ac_demand: load + losses,
            adjusted_pg,
        }),
        assumptions,
    })
}

/// Full check of a case: DC OPF, loss-adjusted flat-voltage residual and the
/// AC OPF generation gap.
pub fn check_dc_infeasibility(
    case: &NetworkCase,
    mode: LossMode,
    ac_options: &AcOpfOptions,
) -> Result<FeasibilityReport> {
    let (dc, _) = solve_dcopf(case)?;
    let mut report = loss_adjusted_residual(case, &dc, mode)?;
    let ac = solve_acopf(case, ac_options)?;
    report.ac_loss_gap = ac.converged.then(|| ac.solution.balance_gap());
    Ok(report)
}
