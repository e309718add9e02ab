//! AC optimal power flow by a primal-dual interior-point method.
//!
//! Polar formulation without line-flow limits: minimize generation cost over
//! `(θ, |V|, pg, qg)` subject to AC active and reactive balance at every bus
//! and box bounds on voltage magnitude and generator output.

mod ipm;
mod problem;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::acpf::branch_losses;
use crate::dcopf::{DispatchKind, DispatchSolution};
use crate::netmodel::{build_admittance, series_admittance, NetworkCase};
use crate::{Error, Result};

pub use ipm::Iterate;
pub use problem::AcOpfProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcOpfOptions {
    pub tol_kkt: f64,
    pub tol_feas: f64,
    pub max_iterations: usize,
    pub barrier_initial: f64,
    pub barrier_shrink: f64,
}

impl Default for AcOpfOptions {
    fn default() -> Self {
        AcOpfOptions {
            tol_kkt: 1e-6,
            tol_feas: 1e-8,
            max_iterations: 100,
            barrier_initial: 0.1,
            barrier_shrink: 0.2,
        }
    }
}

impl AcOpfOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_kkt, self.tol_feas, self.barrier_initial, self.barrier_shrink]
            .iter()
            .all(|v| *v > 0.0);
        if !positive || self.max_iterations == 0 || self.barrier_shrink >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "AC OPF options must be positive with barrier_shrink < 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcOpfStatus {
    Converged,
    MaxIterations,
    /// Aggregate generator capacity cannot cover the load.
    InfeasibleCapacity,
    /// Non-finite iterate or no usable Newton step.
    Numerical,
}

/// One line of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub barrier: f64,
    pub kkt_norm: f64,
    pub feas_norm: f64,
    /// Unscaled generation cost.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcOpfResult {
    pub solution: DispatchSolution,
    pub kkt_norm: f64,
    pub feasibility_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub status: AcOpfStatus,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// Active power entering each branch at its from end.
pub fn ac_branch_flows(case: &NetworkCase, v_mag: &[f64], theta: &[f64]) -> Vec<f64> {
    case.branches
        .iter()
        .map(|br| {
            let (g, b) = series_admittance(br);
            let (vf, vt) = (v_mag[br.from], v_mag[br.to]);
            let d = theta[br.from] - theta[br.to];
            g * vf * vf / (br.tap * br.tap) - vf * vt / br.tap * (g * d.cos() + b * d.sin())
        })
        .collect()
}

fn dispatch_from(problem: &AcOpfProblem, x: &DVector<f64>) -> DispatchSolution {
    let case = problem.case();
    let (v, theta) = problem.voltages(x);
    let pg = problem.pg(x);
    DispatchSolution {
        kind: DispatchKind::AC,
        objective: problem.cost(x),
        qg: problem.qg(x),
        branch_flows: Some(ac_branch_flows(case, &v, &theta)),
        total_gen: pg.iter().sum(),
        total_load: case.total_p_load(),
        v_mag: v,
        theta: Some(theta),
        pg,
    }
}

/// Solves the AC OPF, calling `observer` once per iteration.
pub fn solve_acopf_observed(
    case: &NetworkCase,
    options: &AcOpfOptions,
    observer: &mut dyn FnMut(&Iterate),
) -> Result<AcOpfResult> {
    options.validate()?;
    if case.generators.is_empty() {
        return Err(Error::InvalidArgument("case has no generators".into()));
    }
    let problem = AcOpfProblem::new(case);
    if case.total_p_max() < case.total_p_load() {
        let x = problem.initial_point();
        let feas = problem.constraints(&x).amax();
        return Ok(AcOpfResult {
            solution: dispatch_from(&problem, &x),
            kkt_norm: f64::INFINITY,
            feasibility_norm: feas,
            converged: false,
            iterations: 0,
            status: AcOpfStatus::InfeasibleCapacity,
            trace: Vec::new(),
        });
    }
    let out = ipm::run(&problem, options, observer);
    Ok(AcOpfResult {
        solution: dispatch_from(&problem, &out.x),
        kkt_norm: out.kkt_norm,
        feasibility_norm: out.feasibility_norm,
        converged: out.status == AcOpfStatus::Converged,
        iterations: out.iterations,
        status: out.status,
        trace: out.trace,
    })
}

pub fn solve_acopf(case: &NetworkCase, options: &AcOpfOptions) -> Result<AcOpfResult> {
    solve_acopf_observed(case, options, &mut |_| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcOpfVerification {
    pub checks: Vec<VerificationCheck>,
    /// Largest AC balance mismatch over both parts.
    pub max_residual: f64,
    /// `Σ pg − Σ p_load`.
    pub generation_gap: f64,
    /// Loss recomputed branch by branch from the returned voltages.
    pub branch_losses: f64,
    pub passed: bool,
}

/// Recomputes balance, bound and loss checks on a result with complex
/// arithmetic `S = V · conj(Y V)`, independently of the solver's polar
/// evaluators.
pub fn verify_acopf(result: &AcOpfResult, case: &NetworkCase) -> Result<AcOpfVerification> {
    let sol = &result.solution;
    let theta = sol
        .theta
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("AC result carries no angles".into()))?;
    let n = case.n_buses();
    let adm = build_admittance(case);
    let y = DMatrix::from_fn(n, n, |i, m| Complex::new(adm.g[(i, m)], adm.b[(i, m)]));
    let v = DVector::from_fn(n, |i, _| Complex::from_polar(sol.v_mag[i], theta[i]));
    let current = &y * &v;
    let pgen = case.bus_sum(&sol.pg);
    let qgen = case.bus_sum(&sol.qg);
    let mut max_p = 0.0f64;
    let mut max_q = 0.0f64;
    for i in 0..n {
        let s = v[i] * current[i].conj();
        max_p = max_p.max((s.re - pgen[i] + case.buses[i].p_load).abs());
        max_q = max_q.max((s.im - qgen[i] + case.buses[i].q_load).abs());
    }

    let mut bound = 0.0f64;
    for (b, vm) in case.buses.iter().zip(&sol.v_mag) {
        bound = bound.max(b.v_min - vm).max(vm - b.v_max);
    }
    for (g, (p, q)) in case.generators.iter().zip(sol.pg.iter().zip(&sol.qg)) {
        bound = bound
            .max(g.p_min - p)
            .max(p - g.p_max)
            .max(g.q_min - q)
            .max(q - g.q_max);
    }
    let gap = sol.total_gen - case.total_p_load();
    let losses = branch_losses(case, &sol.v_mag, theta);

    let check = |name: &str, value: f64, tolerance: f64| VerificationCheck {
        name: name.into(),
        value,
        tolerance,
        passed: value <= tolerance,
    };
    let checks = vec![
        check("active_balance", max_p, 1e-8),
        check("reactive_balance", max_q, 1e-8),
        check("bounds", bound.max(0.0), 1e-8),
        check("loss_consistency", (gap - losses).abs(), 1e-7),
    ];
    Ok(AcOpfVerification {
        passed: checks.iter().all(|c| c.passed),
        checks,
        max_residual: max_p.max(max_q),
        generation_gap: gap,
        branch_losses: losses,
    })
}
