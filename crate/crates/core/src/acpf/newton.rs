//! Newton-Raphson power flow in polar coordinates with PV→PQ switching.

use nalgebra::{DMatrix, DVector};

use super::{injection_jacobian, injections, split_reactive, PfSolution};
use crate::netmodel::{BusKind, NetworkCase};
use crate::{Error, Result};

/// Active dispatch and voltage targets for a power flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PfSetpoints {
    /// Per-generator active output. Only the first generator at the slack bus
    /// is overwritten by the solve.
    pub pg: Vec<f64>,
    /// Per-bus voltage magnitude target, used at PV and slack buses.
    pub v_set: Vec<f64>,
}

impl PfSetpoints {
    /// Scheduled outputs and voltage setpoints from the case file.
    pub fn from_case(case: &NetworkCase) -> Self {
        Self::from_dispatch(case, case.generators.iter().map(|g| g.p_set).collect())
    }

    /// Given dispatch with the case's voltage setpoints.
    pub fn from_dispatch(case: &NetworkCase, pg: Vec<f64>) -> Self {
        PfSetpoints { pg, v_set: case.buses.iter().map(|b| b.v_set).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfOptions {
    pub tolerance: f64,
    /// Newton iterations allowed per outer pass.
    pub max_iterations: usize,
    pub enforce_q_limits: bool,
    pub max_outer: usize,
    /// `(v_mag, theta)` to start from instead of the flat profile.
    pub warm_start: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tolerance: 1e-8,
            max_iterations: 20,
            enforce_q_limits: true,
            max_outer: 10,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Slack,
    Pv,
    /// Fixed reactive generation at the bus.
    Pq(f64),
}

struct Newton<'a> {
    case: &'a NetworkCase,
    adm: crate::netmodel::AdmittanceMatrix,
    p_sched: Vec<f64>,
    q_load: Vec<f64>,
}

struct Inner {
    converged: bool,
    iterations: usize,
    norm: f64,
}

impl Newton<'_> {
    fn mismatch(&self, roles: &[Role], v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (p, q) = injections(&self.adm, v, theta);
        let mut f = Vec::new();
        for (i, r) in roles.iter().enumerate() {
            if *r != Role::Slack {
                f.push(p[i] - self.p_sched[i]);
            }
        }
        for (i, r) in roles.iter().enumerate() {
            if let Role::Pq(qg) = r {
                f.push(q[i] - (qg - self.q_load[i]));
            }
        }
        (f, p, q)
    }

    fn run(
        &self,
        roles: &[Role],
        v: &mut [f64],
        theta: &mut [f64],
        opts: &PfOptions,
        offset: usize,
        history: &mut Vec<f64>,
    ) -> Result<Inner> {
        let th: Vec<usize> = (0..roles.len()).filter(|&i| roles[i] != Role::Slack).collect();
        let vm: Vec<usize> = (0..roles.len())
            .filter(|&i| matches!(roles[i], Role::Pq(_)))
            .collect();
        let dim = th.len() + vm.len();
        let mut it = 0;
        loop {
            let (f, _, _) = self.mismatch(roles, v, theta);
            let norm = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            history.push(norm);
            if !norm.is_finite() {
                return Ok(Inner { converged: false, iterations: it, norm });
            }
            if norm <= opts.tolerance {
                return Ok(Inner { converged: true, iterations: it, norm });
            }
            if it >= opts.max_iterations {
                return Ok(Inner { converged: false, iterations: it, norm });
            }
            let full = injection_jacobian(&self.adm, v, theta);
            let mut jac = DMatrix::zeros(dim, dim);
            let nt = th.len();
            for (r, &i) in th.iter().enumerate() {
                for (c, &m) in th.iter().enumerate() {
                    jac[(r, c)] = full.p_theta[(i, m)];
                }
                for (c, &m) in vm.iter().enumerate() {
                    jac[(r, nt + c)] = full.p_v[(i, m)];
                }
            }
            for (r, &i) in vm.iter().enumerate() {
                for (c, &m) in th.iter().enumerate() {
                    jac[(nt + r, c)] = full.q_theta[(i, m)];
                }
                for (c, &m) in vm.iter().enumerate() {
                    jac[(nt + r, nt + c)] = full.q_v[(i, m)];
                }
            }
            let step = jac
                .lu()
                .solve(&DVector::from_vec(f))
                .filter(|s| s.iter().all(|x| x.is_finite()))
                .ok_or(Error::SingularJacobian { iteration: offset + it })?;
            for (r, &i) in th.iter().enumerate() {
                theta[i] -= step[r];
            }
            for (r, &i) in vm.iter().enumerate() {
                v[i] -= step[nt + r];
            }
            it += 1;
        }
    }
}

/// Solves the AC balance equations for the given dispatch.
///
/// The slack bus holds `V∠0` and its first generator absorbs the active
/// mismatch. PV buses hold their voltage target while their reactive output
/// stays within the aggregate generator limits; a bus that hits a limit is
/// pinned there as PQ and may return to PV on a later pass when its voltage
/// moves back across the target.
pub fn solve_newton_pf(case: &NetworkCase, set: &PfSetpoints, opts: &PfOptions) -> Result<PfSolution> {
    let n = case.n_buses();
    let ng = case.n_generators();
    super::check_len("pg", set.pg.len(), ng)?;
    super::check_len("v_set", set.v_set.len(), n)?;
    let slack = case.slack_bus();
    let by_bus = case.generators_by_bus();
    let q_lo: Vec<f64> = by_bus
        .iter()
        .map(|gs| gs.iter().map(|&k| case.generators[k].q_min).sum())
        .collect();
    let q_hi: Vec<f64> = by_bus
        .iter()
        .map(|gs| gs.iter().map(|&k| case.generators[k].q_max).sum())
        .collect();

    let mut roles: Vec<Role> = (0..n)
        .map(|i| match case.buses[i].kind {
            BusKind::Slack => Role::Slack,
            BusKind::PV if !by_bus[i].is_empty() => Role::Pv,
            _ => Role::Pq(
                by_bus[i]
                    .iter()
                    .map(|&k| 0.0f64.clamp(case.generators[k].q_min, case.generators[k].q_max))
                    .sum(),
            ),
        })
        .collect();

    let pgen = case.bus_sum(&set.pg);
    let newton = Newton {
        case,
        adm: crate::netmodel::build_admittance(case),
        p_sched: (0..n).map(|i| pgen[i] - case.buses[i].p_load).collect(),
        q_load: case.buses.iter().map(|b| b.q_load).collect(),
    };

    let (mut v, mut theta) = match &opts.warm_start {
        Some((v0, t0)) => {
            super::check_len("warm-start v_mag", v0.len(), n)?;
            super::check_len("warm-start theta", t0.len(), n)?;
            (v0.clone(), t0.clone())
        }
        None => (vec![1.0; n], vec![0.0; n]),
    };
    theta[slack] = 0.0;
    for i in 0..n {
        if matches!(roles[i], Role::Slack | Role::Pv) {
            v[i] = set.v_set[i];
        }
    }

    let mut history = Vec::new();
    let mut total_iterations = 0;
    let mut last;
    let mut limited = vec![false; n];
    for outer in 0..opts.max_outer.max(1) {
        last = newton.run(&roles, &mut v, &mut theta, opts, total_iterations, &mut history)?;
        total_iterations += last.iterations;
        if !last.converged || !opts.enforce_q_limits || outer + 1 == opts.max_outer.max(1) {
            return Ok(finish(&newton, &roles, &limited, set, v, theta, last, total_iterations, history, &by_bus));
        }
        let (_, _, q) = newton.mismatch(&roles, &v, &theta);
        let tol = 1e-9;
        let mut changed = false;
        for i in 0..n {
            match roles[i] {
                Role::Pv => {
                    let qg = q[i] + case.buses[i].q_load;
                    if qg > q_hi[i] + tol {
                        roles[i] = Role::Pq(q_hi[i]);
                        limited[i] = true;
                        changed = true;
                    } else if qg < q_lo[i] - tol {
                        roles[i] = Role::Pq(q_lo[i]);
                        limited[i] = true;
                        changed = true;
                    }
                }
                Role::Pq(qfix) if limited[i] => {
                    let at_hi = qfix == q_hi[i];
                    if (at_hi && v[i] > set.v_set[i] + tol) || (!at_hi && v[i] < set.v_set[i] - tol) {
                        roles[i] = Role::Pv;
                        limited[i] = false;
                        v[i] = set.v_set[i];
                        changed = true;
                    }
                }
                _ => {}
            }
        }
        if !changed {
            return Ok(finish(&newton, &roles, &limited, set, v, theta, last, total_iterations, history, &by_bus));
        }
    }
    unreachable!("outer loop returns on its final pass")
}

#[allow(clippy::too_many_arguments)]
fn finish(
    newton: &Newton<'_>,
    roles: &[Role],
    limited: &[bool],
    set: &PfSetpoints,
    v: Vec<f64>,
    theta: Vec<f64>,
    inner: Inner,
    iterations: usize,
    history: Vec<f64>,
    by_bus: &[Vec<usize>],
) -> PfSolution {
    let case = newton.case;
    let (p, q) = injections(&newton.adm, &v, &theta);
    let mut pg = set.pg.clone();
    let mut qg = vec![0.0; case.n_generators()];
    let slack = case.slack_bus();
    for (i, gens) in by_bus.iter().enumerate() {
        if gens.is_empty() {
            continue;
        }
        let q_total = match roles[i] {
            Role::Pq(fixed) => fixed,
            _ => q[i] + case.buses[i].q_load,
        };
        split_reactive(case, gens, q_total, &mut qg);
        if i == slack {
            let others: f64 = gens[1..].iter().map(|&k| pg[k]).sum();
            pg[gens[0]] = p[i] + case.buses[i].p_load - others;
        }
    }
    let slack_gens = &by_bus[slack];
    PfSolution {
        bus_ids: case.bus_ids(),
        slack_p: slack_gens.iter().map(|&k| pg[k]).sum(),
        slack_q: slack_gens.iter().map(|&k| qg[k]).sum(),
        losses_p: pg.iter().sum::<f64>() - case.total_p_load(),
        converged: inner.converged,
        iterations,
        final_residual_norm: inner.norm,
        residual_history: history,
        q_limited_buses: (0..roles.len())
            .filter(|&i| limited[i])
            .map(|i| case.buses[i].id)
            .collect(),
        v_mag: v,
        theta,
        pg,
        qg,
    }
}
