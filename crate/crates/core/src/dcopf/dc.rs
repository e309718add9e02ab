//! DC optimal power flow as a dense convex QP over `x = [pg; θ without slack]`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::qp::{QpFailure, QpProblem};
use super::{solve_economic_dispatch, DispatchKind, DispatchSolution, QpDiagnostics};
use crate::netmodel::{build_dc_susceptance, NetworkCase};
use crate::{Error, Result};

/// Identifies one inequality row of the DC OPF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintId {
    PgMin(usize),
    PgMax(usize),
    /// Flow from the from-bus side at its positive limit.
    FlowMax(usize),
    FlowMin(usize),
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::PgMin(j) => write!(f, "pg_min[{j}]"),
            ConstraintId::PgMax(j) => write!(f, "pg_max[{j}]"),
            ConstraintId::FlowMax(k) => write!(f, "flow_max[{k}]"),
            ConstraintId::FlowMin(k) => write!(f, "flow_min[{k}]"),
        }
    }
}

/// Per-branch flow `(θ_from − θ_to) / x`, positive from the from-bus.
pub fn dc_flow(theta: &[f64], case: &NetworkCase) -> Vec<f64> {
    case.branches
        .iter()
        .map(|br| (theta[br.from] - theta[br.to]) / br.x)
        .collect()
}

struct Layout {
    ng: usize,
    /// Column of each bus angle in `x`, `None` for the slack.
    theta_col: Vec<Option<usize>>,
    rows: Vec<ConstraintId>,
}

impl Layout {
    fn new(case: &NetworkCase) -> Self {
        let ng = case.n_generators();
        let slack = case.slack_bus();
        let mut next = ng;
        let theta_col = (0..case.n_buses())
            .map(|i| {
                (i != slack).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let mut rows = Vec::new();
        for j in 0..ng {
            rows.push(ConstraintId::PgMin(j));
            rows.push(ConstraintId::PgMax(j));
        }
        for (k, br) in case.branches.iter().enumerate() {
            if br.flow_limit.is_some() {
                rows.push(ConstraintId::FlowMax(k));
                rows.push(ConstraintId::FlowMin(k));
            }
        }
        Layout { ng, theta_col, rows }
    }

    fn n(&self) -> usize {
        self.ng + self.theta_col.len() - 1
    }

    fn theta(&self, x: &DVector<f64>) -> Vec<f64> {
        self.theta_col
            .iter()
            .map(|c| c.map_or(0.0, |c| x[c]))
            .collect()
    }
}

fn build_problem(case: &NetworkCase, lay: &Layout) -> QpProblem {
    let n = lay.n();
    let nb = case.n_buses();
    let lap = build_dc_susceptance(case);

    let mut hessian = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    for (j, g) in case.generators.iter().enumerate() {
        hessian[(j, j)] = 2.0 * g.cost_a;
        linear[j] = g.cost_b;
    }

    // Σ_{k ∈ G_i} pg_k − (B θ)_i = p_load_i at every bus, slack row kept.
    let mut eq = DMatrix::zeros(nb, n);
    let mut eq_rhs = DVector::zeros(nb);
    for (j, g) in case.generators.iter().enumerate() {
        eq[(g.bus, j)] += 1.0;
    }
    for i in 0..nb {
        for (m, col) in lay.theta_col.iter().enumerate() {
            if let Some(c) = col {
                eq[(i, *c)] -= lap[(i, m)];
            }
        }
        eq_rhs[i] = case.buses[i].p_load;
    }

    let mut ineq = DMatrix::zeros(lay.rows.len(), n);
    let mut rhs = DVector::zeros(lay.rows.len());
    for (r, id) in lay.rows.iter().enumerate() {
        match *id {
            ConstraintId::PgMin(j) => {
                ineq[(r, j)] = -1.0;
                rhs[r] = -case.generators[j].p_min;
            }
            ConstraintId::PgMax(j) => {
                ineq[(r, j)] = 1.0;
                rhs[r] = case.generators[j].p_max;
            }
            ConstraintId::FlowMax(k) | ConstraintId::FlowMin(k) => {
                let br = &case.branches[k];
                let sign = if matches!(id, ConstraintId::FlowMax(_)) { 1.0 } else { -1.0 };
                if let Some(c) = lay.theta_col[br.from] {
                    ineq[(r, c)] += sign / br.x;
                }
                if let Some(c) = lay.theta_col[br.to] {
                    ineq[(r, c)] -= sign / br.x;
                }
                rhs[r] = br.flow_limit.expect("limited branch");
            }
        }
    }
    QpProblem { hessian, linear, eq_matrix: eq, eq_rhs, ineq_matrix: ineq, ineq_rhs: rhs }
}

/// Lossless DC power flow: bus angles (slack at zero) that carry the given
/// dispatch. Requires the dispatch to balance the total load.
pub fn dc_power_flow(case: &NetworkCase, pg: &[f64]) -> Result<Vec<f64>> {
    if pg.len() != case.n_generators() {
        return Err(Error::InvalidArgument(format!(
            "pg has length {}, expected {}",
            pg.len(),
            case.n_generators()
        )));
    }
    let slack = case.slack_bus();
    let lap = build_dc_susceptance(case);
    let injection: Vec<f64> = case
        .bus_sum(pg)
        .iter()
        .zip(&case.buses)
        .map(|(g, b)| g - b.p_load)
        .collect();
    let keep: Vec<usize> = (0..case.n_buses()).filter(|&i| i != slack).collect();
    let mut theta = vec![0.0; case.n_buses()];
    if keep.is_empty() {
        return Ok(theta);
    }
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |a, b| lap[(keep[a], keep[b])]);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&i| injection[i]));
    let solved = reduced
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("reduced susceptance matrix is singular".into()))?;
    for (a, &i) in keep.iter().enumerate() {
        theta[i] = solved[a];
    }
    Ok(theta)
}

/// Start point: the economic dispatch with its DC power flow angles, so the
/// balance rows hold exactly.
fn start_point(case: &NetworkCase, lay: &Layout) -> Result<DVector<f64>> {
    let (ed, _) = solve_economic_dispatch(case)?;
    let theta = dc_power_flow(case, &ed.pg)?;
    let mut x = DVector::zeros(lay.n());
    x.rows_mut(0, lay.ng).copy_from_slice(&ed.pg);
    for (i, t) in theta.iter().enumerate() {
        if let Some(c) = lay.theta_col[i] {
            x[c] = *t;
        }
    }
    Ok(x)
}

/// Minimizes generation cost subject to DC nodal balance at every bus,
/// generator boxes and per-branch flow limits.
pub fn solve_dcopf(case: &NetworkCase) -> Result<(DispatchSolution, QpDiagnostics)> {
    if case.generators.is_empty() {
        return Err(Error::InvalidArgument("case has no generators".into()));
    }
    let lay = Layout::new(case);
    let problem = build_problem(case, &lay);
    let x0 = start_point(case, &lay)?;

    let sol = problem.solve(x0).map_err(|e| match e {
        QpFailure::Infeasible { violated, worst } => Error::Infeasible {
            reason: format!("no dispatch satisfies the flow limits (worst violation {worst:.3e} p.u.)"),
            violated: violated.iter().map(|&r| lay.rows[r].to_string()).collect(),
        },
        QpFailure::Unbounded => Error::Numerical("DC OPF is unbounded".into()),
        QpFailure::IterationLimit => Error::Numerical("active-set iteration limit reached".into()),
        QpFailure::BadStart(err) => Error::Numerical(format!("start point violates balance by {err:.3e}")),
    })?;

    let x = &sol.x;
    let grad = &problem.hessian * x + &problem.linear;
    let stationarity = grad
        + problem.eq_matrix.transpose() * &sol.eq_multipliers
        + problem.ineq_matrix.transpose() * &sol.ineq_multipliers;
    let slack = &problem.ineq_rhs - &problem.ineq_matrix * x;
    let complementarity = sol
        .ineq_multipliers
        .iter()
        .zip(slack.iter())
        .fold(0.0f64, |acc, (z, s)| acc.max((z * s).abs()));
    let diagnostics = QpDiagnostics {
        kkt_stationarity_norm: stationarity.amax(),
        primal_feasibility_norm: problem.max_violation(x).max(0.0),
        complementarity_norm: complementarity,
        iterations: sol.iterations,
        active_set: sol.active.iter().map(|&r| lay.rows[r].to_string()).collect(),
        lambda: None,
    };

    let pg: Vec<f64> = x.rows(0, lay.ng).iter().copied().collect();
    let theta = lay.theta(x);
    let flows = dc_flow(&theta, case);
    let solution = DispatchSolution {
        kind: DispatchKind::DC,
        objective: case.cost(&pg),
        qg: vec![0.0; lay.ng],
        v_mag: vec![1.0; case.n_buses()],
        total_gen: pg.iter().sum(),
        total_load: case.total_p_load(),
        theta: Some(theta),
        branch_flows: Some(flows),
        pg,
    };
    Ok((solution, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::test_cases::two_bus;
    use proptest::prelude::*;

    #[test]
    fn flows_follow_angle_differences() {
        let case = two_bus(0.01, 0.1, 1.0);
        assert_eq!(dc_flow(&[0.3, 0.3], &case), vec![0.0]);
        assert!((dc_flow(&[0.1, 0.0], &case)[0] - 1.0).abs() < 1e-15);
        let mut rev = case.clone();
        rev.branches[0].from = 1;
        rev.branches[0].to = 0;
        assert_eq!(dc_flow(&[0.1, 0.0], &rev)[0], -dc_flow(&[0.1, 0.0], &case)[0]);
    }

    #[test]
    fn two_bus_dispatch() {
        let case = two_bus(0.01, 0.1, 1.0);
        let (sol, diag) = solve_dcopf(&case).unwrap();
        let theta = sol.theta.as_ref().unwrap();
        assert!((sol.pg[0] - 1.0).abs() < 1e-12);
        assert_eq!(theta[0], 0.0);
        assert!((theta[1] - theta[0] + 0.1).abs() < 1e-12);
        assert!((sol.branch_flows.as_ref().unwrap()[0] - 1.0).abs() < 1e-12);
        assert!(sol.balance_gap().abs() < 1e-12);
        assert!(diag.kkt_stationarity_norm < 1e-8, "{diag:?}");
        assert_eq!(sol.v_mag, vec![1.0, 1.0]);
    }

    #[test]
    fn case3_without_binding_limits_matches_ed() {
        let case = crate::load_fixture("case3").unwrap();
        let (ed, _) = solve_economic_dispatch(&case).unwrap();
        let (dc, diag) = solve_dcopf(&case).unwrap();
        assert!((ed.objective - dc.objective).abs() < 1e-8);
        for (a, b) in ed.pg.iter().zip(&dc.pg) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(diag.kkt_stationarity_norm < 1e-8, "{diag:?}");
        assert!(diag.primal_feasibility_norm < 1e-9);
    }

    #[test]
    fn binding_limit_is_reported_and_respected() {
        let mut case = crate::load_fixture("case3").unwrap();
        let (free, _) = solve_dcopf(&case).unwrap();
        let k = free
            .branch_flows
            .as_ref()
            .unwrap()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        let limit = 0.5 * free.branch_flows.as_ref().unwrap()[k].abs();
        case.branches[k].flow_limit = Some(limit);
        let (tight, diag) = solve_dcopf(&case).unwrap();
        let flow = tight.branch_flows.as_ref().unwrap()[k];
        assert!((flow.abs() - limit).abs() < 1e-9);
        assert!(tight.objective > free.objective);
        assert!(diag.active_set.iter().any(|s| s.starts_with("flow_")));
        assert!(diag.kkt_stationarity_norm < 1e-8, "{diag:?}");
        assert!(diag.complementarity_norm < 1e-8);
    }

    #[test]
    fn impossible_limits_report_violations() {
        let mut case = two_bus(0.01, 0.1, 1.0);
        case.branches[0].flow_limit = Some(0.5);
        match solve_dcopf(&case) {
            Err(Error::Infeasible { violated, .. }) => assert!(!violated.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nodal_balance_holds_on_case14() {
        let case = crate::load_fixture("case14").unwrap();
        let (sol, diag) = solve_dcopf(&case).unwrap();
        let lap = build_dc_susceptance(&case);
        let theta = DVector::from_column_slice(sol.theta.as_ref().unwrap());
        let inj = lap * theta;
        let gen = case.bus_sum(&sol.pg);
        for i in 0..case.n_buses() {
            assert!((inj[i] - (gen[i] - case.buses[i].p_load)).abs() < 1e-8);
        }
        assert!(sol.balance_gap().abs() < 1e-9);
        assert!(diag.kkt_stationarity_norm < 1e-8, "{diag:?}");
    }

    #[test]
    fn zero_load_lands_on_lower_bounds() {
        let case = crate::load_fixture("case3").unwrap();
        let zero = case.scale_loads(&[0.0; 3]).unwrap();
        let (sol, _) = solve_dcopf(&zero).unwrap();
        assert!(sol.pg.iter().all(|p| p.abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tightening_a_limit_never_lowers_cost(k in 0usize..3, frac in 0.3f64..0.95) {
            let mut case = crate::load_fixture("case3").unwrap();
            let (base, _) = solve_dcopf(&case).unwrap();
            let flow = base.branch_flows.as_ref().unwrap()[k].abs();
            case.branches[k].flow_limit = Some(frac * flow.max(0.05));
            if let Ok((tight, _)) = solve_dcopf(&case) {
                prop_assert!(tight.objective >= base.objective - 1e-8);
            }
        }

        #[test]
        fn balance_holds_under_random_loads(f in proptest::collection::vec(0.6f64..1.2, 14)) {
            let case = crate::load_fixture("case14").unwrap().scale_loads(&f).unwrap();
            let (sol, diag) = solve_dcopf(&case).unwrap();
            prop_assert!(sol.balance_gap().abs() <= 1e-9);
            prop_assert!(diag.primal_feasibility_norm <= 1e-9);
        }
    }
}
