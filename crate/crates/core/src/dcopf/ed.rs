//! Economic dispatch by exact equal-incremental-cost search.
//!
//! Each generator's optimal output as a function of the system incremental
//! cost λ is `clip((λ − b) / 2a, p_min, p_max)`, a step at `λ = b` when
//! `a = 0`. The aggregate response is monotone and piecewise linear between
//! breakpoints, so the balancing λ is found exactly by a sorted scan.

use super::{DispatchKind, DispatchSolution, QpDiagnostics};
use crate::netmodel::{Generator, NetworkCase};
use crate::{Error, Result};

const TIE_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-9;

fn response(g: &Generator, lambda: f64, upper: bool) -> f64 {
    if g.cost_a > 0.0 {
        ((lambda - g.cost_b) / (2.0 * g.cost_a)).clamp(g.p_min, g.p_max)
    } else if lambda > g.cost_b + TIE_TOL {
        g.p_max
    } else if lambda < g.cost_b - TIE_TOL {
        g.p_min
    } else if upper {
        g.p_max
    } else {
        g.p_min
    }
}

fn total(gens: &[Generator], lambda: f64, upper: bool) -> f64 {
    gens.iter().map(|g| response(g, lambda, upper)).sum()
}

/// Returns `(λ, pg, breakpoints scanned)`.
fn dispatch(gens: &[Generator], demand: f64) -> Result<(f64, Vec<f64>, usize)> {
    let p_min: f64 = gens.iter().map(|g| g.p_min).sum();
    let p_max: f64 = gens.iter().map(|g| g.p_max).sum();
    let slack = 1e-12 * demand.abs().max(1.0);
    if demand < p_min - slack || demand > p_max + slack {
        return Err(Error::Infeasible {
            reason: format!(
                "total load {demand:.6} p.u. outside aggregate capacity [{p_min:.6}, {p_max:.6}]"
            ),
            violated: vec!["power_balance".into()],
        });
    }

    let mut breaks: Vec<f64> = gens
        .iter()
        .flat_map(|g| {
            if g.cost_a > 0.0 {
                vec![g.marginal_cost(g.p_min), g.marginal_cost(g.p_max)]
            } else {
                vec![g.cost_b]
            }
        })
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    breaks.dedup_by(|a, b| (*a - *b).abs() <= TIE_TOL);

    if demand <= p_min + slack {
        let pg = gens.iter().map(|g| g.p_min).collect();
        return Ok((breaks[0], pg, 1));
    }

    for (k, &lambda) in breaks.iter().enumerate() {
        let lo = total(gens, lambda, false);
        let hi = total(gens, lambda, true);
        if demand <= hi + slack && demand >= lo - slack {
            // Tie: flat-cost units at this λ absorb the remainder in index order.
            let mut pg: Vec<f64> = gens.iter().map(|g| response(g, lambda, false)).collect();
            let mut remaining = demand - lo;
            for (j, g) in gens.iter().enumerate() {
                if g.cost_a == 0.0 && (g.cost_b - lambda).abs() <= TIE_TOL && remaining > 0.0 {
                    let take = remaining.min(g.p_max - g.p_min);
                    pg[j] += take;
                    remaining -= take;
                }
            }
            return Ok((lambda, pg, k + 1));
        }
        if let Some(&next) = breaks.get(k + 1) {
            if demand < total(gens, next, false) {
                let slope: f64 = gens
                    .iter()
                    .filter(|g| {
                        g.cost_a > 0.0
                            && g.marginal_cost(g.p_min) <= lambda + TIE_TOL
                            && g.marginal_cost(g.p_max) >= next - TIE_TOL
                    })
                    .map(|g| 0.5 / g.cost_a)
                    .sum();
                let lambda = lambda + (demand - hi) / slope;
                let pg = gens.iter().map(|g| response(g, lambda, false)).collect();
                return Ok((lambda, pg, k + 1));
            }
        }
    }
    // demand == p_max within slack
    let pg = gens.iter().map(|g| g.p_max).collect();
    Ok((*breaks.last().expect("nonempty"), pg, breaks.len()))
}

/// Network-free dispatch: minimizes total cost subject to `Σ pg = Σ p_load`
/// and the generator boxes.
pub fn solve_economic_dispatch(case: &NetworkCase) -> Result<(DispatchSolution, QpDiagnostics)> {
    let gens = &case.generators;
    if gens.is_empty() {
        return Err(Error::InvalidArgument("case has no generators".into()));
    }
    let demand = case.total_p_load();
    let (lambda, pg, scanned) = dispatch(gens, demand)?;

    let mut stationarity = 0.0f64;
    let mut bound_violation = 0.0f64;
    let mut active = Vec::new();
    for (j, (g, &p)) in gens.iter().zip(&pg).enumerate() {
        let mc = g.marginal_cost(p);
        bound_violation = bound_violation.max(g.p_min - p).max(p - g.p_max);
        let at_min = p <= g.p_min + BOUND_TOL;
        let at_max = p >= g.p_max - BOUND_TOL;
        // multipliers of the active bound absorb the sign-correct part of mc − λ
        let residual = match (at_min, at_max) {
            (true, true) => 0.0,
            (true, false) => (lambda - mc).max(0.0),
            (false, true) => (mc - lambda).max(0.0),
            (false, false) => (mc - lambda).abs(),
        };
        stationarity = stationarity.max(residual);
        if at_min {
            active.push(format!("pg_min[{j}]"));
        }
        if at_max {
            active.push(format!("pg_max[{j}]"));
        }
    }
    let total_gen: f64 = pg.iter().sum();
    let diagnostics = QpDiagnostics {
        kkt_stationarity_norm: stationarity,
        primal_feasibility_norm: (total_gen - demand).abs().max(bound_violation),
        complementarity_norm: 0.0,
        iterations: scanned,
        active_set: active,
        lambda: Some(lambda),
    };
    let solution = DispatchSolution {
        kind: DispatchKind::ED,
        objective: case.cost(&pg),
        qg: vec![0.0; gens.len()],
        v_mag: vec![1.0; case.n_buses()],
        theta: None,
        branch_flows: None,
        total_gen,
        total_load: demand,
        pg,
    };
    Ok((solution, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Bus, BusKind};

    fn gen(a: f64, b: f64, lo: f64, hi: f64) -> Generator {
        Generator {
            bus: 0,
            p_min: lo,
            p_max: hi,
            q_min: 0.0,
            q_max: 0.0,
            p_set: 0.0,
            v_set: 1.0,
            cost_a: a,
            cost_b: b,
            cost_c: 0.0,
        }
    }

    fn single_bus(load: f64, gens: Vec<Generator>) -> NetworkCase {
        NetworkCase {
            name: "ed".into(),
            base_mva: 100.0,
            buses: vec![Bus {
                id: 1,
                kind: BusKind::Slack,
                p_load: load,
                q_load: 0.0,
                g_shunt: 0.0,
                b_shunt: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                v_set: 1.0,
            }],
            branches: vec![],
            generators: gens,
        }
    }

    #[test]
    fn single_generator_meets_load() {
        let case = single_bus(1.0, vec![gen(1.0, 0.0, 0.0, 2.0)]);
        let (sol, diag) = solve_economic_dispatch(&case).unwrap();
        assert_eq!(sol.pg, vec![1.0]);
        assert!((sol.objective - 1.0).abs() < 1e-15);
        assert!(diag.kkt_stationarity_norm < 1e-12);
    }

    /// Grid search over p1 at 1e-4 steps with p2 = 3 − p1.
    fn grid_two_gen() -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=30_000 {
            let p1 = k as f64 * 1e-4;
            let p2 = 3.0 - p1;
            if !(0.0..=5.0).contains(&p2) {
                continue;
            }
            let cost = p1 * p1 + 2.0 * p2 * p2;
            if cost < best.0 {
                best = (cost, p1);
            }
        }
        (best.1, 3.0 - best.1)
    }

    #[test]
    fn two_generators_equal_incremental_cost() {
        let (g1, g2) = grid_two_gen();
        assert!((g1 - 2.0).abs() < 1e-4 && (g2 - 1.0).abs() < 1e-4);

        let case = single_bus(3.0, vec![gen(1.0, 0.0, 0.0, 5.0), gen(2.0, 0.0, 0.0, 5.0)]);
        let (sol, diag) = solve_economic_dispatch(&case).unwrap();
        assert!((sol.pg[0] - 2.0).abs() < 1e-12);
        assert!((sol.pg[1] - 1.0).abs() < 1e-12);
        assert!((diag.lambda.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_load_sits_on_lower_bounds() {
        let mut gens = vec![gen(1.0, 3.0, 0.0, 2.0), gen(0.5, 1.0, 0.0, 2.0)];
        gens[0].cost_c = 5.0;
        gens[1].cost_c = 7.0;
        let case = single_bus(0.0, gens);
        let (sol, _) = solve_economic_dispatch(&case).unwrap();
        assert_eq!(sol.pg, vec![0.0, 0.0]);
        assert_eq!(sol.objective, 12.0);
    }

    #[test]
    fn linear_cost_ties_go_to_lowest_index() {
        let case = single_bus(
            1.5,
            vec![gen(0.0, 10.0, 0.0, 1.0), gen(0.0, 10.0, 0.0, 1.0), gen(0.0, 20.0, 0.0, 1.0)],
        );
        let (sol, diag) = solve_economic_dispatch(&case).unwrap();
        assert_eq!(sol.pg, vec![1.0, 0.5, 0.0]);
        assert_eq!(diag.lambda, Some(10.0));
        assert!(diag.kkt_stationarity_norm < 1e-12);
    }

    #[test]
    fn mixed_linear_and_quadratic() {
        // flat unit at 10 saturates before the quadratic one passes 10
        let case = single_bus(2.5, vec![gen(0.0, 10.0, 0.0, 1.0), gen(1.0, 8.0, 0.0, 5.0)]);
        let (sol, diag) = solve_economic_dispatch(&case).unwrap();
        // λ = 2·1.5 + 8 = 11 > 10
        assert!((sol.pg[0] - 1.0).abs() < 1e-12);
        assert!((sol.pg[1] - 1.5).abs() < 1e-12);
        assert!((diag.lambda.unwrap() - 11.0).abs() < 1e-12);
    }

    #[test]
    fn load_beyond_capacity_is_infeasible() {
        let case = single_bus(10.0, vec![gen(1.0, 0.0, 0.0, 2.0)]);
        assert!(matches!(solve_economic_dispatch(&case), Err(Error::Infeasible { .. })));
        let case = single_bus(0.5, vec![gen(1.0, 0.0, 1.0, 2.0)]);
        assert!(matches!(solve_economic_dispatch(&case), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn case3_matches_hand_dispatch() {
        let case = crate::load_fixture("case3").unwrap();
        let (sol, diag) = solve_economic_dispatch(&case).unwrap();
        assert!((sol.pg[0] - 1.5).abs() < 1e-12);
        assert!((sol.pg[1] - 1860.0 / 1560.0).abs() < 1e-12);
        assert!((sol.pg[2] - 560.0 / 1820.0).abs() < 1e-12);
        assert!((diag.lambda.unwrap() - 16160.0 / 13.0).abs() < 1e-9);
        assert_eq!(diag.active_set, vec!["pg_max[0]".to_string()]);
    }
}
