//! The AC OPF as a smooth nonlinear program over
//! `x = [θ (non-slack), |V|, pg, qg]`.

use nalgebra::{DMatrix, DVector};

use crate::acpf::{injection_jacobian, injections, weighted_injection_hessian};
use crate::netmodel::{build_admittance, AdmittanceMatrix, NetworkCase};

/// Objective, constraints and derivatives of the AC OPF.
///
/// Equality constraints are `P_i(V, θ) − Σ pg + p_load` for every bus followed
/// by the reactive rows. The objective is multiplied by `objective_scale`;
/// the Lagrangian is `scale·f + yᵀc` and excludes bound multipliers.
#[derive(Debug, Clone)]
pub struct AcOpfProblem<'a> {
    case: &'a NetworkCase,
    adm: AdmittanceMatrix,
    theta_col: Vec<Option<usize>>,
    n: usize,
    ng: usize,
    objective_scale: f64,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

/// Width added around bounds with `lo == hi` so the barrier stays finite.
const FIXED_BOUND_WIDEN: f64 = 1e-8;

impl<'a> AcOpfProblem<'a> {
    pub fn new(case: &'a NetworkCase) -> Self {
        let n = case.n_buses();
        let ng = case.n_generators();
        let slack = case.slack_bus();
        let mut next = 0;
        let theta_col = (0..n)
            .map(|i| {
                (i != slack).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let nx = 2 * n - 1 + 2 * ng;
        let mut lower = DVector::from_element(nx, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(nx, f64::INFINITY);
        let mut set = |col: usize, lo: f64, hi: f64| {
            let (lo, hi) = if hi - lo < FIXED_BOUND_WIDEN {
                (lo - FIXED_BOUND_WIDEN, hi + FIXED_BOUND_WIDEN)
            } else {
                (lo, hi)
            };
            lower[col] = lo;
            upper[col] = hi;
        };
        for (i, b) in case.buses.iter().enumerate() {
            set(n - 1 + i, b.v_min, b.v_max);
        }
        for (k, g) in case.generators.iter().enumerate() {
            set(2 * n - 1 + k, g.p_min, g.p_max);
            set(2 * n - 1 + ng + k, g.q_min, g.q_max);
        }
        let mut problem = AcOpfProblem {
            case,
            adm: build_admittance(case),
            theta_col,
            n,
            ng,
            objective_scale: 1.0,
            lower,
            upper,
        };
        let g0 = problem.gradient(&problem.initial_point());
        problem.objective_scale = (100.0 / g0.amax()).min(1.0);
        problem
    }

    pub fn case(&self) -> &NetworkCase {
        self.case
    }

    pub fn n_vars(&self) -> usize {
        2 * self.n - 1 + 2 * self.ng
    }

    pub fn n_constraints(&self) -> usize {
        2 * self.n
    }

    pub fn objective_scale(&self) -> f64 {
        self.objective_scale
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    fn v_col(&self, i: usize) -> usize {
        self.n - 1 + i
    }

    fn pg_col(&self, k: usize) -> usize {
        2 * self.n - 1 + k
    }

    fn qg_col(&self, k: usize) -> usize {
        2 * self.n - 1 + self.ng + k
    }

    /// Flat voltages pushed inside their bounds, θ = 0, generator outputs at
    /// box midpoints.
    pub fn initial_point(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_vars());
        for i in 0..self.n {
            let c = self.v_col(i);
            let (lo, hi) = (self.lower[c], self.upper[c]);
            let push = (0.01 * (hi - lo)).min(0.5 * (hi - lo));
            x[c] = 1.0f64.clamp(lo + push, hi - push);
        }
        for k in 0..self.ng {
            for c in [self.pg_col(k), self.qg_col(k)] {
                x[c] = 0.5 * (self.lower[c] + self.upper[c]);
            }
        }
        x
    }

    /// Per-bus `(|V|, θ)` with the slack angle at zero.
    pub fn voltages(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let v = (0..self.n).map(|i| x[self.v_col(i)]).collect();
        let t = self
            .theta_col
            .iter()
            .map(|c| c.map_or(0.0, |c| x[c]))
            .collect();
        (v, t)
    }

    pub fn pg(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.ng).map(|k| x[self.pg_col(k)]).collect()
    }

    pub fn qg(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.ng).map(|k| x[self.qg_col(k)]).collect()
    }

    /// Generation cost in case units (unscaled).
    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        self.case.cost(&self.pg(x))
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.objective_scale * self.cost(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_vars());
        for (k, gen) in self.case.generators.iter().enumerate() {
            g[self.pg_col(k)] = self.objective_scale * gen.marginal_cost(x[self.pg_col(k)]);
        }
        g
    }

    pub fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        let (v, t) = self.voltages(x);
        let (p, q) = injections(&self.adm, &v, &t);
        let pgen = self.case.bus_sum(&self.pg(x));
        let qgen = self.case.bus_sum(&self.qg(x));
        let n = self.n;
        DVector::from_fn(2 * n, |r, _| {
            if r < n {
                p[r] - pgen[r] + self.case.buses[r].p_load
            } else {
                let i = r - n;
                q[i] - qgen[i] + self.case.buses[i].q_load
            }
        })
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (v, t) = self.voltages(x);
        let full = injection_jacobian(&self.adm, &v, &t);
        let n = self.n;
        let mut jac = DMatrix::zeros(2 * n, self.n_vars());
        for i in 0..n {
            for m in 0..n {
                if let Some(c) = self.theta_col[m] {
                    jac[(i, c)] = full.p_theta[(i, m)];
                    jac[(n + i, c)] = full.q_theta[(i, m)];
                }
                let c = self.v_col(m);
                jac[(i, c)] = full.p_v[(i, m)];
                jac[(n + i, c)] = full.q_v[(i, m)];
            }
        }
        for (k, g) in self.case.generators.iter().enumerate() {
            jac[(g.bus, self.pg_col(k))] = -1.0;
            jac[(n + g.bus, self.qg_col(k))] = -1.0;
        }
        jac
    }

    /// `scale·∇f + Jᵀy`.
    pub fn lagrangian_gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.gradient(x) + self.jacobian(x).transpose() * y
    }

    /// `scale·∇²f + Σ y_r ∇²c_r`.
    pub fn lagrangian_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let (v, t) = self.voltages(x);
        let n = self.n;
        let lam: Vec<f64> = y.rows(0, n).iter().copied().collect();
        let mu: Vec<f64> = y.rows(n, n).iter().copied().collect();
        let full = weighted_injection_hessian(&self.adm, &v, &t, &lam, &mu);
        // map [θ; V] (all buses) onto the variable layout
        let map: Vec<Option<usize>> = (0..2 * n)
            .map(|r| if r < n { self.theta_col[r] } else { Some(self.v_col(r - n)) })
            .collect();
        let mut h = DMatrix::zeros(self.n_vars(), self.n_vars());
        for (r, cr) in map.iter().enumerate() {
            let Some(cr) = cr else { continue };
            for (c, cc) in map.iter().enumerate() {
                if let Some(cc) = cc {
                    h[(*cr, *cc)] = full[(r, c)];
                }
            }
        }
        for (k, g) in self.case.generators.iter().enumerate() {
            let c = self.pg_col(k);
            h[(c, c)] += 2.0 * self.objective_scale * g.cost_a;
        }
        h
    }
}
