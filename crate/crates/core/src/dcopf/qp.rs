//! Primal active-set method for small dense convex QPs
//!
//! ```text
//! min ½ xᵀHx + cᵀx   s.t.  A_eq x = b_eq,   A_in x ≤ b_in
//! ```
//!
//! `H` must be positive semidefinite. Each iteration solves the
//! equality-constrained subproblem on the working set through the KKT system
//! `[H Aᵀ; A 0]`; when the reduced Hessian is singular a zero-curvature descent
//! direction is taken instead. A feasible start is found by an elastic phase
//! one on the same machinery.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    /// Nonnegative multipliers of the inequality rows (zero off the working set).
    pub ineq_multipliers: DVector<f64>,
    /// Inequality rows in the final working set.
    pub active: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpFailure {
    /// No point satisfies the constraints; carries the rows that phase one
    /// could not satisfy.
    Infeasible { violated: Vec<usize>, worst: f64 },
    Unbounded,
    IterationLimit,
    /// The starting point does not satisfy the equality constraints.
    BadStart(f64),
}

const FEAS_TOL: f64 = 1e-9;
const ZERO_STEP: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

impl QpProblem {
    pub fn n(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    /// Largest violation of any constraint at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.eq_matrix * x - &self.eq_rhs).amax();
        let ineq = (&self.ineq_matrix * x - &self.ineq_rhs)
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v));
        eq.max(ineq)
    }

    /// Solves from `x0`, which must satisfy the equality constraints.
    pub fn solve(&self, x0: DVector<f64>) -> Result<QpSolution, QpFailure> {
        let eq_err = if self.eq_matrix.nrows() > 0 {
            (&self.eq_matrix * &x0 - &self.eq_rhs).amax()
        } else {
            0.0
        };
        if eq_err > 1e-7 {
            return Err(QpFailure::BadStart(eq_err));
        }
        let x = if self.ineq_violation(&x0) > FEAS_TOL {
            self.phase_one(x0)?
        } else {
            x0
        };
        active_set(self, x, Vec::new())
    }

    fn ineq_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.ineq_matrix * x - &self.ineq_rhs)
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v))
    }

    /// Minimizes a single elastic variable `t ≥ 0` added to every inequality
    /// row; the problem is feasible iff the optimum is `t = 0`.
    fn phase_one(&self, x0: DVector<f64>) -> Result<DVector<f64>, QpFailure> {
        let n = self.n();
        let m_in = self.ineq_matrix.nrows();
        let m_eq = self.eq_matrix.nrows();
        let t0 = self.ineq_violation(&x0);

        let mut eq = DMatrix::zeros(m_eq, n + 1);
        eq.view_mut((0, 0), (m_eq, n)).copy_from(&self.eq_matrix);
        let mut ineq = DMatrix::zeros(m_in + 1, n + 1);
        ineq.view_mut((0, 0), (m_in, n)).copy_from(&self.ineq_matrix);
        for k in 0..m_in {
            ineq[(k, n)] = -1.0;
        }
        ineq[(m_in, n)] = -1.0;
        let mut rhs = DVector::zeros(m_in + 1);
        rhs.rows_mut(0, m_in).copy_from(&self.ineq_rhs);

        let mut linear = DVector::zeros(n + 1);
        linear[n] = 1.0;
        let elastic = QpProblem {
            hessian: DMatrix::zeros(n + 1, n + 1),
            linear,
            eq_matrix: eq,
            eq_rhs: self.eq_rhs.clone(),
            ineq_matrix: ineq,
            ineq_rhs: rhs,
        };
        let mut start = DVector::zeros(n + 1);
        start.rows_mut(0, n).copy_from(&x0);
        start[n] = t0;
        let sol = active_set(&elastic, start, Vec::new())?;
        let t = sol.x[n];
        let x = sol.x.rows(0, n).into_owned();
        if t > FEAS_TOL {
            let slack = &self.ineq_matrix * &x - &self.ineq_rhs;
            let violated = (0..m_in).filter(|&k| slack[k] > FEAS_TOL).collect();
            return Err(QpFailure::Infeasible { violated, worst: t });
        }
        Ok(x)
    }
}

/// Orthonormal basis of the null space of `a` (rows are constraints).
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to square so the SVD returns a full right basis.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let scale = svd.singular_values.max().max(1.0);
    let cols: Vec<usize> = (0..n)
        .filter(|&j| svd.singular_values[j] <= RANK_TOL * scale)
        .collect();
    let mut z = DMatrix::zeros(n, cols.len());
    for (c, &j) in cols.iter().enumerate() {
        z.set_column(c, &v_t.row(j).transpose());
    }
    z
}

/// Working-set rows stacked as `[A_eq; A_in[W]]`.
fn working_matrix(p: &QpProblem, working: &[usize]) -> DMatrix<f64> {
    let n = p.n();
    let m_eq = p.eq_matrix.nrows();
    let mut a = DMatrix::zeros(m_eq + working.len(), n);
    a.view_mut((0, 0), (m_eq, n)).copy_from(&p.eq_matrix);
    for (r, &k) in working.iter().enumerate() {
        a.set_row(m_eq + r, &p.ineq_matrix.row(k));
    }
    a
}

/// Step and multipliers of the working-set subproblem.
struct Subproblem {
    step: DVector<f64>,
    /// `None` when the step is a zero-curvature ray (no finite minimizer).
    multipliers: Option<DVector<f64>>,
}

fn solve_subproblem(p: &QpProblem, a: &DMatrix<f64>, grad: &DVector<f64>) -> Subproblem {
    let n = p.n();
    let m = a.nrows();
    let z = null_space(a, n);
    let gscale = grad.amax().max(1.0);

    if z.ncols() > 0 {
        // zero-curvature descent inside the working-set null space
        let reduced = z.transpose() * &p.hessian * &z;
        let eig = reduced.clone().symmetric_eigen();
        let hscale = eig.eigenvalues.amax().max(1.0);
        let flat: Vec<usize> = (0..z.ncols())
            .filter(|&j| eig.eigenvalues[j].abs() <= 1e-10 * hscale)
            .collect();
        if !flat.is_empty() {
            let mut basis = DMatrix::zeros(n, flat.len());
            for (c, &j) in flat.iter().enumerate() {
                basis.set_column(c, &(&z * eig.eigenvectors.column(j)));
            }
            let dir = -(&basis * (basis.transpose() * grad));
            if dir.amax() > 1e-12 * gscale {
                return Subproblem { step: dir, multipliers: None };
            }
        }
    }

    // [H Aᵀ; A 0] [p; λ] = [-g; 0]
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let lu = kkt.clone().full_piv_lu();
    let sol = match lu.solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) && (&kkt * &s - &rhs).amax() < 1e-9 * gscale => s,
        // dependent rows or singular reduced Hessian: least squares
        _ => kkt
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .expect("SVD with both factors"),
    };
    Subproblem {
        step: sol.rows(0, n).into_owned(),
        multipliers: Some(sol.rows(n, m).into_owned()),
    }
}

fn active_set(
    p: &QpProblem,
    mut x: DVector<f64>,
    mut working: Vec<usize>,
) -> Result<QpSolution, QpFailure> {
    let n = p.n();
    let m_eq = p.eq_matrix.nrows();
    let m_in = p.ineq_matrix.nrows();
    let limit = 50 * (n + m_in + 10);

    for iteration in 0..limit {
        let grad = &p.hessian * &x + &p.linear;
        let a = working_matrix(p, &working);
        let sub = solve_subproblem(p, &a, &grad);
        let step_size = sub.step.amax();
        let xscale = x.amax().max(1.0);

        if step_size <= ZERO_STEP * xscale {
            let lambda = sub.multipliers.expect("finite step has multipliers");
            // drop the most negative inequality multiplier, if any
            let mut drop: Option<(usize, f64)> = None;
            for r in 0..working.len() {
                let mu = lambda[m_eq + r];
                if mu < -1e-10 * grad.amax().max(1.0) && drop.is_none_or(|(_, v)| mu < v) {
                    drop = Some((r, mu));
                }
            }
            match drop {
                Some((r, _)) => {
                    working.remove(r);
                    continue;
                }
                None => {
                    let mut ineq = DVector::zeros(m_in);
                    for (r, &k) in working.iter().enumerate() {
                        ineq[k] = lambda[m_eq + r].max(0.0);
                    }
                    return Ok(QpSolution {
                        x,
                        eq_multipliers: lambda.rows(0, m_eq).into_owned(),
                        ineq_multipliers: ineq,
                        active: working,
                        iterations: iteration,
                    });
                }
            }
        }

        // ratio test over the rows outside the working set
        let unbounded_ray = sub.multipliers.is_none();
        let mut alpha = if unbounded_ray { f64::INFINITY } else { 1.0 };
        let mut blocking = None;
        for k in 0..m_in {
            if working.contains(&k) {
                continue;
            }
            let row = p.ineq_matrix.row(k);
            let rate = row.dot(&sub.step.transpose());
            if rate > 1e-14 * row.amax().max(1.0) * step_size {
                let slack = (p.ineq_rhs[k] - row.dot(&x.transpose())).max(0.0);
                let a_k = slack / rate;
                if a_k < alpha {
                    alpha = a_k;
                    blocking = Some(k);
                }
            }
        }
        if !alpha.is_finite() {
            return Err(QpFailure::Unbounded);
        }
        x += alpha * &sub.step;
        if let Some(k) = blocking {
            working.push(k);
        }
    }
    Err(QpFailure::IterationLimit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(h: &[f64], c: &[f64], lo: &[f64], hi: &[f64], eq: Option<(&[f64], f64)>) -> QpProblem {
        let n = h.len();
        let mut ineq = DMatrix::zeros(2 * n, n);
        let mut rhs = DVector::zeros(2 * n);
        for j in 0..n {
            ineq[(2 * j, j)] = -1.0;
            rhs[2 * j] = -lo[j];
            ineq[(2 * j + 1, j)] = 1.0;
            rhs[2 * j + 1] = hi[j];
        }
        let (eq_matrix, eq_rhs) = match eq {
            Some((row, b)) => (DMatrix::from_row_slice(1, n, row), DVector::from_element(1, b)),
            None => (DMatrix::zeros(0, n), DVector::zeros(0)),
        };
        QpProblem {
            hessian: DMatrix::from_diagonal(&DVector::from_column_slice(h)),
            linear: DVector::from_column_slice(c),
            eq_matrix,
            eq_rhs,
            ineq_matrix: ineq,
            ineq_rhs: rhs,
        }
    }

    #[test]
    fn unconstrained_minimum_inside_box() {
        let p = boxed(&[2.0, 4.0], &[-2.0, -4.0], &[-5.0, -5.0], &[5.0, 5.0], None);
        let sol = p.solve(DVector::zeros(2)).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        assert!(sol.active.is_empty());
    }

    #[test]
    fn bound_becomes_active() {
        let p = boxed(&[2.0], &[-10.0], &[0.0], &[2.0], None);
        let sol = p.solve(DVector::zeros(1)).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12);
        assert_eq!(sol.active, vec![1]);
        // stationarity: 2x - 10 + mu = 0
        assert!((sol.ineq_multipliers[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn equality_with_two_variables() {
        // min x² + 2y², x + y = 3  -> x = 2, y = 1
        let p = boxed(&[2.0, 4.0], &[0.0, 0.0], &[0.0, 0.0], &[5.0, 5.0], Some((&[1.0, 1.0], 3.0)));
        let sol = p.solve(DVector::from_vec(vec![3.0, 0.0])).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12);
        assert!((sol.x[1] - 1.0).abs() < 1e-12);
        assert!((sol.eq_multipliers[0] + 4.0).abs() < 1e-10);
    }

    #[test]
    fn linear_objective_goes_to_a_vertex() {
        // min x + 2y, x + y = 1, 0 <= x,y <= 1 -> x = 1
        let p = boxed(&[0.0, 0.0], &[1.0, 2.0], &[0.0, 0.0], &[1.0, 1.0], Some((&[1.0, 1.0], 1.0)));
        let sol = p.solve(DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12, "{}", sol.x);
    }

    #[test]
    fn infeasible_start_recovers_through_phase_one() {
        let p = boxed(&[2.0, 2.0], &[0.0, 0.0], &[1.0, 1.0], &[3.0, 3.0], Some((&[1.0, 1.0], 4.0)));
        let sol = p.solve(DVector::from_vec(vec![4.0, 0.0])).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-10 && (sol.x[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let p = boxed(&[2.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], Some((&[1.0, 1.0], 3.0)));
        match p.solve(DVector::from_vec(vec![3.0, 0.0])) {
            Err(QpFailure::Infeasible { violated, worst }) => {
                assert!(!violated.is_empty());
                assert!(worst > 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_start_is_rejected() {
        let p = boxed(&[2.0], &[0.0], &[0.0], &[1.0], Some((&[1.0], 0.5)));
        assert!(matches!(p.solve(DVector::zeros(1)), Err(QpFailure::BadStart(_))));
    }
}
