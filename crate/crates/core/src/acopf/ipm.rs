//! Primal-dual interior point on bound-constrained NLPs with equality rows.
//!
//! Log barriers on every finite bound, Newton on the perturbed KKT system
//! with inertia correction, fraction-to-boundary step rule, a two-measure
//! (infeasibility, barrier objective) acceptance test with backtracking, and
//! monotone barrier reduction.

use nalgebra::{DMatrix, DVector};

use super::problem::AcOpfProblem;
use super::{AcOpfOptions, AcOpfStatus, TraceRow};

const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const GAMMA: f64 = 1e-5;
const MAX_BACKTRACK: usize = 30;

/// State passed to an observer after each iteration's residuals are evaluated.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub iteration: usize,
    pub x: DVector<f64>,
    /// Equality multipliers.
    pub y: DVector<f64>,
    pub barrier: f64,
}

pub(super) struct Outcome {
    pub x: DVector<f64>,
    pub status: AcOpfStatus,
    pub iterations: usize,
    pub kkt_norm: f64,
    pub feasibility_norm: f64,
    pub trace: Vec<TraceRow>,
}

struct Bounds {
    lo_idx: Vec<usize>,
    lo: Vec<f64>,
    hi_idx: Vec<usize>,
    hi: Vec<f64>,
}

impl Bounds {
    fn slacks(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        (
            self.lo_idx.iter().zip(&self.lo).map(|(&j, l)| x[j] - l).collect(),
            self.hi_idx.iter().zip(&self.hi).map(|(&j, u)| u - x[j]).collect(),
        )
    }
}

fn barrier_value(f: f64, sl: &[f64], su: &[f64], mu: f64) -> f64 {
    f - mu * sl.iter().chain(su).map(|s| s.ln()).sum::<f64>()
}

/// Ruiz scaling factors: repeatedly divide each row and column by the square
/// root of its largest entry.
fn equilibrate(k: &DMatrix<f64>) -> DVector<f64> {
    let dim = k.nrows();
    let mut d = DVector::from_element(dim, 1.0);
    for _ in 0..5 {
        let mut change = DVector::from_element(dim, 1.0);
        for i in 0..dim {
            let row = (0..dim).fold(0.0f64, |a, j| a.max((d[i] * k[(i, j)] * d[j]).abs()));
            if row > 0.0 {
                change[i] = 1.0 / row.sqrt();
            }
        }
        d.component_mul_assign(&change);
    }
    d
}

/// Solves `[W + δ_w I, Jᵀ; J, −δ_c I] d = r`, adjusting `δ_w` until the matrix
/// has exactly `n` positive and `m` negative eigenvalues.
fn solve_kkt(
    w: &DMatrix<f64>,
    jac: &DMatrix<f64>,
    rhs: &DVector<f64>,
    last_delta: &mut f64,
    mu: f64,
) -> Option<DVector<f64>> {
    let n = w.nrows();
    let m = jac.nrows();
    let mut delta_w = 0.0;
    let mut delta_c = 0.0;
    let mut first = true;
    loop {
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(w);
        for j in 0..n {
            k[(j, j)] += delta_w;
        }
        k.view_mut((n, 0), (m, n)).copy_from(jac);
        k.view_mut((0, n), (n, m)).copy_from(&jac.transpose());
        for j in 0..m {
            k[(n + j, n + j)] = -delta_c;
        }
        // symmetric equilibration keeps the inertia (congruence) while taming
        // the barrier terms that grow like z/s near active bounds
        let d = equilibrate(&k);
        let scaled_k = DMatrix::from_fn(n + m, n + m, |i, j| d[i] * k[(i, j)] * d[j]);
        let eig = scaled_k.symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1.0);
        let zero_tol = 1e-12 * scale;
        let pos = eig.eigenvalues.iter().filter(|&&e| e > zero_tol).count();
        let neg = eig.eigenvalues.iter().filter(|&&e| e < -zero_tol).count();
        if pos == n && neg == m {
            if delta_w > 0.0 {
                *last_delta = delta_w;
            }
            let qt_r = eig.eigenvectors.transpose() * rhs.component_mul(&d);
            let scaled = DVector::from_fn(n + m, |i, _| qt_r[i] / eig.eigenvalues[i]);
            let sol = (&eig.eigenvectors * scaled).component_mul(&d);
            return sol.iter().all(|v| v.is_finite()).then_some(sol);
        }
        if pos + neg < n + m && delta_c == 0.0 {
            // singular: regularize the constraint block first
            delta_c = 1e-8 * mu.powf(0.25);
            continue;
        }
        delta_w = if delta_w == 0.0 {
            if *last_delta == 0.0 {
                1e-4
            } else {
                (*last_delta / 3.0).max(1e-20)
            }
        } else if first && *last_delta == 0.0 {
            delta_w * 100.0
        } else {
            delta_w * 8.0
        };
        first = false;
        if delta_w > 1e40 {
            return None;
        }
    }
}

pub(super) fn run(
    problem: &AcOpfProblem,
    opts: &AcOpfOptions,
    observer: &mut dyn FnMut(&Iterate),
) -> Outcome {
    let n = problem.n_vars();
    let m = problem.n_constraints();
    let (lower, upper) = (problem.lower(), problem.upper());
    let bounds = Bounds {
        lo_idx: (0..n).filter(|&j| lower[j].is_finite()).collect(),
        lo: (0..n).filter(|&j| lower[j].is_finite()).map(|j| lower[j]).collect(),
        hi_idx: (0..n).filter(|&j| upper[j].is_finite()).collect(),
        hi: (0..n).filter(|&j| upper[j].is_finite()).map(|j| upper[j]).collect(),
    };
    let scale = problem.objective_scale();

    let mut mu = opts.barrier_initial;
    let mut x = problem.initial_point();
    let mut y = DVector::zeros(m);
    let (sl, su) = bounds.slacks(&x);
    let mut zl: Vec<f64> = sl.iter().map(|s| mu / s).collect();
    let mut zu: Vec<f64> = su.iter().map(|s| mu / s).collect();
    let mut trace = Vec::new();
    let mut last_delta = 0.0;
    let n_z = (zl.len() + zu.len()).max(1) as f64;

    let mut iteration = 0;
    loop {
        let (sl, su) = bounds.slacks(&x);
        let f = problem.objective(&x);
        let grad = problem.gradient(&x);
        let c = problem.constraints(&x);
        let jac = problem.jacobian(&x);

        let mut dual = &grad + jac.transpose() * &y;
        for (r, &j) in bounds.lo_idx.iter().enumerate() {
            dual[j] -= zl[r];
        }
        for (r, &j) in bounds.hi_idx.iter().enumerate() {
            dual[j] += zu[r];
        }
        let z_sum: f64 = zl.iter().chain(&zu).map(|z| z.abs()).sum();
        let s_d = (S_MAX.max((y.iter().map(|v| v.abs()).sum::<f64>() + z_sum) / (m as f64 + n_z))) / S_MAX;
        let s_c = (S_MAX.max(z_sum / n_z)) / S_MAX;
        let compl = |target: f64| {
            sl.iter()
                .zip(&zl)
                .chain(su.iter().zip(&zu))
                .fold(0.0f64, |a, (s, z)| a.max((s * z - target).abs()))
        };
        let stat = dual.amax() / s_d;
        let feas = c.amax();
        let kkt = stat.max(compl(0.0) / s_c);

        trace.push(TraceRow {
            iteration,
            barrier: mu,
            kkt_norm: kkt,
            feas_norm: feas,
            objective: f / scale,
        });
        observer(&Iterate { iteration, x: x.clone(), y: y.clone(), barrier: mu });

        let finish = |status, x: DVector<f64>, trace| Outcome {
            x,
            status,
            iterations: iteration,
            kkt_norm: kkt,
            feasibility_norm: feas,
            trace,
        };
        if !(kkt.is_finite() && feas.is_finite()) {
            return finish(AcOpfStatus::Numerical, x, trace);
        }
        if kkt <= opts.tol_kkt && feas <= opts.tol_feas {
            return finish(AcOpfStatus::Converged, x, trace);
        }
        if iteration >= opts.max_iterations {
            return finish(AcOpfStatus::MaxIterations, x, trace);
        }

        let mu_floor = opts.tol_kkt / 10.0;
        while mu > mu_floor && stat.max(feas).max(compl(mu) / s_c) <= KAPPA_EPS * mu {
            mu = mu_floor.max((opts.barrier_shrink * mu).min(mu.powf(1.5)));
        }

        // primal-dual Newton system
        let mut w = problem.lagrangian_hessian(&x, &y);
        let mut rhs = DVector::zeros(n + m);
        let mut rx = -(&grad + jac.transpose() * &y);
        for (r, &j) in bounds.lo_idx.iter().enumerate() {
            w[(j, j)] += zl[r] / sl[r];
            rx[j] += mu / sl[r];
        }
        for (r, &j) in bounds.hi_idx.iter().enumerate() {
            w[(j, j)] += zu[r] / su[r];
            rx[j] -= mu / su[r];
        }
        rhs.rows_mut(0, n).copy_from(&rx);
        rhs.rows_mut(n, m).copy_from(&(-&c));
        let Some(step) = solve_kkt(&w, &jac, &rhs, &mut last_delta, mu) else {
            return finish(AcOpfStatus::Numerical, x, trace);
        };
        let dx = step.rows(0, n).into_owned();
        let dy = step.rows(n, m).into_owned();
        let dzl: Vec<f64> = bounds
            .lo_idx
            .iter()
            .enumerate()
            .map(|(r, &j)| mu / sl[r] - zl[r] - zl[r] / sl[r] * dx[j])
            .collect();
        let dzu: Vec<f64> = bounds
            .hi_idx
            .iter()
            .enumerate()
            .map(|(r, &j)| mu / su[r] - zu[r] + zu[r] / su[r] * dx[j])
            .collect();

        let tau = 0.99f64.max(1.0 - mu);
        let mut alpha_p = 1.0f64;
        for (r, &j) in bounds.lo_idx.iter().enumerate() {
            if dx[j] < 0.0 {
                alpha_p = alpha_p.min(-tau * sl[r] / dx[j]);
            }
        }
        for (r, &j) in bounds.hi_idx.iter().enumerate() {
            if dx[j] > 0.0 {
                alpha_p = alpha_p.min(tau * su[r] / dx[j]);
            }
        }
        let mut alpha_d = 1.0f64;
        for (z, dz) in zl.iter().zip(&dzl).chain(zu.iter().zip(&dzu)) {
            if *dz < 0.0 {
                alpha_d = alpha_d.min(-tau * z / dz);
            }
        }

        // accept on sufficient decrease of infeasibility or barrier objective
        let theta0 = c.iter().map(|v| v.abs()).sum::<f64>();
        let phi0 = barrier_value(f, &sl, &su, mu);
        let mut alpha = alpha_p;
        for _ in 0..MAX_BACKTRACK {
            let trial = &x + alpha * &dx;
            let (tl, tu) = bounds.slacks(&trial);
            let theta = problem.constraints(&trial).iter().map(|v| v.abs()).sum::<f64>();
            let phi = barrier_value(problem.objective(&trial), &tl, &tu, mu);
            if phi.is_finite() && (theta <= (1.0 - GAMMA) * theta0 || phi <= phi0 - GAMMA * theta0) {
                break;
            }
            if theta0 < 1e-12 && phi.is_finite() && phi <= phi0 {
                break;
            }
            alpha *= 0.5;
        }

        x += alpha * &dx;
        y += alpha * &dy;
        let (sl, su) = bounds.slacks(&x);
        for r in 0..zl.len() {
            let z = zl[r] + alpha_d * dzl[r];
            zl[r] = z.clamp(mu / (KAPPA_SIGMA * sl[r]), KAPPA_SIGMA * mu / sl[r]);
        }
        for r in 0..zu.len() {
            let z = zu[r] + alpha_d * dzu[r];
            zu[r] = z.clamp(mu / (KAPPA_SIGMA * su[r]), KAPPA_SIGMA * mu / su[r]);
        }
        iteration += 1;
    }
}
