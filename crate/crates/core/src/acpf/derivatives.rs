//! Polar-form bus injections and their first and second derivatives.

use nalgebra::DMatrix;

use crate::netmodel::AdmittanceMatrix;

/// `P_i = V_i Σ V_m (G cos θ_im + B sin θ_im)`,
/// `Q_i = V_i Σ V_m (G sin θ_im − B cos θ_im)`.
pub fn injections(adm: &AdmittanceMatrix, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = adm.n();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut sp, mut sq) = (0.0, 0.0);
        for m in 0..n {
            let (g, b) = (adm.g[(i, m)], adm.b[(i, m)]);
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let (s, c) = (theta[i] - theta[m]).sin_cos();
            sp += v[m] * (g * c + b * s);
            sq += v[m] * (g * s - b * c);
        }
        p[i] = v[i] * sp;
        q[i] = v[i] * sq;
    }
    (p, q)
}

/// Full n×n blocks of the injection Jacobian with respect to all angles and
/// magnitudes, slack included.
#[derive(Debug, Clone)]
pub struct InjectionJacobian {
    pub p_theta: DMatrix<f64>,
    pub p_v: DMatrix<f64>,
    pub q_theta: DMatrix<f64>,
    pub q_v: DMatrix<f64>,
}

pub fn injection_jacobian(adm: &AdmittanceMatrix, v: &[f64], theta: &[f64]) -> InjectionJacobian {
    let n = adm.n();
    let (p, q) = injections(adm, v, theta);
    let mut jac = InjectionJacobian {
        p_theta: DMatrix::zeros(n, n),
        p_v: DMatrix::zeros(n, n),
        q_theta: DMatrix::zeros(n, n),
        q_v: DMatrix::zeros(n, n),
    };
    for i in 0..n {
        for m in 0..n {
            if m == i {
                continue;
            }
            let (g, b) = (adm.g[(i, m)], adm.b[(i, m)]);
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let (s, c) = (theta[i] - theta[m]).sin_cos();
            let gs_bc = g * s - b * c;
            let gc_bs = g * c + b * s;
            jac.p_theta[(i, m)] = v[i] * v[m] * gs_bc;
            jac.p_v[(i, m)] = v[i] * gc_bs;
            jac.q_theta[(i, m)] = -v[i] * v[m] * gc_bs;
            jac.q_v[(i, m)] = v[i] * gs_bc;
        }
        let (gii, bii) = (adm.g[(i, i)], adm.b[(i, i)]);
        jac.p_theta[(i, i)] = -q[i] - bii * v[i] * v[i];
        jac.p_v[(i, i)] = p[i] / v[i] + gii * v[i];
        jac.q_theta[(i, i)] = p[i] - gii * v[i] * v[i];
        jac.q_v[(i, i)] = q[i] / v[i] - bii * v[i];
    }
    jac
}

/// Hessian of `Σ_i λ_i P_i + μ_i Q_i` over `[θ; V]` (2n×2n, slack included).
///
/// Each ordered pair contributes `V_i V_m h(θ_i − θ_m)` with
/// `h = λ_i (G cos + B sin) + μ_i (G sin − B cos)`, so `h'' = −h`; the diagonal
/// term is `V_i² (λ_i G_ii − μ_i B_ii)`.
pub fn weighted_injection_hessian(
    adm: &AdmittanceMatrix,
    v: &[f64],
    theta: &[f64],
    lambda: &[f64],
    mu: &[f64],
) -> DMatrix<f64> {
    let n = adm.n();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (vi, ti) = (i + n, i);
        h[(vi, vi)] += 2.0 * (lambda[i] * adm.g[(i, i)] - mu[i] * adm.b[(i, i)]);
        for m in 0..n {
            if m == i {
                continue;
            }
            let (g, b) = (adm.g[(i, m)], adm.b[(i, m)]);
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let (s, c) = (theta[i] - theta[m]).sin_cos();
            let f = lambda[i] * (g * c + b * s) + mu[i] * (g * s - b * c);
            let df = lambda[i] * (b * c - g * s) + mu[i] * (g * c + b * s);
            let (vm, tm) = (m + n, m);
            let vv = v[i] * v[m];

            h[(ti, ti)] -= vv * f;
            h[(tm, tm)] -= vv * f;
            h[(ti, tm)] += vv * f;
            h[(tm, ti)] += vv * f;

            for (a, bb, val) in [
                (ti, vi, v[m] * df),
                (ti, vm, v[i] * df),
                (tm, vi, -v[m] * df),
                (tm, vm, -v[i] * df),
            ] {
                h[(a, bb)] += val;
                h[(bb, a)] += val;
            }
            h[(vi, vm)] += f;
            h[(vm, vi)] += f;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::build_admittance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let v = (0..n).map(|_| rng.random_range(0.9..1.1)).collect();
        let t = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
        (v, t)
    }

    #[test]
    fn flat_start_injection_is_row_sum() {
        let case = crate::load_fixture("case3").unwrap();
        let adm = build_admittance(&case);
        let (p, q) = injections(&adm, &[1.0; 3], &[0.0; 3]);
        for i in 0..3 {
            let gs: f64 = (0..3).map(|m| adm.g[(i, m)]).sum();
            let bs: f64 = (0..3).map(|m| adm.b[(i, m)]).sum();
            assert!((p[i] - gs).abs() < 1e-14);
            assert!((q[i] + bs).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let case = crate::load_fixture("case9").unwrap();
        let adm = build_admittance(&case);
        let n = case.n_buses();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (v, t) = random_point(n, &mut rng);
        let jac = injection_jacobian(&adm, &v, &t);
        let h = 1e-6;
        for k in 0..n {
            let (mut tp, mut tm) = (t.clone(), t.clone());
            tp[k] += h;
            tm[k] -= h;
            let (pp, qp) = injections(&adm, &v, &tp);
            let (pm, qm) = injections(&adm, &v, &tm);
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp[k] += h;
            vm[k] -= h;
            let (pvp, qvp) = injections(&adm, &vp, &t);
            let (pvm, qvm) = injections(&adm, &vm, &t);
            for i in 0..n {
                assert!((jac.p_theta[(i, k)] - (pp[i] - pm[i]) / (2.0 * h)).abs() < 1e-6);
                assert!((jac.q_theta[(i, k)] - (qp[i] - qm[i]) / (2.0 * h)).abs() < 1e-6);
                assert!((jac.p_v[(i, k)] - (pvp[i] - pvm[i]) / (2.0 * h)).abs() < 1e-6);
                assert!((jac.q_v[(i, k)] - (qvp[i] - qvm[i]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hessian_matches_differenced_jacobian() {
        let case = crate::load_fixture("case14").unwrap();
        let adm = build_admittance(&case);
        let n = case.n_buses();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (v, t) = random_point(n, &mut rng);
        let lam: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let hess = weighted_injection_hessian(&adm, &v, &t, &lam, &mu);

        // gradient of Σ λP + μQ over [θ; V]
        let grad = |v: &[f64], t: &[f64]| -> Vec<f64> {
            let j = injection_jacobian(&adm, v, t);
            let mut out = vec![0.0; 2 * n];
            for k in 0..n {
                for i in 0..n {
                    out[k] += lam[i] * j.p_theta[(i, k)] + mu[i] * j.q_theta[(i, k)];
                    out[n + k] += lam[i] * j.p_v[(i, k)] + mu[i] * j.q_v[(i, k)];
                }
            }
            out
        };
        let h = 1e-6;
        for k in 0..2 * n {
            let (mut vp, mut tp, mut vm, mut tm) = (v.clone(), t.clone(), v.clone(), t.clone());
            if k < n {
                tp[k] += h;
                tm[k] -= h;
            } else {
                vp[k - n] += h;
                vm[k - n] -= h;
            }
            let gp = grad(&vp, &tp);
            let gm = grad(&vm, &tm);
            for r in 0..2 * n {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                assert!(
                    (hess[(r, k)] - fd).abs() < 1e-5 * fd.abs().max(1.0),
                    "({r},{k}) {} vs {fd}",
                    hess[(r, k)]
                );
            }
        }
        assert!((&hess - hess.transpose()).amax() < 1e-12);
    }
}
