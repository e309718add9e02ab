use nalgebra::DMatrix;

use super::{Branch, NetworkCase};

/// Dense bus admittance matrix `Y = G + jB`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// Largest absolute asymmetry over both parts.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for m in (i + 1)..n {
                worst = worst
                    .max((self.g[(i, m)] - self.g[(m, i)]).abs())
                    .max((self.b[(i, m)] - self.b[(m, i)]).abs());
            }
        }
        worst
    }
}

/// Series admittance `1 / (r + jx)` of a branch as `(g, b)`.
///
/// For positive `r` and `x` this gives `g > 0` and `b < 0`.
pub fn series_admittance(branch: &Branch) -> (f64, f64) {
    let denom = branch.r * branch.r + branch.x * branch.x;
    (branch.r / denom, -branch.x / denom)
}

/// Assembles the bus admittance matrix with the standard π branch model.
///
/// The tap sits on the from side: `Yff = (ys + j bc/2) / t²`, `Ytt = ys + j bc/2`,
/// `Yft = Ytf = -ys / t`. Bus shunts are added to the diagonal.
pub fn build_admittance(case: &NetworkCase) -> AdmittanceMatrix {
    let n = case.n_buses();
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for br in &case.branches {
        let (gs, bs) = series_admittance(br);
        let (f, t) = (br.from, br.to);
        let tap = br.tap;
        let half_charging = br.b_shunt / 2.0;
        g[(f, f)] += gs / (tap * tap);
        b[(f, f)] += (bs + half_charging) / (tap * tap);
        g[(t, t)] += gs;
        b[(t, t)] += bs + half_charging;
        g[(f, t)] -= gs / tap;
        b[(f, t)] -= bs / tap;
        g[(t, f)] -= gs / tap;
        b[(t, f)] -= bs / tap;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        g[(i, i)] += bus.g_shunt;
        b[(i, i)] += bus.b_shunt;
    }
    AdmittanceMatrix { g, b }
}

/// DC susceptance (weighted Laplacian) matrix: off-diagonal `-1/x` summed
/// over parallel branches, diagonal the negated sum of the row.
///
/// Resistance, shunts and taps are ignored, so every row sums to zero and
/// `(B θ)_i` is the DC injection at bus `i`.
pub fn build_dc_susceptance(case: &NetworkCase) -> DMatrix<f64> {
    let n = case.n_buses();
    let mut l = DMatrix::zeros(n, n);
    for br in &case.branches {
        let w = 1.0 / br.x;
        l[(br.from, br.to)] -= w;
        l[(br.to, br.from)] -= w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&m| m != i).map(|m| l[(i, m)]).sum();
        l[(i, i)] = -off;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::test_cases::two_bus;

    #[test]
    fn pure_reactance_inverse() {
        // r = 0 is rejected by validation; this only checks the arithmetic.
        let case = two_bus(0.0, 0.1, 1.0);
        let y = build_admittance(&case);
        assert!((y.b[(0, 1)] - 10.0).abs() < 1e-12);
        assert_eq!(y.g[(0, 1)], 0.0);
        assert!((y.b[(0, 0)] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn resistive_two_bus_entries() {
        // 1 / (0.01 + j0.1) = (0.01 - j0.1) / 0.0101
        let case = two_bus(0.01, 0.1, 1.0);
        let y = build_admittance(&case);
        let g12 = -0.01 / 0.0101;
        let b12 = 0.1 / 0.0101;
        assert!((y.g[(0, 1)] - g12).abs() < 1e-12);
        assert!((y.b[(0, 1)] - b12).abs() < 1e-12);
        assert!((y.g[(0, 1)] + 0.990_099_009_9).abs() < 1e-9);
        assert!((y.b[(0, 1)] - 9.900_990_099).abs() < 1e-8);
        assert!((y.g[(0, 0)] + g12).abs() < 1e-12);
    }

    #[test]
    fn case14_admittance_is_symmetric() {
        let case = crate::load_fixture("case14").unwrap();
        let y = build_admittance(&case);
        assert!(y.max_asymmetry() < 1e-12);
    }

    #[test]
    fn dc_susceptance_examples() {
        let case = two_bus(0.01, 0.1, 1.0);
        let l = build_dc_susceptance(&case);
        assert!((l[(0, 1)] + 10.0).abs() < 1e-12);
        assert!((l[(0, 0)] - 10.0).abs() < 1e-12);
        assert!((l[(1, 1)] - 10.0).abs() < 1e-12);

        let case3 = crate::load_fixture("case3").unwrap();
        let mut ring = case3.clone();
        for br in &mut ring.branches {
            br.x = 0.2;
        }
        let l = build_dc_susceptance(&ring);
        for i in 0..3 {
            assert!((l[(i, i)] - 10.0).abs() < 1e-12);
            for m in 0..3 {
                if m != i {
                    assert!((l[(i, m)] + 5.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dc_rows_sum_to_zero() {
        for name in ["case2", "case3", "case9", "case14"] {
            let case = crate::load_fixture(name).unwrap();
            let l = build_dc_susceptance(&case);
            for i in 0..case.n_buses() {
                assert!(l.row(i).sum().abs() < 1e-12, "{name} row {i}");
            }
        }
    }

    #[test]
    fn parallel_branches_are_summed() {
        let mut case = two_bus(0.01, 0.1, 1.0);
        let extra = case.branches[0].clone();
        case.branches.push(extra);
        let y = build_admittance(&case);
        assert!((y.b[(0, 1)] - 2.0 * 0.1 / 0.0101).abs() < 1e-12);
        assert!((build_dc_susceptance(&case)[(0, 1)] + 20.0).abs() < 1e-12);
    }

    #[test]
    fn shunt_free_rows_of_b_sum_to_zero() {
        let case = crate::load_fixture("case3").unwrap();
        let y = build_admittance(&case);
        for i in 0..3 {
            assert!(y.b.row(i).sum().abs() < 1e-12);
            assert!(y.g.row(i).sum().abs() < 1e-12);
        }
        // with line charging the row sum is the total shunt at the bus
        let case = crate::load_fixture("case9").unwrap();
        let y = build_admittance(&case);
        for i in 0..case.n_buses() {
            let shunt: f64 = case
                .branches
                .iter()
                .filter(|br| br.from == i || br.to == i)
                .map(|br| br.b_shunt / 2.0)
                .sum();
            assert!((y.b.row(i).sum() - shunt).abs() < 1e-10);
        }
    }
}
