//! Per-bus sign certificates against `AC injection = DC injection` at flat
//! voltage magnitudes.
//!
//! With branch series conductance `g > 0` and susceptance `b < 0`, the
//! equality at bus `i` rearranges to `Σ g cos θ_im = Σ b (θ_im − sin θ_im)`.
//! For `0 ≤ θ_im < π/2` the left side is positive and the right side is not,
//! and for `−π/2 < θ_im < 0` the differentiated pair
//! `−Σ g sin θ_im` / `Σ b (1 − cos θ_im)` separates the same way.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::netmodel::{series_admittance, NetworkCase};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    /// `cos θ ≈ 1`, `sin θ ≈ θ`: the pair is `(Σ g, 0)`.
    SmallAngle,
    /// All incident angle differences non-negative.
    Case1,
    /// All incident angle differences negative; differentiated form.
    Case2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    /// External bus id.
    pub bus: usize,
    /// Branch index when the bus has mixed-sign incident angles and is
    /// certified one branch at a time.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub branch: Option<usize>,
    pub case_tag: CaseTag,
    pub lhs_value: f64,
    pub rhs_value: f64,
    /// `lhs − rhs` when `lhs > 0 ≥ rhs`; otherwise `min(lhs, −rhs) ≤ 0`.
    pub margin: f64,
}

impl CertificateEntry {
    fn new(bus: usize, branch: Option<usize>, case_tag: CaseTag, lhs: f64, rhs: f64) -> Self {
        let margin = if lhs > 0.0 && rhs <= 0.0 { lhs - rhs } else { lhs.min(-rhs) };
        CertificateEntry { bus, branch, case_tag, lhs_value: lhs, rhs_value: rhs, margin }
    }

    /// True when the two sides have strictly opposite signs.
    pub fn strictly_separated(&self) -> bool {
        self.lhs_value > 0.0 && self.rhs_value < 0.0
    }
}

/// `(branch, g, b, θ_im)`.
type Term = (usize, f64, f64, f64);

/// Terms for each branch touching each bus.
fn incident(case: &NetworkCase, theta: &[f64]) -> Result<Vec<Vec<Term>>> {
    if theta.len() != case.n_buses() {
        return Err(Error::InvalidArgument(format!(
            "theta has length {}, expected {}",
            theta.len(),
            case.n_buses()
        )));
    }
    let mut out = vec![Vec::new(); case.n_buses()];
    for (k, br) in case.branches.iter().enumerate() {
        let (g, b) = series_admittance(br);
        let d = theta[br.from] - theta[br.to];
        if d.abs() >= FRAC_PI_2 {
            return Err(Error::InvalidArgument(format!(
                "branch {k} angle difference {d:.4} rad outside (-pi/2, pi/2)"
            )));
        }
        out[br.from].push((k, g, b, d));
        out[br.to].push((k, g, b, -d));
    }
    Ok(out)
}

fn case1(terms: &[Term]) -> (f64, f64) {
    terms.iter().fold((0.0, 0.0), |(l, r), &(_, g, b, t)| {
        (l + g * t.cos(), r + b * (t - t.sin()))
    })
}

fn case2(terms: &[Term]) -> (f64, f64) {
    terms.iter().fold((0.0, 0.0), |(l, r), &(_, g, b, t)| {
        (l - g * t.sin(), r + b * (1.0 - t.cos()))
    })
}

/// One entry per bus with uniform-sign incident angles, one per incident
/// branch at mixed-sign buses. Buses without branches are skipped.
pub fn sign_certificate(case: &NetworkCase, theta: &[f64]) -> Result<Vec<CertificateEntry>> {
    let mut entries = Vec::new();
    for (i, terms) in incident(case, theta)?.iter().enumerate() {
        if terms.is_empty() {
            continue;
        }
        let id = case.buses[i].id;
        if terms.iter().all(|t| t.3 >= 0.0) {
            let (l, r) = case1(terms);
            entries.push(CertificateEntry::new(id, None, CaseTag::Case1, l, r));
        } else if terms.iter().all(|t| t.3 < 0.0) {
            let (l, r) = case2(terms);
            entries.push(CertificateEntry::new(id, None, CaseTag::Case2, l, r));
        } else {
            for t in terms {
                let one = std::slice::from_ref(t);
                let (tag, (l, r)) = if t.3 >= 0.0 {
                    (CaseTag::Case1, case1(one))
                } else {
                    (CaseTag::Case2, case2(one))
                };
                entries.push(CertificateEntry::new(id, Some(t.0), tag, l, r));
            }
        }
    }
    Ok(entries)
}

/// Small-angle form: `Σ g` against zero at every bus with branches.
pub fn small_angle_certificate(case: &NetworkCase, theta: &[f64]) -> Result<Vec<CertificateEntry>> {
    Ok(incident(case, theta)?
        .iter()
        .enumerate()
        .filter(|(_, terms)| !terms.is_empty())
        .map(|(i, terms)| {
            let l = terms.iter().map(|t| t.1).sum();
            CertificateEntry::new(case.buses[i].id, None, CaseTag::SmallAngle, l, 0.0)
        })
        .collect())
}
