//! Binomial, patient-wise and total negative log-likelihoods.

use crate::kmcore::{InclusionVector, TimeTable};
use crate::numerics::{log_binomial, log_factorial, xlogx, xlogy};
use crate::observables::PenaltyPair;
use serde::Serialize;

/// Per-group survival probabilities `p_i^s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalVector(pub Vec<f64>);

impl SurvivalVector {
    /// `S = prod p_i`.
    pub fn survival(&self) -> f64 {
        self.0.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NllBreakdown {
    pub binomial: f64,
    pub patient: f64,
    pub multinomial_offset: f64,
    pub total: f64,
}

/// `-[log C(r, d) + d log(1 - p) + (r - d) log p]`, infinite when `p` sits on a
/// boundary with a nonzero opposing count.
pub fn binomial_term(r: u32, d: u32, p: f64) -> f64 {
    debug_assert!(d <= r);
    let (rf, df) = (r as f64, d as f64);
    -(log_binomial(r as u64, d as u64) + xlogy(df, 1.0 - p) + xlogy(rf - df, p))
}

pub fn binomial_nll(r: &[u32], d: &[u32], p: &SurvivalVector) -> f64 {
    assert_eq!(r.len(), d.len());
    assert_eq!(r.len(), p.0.len());
    r.iter()
        .zip(d)
        .zip(&p.0)
        .map(|((&r, &d), &p)| binomial_term(r, d, p))
        .sum()
}

/// Binomial NLL at the maximum-likelihood `p = 1 - d / r`.
pub fn binomial_minimum(r: u32, d: u32) -> f64 {
    if r == 0 || d == 0 || d == r {
        return 0.0;
    }
    let (rf, df) = (r as f64, d as f64);
    -(log_binomial(r as u64, d as u64) + xlogx(df) + xlogx(rf - df) - xlogx(rf))
}

/// NLL offset for collapsing consecutive times with deaths `deaths` into one
/// binomial term: `-[log(D!) - D log D - sum(log(d_i!) - d_i log d_i)]`.
pub fn multinomial_offset(deaths: &[u32]) -> f64 {
    let total: u32 = deaths.iter().sum();
    let members: f64 = deaths
        .iter()
        .map(|&d| log_factorial(d as u64) - xlogx(d as f64))
        .sum();
    -(log_factorial(total as u64) - xlogx(total as f64) - members)
}

/// `sum_j [a_j nll_in(j) + (1 - a_j) nll_out(j)]`.
pub fn patient_nll(penalties: &[PenaltyPair], a: &InclusionVector) -> f64 {
    assert_eq!(penalties.len(), a.len());
    penalties
        .iter()
        .enumerate()
        .map(|(j, p)| p.branch(a.get(j)))
        .sum()
}

/// Total NLL with `p` indexed by the table's collapse groups.
pub fn total_nll(
    table: &TimeTable,
    penalties: &[PenaltyPair],
    a: &InclusionVector,
    p: &SurvivalVector,
) -> NllBreakdown {
    let groups = table.collapse_groups();
    assert_eq!(p.0.len(), groups.len(), "one survival probability per collapse group");
    let counts = table.counts(a);
    let mut binomial = 0.0;
    let mut offset = 0.0;
    for (g, &pg) in groups.iter().zip(&p.0) {
        let r = counts.at_risk[g.start];
        let members = &counts.deaths[g.clone()];
        let d: u32 = members.iter().sum();
        binomial += binomial_term(r, d, pg);
        offset += multinomial_offset(members);
    }
    let patient = patient_nll(penalties, a);
    NllBreakdown {
        binomial,
        patient,
        multinomial_offset: offset,
        total: binomial + patient + offset,
    }
}

/// Cached `log n!` and `n log n` for small integers.
#[derive(Debug, Clone)]
pub(crate) struct LogTables {
    log_fact: Vec<f64>,
    x_log_x: Vec<f64>,
}

impl LogTables {
    pub(crate) fn new(max: usize) -> Self {
        Self {
            log_fact: (0..=max as u64).map(log_factorial).collect(),
            x_log_x: (0..=max).map(|n| xlogx(n as f64)).collect(),
        }
    }

    fn log_binomial(&self, n: u32, k: u32) -> f64 {
        self.log_fact[n as usize] - self.log_fact[k as usize] - self.log_fact[(n - k) as usize]
    }

    pub(crate) fn binomial_minimum(&self, r: u32, d: u32) -> f64 {
        if r == 0 || d == 0 || d == r {
            return 0.0;
        }
        -(self.log_binomial(r, d) + self.x_log_x[d as usize] + self.x_log_x[(r - d) as usize]
            - self.x_log_x[r as usize])
    }

    pub(crate) fn binomial_term(&self, r: u32, d: u32, p: f64) -> f64 {
        let (rf, df) = (r as f64, d as f64);
        -(self.log_binomial(r, d) + xlogy(df, 1.0 - p) + xlogy(rf - df, p))
    }

    pub(crate) fn multinomial_offset(&self, deaths: &[u32]) -> f64 {
        let mut total = 0u32;
        let mut members = 0.0;
        for &d in deaths {
            total += d;
            members += self.log_fact[d as usize] - self.x_log_x[d as usize];
        }
        -(self.log_fact[total as usize] - self.x_log_x[total as usize] - members)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_fit_vs_nominal_values() {
        let five_of_eight = -binomial_term(8, 3, 5.0 / 8.0);
        assert!((five_of_eight + 1.267).abs() < 1e-3);
        let four_of_seven = -binomial_term(7, 3, 4.0 / 7.0);
        let direct = 35f64.ln() + 3.0 * (3.0f64 / 7.0).ln() + 4.0 * (4.0f64 / 7.0).ln();
        assert!((four_of_seven - direct).abs() < 1e-12);
        assert!((four_of_seven + 1.2250).abs() < 1e-4);
    }

    #[test]
    fn certain_survival() {
        assert_eq!(binomial_term(5, 0, 1.0), 0.0);
        assert_eq!(binomial_term(5, 5, 0.0), 0.0);
        assert_eq!(binomial_term(5, 1, 1.0), f64::INFINITY);
        assert_eq!(binomial_term(5, 4, 0.0), f64::INFINITY);
    }

    #[test]
    fn minimum_is_at_empirical_rate() {
        for (r, d) in [(10, 2), (7, 3), (100, 37), (3, 1)] {
            let p_hat = 1.0 - d as f64 / r as f64;
            let min = binomial_minimum(r, d);
            assert!((binomial_term(r, d, p_hat) - min).abs() < 1e-12);
            for dp in [-1e-3, 1e-3] {
                assert!(binomial_term(r, d, p_hat + dp) > min);
            }
        }
    }

    #[test]
    fn multinomial_offsets() {
        assert!((multinomial_offset(&[1, 1]) - 2f64.ln()).abs() < 1e-15);
        assert!(multinomial_offset(&[2, 0]).abs() < 1e-15);
        assert_eq!(multinomial_offset(&[3]), 0.0);
        assert_eq!(multinomial_offset(&[0, 0]), 0.0);
        let tables = LogTables::new(10);
        assert!((tables.multinomial_offset(&[1, 1]) - 2f64.ln()).abs() < 1e-15);
        assert!((tables.binomial_minimum(7, 3) - binomial_minimum(7, 3)).abs() < 1e-13);
    }

    #[test]
    fn total_is_sum_of_parts() {
        let table = TimeTable::from_times(
            &[(1.0, false), (2.0, false), (3.0, false), (4.0, true)],
            &InclusionVector::all(4),
        );
        let penalties = vec![
            PenaltyPair {
                nll_in: 0.0,
                nll_out: 1.0
            };
            4
        ];
        let a = InclusionVector::all(4);
        let p = SurvivalVector(vec![0.25]);
        let b = total_nll(&table, &penalties, &a, &p);
        assert!((b.total - (b.binomial + b.patient + b.multinomial_offset)).abs() < 1e-15);
        assert_eq!(b.patient, 0.0);
        // Three single deaths collapse with offset log(3!) - 3 log 3 sign-flipped.
        assert!((b.multinomial_offset - (3.0 * 3f64.ln() - 6f64.ln())).abs() < 1e-12);
        assert!((b.binomial - binomial_term(4, 3, 0.25)).abs() < 1e-12);
    }

    #[test]
    fn patient_nll_sums_branches() {
        let penalties = vec![
            PenaltyPair {
                nll_in: 0.0,
                nll_out: f64::INFINITY,
            },
            PenaltyPair {
                nll_in: 1.5,
                nll_out: 0.5,
            },
        ];
        let a = InclusionVector::new(vec![true, false]);
        assert_eq!(patient_nll(&penalties, &a), 0.5);
        let a = InclusionVector::new(vec![false, false]);
        assert_eq!(patient_nll(&penalties, &a), f64::INFINITY);
    }
}
