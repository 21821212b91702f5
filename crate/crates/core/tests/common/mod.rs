//! Seeded cohort generators shared by the integration tests.
#![allow(dead_code)]

use kombine::kmcore::InclusionVector;
use kombine::observables::PenaltyPair;
use kombine::pvalue::{cox_nll, fit_log_hazard, AssignmentVector, CoxMethod, CoxTime, Membership, TwoCurveProblem};
use kombine::solver::{inner_solve, SolverSettings, SurvivalProblem, UncertaintyMode};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub pairs: Vec<(f64, bool)>,
    pub penalties: Vec<PenaltyPair>,
    pub nominal: InclusionVector,
}

impl Cohort {
    pub fn problem(&self, settings: SolverSettings) -> SurvivalProblem {
        SurvivalProblem::from_penalties(&self.pairs, self.penalties.clone(), self.nominal.clone(), settings)
            .expect("generated cohorts are consistent")
    }
}

/// Survival times, rounded to `grid` when given so that ties occur.
pub fn survival_times(rng: &mut ChaCha8Rng, n: usize, censor_fraction: f64, grid: Option<f64>) -> Vec<(f64, bool)> {
    let exp = Exp::new(0.2).unwrap();
    (0..n)
        .map(|_| {
            let mut t: f64 = exp.sample(rng);
            if let Some(g) = grid {
                t = (t / g).ceil().max(1.0) * g;
            } else {
                t += 1e-3;
            }
            (t, rng.gen_bool(censor_fraction))
        })
        .collect()
}

/// `n` patients of which `ambiguous` have finite penalties on both sides.
/// Of the rest, most are locked in and some are locked out.
pub fn random_cohort(rng: &mut ChaCha8Rng, n: usize, ambiguous: usize, grid: Option<f64>) -> Cohort {
    let pairs = survival_times(rng, n, 0.25, grid);
    let mut penalties = Vec::with_capacity(n);
    let mut nominal = Vec::with_capacity(n);
    for j in 0..n {
        let included;
        let pair = if j < ambiguous {
            let cost = rng.gen_range(0.005..3.0);
            included = rng.gen_bool(0.6);
            if included {
                PenaltyPair { nll_in: 0.0, nll_out: cost }
            } else {
                PenaltyPair { nll_in: cost, nll_out: 0.0 }
            }
        } else {
            included = rng.gen_bool(0.85);
            if included {
                PenaltyPair { nll_in: 0.0, nll_out: f64::INFINITY }
            } else {
                PenaltyPair { nll_in: f64::INFINITY, nll_out: 0.0 }
            }
        };
        penalties.push(pair);
        nominal.push(included);
    }
    Cohort {
        pairs,
        penalties,
        nominal: InclusionVector::new(nominal),
    }
}

/// Cohort with only nominally included, locked patients.
pub fn locked_cohort(pairs: Vec<(f64, bool)>) -> Cohort {
    let n = pairs.len();
    Cohort {
        pairs,
        penalties: vec![PenaltyPair { nll_in: 0.0, nll_out: f64::INFINITY }; n],
        nominal: InclusionVector::all(n),
    }
}

/// Per-time at-risk and death counts straight from the definitions.
pub fn brute_counts(pairs: &[(f64, bool)], universe: &[bool], a: &[bool]) -> (Vec<f64>, Vec<u32>, Vec<u32>) {
    let mut times: Vec<f64> = pairs
        .iter()
        .zip(universe)
        .filter(|((_, c), &u)| u && !c)
        .map(|((t, _), _)| *t)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut r = Vec::new();
    let mut d = Vec::new();
    for &ti in &times {
        let mut ri = 0;
        let mut di = 0;
        for (j, &(tj, cj)) in pairs.iter().enumerate() {
            if !(universe[j] && a[j]) {
                continue;
            }
            if tj >= ti {
                ri += 1;
            }
            if tj == ti && !cj {
                di += 1;
            }
        }
        r.push(ri);
        d.push(di);
    }
    (times, r, d)
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iterations: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iterations {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid scan followed by golden-section refinement around the best cell.
pub fn grid_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, cells: usize) -> (f64, f64) {
    let h = (hi - lo) / cells as f64;
    let mut best = (lo, f(lo));
    for i in 1..=cells {
        let x = lo + h * i as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let a = (best.0 - h).max(lo);
    let b = (best.0 + h).min(hi);
    let refined = golden_min(&f, a, b, 200);
    // The endpoints of the refinement cell are candidates too.
    [refined, (a, f(a)), (b, f(b)), best]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
}

pub fn ln_fact(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `-[log C(r, d) + d log(1 - p) + (r - d) log p]` with `0 log 0 = 0`.
pub fn binom_nll(r: u32, d: u32, p: f64) -> f64 {
    let term = |k: u32, x: f64| if k == 0 { 0.0 } else { k as f64 * x.ln() };
    -(ln_fact(r) - ln_fact(d) - ln_fact(r - d) + term(d, 1.0 - p) + term(r - d, p))
}

pub fn binom_best(r: u32, d: u32) -> f64 {
    if r == 0 {
        0.0
    } else {
        binom_nll(r, d, 1.0 - d as f64 / r as f64)
    }
}

/// Constrained binomial minimum over `x_i = log p_i` with `sum x_i = log s`.
pub fn grid_oracle(r: &[u32], d: &[u32], s: f64) -> f64 {
    let ls = s.ln();
    let nll = |i: usize, x: f64| binom_nll(r[i], d[i], x.exp().min(1.0));
    match r.len() {
        1 => nll(0, ls),
        2 => grid_min(|x| nll(0, x) + nll(1, ls - x), ls, 0.0, 20_000).1,
        3 => {
            let inner = |x0: f64| {
                let rest = ls - x0;
                nll(0, x0) + grid_min(|x1| nll(1, x1) + nll(2, rest - x1), rest, 0.0, 300).1
            };
            grid_min(inner, ls, 0.0, 300).1
        }
        _ => unreachable!(),
    }
}

/// Total NLL at inclusion `a` with `S(t_n)` pinned to `s`, from uncollapsed
/// per-time counts.
pub fn inclusion_value(c: &Cohort, a: &[bool], n: usize, s: f64) -> f64 {
    let universe: Vec<bool> = c.penalties.iter().map(|p| p.nll_in.is_finite()).collect();
    let patient: f64 = (0..a.len()).map(|j| c.penalties[j].branch(a[j])).sum();
    let (_, r, d) = brute_counts(&c.pairs, &universe, a);
    let constrained = inner_solve(&r[..=n], &d[..=n], s).unwrap().nll;
    let tail: f64 = (n + 1..r.len()).map(|i| binom_best(r[i], d[i])).sum();
    constrained + tail + patient
}

/// Total NLL minimized over the inclusions of the ambiguous patients.
pub fn enumeration_oracle(c: &Cohort, n: usize, s: f64, mode: UncertaintyMode) -> f64 {
    let free: Vec<usize> = match mode {
        UncertaintyMode::Full => (0..c.pairs.len()).filter(|&j| c.penalties[j].delta().is_finite()).collect(),
        _ => Vec::new(),
    };
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << free.len()) {
        let mut a = c.nominal.as_slice().to_vec();
        for (k, &j) in free.iter().enumerate() {
            a[j] = mask & (1 << k) != 0;
        }
        best = best.min(inclusion_value(c, &a, n, s));
    }
    best
}

/// Two-curve cohort given by region NLLs `[curve 0, curve 1, neither]`.
#[derive(Debug, Clone)]
pub struct TwoCurveCohort {
    pub pairs: Vec<(f64, bool)>,
    pub region: Vec<[f64; 3]>,
    pub nominal: Vec<Membership>,
}

impl TwoCurveCohort {
    pub fn problem(&self) -> TwoCurveProblem {
        TwoCurveProblem::from_region_nll(&self.pairs, self.region.clone(), AssignmentVector(self.nominal.clone()), 25.0)
            .expect("generated cohorts are consistent")
    }

    /// Cox NLL (null: `H = 1`) plus region costs for one assignment.
    pub fn assignment_value(&self, a: &[Membership], method: CoxMethod, null: bool) -> f64 {
        let universe: Vec<bool> = self.region.iter().map(|c| c[0].is_finite() || c[1].is_finite()).collect();
        let in0: Vec<bool> = a.iter().map(|&m| m == Membership::Curve0).collect();
        let in1: Vec<bool> = a.iter().map(|&m| m == Membership::Curve1).collect();
        let (_, r0, d0) = brute_counts(&self.pairs, &universe, &in0);
        let (_, r1, d1) = brute_counts(&self.pairs, &universe, &in1);
        let times: Vec<CoxTime> = (0..r0.len())
            .map(|i| CoxTime { r0: r0[i], r1: r1[i], d0: d0[i], d1: d1[i] })
            .filter(|t| t.d0 + t.d1 > 0)
            .collect();
        let cox = if null { cox_nll(&times, 0.0, method) } else { fit_log_hazard(&times, method).1 };
        let cost: f64 = a
            .iter()
            .zip(&self.region)
            .map(|(&m, c)| {
                let floor = c.iter().copied().fold(f64::INFINITY, f64::min);
                c[m as usize] - floor
            })
            .sum();
        cox + cost
    }

    /// Minimum over all `3^k` memberships of the patients with more than one
    /// finite region.
    pub fn enumerate(&self, method: CoxMethod, null: bool) -> f64 {
        let free: Vec<usize> = (0..self.region.len())
            .filter(|&j| self.region[j].iter().filter(|c| c.is_finite()).count() > 1)
            .collect();
        let mut best = f64::INFINITY;
        let mut a = self.nominal.clone();
        for code in 0..3usize.pow(free.len() as u32) {
            let mut rest = code;
            for &j in &free {
                a[j] = Membership::ALL[rest % 3];
                rest /= 3;
            }
            if free.iter().any(|&j| !self.region[j][a[j] as usize].is_finite()) {
                continue;
            }
            best = best.min(self.assignment_value(&a, method, null));
        }
        best
    }
}

/// Random two-curve cohort; the first `free` patients may move between
/// regions at a cost in `[0.01, 2)`.
pub fn random_two_curve(rng: &mut ChaCha8Rng, n: usize, free: usize, grid: Option<f64>) -> TwoCurveCohort {
    let pairs = survival_times(rng, n, 0.2, grid);
    let mut region = Vec::with_capacity(n);
    let mut nominal = Vec::with_capacity(n);
    for j in 0..n {
        let home = Membership::ALL[rng.gen_range(0..2)];
        let mut costs = [f64::INFINITY; 3];
        costs[home as usize] = 0.0;
        if j < free {
            for c in costs.iter_mut().filter(|c| c.is_infinite()) {
                *c = rng.gen_range(0.01..2.0);
            }
        }
        region.push(costs);
        nominal.push(home);
    }
    TwoCurveCohort { pairs, region, nominal }
}

/// Unconstrained total NLL at inclusion `a`.
pub fn free_value(c: &Cohort, a: &[bool]) -> f64 {
    let universe: Vec<bool> = c.penalties.iter().map(|p| p.nll_in.is_finite()).collect();
    let patient: f64 = (0..a.len()).map(|j| c.penalties[j].branch(a[j])).sum();
    let (_, r, d) = brute_counts(&c.pairs, &universe, a);
    (0..r.len()).map(|i| binom_best(r[i], d[i])).sum::<f64>() + patient
}

/// Spread of the stationarity residual `d p / (1 - p) - (r - d)` across
/// groups with `0 < p < 1`; zero at a constrained optimum.
pub fn kkt_spread(r: &[u32], d: &[u32], p: &[f64]) -> f64 {
    let g: Vec<f64> = (0..r.len())
        .filter(|&i| r[i] > 0 && p[i] > 0.0 && p[i] < 1.0)
        .map(|i| d[i] as f64 * p[i] / (1.0 - p[i]) - (r[i] - d[i]) as f64)
        .collect();
    let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if g.len() < 2 {
        0.0
    } else {
        (hi - lo) / scale
    }
}
