//! Discrete search over inclusion vectors.

use super::{SearchStrategy, SurvivalProblem};
use crate::kmcore::{Counts, InclusionVector};

/// Box bounds larger than this fall back to the trivial bound of zero.
const MAX_BOX_CELLS: u32 = 512;

impl SurvivalProblem {
    /// Minimizes `leaf(counts, a) + patient_cost(a)` over inclusion vectors that
    /// agree with the nominal one outside `vars`.
    ///
    /// `leaf` must be bounded below by `sum_i B*(r_i, d_i)`, the binomial NLL
    /// at the per-time maximum-likelihood probabilities; this is what the
    /// branch-and-bound lower bound relies on.
    pub(crate) fn minimize_inclusions<F>(
        &self,
        vars: &[usize],
        strategy: SearchStrategy,
        mut leaf: F,
    ) -> (f64, InclusionVector)
    where
        F: FnMut(&Counts, &InclusionVector) -> f64,
    {
        match strategy {
            SearchStrategy::Exhaustive => self.enumerate(vars, &mut leaf),
            SearchStrategy::BranchAndBound => {
                let mut dfs = Dfs::new(self, vars);
                dfs.visit(0, &mut leaf);
                (dfs.best, dfs.best_a)
            }
        }
    }

    fn enumerate<F>(&self, vars: &[usize], leaf: &mut F) -> (f64, InclusionVector)
    where
        F: FnMut(&Counts, &InclusionVector) -> f64,
    {
        assert!(vars.len() < 31, "exhaustive enumeration over {} patients", vars.len());
        let mut best = f64::INFINITY;
        let mut best_a = self.nominal.clone();
        for mask in 0u32..(1u32 << vars.len()) {
            let mut a = self.nominal.clone();
            for (k, &j) in vars.iter().enumerate() {
                // Bit clear means the nominal side, so mask 0 is the nominal vector.
                let flip = mask & (1 << k) != 0;
                a.set(j, self.nominal.get(j) ^ flip);
            }
            let cost = self.relative_patient_cost(&a);
            if !cost.is_finite() {
                continue;
            }
            let counts = self.table.counts(&a);
            let value = leaf(&counts, &a) + cost;
            if value < best {
                best = value;
                best_a = a;
            }
        }
        (best, best_a)
    }

    /// Lower bound of `B*(r, d)` over `r in [r0, r0 + ru]`, `d in [d0, d0 + du]`.
    fn box_minimum(&self, r0: u32, ru: u32, d0: u32, du: u32) -> f64 {
        if d0 == 0 {
            return 0.0;
        }
        // Everyone at risk dying is certain at the maximum likelihood.
        if r0.max(d0) <= (r0 + ru).min(d0 + du) {
            return 0.0;
        }
        if (ru + 1) * (du + 1) > MAX_BOX_CELLS {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for r in r0..=r0 + ru {
            for d in d0..=(d0 + du).min(r) {
                best = best.min(self.tables.binomial_minimum(r, d));
            }
        }
        best
    }
}

struct Dfs<'p> {
    problem: &'p SurvivalProblem,
    vars: Vec<usize>,
    /// `sum_{k' >= k} min(cost)` over the undecided variables.
    suffix_min: Vec<f64>,
    decided: Counts,
    undecided: Counts,
    a: InclusionVector,
    cost: f64,
    best: f64,
    best_a: InclusionVector,
}

impl<'p> Dfs<'p> {
    fn new(problem: &'p SurvivalProblem, vars: &[usize]) -> Self {
        let mut a = problem.nominal.clone();
        for &j in vars {
            a.set(j, false);
        }
        let decided = problem.table.counts(&a);
        let mut only_vars = InclusionVector::none(a.len());
        for &j in vars {
            only_vars.set(j, true);
        }
        let undecided = problem.table.counts(&only_vars);
        let fixed_cost: f64 = (0..a.len())
            .filter(|j| !vars.contains(j))
            .map(|j| problem.cost(j, a.get(j)))
            .sum();
        let mut suffix_min = vec![0.0; vars.len() + 1];
        for k in (0..vars.len()).rev() {
            let c = problem.costs[vars[k]];
            suffix_min[k] = suffix_min[k + 1] + c[0].min(c[1]);
        }
        Self {
            problem,
            vars: vars.to_vec(),
            suffix_min,
            decided,
            undecided,
            a,
            cost: fixed_cost,
            best: f64::INFINITY,
            best_a: problem.nominal.clone(),
        }
    }

    fn binomial_bound(&self) -> f64 {
        (0..self.decided.at_risk.len())
            .map(|i| {
                self.problem.box_minimum(
                    self.decided.at_risk[i],
                    self.undecided.at_risk[i],
                    self.decided.deaths[i],
                    self.undecided.deaths[i],
                )
            })
            .sum()
    }

    fn shift(counts: &mut Counts, problem: &SurvivalProblem, j: usize, add: bool) {
        if !problem.table.in_universe(j) {
            return;
        }
        let len = problem.table.risk_len(j);
        for r in &mut counts.at_risk[..len] {
            if add {
                *r += 1;
            } else {
                *r -= 1;
            }
        }
        if let Some(i) = problem.table.death_index(j) {
            if add {
                counts.deaths[i] += 1;
            } else {
                counts.deaths[i] -= 1;
            }
        }
    }

    fn visit<F>(&mut self, k: usize, leaf: &mut F)
    where
        F: FnMut(&Counts, &InclusionVector) -> f64,
    {
        if k == self.vars.len() {
            let value = leaf(&self.decided, &self.a) + self.cost;
            if value < self.best {
                self.best = value;
                self.best_a = self.a.clone();
            }
            return;
        }
        let bound = self.cost + self.suffix_min[k] + self.binomial_bound();
        if bound >= self.best {
            return;
        }
        let j = self.vars[k];
        let problem = self.problem;
        Self::shift(&mut self.undecided, problem, j, false);
        let nominal = problem.nominal.get(j);
        for included in [nominal, !nominal] {
            let c = problem.cost(j, included);
            if !c.is_finite() {
                continue;
            }
            if included {
                Self::shift(&mut self.decided, problem, j, true);
            }
            self.a.set(j, included);
            self.cost += c;
            self.visit(k + 1, leaf);
            self.cost -= c;
            self.a.set(j, false);
            if included {
                Self::shift(&mut self.decided, problem, j, false);
            }
        }
        Self::shift(&mut self.undecided, problem, j, true);
    }
}
