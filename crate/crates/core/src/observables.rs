//! Per-patient inclusion penalties.
//!
//! Every observable model defines a negative log-likelihood over its latent
//! parameters (Poisson rates and log-normal pulls). Constraining the realized
//! observable to a value `c` and minimizing over the latents gives a profile
//! `g(c)` that is unimodal with its minimum at the nominal value. The
//! penalty for a patient is the difference between the minimum of `g` inside
//! the inclusion range and its minimum over the complement.

use crate::numerics::{find_root, log_factorial, RootBracket};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("ratio denominator count must be at least 1")]
    ZeroDenominator,
    #[error("area must be strictly positive, got {0}")]
    NonPositiveArea(f64),
    #[error("fixed observable value must be finite, got {0}")]
    NonFiniteValue(f64),
    #[error("systematic width must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("inclusion range needs lower < upper, got [{lower}, {upper})")]
    EmptyRange { lower: f64, upper: f64 },
}

/// Distribution of a patient's measured parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observable {
    Fixed { value: f64 },
    Poisson { count: u64 },
    PoissonDensity { count: u64, area: f64 },
    PoissonRatio { num: u64, denom: u64 },
}

/// An observable distribution together with multiplicative log-normal
/// systematic factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableModel {
    pub observable: Observable,
    pub systematics: Vec<f64>,
}

/// Half-open interval `[lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionRange {
    lower: f64,
    upper: f64,
}

impl InclusionRange {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ObservableError> {
        if !(lower < upper) {
            return Err(ObservableError::EmptyRange { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// `[min, +inf)`: the "at least" semantics of the command line.
    pub fn at_least(min: f64) -> Self {
        Self::new(min, f64::INFINITY).expect("finite lower bound")
    }

    /// `(-inf, max)`.
    pub fn below(max: f64) -> Self {
        Self::new(f64::NEG_INFINITY, max).expect("finite upper bound")
    }

    pub fn everything() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x < self.upper
    }

    /// The complement as a list of (at most two) half-open ranges.
    pub fn complement(&self) -> Vec<InclusionRange> {
        let mut out = Vec::with_capacity(2);
        if self.lower > f64::NEG_INFINITY {
            out.push(Self::below(self.lower));
        }
        if self.upper < f64::INFINITY {
            out.push(Self::at_least(self.upper));
        }
        out
    }
}

/// Minimum NLL with the observable inside and outside a range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPair {
    pub nll_in: f64,
    pub nll_out: f64,
}

impl PenaltyPair {
    /// `nll_in - nll_out`, i.e. `-log L_j^patient`. Infinite when one side is
    /// infeasible.
    pub fn delta(&self) -> f64 {
        match (self.nll_in.is_finite(), self.nll_out.is_finite()) {
            (true, true) => self.nll_in - self.nll_out,
            (false, true) => f64::INFINITY,
            (true, false) => f64::NEG_INFINITY,
            (false, false) => f64::NAN,
        }
    }

    /// NLL of the chosen branch.
    pub fn branch(&self, included: bool) -> f64 {
        if included {
            self.nll_in
        } else {
            self.nll_out
        }
    }
}

impl ObservableModel {
    pub fn new(observable: Observable, systematics: Vec<f64>) -> Result<Self, ObservableError> {
        match observable {
            Observable::Fixed { value } if !value.is_finite() => {
                return Err(ObservableError::NonFiniteValue(value))
            }
            Observable::PoissonDensity { area, .. } if !(area > 0.0 && area.is_finite()) => {
                return Err(ObservableError::NonPositiveArea(area))
            }
            Observable::PoissonRatio { denom: 0, .. } => return Err(ObservableError::ZeroDenominator),
            _ => {}
        }
        if let Some(&bad) = systematics.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(ObservableError::InvalidSigma(bad));
        }
        Ok(Self {
            observable,
            systematics,
        })
    }

    pub fn fixed(value: f64) -> Self {
        Self::new(Observable::Fixed { value }, Vec::new()).expect("finite value")
    }

    pub fn poisson(count: u64) -> Self {
        Self::new(Observable::Poisson { count }, Vec::new()).expect("always valid")
    }

    pub fn poisson_density(count: u64, area: f64) -> Result<Self, ObservableError> {
        Self::new(Observable::PoissonDensity { count, area }, Vec::new())
    }

    pub fn poisson_ratio(num: u64, denom: u64) -> Result<Self, ObservableError> {
        Self::new(Observable::PoissonRatio { num, denom }, Vec::new())
    }

    pub fn with_systematic(mut self, sigma: f64) -> Result<Self, ObservableError> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(ObservableError::InvalidSigma(sigma));
        }
        self.systematics.push(sigma);
        Ok(self)
    }

    /// Observable value with all latents at their maximum-likelihood values.
    pub fn nominal_value(&self) -> f64 {
        match self.observable {
            Observable::Fixed { value } => value,
            Observable::Poisson { count } => count as f64,
            Observable::PoissonDensity { count, area } => count as f64 / area,
            Observable::PoissonRatio { num, denom } => num as f64 / denom as f64,
        }
    }

    /// Independent pulls with widths `sigma_s` enter the observable only
    /// through `sum sigma_s theta_s`; minimizing `sum theta_s^2 / 2` at a fixed
    /// sum leaves a single pull of width `sqrt(sum sigma_s^2)`.
    fn effective_sigma(&self) -> f64 {
        self.systematics.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    fn is_count_model(&self) -> bool {
        !matches!(self.observable, Observable::Fixed { .. })
    }

    /// Minimum NLL with the realized observable pinned to `c`.
    pub fn boundary_minimum(&self, c: f64) -> f64 {
        let sigma = self.effective_sigma();
        match self.observable {
            Observable::Fixed { value } => {
                if sigma == 0.0 || value == 0.0 {
                    return if c == value { 0.0 } else { f64::INFINITY };
                }
                let ratio = c / value;
                if ratio > 0.0 {
                    let pull = ratio.ln() / sigma;
                    0.5 * pull * pull
                } else {
                    f64::INFINITY
                }
            }
            _ => {
                if c < 0.0 || c.is_nan() {
                    return f64::INFINITY;
                }
                if c == 0.0 || sigma == 0.0 {
                    // A log-normal factor cannot move a zero observable.
                    return self.count_profile(c);
                }
                self.count_profile_with_pull(c, sigma)
            }
        }
    }

    /// Profile of the count model without systematics at ratio/rate `rho`.
    fn count_profile(&self, rho: f64) -> f64 {
        match self.observable {
            Observable::Poisson { count } => poisson_nll(rho, count),
            Observable::PoissonDensity { count, area } => poisson_nll(rho * area, count),
            Observable::PoissonRatio { num, denom } => {
                let (n, d) = (num as f64, denom as f64);
                let total = n + d;
                if rho == 0.0 && num > 0 {
                    return f64::INFINITY;
                }
                let lambda_den = total / (rho + 1.0);
                let lambda_num = rho * lambda_den;
                lambda_num + lambda_den - crate::numerics::xlogy(n, lambda_num) - d * lambda_den.ln()
                    + log_factorial(num)
                    + log_factorial(denom)
            }
            Observable::Fixed { .. } => unreachable!("fixed observables have no count profile"),
        }
    }

    /// `rho * d/drho` of the count profile, which is what the pull couples to.
    fn count_elasticity(&self, rho: f64) -> f64 {
        match self.observable {
            Observable::Poisson { count } => rho - count as f64,
            Observable::PoissonDensity { count, area } => rho * area - count as f64,
            Observable::PoissonRatio { num, denom } => {
                -(num as f64) + (num + denom) as f64 * rho / (1.0 + rho)
            }
            Observable::Fixed { .. } => unreachable!("fixed observables have no count profile"),
        }
    }

    fn pull_bracket(&self, c: f64, sigma: f64) -> (f64, f64) {
        match self.observable {
            Observable::Poisson { count } => (-sigma * count as f64, sigma * c),
            Observable::PoissonDensity { count, area } => (-sigma * count as f64, sigma * c * area),
            Observable::PoissonRatio { num, denom } => (-sigma * num as f64, sigma * denom as f64),
            Observable::Fixed { .. } => unreachable!("fixed observables have no count profile"),
        }
    }

    /// Realized observable `c = rho * exp(sigma * theta)`. The objective
    /// `G(c exp(-sigma theta)) + theta^2 / 2` is convex in `theta`; its
    /// derivative `theta - sigma * E(rho)` is increasing and is zeroed here.
    fn count_profile_with_pull(&self, c: f64, sigma: f64) -> f64 {
        let rho_at = |theta: f64| c * (-sigma * theta).exp();
        let stationarity = |theta: f64| theta - sigma * self.count_elasticity(rho_at(theta));
        let (lo, hi) = self.pull_bracket(c, sigma);
        let theta = if lo == hi {
            lo
        } else {
            find_root(
                stationarity,
                RootBracket::new(lo, hi).with_tolerance(1e-14).with_max_iterations(500),
            )
            .unwrap_or_else(|_| bisect_increasing(stationarity, lo, hi))
        };
        self.count_profile(rho_at(theta)) + 0.5 * theta * theta
    }

    /// Minimum of `g` over `range`.
    pub fn min_nll_in(&self, range: &InclusionRange) -> f64 {
        let nominal = self.nominal_value();
        if range.contains(nominal) {
            return self.boundary_minimum(nominal);
        }
        if self.is_count_model() && range.upper() <= 0.0 {
            return f64::INFINITY;
        }
        let sigma = self.effective_sigma();
        if let Observable::Fixed { value } = self.observable {
            if sigma == 0.0 || value == 0.0 {
                return f64::INFINITY;
            }
        }
        // Unimodal profile: the constrained optimum sits on the nearer edge.
        if nominal < range.lower() {
            self.boundary_minimum(range.lower())
        } else {
            self.boundary_minimum(range.upper())
        }
    }

    /// Minimum of `g` over a union of ranges.
    pub fn min_nll_over(&self, ranges: &[InclusionRange]) -> f64 {
        ranges
            .iter()
            .map(|r| self.min_nll_in(r))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn penalty(&self, range: &InclusionRange) -> PenaltyPair {
        PenaltyPair {
            nll_in: self.min_nll_in(range),
            nll_out: self.min_nll_over(&range.complement()),
        }
    }
}

/// `lambda - k log lambda + log k!` with `0 log 0 = 0`.
fn poisson_nll(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::INFINITY };
    }
    lambda - k as f64 * lambda.ln() + log_factorial(k)
}

fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
