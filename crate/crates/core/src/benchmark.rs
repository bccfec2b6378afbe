//! Closed-form values for the power payoff on a geometric Brownian motion
//! that jumps by `1 + j` at every exercise opportunity.
//!
//! With remaining time `s = T - t` the value with `K` remaining rights and no
//! opportunity at hand is `x^eta * e^(alpha s) * f_K(s)`, where
//!
//! * `alpha = mu eta + sigma^2 eta (eta - 1) / 2 - (r + lambda_tilde)`,
//! * `lambda = lambda_tilde (1 + j)^eta`,
//! * `f_1(s) = (lambda / alpha)(1 - e^(-alpha s))`,
//! * `f_(K+1)(s) = lambda * integral_0^s max(e^(-alpha u), f_K(u)) du`.
//!
//! The recursion has an explicit solution in terms of truncated exponential
//! series. Exercising is optimal as soon as the remaining time drops below
//! `s* = ln(1 + alpha / lambda) / alpha`, the point where the scaled value
//! crosses 1.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::model::{ArrivalSpec, MarketModel, PayoffSpec};
use crate::pathgen::StoppingProblem;

/// Number of exercise rights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rights {
    Finite(usize),
    Unlimited,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkParams {
    mu: f64,
    sigma: f64,
    eta: f64,
    r: f64,
    lambda_tilde: f64,
    j: f64,
    horizon: f64,
    alpha: f64,
    lambda: f64,
    s_star: f64,
}

impl BenchmarkParams {
    pub fn new(mu: f64, sigma: f64, eta: f64, r: f64, lambda_tilde: f64, j: f64, horizon: f64) -> Result<Self> {
        for (name, v) in [
            ("mu", mu),
            ("sigma", sigma),
            ("eta", eta),
            ("r", r),
            ("lambda_tilde", lambda_tilde),
            ("j", j),
            ("horizon", horizon),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("{v} is not finite")));
            }
        }
        if sigma < 0.0 {
            return Err(invalid("sigma", "must be non-negative"));
        }
        if eta <= 0.0 {
            return Err(invalid("eta", "must be positive"));
        }
        if lambda_tilde <= 0.0 {
            return Err(invalid("lambda_tilde", "must be positive"));
        }
        if j <= -1.0 {
            return Err(invalid("j", "jump factor 1 + j must be positive"));
        }
        if horizon <= 0.0 {
            return Err(invalid("horizon", "must be positive"));
        }
        let alpha = mu * eta + 0.5 * sigma * sigma * eta * (eta - 1.0) - (r + lambda_tilde);
        let lambda = lambda_tilde * (1.0 + j).powf(eta);
        if alpha == 0.0 {
            return Err(invalid("alpha", "the growth rate alpha must be non-zero"));
        }
        if 1.0 + alpha / lambda <= 0.0 {
            return Err(invalid("alpha", format!("1 + alpha / lambda = {} is not positive", 1.0 + alpha / lambda)));
        }
        let s_star = (alpha / lambda).ln_1p() / alpha;
        Ok(Self {
            mu,
            sigma,
            eta,
            r,
            lambda_tilde,
            j,
            horizon,
            alpha,
            lambda,
            s_star,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Arrival rate weighted by the jump, `lambda_tilde (1 + j)^eta`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Remaining time below which exercising immediately is optimal.
    pub fn s_star(&self) -> f64 {
        self.s_star
    }

    /// `lambda / (lambda + alpha)`, equal to `e^(-alpha s*)`.
    pub fn zeta(&self) -> f64 {
        self.lambda / (self.lambda + self.alpha)
    }

    /// Calendar time `T - s*`; negative when the horizon is shorter than `s*`.
    pub fn t_star(&self) -> f64 {
        self.horizon - self.s_star
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// The simulation counterpart started at `x0`.
    pub fn problem(&self, x0: f64) -> Result<StoppingProblem> {
        StoppingProblem::new(
            MarketModel::benchmark(self.mu, self.sigma, self.j, x0)?,
            ArrivalSpec::homogeneous(self.lambda_tilde, self.horizon)?,
            PayoffSpec::power(self.eta, self.r, self.horizon)?,
        )
    }

    /// `f_K(s)` for remaining time `s >= 0`.
    pub fn f(&self, k: usize, s: f64) -> f64 {
        let (a, l) = (self.alpha, self.lambda);
        if k == 0 {
            return 0.0;
        }
        if k == 1 || s <= self.s_star {
            return -(l / a) * (-a * s).exp_m1();
        }
        let u = s - self.s_star;
        let lu = l * u;
        // (-lambda/alpha)^K (e^(-alpha u) - S_(K-1)(-alpha u)) rewritten without cancellation
        let lead = (k as f64 * lu.ln() - ln_factorial(k)).exp();
        let y = -a * u;
        let mut ratio = 0.0;
        let mut term = 1.0;
        let mut i = 0usize;
        loop {
            ratio += term;
            i += 1;
            term *= y / (k + i) as f64;
            if term.abs() <= 1e-17 * ratio.abs() && (k + i) as f64 > y.abs() {
                break;
            }
        }
        let partial = truncated_exp_sum(k - 1, lu).unwrap_or(f64::INFINITY);
        self.zeta() * (partial + lead * ratio)
    }

    /// `v_K(t, x) / x^eta` at remaining time `s`.
    pub fn scaled_value(&self, rights: Rights, s: f64) -> f64 {
        match rights {
            Rights::Finite(k) => (self.alpha * s).exp() * self.f(k, s),
            Rights::Unlimited => {
                if s < self.s_star {
                    (self.lambda / self.alpha) * (self.alpha * s).exp_m1()
                } else {
                    ((self.lambda + self.alpha) * (s - self.s_star)).exp()
                }
            }
        }
    }

    fn check_point(&self, t: f64, x: f64) -> Result<()> {
        if !(t.is_finite() && x.is_finite()) {
            return Err(Error::NonFinite("closed-form value"));
        }
        if !(0.0..=self.horizon).contains(&t) {
            return Err(invalid("t", format!("{t} outside [0, {}]", self.horizon)));
        }
        if x <= 0.0 {
            return Err(invalid("x", "must be positive"));
        }
        Ok(())
    }
}

/// `S_K(x) = sum_(m=0)^K x^m / m!` with compensated summation.
pub fn truncated_exp_sum(k: usize, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("truncated exponential sum"));
    }
    let mut sum = 1.0f64;
    let mut comp = 0.0f64;
    let mut term = 1.0f64;
    for m in 1..=k {
        term *= x / m as f64;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
        if term == 0.0 {
            break;
        }
    }
    let total = sum + comp;
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::NonFinite("truncated exponential sum"))
    }
}

/// `e^(-x) S_K(x)`, the Poisson distribution function at `K` for `x >= 0`.
///
/// Terms are formed in log scale, so large `x` neither overflows nor underflows
/// prematurely.
pub fn scaled_exp_sum(k: usize, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("truncated exponential sum"));
    }
    if x <= 0.0 {
        return Ok((-x).exp() * truncated_exp_sum(k, x)?);
    }
    let lx = x.ln();
    let logs: Vec<f64> = (0..=k).map(|m| m as f64 * lx - ln_factorial(m) - x).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    Ok((top + sum.ln()).exp().min(1.0))
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Value with the given rights and no opportunity at hand.
pub fn value_closed_form(p: &BenchmarkParams, rights: Rights, t: f64, x: f64) -> Result<f64> {
    p.check_point(t, x)?;
    let v = x.powf(p.eta) * p.scaled_value(rights, p.horizon - t);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("closed-form value"))
    }
}

/// Value with the given rights when an opportunity is at hand: exercise now,
/// or pass it up and face one opportunity fewer.
pub fn value_at_opportunity(p: &BenchmarkParams, rights: Rights, t: f64, x: f64) -> Result<f64> {
    let rest = match rights {
        Rights::Finite(0) => return Err(invalid("rights", "at least one right is needed")),
        Rights::Finite(k) => Rights::Finite(k - 1),
        Rights::Unlimited => Rights::Unlimited,
    };
    let wait = value_closed_form(p, rest, t, x)?;
    Ok(x.powf(p.eta).max(wait))
}

/// Scaled value against remaining time, with the exercise boundary marked.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueCurve {
    /// `(T - t, v_K(t, x) / x^eta)`, remaining time increasing.
    pub points: Vec<(f64, f64)>,
    /// Remaining time at which the scaled value equals 1, when inside `[0, T]`.
    pub s_star: Option<f64>,
}

impl ValueCurve {
    /// Three columns; `boundary` is 1 on the row placed exactly at `s*`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("remaining_time,scaled_value,boundary\n");
        for &(r, v) in &self.points {
            let mark = self.s_star == Some(r);
            writeln!(s, "{r:.6},{v:.6},{}", mark as u8).unwrap();
        }
        s
    }
}

/// `n_points` evenly spaced remaining times on `[0, T]`, plus the point `s*`.
pub fn scaled_value_curve(p: &BenchmarkParams, rights: Rights, n_points: usize) -> Result<ValueCurve> {
    if n_points < 2 {
        return Err(invalid("n_points", "need at least two points"));
    }
    let s_star = (rights != Rights::Finite(0) && p.s_star <= p.horizon).then_some(p.s_star);
    let mut remaining: Vec<f64> = (0..n_points)
        .map(|i| p.horizon * i as f64 / (n_points - 1) as f64)
        .collect();
    if let Some(s) = s_star {
        remaining.push(s);
        remaining.sort_by(f64::total_cmp);
    }
    let points = remaining
        .into_iter()
        .map(|s| (s, p.scaled_value(rights, s)))
        .collect();
    Ok(ValueCurve { points, s_star })
}
