//! Doob's maximal and `L^p` inequalities for the walk, evaluated exactly on
//! the law of `(Z_t, M_t)`.

use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::martingales::g_pq_exact;
use crate::rational::{ceil_to_i64, format_rational, int, to_f64};
use crate::walk::{joint_dist, Drift, JointDist, WalkParams};

/// Relative slack for comparisons made in floating point.
pub const FLOAT_RELATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InequalityError {
    #[error("lambda must be positive, got {0}")]
    Lambda(String),
    #[error("exponent must exceed 1, got {0}")]
    Exponent(String),
    #[error("the L^p bound needs p >= q (got {0})")]
    Regime(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Less,
    Equal,
    Greater,
}

impl Relation {
    fn of<T: PartialOrd>(lhs: &T, rhs: &T) -> Self {
        if lhs < rhs {
            Relation::Less
        } else if lhs > rhs {
            Relation::Greater
        } else {
            Relation::Equal
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Less => "<",
            Relation::Equal => "=",
            Relation::Greater => ">",
        }
    }
}

/// Both sides of the maximal inequality at one `(t, lambda)`.
///
/// `lhs = ceil(lambda) P(M_t >= lambda)` and `rhs = E[1{M_t >= lambda} Z_t]`.
/// Expected: `lhs <= rhs` for `p > q`, `lhs = rhs` for `p = q`,
/// `lhs >= rhs` for `p < q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoobReport {
    pub t: u32,
    pub lambda: BigRational,
    pub ceil_lambda: i64,
    pub prob: BigRational,
    pub lambda_prob: BigRational,
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub relation: Relation,
    pub regime: Drift,
}

impl DoobReport {
    pub fn holds(&self) -> bool {
        let chain_start = self.lambda_prob <= self.lhs;
        let expected = match self.regime {
            Drift::Up => self.relation != Relation::Greater,
            Drift::Balanced => self.relation == Relation::Equal,
            Drift::Down => self.relation != Relation::Less,
        };
        chain_start && expected
    }

    pub const CSV_HEADER: &'static str = "t,lambda,ceil_lambda,prob,lhs,rhs,relation,regime";

    pub fn csv_row(&self) -> String {
        let relation = match self.relation {
            Relation::Less => "<=",
            Relation::Equal => "=",
            Relation::Greater => ">=",
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            format_rational(&self.lambda),
            self.ceil_lambda,
            format_rational(&self.prob),
            format_rational(&self.lhs),
            format_rational(&self.rhs),
            relation,
            self.regime.label()
        )
    }
}

pub fn doob_maximal(params: &WalkParams, t: u32, lambda: &BigRational) -> Result<DoobReport, InequalityError> {
    doob_maximal_at(&joint_dist(params, t), params, lambda)
}

/// [`doob_maximal`] on a precomputed law.
pub fn doob_maximal_at(
    dist: &JointDist,
    params: &WalkParams,
    lambda: &BigRational,
) -> Result<DoobReport, InequalityError> {
    if !lambda.is_positive() {
        return Err(InequalityError::Lambda(format_rational(lambda)));
    }
    let ceil_lambda = ceil_to_i64(lambda).expect("lambda fits in i64");
    // {M_t >= lambda} = {M_t >= ceil(lambda)} on the integers
    let prob = dist.prob_max_at_least(ceil_lambda);
    let rhs = dist.expect(|z, m| if m >= ceil_lambda { int(z) } else { BigRational::zero() });
    let lhs = int(ceil_lambda) * &prob;
    Ok(DoobReport {
        t: dist.t(),
        lambda: lambda.clone(),
        ceil_lambda,
        lambda_prob: lambda * &prob,
        relation: Relation::of(&lhs, &rhs),
        prob,
        lhs,
        rhs,
        regime: params.drift(),
    })
}

/// `U_t = 1{M_t >= c} (M_t - c) - 1{M_t >= c} g_pq(M_t - Z_t)`, a martingale
/// started at zero for every level `c >= 1`.
pub fn maximal_martingale(params: &WalkParams, level: i64, z: i64, m: i64) -> BigRational {
    if m >= level {
        int(m - level) - g_pq_exact(params, m - z)
    } else {
        BigRational::zero()
    }
}

/// Exact `E[U_t]` for [`maximal_martingale`].
pub fn maximal_martingale_mean(dist: &JointDist, params: &WalkParams, level: i64) -> BigRational {
    dist.expect(|z, m| maximal_martingale(params, level, z, m))
}

/// Exponent of the `L^p` inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    /// Moments computed exactly.
    Integer(u32),
    /// Moments computed in `f64`.
    Real(f64),
}

impl Exponent {
    /// Integer exponents from an exact rational stay exact.
    pub fn from_rational(value: &BigRational) -> Result<Self, InequalityError> {
        if value <= &int(1) {
            return Err(InequalityError::Exponent(format_rational(value)));
        }
        if value.is_integer() {
            let k = value.to_integer().try_into().map_err(|_| InequalityError::Exponent(format_rational(value)))?;
            Ok(Exponent::Integer(k))
        } else {
            Ok(Exponent::Real(to_f64(value)))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Integer(k) => f64::from(k),
            Exponent::Real(x) => x,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Integer(k) => write!(f, "{k}"),
            Exponent::Real(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Moment {
    Exact(BigRational),
    Float(f64),
}

impl Moment {
    pub fn to_f64(&self) -> f64 {
        match self {
            Moment::Exact(v) => to_f64(v),
            Moment::Float(v) => *v,
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Moment::Exact(_) => "exact",
            Moment::Float(_) => "float",
        }
    }
}

impl fmt::Display for Moment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Moment::Exact(v) => write!(f, "{}", format_rational(v)),
            Moment::Float(v) => write!(f, "{v:e}"),
        }
    }
}

/// `E[M_t^k] <= (k / (k-1))^k E[|Z_t|^k]` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct LpReport {
    pub t: u32,
    pub exponent: Exponent,
    pub lhs: Moment,
    pub rhs: Moment,
    /// `(1 - k) E[M^k] + k E[M^{k-1} Z]`, nonnegative for `p >= q`;
    /// integer exponents only.
    pub intermediate: Option<BigRational>,
}

impl LpReport {
    pub fn holds(&self) -> bool {
        let main = match (&self.lhs, &self.rhs) {
            (Moment::Exact(l), Moment::Exact(r)) => l <= r,
            (l, r) => l.to_f64() <= r.to_f64() * (1.0 + FLOAT_RELATIVE_TOLERANCE),
        };
        main && self.intermediate.as_ref().is_none_or(|v| !v.is_negative())
    }
}

pub fn doob_lp(params: &WalkParams, t: u32, exponent: Exponent) -> Result<LpReport, InequalityError> {
    doob_lp_at(&joint_dist(params, t), params, exponent)
}

/// [`doob_lp`] on a precomputed law.
pub fn doob_lp_at(dist: &JointDist, params: &WalkParams, exponent: Exponent) -> Result<LpReport, InequalityError> {
    if params.drift() == Drift::Down {
        return Err(InequalityError::Regime(Drift::Down.label()));
    }
    match exponent {
        Exponent::Integer(k) => {
            if k <= 1 {
                return Err(InequalityError::Exponent(k.to_string()));
            }
            let k_us = k as usize;
            let lhs = dist.expect(|_, m| num_traits::pow(int(m), k_us));
            let abs_moment = dist.expect(|z, _| num_traits::pow(int(z.abs()), k_us));
            let constant = num_traits::pow(BigRational::new(k.into(), (k - 1).into()), k_us);
            let cross = dist.expect(|z, m| num_traits::pow(int(m), k_us - 1) * int(z));
            let intermediate = int(1 - i64::from(k)) * &lhs + int(i64::from(k)) * cross;
            Ok(LpReport {
                t: dist.t(),
                exponent,
                rhs: Moment::Exact(constant * abs_moment),
                lhs: Moment::Exact(lhs),
                intermediate: Some(intermediate),
            })
        }
        Exponent::Real(k) => {
            if k.is_nan() || k <= 1.0 || k.is_infinite() {
                return Err(InequalityError::Exponent(k.to_string()));
            }
            let lhs = dist.expect_f64(|_, m| (m as f64).powf(k));
            let abs_moment = dist.expect_f64(|z, _| (z.abs() as f64).powf(k));
            Ok(LpReport {
                t: dist.t(),
                exponent,
                lhs: Moment::Float(lhs),
                rhs: Moment::Float((k / (k - 1.0)).powf(k) * abs_moment),
                intermediate: None,
            })
        }
    }
}

/// `F(y) = sum_{j < y} k j^{k-1}`, the boundary function behind the `L^p`
/// bound; never exceeds `y^k`.
pub fn lp_boundary(exponent: Exponent, y: u32) -> Moment {
    match exponent {
        Exponent::Integer(k) => Moment::Exact(
            (0..y)
                .map(|j| int(i64::from(k)) * num_traits::pow(int(i64::from(j)), k as usize - 1))
                .sum(),
        ),
        Exponent::Real(k) => Moment::Float((0..y).map(|j| k * f64::from(j).powf(k - 1.0)).sum()),
    }
}
