//! The walk `Z` with steps `+1, -1, 0` of probabilities `p, q, r`, its running
//! maximum `M`, and the exact law of the pair `(Z_t, M_t)`.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rational::{format_rational, to_f64};

/// Identifier of the generator behind every simulation, recorded in reports.
pub const PRNG_ID: &str = "chacha8 (rand_chacha 0.9, seed_from_u64 + set_stream)";

/// Largest horizon [`enumerate_paths`] accepts unless a cap is given.
pub const DEFAULT_ORACLE_CAP: u32 = 14;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalkError {
    #[error("step probabilities must satisfy p > 0, q > 0, r >= 0 (got p={p}, q={q}, r={r})")]
    Sign { p: String, q: String, r: String },
    #[error("step probabilities must sum to 1 exactly (sum is {sum})")]
    Normalization { sum: String },
    #[error("oracle too large: horizon {t} exceeds enumeration cap {cap}")]
    OracleTooLarge { t: u32, cap: u32 },
    #[error("invalid joint law: {0}")]
    InvalidJoint(String),
}

/// Step law of the walk, exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WalkParams {
    p: BigRational,
    q: BigRational,
    r: BigRational,
}

/// Sign of `p - q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Drift {
    Up,
    Balanced,
    Down,
}

impl Drift {
    pub fn label(self) -> &'static str {
        match self {
            Drift::Up => "p>q",
            Drift::Balanced => "p=q",
            Drift::Down => "p<q",
        }
    }
}

impl WalkParams {
    pub fn new(p: BigRational, q: BigRational, r: BigRational) -> Result<Self, WalkError> {
        if !p.is_positive() || !q.is_positive() || r.is_negative() {
            return Err(WalkError::Sign {
                p: format_rational(&p),
                q: format_rational(&q),
                r: format_rational(&r),
            });
        }
        let sum = &p + &q + &r;
        if !sum.is_one() {
            return Err(WalkError::Normalization {
                sum: format_rational(&sum),
            });
        }
        Ok(Self { p, q, r })
    }

    /// `r` is taken as `1 - p - q`.
    pub fn from_pq(p: BigRational, q: BigRational) -> Result<Self, WalkError> {
        let r = BigRational::one() - &p - &q;
        Self::new(p, q, r)
    }

    /// Symmetric walk `p = q = 1/2`.
    pub fn simple() -> Self {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        Self::new(half.clone(), half, BigRational::zero()).expect("valid")
    }

    pub fn p(&self) -> &BigRational {
        &self.p
    }

    pub fn q(&self) -> &BigRational {
        &self.q
    }

    pub fn r(&self) -> &BigRational {
        &self.r
    }

    pub fn drift(&self) -> Drift {
        match self.p.cmp(&self.q) {
            std::cmp::Ordering::Greater => Drift::Up,
            std::cmp::Ordering::Equal => Drift::Balanced,
            std::cmp::Ordering::Less => Drift::Down,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.p == self.q
    }

    pub fn is_lazy(&self) -> bool {
        !self.r.is_zero()
    }
}

/// Samples steps by comparing a uniform 64-bit draw with exact thresholds
/// `ceil(p * 2^64)` and `ceil((p + q) * 2^64)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepSampler {
    up_below: u128,
    down_below: u128,
}

impl StepSampler {
    pub fn new(params: &WalkParams) -> Self {
        let scale = BigRational::from_integer(BigInt::one() << 64);
        let threshold = |x: BigRational| -> u128 {
            (x * &scale)
                .ceil()
                .to_integer()
                .to_u128()
                .expect("threshold fits in 65 bits")
        };
        Self {
            up_below: threshold(params.p.clone()),
            down_below: threshold(&params.p + &params.q),
        }
    }

    pub fn step<R: RngCore>(&self, rng: &mut R) -> i8 {
        let u = u128::from(rng.next_u64());
        if u < self.up_below {
            1
        } else if u < self.down_below {
            -1
        } else {
            0
        }
    }
}

/// Seeded generator for stream `stream` of `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A realized path together with its partial sums and running maxima.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSample {
    pub steps: Vec<i8>,
    pub z: Vec<i64>,
    pub m: Vec<i64>,
}

impl PathSample {
    pub fn from_steps(steps: Vec<i8>) -> Self {
        let mut z = Vec::with_capacity(steps.len() + 1);
        let mut m = Vec::with_capacity(steps.len() + 1);
        let (mut zt, mut mt) = (0i64, 0i64);
        z.push(zt);
        m.push(mt);
        for &s in &steps {
            zt += i64::from(s);
            mt = mt.max(zt);
            z.push(zt);
            m.push(mt);
        }
        Self { steps, z, m }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn last(&self) -> (i64, i64) {
        (*self.z.last().unwrap(), *self.m.last().unwrap())
    }
}

/// Simulates `horizon` steps; the same seed always gives the same path.
pub fn simulate(params: &WalkParams, horizon: usize, seed: u64) -> PathSample {
    let sampler = StepSampler::new(params);
    let mut rng = seeded_rng(seed, 0);
    let steps = (0..horizon).map(|_| sampler.step(&mut rng)).collect();
    PathSample::from_steps(steps)
}

/// Exact law of `(Z_t, M_t)`. Keys are `(z, m)`; zero masses are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDist {
    t: u32,
    mass: BTreeMap<(i64, i64), BigRational>,
}

impl JointDist {
    /// The law at time zero.
    pub fn origin() -> Self {
        let mut mass = BTreeMap::new();
        mass.insert((0, 0), BigRational::one());
        Self { t: 0, mass }
    }

    /// Builds a law from explicit masses, checking support, positivity and
    /// total mass.
    pub fn from_masses(t: u32, mass: BTreeMap<(i64, i64), BigRational>) -> Result<Self, WalkError> {
        let horizon = i64::from(t);
        let mut total = BigRational::zero();
        for (&(z, m), w) in &mass {
            if !w.is_positive() {
                return Err(WalkError::InvalidJoint(format!(
                    "non-positive mass at ({z}, {m})"
                )));
            }
            if z.max(0) > m || m > horizon || z < -horizon {
                return Err(WalkError::InvalidJoint(format!(
                    "state ({z}, {m}) outside the reachable region at t={t}"
                )));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(WalkError::InvalidJoint(format!(
                "total mass {} != 1",
                format_rational(&total)
            )));
        }
        Ok(Self { t, mass })
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((i64, i64), &BigRational)> + '_ {
        self.mass.iter().map(|(&k, v)| (k, v))
    }

    pub fn mass(&self, z: i64, m: i64) -> BigRational {
        self.mass.get(&(z, m)).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> BigRational {
        self.mass.values().sum()
    }

    /// Exact `E[f(Z_t, M_t)]`.
    pub fn expect<F>(&self, mut f: F) -> BigRational
    where
        F: FnMut(i64, i64) -> BigRational,
    {
        self.mass
            .iter()
            .map(|(&(z, m), w)| w * f(z, m))
            .sum()
    }

    /// `E[f(Z_t, M_t)]` with the masses rounded to `f64`.
    pub fn expect_f64<F>(&self, mut f: F) -> f64
    where
        F: FnMut(i64, i64) -> f64,
    {
        self.mass
            .iter()
            .map(|(&(z, m), w)| to_f64(w) * f(z, m))
            .sum()
    }

    /// Exact `P(M_t >= level)`.
    pub fn prob_max_at_least(&self, level: i64) -> BigRational {
        self.mass
            .iter()
            .filter(|(&(_, m), _)| m >= level)
            .map(|(_, w)| w.clone())
            .sum()
    }

    /// One step of the chain: from `(z, m)` mass `p` goes to
    /// `(z+1, max(m, z+1))`, `q` to `(z-1, m)` and `r` stays.
    pub fn evolve(&self, params: &WalkParams) -> Self {
        let mut next: BTreeMap<(i64, i64), BigRational> = BTreeMap::new();
        let mut add = |key: (i64, i64), w: BigRational| {
            *next.entry(key).or_insert_with(BigRational::zero) += w;
        };
        for (&(z, m), w) in &self.mass {
            add((z + 1, m.max(z + 1)), w * &params.p);
            add((z - 1, m), w * &params.q);
            if params.is_lazy() {
                add((z, m), w * &params.r);
            }
        }
        next.retain(|_, w| !w.is_zero());
        Self {
            t: self.t + 1,
            mass: next,
        }
    }
}

/// Exact law of `(Z_t, M_t)` by `t` applications of [`JointDist::evolve`].
pub fn joint_dist(params: &WalkParams, t: u32) -> JointDist {
    (0..t).fold(JointDist::origin(), |d, _| d.evolve(params))
}

/// Laws at times `0..=t_max`, in order.
pub fn joint_dist_sequence(params: &WalkParams, t_max: u32) -> Vec<JointDist> {
    let mut out = Vec::with_capacity(t_max as usize + 1);
    let mut d = JointDist::origin();
    for _ in 0..t_max {
        let next = d.evolve(params);
        out.push(d);
        d = next;
    }
    out.push(d);
    out
}

fn step_alphabet(params: &WalkParams) -> &'static [i8] {
    if params.is_lazy() {
        &[1, -1, 0]
    } else {
        &[1, -1]
    }
}

/// Visits every step sequence of length `t` with the counts of up, down and
/// lazy steps it contains.
fn for_each_step_sequence<F>(params: &WalkParams, t: u32, cap: u32, mut visit: F) -> Result<(), WalkError>
where
    F: FnMut(&[i8], [u32; 3]),
{
    if t > cap {
        return Err(WalkError::OracleTooLarge { t, cap });
    }
    let alphabet = step_alphabet(params);
    let base = alphabet.len();
    let len = t as usize;
    let mut digits = vec![0usize; len];
    let mut steps = vec![alphabet[0]; len];
    loop {
        let mut counts = [0u32; 3];
        for &d in &digits {
            counts[d] += 1;
        }
        visit(&steps, counts);
        // odometer increment
        let mut i = 0;
        loop {
            if i == len {
                return Ok(());
            }
            digits[i] += 1;
            if digits[i] < base {
                steps[i] = alphabet[digits[i]];
                break;
            }
            digits[i] = 0;
            steps[i] = alphabet[0];
            i += 1;
        }
    }
}

fn path_weight(params: &WalkParams, counts: [u32; 3]) -> BigRational {
    num_traits::pow(params.p.clone(), counts[0] as usize)
        * num_traits::pow(params.q.clone(), counts[1] as usize)
        * num_traits::pow(params.r.clone(), counts[2] as usize)
}

/// Every path of length `t` with its exact probability (`3^t` paths, `2^t`
/// when `r = 0`). Fails above [`DEFAULT_ORACLE_CAP`].
pub fn enumerate_paths(params: &WalkParams, t: u32) -> Result<Vec<(PathSample, BigRational)>, WalkError> {
    enumerate_paths_capped(params, t, DEFAULT_ORACLE_CAP)
}

pub fn enumerate_paths_capped(
    params: &WalkParams,
    t: u32,
    cap: u32,
) -> Result<Vec<(PathSample, BigRational)>, WalkError> {
    let mut out = Vec::new();
    for_each_step_sequence(params, t, cap, |steps, counts| {
        out.push((PathSample::from_steps(steps.to_vec()), path_weight(params, counts)));
    })?;
    Ok(out)
}

/// Law of `(Z_t, M_t)` obtained by summing path probabilities over every
/// enumerated path. Independent of [`JointDist::evolve`].
pub fn aggregate_paths(params: &WalkParams, t: u32, cap: u32) -> Result<JointDist, WalkError> {
    // group by endpoint and step counts so each weight is computed once
    let mut counts: HashMap<(i64, i64, [u32; 3]), u64> = HashMap::new();
    for_each_step_sequence(params, t, cap, |steps, c| {
        let (mut z, mut m) = (0i64, 0i64);
        for &s in steps {
            z += i64::from(s);
            m = m.max(z);
        }
        *counts.entry((z, m, c)).or_insert(0) += 1;
    })?;
    let mut weights: HashMap<[u32; 3], BigRational> = HashMap::new();
    let mut mass: BTreeMap<(i64, i64), BigRational> = BTreeMap::new();
    for ((z, m, c), n) in counts {
        let w = weights.entry(c).or_insert_with(|| path_weight(params, c)).clone();
        *mass.entry((z, m)).or_insert_with(BigRational::zero) +=
            w * BigRational::from_integer(BigInt::from(n));
    }
    JointDist::from_masses(t, mass)
}
