//! Skorokhod embedding in the symmetric walk by the stopping rule
//! `T = inf{t : M_t = psi(Z_t)}` with `psi(x) = x + mu(>x) / mu({x})`.
//!
//! Finite measures get the exact stopped law and `E[T]` from the absorbing
//! chain on `(Z, M)`; any measure can be simulated.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::measures::{CenteredMeasure, MeasureKind};
use crate::rational::{format_rational, int, to_f64};
use crate::walk::{seeded_rng, JointDist, StepSampler, WalkParams, PRNG_ID};

/// Largest transient state count handed to the direct solver.
pub const LINEAR_SOLVE_CAP: usize = 10_000;
pub const DEFAULT_STEP_CAP: u64 = 10_000_000;
pub const DEFAULT_CAPPED_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_BATCH_SIZE: u64 = 4096;
/// Monte Carlo atoms lighter than this are not band-checked.
pub const MC_MIN_MASS: f64 = 1e-3;
pub const BAND_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingError {
    #[error("assumption (A1) fails at x = {x}: psi = {psi} is not an integer")]
    NonInteger { x: i64, psi: String },
    #[error("assumption (A1) fails at x = {x}: psi = {psi} is negative")]
    Negative { x: i64, psi: i64 },
    #[error("assumption (A2) fails: psi({left}) = {psi_left} >= psi({right}) = {psi_right}")]
    NotIncreasing {
        left: i64,
        psi_left: i64,
        right: i64,
        psi_right: i64,
    },
    #[error("inconsistent plan: {0}")]
    Consistency(String),
    #[error("the embedding needs p = q")]
    Regime,
    #[error("exact mode needs a finite measure")]
    NotFinite,
    #[error("{states} transient states exceed the solver cap {cap}")]
    TooLarge { states: usize, cap: usize },
    #[error("invalid Monte Carlo options: {0}")]
    Options(String),
}

/// `psi` on the support together with the level structure it induces:
/// the `i`-th support point `x_i` has `psi(x_i) = i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingPlan {
    measure: CenteredMeasure,
    support: Vec<i64>,
    c: i64,
    /// Geometric measures continue past the stored atoms with `x_i = i - n`.
    extension: Option<i64>,
}

pub fn build_plan(measure: &CenteredMeasure) -> Result<EmbeddingPlan, EmbeddingError> {
    let mut psi = Vec::with_capacity(measure.atoms().len());
    for (x, mass) in measure.atoms() {
        let value = int(*x) + measure.mass_above(*x) / mass;
        if !value.is_integer() {
            return Err(EmbeddingError::NonInteger {
                x: *x,
                psi: format_rational(&value),
            });
        }
        let value = value.to_integer().to_i64().expect("psi fits in i64");
        if value < 0 {
            return Err(EmbeddingError::Negative { x: *x, psi: value });
        }
        psi.push((*x, value));
    }
    for pair in psi.windows(2) {
        let ((left, psi_left), (right, psi_right)) = (pair[0], pair[1]);
        if psi_right <= psi_left {
            return Err(EmbeddingError::NotIncreasing {
                left,
                psi_left,
                right,
                psi_right,
            });
        }
    }
    for (i, (x, value)) in psi.iter().enumerate() {
        if *value != i as i64 {
            return Err(EmbeddingError::Consistency(format!("psi({x}) = {value}, expected {i}")));
        }
    }
    let extension = match measure.kind() {
        MeasureKind::Finite => None,
        MeasureKind::Geometric { n, .. } => {
            let n = i64::from(*n);
            if let Some((x, value)) = psi.iter().find(|(x, value)| *value != x + n) {
                return Err(EmbeddingError::Consistency(format!("psi({x}) = {value}, expected x + {n}")));
            }
            Some(n)
        }
    };
    let support: Vec<i64> = psi.iter().map(|(x, _)| *x).collect();
    Ok(EmbeddingPlan {
        measure: measure.clone(),
        c: psi[0].1 - psi[0].0,
        support,
        extension,
    })
}

impl EmbeddingPlan {
    pub fn measure(&self) -> &CenteredMeasure {
        &self.measure
    }

    /// Stored support `x_0 < x_1 < ...`.
    pub fn support(&self) -> &[i64] {
        &self.support
    }

    /// `psi(x_0) - x_0`, the largest value of `psi(x) - x`.
    pub fn c(&self) -> i64 {
        self.c
    }

    /// `psi(x)` for `x` in the support, `None` elsewhere.
    pub fn psi(&self, x: i64) -> Option<i64> {
        if let Ok(i) = self.support.binary_search(&x) {
            return Some(i as i64);
        }
        match self.extension {
            Some(n) if x > *self.support.last().expect("nonempty support") => Some(x + n),
            _ => None,
        }
    }

    /// The support point `x_i` with `psi(x_i) = level`.
    pub fn level_point(&self, level: i64) -> Option<i64> {
        if level < 0 {
            return None;
        }
        match self.support.get(level as usize) {
            Some(x) => Some(*x),
            None => self.extension.map(|n| level - n),
        }
    }

    /// `(x, psi(x))` over the stored support.
    pub fn psi_table(&self) -> Vec<(i64, i64)> {
        self.support.iter().enumerate().map(|(i, x)| (*x, i as i64)).collect()
    }

    fn absorbs(&self, z: i64, m: i64) -> bool {
        self.level_point(m) == Some(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    /// Gambler's ruin between consecutive levels of the maximum.
    Levels,
    /// Sparse elimination on the transient states of `(Z, M)`.
    LinearSolve,
}

impl ExactMethod {
    pub fn label(self) -> &'static str {
        match self {
            ExactMethod::Levels => "levels",
            ExactMethod::LinearSolve => "linear-solve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactLaw {
    pub atoms: BTreeMap<i64, BigRational>,
    pub expected_t: BigRational,
    pub method: ExactMethod,
    pub transient_states: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloLaw {
    pub runs: u64,
    pub seed: u64,
    pub counts: BTreeMap<i64, u64>,
    pub capped: u64,
    pub sum_t: u128,
    pub sum_t_sq: u128,
    /// Declared truncation tail of the measure, added to every band.
    pub truncation_tail: BigRational,
    pub warnings: Vec<String>,
}

impl MonteCarloLaw {
    pub fn frequency(&self, x: i64) -> f64 {
        self.counts.get(&x).copied().unwrap_or(0) as f64 / self.runs as f64
    }

    pub fn frequency_above(&self, x: i64) -> f64 {
        self.counts.range(x + 1..).map(|(_, c)| *c).sum::<u64>() as f64 / self.runs as f64
    }

    pub fn stderr(&self, x: i64) -> f64 {
        let f = self.frequency(x);
        (f * (1.0 - f) / self.runs as f64).sqrt()
    }

    /// Mean stopping time over uncapped runs and its standard error.
    pub fn mean_t(&self) -> (f64, f64) {
        let n = (self.runs - self.capped) as f64;
        if n == 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = self.sum_t as f64 / n;
        let var = (self.sum_t_sq as f64 / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoppedLaw {
    Exact(ExactLaw),
    MonteCarlo(MonteCarloLaw),
}

impl StoppedLaw {
    pub fn mode(&self) -> &'static str {
        match self {
            StoppedLaw::Exact(_) => "exact",
            StoppedLaw::MonteCarlo(_) => "monte-carlo",
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            StoppedLaw::Exact(law) => &law.warnings,
            StoppedLaw::MonteCarlo(law) => &law.warnings,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            StoppedLaw::Exact(law) => json!({
                "mode": "exact",
                "method": law.method.label(),
                "atoms": law.atoms.iter().map(|(x, p)| json!({"x": x, "p": format_rational(p)})).collect::<Vec<_>>(),
                "expected_T": format_rational(&law.expected_t),
                "transient_states": law.transient_states,
                "warnings": law.warnings,
            }),
            StoppedLaw::MonteCarlo(law) => {
                let (mean, se) = law.mean_t();
                json!({
                    "mode": "monte-carlo",
                    "prng": PRNG_ID,
                    "seed": law.seed,
                    "runs": law.runs,
                    "atoms": law.counts.iter().map(|(x, c)| json!({
                        "x": x,
                        "count": c,
                        "p": law.frequency(*x),
                        "stderr": law.stderr(*x),
                    })).collect::<Vec<_>>(),
                    "expected_T": {"estimate": mean, "stderr": se},
                    "capped_runs": law.capped,
                    "truncation_tail": format_rational(&law.truncation_tail),
                    "warnings": law.warnings,
                })
            }
        }
    }
}

fn check_regime(params: &WalkParams) -> Result<(), EmbeddingError> {
    if params.is_symmetric() {
        Ok(())
    } else {
        Err(EmbeddingError::Regime)
    }
}

/// Exact stopped law: the direct solve when the chain is small enough,
/// the level recursion otherwise.
pub fn stopped_law_exact(plan: &EmbeddingPlan, params: &WalkParams) -> Result<ExactLaw, EmbeddingError> {
    match stopped_law_exact_with(plan, params, ExactMethod::LinearSolve) {
        Err(EmbeddingError::TooLarge { .. }) => stopped_law_exact_with(plan, params, ExactMethod::Levels),
        other => other,
    }
}

pub fn stopped_law_exact_with(
    plan: &EmbeddingPlan,
    params: &WalkParams,
    method: ExactMethod,
) -> Result<ExactLaw, EmbeddingError> {
    check_regime(params)?;
    if !plan.measure.is_finite() {
        return Err(EmbeddingError::NotFinite);
    }
    let mut law = match method {
        ExactMethod::Levels => by_levels(plan, params),
        ExactMethod::LinearSolve => by_linear_solve(plan, params)?,
    };
    let total: BigRational = law.atoms.values().sum();
    if !total.is_one() {
        return Err(EmbeddingError::Consistency(format!(
            "absorbed mass {} != 1",
            format_rational(&total)
        )));
    }
    for x in &plan.support {
        if law.atoms.get(x).is_none_or(|p| p.is_zero()) {
            law.warnings.push(format!("support point {x} is never reached"));
        }
    }
    Ok(law)
}

fn by_levels(plan: &EmbeddingPlan, params: &WalkParams) -> ExactLaw {
    // from Z = M = i the walk leaves (x_i, i + 1) after (i - x_i) / (2p)
    // steps on average, at x_i with probability 1 / (i + 1 - x_i)
    let mut atoms = BTreeMap::new();
    let mut expected_t = BigRational::zero();
    let mut reach = BigRational::one();
    let step_var = params.p() * int(2);
    let mut transient_states = 0;
    for (i, x) in plan.support.iter().enumerate() {
        let gap = i as i64 - x;
        if gap == 0 {
            atoms.insert(*x, reach);
            break;
        }
        transient_states += gap as usize;
        let width = int(gap + 1);
        atoms.insert(*x, &reach / &width);
        expected_t += &reach * int(gap) / &step_var;
        reach = reach * int(gap) / width;
    }
    ExactLaw {
        atoms,
        expected_t,
        method: ExactMethod::Levels,
        transient_states,
        warnings: Vec::new(),
    }
}

type State = (i64, i64);

fn successors(params: &WalkParams, (z, m): State) -> [(State, &BigRational); 3] {
    [
        ((z + 1, m.max(z + 1)), params.p()),
        ((z - 1, m), params.q()),
        ((z, m), params.r()),
    ]
}

fn by_linear_solve(plan: &EmbeddingPlan, params: &WalkParams) -> Result<ExactLaw, EmbeddingError> {
    let start = (0, 0);
    if plan.absorbs(0, 0) {
        return Ok(ExactLaw {
            atoms: BTreeMap::from([(0, BigRational::one())]),
            expected_t: BigRational::zero(),
            method: ExactMethod::LinearSolve,
            transient_states: 0,
            warnings: Vec::new(),
        });
    }

    let mut index: HashMap<State, usize> = HashMap::from([(start, 0)]);
    let mut states = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for (next, prob) in successors(params, s) {
            if prob.is_zero() || plan.absorbs(next.0, next.1) || index.contains_key(&next) {
                continue;
            }
            if states.len() >= LINEAR_SOLVE_CAP {
                return Err(EmbeddingError::TooLarge {
                    states: states.len() + 1,
                    cap: LINEAR_SOLVE_CAP,
                });
            }
            index.insert(next, states.len());
            states.push(next);
            queue.push_back(next);
        }
    }

    // expected visits v solve (I - Q)^T v = e_start
    let n = states.len();
    let mut rows: Vec<BTreeMap<usize, BigRational>> = (0..n).map(|j| BTreeMap::from([(j, BigRational::one())])).collect();
    for (i, s) in states.iter().enumerate() {
        for (next, prob) in successors(params, *s) {
            if prob.is_zero() {
                continue;
            }
            if let Some(&j) = index.get(&next) {
                let entry = rows[j].entry(i).or_insert_with(BigRational::zero);
                *entry -= prob;
            }
        }
    }
    let mut rhs = vec![BigRational::zero(); n];
    rhs[0] = BigRational::one();
    let visits = sparse_solve(rows, rhs)?;

    let mut atoms: BTreeMap<i64, BigRational> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        for (next, prob) in successors(params, *s) {
            if !prob.is_zero() && plan.absorbs(next.0, next.1) {
                *atoms.entry(next.0).or_insert_with(BigRational::zero) += &visits[i] * prob;
            }
        }
    }
    Ok(ExactLaw {
        atoms,
        expected_t: visits.iter().sum(),
        method: ExactMethod::LinearSolve,
        transient_states: n,
        warnings: Vec::new(),
    })
}

/// Gaussian elimination on sparse rows with exact arithmetic.
fn sparse_solve(
    mut rows: Vec<BTreeMap<usize, BigRational>>,
    mut rhs: Vec<BigRational>,
) -> Result<Vec<BigRational>, EmbeddingError> {
    let n = rows.len();
    let mut in_column: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, row) in rows.iter().enumerate() {
        for &j in row.keys() {
            in_column[j].insert(i);
        }
    }
    for k in 0..n {
        let pivot_row = in_column[k]
            .range(k..)
            .copied()
            .find(|&i| rows[i].get(&k).is_some_and(|v| !v.is_zero()))
            .ok_or_else(|| EmbeddingError::Consistency("singular absorbing system".into()))?;
        if pivot_row != k {
            for &j in rows[k].keys() {
                in_column[j].remove(&k);
                in_column[j].insert(pivot_row);
            }
            for &j in rows[pivot_row].keys() {
                if !rows[k].contains_key(&j) {
                    in_column[j].remove(&pivot_row);
                }
                in_column[j].insert(k);
            }
            rows.swap(k, pivot_row);
            rhs.swap(k, pivot_row);
        }
        let pivot = rows[k][&k].clone();
        let targets: Vec<usize> = in_column[k].range(k + 1..).copied().collect();
        for i in targets {
            let Some(lead) = rows[i].remove(&k) else { continue };
            in_column[k].remove(&i);
            if lead.is_zero() {
                continue;
            }
            let factor = lead / &pivot;
            let pivot_entries: Vec<(usize, BigRational)> =
                rows[k].range(k + 1..).map(|(j, v)| (*j, v.clone())).collect();
            for (j, v) in pivot_entries {
                let entry = rows[i].entry(j).or_insert_with(BigRational::zero);
                *entry -= &factor * v;
                if entry.is_zero() {
                    rows[i].remove(&j);
                    in_column[j].remove(&i);
                } else {
                    in_column[j].insert(i);
                }
            }
            let delta = &factor * &rhs[k];
            rhs[i] -= delta;
        }
    }
    let mut x = vec![BigRational::zero(); n];
    for k in (0..n).rev() {
        let mut acc = rhs[k].clone();
        for (j, v) in rows[k].range(k + 1..) {
            acc -= v * &x[*j];
        }
        x[k] = acc / &rows[k][&k];
    }
    Ok(x)
}

/// Exact mass propagation stopped once the transient mass drops below
/// `2^-bits`.
///
/// Every absorbed atom brackets the true mass from below by `absorbed` and
/// from above by `absorbed + transient`; `expected_t_lower` is
/// `sum_{t < steps} P(T > t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationBound {
    pub steps: u64,
    pub absorbed: BTreeMap<i64, BigRational>,
    pub transient: BigRational,
    pub expected_t_lower: BigRational,
}

impl IterationBound {
    /// `absorbed + transient = 1`.
    pub fn certified(&self) -> bool {
        (self.absorbed.values().sum::<BigRational>() + &self.transient).is_one()
    }

    pub fn brackets(&self, law: &ExactLaw) -> bool {
        let atoms_ok = law.atoms.iter().all(|(x, p)| {
            let lo = self.absorbed.get(x).cloned().unwrap_or_else(BigRational::zero);
            &lo <= p && p <= &(&lo + &self.transient)
        });
        atoms_ok && self.expected_t_lower <= law.expected_t
    }
}

pub fn time_iteration(
    plan: &EmbeddingPlan,
    params: &WalkParams,
    bits: u32,
    max_steps: u64,
) -> Result<IterationBound, EmbeddingError> {
    check_regime(params)?;
    let threshold = BigRational::new(1.into(), num_bigint::BigInt::one() << bits);
    let mut absorbed: BTreeMap<i64, BigRational> = BTreeMap::new();
    let mut current: BTreeMap<State, BigRational> = BTreeMap::new();
    if plan.absorbs(0, 0) {
        absorbed.insert(0, BigRational::one());
    } else {
        current.insert((0, 0), BigRational::one());
    }
    let mut transient: BigRational = current.values().sum();
    let mut expected_t_lower = BigRational::zero();
    let mut steps = 0;
    while transient >= threshold && steps < max_steps {
        expected_t_lower += &transient;
        let mut next: BTreeMap<State, BigRational> = BTreeMap::new();
        for (s, mass) in &current {
            for (to, prob) in successors(params, *s) {
                if prob.is_zero() {
                    continue;
                }
                let flow = mass * prob;
                if plan.absorbs(to.0, to.1) {
                    *absorbed.entry(to.0).or_insert_with(BigRational::zero) += flow;
                } else {
                    *next.entry(to).or_insert_with(BigRational::zero) += flow;
                }
            }
        }
        current = next;
        transient = current.values().sum();
        steps += 1;
    }
    Ok(IterationBound {
        steps,
        absorbed,
        transient,
        expected_t_lower,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub runs: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Results do not depend on it.
    pub threads: Option<usize>,
    pub step_cap: u64,
    pub capped_threshold: f64,
    pub batch_size: u64,
}

impl McOptions {
    pub fn new(runs: u64, seed: u64) -> Self {
        Self {
            runs,
            seed,
            threads: None,
            step_cap: DEFAULT_STEP_CAP,
            capped_threshold: DEFAULT_CAPPED_THRESHOLD,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Default)]
struct BatchTally {
    counts: BTreeMap<i64, u64>,
    capped: u64,
    sum_t: u128,
    sum_t_sq: u128,
}

/// Simulates `T` run by run. Batch `b` draws from stream `b` of the seed, so
/// the report is identical for every thread count.
pub fn stopped_law_mc(
    plan: &EmbeddingPlan,
    params: &WalkParams,
    options: &McOptions,
) -> Result<MonteCarloLaw, EmbeddingError> {
    check_regime(params)?;
    if options.runs == 0 || options.batch_size == 0 || options.step_cap == 0 {
        return Err(EmbeddingError::Options("runs, batch size and step cap must be positive".into()));
    }
    let sampler = StepSampler::new(params);
    let batches = options.runs.div_ceil(options.batch_size);
    let run_batch = |b: u64| -> BatchTally {
        let mut rng = seeded_rng(options.seed, b);
        let runs = options.batch_size.min(options.runs - b * options.batch_size);
        let mut tally = BatchTally::default();
        for _ in 0..runs {
            let (mut z, mut m, mut t) = (0i64, 0i64, 0u64);
            loop {
                if plan.absorbs(z, m) {
                    *tally.counts.entry(z).or_insert(0) += 1;
                    tally.sum_t += u128::from(t);
                    tally.sum_t_sq += u128::from(t) * u128::from(t);
                    break;
                }
                if t == options.step_cap {
                    tally.capped += 1;
                    break;
                }
                z += i64::from(sampler.step(&mut rng));
                m = m.max(z);
                t += 1;
            }
        }
        tally
    };
    let tallies: Vec<BatchTally> = match options.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| EmbeddingError::Options(e.to_string()))?
            .install(|| (0..batches).into_par_iter().map(run_batch).collect()),
        None => (0..batches).into_par_iter().map(run_batch).collect(),
    };

    let mut law = MonteCarloLaw {
        runs: options.runs,
        seed: options.seed,
        counts: BTreeMap::new(),
        capped: 0,
        sum_t: 0,
        sum_t_sq: 0,
        truncation_tail: match plan.measure.kind() {
            MeasureKind::Geometric { truncation_tail, .. } => truncation_tail.clone(),
            MeasureKind::Finite => BigRational::zero(),
        },
        warnings: Vec::new(),
    };
    for tally in tallies {
        for (x, c) in tally.counts {
            *law.counts.entry(x).or_insert(0) += c;
        }
        law.capped += tally.capped;
        law.sum_t += tally.sum_t;
        law.sum_t_sq += tally.sum_t_sq;
    }
    let capped_fraction = law.capped as f64 / law.runs as f64;
    if capped_fraction > options.capped_threshold {
        law.warnings.push(format!(
            "{} of {} runs hit the step cap {}",
            law.capped, law.runs, options.step_cap
        ));
    }
    Ok(law)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    /// `P(Z_T = x) = mu({x})`.
    Law,
    /// `P(Z_T > x) = (psi(x) - x) P(Z_T = x)`.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomCheck {
    pub x: i64,
    pub kind: CheckKind,
    pub observed: f64,
    pub expected: f64,
    /// Allowed deviation; zero for exact comparisons.
    pub band: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVerdict {
    pub checks: Vec<AtomCheck>,
    /// Monte Carlo atoms below [`MC_MIN_MASS`].
    pub skipped: usize,
    /// Stopping values carrying mass outside the support.
    pub outside_support: Vec<i64>,
}

impl EmbeddingVerdict {
    pub fn passed(&self) -> bool {
        self.outside_support.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AtomCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn verify_embedding(plan: &EmbeddingPlan, law: &StoppedLaw) -> EmbeddingVerdict {
    match law {
        StoppedLaw::Exact(law) => verify_exact(plan, law),
        StoppedLaw::MonteCarlo(law) => verify_mc(plan, law, MC_MIN_MASS),
    }
}

fn verify_exact(plan: &EmbeddingPlan, law: &ExactLaw) -> EmbeddingVerdict {
    let measure = &plan.measure;
    let mut checks = Vec::new();
    for (i, (x, mass)) in measure.atoms().iter().enumerate() {
        let observed = law.atoms.get(x).cloned().unwrap_or_else(BigRational::zero);
        checks.push(AtomCheck {
            x: *x,
            kind: CheckKind::Law,
            observed: to_f64(&observed),
            expected: to_f64(mass),
            band: 0.0,
            passed: &observed == mass,
        });
        let above: BigRational = law.atoms.range(x + 1..).map(|(_, p)| p).sum();
        let predicted = int(i as i64 - x) * &observed;
        checks.push(AtomCheck {
            x: *x,
            kind: CheckKind::Identity,
            observed: to_f64(&above),
            expected: to_f64(&predicted),
            band: 0.0,
            passed: above == predicted,
        });
    }
    EmbeddingVerdict {
        checks,
        skipped: 0,
        outside_support: law
            .atoms
            .iter()
            .filter(|(x, p)| !p.is_zero() && measure.mass_at(**x).is_zero())
            .map(|(x, _)| *x)
            .collect(),
    }
}

fn verify_mc(plan: &EmbeddingPlan, law: &MonteCarloLaw, min_mass: f64) -> EmbeddingVerdict {
    let measure = &plan.measure;
    let runs = law.runs as f64;
    let tail = to_f64(&law.truncation_tail);
    let mut checks = Vec::new();
    let mut skipped = 0;
    for (x, mass) in measure.atoms() {
        let mu = to_f64(mass);
        if mu < min_mass {
            skipped += 1;
            continue;
        }
        let observed = law.frequency(*x);
        checks.push(AtomCheck {
            x: *x,
            kind: CheckKind::Law,
            observed,
            expected: mu,
            band: BAND_SIGMAS * (mu * (1.0 - mu) / runs).sqrt() + tail,
            passed: false,
        });
        // per-run 1{Z > x} - c 1{Z = x} has mean 0 and variance mu(>x) + c^2 mu({x})
        let c = (plan.psi(*x).expect("support point") - x) as f64;
        let mu_above = to_f64(&measure.mass_above(*x));
        checks.push(AtomCheck {
            x: *x,
            kind: CheckKind::Identity,
            observed: law.frequency_above(*x) - c * observed,
            expected: 0.0,
            band: BAND_SIGMAS * ((mu_above + c * c * mu) / runs).sqrt() + tail * (1.0 + c),
            passed: false,
        });
    }
    for check in &mut checks {
        check.passed = (check.observed - check.expected).abs() <= check.band;
    }
    EmbeddingVerdict {
        checks,
        skipped,
        outside_support: law
            .counts
            .keys()
            .filter(|x| measure.mass_at(**x).is_zero())
            .copied()
            .collect(),
    }
}

/// `U_t = 1{M_t > k} - 1{M_t = k} (M_t - Z_t)`, a martingale from zero when
/// `p = q` for every level `k >= 0`.
pub fn skorokhod_martingale(level: i64, z: i64, m: i64) -> BigRational {
    if m > level {
        BigRational::one()
    } else if m == level {
        int(z - m)
    } else {
        BigRational::zero()
    }
}

pub fn skorokhod_martingale_mean(dist: &JointDist, level: i64) -> BigRational {
    dist.expect(|z, m| skorokhod_martingale(level, z, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::uniform_interval_two;
    use crate::rational::ratio;

    fn two_point() -> CenteredMeasure {
        CenteredMeasure::from_atoms(vec![(-1, ratio(1, 2)), (1, ratio(1, 2))]).unwrap()
    }

    fn lazy(p: (i64, i64)) -> WalkParams {
        WalkParams::from_pq(ratio(p.0, p.1), ratio(p.0, p.1)).unwrap()
    }

    #[test]
    fn two_point_plan() {
        let plan = build_plan(&two_point()).unwrap();
        assert_eq!(plan.psi_table(), vec![(-1, 0), (1, 1)]);
        assert_eq!(plan.c(), 1);
        assert_eq!(plan.psi(0), None);
    }

    #[test]
    fn uniform_plan_is_affine() {
        let plan = build_plan(&uniform_interval_two(2).unwrap()).unwrap();
        for (x, psi) in plan.psi_table() {
            assert_eq!(2 * psi, x + 4);
        }
        assert_eq!(plan.c(), 4);
    }

    #[test]
    fn geometric_plan_shifts_by_n() {
        for n in 1..=3 {
            let mu = CenteredMeasure::centered_geometric(n, ratio(1, 1 << 12)).unwrap();
            let plan = build_plan(&mu).unwrap();
            let n = i64::from(n);
            assert_eq!(plan.c(), n);
            for x in -n..60 {
                assert_eq!(plan.psi(x), Some(x + n));
            }
            assert_eq!(plan.level_point(100), Some(100 - n));
        }
    }

    #[test]
    fn assumption_failures_name_the_atom() {
        let negative = CenteredMeasure::from_atoms(vec![(-2, ratio(1, 2)), (2, ratio(1, 2))]).unwrap();
        assert_eq!(build_plan(&negative).unwrap_err(), EmbeddingError::Negative { x: -2, psi: -1 });
        let fractional = CenteredMeasure::from_atoms(vec![(-1, ratio(2, 3)), (2, ratio(1, 3))]).unwrap();
        assert!(matches!(build_plan(&fractional).unwrap_err(), EmbeddingError::NonInteger { x: -1, .. }));
        let inverted =
            CenteredMeasure::from_atoms(vec![(-2, ratio(1, 5)), (-1, ratio(1, 5)), (1, ratio(3, 5))]).unwrap();
        assert_eq!(
            build_plan(&inverted).unwrap_err(),
            EmbeddingError::NotIncreasing { left: -2, psi_left: 2, right: -1, psi_right: 2 }
        );
    }

    #[test]
    fn dirac_at_zero_stops_immediately() {
        let plan = build_plan(&CenteredMeasure::from_atoms(vec![(0, int(1))]).unwrap()).unwrap();
        for method in [ExactMethod::Levels, ExactMethod::LinearSolve] {
            let law = stopped_law_exact_with(&plan, &WalkParams::simple(), method).unwrap();
            assert_eq!(law.atoms, BTreeMap::from([(0, int(1))]));
            assert!(law.expected_t.is_zero());
        }
    }

    #[test]
    fn two_point_exact_law() {
        let plan = build_plan(&two_point()).unwrap();
        let law = stopped_law_exact(&plan, &WalkParams::simple()).unwrap();
        assert_eq!(law.atoms, BTreeMap::from([(-1, ratio(1, 2)), (1, ratio(1, 2))]));
        assert_eq!(law.expected_t, int(1));
    }

    #[test]
    fn uniform_one_exact_law() {
        // levels 0 and 1 last 2 and 1 steps on average; level 1 is reached w.p. 2/3
        let plan = build_plan(&uniform_interval_two(1).unwrap()).unwrap();
        for method in [ExactMethod::Levels, ExactMethod::LinearSolve] {
            let law = stopped_law_exact_with(&plan, &WalkParams::simple(), method).unwrap();
            assert!(law.atoms.values().all(|p| p == &ratio(1, 3)));
            assert_eq!(law.expected_t, ratio(8, 3));
        }
    }

    #[test]
    fn laziness_scales_time_only() {
        let plan = build_plan(&uniform_interval_two(2).unwrap()).unwrap();
        let fast = stopped_law_exact(&plan, &WalkParams::simple()).unwrap();
        let slow = stopped_law_exact(&plan, &lazy((1, 4))).unwrap();
        assert_eq!(fast.atoms, slow.atoms);
        assert_eq!(slow.expected_t, fast.expected_t * int(2));
    }

    #[test]
    fn exact_rejects_asymmetry_and_infinite_support() {
        let plan = build_plan(&two_point()).unwrap();
        let drift = WalkParams::from_pq(ratio(1, 2), ratio(1, 3)).unwrap();
        assert_eq!(stopped_law_exact(&plan, &drift).unwrap_err(), EmbeddingError::Regime);
        let geo = build_plan(&CenteredMeasure::centered_geometric(1, ratio(1, 1024)).unwrap()).unwrap();
        assert_eq!(stopped_law_exact(&geo, &WalkParams::simple()).unwrap_err(), EmbeddingError::NotFinite);
    }

    #[test]
    fn time_iteration_brackets_exact() {
        let plan = build_plan(&uniform_interval_two(2).unwrap()).unwrap();
        let params = lazy((1, 3));
        let exact = stopped_law_exact(&plan, &params).unwrap();
        let bound = time_iteration(&plan, &params, 30, 100_000).unwrap();
        assert!(bound.certified());
        assert!(bound.transient < ratio(1, 1 << 30));
        assert!(bound.brackets(&exact));
    }

    #[test]
    fn sparse_solve_small_system() {
        // [[2, 1], [1, 3]] x = [3, 5] has x = [4/5, 7/5]
        let rows = vec![
            BTreeMap::from([(0, int(2)), (1, int(1))]),
            BTreeMap::from([(0, int(1)), (1, int(3))]),
        ];
        assert_eq!(sparse_solve(rows, vec![int(3), int(5)]).unwrap(), vec![ratio(4, 5), ratio(7, 5)]);
        let swapped = vec![BTreeMap::from([(1, int(1))]), BTreeMap::from([(0, int(1))])];
        assert_eq!(sparse_solve(swapped, vec![int(2), int(3)]).unwrap(), vec![int(3), int(2)]);
    }

    #[test]
    fn exact_verdict_and_perturbation() {
        let plan = build_plan(&uniform_interval_two(2).unwrap()).unwrap();
        let mut law = stopped_law_exact(&plan, &WalkParams::simple()).unwrap();
        assert!(verify_embedding(&plan, &StoppedLaw::Exact(law.clone())).passed());
        *law.atoms.get_mut(&0).unwrap() += ratio(1, 1000);
        let verdict = verify_embedding(&plan, &StoppedLaw::Exact(law));
        assert!(!verdict.passed());
        assert!(verdict.failures().any(|c| c.x == 0 && c.kind == CheckKind::Law));
    }

    #[test]
    fn mc_is_reproducible_across_thread_counts() {
        let plan = build_plan(&uniform_interval_two(1).unwrap()).unwrap();
        let mut options = McOptions::new(10_000, 11);
        options.batch_size = 1000;
        options.threads = Some(1);
        let one = stopped_law_mc(&plan, &WalkParams::simple(), &options).unwrap();
        options.threads = Some(4);
        let four = stopped_law_mc(&plan, &WalkParams::simple(), &options).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.counts.values().sum::<u64>(), 10_000);
    }

    #[test]
    fn mc_two_point_binomial_band() {
        let plan = build_plan(&two_point()).unwrap();
        let law = stopped_law_mc(&plan, &WalkParams::simple(), &McOptions::new(100_000, 3)).unwrap();
        let band = 3.0 * (0.25f64 / 1e5).sqrt();
        assert!((law.frequency(-1) - 0.5).abs() <= band);
        assert!((law.frequency(1) - 0.5).abs() <= band);
        assert_eq!(law.mean_t().0, 1.0);
        assert!(verify_embedding(&plan, &StoppedLaw::MonteCarlo(law)).passed());
    }

    #[test]
    fn mc_mean_time_matches_exact() {
        let plan = build_plan(&uniform_interval_two(2).unwrap()).unwrap();
        let exact = to_f64(&stopped_law_exact(&plan, &WalkParams::simple()).unwrap().expected_t);
        let mc = stopped_law_mc(&plan, &WalkParams::simple(), &McOptions::new(50_000, 9)).unwrap();
        let (mean, se) = mc.mean_t();
        assert!((mean - exact).abs() <= 3.0 * se, "{mean} +- {se} vs {exact}");
    }

    #[test]
    fn mc_bands_cover_exact_atoms_across_seeds() {
        let plan = build_plan(&uniform_interval_two(2).unwrap()).unwrap();
        let exact = stopped_law_exact(&plan, &WalkParams::simple()).unwrap();
        let (mut inside, mut total) = (0, 0);
        for seed in 0..40 {
            let mc = stopped_law_mc(&plan, &WalkParams::simple(), &McOptions::new(5_000, seed)).unwrap();
            for (x, p) in &exact.atoms {
                let p = to_f64(p);
                let band = 3.0 * (p * (1.0 - p) / 5_000.0).sqrt();
                inside += usize::from((mc.frequency(*x) - p).abs() <= band);
                total += 1;
            }
        }
        assert!(inside * 100 >= total * 99, "{inside}/{total}");
    }

    #[test]
    fn mc_step_cap_counts_runs() {
        let plan = build_plan(&uniform_interval_two(3).unwrap()).unwrap();
        let mut options = McOptions::new(200, 5);
        options.step_cap = 1;
        let law = stopped_law_mc(&plan, &WalkParams::simple(), &options).unwrap();
        assert_eq!(law.capped, 200);
        assert_eq!(law.warnings.len(), 1);
    }

    #[test]
    fn skorokhod_martingale_has_zero_mean() {
        for params in [WalkParams::simple(), lazy((1, 3))] {
            let mut d = JointDist::origin();
            for _ in 0..10 {
                d = d.evolve(&params);
                for level in 0..5 {
                    assert!(skorokhod_martingale_mean(&d, level).is_zero());
                }
            }
        }
    }

    #[test]
    fn exact_report_json() {
        let plan = build_plan(&two_point()).unwrap();
        let law = StoppedLaw::Exact(stopped_law_exact(&plan, &WalkParams::simple()).unwrap());
        let v = law.to_json();
        assert_eq!(v["mode"], "exact");
        assert_eq!(v["atoms"][0], json!({"x": -1, "p": "1/2"}));
        assert_eq!(v["expected_T"], "1");
    }
}
