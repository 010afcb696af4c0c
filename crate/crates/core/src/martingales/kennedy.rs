use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::rational::{format_rational, to_f64};
use crate::walk::WalkParams;

use super::{MartingaleError, TimeSpaceFunction};

/// Default relative tolerance for the floating-point Kennedy checks.
pub const KENNEDY_TOLERANCE: f64 = 1e-10;

/// Kennedy martingale `a^M b^t h(M - Z)` for a fixed walk.
///
/// `h(x) = (a - 1/alpha_-) alpha_+^x - (a - 1/alpha_+) alpha_-^x`, where
/// `alpha_+-` are the roots of `q s^2 + (r - 1/b) s + p = 0`, solves
/// `q h(x+1) + (r - 1/b) h(x) + p h(x-1) = 0` with
/// `h(1) = ((1/b - r - p a) / q) h(0)`.
#[derive(Debug, Clone)]
pub struct KennedyParams {
    a: BigRational,
    b: BigRational,
    n: u32,
    params: WalkParams,
    alpha_plus: f64,
    alpha_minus: f64,
    h: Vec<f64>,
    tolerance: f64,
}

/// Builds the Kennedy family with `h` tabulated on `0..=n`.
pub fn kennedy_build(
    a: BigRational,
    b: BigRational,
    n: u32,
    params: &WalkParams,
) -> Result<KennedyParams, MartingaleError> {
    kennedy_build_with_range(a, b, n, params, n as usize)
}

pub fn kennedy_build_with_range(
    a: BigRational,
    b: BigRational,
    n: u32,
    params: &WalkParams,
    x_max: usize,
) -> Result<KennedyParams, MartingaleError> {
    if a.is_zero() || b.is_zero() {
        return Err(MartingaleError::Parameter("a and b must be nonzero".into()));
    }
    if n == 0 {
        return Err(MartingaleError::Parameter("target gap n must be >= 1".into()));
    }
    let c = params.r() - b.recip();
    let disc = &c * &c - BigRational::from_integer(4.into()) * params.p() * params.q();
    if !disc.is_positive() {
        return Err(MartingaleError::Regime(format!(
            "(r - 1/b)^2 - 4pq = {} is not positive",
            format_rational(&disc)
        )));
    }
    let (cf, qf) = (to_f64(&c), to_f64(params.q()));
    let root = to_f64(&disc).sqrt();
    let alpha_plus = (-cf + root) / (2.0 * qf);
    let alpha_minus = (-cf - root) / (2.0 * qf);

    let mut kp = KennedyParams {
        a,
        b,
        n,
        params: params.clone(),
        alpha_plus,
        alpha_minus,
        h: Vec::new(),
        tolerance: KENNEDY_TOLERANCE,
    };
    kp.h = (0..=x_max).map(|x| kp.h_closed_form(x as i32)).collect();
    kp.self_check()?;
    Ok(kp)
}

fn close(lhs: f64, rhs: f64, scale: f64, tol: f64) -> bool {
    (lhs - rhs).abs() <= tol * scale.max(f64::MIN_POSITIVE)
}

impl KennedyParams {
    fn h_closed_form(&self, x: i32) -> f64 {
        let a = to_f64(&self.a);
        (a - 1.0 / self.alpha_minus) * self.alpha_plus.powi(x)
            - (a - 1.0 / self.alpha_plus) * self.alpha_minus.powi(x)
    }

    // |A alpha_+^x| + |B alpha_-^x|, the size of the two terms of h(x)
    fn h_scale(&self, x: i32) -> f64 {
        let a = to_f64(&self.a);
        ((a - 1.0 / self.alpha_minus) * self.alpha_plus.powi(x)).abs()
            + ((a - 1.0 / self.alpha_plus) * self.alpha_minus.powi(x)).abs()
    }

    fn self_check(&self) -> Result<(), MartingaleError> {
        let p = to_f64(self.params.p());
        let q = to_f64(self.params.q());
        let r = to_f64(self.params.r());
        let c = r - 1.0 / to_f64(&self.b);
        let tol = self.tolerance;
        let fail = |what: String| Err(MartingaleError::Consistency(what));

        let (ap, am) = (self.alpha_plus, self.alpha_minus);
        if !close(ap * am, p / q, p / q, tol) {
            return fail(format!("alpha_+ alpha_- = {} but p/q = {}", ap * am, p / q));
        }
        for alpha in [ap, am] {
            let terms = [q * alpha * alpha, c * alpha, p];
            let scale: f64 = terms.iter().map(|t| t.abs()).sum();
            if !close(terms.iter().sum(), 0.0, scale, tol) {
                return fail(format!("root {alpha} does not solve the characteristic equation"));
            }
        }
        let top = self.h.len().max(3) as i32;
        for x in 1..top {
            let residual = q * self.h_closed_form(x + 1) + c * self.h_closed_form(x) + p * self.h_closed_form(x - 1);
            let scale = q * self.h_scale(x + 1) + c.abs() * self.h_scale(x) + p * self.h_scale(x - 1);
            if !close(residual, 0.0, scale, tol) {
                return fail(format!("recurrence residual {residual:e} too large at x={x}"));
            }
        }
        let ratio = (1.0 / to_f64(&self.b) - r - p * to_f64(&self.a)) / q;
        let (h0, h1) = (self.h_closed_form(0), self.h_closed_form(1));
        if !close(h1, ratio * h0, self.h_scale(1) + (ratio * self.h_scale(0)).abs(), tol) {
            return fail(format!("initial condition fails: h(1)={h1}, expected {}", ratio * h0));
        }
        Ok(())
    }

    pub fn a(&self) -> &BigRational {
        &self.a
    }

    pub fn b(&self) -> &BigRational {
        &self.b
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn params(&self) -> &WalkParams {
        &self.params
    }

    pub fn alpha_plus(&self) -> f64 {
        self.alpha_plus
    }

    pub fn alpha_minus(&self) -> f64 {
        self.alpha_minus
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Tabulated `h` on `0..=x_max`.
    pub fn h_table(&self) -> &[f64] {
        &self.h
    }

    /// `h(x)` from the closed form, for any `x >= 0`.
    pub fn h(&self, x: usize) -> f64 {
        self.h
            .get(x)
            .copied()
            .unwrap_or_else(|| self.h_closed_form(x as i32))
    }

    /// `a^y b^t h(x)`.
    pub fn value(&self, t: usize, x: usize, y: usize) -> f64 {
        to_f64(&self.a).powi(y as i32) * to_f64(&self.b).powi(t as i32) * self.h(x)
    }

    /// The martingale tabulated on a grid, ready for
    /// [`super::check_sufficient_condition`].
    pub fn to_grid(&self, t_max: usize, x_max: usize, y_max: usize) -> TimeSpaceFunction<f64> {
        TimeSpaceFunction::from_fn(t_max, x_max, y_max, |t, x, y| self.value(t, x, y))
    }
}

/// Closed form of `E[a^{Z_tau} b^tau]` for `tau = inf{t : M_t - Z_t = n}`:
/// `h(0) a^{-n} / h(n)`.
pub fn kennedy_pgf(kp: &KennedyParams) -> Result<f64, MartingaleError> {
    let a = to_f64(&kp.a);
    let n = kp.n as i32;
    let left = (a - 1.0 / kp.alpha_minus) * kp.alpha_plus.powi(n);
    let right = (a - 1.0 / kp.alpha_plus) * kp.alpha_minus.powi(n);
    let denominator = left - right;
    if denominator.abs() <= 1e-12 * (left.abs() + right.abs()) || denominator == 0.0 {
        return Err(MartingaleError::Pole(format!(
            "denominator (a - 1/alpha_-) alpha_+^n - (a - 1/alpha_+) alpha_-^n vanishes (= {denominator:e})"
        )));
    }
    let numerator = (1.0 / kp.alpha_plus - 1.0 / kp.alpha_minus) * a.powi(-n);
    Ok(numerator / denominator)
}

/// `E[a^{Z_tau} b^tau ; tau <= horizon]` by dynamic programming on the gap
/// chain, with a bound on the omitted part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedPgf {
    pub horizon: u32,
    pub value: f64,
    /// Bound on `|E[a^{Z_tau} b^tau ; tau > horizon]|`; infinite when
    /// `|b| max(1, |a|) >= 1`.
    pub tail_bound: f64,
}

/// Propagates `E[a^{M_t} b^t ; tau > t, M_t - Z_t = g]` over gaps
/// `g < n`: from gap 0 a `+1` step raises `M` (factor `a`); from `g >= 1`
/// it lowers the gap; a `-1` step raises the gap and absorbs at `n`.
///
/// After `horizon` steps each surviving path can contribute at most
/// `rho = |b| max(1, |a|)` per further step, so the tail is bounded by
/// `|a|^{-n} rho sum_g E[|a|^{M} |b|^t ; tau > horizon, gap = g]`.
pub fn truncated_pgf(kp: &KennedyParams, horizon: u32) -> TruncatedPgf {
    let p = to_f64(kp.params.p());
    let q = to_f64(kp.params.q());
    let r = to_f64(kp.params.r());
    let a = to_f64(&kp.a);
    let b = to_f64(&kp.b);
    let n = kp.n as usize;

    let mut signed = vec![0.0f64; n];
    let mut magnitude = vec![0.0f64; n];
    signed[0] = 1.0;
    magnitude[0] = 1.0;
    let mut absorbed = 0.0f64;

    for _ in 0..horizon {
        let mut next_s = vec![0.0f64; n];
        let mut next_m = vec![0.0f64; n];
        for g in 0..n {
            let (w, v) = (signed[g], magnitude[g]);
            if w == 0.0 && v == 0.0 {
                continue;
            }
            if g == 0 {
                next_s[0] += w * p * a * b;
                next_m[0] += v * p * (a * b).abs();
            } else {
                next_s[g - 1] += w * p * b;
                next_m[g - 1] += v * p * b.abs();
            }
            next_s[g] += w * r * b;
            next_m[g] += v * r * b.abs();
            if g + 1 == n {
                absorbed += w * q * b;
            } else {
                next_s[g + 1] += w * q * b;
                next_m[g + 1] += v * q * b.abs();
            }
        }
        signed = next_s;
        magnitude = next_m;
    }

    let scale = a.abs().powi(-(n as i32));
    let rho = b.abs() * a.abs().max(1.0);
    let tail_bound = if rho < 1.0 {
        scale * rho * magnitude.iter().sum::<f64>()
    } else {
        f64::INFINITY
    };
    TruncatedPgf {
        horizon,
        value: a.powi(-(n as i32)) * absorbed,
        tail_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingales::check_sufficient_condition;
    use crate::rational::{int, ratio};

    #[test]
    fn symmetric_roots() {
        // disc = (0 - 2)^2 - 4/4 = 3, roots (2 +- sqrt 3) / 1
        let kp = kennedy_build(int(1), ratio(1, 2), 1, &WalkParams::simple()).unwrap();
        assert!((kp.alpha_plus() - (2.0 + 3f64.sqrt())).abs() < 1e-14);
        assert!((kp.alpha_minus() - (2.0 - 3f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn h_zero_and_vieta() {
        let ps = WalkParams::new(ratio(1, 2), ratio(1, 4), ratio(1, 4)).unwrap();
        let kp = kennedy_build(ratio(3, 4), ratio(2, 3), 3, &ps).unwrap();
        let (ap, am) = (kp.alpha_plus(), kp.alpha_minus());
        assert!((kp.h(0) - (1.0 / ap - 1.0 / am)).abs() < 1e-14);
        assert!((0.25 * ap * am - 0.5).abs() < 1e-14);
        let c = 0.25 - 1.5;
        assert!((ap + am + c / 0.25).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ps = WalkParams::simple();
        assert!(matches!(kennedy_build(int(0), ratio(1, 2), 1, &ps), Err(MartingaleError::Parameter(_))));
        assert!(matches!(kennedy_build(int(1), int(0), 1, &ps), Err(MartingaleError::Parameter(_))));
        assert!(matches!(kennedy_build(int(1), ratio(1, 2), 0, &ps), Err(MartingaleError::Parameter(_))));
        // b = 1 puts (r - 1/b)^2 - 4pq exactly on zero
        assert!(matches!(kennedy_build(int(1), int(1), 1, &ps), Err(MartingaleError::Regime(_))));
        assert!(matches!(kennedy_build(int(1), int(2), 1, &ps), Err(MartingaleError::Regime(_))));
    }

    #[test]
    fn closed_form_for_unit_a() {
        let kp = kennedy_build(int(1), ratio(1, 2), 1, &WalkParams::simple()).unwrap();
        let (ap, am) = (2.0 + 3f64.sqrt(), 2.0 - 3f64.sqrt());
        let expected = (1.0 / ap - 1.0 / am) / ((1.0 - 1.0 / am) * ap - (1.0 - 1.0 / ap) * am);
        assert!((kennedy_pgf(&kp).unwrap() - expected).abs() < 1e-14);
        // tau = 1 with prob 1/2 at Z = -1, etc.; direct geometric sum:
        // tau = k+1 iff k up-steps then a down-step: E[b^tau] = sum (1/2)^{k+1} b^{k+1}
        let direct = 0.25 / (1.0 - 0.25);
        assert!((kennedy_pgf(&kp).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn pole_is_reported() {
        // for n = 1 the denominator vanishes at a = (1/b - r) / p = 4
        let kp = kennedy_build(int(4), ratio(1, 2), 1, &WalkParams::simple()).unwrap();
        assert!(matches!(kennedy_pgf(&kp), Err(MartingaleError::Pole(_))));
    }

    #[test]
    fn truncated_dp_matches_closed_form() {
        let ps = WalkParams::simple();
        for (a, b, n) in [(ratio(1, 1), ratio(1, 2), 1), (ratio(3, 2), ratio(-1, 2), 3), (ratio(1, 2), ratio(1, 3), 2)] {
            let kp = kennedy_build(a, b, n, &ps).unwrap();
            let dp = truncated_pgf(&kp, 200);
            let closed = kennedy_pgf(&kp).unwrap();
            assert!(dp.tail_bound <= 1e-10);
            assert!((dp.value - closed).abs() <= dp.tail_bound + 1e-12 * closed.abs());
        }
    }

    #[test]
    fn grid_residuals_small() {
        let ps = WalkParams::simple();
        let kp = kennedy_build_with_range(int(1), ratio(9, 10), 2, &ps, 6).unwrap();
        let report = check_sufficient_condition(&kp.to_grid(5, 5, 5), &ps).unwrap();
        assert!(report.within(1e-12), "{report:?}");
    }

    #[test]
    fn wrong_recurrence_is_not_certified() {
        // swapping the roles of p and q breaks the interior equation
        let ps = WalkParams::new(ratio(1, 2), ratio(1, 4), ratio(1, 4)).unwrap();
        let swapped = WalkParams::new(ratio(1, 4), ratio(1, 2), ratio(1, 4)).unwrap();
        let kp = kennedy_build_with_range(int(1), ratio(4, 5), 2, &swapped, 6).unwrap();
        let report = check_sufficient_condition(&kp.to_grid(5, 5, 5), &ps).unwrap();
        assert!(!report.within(1e-6));
    }
}
