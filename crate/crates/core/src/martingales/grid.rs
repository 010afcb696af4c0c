use crate::rational::{half, Scalar};
use crate::walk::WalkParams;

use super::MartingaleError;

/// A function `f(t, x, y)` tabulated on `0..=t_max x 0..=x_max x 0..=y_max`.
///
/// `x` plays the role of the gap `M - Z` and `y` of the maximum `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSpaceFunction<V> {
    t_max: usize,
    x_max: usize,
    y_max: usize,
    values: Vec<V>,
}

impl<V: Scalar> TimeSpaceFunction<V> {
    pub fn from_fn<F>(t_max: usize, x_max: usize, y_max: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> V,
    {
        let mut values = Vec::with_capacity((t_max + 1) * (x_max + 1) * (y_max + 1));
        for t in 0..=t_max {
            for x in 0..=x_max {
                for y in 0..=y_max {
                    values.push(f(t, x, y));
                }
            }
        }
        Self {
            t_max,
            x_max,
            y_max,
            values,
        }
    }

    /// Row-major values (`t` slowest, `y` fastest).
    pub fn from_values(
        t_max: usize,
        x_max: usize,
        y_max: usize,
        values: Vec<V>,
    ) -> Result<Self, MartingaleError> {
        let expected = (t_max + 1) * (x_max + 1) * (y_max + 1);
        if values.len() != expected {
            return Err(MartingaleError::Grid(format!(
                "expected {expected} values for a {}x{}x{} grid, got {}",
                t_max + 1,
                x_max + 1,
                y_max + 1,
                values.len()
            )));
        }
        Ok(Self {
            t_max,
            x_max,
            y_max,
            values,
        })
    }

    pub fn bounds(&self) -> (usize, usize, usize) {
        (self.t_max, self.x_max, self.y_max)
    }

    pub fn get(&self, t: i64, x: i64, y: i64) -> Option<&V> {
        if t < 0 || x < 0 || y < 0 {
            return None;
        }
        let (t, x, y) = (t as usize, x as usize, y as usize);
        if t > self.t_max || x > self.x_max || y > self.y_max {
            return None;
        }
        Some(&self.values[(t * (self.x_max + 1) + x) * (self.y_max + 1) + y])
    }

    fn at(&self, t: i64, x: i64, y: i64) -> Result<V, MartingaleError> {
        self.get(t, x, y)
            .cloned()
            .ok_or(MartingaleError::OutOfGrid { t, x, y })
    }
}

/// The four first differences of `f` at a grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Differences<V> {
    pub t_minus: V,
    pub x_plus: V,
    pub x_minus: V,
    pub y_plus: V,
}

/// Backward difference in `t`, forward and backward in `x`, forward in `y`.
pub fn diff_ops<V: Scalar>(
    f: &TimeSpaceFunction<V>,
    t: i64,
    x: i64,
    y: i64,
) -> Result<Differences<V>, MartingaleError> {
    let centre = f.at(t, x, y)?;
    Ok(Differences {
        t_minus: centre.clone() - f.at(t - 1, x, y)?,
        x_plus: f.at(t, x + 1, y)? - centre.clone(),
        x_minus: centre.clone() - f.at(t, x - 1, y)?,
        y_plus: f.at(t, x, y + 1)? - centre,
    })
}

/// Worst residual of one equation family and where it occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSummary<V> {
    pub points: usize,
    pub max_abs: V,
    pub argmax: (i64, i64, i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyReport<V> {
    /// `t >= 2, x >= 1`.
    pub interior: ResidualSummary<V>,
    /// `t >= 1, x = 0`.
    pub boundary: ResidualSummary<V>,
}

impl<V: Scalar> SufficiencyReport<V> {
    /// Both residuals vanish exactly.
    pub fn certified(&self) -> bool {
        self.interior.max_abs.is_zero() && self.boundary.max_abs.is_zero()
    }

    pub fn within(&self, tol: f64) -> bool {
        self.interior.max_abs.to_f64() <= tol && self.boundary.max_abs.to_f64() <= tol
    }
}

/// Evaluates, at every grid point where the shifted values exist,
///
/// * interior (`t >= 2, x >= 1`):
///   `(p+q)/2 Dx+ Dx- f - (p-q)/2 (Dx+ + Dx-) f + Dt- f`
/// * boundary (`t >= 1, x = 0`):
///   `p Dy+ f + q Dx+ f + Dt- f`
///
/// and returns the largest absolute residual of each. Vanishing residuals
/// make `f(t, M_t - Z_t, M_t)` a martingale.
pub fn check_sufficient_condition<V: Scalar>(
    f: &TimeSpaceFunction<V>,
    params: &WalkParams,
) -> Result<SufficiencyReport<V>, MartingaleError> {
    let p = V::from_ratio(params.p());
    let q = V::from_ratio(params.q());
    let h = half::<V>();
    let (t_max, x_max, y_max) = f.bounds();
    let (t_max, x_max, y_max) = (t_max as i64, x_max as i64, y_max as i64);

    let mut interior = ResidualSummary {
        points: 0,
        max_abs: V::zero(),
        argmax: (0, 0, 0),
    };
    for t in 2..=t_max {
        for x in 1..x_max {
            for y in 0..=y_max {
                let c = f.at(t, x, y)?;
                let x_plus = f.at(t, x + 1, y)? - c.clone();
                let x_minus = c.clone() - f.at(t, x - 1, y)?;
                let t_minus = c - f.at(t - 1, x, y)?;
                let second = x_plus.clone() - x_minus.clone();
                let residual = (p.clone() + q.clone()) * h.clone() * second
                    - (p.clone() - q.clone()) * h.clone() * (x_plus + x_minus)
                    + t_minus;
                record(&mut interior, residual.abs(), (t, x, y));
            }
        }
    }

    let mut boundary = ResidualSummary {
        points: 0,
        max_abs: V::zero(),
        argmax: (0, 0, 0),
    };
    if x_max >= 1 {
        for t in 1..=t_max {
            for y in 0..y_max {
                let c = f.at(t, 0, y)?;
                let y_plus = f.at(t, 0, y + 1)? - c.clone();
                let x_plus = f.at(t, 1, y)? - c.clone();
                let t_minus = c - f.at(t - 1, 0, y)?;
                let residual = p.clone() * y_plus + q.clone() * x_plus + t_minus;
                record(&mut boundary, residual.abs(), (t, 0, y));
            }
        }
    }

    let mut missing = Vec::new();
    if interior.points == 0 {
        missing.push("interior (needs t_max >= 2, x_max >= 2)");
    }
    if boundary.points == 0 {
        missing.push("boundary (needs t_max >= 1, x_max >= 1, y_max >= 1)");
    }
    if !missing.is_empty() {
        return Err(MartingaleError::Coverage(missing.join("; ")));
    }
    Ok(SufficiencyReport { interior, boundary })
}

fn record<V: Scalar>(summary: &mut ResidualSummary<V>, residual: V, at: (i64, i64, i64)) {
    if summary.points == 0 || residual > summary.max_abs {
        summary.max_abs = residual;
        summary.argmax = at;
    }
    summary.points += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use num_rational::BigRational;
    use num_traits::{Signed, Zero};

    fn grid<F: Fn(i64, i64, i64) -> BigRational>(n: usize, f: F) -> TimeSpaceFunction<BigRational> {
        TimeSpaceFunction::from_fn(n, n, n, |t, x, y| f(t as i64, x as i64, y as i64))
    }

    #[test]
    fn differences_of_constant_vanish() {
        let f = grid(4, |_, _, _| int(7));
        let d = diff_ops(&f, 2, 2, 2).unwrap();
        assert!(d.t_minus.is_zero() && d.x_plus.is_zero() && d.x_minus.is_zero() && d.y_plus.is_zero());
    }

    #[test]
    fn differences_of_gap_coordinate() {
        let f = grid(4, |_, x, _| int(x));
        let d = diff_ops(&f, 1, 1, 1).unwrap();
        assert_eq!(d, Differences { t_minus: int(0), x_plus: int(1), x_minus: int(1), y_plus: int(0) });
    }

    #[test]
    fn differences_of_product() {
        let f = grid(5, |t, x, y| int(t * x * y));
        let d = diff_ops(&f, 2, 3, 4).unwrap();
        assert_eq!(d, Differences { t_minus: int(12), x_plus: int(8), x_minus: int(8), y_plus: int(6) });
    }

    #[test]
    fn out_of_grid_differences_fail() {
        let f = grid(3, |_, _, _| int(0));
        assert!(matches!(diff_ops(&f, 0, 1, 1), Err(MartingaleError::OutOfGrid { t: -1, .. })));
        assert!(diff_ops(&f, 1, 0, 1).is_err());
        assert!(diff_ops(&f, 1, 3, 1).is_err());
        assert!(diff_ops(&f, 1, 1, 3).is_err());
    }

    #[test]
    fn from_values_checks_shape() {
        assert!(TimeSpaceFunction::from_values(1, 1, 1, vec![0.0; 8]).is_ok());
        assert!(TimeSpaceFunction::from_values(1, 1, 1, vec![0.0; 7]).is_err());
    }

    #[test]
    fn constant_is_certified() {
        let f = grid(4, |_, _, _| ratio(3, 7));
        let ps = WalkParams::new(ratio(1, 2), ratio(1, 3), ratio(1, 6)).unwrap();
        assert!(check_sufficient_condition(&f, &ps).unwrap().certified());
    }

    #[test]
    fn walk_itself_residual_is_drift() {
        // f(t, x, y) = y - x evaluates to Z_t
        let f = grid(4, |_, x, y| int(y - x));
        for (p, q) in [((1, 2), (1, 3)), ((1, 4), (1, 2)), ((1, 3), (1, 3))] {
            let ps = WalkParams::from_pq(ratio(p.0, p.1), ratio(q.0, q.1)).unwrap();
            let drift = (ps.p() - ps.q()).abs();
            let report = check_sufficient_condition(&f, &ps).unwrap();
            assert_eq!(report.interior.max_abs, drift);
            assert_eq!(report.boundary.max_abs, drift);
            assert_eq!(report.certified(), ps.is_symmetric());
        }
    }

    #[test]
    fn tiny_grid_reports_coverage() {
        let f = grid(1, |_, _, _| int(0));
        let err = check_sufficient_condition(&f, &WalkParams::simple()).unwrap_err();
        assert!(matches!(err, MartingaleError::Coverage(ref s) if s.contains("interior")));
    }
}
